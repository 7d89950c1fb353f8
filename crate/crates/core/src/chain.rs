//! The lifted chain over pure strategy states.
//!
//! From a pure strategy state, exactly one player (uniform over players)
//! trembles and redraws its action uniformly; everybody updates once at the
//! realized profile; then the unperturbed dynamics run until they enter the
//! `delta`-neighborhood of some pure strategy state or hit `t_max`. The
//! landing frequencies estimate one row of the chain. Runs that never land
//! are censored: counted, reported, and left out of the row normalization.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::dynamics::{absorbed_state, check_delta, check_epsilon, JointState};
use crate::game::{Game, PureStrategyState};
use crate::stream::{pair_index, stream, Domain};
use crate::{Error, Result};

/// Row-stochasticity tolerance for estimated chains.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Row-sum tolerance accepted for externally supplied matrices.
pub const INPUT_ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Power iteration stops once successive iterates are this close in l1.
pub const POWER_TOLERANCE: f64 = 1e-13;
pub const POWER_MAX_ITERATIONS: usize = 1_000_000;
/// Largest chain for which the direct solve is attempted.
pub const DIRECT_SOLVE_LIMIT: usize = 64;

/// Monte Carlo parameters of the lifted-chain estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSettings {
    pub epsilon: f64,
    pub delta: f64,
    pub runs_per_state: u64,
    pub t_max: u64,
    pub seed: u64,
    /// Largest tolerated fraction of censored runs in any row.
    pub censoring_budget: f64,
}

impl ChainSettings {
    /// Defaults: `delta = 1e-3`, `t_max = 10^6`, 0.1% censoring budget.
    pub fn new(epsilon: f64, runs_per_state: u64, seed: u64) -> Self {
        Self {
            epsilon,
            delta: 1e-3,
            runs_per_state,
            t_max: 1_000_000,
            seed,
            censoring_budget: 1e-3,
        }
    }

    pub fn validate(&self, game: &Game) -> Result<()> {
        check_epsilon(game, self.epsilon)?;
        check_delta(self.delta)?;
        if self.runs_per_state == 0 {
            return Err(Error::InvalidBudget {
                field: "runs_per_state",
                reason: "must be at least 1".into(),
            });
        }
        if self.runs_per_state >= 1 << 40 {
            return Err(Error::InvalidBudget {
                field: "runs_per_state",
                reason: "must be below 2^40".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.censoring_budget) {
            return Err(Error::InvalidBudget {
                field: "censoring_budget",
                reason: alloc::format!("{} is not a fraction", self.censoring_budget),
            });
        }
        Ok(())
    }
}

/// One single-player tremble from `s` followed by the strategy update at
/// the realized profile.
pub fn tremble_once<R: Rng + ?Sized>(
    s: &PureStrategyState,
    game: &Game,
    epsilon: f64,
    rng: &mut R,
) -> Result<JointState> {
    check_epsilon(game, epsilon)?;
    game.check_profile(s.profile.as_slice())?;
    let mut z = JointState::at_pure(game, s);
    tremble_in_place(&mut z, game, epsilon, rng);
    Ok(z)
}

fn tremble_in_place<R: Rng + ?Sized>(z: &mut JointState, game: &Game, epsilon: f64, rng: &mut R) {
    let player = rng.random_range(0..game.players());
    let action = rng.random_range(0..game.actions()[player]);
    z.set_action(player, action);
    z.play(game, epsilon);
}

/// Absorption tallies of one source state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowTally {
    pub counts: Vec<u64>,
    pub censored: u64,
}

impl RowTally {
    pub fn zeros(size: usize) -> Self {
        Self {
            counts: vec![0; size],
            censored: 0,
        }
    }

    pub fn merge(&mut self, other: &RowTally) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.censored += other.censored;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.censored
    }
}

/// Runs `runs` (a sub-range of `0..runs_per_state`) from source state
/// `state`. Run `r` draws from its own stream, so any split of the range
/// merges to the same tally.
pub fn sample_row(
    game: &Game,
    settings: &ChainSettings,
    state: usize,
    runs: Range<u64>,
) -> Result<RowTally> {
    settings.validate(game)?;
    if state >= game.num_profiles() {
        return Err(Error::InvalidProfile(alloc::format!(
            "state index {state} out of range 0..{}",
            game.num_profiles()
        )));
    }
    let source = game.pure_state(state);
    let start = JointState::at_pure(game, &source);
    let mut tally = RowTally::zeros(game.num_profiles());
    let mut z = start.clone();
    for run in runs {
        let mut rng = stream(settings.seed, Domain::LiftedChain, pair_index(state, run));
        z.clone_from(&start);
        tremble_in_place(&mut z, game, settings.epsilon, &mut rng);
        let mut t = 0u64;
        let landed = loop {
            if let Some(s) = absorbed_state(&z, game, settings.delta) {
                break Some(s.index);
            }
            if t == settings.t_max {
                break None;
            }
            z.advance(game, settings.epsilon, 0.0, &mut rng);
            t += 1;
        };
        match landed {
            Some(k) => tally.counts[k] += 1,
            None => tally.censored += 1,
        }
    }
    Ok(tally)
}

/// Sequential estimate of the lifted chain.
pub fn estimate_lifted_chain(game: &Game, settings: &ChainSettings) -> Result<LiftedChain> {
    let rows = (0..game.num_profiles())
        .map(|k| sample_row(game, settings, k, 0..settings.runs_per_state))
        .collect::<Result<Vec<_>>>()?;
    LiftedChain::from_tallies(game, settings, rows)
}

/// Estimated lifted chain: tallies, normalized probabilities and censoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedChain {
    states: Vec<PureStrategyState>,
    counts: Vec<u64>,
    probs: Vec<f64>,
    censored: Vec<u64>,
}

impl LiftedChain {
    /// Normalizes per-row tallies. Fails with
    /// [`Error::ExcessiveCensoring`] when a row exceeds the budget.
    pub fn from_tallies(game: &Game, settings: &ChainSettings, rows: Vec<RowTally>) -> Result<Self> {
        let n = game.num_profiles();
        if rows.len() != n {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: n,
            });
        }
        let mut counts = Vec::with_capacity(n * n);
        let mut probs = Vec::with_capacity(n * n);
        let mut censored = Vec::with_capacity(n);
        for (state, row) in rows.iter().enumerate() {
            let runs = row.total();
            let landed = runs - row.censored;
            if landed == 0 || row.censored as f64 > settings.censoring_budget * runs as f64 {
                return Err(Error::ExcessiveCensoring {
                    state,
                    censored: row.censored,
                    runs,
                    budget: settings.censoring_budget,
                });
            }
            counts.extend_from_slice(&row.counts);
            probs.extend(row.counts.iter().map(|&c| c as f64 / landed as f64));
            censored.push(row.censored);
        }
        Ok(Self {
            states: game.enumerate_pss(),
            counts,
            probs,
            censored,
        })
    }

    /// Rebuilds a chain from its serialized parts, checking shapes and
    /// row-stochasticity.
    pub fn from_parts(
        states: Vec<PureStrategyState>,
        counts: Vec<u64>,
        probs: Vec<f64>,
        censored: Vec<u64>,
    ) -> Result<Self> {
        let n = states.len();
        for (field, len, want) in [
            ("counts", counts.len(), n * n),
            ("probs", probs.len(), n * n),
            ("censored", censored.len(), n),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch {
                    field: field.into(),
                    expected: want,
                    found: len,
                });
            }
        }
        TransitionMatrix::new(n, probs.clone())?;
        Ok(Self {
            states,
            counts,
            probs,
            censored,
        })
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[PureStrategyState] {
        &self.states
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.size() + to]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.size() + to]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn censored(&self) -> &[u64] {
        &self.censored
    }

    /// Landed runs from `from`, i.e. the normalization of its row.
    pub fn row_total(&self, from: usize) -> u64 {
        let n = self.size();
        self.counts[from * n..(from + 1) * n].iter().sum()
    }

    /// Censored fraction of every row.
    pub fn censoring_rates(&self) -> Vec<f64> {
        (0..self.size())
            .map(|k| {
                let runs = self.row_total(k) + self.censored[k];
                if runs == 0 {
                    0.0
                } else {
                    self.censored[k] as f64 / runs as f64
                }
            })
            .collect()
    }

    /// Entrywise multinomial standard errors `sqrt(p (1 - p) / N_row)`.
    pub fn standard_errors(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = Vec::with_capacity(n * n);
        for from in 0..n {
            let total = self.row_total(from) as f64;
            for to in 0..n {
                let p = self.prob(from, to);
                out.push(if total > 0.0 {
                    libm::sqrt(p * (1.0 - p) / total)
                } else {
                    0.0
                });
            }
        }
        out
    }

    pub fn matrix(&self) -> TransitionMatrix {
        TransitionMatrix {
            size: self.size(),
            probs: self.probs.clone(),
        }
    }
}

/// Square row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(size: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != size * size {
            return Err(Error::DimensionMismatch {
                field: "probs".into(),
                expected: size * size,
                found: probs.len(),
            });
        }
        for row in 0..size {
            let entries = &probs[row * size..(row + 1) * size];
            let sum: f64 = entries.iter().sum();
            if entries.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > INPUT_ROW_SUM_TOLERANCE {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(Self { size, probs })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.size + to]
    }

    /// `v P`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(&self.probs[i * n..(i + 1) * n]) {
                *o += vi * p;
            }
        }
        out
    }

    /// `||v P - v||_1`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        self.left_mul(v).iter().zip(v).map(|(a, b)| (a - b).abs()).sum()
    }

    fn restrict(&self, keep: &[usize]) -> TransitionMatrix {
        let mut probs = Vec::with_capacity(keep.len() * keep.len());
        for &i in keep {
            for &j in keep {
                probs.push(self.get(i, j));
            }
        }
        TransitionMatrix {
            size: keep.len(),
            probs,
        }
    }

    /// Strongly connected components of the graph of positive entries.
    pub fn communication(&self) -> Communication {
        let classes = strongly_connected(self);
        if classes.len() == 1 {
            Communication::Irreducible
        } else {
            Communication::Reducible(classes)
        }
    }
}

/// A communicating class; `closed` classes have no positive transition out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunicatingClass {
    pub states: Vec<usize>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Communication {
    Irreducible,
    /// Classes ordered by their smallest state index.
    Reducible(Vec<CommunicatingClass>),
}

impl Communication {
    pub fn is_irreducible(&self) -> bool {
        matches!(self, Communication::Irreducible)
    }
}

/// Irreducibility diagnostic on the positive entries of the estimate.
pub fn check_irreducible(chain: &LiftedChain) -> Communication {
    chain.matrix().communication()
}

// Iterative Tarjan.
fn strongly_connected(m: &TransitionMatrix) -> Vec<CommunicatingClass> {
    const UNSEEN: usize = usize::MAX;
    let n = m.size;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![UNSEEN; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next successor to examine)
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut succ)) = call.last_mut() {
            if *succ < n {
                let w = *succ;
                *succ += 1;
                if m.get(v, w) <= 0.0 {
                    continue;
                }
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut members = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = components.len();
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    members.sort_unstable();
                    components.push(members);
                }
            }
        }
    }
    let mut classes: Vec<CommunicatingClass> = components
        .iter()
        .enumerate()
        .map(|(c, members)| CommunicatingClass {
            closed: members
                .iter()
                .all(|&i| (0..n).all(|j| m.get(i, j) <= 0.0 || comp[j] == c)),
            states: members.clone(),
        })
        .collect();
    classes.sort_by_key(|c| c.states[0]);
    classes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    PowerIteration,
    DirectSolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// False when the chain has several closed classes; `pi` then lives on
    /// the closed class reached first from state 0.
    pub unique: bool,
    pub method: SolveMethod,
    pub iterations: usize,
    /// `||pi P - pi||_1`.
    pub residual: f64,
}

/// Lazy power iteration `v <- (v + v P) / 2` from the uniform vector. The
/// lazy step has the same fixed points and also converges on periodic
/// chains.
pub fn power_iteration(m: &TransitionMatrix, tolerance: f64, max_iterations: usize) -> Result<(Vec<f64>, usize)> {
    let n = m.size;
    let mut v = vec![1.0 / n as f64; n];
    for it in 1..=max_iterations {
        let vp = m.left_mul(&v);
        let mut next: Vec<f64> = v.iter().zip(&vp).map(|(a, b)| 0.5 * (a + b)).collect();
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= sum);
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if change <= tolerance {
            return Ok((v, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
    })
}

/// Solves `pi (P - I) = 0`, `sum pi = 1` by Gaussian elimination with
/// partial pivoting.
pub fn direct_solve(m: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = m.size;
    // a = (P - I)^T with the last equation replaced by normalization.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[j * n + i] = m.get(i, j) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-13 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|j| a[r * n + j] * x[j]).sum();
        x[r] = (b[r] - tail) / a[r * n + r];
    }
    // clip roundoff negatives
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    Ok(x)
}

/// Stationary distribution of `m`: power iteration, falling back to the
/// direct solve for chains of at most [`DIRECT_SOLVE_LIMIT`] states.
pub fn stationary_of(m: &TransitionMatrix) -> Result<StationaryDistribution> {
    let n = m.size;
    let closed: Vec<CommunicatingClass> = match m.communication() {
        Communication::Irreducible => Vec::new(),
        Communication::Reducible(classes) => classes.into_iter().filter(|c| c.closed).collect(),
    };
    let (target, unique) = if closed.len() <= 1 {
        (None, true)
    } else {
        let reach = reachable_from(m, 0);
        let class = closed
            .into_iter()
            .find(|c| reach[c.states[0]])
            .expect("every finite chain reaches a closed class");
        (Some(class.states), false)
    };
    let sub = match &target {
        Some(keep) => m.restrict(keep),
        None => m.clone(),
    };
    let (local, method, iterations) = match power_iteration(&sub, POWER_TOLERANCE, POWER_MAX_ITERATIONS) {
        Ok((v, it)) => (v, SolveMethod::PowerIteration, it),
        Err(e @ Error::NoConvergence { .. }) => {
            if sub.size > DIRECT_SOLVE_LIMIT {
                return Err(e);
            }
            (direct_solve(&sub)?, SolveMethod::DirectSolve, 0)
        }
        Err(e) => return Err(e),
    };
    let pi = match &target {
        Some(keep) => {
            let mut full = vec![0.0; n];
            for (&k, v) in keep.iter().zip(local) {
                full[k] = v;
            }
            full
        }
        None => local,
    };
    let residual = m.residual(&pi);
    Ok(StationaryDistribution {
        pi,
        unique,
        method,
        iterations,
        residual,
    })
}

fn reachable_from(m: &TransitionMatrix, start: usize) -> Vec<bool> {
    let mut seen = vec![false; m.size];
    let mut todo = vec![start];
    seen[start] = true;
    while let Some(v) = todo.pop() {
        for w in 0..m.size {
            if !seen[w] && m.get(v, w) > 0.0 {
                seen[w] = true;
                todo.push(w);
            }
        }
    }
    seen
}

/// Invariant distribution of the estimated lifted chain.
pub fn stationary_distribution(chain: &LiftedChain) -> Result<StationaryDistribution> {
    stationary_of(&chain.matrix())
}

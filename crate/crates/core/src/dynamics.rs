//! The perturbed reinforcement recursion.
//!
//! Each step, every player independently flips a `lambda`-coin. On heads it
//! draws an action uniformly (a tremble), otherwise it samples from its own
//! strategy. All players then observe their payoff at the new joint profile
//! and move their strategy towards the vertex of the action they played:
//!
//! ```text
//! x_i <- x_i + epsilon * u_i(alpha) * (e_{alpha_i} - x_i)
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::game::{ActionProfile, Game, PureStrategyState};
use crate::stream::{stream, Domain, Stream};
use crate::{Error, Result};

/// Tolerance on the entry sum accepted by [`Strategy::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Trajectories renormalize a strategy once its sum drifts past this.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// A mixed strategy: a probability vector over one player's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy(Vec<f64>);

impl Strategy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidStrategy("empty weight vector".into()));
        }
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidStrategy(alloc::format!(
                "weight {j} = {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidStrategy(alloc::format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// The simplex vertex `e_action`.
    pub fn vertex(m: usize, action: usize) -> Self {
        let mut w = vec![0.0; m];
        w[action] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `||x - e_action||_inf`.
    pub fn distance_to_vertex(&self, action: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(j, &w)| if j == action { (1.0 - w).abs() } else { w })
            .fold(0.0, f64::max)
    }

    /// In-place update towards `e_chosen` with gain `step = epsilon * u`.
    #[inline]
    pub(crate) fn reinforce(&mut self, chosen: usize, step: f64) {
        let keep = 1.0 - step;
        for (j, w) in self.0.iter_mut().enumerate() {
            if j == chosen {
                *w += step * (1.0 - *w);
            } else {
                *w *= keep;
            }
        }
    }

    /// Divides by the entry sum when it has drifted past
    /// [`RENORMALIZE_THRESHOLD`]. Returns whether it did.
    #[inline]
    pub(crate) fn renormalize_if_drifted(&mut self) -> bool {
        let sum = self.sum();
        if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
            for w in &mut self.0 {
                *w /= sum;
            }
            true
        } else {
            false
        }
    }
}

fn checked_gain(epsilon: f64, u: f64) -> Result<f64> {
    let product = epsilon * u;
    if !(product > 0.0 && product < 1.0) {
        return Err(Error::StepTooLarge { product });
    }
    Ok(product)
}

#[inline]
fn sample_from<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = j;
            if u < acc {
                return j;
            }
        }
    }
    // cumulative sum fell short of u by roundoff
    last_positive
}

/// Draws an action and reports whether the uniform branch was used.
#[inline]
pub(crate) fn sample_traced<R: Rng + ?Sized>(x: &Strategy, lambda: f64, rng: &mut R) -> (usize, bool) {
    let coin: f64 = rng.random();
    if coin < lambda {
        (rng.random_range(0..x.len()), true)
    } else {
        (sample_from(x.weights(), rng), false)
    }
}

/// Samples an action: uniformly over all actions with probability `lambda`,
/// from `x` otherwise.
pub fn sample_action<R: Rng + ?Sized>(x: &Strategy, lambda: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&lambda));
    sample_traced(x, lambda, rng).0
}

/// One application of the strategy update after playing `chosen` and
/// receiving payoff `u`. Fails with [`Error::StepTooLarge`] unless
/// `0 < epsilon * u < 1`.
pub fn update_strategy(x: &Strategy, chosen: usize, u: f64, epsilon: f64) -> Result<Strategy> {
    let gain = checked_gain(epsilon, u)?;
    if chosen >= x.len() {
        return Err(Error::InvalidProfile(alloc::format!(
            "action {chosen} out of range 0..{}",
            x.len()
        )));
    }
    let mut out = x.clone();
    out.reinforce(chosen, gain);
    Ok(out)
}

/// Strategy after `t` consecutive plays of `action` at payoff `u`:
/// `e_a - (1 - epsilon u)^t (e_a - x0)`.
pub fn closed_form_strategy(
    x0: &Strategy,
    action: usize,
    u: f64,
    epsilon: f64,
    t: u64,
) -> Result<Strategy> {
    let gain = checked_gain(epsilon, u)?;
    let decay = libm::pow(1.0 - gain, t as f64);
    let weights = x0
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let e = if j == action { 1.0 } else { 0.0 };
            e - decay * (e - w)
        })
        .collect();
    Ok(Strategy(weights))
}

/// Probability `phi` that at least one of `n` players trembles and the
/// conditional probability `psi` that at least two tremble given that at
/// least one does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrembleProbabilities {
    pub phi: f64,
    pub psi: f64,
}

/// `phi(lambda) = 1 - (1 - lambda)^n`. Defined for `lambda` in `[0, 1]`.
pub fn phi(lambda: f64, n: usize) -> f64 {
    -libm::expm1(n as f64 * libm::log1p(-lambda))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Evaluates `phi` and `psi` for `lambda` in `(0, 1]`.
///
/// `psi = P(at least two tremble) / phi`, where the numerator is summed
/// term by term so it stays accurate as `lambda -> 0`. Fails when `psi`
/// leaves `[0, 1)` (which happens at `lambda = 1`).
pub fn tremble_probabilities(lambda: f64, n: usize) -> Result<TrembleProbabilities> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidLambda {
            value: lambda,
            range: "(0, 1]",
        });
    }
    if n == 0 {
        return Err(Error::InvalidGame {
            field: "players".into(),
            reason: "need at least one player".into(),
        });
    }
    let phi = phi(lambda, n);
    let at_least_two: f64 = (2..=n)
        .map(|k| {
            binomial(n, k) * libm::pow(lambda, k as f64) * libm::pow(1.0 - lambda, (n - k) as f64)
        })
        .sum();
    let psi = at_least_two / phi;
    if !(0.0..1.0).contains(&psi) {
        return Err(Error::PsiOutOfDomain {
            lambda,
            players: n,
            psi,
        });
    }
    Ok(TrembleProbabilities { phi, psi })
}

/// Realized joint action together with every player's strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    profile: ActionProfile,
    strategies: Vec<Strategy>,
}

impl JointState {
    pub fn new(game: &Game, profile: ActionProfile, strategies: Vec<Strategy>) -> Result<Self> {
        let z = Self {
            profile,
            strategies,
        };
        z.check(game)?;
        Ok(z)
    }

    /// Uniform strategies with the all-zeros profile as the last action.
    pub fn uniform(game: &Game) -> Self {
        Self {
            profile: ActionProfile::new(vec![0; game.players()]),
            strategies: game.actions().iter().map(|&m| Strategy::uniform(m)).collect(),
        }
    }

    /// The pure strategy state `s` as a joint state.
    pub fn at_pure(game: &Game, s: &PureStrategyState) -> Self {
        Self {
            profile: s.profile.clone(),
            strategies: s
                .profile
                .as_slice()
                .iter()
                .zip(game.actions())
                .map(|(&a, &m)| Strategy::vertex(m, a))
                .collect(),
        }
    }

    pub fn profile(&self) -> &ActionProfile {
        &self.profile
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn check(&self, game: &Game) -> Result<()> {
        game.check_profile(self.profile.as_slice())?;
        if self.strategies.len() != game.players() {
            return Err(Error::DimensionMismatch {
                field: "strategies".into(),
                expected: game.players(),
                found: self.strategies.len(),
            });
        }
        for (i, (x, &m)) in self.strategies.iter().zip(game.actions()).enumerate() {
            if x.len() != m {
                return Err(Error::DimensionMismatch {
                    field: alloc::format!("strategies[{i}]"),
                    expected: m,
                    found: x.len(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn set_action(&mut self, player: usize, action: usize) {
        self.profile.as_mut_slice()[player] = action;
    }

    /// True when every strategy is within `delta` (sup norm) of the vertex of
    /// the player's realized action.
    #[inline]
    pub(crate) fn near_own_vertex(&self, delta: f64) -> bool {
        self.strategies
            .iter()
            .zip(self.profile.as_slice())
            .all(|(x, &a)| x.distance_to_vertex(a) < delta)
    }

    /// Plays the given actions, then updates every strategy. The caller
    /// guarantees `epsilon * u < 1` for every payoff.
    #[inline]
    pub(crate) fn play(&mut self, game: &Game, epsilon: f64) -> usize {
        let index = game.profile_index(self.profile.as_slice());
        let mut renormalized = 0;
        for (i, x) in self.strategies.iter_mut().enumerate() {
            x.reinforce(self.profile.as_slice()[i], epsilon * game.payoff_at(i, index));
            renormalized += x.renormalize_if_drifted() as usize;
        }
        renormalized
    }

    /// One full step of the perturbed dynamics, in place.
    #[inline]
    pub(crate) fn advance<R: Rng + ?Sized>(
        &mut self,
        game: &Game,
        epsilon: f64,
        lambda: f64,
        rng: &mut R,
    ) -> StepOutcome {
        let mut trembles = 0;
        for (slot, x) in self.profile.as_mut_slice().iter_mut().zip(&self.strategies) {
            let (action, trembled) = sample_traced(x, lambda, rng);
            *slot = action;
            trembles += trembled as usize;
        }
        let renormalized = self.play(game, epsilon);
        StepOutcome {
            trembles,
            renormalized,
        }
    }
}

/// Per-step bookkeeping returned by the in-place step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    /// Players that used the uniform branch this step.
    pub trembles: usize,
    /// Strategies renormalized this step.
    pub renormalized: usize,
}

/// Step size, perturbation, seed and horizon of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    epsilon: f64,
    lambda: f64,
    seed: u64,
    max_steps: u64,
}

impl DynamicsConfig {
    /// Validates `epsilon * max u < 1` against `game` and `lambda` in `[0, 1]`.
    pub fn new(game: &Game, epsilon: f64, lambda: f64, seed: u64, max_steps: u64) -> Result<Self> {
        check_epsilon(game, epsilon)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidLambda {
                value: lambda,
                range: "[0, 1]",
            });
        }
        Ok(Self {
            epsilon,
            lambda,
            seed,
            max_steps,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    /// Stream for trajectory `index` under this seed.
    pub fn rng(&self, index: u64) -> Stream {
        stream(self.seed, Domain::Trajectory, index)
    }
}

/// Checks the step-size condition `0 < epsilon * u_i(alpha) < 1` for all
/// players and profiles.
pub fn check_epsilon(game: &Game, epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    checked_gain(epsilon, game.max_payoff()).map(|_| ())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok(())
}

/// One step of the dynamics from `z`.
pub fn step<R: Rng + ?Sized>(
    z: &JointState,
    game: &Game,
    cfg: &DynamicsConfig,
    rng: &mut R,
) -> Result<JointState> {
    z.check(game)?;
    check_epsilon(game, cfg.epsilon)?;
    let mut next = z.clone();
    next.advance(game, cfg.epsilon, cfg.lambda, rng);
    Ok(next)
}

/// The pure strategy state whose neighborhood of radius `delta` contains `z`,
/// if any. The realized profile must be that state's profile.
pub fn detect_absorption(z: &JointState, game: &Game, delta: f64) -> Result<Option<PureStrategyState>> {
    check_delta(delta)?;
    z.check(game)?;
    Ok(absorbed_state(z, game, delta))
}

#[inline]
pub(crate) fn absorbed_state(z: &JointState, game: &Game, delta: f64) -> Option<PureStrategyState> {
    z.near_own_vertex(delta).then(|| PureStrategyState {
        profile: z.profile.clone(),
        index: game.profile_index(z.profile.as_slice()),
    })
}

/// A recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: u64,
    pub state: JointState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Absorption {
    pub state: PureStrategyState,
    /// Steps taken before the hit; 0 when the run starts absorbed.
    pub time: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// States at every multiple of `stride`, including `t = 0`. Empty when
    /// `stride == 0`.
    pub samples: Vec<TrajectorySample>,
    pub stride: u64,
    /// First neighborhood hit of the unperturbed process.
    pub absorption: Option<Absorption>,
    pub steps: u64,
    /// Individual trembles summed over players.
    pub trembles: u64,
    /// Steps in which at least one player trembled.
    pub tremble_steps: u64,
    /// Steps in which at least two players trembled.
    pub multi_tremble_steps: u64,
    pub renormalizations: u64,
    pub final_state: JointState,
}

/// Iterates [`step`] up to `cfg.max_steps()` times from `z0`.
///
/// With `lambda = 0` the first entry into a pure strategy state
/// neighborhood is recorded, and the run halts there when
/// `stop_on_absorption` is set.
pub fn run_trajectory<R: Rng + ?Sized>(
    z0: &JointState,
    game: &Game,
    cfg: &DynamicsConfig,
    delta: f64,
    stop_on_absorption: bool,
    stride: u64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    check_delta(delta)?;
    check_epsilon(game, cfg.epsilon)?;
    z0.check(game)?;
    let track = cfg.lambda == 0.0;
    let mut z = z0.clone();
    let mut rec = TrajectoryRecord {
        samples: Vec::new(),
        stride,
        absorption: None,
        steps: 0,
        trembles: 0,
        tremble_steps: 0,
        multi_tremble_steps: 0,
        renormalizations: 0,
        final_state: z0.clone(),
    };
    if stride > 0 {
        rec.samples.push(TrajectorySample {
            t: 0,
            state: z.clone(),
        });
    }
    if track {
        rec.absorption = absorbed_state(&z, game, delta).map(|state| Absorption { state, time: 0 });
    }
    let halted = |rec: &TrajectoryRecord| stop_on_absorption && rec.absorption.is_some();
    while rec.steps < cfg.max_steps && !halted(&rec) {
        let out = z.advance(game, cfg.epsilon, cfg.lambda, rng);
        rec.steps += 1;
        rec.trembles += out.trembles as u64;
        rec.tremble_steps += (out.trembles >= 1) as u64;
        rec.multi_tremble_steps += (out.trembles >= 2) as u64;
        rec.renormalizations += out.renormalized as u64;
        if stride > 0 && rec.steps.is_multiple_of(stride) {
            rec.samples.push(TrajectorySample {
                t: rec.steps,
                state: z.clone(),
            });
        }
        if track && rec.absorption.is_none() {
            rec.absorption = absorbed_state(&z, game, delta).map(|state| Absorption {
                state,
                time: rec.steps,
            });
        }
    }
    rec.final_state = z;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin_game, BuiltinParams};
    use proptest::prelude::{prop, prop_assert, proptest};
    use proptest::strategy::Strategy as Gen;

    fn coord2() -> Game {
        builtin_game("coordination", &BuiltinParams::new()).unwrap()
    }

    fn strat(w: &[f64]) -> Strategy {
        Strategy::new(w.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// |freq - p| <= 3 binomial standard errors.
    fn within_3_sigma(hits: u64, draws: u64, p: f64) -> bool {
        let freq = hits as f64 / draws as f64;
        (freq - p).abs() <= 3.0 * (p * (1.0 - p) / draws as f64).sqrt()
    }

    #[test]
    fn strategy_validation() {
        assert!(Strategy::new(vec![0.5, 0.5]).is_ok());
        assert!(Strategy::new(vec![0.5, 0.6]).is_err());
        assert!(Strategy::new(vec![1.1, -0.1]).is_err());
        assert!(Strategy::new(vec![]).is_err());
        assert!(Strategy::new(vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn sample_vertex_without_tremble() {
        let mut rng = stream(1, Domain::Trajectory, 0);
        let x = Strategy::vertex(3, 0);
        assert!((0..10_000).all(|_| sample_action(&x, 0.0, &mut rng) == 0));
    }

    #[test]
    fn sample_full_tremble_is_uniform() {
        let mut rng = stream(2, Domain::Trajectory, 0);
        let x = Strategy::vertex(2, 0);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_action(&x, 1.0, &mut rng) == 1).count() as u64;
        assert!(within_3_sigma(ones, n, 0.5), "{ones}");
    }

    #[test]
    fn sample_mixture() {
        let mut rng = stream(3, Domain::Trajectory, 0);
        let x = strat(&[0.7, 0.3]);
        let p0 = 0.9 * 0.7 + 0.1 * 0.5;
        assert!((p0 - 0.68f64).abs() < 1e-15);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_action(&x, 0.1, &mut rng) == 0).count() as u64;
        assert!(within_3_sigma(zeros, n, p0), "{zeros}");
    }

    #[test]
    fn sample_never_picks_zero_weight_action() {
        let mut rng = stream(4, Domain::Trajectory, 0);
        let x = strat(&[0.0, 0.3, 0.7, 0.0]);
        for _ in 0..10_000 {
            let a = sample_action(&x, 0.0, &mut rng);
            assert!(a == 1 || a == 2);
        }
    }

    #[test]
    fn update_examples() {
        let e0 = Strategy::vertex(2, 0);
        assert_eq!(update_strategy(&e0, 0, 3.0, 0.2).unwrap(), e0);
        let x = update_strategy(&strat(&[0.5, 0.5]), 0, 1.0, 0.1).unwrap();
        assert!(close(x.weights(), &[0.55, 0.45], 1e-15));
        let x = update_strategy(&strat(&[0.2, 0.8]), 0, 2.0, 0.25).unwrap();
        assert!(close(x.weights(), &[0.6, 0.4], 1e-15));
    }

    #[test]
    fn update_rejects_large_step() {
        let x = strat(&[0.5, 0.5]);
        assert_eq!(
            update_strategy(&x, 0, 4.0, 0.25),
            Err(Error::StepTooLarge { product: 1.0 })
        );
        assert!(update_strategy(&x, 0, 1.0, 0.0).is_err());
        assert!(update_strategy(&x, 2, 1.0, 0.1).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let x0 = strat(&[0.5, 0.5]);
        assert_eq!(closed_form_strategy(&x0, 0, 1.0, 0.1, 0).unwrap(), x0);
        let one = closed_form_strategy(&x0, 0, 1.0, 0.1, 1).unwrap();
        let upd = update_strategy(&x0, 0, 1.0, 0.1).unwrap();
        assert!(close(one.weights(), &[0.55, 0.45], 1e-15));
        assert!(close(one.weights(), upd.weights(), 1e-15));
        let far = closed_form_strategy(&x0, 1, 1.0, 0.1, 10_000).unwrap();
        assert!(close(far.weights(), &[0.0, 1.0], 1e-9));
        assert!(closed_form_strategy(&x0, 1, 10.0, 0.1, 3).is_err());
    }

    #[test]
    fn phi_and_psi() {
        let t = tremble_probabilities(0.1, 2).unwrap();
        assert!((t.phi - 0.19).abs() < 1e-15);
        // P(two | at least one) = 0.01 / 0.19
        assert!((t.psi - 0.01 / 0.19).abs() < 1e-15);

        let t = tremble_probabilities(1e-6, 3).unwrap();
        assert!((t.phi - 3e-6).abs() <= 0.01 * 3e-6);
        assert!(t.psi >= 0.0 && t.psi <= 2e-6, "{}", t.psi);
        // psi ~ (n - 1) lambda / 2 to first order
        assert!((t.psi - 1e-6).abs() < 1e-11);

        assert!(matches!(
            tremble_probabilities(1.0, 2),
            Err(Error::PsiOutOfDomain { .. })
        ));
        assert!(matches!(
            tremble_probabilities(0.0, 2),
            Err(Error::InvalidLambda { .. })
        ));
        assert_eq!(phi(0.0, 2), 0.0);
        assert_eq!(tremble_probabilities(0.3, 1).unwrap().psi, 0.0);
    }

    #[test]
    fn config_validation() {
        let g = coord2();
        assert!(DynamicsConfig::new(&g, 0.05, 0.0, 0, 10).is_ok());
        assert!(matches!(
            DynamicsConfig::new(&g, 1.0, 0.0, 0, 10),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(matches!(
            DynamicsConfig::new(&g, -0.1, 0.0, 0, 10),
            Err(Error::InvalidEpsilon(_))
        ));
        assert!(matches!(
            DynamicsConfig::new(&g, 0.1, 1.5, 0, 10),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn step_at_pure_state_is_fixed() {
        let g = coord2();
        let cfg = DynamicsConfig::new(&g, 0.1, 0.0, 0, 10).unwrap();
        let mut rng = cfg.rng(0);
        for s in g.enumerate_pss() {
            let z = JointState::at_pure(&g, &s);
            assert_eq!(step(&z, &g, &cfg, &mut rng).unwrap(), z);
        }
    }

    #[test]
    fn step_on_constant_game_moves_towards_realized_vertex() {
        let g = builtin_game("constant", &BuiltinParams::new()).unwrap();
        let cfg = DynamicsConfig::new(&g, 0.1, 0.0, 5, 10).unwrap();
        let mut rng = cfg.rng(0);
        let z = JointState::uniform(&g);
        for _ in 0..20 {
            let next = step(&z, &g, &cfg, &mut rng).unwrap();
            for (i, x) in next.strategies().iter().enumerate() {
                let a = next.profile().as_slice()[i];
                let before = z.strategies()[i].distance_to_vertex(a);
                assert!((x.distance_to_vertex(a) - 0.9 * before).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn full_tremble_marginals_are_uniform() {
        let g = coord2();
        let cfg = DynamicsConfig::new(&g, 0.1, 1.0, 9, 0).unwrap();
        let mut rng = cfg.rng(0);
        let mut z = JointState::uniform(&g);
        let n = 100_000;
        let mut ones = [0u64; 2];
        for _ in 0..n {
            z = step(&z, &g, &cfg, &mut rng).unwrap();
            for (c, &a) in ones.iter_mut().zip(z.profile().as_slice()) {
                *c += a as u64;
            }
        }
        for c in ones {
            assert!(within_3_sigma(c, n, 0.5), "{c}");
        }
    }

    #[test]
    fn absorption_detection() {
        let g = coord2();
        for s in g.enumerate_pss() {
            let z = JointState::at_pure(&g, &s);
            assert_eq!(detect_absorption(&z, &g, 1e-9).unwrap(), Some(s));
        }
        let z = JointState::uniform(&g);
        assert_eq!(detect_absorption(&z, &g, 0.01).unwrap(), None);

        let xs = vec![strat(&[0.995, 0.005]), strat(&[0.002, 0.998])];
        let z = JointState::new(&g, ActionProfile::new(vec![0, 1]), xs.clone()).unwrap();
        let s = detect_absorption(&z, &g, 0.01).unwrap().unwrap();
        assert_eq!(s.profile.as_slice(), &[0, 1]);
        assert_eq!(s.index, 1);
        // strategies near (0,1) but the realized profile disagrees
        let z = JointState::new(&g, ActionProfile::new(vec![0, 0]), xs).unwrap();
        assert_eq!(detect_absorption(&z, &g, 0.01).unwrap(), None);

        assert!(matches!(detect_absorption(&z, &g, 0.5), Err(Error::InvalidDelta(_))));
        assert!(matches!(detect_absorption(&z, &g, 0.0), Err(Error::InvalidDelta(_))));
    }

    #[test]
    fn trajectory_starting_absorbed() {
        let g = coord2();
        let cfg = DynamicsConfig::new(&g, 0.05, 0.0, 0, 1000).unwrap();
        let s = g.pure_state(3);
        let z = JointState::at_pure(&g, &s);
        let rec = run_trajectory(&z, &g, &cfg, 1e-3, true, 0, &mut cfg.rng(0)).unwrap();
        assert_eq!(rec.absorption, Some(Absorption { state: s, time: 0 }));
        assert_eq!(rec.steps, 0);
    }

    #[test]
    fn trajectory_is_deterministic() {
        let g = builtin_game("shifted_rps", &BuiltinParams::new()).unwrap();
        let cfg = DynamicsConfig::new(&g, 0.05, 0.05, 42, 5_000).unwrap();
        let z = JointState::uniform(&g);
        let a = run_trajectory(&z, &g, &cfg, 1e-3, false, 7, &mut cfg.rng(0)).unwrap();
        let b = run_trajectory(&z, &g, &cfg, 1e-3, false, 7, &mut cfg.rng(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 5_000 / 7 + 1);
        assert!(a.absorption.is_none());
        let c = run_trajectory(&z, &g, &cfg, 1e-3, false, 7, &mut cfg.rng(1)).unwrap();
        assert_ne!(a.final_state, c.final_state);
    }

    #[test]
    fn unperturbed_run_absorbs() {
        let g = coord2();
        let cfg = DynamicsConfig::new(&g, 0.05, 0.0, 11, 1_000_000).unwrap();
        let z = JointState::uniform(&g);
        for run in 0..20 {
            let rec = run_trajectory(&z, &g, &cfg, 1e-3, true, 0, &mut cfg.rng(run)).unwrap();
            let hit = rec.absorption.expect("absorbed");
            assert_eq!(hit.time, rec.steps);
            assert!(rec.final_state.near_own_vertex(1e-3));
        }
    }

    #[test]
    fn tremble_counts_track_phi() {
        let g = builtin_game("constant", &BuiltinParams::new()).unwrap();
        let cfg = DynamicsConfig::new(&g, 0.05, 0.1, 3, 200_000).unwrap();
        let rec = run_trajectory(&JointState::uniform(&g), &g, &cfg, 1e-3, false, 0, &mut cfg.rng(0)).unwrap();
        let t = tremble_probabilities(0.1, 2).unwrap();
        assert!(within_3_sigma(rec.tremble_steps, rec.steps, t.phi));
        assert!(within_3_sigma(rec.multi_tremble_steps, rec.tremble_steps, t.psi));
        assert!(rec.absorption.is_none());
    }

    fn simplex_point(m: usize) -> impl Gen<Value = Strategy> {
        prop::collection::vec(0.0f64..1.0, m).prop_map(|mut w| {
            let s: f64 = w.iter().sum::<f64>() + 1e-3;
            w.iter_mut().for_each(|x| *x /= s);
            let rest = 1.0 - w[1..].iter().sum::<f64>();
            w[0] = rest;
            Strategy(w)
        })
    }

    proptest! {
        #[test]
        fn update_stays_on_simplex(
            x in (2usize..6).prop_flat_map(simplex_point),
            pick in 0usize..6,
            gain in 1e-6f64..0.999_999,
        ) {
            let chosen = pick % x.len();
            let y = update_strategy(&x, chosen, gain / 0.1, 0.1).unwrap();
            prop_assert!(y.weights().iter().all(|&w| w >= 0.0));
            prop_assert!((y.sum() - x.sum()).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn one_step_contraction(
            x in (2usize..6).prop_flat_map(simplex_point),
            pick in 0usize..6,
            gain in 1e-6f64..0.999_999,
        ) {
            let chosen = pick % x.len();
            let y = update_strategy(&x, chosen, gain, 1.0).unwrap();
            let lhs = 1.0 - y.weights()[chosen];
            let rhs = (1.0 - gain) * (1.0 - x.weights()[chosen]);
            prop_assert!((lhs - rhs).abs() <= 1e-14);
        }

        #[test]
        fn closed_form_matches_iteration(
            x in (2usize..5).prop_flat_map(simplex_point),
            pick in 0usize..5,
            eps in 0.001f64..0.5,
            frac in 0.001f64..0.999,
            t in 0u64..=100,
        ) {
            let chosen = pick % x.len();
            let u = frac / eps;
            let mut y = x.clone();
            for _ in 0..t {
                y = update_strategy(&y, chosen, u, eps).unwrap();
            }
            let c = closed_form_strategy(&x, chosen, u, eps, t).unwrap();
            prop_assert!(close(y.weights(), c.weights(), 1e-10));
        }
    }
}

//! Finite strategic-form games with strictly positive payoffs.
//!
//! Payoffs are stored as one flat tensor per player. A profile
//! `(a_0, .., a_{n-1})` maps to the mixed-radix index with player 0 most
//! significant and the last player least significant (stride 1). The same
//! index numbers the pure strategy states.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::stream::{stream, Domain};
use crate::{Error, Result};

/// Joint action, one 0-based index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionProfile(Vec<usize>);

impl ActionProfile {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.0
    }

    /// Underscore-joined label used in report column names, e.g. `0_1`.
    pub fn label(&self) -> String {
        let mut out = String::new();
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                out.push('_');
            }
            out.push_str(&a.to_string());
        }
        out
    }
}

impl From<Vec<usize>> for ActionProfile {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for ActionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A pure strategy state: every player sits on the simplex vertex of its
/// action in `profile`. `index` is the canonical mixed-radix index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PureStrategyState {
    pub profile: ActionProfile,
    pub index: usize,
}

/// Finite game with strictly positive payoffs. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    name: Option<String>,
    actions: Vec<usize>,
    strides: Vec<usize>,
    payoffs: Vec<Vec<f64>>,
    max_payoff: f64,
}

impl Game {
    /// Validates and builds a game from per-player action counts and flat
    /// payoff tensors in canonical index order.
    pub fn new(actions: Vec<usize>, payoffs: Vec<Vec<f64>>) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::InvalidGame {
                field: "players".into(),
                reason: format!("need at least 2 players, got {}", actions.len()),
            });
        }
        for (i, &m) in actions.iter().enumerate() {
            if m < 2 {
                return Err(Error::InvalidGame {
                    field: format!("actions[{i}]"),
                    reason: format!("need at least 2 actions, got {m}"),
                });
            }
        }
        if payoffs.len() != actions.len() {
            return Err(Error::DimensionMismatch {
                field: "payoffs".into(),
                expected: actions.len(),
                found: payoffs.len(),
            });
        }
        let size = actions
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::InvalidGame {
                field: "actions".into(),
                reason: "profile count overflows".into(),
            })?;
        let mut max_payoff = 0.0f64;
        for (player, tensor) in payoffs.iter().enumerate() {
            if tensor.len() != size {
                return Err(Error::DimensionMismatch {
                    field: format!("payoffs[{player}]"),
                    expected: size,
                    found: tensor.len(),
                });
            }
            for (index, &value) in tensor.iter().enumerate() {
                // `!(value > 0)` also rejects NaN.
                if !value.is_finite() || value <= 0.0 {
                    return Err(Error::NonPositivePayoff { player, index, value });
                }
                max_payoff = max_payoff.max(value);
            }
        }
        let mut strides = vec![1usize; actions.len()];
        for i in (0..actions.len() - 1).rev() {
            strides[i] = strides[i + 1] * actions[i + 1];
        }
        Ok(Self {
            name: None,
            actions,
            strides,
            payoffs,
            max_payoff,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn players(&self) -> usize {
        self.actions.len()
    }

    /// Action counts `m_i`.
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Number of action profiles, which is also the number of pure strategy
    /// states.
    pub fn num_profiles(&self) -> usize {
        self.payoffs[0].len()
    }

    /// Flat payoff tensor of `player`.
    pub fn payoff_tensor(&self, player: usize) -> &[f64] {
        &self.payoffs[player]
    }

    /// Largest payoff over all players and profiles.
    pub fn max_payoff(&self) -> f64 {
        self.max_payoff
    }

    pub fn check_profile(&self, profile: &[usize]) -> Result<()> {
        if profile.len() != self.players() {
            return Err(Error::InvalidProfile(format!(
                "expected {} actions, got {}",
                self.players(),
                profile.len()
            )));
        }
        for (i, (&a, &m)) in profile.iter().zip(&self.actions).enumerate() {
            if a >= m {
                return Err(Error::InvalidProfile(format!(
                    "player {i} action {a} out of range 0..{m}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical index of a profile. The profile must be in range.
    pub fn profile_index(&self, profile: &[usize]) -> usize {
        debug_assert!(self.check_profile(profile).is_ok());
        profile.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Inverse of [`Game::profile_index`].
    pub fn profile_at(&self, mut index: usize) -> ActionProfile {
        debug_assert!(index < self.num_profiles());
        let mut out = vec![0; self.players()];
        for (slot, &stride) in out.iter_mut().zip(&self.strides) {
            *slot = index / stride;
            index %= stride;
        }
        ActionProfile(out)
    }

    /// `u_i(alpha)`.
    pub fn payoff(&self, player: usize, profile: &ActionProfile) -> f64 {
        self.payoffs[player][self.profile_index(profile.as_slice())]
    }

    #[inline]
    pub(crate) fn payoff_at(&self, player: usize, index: usize) -> f64 {
        self.payoffs[player][index]
    }

    pub fn pure_state(&self, index: usize) -> PureStrategyState {
        PureStrategyState {
            profile: self.profile_at(index),
            index,
        }
    }

    pub fn pure_state_of(&self, profile: &ActionProfile) -> Result<PureStrategyState> {
        self.check_profile(profile.as_slice())?;
        Ok(PureStrategyState {
            profile: profile.clone(),
            index: self.profile_index(profile.as_slice()),
        })
    }

    /// All pure strategy states in canonical index order.
    pub fn enumerate_pss(&self) -> Vec<PureStrategyState> {
        (0..self.num_profiles()).map(|k| self.pure_state(k)).collect()
    }

    /// True iff no player has a strictly improving unilateral deviation.
    pub fn is_pure_nash(&self, profile: &ActionProfile) -> bool {
        let base = self.profile_index(profile.as_slice());
        profile.as_slice().iter().enumerate().all(|(i, &a)| {
            let current = self.payoffs[i][base];
            let without = base - a * self.strides[i];
            (0..self.actions[i])
                .all(|b| self.payoffs[i][without + b * self.strides[i]] <= current)
        })
    }

    pub fn pure_nash_profiles(&self) -> Vec<ActionProfile> {
        self.enumerate_pss()
            .into_iter()
            .map(|s| s.profile)
            .filter(|p| self.is_pure_nash(p))
            .collect()
    }

    /// Returns the same game with each player's actions relabeled:
    /// new action `perm[i][a]` plays the role of old action `a`.
    pub fn relabel_actions(&self, perm: &[Vec<usize>]) -> Result<Game> {
        if perm.len() != self.players() {
            return Err(Error::DimensionMismatch {
                field: "perm".into(),
                expected: self.players(),
                found: perm.len(),
            });
        }
        let mut payoffs = vec![vec![0.0; self.num_profiles()]; self.players()];
        for old in 0..self.num_profiles() {
            let p = self.profile_at(old);
            let mapped: Vec<usize> = p
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, &a)| perm[i][a])
                .collect();
            let new = self.profile_index(&mapped);
            for (i, tensor) in payoffs.iter_mut().enumerate() {
                tensor[new] = self.payoffs[i][old];
            }
        }
        let g = Game::new(self.actions.clone(), payoffs)?;
        Ok(match &self.name {
            Some(n) => g.with_name(n.clone()),
            None => g,
        })
    }
}

/// Parameters for [`builtin_game`]. Integer-valued parameters (`n`, `m`,
/// `seed`) are given as floats and must be whole numbers.
pub type BuiltinParams = BTreeMap<String, f64>;

/// Names accepted by [`builtin_game`].
pub const BUILTIN_NAMES: [&str; 5] = [
    "coordination",
    "anticoordination",
    "shifted_rps",
    "constant",
    "random_positive",
];

struct ParamReader<'a> {
    params: &'a BuiltinParams,
    allowed: &'static [&'static str],
}

impl ParamReader<'_> {
    fn check_keys(&self) -> Result<()> {
        for key in self.params.keys() {
            if !self.allowed.contains(&key.as_str()) {
                return Err(Error::InvalidParams {
                    param: key.clone(),
                    reason: format!("unknown parameter; expected one of {:?}", self.allowed),
                });
            }
        }
        Ok(())
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.params.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::InvalidParams {
                param: key.into(),
                reason: format!("{v} is not finite"),
            });
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.real(key, default)?;
        if v <= 0.0 {
            return Err(Error::InvalidParams {
                param: key.into(),
                reason: format!("{v} must be > 0"),
            });
        }
        Ok(v)
    }

    fn integer(&self, key: &str, default: u64, min: u64) -> Result<u64> {
        let v = self.real(key, default as f64)?;
        if libm::trunc(v) != v || v < min as f64 || v > (1u64 << 53) as f64 {
            return Err(Error::InvalidParams {
                param: key.into(),
                reason: format!("{v} must be an integer >= {min}"),
            });
        }
        Ok(v as u64)
    }
}

fn tabulate(actions: &[usize], mut f: impl FnMut(usize, &[usize]) -> f64) -> Vec<Vec<f64>> {
    let size: usize = actions.iter().product();
    let n = actions.len();
    let mut out = vec![Vec::with_capacity(size); n];
    let mut profile = vec![0usize; n];
    for _ in 0..size {
        for (i, tensor) in out.iter_mut().enumerate() {
            tensor.push(f(i, &profile));
        }
        // Increment the mixed-radix counter, last player fastest.
        for k in (0..n).rev() {
            profile[k] += 1;
            if profile[k] < actions[k] {
                break;
            }
            profile[k] = 0;
        }
    }
    out
}

/// Builds one of the documented fixture games.
///
/// - `coordination` (`n`=2, `m`=2, `match`=1.0, `mismatch`=0.5): every
///   player gets `match` when all actions agree, `mismatch` otherwise.
/// - `anticoordination` (`n`=2, `m`=2, `high`=1.0, `low`=0.5): a player gets
///   `high` when its action differs from every other player's, `low`
///   otherwise.
/// - `shifted_rps` (`win`=3, `draw`=2, `lose`=1): rock(0), paper(1),
///   scissors(2) for two players.
/// - `constant` (`n`=2, `m`=2, `value`=1.0).
/// - `random_positive` (`n`=2, `m`=2, `p_min`=0.1, `p_max`=1.0, `seed`=0):
///   payoffs i.i.d. uniform on `[p_min, p_max]`.
pub fn builtin_game(name: &str, params: &BuiltinParams) -> Result<Game> {
    let game = match name {
        "coordination" => {
            let r = ParamReader {
                params,
                allowed: &["n", "m", "match", "mismatch"],
            };
            r.check_keys()?;
            let n = r.integer("n", 2, 2)? as usize;
            let m = r.integer("m", 2, 2)? as usize;
            let hit = r.positive("match", 1.0)?;
            let miss = r.positive("mismatch", 0.5)?;
            let actions = vec![m; n];
            let payoffs = tabulate(&actions, |_, p| {
                if p.iter().all(|&a| a == p[0]) {
                    hit
                } else {
                    miss
                }
            });
            Game::new(actions, payoffs)?
        }
        "anticoordination" => {
            let r = ParamReader {
                params,
                allowed: &["n", "m", "high", "low"],
            };
            r.check_keys()?;
            let n = r.integer("n", 2, 2)? as usize;
            let m = r.integer("m", 2, 2)? as usize;
            let high = r.positive("high", 1.0)?;
            let low = r.positive("low", 0.5)?;
            let actions = vec![m; n];
            let payoffs = tabulate(&actions, |i, p| {
                let alone = p.iter().enumerate().all(|(j, &a)| j == i || a != p[i]);
                if alone {
                    high
                } else {
                    low
                }
            });
            Game::new(actions, payoffs)?
        }
        "shifted_rps" => {
            let r = ParamReader {
                params,
                allowed: &["win", "draw", "lose"],
            };
            r.check_keys()?;
            let win = r.positive("win", 3.0)?;
            let draw = r.positive("draw", 2.0)?;
            let lose = r.positive("lose", 1.0)?;
            let actions = vec![3, 3];
            let payoffs = tabulate(&actions, |i, p| {
                let (me, other) = (p[i], p[1 - i]);
                if me == other {
                    draw
                } else if (me + 3 - other) % 3 == 1 {
                    // paper beats rock, scissors beats paper, rock beats scissors
                    win
                } else {
                    lose
                }
            });
            Game::new(actions, payoffs)?
        }
        "constant" => {
            let r = ParamReader {
                params,
                allowed: &["n", "m", "value"],
            };
            r.check_keys()?;
            let n = r.integer("n", 2, 2)? as usize;
            let m = r.integer("m", 2, 2)? as usize;
            let value = r.positive("value", 1.0)?;
            let actions = vec![m; n];
            let payoffs = tabulate(&actions, |_, _| value);
            Game::new(actions, payoffs)?
        }
        "random_positive" => {
            let r = ParamReader {
                params,
                allowed: &["n", "m", "p_min", "p_max", "seed"],
            };
            r.check_keys()?;
            let n = r.integer("n", 2, 2)? as usize;
            let m = r.integer("m", 2, 2)? as usize;
            let p_min = r.positive("p_min", 0.1)?;
            let p_max = r.real("p_max", 1.0)?;
            if p_max < p_min {
                return Err(Error::InvalidParams {
                    param: "p_max".into(),
                    reason: format!("{p_max} is below p_min = {p_min}"),
                });
            }
            let seed = r.integer("seed", 0, 0)?;
            let mut rng = stream(seed, Domain::Builtin, 0);
            let actions = vec![m; n];
            let payoffs = tabulate(&actions, |_, _| {
                p_min + (p_max - p_min) * rng.random::<f64>()
            });
            Game::new(actions, payoffs)?
        }
        other => return Err(Error::UnknownGame(other.to_string())),
    };
    Ok(game.with_name(name))
}

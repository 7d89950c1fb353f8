//! Occupation measures of the perturbed process and perturbation sweeps.
//!
//! A single long trajectory is run per perturbation level. After a burn-in
//! prefix, every visited state is filed under the pure strategy state whose
//! `delta`-neighborhood contains it (strategies close to the vertex of the
//! realized profile) or under the "mixed" bucket. Standard errors come from
//! batch means over contiguous blocks of the post-burn-in segment.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::chain::{
    estimate_lifted_chain, stationary_distribution, ChainSettings, LiftedChain,
    StationaryDistribution,
};
use crate::dynamics::{absorbed_state, check_delta, check_epsilon, DynamicsConfig, JointState};
use crate::game::Game;
use crate::stream::{stream, Domain, Stream};
use crate::{Error, Result};

/// Number of contiguous blocks used for batch-means standard errors.
pub const BATCHES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationReport {
    pub lambda: f64,
    /// Fraction of post-burn-in steps spent near each pure strategy state,
    /// in canonical state order.
    pub mass: Vec<f64>,
    pub mixed_mass: f64,
    /// Batch-means standard errors of `mass`.
    pub mass_se: Vec<f64>,
    pub mixed_mass_se: f64,
    /// Total steps including burn-in.
    pub steps: u64,
    pub burn_in: u64,
    pub delta: f64,
}

impl OccupationReport {
    /// `mass / (1 - mixed_mass)`; all zeros if no step was near a pure
    /// strategy state.
    pub fn normalized_mass(&self) -> Vec<f64> {
        let pure: f64 = self.mass.iter().sum();
        if pure > 0.0 {
            self.mass.iter().map(|m| m / pure).collect()
        } else {
            vec![0.0; self.mass.len()]
        }
    }
}

fn batch_se(fractions: impl Iterator<Item = f64>, batches: usize) -> f64 {
    if batches < 2 {
        return 0.0;
    }
    let values: Vec<f64> = fractions.collect();
    let mean = values.iter().sum::<f64>() / batches as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (batches - 1) as f64;
    libm::sqrt(var / batches as f64)
}

/// Runs `cfg.max_steps()` steps from `z0` and tallies the neighborhood
/// occupied after each step past `burn_in`.
///
/// `lambda = 0` is accepted so the degenerate absorbed case can be checked.
pub fn occupation_measure<R: Rng + ?Sized>(
    game: &Game,
    cfg: &DynamicsConfig,
    z0: &JointState,
    delta: f64,
    burn_in: u64,
    rng: &mut R,
) -> Result<OccupationReport> {
    check_delta(delta)?;
    check_epsilon(game, cfg.epsilon())?;
    z0.check(game)?;
    if burn_in >= cfg.max_steps() {
        return Err(Error::InvalidBudget {
            field: "burn_in",
            reason: alloc::format!("{burn_in} must be below the step count {}", cfg.max_steps()),
        });
    }
    let buckets = game.num_profiles() + 1;
    let mixed = buckets - 1;
    let samples = cfg.max_steps() - burn_in;
    let batches = (BATCHES as u64).min(samples) as usize;
    let mut tallies = vec![0u64; batches * buckets];
    let mut z = z0.clone();
    for _ in 0..burn_in {
        z.advance(game, cfg.epsilon(), cfg.lambda(), rng);
    }
    for k in 0..samples {
        z.advance(game, cfg.epsilon(), cfg.lambda(), rng);
        let bucket = absorbed_state(&z, game, delta).map_or(mixed, |s| s.index);
        let batch = (k as u128 * batches as u128 / samples as u128) as usize;
        tallies[batch * buckets + bucket] += 1;
    }
    let batch_len = |b: usize| {
        let lo = (b as u128 * samples as u128).div_ceil(batches as u128);
        let hi = ((b + 1) as u128 * samples as u128).div_ceil(batches as u128);
        (hi - lo) as f64
    };
    let mut fractions = vec![0.0; buckets];
    let mut se = vec![0.0; buckets];
    for (j, (f, e)) in fractions.iter_mut().zip(se.iter_mut()).enumerate() {
        let total: u64 = (0..batches).map(|b| tallies[b * buckets + j]).sum();
        *f = total as f64 / samples as f64;
        *e = batch_se(
            (0..batches).map(|b| tallies[b * buckets + j] as f64 / batch_len(b)),
            batches,
        );
    }
    let mixed_mass = fractions.pop().unwrap();
    let mixed_mass_se = se.pop().unwrap();
    Ok(OccupationReport {
        lambda: cfg.lambda(),
        mass: fractions,
        mixed_mass,
        mass_se: se,
        mixed_mass_se,
        steps: cfg.max_steps(),
        burn_in,
        delta,
    })
}

/// Total variation distance `(1/2) sum |p_i - q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Step budget `max(10^6, 100 |S| / lambda)`.
pub fn default_budget(lambda: f64, states: usize) -> u64 {
    let scaled = libm::ceil(100.0 / lambda * states as f64);
    if scaled > 1e6 {
        scaled as u64
    } else {
        1_000_000
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub epsilon: f64,
    pub delta: f64,
    /// Non-increasing perturbation levels in `(0, 1)`.
    pub lambdas: Vec<f64>,
    /// Fixed step count for every level; `None` uses [`default_budget`].
    pub steps: Option<u64>,
    /// Fixed burn-in; `None` discards the first 1% of each run.
    pub burn_in: Option<u64>,
    /// Lifted-chain estimation for the reference distribution.
    pub chain: ChainSettings,
    pub master_seed: u64,
}

impl SweepSettings {
    pub fn validate(&self, game: &Game) -> Result<()> {
        check_epsilon(game, self.epsilon)?;
        check_delta(self.delta)?;
        if self.lambdas.is_empty() {
            return Err(Error::InvalidLambda {
                value: f64::NAN,
                range: "a non-empty list",
            });
        }
        for (k, &l) in self.lambdas.iter().enumerate() {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidLambda {
                    value: l,
                    range: "(0, 1)",
                });
            }
            if k > 0 && l > self.lambdas[k - 1] {
                return Err(Error::InvalidLambda {
                    value: l,
                    range: "a non-increasing list",
                });
            }
        }
        for k in 0..self.lambdas.len() {
            let (steps, burn_in) = self.budget(k, game.num_profiles());
            if burn_in >= steps {
                return Err(Error::InvalidBudget {
                    field: "burn_in",
                    reason: alloc::format!("{burn_in} must be below the step count {steps}"),
                });
            }
        }
        self.chain.validate(game)
    }

    /// (steps, burn-in) for level `k`.
    pub fn budget(&self, k: usize, states: usize) -> (u64, u64) {
        let steps = self
            .steps
            .unwrap_or_else(|| default_budget(self.lambdas[k], states));
        (steps, self.burn_in.unwrap_or(steps / 100))
    }

    /// Every level draws from the same stream (common random numbers), so a
    /// row depends only on its own lambda and budget.
    pub fn stream(&self) -> Stream {
        stream(self.master_seed, Domain::Occupation, 0)
    }
}

/// Occupation measure at sweep level `k`, started from uniform strategies.
pub fn sweep_point(game: &Game, settings: &SweepSettings, k: usize) -> Result<OccupationReport> {
    let (steps, burn_in) = settings.budget(k, game.num_profiles());
    let cfg = DynamicsConfig::new(
        game,
        settings.epsilon,
        settings.lambdas[k],
        settings.master_seed,
        steps,
    )?;
    occupation_measure(
        game,
        &cfg,
        &JointState::uniform(game),
        settings.delta,
        burn_in,
        &mut settings.stream(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub occupation: OccupationReport,
    /// TV distance between the normalized pure-state mass and `pi`.
    pub tv_to_pi: f64,
    /// Mixed mass does not exceed the previous level's by more than two
    /// combined standard errors. Always true on the first row.
    pub mixed_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub chain: LiftedChain,
    pub pi: StationaryDistribution,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Combines per-level occupation reports with the reference `pi`.
    pub fn assemble(
        chain: LiftedChain,
        pi: StationaryDistribution,
        occupations: Vec<OccupationReport>,
    ) -> Result<Self> {
        let mut rows: Vec<SweepRow> = Vec::with_capacity(occupations.len());
        for occupation in occupations {
            let tv_to_pi = tv_distance(&occupation.normalized_mass(), &pi.pi)?;
            let mixed_nonincreasing = rows.last().is_none_or(|prev| {
                let prev = &prev.occupation;
                let sigma = libm::sqrt(
                    prev.mixed_mass_se * prev.mixed_mass_se
                        + occupation.mixed_mass_se * occupation.mixed_mass_se,
                );
                occupation.mixed_mass <= prev.mixed_mass + 2.0 * sigma
            });
            rows.push(SweepRow {
                occupation,
                tv_to_pi,
                mixed_nonincreasing,
            });
        }
        Ok(Self { chain, pi, rows })
    }

    pub fn mixed_nonincreasing(&self) -> bool {
        self.rows.iter().all(|r| r.mixed_nonincreasing)
    }
}

/// Sequential sweep: one lifted-chain estimate, then one occupation
/// measure per level.
pub fn lambda_sweep(game: &Game, settings: &SweepSettings) -> Result<SweepReport> {
    settings.validate(game)?;
    let chain = estimate_lifted_chain(game, &settings.chain)?;
    let pi = stationary_distribution(&chain)?;
    let occupations = (0..settings.lambdas.len())
        .map(|k| sweep_point(game, settings, k))
        .collect::<Result<Vec<_>>>()?;
    SweepReport::assemble(chain, pi, occupations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin_game, BuiltinParams};

    fn game(name: &str) -> Game {
        builtin_game(name, &BuiltinParams::new()).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.75, 0.25], &[0.5, 0.5]).unwrap(), 0.25);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn budgets() {
        assert_eq!(default_budget(0.02, 4), 1_000_000);
        assert_eq!(default_budget(1e-4, 9), 9_000_000);
    }

    #[test]
    fn absorbed_start_without_perturbation() {
        let g = game("coordination");
        let cfg = DynamicsConfig::new(&g, 0.05, 0.0, 1, 1000).unwrap();
        let s = g.pure_state(2);
        let rep = occupation_measure(&g, &cfg, &JointState::at_pure(&g, &s), 1e-2, 10, &mut cfg.rng(0)).unwrap();
        assert_eq!(rep.mass, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(rep.mixed_mass, 0.0);
        assert_eq!(rep.mass_se, vec![0.0; 4]);
    }

    #[test]
    fn masses_form_a_probability_vector() {
        let g = game("shifted_rps");
        let cfg = DynamicsConfig::new(&g, 0.3, 0.05, 2, 20_000).unwrap();
        let rep = occupation_measure(&g, &cfg, &JointState::uniform(&g), 1e-2, 200, &mut cfg.rng(0)).unwrap();
        let total: f64 = rep.mass.iter().sum::<f64>() + rep.mixed_mass;
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(rep.mass.iter().all(|&m| m >= 0.0));
        assert_eq!(rep.steps, 20_000);
        let norm: f64 = rep.normalized_mass().iter().sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn burn_in_must_leave_samples() {
        let g = game("coordination");
        let cfg = DynamicsConfig::new(&g, 0.05, 0.1, 1, 100).unwrap();
        let r = occupation_measure(&g, &cfg, &JointState::uniform(&g), 1e-2, 100, &mut cfg.rng(0));
        assert!(matches!(r, Err(Error::InvalidBudget { field: "burn_in", .. })));
    }

    #[test]
    fn constant_game_occupation_is_uniform() {
        let g = game("constant");
        let cfg = DynamicsConfig::new(&g, 0.5, 0.05, 4, 400_000).unwrap();
        let rep = occupation_measure(&g, &cfg, &JointState::uniform(&g), 1e-2, 4_000, &mut cfg.rng(0)).unwrap();
        let norm = rep.normalized_mass();
        let pure = 1.0 - rep.mixed_mass;
        for (m, se) in norm.iter().zip(&rep.mass_se) {
            assert!((m - 0.25).abs() <= 3.0 * se / pure, "{norm:?} {:?}", rep.mass_se);
        }
    }

    #[test]
    fn sweep_validation() {
        let g = game("coordination");
        let mut s = SweepSettings {
            epsilon: 0.5,
            delta: 1e-2,
            lambdas: vec![0.1, 0.2],
            steps: Some(1000),
            burn_in: None,
            chain: ChainSettings::new(0.5, 10, 0),
            master_seed: 0,
        };
        assert!(matches!(s.validate(&g), Err(Error::InvalidLambda { .. })));
        s.lambdas = vec![0.1, 0.1, 0.0];
        assert!(matches!(s.validate(&g), Err(Error::InvalidLambda { .. })));
        s.lambdas = vec![0.1, 0.1];
        assert!(s.validate(&g).is_ok());
        s.burn_in = Some(1000);
        assert!(matches!(s.validate(&g), Err(Error::InvalidBudget { .. })));
    }

    #[test]
    fn repeated_lambda_gives_identical_rows() {
        let g = game("coordination");
        let s = SweepSettings {
            epsilon: 0.5,
            delta: 1e-2,
            lambdas: vec![0.1, 0.05, 0.05],
            steps: Some(50_000),
            burn_in: None,
            chain: ChainSettings::new(0.5, 500, 3),
            master_seed: 3,
        };
        let rep = lambda_sweep(&g, &s).unwrap();
        assert_eq!(rep.rows[1].occupation, rep.rows[2].occupation);
        assert_eq!(rep.rows[1].tv_to_pi, rep.rows[2].tv_to_pi);
        assert!(rep.rows[0].mixed_nonincreasing);
        assert_eq!(lambda_sweep(&g, &s).unwrap(), rep);
    }
}

//! Parallel drivers.
//!
//! Every unit of work draws from its own addressed stream, so results do not
//! depend on the number of workers or on scheduling order.

use lastab_core::chain::{sample_row, stationary_distribution, ChainSettings, LiftedChain, RowTally};
use lastab_core::dynamics::{run_trajectory, DynamicsConfig, JointState, TrajectoryRecord};
use lastab_core::game::Game;
use lastab_core::occupation::{sweep_point, SweepReport, SweepSettings};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Absorption runs per task when estimating a chain row.
pub const CHUNK: u64 = 1000;

#[derive(Debug)]
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Pool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn estimate_lifted_chain(&self, game: &Game, settings: &ChainSettings) -> Result<LiftedChain> {
        settings.validate(game)?;
        let size = game.num_profiles();
        let runs = settings.runs_per_state;
        let tasks: Vec<(usize, u64)> = (0..size)
            .flat_map(|row| (0..runs.div_ceil(CHUNK)).map(move |c| (row, c * CHUNK)))
            .collect();
        let tallies = self.pool.install(|| {
            tasks
                .par_iter()
                .map(|&(row, start)| sample_row(game, settings, row, start..(start + CHUNK).min(runs)))
                .collect::<lastab_core::Result<Vec<_>>>()
        })?;
        let mut rows = vec![RowTally::zeros(size); size];
        for (&(row, _), tally) in tasks.iter().zip(&tallies) {
            rows[row].merge(tally);
        }
        Ok(LiftedChain::from_tallies(game, settings, rows)?)
    }

    /// Independent trajectories; run `r` uses `cfg.rng(r)`.
    pub fn trajectories(
        &self,
        game: &Game,
        cfg: &DynamicsConfig,
        z0: &JointState,
        delta: f64,
        stop_on_absorption: bool,
        stride: u64,
        runs: u64,
    ) -> Result<Vec<TrajectoryRecord>> {
        let records = self.pool.install(|| {
            (0..runs)
                .into_par_iter()
                .map(|r| run_trajectory(z0, game, cfg, delta, stop_on_absorption, stride, &mut cfg.rng(r)))
                .collect::<lastab_core::Result<Vec<_>>>()
        })?;
        Ok(records)
    }

    pub fn lambda_sweep(&self, game: &Game, settings: &SweepSettings) -> Result<SweepReport> {
        settings.validate(game)?;
        let chain = self.estimate_lifted_chain(game, &settings.chain)?;
        let pi = stationary_distribution(&chain)?;
        let occupations = self.pool.install(|| {
            (0..settings.lambdas.len())
                .into_par_iter()
                .map(|k| sweep_point(game, settings, k))
                .collect::<lastab_core::Result<Vec<_>>>()
        })?;
        Ok(SweepReport::assemble(chain, pi, occupations)?)
    }
}

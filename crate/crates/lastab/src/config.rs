//! Experiment configuration.
//!
//! Config files are TOML documents, like game files. Every key is optional
//! and command-line flags override file values:
//!
//! ```toml
//! seed = 7
//! epsilon = 0.9
//! lambdas = [0.1, 0.05, 0.02]
//! delta = 0.01
//! runs_per_state = 10000
//! out = "results"
//!
//! [game]
//! builtin = "coordination"
//! params = { m = 2 }
//! # or: file = "games/coord.toml"
//! # or inline: players = 2, actions = [...], payoffs = [[...], ...]
//! ```
//!
//! Relative paths inside a config file are resolved against the file's
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lastab_core::chain::ChainSettings;
use lastab_core::dynamics::DynamicsConfig;
use lastab_core::game::{builtin_game, BuiltinParams, Game};
use lastab_core::occupation::SweepSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doc::{load_game_file, GameDoc};
use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_RUNS_PER_STATE: u64 = 10_000;
pub const DEFAULT_T_MAX: u64 = 1_000_000;
pub const DEFAULT_CENSORING_BUDGET: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub file: Option<PathBuf>,
    pub name: Option<String>,
    pub players: Option<usize>,
    pub actions: Option<Vec<usize>>,
    pub payoffs: Option<Vec<Vec<f64>>>,
}

/// Raw settings as read from a config file or collected from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub game: Option<GameSection>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub runs_per_state: Option<u64>,
    pub t_max: Option<u64>,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub runs: Option<u64>,
    pub stride: Option<u64>,
    pub chain: Option<PathBuf>,
    pub censoring_budget: Option<f64>,
}

impl Settings {
    pub fn from_toml(context: &str, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::malformed(context, e.message()))
    }

    /// Reads a config file and anchors its relative paths at the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::from_toml(&path.display().to_string(), &text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(g) = s.game.as_mut() {
            g.file.as_mut().map(anchor);
        }
        s.chain.as_mut().map(anchor);
        s.out.as_mut().map(anchor);
        Ok(s)
    }

    /// Field-wise override: values set in `top` win.
    pub fn overlay(self, top: Settings) -> Settings {
        Settings {
            game: top.game.or(self.game),
            epsilon: top.epsilon.or(self.epsilon),
            lambda: top.lambda.or(self.lambda),
            lambdas: top.lambdas.or(self.lambdas),
            delta: top.delta.or(self.delta),
            runs_per_state: top.runs_per_state.or(self.runs_per_state),
            t_max: top.t_max.or(self.t_max),
            steps: top.steps.or(self.steps),
            burn_in: top.burn_in.or(self.burn_in),
            seed: top.seed.or(self.seed),
            out: top.out.or(self.out),
            workers: top.workers.or(self.workers),
            runs: top.runs.or(self.runs),
            stride: top.stride.or(self.stride),
            chain: top.chain.or(self.chain),
            censoring_budget: top.censoring_budget.or(self.censoring_budget),
        }
    }

    /// Applies defaults and resolves the game source.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let game = self.game.map(resolve_game).transpose()?;
        let workers = match self.workers {
            Some(0) => return Err(Error::config("workers", "must be at least 1")),
            Some(w) => w,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(ExperimentConfig {
            game,
            epsilon: self.epsilon,
            lambda: self.lambda,
            lambdas: self.lambdas,
            delta: self.delta.unwrap_or(DEFAULT_DELTA),
            runs_per_state: self.runs_per_state.unwrap_or(DEFAULT_RUNS_PER_STATE),
            t_max: self.t_max.unwrap_or(DEFAULT_T_MAX),
            steps: self.steps,
            burn_in: self.burn_in,
            seed: self.seed.unwrap_or(0),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            workers,
            runs: self.runs.unwrap_or(1),
            stride: self.stride.unwrap_or(0),
            chain: self.chain,
            censoring_budget: self.censoring_budget.unwrap_or(DEFAULT_CENSORING_BUDGET),
        })
    }
}

fn resolve_game(section: GameSection) -> Result<Game> {
    let inline = section.players.is_some() || section.actions.is_some() || section.payoffs.is_some();
    let sources = [section.builtin.is_some(), section.file.is_some(), inline];
    match sources.iter().filter(|&&s| s).count() {
        0 => return Err(Error::config("game", "needs one of `builtin`, `file` or inline `players`/`actions`/`payoffs`")),
        1 => {}
        _ => return Err(Error::config("game", "`builtin`, `file` and inline fields are mutually exclusive")),
    }
    if !section.params.is_empty() && section.builtin.is_none() {
        return Err(Error::config("game.params", "only valid with `builtin`"));
    }
    let game = if let Some(name) = section.builtin {
        builtin_game(&name, &section.params)?
    } else if let Some(path) = section.file {
        load_game_file(&path)?
    } else {
        GameDoc {
            name: None,
            players: section.players.ok_or_else(|| Error::config("game.players", "missing"))?,
            actions: section.actions.ok_or_else(|| Error::config("game.actions", "missing"))?,
            payoffs: section.payoffs.ok_or_else(|| Error::config("game.payoffs", "missing"))?,
        }
        .into_game()?
    };
    Ok(match section.name {
        Some(n) => game.with_name(n),
        None => game,
    })
}

/// Parses `name` or `name:key=value,key=value` into a game section.
pub fn parse_builtin_spec(spec: &str) -> Result<GameSection> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = BuiltinParams::new();
    for pair in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config("builtin", format!("expected key=value, got `{pair}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("builtin.{}", k.trim()), format!("`{v}` is not a number")))?;
        params.insert(k.trim().to_owned(), v);
    }
    Ok(GameSection {
        builtin: Some(name.to_owned()),
        params,
        ..GameSection::default()
    })
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub game: Option<Game>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub delta: f64,
    pub runs_per_state: u64,
    pub t_max: u64,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub runs: u64,
    pub stride: u64,
    pub chain: Option<PathBuf>,
    pub censoring_budget: f64,
}

#[derive(Serialize)]
struct Canonical<'a> {
    actions: Option<&'a [usize]>,
    payoffs: Option<Vec<&'a [f64]>>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
    lambdas: Option<&'a [f64]>,
    delta: f64,
    runs_per_state: u64,
    t_max: u64,
    steps: Option<u64>,
    burn_in: Option<u64>,
    seed: u64,
    runs: u64,
    stride: u64,
    censoring_budget: f64,
    chain_sha256: Option<String>,
}

impl ExperimentConfig {
    pub fn game(&self) -> Result<&Game> {
        self.game
            .as_ref()
            .ok_or_else(|| Error::config("game", "required (use --game, --builtin or a [game] section)"))
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| Error::config("epsilon", "required"))
    }

    /// SHA-256 over every field that can change results. The output
    /// directory, worker count and game label are excluded; an input chain
    /// file enters through its contents.
    pub fn hash(&self) -> Result<String> {
        let chain_sha256 = match &self.chain {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Some(hex::encode(Sha256::digest(&bytes)))
            }
            None => None,
        };
        let canonical = Canonical {
            actions: self.game.as_ref().map(|g| g.actions()),
            payoffs: self
                .game
                .as_ref()
                .map(|g| (0..g.players()).map(|i| g.payoff_tensor(i)).collect()),
            epsilon: self.epsilon,
            lambda: self.lambda,
            lambdas: self.lambdas.as_deref(),
            delta: self.delta,
            runs_per_state: self.runs_per_state,
            t_max: self.t_max,
            steps: self.steps,
            burn_in: self.burn_in,
            seed: self.seed,
            runs: self.runs,
            stride: self.stride,
            censoring_budget: self.censoring_budget,
            chain_sha256,
        };
        let json = serde_json::to_vec(&canonical).expect("canonical config serializes");
        Ok(hex::encode(Sha256::digest(&json)))
    }

    pub fn chain_settings(&self) -> Result<ChainSettings> {
        let settings = ChainSettings {
            epsilon: self.epsilon()?,
            delta: self.delta,
            runs_per_state: self.runs_per_state,
            t_max: self.t_max,
            seed: self.seed,
            censoring_budget: self.censoring_budget,
        };
        settings.validate(self.game()?)?;
        Ok(settings)
    }

    /// Dynamics for `simulate`: horizon `steps`, falling back to `t_max`.
    pub fn dynamics(&self) -> Result<DynamicsConfig> {
        let lambda = self.lambda.unwrap_or(0.0);
        Ok(DynamicsConfig::new(
            self.game()?,
            self.epsilon()?,
            lambda,
            self.seed,
            self.steps.unwrap_or(self.t_max),
        )?)
    }

    pub fn sweep_settings(&self) -> Result<SweepSettings> {
        let lambdas = match (&self.lambdas, self.lambda) {
            (Some(l), _) => l.clone(),
            (None, Some(l)) => vec![l],
            (None, None) => return Err(Error::config("lambdas", "required")),
        };
        let settings = SweepSettings {
            epsilon: self.epsilon()?,
            delta: self.delta,
            lambdas,
            steps: self.steps,
            burn_in: self.burn_in,
            chain: self.chain_settings()?,
            master_seed: self.seed,
        };
        settings.validate(self.game()?)?;
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Settings {
        Settings::from_toml(
            "test",
            r#"
            epsilon = 0.5
            lambdas = [0.1, 0.05]
            seed = 3
            [game]
            builtin = "coordination"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_overlay() {
        let cfg = base()
            .overlay(Settings {
                seed: Some(9),
                ..Settings::default()
            })
            .resolve()
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.epsilon, Some(0.5));
        assert_eq!(cfg.delta, DEFAULT_DELTA);
        assert_eq!(cfg.runs_per_state, DEFAULT_RUNS_PER_STATE);
        assert_eq!(cfg.game().unwrap().name(), Some("coordination"));
    }

    #[test]
    fn builtin_spec() {
        let g = parse_builtin_spec("constant:n=3,value=2").unwrap();
        assert_eq!(g.builtin.as_deref(), Some("constant"));
        assert_eq!(g.params["n"], 3.0);
        assert!(parse_builtin_spec("constant:n").is_err());
        assert!(parse_builtin_spec("constant:n=x").unwrap_err().to_string().starts_with("builtin.n"));
    }

    #[test]
    fn game_sources_are_exclusive() {
        let s = Settings::from_toml("t", "[game]\nbuiltin = \"constant\"\nplayers = 2\n").unwrap();
        assert!(s.resolve().unwrap_err().to_string().starts_with("game:"));
        let s = Settings::from_toml("t", "[game]\n").unwrap();
        assert!(s.resolve().is_err());
        let s = Settings::from_toml(
            "t",
            "[game]\nplayers = 2\nactions = [2, 2]\npayoffs = [[1,1,1,1],[1,1,1,-1]]\n",
        )
        .unwrap();
        assert!(s.resolve().unwrap_err().to_string().contains("payoffs[1][3]"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Settings::from_toml("cfg", "epsilonn = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("epsilonn"), "{err}");
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = base().resolve().unwrap();
        cfg.epsilon = Some(1.5);
        assert!(cfg.sweep_settings().unwrap_err().to_string().starts_with("epsilon"));
        cfg.epsilon = None;
        assert!(cfg.chain_settings().unwrap_err().to_string().starts_with("epsilon"));
        cfg.epsilon = Some(0.5);
        cfg.lambdas = Some(vec![0.05, 0.1]);
        assert!(cfg.sweep_settings().unwrap_err().to_string().starts_with("lambda"));
        cfg.lambdas = None;
        assert!(cfg.sweep_settings().unwrap_err().to_string().starts_with("lambdas"));
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let cfg = base().resolve().unwrap();
        let h = cfg.hash().unwrap();
        assert_eq!(h.len(), 64);

        let mut same = cfg.clone();
        same.out = PathBuf::from("elsewhere");
        same.workers = cfg.workers + 7;
        same.game = same.game.map(|g| g.with_name("renamed"));
        assert_eq!(same.hash().unwrap(), h);

        let variants: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.epsilon = Some(0.25)),
            Box::new(|c| c.lambda = Some(0.1)),
            Box::new(|c| c.lambdas = Some(vec![0.1])),
            Box::new(|c| c.delta = 1e-2),
            Box::new(|c| c.runs_per_state += 1),
            Box::new(|c| c.t_max += 1),
            Box::new(|c| c.steps = Some(10)),
            Box::new(|c| c.burn_in = Some(1)),
            Box::new(|c| c.seed += 1),
            Box::new(|c| c.runs += 1),
            Box::new(|c| c.stride += 1),
            Box::new(|c| c.censoring_budget = 0.5),
            Box::new(|c| {
                c.game = Some(builtin_game("coordination", &[("mismatch".to_owned(), 0.25)].into()).unwrap())
            }),
            Box::new(|c| c.game = None),
        ];
        for (k, change) in variants.iter().enumerate() {
            let mut c = cfg.clone();
            change(&mut c);
            assert_ne!(c.hash().unwrap(), h, "variant {k}");
        }
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("games")).unwrap();
        std::fs::write(
            dir.path().join("games/g.toml"),
            "players = 2\nactions = [2, 2]\npayoffs = [[1,1,1,1],[1,1,1,1]]\n",
        )
        .unwrap();
        let cfg_path = dir.path().join("exp.toml");
        std::fs::write(&cfg_path, "out = \"res\"\n[game]\nfile = \"games/g.toml\"\n").unwrap();
        let cfg = Settings::from_file(&cfg_path).unwrap().resolve().unwrap();
        assert_eq!(cfg.out, dir.path().join("res"));
        assert_eq!(cfg.game().unwrap().num_profiles(), 4);
    }
}

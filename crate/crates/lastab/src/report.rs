//! CSV reports.
//!
//! Each file opens with `# key: value` comment lines (tool version, config
//! hash, seed, kind and kind-specific extras) followed by a CSV table.
//! Floats are written as `{:.16e}`, which round-trips exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lastab_core::chain::{LiftedChain, SolveMethod, StationaryDistribution};
use lastab_core::dynamics::{detect_absorption, TrajectoryRecord};
use lastab_core::game::{ActionProfile, Game, PureStrategyState};
use lastab_core::occupation::{OccupationReport, SweepReport, SweepRow};

use crate::error::{Error, Result};

pub const TOOL: &str = concat!("lastab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub extra: Vec<(String, String)>,
}

impl Meta {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            kind: kind.to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_owned(), value.to_string()));
        self
    }

    fn header(&self) -> String {
        let mut s = format!(
            "# tool: {TOOL}\n# config_hash: {}\n# seed: {}\n# kind: {}\n",
            self.config_hash, self.seed, self.kind
        );
        for (k, v) in &self.extra {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads the `# key: value` lines at the top of a report.
pub fn parse_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map_while(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

struct Table {
    header: String,
    out: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(meta: &Meta, columns: &[String]) -> Self {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(columns).expect("write to memory");
        Self {
            header: meta.header(),
            out,
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.out.write_record(fields).expect("write to memory");
    }

    fn finish(self) -> String {
        let body = String::from_utf8(self.out.into_inner().expect("flush to memory")).expect("utf-8 fields");
        self.header + &body
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

struct Rows {
    context: String,
    headers: csv::StringRecord,
    records: Vec<csv::StringRecord>,
}

impl Rows {
    fn read(context: &str, text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::malformed(context, e))?.clone();
        let records = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::malformed(context, e))?;
        Ok(Self {
            context: context.to_owned(),
            headers,
            records,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::malformed(&self.context, format!("missing column `{name}`")))
    }

    fn get<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = &self.records[row][col];
        raw.parse().map_err(|_| {
            Error::malformed(
                &self.context,
                format!("line {}: bad `{}` value `{raw}`", row + 2, &self.headers[col]),
            )
        })
    }
}

fn parse_label(label: &str) -> Option<ActionProfile> {
    label
        .split('_')
        .map(|a| a.parse().ok())
        .collect::<Option<Vec<usize>>>()
        .map(ActionProfile::new)
}

pub fn chain_csv(meta: &Meta, chain: &LiftedChain) -> String {
    let mut t = Table::new(
        meta,
        &strings(&["from", "to", "from_profile", "to_profile", "count", "prob", "censored"]),
    );
    let states = chain.states();
    for (i, from) in states.iter().enumerate() {
        for (j, to) in states.iter().enumerate() {
            t.row(&[
                i.to_string(),
                j.to_string(),
                from.profile.label(),
                to.profile.label(),
                chain.count(i, j).to_string(),
                float(chain.prob(i, j)),
                chain.censored()[i].to_string(),
            ]);
        }
    }
    t.finish()
}

/// Reads a chain written by [`chain_csv`].
pub fn parse_chain_csv(context: &str, text: &str) -> Result<LiftedChain> {
    let rows = Rows::read(context, text)?;
    let [from, to, from_profile, count, prob, censored] =
        ["from", "to", "from_profile", "count", "prob", "censored"].map(|c| rows.column(c));
    let (from, to, from_profile, count, prob, censored) = (from?, to?, from_profile?, count?, prob?, censored?);
    let m = rows.records.len();
    let n = (m as f64).sqrt().round() as usize;
    if n * n != m || n == 0 {
        return Err(Error::malformed(context, format!("{m} rows do not form a square matrix")));
    }
    let mut states: Vec<Option<PureStrategyState>> = vec![None; n];
    let mut counts = vec![0u64; m];
    let mut probs = vec![0.0; m];
    let mut cens = vec![0u64; n];
    let mut seen = vec![false; m];
    for r in 0..m {
        let i: usize = rows.get(r, from)?;
        let j: usize = rows.get(r, to)?;
        if i >= n || j >= n || seen[i * n + j] {
            return Err(Error::malformed(context, format!("line {}: bad or repeated pair ({i},{j})", r + 2)));
        }
        seen[i * n + j] = true;
        counts[i * n + j] = rows.get(r, count)?;
        probs[i * n + j] = rows.get(r, prob)?;
        cens[i] = rows.get(r, censored)?;
        let profile = parse_label(&rows.records[r][from_profile])
            .ok_or_else(|| Error::malformed(context, format!("line {}: bad profile label", r + 2)))?;
        states[i] = Some(PureStrategyState { profile, index: i });
    }
    let states = states.into_iter().map(|s| s.expect("all rows seen")).collect();
    Ok(LiftedChain::from_parts(states, counts, probs, cens)?)
}

fn method_name(m: SolveMethod) -> &'static str {
    match m {
        SolveMethod::PowerIteration => "power_iteration",
        SolveMethod::DirectSolve => "direct_solve",
    }
}

pub fn stationary_meta(meta: Meta, pi: &StationaryDistribution) -> Meta {
    meta.with("unique", pi.unique)
        .with("method", method_name(pi.method))
        .with("iterations", pi.iterations)
        .with("residual", float(pi.residual))
}

pub fn stationary_csv(meta: &Meta, states: &[PureStrategyState], pi: &StationaryDistribution) -> String {
    let meta = stationary_meta(meta.clone(), pi);
    let mut t = Table::new(&meta, &strings(&["state", "profile", "pi"]));
    for (s, p) in states.iter().zip(&pi.pi) {
        t.row(&[s.index.to_string(), s.profile.label(), float(*p)]);
    }
    t.finish()
}

/// Reads `(profile label, pi)` pairs in state order.
pub fn parse_stationary_csv(context: &str, text: &str) -> Result<Vec<(String, f64)>> {
    let rows = Rows::read(context, text)?;
    let (state, profile, pi) = (rows.column("state")?, rows.column("profile")?, rows.column("pi")?);
    (0..rows.records.len())
        .map(|r| {
            let k: usize = rows.get(r, state)?;
            if k != r {
                return Err(Error::malformed(context, format!("line {}: state {k} out of order", r + 2)));
            }
            Ok((rows.records[r][profile].to_owned(), rows.get(r, pi)?))
        })
        .collect()
}

pub fn sweep_csv(meta: &Meta, report: &SweepReport) -> String {
    let labels: Vec<String> = report.chain.states().iter().map(|s| s.profile.label()).collect();
    let mut cols = strings(&["lambda", "steps", "burn_in", "delta", "mixed_mass"]);
    cols.extend(labels.iter().map(|l| format!("mass_{l}")));
    cols.extend(strings(&["tv_to_pi", "mixed_mass_se"]));
    cols.extend(labels.iter().map(|l| format!("se_{l}")));
    cols.push("mixed_nonincreasing".into());
    let meta = stationary_meta(meta.clone(), &report.pi);
    let mut t = Table::new(&meta, &cols);
    for row in &report.rows {
        let o = &row.occupation;
        let mut f = vec![
            float(o.lambda),
            o.steps.to_string(),
            o.burn_in.to_string(),
            float(o.delta),
            float(o.mixed_mass),
        ];
        f.extend(o.mass.iter().map(|&v| float(v)));
        f.push(float(row.tv_to_pi));
        f.push(float(o.mixed_mass_se));
        f.extend(o.mass_se.iter().map(|&v| float(v)));
        f.push(row.mixed_nonincreasing.to_string());
        t.row(&f);
    }
    t.finish()
}

/// Reads sweep rows; `labels` are the profile labels in state order.
pub fn parse_sweep_csv(context: &str, text: &str, labels: &[String]) -> Result<Vec<SweepRow>> {
    let rows = Rows::read(context, text)?;
    let c = |name: &str| rows.column(name);
    let (lambda, steps, burn_in, delta, mixed, tv, mixed_se, flag) = (
        c("lambda")?,
        c("steps")?,
        c("burn_in")?,
        c("delta")?,
        c("mixed_mass")?,
        c("tv_to_pi")?,
        c("mixed_mass_se")?,
        c("mixed_nonincreasing")?,
    );
    let mass: Vec<usize> = labels.iter().map(|l| c(&format!("mass_{l}"))).collect::<Result<_>>()?;
    let se: Vec<usize> = labels.iter().map(|l| c(&format!("se_{l}"))).collect::<Result<_>>()?;
    (0..rows.records.len())
        .map(|r| {
            Ok(SweepRow {
                occupation: OccupationReport {
                    lambda: rows.get(r, lambda)?,
                    mass: mass.iter().map(|&k| rows.get(r, k)).collect::<Result<_>>()?,
                    mixed_mass: rows.get(r, mixed)?,
                    mass_se: se.iter().map(|&k| rows.get(r, k)).collect::<Result<_>>()?,
                    mixed_mass_se: rows.get(r, mixed_se)?,
                    steps: rows.get(r, steps)?,
                    burn_in: rows.get(r, burn_in)?,
                    delta: rows.get(r, delta)?,
                },
                tv_to_pi: rows.get(r, tv)?,
                mixed_nonincreasing: rows.get(r, flag)?,
            })
        })
        .collect()
}

/// Sampled states of every run. `pss` names the profile when all players
/// are within `delta` of their own vertex.
pub fn trajectory_csv(meta: &Meta, game: &Game, delta: f64, records: &[TrajectoryRecord]) -> Result<String> {
    let mut cols = strings(&["run", "t"]);
    cols.extend((0..game.players()).map(|i| format!("a_{i}")));
    for (i, &m) in game.actions().iter().enumerate() {
        cols.extend((0..m).map(|j| format!("x_{i}_{j}")));
    }
    cols.push("pss".into());
    let mut t = Table::new(meta, &cols);
    for (run, rec) in records.iter().enumerate() {
        for s in &rec.samples {
            let mut f = vec![run.to_string(), s.t.to_string()];
            f.extend(s.state.profile().as_slice().iter().map(|a| a.to_string()));
            for x in s.state.strategies() {
                f.extend(x.weights().iter().map(|&w| float(w)));
            }
            f.push(
                detect_absorption(&s.state, game, delta)?
                    .map(|p| p.profile.label())
                    .unwrap_or_default(),
            );
            t.row(&f);
        }
    }
    Ok(t.finish())
}

pub fn runs_csv(meta: &Meta, records: &[TrajectoryRecord]) -> String {
    let mut t = Table::new(
        meta,
        &strings(&[
            "run",
            "steps",
            "absorbed",
            "absorbed_profile",
            "absorption_time",
            "trembles",
            "tremble_steps",
            "multi_tremble_steps",
            "renormalizations",
        ]),
    );
    for (run, r) in records.iter().enumerate() {
        t.row(&[
            run.to_string(),
            r.steps.to_string(),
            r.absorption.is_some().to_string(),
            r.absorption.as_ref().map(|a| a.state.profile.label()).unwrap_or_default(),
            r.absorption.as_ref().map(|a| a.time.to_string()).unwrap_or_default(),
            r.trembles.to_string(),
            r.tremble_steps.to_string(),
            r.multi_tremble_steps.to_string(),
            r.renormalizations.to_string(),
        ]);
    }
    t.finish()
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn emit_report(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

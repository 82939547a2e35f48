//! Scenario files, the three sweeps and CSV output.
//!
//! A scenario is a flat `key = value` file (one scenario per file, `#`
//! comments). Documented keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `M`, `K`, `C` | antennas, users, block length | 64, 40, 50 |
//! | `precoder` | registry name (`mf`, `zf`) | `zf` |
//! | `snr_db` | per-user receive SNR in dB | 10 |
//! | `rho_lo`, `rho_hi` | uniform range of correlation draws | 0.6, 0.9 |
//! | `seed` | seed for correlation draws and Monte Carlo | 1 |
//! | `delta`, `step_a`, `max_iter`, `tol` | optimizer settings | 0.05, 0.1, 50000, 1e-9 |
//! | `polish` | finish with the exact exchange pass (`true`/`false`) | `true` |
//! | `horizon` | schedule length in blocks | 10000 |
//! | `trials` | Monte Carlo trials | 100000 |
//! | `user` | user evaluated by `validate` | 0 |
//! | `log_base` | `two` or `natural` | `two` |
//! | `rho_list`, `snr_db_list` | explicit comma-separated per-user links | unset |
//!
//! Correlations are drawn once per scenario from `seed`, so every pilot
//! length and precoder in a sweep sees the same users.

use std::fmt::{self, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizer::{optimize_frequencies, optimize_pilot_length, OptimizerSettings};
use crate::precoder::PrecoderRegistry;
use crate::ratemodel::{interference_sum, rate, sinr, LogBase, RateTable, SystemConfig, UserLink};
use crate::scheduler::{build_schedule, exact_average_rate, Schedule};
use crate::simulator::validate_closed_form;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub antennas: usize,
    pub users: usize,
    pub block_len: usize,
    pub precoder: String,
    pub log_base: LogBase,
    pub snr_db: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub seed: u64,
    pub rho_list: Option<Vec<f64>>,
    pub snr_db_list: Option<Vec<f64>>,
    pub settings: OptimizerSettings,
    pub horizon: usize,
    pub trials: usize,
    pub target_user: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            antennas: 64,
            users: 40,
            block_len: 50,
            precoder: "zf".into(),
            log_base: LogBase::Two,
            snr_db: 10.0,
            rho_lo: 0.6,
            rho_hi: 0.9,
            seed: 1,
            rho_list: None,
            snr_db_list: None,
            settings: OptimizerSettings::default(),
            horizon: 10_000,
            trials: 100_000,
            target_user: 0,
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| err(format!("{key}: {e}")))?
                };
            }
            let list = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| err(format!("{key}: {e}")))
                    })
                    .collect()
            };
            match key.as_str() {
                "m" => s.antennas = num!(),
                "k" => s.users = num!(),
                "c" => s.block_len = num!(),
                "precoder" => s.precoder = value.to_ascii_lowercase(),
                "log_base" => s.log_base = value.parse()?,
                "snr_db" => s.snr_db = num!(),
                "rho_lo" => s.rho_lo = num!(),
                "rho_hi" => s.rho_hi = num!(),
                "seed" => s.seed = num!(),
                "delta" => s.settings.delta = num!(),
                "step_a" => s.settings.step = num!(),
                "max_iter" => s.settings.max_iter = num!(),
                "tol" => s.settings.tol = num!(),
                "polish" => s.settings.polish = num!(),
                "horizon" => s.horizon = num!(),
                "trials" => s.trials = num!(),
                "user" => s.target_user = num!(),
                "rho_list" => s.rho_list = Some(list()?),
                "snr_db_list" => s.snr_db_list = Some(list()?),
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.rho_lo && self.rho_lo <= self.rho_hi && self.rho_hi <= 1.0) {
            return Err(Error::config(format!(
                "need 0 <= rho_lo <= rho_hi <= 1, got [{}, {}]",
                self.rho_lo, self.rho_hi
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db must be finite"));
        }
        for (name, list) in [
            ("rho_list", &self.rho_list),
            ("snr_db_list", &self.snr_db_list),
        ] {
            if let Some(l) = list {
                if l.len() != self.users {
                    return Err(Error::config(format!(
                        "{name} has {} entries for K = {}",
                        l.len(),
                        self.users
                    )));
                }
            }
        }
        self.settings.validate()?;
        self.config()?;
        Ok(())
    }

    pub fn config(&self) -> Result<SystemConfig> {
        self.config_for(&self.precoder, self.users)
    }

    pub fn config_for(&self, precoder: &str, users: usize) -> Result<SystemConfig> {
        let precoder = PrecoderRegistry::builtin().get(precoder)?;
        Ok(
            SystemConfig::new(self.antennas, users, self.block_len, precoder)?
                .with_log_base(self.log_base),
        )
    }

    /// The scenario's users, or the first `users` of its seeded draw.
    pub fn links(&self, users: usize) -> Result<Vec<UserLink>> {
        if let Some(rhos) = &self.rho_list {
            if rhos.len() != users {
                return Err(Error::config(format!(
                    "rho_list has {} entries, need {users}",
                    rhos.len()
                )));
            }
            return rhos
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let db = self.snr_db_list.as_ref().map_or(self.snr_db, |l| l[i]);
                    UserLink::from_db(db, r)
                })
                .collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..users)
            .map(|_| {
                let rho = self.rho_lo + (self.rho_hi - self.rho_lo) * rng.random::<f64>();
                UserLink::from_db(self.snr_db, rho)
            })
            .collect()
    }

    fn echo(&self) -> String {
        format!(
            "M={} K={} C={} precoder={} snr_db={:?} rho=[{:?},{:?}] seed={} delta={:?} step_a={:?} max_iter={} tol={:?} polish={} log_base={}",
            self.antennas,
            self.users,
            self.block_len,
            self.precoder,
            self.snr_db,
            self.rho_lo,
            self.rho_hi,
            self.seed,
            self.settings.delta,
            self.settings.step,
            self.settings.max_iter,
            self.settings.tol,
            self.settings.polish,
            self.log_base,
        )
    }
}

/// One CSV value.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    fn parse(s: &str) -> Self {
        if let Ok(i) = s.parse::<i64>() {
            Cell::Int(i)
        } else if let Ok(x) = s.parse::<f64>() {
            Cell::Num(x)
        } else {
            Cell::Text(s.to_string())
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            // Debug keeps a decimal point on integral values and round-trips.
            Cell::Num(x) => write!(f, "{x:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A table with `#` metadata lines, written as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub experiment: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl SweepResult {
    fn new(experiment: &str, scenario: &Scenario, columns: &[&str]) -> Self {
        let cfg_unit = scenario.log_base.unit();
        Self {
            experiment: experiment.to_string(),
            metadata: vec![
                ("config".into(), scenario.echo()),
                ("rate_unit".into(), cfg_unit.into()),
            ],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "# agedcsi {VERSION}").unwrap();
        writeln!(out, "# experiment: {}", self.experiment).unwrap();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_string))?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut experiment = String::new();
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            match body.split_once(": ") {
                Some(("experiment", v)) => experiment = v.to_string(),
                Some((k, v)) => metadata.push((k.to_string(), v.to_string())),
                None => {}
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(Cell::parse).collect()))
            .collect::<std::result::Result<Vec<Vec<Cell>>, _>>()?;
        Ok(Self {
            experiment,
            metadata,
            columns,
            rows,
        })
    }
}

/// `R(n)` for every user and requested age.
pub fn cmd_rates(scenario: &Scenario, ages: &[usize]) -> Result<SweepResult> {
    let cfg = scenario.config()?;
    let links = scenario.links(cfg.users())?;
    let total = interference_sum(&links);
    let mut out = SweepResult::new(
        "rates",
        scenario,
        &["user", "rho", "snr", "age", "sinr", "rate"],
    );
    for (k, link) in links.iter().enumerate() {
        for &n in ages {
            out.push(vec![
                k.into(),
                link.rho.into(),
                link.snr.into(),
                n.into(),
                sinr(&cfg, link, total, n).into(),
                rate(&cfg, link, total, n).into(),
            ]);
        }
    }
    Ok(out)
}

/// Optimal frequencies against correlation for each pilot length and precoder.
pub fn cmd_sweep_rho(
    scenario: &Scenario,
    pilots: &[usize],
    precoders: &[&str],
) -> Result<SweepResult> {
    let links = scenario.links(scenario.users)?;
    let mut order: Vec<usize> = (0..links.len()).collect();
    order.sort_by(|&a, &b| links[a].rho.total_cmp(&links[b].rho).then(a.cmp(&b)));

    let points: Vec<(&str, usize)> = precoders
        .iter()
        .flat_map(|&pc| pilots.iter().map(move |&t| (pc, t)))
        .collect();
    let solved = points
        .par_iter()
        .map(|&(pc, t)| {
            let cfg = scenario.config_for(pc, scenario.users)?;
            let tables = RateTable::build_all(&cfg, &links);
            let alloc = optimize_frequencies(&cfg, &tables, t, &scenario.settings)?;
            Ok((cfg.precoder().name(), t, alloc.p))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SweepResult::new(
        "sweep-rho",
        scenario,
        &["precoder", "T", "user", "rho", "p"],
    );
    for (name, t, p) in solved {
        for &k in &order {
            out.push(vec![
                name.into(),
                t.into(),
                k.into(),
                links[k].rho.into(),
                p[k].into(),
            ]);
        }
    }
    Ok(out)
}

/// Discounted sum rate against pilot length, per SNR and precoder.
pub fn cmd_sweep_pilot(
    scenario: &Scenario,
    snr_db: &[f64],
    precoders: &[&str],
) -> Result<SweepResult> {
    let points: Vec<(f64, &str)> = snr_db
        .iter()
        .flat_map(|&s| precoders.iter().map(move |&pc| (s, pc)))
        .collect();
    let curves = points
        .par_iter()
        .map(|&(snr, pc)| {
            let scen = Scenario {
                snr_db: snr,
                snr_db_list: None,
                ..scenario.clone()
            };
            let cfg = scen.config_for(pc, scen.users)?;
            let tables = RateTable::build_all(&cfg, &scen.links(scen.users)?);
            let search = optimize_pilot_length(&cfg, &tables, &scen.settings)?;
            Ok((snr, cfg.precoder().name(), search))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SweepResult::new(
        "sweep-pilot",
        scenario,
        &["snr_db", "precoder", "T", "sum_rate", "best"],
    );
    for (snr, name, search) in curves {
        for alloc in &search.curve {
            let best = usize::from(alloc.pilots == search.best_pilots());
            out.push(vec![
                snr.into(),
                name.into(),
                alloc.pilots.into(),
                alloc.objective.into(),
                best.into(),
            ]);
        }
    }
    Ok(out)
}

/// Best pilot length and sum rate of intermittent against continuous
/// estimation as the user count grows.
pub fn cmd_sweep_users(scenario: &Scenario, user_counts: &[usize]) -> Result<SweepResult> {
    let solved = user_counts
        .par_iter()
        .map(|&k| {
            let cfg = scenario.config_for(&scenario.precoder, k)?;
            let scen = Scenario {
                users: k,
                ..scenario.clone()
            };
            let tables = RateTable::build_all(&cfg, &scen.links(k)?);
            let search = optimize_pilot_length(&cfg, &tables, &scenario.settings)?;
            // Continuous estimation spends K pilots; with K >= C nothing is left.
            let ces = if k >= cfg.block_len() {
                0.0
            } else {
                cfg.discount(k) * tables.iter().map(|t| t.rate(0)).sum::<f64>()
            };
            Ok((k, search.best_pilots(), search.best.objective, ces))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SweepResult::new(
        "sweep-users",
        scenario,
        &["K", "best_T", "ies_rate", "ces_rate"],
    );
    for (k, t, ies, ces) in solved {
        out.push(vec![k.into(), t.into(), ies.into(), ces.into()]);
    }
    Ok(out)
}

/// Monte Carlo moments against the closed form, one block of rows per age.
pub fn cmd_validate(
    scenario: &Scenario,
    ages: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    let cfg = scenario.config()?;
    let links = scenario.links(cfg.users())?;
    let mut out = SweepResult::new(
        "validate",
        scenario,
        &[
            "term",
            "empirical",
            "closed_form",
            "rel_err",
            "trials",
            "seed",
            "age",
            "user",
        ],
    );
    for &n in ages {
        let report = validate_closed_form(&cfg, &links, scenario.target_user, n, trials, seed)?;
        out.metadata
            .push((format!("redrawn_age_{n}"), report.redrawn.to_string()));
        for (term, emp, exact, err) in report.rows() {
            out.push(vec![
                term.into(),
                emp.into(),
                exact.into(),
                err.into(),
                trials.into(),
                seed.into(),
                n.into(),
                report.user.into(),
            ]);
        }
    }
    Ok(out)
}

/// Optimizes at `pilots` (or the best pilot length), realizes a schedule and
/// reports per-user statistics.
pub fn cmd_schedule(
    scenario: &Scenario,
    pilots: Option<usize>,
    horizon: usize,
    seed: u64,
) -> Result<(Schedule, SweepResult)> {
    let cfg = scenario.config()?;
    let links = scenario.links(cfg.users())?;
    let tables = RateTable::build_all(&cfg, &links);
    let alloc = match pilots {
        Some(t) => optimize_frequencies(&cfg, &tables, t, &scenario.settings)?,
        None => optimize_pilot_length(&cfg, &tables, &scenario.settings)?.best,
    };
    let schedule = build_schedule(&alloc.p, alloc.pilots, horizon, seed)?;
    let stats = exact_average_rate(&schedule, &cfg, &tables)?;

    let mut out = SweepResult::new(
        "schedule",
        scenario,
        &[
            "user",
            "rho",
            "p",
            "frequency",
            "mean_interval",
            "intervals",
            "avg_rate",
            "relaxed_rate",
        ],
    );
    out.metadata.push(("T".into(), alloc.pilots.to_string()));
    out.metadata.push(("horizon".into(), horizon.to_string()));
    out.metadata
        .push(("schedule_sum_rate".into(), format!("{:?}", stats.sum_rate)));
    out.metadata
        .push(("relaxed_sum_rate".into(), format!("{:?}", alloc.objective)));
    for k in 0..cfg.users() {
        let hist = &stats.intervals[k];
        let mean: f64 = hist.iter().map(|(g, w)| *g as f64 * w).sum();
        let desc = hist
            .iter()
            .map(|(g, w)| format!("{g}:{w:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push(vec![
            k.into(),
            links[k].rho.into(),
            alloc.p[k].into(),
            stats.frequency[k].into(),
            mean.into(),
            desc.into(),
            stats.user_rate[k].into(),
            tables[k].s(alloc.p[k])?.into(),
        ]);
    }
    Ok((schedule, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parses_documented_keys() {
        let s = Scenario::parse(
            "# fig 3\nM = 32\nK=8\nC = 20\nprecoder = MF\nsnr_db = 5\nrho_lo=0.5\nrho_hi = 0.7 # inline\nseed=9\n\
             delta=0.1\nstep_a=0.2\nmax_iter=100\ntol=1e-6\npolish=false\nhorizon=50\nlog_base=natural\n",
        )
        .unwrap();
        assert_eq!((s.antennas, s.users, s.block_len), (32, 8, 20));
        assert_eq!(s.precoder, "mf");
        assert_eq!(s.log_base, LogBase::Natural);
        assert_eq!(
            s.settings,
            OptimizerSettings {
                delta: 0.1,
                step: 0.2,
                max_iter: 100,
                tol: 1e-6,
                polish: false
            }
        );
        assert_eq!(s.horizon, 50);
        let links = s.links(8).unwrap();
        assert!(links.iter().all(|l| (0.5..=0.7).contains(&l.rho)));
    }

    #[test]
    fn scenario_rejects_bad_input() {
        assert!(matches!(
            Scenario::parse("M 64"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Scenario::parse("bogus = 1").is_err());
        assert!(Scenario::parse("rho_lo = 0.9\nrho_hi = 0.6").is_err());
        assert!(Scenario::parse("K = 64").is_err()); // ZF with M = K
        assert!(Scenario::parse("precoder = mmse").is_err());
        assert!(Scenario::parse("K = 2\nrho_list = 0.5").is_err());
        assert!(Scenario::parse("snr_db = inf").is_err());
    }

    #[test]
    fn explicit_links() {
        let s = Scenario::parse("K = 2\nrho_list = 0.5, 0.9\nsnr_db_list = 0, 10").unwrap();
        let l = s.links(2).unwrap();
        assert_eq!(l[0].rho, 0.5);
        assert!((l[0].snr - 1.0).abs() < 1e-12 && (l[1].snr - 10.0).abs() < 1e-12);
    }

    #[test]
    fn draws_are_prefix_stable() {
        let s = Scenario::default();
        let a = s.links(10).unwrap();
        let b = s.links(25).unwrap();
        assert_eq!(a[..], b[..10]);
    }

    #[test]
    fn rates_header_only_for_no_ages() {
        let s = Scenario {
            users: 3,
            ..Default::default()
        };
        let r = cmd_rates(&s, &[]).unwrap();
        assert!(r.rows.is_empty());
        let csv = r.to_csv().unwrap();
        assert!(csv.trim_end().ends_with("user,rho,snr,age,sinr,rate"));
    }

    #[test]
    fn csv_round_trip() {
        let s = Scenario {
            users: 4,
            ..Default::default()
        };
        let r = cmd_rates(&s, &[0, 1, 7]).unwrap();
        let back = SweepResult::parse_csv(&r.to_csv().unwrap()).unwrap();
        assert_eq!(back.rows, r.rows);
        assert_eq!(back.columns, r.columns);
        assert_eq!(back.experiment, "rates");
    }
}

//! From update frequencies to per-block pilot assignments.
//!
//! The relaxed optimum only fixes how often each user is estimated. For a
//! fixed frequency the best interval law puts all mass on the two integers
//! around `1/p` ([`IntervalDistribution`]). [`build_schedule`] realizes a
//! whole frequency vector with exactly `T` pilots in every block using a
//! credit rule: every block each user earns `p_k` credit, the `T` richest
//! users are estimated and pay one credit each.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ratemodel::{RateTable, SystemConfig};

/// Two-point law on adjacent update intervals with mean `1/p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalDistribution {
    pub n_low: usize,
    /// Mass on `n_low`; the rest sits on `n_low + 1`.
    pub weight_low: f64,
}

impl IntervalDistribution {
    pub fn from_frequency(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::arg(format!(
                "update frequency must lie in (0, 1], got {p}"
            )));
        }
        let mean = 1.0 / p;
        let floor = mean.floor();
        Ok(Self {
            n_low: floor as usize,
            weight_low: 1.0 - mean + floor,
        })
    }

    pub fn weight_high(&self) -> f64 {
        1.0 - self.weight_low
    }

    pub fn mean(&self) -> f64 {
        self.weight_low * self.n_low as f64 + self.weight_high() * (self.n_low + 1) as f64
    }

    /// Support points with positive mass.
    pub fn support(&self) -> Vec<(usize, f64)> {
        [
            (self.n_low, self.weight_low),
            (self.n_low + 1, self.weight_high()),
        ]
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .collect()
    }
}

/// Pilot assignment for `horizon` consecutive blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    users: usize,
    pilots: usize,
    blocks: Vec<Vec<usize>>,
}

impl Schedule {
    /// Checks that every block estimates exactly `pilots` distinct users.
    pub fn new(users: usize, pilots: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        for (i, block) in blocks.iter().enumerate() {
            let mut seen = block.clone();
            seen.sort_unstable();
            seen.dedup();
            if block.len() != pilots || seen.len() != pilots {
                return Err(Error::arg(format!(
                    "block {i} must hold {pilots} distinct users, got {block:?}"
                )));
            }
            if let Some(&u) = seen.iter().find(|&&u| u >= users) {
                return Err(Error::arg(format!("block {i} names user {u} of {users}")));
            }
        }
        Ok(Self {
            users,
            pilots,
            blocks,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn pilots(&self) -> usize {
        self.pilots
    }

    pub fn horizon(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// One line per block: the block index, then the estimated users.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, block) in self.blocks.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for u in block {
                write!(out, " {u}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, users: usize) -> Result<Self> {
        let mut blocks = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |tok: &str| {
                tok.parse::<usize>().map_err(|e| Error::Parse {
                    line: line_no + 1,
                    message: format!("'{tok}': {e}"),
                })
            };
            let mut fields = line.split_whitespace();
            let index = parse(fields.next().unwrap())?;
            if index != blocks.len() {
                return Err(Error::Parse {
                    line: line_no + 1,
                    message: format!("expected block {}, found {index}", blocks.len()),
                });
            }
            blocks.push(fields.map(parse).collect::<Result<Vec<_>>>()?);
        }
        let pilots = blocks.first().map_or(0, Vec::len);
        Self::new(users, pilots, blocks)
    }
}

/// Per-user counts and achieved rates of a schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleStats {
    pub frequency: Vec<f64>,
    /// Interval length to fraction of intervals, per user.
    pub intervals: Vec<BTreeMap<usize, f64>>,
    /// Average rate per block, before the pilot discount.
    pub user_rate: Vec<f64>,
    /// `(1 - T/C) sum_k user_rate[k]`.
    pub sum_rate: f64,
}

/// Credit schedule with per-user phases drawn from `seed`.
pub fn build_schedule(p: &[f64], pilots: usize, horizon: usize, seed: u64) -> Result<Schedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = p.iter().map(|_| rng.random::<f64>()).collect();
    build_schedule_with_phases(p, pilots, horizon, &phases)
}

/// Credit schedule with every credit starting at zero.
pub fn build_schedule_aligned(p: &[f64], pilots: usize, horizon: usize) -> Result<Schedule> {
    build_schedule_with_phases(p, pilots, horizon, &vec![0.0; p.len()])
}

/// Credit schedule; user `k` starts with credit `p_k * phases[k]`.
pub fn build_schedule_with_phases(
    p: &[f64],
    pilots: usize,
    horizon: usize,
    phases: &[f64],
) -> Result<Schedule> {
    let k = p.len();
    if pilots > k {
        return Err(Error::InfeasibleBudget {
            budget: pilots as f64,
            users: k,
        });
    }
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least one block"));
    }
    if phases.len() != k {
        return Err(Error::arg("one phase per user required"));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::arg("update frequencies must lie in [0, 1]"));
    }
    let total: f64 = p.iter().sum();
    if (total - pilots as f64).abs() > 0.5 {
        return Err(Error::arg(format!(
            "frequencies sum to {total}, far from {pilots} pilots"
        )));
    }

    let mut credit: Vec<f64> = p.iter().zip(phases).map(|(q, ph)| q * ph).collect();
    let mut order: Vec<usize> = (0..k).collect();
    let mut blocks = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        for (c, q) in credit.iter_mut().zip(p) {
            *c += q;
        }
        order.sort_by(|&a, &b| credit[b].total_cmp(&credit[a]).then(a.cmp(&b)));
        let mut chosen = order[..pilots].to_vec();
        for &u in &chosen {
            credit[u] -= 1.0;
        }
        chosen.sort_unstable();
        blocks.push(chosen);
    }
    Schedule::new(k, pilots, blocks)
}

/// Empirical frequencies and interval histograms.
///
/// The schedule is read as one period of a repeating pattern, so the gap from
/// a user's last estimation back around to its first counts as an interval.
pub fn schedule_stats(schedule: &Schedule) -> (Vec<f64>, Vec<BTreeMap<usize, f64>>) {
    let horizon = schedule.horizon();
    let mut hits = vec![Vec::new(); schedule.users()];
    for (i, block) in schedule.blocks().iter().enumerate() {
        for &u in block {
            hits[u].push(i);
        }
    }
    let frequency = hits
        .iter()
        .map(|h| h.len() as f64 / horizon as f64)
        .collect();
    let intervals = hits
        .iter()
        .map(|h| {
            let mut counts = BTreeMap::new();
            if let (Some(&first), Some(&last)) = (h.first(), h.last()) {
                for w in h.windows(2) {
                    *counts.entry(w[1] - w[0]).or_insert(0usize) += 1;
                }
                *counts.entry(horizon - last + first).or_insert(0) += 1;
            }
            let n = h.len() as f64;
            counts
                .into_iter()
                .map(|(gap, c)| (gap, c as f64 / n))
                .collect()
        })
        .collect();
    (frequency, intervals)
}

/// Walks the schedule and sums each user's rate at its current CSI age.
///
/// A user estimated in a block has age 0 during that block. Users yet to be
/// estimated contribute nothing.
pub fn exact_average_rate(
    schedule: &Schedule,
    cfg: &SystemConfig,
    tables: &[RateTable],
) -> Result<ScheduleStats> {
    if tables.len() != schedule.users() {
        return Err(Error::arg(format!(
            "{} rate tables for a schedule of {} users",
            tables.len(),
            schedule.users()
        )));
    }
    let mut age: Vec<Option<usize>> = vec![None; schedule.users()];
    let mut total = vec![0.0; schedule.users()];
    for block in schedule.blocks() {
        for &u in block {
            age[u] = Some(0);
        }
        for ((a, sum), table) in age.iter_mut().zip(total.iter_mut()).zip(tables) {
            if let Some(n) = a {
                *sum += table.rate(*n);
                *n += 1;
            }
        }
    }
    let horizon = schedule.horizon() as f64;
    let user_rate: Vec<f64> = total.into_iter().map(|s| s / horizon).collect();
    let sum_rate = cfg.discount(schedule.pilots()) * user_rate.iter().sum::<f64>();
    let (frequency, intervals) = schedule_stats(schedule);
    Ok(ScheduleStats {
        frequency,
        intervals,
        user_rate,
        sum_rate,
    })
}

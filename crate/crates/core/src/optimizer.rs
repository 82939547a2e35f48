//! Update-frequency allocation under a pilot budget.
//!
//! For a pilot length `T` the frequencies `p` live on the capped simplex
//! `{p : sum p = T, 0 <= p_k <= 1}`. The objective `(1 - T/C) sum S_k(p_k)` is
//! concave; it is maximized by normalized-gradient ascent on the smoothed
//! rates followed by Euclidean projection back onto the capped simplex.
//!
//! The smoothing shifts the maximizer by up to a window width, most visibly
//! at `p = 1`, where the window halves the slope of `S`. Unless disabled, the
//! ascent is therefore followed by an exchange pass on the exact piecewise
//! linear `S`: budget moves from the user with the flattest left slope to the
//! user with the steepest right slope, one breakpoint at a time, until no
//! exchange gains. For a separable concave objective that stopping point is
//! the exact optimum. The pilot length itself is chosen by scanning every
//! integer `T`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ratemodel::{check_delta, RateTable, SystemConfig};

/// Frequencies below this use the one-sided gradient at this point.
const MIN_GRADIENT_FREQUENCY: f64 = 1e-6;
/// Backtracking gives up once the step falls below this.
const MIN_STEP: f64 = 1e-14;
/// Distance within which a frequency counts as sitting on a breakpoint.
const BREAKPOINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings {
    /// Half-width of the smoothing windows.
    pub delta: f64,
    /// Initial step length of every iteration.
    pub step: f64,
    pub max_iter: usize,
    /// Stop once an accepted step improves the smoothed objective by less.
    pub tol: f64,
    /// Finish with the exchange pass on the unsmoothed objective.
    pub polish: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            delta: 0.05,
            step: 0.1,
            max_iter: 50_000,
            tol: 1e-9,
            polish: true,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::arg(format!(
                "step size must be positive, got {}",
                self.step
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::arg(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyAllocation {
    /// Updates per block for each user.
    pub p: Vec<f64>,
    /// Pilot symbols per block.
    pub pilots: usize,
    /// `(1 - T/C) sum S_k(p_k)` with the unsmoothed `S`.
    pub objective: f64,
    /// Gradient iterations.
    pub iterations: usize,
    pub converged: bool,
    /// Budget transfers made by the exchange pass.
    pub exchanges: usize,
}

/// Outcome of the scan over pilot lengths.
#[derive(Clone, Debug)]
pub struct PilotSearch {
    pub best: FrequencyAllocation,
    /// One allocation per `T = 0, 1, ..., min(K, C)`.
    pub curve: Vec<FrequencyAllocation>,
}

impl PilotSearch {
    pub fn best_pilots(&self) -> usize {
        self.best.pilots
    }

    /// Objective at pilot length `t`, if it was scanned.
    pub fn objective_at(&self, t: usize) -> Option<f64> {
        self.curve.get(t).map(|a| a.objective)
    }
}

/// Euclidean projection of `x` onto `{p : sum p = budget, 0 <= p_k <= 1}`.
///
/// Entries are visited in ascending order while a window `[i, j]` of free
/// entries shrinks: entries left of it sit at 0, right of it at 1. For the
/// current window the common shift `nu` makes the free entries sum to what
/// the budget leaves them. If shifting violates a bound, the end facing the
/// larger total violation is pinned; that side is always pinned at the
/// optimum because the sign of the total violation tells which way the
/// optimal shift moves.
pub fn project_capped_simplex(x: &[f64], budget: f64) -> Result<Vec<f64>> {
    let k = x.len();
    if !(budget >= 0.0 && budget <= k as f64) {
        return Err(Error::InfeasibleBudget { budget, users: k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("projection input must be finite"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let sorted: Vec<f64> = order.iter().map(|&a| x[a]).collect();

    let mut p = vec![0.0; k];
    let (mut lo, mut hi) = (0usize, k - 1);
    let mut window_sum: f64 = sorted.iter().sum();
    loop {
        let free = (hi - lo + 1) as f64;
        let ones = (k - 1 - hi) as f64;
        let nu = (budget - ones - window_sum) / free;
        if sorted[lo] + nu >= 0.0 && sorted[hi] + nu <= 1.0 {
            for slot in lo..=hi {
                p[order[slot]] = (sorted[slot] + nu).clamp(0.0, 1.0);
            }
            break;
        }
        let (mut over, mut under) = (0.0, 0.0);
        for v in &sorted[lo..=hi] {
            let y = v + nu;
            if y > 1.0 {
                over += y - 1.0;
            } else if y < 0.0 {
                under -= y;
            }
        }
        if lo == hi {
            // Only reachable through rounding at a tight budget.
            p[order[lo]] = (sorted[lo] + nu).clamp(0.0, 1.0);
            break;
        }
        if over >= under {
            p[order[hi]] = 1.0;
            window_sum -= sorted[hi];
            hi -= 1;
        } else {
            p[order[lo]] = 0.0;
            window_sum -= sorted[lo];
            lo += 1;
        }
    }

    absorb_rounding(&mut p, budget);
    Ok(p)
}

/// Pushes the residual `budget - sum p` into the largest interior entry.
fn absorb_rounding(p: &mut [f64], budget: f64) {
    let residual = budget - p.iter().sum::<f64>();
    if residual == 0.0 {
        return;
    }
    let target = p
        .iter()
        .enumerate()
        .filter(|(_, v)| {
            let moved = *v + residual;
            **v > 0.0 && **v < 1.0 && (0.0..=1.0).contains(&moved)
        })
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    if let Some(i) = target {
        p[i] += residual;
    }
}

/// Smoothed objective without the `1 - T/C` factor.
fn smoothed_total(tables: &[RateTable], p: &[f64], delta: f64) -> Result<f64> {
    tables
        .iter()
        .zip(p)
        .map(|(t, &q)| t.s_smoothed(q, delta))
        .sum()
}

/// Reported objective `(1 - T/C) sum S_k(p_k)`.
pub fn objective(
    cfg: &SystemConfig,
    tables: &[RateTable],
    p: &[f64],
    pilots: usize,
) -> Result<f64> {
    let total: f64 = tables
        .iter()
        .zip(p)
        .map(|(t, &q)| t.s(q))
        .sum::<Result<f64>>()?;
    Ok(cfg.discount(pilots) * total)
}

/// Maximizes `(1 - T/C) sum S_k(p_k)` for a fixed pilot length.
pub fn optimize_frequencies(
    cfg: &SystemConfig,
    tables: &[RateTable],
    pilots: usize,
    settings: &OptimizerSettings,
) -> Result<FrequencyAllocation> {
    optimize_frequencies_observed(cfg, tables, pilots, settings, |_, _| {})
}

/// [`optimize_frequencies`], reporting `(iteration, smoothed objective)` after
/// every accepted step.
pub fn optimize_frequencies_observed<F>(
    cfg: &SystemConfig,
    tables: &[RateTable],
    pilots: usize,
    settings: &OptimizerSettings,
    mut observe: F,
) -> Result<FrequencyAllocation>
where
    F: FnMut(usize, f64),
{
    settings.validate()?;
    let k = tables.len();
    if k == 0 {
        return Err(Error::arg("no users to allocate"));
    }
    if pilots > k {
        return Err(Error::InfeasibleBudget {
            budget: pilots as f64,
            users: k,
        });
    }

    // Both ends of the budget pin every coordinate.
    if pilots == 0 || pilots == k {
        let p = vec![if pilots == 0 { 0.0 } else { 1.0 }; k];
        let objective = objective(cfg, tables, &p, pilots)?;
        return Ok(FrequencyAllocation {
            p,
            pilots,
            objective,
            iterations: 0,
            converged: true,
            exchanges: 0,
        });
    }

    let budget = pilots as f64;
    let mut p = vec![budget / k as f64; k];
    let mut current = smoothed_total(tables, &p, settings.delta)?;
    let mut grad = vec![0.0; k];
    let mut trial = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        iterations += 1;
        for (g, (t, &q)) in grad.iter_mut().zip(tables.iter().zip(&p)) {
            *g = t.s_smoothed_prime(q.max(MIN_GRADIENT_FREQUENCY), settings.delta)?;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            converged = true;
            break;
        }

        let mut step = settings.step;
        let accepted = loop {
            for ((x, &q), &g) in trial.iter_mut().zip(&p).zip(&grad) {
                *x = q + step * g / norm;
            }
            let candidate = project_capped_simplex(&trial, budget)?;
            let value = smoothed_total(tables, &candidate, settings.delta)?;
            if value >= current {
                break Some((candidate, value));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };

        let Some((next, value)) = accepted else {
            converged = true;
            break;
        };
        let gain = value - current;
        p = next;
        current = value;
        observe(iterations, current);
        if gain < settings.tol {
            converged = true;
            break;
        }
    }

    let mut exchanges = 0;
    if settings.polish {
        let mut refined = p.clone();
        exchanges = exchange_refine(tables, &mut refined)?;
        // Every transfer gains, so this only guards against rounding.
        if objective(cfg, tables, &refined, pilots)? >= objective(cfg, tables, &p, pilots)? {
            p = refined;
        }
    }
    let objective = objective(cfg, tables, &p, pilots)?;
    Ok(FrequencyAllocation {
        p,
        pilots,
        objective,
        iterations,
        converged,
        exchanges,
    })
}

/// The linear pieces of `S` just below and just above `p`. `S` bends only at
/// the breakpoints `1 > 1/2 > ... > 1/n_max > 0`.
fn adjacent_segments(table: &RateTable, p: f64) -> Result<(Option<Segment>, Option<Segment>)> {
    let last = table.n_max().max(1);
    let point = |n: usize| 1.0 / n as f64;
    let piece = |lo: f64, hi: f64| -> Result<Segment> {
        Ok(Segment {
            lo,
            hi,
            slope: (table.s(hi)? - table.s(lo)?) / (hi - lo),
        })
    };
    let lowest = piece(0.0, point(last))?;
    if p <= BREAKPOINT_TOL {
        return Ok((None, Some(lowest)));
    }
    let x = 1.0 / p;
    let n = x.round();
    if n >= 1.0 && n <= last as f64 && (p - 1.0 / n).abs() <= BREAKPOINT_TOL {
        let n = n as usize;
        let below = if n == last {
            lowest
        } else {
            piece(point(n + 1), point(n))?
        };
        let above = if n == 1 {
            None
        } else {
            Some(piece(point(n), point(n - 1))?)
        };
        return Ok((Some(below), above));
    }
    let inside = if x > last as f64 {
        lowest
    } else {
        let n = x.floor() as usize;
        piece(point(n + 1), point(n))?
    };
    Ok((Some(inside), Some(inside)))
}

/// A linear piece of `S` on `[lo, hi]`.
#[derive(Clone, Copy, Debug)]
struct Segment {
    lo: f64,
    hi: f64,
    slope: f64,
}

/// Moves budget between users along the exact piecewise-linear `S` until the
/// steepest right slope no longer beats the flattest left slope. Returns the
/// number of transfers.
fn exchange_refine(tables: &[RateTable], p: &mut [f64]) -> Result<usize> {
    let mut transfers = 0;
    loop {
        let mut gain: Option<(usize, Segment)> = None;
        let mut give: Option<(usize, Segment)> = None;
        for (k, (table, &q)) in tables.iter().zip(p.iter()).enumerate() {
            let (below, above) = adjacent_segments(table, q)?;
            if let Some(up) = above {
                if gain.is_none_or(|(_, g)| up.slope > g.slope) {
                    gain = Some((k, up));
                }
            }
            if let Some(down) = below {
                if give.is_none_or(|(_, g)| down.slope < g.slope) {
                    give = Some((k, down));
                }
            }
        }
        let (Some((i, up)), Some((j, down))) = (gain, give) else {
            return Ok(transfers);
        };
        let margin = BREAKPOINT_TOL * up.slope.abs().max(1.0);
        if i == j || up.slope <= down.slope + margin {
            return Ok(transfers);
        }
        let amount = (up.hi - p[i]).min(p[j] - down.lo);
        if amount <= 0.0 {
            return Ok(transfers);
        }
        p[i] = if up.hi - p[i] <= amount {
            up.hi
        } else {
            p[i] + amount
        };
        p[j] = if p[j] - down.lo <= amount {
            down.lo
        } else {
            p[j] - amount
        };
        transfers += 1;
    }
}

/// Runs [`optimize_frequencies`] for every `T` in `0..=min(K, C)` and keeps
/// the best; ties go to the smaller `T`.
pub fn optimize_pilot_length(
    cfg: &SystemConfig,
    tables: &[RateTable],
    settings: &OptimizerSettings,
) -> Result<PilotSearch> {
    let top = tables.len().min(cfg.block_len());
    let curve = (0..=top)
        .into_par_iter()
        .map(|t| optimize_frequencies(cfg, tables, t, settings))
        .collect::<Result<Vec<_>>>()?;
    let mut best = &curve[0];
    for alloc in &curve[1..] {
        if alloc.objective > best.objective {
            best = alloc;
        }
    }
    Ok(PilotSearch {
        best: best.clone(),
        curve,
    })
}

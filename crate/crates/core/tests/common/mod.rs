//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use agedcsi::experiments::Scenario;
use agedcsi::{RateTable, SystemConfig, UserLink};
use rand::Rng;

/// Users with SNR in [0, 20] dB and correlation in [0.3, 0.99].
pub fn random_links<R: Rng>(rng: &mut R, count: usize) -> Vec<UserLink> {
    (0..count)
        .map(|_| {
            let db = rng.random_range(0.0..20.0);
            let rho = rng.random_range(0.3..0.99);
            UserLink::from_db(db, rho).unwrap()
        })
        .collect()
}

/// Euclidean projection onto `{p in [0,1]^K : sum p = budget}` by trying
/// every assignment of each coordinate to {0, interior, 1}.
pub fn qp_projection(x: &[f64], budget: f64) -> Vec<f64> {
    let k = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let patterns = 3usize.pow(k as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut state = vec![0u8; k];
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let ones = state.iter().filter(|&&s| s == 2).count() as f64;
        let free: Vec<usize> = (0..k).filter(|&i| state[i] == 1).collect();
        let candidate: Vec<f64> = if free.is_empty() {
            if (ones - budget).abs() > 1e-12 {
                continue;
            }
            state
                .iter()
                .map(|&s| if s == 2 { 1.0 } else { 0.0 })
                .collect()
        } else {
            let nu = (budget - ones - free.iter().map(|&i| x[i]).sum::<f64>()) / free.len() as f64;
            let p: Vec<f64> = (0..k)
                .map(|i| match state[i] {
                    0 => 0.0,
                    1 => x[i] + nu,
                    _ => 1.0,
                })
                .collect();
            if free.iter().any(|&i| p[i] < -1e-12 || p[i] > 1.0 + 1e-12) {
                continue;
            }
            p
        };
        let dist: f64 = candidate
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, candidate));
        }
    }
    best.expect("budget must be feasible").1
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact maximum of `sum_k S_k(p_k)` subject to `sum p = budget`,
/// `0 <= p <= 1`, using that each `S_k` is concave and piecewise linear
/// with breakpoints at `1/n`: fill the steepest segments first.
pub fn greedy_optimum(tables: &[RateTable], budget: f64) -> f64 {
    let mut segments = Vec::new();
    let mut base = 0.0;
    for t in tables {
        let n_max = t.n_max().max(1);
        // Breakpoints 0 < 1/n_max < ... < 1/2 < 1.
        let mut points = vec![0.0];
        points.extend((1..=n_max).rev().map(|n| 1.0 / n as f64));
        let values: Vec<f64> = points.iter().map(|&p| t.s(p).unwrap()).collect();
        base += values[0];
        for w in 0..points.len() - 1 {
            let width = points[w + 1] - points[w];
            segments.push(((values[w + 1] - values[w]) / width, width));
        }
    }
    segments.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut left = budget;
    let mut total = base;
    for (slope, width) in segments {
        if left <= 0.0 {
            break;
        }
        let take = width.min(left);
        total += slope * take;
        left -= take;
    }
    total
}

/// Largest `p * sum_n f_n G(n)` over interval distributions `f` on `{1..6}`
/// with mean `1/p`. Every support of at most three points is enumerated on
/// a `resolution` grid (the remaining weights follow from the two
/// constraints), plus all six points on a `coarse` grid.
pub fn best_interval_distribution(table: &RateTable, p: f64, resolution: f64, coarse: f64) -> f64 {
    let mean = 1.0 / p;
    let g: Vec<f64> = (0..=6).map(|n| table.cumulative(n)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut consider = |f: &[(usize, f64)]| {
        if f.iter().any(|&(_, w)| w < -1e-12) {
            return;
        }
        let mass: f64 = f.iter().map(|&(_, w)| w).sum();
        let m: f64 = f.iter().map(|&(n, w)| n as f64 * w).sum();
        if (mass - 1.0).abs() > 1e-9 || (m - mean).abs() > 1e-9 {
            return;
        }
        best = best.max(p * f.iter().map(|&(n, w)| w * g[n]).sum::<f64>());
    };

    for a in 1..=6 {
        if (a as f64 - mean).abs() < 1e-12 {
            consider(&[(a, 1.0)]);
        }
        for b in a + 1..=6 {
            // Two points: the weights are determined.
            let wb = (mean - a as f64) / (b - a) as f64;
            consider(&[(a, 1.0 - wb), (b, wb)]);
            for c in b + 1..=6 {
                let steps = (1.0 / resolution).round() as usize;
                for i in 0..=steps {
                    let wa = i as f64 * resolution;
                    // wb + wc = 1 - wa, b wb + c wc = mean - a wa.
                    let rest = 1.0 - wa;
                    let wc = (mean - a as f64 * wa - b as f64 * rest) / (c - b) as f64;
                    consider(&[(a, wa), (b, rest - wc), (c, wc)]);
                }
            }
        }
    }

    let steps = (1.0 / coarse).round() as usize;
    for i1 in 0..=steps {
        for i2 in 0..=steps - i1 {
            for i3 in 0..=steps - i1 - i2 {
                for i4 in 0..=steps - i1 - i2 - i3 {
                    let w = [i1, i2, i3, i4].map(|i| i as f64 * coarse);
                    let rest = 1.0 - w.iter().sum::<f64>();
                    let partial: f64 = w.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum();
                    // w5 + w6 = rest, 5 w5 + 6 w6 = mean - partial.
                    let w6 = mean - partial - 5.0 * rest;
                    let w5 = rest - w6;
                    consider(&[(1, w[0]), (2, w[1]), (3, w[2]), (4, w[3]), (5, w5), (6, w6)]);
                }
            }
        }
    }
    best
}

/// The default headline scenario (ZF, M=64, K=40, C=50, 10 dB,
/// correlation uniform on [0.6, 0.9]) for one seed.
pub fn headline(seed: u64) -> (Scenario, SystemConfig, Vec<RateTable>) {
    let scenario = Scenario {
        seed,
        ..Scenario::default()
    };
    let cfg = scenario.config().unwrap();
    let tables = RateTable::build_all(&cfg, &scenario.links(cfg.users()).unwrap());
    (scenario, cfg, tables)
}

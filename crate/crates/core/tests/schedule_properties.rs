mod common;

use agedcsi::optimizer::{optimize_frequencies, project_capped_simplex};
use agedcsi::scheduler::{
    build_schedule, build_schedule_aligned, exact_average_rate, schedule_stats,
};
use agedcsi::{OptimizerSettings, RateTable, Schedule, SystemConfig};
use common::headline;
use proptest::prelude::*;

fn frequencies(raw: &[f64], pilots: usize) -> Vec<f64> {
    project_capped_simplex(raw, pilots as f64).unwrap()
}

#[test]
fn empirical_frequencies_track_targets() {
    let raw = [0.9, 0.1, 0.35, 0.6, 0.2, 0.75, 0.05, 0.5, 0.45, 0.3];
    let p = frequencies(&raw, 4);
    let horizon = 10_000;
    for seed in 0..5 {
        let s = build_schedule(&p, 4, horizon, seed).unwrap();
        let (freq, _) = schedule_stats(&s);
        for (f, q) in freq.iter().zip(&p) {
            assert!(
                (f - q).abs() <= 2.0 / horizon as f64 + 1e-6,
                "seed {seed}: {f} vs {q}"
            );
        }
    }
}

#[test]
fn complementary_pair_has_two_point_intervals() {
    // One pilot shared by two users: the second user takes every block the
    // first one leaves.
    for (num, den) in [(1, 2), (2, 5), (3, 4), (9, 10), (3, 7), (1, 3), (5, 8)] {
        let p = num as f64 / den as f64;
        let horizon = 840 * den;
        let s = build_schedule_aligned(&[p, 1.0 - p], 1, horizon).unwrap();
        let (freq, hist) = schedule_stats(&s);
        assert!((freq[0] - p).abs() < 1e-12);
        let low = (1.0 / p).floor() as usize;
        assert!(
            hist[0].keys().all(|&g| g == low || g == low + 1),
            "p={p}: {:?}",
            hist[0]
        );
        let mean: f64 = hist[0].iter().map(|(g, w)| *g as f64 * w).sum();
        assert!((mean - 1.0 / p).abs() < 1e-9, "p={p}: mean {mean}");
    }
}

#[test]
fn periodic_user_earns_exactly_s_of_p() {
    let cfg = SystemConfig::named(64, 2, 50, "mf").unwrap();
    let tables = vec![
        RateTable::from_rates(vec![4.0, 3.0, 1.5, 0.5, 0.1]).unwrap(),
        RateTable::from_rates(vec![2.0, 1.0]).unwrap(),
    ];
    for period in 1..=6 {
        let horizon = 60;
        let blocks = (0..horizon)
            .map(|i| vec![usize::from(i % period != 0)])
            .collect();
        let s = Schedule::new(2, 1, blocks).unwrap();
        let stats = exact_average_rate(&s, &cfg, &tables).unwrap();
        let expected = tables[0].s(1.0 / period as f64).unwrap();
        assert!(
            (stats.user_rate[0] - expected).abs() < 1e-12,
            "period {period}"
        );
    }
}

#[test]
fn rotating_the_schedule_keeps_statistics() {
    let p = frequencies(&[0.8, 0.3, 0.55, 0.2, 0.65, 0.5], 3);
    let s = build_schedule(&p, 3, 997, 7).unwrap();
    let (freq, hist) = schedule_stats(&s);
    let mut blocks = s.blocks().to_vec();
    blocks.rotate_left(311);
    let rotated = Schedule::new(6, 3, blocks).unwrap();
    let (freq2, hist2) = schedule_stats(&rotated);
    assert_eq!(freq, freq2);
    assert_eq!(hist, hist2);
}

#[test]
fn text_round_trip() {
    let p = frequencies(&[0.8, 0.3, 0.55, 0.2], 2);
    let s = build_schedule(&p, 2, 50, 3).unwrap();
    let back = Schedule::from_text(&s.to_text(), 4).unwrap();
    assert_eq!(s, back);
    assert!(Schedule::from_text("0 1 2\n1 3", 4).is_err());
}

#[test]
fn headline_schedule_matches_relaxed_objective() {
    let (scenario, cfg, tables) = headline(1);
    let alloc = optimize_frequencies(&cfg, &tables, 23, &scenario.settings).unwrap();
    let s = build_schedule(&alloc.p, 23, 10_000, scenario.seed).unwrap();
    let stats = exact_average_rate(&s, &cfg, &tables).unwrap();
    assert!((stats.sum_rate - alloc.objective).abs() <= 0.01 * alloc.objective);
    assert!(s.blocks().iter().all(|b| b.len() == 23));
}

#[test]
fn default_settings_validate() {
    OptimizerSettings::default().validate().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_block_carries_exactly_t_pilots(
        raw in prop::collection::vec(-0.5f64..1.5, 2..12),
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
        horizon in 1usize..400,
    ) {
        let k = raw.len();
        let pilots = ((k as f64) * frac).floor() as usize;
        let p = frequencies(&raw, pilots);
        let s = build_schedule(&p, pilots, horizon, seed).unwrap();
        prop_assert_eq!(s.horizon(), horizon);
        for block in s.blocks() {
            prop_assert_eq!(block.len(), pilots);
            prop_assert!(block.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(block.iter().all(|&u| u < k));
        }
    }

    #[test]
    fn counts_stay_within_one_of_target(
        raw in prop::collection::vec(0.0f64..1.0, 2..10),
        seed in any::<u64>(),
    ) {
        let k = raw.len();
        let pilots = k / 2;
        let p = frequencies(&raw, pilots);
        let horizon = 500;
        let s = build_schedule(&p, pilots, horizon, seed).unwrap();
        let (freq, _) = schedule_stats(&s);
        for (f, q) in freq.iter().zip(&p) {
            prop_assert!((f - q).abs() * horizon as f64 <= 2.0 + 1e-6);
        }
    }
}

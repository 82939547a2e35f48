use agedcsi::experiments::{
    cmd_sweep_pilot, cmd_sweep_rho, cmd_sweep_users, Scenario, SweepResult,
};

fn values(table: &SweepResult, column: &str) -> Vec<f64> {
    let c = table.column(column).unwrap();
    table.rows.iter().map(|r| r[c].as_f64().unwrap()).collect()
}

fn texts(table: &SweepResult, column: &str) -> Vec<String> {
    let c = table.column(column).unwrap();
    table.rows.iter().map(|r| r[c].to_string()).collect()
}

fn best_rate(table: &SweepResult, snr: f64, precoder: &str) -> f64 {
    let (s, pc, rate) = (
        values(table, "snr_db"),
        texts(table, "precoder"),
        values(table, "sum_rate"),
    );
    (0..rate.len())
        .filter(|&i| s[i] == snr && pc[i] == precoder)
        .map(|i| rate[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn zf_wins_at_high_snr_and_mf_at_low_snr() {
    // With 40 users the curves cross between -15 and -10 dB.
    let table = cmd_sweep_pilot(&Scenario::default(), &[-20.0, 20.0], &["mf", "zf"]).unwrap();
    assert!(best_rate(&table, -20.0, "mf") > best_rate(&table, -20.0, "zf"));
    assert!(best_rate(&table, 20.0, "zf") > best_rate(&table, 20.0, "mf"));
    // Exactly one best row per curve, and the T = 0 row is zero.
    let best = values(&table, "best");
    assert_eq!(best.iter().filter(|&&b| b == 1.0).count(), 4);
    let (t, rate) = (values(&table, "T"), values(&table, "sum_rate"));
    assert!((0..t.len())
        .filter(|&i| t[i] == 0.0)
        .all(|i| rate[i] == 0.0));
}

#[test]
fn zf_spends_more_pilots_than_mf() {
    let table = cmd_sweep_pilot(&Scenario::default(), &[10.0], &["mf", "zf"]).unwrap();
    let (pc, t, best) = (
        texts(&table, "precoder"),
        values(&table, "T"),
        values(&table, "best"),
    );
    let pick = |name: &str| {
        (0..t.len())
            .find(|&i| pc[i] == name && best[i] == 1.0)
            .map(|i| t[i])
            .unwrap()
    };
    assert!(pick("zf") > pick("mf"));
}

#[test]
fn full_budget_estimates_everyone_every_block() {
    let scenario = Scenario {
        users: 10,
        ..Scenario::default()
    };
    let table = cmd_sweep_rho(&scenario, &[10], &["mf", "zf"]).unwrap();
    assert_eq!(table.rows.len(), 20);
    assert!(values(&table, "p").iter().all(|&p| p == 1.0));
}

#[test]
fn sweep_rho_rows_are_sorted_by_correlation() {
    let table = cmd_sweep_rho(&Scenario::default(), &[5], &["zf"]).unwrap();
    let rho = values(&table, "rho");
    assert!(rho.windows(2).all(|w| w[0] <= w[1]));
    let p = values(&table, "p");
    assert!((p.iter().sum::<f64>() - 5.0).abs() < 1e-9);
}

#[test]
fn intermittent_rate_rises_then_falls_with_load() {
    let counts: Vec<usize> = (1..=10).map(|i| 5 * i).collect();
    let table = cmd_sweep_users(&Scenario::default(), &counts).unwrap();
    let ies = values(&table, "ies_rate");
    let peak = ies
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert!(
        peak > 0 && peak < ies.len() - 1,
        "peak at index {peak}: {ies:?}"
    );
    assert!(ies[0] < ies[peak] && ies[ies.len() - 1] < ies[peak]);
    // Pilot length grows far slower than the user count.
    let best_t = values(&table, "best_T");
    assert!(best_t[best_t.len() - 1] - best_t[0] < 0.75 * (50.0 - 5.0));
    assert_eq!(values(&table, "ces_rate").last(), Some(&0.0));
}

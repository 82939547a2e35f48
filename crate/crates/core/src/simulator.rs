//! Monte Carlo check of the closed-form aged-CSI SINR.
//!
//! Each trial draws a fresh channel estimate, ages the evaluated user's true
//! channel by `n` Gauss-Markov steps, builds the precoder from the stale
//! estimate and records the effective gains. The expectations in the SINR
//! lower bound are then replaced by sample moments and compared against the
//! precoder's closed form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::precoder::{MatchedFilter, Precoder, SinrTerms, ZeroForcing};
use crate::ratemodel::{decay, interference_sum, SystemConfig, UserLink};

/// Trials per reduction chunk. Fixed so results do not depend on threading.
const CHUNK: usize = 1024;
/// Redraws allowed for one trial before an ill-conditioned estimate is fatal.
const MAX_REDRAWS: usize = 64;

/// `K x M` complex channel gains, one row per user.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix(DMatrix<Complex64>);

impl ChannelMatrix {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    /// I.i.d. `CN(0, 1)` entries.
    pub fn random<R: Rng + ?Sized>(users: usize, antennas: usize, rng: &mut R) -> Self {
        Self(DMatrix::from_fn(users, antennas, |_, _| {
            complex_normal(rng)
        }))
    }

    pub fn users(&self) -> usize {
        self.0.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// User `k`'s channel as a column vector.
    pub fn row(&self, k: usize) -> DVector<Complex64> {
        self.0.row(k).transpose()
    }
}

/// Circularly-symmetric complex normal with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rho^n h + sqrt(1 - rho^(2n)) e` with fresh innovation `e`.
pub fn evolve_channel<R: Rng + ?Sized>(
    h: &DVector<Complex64>,
    rho: f64,
    n: usize,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg(format!("rho must lie in [0, 1], got {rho}")));
    }
    if n == 0 {
        return Ok(h.clone());
    }
    let d = decay(rho, n);
    let keep = d.sqrt();
    let fresh = (1.0 - d).max(0.0).sqrt();
    Ok(h.map(|z| z * keep + complex_normal(rng) * fresh))
}

pub fn mf_precoder(estimate: &ChannelMatrix) -> DMatrix<Complex64> {
    MatchedFilter
        .build(estimate)
        .expect("matched filter is always defined")
}

pub fn zf_precoder(estimate: &ChannelMatrix) -> Result<DMatrix<Complex64>> {
    ZeroForcing.build(estimate)
}

/// Empirical against closed-form SINR moments for one user and CSI age.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub precoder: String,
    pub user: usize,
    pub age: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trials redrawn because the Gram matrix was ill-conditioned.
    pub redrawn: usize,
    pub empirical: SinrTerms,
    pub closed_form: SinrTerms,
    /// Standard errors of the empirical terms.
    pub standard_error: SinrTerms,
    pub empirical_sinr: f64,
    pub closed_form_sinr: f64,
}

impl MonteCarloReport {
    pub fn sinr_rel_err(&self) -> f64 {
        rel_err(self.empirical_sinr, self.closed_form_sinr)
    }

    /// `(term, empirical, closed_form, rel_err)` rows. Terms whose closed
    /// form is zero report the absolute error instead.
    pub fn rows(&self) -> Vec<(&'static str, f64, f64, f64)> {
        let (e, c) = (&self.empirical, &self.closed_form);
        vec![
            ("signal", e.signal, c.signal, rel_err(e.signal, c.signal)),
            (
                "variance",
                e.variance,
                c.variance,
                rel_err(e.variance, c.variance),
            ),
            (
                "interference",
                e.interference,
                c.interference,
                rel_err(e.interference, c.interference),
            ),
            (
                "sinr",
                self.empirical_sinr,
                self.closed_form_sinr,
                self.sinr_rel_err(),
            ),
        ]
    }
}

fn rel_err(empirical: f64, exact: f64) -> f64 {
    let diff = (empirical - exact).abs();
    if exact == 0.0 {
        diff
    } else {
        diff / exact.abs()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: usize,
    redrawn: usize,
    gain: Complex64,
    power: f64,
    power_sq: f64,
    interference: f64,
    interference_sq: f64,
}

impl Moments {
    fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        self.redrawn += o.redrawn;
        self.gain += o.gain;
        self.power += o.power;
        self.power_sq += o.power_sq;
        self.interference += o.interference;
        self.interference_sq += o.interference_sq;
        self
    }
}

/// Estimates every SINR moment for `target` with CSI `age` blocks old.
pub fn validate_closed_form(
    cfg: &SystemConfig,
    users: &[UserLink],
    target: usize,
    age: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::arg("at least one trial required"));
    }
    if users.len() != cfg.users() {
        return Err(Error::config(format!(
            "{} user links for K = {}",
            users.len(),
            cfg.users()
        )));
    }
    if target >= users.len() {
        return Err(Error::arg(format!("target user {target} out of range")));
    }
    let precoder = cfg.precoder().as_ref();
    let (k, m) = (cfg.users(), cfg.antennas());
    let link = users[target];

    let chunks = trials.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::default();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial as u64);
                let mut attempts = 0;
                let (gains, redrawn) = loop {
                    let estimate = ChannelMatrix::random(k, m, &mut rng);
                    let channel = evolve_channel(&estimate.row(target), link.rho, age, &mut rng)?;
                    match precoder.effective_gains(&estimate, &channel) {
                        Ok(g) => break (g, attempts),
                        Err(Error::Singular { .. }) if attempts < MAX_REDRAWS => attempts += 1,
                        Err(e) => return Err(e),
                    }
                };
                let x = gains[target];
                let power = x.norm_sqr();
                let interference: f64 = users
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != target)
                    .map(|(i, u)| u.snr * gains[i].norm_sqr())
                    .sum();
                acc.n += 1;
                acc.redrawn += redrawn;
                acc.gain += x;
                acc.power += power;
                acc.power_sq += power * power;
                acc.interference += interference;
                acc.interference_sq += interference * interference;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = partial.iter().fold(Moments::default(), |a, b| a.merge(b));

    let n = total.n as f64;
    let mean_gain = total.gain / n;
    let mean_power = total.power / n;
    let mean_int = total.interference / n;
    let spread = (mean_power - mean_gain.norm_sqr()).max(0.0);
    let empirical = SinrTerms {
        signal: link.snr * mean_gain.norm_sqr(),
        variance: link.snr * (mean_power - mean_gain.norm_sqr()),
        interference: mean_int,
    };
    let standard_error = SinrTerms {
        signal: link.snr * 2.0 * mean_gain.norm() * (spread / n).sqrt(),
        variance: link.snr * ((total.power_sq / n - mean_power * mean_power).max(0.0) / n).sqrt(),
        interference: ((total.interference_sq / n - mean_int * mean_int).max(0.0) / n).sqrt(),
    };
    let all = interference_sum(users);
    let d = decay(link.rho, age);
    Ok(MonteCarloReport {
        precoder: precoder.name().to_string(),
        user: target,
        age,
        trials,
        seed,
        redrawn: total.redrawn,
        empirical,
        closed_form: precoder.moments(m, k, link.snr, all - link.snr, d),
        standard_error,
        empirical_sinr: empirical.sinr(),
        closed_form_sinr: precoder.sinr(m, k, link.snr, all, d),
    })
}

/// Lag-`0..=max_lag` correlation of a scalar Gauss-Markov process, from
/// `samples` independent chains started in the stationary law.
pub fn autocorrelation_check(
    rho: f64,
    max_lag: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg(format!("rho must lie in [0, 1], got {rho}")));
    }
    if samples == 0 {
        return Err(Error::arg("at least one sample required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = (1.0 - rho * rho).sqrt();
    let mut cross = vec![0.0; max_lag + 1];
    for _ in 0..samples {
        let start = complex_normal(&mut rng);
        let mut h = start;
        cross[0] += start.norm_sqr();
        for lag in cross.iter_mut().skip(1) {
            h = h * rho + complex_normal(&mut rng) * fresh;
            *lag += (start.conj() * h).re;
        }
    }
    let power = cross[0];
    Ok(cross.into_iter().map(|c| c / power).collect())
}

//! Downlink rate as a function of CSI age.
//!
//! A user whose channel estimate is `n` blocks old sees an SINR that decays
//! with `rho^(2n)`; [`RateTable`] memoizes the resulting rates `R(n)` and
//! their prefix sums `G(n)`, the total rate collected over an update interval
//! of `n` blocks. `G` is extended piecewise linearly to real arguments, and
//! the per-user rate at update frequency `p` is `S(p) = p G(1/p)`.
//!
//! `G` has kinks at every positive integer. The smoothed variants replace it
//! by a parabola on `(n - delta, n + delta)`, giving a concave, continuously
//! differentiable function for gradient methods.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::precoder::{Precoder, PrecoderRegistry};

/// Rates below this end the table.
pub const TAIL_EPSILON: f64 = 1e-9;
/// Largest age tabulated; users with `rho = 1` never decay.
pub const MAX_TABLE_AGE: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

impl LogBase {
    pub fn log1p(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.ln_1p() / std::f64::consts::LN_2,
            LogBase::Natural => x.ln_1p(),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            LogBase::Two => "bits/channel-use",
            LogBase::Natural => "nats/channel-use",
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "two" | "2" | "bits" => Ok(LogBase::Two),
            "natural" | "e" | "nats" => Ok(LogBase::Natural),
            other => Err(Error::arg(format!("unknown log base '{other}'"))),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Two => "two",
            LogBase::Natural => "natural",
        })
    }
}

/// Global deterministic system parameters.
#[derive(Clone, Debug)]
pub struct SystemConfig {
    antennas: usize,
    users: usize,
    block_len: usize,
    precoder: Arc<dyn Precoder>,
    log_base: LogBase,
}

impl SystemConfig {
    pub fn new(
        antennas: usize,
        users: usize,
        block_len: usize,
        precoder: Arc<dyn Precoder>,
    ) -> Result<Self> {
        if antennas == 0 || users == 0 || block_len == 0 {
            return Err(Error::config(format!(
                "M, K and C must be positive (M={antennas}, K={users}, C={block_len})"
            )));
        }
        precoder.check_dimensions(antennas, users)?;
        Ok(Self {
            antennas,
            users,
            block_len,
            precoder,
            log_base: LogBase::Two,
        })
    }

    /// Looks the precoder up in the builtin registry.
    pub fn named(antennas: usize, users: usize, block_len: usize, precoder: &str) -> Result<Self> {
        Self::new(
            antennas,
            users,
            block_len,
            PrecoderRegistry::builtin().get(precoder)?,
        )
    }

    pub fn with_log_base(mut self, log_base: LogBase) -> Self {
        self.log_base = log_base;
        self
    }

    /// Same system with a different user count.
    pub fn with_users(&self, users: usize) -> Result<Self> {
        Ok(
            Self::new(self.antennas, users, self.block_len, self.precoder.clone())?
                .with_log_base(self.log_base),
        )
    }

    /// Same system with a different precoder.
    pub fn with_precoder(&self, precoder: Arc<dyn Precoder>) -> Result<Self> {
        Ok(
            Self::new(self.antennas, self.users, self.block_len, precoder)?
                .with_log_base(self.log_base),
        )
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn precoder(&self) -> &Arc<dyn Precoder> {
        &self.precoder
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    /// Fraction of the block left for data after `pilots` pilot symbols.
    pub fn discount(&self, pilots: usize) -> f64 {
        1.0 - pilots as f64 / self.block_len as f64
    }
}

/// Per-user link: linear receive SNR and block-to-block channel correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserLink {
    pub snr: f64,
    pub rho: f64,
}

impl UserLink {
    pub fn new(snr: f64, rho: f64) -> Result<Self> {
        if !(snr >= 0.0 && snr.is_finite()) {
            return Err(Error::arg(format!(
                "snr must be finite and nonnegative, got {snr}"
            )));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::arg(format!("rho must lie in [0, 1], got {rho}")));
        }
        Ok(Self { snr, rho })
    }

    pub fn from_db(snr_db: f64, rho: f64) -> Result<Self> {
        Self::new(db_to_linear(snr_db), rho)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// SNR sum over all users; the only way other users enter anyone's SINR.
pub fn interference_sum(users: &[UserLink]) -> f64 {
    users.iter().map(|u| u.snr).sum()
}

/// `rho^(2n)`.
pub fn decay(rho: f64, age: usize) -> f64 {
    match i32::try_from(age) {
        Ok(n) if n <= i32::MAX / 2 => rho.powi(2 * n),
        _ => rho.powf(2.0 * age as f64),
    }
}

/// Closed-form SINR of `user` when its CSI is `age` blocks old.
pub fn sinr(cfg: &SystemConfig, user: &UserLink, interference_sum: f64, age: usize) -> f64 {
    cfg.precoder.sinr(
        cfg.antennas,
        cfg.users,
        user.snr,
        interference_sum,
        decay(user.rho, age),
    )
}

/// `log(1 + sinr)` in the configured base.
pub fn rate(cfg: &SystemConfig, user: &UserLink, interference_sum: f64, age: usize) -> f64 {
    cfg.log_base.log1p(sinr(cfg, user, interference_sum, age))
}

/// Memoized `R(0..=N)` and `G(0..=N+1)` for one user.
///
/// `N` is the first age whose rate drops below [`TAIL_EPSILON`], capped at
/// [`MAX_TABLE_AGE`]. Past `N` the rate is held at `R(N)`.
#[derive(Clone, Debug)]
pub struct RateTable {
    user: Option<UserLink>,
    rates: Vec<f64>,
    prefix: Vec<f64>,
}

impl RateTable {
    pub fn build(cfg: &SystemConfig, user: &UserLink, interference_sum: f64) -> Self {
        let mut rates = Vec::new();
        for age in 0..=MAX_TABLE_AGE {
            let r = rate(cfg, user, interference_sum, age);
            rates.push(r);
            if age >= 1 && r < TAIL_EPSILON {
                break;
            }
        }
        Self::assemble(Some(*user), rates)
    }

    /// Tables for every user of a scenario.
    pub fn build_all(cfg: &SystemConfig, users: &[UserLink]) -> Vec<Self> {
        let total = interference_sum(users);
        users.iter().map(|u| Self::build(cfg, u, total)).collect()
    }

    /// Table from explicit rates, which must be nonnegative and non-increasing.
    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::arg("rate table needs at least R(0)"));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::arg("rates must be finite and nonnegative"));
        }
        if rates.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::arg("rates must be non-increasing in age"));
        }
        Ok(Self::assemble(None, rates))
    }

    fn assemble(user: Option<UserLink>, rates: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(rates.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for r in &rates {
            acc += r;
            prefix.push(acc);
        }
        Self {
            user,
            rates,
            prefix,
        }
    }

    pub fn user(&self) -> Option<&UserLink> {
        self.user.as_ref()
    }

    /// Tail cutoff `N`.
    pub fn n_max(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `R(age)`, held constant past the tail cutoff.
    pub fn rate(&self, age: usize) -> f64 {
        self.rates[age.min(self.n_max())]
    }

    /// `G(n)` at integer `n`.
    pub fn cumulative(&self, n: usize) -> f64 {
        match self.prefix.get(n) {
            Some(g) => *g,
            None => {
                let last = self.prefix.len() - 1;
                self.prefix[last] + (n - last) as f64 * self.rate(self.n_max())
            }
        }
    }

    /// Piecewise-linear extension of `G` to `x >= 0`.
    pub fn g(&self, x: f64) -> Result<f64> {
        check_nonnegative(x)?;
        Ok(self.g_unchecked(x))
    }

    fn g_unchecked(&self, x: f64) -> f64 {
        let n = x.floor();
        let whole = n as usize;
        self.cumulative(whole) + (x - n) * self.rate(whole)
    }

    /// `S(p) = p G(1/p)`, with `S(0) = 0`.
    pub fn s(&self, p: f64) -> Result<f64> {
        check_frequency(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(p * self.g_unchecked(1.0 / p))
    }

    /// Smoothed `G`: a parabola on every window `(n - delta, n + delta)`.
    pub fn g_smoothed(&self, x: f64, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        check_nonnegative(x)?;
        Ok(self.g_smoothed_unchecked(x, delta))
    }

    fn g_smoothed_unchecked(&self, x: f64, delta: f64) -> f64 {
        match self.window(x, delta) {
            Some((n, d)) => {
                let (hi, lo) = (self.rate(n - 1), self.rate(n));
                let step = lo - hi;
                step / (4.0 * delta) * d * d
                    + 0.5 * (lo + hi) * d
                    + self.cumulative(n)
                    + 0.25 * delta * step
            }
            None => self.g_unchecked(x),
        }
    }

    /// Derivative of [`RateTable::g_smoothed`].
    pub fn g_smoothed_prime(&self, x: f64, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        check_nonnegative(x)?;
        Ok(self.g_smoothed_prime_unchecked(x, delta))
    }

    fn g_smoothed_prime_unchecked(&self, x: f64, delta: f64) -> f64 {
        match self.window(x, delta) {
            Some((n, d)) => {
                let (hi, lo) = (self.rate(n - 1), self.rate(n));
                (lo - hi) / (2.0 * delta) * d + 0.5 * (lo + hi)
            }
            None => self.rate(x.floor() as usize),
        }
    }

    /// `p Ĝ(1/p)`, with value 0 at `p = 0`.
    pub fn s_smoothed(&self, p: f64, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        check_frequency(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(p * self.g_smoothed_unchecked(1.0 / p, delta))
    }

    /// `Ŝ'(p) = Ĝ(1/p) - Ĝ'(1/p) / p`, defined for `0 < p <= 1`.
    pub fn s_smoothed_prime(&self, p: f64, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::arg(format!("derivative needs 0 < p <= 1, got {p}")));
        }
        let x = 1.0 / p;
        Ok(self.g_smoothed_unchecked(x, delta) - x * self.g_smoothed_prime_unchecked(x, delta))
    }

    /// Nearest positive integer `n` with `|x - n| < delta`, and `x - n`.
    fn window(&self, x: f64, delta: f64) -> Option<(usize, f64)> {
        let n = x.round();
        let d = x - n;
        (n >= 1.0 && d.abs() < delta).then_some((n as usize, d))
    }
}

fn check_nonnegative(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("expected a finite x >= 0, got {x}")))
    }
}

fn check_frequency(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "update frequency must lie in [0, 1], got {p}"
        )))
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "smoothing width must lie in (0, 1/2), got {delta}"
        )))
    }
}

//! Linear precoders as interchangeable strategies.
//!
//! Each precoder knows two things: the closed-form moments of the SINR lower
//! bound when its CSI is `n` blocks old, and how to build the actual precoding
//! matrix from a channel estimate for simulation. Strategies are registered by
//! name in a [`PrecoderRegistry`] and selected at runtime from scenario files
//! or the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::simulator::ChannelMatrix;

/// Gram matrices whose condition estimate exceeds this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// The three SNR-weighted moment terms of the SINR lower bound.
///
/// `signal` is `snr |E h^T v|^2`, `variance` is `snr (E|h^T v|^2 - |E h^T v|^2)`
/// and `interference` is `sum_{i != k} snr_i E|h_k^T v_i|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrTerms {
    pub signal: f64,
    pub variance: f64,
    pub interference: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.signal / (1.0 + self.variance + self.interference)
    }
}

/// A linear downlink precoder.
///
/// `decay` arguments are `rho^(2n)` for a CSI age of `n` blocks.
pub trait Precoder: fmt::Debug + Send + Sync {
    /// Registry key, lower case.
    fn name(&self) -> &'static str;

    /// Rejects antenna/user counts for which the precoder is undefined.
    fn check_dimensions(&self, antennas: usize, users: usize) -> Result<()>;

    /// Closed-form moment terms. `others_snr` is the SNR sum over all users
    /// except the one being evaluated.
    fn moments(
        &self,
        antennas: usize,
        users: usize,
        snr: f64,
        others_snr: f64,
        decay: f64,
    ) -> SinrTerms;

    /// Closed-form SINR. `interference_sum` is the SNR sum over all users,
    /// the evaluated user included.
    fn sinr(
        &self,
        antennas: usize,
        users: usize,
        snr: f64,
        interference_sum: f64,
        decay: f64,
    ) -> f64;

    /// Builds the `M x K` precoding matrix whose column `k` serves user `k`.
    fn build(&self, estimate: &ChannelMatrix) -> Result<DMatrix<Complex64>>;

    /// Effective gains `h^T v_i` for every column `i`, where `h` is one
    /// user's true channel row.
    fn effective_gains(
        &self,
        estimate: &ChannelMatrix,
        channel: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>> {
        let v = self.build(estimate)?;
        Ok(v.tr_mul(channel))
    }
}

/// Matched filter: `v_k = conj(h_k) / sqrt(M)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MatchedFilter;

impl Precoder for MatchedFilter {
    fn name(&self) -> &'static str {
        "mf"
    }

    fn check_dimensions(&self, antennas: usize, users: usize) -> Result<()> {
        if antennas == 0 || users == 0 {
            return Err(Error::config("MF needs at least one antenna and one user"));
        }
        Ok(())
    }

    fn moments(
        &self,
        antennas: usize,
        _users: usize,
        snr: f64,
        others_snr: f64,
        decay: f64,
    ) -> SinrTerms {
        SinrTerms {
            signal: snr * antennas as f64 * decay,
            variance: snr,
            interference: others_snr,
        }
    }

    fn sinr(
        &self,
        antennas: usize,
        _users: usize,
        snr: f64,
        interference_sum: f64,
        decay: f64,
    ) -> f64 {
        snr * antennas as f64 * decay / (1.0 + interference_sum)
    }

    fn build(&self, estimate: &ChannelMatrix) -> Result<DMatrix<Complex64>> {
        let scale = 1.0 / (estimate.antennas() as f64).sqrt();
        Ok(estimate.as_matrix().adjoint() * Complex64::new(scale, 0.0))
    }

    fn effective_gains(
        &self,
        estimate: &ChannelMatrix,
        channel: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>> {
        // h^T conj(h_i) for every row i of the estimate.
        let scale = 1.0 / (estimate.antennas() as f64).sqrt();
        let a = estimate.as_matrix();
        let mut out = DVector::zeros(a.nrows());
        for m in 0..a.ncols() {
            let h = channel[m];
            for i in 0..a.nrows() {
                out[i] += h * a[(i, m)].conj();
            }
        }
        Ok(out * Complex64::new(scale, 0.0))
    }
}

/// Zero forcing: `V = conj(H) (H^T conj(H))^{-1} sqrt(M - K)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroForcing;

impl ZeroForcing {
    fn factor(
        estimate: &ChannelMatrix,
    ) -> Result<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
        let lu = gram(estimate.as_matrix()).lu();
        let condition = pivot_condition(&lu);
        if condition.is_nan() || condition > CONDITION_LIMIT {
            return Err(Error::Singular { condition });
        }
        Ok(lu)
    }

    fn gain(estimate: &ChannelMatrix) -> f64 {
        ((estimate.antennas() - estimate.users()) as f64).sqrt()
    }
}

impl Precoder for ZeroForcing {
    fn name(&self) -> &'static str {
        "zf"
    }

    fn check_dimensions(&self, antennas: usize, users: usize) -> Result<()> {
        if users == 0 {
            return Err(Error::config("ZF needs at least one user"));
        }
        if antennas <= users {
            return Err(Error::config(format!(
                "ZF needs more antennas than users (M={antennas}, K={users})"
            )));
        }
        Ok(())
    }

    fn moments(
        &self,
        antennas: usize,
        users: usize,
        snr: f64,
        others_snr: f64,
        decay: f64,
    ) -> SinrTerms {
        let stale = 1.0 - decay;
        SinrTerms {
            signal: snr * (antennas - users) as f64 * decay,
            variance: snr * stale,
            interference: stale * others_snr,
        }
    }

    fn sinr(
        &self,
        antennas: usize,
        users: usize,
        snr: f64,
        interference_sum: f64,
        decay: f64,
    ) -> f64 {
        snr * (antennas - users) as f64 * decay / (1.0 + (1.0 - decay) * interference_sum)
    }

    fn build(&self, estimate: &ChannelMatrix) -> Result<DMatrix<Complex64>> {
        self.check_dimensions(estimate.antennas(), estimate.users())?;
        let lu = Self::factor(estimate)?;
        // The Gram matrix is Hermitian, so (G^{-1} A)^H = A^H G^{-1}.
        let x = lu.solve(estimate.as_matrix()).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        Ok(x.adjoint() * Complex64::new(Self::gain(estimate), 0.0))
    }

    fn effective_gains(
        &self,
        estimate: &ChannelMatrix,
        channel: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>> {
        self.check_dimensions(estimate.antennas(), estimate.users())?;
        let lu = Self::factor(estimate)?;
        // h^T A^H G^{-1} = conj(G^{-1} A conj(h)) for Hermitian G.
        let rhs = estimate.as_matrix() * channel.map(|z| z.conj());
        let y = lu.solve(&rhs).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        Ok(y.map(|z| z.conj() * Self::gain(estimate)))
    }
}

/// `A A^H` for a `K x M` matrix, filled by rank-one updates over antennas.
fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = a.nrows();
    let mut g = DMatrix::<Complex64>::zeros(k, k);
    for m in 0..a.ncols() {
        let col = a.column(m);
        for j in 0..k {
            let c = col[j].conj();
            for i in j..k {
                g[(i, j)] += col[i] * c;
            }
        }
    }
    for j in 0..k {
        g[(j, j)].im = 0.0;
        for i in j + 1..k {
            g[(j, i)] = g[(i, j)].conj();
        }
    }
    g
}

fn pivot_condition(lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..u.nrows().min(u.ncols()) {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Name-keyed set of precoder strategies.
#[derive(Clone, Default)]
pub struct PrecoderRegistry {
    entries: BTreeMap<String, Arc<dyn Precoder>>,
}

impl PrecoderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding [`MatchedFilter`] and [`ZeroForcing`].
    pub fn builtin() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(MatchedFilter));
        reg.register(Arc::new(ZeroForcing));
        reg
    }

    /// Adds a strategy under its own name, returning any strategy it replaced.
    pub fn register(&mut self, precoder: Arc<dyn Precoder>) -> Option<Arc<dyn Precoder>> {
        self.entries
            .insert(precoder.name().to_ascii_lowercase(), precoder)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Precoder>> {
        self.entries
            .get(&name.trim().to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| Error::UnknownPrecoder(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl fmt::Debug for PrecoderRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

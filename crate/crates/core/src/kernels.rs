//! Covariance kernels R(s,t) = Cov(Z(s), Z(t)) for the loss-rate process.
//!
//! The family set is closed: fractional Brownian motion, Brownian motion,
//! Ornstein-Uhlenbeck, the Slepian process and the scaled Brownian motion
//! B(t)/√t. All of them are centred with nonnegative covariance, which is
//! what [`check_a1`] verifies numerically on a grid.

use std::fmt;

use crate::error::{domain, Result};

/// Kernel family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// Standard fractional Brownian motion with Hurst index `hurst`.
    ///
    /// `hurst = 1` is admitted as the degenerate linear process `t·N`, which
    /// is what the α = 2 Pickands-type constants need.
    Fbm {
        hurst: f64,
    },
    Bm,
    Ou {
        theta: f64,
    },
    Slepian,
    /// B(t)/√t; undefined at t = 0.
    ScaledBm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel {
    family: KernelFamily,
    description: String,
}

impl CovKernel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(domain(format!(
                "Hurst index must lie in (0, 1], got {hurst}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Fbm { hurst },
            description: format!("fbm(H={hurst})"),
        })
    }

    pub fn bm() -> Self {
        Self {
            family: KernelFamily::Bm,
            description: "bm".to_string(),
        }
    }

    pub fn ou(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(domain(format!("OU rate must be positive, got {theta}")));
        }
        Ok(Self {
            family: KernelFamily::Ou { theta },
            description: format!("ou(theta={theta})"),
        })
    }

    pub fn slepian() -> Self {
        Self {
            family: KernelFamily::Slepian,
            description: "slepian".to_string(),
        }
    }

    pub fn scaled_bm() -> Self {
        Self {
            family: KernelFamily::ScaledBm,
            description: "scaled_bm".to_string(),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// True when the kernel is undefined at t = 0, so grids must start at a
    /// positive node.
    pub fn excludes_origin(&self) -> bool {
        matches!(self.family, KernelFamily::ScaledBm)
    }

    /// R(s, t).
    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        if !(s >= 0.0 && t >= 0.0) || !s.is_finite() || !t.is_finite() {
            return Err(domain(format!(
                "covariance arguments must be finite and >= 0, got ({s}, {t})"
            )));
        }
        if self.excludes_origin() && (s == 0.0 || t == 0.0) {
            return Err(domain("scaled_bm covariance is undefined at t = 0"));
        }
        Ok(self.cov_unchecked(s, t))
    }

    /// R(s, t) without argument validation; callers guarantee the domain.
    #[inline]
    pub(crate) fn cov_unchecked(&self, s: f64, t: f64) -> f64 {
        match self.family {
            // the general formula cancels badly for H = 1
            KernelFamily::Fbm { hurst } if hurst == 1.0 => s * t,
            KernelFamily::Fbm { hurst } => {
                let e = 2.0 * hurst;
                0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
            }
            KernelFamily::Bm => s.min(t),
            KernelFamily::Ou { theta } => (-theta * (t - s).abs()).exp(),
            KernelFamily::Slepian => (1.0 - (t - s).abs()).max(0.0),
            KernelFamily::ScaledBm => (s.min(t) / s.max(t)).sqrt(),
        }
    }
}

impl fmt::Display for CovKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description)
    }
}

/// Outcome of the nonnegativity / non-degeneracy check on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A1Report {
    pub min_cov: f64,
    pub min_var: f64,
    pub pass: bool,
}

/// Evaluates the kernel on every pair of grid times.
///
/// Passes iff every covariance is nonnegative and every variance is strictly
/// positive. Times equal to zero are skipped in the variance check, since all
/// integrated-from-origin kernels (fBm, BM) vanish there by construction.
pub fn check_a1(kernel: &CovKernel, grid: &[f64]) -> Result<A1Report> {
    if grid.is_empty() {
        return Err(domain("check_a1 needs at least one grid time"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("grid times must be strictly increasing"));
    }
    let mut min_cov = f64::INFINITY;
    let mut min_var = f64::INFINITY;
    for (i, &s) in grid.iter().enumerate() {
        for &t in &grid[i..] {
            let v = kernel.cov(s, t)?;
            min_cov = min_cov.min(v);
            if s == t && s > 0.0 {
                min_var = min_var.min(v);
            }
        }
    }
    Ok(A1Report {
        min_cov,
        min_var,
        pass: min_cov >= 0.0 && min_var > 0.0,
    })
}

//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::CovKernel;
use crate::montecarlo::{Estimator, WindowRule, MIN_REPS};
use crate::riskproc::DiscountSpec;

/// Smallest accepted grid size.
pub const MIN_GRID_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    #[serde(alias = "FBM")]
    Fbm,
    #[serde(alias = "BM")]
    Bm,
    #[serde(alias = "OU")]
    Ou,
    #[serde(alias = "SLEPIAN")]
    Slepian,
    #[serde(alias = "SCALED_BM")]
    ScaledBm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl KernelSpec {
    pub fn to_kernel(&self) -> Result<CovKernel> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                Error::Config(format!("kernel family {:?} needs `{name}`", self.family))
            })
        };
        let extra = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(Error::Config(format!(
                "kernel family {:?} takes no `{name}`",
                self.family
            ))),
            None => Ok(()),
        };
        match self.family {
            KernelName::Fbm => {
                extra(self.theta, "theta")?;
                CovKernel::fbm(need(self.hurst, "hurst")?)
            }
            KernelName::Ou => {
                extra(self.hurst, "hurst")?;
                CovKernel::ou(need(self.theta, "theta")?)
            }
            KernelName::Bm | KernelName::Slepian | KernelName::ScaledBm => {
                extra(self.hurst, "hurst")?;
                extra(self.theta, "theta")?;
                Ok(match self.family {
                    KernelName::Bm => CovKernel::bm(),
                    KernelName::Slepian => CovKernel::slepian(),
                    _ => CovKernel::scaled_bm(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickandsSpec {
    pub alphas: Vec<f64>,
    pub horizons: Vec<f64>,
    #[serde(default = "default_drifts")]
    pub drifts: Vec<f64>,
}

fn default_drifts() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub discount: DiscountSpec,
    pub c: f64,
    pub s_horizon: f64,
    pub window: WindowRule,
    pub u_values: Vec<f64>,
    pub grid_n: usize,
    pub reps: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub output: PathBuf,
    /// Points of the ruin-time table (`ruintime`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    /// Times of the variance table (`variance`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pickands: Option<PickandsSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.kernel
            .to_kernel()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.discount
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.window
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c must be finite and > 0, got {}", self.c));
        }
        if !(self.s_horizon > 0.0 && self.s_horizon.is_finite()) {
            return bad(format!(
                "s_horizon must be finite and > 0, got {}",
                self.s_horizon
            ));
        }
        if self.u_values.is_empty() {
            return bad("u_values must not be empty".into());
        }
        if self.u_values.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return bad("u_values must be finite and > 0".into());
        }
        if self.u_values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("u_values must be strictly increasing".into());
        }
        if self.grid_n < MIN_GRID_N {
            return bad(format!(
                "grid_n must be >= {MIN_GRID_N}, got {}",
                self.grid_n
            ));
        }
        if self.reps < MIN_REPS {
            return bad(format!("reps must be >= {MIN_REPS}, got {}", self.reps));
        }
        if let Some(xs) = &self.x_grid {
            if xs.is_empty()
                || xs.iter().any(|&x| !(x >= 0.0 && x.is_finite()))
                || xs.windows(2).any(|w| w[1] <= w[0])
            {
                return bad("x_grid must be nonempty, >= 0 and strictly increasing".into());
            }
        }
        if let Some(ts) = &self.t_grid {
            if ts.is_empty()
                || ts.iter().any(|&t| !(t >= 0.0 && t.is_finite()))
                || ts.windows(2).any(|w| w[1] <= w[0])
            {
                return bad("t_grid must be nonempty, >= 0 and strictly increasing".into());
            }
        }
        if let Some(p) = &self.pickands {
            if p.alphas.is_empty() || p.alphas.iter().any(|&a| !(a > 0.0 && a <= 2.0)) {
                return bad("pickands.alphas must be nonempty and in (0, 2]".into());
            }
            if p.horizons.is_empty() || p.horizons.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
                return bad("pickands.horizons must be nonempty, finite and >= 0".into());
            }
            if p.drifts.is_empty() || p.drifts.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
                return bad("pickands.drifts must be nonempty, finite and >= 0".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (fields in declaration order).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

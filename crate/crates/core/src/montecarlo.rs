//! Crude and importance-sampled Monte Carlo for classical and Parisian ruin,
//! and the conditional ruin-time law.
//!
//! Replication `i` always draws its normals from stream `i` of the run seed,
//! replications are grouped into fixed chunks, and every reduction walks the
//! replications in index order. The worker count therefore never changes a
//! single output bit.

use std::ops::Range;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asympt::ruin_time_limit_cdf;
use crate::config::ExperimentConfig;
use crate::error::{domain, Error, Result};
use crate::gauss_sim::{dot, factorize, FactorizedKernel, Grid, RngStream};
use crate::kernels::CovKernel;
use crate::riskproc::{delta_tilde, detect_on_nodes, DiscountSpec, PathBuilder};
use crate::special::VarianceModel;

/// Replications per parallel task.
pub const CHUNK: usize = 64;
/// Smallest accepted replication count.
pub const MIN_REPS: usize = 100;
/// Conditional effective sample size below which a ruin-time table is
/// marked low-confidence.
pub const LOW_CONFIDENCE_ESS: f64 = 200.0;
/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuinKind {
    #[serde(alias = "CLASSICAL")]
    Classical,
    #[serde(alias = "PARISIAN")]
    Parisian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[serde(alias = "CRUDE")]
    Crude,
    #[serde(alias = "IMPORTANCE")]
    Importance,
}

/// Window length T_u as a function of the initial reserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowRule {
    /// T_u = value.
    #[serde(alias = "FIXED")]
    Fixed { value: f64 },
    /// T_u = t_const / u.
    #[serde(alias = "C_OVER_U")]
    COverU { t_const: f64 },
    /// T_u = a·u^{−p}.
    #[serde(alias = "POWER")]
    Power { a: f64, p: f64 },
}

impl WindowRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowRule::Fixed { value } if !(value >= 0.0 && value.is_finite()) => Err(domain(
                format!("fixed window must be finite and >= 0, got {value}"),
            )),
            WindowRule::COverU { t_const } if !(t_const > 0.0 && t_const.is_finite()) => Err(
                domain(format!("c_over_u window needs t_const > 0, got {t_const}")),
            ),
            WindowRule::Power { a, p }
                if !(a > 0.0 && a.is_finite() && p > 1.0 && p.is_finite()) =>
            {
                Err(domain(format!(
                    "power window needs a > 0 and p > 1, got a={a}, p={p}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn t_u(&self, u: f64) -> f64 {
        match *self {
            WindowRule::Fixed { value } => value,
            WindowRule::COverU { t_const } => t_const / u,
            WindowRule::Power { a, p } => a * u.powf(-p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: usize,
    /// `(Σc)²/Σc²` over the per-replication contributions.
    pub effective_sample_size: f64,
    pub seed: u64,
}

impl EstimateResult {
    /// True when the effective sample size is below `fraction·reps`.
    pub fn ess_below(&self, fraction: f64) -> bool {
        self.effective_sample_size < fraction * self.reps as f64
    }
}

/// Neumaier-compensated sum in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean, standard error and 95% interval of per-replication
/// contributions, reduced in index order.
pub fn combine(contributions: &[f64], seed: u64) -> Result<EstimateResult> {
    let n = contributions.len();
    if n == 0 {
        return Err(domain("cannot combine zero contributions"));
    }
    let total = neumaier_sum(contributions.iter().copied());
    let mean = total / n as f64;
    let var = if n > 1 {
        neumaier_sum(contributions.iter().map(|c| (c - mean) * (c - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    let std_error = (var / n as f64).sqrt();
    let sum_sq = neumaier_sum(contributions.iter().map(|c| c * c));
    let effective_sample_size = if sum_sq > 0.0 {
        total * total / sum_sq
    } else {
        0.0
    };
    Ok(EstimateResult {
        estimate: mean,
        std_error,
        ci_low: mean - Z_975 * std_error,
        ci_high: mean + Z_975 * std_error,
        reps: n,
        effective_sample_size,
        seed,
    })
}

/// Runs `task` over fixed chunks of `0..reps` on the current rayon pool and
/// concatenates the results in chunk order.
pub fn replicate<T, F>(reps: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Vec<T> + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|k| task(k * CHUNK..((k + 1) * CHUNK).min(reps)))
        .collect();
    parts.into_iter().flatten().collect()
}

/// Fills row `j` of the result with the normals of replication `range.start + j`.
pub(crate) fn normals_for(range: Range<usize>, dim: usize, seed: u64) -> Array2<f64> {
    let mut xi = Array2::<f64>::zeros((range.len(), dim));
    for (row, i) in xi.rows_mut().into_iter().zip(range) {
        let mut row = row;
        RngStream::new(seed, i as u64)
            .fill_normals(row.as_slice_mut().expect("rows are contiguous"));
    }
    xi
}

/// One initial reserve with the windows to test on the same paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub u: f64,
    pub windows: Vec<f64>,
}

/// Factorized kernel, path integrator and importance-sampling direction for
/// one model on one grid.
#[derive(Debug, Clone)]
pub struct RuinSimulation {
    c: f64,
    s_horizon: f64,
    factor: FactorizedKernel,
    builder: PathBuilder,
    /// `Lᵀa` for the functional `a` giving Y(S).
    b: Vec<f64>,
    /// ∫e^{−δ}·(Σa) on the grid: the shift of `y` per unit λ.
    shift_integral: Vec<f64>,
    /// `aᵀΣa`.
    quad_form: f64,
    delta_tilde_s: f64,
}

impl RuinSimulation {
    pub fn new(
        kernel: &CovKernel,
        discount: &DiscountSpec,
        c: f64,
        s_horizon: f64,
        grid: &Grid,
    ) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(domain(format!(
                "premium rate must be finite and >= 0, got {c}"
            )));
        }
        if !(s_horizon > 0.0 && s_horizon <= grid.t_end() && s_horizon >= grid.t_start()) {
            return Err(Error::Horizon {
                needed: s_horizon,
                grid_end: grid.t_end(),
            });
        }
        let factor = factorize(kernel, grid)?;
        let builder = PathBuilder::new(grid, discount)?;
        let a = builder.linear_functional(s_horizon)?;
        let b = factor.apply_transpose(&a)?;
        let quad_form = dot(&b, &b);
        if !(quad_form > 0.0) {
            return Err(Error::Singular(format!(
                "Y({s_horizon}) has zero variance on {grid} for {kernel}"
            )));
        }
        let mean = factor.apply(&b)?;
        let mut shift_integral = vec![0.0; grid.len()];
        builder.integrate_into(&mean, &mut shift_integral)?;
        Ok(Self {
            c,
            s_horizon,
            factor,
            builder,
            b,
            shift_integral,
            quad_form,
            delta_tilde_s: delta_tilde(discount, s_horizon)?,
        })
    }

    /// Simulation for a config: the grid spans the horizon plus the longest
    /// window over all `u_values`.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let kernel = config.kernel.to_kernel()?;
        let max_window = config
            .u_values
            .iter()
            .map(|&u| config.window.t_u(u))
            .fold(0.0, f64::max);
        let grid = Grid::for_kernel(&kernel, config.s_horizon + max_window, config.grid_n)?;
        Self::new(&kernel, &config.discount, config.c, config.s_horizon, &grid)
    }

    pub fn grid(&self) -> &Grid {
        self.builder.grid()
    }

    pub fn s_horizon(&self) -> f64 {
        self.s_horizon
    }

    pub fn factor(&self) -> &FactorizedKernel {
        &self.factor
    }

    pub fn path_builder(&self) -> &PathBuilder {
        &self.builder
    }

    /// Trapezoid variance `aᵀΣa` of the discretized Y(S).
    pub fn quad_form(&self) -> f64 {
        self.quad_form
    }

    /// λ = (u + c·δ̃(S)) / (aᵀΣa): the shifted mean puts Y(S) on the barrier.
    pub fn importance_lambda(&self, u: f64) -> f64 {
        (u + self.c * self.delta_tilde_s) / self.quad_form
    }

    pub fn run(
        &self,
        targets: &[Target],
        estimator: Estimator,
        reps: usize,
        seed: u64,
    ) -> Result<RuinRun> {
        let lambdas: Vec<f64> = targets
            .iter()
            .map(|t| match estimator {
                Estimator::Crude => 0.0,
                Estimator::Importance => self.importance_lambda(t.u),
            })
            .collect();
        self.run_with_lambdas(targets, &lambdas, reps, seed)
    }

    /// Runs with explicit shift sizes per target; λ = 0 is the crude
    /// estimator.
    pub fn run_with_lambdas(
        &self,
        targets: &[Target],
        lambdas: &[f64],
        reps: usize,
        seed: u64,
    ) -> Result<RuinRun> {
        if reps < MIN_REPS {
            return Err(domain(format!(
                "at least {MIN_REPS} replications are required, got {reps}"
            )));
        }
        if targets.is_empty() || targets.iter().any(|t| t.windows.is_empty()) {
            return Err(domain("every target needs at least one window"));
        }
        if lambdas.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: targets.len(),
                got: lambdas.len(),
            });
        }
        let grid = *self.grid();
        for t in targets {
            if !(t.u >= 0.0 && t.u.is_finite()) {
                return Err(domain(format!(
                    "initial reserve must be finite and >= 0, got {}",
                    t.u
                )));
            }
            for &w in &t.windows {
                if !(w >= 0.0) {
                    return Err(domain(format!("window must be >= 0, got {w}")));
                }
                if self.s_horizon + w > grid.t_end() * (1.0 + 1e-12) {
                    return Err(Error::Horizon {
                        needed: self.s_horizon + w,
                        grid_end: grid.t_end(),
                    });
                }
            }
        }
        let layout = Layout::new(targets);
        let n = grid.len();
        let nodes = self.builder.nodes();
        let data: Vec<Result<Vec<f64>>> = replicate(reps, |range| {
            let xi = normals_for(range.clone(), n, seed);
            let paths = match self.factor.apply_batch(xi.view()) {
                Ok(p) => p,
                Err(e) => return vec![Err(e)],
            };
            let mut out = Vec::with_capacity(range.len() * layout.stride);
            let mut y0 = vec![0.0; n];
            let mut y = vec![0.0; n];
            let mut r = vec![0.0; n];
            for (xi_row, w_row) in xi.rows().into_iter().zip(paths.rows()) {
                let xi_row = xi_row.as_slice().expect("rows are contiguous");
                let w_row = w_row.as_slice().expect("rows are contiguous");
                if let Err(e) = self.builder.integrate_into(w_row, &mut y0) {
                    return vec![Err(e)];
                }
                let score = dot(&self.b, xi_row);
                for (t, &lambda) in targets.iter().zip(lambdas) {
                    for ((yi, &y0i), &si) in y.iter_mut().zip(&y0).zip(&self.shift_integral) {
                        *yi = y0i + lambda * si;
                    }
                    self.builder.reserve_into(&y, t.u, self.c, &mut r);
                    out.push(-lambda * score - 0.5 * lambda * lambda * self.quad_form);
                    let flag = out.len();
                    out.push(0.0);
                    for &w in &t.windows {
                        match detect_on_nodes(nodes, &r, self.s_horizon, w) {
                            Ok(v) => {
                                if v.classical_ruin {
                                    out[flag] = 1.0;
                                }
                                out.push(v.tau.unwrap_or(f64::NAN));
                            }
                            Err(e) => return vec![Err(e)],
                        }
                    }
                }
            }
            vec![Ok(out)]
        });
        let mut flat = Vec::with_capacity(reps * layout.stride);
        for part in data {
            flat.extend(part?);
        }
        Ok(RuinRun {
            targets: targets.to_vec(),
            lambdas: lambdas.to_vec(),
            reps,
            seed,
            s_horizon: self.s_horizon,
            layout,
            data: flat,
        })
    }
}

#[derive(Debug, Clone)]
struct Layout {
    stride: usize,
    /// Offset of each target's block inside one replication's record.
    offsets: Vec<usize>,
}

impl Layout {
    /// Per target: log-weight, classical flag, then one τ per window.
    fn new(targets: &[Target]) -> Self {
        let mut offsets = Vec::with_capacity(targets.len());
        let mut stride = 0;
        for t in targets {
            offsets.push(stride);
            stride += 2 + t.windows.len();
        }
        Self { stride, offsets }
    }
}

/// Per-replication outcomes of a [`RuinSimulation`] run.
#[derive(Debug, Clone)]
pub struct RuinRun {
    pub targets: Vec<Target>,
    pub lambdas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    s_horizon: f64,
    layout: Layout,
    data: Vec<f64>,
}

impl RuinRun {
    fn record(&self, rep: usize, target: usize) -> &[f64] {
        let start = rep * self.layout.stride + self.layout.offsets[target];
        &self.data[start..start + 2 + self.targets[target].windows.len()]
    }

    pub fn log_weight(&self, rep: usize, target: usize) -> f64 {
        self.record(rep, target)[0]
    }

    pub fn classical(&self, rep: usize, target: usize) -> bool {
        self.record(rep, target)[1] != 0.0
    }

    /// Parisian ruin time, if the window was completed.
    pub fn tau(&self, rep: usize, target: usize, window: usize) -> Option<f64> {
        let t = self.record(rep, target)[2 + window];
        (!t.is_nan()).then_some(t)
    }

    pub fn hit(&self, rep: usize, target: usize, window: usize, kind: RuinKind) -> bool {
        match kind {
            RuinKind::Classical => self.classical(rep, target),
            RuinKind::Parisian => self.tau(rep, target, window).is_some(),
        }
    }

    /// Weighted indicator per replication.
    pub fn contributions(&self, target: usize, window: usize, kind: RuinKind) -> Vec<f64> {
        (0..self.reps)
            .map(|i| {
                if self.hit(i, target, window, kind) {
                    self.log_weight(i, target).exp()
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn estimate(&self, target: usize, window: usize, kind: RuinKind) -> Result<EstimateResult> {
        combine(&self.contributions(target, window, kind), self.seed)
    }

    /// Mean likelihood ratio over all draws, which is 1 for a correct shift.
    pub fn likelihood_ratio_mean(&self, target: usize) -> Result<EstimateResult> {
        let w: Vec<f64> = (0..self.reps)
            .map(|i| self.log_weight(i, target).exp())
            .collect();
        combine(&w, self.seed)
    }

    /// Weighted empirical law of `u²(S + T_u − τ)` given Parisian ruin,
    /// compared with `1 − exp(−rate·x)`.
    pub fn ruin_time(
        &self,
        target: usize,
        window: usize,
        x_grid: &[f64],
        rate: f64,
    ) -> Result<RuinTimeReport> {
        if x_grid.windows(2).any(|w| w[1] <= w[0]) || x_grid.iter().any(|&x| !(x >= 0.0)) {
            return Err(domain("x_grid must be increasing and >= 0"));
        }
        if !(rate > 0.0) {
            return Err(domain(format!("limit rate must be > 0, got {rate}")));
        }
        let u = self.targets[target].u;
        let t_u = self.targets[target].windows[window];
        let mut samples: Vec<(f64, f64)> = (0..self.reps)
            .filter_map(|i| {
                self.tau(i, target, window).map(|tau| {
                    (
                        u * u * (self.s_horizon + t_u - tau),
                        self.log_weight(i, target),
                    )
                })
            })
            .collect();
        let limit: Vec<f64> = x_grid
            .iter()
            .map(|&x| ruin_time_limit_cdf(rate, x))
            .collect();
        if samples.is_empty() {
            return Ok(RuinTimeReport {
                u,
                window: t_u,
                rate,
                x_grid: x_grid.to_vec(),
                empirical: vec![f64::NAN; x_grid.len()],
                limit,
                sup_distance: f64::NAN,
                conditional_ess: 0.0,
                samples: 0,
                low_confidence: true,
            });
        }
        let max_log = samples
            .iter()
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max);
        for s in samples.iter_mut() {
            s.1 = (s.1 - max_log).exp();
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = neumaier_sum(samples.iter().map(|s| s.1));
        let sum_sq = neumaier_sum(samples.iter().map(|s| s.1 * s.1));
        let conditional_ess = total * total / sum_sq;

        // cumulative weights at each distinct sample point
        let mut sup: f64 = 0.0;
        let mut below = 0.0;
        let mut comp = 0.0;
        let mut i = 0;
        while i < samples.len() {
            let x = samples[i].0;
            let f_lim = ruin_time_limit_cdf(rate, x.max(0.0));
            sup = sup.max((f_lim - (below + comp) / total).abs());
            while i < samples.len() && samples[i].0 == x {
                let t = below + samples[i].1;
                comp += (below - t) + samples[i].1;
                below = t;
                i += 1;
            }
            sup = sup.max((f_lim - (below + comp) / total).abs());
        }
        let empirical = x_grid
            .iter()
            .map(|&x| {
                let k = samples.partition_point(|s| s.0 <= x);
                (neumaier_sum(samples[..k].iter().map(|s| s.1)) / total).min(1.0)
            })
            .collect();
        Ok(RuinTimeReport {
            u,
            window: t_u,
            rate,
            x_grid: x_grid.to_vec(),
            empirical,
            limit,
            sup_distance: sup,
            conditional_ess,
            samples: samples.len(),
            low_confidence: conditional_ess < LOW_CONFIDENCE_ESS,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuinTimeReport {
    pub u: f64,
    pub window: f64,
    pub rate: f64,
    pub x_grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub limit: Vec<f64>,
    /// sup over x ≥ 0 of |empirical − limit|, over all sample points.
    pub sup_distance: f64,
    pub conditional_ess: f64,
    pub samples: usize,
    pub low_confidence: bool,
}

fn config_targets(config: &ExperimentConfig) -> Vec<Target> {
    config
        .u_values
        .iter()
        .map(|&u| Target {
            u,
            windows: vec![config.window.t_u(u)],
        })
        .collect()
}

fn estimate_with(
    config: &ExperimentConfig,
    kind: RuinKind,
    estimator: Estimator,
) -> Result<Vec<EstimateResult>> {
    config.validate()?;
    let sim = RuinSimulation::from_config(config)?;
    let targets = config_targets(config);
    let run = sim.run(&targets, estimator, config.reps, config.seed)?;
    (0..targets.len())
        .map(|k| run.estimate(k, 0, kind))
        .collect()
}

/// Crude estimates, one per `u_values` entry.
pub fn estimate_ruin(config: &ExperimentConfig, kind: RuinKind) -> Result<Vec<EstimateResult>> {
    estimate_with(config, kind, Estimator::Crude)
}

/// Mean-shift importance-sampling estimates, one per `u_values` entry.
pub fn estimate_ruin_importance(
    config: &ExperimentConfig,
    kind: RuinKind,
) -> Result<Vec<EstimateResult>> {
    estimate_with(config, kind, Estimator::Importance)
}

/// Conditional ruin-time tables under importance sampling, one per `u_values` entry.
pub fn estimate_ruin_time_distribution(
    config: &ExperimentConfig,
    x_grid: &[f64],
) -> Result<Vec<RuinTimeReport>> {
    config.validate()?;
    let sim = RuinSimulation::from_config(config)?;
    let model = VarianceModel::new(config.kernel.to_kernel()?, config.discount.clone())?;
    let rate = model.ruin_time_rate(config.s_horizon)?;
    let targets = config_targets(config);
    let run = sim.run(&targets, Estimator::Importance, config.reps, config.seed)?;
    (0..targets.len())
        .map(|k| run.ruin_time(k, 0, x_grid, rate))
        .collect()
}

/// Number of sign changes of `path − level` between consecutive nodes;
/// a node exactly at the level counts as above.
pub fn count_level_crossings(path: &[f64], level: f64) -> usize {
    path.windows(2)
        .filter(|w| (w[0] >= level) != (w[1] >= level))
        .count()
}

/// Importance-sampling estimate of P(N > g) for a single standard normal,
/// using the same mean-shift machinery as the path estimator.
pub fn normal_tail_importance(g: f64, reps: usize, seed: u64) -> Result<EstimateResult> {
    use crate::gauss_sim::{shifted_from_normals, MeanShift};
    if reps < MIN_REPS {
        return Err(domain(format!(
            "at least {MIN_REPS} replications are required, got {reps}"
        )));
    }
    let factor =
        FactorizedKernel::from_covariance(&Array2::from_elem((1, 1), 1.0), "standard normal")?;
    let shift = MeanShift::Direction {
        a: vec![1.0],
        lambda: g,
    }
    .prepare(&factor)?;
    let contributions = replicate(reps, |range| {
        range
            .map(|i| {
                let xi = [RngStream::new(seed, i as u64).normals().next_normal()];
                let (w, log_ratio) = shifted_from_normals(&factor, &shift, &xi);
                if w[0] > g {
                    log_ratio.exp()
                } else {
                    0.0
                }
            })
            .collect()
    });
    combine(&contributions, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asympt::normal_tail;
    use crate::gauss_sim::{sample_path_shifted, MeanShift};
    use proptest::prelude::*;

    fn bm_sim(n: usize, t_end: f64, c: f64) -> RuinSimulation {
        let grid = Grid::new(0.0, t_end, n).unwrap();
        RuinSimulation::new(
            &CovKernel::bm(),
            &DiscountSpec::Linear { rate: 1.0 },
            c,
            1.0,
            &grid,
        )
        .unwrap()
    }

    #[test]
    fn combine_single_and_units() {
        let r = combine(&[0.25], 7).unwrap();
        assert_eq!((r.estimate, r.std_error, r.reps, r.seed), (0.25, 0.0, 1, 7));
        let r = combine(&vec![1.0; 10_000], 1).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.ci_low, 1.0);
        assert!(combine(&[], 0).is_err());
    }

    #[test]
    fn combine_reference_values() {
        let r = combine(&[1.0, 2.0, 3.0, 4.0], 0).unwrap();
        assert_eq!(r.estimate, 2.5);
        let se = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((r.std_error - se).abs() < 1e-15);
        assert!((r.effective_sample_size - 100.0 / 30.0).abs() < 1e-12);
        assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }

    #[test]
    fn replicate_is_ordered_for_any_pool() {
        let task = |r: Range<usize>| r.map(|i| (i as f64).sqrt()).collect::<Vec<_>>();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| replicate(1000, task));
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| replicate(1000, task));
        assert_eq!(one.len(), 1000);
        assert_eq!(one, four);
        assert!(one.iter().enumerate().all(|(i, &v)| v == (i as f64).sqrt()));
    }

    #[test]
    fn window_rules() {
        assert_eq!(WindowRule::Fixed { value: 0.2 }.t_u(9.0), 0.2);
        assert_eq!(WindowRule::COverU { t_const: 1.0 }.t_u(4.0), 0.25);
        assert!((WindowRule::Power { a: 2.0, p: 1.5 }.t_u(4.0) - 0.25).abs() < 1e-15);
        assert!(WindowRule::Power { a: 1.0, p: 1.0 }.validate().is_err());
        assert!(WindowRule::COverU { t_const: 0.0 }.validate().is_err());
        assert!(WindowRule::Fixed { value: -1.0 }.validate().is_err());
        let parsed: WindowRule =
            serde_json::from_str(r#"{"mode":"c_over_u","t_const":1.0}"#).unwrap();
        assert_eq!(parsed, WindowRule::COverU { t_const: 1.0 });
        let parsed: WindowRule =
            serde_json::from_str(r#"{"mode":"C_OVER_U","t_const":2.0}"#).unwrap();
        assert_eq!(parsed, WindowRule::COverU { t_const: 2.0 });
    }

    #[test]
    fn power_rule_is_little_o_of_inverse_u() {
        let rule = WindowRule::Power { a: 1.0, p: 1.5 };
        let prods: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&u| u * rule.t_u(u))
            .collect();
        assert!(prods.windows(2).all(|w| w[1] < w[0]));
        assert!(prods[2] < 0.04);
    }

    #[test]
    fn rejects_too_few_reps_and_short_grids() {
        let sim = bm_sim(64, 1.1, 1.0);
        let t = [Target {
            u: 1.0,
            windows: vec![0.05],
        }];
        assert!(sim.run(&t, Estimator::Crude, 99, 0).is_err());
        let long = [Target {
            u: 1.0,
            windows: vec![0.2],
        }];
        assert!(matches!(
            sim.run(&long, Estimator::Crude, 100, 0),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn zero_lambda_reproduces_crude_bitwise() {
        let sim = bm_sim(128, 1.2, 0.5);
        let t = [Target {
            u: 0.8,
            windows: vec![0.0, 0.1],
        }];
        let crude = sim.run(&t, Estimator::Crude, 300, 11).unwrap();
        let forced = sim.run_with_lambdas(&t, &[0.0], 300, 11).unwrap();
        for w in 0..2 {
            for kind in [RuinKind::Classical, RuinKind::Parisian] {
                assert_eq!(
                    crude.estimate(0, w, kind).unwrap(),
                    forced.estimate(0, w, kind).unwrap()
                );
            }
        }
    }

    #[test]
    fn engine_matches_explicit_shifted_sampling() {
        let sim = bm_sim(96, 1.0, 0.4);
        let u = 1.3;
        let lambda = sim.importance_lambda(u);
        let t = [Target {
            u,
            windows: vec![0.0],
        }];
        let run = sim.run(&t, Estimator::Importance, 100, 5).unwrap();
        let a = sim.path_builder().linear_functional(1.0).unwrap();
        let shift = MeanShift::Direction { a, lambda };
        for i in [0usize, 17, 99] {
            let (w, log_ratio) =
                sample_path_shifted(sim.factor(), &RngStream::new(5, i as u64), &shift).unwrap();
            assert!((log_ratio - run.log_weight(i, 0)).abs() < 1e-9 * log_ratio.abs().max(1.0));
            let path = sim.path_builder().build(&w, u, 0.4).unwrap();
            let v = detect_on_nodes(path.grid.nodes().as_slice(), &path.r, 1.0, 0.0).unwrap();
            assert_eq!(v.classical_ruin, run.classical(i, 0));
        }
        // the shifted mean puts the discretized Y(S) on the barrier
        let barrier = u + 0.4 * delta_tilde(&DiscountSpec::Linear { rate: 1.0 }, 1.0).unwrap();
        let last = *sim.shift_integral.last().unwrap();
        assert!((lambda * last - barrier).abs() < 1e-9);
    }

    #[test]
    fn parisian_never_exceeds_classical() {
        let sim = bm_sim(128, 1.5, 0.3);
        let t = [Target {
            u: 0.5,
            windows: vec![0.0, 0.05, 0.2, 0.5],
        }];
        for est in [Estimator::Crude, Estimator::Importance] {
            let run = sim.run(&t, est, 256, 3).unwrap();
            let classical = run.estimate(0, 0, RuinKind::Classical).unwrap().estimate;
            let mut prev = classical;
            for w in 0..4 {
                for i in 0..run.reps {
                    assert!(!run.hit(i, 0, w, RuinKind::Parisian) || run.classical(i, 0));
                }
                let p = run.estimate(0, w, RuinKind::Parisian).unwrap().estimate;
                assert!(p <= prev);
                prev = p;
            }
            assert_eq!(
                run.estimate(0, 0, RuinKind::Parisian).unwrap().estimate,
                classical
            );
        }
    }

    #[test]
    fn importance_agrees_with_crude_at_moderate_level() {
        // BM with δ ≡ 0, c = 0: Y(1) ~ N(0, 1/3); u chosen for g ≈ 2
        let grid = Grid::new(0.0, 1.0, 128).unwrap();
        let sim = RuinSimulation::new(
            &CovKernel::bm(),
            &DiscountSpec::Constant { d: 0.0 },
            0.0,
            1.0,
            &grid,
        )
        .unwrap();
        let u = 2.0 / 3f64.sqrt();
        let t = [Target {
            u,
            windows: vec![0.0],
        }];
        let crude = sim
            .run(&t, Estimator::Crude, 20_000, 21)
            .unwrap()
            .estimate(0, 0, RuinKind::Classical)
            .unwrap();
        let is = sim
            .run(&t, Estimator::Importance, 20_000, 22)
            .unwrap()
            .estimate(0, 0, RuinKind::Classical)
            .unwrap();
        let joint = (crude.std_error.powi(2) + is.std_error.powi(2)).sqrt();
        assert!(
            (crude.estimate - is.estimate).abs() < 3.0 * joint,
            "{crude:?} {is:?}"
        );
        // the classical probability dominates the terminal tail
        assert!(is.estimate > normal_tail(2.0) - 3.0 * is.std_error);
    }

    #[test]
    fn likelihood_ratio_mean_is_one() {
        let sim = bm_sim(64, 1.0, 0.1);
        let t = [Target {
            u: 0.2,
            windows: vec![0.0],
        }];
        let run = sim.run(&t, Estimator::Importance, 20_000, 9).unwrap();
        let lr = run.likelihood_ratio_mean(0).unwrap();
        assert!((lr.estimate - 1.0).abs() < 3.0 * lr.std_error, "{lr:?}");
    }

    #[test]
    fn degenerate_importance_matches_normal_tail() {
        for g in [2.0, 4.0, 6.0] {
            let r = normal_tail_importance(g, 20_000, 4).unwrap();
            assert!(
                (r.estimate - normal_tail(g)).abs() < 3.0 * r.std_error,
                "g={g}: {r:?}"
            );
            assert!(r.std_error / r.estimate < 0.05);
        }
    }

    #[test]
    fn ruin_time_table_shape() {
        let sim = bm_sim(256, 1.25, 1.0);
        let t = [Target {
            u: 2.0,
            windows: vec![0.25],
        }];
        let run = sim.run(&t, Estimator::Importance, 2000, 8).unwrap();
        let xs = [0.0, 0.5, 1.0, 2.0, 5.0];
        let rep = run.ruin_time(0, 0, &xs, 3.0).unwrap();
        assert_eq!(rep.empirical[0], 0.0);
        assert!(rep.empirical.windows(2).all(|w| w[1] >= w[0]));
        assert!(rep.empirical.iter().all(|&f| f <= 1.0));
        assert!(
            rep.sup_distance
                >= rep
                    .empirical
                    .iter()
                    .zip(&rep.limit)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    - 1e-12
        );
        assert!(run.ruin_time(0, 0, &[1.0, 0.5], 3.0).is_err());
    }

    #[test]
    fn crossings_examples() {
        assert_eq!(count_level_crossings(&[-3.0, -2.0, -2.5], 0.0), 0);
        assert_eq!(count_level_crossings(&[-1.0, 1.0, -1.0], 0.0), 2);
        assert_eq!(count_level_crossings(&[], 0.0), 0);
    }

    #[test]
    fn ou_crossings_decrease_with_level() {
        let grid = Grid::new(0.0, 5.0, 256).unwrap();
        let fk = factorize(&CovKernel::ou(1.0).unwrap(), &grid).unwrap();
        let levels = [0.5, 1.0, 1.5];
        let mut counts = [0usize; 3];
        for i in 0..400 {
            let p = crate::gauss_sim::sample_path(&fk, &RngStream::new(13, i));
            for (c, &l) in counts.iter_mut().zip(&levels) {
                *c += count_level_crossings(&p, l);
            }
        }
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn combine_is_permutation_free_for_fixed_order(v in proptest::collection::vec(0.0f64..10.0, 1..200)) {
            let a = combine(&v, 0).unwrap();
            let b = combine(&v.clone(), 0).unwrap();
            prop_assert_eq!(a.clone(), b);
            prop_assert!(a.ci_low <= a.estimate && a.estimate <= a.ci_high);
            prop_assert!(a.std_error >= 0.0);
        }

        #[test]
        fn window_monotone_under_common_numbers(seed in 0u64..1000, u in 0.1f64..1.0) {
            let sim = bm_sim(64, 1.3, 0.2);
            let t = [Target { u, windows: vec![0.0, 0.01, 0.05, 0.3] }];
            let run = sim.run(&t, Estimator::Crude, 128, seed).unwrap();
            let p: Vec<f64> = (0..4).map(|w| run.estimate(0, w, RuinKind::Parisian).unwrap().estimate).collect();
            prop_assert!(p.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(p[0], run.estimate(0, 0, RuinKind::Classical).unwrap().estimate);
        }
    }
}

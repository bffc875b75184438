//! Gaussian-tail approximations of ruin probabilities, the limiting
//! ruin-time law, and Monte Carlo estimates of the Pickands- and
//! Piterbarg-type constants `E[exp(inf_{s≤T}(√2·B_α(s) − s^α + Q·s))]`.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::gauss_sim::{factorize, Grid};
use crate::kernels::CovKernel;
use crate::montecarlo::{combine, normals_for, replicate, EstimateResult, MIN_REPS};
use crate::special::VarianceModel;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Continued fraction for the Mills ratio Ψ(x)/φ(x), x ≥ 3.
fn mills_ratio(x: f64) -> f64 {
    // x + 1/(x + 2/(x + 3/(x + …))) by modified Lentz
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..5000 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `exp(−x²/2)` with the square split so the exponent carries no rounding
/// error of x².
fn gaussian_kernel(x: f64) -> f64 {
    let hi = x as f32 as f64;
    let lo = x - hi;
    (-0.5 * hi * hi).exp() * (-0.5 * lo * (x + hi)).exp()
}

/// Ψ(x) = P(N > x).
pub fn normal_tail(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 3.0 {
        0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
    } else {
        FRAC_1_SQRT_2PI * gaussian_kernel(x) * mills_ratio(x)
    }
}

/// ln Ψ(x), finite far beyond the range where Ψ itself underflows.
pub fn log_normal_tail(x: f64) -> f64 {
    if x < 3.0 {
        normal_tail(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio(x).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub u: f64,
    /// g_u(S).
    pub g: f64,
    /// Ψ(g_u(S)).
    pub psi_approx: f64,
    /// ln Ψ(g_u(S)).
    pub log_psi_approx: f64,
    /// −1/(2σ²(S)).
    pub log_scale_limit: f64,
    /// σ'(S)/σ³(S).
    pub ruin_time_rate: f64,
}

/// Gaussian-tail approximation Ψ(g_u(S)) of the ruin probabilities together
/// with the log-scale limit and the ruin-time rate.
pub fn approx_ruin(
    model: &VarianceModel,
    c: f64,
    u: f64,
    s_horizon: f64,
) -> Result<AsymptoticReport> {
    if !(s_horizon > 0.0) {
        return Err(domain(format!("horizon must be > 0, got {s_horizon}")));
    }
    let g = model.g_u(c, u, s_horizon)?;
    let var = model.sigma2(s_horizon)?;
    Ok(AsymptoticReport {
        u,
        g,
        psi_approx: normal_tail(g),
        log_psi_approx: log_normal_tail(g),
        log_scale_limit: -1.0 / (2.0 * var),
        ruin_time_rate: model.ruin_time_rate(s_horizon)?,
    })
}

/// `1 − exp(−rate·x)`.
pub fn ruin_time_limit_cdf(rate: f64, x: f64) -> f64 {
    -(-rate * x).exp_m1()
}

/// Per-replication values `exp(inf_{s_i ≤ T}(√2·B_α(s_i) − s_i^α + Q·s_i))`
/// for every (horizon, drift) pair, all read off the same paths.
#[derive(Debug, Clone)]
pub struct PickandsRun {
    pub alpha: f64,
    pub horizons: Vec<f64>,
    pub drifts: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    values: Vec<f64>,
}

impl PickandsRun {
    fn index(&self, rep: usize, h: usize, q: usize) -> usize {
        (rep * self.horizons.len() + h) * self.drifts.len() + q
    }

    pub fn value(&self, rep: usize, horizon: usize, drift: usize) -> f64 {
        self.values[self.index(rep, horizon, drift)]
    }

    pub fn contributions(&self, horizon: usize, drift: usize) -> Vec<f64> {
        (0..self.reps)
            .map(|i| self.value(i, horizon, drift))
            .collect()
    }

    pub fn estimate(&self, horizon: usize, drift: usize) -> Result<EstimateResult> {
        combine(&self.contributions(horizon, drift), self.seed)
    }

    /// Paired difference `first − second` over the same replications.
    pub fn paired_difference(
        &self,
        first: (usize, usize),
        second: (usize, usize),
    ) -> Result<EstimateResult> {
        let d: Vec<f64> = (0..self.reps)
            .map(|i| self.value(i, first.0, first.1) - self.value(i, second.0, second.1))
            .collect();
        combine(&d, self.seed)
    }
}

/// Samples B_α (fBm with Hurst α/2) on `grid_n` nodes over `[0, max T]` and
/// evaluates the constant's integrand for every horizon and drift. A horizon
/// uses the nodes `s_i ≤ T`; T = 0 gives exactly 1.
pub fn pickands_sweep(
    alpha: f64,
    horizons: &[f64],
    drifts: &[f64],
    reps: usize,
    grid_n: usize,
    seed: u64,
) -> Result<PickandsRun> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if horizons.is_empty() || horizons.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(domain("horizons must be finite and >= 0"));
    }
    if drifts.is_empty() || drifts.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
        return Err(domain("drifts must be finite and >= 0"));
    }
    if reps < MIN_REPS {
        return Err(domain(format!(
            "at least {MIN_REPS} replications are required, got {reps}"
        )));
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let per_rep = horizons.len() * drifts.len();
    if t_max == 0.0 {
        return Ok(PickandsRun {
            alpha,
            horizons: horizons.to_vec(),
            drifts: drifts.to_vec(),
            reps,
            seed,
            values: vec![1.0; reps * per_rep],
        });
    }
    let grid = Grid::new(0.0, t_max, grid_n)?;
    let factor = factorize(&CovKernel::fbm(alpha / 2.0)?, &grid)?;
    let nodes = grid.nodes();
    let drift_free: Vec<f64> = nodes.iter().map(|s| -s.powf(alpha)).collect();
    let ends: Vec<usize> = horizons
        .iter()
        .map(|&t| nodes.partition_point(|&s| s <= t * (1.0 + 1e-12)))
        .collect();
    let sqrt2 = std::f64::consts::SQRT_2;
    let values: Vec<Result<Vec<f64>>> = replicate(reps, |range| {
        let xi = normals_for(range.clone(), grid.len(), seed);
        let paths = match factor.apply_batch(xi.view()) {
            Ok(p) => p,
            Err(e) => return vec![Err(e)],
        };
        let mut out = Vec::with_capacity(range.len() * per_rep);
        for path in paths.rows() {
            for &end in &ends {
                for &q in drifts {
                    let inf = (0..end)
                        .map(|i| sqrt2 * path[i] + drift_free[i] + q * nodes[i])
                        .fold(f64::INFINITY, f64::min);
                    out.push(inf.exp());
                }
            }
        }
        vec![Ok(out)]
    });
    let mut flat = Vec::with_capacity(reps * per_rep);
    for part in values {
        flat.extend(part?);
    }
    Ok(PickandsRun {
        alpha,
        horizons: horizons.to_vec(),
        drifts: drifts.to_vec(),
        reps,
        seed,
        values: flat,
    })
}

/// Estimate of `E[exp(inf_{s∈[0,T]}(√2·B_α(s) − s^α))]` on a uniform grid.
pub fn pickands_tilde(
    alpha: f64,
    t_horizon: f64,
    reps: usize,
    grid_n: usize,
    seed: u64,
) -> Result<EstimateResult> {
    pickands_sweep(alpha, &[t_horizon], &[0.0], reps, grid_n, seed)?.estimate(0, 0)
}

/// Estimate of `E[exp(inf_{s∈[0,T]}(√2·B_α(s) − s^α + Q·s))]` on a uniform grid.
pub fn piterbarg_tilde(
    alpha: f64,
    q_drift: f64,
    t_horizon: f64,
    reps: usize,
    grid_n: usize,
    seed: u64,
) -> Result<EstimateResult> {
    pickands_sweep(alpha, &[t_horizon], &[q_drift], reps, grid_n, seed)?.estimate(0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::CovKernel;
    use crate::riskproc::DiscountSpec;
    use proptest::prelude::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / (2 * m) as f64;
        let mut s = f(a) + f(b);
        for i in 1..2 * m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn phi(x: f64) -> f64 {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    }

    #[test]
    fn tail_reference_values() {
        assert_eq!(normal_tail(0.0), 0.5);
        for x in [0.5, 1.0, 2.0] {
            assert!((normal_tail(x) + normal_tail(-x) - 1.0).abs() < 1e-15);
        }
        // density quadrature on [3, 40]
        let oracle = simpson(phi, 3.0, 40.0, 200_000);
        assert!(((normal_tail(3.0) - oracle) / oracle).abs() < 1e-12);
        assert!((normal_tail(3.0) - 1.349_898e-3).abs() < 1e-9);
    }

    #[test]
    fn tail_is_continuous_across_branches() {
        let below = 0.5 * libm::erfc(3.0 * std::f64::consts::FRAC_1_SQRT_2);
        assert!(((normal_tail(3.0) - below) / below).abs() < 1e-14);
        for x in [3.5, 5.0, 8.0] {
            let e = 0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2);
            assert!(((normal_tail(x) - e) / e).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn tail_far_out_against_quadrature() {
        // Ψ(x) = φ(x)·∫₀^∞ e^{−xv − v²/2} dv, integrated numerically
        for x in [10.0, 20.0, 30.0, 37.0] {
            let ratio = simpson(
                |v: f64| (-x * v - 0.5 * v * v).exp(),
                0.0,
                40.0 / x,
                100_000,
            );
            let log_oracle = -0.5 * x * x - LN_SQRT_2PI + ratio.ln();
            assert!((log_normal_tail(x) - log_oracle).abs() < 1e-12, "x={x}");
            let v = normal_tail(x);
            assert!(((v.ln() - log_oracle) / log_oracle).abs() < 1e-14);
        }
        assert!(log_normal_tail(60.0).is_finite());
        assert!((log_normal_tail(1.0) - normal_tail(1.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn tail_monotone_and_log_concave() {
        let xs: Vec<f64> = (0..=460).map(|i| -8.0 + 0.1 * i as f64).collect();
        let v: Vec<f64> = xs.iter().map(|&x| normal_tail(x)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        let l: Vec<f64> = xs.iter().map(|&x| log_normal_tail(x)).collect();
        assert!(l.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] < 1e-12));
    }

    #[test]
    fn approx_report_fields() {
        let m = VarianceModel::new(
            CovKernel::fbm(0.5).unwrap(),
            DiscountSpec::Linear { rate: 1.0 },
        )
        .unwrap();
        let r = approx_ruin(&m, 1.0, 10.0, 1.0).unwrap();
        assert!((r.log_scale_limit + 1.0 / (2.0 * m.sigma2(1.0).unwrap())).abs() < 1e-15);
        assert!((r.log_scale_limit + 4.874_29).abs() < 1e-4);
        assert!((r.log_psi_approx - log_normal_tail(r.g)).abs() < 1e-15);
        assert!(r.psi_approx > 0.0 && r.psi_approx < 0.5);
        assert!(r.ruin_time_rate > 0.0);
        let zero = approx_ruin(&m, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(zero.psi_approx, 0.5);
        assert!(approx_ruin(&m, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn log_psi_over_u_squared_approaches_limit() {
        let m = VarianceModel::new(
            CovKernel::fbm(0.5).unwrap(),
            DiscountSpec::Linear { rate: 1.0 },
        )
        .unwrap();
        let ratios: Vec<f64> = [20.0, 40.0, 80.0]
            .iter()
            .map(|&u| {
                let r = approx_ruin(&m, 1.0, u, 1.0).unwrap();
                r.log_psi_approx / (u * u) / r.log_scale_limit
            })
            .collect();
        assert!(ratios
            .windows(2)
            .all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs()));
        assert!((ratios[2] - 1.0).abs() < 0.05, "{ratios:?}");
    }

    #[test]
    fn limit_cdf_values() {
        assert_eq!(ruin_time_limit_cdf(4.0, 0.0), 0.0);
        assert!((1.0 - ruin_time_limit_cdf(2.0, 25.0)).abs() <= 1e-15);
        let v = ruin_time_limit_cdf(4.6191, 0.15);
        assert!((v - (1.0 - (-0.692_865f64).exp())).abs() < 1e-6);
        assert!((v - 0.4999).abs() < 1e-4);
    }

    #[test]
    fn zero_horizon_is_exactly_one() {
        let r = pickands_tilde(1.0, 0.0, 100, 64, 3).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        let run = pickands_sweep(1.5, &[0.0, 1.0], &[0.0], 100, 64, 3).unwrap();
        assert!(run.contributions(0, 0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn drift_zero_matches_pickands_on_same_streams() {
        let a = pickands_tilde(1.0, 1.0, 200, 128, 17).unwrap();
        let b = piterbarg_tilde(1.0, 0.0, 1.0, 200, 128, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pathwise_orderings() {
        let run = pickands_sweep(1.0, &[0.5, 1.0, 2.0], &[0.0, 5.0, 50.0], 500, 256, 2).unwrap();
        for i in 0..run.reps {
            for h in 0..3 {
                for q in 0..3 {
                    assert!(run.value(i, h, q) <= 1.0);
                    if q > 0 {
                        assert!(run.value(i, h, q) >= run.value(i, h, q - 1));
                    }
                    if h > 0 {
                        assert!(run.value(i, h, q) <= run.value(i, h - 1, q));
                    }
                }
            }
        }
        let d = run.paired_difference((1, 0), (2, 0)).unwrap();
        assert!(d.estimate >= -2.0 * d.std_error);
        let strong = run.estimate(1, 2).unwrap();
        assert!(
            (strong.estimate - 1.0).abs() <= 2.0 * strong.std_error.max(1e-3),
            "{strong:?}"
        );
    }

    #[test]
    fn alpha_two_uses_the_rank_one_kernel() {
        // B_2(s) = s·N, so the integrand is exp(min(0, T(√2N − T)))
        let run = pickands_sweep(2.0, &[1.0], &[0.0], 400, 64, 5).unwrap();
        let est = run.estimate(0, 0).unwrap();
        // E[exp(min(0, √2N − 1))] in closed form
        let s2 = std::f64::consts::SQRT_2;
        let exact = normal_tail(1.0 / s2)
            + (-1.0f64).exp() * (1.0f64).exp() * (1.0 - normal_tail(1.0 / s2 - s2));
        assert!(
            (est.estimate - exact).abs() < 3.0 * est.std_error,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn grid_refinement_is_stable() {
        let coarse = pickands_tilde(1.0, 1.0, 2000, 128, 31).unwrap();
        let fine = pickands_tilde(1.0, 1.0, 2000, 256, 32).unwrap();
        let joint = (coarse.std_error.powi(2) + fine.std_error.powi(2)).sqrt();
        assert!(
            (coarse.estimate - fine.estimate).abs() < 2.0 * joint + 0.02,
            "{coarse:?} {fine:?}"
        );
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(pickands_tilde(0.0, 1.0, 100, 64, 0).is_err());
        assert!(pickands_tilde(2.5, 1.0, 100, 64, 0).is_err());
        assert!(piterbarg_tilde(1.0, -1.0, 1.0, 100, 64, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tail_symmetry(x in -8.0f64..8.0) {
            prop_assert!((normal_tail(x) + normal_tail(-x) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn log_tail_consistent(x in -5.0f64..37.0) {
            let v = normal_tail(x);
            prop_assert!((v.ln() - log_normal_tail(x)).abs() <= 1e-13 * log_normal_tail(x).abs().max(1.0));
        }

        #[test]
        fn limit_cdf_in_unit_interval(rate in 0.01f64..50.0, x in 0.0f64..100.0) {
            let v = ruin_time_limit_cdf(rate, x);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

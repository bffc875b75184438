//! Acceptance checks, one function per criterion. Each returns a report with
//! a pass flag, the measured quantities and the wall time.

use std::fmt;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crate::asympt::{approx_ruin, pickands_sweep};
use crate::error::Result;
use crate::gauss_sim::Grid;
use crate::kernels::CovKernel;
use crate::montecarlo::{
    normal_tail_importance, Estimator, RuinKind, RuinRun, RuinSimulation, Target, WindowRule,
};
use crate::riskproc::DiscountSpec;
use crate::special::{
    fbm_linear_discount_rate_doubled, fbm_linear_discount_sigma2_doubled, scaled_bm_series,
    VarianceModel,
};

/// Replications of the shared importance-sampling run.
pub const SHARED_REPS: usize = 200_000;
/// Grid size of the shared importance-sampling run.
pub const SHARED_GRID_N: usize = 2048;
const SHARED_U: [f64; 3] = [4.0, 6.0, 8.0];
const SHARED_SEED: u64 = 20_240_601;

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} | {} | {} | {:.2}s",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn report(
    id: u32,
    title: &'static str,
    start: Instant,
    limit: Duration,
    pass: bool,
    detail: String,
) -> CriterionReport {
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    CriterionReport {
        id,
        title,
        pass: pass && in_time,
        detail: if in_time {
            detail
        } else {
            format!("{detail}; exceeded time limit {}s", limit.as_secs())
        },
        elapsed,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn half_hurst_linear_model() -> Result<VarianceModel> {
    VarianceModel::new(CovKernel::fbm(0.5)?, DiscountSpec::Linear { rate: 1.0 })
}

/// Published closed form `Γ(2H+1,t)(1−2e^{−t}) + e^{−2t}Γ*(2H+1,t)` against
/// double quadrature, 1e−6 relative.
pub fn criterion_1() -> Result<CriterionReport> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0.0, 0.0, 0.0);
    for h in [0.25, 0.5, 0.75] {
        let model = VarianceModel::new(CovKernel::fbm(h)?, DiscountSpec::Linear { rate: 1.0 })?;
        for t in [0.5, 1.0, 2.0] {
            let closed = fbm_linear_discount_sigma2_doubled(h, t)?;
            let quad = model.sigma2_quadrature(t)?;
            if rel(closed, quad) >= worst {
                worst = rel(closed, quad);
                worst_at = (h, t, closed, quad);
            }
        }
    }
    let (h, t, closed, quad) = worst_at;
    Ok(report(
        1,
        "closed-form variance",
        start,
        Duration::from_secs(10),
        worst < 1e-6,
        format!("max rel err {worst:.3e} at H={h} t={t} (formula {closed:.7}, quadrature {quad:.7}); tol 1e-6"),
    ))
}

/// Scaled-BM series against double quadrature (1e−8 absolute) and its
/// leading coefficient at t = 1e−3 (1e−3 relative).
pub fn criterion_2() -> Result<CriterionReport> {
    let start = Instant::now();
    let model = VarianceModel::new(CovKernel::scaled_bm(), DiscountSpec::Linear { rate: 1.0 })?;
    let mut worst: f64 = 0.0;
    for t in [0.25, 1.0, 2.0] {
        worst = worst.max((scaled_bm_series(t)? - model.sigma2_quadrature(t)?).abs());
    }
    let t = 1e-3;
    let lead = scaled_bm_series(t)? / (t * t);
    let lead_err = rel(lead, 2.0 / 3.0);
    Ok(report(
        2,
        "series variance",
        start,
        Duration::from_secs(10),
        worst < 1e-8 && lead_err < 1e-3,
        format!("max abs err {worst:.3e} (tol 1e-8); series(1e-3)/t^2 rel err {lead_err:.4e} (tol 1e-3)"),
    ))
}

/// Published rate expression against central differences of σ², both
/// expected at ≈ 4.6191 and within 1e−4 of each other.
pub fn criterion_3() -> Result<CriterionReport> {
    let start = Instant::now();
    let model = half_hurst_linear_model()?;
    let expression = fbm_linear_discount_rate_doubled(0.5, 1.0)?;
    let h = 1e-4;
    let sigma = |t: f64| model.sigma2(t).map(f64::sqrt);
    let fd = (sigma(1.0 + h)? - sigma(1.0 - h)?) / (2.0 * h) / sigma(1.0)?.powi(3);
    let target = 4.6191;
    let agree = rel(expression, fd) < 1e-4;
    let on_target = rel(expression, target) < 1e-4 && rel(fd, target) < 1e-4;
    Ok(report(
        3,
        "derivative identity",
        start,
        Duration::from_secs(10),
        agree && on_target,
        format!("expression {expression:.6}, finite differences {fd:.6}, rel gap {:.3e} (tol 1e-4); target {target}", rel(expression, fd)),
    ))
}

struct SharedRun {
    run: RuinRun,
    psi: Vec<(f64, f64)>,
    log_limit: f64,
    model_rate: f64,
    elapsed: Duration,
}

fn shared_run() -> Result<&'static SharedRun> {
    static SHARED: OnceLock<std::result::Result<SharedRun, crate::error::Error>> = OnceLock::new();
    SHARED
        .get_or_init(|| {
            let start = Instant::now();
            let kernel = CovKernel::fbm(0.5)?;
            let discount = DiscountSpec::Linear { rate: 1.0 };
            let rule = WindowRule::COverU { t_const: 1.0 };
            let max_window = SHARED_U.iter().map(|&u| rule.t_u(u)).fold(0.0, f64::max);
            let grid = Grid::for_kernel(&kernel, 1.0 + max_window, SHARED_GRID_N)?;
            let sim = RuinSimulation::new(&kernel, &discount, 1.0, 1.0, &grid)?;
            let targets: Vec<Target> = SHARED_U
                .iter()
                .map(|&u| Target {
                    u,
                    windows: vec![rule.t_u(u)],
                })
                .collect();
            let run = sim.run(&targets, Estimator::Importance, SHARED_REPS, SHARED_SEED)?;
            let model = half_hurst_linear_model()?;
            let mut psi = Vec::new();
            let mut log_limit = 0.0;
            let mut model_rate = 0.0;
            for &u in &SHARED_U {
                let a = approx_ruin(&model, 1.0, u, 1.0)?;
                psi.push((a.psi_approx, a.log_psi_approx));
                log_limit = a.log_scale_limit;
                model_rate = a.ruin_time_rate;
            }
            Ok(SharedRun {
                run,
                psi,
                log_limit,
                model_rate,
                elapsed: start.elapsed(),
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

/// Time charged to a criterion that uses the shared run: its own work plus
/// the shared run, which is counted in full by every user.
fn shared_report(
    id: u32,
    title: &'static str,
    start: Instant,
    shared: &SharedRun,
    limit: Duration,
    pass: bool,
    detail: String,
) -> CriterionReport {
    let mut r = report(id, title, start, limit, pass, detail);
    let total = r.elapsed.max(shared.elapsed);
    if total >= limit && r.pass {
        r.pass = false;
        r.detail = format!("{}; exceeded time limit {}s", r.detail, limit.as_secs());
    }
    r.elapsed = total;
    r
}

/// P̂_S(u,T_u)/Ψ(g_u(S)) in [0.7, 1.4] at u = 6 and closer to 1 than at u = 4.
pub fn criterion_4() -> Result<CriterionReport> {
    let start = Instant::now();
    let shared = shared_run()?;
    let mut ratios = Vec::new();
    for (k, &(_, log_psi)) in shared.psi.iter().enumerate() {
        let e = shared.run.estimate(k, 0, RuinKind::Parisian)?;
        ratios.push((e.estimate.ln() - log_psi).exp());
    }
    let (r4, r6) = (ratios[0], ratios[1]);
    let pass = (0.7..=1.4).contains(&r6) && (r6 - 1.0).abs() < (r4 - 1.0).abs();
    Ok(shared_report(
        4,
        "exact asymptotics",
        start,
        shared,
        Duration::from_secs(600),
        pass,
        format!(
            "ratio u=4 {r4:.4}, u=6 {r6:.4}, u=8 {:.4}; need u=6 in [0.7, 1.4] and |r6-1| < |r4-1|",
            ratios[2]
        ),
    ))
}

/// log P̂/u² within 15% of −1/(2σ²(S)) at u = 8, approaching it monotonically.
pub fn criterion_5() -> Result<CriterionReport> {
    let start = Instant::now();
    let shared = shared_run()?;
    let mut ratios = Vec::new();
    for (k, &u) in SHARED_U.iter().enumerate() {
        let e = shared.run.estimate(k, 0, RuinKind::Parisian)?;
        ratios.push(e.estimate.ln() / (u * u) / shared.log_limit);
    }
    let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let pass = gaps[2] <= 0.15 && monotone;
    Ok(shared_report(
        5,
        "log-scale limit",
        start,
        shared,
        Duration::from_secs(900),
        pass,
        format!(
            "(log P/u^2)/limit at u=4,6,8: {:.4}, {:.4}, {:.4} (limit {:.5}); need |r8-1| <= 0.15 and monotone trend",
            ratios[0], ratios[1], ratios[2], shared.log_limit
        ),
    ))
}

/// Parisian ≤ classical on every seed, monotone in the window under common
/// random numbers, and T_u = 0 identical to the classical estimator.
pub fn criterion_6() -> Result<CriterionReport> {
    let start = Instant::now();
    let kernel = CovKernel::fbm(0.5)?;
    let windows = vec![0.0, 0.01, 0.05];
    let grid = Grid::for_kernel(&kernel, 1.05, 512)?;
    let sim = RuinSimulation::new(
        &kernel,
        &DiscountSpec::Linear { rate: 1.0 },
        1.0,
        1.0,
        &grid,
    )?;
    let targets = [
        Target {
            u: 0.2,
            windows: windows.clone(),
        },
        Target {
            u: 0.6,
            windows: windows.clone(),
        },
    ];
    let mut violations = Vec::new();
    let mut checked = 0;
    for seed in 1..=8u64 {
        for estimator in [Estimator::Crude, Estimator::Importance] {
            let run = sim.run(&targets, estimator, 2000, seed)?;
            for k in 0..targets.len() {
                let classical = run.estimate(k, 0, RuinKind::Classical)?;
                let p: Vec<_> = (0..windows.len())
                    .map(|w| run.estimate(k, w, RuinKind::Parisian))
                    .collect::<Result<_>>()?;
                checked += 1;
                if p.iter().any(|e| e.estimate > classical.estimate) {
                    violations.push(format!(
                        "seed {seed} {estimator:?} u={}: parisian > classical",
                        targets[k].u
                    ));
                }
                if p.windows(2).any(|w| w[1].estimate > w[0].estimate) {
                    violations.push(format!(
                        "seed {seed} {estimator:?} u={}: not monotone in T",
                        targets[k].u
                    ));
                }
                if p[0] != classical {
                    violations.push(format!(
                        "seed {seed} {estimator:?} u={}: T=0 differs from classical",
                        targets[k].u
                    ));
                }
            }
        }
    }
    let detail = if violations.is_empty() {
        format!("{checked} runs (8 seeds, crude and IS, 2 reserves, T in {windows:?}) all ordered")
    } else {
        violations.join("; ")
    };
    Ok(report(
        6,
        "ordering and monotonicity",
        start,
        Duration::from_secs(600),
        violations.is_empty(),
        detail,
    ))
}

/// Weighted ruin-time law at u = 6 within sup-distance 0.15 of Exp(4.6191).
pub fn criterion_7() -> Result<CriterionReport> {
    let start = Instant::now();
    let shared = shared_run()?;
    let stated_rate = fbm_linear_discount_rate_doubled(0.5, 1.0)?;
    let xs: Vec<f64> = (0..=40).map(|i| 0.025 * i as f64).collect();
    let stated = shared.run.ruin_time(1, 0, &xs, stated_rate)?;
    let model = shared.run.ruin_time(1, 0, &xs, shared.model_rate)?;
    let pass = stated.sup_distance <= 0.15;
    Ok(shared_report(
        7,
        "ruin-time law",
        start,
        shared,
        Duration::from_secs(900),
        pass,
        format!(
            "sup distance to Exp({stated_rate:.4}) = {:.4} (tol 0.15); to model rate Exp({:.4}) = {:.4}; conditional ESS {:.0} from {} samples",
            stated.sup_distance, shared.model_rate, model.sup_distance, stated.conditional_ess, stated.samples
        ),
    ))
}

/// IS on a single normal against Ψ(g), and the mean likelihood ratio on the
/// full path problem.
pub fn criterion_8() -> Result<CriterionReport> {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for g in [2.0, 4.0, 6.0] {
        let e = normal_tail_importance(g, 100_000, 8)?;
        let exact = crate::asympt::normal_tail(g);
        let z = (e.estimate - exact) / e.std_error;
        pass &= z.abs() <= 3.0;
        parts.push(format!("g={g}: z={z:.2}"));
    }
    // full problem at a moderate barrier so the likelihood ratio has finite
    // practical variance (log-ratio standard deviation equals g_u(S))
    let kernel = CovKernel::fbm(0.5)?;
    let grid = Grid::for_kernel(&kernel, 1.0, 512)?;
    let sim = RuinSimulation::new(
        &kernel,
        &DiscountSpec::Linear { rate: 1.0 },
        0.1,
        1.0,
        &grid,
    )?;
    let run = sim.run(
        &[Target {
            u: 0.3,
            windows: vec![0.0],
        }],
        Estimator::Importance,
        100_000,
        8,
    )?;
    let lr = run.likelihood_ratio_mean(0)?;
    let z = (lr.estimate - 1.0) / lr.std_error;
    pass &= z.abs() <= 3.0;
    parts.push(format!(
        "mean LR {:.4} ± {:.4} (z={z:.2})",
        lr.estimate, lr.std_error
    ));
    Ok(report(
        8,
        "IS unbiasedness",
        start,
        Duration::from_secs(600),
        pass,
        parts.join("; "),
    ))
}

/// Pickands/Piterbarg estimators: exactly 1 at T = 0, never above 1,
/// nondecreasing in Q pathwise, and H̃₂^{50}(1) within 2 SE of 1.
pub fn criterion_9() -> Result<CriterionReport> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 1.5, 2.0] {
        let run = pickands_sweep(alpha, &[0.0, 1.0, 2.0], &[0.0, 5.0, 50.0], 4000, 512, 9)?;
        let zero = run.estimate(0, 0)?;
        let exact_one = zero.estimate == 1.0 && zero.std_error == 0.0;
        let mut bounded = true;
        let mut monotone = true;
        for i in 0..run.reps {
            for h in 0..3 {
                for q in 0..3 {
                    bounded &= run.value(i, h, q) <= 1.0;
                    if q > 0 {
                        monotone &= run.value(i, h, q) >= run.value(i, h, q - 1);
                    }
                }
            }
        }
        pass &= exact_one && bounded && monotone;
        parts.push(format!(
            "alpha={alpha}: T=0 -> {}, H(1)={:.4}, bounded={bounded}, monotone in Q={monotone}",
            zero.estimate,
            run.estimate(1, 0)?.estimate
        ));
        if alpha == 2.0 {
            let strong = run.estimate(1, 2)?;
            let ok = (strong.estimate - 1.0).abs() <= 2.0 * strong.std_error;
            pass &= ok;
            parts.push(format!(
                "H_2^50(1)={} ± {:.2e}",
                strong.estimate, strong.std_error
            ));
        }
    }
    Ok(report(
        9,
        "Pickands/Piterbarg estimators",
        start,
        Duration::from_secs(600),
        pass,
        parts.join("; "),
    ))
}

/// `simulate` twice with different worker counts gives byte-identical CSVs.
pub fn criterion_10() -> Result<CriterionReport> {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("ruin-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| crate::error::Error::Config(e.to_string()))?;
    let output = dir.join("simulate.csv");
    let config = serde_json::json!({
        "kernel": {"family": "fbm", "hurst": 0.5},
        "discount": {"kind": "linear", "rate": 1.0},
        "c": 1.0,
        "s_horizon": 1.0,
        "window": {"mode": "c_over_u", "t_const": 1.0},
        "u_values": [1.0, 2.0],
        "grid_n": 256,
        "reps": 4000,
        "estimator": "importance",
        "seed": 10,
        "output": output,
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, config.to_string())
        .map_err(|e| crate::error::Error::Config(e.to_string()))?;
    let mut outputs = Vec::new();
    let mut codes = Vec::new();
    for workers in ["1", "4"] {
        let code = crate::cli::run_with_seed_override(
            [
                "ruin",
                "simulate",
                config_path.to_str().unwrap_or_default(),
                "--workers",
                workers,
            ],
            None,
        );
        codes.push(code);
        outputs.push(std::fs::read(&output).unwrap_or_default());
    }
    let _ = std::fs::remove_dir_all(&dir);
    let identical = !outputs[0].is_empty() && outputs[0] == outputs[1];
    Ok(report(
        10,
        "determinism",
        start,
        Duration::from_secs(600),
        codes == [0, 0] && identical,
        format!(
            "exit codes {codes:?}; CSVs of {} bytes identical: {identical}",
            outputs[0].len()
        ),
    ))
}

/// Every criterion in order; a criterion that errors is reported as failed.
pub fn run_all() -> Vec<CriterionReport> {
    type Check = (u32, &'static str, fn() -> Result<CriterionReport>);
    let checks: [Check; 10] = [
        (1, "closed-form variance", criterion_1),
        (2, "series variance", criterion_2),
        (3, "derivative identity", criterion_3),
        (4, "exact asymptotics", criterion_4),
        (5, "log-scale limit", criterion_5),
        (6, "ordering and monotonicity", criterion_6),
        (7, "ruin-time law", criterion_7),
        (8, "IS unbiasedness", criterion_8),
        (9, "Pickands/Piterbarg estimators", criterion_9),
        (10, "determinism", criterion_10),
    ];
    checks
        .iter()
        .map(|&(id, title, check)| {
            check().unwrap_or_else(|e| CriterionReport {
                id,
                title,
                pass: false,
                detail: format!("error: {e}"),
                elapsed: Duration::ZERO,
            })
        })
        .collect()
}

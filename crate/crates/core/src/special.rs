//! Variance function σ²(t) of the integrated loss, its derivative, the
//! normalized barrier g_u(t), and closed forms for two worked models:
//!
//! * fBm loss rate with δ(t) = t, in terms of the incomplete gamma pair
//!   Γ(a,t) = ∫₀ᵗ x^{a−1}e^{−x}dx and Γ*(a,t) = ∫₀ᵗ x^{a−1}e^{x}dx;
//! * scaled Brownian motion B(t)/√t with δ(t) = t, as a power series.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use crate::error::{domain, Error, Result};
use crate::kernels::{CovKernel, KernelFamily};
use crate::quad;
use crate::riskproc::{delta_tilde, DiscountSpec};

/// Absolute tolerance of the two-dimensional σ² quadrature.
pub const SIGMA2_ABS_TOL: f64 = 1e-9;
/// Relative tolerance of one-dimensional quadratures.
pub const QUAD_REL_TOL: f64 = 1e-12;
/// Largest t for which the scaled-BM series is evaluated.
pub const SCALED_BM_SERIES_MAX_T: f64 = 3.0;

/// Lower incomplete gamma γ(a, t) = ∫₀ᵗ x^{a−1} e^{−x} dx (not regularized).
pub fn inc_gamma_lower(a: f64, t: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!(
            "incomplete gamma needs finite t >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let log_prefactor = a * t.ln() - t;
    if t < a + 1.0 {
        // γ(a,t) = e^{−t} t^a Σ t^n / (a(a+1)…(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..1000 {
            term *= t / (a + n as f64);
            sum += term;
            if term < sum * 1e-17 {
                return Ok(log_prefactor.exp() * sum);
            }
        }
        Err(domain(format!(
            "incomplete gamma series failed for a={a}, t={t}"
        )))
    } else {
        // Γ(a) − Γ_upper(a,t), upper tail by Lentz's continued fraction
        let tiny = 1e-300;
        let mut b = t + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                let upper = log_prefactor.exp() * h;
                return Ok(libm::tgamma(a) - upper);
            }
        }
        Err(domain(format!(
            "incomplete gamma continued fraction failed for a={a}, t={t}"
        )))
    }
}

/// Γ*(a, t) = ∫₀ᵗ x^{a−1} e^{x} dx = Σ_k t^{a+k} / (k!·(a+k)).
pub fn inc_gamma_star(a: f64, t: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!(
            "incomplete gamma needs finite t >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let ta = t.powf(a);
    let mut power = 1.0; // t^k / k!
    let mut sum = 0.0;
    for k in 0..10_000usize {
        let term = power / (a + k as f64);
        sum += term;
        if k as f64 > t && term < 1e-15 * sum {
            return Ok(ta * sum);
        }
        power *= t / (k + 1) as f64;
    }
    Err(domain(format!(
        "Γ* series failed to converge for a={a}, t={t}"
    )))
}

/// σ²(t) for an fBm loss rate with δ(t) = t:
/// `½·[Γ(2H+1,t)(1−2e^{−t}) + e^{−2t}Γ*(2H+1,t)]`.
pub fn fbm_linear_discount_sigma2(hurst: f64, t: f64) -> Result<f64> {
    Ok(0.5 * fbm_linear_discount_sigma2_doubled(hurst, t)?)
}

/// `Γ(2H+1,t)(1−2e^{−t}) + e^{−2t}Γ*(2H+1,t)`, the variance of the
/// integrated process when the loss rate is √2·B_H (covariance
/// `t^{2H}+s^{2H}−|t−s|^{2H}`); twice [`fbm_linear_discount_sigma2`].
pub fn fbm_linear_discount_sigma2_doubled(hurst: f64, t: f64) -> Result<f64> {
    let a = 2.0 * hurst + 1.0;
    let g = inc_gamma_lower(a, t)?;
    let gs = inc_gamma_star(a, t)?;
    Ok(g * (1.0 - 2.0 * (-t).exp()) + (-2.0 * t).exp() * gs)
}

/// Ruin-time rate σ'(S)/σ³(S) written with the doubled variance:
/// `[e^{−S}(S^{2H}+Γ) − e^{−2S}(S^{2H}+Γ*)] / (Γ(1−2e^{−S}) + e^{−2S}Γ*)²`.
pub fn fbm_linear_discount_rate_doubled(hurst: f64, s: f64) -> Result<f64> {
    let a = 2.0 * hurst + 1.0;
    let g = inc_gamma_lower(a, s)?;
    let gs = inc_gamma_star(a, s)?;
    let p = s.powf(2.0 * hurst);
    let num = (-s).exp() * (p + g) - (-2.0 * s).exp() * (p + gs);
    let den = fbm_linear_discount_sigma2_doubled(hurst, s)?;
    Ok(num / (den * den))
}

/// σ'(S)/σ³(S) for the standard fBm loss rate with δ(t) = t. Halving the
/// variance doubles the rate.
pub fn fbm_linear_discount_rate(hurst: f64, s: f64) -> Result<f64> {
    Ok(2.0 * fbm_linear_discount_rate_doubled(hurst, s)?)
}

fn series_moments() -> &'static Vec<f64> {
    static MOMENTS: OnceLock<Vec<f64>> = OnceLock::new();
    MOMENTS.get_or_init(|| {
        // m_k = ∫₀¹ (1+z)^{k−2} √z dz, k = 0..=MAX; z = s² removes the root
        (0..=MAX_SERIES_TERMS)
            .map(|k| {
                let p = k as i32 - 2;
                quad::integrate(
                    |s| 2.0 * s * s * (1.0 + s * s).powi(p),
                    0.0,
                    1.0,
                    0.0,
                    1e-14,
                )
                .expect("smooth integrand on [0, 1]")
                .value
            })
            .collect()
    })
}

const MAX_SERIES_TERMS: usize = 120;

/// Partial sum `⅔t² + Σ_{k=3}^{k_max} (−1)^k 2(k−1)/k! t^k m_k`.
pub fn scaled_bm_series_terms(t: f64, k_max: usize) -> Result<f64> {
    if !(0.0..=SCALED_BM_SERIES_MAX_T).contains(&t) {
        return Err(domain(format!(
            "scaled-BM series is only certified on [0, {SCALED_BM_SERIES_MAX_T}], got t={t}"
        )));
    }
    if k_max > MAX_SERIES_TERMS {
        return Err(domain(format!(
            "at most {MAX_SERIES_TERMS} series terms are tabulated"
        )));
    }
    let m = series_moments();
    let mut sum = 2.0 / 3.0 * t * t;
    let mut coef = t * t / 2.0; // t^k / k!
    for k in 3..=k_max {
        coef *= t / k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * 2.0 * (k - 1) as f64 * coef * m[k];
    }
    Ok(sum)
}

/// Magnitude of term k of the scaled-BM series.
fn scaled_bm_term(t: f64, k: usize) -> f64 {
    let mut coef = 1.0;
    for j in 1..=k {
        coef *= t / j as f64;
    }
    2.0 * (k - 1) as f64 * coef * series_moments()[k]
}

/// σ²(t) for the scaled-BM loss rate with δ(t) = t, truncated where the
/// first omitted term drops below 1e−12.
pub fn scaled_bm_series(t: f64) -> Result<f64> {
    if !(0.0..=SCALED_BM_SERIES_MAX_T).contains(&t) {
        return Err(domain(format!(
            "scaled-BM series is only certified on [0, {SCALED_BM_SERIES_MAX_T}], got t={t}"
        )));
    }
    let mut k_max = 3;
    while k_max < MAX_SERIES_TERMS
        && ((k_max as f64) < t + 2.0 || scaled_bm_term(t, k_max + 1) >= 1e-12)
    {
        k_max += 1;
    }
    scaled_bm_series_terms(t, k_max)
}

/// σ'(S)/σ³(S) for the scaled-BM loss rate with δ(t) = t:
/// `S^{−1/2} e^{−S} Γ(3/2, S) / (σ²(S))²`.
pub fn scaled_bm_rate(s: f64) -> Result<f64> {
    let v = scaled_bm_series(s)?;
    Ok(s.powf(-0.5) * (-s).exp() * inc_gamma_lower(1.5, s)? / (v * v))
}

/// σ²(·) for a kernel/discount pair, with a concurrent evaluation cache.
#[derive(Debug)]
pub struct VarianceModel {
    kernel: CovKernel,
    discount: DiscountSpec,
    abs_tol: f64,
    cache: RwLock<HashMap<u64, f64>>,
}

impl Clone for VarianceModel {
    fn clone(&self) -> Self {
        Self {
            kernel: self.kernel.clone(),
            discount: self.discount.clone(),
            abs_tol: self.abs_tol,
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl VarianceModel {
    pub fn new(kernel: CovKernel, discount: DiscountSpec) -> Result<Self> {
        discount.validate()?;
        Ok(Self {
            kernel,
            discount,
            abs_tol: SIGMA2_ABS_TOL,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Overrides the σ² quadrature tolerance (e.g. for finite-difference
    /// checks that need more digits than the default).
    pub fn with_tolerance(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.cache = RwLock::new(HashMap::new());
        self
    }

    pub fn kernel(&self) -> &CovKernel {
        &self.kernel
    }

    pub fn discount(&self) -> &DiscountSpec {
        &self.discount
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(domain(format!("time must be finite and >= 0, got {t}")));
        }
        Ok(())
    }

    /// Closed form when one is known for this kernel/discount pair.
    pub fn closed_form(&self, t: f64) -> Option<f64> {
        let unit_linear = matches!(self.discount, DiscountSpec::Linear { rate } if rate == 1.0);
        if !unit_linear {
            return None;
        }
        match self.kernel.family() {
            KernelFamily::Fbm { hurst } if hurst < 1.0 => fbm_linear_discount_sigma2(hurst, t).ok(),
            KernelFamily::Bm => fbm_linear_discount_sigma2(0.5, t).ok(),
            KernelFamily::ScaledBm if t <= SCALED_BM_SERIES_MAX_T => scaled_bm_series(t).ok(),
            _ => None,
        }
    }

    /// σ²(t), from a closed form when available, else by quadrature.
    pub fn sigma2(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        if let Some(v) = self.closed_form(t) {
            return Ok(v);
        }
        self.sigma2_quadrature(t)
    }

    /// σ²(t) = 2∫₀ᵗ∫₀ᵛ e^{−δ(w)−δ(v)} R(w,v) dw dv by iterated adaptive
    /// quadrature over the triangle; cached per t.
    pub fn sigma2_quadrature(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        if let Some(&v) = self.cache.read().expect("cache lock").get(&t.to_bits()) {
            return Ok(v);
        }
        let inner_tol = self.abs_tol / (64.0 * t.max(1.0));
        let mut failure: Option<Error> = None;
        let outer = quad::integrate(
            |v| match self.inner(v, inner_tol) {
                Ok(x) => x,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            self.abs_tol,
            0.0,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let value = outer?.value;
        self.cache
            .write()
            .expect("cache lock")
            .insert(t.to_bits(), value);
        Ok(value)
    }

    /// 2 e^{−δ(v)} ∫₀ᵛ e^{−δ(w)} R(w,v) dw, the integrand of the outer
    /// integral and also (σ²)'(v).
    fn inner(&self, v: f64, abs_tol: f64) -> Result<f64> {
        let r = quad::integrate(
            |w| self.discount.factor(w) * self.kernel.cov_unchecked(w, v),
            0.0,
            v,
            abs_tol,
            QUAD_REL_TOL,
        )?;
        Ok(2.0 * self.discount.factor(v) * r.value)
    }

    /// (σ²)'(t) = 2∫₀ᵗ e^{−δ(s)−δ(t)} R(s,t) ds.
    pub fn sigma2_derivative(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Err(domain("sigma2_derivative needs t > 0"));
        }
        self.inner(t, 0.0)
    }

    /// g_u(t) = (u + c·δ̃(t)) / σ(t).
    pub fn g_u(&self, c: f64, u: f64, t: f64) -> Result<f64> {
        if !(u >= 0.0 && c >= 0.0) {
            return Err(domain(format!(
                "g_u needs u >= 0 and c >= 0, got u={u}, c={c}"
            )));
        }
        let var = self.sigma2(t)?;
        if var <= 0.0 {
            return Err(domain(format!("σ²({t}) = {var} leaves g_u undefined")));
        }
        Ok((u + c * delta_tilde(&self.discount, t)?) / var.sqrt())
    }

    /// σ'(t)/σ³(t) = (σ²)'(t) / (2·σ⁴(t)).
    pub fn ruin_time_rate(&self, t: f64) -> Result<f64> {
        let v = self.sigma2(t)?;
        Ok(self.sigma2_derivative(t)? / (2.0 * v * v))
    }
}

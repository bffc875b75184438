//! Exact joint Gaussian sampling of the loss rate on a uniform grid.
//!
//! Paths are `L·ξ` where `L` is the (semidefinite) Cholesky factor of the
//! grid covariance and `ξ` a vector of standard normals. The normals come
//! from a counter-based generator (ChaCha8 with an explicit stream id) pushed
//! through Wichura's AS241 inverse normal CDF, so a `(seed, stream_id)` pair
//! pins the whole sequence on every platform and replications can be farmed
//! out to any number of workers.

use ndarray::{s, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{domain, Error, Result};
use crate::kernels::CovKernel;

/// Largest grid [`factorize`] accepts. The dense factor needs `8·n²` bytes
/// (128 MiB at the limit).
pub const MAX_GRID_NODES: usize = 4096;

/// Jitter ladder, in units of the largest diagonal entry.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Uniform grid `t_i = t_start + i·Δ`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    t_start: f64,
    t_end: f64,
    n: usize,
}

impl Grid {
    pub fn new(t_start: f64, t_end: f64, n: usize) -> Result<Self> {
        if !(t_start >= 0.0 && t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(domain(format!(
                "grid needs 0 <= t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if n < 2 {
            return Err(domain(format!("grid needs at least 2 nodes, got {n}")));
        }
        Ok(Self { t_start, t_end, n })
    }

    /// Grid with `n` nodes ending at `t_end` that is valid for `kernel`:
    /// starts at 0, or at the first positive node `t_end/n` when the kernel
    /// is undefined at the origin.
    pub fn for_kernel(kernel: &CovKernel, t_end: f64, n: usize) -> Result<Self> {
        if kernel.excludes_origin() {
            Self::new(t_end / n as f64, t_end, n)
        } else {
            Self::new(0.0, t_end, n)
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.t_end
        } else {
            self.t_start + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "grid[{}, {}; n={}]", self.t_start, self.t_end, self.n)
    }
}

/// Lower factor `L` with `L·Lᵀ = Σ + jitter·I`.
///
/// Exactly degenerate directions (a zero-variance node such as fBm at t = 0,
/// or a rank-deficient kernel) produce zero columns instead of a failure.
#[derive(Debug, Clone)]
pub struct FactorizedKernel {
    grid: Option<Grid>,
    lower: Array2<f64>,
    jitter_used: f64,
    label: String,
}

impl FactorizedKernel {
    /// Factorizes an explicit covariance matrix (row-major, `dim × dim`).
    pub fn from_covariance(cov: &Array2<f64>, label: &str) -> Result<Self> {
        let (lower, jitter_used) = cholesky_with_jitter(cov, label, "explicit matrix")?;
        Ok(Self {
            grid: None,
            lower,
            jitter_used,
            label: label.to_string(),
        })
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.lower.view()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `L·ξ` for a single vector.
    pub fn apply(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if xi.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: xi.len(),
            });
        }
        Ok((0..n)
            .map(|i| {
                let row = self.lower.row(i);
                dot(
                    &row.as_slice().expect("factor is contiguous")[..=i],
                    &xi[..=i],
                )
            })
            .collect())
    }

    /// `Lᵀ·a`.
    pub fn apply_transpose(&self, a: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if a.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: a.len(),
            });
        }
        let mut out = vec![0.0; n];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = self.lower.row(i);
            for (o, &l) in out[..=i].iter_mut().zip(row.iter()) {
                *o += l * ai;
            }
        }
        Ok(out)
    }

    /// Row-wise `L·ξ` for a batch: each row of `xi` is one standard normal
    /// vector, each row of the result one path. The triangle is processed in
    /// column blocks so the zero upper half is never multiplied.
    pub fn apply_batch(&self, xi: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if xi.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: xi.ncols(),
            });
        }
        const BLOCK: usize = 256;
        let mut out = Array2::<f64>::zeros((xi.nrows(), n));
        let lt = self.lower.t();
        let mut r0 = 0;
        while r0 < n {
            let r1 = (r0 + BLOCK).min(n);
            ndarray::linalg::general_mat_mul(
                1.0,
                &xi.slice(s![.., ..r1]),
                &lt.slice(s![..r1, r0..r1]),
                0.0,
                &mut out.slice_mut(s![.., r0..r1]),
            );
            r0 = r1;
        }
        Ok(out)
    }

    /// Solves `L·x = b` by forward substitution. Fails on zero pivots.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            let row = self.lower.row(i);
            let row = row.as_slice().expect("factor is contiguous");
            let pivot = row[i];
            if pivot == 0.0 {
                return Err(Error::Singular(format!(
                    "{} has a degenerate node at index {i}",
                    self.label
                )));
            }
            x[i] = (b[i] - dot(&row[..i], &x[..i])) / pivot;
        }
        Ok(x)
    }
}

/// Builds Σ on the grid and factorizes it with the jitter ladder.
pub fn factorize(kernel: &CovKernel, grid: &Grid) -> Result<FactorizedKernel> {
    let n = grid.len();
    if n > MAX_GRID_NODES {
        return Err(domain(format!(
            "grid of {n} nodes exceeds the limit of {MAX_GRID_NODES}"
        )));
    }
    if kernel.excludes_origin() && grid.t_start() <= 0.0 {
        return Err(domain(format!("{kernel} needs a grid starting after 0")));
    }
    let nodes = grid.nodes();
    let mut cov = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.cov_unchecked(nodes[j], nodes[i]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    let (lower, jitter_used) = cholesky_with_jitter(&cov, kernel.description(), &grid.to_string())?;
    Ok(FactorizedKernel {
        grid: Some(*grid),
        lower,
        jitter_used,
        label: kernel.description().to_string(),
    })
}

/// Covariance matrix of the kernel on the grid nodes.
pub fn covariance_matrix(kernel: &CovKernel, grid: &Grid) -> Array2<f64> {
    let nodes = grid.nodes();
    Array2::from_shape_fn((nodes.len(), nodes.len()), |(i, j)| {
        kernel.cov_unchecked(nodes[i], nodes[j])
    })
}

fn cholesky_with_jitter(cov: &Array2<f64>, kernel: &str, grid: &str) -> Result<(Array2<f64>, f64)> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: cov.ncols(),
        });
    }
    let max_diag = cov.diag().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let max_abs = cov.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_diag == 0.0 {
        return Err(domain(format!(
            "{kernel} has zero variance everywhere on {grid}"
        )));
    }
    let mut last_jitter = 0.0;
    for &rung in &JITTER_LADDER {
        let jitter = rung * max_diag;
        last_jitter = jitter;
        if let Some(l) = semidefinite_cholesky(cov, jitter, max_diag, max_abs) {
            return Ok((l, jitter));
        }
    }
    Err(Error::NotPsd {
        kernel: kernel.to_string(),
        grid: grid.to_string(),
        jitter: last_jitter,
    })
}

/// Row-oriented Cholesky of `Σ + jitter·I`.
///
/// A pivot within `n·ε·max_diag` of zero marks a degenerate direction: the
/// column is set to zero, provided the residual entries it would have to
/// absorb are below `1e-10·max|Σ|`. Anything else that is not PD returns
/// `None`.
fn semidefinite_cholesky(
    cov: &Array2<f64>,
    jitter: f64,
    max_diag: f64,
    max_abs: f64,
) -> Option<Array2<f64>> {
    let n = cov.nrows();
    let pivot_tol = n as f64 * f64::EPSILON * max_diag;
    let residual_tol = 1e-10 * max_abs;
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = l.split_at_mut(i * n);
            let row_i = &tail[..n];
            let acc = if j == i {
                dot(&row_i[..j], &row_i[..j])
            } else {
                dot(&row_i[..j], &head[j * n..j * n + j])
            };
            let mut v = cov[[i, j]] - acc;
            if i == j {
                v += jitter;
                let d = if v > pivot_tol {
                    v.sqrt()
                } else if v >= -pivot_tol {
                    0.0
                } else {
                    return None;
                };
                tail[i] = d;
            } else {
                let pivot = head[j * n + j];
                if pivot > 0.0 {
                    tail[j] = v / pivot;
                } else if v.abs() <= residual_tol {
                    tail[j] = 0.0;
                } else {
                    return None;
                }
            }
            if !tail[j].is_finite() {
                return None;
            }
        }
    }
    Array2::from_shape_vec((n, n), l).ok()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// A reproducible stream of standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn normals(&self) -> NormalIter {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        NormalIter { rng }
    }

    pub fn fill_normals(&self, out: &mut [f64]) {
        let mut it = self.normals();
        for v in out.iter_mut() {
            *v = it.next_normal();
        }
    }
}

pub struct NormalIter {
    rng: ChaCha8Rng,
}

impl NormalIter {
    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }
}

impl Iterator for NormalIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

/// Inverse of the standard normal CDF (Wichura 1988, AS241 PPND16),
/// relative accuracy about 1e-16.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// One path `L·ξ` with `ξ` drawn from `rng`.
pub fn sample_path(fk: &FactorizedKernel, rng: &RngStream) -> Vec<f64> {
    let mut xi = vec![0.0; fk.dim()];
    rng.fill_normals(&mut xi);
    fk.apply(&xi).expect("normal vector sized to the factor")
}

/// Mean shift for importance sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanShift {
    /// `μ = λ·Σ·a`; the density ratio then needs no solve since `Σ⁻¹μ = λ·a`.
    Direction { a: Vec<f64>, lambda: f64 },
    /// Arbitrary mean; needs a nonsingular factor.
    Mean(Vec<f64>),
}

impl MeanShift {
    /// Resolves the shift into the mean vector and the data the density
    /// ratio needs.
    pub fn prepare(&self, fk: &FactorizedKernel) -> Result<PreparedShift> {
        let n = fk.dim();
        match self {
            MeanShift::Direction { a, lambda } => {
                let b = fk.apply_transpose(a)?;
                let mut mean = fk.apply(&b)?;
                mean.iter_mut().for_each(|m| *m *= lambda);
                let quad: f64 = b.iter().map(|v| v * v).sum();
                Ok(PreparedShift {
                    mean,
                    score: b.iter().map(|v| -lambda * v).collect(),
                    offset: -0.5 * lambda * lambda * quad,
                })
            }
            MeanShift::Mean(mean) => {
                if mean.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: mean.len(),
                    });
                }
                let v = fk.solve_lower(mean)?;
                let quad: f64 = v.iter().map(|x| x * x).sum();
                Ok(PreparedShift {
                    mean: mean.clone(),
                    score: v.iter().map(|x| -x).collect(),
                    offset: -0.5 * quad,
                })
            }
        }
    }
}

/// Shift in the form `W = mean + L·ξ`, `log dN(0,Σ)/dN(mean,Σ)(W) = score·ξ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedShift {
    pub mean: Vec<f64>,
    pub score: Vec<f64>,
    pub offset: f64,
}

impl PreparedShift {
    pub fn log_density_ratio(&self, xi: &[f64]) -> f64 {
        dot(&self.score, xi) + self.offset
    }
}

/// Draws `W ~ N(mean, Σ)` and returns it with `log[dN(0,Σ)/dN(mean,Σ)](W)`.
pub fn sample_path_shifted(
    fk: &FactorizedKernel,
    rng: &RngStream,
    shift: &MeanShift,
) -> Result<(Vec<f64>, f64)> {
    let prepared = shift.prepare(fk)?;
    let mut xi = vec![0.0; fk.dim()];
    rng.fill_normals(&mut xi);
    Ok(shifted_from_normals(fk, &prepared, &xi))
}

/// Deterministic core of [`sample_path_shifted`] for a given `ξ`.
pub fn shifted_from_normals(
    fk: &FactorizedKernel,
    shift: &PreparedShift,
    xi: &[f64],
) -> (Vec<f64>, f64) {
    let mut w = fk.apply(xi).expect("normal vector sized to the factor");
    for (wi, mi) in w.iter_mut().zip(&shift.mean) {
        *wi += mi;
    }
    (w, shift.log_density_ratio(xi))
}

/// Conditional law of Z given (X, Y) = (x, y) for a centred Gaussian triple:
/// mean `(x, y)·Q⁻¹·b`, variance `Var Z − bᵀ·Q⁻¹·b`.
pub fn conditional_gaussian(
    var_z: f64,
    q: [[f64; 2]; 2],
    b: [f64; 2],
    x: f64,
    y: f64,
) -> Result<(f64, f64)> {
    if q[0][1] != q[1][0] {
        return Err(domain("conditioning covariance must be symmetric"));
    }
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let scale = q[0][0].abs().max(q[1][1].abs());
    if !(q[0][0] > 0.0 && q[1][1] > 0.0) || det <= 64.0 * f64::EPSILON * scale * scale {
        return Err(Error::Singular(format!(
            "conditioning covariance {q:?} is not positive definite"
        )));
    }
    // Q⁻¹·b
    let qb0 = (q[1][1] * b[0] - q[0][1] * b[1]) / det;
    let qb1 = (q[0][0] * b[1] - q[1][0] * b[0]) / det;
    let mean = x * qb0 + y * qb1;
    let variance = (var_z - (b[0] * qb0 + b[1] * qb1)).max(0.0);
    Ok((mean, variance))
}

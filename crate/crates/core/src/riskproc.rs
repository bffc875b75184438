//! Discounted reserve paths and ruin detection.
//!
//! `R_u(t) = u + c·δ̃(t) − Y(t)` with `δ̃(t) = ∫₀ᵗ e^{−δ(s)} ds` and
//! `Y(t) = ∫₀ᵗ e^{−δ(s)} Z(s) ds`. On a grid, `Y` is the cumulative
//! trapezoid of `e^{−δ(t_i)}·z_i`; between nodes the reserve is taken to be
//! linear, which fixes how crossing times and excursion lengths are read off.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gauss_sim::Grid;
use crate::quad;

/// The rate function δ(·).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountSpec {
    /// δ(t) ≡ d.
    Constant { d: f64 },
    /// δ(t) = rate·t.
    Linear { rate: f64 },
    /// Piecewise-linear δ through `(times[i], values[i])`, constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl DiscountSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiscountSpec::Constant { d } if !d.is_finite() => {
                Err(domain("discount constant must be finite"))
            }
            DiscountSpec::Linear { rate } if !rate.is_finite() => {
                Err(domain("discount rate must be finite"))
            }
            DiscountSpec::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(domain(
                        "discount table needs equal, nonzero numbers of times and values",
                    ));
                }
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(domain("discount table entries must be finite"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(domain("discount table times must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// δ(t).
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            DiscountSpec::Constant { d } => *d,
            DiscountSpec::Linear { rate } => rate * t,
            DiscountSpec::Table { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    values[k - 1] + w * (values[k] - values[k - 1])
                }
            }
        }
    }

    /// e^{−δ(t)}.
    pub fn factor(&self, t: f64) -> f64 {
        (-self.rate(t)).exp()
    }

    /// Largest e^{−δ} on [0, t]; finite because δ is locally bounded.
    pub fn max_factor(&self, t: f64) -> f64 {
        match self {
            DiscountSpec::Constant { d } => (-d).exp(),
            DiscountSpec::Linear { rate } => 1f64.max((-rate * t).exp()),
            DiscountSpec::Table { times, .. } => times
                .iter()
                .copied()
                .filter(|&x| x <= t)
                .chain([0.0, t])
                .map(|x| self.factor(x))
                .fold(0.0, f64::max),
        }
    }
}

/// δ̃(t) = ∫₀ᵗ e^{−δ(s)} ds.
pub fn delta_tilde(discount: &DiscountSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("delta_tilde needs t >= 0, got {t}")));
    }
    match discount {
        DiscountSpec::Constant { d } => Ok(t * (-d).exp()),
        DiscountSpec::Linear { rate } => {
            if *rate == 0.0 {
                Ok(t)
            } else {
                Ok(-(-rate * t).exp_m1() / rate)
            }
        }
        DiscountSpec::Table { times, .. } => {
            // integrate piecewise between the table breakpoints
            let mut cuts = vec![0.0];
            cuts.extend(times.iter().copied().filter(|&x| x > 0.0 && x < t));
            cuts.push(t);
            let mut total = 0.0;
            for w in cuts.windows(2) {
                let r = quad::integrate(|s| discount.factor(s), w[0], w[1], 0.0, 1e-12)?;
                total += r.value;
            }
            Ok(total)
        }
    }
}

/// Per-grid quantities shared by every path on that grid.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    grid: Grid,
    nodes: Vec<f64>,
    factors: Vec<f64>,
    delta_tilde: Vec<f64>,
}

impl PathBuilder {
    pub fn new(grid: &Grid, discount: &DiscountSpec) -> Result<Self> {
        discount.validate()?;
        let nodes = grid.nodes();
        let factors = nodes.iter().map(|&t| discount.factor(t)).collect();
        let delta_tilde = nodes
            .iter()
            .map(|&t| delta_tilde(discount, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *grid,
            nodes,
            factors,
            delta_tilde,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// e^{−δ(t_i)} at the nodes.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn delta_tilde_nodes(&self) -> &[f64] {
        &self.delta_tilde
    }

    /// Cumulative integral `y` of `e^{−δ}·z` (trapezoid rule). When the grid
    /// starts after 0 the initial segment contributes a rectangle.
    pub fn integrate_into(&self, z: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.nodes.len();
        if z.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: z.len(),
            });
        }
        if y.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: y.len(),
            });
        }
        let half = 0.5 * self.grid.step();
        let mut prev = self.factors[0] * z[0];
        let mut acc = prev * self.grid.t_start();
        y[0] = acc;
        for i in 1..n {
            let cur = self.factors[i] * z[i];
            acc += half * (prev + cur);
            y[i] = acc;
            prev = cur;
        }
        Ok(())
    }

    /// Reserve values `r_i = u + c·δ̃(t_i) − y_i`.
    pub fn reserve_into(&self, y: &[f64], u: f64, c: f64, r: &mut [f64]) {
        for ((ri, &yi), &dt) in r.iter_mut().zip(y).zip(&self.delta_tilde) {
            *ri = u + c * dt - yi;
        }
    }

    /// Weights `a` with `aᵀz` equal to `y` linearly interpolated at `s`.
    pub fn linear_functional(&self, s: f64) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let t0 = self.grid.t_start();
        if !(s >= t0 && s <= self.grid.t_end()) {
            return Err(Error::Horizon {
                needed: s,
                grid_end: self.grid.t_end(),
            });
        }
        let step = self.grid.step();
        let k = (((s - t0) / step).floor() as usize).min(n - 2);
        let theta = ((s - self.nodes[k]) / step).clamp(0.0, 1.0);
        // weights of y_k and y_{k+1} in terms of z
        let mut wk = vec![0.0; n];
        wk[0] = t0;
        for i in 0..k {
            wk[i] += 0.5 * step;
            wk[i + 1] += 0.5 * step;
        }
        let mut a: Vec<f64> = wk.iter().map(|w| (1.0 - theta) * w).collect();
        // y_{k+1} = y_k + ½Δ(f_k + f_{k+1})
        for (ai, wi) in a.iter_mut().zip(&wk) {
            *ai += theta * wi;
        }
        a[k] += theta * 0.5 * step;
        a[k + 1] += theta * 0.5 * step;
        for (ai, f) in a.iter_mut().zip(&self.factors) {
            *ai *= f;
        }
        Ok(a)
    }

    pub fn build(&self, z: &[f64], u: f64, c: f64) -> Result<RiskPath> {
        let n = self.nodes.len();
        let mut y = vec![0.0; n];
        self.integrate_into(z, &mut y)?;
        let mut r = vec![0.0; n];
        self.reserve_into(&y, u, c, &mut r);
        Ok(RiskPath {
            grid: self.grid,
            z: z.to_vec(),
            discounted_premium: self.delta_tilde.iter().map(|d| c * d).collect(),
            y,
            r,
            u,
            c,
        })
    }
}

/// One sampled reserve path.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskPath {
    pub grid: Grid,
    pub z: Vec<f64>,
    pub discounted_premium: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    pub u: f64,
    pub c: f64,
}

pub fn build_risk_path(
    z: &[f64],
    grid: &Grid,
    discount: &DiscountSpec,
    u: f64,
    c: f64,
) -> Result<RiskPath> {
    if z.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: z.len(),
        });
    }
    PathBuilder::new(grid, discount)?.build(z, u, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParisianVerdict {
    pub classical_ruin: bool,
    pub parisian_ruin: bool,
    /// Parisian ruin time: excursion start plus the window.
    pub tau: Option<f64>,
    /// Start of the first below-zero excursion within the horizon.
    pub first_hit: Option<f64>,
}

impl ParisianVerdict {
    pub const SAFE: ParisianVerdict = ParisianVerdict {
        classical_ruin: false,
        parisian_ruin: false,
        tau: None,
        first_hit: None,
    };
}

pub fn detect_parisian(path: &RiskPath, s_horizon: f64, t_window: f64) -> Result<ParisianVerdict> {
    detect_on_nodes(&path.grid.nodes(), &path.r, s_horizon, t_window)
}

/// Excursion scan over a piecewise-linear reserve through `(nodes, r)`.
///
/// An excursion is a maximal interval with r < 0 (ties count as solvent).
/// It is eligible when it starts strictly before `s_horizon` (or at the first
/// node with r already negative); classical ruin is the existence of an
/// eligible excursion, which for a piecewise-linear path is the same as a
/// negative minimum on [t_start, s_horizon]. Parisian ruin needs an eligible
/// excursion lasting at least `t_window`; an excursion still open at the
/// grid end qualifies because the grid covers `s_horizon + t_window`.
pub fn detect_on_nodes(
    nodes: &[f64],
    r: &[f64],
    s_horizon: f64,
    t_window: f64,
) -> Result<ParisianVerdict> {
    let n = nodes.len();
    if r.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: r.len(),
        });
    }
    if !(t_window >= 0.0) {
        return Err(domain(format!("window must be >= 0, got {t_window}")));
    }
    let t_end = nodes[n - 1];
    let needed = s_horizon + t_window;
    if needed > t_end * (1.0 + 1e-12) || s_horizon < nodes[0] {
        return Err(Error::Horizon {
            needed,
            grid_end: t_end,
        });
    }

    let crossing = |k: usize| -> f64 {
        let (ra, rb) = (r[k], r[k + 1]);
        nodes[k] + (nodes[k + 1] - nodes[k]) * (ra / (ra - rb))
    };

    let mut verdict = ParisianVerdict::SAFE;
    // i: first node of the excursion currently being examined
    let mut i = 0;
    while i < n {
        let st = if i == 0 && r[0] < 0.0 {
            nodes[0]
        } else {
            let mut k = i;
            while k + 1 < n && !(r[k] >= 0.0 && r[k + 1] < 0.0) {
                k += 1;
            }
            if k + 1 >= n {
                break;
            }
            i = k + 1;
            let st = crossing(k);
            if st >= s_horizon {
                break;
            }
            st
        };
        let mut j = i;
        while j + 1 < n && r[j + 1] < 0.0 {
            j += 1;
        }
        let end = (j + 1 < n).then(|| crossing(j));
        if verdict.first_hit.is_none() {
            verdict.classical_ruin = true;
            verdict.first_hit = Some(st);
        }
        let long_enough = end.is_none_or(|e| e - st >= t_window);
        if long_enough {
            verdict.parisian_ruin = true;
            verdict.tau = Some(st + t_window);
            break;
        }
        i = j + 1;
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(nodes: &[f64], r: &[f64], s: f64, window: f64) -> (bool, bool, Option<f64>) {
        // fine scan of the interpolated path
        let m = 200_000;
        let t0 = nodes[0];
        let t1 = *nodes.last().unwrap();
        let h = (t1 - t0) / m as f64;
        let interp = |t: f64| {
            let k = nodes.partition_point(|&x| x <= t).clamp(1, nodes.len() - 1) - 1;
            let w = (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
            r[k] + w * (r[k + 1] - r[k])
        };
        let mut classical = false;
        let mut entry: Option<f64> = None;
        for i in 0..=m {
            let t = t0 + i as f64 * h;
            let v = interp(t);
            if v < 0.0 {
                if t <= s {
                    classical = true;
                }
                let e = *entry.get_or_insert(t);
                if e <= s && t - e >= window {
                    return (classical, true, Some(e + window));
                }
            } else {
                entry = None;
            }
        }
        (classical, false, None)
    }

    #[test]
    fn delta_tilde_closed_forms() {
        assert_eq!(
            delta_tilde(&DiscountSpec::Constant { d: 0.0 }, 1.7).unwrap(),
            1.7
        );
        let t = 0.8;
        let v = delta_tilde(&DiscountSpec::Linear { rate: 1.0 }, t).unwrap();
        assert!((v - (1.0 - (-t).exp())).abs() < 1e-15);
        let v = delta_tilde(&DiscountSpec::Constant { d: 0.5 }, 2.0).unwrap();
        assert!((v - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(delta_tilde(&DiscountSpec::Linear { rate: 1.0 }, -1.0).is_err());
    }

    #[test]
    fn delta_tilde_table_against_trapezoid() {
        let table = DiscountSpec::Table {
            times: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        };
        // oracle: fine composite trapezoid of e^{-s}
        let m = 100_000;
        let h = 1.0 / m as f64;
        let mut trap = 0.5 * (1.0 + (-1.0f64).exp());
        for i in 1..m {
            trap += (-(i as f64) * h).exp();
        }
        trap *= h;
        let v = delta_tilde(&table, 1.0).unwrap();
        assert!((v - trap).abs() < 1e-10);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        // constant extrapolation beyond the last knot
        let v2 = delta_tilde(&table, 2.0).unwrap();
        assert!((v2 - v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn table_validation() {
        let bad = DiscountSpec::Table {
            times: vec![1.0, 0.5],
            values: vec![0.0, 0.0],
        };
        assert!(bad.validate().is_err());
        let bad = DiscountSpec::Table {
            times: vec![0.0],
            values: vec![],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_loss_never_ruins() {
        let grid = Grid::new(0.0, 2.0, 21).unwrap();
        let path = build_risk_path(
            &[0.0; 21],
            &grid,
            &DiscountSpec::Linear { rate: 1.0 },
            1.0,
            0.5,
        )
        .unwrap();
        assert!(path.r.windows(2).all(|w| w[1] > w[0]));
        let v = detect_parisian(&path, 1.5, 0.3).unwrap();
        assert_eq!(v, ParisianVerdict::SAFE);
    }

    #[test]
    fn constant_loss_integrates_exactly() {
        let grid = Grid::new(0.0, 1.0, 11).unwrap();
        let path = build_risk_path(
            &[1.0; 11],
            &grid,
            &DiscountSpec::Constant { d: 0.0 },
            0.0,
            0.0,
        )
        .unwrap();
        for (i, (&y, &r)) in path.y.iter().zip(&path.r).enumerate() {
            let t = grid.node(i);
            assert!((y - t).abs() < 1e-15);
            assert!((r + t).abs() < 1e-15);
        }
        assert_eq!(path.y[0], 0.0);
    }

    #[test]
    fn length_mismatch() {
        let grid = Grid::new(0.0, 1.0, 11).unwrap();
        let err = build_risk_path(
            &[1.0; 10],
            &grid,
            &DiscountSpec::Constant { d: 0.0 },
            0.0,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 11,
                got: 10
            }
        ));
    }

    #[test]
    fn trapezoid_against_fine_quadrature() {
        // z is the piecewise-linear interpolant of random nodes; the oracle
        // integrates e^{-t}·z(t) on a much finer grid.
        let grid = Grid::new(0.0, 1.0, 101).unwrap();
        let z: Vec<f64> = crate::gauss_sim::RngStream::new(11, 0)
            .normals()
            .take(101)
            .collect();
        let path =
            build_risk_path(&z, &grid, &DiscountSpec::Linear { rate: 1.0 }, 0.0, 1.0).unwrap();
        let zi = |t: f64| {
            let k = ((t * 100.0).floor() as usize).min(99);
            let w = t * 100.0 - k as f64;
            z[k] + w * (z[k + 1] - z[k])
        };
        let m = 400_000;
        let h = 1.0 / m as f64;
        let mut oracle = 0.0;
        for i in 0..m {
            let t = (i as f64 + 0.5) * h;
            oracle += (-t).exp() * zi(t) * h;
        }
        // trapezoid error bound: Δ²/12 · max|f''| with f'' driven by e^{-t}·z
        let step = grid.step();
        let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dz = z
            .windows(2)
            .fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs() / step));
        let bound = step * step / 12.0 * (zmax + 2.0 * dz) + 1e-9;
        assert!(
            (path.y[100] - oracle).abs() <= bound,
            "{} vs {}",
            path.y[100],
            oracle
        );
    }

    #[test]
    fn scaled_grid_rectangle_offset() {
        let grid = Grid::new(0.5, 1.5, 3).unwrap();
        let path = build_risk_path(
            &[2.0, 2.0, 2.0],
            &grid,
            &DiscountSpec::Constant { d: 0.0 },
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(path.y[0], 1.0);
        assert!((path.y[2] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn linear_functional_matches_integration() {
        let grid = Grid::new(0.0, 1.3, 57).unwrap();
        let builder = PathBuilder::new(&grid, &DiscountSpec::Linear { rate: 1.0 }).unwrap();
        let z: Vec<f64> = crate::gauss_sim::RngStream::new(1, 1)
            .normals()
            .take(57)
            .collect();
        let path = builder.build(&z, 0.0, 1.0).unwrap();
        for s in [0.0, 0.4, 1.0, 1.3] {
            let a = builder.linear_functional(s).unwrap();
            let lin: f64 = a.iter().zip(&z).map(|(a, z)| a * z).sum();
            let k = ((s / grid.step()).floor() as usize).min(55);
            let th = (s - grid.node(k)) / grid.step();
            let interp = (1.0 - th) * path.y[k] + th * path.y[k + 1];
            assert!((lin - interp).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn hand_geometry_excursion() {
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let r = [1.0, -1.0, -1.0, 1.0];
        let v = detect_on_nodes(&nodes, &r, 1.0, 0.5).unwrap();
        assert!(v.classical_ruin && v.parisian_ruin);
        assert_eq!(v.first_hit, Some(0.5));
        assert_eq!(v.tau, Some(1.0));
        // the excursion is (0.5, 2.5): a 2.0 window still fits, 2.1 does not
        assert!(
            detect_on_nodes(&nodes, &r, 1.0, 2.0 - 1e-12)
                .unwrap()
                .parisian_ruin
        );
        let long = detect_on_nodes(
            &[0.0, 1.0, 2.0, 3.0, 6.0],
            &[1.0, -1.0, -1.0, 1.0, 1.0],
            3.0,
            2.1,
        )
        .unwrap();
        assert!(long.classical_ruin && !long.parisian_ruin && long.tau.is_none());
        let brute = brute_force(&nodes, &r, 1.0, 0.5);
        assert!(brute.0 && brute.1);
        assert!((brute.2.unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_window_is_classical() {
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let r = [1.0, 0.5, -0.2, 0.3];
        let v = detect_on_nodes(&nodes, &r, 2.5, 0.0).unwrap();
        assert_eq!(v.classical_ruin, v.parisian_ruin);
        assert_eq!(v.tau, v.first_hit);
    }

    #[test]
    fn ties_are_solvent() {
        let nodes = [0.0, 1.0, 2.0];
        let v = detect_on_nodes(&nodes, &[1.0, 0.0, 1.0], 2.0, 0.0).unwrap();
        assert!(!v.classical_ruin);
        let v = detect_on_nodes(&nodes, &[0.0, -1.0, 1.0], 2.0, 0.0).unwrap();
        assert_eq!(v.first_hit, Some(0.0));
    }

    #[test]
    fn excursion_from_origin_is_eligible() {
        let nodes = [0.0, 1.0, 2.0];
        let v = detect_on_nodes(&nodes, &[-1.0, -1.0, -1.0], 1.0, 0.5).unwrap();
        assert!(v.parisian_ruin);
        assert_eq!(v.tau, Some(0.5));
    }

    #[test]
    fn late_excursions_are_ignored() {
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let v = detect_on_nodes(&nodes, &[1.0, 1.0, 1.0, -1.0], 2.0, 0.5).unwrap();
        assert_eq!(v, ParisianVerdict::SAFE);
        // ends before the window elapses: classical only
        let v = detect_on_nodes(&nodes, &[1.0, -0.1, 1.0, 1.0], 2.0, 0.5).unwrap();
        assert!(v.classical_ruin && !v.parisian_ruin);
    }

    #[test]
    fn horizon_beyond_grid() {
        let err = detect_on_nodes(&[0.0, 1.0], &[1.0, 1.0], 0.8, 0.5).unwrap_err();
        assert!(matches!(err, Error::Horizon { .. }));
    }

    #[test]
    fn second_excursion_can_qualify() {
        let nodes = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let r = [1.0, -0.5, 1.0, -1.0, -1.0, 1.0];
        let v = detect_on_nodes(&nodes, &r, 4.0, 1.0).unwrap();
        assert!(v.parisian_ruin);
        assert!((v.first_hit.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((v.tau.unwrap() - 3.5).abs() < 1e-15);
        let brute = brute_force(&nodes, &r, 4.0, 1.0);
        assert!(brute.1 && (brute.2.unwrap() - 3.5).abs() < 1e-4);
    }

    #[test]
    fn grid_refinement_moves_tau_by_order_step() {
        // analytic reserve r(t) = cos(2t) + 0.2, sampled at two resolutions
        let f = |t: f64| (2.0 * t).cos() + 0.2;
        let exact_entry = (-0.2f64).acos() / 2.0;
        let mut errors = Vec::new();
        for n in [51, 101, 201] {
            let grid = Grid::new(0.0, 3.0, n).unwrap();
            let nodes = grid.nodes();
            let r: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
            let v = detect_on_nodes(&nodes, &r, 2.0, 0.3).unwrap();
            let err = (v.tau.unwrap() - (exact_entry + 0.3)).abs();
            assert!(err <= grid.step());
            errors.push(err);
        }
        assert!(errors[2] <= errors[0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn path_strategy() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-2.0f64..2.0, 4..40)
        }

        proptest! {
            #[test]
            fn window_monotone(r in path_strategy(), w1 in 0.0f64..1.0, w2 in 0.0f64..1.0) {
                let n = r.len();
                let nodes: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
                let s = nodes[n - 1] - 1.0;
                prop_assume!(s > 0.0);
                let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
                let a = detect_on_nodes(&nodes, &r, s, lo).unwrap();
                let b = detect_on_nodes(&nodes, &r, s, hi).unwrap();
                prop_assert!(!b.parisian_ruin || a.parisian_ruin);
                prop_assert!(!a.parisian_ruin || a.classical_ruin);
                prop_assert_eq!(a.tau.is_some(), a.parisian_ruin);
                prop_assert_eq!(a.classical_ruin, b.classical_ruin);
            }

            #[test]
            fn raising_u_never_creates_ruin(r in path_strategy(), shift in 0.0f64..2.0, w in 0.0f64..0.5) {
                let n = r.len();
                let nodes: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
                let s = nodes[n - 1] - 0.5;
                prop_assume!(s > 0.0);
                let up: Vec<f64> = r.iter().map(|v| v + shift).collect();
                let a = detect_on_nodes(&nodes, &r, s, w).unwrap();
                let b = detect_on_nodes(&nodes, &up, s, w).unwrap();
                prop_assert!(!b.parisian_ruin || a.parisian_ruin);
                prop_assert!(!b.classical_ruin || a.classical_ruin);
            }

            #[test]
            fn classical_is_negative_minimum(r in path_strategy()) {
                let n = r.len();
                let nodes: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
                let s = nodes[n / 2] + 0.05;
                let v = detect_on_nodes(&nodes, &r, s, 0.0).unwrap();
                let k = n / 2;
                let mid = 0.5 * (r[k] + r[k + 1]);
                let min_neg = r[..=k].iter().any(|&x| x < 0.0) || mid < 0.0;
                prop_assert_eq!(v.classical_ruin, min_neg);
                prop_assert_eq!(v.parisian_ruin, v.classical_ruin);
            }
        }
    }
}

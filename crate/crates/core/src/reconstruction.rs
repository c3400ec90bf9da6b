//! Eulerian fields and measures recovered from a transformed state.

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::evolution::ConservedSet;
use crate::grid::{fd_derivative, integrate};
use crate::state::{HalfAngle, TransformedState};

/// Masking threshold on `|cos(W/2)|`.
pub const MASK_TOL: f64 = 1e-6;

/// `(x, u, v, u_x, v_x)` along the characteristic graph `x = y(ξ)`.
///
/// `ux`, `vx` hold `NaN` where masked; `density` is `(1+u_x²)(1+v_x²)` where
/// both derivatives are valid and `NaN` elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerField {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub ux: Vec<f64>,
    pub ux_valid: Vec<bool>,
    pub vx: Vec<f64>,
    pub vx_valid: Vec<bool>,
    pub density: Vec<f64>,
}

fn half_tan(theta: f64, tol: f64) -> Option<f64> {
    let h = 0.5 * theta;
    if h.cos().abs() < tol {
        None
    } else {
        Some(h.tan())
    }
}

/// Graph representation with the default mask tolerance.
pub fn euler_fields(state: &TransformedState, y: &[f64]) -> Result<EulerField> {
    euler_fields_with(state, y, MASK_TOL)
}

pub fn euler_fields_with(state: &TransformedState, y: &[f64], mask_tol: f64) -> Result<EulerField> {
    state.check_shape()?;
    if y.len() != state.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    let n = state.n();
    let mut f = EulerField {
        x: y.to_vec(),
        u: state.u.clone(),
        v: state.v.clone(),
        ux: vec![f64::NAN; n],
        ux_valid: vec![false; n],
        vx: vec![f64::NAN; n],
        vx_valid: vec![false; n],
        density: vec![f64::NAN; n],
    };
    for k in 0..n {
        if let Some(t) = half_tan(state.w[k], mask_tol) {
            f.ux[k] = t;
            f.ux_valid[k] = true;
        }
        if let Some(t) = half_tan(state.z[k], mask_tol) {
            f.vx[k] = t;
            f.vx_valid[k] = true;
        }
        if f.ux_valid[k] && f.vx_valid[k] {
            f.density[k] = (1.0 + f.ux[k] * f.ux[k]) * (1.0 + f.vx[k] * f.vx[k]);
        }
    }
    Ok(f)
}

impl EulerField {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn all_valid(&self) -> bool {
        self.ux_valid.iter().chain(&self.vx_valid).all(|&b| b)
    }

    /// Maximal x-ranges containing masked nodes.
    pub fn masked_ranges(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for k in 0..self.len() {
            if self.ux_valid[k] && self.vx_valid[k] {
                if let Some(r) = open.take() {
                    out.push(r);
                }
            } else {
                open = Some(match open {
                    Some((a, _)) => (a, self.x[k]),
                    None => (self.x[k], self.x[k]),
                });
            }
        }
        out.extend(open);
        out
    }
}

/// `(u, v)` at an arbitrary x by linear interpolation on the graph. On exact
/// plateaus of `x` the leftmost node wins.
pub fn sample_at(field: &EulerField, x_query: f64) -> Result<(f64, f64)> {
    let n = field.len();
    if n == 0 || !(x_query >= field.x[0] && x_query <= field.x[n - 1]) {
        return Err(NovikovError::Query(format!(
            "x = {x_query} outside [{}, {}]",
            field.x.first().copied().unwrap_or(f64::NAN),
            field.x.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let i = field.x.partition_point(|&x| x < x_query);
    if field.x[i] == x_query || i == 0 {
        return Ok((field.u[i], field.v[i]));
    }
    let (x0, x1) = (field.x[i - 1], field.x[i]);
    let s = (x_query - x0) / (x1 - x0);
    let lerp = |a: &[f64]| a[i - 1] + s * (a[i] - a[i - 1]);
    Ok((lerp(&field.u), lerp(&field.v)))
}

/// Density of the energy measure in ξ:
/// `q (cos²(W/2) sin²(Z/2) + sin²(W/2) cos²(Z/2) + sin²(W/2) sin²(Z/2))`.
pub fn measure_density(state: &TransformedState) -> Vec<f64> {
    (0..state.n())
        .map(|k| {
            let (w, z) = (HalfAngle::of(state.w[k]), HalfAngle::of(state.z[k]));
            state.q[k] * (w.cos2 * z.sin2 + w.sin2 * z.cos2 + w.sin2 * z.sin2)
        })
        .collect()
}

/// Measure of `[a, b]`: every trapezoid cell contributes its mass times the
/// fraction of its x-range inside the query. Cells with no x-extent count when
/// their point lies in `[a, b)`, or at `b` if `b` is the right end of the graph.
pub fn measure_interval(state: &TransformedState, y: &[f64], a: f64, b: f64) -> Result<f64> {
    state.check_shape()?;
    if y.len() != state.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    if !(a <= b) {
        return Err(NovikovError::Query(format!("measure interval [{a}, {b}] is empty")));
    }
    let m = measure_density(state);
    let half = 0.5 * state.grid.dx();
    let last = *y.last().unwrap();
    let mut total = 0.0;
    for k in 0..state.n() - 1 {
        let mass = half * (m[k] + m[k + 1]);
        let (lo, hi) = (y[k].min(y[k + 1]), y[k].max(y[k + 1]));
        let frac = if hi > lo {
            ((hi.min(b) - lo.max(a)) / (hi - lo)).max(0.0)
        } else if (lo >= a && lo < b) || (lo == b && b >= last) {
            1.0
        } else {
            0.0
        };
        total += frac * mass;
    }
    Ok(total)
}

/// `∫ f(x) dx` over the graph, written as `∫ f(x(ξ)) x'(ξ) dξ` with `x'` from
/// fourth-order differences of the node positions.
fn graph_integral(field: &EulerField, f: &[f64], grid: &crate::grid::Grid) -> Result<f64> {
    let dxdxi = fd_derivative(&field.x, grid, 1)?;
    let g: Vec<f64> = f.iter().zip(&dxdxi).map(|(a, b)| a * b).collect();
    integrate(&g, grid)
}

fn require_unmasked(field: &EulerField) -> Result<()> {
    if field.all_valid() {
        Ok(())
    } else {
        Err(NovikovError::Masked { ranges: field.masked_ranges() })
    }
}

/// `∫ (u_x² + v_x² + u_x² v_x²) dx`, the absolutely continuous energy measure.
pub fn euler_measure_total(field: &EulerField, grid: &crate::grid::Grid) -> Result<f64> {
    require_unmasked(field)?;
    let f: Vec<f64> = (0..field.len())
        .map(|k| {
            let (a, b) = (field.ux[k] * field.ux[k], field.vx[k] * field.vx[k]);
            a + b + a * b
        })
        .collect();
    graph_integral(field, &f, grid)
}

/// Conserved functionals from Eulerian fields on the graph. The nodes are the
/// characteristic grid, so the quadrature runs in the parameter ξ of `grid`.
pub fn conserved_euler(field: &EulerField, grid: &crate::grid::Grid) -> Result<ConservedSet> {
    if field.len() != grid.n() {
        return Err(NovikovError::Contract("field and grid lengths differ".into()));
    }
    require_unmasked(field)?;
    let n = field.len();
    let (mut eu, mut ev, mut gg, mut hh) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (u, v, ux, vx) = (field.u[k], field.v[k], field.ux[k], field.vx[k]);
        eu[k] = u * u + ux * ux;
        ev[k] = v * v + vx * vx;
        gg[k] = u * v + ux * vx;
        hh[k] = 3.0 * u * u * v * v + u * u * vx * vx + ux * ux * v * v + 4.0 * u * ux * v * vx
            - ux * ux * vx * vx;
    }
    Ok(ConservedSet {
        e_u: graph_integral(field, &eu, grid)?,
        e_v: graph_integral(field, &ev, grid)?,
        g: graph_integral(field, &gg, grid)?,
        h: graph_integral(field, &hh, grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::conserved;
    use crate::grid::Grid;
    use crate::initial_data::{direct_transform, EulerDatum, Profile};
    use std::f64::consts::PI;

    fn smooth_datum() -> EulerDatum {
        EulerDatum::new(
            Profile::GaussianBump { amplitude: 0.7, center: -0.5, width: 1.3 },
            Profile::SechBump { amplitude: 0.5, center: 0.8, width: 1.1 },
        )
        .unwrap()
    }

    #[test]
    fn zero_state_fields() {
        let g = Grid::new(-5.0, 5.0, 51).unwrap();
        let s = TransformedState::zero(g);
        let y = g.nodes();
        let f = euler_fields(&s, &y).unwrap();
        assert_eq!(f.x, y);
        assert!(f.ux.iter().chain(&f.vx).all(|&v| v == 0.0));
        assert!(f.all_valid());
        assert_eq!(measure_interval(&s, &y, -5.0, 5.0).unwrap(), 0.0);
        assert_eq!(conserved_euler(&f, &g).unwrap().as_array(), [0.0; 4]);
    }

    #[test]
    fn mask_fires_at_pi() {
        let g = Grid::new(-5.0, 5.0, 51).unwrap();
        let mut s = TransformedState::zero(g);
        s.w[20] = PI;
        s.z[30] = -PI;
        s.w[40] = 3.0 * PI;
        let f = euler_fields(&s, &g.nodes()).unwrap();
        assert!(!f.ux_valid[20] && !f.vx_valid[30] && !f.ux_valid[40]);
        assert!(f.ux_valid[21] && f.vx_valid[20]);
        assert!(f.density[20].is_nan());
        assert!(matches!(conserved_euler(&f, &g), Err(NovikovError::Masked { .. })));
        assert_eq!(f.masked_ranges().len(), 3);
    }

    #[test]
    fn unwrapped_angles_give_same_slope() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        let mut s = TransformedState::zero(g);
        s.w[1] = 0.7;
        s.w[2] = 0.7 + 2.0 * PI;
        let f = euler_fields(&s, &g.nodes()).unwrap();
        assert!((f.ux[1] - f.ux[2]).abs() < 1e-14);
    }

    #[test]
    fn sample_at_nodes_and_plateaus() {
        let g = Grid::new(0.0, 4.0, 5).unwrap();
        let mut s = TransformedState::zero(g);
        s.u = vec![0.0, 1.0, 2.0, 2.0, 3.0];
        let x = vec![0.0, 1.0, 2.0, 2.0, 3.0];
        let f = euler_fields(&s, &x).unwrap();
        assert_eq!(sample_at(&f, 1.0).unwrap().0, 1.0);
        assert_eq!(sample_at(&f, 2.0).unwrap().0, 2.0);
        assert_eq!(sample_at(&f, 0.5).unwrap().0, 0.5);
        assert!(matches!(sample_at(&f, 3.5), Err(NovikovError::Query(_))));
        assert!(sample_at(&f, -0.1).is_err());
    }

    #[test]
    fn peakon_crest_sample() {
        let d = EulerDatum::symmetric(Profile::Peakon { c: 1.0, x0: 0.0 }).unwrap();
        let g = Grid::new(-10.0, 10.0, 1001).unwrap();
        let (s, y) = direct_transform(&d, &g).unwrap();
        let f = euler_fields(&s, &y).unwrap();
        assert!((sample_at(&f, 0.0).unwrap().0 - 1.0).abs() < g.dx());
    }

    #[test]
    fn round_trip_at_initial_time() {
        let d = smooth_datum();
        let g = Grid::new(-15.0, 15.0, 1501).unwrap();
        let (s, y) = direct_transform(&d, &g).unwrap();
        let f = euler_fields(&s, &y).unwrap();
        let mut worst = 0.0f64;
        for i in 0..400 {
            let x = -10.0 + 0.05 * i as f64;
            let (u, v) = sample_at(&f, x).unwrap();
            worst = worst.max((u - d.u0.eval(x).0).abs()).max((v - d.v0.eval(x).0).abs());
        }
        assert!(worst < g.dx() * g.dx(), "worst {worst}");
        for k in 0..g.n() {
            assert!((f.ux[k] - d.u0.eval(y[k]).1).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_representation_consistency() {
        let g = Grid::new(-20.0, 20.0, 2049).unwrap();
        let (s, y) = direct_transform(&smooth_datum(), &g).unwrap();
        let f = euler_fields(&s, &y).unwrap();
        let a = conserved(&s).unwrap().as_array();
        let b = conserved_euler(&f, &g).unwrap().as_array();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= 1e-6 * a[i].abs(), "{i}: {} vs {}", a[i], b[i]);
        }
        let whole = measure_interval(&s, &y, y[0], y[g.n() - 1]).unwrap();
        let euler = euler_measure_total(&f, &g).unwrap();
        assert!((whole - euler).abs() <= 1e-6 * euler, "{whole} vs {euler}");
    }

    #[test]
    fn measure_is_additive() {
        let g = Grid::new(-10.0, 10.0, 401).unwrap();
        let (s, y) = direct_transform(&smooth_datum(), &g).unwrap();
        let m1 = measure_interval(&s, &y, -3.0, 0.37).unwrap();
        let m2 = measure_interval(&s, &y, 0.37, 4.0).unwrap();
        let m = measure_interval(&s, &y, -3.0, 4.0).unwrap();
        assert!((m1 + m2 - m).abs() < 1e-14);
        assert!(m1 > 0.0 && m2 > 0.0);
        assert!(measure_interval(&s, &y, 1.0, 0.0).is_err());
    }
}

//! Transformed state `(U, V, W, Z, q)` and the admissible region Ω.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::grid::Grid;

/// Sampled unknowns of the semilinear system at one time.
///
/// `w` and `z` are stored unwrapped: they may leave `(−π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub t: f64,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub q: Vec<f64>,
}

/// `sin θ`, `cos²(θ/2)` and `sin²(θ/2)` of one angle.
///
/// Always evaluated through this one out-of-line function: if the compiler
/// were free to fuse `sin` and `cos` calls differently at different call sites,
/// states with `W = Z` could lose their exact symmetry in the last bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfAngle {
    pub sin: f64,
    pub cos2: f64,
    pub sin2: f64,
}

impl HalfAngle {
    #[inline(never)]
    pub fn of(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { sin: s, cos2: 0.5 * (1.0 + c), sin2: 0.5 * (1.0 - c) }
    }
}

/// `cos²(θ/2)`, written as `(1 + cos θ)/2` so that it is exact at θ = 0.
pub fn cos2_half(theta: f64) -> f64 {
    HalfAngle::of(theta).cos2
}

/// `sin²(θ/2)`.
pub fn sin2_half(theta: f64) -> f64 {
    HalfAngle::of(theta).sin2
}

impl TransformedState {
    /// The state `U = V = W = Z = 0`, `q = 1`.
    pub fn zero(grid: Grid) -> Self {
        let n = grid.n();
        Self {
            t: 0.0,
            grid,
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: vec![0.0; n],
            z: vec![0.0; n],
            q: vec![1.0; n],
        }
    }

    pub fn from_fields(
        grid: Grid,
        t: f64,
        u: Vec<f64>,
        v: Vec<f64>,
        w: Vec<f64>,
        z: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        let s = Self { t, grid, u, v, w, z, q };
        s.check_shape()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.grid.n();
        for (name, f) in self.fields() {
            if f.len() != n {
                return Err(NovikovError::Contract(format!(
                    "field {name} has {} samples, grid has {n}",
                    f.len()
                )));
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [(&'static str, &Vec<f64>); 5] {
        [("U", &self.u), ("V", &self.v), ("W", &self.w), ("Z", &self.z), ("q", &self.q)]
    }

    /// The state with `(U, W)` and `(V, Z)` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            t: self.t,
            grid: self.grid,
            u: self.v.clone(),
            v: self.u.clone(),
            w: self.z.clone(),
            z: self.w.clone(),
            q: self.q.clone(),
        }
    }

    /// `y_ξ = q cos²(W/2) cos²(Z/2)`.
    pub fn y_xi(&self) -> Vec<f64> {
        (0..self.n())
            .map(|k| self.q[k] * (HalfAngle::of(self.w[k]).cos2 * HalfAngle::of(self.z[k]).cos2))
            .collect()
    }

    /// `U_ξ = (q/2) sin W cos²(Z/2)`.
    pub fn u_xi(&self) -> Vec<f64> {
        (0..self.n())
            .map(|k| 0.5 * self.q[k] * (HalfAngle::of(self.w[k]).sin * HalfAngle::of(self.z[k]).cos2))
            .collect()
    }

    /// `V_ξ = (q/2) cos²(W/2) sin Z`.
    pub fn v_xi(&self) -> Vec<f64> {
        (0..self.n())
            .map(|k| 0.5 * self.q[k] * (HalfAngle::of(self.z[k]).sin * HalfAngle::of(self.w[k]).cos2))
            .collect()
    }

    /// Pointwise `self + s·other`, keeping `self.t`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect();
        Self {
            t: self.t,
            grid: self.grid,
            u: f(&self.u, &other.u),
            v: f(&self.v, &other.v),
            w: f(&self.w, &other.w),
            z: f(&self.z, &other.z),
            q: f(&self.q, &other.q),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields().iter())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Bounds defining the admissible region Ω and the runtime guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaBounds {
    pub q_minus: f64,
    pub q_plus: f64,
    /// Factor by which q may leave `[q⁻, q⁺]` before the guard fires.
    pub slack: f64,
    /// Bound on `|W|` and `|Z|`.
    pub angle_max: f64,
    /// Threshold for the decay of `U, V, W, Z, q − 1` at the grid ends.
    pub decay_threshold: f64,
}

impl Default for OmegaBounds {
    fn default() -> Self {
        Self {
            q_minus: 0.2,
            q_plus: 5.0,
            slack: 1.5,
            angle_max: 1.5 * PI,
            decay_threshold: 1e-6,
        }
    }
}

impl OmegaBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q_minus > 0.0
            && self.q_minus <= 1.0
            && self.q_plus >= 1.0
            && self.q_plus.is_finite()
            && self.slack >= 1.0
            && self.angle_max > PI
            && self.decay_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NovikovError::Config(format!("invalid Ω bounds {self:?}")))
        }
    }

    /// Checks the guard on `q`, `W`, `Z` and finiteness. The decay at the ends
    /// is reported separately by [`OmegaBounds::edge_excess`].
    pub fn check(&self, state: &TransformedState) -> Result<()> {
        let lo = self.q_minus / self.slack;
        let hi = self.q_plus * self.slack;
        for k in 0..state.n() {
            let vals = [state.u[k], state.v[k], state.w[k], state.z[k], state.q[k]];
            if vals.iter().any(|x| !x.is_finite()) {
                return Err(NovikovError::Guard {
                    t: state.t,
                    message: format!("non-finite value at node {k} (xi = {})", state.grid.node(k)),
                });
            }
            if state.q[k] < lo || state.q[k] > hi {
                return Err(NovikovError::Guard {
                    t: state.t,
                    message: format!(
                        "q = {} at node {k} (xi = {}) outside [{lo}, {hi}]",
                        state.q[k],
                        state.grid.node(k)
                    ),
                });
            }
            for (name, a) in [("W", state.w[k]), ("Z", state.z[k])] {
                if a.abs() > self.angle_max {
                    return Err(NovikovError::Guard {
                        t: state.t,
                        message: format!(
                            "|{name}| = {} at node {k} (xi = {}) exceeds {}",
                            a.abs(),
                            state.grid.node(k),
                            self.angle_max
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest of `|U|, |V|, |W|, |Z|, |q − 1|` at the two end nodes.
    pub fn edge_excess(&self, state: &TransformedState) -> f64 {
        let last = state.n() - 1;
        [0, last]
            .iter()
            .flat_map(|&k| {
                [
                    state.u[k].abs(),
                    state.v[k].abs(),
                    state.w[k].abs(),
                    state.z[k].abs(),
                    (state.q[k] - 1.0).abs(),
                ]
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_angle_helpers() {
        assert_eq!(cos2_half(0.0), 1.0);
        assert_eq!(sin2_half(0.0), 0.0);
        assert!(cos2_half(PI).abs() < 1e-16);
        assert!((cos2_half(0.7) + sin2_half(0.7) - 1.0).abs() < 1e-16);
        assert!((cos2_half(0.7) - (0.35f64).cos().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn guard_detects_violations() {
        let g = Grid::new(-1.0, 1.0, 11).unwrap();
        let b = OmegaBounds::default();
        let mut s = TransformedState::zero(g);
        assert!(b.check(&s).is_ok());
        s.q[3] = 0.14;
        assert!(b.check(&s).is_ok());
        s.q[3] = 0.13;
        assert!(matches!(b.check(&s), Err(NovikovError::Guard { .. })));
        s.q[3] = 7.6;
        assert!(b.check(&s).is_err());
        let mut s = TransformedState::zero(g);
        s.w[5] = 1.6 * PI;
        assert!(b.check(&s).is_err());
        let mut s = TransformedState::zero(g);
        s.z[0] = f64::NAN;
        assert!(b.check(&s).is_err());
    }

    #[test]
    fn swap_and_identities() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        let mut s = TransformedState::zero(g);
        s.u[1] = 0.3;
        s.w[2] = PI;
        let sw = s.swapped();
        assert_eq!(sw.v[1], 0.3);
        assert_eq!(sw.z[2], PI);
        assert!(s.y_xi()[2].abs() < 1e-16);
        assert_eq!(s.y_xi()[0], 1.0);
    }
}

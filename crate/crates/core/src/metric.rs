//! Tangent-vector norm, path lengths and distance upper bounds between
//! transformed states, and the Lipschitz-in-time experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::evolution::{evolve, EvolveOptions, Trajectory};
use crate::grid::{fd_derivative, prefix_integral, Grid};
use crate::initial_data::{direct_transform, EulerDatum};
use crate::singular::pi_distance;
use crate::state::{HalfAngle, OmegaBounds, TransformedState};

/// Perturbation `(R, S, A, B, Q)` of `(U, V, W, Z, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
}

impl TangentVector {
    pub fn zero(n: usize) -> Self {
        Self { r: vec![0.0; n], s: vec![0.0; n], a: vec![0.0; n], b: vec![0.0; n], q: vec![0.0; n] }
    }

    fn parts(&self) -> [&Vec<f64>; 5] {
        [&self.r, &self.s, &self.a, &self.b, &self.q]
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for p in self.parts() {
            if p.len() != n {
                return Err(NovikovError::Contract(format!("tangent has {} samples, grid has {n}", p.len())));
            }
            if let Some(k) = p.iter().position(|v| !v.is_finite()) {
                return Err(NovikovError::Numerical { node: k, message: "non-finite tangent".into() });
            }
        }
        Ok(())
    }

    fn map2(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| f(*a, *b)).collect();
        Self {
            r: m(&self.r, &other.r),
            s: m(&self.s, &other.s),
            a: m(&self.a, &other.a),
            b: m(&self.b, &other.b),
            q: m(&self.q, &other.q),
        }
    }

    pub fn scale(&self, lambda: f64) -> Self {
        self.map2(self, |a, _| lambda * a)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.map2(other, |a, b| a + b)
    }

    /// `Σ cᵢ·(sᵢ − reference)` field by field. Differencing first makes equal
    /// states give an exact zero.
    fn combine(reference: &TransformedState, states: &[(&TransformedState, f64)]) -> Self {
        let n = reference.n();
        let mut t = Self::zero(n);
        for (s, c) in states {
            for k in 0..n {
                t.r[k] += c * (s.u[k] - reference.u[k]);
                t.s[k] += c * (s.v[k] - reference.v[k]);
                t.a[k] += c * (s.w[k] - reference.w[k]);
                t.b[k] += c * (s.z[k] - reference.z[k]);
                t.q[k] += c * (s.q[k] - reference.q[k]);
            }
        }
        t
    }
}

/// Piecewise-linear reparametrization field `η` on `m` equispaced nodes
/// spanning the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftField {
    pub xi_min: f64,
    pub xi_max: f64,
    pub coefficients: Vec<f64>,
}

impl ShiftField {
    pub fn zero(grid: &Grid, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(NovikovError::Config(format!("shift field needs m >= 2 nodes, got {m}")));
        }
        Ok(Self { xi_min: grid.xi_min(), xi_max: grid.xi_max(), coefficients: vec![0.0; m] })
    }

    pub fn constant(grid: &Grid, m: usize, c: f64) -> Result<Self> {
        let mut s = Self::zero(grid, m)?;
        s.coefficients.fill(c);
        Ok(s)
    }

    fn spacing(&self) -> f64 {
        (self.xi_max - self.xi_min) / (self.coefficients.len() - 1) as f64
    }

    /// Cell index and the weight of its right node at `xi`.
    fn cell(&self, xi: f64) -> (usize, f64) {
        let m = self.coefficients.len();
        let s = ((xi - self.xi_min) / self.spacing()).clamp(0.0, (m - 1) as f64);
        let j = (s.floor() as usize).min(m - 2);
        (j, s - j as f64)
    }

    /// `(η(ξ), η′(ξ))`; the derivative is taken in the cell to the right of a node.
    pub fn eval(&self, xi: f64) -> (f64, f64) {
        let (j, l) = self.cell(xi);
        let c = &self.coefficients;
        ((1.0 - l) * c[j] + l * c[j + 1], (c[j + 1] - c[j]) / self.spacing())
    }
}

/// The first-order change `z = ∂_ε y^ε` of the characteristic induced by the
/// tangent, normalized by `z(ξ_min) = 0`.
pub fn z_shift(state: &TransformedState, tangent: &TangentVector) -> Result<Vec<f64>> {
    tangent.validate(state.n())?;
    let integrand: Vec<f64> = (0..state.n())
        .map(|k| {
            let hw = HalfAngle::of(state.w[k]);
            let hz = HalfAngle::of(state.z[k]);
            let q = state.q[k];
            tangent.q[k] * (hw.cos2 * hz.cos2)
                - 0.5 * q * tangent.a[k] * (hw.sin * hz.cos2)
                - 0.5 * q * tangent.b[k] * (hw.cos2 * hz.sin)
        })
        .collect();
    prefix_integral(&integrand, &state.grid)
}

/// Pieces of `φ₁ … φ₆`: each is `base + η·slope`, and `φ₆` also carries `η′·q`.
struct PhiParts {
    base: [Vec<f64>; 6],
    slope: [Vec<f64>; 6],
    q: Vec<f64>,
}

fn phi_parts(state: &TransformedState, tangent: &TangentVector) -> Result<PhiParts> {
    let g = &state.grid;
    let z = z_shift(state, tangent)?;
    let y_xi = state.y_xi();
    let u_xi = state.u_xi();
    let v_xi = state.v_xi();
    let w_xi = fd_derivative(&state.w, g, 1)?;
    let z_xi = fd_derivative(&state.z, g, 1)?;
    let q_xi = fd_derivative(&state.q, g, 1)?;
    let q = &state.q;
    let times = |a: &[f64], c: f64| -> Vec<f64> { a.iter().zip(q).map(|(x, q)| c * x * q).collect() };
    Ok(PhiParts {
        base: [
            times(&z, 1.0),
            times(&tangent.r, 1.0),
            times(&tangent.s, 1.0),
            times(&tangent.a, 0.5),
            times(&tangent.b, 0.5),
            tangent.q.clone(),
        ],
        slope: [
            times(&y_xi, 1.0),
            times(&u_xi, 1.0),
            times(&v_xi, 1.0),
            times(&w_xi, 0.5),
            times(&z_xi, 0.5),
            q_xi,
        ],
        q: q.clone(),
    })
}

/// `φ₁ … φ₆` for the tangent and the shift `η`.
pub fn phi_values(
    state: &TransformedState,
    _y: &[f64],
    tangent: &TangentVector,
    eta: &ShiftField,
) -> Result<[Vec<f64>; 6]> {
    let p = phi_parts(state, tangent)?;
    let g = &state.grid;
    let ev: Vec<(f64, f64)> = (0..g.n()).map(|k| eta.eval(g.node(k))).collect();
    Ok(std::array::from_fn(|i| {
        (0..g.n())
            .map(|k| {
                let (e, de) = ev[k];
                let v = p.base[i][k] + e * p.slope[i][k];
                if i == 5 {
                    v + de * p.q[k]
                } else {
                    v
                }
            })
            .collect()
    }))
}

/// How the infimum over the shift `η` is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSearch {
    /// Evaluate at `η = 0` only.
    EtaZero,
    /// Projected subgradient descent over the shift-field coefficients.
    CoarseDescent,
}

impl EtaSearch {
    pub fn name(&self) -> &'static str {
        match self {
            EtaSearch::EtaZero => "eta_zero",
            EtaSearch::CoarseDescent => "coarse_descent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub alpha: f64,
    pub search: EtaSearch,
    /// Nodes of the shift field.
    pub shift_nodes: usize,
    pub iterations: usize,
    /// Step `a` of the `a/k` schedule, applied to the normalized subgradient.
    pub step: f64,
    /// Box constraint on the coefficients.
    pub eta_max: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { alpha: 0.5, search: EtaSearch::EtaZero, shift_nodes: 17, iterations: 200, step: 0.5, eta_max: 1.0 }
    }
}

impl NormOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(NovikovError::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.shift_nodes < 2 || !(self.step > 0.0) || !(self.eta_max > 0.0) {
            return Err(NovikovError::Config(format!("invalid norm options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    /// Best upper bound found.
    pub value: f64,
    /// Value at `η = 0`.
    pub eta_zero: f64,
    pub iterations: usize,
    /// Best-so-far value after each descent iteration.
    pub log: Vec<f64>,
    pub eta: Vec<f64>,
}

struct Objective<'a> {
    parts: &'a PhiParts,
    weight: Vec<f64>,
    cells: Vec<(usize, f64)>,
    inv_h: f64,
}

impl Objective<'_> {
    fn eta_at(&self, c: &[f64], k: usize) -> (f64, f64) {
        let (j, l) = self.cells[k];
        ((1.0 - l) * c[j] + l * c[j + 1], (c[j + 1] - c[j]) * self.inv_h)
    }

    fn phi(&self, i: usize, k: usize, e: f64, de: f64) -> f64 {
        let v = self.parts.base[i][k] + e * self.parts.slope[i][k];
        if i == 5 {
            v + de * self.parts.q[k]
        } else {
            v
        }
    }

    fn value(&self, c: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..self.weight.len() {
            let (e, de) = self.eta_at(c, k);
            let s: f64 = (0..6).map(|i| self.phi(i, k, e, de).abs()).sum();
            total += self.weight[k] * s;
        }
        total
    }

    fn subgradient(&self, c: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; c.len()];
        for k in 0..self.weight.len() {
            let (e, de) = self.eta_at(c, k);
            let (j, l) = self.cells[k];
            let mut d_eta = 0.0;
            let mut d_deta = 0.0;
            for i in 0..6 {
                let sg = sign(self.phi(i, k, e, de));
                d_eta += sg * self.parts.slope[i][k];
                if i == 5 {
                    d_deta += sg * self.parts.q[k];
                }
            }
            let w = self.weight[k];
            g[j] += w * ((1.0 - l) * d_eta - self.inv_h * d_deta);
            g[j + 1] += w * (l * d_eta + self.inv_h * d_deta);
        }
        g
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Upper bound on `inf_η Σᵢ ∫ e^{−α|y|} |φᵢ| dξ`.
pub fn tangent_norm(
    state: &TransformedState,
    y: &[f64],
    tangent: &TangentVector,
    opts: &NormOptions,
) -> Result<NormResult> {
    opts.validate()?;
    if y.len() != state.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    let g = &state.grid;
    let parts = phi_parts(state, tangent)?;
    let eta = ShiftField::zero(g, opts.shift_nodes)?;
    let obj = Objective {
        parts: &parts,
        weight: (0..g.n()).map(|k| g.weight(k) * (-opts.alpha * y[k].abs()).exp()).collect(),
        cells: (0..g.n()).map(|k| eta.cell(g.node(k))).collect(),
        inv_h: 1.0 / eta.spacing(),
    };
    let mut c = eta.coefficients;
    let eta_zero = obj.value(&c);
    let mut best = eta_zero;
    let mut best_c = c.clone();
    let mut log = Vec::new();
    if opts.search == EtaSearch::CoarseDescent {
        for k in 1..=opts.iterations {
            let sg = obj.subgradient(&c);
            let norm = sg.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            let step = opts.step / k as f64 / norm;
            for (ci, gi) in c.iter_mut().zip(&sg) {
                *ci = (*ci - step * gi).clamp(-opts.eta_max, opts.eta_max);
            }
            let v = obj.value(&c);
            if v < best {
                best = v;
                best_c.clone_from(&c);
            }
            log.push(best);
        }
    }
    Ok(NormResult { value: best, eta_zero, iterations: log.len(), log, eta: best_c })
}

/// States at uniformly spaced `θ` along a path, with their characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOfStates {
    pub theta: Vec<f64>,
    pub states: Vec<TransformedState>,
    pub ys: Vec<Vec<f64>>,
}

/// `U^θ = θ·U₁ + (1 − θ)·U₀` at `m_theta` nodes. Interior characteristics are
/// rebuilt from `y_ξ` of the combined state, anchored at the interpolated left
/// end value. Each state is checked against `bounds`.
pub fn straight_line_path(
    end0: &TransformedState,
    y0: &[f64],
    end1: &TransformedState,
    y1: &[f64],
    m_theta: usize,
    bounds: &OmegaBounds,
) -> Result<PathOfStates> {
    end0.check_shape()?;
    end1.check_shape()?;
    if end0.grid != end1.grid {
        return Err(NovikovError::Contract("path endpoints live on different grids".into()));
    }
    if y0.len() != end0.n() || y1.len() != end1.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    if m_theta < 2 {
        return Err(NovikovError::Config(format!("m_theta = {m_theta} must be at least 2")));
    }
    let last = m_theta - 1;
    let mut path = PathOfStates { theta: Vec::new(), states: Vec::new(), ys: Vec::new() };
    for j in 0..m_theta {
        // integer ratios keep the reversed path bitwise equal to this one, and
        // entries shared by both ends stay exact
        let a = j as f64 / last as f64;
        let b = (last - j) as f64 / last as f64;
        let (state, y) = if j == 0 {
            (end0.clone(), y0.to_vec())
        } else if j == last {
            (end1.clone(), y1.to_vec())
        } else {
            let mix = |p: &[f64], r: &[f64]| -> Vec<f64> { p.iter().zip(r).map(|(&x1, &x0)| if x1 == x0 { x0 } else { a * x1 + b * x0 }).collect() };
            let s = TransformedState {
                t: a * end1.t + b * end0.t,
                grid: end0.grid,
                u: mix(&end1.u, &end0.u),
                v: mix(&end1.v, &end0.v),
                w: mix(&end1.w, &end0.w),
                z: mix(&end1.z, &end0.z),
                q: mix(&end1.q, &end0.q),
            };
            let anchor = a * y1[0] + b * y0[0];
            let y = prefix_integral(&s.y_xi(), &s.grid)?.into_iter().map(|v| anchor + v).collect();
            (s, y)
        };
        bounds
            .check(&state)
            .map_err(|e| NovikovError::Path { theta: a, message: e.to_string() })?;
        path.theta.push(a);
        path.states.push(state);
        path.ys.push(y);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLength {
    pub length: f64,
    pub theta: Vec<f64>,
    pub norms: Vec<f64>,
    pub eta_zero_norms: Vec<f64>,
    /// θ-nodes whose state touches `±π` and which were left out of the quadrature.
    pub excluded: Vec<bool>,
    /// Total descent iterations over all nodes.
    pub eta_iterations: usize,
}

fn touches_pi(state: &TransformedState, tol_pi: f64) -> bool {
    state.w.iter().chain(&state.z).any(|&a| pi_distance(a) <= tol_pi)
}

/// Trapezoid rule over the retained nodes, extended by constants to `[0, 1]`.
fn retained_trapezoid(theta: &[f64], f: &[f64], keep: &[bool]) -> f64 {
    let pts: Vec<(f64, f64)> = (0..theta.len()).filter(|&j| keep[j]).map(|j| (theta[j], f[j])).collect();
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return 0.0;
    };
    let mut total = first.1 * (first.0 - theta[0]) + last.1 * (theta[theta.len() - 1] - last.0);
    for w in pts.windows(2) {
        total += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    total
}

/// Length of a path: tangents by second-order differences in `θ`, norms at
/// every node, trapezoid rule in `θ`.
pub fn path_length(path: &PathOfStates, opts: &NormOptions, tol_pi: f64) -> Result<PathLength> {
    opts.validate()?;
    let m = path.states.len();
    if m < 3 {
        return Err(NovikovError::Config(format!("path needs at least 3 theta nodes, has {m}")));
    }
    let h = path.theta[1] - path.theta[0];
    let s = &path.states;
    let tangent = |j: usize| -> TangentVector {
        let c = 1.0 / (2.0 * h);
        if j == 0 {
            TangentVector::combine(&s[0], &[(&s[1], 4.0 * c), (&s[2], -c)])
        } else if j == m - 1 {
            TangentVector::combine(&s[m - 1], &[(&s[m - 2], -4.0 * c), (&s[m - 3], c)])
        } else {
            TangentVector::combine(&s[j - 1], &[(&s[j + 1], c)])
        }
    };
    let results: Vec<Result<NormResult>> = (0..m)
        .into_par_iter()
        .map(|j| tangent_norm(&s[j], &path.ys[j], &tangent(j), opts))
        .collect();
    let results: Vec<NormResult> = results.into_iter().collect::<Result<_>>()?;
    let norms: Vec<f64> = results.iter().map(|r| r.value).collect();
    let excluded: Vec<bool> = s.iter().map(|st| touches_pi(st, tol_pi)).collect();
    let keep: Vec<bool> = excluded.iter().map(|e| !e).collect();
    Ok(PathLength {
        length: retained_trapezoid(&path.theta, &norms, &keep),
        theta: path.theta.clone(),
        eta_zero_norms: results.iter().map(|r| r.eta_zero).collect(),
        norms,
        excluded,
        eta_iterations: results.iter().map(|r| r.iterations).sum(),
    })
}

/// Length of the straight-line path from `(u0, y0)` to `(u1, y1)`.
#[allow(clippy::too_many_arguments)]
pub fn distance_upper(
    u0: &TransformedState,
    y0: &[f64],
    u1: &TransformedState,
    y1: &[f64],
    m_theta: usize,
    opts: &NormOptions,
    bounds: &OmegaBounds,
    tol_pi: f64,
) -> Result<PathLength> {
    let path = straight_line_path(u0, y0, u1, y1, m_theta, bounds)?;
    path_length(&path, opts, tol_pi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRow {
    pub t: f64,
    pub d_upper: f64,
    pub ratio: f64,
    pub search_mode: String,
    pub eta_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTable {
    pub d0: f64,
    pub rows: Vec<LipschitzRow>,
    /// Set when an evolution stopped early; the rows cover what was reached.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSetup {
    pub t_max: f64,
    pub dt: f64,
    pub record_every: usize,
    pub m_theta: usize,
    pub tol_pi: f64,
}

fn run_both(
    s0: &TransformedState,
    y0: &[f64],
    s1: &TransformedState,
    y1: &[f64],
    span: f64,
    dt: f64,
    every: usize,
    evo: &EvolveOptions,
) -> (Trajectory, Trajectory, Option<String>) {
    let (a, b) = rayon::join(|| evolve(s0, y0, span, dt, every, evo), || evolve(s1, y1, span, dt, every, evo));
    let mut msg = None;
    let mut take = |r: std::result::Result<Trajectory, Box<crate::evolution::EvolveAbort>>| match r {
        Ok(t) => t,
        Err(e) => {
            msg.get_or_insert_with(|| e.to_string());
            e.partial
        }
    };
    let (ta, tb) = (take(a), take(b));
    (ta, tb, msg)
}

/// `t ↦ d(U⁰(t), U¹(t)) / d(U⁰(0), U¹(0))` on `[−T, T]` at the recorded times.
/// A zero initial distance gives ratio 0 where the distance stays exactly zero.
pub fn lipschitz_experiment(
    datum0: &EulerDatum,
    datum1: &EulerDatum,
    grid: &Grid,
    setup: &LipschitzSetup,
    norm: &NormOptions,
    evo: &EvolveOptions,
) -> Result<LipschitzTable> {
    norm.validate()?;
    if !(setup.t_max >= 0.0 && setup.dt > 0.0) {
        return Err(NovikovError::Config("lipschitz run needs T >= 0 and dt > 0".into()));
    }
    let (s0, y0) = direct_transform(datum0, grid)?;
    let (s1, y1) = direct_transform(datum1, grid)?;
    let (f0, f1, m1) = run_both(&s0, &y0, &s1, &y1, setup.t_max, setup.dt, setup.record_every, evo);
    let (b0, b1, m2) = run_both(&s0, &y0, &s1, &y1, -setup.t_max, -setup.dt, setup.record_every, evo);
    let mut pairs = Vec::new();
    let nb = b0.states.len().min(b1.states.len());
    for j in (1..nb).rev() {
        pairs.push((&b0.states[j], &b0.ys[j], &b1.states[j], &b1.ys[j]));
    }
    let nf = f0.states.len().min(f1.states.len());
    for j in 0..nf {
        pairs.push((&f0.states[j], &f0.ys[j], &f1.states[j], &f1.ys[j]));
    }
    let d0 = distance_upper(&s0, &y0, &s1, &y1, setup.m_theta, norm, &evo.bounds, setup.tol_pi)?.length;
    let mut rows = Vec::with_capacity(pairs.len());
    for (a, ya, b, yb) in pairs {
        let d = distance_upper(a, ya, b, yb, setup.m_theta, norm, &evo.bounds, setup.tol_pi)?;
        let ratio = if d0 > 0.0 {
            d.length / d0
        } else if d.length == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(LipschitzRow {
            t: a.t,
            d_upper: d.length,
            ratio,
            search_mode: norm.search.name().to_string(),
            eta_iterations: d.eta_iterations,
        });
    }
    Ok(LipschitzTable { d0, rows, aborted: m1.or(m2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::Profile;

    fn grid() -> Grid {
        Grid::new(-12.0, 12.0, 241).unwrap()
    }

    fn pair() -> ((TransformedState, Vec<f64>), (TransformedState, Vec<f64>)) {
        let g = grid();
        let d0 = EulerDatum::new(
            Profile::GaussianBump { amplitude: 0.5, center: -0.5, width: 1.2 },
            Profile::SechBump { amplitude: 0.4, center: 0.5, width: 1.0 },
        )
        .unwrap();
        let d1 = EulerDatum::new(
            Profile::GaussianBump { amplitude: 0.6, center: -0.3, width: 1.2 },
            Profile::SechBump { amplitude: 0.3, center: 0.5, width: 1.1 },
        )
        .unwrap();
        (direct_transform(&d0, &g).unwrap(), direct_transform(&d1, &g).unwrap())
    }

    fn random_tangent(n: usize, seed: u64) -> TangentVector {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        TangentVector { r: f(), s: f(), a: f(), b: f(), q: f() }
    }

    #[test]
    fn z_shift_examples() {
        let g = grid();
        let s = TransformedState::zero(g);
        assert!(z_shift(&s, &TangentVector::zero(g.n())).unwrap().iter().all(|&v| v == 0.0));
        let mut t = TangentVector::zero(g.n());
        t.q = vec![1.0; g.n()];
        let z = z_shift(&s, &t).unwrap();
        for k in 0..g.n() {
            assert!((z[k] - (g.node(k) - g.xi_min())).abs() < 1e-12);
        }
        let ((s0, _), _) = pair();
        let (t1, t2) = (random_tangent(g.n(), 1), random_tangent(g.n(), 2));
        let lhs = z_shift(&s0, &t1.scale(2.0).add(&t2.scale(-0.5))).unwrap();
        let (z1, z2) = (z_shift(&s0, &t1).unwrap(), z_shift(&s0, &t2).unwrap());
        for k in 0..g.n() {
            assert!((lhs[k] - (2.0 * z1[k] - 0.5 * z2[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_examples() {
        let g = grid();
        let ((s0, y0), _) = pair();
        let zero = TangentVector::zero(g.n());
        let eta0 = ShiftField::zero(&g, 17).unwrap();
        for p in phi_values(&s0, &y0, &zero, &eta0).unwrap() {
            assert!(p.iter().all(|&v| v == 0.0));
        }
        let eta = ShiftField::constant(&g, 17, 0.3).unwrap();
        let phi = phi_values(&s0, &y0, &zero, &eta).unwrap();
        let qx = fd_derivative(&s0.q, &g, 1).unwrap();
        for k in 0..g.n() {
            assert!((phi[5][k] - 0.3 * qx[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_homogeneity_and_descent() {
        let g = grid();
        let ((s0, y0), _) = pair();
        let t = random_tangent(g.n(), 7);
        let o = NormOptions::default();
        let n1 = tangent_norm(&s0, &y0, &t, &o).unwrap().value;
        let n3 = tangent_norm(&s0, &y0, &t.scale(-3.0), &o).unwrap().value;
        assert!((n3 - 3.0 * n1).abs() <= 1e-13 * n3);
        assert_eq!(tangent_norm(&s0, &y0, &TangentVector::zero(g.n()), &o).unwrap().value, 0.0);
        let d = tangent_norm(&s0, &y0, &t, &NormOptions { search: EtaSearch::CoarseDescent, ..o }).unwrap();
        assert!(d.value <= d.eta_zero);
        assert!(d.log.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn path_properties() {
        let ((s0, y0), (s1, y1)) = pair();
        let b = OmegaBounds::default();
        let p = straight_line_path(&s0, &y0, &s1, &y1, 5, &b).unwrap();
        assert_eq!(p.states[0], s0);
        assert_eq!(p.states[4], s1);
        for k in 0..s0.n() {
            assert!((p.states[2].u[k] - 0.5 * (s0.u[k] + s1.u[k])).abs() < 1e-15);
        }
        let o = NormOptions::default();
        let d01 = distance_upper(&s0, &y0, &s1, &y1, 9, &o, &b, 1e-3).unwrap().length;
        let d10 = distance_upper(&s1, &y1, &s0, &y0, 9, &o, &b, 1e-3).unwrap().length;
        assert!(d01 > 0.0);
        assert!((d01 - d10).abs() <= 1e-12 * d01);
        assert_eq!(distance_upper(&s0, &y0, &s0, &y0, 9, &o, &b, 1e-3).unwrap().length, 0.0);
        let d17 = distance_upper(&s0, &y0, &s1, &y1, 17, &o, &b, 1e-3).unwrap().length;
        assert!((d17 - d01).abs() < 0.01 * d01);
    }

    #[test]
    fn excluded_nodes_redistribute_measure() {
        let th = [0.0, 0.25, 0.5, 0.75, 1.0];
        let f = [1.0; 5];
        assert!((retained_trapezoid(&th, &f, &[true; 5]) - 1.0).abs() < 1e-15);
        assert!((retained_trapezoid(&th, &f, &[true, false, true, true, false]) - 1.0).abs() < 1e-15);
    }
}

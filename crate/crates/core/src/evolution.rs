//! Time integration of the semilinear system and conserved-quantity monitoring.

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::grid::{integrate, prefix_integral};
use crate::nonlocal::{assemble_sources_with, Quadrature, SourceFields};
use crate::state::{HalfAngle, OmegaBounds, TransformedState};

/// Settings shared by every step of an evolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub quadrature: Quadrature,
    pub bounds: OmegaBounds,
}

/// Time derivative of `(U, V, W, Z, q)` together with `y_t = U·V`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
    pub dq: Vec<f64>,
    pub dy: Vec<f64>,
}

// W_t with (a, b, wa) = (U, V, W); Z_t with (V, U, Z)
#[inline]
fn angle_rate(a: f64, b: f64, wa: HalfAngle, first: f64, dx_second: f64) -> f64 {
    let c = wa.cos2;
    2.0 * a * a * b * c - b * wa.sin2 - 2.0 * (first + dx_second) * c
}

// one of the two terms of q_t
#[inline]
fn growth(q: f64, a: f64, b: f64, wa: HalfAngle, first: f64, dx_second: f64) -> f64 {
    q * (a * a * b + 0.5 * b - first - dx_second) * wa.sin
}

/// Right-hand side of the system for given sources.
pub fn rhs_with_sources(state: &TransformedState, src: &SourceFields) -> StateRate {
    let n = state.n();
    let mut r = StateRate {
        du: vec![0.0; n],
        dv: vec![0.0; n],
        dw: vec![0.0; n],
        dz: vec![0.0; n],
        dq: vec![0.0; n],
        dy: vec![0.0; n],
    };
    for k in 0..n {
        let (u, v, q) = (state.u[k], state.v[k], state.q[k]);
        let (w, z) = (HalfAngle::of(state.w[k]), HalfAngle::of(state.z[k]));
        r.du[k] = -src.dx_p1[k] - src.p2[k];
        r.dv[k] = -src.dx_s1[k] - src.s2[k];
        r.dw[k] = angle_rate(u, v, w, src.p1[k], src.dx_p2[k]);
        r.dz[k] = angle_rate(v, u, z, src.s1[k], src.dx_s2[k]);
        r.dq[k] = growth(q, u, v, w, src.p1[k], src.dx_p2[k])
            + growth(q, v, u, z, src.s1[k], src.dx_s2[k]);
        r.dy[k] = u * v;
    }
    r
}

/// Right-hand side of the system.
pub fn rhs(state: &TransformedState, quad: Quadrature) -> Result<StateRate> {
    let src = assemble_sources_with(state, quad)?;
    let r = rhs_with_sources(state, &src);
    for (name, f) in [("U", &r.du), ("V", &r.dv), ("W", &r.dw), ("Z", &r.dz), ("q", &r.dq)] {
        if let Some(k) = f.iter().position(|x| !x.is_finite()) {
            return Err(NovikovError::Numerical {
                node: k,
                message: format!("non-finite {name}_t"),
            });
        }
    }
    Ok(r)
}

fn advance(s: &TransformedState, r: &StateRate, h: f64) -> TransformedState {
    let f = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, dx)| x + h * dx).collect::<Vec<_>>();
    TransformedState {
        t: s.t + h,
        grid: s.grid,
        u: f(&s.u, &r.du),
        v: f(&s.v, &r.dv),
        w: f(&s.w, &r.dw),
        z: f(&s.z, &r.dz),
        q: f(&s.q, &r.dq),
    }
}

fn check_step(state: &TransformedState, y: &[f64], dt: f64) -> Result<()> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(NovikovError::Contract(format!("time step must be finite and nonzero, got {dt}")));
    }
    if y.len() != state.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    Ok(())
}

/// The Runge–Kutta increment `dt/6 (k1 + 2k2 + 2k3 + k4)` for every field.
fn rk4_increment(state: &TransformedState, dt: f64, quad: Quadrature) -> Result<StateRate> {
    let k1 = rhs(state, quad)?;
    // y does not feed back into the rates, so only the states are staged
    let k2 = rhs(&advance(state, &k1, 0.5 * dt), quad)?;
    let k3 = rhs(&advance(state, &k2, 0.5 * dt), quad)?;
    let k4 = rhs(&advance(state, &k3, dt), quad)?;
    let sixth = dt / 6.0;
    let combine = |d1: &[f64], d2: &[f64], d3: &[f64], d4: &[f64]| {
        (0..d1.len())
            .map(|k| sixth * (d1[k] + 2.0 * d2[k] + 2.0 * d3[k] + d4[k]))
            .collect::<Vec<_>>()
    };
    Ok(StateRate {
        du: combine(&k1.du, &k2.du, &k3.du, &k4.du),
        dv: combine(&k1.dv, &k2.dv, &k3.dv, &k4.dv),
        dw: combine(&k1.dw, &k2.dw, &k3.dw, &k4.dw),
        dz: combine(&k1.dz, &k2.dz, &k3.dz, &k4.dz),
        dq: combine(&k1.dq, &k2.dq, &k3.dq, &k4.dq),
        dy: combine(&k1.dy, &k2.dy, &k3.dy, &k4.dy),
    })
}

/// One classical Runge–Kutta step of size `dt` (negative steps go back in time).
/// `W` and `Z` are never wrapped.
pub fn rk4_step(
    state: &TransformedState,
    y: &[f64],
    dt: f64,
    opts: &EvolveOptions,
) -> Result<(TransformedState, Vec<f64>)> {
    check_step(state, y, dt)?;
    let inc = rk4_increment(state, dt, opts.quadrature)?;
    let add = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, dx)| x + dx).collect::<Vec<_>>();
    let next = TransformedState {
        t: state.t + dt,
        grid: state.grid,
        u: add(&state.u, &inc.du),
        v: add(&state.v, &inc.dv),
        w: add(&state.w, &inc.dw),
        z: add(&state.z, &inc.dz),
        q: add(&state.q, &inc.dq),
    };
    let y_next = add(y, &inc.dy);
    opts.bounds.check(&next)?;
    Ok((next, y_next))
}

/// Runge–Kutta stepper that carries the rounding error of every state update
/// (compensated summation). Over thousands of steps this keeps the accumulated
/// rounding of the fields near machine precision instead of growing linearly.
struct CompensatedStepper {
    carry: [Vec<f64>; 6],
}

impl CompensatedStepper {
    fn new(n: usize) -> Self {
        Self { carry: std::array::from_fn(|_| vec![0.0; n]) }
    }

    fn step(
        &mut self,
        state: &mut TransformedState,
        y: &mut [f64],
        dt: f64,
        opts: &EvolveOptions,
    ) -> Result<()> {
        check_step(state, y, dt)?;
        let inc = rk4_increment(state, dt, opts.quadrature)?;
        let fields: [(&mut [f64], &[f64]); 6] = [
            (&mut state.u, &inc.du),
            (&mut state.v, &inc.dv),
            (&mut state.w, &inc.dw),
            (&mut state.z, &inc.dz),
            (&mut state.q, &inc.dq),
            (y, &inc.dy),
        ];
        for ((a, d), c) in fields.into_iter().zip(self.carry.iter_mut()) {
            for k in 0..a.len() {
                let yk = d[k] - c[k];
                let t = a[k] + yk;
                c[k] = (t - a[k]) - yk;
                a[k] = t;
            }
        }
        state.t += dt;
        opts.bounds.check(state)
    }
}

/// The four conserved functionals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConservedSet {
    pub e_u: f64,
    pub e_v: f64,
    pub g: f64,
    pub h: f64,
}

impl ConservedSet {
    pub fn as_array(&self) -> [f64; 4] {
        [self.e_u, self.e_v, self.g, self.h]
    }

    /// Componentwise `|self − reference| / |reference|`; absolute where the
    /// reference vanishes.
    pub fn rel_drift(&self, reference: &ConservedSet) -> [f64; 4] {
        let a = self.as_array();
        let b = reference.as_array();
        std::array::from_fn(|i| {
            let d = (a[i] - b[i]).abs();
            if b[i] == 0.0 {
                d
            } else {
                d / b[i].abs()
            }
        })
    }

    /// `7·E_u·E_v − H`, which bounds `‖u_x v_x‖²` and is nonnegative.
    pub fn positivity_margin(&self) -> f64 {
        7.0 * self.e_u * self.e_v - self.h
    }
}

// (a² cos²(wa/2) + sin²(wa/2)) q cos²(wb/2)
#[inline]
fn energy_density(q: f64, a: f64, wa: HalfAngle, wb: HalfAngle) -> f64 {
    (a * a * wa.cos2 + wa.sin2) * (q * wb.cos2)
}

/// Conserved functionals evaluated in transformed variables.
pub fn conserved(state: &TransformedState) -> Result<ConservedSet> {
    state.check_shape()?;
    let n = state.n();
    let mut eu = vec![0.0; n];
    let mut ev = vec![0.0; n];
    let mut gg = vec![0.0; n];
    let mut hh = vec![0.0; n];
    for k in 0..n {
        let (u, v, q) = (state.u[k], state.v[k], state.q[k]);
        let (w, z) = (HalfAngle::of(state.w[k]), HalfAngle::of(state.z[k]));
        let (cw, cz, sw, sz) = (w.cos2, z.cos2, w.sin2, z.sin2);
        let sinsin = w.sin * z.sin;
        eu[k] = energy_density(q, u, w, z);
        ev[k] = energy_density(q, v, z, w);
        gg[k] = q * u * v * (cw * cz) + 0.25 * q * sinsin;
        hh[k] = q
            * (3.0 * u * u * v * v * (cw * cz) + u * u * cw * sz + v * v * sw * cz + u * v * sinsin
                - sw * sz);
    }
    let grid = &state.grid;
    Ok(ConservedSet {
        e_u: integrate(&eu, grid)?,
        e_v: integrate(&ev, grid)?,
        g: integrate(&gg, grid)?,
        h: integrate(&hh, grid)?,
    })
}

/// `y` rebuilt from `y_ξ`, anchored at the first node of the integrated `y`.
pub fn y_formula(state: &TransformedState, y_first: f64) -> Result<Vec<f64>> {
    let c = prefix_integral(&state.y_xi(), &state.grid)?;
    Ok(c.into_iter().map(|v| y_first + v).collect())
}

/// Recorded states and diagnostics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TransformedState>,
    pub ys: Vec<Vec<f64>>,
    pub conserved_log: Vec<ConservedSet>,
    /// `max |y − y_formula|` at each recorded time.
    pub y_consistency: Vec<f64>,
    /// Largest field magnitude at the window ends at each recorded time.
    pub edge_excess: Vec<f64>,
}

impl Trajectory {
    fn record(&mut self, state: &TransformedState, y: &[f64], bounds: &OmegaBounds) -> Result<()> {
        let yf = y_formula(state, y[0])?;
        let cons = y.iter().zip(&yf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.times.push(state.t);
        self.conserved_log.push(conserved(state)?);
        self.y_consistency.push(cons);
        self.edge_excess.push(bounds.edge_excess(state));
        self.states.push(state.clone());
        self.ys.push(y.to_vec());
        Ok(())
    }

    pub fn last(&self) -> Option<(&TransformedState, &[f64])> {
        Some((self.states.last()?, self.ys.last()?.as_slice()))
    }

    /// Largest relative drift of each functional from the first record.
    pub fn max_drift(&self) -> [f64; 4] {
        let Some(first) = self.conserved_log.first() else {
            return [0.0; 4];
        };
        self.conserved_log.iter().fold([0.0; 4], |acc, c| {
            let d = c.rel_drift(first);
            std::array::from_fn(|i| acc[i].max(d[i]))
        })
    }
}

/// An evolution that stopped early, with everything recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveAbort {
    pub partial: Trajectory,
    pub error: NovikovError,
}

impl std::fmt::Display for EvolveAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} recorded times)", self.error, self.partial.times.len())
    }
}

impl std::error::Error for EvolveAbort {}

/// Integrates from `state0.t` to `state0.t + t_span` with fixed steps `dt`,
/// recording every `record_every` steps and at the end. `t_span` and `dt` must
/// share their sign.
pub fn evolve(
    state0: &TransformedState,
    y0: &[f64],
    t_span: f64,
    dt: f64,
    record_every: usize,
    opts: &EvolveOptions,
) -> std::result::Result<Trajectory, Box<EvolveAbort>> {
    let abort = |partial: Trajectory, error: NovikovError| Box::new(EvolveAbort { partial, error });
    let mut traj = Trajectory::default();
    let ratio = t_span / dt;
    let steps = ratio.round();
    if !(dt != 0.0 && dt.is_finite() && t_span.is_finite())
        || steps < 0.0
        || (ratio - steps).abs() > 1e-9 * ratio.abs().max(1.0)
        || record_every == 0
    {
        return Err(abort(
            traj,
            NovikovError::Config(format!(
                "time span {t_span} must be a nonnegative integer multiple of dt = {dt}, record_every >= 1"
            )),
        ));
    }
    if y0.len() != state0.n() {
        return Err(abort(traj, NovikovError::Contract("y0 has the wrong length".into())));
    }
    if let Err(e) = opts.bounds.check(state0) {
        return Err(abort(traj, e));
    }
    let steps = steps as usize;
    let t0 = state0.t;
    let mut state = state0.clone();
    let mut y = y0.to_vec();
    let mut stepper = CompensatedStepper::new(state.n());
    if let Err(e) = traj.record(&state, &y, &opts.bounds) {
        return Err(abort(traj, e));
    }
    for k in 1..=steps {
        if let Err(e) = stepper.step(&mut state, &mut y, dt, opts) {
            return Err(abort(traj, e));
        }
        state.t = t0 + k as f64 * dt;
        if k % record_every == 0 || k == steps {
            if let Err(e) = traj.record(&state, &y, &opts.bounds) {
                return Err(abort(traj, e));
            }
        }
    }
    Ok(traj)
}

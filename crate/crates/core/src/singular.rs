//! Detection and classification of the points where `W` or `Z` reaches `±π`,
//! derivative-cancellation checks, and Hölder exponent fits.
//!
//! Angles are compared modulo 2π, so `W = −π` and `W = π` describe the same
//! breaking configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::grid::{local_derivatives, Grid};
use crate::reconstruction::EulerField;
use crate::state::{HalfAngle, TransformedState};

/// Which level set produced a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    W,
    Z,
    Both,
}

/// Whether the angle crosses the level or only touches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    Transversal,
    Tangential,
}

/// Tolerances of the numerical predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularOptions {
    /// Angle distance to `±π` treated as equality.
    pub tol_pi: f64,
    /// Derivatives below `tol_zero_rel` times their largest magnitude over the
    /// window count as zero.
    pub tol_zero_rel: f64,
    /// Half-width of that window, in nodes.
    pub window_nodes: usize,
    /// Number of nodes in the local interpolation stencils.
    pub stencil: usize,
}

impl Default for SingularOptions {
    fn default() -> Self {
        Self { tol_pi: 1e-3, tol_zero_rel: 1e-3, window_nodes: 25, stencil: 12 }
    }
}

impl SingularOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tol_pi > 0.0 && self.tol_zero_rel > 0.0 && self.window_nodes >= 2 && self.stencil >= 7 {
            Ok(())
        } else {
            Err(NovikovError::Config(format!("invalid singular-analysis options {self:?}")))
        }
    }
}

/// Predicate values and the tolerances they were compared with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// Distance of `W` to the nearest odd multiple of π.
    pub w_pi: f64,
    pub z_pi: f64,
    pub tol_pi: f64,
    pub w_xi_abs: f64,
    pub z_xi_abs: f64,
    pub tol_zero_w: f64,
    pub tol_zero_z: f64,
    pub w_xixi_abs: f64,
    pub z_xixi_abs: f64,
    pub tol_zero2_w: f64,
    pub tol_zero2_z: f64,
}

/// A point on `Γ^W ∪ Γ^Z` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub t: f64,
    pub xi_star: f64,
    pub x_star: f64,
    pub curve: Curve,
    pub contact: Contact,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub z: f64,
    pub q: f64,
    pub w_xi: f64,
    pub z_xi: f64,
    pub w_xixi: f64,
    pub z_xixi: f64,
    pub case_label: Option<u8>,
    /// The point violates the non-degeneracy condition `(W_ξ, W_ξξ) ≠ (0, 0)`
    /// (or its `Z` analogue) within tolerance.
    pub degenerate: bool,
    pub margins: Option<Margins>,
    pub fitted_exponent_u: Option<f64>,
    pub fitted_exponent_v: Option<f64>,
}

/// Distance of an angle to the nearest odd multiple of π.
pub fn pi_distance(theta: f64) -> f64 {
    let r = (theta - PI).rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

fn local(samples: &[f64], grid: &Grid, xi: f64, width: usize, order: usize) -> Result<Vec<f64>> {
    local_derivatives(samples, grid, xi, width.min(grid.n()), order)
}

/// Newton iteration for a root of the local interpolant of `f^(order)`,
/// bracketed to `[lo, hi]`.
fn refine_root(
    f: &[f64],
    grid: &Grid,
    level: f64,
    order: usize,
    start: f64,
    lo: f64,
    hi: f64,
    width: usize,
) -> f64 {
    let mut x = start;
    for _ in 0..20 {
        let Ok(d) = local(f, grid, x, width, order + 1) else {
            return start;
        };
        let (g, dg) = (d[order] - if order == 0 { level } else { 0.0 }, d[order + 1]);
        if dg == 0.0 || !dg.is_finite() {
            return x;
        }
        let next = x - g / dg;
        if !(next >= lo && next <= hi) {
            return x;
        }
        if (next - x).abs() < 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

struct Event {
    xi: f64,
    curve: Curve,
    contact: Contact,
}

fn angle_events(f: &[f64], grid: &Grid, curve: Curve, opts: &SingularOptions) -> Vec<Event> {
    let n = grid.n();
    let dx = grid.dx();
    let mut out = Vec::new();
    for level in [PI, -PI] {
        let g: Vec<f64> = f.iter().map(|v| v - level).collect();
        for k in 0..n - 1 {
            let (a, b) = (g[k], g[k + 1]);
            // an exact zero counts as a crossing only if the sign changes across it
            let hit = if a == 0.0 {
                let before = if k > 0 { g[k - 1] } else { -b };
                (before < 0.0) != (b < 0.0) && b != 0.0
            } else {
                (a < 0.0) != (b < 0.0) && b != 0.0
            };
            if !hit {
                continue;
            }
            let (xa, xb) = (grid.node(k), grid.node(k + 1));
            let lin = if a == 0.0 { xa } else { xa + dx * a / (a - b) };
            let xi = refine_root(f, grid, level, 0, lin, xa - dx, xb + dx, opts.stencil);
            out.push(Event { xi, curve, contact: Contact::Transversal });
        }
        for k in 1..n - 1 {
            let (a, b, c) = (g[k - 1], g[k], g[k + 1]);
            let extremum = (b - a) * (c - b) <= 0.0 && !(a == b && b == c);
            let same_side = (a < 0.0) == (c < 0.0) && (b == 0.0 || (a < 0.0) == (b < 0.0));
            if extremum && same_side && b.abs() <= opts.tol_pi {
                let lo = grid.node(k) - dx;
                let hi = grid.node(k) + dx;
                let xi = refine_root(f, grid, 0.0, 1, grid.node(k), lo, hi, opts.stencil);
                out.push(Event { xi, curve, contact: Contact::Tangential });
            }
        }
    }
    out
}

fn point_at(state: &TransformedState, y: &[f64], xi: f64, curve: Curve, contact: Contact, width: usize) -> Result<SingularPoint> {
    let g = &state.grid;
    let w = local(&state.w, g, xi, width, 2)?;
    let z = local(&state.z, g, xi, width, 2)?;
    Ok(SingularPoint {
        t: state.t,
        xi_star: xi,
        x_star: local(y, g, xi, width, 0)?[0],
        curve,
        contact,
        u: local(&state.u, g, xi, width, 0)?[0],
        v: local(&state.v, g, xi, width, 0)?[0],
        w: w[0],
        z: z[0],
        q: local(&state.q, g, xi, width, 0)?[0],
        w_xi: w[1],
        z_xi: z[1],
        w_xixi: w[2],
        z_xixi: z[2],
        case_label: None,
        degenerate: false,
        margins: None,
        fitted_exponent_u: None,
        fitted_exponent_v: None,
    })
}

/// All crossings and tangential touches of `W` and `Z` with `±π`, located to
/// sub-cell accuracy. A `W` event at which `Z` is also at `±π` absorbs the
/// matching `Z` event and is reported with `curve = Both`.
pub fn find_crossings(state: &TransformedState, y: &[f64], opts: &SingularOptions) -> Result<Vec<SingularPoint>> {
    state.check_shape()?;
    opts.validate()?;
    if y.len() != state.n() {
        return Err(NovikovError::Contract("y has the wrong length".into()));
    }
    let g = &state.grid;
    let mut events = angle_events(&state.w, g, Curve::W, opts);
    events.extend(angle_events(&state.z, g, Curve::Z, opts));
    let mut points: Vec<SingularPoint> = Vec::with_capacity(events.len());
    for e in &events {
        points.push(point_at(state, y, e.xi, e.curve, e.contact, opts.stencil)?);
    }
    // merge coincident W and Z events
    let merge_dist = 2.0 * g.dx();
    let mut keep = vec![true; points.len()];
    for i in 0..points.len() {
        if points[i].curve != Curve::W || pi_distance(points[i].z) > opts.tol_pi {
            continue;
        }
        points[i].curve = Curve::Both;
        for j in 0..points.len() {
            if keep[j]
                && points[j].curve == Curve::Z
                && (points[j].xi_star - points[i].xi_star).abs() <= merge_dist
                && pi_distance(points[j].w) <= opts.tol_pi
            {
                keep[j] = false;
            }
        }
    }
    let mut out: Vec<SingularPoint> =
        points.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect();
    out.sort_by(|a, b| a.xi_star.total_cmp(&b.xi_star));
    // a crossing that lands exactly on a node may be seen from two cells
    out.dedup_by(|b, a| a.curve == b.curve && (a.xi_star - b.xi_star).abs() < 1e-9 * g.dx());
    Ok(out)
}

fn window_max(samples: &[f64], grid: &Grid, xi: f64, half: usize) -> f64 {
    let c = grid.locate(xi).round() as usize;
    let lo = c.saturating_sub(half);
    let hi = (c + half).min(grid.n() - 1);
    samples[lo..=hi].iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn zero_tol(scale: f64, rel: f64) -> f64 {
    rel * if scale > 0.0 { scale } else { 1.0 }
}

/// Assigns the case label from the predicates `(W = π?, W_ξ = 0?, Z = π?, Z_ξ = 0?)`.
pub fn classify(point: &SingularPoint, state: &TransformedState, opts: &SingularOptions) -> Result<SingularPoint> {
    opts.validate()?;
    let g = &state.grid;
    let wxi = crate::grid::fd_derivative(&state.w, g, 1)?;
    let zxi = crate::grid::fd_derivative(&state.z, g, 1)?;
    let wxx = crate::grid::fd_derivative(&state.w, g, 2)?;
    let zxx = crate::grid::fd_derivative(&state.z, g, 2)?;
    let m = Margins {
        w_pi: pi_distance(point.w),
        z_pi: pi_distance(point.z),
        tol_pi: opts.tol_pi,
        w_xi_abs: point.w_xi.abs(),
        z_xi_abs: point.z_xi.abs(),
        tol_zero_w: zero_tol(window_max(&wxi, g, point.xi_star, opts.window_nodes), opts.tol_zero_rel),
        tol_zero_z: zero_tol(window_max(&zxi, g, point.xi_star, opts.window_nodes), opts.tol_zero_rel),
        w_xixi_abs: point.w_xixi.abs(),
        z_xixi_abs: point.z_xixi.abs(),
        tol_zero2_w: zero_tol(window_max(&wxx, g, point.xi_star, opts.window_nodes), opts.tol_zero_rel),
        tol_zero2_z: zero_tol(window_max(&zxx, g, point.xi_star, opts.window_nodes), opts.tol_zero_rel),
    };
    let wpi = m.w_pi <= m.tol_pi;
    let zpi = m.z_pi <= m.tol_pi;
    let wz = m.w_xi_abs <= m.tol_zero_w;
    let zz = m.z_xi_abs <= m.tol_zero_z;
    let label = match (wpi, zpi) {
        (true, false) => Some(if wz { 4 } else { 1 }),
        (false, true) => Some(if zz { 5 } else { 2 }),
        (true, true) => Some(match (wz, zz) {
            (false, false) => 3,
            (true, false) => 6,
            (false, true) => 7,
            (true, true) => 8,
        }),
        (false, false) => None,
    };
    let degenerate = (wpi && wz && m.w_xixi_abs <= m.tol_zero2_w)
        || (zpi && zz && m.z_xixi_abs <= m.tol_zero2_z);
    let mut p = point.clone();
    p.case_label = label;
    p.degenerate = degenerate;
    p.margins = Some(m);
    Ok(p)
}

/// Case obtained after exchanging `(U, W)` with `(V, Z)`.
pub fn swapped_case(case: u8) -> u8 {
    match case {
        1 => 2,
        2 => 1,
        4 => 5,
        5 => 4,
        6 => 7,
        7 => 6,
        c => c,
    }
}

/// Leading Hölder exponents `(α_u, α_v)` for each case.
pub fn expected_exponents(case: u8) -> Option<(f64, f64)> {
    Some(match case {
        1 => (2.0 / 3.0, 1.0),
        2 => (1.0, 2.0 / 3.0),
        3 => (0.8, 0.8),
        4 => (0.6, 1.0),
        5 => (1.0, 0.6),
        6 => (5.0 / 7.0, 6.0 / 7.0),
        7 => (6.0 / 7.0, 5.0 / 7.0),
        8 => (7.0 / 9.0, 7.0 / 9.0),
        _ => return None,
    })
}

/// Whether a check expects zero or a nonzero leading coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Vanishing,
    Leading,
}

/// How the measured derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Finite differences of analytically evaluated `y_ξ`, `U_ξ` or `V_ξ`.
    Direct,
    /// Product of the leading Taylor coefficients of the trigonometric factors.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationEntry {
    /// `"y"`, `"U"` or `"V"`.
    pub field: String,
    /// Order of the ξ-derivative.
    pub order: usize,
    pub kind: CheckKind,
    pub method: Method,
    pub claimed: f64,
    pub measured: f64,
    /// Absolute error for vanishing checks, relative error for leading ones.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    pub t: f64,
    pub xi_star: f64,
    pub case_label: u8,
    pub entries: Vec<CancellationEntry>,
    /// False when the stencil did not fit inside the grid.
    pub complete: bool,
    pub passed: bool,
    /// Lowest derivative order `i ≥ 2` of y found clearly nonzero.
    pub nonvanishing_order: Option<usize>,
}

/// Tolerances of the cancellation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationTolerances {
    /// Relative bound for derivatives of order ≤ 2 expected to vanish.
    pub vanish_low: f64,
    /// Relative bound for higher derivatives expected to vanish.
    pub vanish_high: f64,
    /// Relative error allowed on leading coefficients.
    pub leading: f64,
}

impl Default for CancellationTolerances {
    fn default() -> Self {
        Self { vanish_low: 1e-8, vanish_high: 1e-5, leading: 1e-2 }
    }
}

/// Leading orders of the trigonometric factors at the point: the order to which
/// `cos²(θ/2)` vanishes and the order of the first nonzero term of `sin θ`.
fn factor_orders(at_pi: bool, flat: bool) -> (usize, usize) {
    match (at_pi, flat) {
        (false, _) => (0, 0),
        (true, false) => (2, 1),
        (true, true) => (4, 2),
    }
}

struct Factors {
    cos2: Vec<f64>,
    sin: Vec<f64>,
}

fn factors(theta: &[f64]) -> Factors {
    let h: Vec<HalfAngle> = theta.iter().map(|&t| HalfAngle::of(t)).collect();
    Factors { cos2: h.iter().map(|a| a.cos2).collect(), sin: h.iter().map(|a| a.sin).collect() }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Claimed values of the derivative identities for each case:
/// `(field, order, value, natural scale)`.
fn claims(case: u8, p: &SingularPoint) -> Vec<(&'static str, usize, f64, f64)> {
    let (q, wx, zx, wxx, zxx) = (p.q, p.w_xi, p.z_xi, p.w_xixi, p.z_xixi);
    let (cw, cz) = (HalfAngle::of(p.w).cos2, HalfAngle::of(p.z).cos2);
    let (sw, sz) = (p.w.sin(), p.z.sin());
    match case {
        1 => vec![
            ("y", 3, 0.5 * q * wx * wx * cz, 0.5 * q * wx * wx),
            ("U", 2, -0.5 * q * wx * cz, 0.5 * q * wx.abs()),
            ("V", 3, 0.25 * q * wx * wx * sz, 0.25 * q * wx * wx),
        ],
        2 => vec![
            ("y", 3, 0.5 * q * zx * zx * cw, 0.5 * q * zx * zx),
            ("V", 2, -0.5 * q * zx * cw, 0.5 * q * zx.abs()),
            ("U", 3, 0.25 * q * zx * zx * sw, 0.25 * q * zx * zx),
        ],
        3 => vec![
            ("y", 5, 1.5 * q * wx * wx * zx * zx, 1.5 * q * wx * wx * zx * zx),
            ("U", 4, -0.75 * q * wx * zx * zx, 0.75 * q * (wx * zx * zx).abs()),
            ("V", 4, -0.75 * q * wx * wx * zx, 0.75 * q * (wx * wx * zx).abs()),
        ],
        4 => vec![
            ("y", 5, 1.5 * q * wxx * wxx * cz, 1.5 * q * wxx * wxx),
            ("U", 3, -0.5 * q * wxx * cz, 0.5 * q * wxx.abs()),
            ("V", 5, 0.75 * q * wxx * wxx * sz, 0.75 * q * wxx * wxx),
        ],
        5 => vec![
            ("y", 5, 1.5 * q * zxx * zxx * cw, 1.5 * q * zxx * zxx),
            ("V", 3, -0.5 * q * zxx * cw, 0.5 * q * zxx.abs()),
            ("U", 5, 0.75 * q * zxx * zxx * sw, 0.75 * q * zxx * zxx),
        ],
        6 => vec![
            ("y", 7, 11.25 * q * wxx * wxx * zx * zx, 11.25 * q * wxx * wxx * zx * zx),
            ("U", 5, -1.5 * q * wxx * zx * zx, 1.5 * q * (wxx * zx * zx).abs()),
            ("V", 6, -3.75 * q * wxx * wxx * zx, 3.75 * q * (wxx * wxx * zx).abs()),
        ],
        7 => vec![
            ("y", 7, 11.25 * q * zxx * zxx * wx * wx, 11.25 * q * zxx * zxx * wx * wx),
            ("V", 5, -1.5 * q * zxx * wx * wx, 1.5 * q * (zxx * wx * wx).abs()),
            ("U", 6, -3.75 * q * zxx * zxx * wx, 3.75 * q * (zxx * zxx * wx).abs()),
        ],
        8 => vec![
            ("y", 9, 157.5 * q * wxx * wxx * zxx * zxx, 157.5 * q * wxx * wxx * zxx * zxx),
            ("U", 7, -11.25 * q * wxx * zxx * zxx, 11.25 * q * (wxx * zxx * zxx).abs()),
            ("V", 7, -11.25 * q * wxx * wxx * zxx, 11.25 * q * (wxx * wxx * zxx).abs()),
        ],
        _ => Vec::new(),
    }
}

/// Highest derivative of the sampled first derivatives taken by finite differences.
const MAX_DIRECT: usize = 4;

/// Checks the derivative-cancellation identities of the point's case.
///
/// `y_ξ`, `U_ξ`, `V_ξ` are evaluated from their closed forms at the nodes and
/// differentiated with a local high-order stencil, up to the fourth derivative
/// (fifth of `y`). Leading coefficients beyond that are measured as products of
/// the Taylor coefficients of `cos²(W/2)`, `cos²(Z/2)`, `sin W`, `sin Z`.
pub fn verify_cancellations(
    point: &SingularPoint,
    state: &TransformedState,
    tol: &CancellationTolerances,
    opts: &SingularOptions,
) -> Result<CancellationReport> {
    let case = point.case_label.ok_or_else(|| {
        NovikovError::Contract("verify_cancellations needs a classified point".into())
    })?;
    let g = &state.grid;
    let width = opts.stencil.max(MAX_DIRECT + 6);
    let centre = g.locate(point.xi_star);
    let half = width as f64 / 2.0;
    let complete = centre >= half && centre <= (g.n() - 1) as f64 - half;

    let y_xi = state.y_xi();
    let u_xi = state.u_xi();
    let v_xi = state.v_xi();
    let fw = factors(&state.w);
    let fz = factors(&state.z);
    let at = |s: &[f64], order: usize| local(s, g, point.xi_star, width, order);
    let dy = at(&y_xi, MAX_DIRECT)?;
    let du = at(&u_xi, MAX_DIRECT)?;
    let dv = at(&v_xi, MAX_DIRECT)?;
    let cw = at(&fw.cos2, 4)?;
    let cz = at(&fz.cos2, 4)?;
    let sw = at(&fw.sin, 2)?;
    let sz = at(&fz.sin, 2)?;

    let m = point.margins.unwrap_or(Margins {
        w_pi: pi_distance(point.w),
        z_pi: pi_distance(point.z),
        tol_pi: opts.tol_pi,
        w_xi_abs: point.w_xi.abs(),
        z_xi_abs: point.z_xi.abs(),
        tol_zero_w: 0.0,
        tol_zero_z: 0.0,
        w_xixi_abs: point.w_xixi.abs(),
        z_xixi_abs: point.z_xixi.abs(),
        tol_zero2_w: 0.0,
        tol_zero2_z: 0.0,
    });
    let (wpi, zpi) = (matches!(case, 1 | 3 | 4 | 6 | 7 | 8), matches!(case, 2 | 3 | 5 | 6 | 7 | 8));
    let (wflat, zflat) = (matches!(case, 4 | 6 | 8), matches!(case, 5 | 7 | 8));
    let _ = m;
    let (aw, gw) = factor_orders(wpi, wflat);
    let (az, gz) = factor_orders(zpi, zflat);
    let coef = |d: &[f64], k: usize| d[k] / factorial(k);
    let q = point.q;
    // composite leading coefficients of y_ξ, U_ξ, V_ξ
    let composite = |field: &str| -> (usize, f64) {
        match field {
            "y" => (aw + az, q * coef(&cw, aw) * coef(&cz, az)),
            "U" => (gw + az, 0.5 * q * coef(&sw, gw) * coef(&cz, az)),
            _ => (aw + gz, 0.5 * q * coef(&cw, aw) * coef(&sz, gz)),
        }
    };

    let mut entries = Vec::new();
    let mut passed = true;
    for (field, order, claimed, natural) in claims(case, point) {
        let direct: &[f64] = match field {
            "y" => &dy,
            "U" => &du,
            _ => &dv,
        };
        let (lead_order, lead_coef) = composite(field);
        debug_assert_eq!(lead_order + 1, order);
        let scale = natural.max(if field == "y" { window_max(&y_xi, g, point.xi_star, opts.window_nodes) } else { 0.0 });
        for j in 1..order.min(MAX_DIRECT + 2) {
            let measured = direct[j - 1];
            let bound = if j <= 2 { tol.vanish_low } else { tol.vanish_high } * scale.max(f64::MIN_POSITIVE);
            let ok = measured.abs() <= bound;
            passed &= ok;
            entries.push(CancellationEntry {
                field: field.to_string(),
                order: j,
                kind: CheckKind::Vanishing,
                method: Method::Direct,
                claimed: 0.0,
                measured,
                error: measured.abs(),
                tolerance: bound,
                passed: ok,
            });
        }
        let (measured, method) = if order - 1 <= MAX_DIRECT {
            (direct[order - 1], Method::Direct)
        } else {
            (factorial(lead_order) * lead_coef, Method::Composite)
        };
        let denom = claimed.abs().max(1e-3 * natural);
        let error = if denom > 0.0 { (measured - claimed).abs() / denom } else { (measured - claimed).abs() };
        let ok = error <= tol.leading;
        passed &= ok;
        entries.push(CancellationEntry {
            field: field.to_string(),
            order,
            kind: CheckKind::Leading,
            method,
            claimed,
            measured,
            error,
            tolerance: tol.leading,
            passed: ok,
        });
    }
    let y_scale = window_max(&y_xi, g, point.xi_star, opts.window_nodes).max(f64::MIN_POSITIVE);
    let nonvanishing_order = (2..=MAX_DIRECT + 1)
        .find(|&i| dy[i - 1].abs() > tol.vanish_high * y_scale)
        .or_else(|| {
            let (o, c) = composite("y");
            (c.abs() > tol.vanish_high * y_scale).then_some(o + 1)
        });
    Ok(CancellationReport {
        t: point.t,
        xi_star: point.xi_star,
        case_label: case,
        entries,
        complete,
        passed: passed && complete,
        nonvanishing_order,
    })
}

/// Which Eulerian component to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideFit {
    pub alpha: f64,
    pub r2: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Mean of the two one-sided slopes.
    pub alpha: f64,
    /// Smaller of the two coefficients of determination.
    pub r2: f64,
    pub left: SideFit,
    pub right: SideFit,
}

/// Minimum number of samples on each side of the point.
pub const MIN_FIT_SAMPLES: usize = 8;

fn line_fit(pts: &[(f64, f64)]) -> Result<SideFit> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(NovikovError::Fit("samples do not spread in log|x − x*|".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(SideFit { alpha: slope, r2, samples: pts.len() })
}

/// Least-squares slope of `log|f − f*|` against `log|x − x*|` on each side of
/// `x_star`, using the graph nodes with `min_gap ≤ |x − x*| ≤ side_window`.
/// `reference` overrides `f*`, which otherwise is interpolated at `x_star`.
pub fn fit_exponent(
    field: &EulerField,
    component: Component,
    x_star: f64,
    side_window: f64,
    min_gap: f64,
    reference: Option<f64>,
) -> Result<ExponentFit> {
    if !(side_window > min_gap && min_gap >= 0.0) {
        return Err(NovikovError::Fit(format!(
            "window {side_window} must exceed the gap {min_gap}"
        )));
    }
    let f = match component {
        Component::U => &field.u,
        Component::V => &field.v,
    };
    let f_star = match reference {
        Some(r) => r,
        None => {
            let (u, v) = crate::reconstruction::sample_at(field, x_star)?;
            if component == Component::U {
                u
            } else {
                v
            }
        }
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for k in 0..field.len() {
        let d = field.x[k] - x_star;
        let df = (f[k] - f_star).abs();
        if d == 0.0 || d.abs() < min_gap || d.abs() > side_window || df == 0.0 {
            continue;
        }
        let pt = (d.abs().ln(), df.ln());
        if d < 0.0 {
            left.push(pt);
        } else {
            right.push(pt);
        }
    }
    if left.len() < MIN_FIT_SAMPLES || right.len() < MIN_FIT_SAMPLES {
        return Err(NovikovError::Fit(format!(
            "need {MIN_FIT_SAMPLES} samples per side, have {} left and {} right",
            left.len(),
            right.len()
        )));
    }
    let l = line_fit(&left)?;
    let r = line_fit(&right)?;
    Ok(ExponentFit { alpha: 0.5 * (l.alpha + r.alpha), r2: l.r2.min(r.r2), left: l, right: r })
}

/// Fit window for a detected point: a ξ-neighbourhood of `frac` times the
/// distance to the nearest other point (at most `max_xi`), mapped to x, with
/// the `gap_nodes` nearest nodes excluded. Returns `(side_window, min_gap)`.
pub fn suggest_window(
    point: &SingularPoint,
    others: &[SingularPoint],
    y: &[f64],
    grid: &Grid,
    frac: f64,
    max_xi: f64,
    gap_nodes: f64,
) -> Result<(f64, f64)> {
    let nearest = others
        .iter()
        .map(|o| (o.xi_star - point.xi_star).abs())
        .filter(|d| *d > 1e-12)
        .fold(f64::INFINITY, f64::min);
    let half = (frac * nearest).min(max_xi);
    let reach = |d: f64| -> Result<f64> {
        let l = local(y, grid, (point.xi_star - d).max(grid.xi_min()), 8, 0)?[0];
        let r = local(y, grid, (point.xi_star + d).min(grid.xi_max()), 8, 0)?[0];
        Ok((point.x_star - l).abs().min((r - point.x_star).abs()))
    };
    let window = reach(half)?;
    // x differences below this are dominated by rounding of y
    let floor = 1e4 * f64::EPSILON * (1.0 + point.x_star.abs());
    let gap = reach(gap_nodes * grid.dx())?.max(floor);
    if !(window > gap) {
        return Err(NovikovError::Fit("fit window collapses onto the gap".into()));
    }
    Ok((window, gap))
}

/// Detects and classifies every point of one state.
pub fn analyze_state(state: &TransformedState, y: &[f64], opts: &SingularOptions) -> Result<Vec<SingularPoint>> {
    find_crossings(state, y, opts)?
        .iter()
        .map(|p| classify(p, state, opts))
        .collect()
}

//! One-shot property suite: oracle equivalences, identities, round trips and
//! symmetries on a scenario.

use std::f64::consts::PI;

use novikov_core::grid::{fd_derivative, integrate, prefix_integral};
use novikov_core::metric::{distance_upper, tangent_norm, NormOptions, TangentVector};
use novikov_core::nonlocal::{assemble_sources_with, kernel_accumulator};
use novikov_core::singular::{
    analyze_state, fit_exponent, verify_cancellations, CancellationTolerances, Component, SingularOptions,
};
use novikov_core::{
    direct_transform, euler_fields, evolve, exp_convolve, exp_convolve_bruteforce, EulerDatum, EulerField, Grid,
    Quadrature, TransformedState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::NumericalAbort;
use crate::config::ScenarioConfig;

/// The scenario `validate` uses when no file is given.
pub const DEFAULT_SCENARIO: &str = r#"schema = "novikov-scenario/1"

[grid]
xi_min = -15.0
xi_max = 15.0
n = 512

[datum]
mode = "pair"
u0 = { family = "gaussian_bump", amplitude = 0.6, center = -0.5, width = 1.2 }
v0 = { family = "sech_bump", amplitude = 0.5, center = 0.7, width = 1.0 }

[time]
t_end = 0.5
dt = 0.01
record_every = 10
"#;

/// Deliberate defects for exercising the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one entry of the scan output before the oracle comparison.
    BrokenScan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value < tolerance, value, tolerance, detail: detail.into() }
    }

    fn holds(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: ok, value: if ok { 0.0 } else { 1.0 }, tolerance: 0.5, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} (value {:e}, tolerance {:e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.value,
            self.tolerance
        )
    }
}

/// A random smooth state with `W, Z ∈ (−π, π)` and `q ∈ [1/2, 3/2]`.
pub fn random_state(grid: Grid, rng: &mut ChaCha8Rng) -> TransformedState {
    let mut bump = |amp: f64| {
        let (a, c, w) = (rng.gen_range(-amp..amp), rng.gen_range(-3.0..3.0), rng.gen_range(0.6..2.0));
        move |x: f64| a * (-((x - c) / w).powi(2)).exp()
    };
    let (fu, fv, fw, fz, fq) = (bump(1.5), bump(1.5), bump(3.0), bump(3.0), bump(1.0));
    let mut s = TransformedState::zero(grid);
    s.u = grid.sample(fu);
    s.v = grid.sample(fv);
    s.w = grid.sample(|x| 2.0 * fw(x).atan());
    s.z = grid.sample(|x| 2.0 * fz(x).atan());
    s.q = grid.sample(|x| 1.0 + 0.5 * fq(x).tanh());
    s
}

fn scan_oracle(n: usize, trials: usize, rng: &mut ChaCha8Rng, fault: Option<Fault>) -> anyhow::Result<CheckResult> {
    let g = Grid::new(-12.0, 12.0, n)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let s = random_state(g, rng);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let acc = kernel_accumulator(&s, Quadrature::Corrected)?;
        let (mut e1, o1) = exp_convolve(&p, &acc, &g)?;
        if fault == Some(Fault::BrokenScan) {
            e1[n / 2] += 1e-6;
        }
        let (e2, o2) = exp_convolve_bruteforce(&p, &acc, &g)?;
        for k in 0..n {
            worst = worst.max((e1[k] - e2[k]).abs()).max((o1[k] - o2[k]).abs());
        }
    }
    Ok(CheckResult::below("scan_vs_bruteforce", worst, 1e-12, format!("{trials} random states at n = {n}")))
}

fn integral_checks(rng: &mut ChaCha8Rng) -> anyhow::Result<CheckResult> {
    let g = Grid::new(-3.0, 5.0, 257)?;
    let v: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let same = *prefix_integral(&v, &g)?.last().unwrap_or(&f64::NAN) == integrate(&v, &g)?;
    Ok(CheckResult::holds("prefix_end_equals_integral", same, "last prefix entry equals the integral bitwise"))
}

fn kernel_checks(rng: &mut ChaCha8Rng) -> anyhow::Result<CheckResult> {
    let g = Grid::new(-12.0, 12.0, 64)?;
    let s = random_state(g, rng);
    let acc = kernel_accumulator(&s, Quadrature::Corrected)?;
    let mut ok = true;
    for i in 0..g.n() {
        ok &= acc.kernel(i, i) == 1.0;
        for j in 0..g.n() {
            let e = acc.kernel(i, j);
            ok &= e > 0.0 && e <= 1.0 && e == acc.kernel(j, i);
        }
    }
    Ok(CheckResult::holds("kernel_symmetry", ok, "0 < E(i,j) = E(j,i) <= 1 and E(i,i) = 1"))
}

fn swap_checks(n: usize, rng: &mut ChaCha8Rng) -> anyhow::Result<CheckResult> {
    let s = random_state(Grid::new(-12.0, 12.0, n)?, rng);
    let a = assemble_sources_with(&s, Quadrature::Corrected)?;
    let b = assemble_sources_with(&s.swapped(), Quadrature::Corrected)?;
    let ok = a.p1 == b.s1
        && a.dx_p1 == b.dx_s1
        && a.p2 == b.s2
        && a.dx_p2 == b.dx_s2
        && a.s1 == b.p1
        && a.dx_s1 == b.dx_p1
        && a.s2 == b.p2
        && a.dx_s2 == b.dx_p2;
    Ok(CheckResult::holds("swap_symmetry", ok, "exchanging (U,W) and (V,Z) exchanges P and S bitwise"))
}

fn round_trip(datum: &EulerDatum, grid: Grid) -> anyhow::Result<CheckResult> {
    let (s, y) = direct_transform(datum, &grid)?;
    let f = euler_fields(&s, &y)?;
    let mut worst: f64 = 0.0;
    for k in 0..f.len() {
        let (u, ux) = datum.u0.eval(f.x[k]);
        let (v, vx) = datum.v0.eval(f.x[k]);
        worst = worst.max((f.u[k] - u).abs()).max((f.v[k] - v).abs());
        if f.ux_valid[k] {
            worst = worst.max((f.ux[k] - ux).abs());
        }
        if f.vx_valid[k] {
            worst = worst.max((f.vx[k] - vx).abs());
        }
    }
    Ok(CheckResult::below("round_trip", worst, 1e-9, "direct transform then Eulerian fields reproduce the datum"))
}

/// Conservation bound at full resolution, and at the coarse quick-mode grid.
const DRIFT_TOL: f64 = 1e-6;
const DRIFT_TOL_QUICK: f64 = 1e-3;

fn trajectory_checks(cfg: &ScenarioConfig, quick: bool) -> anyhow::Result<Vec<CheckResult>> {
    let grid = cfg.grid()?;
    let (s0, y0) = direct_transform(&cfg.datum.datum()?, &grid)?;
    let opts = cfg.evolution.options()?;
    let traj = evolve(&s0, &y0, cfg.time.t_end, cfg.time.dt, cfg.time.record_every, &opts)
        .map_err(|e| NumericalAbort(e.to_string()))?;
    let mut worst: f64 = 0.0;
    for (s, y) in traj.states.iter().zip(&traj.ys) {
        let pairs = [(fd_derivative(y, &grid, 1)?, s.y_xi()), (fd_derivative(&s.u, &grid, 1)?, s.u_xi()), (fd_derivative(&s.v, &grid, 1)?, s.v_xi())];
        for (fd, exact) in &pairs {
            for k in 0..grid.n() {
                worst = worst.max((fd[k] - exact[k]).abs());
            }
        }
    }
    let dx = grid.dx();
    let drift = traj.max_drift().into_iter().fold(0.0, f64::max);
    let ycons = traj.y_consistency.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        CheckResult::below(
            "derivative_identities",
            worst,
            5.0 * dx * dx,
            format!("FD of y, U, V against their closed forms over {} records", traj.times.len()),
        ),
        CheckResult::below("conservation", drift, if quick { DRIFT_TOL_QUICK } else { DRIFT_TOL }, "largest relative drift of E_u, E_v, G, H"),
        CheckResult::below("characteristic_consistency", ycons, 10.0 * dx * dx, "integrated y against its quadrature formula"),
    ])
}

fn symmetric_run(cfg: &ScenarioConfig) -> anyhow::Result<CheckResult> {
    let grid = cfg.grid()?;
    let d = EulerDatum::symmetric(cfg.datum.datum()?.u0)?;
    let (s0, y0) = direct_transform(&d, &grid)?;
    let traj = evolve(&s0, &y0, 10.0 * cfg.time.dt, cfg.time.dt, 5, &cfg.evolution.options()?)
        .map_err(|e| NumericalAbort(e.to_string()))?;
    let ok = traj.states.iter().all(|s| s.u == s.v && s.w == s.z);
    Ok(CheckResult::holds("symmetric_bitwise", ok, "u0 = v0 keeps U = V and W = Z bitwise"))
}

fn cancellation_checks() -> anyhow::Result<CheckResult> {
    let g = Grid::new(-2.0, 2.0, 401)?;
    let cases: [(fn(f64) -> f64, fn(f64) -> f64); 8] = [
        (|x| PI + 0.5 * x + 0.1 * x * x, |x| 0.7 + 0.2 * x),
        (|x| -0.4 + 0.1 * x, |x| PI - 0.7 * x),
        (|x| PI + 0.5 * x, |x| PI + 0.9 * x - 0.2 * x * x),
        (|x| PI - x * x + 0.1 * x * x * x, |x| 0.5 - 0.3 * x),
        (|x| 1.0 + 0.2 * x, |x| -PI + 0.6 * x * x),
        (|x| PI - x * x, |x| PI + 0.8 * x),
        (|x| PI + 0.8 * x, |x| PI - x * x),
        (|x| PI - x * x, |x| PI - 0.5 * x * x),
    ];
    let o = SingularOptions::default();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut failed = Vec::new();
    for (i, (w, z)) in cases.iter().enumerate() {
        let mut s = TransformedState::zero(g);
        s.w = g.sample(w);
        s.z = g.sample(z);
        s.q = g.sample(|x| 1.0 + 0.2 * (-x * x).exp());
        let y = prefix_integral(&s.y_xi(), &g)?;
        let pts = analyze_state(&s, &y, &o)?;
        let Some(p) = pts.iter().find(|p| p.xi_star.abs() < 1e-6) else {
            ok = false;
            failed.push(i + 1);
            continue;
        };
        let r = verify_cancellations(p, &s, &CancellationTolerances::default(), &o)?;
        if p.case_label != Some(i as u8 + 1) || !r.passed {
            ok = false;
            failed.push(i + 1);
        }
        for e in &r.entries {
            worst = worst.max(e.error / e.tolerance);
        }
    }
    let detail = if ok { "all eight synthetic cases".to_string() } else { format!("failing cases {failed:?}") };
    Ok(CheckResult { name: "cancellations".into(), passed: ok, value: worst, tolerance: 1.0, detail })
}

fn power_law(p: f64) -> EulerField {
    let x: Vec<f64> = (0..401).map(|k| -1.0 + 0.005 * k as f64).collect();
    let u: Vec<f64> = x.iter().map(|x| 1.0 + x.abs().powf(p)).collect();
    let n = x.len();
    EulerField {
        x,
        v: u.clone(),
        u,
        ux: vec![0.0; n],
        ux_valid: vec![true; n],
        vx: vec![0.0; n],
        vx_valid: vec![true; n],
        density: vec![1.0; n],
    }
}

fn exponent_checks() -> anyhow::Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for p in [2.0 / 3.0, 1.0] {
        let fit = fit_exponent(&power_law(p), Component::U, 0.0, 0.5, 0.01, None)?;
        worst = worst.max((fit.alpha - p).abs());
    }
    Ok(CheckResult::below("exponent_fit", worst, 0.02, "power laws |x|^(2/3) and |x|"))
}

fn metric_checks(datum: &EulerDatum, grid: Grid, rng: &mut ChaCha8Rng) -> anyhow::Result<Vec<CheckResult>> {
    let other = EulerDatum::new(datum.u0.scaled(1.1), datum.v0.scaled(0.9))?;
    let (s0, y0) = direct_transform(datum, &grid)?;
    let (s1, y1) = direct_transform(&other, &grid)?;
    let o = NormOptions::default();
    let b = novikov_core::OmegaBounds::default();
    let d00 = distance_upper(&s0, &y0, &s0, &y0, 5, &o, &b, 1e-3)?.length;
    let d01 = distance_upper(&s0, &y0, &s1, &y1, 5, &o, &b, 1e-3)?.length;
    let d10 = distance_upper(&s1, &y1, &s0, &y0, 5, &o, &b, 1e-3)?.length;
    let sym = (d01 - d10).abs() / d01.max(f64::MIN_POSITIVE);
    let n = grid.n();
    let mut f = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let t = TangentVector { r: f(), s: f(), a: f(), b: f(), q: f() };
    let n1 = tangent_norm(&s0, &y0, &t, &o)?.value;
    let n3 = tangent_norm(&s0, &y0, &t.scale(-3.0), &o)?.value;
    Ok(vec![
        CheckResult::holds("distance_zero", d00 == 0.0, "d(U, U) = 0"),
        CheckResult::below("distance_symmetry", sym, 1e-12, "relative |d(U0,U1) - d(U1,U0)|"),
        CheckResult::below("norm_homogeneity", (n3 - 3.0 * n1).abs() / n3.max(f64::MIN_POSITIVE), 1e-12, "norm(-3 R) = 3 norm(R) at eta = 0"),
    ])
}

/// Runs every check; the scenario provides the grid, datum and time span for
/// the trajectory-based ones.
pub fn run_checks(cfg: &ScenarioConfig, quick: bool, seed: u64, fault: Option<Fault>) -> anyhow::Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_oracle = if quick { 64 } else { 512 };
    let grid = cfg.grid()?;
    let datum = cfg.datum.datum()?;
    let mut out = vec![
        scan_oracle(n_oracle, 20, &mut rng, fault)?,
        integral_checks(&mut rng)?,
        kernel_checks(&mut rng)?,
        swap_checks(n_oracle.min(128), &mut rng)?,
        round_trip(&datum, grid)?,
    ];
    out.extend(trajectory_checks(cfg, quick)?);
    out.push(symmetric_run(cfg)?);
    out.push(cancellation_checks()?);
    out.push(exponent_checks()?);
    out.extend(metric_checks(&datum, grid, &mut rng)?);
    Ok(out)
}

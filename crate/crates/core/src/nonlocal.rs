//! Nonlocal source terms `P1, ∂xP1, P2, ∂xP2` and their `S` counterparts.
//!
//! Every source is an integral against the kernel `exp(−|G(ξ) − G(η)|)` with
//! `G' = q cos²(W/2) cos²(Z/2)`. The linear-time evaluation runs one forward and
//! one backward recursive scan; the quadratic oracle sums the same trapezoid
//! rule directly.

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::grid::{fd_derivative, fd_derivative_wide, Grid};
use crate::state::{HalfAngle, TransformedState};

/// How the kernel integrals are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Plain trapezoid sums.
    Trapezoid,
    /// Trapezoid sums plus the Euler–Maclaurin terms of order dx² and dx⁴ for
    /// the prefix integral `G` and for the kink of the kernel at `η = ξ`.
    #[default]
    Corrected,
}

/// Prefix integral `G` of `y_ξ` defining the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelAccumulator {
    pub g: Vec<f64>,
}

impl KernelAccumulator {
    /// `E(ξ_i, ξ_j) = exp(−|G_i − G_j|)`.
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        (-(self.g[i] - self.g[j]).abs()).exp()
    }
}

// width of the stencils used for first derivatives inside the corrections
const WIDE: usize = 9;

/// Builds `G` from the state.
pub fn kernel_accumulator(state: &TransformedState, quad: Quadrature) -> Result<KernelAccumulator> {
    let integrand = state.y_xi();
    kernel_from_integrand(&integrand, &state.grid, quad)
}

/// Builds `G` from samples of a nonnegative integrand.
pub fn kernel_from_integrand(
    integrand: &[f64],
    grid: &Grid,
    quad: Quadrature,
) -> Result<KernelAccumulator> {
    if integrand.len() != grid.n() {
        return Err(NovikovError::Contract(format!(
            "integrand has {} samples, grid has {}",
            integrand.len(),
            grid.n()
        )));
    }
    if let Some(k) = integrand.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(NovikovError::State(format!(
            "kernel integrand {} at node {k} is negative or not finite",
            integrand[k]
        )));
    }
    let h = grid.dx();
    let n = grid.n();
    let corrected = quad == Quadrature::Corrected && n >= 13;
    let (d1, d3) = if corrected {
        (
            fd_derivative_wide(integrand, grid, 1, WIDE)?,
            fd_derivative(integrand, grid, 3)?,
        )
    } else {
        (vec![0.0; n], vec![0.0; n])
    };
    let c2 = h * h / 12.0;
    let c4 = h.powi(4) / 720.0;
    let mut g = Vec::with_capacity(n);
    let mut acc = 0.0;
    g.push(acc);
    for k in 1..n {
        let mut inc = 0.5 * h * (integrand[k - 1] + integrand[k]);
        if corrected {
            inc -= c2 * (d1[k] - d1[k - 1]);
            inc += c4 * (d3[k] - d3[k - 1]);
            inc = inc.max(0.0);
        }
        acc += inc;
        g.push(acc);
    }
    Ok(KernelAccumulator { g })
}

fn check_inputs(p: &[f64], acc: &KernelAccumulator, grid: &Grid) -> Result<()> {
    if p.len() != grid.n() || acc.g.len() != grid.n() {
        return Err(NovikovError::Contract(format!(
            "length mismatch: p {}, G {}, grid {}",
            p.len(),
            acc.g.len(),
            grid.n()
        )));
    }
    if let Some(k) = p.iter().position(|v| !v.is_finite()) {
        return Err(NovikovError::Numerical { node: k, message: "non-finite integrand".into() });
    }
    Ok(())
}

/// Even and odd kernel integrals of `p` by recursive scans, O(n).
///
/// `even[k] = ∫ E(ξ_k, η) p(η) dη`, `odd[k] = (∫_{ξ_k}^∞ − ∫_{−∞}^{ξ_k}) E p dη`.
pub fn exp_convolve(p: &[f64], acc: &KernelAccumulator, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(p, acc, grid)?;
    let n = grid.n();
    let half = 0.5 * grid.dx();
    let decay: Vec<f64> = (1..n).map(|k| (-(acc.g[k] - acc.g[k - 1])).exp()).collect();

    let mut fwd = vec![0.0; n];
    for k in 1..n {
        let e = decay[k - 1];
        fwd[k] = e * fwd[k - 1] + half * (e * p[k - 1] + p[k]);
    }
    let mut bwd = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let e = decay[k];
        bwd[k] = e * bwd[k + 1] + half * (e * p[k + 1] + p[k]);
    }
    let mut even = Vec::with_capacity(n);
    let mut odd = Vec::with_capacity(n);
    for k in 0..n {
        let (e, o) = (fwd[k] + bwd[k], bwd[k] - fwd[k]);
        if !e.is_finite() || !o.is_finite() {
            return Err(NovikovError::Numerical { node: k, message: "non-finite scan value".into() });
        }
        even.push(e);
        odd.push(o);
    }
    Ok((even, odd))
}

/// Direct O(n²) evaluation of the same trapezoid sums as [`exp_convolve`].
pub fn exp_convolve_bruteforce(
    p: &[f64],
    acc: &KernelAccumulator,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(p, acc, grid)?;
    let n = grid.n();
    let mut even = vec![0.0; n];
    let mut odd = vec![0.0; n];
    let h = grid.dx();
    // trapezoid weight of node j on the segment [ξ_a, ξ_b]
    let seg_weight = |j: usize, a: usize, b: usize| {
        if a == b {
            0.0
        } else if j == a || j == b {
            0.5 * h
        } else {
            h
        }
    };
    for k in 0..n {
        let (mut right, mut left) = (0.0, 0.0);
        for j in k..n {
            right += seg_weight(j, k, n - 1) * acc.kernel(k, j) * p[j];
        }
        for j in 0..=k {
            left += seg_weight(j, 0, k) * acc.kernel(k, j) * p[j];
        }
        let (e, o) = (right + left, right - left);
        if !e.is_finite() || !o.is_finite() {
            return Err(NovikovError::Numerical { node: k, message: "non-finite sum".into() });
        }
        even[k] = e;
        odd[k] = o;
    }
    Ok((even, odd))
}

/// Derivatives of the kernel integrand `y_ξ` needed by the kink corrections.
pub struct KinkData {
    g: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

impl KinkData {
    pub fn new(integrand: &[f64], grid: &Grid) -> Result<Self> {
        Ok(Self {
            g: integrand.to_vec(),
            g1: fd_derivative_wide(integrand, grid, 1, WIDE)?,
            g2: fd_derivative(integrand, grid, 2)?,
        })
    }
}

/// Adds the Euler–Maclaurin terms for the derivative jump of the kernel at
/// `η = ξ_k` to trapezoid values from [`exp_convolve`].
pub fn kink_correct(
    p: &[f64],
    kink: &KinkData,
    grid: &Grid,
    even: &mut [f64],
    odd: &mut [f64],
) -> Result<()> {
    let h = grid.dx();
    let p1 = fd_derivative_wide(p, grid, 1, WIDE)?;
    let p2 = fd_derivative(p, grid, 2)?;
    let p3 = fd_derivative(p, grid, 3)?;
    let c2 = h * h;
    let c4 = h.powi(4) / 720.0;
    for k in 0..grid.n() {
        let (g, g1, g2) = (kink.g[k], kink.g1[k], kink.g2[k]);
        let jump1 = 2.0 * g * p[k];
        let jump3 = (2.0 * g2 + 2.0 * g * g * g) * p[k] + 6.0 * g1 * p1[k] + 6.0 * g * p2[k];
        even[k] += -c2 / 12.0 * jump1 + c4 * jump3;
        let sum1 = 2.0 * p1[k];
        let sum3 = 6.0 * g * g1 * p[k] + 6.0 * g * g * p1[k] + 2.0 * p3[k];
        odd[k] += c2 / 12.0 * sum1 - c4 * sum3;
    }
    Ok(())
}

/// The eight nonlocal source fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFields {
    pub p1: Vec<f64>,
    pub dx_p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub dx_p2: Vec<f64>,
    pub s1: Vec<f64>,
    pub dx_s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub dx_s2: Vec<f64>,
}

/// Integrand of `P1` with `a = U, b = V, wa = W, wb = Z`; with the roles
/// exchanged it is the integrand of `S1`.
#[inline]
fn first_integrand(q: f64, a: f64, b: f64, wa: HalfAngle, wb: HalfAngle) -> f64 {
    q * (a * a * b * wa.cos2 * wb.cos2 + 0.25 * a * wa.sin * wb.sin + 0.5 * b * wa.sin2 * wb.cos2)
}

/// Integrand of `P2` (`wa = W, wb = Z`) and of `S2` (exchanged).
#[inline]
fn second_integrand(q: f64, wa: HalfAngle, wb: HalfAngle) -> f64 {
    q * wa.sin2 * wb.sin
}

/// Pointwise integrands `(p1, p2, s1, s2)`.
pub fn integrands(state: &TransformedState) -> [Vec<f64>; 4] {
    let n = state.n();
    let (mut p1, mut p2, mut s1, mut s2) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (q, u, v) = (state.q[k], state.u[k], state.v[k]);
        let (w, z) = (HalfAngle::of(state.w[k]), HalfAngle::of(state.z[k]));
        p1[k] = first_integrand(q, u, v, w, z);
        s1[k] = first_integrand(q, v, u, z, w);
        p2[k] = second_integrand(q, w, z);
        s2[k] = second_integrand(q, z, w);
    }
    [p1, p2, s1, s2]
}

/// Assembles all sources with the default quadrature.
pub fn assemble_sources(state: &TransformedState) -> Result<SourceFields> {
    assemble_sources_with(state, Quadrature::default())
}

pub fn assemble_sources_with(state: &TransformedState, quad: Quadrature) -> Result<SourceFields> {
    state.check_shape()?;
    let grid = &state.grid;
    let y_xi = state.y_xi();
    let acc = kernel_from_integrand(&y_xi, grid, quad)?;
    let kink = if quad == Quadrature::Corrected && grid.n() >= 13 {
        Some(KinkData::new(&y_xi, grid)?)
    } else {
        None
    };
    let [p1, p2, s1, s2] = integrands(state);
    let scan = |p: &[f64], scale: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut even, mut odd) = exp_convolve(p, &acc, grid)?;
        if let Some(kink) = &kink {
            kink_correct(p, kink, grid, &mut even, &mut odd)?;
        }
        even.iter_mut().for_each(|v| *v *= scale);
        odd.iter_mut().for_each(|v| *v *= scale);
        Ok((even, odd))
    };
    let (r1, r2) = rayon::join(|| scan(&p1, 0.5), || scan(&p2, 0.125));
    let (r3, r4) = rayon::join(|| scan(&s1, 0.5), || scan(&s2, 0.125));
    let (p1f, dx_p1) = r1?;
    let (p2f, dx_p2) = r2?;
    let (s1f, dx_s1) = r3?;
    let (s2f, dx_s2) = r4?;
    Ok(SourceFields {
        p1: p1f,
        dx_p1,
        p2: p2f,
        dx_p2,
        s1: s1f,
        dx_s1,
        s2: s2f,
        dx_s2,
    })
}

/// Largest integrand magnitude at the two ends of the window; bounds the
/// contribution of the truncated tails up to the kernel decay length.
pub fn edge_magnitude(p: &[f64]) -> f64 {
    match (p.first(), p.last()) {
        (Some(a), Some(b)) => a.abs().max(b.abs()),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_state(grid: Grid, seed: u64) -> TransformedState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = TransformedState::zero(grid);
        for k in 0..grid.n() {
            s.u[k] = rng.gen_range(-1.0..1.0);
            s.v[k] = rng.gen_range(-1.0..1.0);
            s.w[k] = rng.gen_range(-3.0..3.0);
            s.z[k] = rng.gen_range(-3.0..3.0);
            s.q[k] = rng.gen_range(0.5..2.0);
        }
        s
    }

    #[test]
    fn trivial_accumulator() {
        let g = Grid::new(-3.0, 3.0, 61).unwrap();
        let s = TransformedState::zero(g);
        for quad in [Quadrature::Trapezoid, Quadrature::Corrected] {
            let acc = kernel_accumulator(&s, quad).unwrap();
            for k in 0..61 {
                assert!((acc.g[k] - k as f64 * g.dx()).abs() < 1e-13);
                assert_eq!(acc.kernel(k, k), 1.0);
            }
        }
        let mut s = TransformedState::zero(g);
        for k in 20..30 {
            s.w[k] = std::f64::consts::PI;
        }
        let acc = kernel_accumulator(&s, Quadrature::Trapezoid).unwrap();
        for k in 21..30 {
            assert!((acc.g[k] - acc.g[20]).abs() < 1e-15);
        }
        let mut s = TransformedState::zero(g);
        s.q[4] = -1.0;
        assert!(matches!(kernel_accumulator(&s, Quadrature::Trapezoid), Err(NovikovError::State(_))));
    }

    #[test]
    fn convolution_of_constant() {
        let g = Grid::new(-30.0, 30.0, 6001).unwrap();
        let acc = kernel_from_integrand(&vec![1.0; 6001], &g, Quadrature::Trapezoid).unwrap();
        let (even, odd) = exp_convolve(&vec![1.0; 6001], &acc, &g).unwrap();
        assert!((even[3000] - 2.0).abs() < 1e-4);
        assert!(odd[3000].abs() < 1e-12);
        let (even, odd) = exp_convolve(&vec![0.0; 6001], &acc, &g).unwrap();
        assert!(even.iter().chain(&odd).all(|&v| v == 0.0));
    }

    #[test]
    fn scan_matches_bruteforce() {
        let g = Grid::new(-5.0, 5.0, 257).unwrap();
        for seed in 0..5 {
            let s = random_state(g, seed);
            let acc = kernel_accumulator(&s, Quadrature::Trapezoid).unwrap();
            let [p1, ..] = integrands(&s);
            let (e1, o1) = exp_convolve(&p1, &acc, &g).unwrap();
            let (e2, o2) = exp_convolve_bruteforce(&p1, &acc, &g).unwrap();
            let diff = (0..g.n())
                .map(|k| (e1[k] - e2[k]).abs().max((o1[k] - o2[k]).abs()))
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "seed {seed}: {diff:e}");
        }
    }

    #[test]
    fn single_cell_profile_follows_kernel() {
        let g = Grid::new(-5.0, 5.0, 101).unwrap();
        let acc = kernel_from_integrand(&vec![1.0; 101], &g, Quadrature::Trapezoid).unwrap();
        let mut p = vec![0.0; 101];
        p[50] = 1.0;
        let (even, _) = exp_convolve(&p, &acc, &g).unwrap();
        for k in 0..101 {
            let expect = g.dx() * acc.kernel(k, 50);
            assert!((even[k] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn correction_improves_smooth_convolution() {
        // G(ξ) = ξ + 0.3 sin ξ, p = exp(−ξ²); reference by brute force on a fine grid
        let make = |n: usize| {
            let g = Grid::new(-12.0, 12.0, n).unwrap();
            let integrand = g.sample(|x| 1.0 + 0.3 * x.cos());
            let p = g.sample(|x| (-x * x).exp() * (1.0 + 0.5 * x));
            (g, integrand, p)
        };
        let (gf, intf, pf) = make(24001);
        let accf = kernel_from_integrand(&intf, &gf, Quadrature::Corrected).unwrap();
        let (mut ef, mut of) = exp_convolve(&pf, &accf, &gf).unwrap();
        kink_correct(&pf, &KinkData::new(&intf, &gf).unwrap(), &gf, &mut ef, &mut of).unwrap();
        let (g, int, p) = make(241);
        let stride = 100;
        let err = |quad: Quadrature| {
            let acc = kernel_from_integrand(&int, &g, quad).unwrap();
            let (mut e, mut o) = exp_convolve(&p, &acc, &g).unwrap();
            if quad == Quadrature::Corrected {
                kink_correct(&p, &KinkData::new(&int, &g).unwrap(), &g, &mut e, &mut o).unwrap();
            }
            (0..g.n())
                .map(|k| (e[k] - ef[k * stride]).abs().max((o[k] - of[k * stride]).abs()))
                .fold(0.0, f64::max)
        };
        let plain = err(Quadrature::Trapezoid);
        let corr = err(Quadrature::Corrected);
        assert!(plain > 1e-4, "plain {plain}");
        assert!(corr < 1e-7, "corrected {corr}");
    }

    #[test]
    fn zero_state_sources_vanish() {
        let g = Grid::new(-5.0, 5.0, 101).unwrap();
        let src = assemble_sources(&TransformedState::zero(g)).unwrap();
        for f in [&src.p1, &src.dx_p1, &src.p2, &src.dx_p2, &src.s1, &src.dx_s1, &src.s2, &src.dx_s2] {
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn swap_symmetry_is_bitwise() {
        let g = Grid::new(-5.0, 5.0, 129).unwrap();
        let s = random_state(g, 11);
        let a = assemble_sources(&s).unwrap();
        let b = assemble_sources(&s.swapped()).unwrap();
        assert_eq!(a.p1, b.s1);
        assert_eq!(a.dx_p1, b.dx_s1);
        assert_eq!(a.p2, b.s2);
        assert_eq!(a.dx_p2, b.dx_s2);
        assert_eq!(a.s1, b.p1);
        assert_eq!(a.dx_s2, b.dx_p2);
    }
}

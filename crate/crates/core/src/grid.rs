//! Uniform ξ-grid with trapezoid quadrature, cumulative integrals and
//! finite-difference derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};

/// Uniform discretization of a truncated ξ-interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    xi_min: f64,
    xi_max: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(xi_min: f64, xi_max: f64, n: usize) -> Result<Self> {
        if !xi_min.is_finite() || !xi_max.is_finite() {
            return Err(NovikovError::Config(format!(
                "grid bounds must be finite, got [{xi_min}, {xi_max}]"
            )));
        }
        if xi_min >= xi_max {
            return Err(NovikovError::Config(format!(
                "grid requires xi_min < xi_max, got [{xi_min}, {xi_max}]"
            )));
        }
        if n < 3 {
            return Err(NovikovError::Config(format!("grid needs n >= 3 nodes, got {n}")));
        }
        let dx = (xi_max - xi_min) / (n - 1) as f64;
        Ok(Self { xi_min, xi_max, n, dx })
    }

    #[inline]
    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    #[inline]
    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of node `k`, always computed as `xi_min + k·dx`.
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        self.xi_min + k as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|k| f(self.node(k))).collect()
    }

    /// Node index mirrored through the centre of the grid.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        self.n - 1 - k
    }

    /// Trapezoid weight of node `k`.
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.n {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Fractional node index of a coordinate, clamped to the grid.
    pub fn locate(&self, xi: f64) -> f64 {
        ((xi - self.xi_min) / self.dx).clamp(0.0, (self.n - 1) as f64)
    }

    fn check_len(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.n {
            return Err(NovikovError::Contract(format!(
                "expected {} samples, got {}",
                self.n,
                samples.len()
            )));
        }
        Ok(())
    }
}

/// Running trapezoid sum with Neumaier compensation.
struct TrapezoidSum {
    half: f64,
    sum: f64,
    carry: f64,
}

impl TrapezoidSum {
    fn new(grid: &Grid) -> Self {
        Self { half: 0.5 * grid.dx, sum: 0.0, carry: 0.0 }
    }

    fn add_cell(&mut self, a: f64, b: f64) {
        let x = self.half * (a + b);
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Trapezoid integral over the whole grid, summed with compensation.
///
/// Shares its summation order with [`prefix_integral`], so the last prefix entry
/// is bitwise equal to this value.
pub fn integrate(samples: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_len(samples)?;
    let mut acc = TrapezoidSum::new(grid);
    for pair in samples.windows(2) {
        acc.add_cell(pair[0], pair[1]);
    }
    Ok(acc.value())
}

/// Cumulative trapezoid integral from `xi_min` to every node; `c[0] = 0`.
pub fn prefix_integral(samples: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check_len(samples)?;
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = TrapezoidSum::new(grid);
    out.push(acc.value());
    for pair in samples.windows(2) {
        acc.add_cell(pair[0], pair[1]);
        out.push(acc.value());
    }
    Ok(out)
}

/// Finite-difference weights for the derivatives `0..=max_order` at `x0` from
/// arbitrary distinct `nodes` (Fornberg's recursion). `w[m][j]` multiplies the
/// sample at `nodes[j]` in the m-th derivative.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn stencil_width(order: usize) -> usize {
    // smallest stencil giving fourth-order central differences
    if order <= 2 {
        5
    } else {
        7
    }
}

fn check_order(order: usize, grid: &Grid) -> Result<()> {
    if !(1..=4).contains(&order) {
        return Err(NovikovError::Contract(format!(
            "finite-difference order must be in 1..=4, got {order}"
        )));
    }
    if grid.n < 2 * order + 5 {
        return Err(NovikovError::Contract(format!(
            "order {order} differences need at least {} nodes, grid has {}",
            2 * order + 5,
            grid.n
        )));
    }
    Ok(())
}

/// Start of the stencil used at node `k`.
fn stencil_start(k: usize, width: usize, n: usize) -> usize {
    let half = width / 2;
    k.saturating_sub(half).min(n - width)
}

/// Finite-difference derivative of the given order (1..=4).
///
/// Central, fourth-order stencils in the interior; near the ends the same number
/// of points is shifted inwards, which keeps at least second-order accuracy (see
/// [`fd_accuracy`]).
pub fn fd_derivative(samples: &[f64], grid: &Grid, order: usize) -> Result<Vec<f64>> {
    grid.check_len(samples)?;
    check_order(order, grid)?;
    let width = stencil_width(order);
    let n = grid.n;
    let scale = grid.dx.powi(order as i32);
    // one weight set per stencil offset, computed on unit spacing
    let offsets: Vec<f64> = (0..width).map(|j| j as f64).collect();
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(width);
    for pos in 0..width {
        let w = fornberg_weights(pos as f64, &offsets, order);
        tables.push(w[order].iter().map(|c| c / scale).collect());
    }
    let out = (0..n)
        .map(|k| {
            let start = stencil_start(k, width, n);
            let w = &tables[k - start];
            samples[start..start + width]
                .iter()
                .zip(w)
                .map(|(s, c)| s * c)
                .sum()
        })
        .collect();
    Ok(out)
}

/// Finite-difference derivative with an explicit odd stencil width, central in
/// the interior and shifted inwards near the ends. Width `2r+1` gives order-`2r`
/// accuracy for the first and second derivatives in the interior.
pub fn fd_derivative_wide(
    samples: &[f64],
    grid: &Grid,
    order: usize,
    width: usize,
) -> Result<Vec<f64>> {
    grid.check_len(samples)?;
    if order == 0 || width % 2 == 0 || width <= order || width > grid.n {
        return Err(NovikovError::Contract(format!(
            "invalid stencil: order {order}, width {width}, {} nodes",
            grid.n
        )));
    }
    let n = grid.n;
    let scale = grid.dx.powi(order as i32);
    let offsets: Vec<f64> = (0..width).map(|j| j as f64).collect();
    let tables: Vec<Vec<f64>> = (0..width)
        .map(|pos| {
            fornberg_weights(pos as f64, &offsets, order)[order]
                .iter()
                .map(|c| c / scale)
                .collect()
        })
        .collect();
    Ok((0..n)
        .map(|k| {
            let start = stencil_start(k, width, n);
            samples[start..start + width]
                .iter()
                .zip(&tables[k - start])
                .map(|(s, c)| s * c)
                .sum()
        })
        .collect())
}

/// Formal truncation order of every entry returned by [`fd_derivative`].
pub fn fd_accuracy(grid: &Grid, order: usize) -> Result<Vec<u32>> {
    check_order(order, grid)?;
    let width = stencil_width(order);
    let n = grid.n;
    Ok((0..n)
        .map(|k| {
            let start = stencil_start(k, width, n);
            if k - start == width / 2 {
                4
            } else {
                (width - order) as u32
            }
        })
        .collect())
}

/// Derivatives `0..=max_order` of the sampled function at an arbitrary point,
/// from the `width` nodes nearest to it.
pub fn local_derivatives(
    samples: &[f64],
    grid: &Grid,
    xi: f64,
    width: usize,
    max_order: usize,
) -> Result<Vec<f64>> {
    grid.check_len(samples)?;
    if width > grid.n || width <= max_order {
        return Err(NovikovError::Contract(format!(
            "stencil of {width} nodes cannot give order {max_order} on {} nodes",
            grid.n
        )));
    }
    let centre = grid.locate(xi);
    let first = (centre - 0.5 * (width as f64 - 1.0)).round().max(0.0) as usize;
    let start = first.min(grid.n - width);
    // unit-spacing coordinates keep the recursion well scaled
    let local: Vec<f64> = (0..width).map(|j| j as f64).collect();
    let x0 = (xi - grid.node(start)) / grid.dx;
    let w = fornberg_weights(x0, &local, max_order);
    Ok((0..=max_order)
        .map(|m| {
            let s: f64 = samples[start..start + width]
                .iter()
                .zip(&w[m])
                .map(|(a, b)| a * b)
                .sum();
            s / grid.dx.powi(m as i32)
        })
        .collect())
}

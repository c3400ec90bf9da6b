//! Eulerian initial data and the direct transform to `(U, V, W, Z, q)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NovikovError, Result};
use crate::grid::Grid;
use crate::state::TransformedState;

/// Closed-form profile for one component of the datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Profile {
    /// `a·exp(−((x−c)/w)²)`.
    GaussianBump { amplitude: f64, center: f64, width: f64 },
    /// `a·sech((x−c)/w)`.
    SechBump { amplitude: f64, center: f64, width: f64 },
    /// `√c·exp(−|x−x0|)`.
    Peakon { c: f64, x0: f64 },
    /// `a·exp(−((x−c)/w)²)·(1 − tanh((x−c)/s))/2`.
    SteepFront { amplitude: f64, center: f64, width: f64, steepness: f64 },
    /// `f(−x)`.
    Mirrored { of: Box<Profile> },
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(NovikovError::Config(format!("parameter {key} = {v} is not finite"))),
        None => Err(NovikovError::Config(format!("missing parameter {key}"))),
    }
}

impl Profile {
    pub fn zero() -> Self {
        Profile::GaussianBump { amplitude: 0.0, center: 0.0, width: 1.0 }
    }

    /// Builds a profile from a family name and named parameters.
    pub fn from_family(family: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match family {
            "gaussian_bump" | "sech_bump" => &["amplitude", "center", "width"],
            "peakon" => &["c", "x0"],
            "steep_front" => &["amplitude", "center", "width", "steepness"],
            other => return Err(NovikovError::Config(format!("unknown datum family {other:?}"))),
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(NovikovError::Config(format!(
                "unknown parameter {bad:?} for family {family}"
            )));
        }
        let p = match family {
            "gaussian_bump" => Profile::GaussianBump {
                amplitude: param(params, "amplitude", None)?,
                center: param(params, "center", Some(0.0))?,
                width: param(params, "width", Some(1.0))?,
            },
            "sech_bump" => Profile::SechBump {
                amplitude: param(params, "amplitude", None)?,
                center: param(params, "center", Some(0.0))?,
                width: param(params, "width", Some(1.0))?,
            },
            "peakon" => Profile::Peakon {
                c: param(params, "c", Some(1.0))?,
                x0: param(params, "x0", Some(0.0))?,
            },
            _ => Profile::SteepFront {
                amplitude: param(params, "amplitude", None)?,
                center: param(params, "center", Some(0.0))?,
                width: param(params, "width", Some(1.0))?,
                steepness: param(params, "steepness", Some(0.2))?,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fin = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Profile::GaussianBump { amplitude, center, width }
            | Profile::SechBump { amplitude, center, width } => {
                fin(&[*amplitude, *center, *width]) && *width > 0.0
            }
            Profile::Peakon { c, x0 } => fin(&[*c, *x0]) && *c >= 0.0,
            Profile::SteepFront { amplitude, center, width, steepness } => {
                fin(&[*amplitude, *center, *width, *steepness]) && *width > 0.0 && *steepness > 0.0
            }
            Profile::Mirrored { of } => return of.validate(),
        };
        if ok {
            Ok(())
        } else {
            Err(NovikovError::Config(format!("invalid profile parameters {self:?}")))
        }
    }

    pub fn mirrored(&self) -> Self {
        match self {
            Profile::Mirrored { of } => (**of).clone(),
            other => Profile::Mirrored { of: Box::new(other.clone()) },
        }
    }

    /// The profile multiplied by `factor` (a nonnegative factor for peakons).
    pub fn scaled(&self, factor: f64) -> Self {
        match self.clone() {
            Profile::GaussianBump { amplitude, center, width } => {
                Profile::GaussianBump { amplitude: amplitude * factor, center, width }
            }
            Profile::SechBump { amplitude, center, width } => {
                Profile::SechBump { amplitude: amplitude * factor, center, width }
            }
            Profile::Peakon { c, x0 } => Profile::Peakon { c: c * factor * factor, x0 },
            Profile::SteepFront { amplitude, center, width, steepness } => {
                Profile::SteepFront { amplitude: amplitude * factor, center, width, steepness }
            }
            Profile::Mirrored { of } => Profile::Mirrored { of: Box::new(of.scaled(factor)) },
        }
    }

    /// The profile translated by `d`: `x ↦ f(x − d)`.
    pub fn shifted(&self, d: f64) -> Self {
        match self.clone() {
            Profile::GaussianBump { amplitude, center, width } => {
                Profile::GaussianBump { amplitude, center: center + d, width }
            }
            Profile::SechBump { amplitude, center, width } => {
                Profile::SechBump { amplitude, center: center + d, width }
            }
            Profile::Peakon { c, x0 } => Profile::Peakon { c, x0: x0 + d },
            Profile::SteepFront { amplitude, center, width, steepness } => {
                Profile::SteepFront { amplitude, center: center + d, width, steepness }
            }
            Profile::Mirrored { of } => Profile::Mirrored { of: Box::new(of.shifted(-d)) },
        }
    }

    /// Value and derivative at `x`. At the crest of a peakon the derivative is
    /// the right-sided one.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match self {
            Profile::GaussianBump { amplitude, center, width } => {
                let s = (x - center) / width;
                let f = amplitude * (-s * s).exp();
                (f, -2.0 * s / width * f)
            }
            Profile::SechBump { amplitude, center, width } => {
                let s = (x - center) / width;
                let sech = 1.0 / s.cosh();
                let f = amplitude * sech;
                (f, -f * s.tanh() / width)
            }
            Profile::Peakon { c, x0 } => {
                let a = c.sqrt();
                let f = a * (-(x - x0).abs()).exp();
                if x >= *x0 {
                    (f, -f)
                } else {
                    (f, f)
                }
            }
            Profile::SteepFront { amplitude, center, width, steepness } => {
                let s = (x - center) / width;
                let env = amplitude * (-s * s).exp();
                let denv = -2.0 * s / width * env;
                let th = ((x - center) / steepness).tanh();
                let front = 0.5 * (1.0 - th);
                let dfront = -0.5 * (1.0 - th * th) / steepness;
                (env * front, denv * front + env * dfront)
            }
            Profile::Mirrored { of } => {
                let (f, df) = of.eval(-x);
                (f, -df)
            }
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Profile::Peakon { c, x0 } if *c > 0.0 => vec![*x0],
            Profile::Mirrored { of } => of.kinks().into_iter().map(|x| -x).collect(),
            _ => Vec::new(),
        }
    }
}

/// Pair of initial profiles `(u0, v0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerDatum {
    pub u0: Profile,
    pub v0: Profile,
}

impl EulerDatum {
    pub fn new(u0: Profile, v0: Profile) -> Result<Self> {
        u0.validate()?;
        v0.validate()?;
        Ok(Self { u0, v0 })
    }

    pub fn zero() -> Self {
        Self { u0: Profile::zero(), v0: Profile::zero() }
    }

    /// `u0 = v0 = p`.
    pub fn symmetric(p: Profile) -> Result<Self> {
        Self::new(p.clone(), p)
    }

    /// `u0 = p`, `v0(x) = p(−x)`.
    pub fn mirrored_of(p: Profile) -> Result<Self> {
        let m = p.mirrored();
        Self::new(p, m)
    }

    /// `D₀(x) = (1 + u0'²)(1 + v0'²)`.
    pub fn density(&self, x: f64) -> f64 {
        let (_, du) = self.u0.eval(x);
        let (_, dv) = self.v0.eval(x);
        (1.0 + du * du) * (1.0 + dv * dv)
    }

    fn kinks(&self) -> Vec<f64> {
        let mut k = self.u0.kinks();
        k.extend(self.v0.kinks());
        k
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut r = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, r);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * r * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (r * p1 - p0) / (r * r - 1.0);
            let step = p1 / dp;
            r -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -r;
        x[n - 1 - i] = r;
        w[i] = 2.0 / ((1.0 - r * r) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Cumulative integral `F(x) = ∫₀ˣ D₀` tabulated at breakpoints and evaluated
/// with a Gauss–Legendre rule on the partial cell.
struct CumulativeDensity<'a> {
    datum: &'a EulerDatum,
    breaks: Vec<f64>,
    values: Vec<f64>,
    gx: Vec<f64>,
    gw: Vec<f64>,
}

const GL_POINTS: usize = 8;

impl<'a> CumulativeDensity<'a> {
    fn new(datum: &'a EulerDatum, lo: f64, hi: f64, cells: usize) -> Self {
        let (gx, gw) = gauss_legendre(GL_POINTS);
        let h = (hi - lo) / cells as f64;
        let mut breaks: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
        breaks.push(0.0);
        breaks.extend(datum.kinks().into_iter().filter(|k| *k > lo && *k < hi));
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        let mut this = Self { datum, breaks, values: Vec::new(), gx, gw };
        let mut values = vec![0.0; this.breaks.len()];
        let origin = this.breaks.iter().position(|&b| b == 0.0).unwrap();
        for i in origin + 1..this.breaks.len() {
            values[i] = values[i - 1] + this.cell(this.breaks[i - 1], this.breaks[i]);
        }
        for i in (0..origin).rev() {
            values[i] = values[i + 1] - this.cell(this.breaks[i], this.breaks[i + 1]);
        }
        this.values = values;
        this
    }

    fn cell(&self, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.gx
            .iter()
            .zip(&self.gw)
            .map(|(x, w)| w * self.datum.density(mid + half * x))
            .sum::<f64>()
            * half
    }

    fn eval(&self, x: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= x).clamp(1, self.breaks.len() - 1) - 1;
        self.values[i] + self.cell(self.breaks[i], x)
    }
}

/// Newton tolerance on the residual `|F(y0) − ξ|`.
pub const TOL_NEWTON: f64 = 1e-12;
/// Iteration cap for the safeguarded Newton solve.
pub const MAX_NEWTON: usize = 60;

/// Solves `∫₀^{y0(ξ)} (1+u0'²)(1+v0'²) dx = ξ` at every node.
pub fn invert_y0(datum: &EulerDatum, grid: &Grid) -> Result<Vec<f64>> {
    let lo = grid.xi_min().min(0.0) - 1.0;
    let hi = grid.xi_max().max(0.0) + 1.0;
    let cells = 4 * (grid.n() - 1).max(64);
    let cum = CumulativeDensity::new(datum, lo, hi, cells);
    let mut out = Vec::with_capacity(grid.n());
    let mut guess: f64 = 0.0;
    let mut worst = 0.0f64;
    let mut failed = None;
    for k in 0..grid.n() {
        let xi = grid.node(k);
        // F(x) − x is monotone with F' ≥ 1, so the root lies between 0 and ξ
        let (mut a, mut b) = if xi >= 0.0 { (0.0, xi) } else { (xi, 0.0) };
        let mut x = guess.clamp(a, b);
        let mut res = f64::INFINITY;
        for _ in 0..MAX_NEWTON {
            res = cum.eval(x) - xi;
            if res.abs() < TOL_NEWTON {
                break;
            }
            if res > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let step = x - res / datum.density(x);
            x = if step > a && step < b { step } else { 0.5 * (a + b) };
        }
        if res.abs() >= TOL_NEWTON {
            res = cum.eval(x) - xi;
        }
        worst = worst.max(res.abs());
        if res.abs() >= TOL_NEWTON && failed.is_none() {
            failed = Some(k);
        }
        out.push(x);
        guess = x;
    }
    if let Some(node) = failed {
        return Err(NovikovError::Numerical {
            node,
            message: format!("y0 inversion did not converge, worst residual {worst:e}"),
        });
    }
    Ok(out)
}

/// Initial transformed state and `y0`.
pub fn direct_transform(datum: &EulerDatum, grid: &Grid) -> Result<(TransformedState, Vec<f64>)> {
    let y0 = invert_y0(datum, grid)?;
    let n = grid.n();
    let mut s = TransformedState::zero(*grid);
    for k in 0..n {
        let (u, du) = datum.u0.eval(y0[k]);
        let (v, dv) = datum.v0.eval(y0[k]);
        s.u[k] = u;
        s.v[k] = v;
        s.w[k] = 2.0 * du.atan();
        s.z[k] = 2.0 * dv.atan();
    }
    Ok((s, y0))
}

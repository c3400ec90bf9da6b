//! Scenario files: TOML with a mandatory schema line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use novikov_core::metric::{EtaSearch, NormOptions};
use novikov_core::singular::SingularOptions;
use novikov_core::{EulerDatum, EvolveOptions, Grid, NovikovError, OmegaBounds, Profile, Quadrature};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "novikov-scenario/1";

/// Raised for anything wrong with the scenario file; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn core(e: NovikovError) -> anyhow::Error {
    bad(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub xi_min: f64,
    pub xi_max: f64,
    pub n: usize,
}

/// A profile written as `{ family = "...", <param> = <value>, ... }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl ProfileSpec {
    pub fn profile(&self) -> anyhow::Result<Profile> {
        Profile::from_family(&self.family, &self.params).map_err(core)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumMode {
    /// Independent `u0` and `v0`.
    #[default]
    Pair,
    /// `v0 = u0`.
    Symmetric,
    /// `v0(x) = u0(−x)`.
    Mirrored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    #[serde(default)]
    pub mode: DatumMode,
    pub u0: Option<ProfileSpec>,
    pub v0: Option<ProfileSpec>,
}

impl DatumSpec {
    pub fn datum(&self) -> anyhow::Result<EulerDatum> {
        let u0 = match &self.u0 {
            Some(p) => p.profile()?,
            None => return Err(bad("datum needs u0")),
        };
        let d = match self.mode {
            DatumMode::Pair => {
                let v0 = self.v0.as_ref().ok_or_else(|| bad("datum mode \"pair\" needs v0"))?;
                EulerDatum::new(u0, v0.profile()?)
            }
            DatumMode::Symmetric | DatumMode::Mirrored if self.v0.is_some() => {
                return Err(bad("v0 must be omitted in symmetric and mirrored modes"));
            }
            DatumMode::Symmetric => EulerDatum::symmetric(u0),
            DatumMode::Mirrored => EulerDatum::mirrored_of(u0),
        };
        d.map_err(core)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Final time `T`; the metric experiment covers `[−T, T]`.
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureSpec {
    Trapezoid,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSpec {
    pub quadrature: QuadratureSpec,
    pub q_minus: f64,
    pub q_plus: f64,
    pub slack: f64,
    pub angle_max: f64,
    pub decay_threshold: f64,
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        let b = OmegaBounds::default();
        Self {
            quadrature: QuadratureSpec::Corrected,
            q_minus: b.q_minus,
            q_plus: b.q_plus,
            slack: b.slack,
            angle_max: b.angle_max,
            decay_threshold: b.decay_threshold,
        }
    }
}

impl EvolutionSpec {
    pub fn options(&self) -> anyhow::Result<EvolveOptions> {
        let bounds = OmegaBounds {
            q_minus: self.q_minus,
            q_plus: self.q_plus,
            slack: self.slack,
            angle_max: self.angle_max,
            decay_threshold: self.decay_threshold,
        };
        bounds.validate().map_err(core)?;
        let quadrature = match self.quadrature {
            QuadratureSpec::Trapezoid => Quadrature::Trapezoid,
            QuadratureSpec::Corrected => Quadrature::Corrected,
        };
        Ok(EvolveOptions { quadrature, bounds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub singular: bool,
    pub exponent_fits: bool,
    pub cancellations: bool,
    pub tol_pi: f64,
    pub tol_zero_rel: f64,
    pub window_nodes: usize,
    pub stencil: usize,
    /// Fit window as a fraction of the distance to the nearest other point.
    pub fit_fraction: f64,
    /// Upper bound on the fit half-window in ξ.
    pub fit_max_xi: f64,
    /// Grid cells next to the point left out of the fit.
    pub fit_gap_cells: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        let o = SingularOptions::default();
        Self {
            singular: true,
            exponent_fits: true,
            cancellations: true,
            tol_pi: o.tol_pi,
            tol_zero_rel: o.tol_zero_rel,
            window_nodes: o.window_nodes,
            stencil: o.stencil,
            fit_fraction: 0.3,
            fit_max_xi: 1.0,
            fit_gap_cells: 2.0,
        }
    }
}

impl AnalysisSpec {
    pub fn options(&self) -> anyhow::Result<SingularOptions> {
        let o = SingularOptions {
            tol_pi: self.tol_pi,
            tol_zero_rel: self.tol_zero_rel,
            window_nodes: self.window_nodes,
            stencil: self.stencil,
        };
        o.validate().map_err(core)?;
        if !(self.fit_fraction > 0.0 && self.fit_max_xi > 0.0 && self.fit_gap_cells >= 0.0) {
            return Err(bad("fit window parameters must be positive"));
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Both components multiplied by `1 + eps`.
    Amplitude,
    /// Both components translated by `eps`.
    Shift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub eps: f64,
    /// Also run with `eps/2` and report the ratio variation.
    #[serde(default)]
    pub halving: bool,
}

impl PerturbationSpec {
    pub fn apply(&self, d: &EulerDatum, eps: f64) -> anyhow::Result<EulerDatum> {
        let f = |p: &Profile| match self.kind {
            PerturbationKind::Amplitude => p.scaled(1.0 + eps),
            PerturbationKind::Shift => p.shifted(eps),
        };
        EulerDatum::new(f(&d.u0), f(&d.v0)).map_err(core)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpec {
    #[default]
    EtaZero,
    CoarseDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "MetricSpec::default_alpha")]
    pub alpha: f64,
    #[serde(default = "MetricSpec::default_m_theta")]
    pub m_theta: usize,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default = "MetricSpec::default_shift_nodes")]
    pub shift_nodes: usize,
    #[serde(default = "MetricSpec::default_iterations")]
    pub iterations: usize,
    #[serde(default = "MetricSpec::default_step")]
    pub step: f64,
    #[serde(default = "MetricSpec::default_eta_max")]
    pub eta_max: f64,
    /// Second datum; otherwise derived from `perturbation`.
    pub datum1: Option<DatumSpec>,
    pub perturbation: Option<PerturbationSpec>,
}

impl MetricSpec {
    fn default_alpha() -> f64 {
        NormOptions::default().alpha
    }
    fn default_m_theta() -> usize {
        9
    }
    fn default_shift_nodes() -> usize {
        NormOptions::default().shift_nodes
    }
    fn default_iterations() -> usize {
        NormOptions::default().iterations
    }
    fn default_step() -> f64 {
        NormOptions::default().step
    }
    fn default_eta_max() -> f64 {
        NormOptions::default().eta_max
    }

    pub fn options(&self) -> anyhow::Result<NormOptions> {
        let o = NormOptions {
            alpha: self.alpha,
            search: match self.search {
                SearchSpec::EtaZero => EtaSearch::EtaZero,
                SearchSpec::CoarseDescent => EtaSearch::CoarseDescent,
            },
            shift_nodes: self.shift_nodes,
            iterations: self.iterations,
            step: self.step,
            eta_max: self.eta_max,
        };
        o.validate().map_err(core)?;
        if self.m_theta < 3 {
            return Err(bad(format!("m_theta = {} must be at least 3", self.m_theta)));
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub grid: GridSpec,
    pub datum: DatumSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    pub metric: Option<MetricSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates everything that can be checked without running.
    pub fn check(&self) -> anyhow::Result<()> {
        if self.schema != SCHEMA {
            return Err(bad(format!("schema must be \"{SCHEMA}\", found \"{}\"", self.schema)));
        }
        self.grid()?;
        self.datum.datum()?;
        let t = &self.time;
        let ratio = t.t_end / t.dt;
        if !(t.dt > 0.0 && t.t_end >= 0.0 && t.t_end.is_finite())
            || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0)
        {
            return Err(bad(format!("dt = {} must be positive and divide t_end = {}", t.dt, t.t_end)));
        }
        if t.record_every == 0 {
            return Err(bad("record_every must be at least 1"));
        }
        self.evolution.options()?;
        self.analysis.options()?;
        if let Some(m) = &self.metric {
            m.options()?;
            if let Some(d) = &m.datum1 {
                d.datum()?;
            }
            if let Some(p) = &m.perturbation {
                if !p.eps.is_finite() {
                    return Err(bad("perturbation eps must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> anyhow::Result<Grid> {
        Grid::new(self.grid.xi_min, self.grid.xi_max, self.grid.n).map_err(core)
    }

    /// Reduced-resolution variant: an eighth of the nodes (at least 64) and a
    /// four times larger step where it still divides `t_end`.
    pub fn quick(&self) -> Self {
        let mut c = self.clone();
        c.grid.n = (self.grid.n / 8).max(64).min(self.grid.n);
        let dt = 4.0 * self.time.dt;
        let ratio = self.time.t_end / dt;
        if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
            c.time.dt = dt;
            c.time.record_every = (self.time.record_every / 4).max(1);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema = "novikov-scenario/1"
[grid]
xi_min = -10.0
xi_max = 10.0
n = 201
[datum]
mode = "pair"
u0 = { family = "gaussian_bump", amplitude = 0.5 }
v0 = { family = "sech_bump", amplitude = 0.3, center = 1.0 }
[time]
t_end = 1.0
dt = 0.01
record_every = 10
"#;

    #[test]
    fn parses_minimal_file() {
        let c = ScenarioConfig::parse(BASE).unwrap();
        assert_eq!(c.grid.n, 201);
        assert!(c.analysis.singular);
        assert!(c.metric.is_none());
        let d = c.datum.datum().unwrap();
        assert_eq!(d.u0, Profile::GaussianBump { amplitude: 0.5, center: 0.0, width: 1.0 });
    }

    #[test]
    fn rejects_bad_files() {
        for (from, to) in [
            ("novikov-scenario/1", "novikov-scenario/0"),
            ("dt = 0.01", "dt = 0.03"),
            ("amplitude = 0.5 }", "amplitude = 0.5, colour = 1.0 }"),
            ("gaussian_bump", "lorentzian"),
            ("n = 201", "n = 2"),
            ("record_every = 10", "record_every = 0"),
        ] {
            let text = BASE.replace(from, to);
            let e = ScenarioConfig::parse(&text).unwrap_err();
            assert!(e.downcast_ref::<ConfigError>().is_some(), "{from} -> {to}: {e}");
        }
        let sym = BASE.replace("mode = \"pair\"", "mode = \"symmetric\"");
        assert!(ScenarioConfig::parse(&sym).is_err());
    }

    #[test]
    fn quick_reduces_resolution() {
        let c = ScenarioConfig::parse(BASE).unwrap().quick();
        assert_eq!(c.grid.n, 64);
        assert!((c.time.dt - 0.04).abs() < 1e-15);
        assert!(c.check().is_ok());
    }
}

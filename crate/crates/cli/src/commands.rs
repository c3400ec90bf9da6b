//! The `evolve`, `singular` and `metric` scenario runners.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use novikov_core::metric::{lipschitz_experiment, LipschitzSetup, LipschitzTable};
use novikov_core::singular::{
    analyze_state, expected_exponents, fit_exponent, suggest_window, verify_cancellations, CancellationReport,
    CancellationTolerances, Component, ExponentFit, SingularPoint,
};
use novikov_core::{direct_transform, euler_fields, evolve, NovikovError, Trajectory};
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::output::{self, write_json, write_jsonl};

/// A run stopped on a guard or non-finite value; maps to exit status 3.
#[derive(Debug)]
pub struct NumericalAbort(pub String);

impl std::fmt::Display for NumericalAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "numerical abort: {}", self.0)
    }
}

impl std::error::Error for NumericalAbort {}

/// A run finished but one of its checks failed; maps to exit status 4.
#[derive(Debug)]
pub struct AnalysisFailure(pub String);

impl std::fmt::Display for AnalysisFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "analysis failure: {}", self.0)
    }
}

impl std::error::Error for AnalysisFailure {}

/// Process exit status for an error: 2 configuration, 3 numerical abort,
/// 4 analysis failure, 1 anything else (I/O).
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<NumericalAbort>() {
            return 3;
        }
        if cause.is::<AnalysisFailure>() {
            return 4;
        }
        if let Some(n) = cause.downcast_ref::<NovikovError>() {
            return match n {
                NovikovError::Config(_) => 2,
                NovikovError::Guard { .. } | NovikovError::Numerical { .. } | NovikovError::Path { .. } => 3,
                NovikovError::Fit(_) | NovikovError::Query(_) | NovikovError::Masked { .. } => 4,
                NovikovError::Contract(_) | NovikovError::State(_) => 1,
            };
        }
    }
    1
}

/// Everything a subcommand needs besides the scenario itself.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ScenarioConfig,
    pub out: PathBuf,
}

impl RunContext {
    pub fn prepare_out(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn numerical(e: NovikovError) -> anyhow::Error {
    match e {
        NovikovError::Config(m) => ConfigError(m).into(),
        other => NumericalAbort(other.to_string()).into(),
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'a str,
    status: &'a str,
    message: Option<String>,
    recorded_times: usize,
    final_t: Option<f64>,
    max_drift: [f64; 4],
    max_y_consistency: f64,
    config: &'a ScenarioConfig,
}

/// Runs the configured evolution; an abort keeps the partial trajectory.
fn run_trajectory(cfg: &ScenarioConfig) -> anyhow::Result<(Trajectory, Option<NovikovError>)> {
    let grid = cfg.grid()?;
    let datum = cfg.datum.datum()?;
    let opts = cfg.evolution.options()?;
    let (s0, y0) = direct_transform(&datum, &grid).map_err(numerical)?;
    Ok(match evolve(&s0, &y0, cfg.time.t_end, cfg.time.dt, cfg.time.record_every, &opts) {
        Ok(t) => (t, None),
        Err(e) => (e.partial, Some(e.error)),
    })
}

fn summary<'a>(
    command: &'a str,
    cfg: &'a ScenarioConfig,
    traj: &Trajectory,
    abort: &Option<NovikovError>,
) -> RunSummary<'a> {
    RunSummary {
        command,
        status: if abort.is_some() { "aborted" } else { "ok" },
        message: abort.as_ref().map(|e| e.to_string()),
        recorded_times: traj.times.len(),
        final_t: traj.times.last().copied(),
        max_drift: traj.max_drift(),
        max_y_consistency: traj.y_consistency.iter().copied().fold(0.0, f64::max),
        config: cfg,
    }
}

pub fn run_evolve(ctx: &RunContext) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let (traj, abort) = run_trajectory(cfg)?;
    let dir = ctx.prepare_out()?;
    output::write_trajectory(dir, &traj)?;
    output::write_conserved(dir, &traj)?;
    let euler_dir = dir.join("euler");
    fs::create_dir_all(&euler_dir)?;
    let mut index = output::Csv::create(&euler_dir.join("index.csv"), &["index", "t", "file"])?;
    for (i, (s, y)) in traj.states.iter().zip(&traj.ys).enumerate() {
        let name = format!("euler_{i:04}.csv");
        let f = euler_fields(s, y).map_err(numerical)?;
        output::write_euler(&euler_dir.join(&name), &f)?;
        index.row(&[i.to_string(), output::num(s.t), name])?;
    }
    index.finish()?;
    write_json(&dir.join("run.json"), &summary("evolve", cfg, &traj, &abort))?;
    match abort {
        Some(e) => Err(NumericalAbort(e.to_string()).into()),
        None => Ok(()),
    }
}

/// One JSON-lines record per detected point.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    #[serde(flatten)]
    pub point: SingularPoint,
    pub expected_exponents: Option<(f64, f64)>,
    pub fit_window: Option<(f64, f64)>,
    pub fit_u: Option<ExponentFit>,
    pub fit_v: Option<ExponentFit>,
    pub fit_error: Option<String>,
}

/// Detection, classification, exponent fits and cancellation checks at every
/// recorded time.
pub fn analyze_trajectory(
    cfg: &ScenarioConfig,
    traj: &Trajectory,
) -> anyhow::Result<(Vec<PointRecord>, Vec<CancellationReport>)> {
    let a = &cfg.analysis;
    let opts = a.options()?;
    let mut records = Vec::new();
    let mut reports = Vec::new();
    if !a.singular {
        return Ok((records, reports));
    }
    for (s, y) in traj.states.iter().zip(&traj.ys) {
        let points = analyze_state(s, y, &opts).map_err(|e| AnalysisFailure(e.to_string()))?;
        if points.is_empty() {
            continue;
        }
        let field = if a.exponent_fits { Some(euler_fields(s, y).map_err(numerical)?) } else { None };
        for p in &points {
            let mut rec = PointRecord {
                point: p.clone(),
                expected_exponents: p.case_label.and_then(expected_exponents),
                fit_window: None,
                fit_u: None,
                fit_v: None,
                fit_error: None,
            };
            if let Some(f) = &field {
                let fit = suggest_window(p, &points, y, &s.grid, a.fit_fraction, a.fit_max_xi, a.fit_gap_cells)
                    .and_then(|(w, gap)| {
                        rec.fit_window = Some((w, gap));
                        let fu = fit_exponent(f, Component::U, p.x_star, w, gap, Some(p.u))?;
                        let fv = fit_exponent(f, Component::V, p.x_star, w, gap, Some(p.v))?;
                        Ok((fu, fv))
                    });
                match fit {
                    Ok((fu, fv)) => {
                        rec.point.fitted_exponent_u = Some(fu.alpha);
                        rec.point.fitted_exponent_v = Some(fv.alpha);
                        rec.fit_u = Some(fu);
                        rec.fit_v = Some(fv);
                    }
                    Err(e) => rec.fit_error = Some(e.to_string()),
                }
            }
            if a.cancellations && p.case_label.is_some() {
                let r = verify_cancellations(p, s, &CancellationTolerances::default(), &opts)
                    .map_err(|e| AnalysisFailure(e.to_string()))?;
                reports.push(r);
            }
            records.push(rec);
        }
    }
    Ok((records, reports))
}

#[derive(Serialize)]
struct SingularSummary<'a> {
    #[serde(flatten)]
    run: RunSummary<'a>,
    points: usize,
    cases: BTreeMap<String, usize>,
    degenerate: usize,
    fitted: usize,
    cancellation_reports: usize,
    cancellation_failures: usize,
    incomplete_reports: usize,
}

pub fn run_singular(ctx: &RunContext) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let (traj, abort) = run_trajectory(cfg)?;
    let dir = ctx.prepare_out()?;
    output::write_conserved(dir, &traj)?;
    let (records, reports) = analyze_trajectory(cfg, &traj)?;
    write_jsonl(&dir.join("singular_points.jsonl"), &records)?;
    write_jsonl(&dir.join("cancellations.jsonl"), &reports)?;
    let mut cases = BTreeMap::new();
    for r in &records {
        let key = r.point.case_label.map_or("unclassified".to_string(), |c| c.to_string());
        *cases.entry(key).or_insert(0) += 1;
    }
    let failures: Vec<&CancellationReport> = reports.iter().filter(|r| r.complete && !r.passed).collect();
    let s = SingularSummary {
        run: summary("singular", cfg, &traj, &abort),
        points: records.len(),
        cases,
        degenerate: records.iter().filter(|r| r.point.degenerate).count(),
        fitted: records.iter().filter(|r| r.fit_u.is_some()).count(),
        cancellation_reports: reports.len(),
        cancellation_failures: failures.len(),
        incomplete_reports: reports.iter().filter(|r| !r.complete).count(),
    };
    write_json(&dir.join("run.json"), &s)?;
    if let Some(e) = abort {
        return Err(NumericalAbort(e.to_string()).into());
    }
    if let Some(f) = failures.first() {
        return Err(AnalysisFailure(format!(
            "{} cancellation report(s) failed, first at t = {}, xi = {} (case {})",
            failures.len(),
            f.t,
            f.xi_star,
            f.case_label
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricSummary<'a> {
    command: &'a str,
    status: &'a str,
    message: Option<String>,
    eps: Option<f64>,
    d0: f64,
    max_ratio: f64,
    half_eps_d0: Option<f64>,
    /// Largest `|ratio(eps) − ratio(eps/2)| / ratio(eps/2)` over common times.
    halving_variation: Option<f64>,
    config: &'a ScenarioConfig,
}

fn max_ratio(t: &LipschitzTable) -> f64 {
    t.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
}

/// Largest relative change between two ratio tables over their common rows.
pub fn ratio_variation(a: &LipschitzTable, b: &LipschitzTable) -> f64 {
    a.rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| {
            if x.ratio == y.ratio {
                0.0
            } else {
                (x.ratio - y.ratio).abs() / y.ratio.abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn run_metric(ctx: &RunContext) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let m = cfg.metric.as_ref().ok_or_else(|| ConfigError("the metric command needs a [metric] section".into()))?;
    let norm = m.options()?;
    let grid = cfg.grid()?;
    let datum0 = cfg.datum.datum()?;
    let evo = cfg.evolution.options()?;
    let setup = LipschitzSetup {
        t_max: cfg.time.t_end,
        dt: cfg.time.dt,
        record_every: cfg.time.record_every,
        m_theta: m.m_theta,
        tol_pi: cfg.analysis.tol_pi,
    };
    let (datum1, eps) = match (&m.datum1, &m.perturbation) {
        (Some(d), _) => (d.datum()?, None),
        (None, Some(p)) => (p.apply(&datum0, p.eps)?, Some(p.eps)),
        (None, None) => {
            return Err(ConfigError("metric needs datum1 or a perturbation".into()).into());
        }
    };
    let run = |d1| lipschitz_experiment(&datum0, d1, &grid, &setup, &norm, &evo).map_err(numerical);
    let table = run(&datum1)?;
    let dir = ctx.prepare_out()?;
    output::write_lipschitz(&dir.join("lipschitz.csv"), &table)?;
    let mut half = None;
    if let (None, Some(p)) = (&m.datum1, &m.perturbation) {
        if p.halving {
            let t = run(&p.apply(&datum0, 0.5 * p.eps)?)?;
            output::write_lipschitz(&dir.join("lipschitz_half.csv"), &t)?;
            half = Some(t);
        }
    }
    let aborted = table.aborted.clone().or_else(|| half.as_ref().and_then(|h| h.aborted.clone()));
    let s = MetricSummary {
        command: "metric",
        status: if aborted.is_some() { "aborted" } else { "ok" },
        message: aborted.clone(),
        eps,
        d0: table.d0,
        max_ratio: max_ratio(&table),
        half_eps_d0: half.as_ref().map(|h| h.d0),
        halving_variation: half.as_ref().map(|h| ratio_variation(&table, h)),
        config: cfg,
    };
    write_json(&dir.join("run.json"), &s)?;
    match aborted {
        Some(msg) => Err(NumericalAbort(msg).into()),
        None => Ok(()),
    }
}

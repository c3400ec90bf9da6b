//! CSV and JSON-lines writers. Floats use the shortest round-trip formatting,
//! so identical runs produce identical bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use novikov_core::evolution::Trajectory;
use novikov_core::metric::LipschitzTable;
use novikov_core::reconstruction::EulerField;
use serde::Serialize;

pub struct Csv {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl Csv {
    pub fn create(path: &Path, header: &[&str]) -> anyhow::Result<Self> {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut c = Self { out: BufWriter::new(file), path: path.to_path_buf() };
        writeln!(c.out, "{}", header.join(","))?;
        Ok(c)
    }

    pub fn row(&mut self, cells: &[String]) -> anyhow::Result<()> {
        writeln!(self.out, "{}", cells.join(",")).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush().with_context(|| format!("flushing {}", self.path.display()))
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn flag(b: bool) -> String {
    (if b { "1" } else { "0" }).to_string()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// `trajectory.csv`: every field at every recorded time, long format.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut c = Csv::create(&dir.join("trajectory.csv"), &["t", "xi", "U", "V", "W", "Z", "q", "y"])?;
    for (s, y) in traj.states.iter().zip(&traj.ys) {
        for k in 0..s.n() {
            c.row(&[
                num(s.t),
                num(s.grid.node(k)),
                num(s.u[k]),
                num(s.v[k]),
                num(s.w[k]),
                num(s.z[k]),
                num(s.q[k]),
                num(y[k]),
            ])?;
        }
    }
    c.finish()
}

/// `conserved.csv`: conserved functionals, their relative drift from the first
/// record, the characteristic consistency and the edge-decay excess.
pub fn write_conserved(dir: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut c = Csv::create(
        &dir.join("conserved.csv"),
        &[
            "t",
            "E_u",
            "E_v",
            "G",
            "H",
            "drift_E_u",
            "drift_E_v",
            "drift_G",
            "drift_H",
            "y_consistency",
            "edge_excess",
        ],
    )?;
    let Some(first) = traj.conserved_log.first() else {
        return c.finish();
    };
    for (i, cs) in traj.conserved_log.iter().enumerate() {
        let d = cs.rel_drift(first);
        let mut row = vec![num(traj.times[i])];
        row.extend(cs.as_array().iter().map(|v| num(*v)));
        row.extend(d.iter().map(|v| num(*v)));
        row.push(num(traj.y_consistency[i]));
        row.push(num(traj.edge_excess[i]));
        c.row(&row)?;
    }
    c.finish()
}

pub fn write_euler(path: &Path, f: &EulerField) -> anyhow::Result<()> {
    let mut c = Csv::create(path, &["x", "u", "v", "ux", "ux_valid", "vx", "vx_valid"])?;
    for k in 0..f.len() {
        c.row(&[
            num(f.x[k]),
            num(f.u[k]),
            num(f.v[k]),
            num(f.ux[k]),
            flag(f.ux_valid[k]),
            num(f.vx[k]),
            flag(f.vx_valid[k]),
        ])?;
    }
    c.finish()
}

pub fn write_lipschitz(path: &Path, table: &LipschitzTable) -> anyhow::Result<()> {
    let mut c = Csv::create(path, &["t", "d_t_upper", "ratio", "search_mode", "eta_iterations"])?;
    for r in &table.rows {
        c.row(&[num(r.t), num(r.d_upper), num(r.ratio), r.search_mode.clone(), r.eta_iterations.to_string()])?;
    }
    c.finish()
}

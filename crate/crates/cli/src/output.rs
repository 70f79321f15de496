use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use osctrack::Trajectory64;
use serde::Serialize;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend((1..=n).map(|i| format!("gamma_{i}")));
    cols.extend((1..=m).map(|i| format!("u_{i}")));
    cols.push("dist".into());
    cols
}

pub fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

pub fn write_trajectory(
    path: &Path,
    traj: &Trajectory64,
    n: usize,
    m: usize,
) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(trajectory_header(n, m))?;
    let mut row = Vec::with_capacity(2 * n + m + 2);
    for k in 0..traj.len() {
        row.clear();
        row.push(num(traj.times[k]));
        row.extend(traj.states[k].iter().map(|&v| num(v)));
        row.extend(traj.reference[k].iter().map(|&v| num(v)));
        row.extend(traj.controls[k].iter().map(|&v| num(v)));
        row.push(num(traj.dist[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn output_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}

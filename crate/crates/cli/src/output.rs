//! CSV tables, text reports and binary snapshots.
//!
//! Every CSV header carries units: `_s` seconds, `_m` metres, `_m3` cubic
//! metres, `_mmolP` amounts and `_mmolP_per_m3` concentrations; `_rel` marks
//! dimensionless relative quantities.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndop_core::grid::{Grid, TracerField, Zone};
use ndop_core::solver::{SolveReport, TracerState};

const SNAPSHOT_MAGIC: &[u8; 8] = b"NDOPSNAP";
const SNAPSHOT_VERSION: u32 = 1;

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_trajectory(path: &Path, y: &TracerState) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["node", "time_s", "cell", "y1_mmolP_per_m3", "y2_mmolP_per_m3"])?;
    for k in 0..=y.n_time_steps() {
        let t = y.time(k);
        for (cell, (a, b)) in y.y1(k).iter().zip(y.y2(k)).enumerate() {
            w.serialize((k, t, cell, a, b))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cell", "column", "i", "j", "layer", "top_m", "bottom_m", "volume_m3", "zone"])?;
    for (id, c) in grid.cells().iter().enumerate() {
        let col = &grid.columns()[c.column];
        let zone = match c.zone {
            Zone::Euphotic => "euphotic",
            Zone::Aphotic => "aphotic",
        };
        w.serialize((id, c.column, col.i, col.j, c.layer, c.top, c.bottom, c.volume, zone))?;
    }
    w.flush()?;
    Ok(())
}

/// Outer-iteration history: residual, mass drift and periodicity of each
/// image `A(z_k)`.
pub fn write_history(path: &Path, report: &SolveReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "fixed_point_residual_rel", "mass_drift_rel", "periodicity_rel"])?;
    for (k, (r, c)) in report.residual_history.iter().zip(&report.iterate_checks).enumerate() {
        w.serialize((k + 1, r, c.mass_drift, c.periodicity))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mass(path: &Path, grid: &Grid, y: &TracerState, total_mass: f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["node", "time_s", "mass_mmolP", "drift_rel"])?;
    for (k, m) in y.mass_series(grid).iter().enumerate() {
        w.serialize((k, y.time(k), m, (m - total_mass) / total_mass.max(1.0)))?;
    }
    w.flush()?;
    Ok(())
}

/// Scalar results as `quantity,value,unit`. Wall-clock time is left out in
/// reproducible mode.
pub fn write_report(path: &Path, report: &SolveReport, reproducible: bool) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["quantity", "value", "unit"])?;
    let last = report.residual_history.last().copied().unwrap_or(f64::NAN);
    let mut rows: Vec<(&str, String, &str)> = vec![
        ("converged", report.converged.to_string(), "bool"),
        ("outer_iterations", report.residual_history.len().to_string(), "count"),
        ("last_fixed_point_residual", format!("{:e}", last), "rel"),
        ("periodicity_y1", format!("{:e}", report.periodicity[0]), "rel"),
        ("periodicity_y2", format!("{:e}", report.periodicity[1]), "rel"),
        ("max_mass_drift", format!("{:e}", report.max_relative_mass_drift), "rel"),
        ("equation_residual", format!("{:e}", report.equation_residual), "mmolP_per_m3_per_s"),
        ("forcing_norm", format!("{:e}", report.forcing_norm), "mmolP_per_m3_per_s"),
        ("bound_violations", report.bounds.violations.len().to_string(), "count"),
        ("bound_max_ratio", format!("{:e}", report.bounds.max_ratio), "rel"),
        ("mass_identity_passed", report.mass_identity.passed.to_string(), "bool"),
        ("period_integrations", report.period_integrations.to_string(), "count"),
    ];
    if !reproducible {
        rows.push(("wall_time", format!("{:.3}", report.wall_time.as_secs_f64()), "s"));
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Volume-weighted horizontal means of the time-averaged fields in equal
/// depth bins: `(bin centre depth, mean y1, mean y2)`. Empty bins are
/// skipped.
pub fn horizontal_profiles(grid: &Grid, y: &TracerState, bins: usize) -> Vec<(f64, f64, f64)> {
    let n = y.n_time_steps();
    let nc = grid.n_cells();
    let mut m1 = vec![0.0; nc];
    let mut m2 = vec![0.0; nc];
    for k in 0..n {
        for i in 0..nc {
            m1[i] += y.y1(k)[i] / n as f64;
            m2[i] += y.y2(k)[i] / n as f64;
        }
    }
    let width = grid.h_max() / bins as f64;
    let mut acc = vec![(0.0, 0.0, 0.0); bins];
    for (i, c) in grid.cells().iter().enumerate() {
        let area = c.volume / c.thickness();
        let first = ((c.top / width) as usize).min(bins - 1);
        for (b, slot) in acc.iter_mut().enumerate().skip(first) {
            let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
            let overlap = c.bottom.min(hi) - c.top.max(lo);
            if lo >= c.bottom {
                break;
            }
            if overlap > 0.0 {
                let v = area * overlap;
                slot.0 += v;
                slot.1 += v * m1[i];
                slot.2 += v * m2[i];
            }
        }
    }
    acc.iter()
        .enumerate()
        .filter(|(_, a)| a.0 > 0.0)
        .map(|(b, a)| ((b as f64 + 0.5) * width, a.1 / a.0, a.2 / a.0))
        .collect()
}

pub fn write_profiles(path: &Path, profiles: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["depth_m", "y1_mean_mmolP_per_m3", "y2_mean_mmolP_per_m3"])?;
    for p in profiles {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Little-endian binary snapshot: magic, version, cell count, node count,
/// period, then `y1` and `y2` node by node.
pub fn write_snapshot(path: &Path, y: &TracerState) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let nodes = y.n_time_steps() + 1;
    let cells = y.y1(0).len();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(cells as u64).to_le_bytes())?;
    w.write_all(&(nodes as u64).to_le_bytes())?;
    w.write_all(&y.period().to_le_bytes())?;
    for comp in 0..2 {
        for k in 0..nodes {
            let values = if comp == 0 { y.y1(k) } else { y.y2(k) };
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`] for `grid`.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<TracerState> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        bail!("{} is not a snapshot", path.display());
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SNAPSHOT_VERSION {
        bail!("{}: unsupported snapshot version {version}", path.display());
    }
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let cells = u64::from_le_bytes(next(&mut r)?) as usize;
    let nodes = u64::from_le_bytes(next(&mut r)?) as usize;
    let period = f64::from_le_bytes(next(&mut r)?);
    if cells != grid.n_cells() {
        bail!("{}: snapshot has {cells} cells, grid has {}", path.display(), grid.n_cells());
    }
    let mut fields = [Vec::with_capacity(nodes), Vec::with_capacity(nodes)];
    for comp in fields.iter_mut() {
        for _ in 0..nodes {
            let mut values = Vec::with_capacity(cells);
            for _ in 0..cells {
                values.push(f64::from_le_bytes(next(&mut r)?));
            }
            comp.push(TracerField::new(grid, values)?);
        }
    }
    let [y1, y2] = fields;
    Ok(TracerState::from_fields(grid, period, y1, y2)?)
}

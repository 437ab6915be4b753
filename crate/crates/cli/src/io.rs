//! CSV and JSON output, plus the kernel CSV reader used by `verify`.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips f64 exactly and keeps repeated runs byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pdeobs_core::grid::SpatialGrid;
use pdeobs_core::kernel::{KernelField, TriangularKernel};
use pdeobs_core::sim::SimulationResult;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the kernel samples as `t,r,s,p` rows (ordered by time, then i, j).
/// With an oracle field present, appends `p_direct,abs_diff` columns.
pub fn write_kernel_csv(
    path: &Path,
    kernel: &KernelField,
    oracle: Option<&KernelField>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if oracle.is_some() {
        writeln!(w, "t,r,s,p,p_direct,abs_diff")?;
    } else {
        writeln!(w, "t,r,s,p")?;
    }
    let grid = kernel.grid();
    let n = grid.n_cells();
    for (k, &t) in kernel.times().iter().enumerate() {
        let slice = kernel.slice(k);
        for i in 0..=n {
            for j in i..=n {
                let p = slice.get(i, j);
                match oracle {
                    None => writeln!(
                        w,
                        "{},{},{},{}",
                        fmt_f64(t),
                        fmt_f64(grid.node(i)),
                        fmt_f64(grid.node(j)),
                        fmt_f64(p)
                    )?,
                    Some(orc) => {
                        let q = orc.slice(0).get(i, j);
                        writeln!(
                            w,
                            "{},{},{},{},{},{}",
                            fmt_f64(t),
                            fmt_f64(grid.node(i)),
                            fmt_f64(grid.node(j)),
                            fmt_f64(p),
                            fmt_f64(q),
                            fmt_f64((p - q).abs())
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reads a kernel written by [`write_kernel_csv`] back into a field.
pub fn read_kernel_csv(path: &Path) -> Result<KernelField> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("open {path:?}"))?);
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if !line.starts_with("t,r,s,p") {
                bail!("unexpected kernel CSV header: {line}");
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            cols.next()
                .with_context(|| format!("line {}: missing column {name}", lineno + 1))?
                .parse::<f64>()
                .with_context(|| format!("line {}: bad float in column {name}", lineno + 1))
        };
        rows.push((next("t")?, next("r")?, next("s")?, next("p")?));
    }
    if rows.is_empty() {
        bail!("kernel CSV has no data rows");
    }

    let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut radii: Vec<f64> = rows.iter().map(|r| r.1).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let n = radii.len() - 1;
    if n < 2 {
        bail!("kernel CSV has fewer than 3 radial samples");
    }
    let grid = SpatialGrid::new(n).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    for (i, &r) in radii.iter().enumerate() {
        if (r - grid.node(i)).abs() > 1e-9 {
            bail!("kernel CSV radii are not the uniform grid i/{n} (found {r})");
        }
    }

    let node_of = |x: f64, what: &str| -> Result<usize> {
        let pos = x * n as f64;
        let i = pos.round() as usize;
        if (pos - i as f64).abs() > 1e-6 || i > n {
            bail!("{what} = {x} is not a grid node of n = {n}");
        }
        Ok(i)
    };

    let expected = (n + 1) * (n + 2) / 2;
    let mut slices = vec![TriangularKernel::zeros(n); times.len()];
    let mut counts = vec![0usize; times.len()];
    for (t, r, s, p) in rows {
        let k = times
            .iter()
            .position(|&tk| (tk - t).abs() <= 1e-12 * (1.0 + tk.abs()))
            .context("internal: time stamp vanished")?;
        let i = node_of(r, "r")?;
        let j = node_of(s, "s")?;
        if j < i {
            bail!("kernel CSV contains a sample below the diagonal (r = {r}, s = {s})");
        }
        slices[k].set(i, j, p);
        counts[k] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        if c != expected {
            bail!(
                "kernel CSV time {} has {} samples, expected {}",
                times[k],
                c,
                expected
            );
        }
    }
    KernelField::from_slices(grid, times, slices).map_err(|e| anyhow::anyhow!(e.to_string()))
}

/// `t,c_tilde_l2,w_tilde_l2,lyapunov_w` per recorded step.
pub fn write_norms_csv(path: &Path, result: &SimulationResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,c_tilde_l2,w_tilde_l2,lyapunov_w")?;
    for k in 0..result.times.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(result.times[k]),
            fmt_f64(result.error_norm[k]),
            fmt_f64(result.target_norm[k]),
            fmt_f64(result.lyapunov[k])
        )?;
    }
    Ok(())
}

/// `t,r,value,label` for every stored snapshot.
pub fn write_states_csv(path: &Path, result: &SimulationResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,r,value,label")?;
    for snap in &result.snapshots {
        let fields = [
            (&snap.plant_u, "u"),
            (&snap.estimate_u, "u_hat"),
            (&snap.error_c, "c_tilde"),
        ];
        for (state, label) in fields {
            for (i, r) in state.grid.nodes().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(state.time),
                    fmt_f64(r),
                    fmt_f64(state.values[i]),
                    label
                )?;
            }
        }
    }
    Ok(())
}

/// Gains as `t,r,p1` and `t,p10` tables.
pub fn write_gains_csv(
    p1_path: &Path,
    p10_path: &Path,
    gains: &pdeobs_core::gains::ObserverGains,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(p1_path)?);
    writeln!(w, "t,r,p1")?;
    for (k, &t) in gains.times().iter().enumerate() {
        let profile = gains.p1_profile(k);
        for (i, r) in gains.grid().nodes().enumerate() {
            writeln!(w, "{},{},{}", fmt_f64(t), fmt_f64(r), fmt_f64(profile[i]))?;
        }
    }
    let mut w = BufWriter::new(File::create(p10_path)?);
    writeln!(w, "t,p10")?;
    for (k, &t) in gains.times().iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(t), fmt_f64(gains.p10_value(k)))?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

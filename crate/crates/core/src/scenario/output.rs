//! Files written after a run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::config::ScenarioConfig;
use super::run::RunReport;
use crate::error::Result;
use crate::io::{write_scalar_dump, write_spinor_dump, TrajectoryWriter};

const AXES: [&str; 3] = ["x", "y", "z"];

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn observables_csv(report: &RunReport, dim: usize) -> String {
    let mut header = String::from("t,norm,energy,x_mean,var_x,Sx,Sy,Sz");
    for a in 1..dim {
        write!(header, ",{0}_mean,var_{0}", AXES[a]).unwrap();
    }
    let with_l = report.rows.first().is_some_and(|r| r.orbital.is_some());
    if with_l {
        header.push_str(",Lx,Ly,Lz");
    }
    let mut out = header + "\n";
    for r in &report.rows {
        let mut cols = vec![num(r.t), num(r.norm), num(r.energy), num(r.x_mean[0]), num(r.var_x[0])];
        cols.extend(r.spin.iter().map(|v| num(*v)));
        for a in 1..dim {
            cols.push(num(r.x_mean[a]));
            cols.push(num(r.var_x[a]));
        }
        if let Some(l) = r.orbital {
            cols.extend(l.iter().map(|v| num(*v)));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

fn ensemble_csv(report: &RunReport, dim: usize) -> String {
    let mut header = String::from("t,L1_distance_to_rho");
    for a in 0..dim {
        write!(header, ",mean_d{}", AXES[a]).unwrap();
    }
    for a in 0..dim {
        for b in a..dim {
            write!(header, ",cov_{}{}", AXES[a], AXES[b]).unwrap();
        }
    }
    header.push_str(",k_plus_fraction\n");
    let mut out = header;
    for r in &report.ensemble {
        let mut cols = vec![num(r.t), num(r.l1)];
        cols.extend(r.moments.mean.iter().map(|v| num(*v)));
        for a in 0..dim {
            for b in a..dim {
                cols.push(num(r.moments.cov[a][b]));
            }
        }
        cols.push(r.k_plus_fraction.map(num).unwrap_or_else(|| "nan".into()));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

fn readme(report: &RunReport, dim: usize, has_ensemble: bool) -> String {
    let mut s = format!(
        "Output of an edpauli '{}' run.\n\n\
         observables.csv  one row per output stride; columns\n\
         \x20 1 t        time\n\
         \x20 2 norm     <psi|psi>\n\
         \x20 3 energy   <psi|H|psi>\n\
         \x20 4 x_mean   <x> along the first axis\n\
         \x20 5 var_x    variance of x\n\
         \x20 6-8 Sx,Sy,Sz  spin expectation (hbar/2)<sigma>\n",
        report.scenario.name()
    );
    let mut col = 9;
    for a in 1..dim {
        writeln!(s, "  {}-{} {}_mean,var_{}", col, col + 1, AXES[a], AXES[a]).unwrap();
        col += 2;
    }
    if report.rows.first().is_some_and(|r| r.orbital.is_some()) {
        writeln!(s, "  {}-{} Lx,Ly,Lz  orbital angular momentum", col, col + 2).unwrap();
    }
    s.push_str("\ncontinuity.csv   t, L1 norm of d(rho)/dt + div(v rho) (centred over two steps)\n");
    if has_ensemble {
        s.push_str(
            "ensemble_L1.csv  t, L1 distance between walker histogram and rho, then the mean\n\
             \x20                and covariance of the last step's displacements, then the\n\
             \x20                fraction of walkers labelled k = +1 (nan when labels are off)\n",
        );
    }
    s.push_str(
        "\nsnapshot_*.bin   little-endian f64, row-major; psi holds the + block then the - block,\n\
         \x20                re/im interleaved. Each has a .json sidecar with the grid.\n\
         summary.json     checks with thresholds and verdicts, plus run metadata.\n\n\
         gnuplot: set datafile separator ','; plot 'observables.csv' using 1:5 skip 1 with lines\n",
    );
    s
}

/// Write every output file for `report` into `dir` (created if needed).
pub fn emit_outputs(report: &RunReport, config: &ScenarioConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dim = config.grid.points.len();
    fs::write(dir.join("observables.csv"), observables_csv(report, dim))?;

    let mut cont = String::from("t,continuity_L1\n");
    for (t, v) in &report.continuity {
        writeln!(cont, "{},{}", num(*t), num(*v)).unwrap();
    }
    fs::write(dir.join("continuity.csv"), cont)?;

    let has_ensemble = config.sampler.walkers > 0;
    if has_ensemble {
        fs::write(dir.join("ensemble_L1.csv"), ensemble_csv(report, dim))?;
        if config.output.trajectories && !report.trajectory.is_empty() {
            let mut w = TrajectoryWriter::create(
                &dir.join("trajectories.bin"),
                config.sampler.walkers,
                dim,
                config.params.dt,
                config.sampler.seed,
                config.sampler.stride,
            )?;
            for frame in &report.trajectory {
                w.push(frame)?;
            }
            w.finish()?;
        }
    }

    if config.output.snapshots {
        for snap in &report.snapshots {
            write_spinor_dump(&dir.join(format!("snapshot_{}_psi.bin", snap.label)), &snap.psi, snap.t)?;
            write_scalar_dump(&dir.join(format!("snapshot_{}_rho.bin", snap.label)), snap.psi.grid(), &snap.psi.density(), snap.t)?;
        }
    }

    let checks: serde_json::Map<String, serde_json::Value> = report
        .checks
        .iter()
        .map(|c| (c.name.clone(), json!({"value": c.value, "threshold": c.threshold, "passed": c.passed})))
        .collect();
    let norm = report.checks.iter().find(|c| c.name == "norm_drift");
    let summary = json!({
        "scenario": report.scenario,
        "status": report.status,
        "failure": report.failure,
        "steps_completed": report.steps_completed,
        "norm_drift": norm.map(|c| json!({"value": c.value, "threshold": c.threshold, "passed": c.passed}))
            .unwrap_or_else(|| json!({"value": report.norm_drift, "threshold": super::run::NORM_TOL, "passed": false})),
        "checks": checks,
        "max_solver_iterations": report.max_solver_iterations,
        "larmor": report.larmor,
        "stern_gerlach": report.lobes,
        "rotation": report.rotation,
        "timings_seconds": report.timings,
        "config": config,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(dir.join("README.txt"), readme(report, dim, has_ensemble))?;
    Ok(())
}

//! Flat CSV tables for external plotting, written to `<run>/plots/`.
//!
//! * `curves.csv`: `stage,epoch,lr,train_loss,val_loss,val_loss_ema,field_error,field_error_ema`
//! * `step_sweep.csv`: `stage,steps,cov_r,amr_r,cov_p,amr_p,delta`
//! * `straightness.csv`: `stage,straightness`
//! * `trajectories.csv`: `stage,mol,traj,time_index,atom,x,y,z`, only for
//!   sample sets saved with trajectories

use std::fs;
use std::path::PathBuf;

use crate::error::{io_err, Result};
use crate::run::{parse_json, read_text, EvalReport, RunDir, SampleSet, Stage};

/// Writes every table that has data and returns the written paths.
pub fn plot_export(run: &RunDir) -> Result<Vec<PathBuf>> {
    let dir = run.path("plots");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        written.push(p);
        Ok(())
    };

    let mut curves = String::new();
    let mut sweep = String::new();
    let mut straight = String::new();
    let mut trajs = String::new();
    for stage in Stage::ALL {
        let name = stage.name();
        let curve = run.path(&format!("{name}.curve.csv"));
        if curve.is_file() {
            for line in read_text(&curve)?.lines().skip(1) {
                curves.push_str(&format!("{name},{line}\n"));
            }
        }
        let ev = run.path(&format!("eval.{name}.json"));
        if ev.is_file() {
            let r: EvalReport = parse_json(&ev)?;
            for s in &r.sweep {
                let m = &s.report;
                sweep.push_str(&format!(
                    "{name},{},{},{},{},{},{}\n",
                    s.steps, m.cov_r, m.amr_r, m.cov_p, m.amr_p, m.delta
                ));
            }
            straight.push_str(&format!("{name},{}\n", r.straightness));
        }
        let sm = run.path(&format!("samples.{name}.json"));
        if sm.is_file() {
            let set: SampleSet = parse_json(&sm)?;
            for g in &set.molecules {
                for (k, states) in g.trajectories.iter().flatten().enumerate() {
                    for (ti, x) in states.iter().enumerate() {
                        for (a, r) in x.rows().iter().enumerate() {
                            trajs.push_str(&format!(
                                "{name},{},{k},{ti},{a},{},{},{}\n",
                                g.mol, r[0], r[1], r[2]
                            ));
                        }
                    }
                }
            }
        }
    }
    if !curves.is_empty() {
        emit(
            "curves.csv",
            "stage,epoch,lr,train_loss,val_loss,val_loss_ema,field_error,field_error_ema\n".to_string() + &curves,
        )?;
    }
    if !sweep.is_empty() {
        emit("step_sweep.csv", "stage,steps,cov_r,amr_r,cov_p,amr_p,delta\n".to_string() + &sweep)?;
        emit("straightness.csv", "stage,straightness\n".to_string() + &straight)?;
    }
    if !trajs.is_empty() {
        emit("trajectories.csv", "stage,mol,traj,time_index,atom,x,y,z\n".to_string() + &trajs)?;
    }
    Ok(written)
}

//! Command-line entry points.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use super::checkpoint;
use super::config::{load_config, write_config, SystemConfig};
use super::logs::{
    read_sweep, read_training_log, read_trajectory, write_trajectory, CsvSink, SweepTable, TrainingLog,
    TRAINING_LOG_HEADER, TRAJECTORY_HEADER,
};
use crate::env::SchemeMode;
use crate::error::{Result, SkyError};
use crate::evaluation::{phase_oracle_check, run_sweep, see_oracle_check, sweep_means, SweepSpec};
use crate::learner::train::{evaluate_policy, train, Policy};

#[derive(Debug, Parser)]
#[command(name = "skymirror", version, about = "UAV-mounted multifunctional RIS simulator and SAC trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Phase,
    See,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write its log, checkpoint and trajectory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<SchemeMode>,
        /// Start from the reduced desk-scale preset instead of full defaults.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Roll a checkpointed policy deterministically.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `config.toml` next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train every (M, beta_max, mode, seed) cell.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        elements: Vec<usize>,
        #[arg(long = "beta-max", value_delimiter = ',', required = true)]
        beta_max: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<SchemeMode>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Base config; defaults to the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Check closed-form phases or sampled actions against brute force.
    OracleCheck {
        #[arg(long, value_enum)]
        which: OracleKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit plot-ready CSV for one figure.
    ExportFigdata {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(3..=5))]
        figure: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

pub const TRAINING_LOG: &str = "training_log.csv";
pub const CHECKPOINT: &str = "checkpoint.skym";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const CONFIG: &str = "config.toml";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SkyError::io(dir, e))
}

fn base_config(path: Option<&Path>, desk: bool) -> Result<SystemConfig> {
    match (path, desk) {
        (Some(p), _) => load_config(Some(p)),
        (None, true) => Ok(SystemConfig::desk()),
        (None, false) => load_config(None),
    }
}

fn cmd_train(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    mode: Option<SchemeMode>,
    desk: bool,
    episodes: Option<usize>,
) -> Result<String> {
    let mut cfg = base_config(config, desk)?;
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(e) = episodes {
        cfg.training.episodes = e;
    }
    cfg.validate()?;
    ensure_dir(out)?;
    write_config(&cfg, &out.join(CONFIG))?;
    let mut log = TrainingLog::create(&out.join(TRAINING_LOG))?;
    let outcome = train(&cfg, |r| log.append(r))?;
    checkpoint::save(&outcome.bundle, &out.join(CHECKPOINT))?;
    let policy = if cfg.mode == SchemeMode::Random {
        Policy::Uniform
    } else {
        Policy::Deterministic(&outcome.bundle)
    };
    let rollouts = evaluate_policy(&cfg, &policy, 1, cfg.training.seed)?;
    write_trajectory(&out.join(TRAJECTORY), &rollouts[0].trajectory)?;
    Ok(format!(
        "trained {} episodes ({} mode, seed {}) into {}",
        outcome.log.len(),
        cfg.mode,
        cfg.training.seed,
        out.display()
    ))
}

fn cmd_eval(checkpoint_path: &Path, episodes: usize, out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<String> {
    let bundle = checkpoint::load(checkpoint_path)?;
    let sibling = checkpoint_path.with_file_name(CONFIG);
    let cfg = match config {
        Some(p) => load_config(Some(p))?,
        None if sibling.exists() => load_config(Some(&sibling))?,
        None => load_config(None)?,
    };
    let ds = crate::env::state_dim(cfg.elements(), cfg.users());
    let da = crate::env::action_dim(cfg.elements(), cfg.users());
    if (bundle.state_dim, bundle.action_dim) != (ds, da) {
        return Err(SkyError::Input(format!(
            "checkpoint expects state/action dims {}/{}, config gives {ds}/{da}",
            bundle.state_dim, bundle.action_dim
        )));
    }
    ensure_dir(out)?;
    let seed = seed.unwrap_or(cfg.training.seed);
    let rollouts = evaluate_policy(&cfg, &Policy::Deterministic(&bundle), episodes, seed)?;
    let mut log = TrainingLog::create(&out.join("eval_log.csv"))?;
    for r in &rollouts {
        log.append(&r.record)?;
    }
    if let Some(last) = rollouts.last() {
        write_trajectory(&out.join(TRAJECTORY), &last.trajectory)?;
    }
    let n = rollouts.len().max(1) as f64;
    let see = rollouts.iter().map(|r| r.record.mean_see).sum::<f64>() / n;
    Ok(format!("evaluated {} episodes, mean SEE {see:.6e} bit/J", rollouts.len()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    elements: Vec<usize>,
    beta_max: Vec<f64>,
    modes: Vec<SchemeMode>,
    seeds: Vec<u64>,
    out: &Path,
    config: Option<&Path>,
    episodes: Option<usize>,
) -> Result<String> {
    let mut base = base_config(config, config.is_none())?;
    if let Some(e) = episodes {
        base.training.episodes = e;
    }
    let spec = SweepSpec {
        elements,
        beta_max,
        modes,
        seeds,
        base,
    };
    spec.validate()?;
    ensure_dir(out)?;
    let path = out.join(SWEEP);
    let partial = Mutex::new(SweepTable::create(&path)?);
    let rows = run_sweep(&spec, |r| {
        partial
            .lock()
            .expect("sweep writer lock")
            .append(r, &r.seed.to_string())
    })?;
    drop(partial);
    // rewrite in cell order so reruns give identical files
    let mut table = SweepTable::create(&path)?;
    for r in &rows {
        table.append(r, &r.seed.to_string())?;
    }
    let mut summary = SweepTable::create(&out.join(SWEEP_SUMMARY))?;
    for r in sweep_means(&rows) {
        summary.append(&r, "mean")?;
    }
    Ok(format!("swept {} runs into {}", rows.len(), out.display()))
}

fn cmd_oracle(which: OracleKind, out: &Path, seed: u64) -> Result<(String, bool)> {
    ensure_dir(out)?;
    match which {
        OracleKind::Phase => {
            let checks = phase_oracle_check(&SystemConfig::default(), 100, seed)?;
            let mut sink = CsvSink::create(
                &out.join("oracle_phase.csv"),
                &["instance", "M", "node", "aligned", "oracle", "bound", "pass"],
            )?;
            for c in &checks {
                sink.write([
                    c.instance.to_string(),
                    c.elements.to_string(),
                    c.node.to_string(),
                    c.aligned.to_string(),
                    c.oracle.to_string(),
                    c.bound.to_string(),
                    c.passes().to_string(),
                ])?;
            }
            let failed = checks.iter().filter(|c| !c.passes()).count();
            Ok((format!("phase oracle: {failed} of {} checks failed", checks.len()), failed == 0))
        }
        OracleKind::See => {
            let mut cfg = SystemConfig::desk();
            cfg.scenario.elements = 2;
            cfg.scenario.slots = 10;
            let checks = see_oracle_check(&cfg, 4, 5, 200, None, seed)?;
            let mut sink = CsvSink::create(&out.join("oracle_see.csv"), &["state", "oracle_see", "probe_see", "pass"])?;
            for c in &checks {
                sink.write([
                    c.state.to_string(),
                    c.oracle_see.to_string(),
                    c.probe_see.to_string(),
                    c.passes().to_string(),
                ])?;
            }
            let failed = checks.iter().filter(|c| !c.passes()).count();
            Ok((format!("SEE oracle: {failed} of {} states failed", checks.len()), failed == 0))
        }
    }
}

/// Trailing moving average over `window` episodes.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            if i >= w {
                sum -= values[i - w];
            }
            sum / (i + 1).min(w) as f64
        })
        .collect()
}

fn cmd_export(log_dir: &Path, figure: u8, out: &Path) -> Result<String> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    match figure {
        3 => {
            let records = read_training_log(&log_dir.join(TRAINING_LOG))?;
            let rewards: Vec<f64> = records.iter().map(|r| r.cumulative_reward).collect();
            let smooth = moving_average(&rewards, 10);
            let mut sink = CsvSink::create(out, &[TRAINING_LOG_HEADER[0], TRAINING_LOG_HEADER[1], "smoothed_reward"])?;
            for (r, s) in records.iter().zip(smooth) {
                sink.write([r.episode.to_string(), r.cumulative_reward.to_string(), s.to_string()])?;
            }
        }
        4 => {
            let points = read_trajectory(&log_dir.join(TRAJECTORY))?;
            write_trajectory(out, &points)?;
            debug_assert_eq!(TRAJECTORY_HEADER.len(), 5);
        }
        _ => {
            let rows = read_sweep(&log_dir.join(SWEEP_SUMMARY))?;
            let mut sink = CsvSink::create(out, &["M", "beta_max", "mode", "mean_see"])?;
            for (r, _) in rows {
                sink.write([r.elements.to_string(), r.beta_max.to_string(), r.mode.to_string(), r.mean_see.to_string()])?;
            }
        }
    }
    Ok(format!("wrote figure {figure} data to {}", out.display()))
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            out,
            mode,
            desk,
            episodes,
        } => cmd_train(config.as_deref(), seed, &out, mode, desk, episodes).map(|m| (m, true)),
        Command::Eval {
            checkpoint,
            episodes,
            out,
            config,
            seed,
        } => cmd_eval(&checkpoint, episodes, &out, config.as_deref(), seed).map(|m| (m, true)),
        Command::Sweep {
            elements,
            beta_max,
            modes,
            seeds,
            out,
            config,
            episodes,
        } => cmd_sweep(elements, beta_max, modes, seeds, &out, config.as_deref(), episodes).map(|m| (m, true)),
        Command::OracleCheck { which, out, seed } => cmd_oracle(which, &out, seed),
        Command::ExportFigdata { log, figure, out } => cmd_export(&log, figure, &out).map(|m| (m, true)),
    };
    match result {
        Ok((msg, true)) => {
            println!("{msg}");
            0
        }
        Ok((msg, false)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_warms_up() {
        assert_eq!(moving_average(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn parses_lists_and_modes() {
        let cli = Cli::try_parse_from([
            "skymirror", "sweep", "--elements", "10,20", "--beta-max", "8,10", "--modes", "MF,OMA-MF", "--seeds",
            "0,1,2", "--out", "x",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep { elements, beta_max, modes, seeds, .. } => {
                assert_eq!(elements, vec![10, 20]);
                assert_eq!(beta_max, vec![8.0, 10.0]);
                assert_eq!(modes, vec![SchemeMode::Mf, SchemeMode::OmaMf]);
                assert_eq!(seeds, vec![0, 1, 2]);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(run(["skymirror", "train", "--bogus"]), 2);
        assert_eq!(run(["skymirror", "export-figdata", "--log", "d", "--figure", "7", "--out", "f"]), 2);
        assert_eq!(run(["skymirror", "train", "--out", "d", "--mode", "XYZ"]), 2);
    }
}

//! `camtrack` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::{load_config, EpisodeConfig, TrainConfig};
use super::episode_log::write_episode_log;
use super::train_log::write_training_log;
use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::eval::{compare_systems, run_episode, EpisodeReport, Stat, SwitcherKind, SystemSpec};
use crate::learn::{init_params, reward_window_means, train_from};

#[derive(Debug, Parser)]
#[command(
    name = "camtrack",
    about = "Multi-camera active object tracking simulator",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the learned pose controller and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Budget of policy-controlled camera-steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-update training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate one system over several episodes.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        controller: String,
        #[arg(long, default_value = "oracle")]
        switcher: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
        /// Directory receiving one JSONL log per episode.
        #[arg(long)]
        episode_log: Option<PathBuf>,
    },
    /// Paired comparison of several systems on identical seeds.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated `controller[/switcher]` items, e.g. `sv,geometric,geometric/noisy:0.1`.
        #[arg(long)]
        systems: String,
        #[arg(long)]
        seeds: u64,
        /// First episode seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one logged episode.
    Rollout {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "geometric")]
        controller: String,
        #[arg(long, default_value = "oracle")]
        switcher: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configs(path: Option<&Path>) -> Result<(EpisodeConfig, TrainConfig)> {
    match path {
        Some(p) => load_config(p),
        None => Ok((EpisodeConfig::default(), TrainConfig::default())),
    }
}

fn system(controller: &str, switcher: &str, checkpoint: Option<&Path>) -> Result<SystemSpec> {
    let controller: ControllerKind = controller.parse()?;
    let switcher: SwitcherKind = switcher.parse()?;
    let mut spec = SystemSpec::new(controller, switcher);
    if controller == ControllerKind::Learned {
        let path = checkpoint.ok_or_else(|| {
            Error::validation("checkpoint", "the learned controller requires --checkpoint")
        })?;
        spec = spec.with_params(Arc::new(load_checkpoint(path)?));
    }
    Ok(spec)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            steps,
            out,
            log,
        } => {
            let (episode, mut train) = configs(config.as_deref())?;
            if let Some(s) = seed {
                train.seed = s;
            }
            if let Some(k) = steps {
                train.total_steps = k;
            }
            let outcome = train_from(init_params(train.seed), &train, &episode, |u| {
                if u.update_idx % 100 == 0 {
                    eprintln!(
                        "update {:>6}  pose steps {:>8}  reward {:+.3}  entropy {:.3}",
                        u.update_idx, u.pose_steps, u.mean_reward_g0, u.entropy
                    );
                }
            })?;
            save_checkpoint(&outcome.params, &out)?;
            if let Some(path) = log {
                write_training_log(&outcome.log, path)?;
            }
            let (first, last) = reward_window_means(&outcome.log, 1000);
            println!(
                "{} updates; mean pose-step reward {first:+.4} (first 1000) -> {last:+.4} (last 1000)",
                outcome.log.len()
            );
            Ok(())
        }
        Command::Eval {
            config,
            controller,
            switcher,
            checkpoint,
            seed,
            episodes,
            episode_log,
        } => {
            let (episode, _) = configs(config.as_deref())?;
            let spec = system(&controller, &switcher, checkpoint.as_deref())?;
            if let Some(dir) = &episode_log {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut errors = Vec::new();
            let mut rates = Vec::new();
            for k in 0..episodes {
                let ep_seed = seed.wrapping_add(k);
                let records = run_episode(&episode, &spec, ep_seed, episode.episode_len)?;
                if let Some(dir) = &episode_log {
                    write_episode_log(&records, dir.join(format!("episode_{ep_seed}.jsonl")))?;
                }
                let report = EpisodeReport::from_records(&records)?;
                println!(
                    "seed {ep_seed}: mean error {:.3} deg, success rate {:.2}%",
                    report.mean_error,
                    100.0 * report.success_rate
                );
                errors.push(report.mean_error);
                rates.push(report.success_rate);
            }
            if !errors.is_empty() {
                let (e, r) = (Stat::of(&errors), Stat::of(&rates));
                println!(
                    "{}: mean error {:.3} ± {:.3} deg, success rate {:.2} ± {:.2}%",
                    spec.name(),
                    e.mean,
                    e.std,
                    100.0 * r.mean,
                    100.0 * r.std
                );
            }
            Ok(())
        }
        Command::Compare {
            config,
            systems,
            seeds,
            seed,
            checkpoint,
            out,
        } => {
            let (episode, _) = configs(config.as_deref())?;
            if seeds == 0 {
                return Err(Error::validation("seeds", "must be at least 1"));
            }
            let specs = systems
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|item| {
                    let (c, s) = item.split_once('/').unwrap_or((item, "oracle"));
                    system(c, s, checkpoint.as_deref())
                })
                .collect::<Result<Vec<_>>>()?;
            if specs.is_empty() {
                return Err(Error::validation("systems", "no systems given"));
            }
            let seed_list: Vec<u64> = (0..seeds).map(|k| seed.wrapping_add(k)).collect();
            let table = compare_systems(&episode, &specs, &seed_list, episode.episode_len)?;
            write_file(&out, &table.to_csv())?;
            print!("{}", table.to_text());
            Ok(())
        }
        Command::Rollout {
            config,
            seed,
            controller,
            switcher,
            checkpoint,
            out,
        } => {
            let (episode, _) = configs(config.as_deref())?;
            let spec = system(&controller, &switcher, checkpoint.as_deref())?;
            let records = run_episode(&episode, &spec, seed, episode.episode_len)?;
            write_episode_log(&records, &out)?;
            let report = EpisodeReport::from_records(&records)?;
            println!(
                "{} steps: mean error {:.3} deg, success rate {:.2}%",
                records.len(),
                report.mean_error,
                100.0 * report.success_rate
            );
            Ok(())
        }
    }
}

/// Runs the command line; returns the process exit code
/// (0 success, 2 usage or validation error, 1 runtime error).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taylorseg::error::{Error, Result};
use taylorseg::geometry::PointCloud;
use taylorseg::harness::config::TrainConfig;
use taylorseg::harness::episode::SplitConfig;
use taylorseg::harness::eval::{evaluate, EvalMode};
use taylorseg::harness::gradcheck::{check_full_pipeline, check_ops, GRAD_TOL};
use taylorseg::harness::io;
use taylorseg::harness::synth::{standard_classes, standard_spec, synth_dataset};
use taylorseg::harness::train::train_pn;
use taylorseg::segnet::{forward_nn, NetworkConfig};
use taylorseg::tensor::Tensor;

#[derive(Parser)]
#[command(name = "taylorseg", version, about = "Few-shot point cloud segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        /// Number of primitive classes (2..=6).
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        scenes: usize,
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Gaussian coordinate noise sigma.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the parameter-free variant on unseen-split episodes.
    RunNn {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train the parametric variant with alternating optimization.
    TrainPn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// key=value training config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines loss log destination (stdout when omitted).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint on unseen-split episodes.
    EvalPn {
        #[arg(long)]
        ckpt: PathBuf,
        /// key=value training config matching the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the push-pull module with masked average pooling.
        #[arg(long)]
        no_app: bool,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Verify gradients against central finite differences.
    Gradcheck {
        /// Also finite-difference every parameter of a toy episode.
        #[arg(long)]
        full_pipeline: bool,
    },
    /// Time one parameter-free forward pass.
    Bench {
        #[arg(long, default_value_t = 2048)]
        points: usize,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value_t = 2)]
    n_way: usize,
    #[arg(long, default_value_t = 1)]
    k_shot: usize,
    /// Query scenes per episode (defaults to n_way).
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-episode JSON lines here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn emit_lines(lines: &[String], path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, lines.join("\n") + "\n")?;
        }
        None => {
            for l in lines {
                println!("{l}");
            }
        }
    }
    Ok(())
}

fn load_train_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_kv(&io::parse_kv_file(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            classes,
            scenes,
            points,
            noise,
            seed,
            out,
        } => {
            let all = standard_classes();
            if !(2..=all.len()).contains(&classes) {
                return Err(Error::Config(format!(
                    "classes must be in 2..={}",
                    all.len()
                )));
            }
            let mut spec = standard_spec(points, noise);
            spec.classes = all[..classes].to_vec();
            let dataset = synth_dataset(&spec, scenes, seed)?;
            io::write_dataset(&out, &dataset)?;
            let split = if classes >= 3 {
                SplitConfig {
                    seen: (0..classes as u32 - 2).collect(),
                    unseen: vec![classes as u32 - 2, classes as u32 - 1],
                }
            } else {
                SplitConfig {
                    seen: vec![0],
                    unseen: vec![1],
                }
            };
            fs::write(out.join("split.txt"), split.to_kv())?;
            println!(
                "{}",
                serde_json::json!({
                    "scenes": scenes,
                    "points": points,
                    "classes": classes,
                    "out": out.display().to_string(),
                })
            );
            Ok(())
        }
        Command::RunNn { eval } => {
            let dataset = io::read_dataset(&eval.data)?;
            let split = SplitConfig::from_kv(&fs::read_to_string(&eval.split)?)?;
            let cfg = NetworkConfig::default_nn();
            let n_query = eval.queries.unwrap_or(eval.n_way);
            let report = evaluate(
                EvalMode::Nn,
                &dataset,
                &split.unseen,
                &cfg,
                None,
                eval.episodes,
                eval.n_way,
                eval.k_shot,
                n_query,
                eval.seed,
            )?;
            emit_lines(&report.lines, &eval.json)?;
            println!(
                "{}",
                serde_json::json!({
                    "mode": "nn",
                    "episodes": report.episodes.len(),
                    "mean_miou": report.mean_miou,
                    "std_miou": report.std_miou,
                })
            );
            Ok(())
        }
        Command::TrainPn {
            data,
            split,
            config,
            out,
            log,
        } => {
            let dataset = io::read_dataset(&data)?;
            let split = SplitConfig::from_kv(&fs::read_to_string(&split)?)?;
            let tcfg = load_train_config(&config)?;
            let result = train_pn(&dataset, &split, &tcfg)?;
            let hash = io::config_hash(&tcfg.to_kv());
            io::write_checkpoint(&out, &hash, &result.model.params)?;
            emit_lines(&result.log, &log)?;
            println!(
                "{}",
                serde_json::json!({
                    "iterations": tcfg.iterations,
                    "checkpoint": out.display().to_string(),
                    "final_loss": result
                        .log
                        .last()
                        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
                        .and_then(|v| v["loss"].as_f64()),
                })
            );
            Ok(())
        }
        Command::EvalPn {
            ckpt,
            config,
            no_app,
            eval,
        } => {
            let dataset = io::read_dataset(&eval.data)?;
            let split = SplitConfig::from_kv(&fs::read_to_string(&eval.split)?)?;
            let tcfg = load_train_config(&config)?;
            let (hash, params) = io::read_checkpoint(&ckpt)?;
            let expected = io::config_hash(&tcfg.to_kv());
            if hash != expected {
                return Err(Error::Data(format!(
                    "checkpoint was trained under a different config (hash {hash}, expected {expected})"
                )));
            }
            let net = tcfg.network()?;
            let mode = if no_app {
                EvalMode::PnNoApp
            } else {
                EvalMode::Pn
            };
            let n_query = eval.queries.unwrap_or(eval.n_way);
            let report = evaluate(
                mode,
                &dataset,
                &split.unseen,
                &net,
                Some(&params),
                eval.episodes,
                eval.n_way,
                eval.k_shot,
                n_query,
                eval.seed,
            )?;
            emit_lines(&report.lines, &eval.json)?;
            println!(
                "{}",
                serde_json::json!({
                    "mode": mode.as_str(),
                    "episodes": report.episodes.len(),
                    "mean_miou": report.mean_miou,
                    "std_miou": report.std_miou,
                })
            );
            Ok(())
        }
        Command::Gradcheck { full_pipeline } => {
            let mut worst: f64 = 0.0;
            let mut failed = false;
            for check in check_ops() {
                let ok = check.rel_err < GRAD_TOL;
                failed |= !ok;
                worst = worst.max(check.rel_err);
                println!(
                    "op {} rel_err {:.3e} {}",
                    check.name,
                    check.rel_err,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if full_pipeline {
                for check in check_full_pipeline()? {
                    let ok = check.rel_err < GRAD_TOL;
                    failed |= !ok;
                    worst = worst.max(check.rel_err);
                    println!(
                        "param {} rel_err {:.3e} {}",
                        check.name,
                        check.rel_err,
                        if ok { "ok" } else { "FAIL" }
                    );
                }
            }
            if failed {
                return Err(Error::Numeric(format!(
                    "gradient check failed (worst rel err {worst:.3e})"
                )));
            }
            println!("gradcheck passed (worst rel err {worst:.3e})");
            Ok(())
        }
        Command::Bench { points } => {
            let cfg = NetworkConfig::default_nn();
            if points < 2 * cfg.k_neighbors {
                return Err(Error::Config("too few points for the default config".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let cloud = PointCloud::new(
                Tensor::from_fn(&[points, 3], |_| rng.gen_range(0.0..1.0)),
                Tensor::from_fn(&[points, 3], |_| rng.gen_range(0.0..1.0)),
                None,
            )?;
            let start = Instant::now();
            let out = forward_nn(&cloud, &cfg)?;
            let seconds = start.elapsed().as_secs_f64();
            out.check_finite("bench output")?;
            println!(
                "{}",
                serde_json::json!({
                    "points": points,
                    "out_dim": out.cols(),
                    "seconds": seconds,
                })
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

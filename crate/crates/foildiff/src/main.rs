use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use foildiff::archive::ARCHIVE_FILE;
use foildiff::config::PipelineConfig;
use foildiff::pipeline::{self, CHECKPOINT_FILE, SAMPLES_DIR};
use foildiff_core::denoiser::ConditionKind;

#[derive(Parser)]
#[command(name = "foildiff", version, about = "Conditional diffusion model for airfoil profiles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set train.steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize a directory of coordinate files into a dataset archive.
    Ingest {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Train a denoiser on a dataset archive.
    Train {
        /// Defaults to `<output-dir>/dataset.json`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        condition_kind: Option<ConditionKind>,
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Draw profiles from a trained checkpoint.
    Sample {
        /// Defaults to `<output-dir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        condition_kind: Option<ConditionKind>,
        #[arg(long, allow_negative_numbers = true)]
        condition_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        condition_max: Option<f64>,
        #[arg(long)]
        guidance_scale: Option<f64>,
    },
    /// Compare generated profiles with the training archive.
    Evaluate {
        /// Defaults to `<output-dir>/samples`.
        #[arg(long)]
        generated: Option<PathBuf>,
        /// Defaults to `<output-dir>/dataset.json`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha_deg: Option<f64>,
    #[arg(long)]
    reynolds: Option<f64>,
}

impl FlowArgs {
    fn apply(&self, config: &mut PipelineConfig) {
        if let Some(a) = self.alpha_deg {
            config.flow.alpha_deg = a;
        }
        if let Some(r) = self.reynolds {
            config.flow.reynolds = r;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut config = PipelineConfig::load(g.config.as_deref(), &g.sets)?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(dir) = &g.output_dir {
        config.output_dir = dir.clone();
    }
    let out = config.output_dir.clone();

    match &cli.command {
        Command::Ingest { data_dir, flow } => {
            if let Some(d) = data_dir {
                config.data_dir = d.clone();
            }
            flow.apply(&mut config);
            config.validate()?;
            let result = pipeline::ingest(&config.data_dir, &out, &config.flow()?)?;
            let a = &result.archive;
            if g.verbose {
                for e in a.entries.iter().filter(|e| e.aero.is_none()) {
                    eprintln!("{}: aero oracle failed: {}", e.file, e.aero_error.as_deref().unwrap_or("?"));
                }
            }
            for r in &a.rejected {
                eprintln!("rejected {}: {}", r.file, r.reason);
            }
            println!(
                "accepted {}, rejected {} -> {}",
                a.entries.len(),
                a.rejected.len(),
                result.archive_path.display()
            );
        }
        Command::Train {
            dataset,
            steps,
            condition_kind,
            holdout,
        } => {
            if let Some(s) = steps {
                config.train.steps = *s;
            }
            if let Some(k) = condition_kind {
                config.conditioning.kind = *k;
            }
            if let Some(h) = holdout {
                config.train.holdout = *h;
            }
            let dataset = dataset.clone().unwrap_or_else(|| out.join(ARCHIVE_FILE));
            let every = (config.train.steps / 20).max(1);
            let verbose = g.verbose;
            let mut progress = |r: &foildiff_core::trainer::TrainRecord| {
                if verbose && (r.step.is_multiple_of(every) || r.step == 1) {
                    eprintln!(
                        "step {:>6}  loss {:.5}  window {:.5}  {:.1}s",
                        r.step, r.loss, r.window_mean, r.elapsed
                    );
                }
            };
            let result = pipeline::train(&config, &dataset, &out, &mut progress)
                .with_context(|| format!("training on {}", dataset.display()))?;
            for e in &result.excluded {
                eprintln!("excluded {}: {}", e.file, e.reason);
            }
            if let (Some(first), Some(last)) = (result.records.first(), result.records.last()) {
                println!(
                    "trained {} steps on {} profiles, windowed loss {:.5} -> {:.5}",
                    last.step,
                    result.profiles,
                    first.window_mean,
                    last.window_mean
                );
            }
            println!("checkpoint {}", result.checkpoint_path.display());
        }
        Command::Sample {
            checkpoint,
            count,
            condition_kind,
            condition_min,
            condition_max,
            guidance_scale,
        } => {
            if let Some(c) = count {
                config.sample.count = *c;
            }
            if let Some(k) = condition_kind {
                config.conditioning.kind = *k;
            }
            if condition_min.is_some() {
                config.conditioning.min = *condition_min;
            }
            if condition_max.is_some() {
                config.conditioning.max = *condition_max;
            }
            if let Some(w) = guidance_scale {
                config.guidance.scale = *w;
            }
            let checkpoint = checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
            let result = pipeline::sample(&config, &checkpoint, &out)?;
            println!(
                "wrote {} profiles and {}",
                result.rows.len(),
                result.manifest_path.display()
            );
        }
        Command::Evaluate {
            generated,
            dataset,
            flow,
            top_k,
        } => {
            flow.apply(&mut config);
            if let Some(k) = top_k {
                config.evaluate.top_k = *k;
            }
            let generated = generated.clone().unwrap_or_else(|| out.join(SAMPLES_DIR));
            let dataset = dataset.clone().unwrap_or_else(|| out.join(ARCHIVE_FILE));
            let result = pipeline::evaluate(&config, &generated, &dataset, &out)?;
            if g.verbose {
                for gen in result.report.generated.iter().filter(|r| r.error.is_some()) {
                    eprintln!("unreadable {}: {}", gen.file, gen.error.as_deref().unwrap_or("?"));
                }
            }
            print!("{}", result.report.summary_text());
            println!("report {}", result.report_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

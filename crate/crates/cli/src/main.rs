use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dttplus::eval::experiment::{experiment_data, fixed_set, int_dtt_plus_axis, encode_set};
use dttplus::eval::{bd_rate, run_experiment, ExperimentConfig, RdCurve, ResidualDataset};
use dttplus::graph_learning::{sample_covariance, solve, AxisBase, LearningProblem, LearningSolution};
use dttplus::graph_model::{BaseGraphKind, DttPlusParams};
use dttplus::integer_kernel::{kernel_to_json, IntegerTransition, QuantConfig};
use dttplus::mode_clustering::{angle_bins, cluster_weights, grouping_csv};
use dttplus::rdot::{dtt_plus_transform, QuantizerSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "dttplus", version, about = "Learned low-complexity separable transforms for residual coding")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test datasets from the configured modes.
    Synth,
    /// Learn DTT+ parameters for every mode of a dataset.
    Learn {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Build the integer transition kernel of one axis.
    QuantizeKernel {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        /// 1-based self-loop node.
        #[arg(long, default_value_t = 1)]
        index: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        p_d: u32,
        #[arg(long, default_value_t = 4)]
        p_f: u32,
    },
    /// Encode a dataset with the fixed set, optionally adding learned transforms.
    Encode {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        step: f64,
        /// Lagrangian multiplier; defaults to the configured factor times step².
        #[arg(long)]
        lambda: Option<f64>,
        /// Output of `learn`; adds each mode's DTT+ to its candidate set.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// BD-rate in percent of curve B against curve A (CSV files of rate,psnr).
    Bdrate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Run the full experiment and write rd_points.csv and summary.json.
    Report,
    /// Group learned per-mode parameters with k-means.
    ClusterModes {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct LearnedMode {
    label: String,
    solution: LearningSolution,
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    Ok(config)
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn learn(dataset: &ResidualDataset) -> anyhow::Result<Vec<LearnedMode>> {
    let n = dataset.n;
    let mut out = Vec::new();
    for (m, label) in dataset.labels.iter().enumerate() {
        let blocks: Vec<DMatrix<f64>> =
            dataset.float_blocks(m as u16).iter().map(|b| DMatrix::from_row_slice(n, n, b)).collect();
        if blocks.is_empty() {
            continue;
        }
        let axis = AxisBase::new(BaseGraphKind::PathGraph, n)?;
        let problem = LearningProblem::new(sample_covariance(&blocks)?, axis.clone(), axis)
            .with_context(|| format!("mode {label}"))?;
        let solution = solve(&problem).with_context(|| format!("learning mode {label}"))?;
        out.push(LearnedMode { label: label.clone(), solution });
    }
    Ok(out)
}

fn read_curve(path: &Path) -> anyhow::Result<RdCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pts = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("rate") {
            continue;
        }
        let mut f = line.split(',').map(str::trim);
        let (Some(r), Some(d)) = (f.next(), f.next()) else {
            bail!("{}:{}: expected rate,psnr", path.display(), k + 1);
        };
        let r: f64 = r.parse().with_context(|| format!("{}:{}", path.display(), k + 1))?;
        let d: f64 = d.parse().with_context(|| format!("{}:{}", path.display(), k + 1))?;
        pts.push((r, d));
    }
    Ok(RdCurve::new(pts)?)
}

fn read_params(path: &Path) -> anyhow::Result<Vec<LearnedMode>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| dttplus::Error::Format(format!("{}: {e}", path.display())).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Synth => {
            let config = load_config(common)?;
            config.validate()?;
            let (train, test) = experiment_data(&config)?;
            std::fs::create_dir_all(&common.out_dir)?;
            for (name, ds) in [("train.dttp", &train), ("test.dttp", &test)] {
                let p = common.out_dir.join(name);
                ds.save(&p).with_context(|| format!("writing {}", p.display()))?;
                println!("{}", p.display());
            }
        }
        Command::Learn { dataset } => {
            let ds = ResidualDataset::load(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let learned = learn(&ds)?;
            write(&common.out_dir, "params.json", &(serde_json::to_string_pretty(&learned)? + "\n"))?;
        }
        Command::QuantizeKernel { alpha, beta, index, n, p_d, p_f } => {
            let quant = QuantConfig { p_d, p_f, ..QuantConfig::default() };
            let axis = int_dtt_plus_axis(alpha, beta, index, n, &quant)?;
            let json = match &axis.transition {
                IntegerTransition::Sparse(k) => kernel_to_json(k)?,
                fallback => serde_json::to_string_pretty(fallback)?,
            };
            write(&common.out_dir, "kernel.json", &(json + "\n"))?;
            let ops = axis.transition.count_ops();
            println!(
                "base={} fallback={} mults={} adds={} shifts={} orthogonality={:.3e} closeness={:.3e} norm_dev={:.3e}",
                axis.transition.base().name(),
                axis.transition.is_fallback(),
                ops.multiplications,
                ops.additions,
                ops.shifts,
                axis.quality.orthogonality,
                axis.quality.closeness,
                axis.quality.norm_dev
            );
        }
        Command::Encode { dataset, step, lambda, params } => {
            let config = load_config(common)?;
            let ds = ResidualDataset::load(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let spec = QuantizerSpec { step, deadzone_offset: config.deadzone_offset };
            spec.validate()?;
            let lambda = lambda.unwrap_or_else(|| config.lambda(step));
            let learned = params.as_deref().map(read_params).transpose()?.unwrap_or_default();
            let fixed = fixed_set(ds.n)?;
            let mut csv = String::from("mode,step,lambda,rate,psnr\n");
            for (m, label) in ds.labels.iter().enumerate() {
                let blocks = ds.float_blocks(m as u16);
                if blocks.is_empty() {
                    continue;
                }
                let mut cands = fixed.clone();
                if let Some(l) = learned.iter().find(|l| &l.label == label) {
                    let p: DttPlusParams = l.solution.params;
                    let kind = BaseGraphKind::PathGraph;
                    cands.push(dtt_plus_transform(format!("dtt+{label}"), &p, kind, kind, ds.n)?);
                }
                let (rate, psnr, _) = encode_set(&blocks, &cands, &spec, lambda)?;
                csv.push_str(&format!("{label},{step},{lambda},{rate},{psnr}\n"));
            }
            print!("{csv}");
            write(&common.out_dir, "encode.csv", &csv)?;
        }
        Command::Bdrate { a, b } => {
            let v = bd_rate(&read_curve(&a)?, &read_curve(&b)?)?;
            println!("{v:.6}");
        }
        Command::Report => {
            let config = load_config(common)?;
            let report = run_experiment(&config)?;
            for p in report.write(&common.out_dir)? {
                println!("{}", p.display());
            }
            for (name, v) in &report.summary.average_bd_rate {
                println!("{name}: {v:.3}%");
            }
        }
        Command::ClusterModes { params, k } => {
            let config = load_config(common)?;
            let learned = read_params(&params)?;
            let ps: Vec<DttPlusParams> = learned.iter().map(|l| l.solution.params).collect();
            let labels: Vec<String> = learned.iter().map(|l| l.label.clone()).collect();
            let c = cluster_weights(&ps, k, config.seed)?;
            write(&common.out_dir, "grouping.csv", &grouping_csv(&labels, &c.assignment))?;
            write(&common.out_dir, "angle_bins.csv", &grouping_csv(&labels, &angle_bins(labels.len(), k)))?;
            write(&common.out_dir, "clusters.json", &(serde_json::to_string_pretty(&c)? + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<dttplus::Error>().is_some_and(|d| d.is_numerical()));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stn_curriculum::data::{load_dataset, save_dataset, synthesize_cluttered, ClutterConfig, RawDataset, Split};
use stn_curriculum::harness::{
    emit_plots, load_classifier, prepare, run_table, train_classifier, ExperimentConfig, Preset, Scale,
    ScaleSettings, TableContext,
};
use stn_curriculum::sstn::{
    export_transformed, load_policy, reinforce_train, save_policy, PolicyConfig, PolicyNet, ReinforceConfig,
    RewardKind, TransformedDataset,
};
use stn_curriculum::harness::seeded_rng;

#[derive(Parser)]
#[command(name = "stn-curriculum", version, about = "Curriculum learning with a sequential spatial transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset synthesis.
    #[command(subcommand)]
    Data(DataCmd),
    /// Policy training and export.
    #[command(subcommand)]
    Sstn(SstnCmd),
    /// Experiments, tables and plots.
    #[command(subcommand)]
    Exp(ExpCmd),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Build cluttered train/test sets from IDX files.
    Synth {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// IDX directory; defaults to `data/<dataset>`.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        train_limit: Option<usize>,
        #[arg(long)]
        test_limit: Option<usize>,
    },
}

#[derive(Args)]
struct PolicyArgs {
    /// Stride-2 first convolution.
    #[arg(long)]
    desk: bool,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `correct` or `prob`.
    #[arg(long, default_value = "correct")]
    reward: String,
    /// Alternate classifier updates with policy updates.
    #[arg(long)]
    finetune: bool,
}

#[derive(Subcommand)]
enum SstnCmd {
    /// Train a policy with REINFORCE against a pretrained classifier.
    Train {
        /// Directory holding the cluttered `train` set.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long = "T", default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 20_000)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Greedy sequences for every image of a split.
    Export {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "T", default_value_t = 40)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        /// Also write these prefix levels as image caches.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        verify: usize,
    },
}

#[derive(Subcommand)]
enum ExpCmd {
    /// Train a classifier as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Prepare data, reward classifier, policy and sequences for a dataset.
    Prepare {
        #[arg(long, default_value = "mnist")]
        dataset: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long = "T")]
        steps: Option<usize>,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
    },
    /// Run a preset grid.
    Table {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "mnist,fashion")]
        datasets: Vec<String>,
        /// Restrict to these rows.
        #[arg(long, value_delimiter = ',')]
        rows: Vec<String>,
    },
    /// CSV curves and PNG plots for a bundle.
    Plot {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn parse_reward(s: &str) -> Result<RewardKind> {
    Ok(match s {
        "correct" => RewardKind::Correct,
        "prob" => RewardKind::TrueClassProb,
        _ => bail!("unknown reward `{s}` (expected correct or prob)"),
    })
}

fn synth(dataset: &str, seed: u64, out: &Path, raw: Option<PathBuf>, limits: [Option<usize>; 2]) -> Result<()> {
    let raw = raw.unwrap_or_else(|| Path::new("data").join(dataset));
    let cfg = ClutterConfig::with_seed(seed);
    for (split, limit) in [Split::Train, Split::Test].into_iter().zip(limits) {
        let mut src = RawDataset::load(&raw, split).with_context(|| format!("loading {}", raw.display()))?;
        if let Some(n) = limit {
            src = src.truncate(n);
        }
        let ds = synthesize_cluttered(&src, dataset, &cfg)?;
        let stem = out.join(split.name());
        save_dataset(&ds, &stem)?;
        println!("{}: {} images", stem.display(), ds.len());
    }
    Ok(())
}

fn sstn_train(
    dataset: &Path,
    classifier: &Path,
    steps: usize,
    episodes: usize,
    out: &Path,
    args: &PolicyArgs,
) -> Result<()> {
    let train = load_dataset(&dataset.join("train"))?;
    let mut cls = load_classifier::<f32>(classifier)?;
    let pcfg = if args.desk { PolicyConfig::desk() } else { PolicyConfig::default() };
    let mut policy = PolicyNet::<f32>::new(pcfg, &mut seeded_rng(args.seed, 7))?;
    let rcfg = ReinforceConfig {
        steps,
        episodes,
        lr: args.lr,
        seed: args.seed,
        reward: parse_reward(&args.reward)?,
        finetune_classifier: args.finetune,
        ..ReinforceConfig::default()
    };
    let curve = reinforce_train(&mut policy, &mut cls, &train, &rcfg, |p| {
        println!(
            "episodes {:>7}  reward {:.3}  held-out reward {:.3}  entropy {:.3}",
            p.episodes, p.mean_reward, p.heldout_reward, p.heldout_entropy
        )
    })?;
    save_policy(&policy, out)?;
    let curve_path = out.with_extension("curve.csv");
    std::fs::write(&curve_path, curve.to_csv()).with_context(|| curve_path.display().to_string())?;
    Ok(())
}

fn sstn_export(policy: &Path, dataset: &Path, steps: usize, out: &Path, split: &str, levels: &[usize], verify: usize) -> Result<()> {
    let split: Split = split.parse()?;
    let ds = load_dataset(&dataset.join(split.name()))?;
    let policy = load_policy::<f32>(policy)?;
    let seqs = export_transformed(&policy, &ds, steps, verify)?;
    std::fs::create_dir_all(out)?;
    seqs.save(&out.join("sequences"))?;
    for &t in levels {
        save_dataset(&seqs.level_dataset(&ds, t)?, &out.join(format!("level_{t}")))?;
    }
    let back = TransformedDataset::load(&out.join("sequences"))?;
    println!("{} sequences of length {} (policy {})", back.len(), back.steps, back.policy_id);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Data(DataCmd::Synth { dataset, seed, out, raw, train_limit, test_limit }) => {
            synth(&dataset, seed, &out, raw, [train_limit, test_limit])
        }
        Command::Sstn(SstnCmd::Train { dataset, classifier, steps, episodes, out, policy }) => {
            sstn_train(&dataset, &classifier, steps, episodes, &out, &policy)
        }
        Command::Sstn(SstnCmd::Export { policy, dataset, steps, out, split, levels, verify }) => {
            sstn_export(&policy, &dataset, steps, &out, &split, &levels, verify)
        }
        Command::Exp(ExpCmd::Run { config }) => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = train_classifier(&cfg)?;
            println!("final test accuracy {:.4} ({} epochs)", report.final_test_acc, report.rows.len());
            Ok(())
        }
        Command::Exp(ExpCmd::Prepare { dataset, scale, steps, data, artifacts }) => {
            let scale: Scale = scale.parse()?;
            let ctx = TableContext::new(data, artifacts, PathBuf::new(), scale);
            let t = steps.unwrap_or(ScaleSettings::for_scale(scale).steps);
            let art = prepare(&ctx.prepare_config(&dataset, t))?;
            println!("train     {}", art.train.display());
            println!("test      {}", art.test.display());
            println!("sequences {}", art.sequences.display());
            println!(
                "reward classifier on test: original {:.4}, prefix-{t} {:.4}",
                art.report.test_acc_original, art.report.test_acc_transformed
            );
            Ok(())
        }
        Command::Exp(ExpCmd::Table { preset, scale, seeds, data, artifacts, out, datasets, rows }) => {
            let preset: Preset = preset.parse()?;
            let scale: Scale = scale.parse()?;
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{scale:?}", preset.name()).to_lowercase()));
            let mut ctx = TableContext::new(data, artifacts, out.clone(), scale);
            ctx.seeds = seeds;
            ctx.datasets = datasets;
            if !rows.is_empty() {
                ctx.rows = Some(rows);
            }
            let bundle = run_table(preset, &ctx)?;
            print!("{}", bundle.to_markdown());
            println!("bundle written to {}", out.display());
            Ok(())
        }
        Command::Exp(ExpCmd::Plot { bundle }) => {
            let files = emit_plots(&bundle)?;
            if files.is_empty() {
                println!("no runs in {}", bundle.display());
            }
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

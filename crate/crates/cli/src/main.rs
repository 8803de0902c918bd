mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sacf_core::io::{load_dataset_any, metadata_file, save_dataset_dir, split_file, write_json, LoadOptions};
use sacf_core::metrics::{annotation_agreement, parse_thresholds};
use sacf_core::pipeline::scenario_csv;
use sacf_core::{
    evaluate, make_dataset, scenario_analysis, train_expert, train_gate, Category, Dataset, EvalReport, ExpertKind,
    ExpertParams, GateParams, Mode, Prediction, SacfModel, Split,
};

use config::{RunConfig, SEED_ENV};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sacf", version, about = "Socially aware coarse-to-fine gaze target detection")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration (defaults are used for missing fields)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides SACF_SEED and the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); never changes any output
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset
    Gen {
        /// Output directory [default: paths.dataset_dir]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of frames [default: gen.n_frames]
        #[arg(long)]
        n_frames: Option<usize>,
    },
    /// Train one expert or the gate
    Train {
        #[arg(long, value_enum)]
        target: Target,
        /// Dataset directory or JSONL file [default: paths.dataset_dir]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output file [default: <paths.model_dir>/<target>.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate routing modes and write reports
    Eval {
        /// Modes to evaluate (repeatable) [default: config modes]
        #[arg(long = "mode", value_parser = parse_mode)]
        modes: Vec<Mode>,
        /// Routing threshold [default: config tau]
        #[arg(long)]
        tau: Option<f64>,
        /// Dataset directory or JSONL file [default: paths.dataset_dir]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Split to evaluate [default: eval_split]
        #[arg(long)]
        split: Option<Split>,
        /// Also write per-frame predictions-<mode>.jsonl
        #[arg(long)]
        predictions: bool,
    },
    /// Scenario table from a predictions file
    Analyze {
        /// predictions-<mode>.jsonl written by `eval --predictions`
        #[arg(long)]
        predictions: PathBuf,
        /// Dataset directory or JSONL file [default: paths.dataset_dir]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output CSV [default: <paths.report_dir>/scenarios.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-annotator agreement between two annotation files
    Agreement {
        file_a: PathBuf,
        file_b: PathBuf,
        /// "start:stop:step" or a comma-separated list
        #[arg(long, default_value = "0.1:0.9:0.1")]
        thresholds: String,
        /// Output CSV; the kappa JSON is written next to it [default: <paths.report_dir>/agreement.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Target {
    Aware,
    Agnostic,
    Gate,
}

impl Target {
    fn file_stem(self) -> &'static str {
        match self {
            Target::Aware => "aware",
            Target::Agnostic => "agnostic",
            Target::Gate => "gate",
        }
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let numerical = error
            .chain()
            .any(|c| c.downcast_ref::<sacf_core::Error>().is_some_and(sacf_core::Error::is_numerical));
        Failure {
            code: if numerical { EXIT_NUMERICAL } else { EXIT_INPUT },
            error,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    if cli.global.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    let env_seed = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(env_seed.as_deref(), cli.global.seed)?;
    match cli.command {
        Command::Gen { out, n_frames } => {
            if let Some(n) = n_frames {
                cfg.gen.n_frames = n;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.paths.dataset_dir.clone());
            cmd_gen(&cfg, &out)
        }
        Command::Train { target, dataset, out } => {
            cfg.validate()?;
            let dataset = dataset.unwrap_or_else(|| cfg.paths.dataset_dir.clone());
            let out = out.unwrap_or_else(|| model_path(&cfg, target.file_stem()));
            cmd_train(&cfg, target, &dataset, &out)
        }
        Command::Eval {
            modes,
            tau,
            dataset,
            split,
            predictions,
        } => {
            if !modes.is_empty() {
                cfg.modes = modes;
            }
            if let Some(t) = tau {
                cfg.tau = t;
            }
            if let Some(s) = split {
                cfg.eval_split = s;
            }
            cfg.validate()?;
            let dataset = dataset.unwrap_or_else(|| cfg.paths.dataset_dir.clone());
            cmd_eval(&cfg, &dataset, predictions)
        }
        Command::Analyze { predictions, dataset, out } => {
            let dataset = dataset.unwrap_or_else(|| cfg.paths.dataset_dir.clone());
            let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("scenarios.csv"));
            cmd_analyze(&predictions, &dataset, &out)
        }
        Command::Agreement {
            file_a,
            file_b,
            thresholds,
            out,
        } => {
            let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("agreement.csv"));
            cmd_agreement(&file_a, &file_b, &thresholds, &out)
        }
    }
}

fn model_path(cfg: &RunConfig, stem: &str) -> PathBuf {
    cfg.paths.model_dir.join(format!("{stem}.json"))
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_input(path: &Path) -> anyhow::Result<Dataset> {
    if !path.exists() {
        return Err(anyhow!("dataset not found: {}", path.display()));
    }
    Ok(load_dataset_any(path, &LoadOptions::default())?)
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(anyhow!("{what} not found: {}", path.display()))
    }
}

fn distribution_table(ds: &Dataset) -> String {
    let mut rows = String::new();
    let cats = [Category::Object, Category::Face, Category::PersonNonFace, Category::Noninclusive];
    writeln!(rows, "{:<16}{:>8}{:>8}{:>8}{:>8}{:>9}", "category", "train", "val", "test", "total", "share").unwrap();
    let total = ds.len().max(1) as f64;
    for c in cats {
        let n = |s: Split| ds.annotations.iter().filter(|a| a.split == s && a.target_category == c).count();
        let all = ds.metadata.categories.get(c);
        if c == Category::Noninclusive && all == 0 {
            continue;
        }
        writeln!(
            rows,
            "{:<16}{:>8}{:>8}{:>8}{:>8}{:>8.2}%",
            c.as_str(),
            n(Split::Train),
            n(Split::Val),
            n(Split::Test),
            all,
            100.0 * all as f64 / total
        )
        .unwrap();
    }
    let s = &ds.metadata.splits;
    writeln!(rows, "{:<16}{:>8}{:>8}{:>8}{:>8}{:>8.2}%", "all", s.train, s.val, s.test, ds.len(), 100.0).unwrap();
    rows
}

fn cmd_gen(cfg: &RunConfig, out: &Path) -> CmdResult {
    let t = Instant::now();
    let ds = make_dataset(&cfg.gen)?;
    save_dataset_dir(&ds, out)?;
    print!("{}", distribution_table(&ds));
    for split in Split::ALL {
        println!("wrote {}", split_file(out, split).display());
    }
    println!("wrote {}", metadata_file(out).display());
    println!("elapsed {:.2}s", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, target: Target, dataset: &Path, out: &Path) -> CmdResult {
    let ds = load_input(dataset)?;
    let train = ds.labeled_split(Split::Train);
    let t = Instant::now();
    let final_loss = match target {
        Target::Aware | Target::Agnostic => {
            let kind = if target == Target::Aware {
                ExpertKind::Aware
            } else {
                ExpertKind::Agnostic
            };
            let p = train_expert(&train, kind, &cfg.expert, &cfg.aug)?;
            ensure_parent(out)?;
            p.save(out)?;
            p.final_loss()
        }
        Target::Gate => {
            let g = train_gate(&train, &cfg.gate)?;
            ensure_parent(out)?;
            g.save(out)?;
            g.meta.loss_history.last().copied()
        }
    };
    match final_loss {
        Some(l) => println!("final loss {l:.6}"),
        None => println!("final loss n/a"),
    }
    println!("trained {} on {} frames in {:.2}s", target.file_stem(), train.len(), t.elapsed().as_secs_f64());
    println!("wrote {}", out.display());
    Ok(())
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<SacfModel> {
    let aware = model_path(cfg, "aware");
    let agnostic = model_path(cfg, "agnostic");
    require_file(&aware, "aware expert model")?;
    require_file(&agnostic, "agnostic expert model")?;
    let gate = if cfg.modes.iter().any(|m| m.needs_gate()) {
        let path = model_path(cfg, "gate");
        require_file(&path, "gate model")?;
        Some(GateParams::load(&path)?)
    } else {
        None
    };
    let aware = ExpertParams::load(&aware)?;
    let aug = aware.meta.aug.unwrap_or(cfg.aug);
    let model = SacfModel {
        aware,
        agnostic: ExpertParams::load(&agnostic)?,
        gate,
        tau: cfg.tau,
        aug,
    };
    model.validate()?;
    Ok(model)
}

fn cmd_eval(cfg: &RunConfig, dataset: &Path, dump: bool) -> CmdResult {
    let model = load_model(cfg)?;
    let ds = load_input(dataset)?;
    let split = ds.split(cfg.eval_split);
    let t = Instant::now();
    let mut reports = Vec::new();
    let dir = &cfg.paths.report_dir;
    for &mode in &cfg.modes {
        let (report, preds) = evaluate(&model, mode, &split)?;
        println!(
            "{:<12} n={} l2={:.4} face_f1={:.4} macro_f1={:.4}",
            mode.as_str(),
            report.n_frames,
            report.l2_mean,
            report.face.f1,
            report.macro_.f1
        );
        if dump {
            let path = dir.join(format!("predictions-{}.jsonl", mode.as_str()));
            let mut text = String::new();
            for p in &preds {
                text.push_str(&serde_json::to_string(p).context("serializing a prediction")?);
                text.push('\n');
            }
            write_text(&path, &text)?;
            println!("wrote {}", path.display());
        }
        reports.push(report);
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json = dir.join("report.json");
    write_json(&json, &reports)?;
    let csv = dir.join("report.csv");
    write_text(&csv, &EvalReport::to_csv(&reports))?;
    println!("wrote {}", json.display());
    println!("wrote {}", csv.display());
    println!("elapsed {:.2}s", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_analyze(predictions: &Path, dataset: &Path, out: &Path) -> CmdResult {
    require_file(predictions, "predictions file")?;
    let text = fs::read_to_string(predictions).with_context(|| format!("reading {}", predictions.display()))?;
    let preds = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Prediction>(l)
                .with_context(|| format!("{} line {}: not a prediction record with both experts' points", predictions.display(), i + 1))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ds = load_input(dataset)?;
    let all: Vec<_> = ds.annotations.iter().collect();
    let rows = scenario_analysis(&preds, &all)?;
    let csv = scenario_csv(&rows);
    write_text(out, &csv)?;
    print!("{csv}");
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_agreement(a: &Path, b: &Path, thresholds: &str, out: &Path) -> CmdResult {
    let ths = parse_thresholds(thresholds)?;
    let da = load_input(a)?;
    let db = load_input(b)?;
    let res = annotation_agreement(&da.annotations, &db.annotations, &ths)?;
    write_text(out, &res.to_csv())?;
    let kappa_path = out.with_extension("json");
    write_json(&kappa_path, &res)?;
    print!("{}", res.to_csv());
    println!("pairs {} kappa {:.4}", res.n_pairs, res.kappa);
    println!("wrote {}", out.display());
    println!("wrote {}", kappa_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let f = Failure::from(sacf_core::Error::NonFiniteLoss { epoch: 4 });
        assert_eq!(f.code, EXIT_NUMERICAL);
        let f = Failure::from(anyhow::Error::from(sacf_core::Error::SingleClassSplit { n: 3, label: 0 }).context("training"));
        assert_eq!(f.code, EXIT_NUMERICAL);
        let f = Failure::from(sacf_core::Error::Config("x".into()));
        assert_eq!(f.code, EXIT_INPUT);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let c = Cli::try_parse_from(["sacf", "eval", "--mode", "sacf-oracle", "--mode", "agnostic", "--tau", "0"]).unwrap();
        match c.command {
            Command::Eval { modes, tau, .. } => {
                assert_eq!(modes, vec![Mode::SacfOracle, Mode::Agnostic]);
                assert_eq!(tau, Some(0.0));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["sacf", "eval", "--mode", "bogus"]).is_err());
    }
}

//! Command-line front end. `dispatch` maps argv to an exit code:
//! 0 on success, 1 on invalid input or configuration, 2 on runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tonefair_core::config::Config;
use tonefair_core::datakit::export_manifest;
use tonefair_core::fairmetrics::default_light_dark;
use tonefair_core::harness::{self, split_for_seed, ReportRow};
use tonefair_core::micronet::{read_checkpoint, write_checkpoint};
use tonefair_core::trainer::{evaluate, train};
use tonefair_core::{AffineToneMap, Error, MetricsReport, Predictions, Result};

#[derive(Debug, Parser)]
#[command(name = "tonefair", version, about = "Tone-invariant training and fairness audits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.lambda=0.25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate the configured synthetic dataset as PNGs plus manifest.csv.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the stratified split for `train.seed` as `id,split` rows.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and evaluate it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print fairness metrics for an `id,true,pred,tone` predictions file.
    Audit {
        predictions: PathBuf,
        #[arg(long, default_value_t = 6)]
        groups: usize,
        /// Comma-separated groups on the light side of the opportunity difference.
        #[arg(long, value_delimiter = ',')]
        light: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        dark: Option<Vec<usize>>,
    },
    /// Run the configured experiment protocol and write its reports.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Parent directory for reports; overrides `experiment.out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace reports of an existing experiment id.
        #[arg(long)]
        force: bool,
    },
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn load(common: &Common) -> Result<Config> {
    let base = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = base.with_overrides(&common.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(out: &Path, cfg: &Config) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.write(&out.join("config.toml"))
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth { common, out } => {
            let cfg = load(&common)?;
            let (data, test) = cfg.load_data()?;
            prepare_out(&out, &cfg)?;
            let m = export_manifest(&data, &out)?;
            eprintln!("wrote {} samples to {}", data.len(), m.display());
            if let Some(t) = test {
                let m = export_manifest(&t, &out.join("test"))?;
                eprintln!("wrote {} test samples to {}", t.len(), m.display());
            }
            Ok(())
        }
        Cmd::Split { common, out } => {
            let cfg = load(&common)?;
            let (data, _) = cfg.load_data()?;
            let (tr, va, te) = split_for_seed(&data, None, &cfg, cfg.train.seed)?;
            prepare_out(&out, &cfg)?;
            let mut s = String::from("id,split\n");
            for d in [&tr, &va, &te] {
                for x in d.samples() {
                    s.push_str(&format!("{},{}\n", x.id, d.split_tag()));
                }
            }
            write(&out.join("split.csv"), &s)?;
            eprintln!("train {} / val {} / test {}", tr.len(), va.len(), te.len());
            Ok(())
        }
        Cmd::Train { common, out } => {
            let cfg = load(&common)?;
            let (data, external) = cfg.load_data()?;
            let (tr, va, te) = split_for_seed(&data, external.as_ref(), &cfg, cfg.train.seed)?;
            prepare_out(&out, &cfg)?;
            let tc = cfg.single_train_config(data.n_classes());
            let transformer = AffineToneMap::from_palette(&cfg.palette())?;
            let (model, history) = train(&tc, &tr, &va, &transformer)?;
            write_checkpoint(&model, &out.join("model.ckpt"))?;
            history.write_csv(&out.join("history.csv"))?;
            eprintln!(
                "selected epoch {} (val acc {:.4})",
                history.selected_epoch, history.epochs[history.selected_epoch].val_acc
            );
            if !te.is_empty() {
                finish_eval(&cfg, &evaluate(&model, &te, &tc.normalization)?, &out)?;
            }
            Ok(())
        }
        Cmd::Eval { common, checkpoint, out } => {
            let cfg = load(&common)?;
            let model = read_checkpoint(&checkpoint)?;
            let (data, external) = cfg.load_data()?;
            if model.arch() != &cfg.arch(data.n_classes()) {
                return Err(Error::Config(format!(
                    "checkpoint architecture {:?} does not match config",
                    model.arch()
                )));
            }
            let (_, _, te) = split_for_seed(&data, external.as_ref(), &cfg, cfg.train.seed)?;
            prepare_out(&out, &cfg)?;
            finish_eval(&cfg, &evaluate(&model, &te, &cfg.normalize)?, &out)
        }
        Cmd::Audit { predictions, groups, light, dark } => {
            let p = Predictions::read_csv(&predictions, groups)?;
            let (l, d) = default_light_dark(groups);
            let (l, d) = (light.unwrap_or(l), dark.unwrap_or(d));
            if let Some(g) = l.iter().chain(&d).find(|&&g| g >= groups) {
                return Err(Error::Config(format!("group {g} outside [0,{groups})")));
            }
            println!("{}", MetricsReport::compute(&p, &l, &d)?.to_json());
            Ok(())
        }
        Cmd::Experiment { common, out, force } => {
            let mut cfg = load(&common)?;
            if let Some(o) = out {
                cfg.experiment.out = o;
            }
            cfg.experiment.force |= force;
            let mut progress = |r: &ReportRow| match (&r.metrics, &r.error) {
                (Some(m), _) => eprintln!(
                    "seed {} {} {}: acc {:.4} nar {} ({:.1}s)",
                    r.seed,
                    r.variant,
                    r.condition,
                    m.overall_acc,
                    m.nar.map_or("-".into(), |v| format!("{v:.4}")),
                    r.seconds
                ),
                (None, e) => eprintln!(
                    "seed {} {} {}: aborted: {}",
                    r.seed,
                    r.variant,
                    r.condition,
                    e.as_deref().unwrap_or("?")
                ),
            };
            let (_, dir) = harness::run_and_write(&cfg, &mut progress)?;
            eprintln!("reports in {}", dir.display());
            Ok(())
        }
    }
}

fn finish_eval(cfg: &Config, p: &Predictions, out: &Path) -> Result<()> {
    p.write_csv(&out.join("predictions.csv"))?;
    let (l, d) = cfg.light_dark();
    let report = MetricsReport::compute(p, &l, &d)?;
    write(&out.join("metrics.json"), &report.to_json())?;
    eprintln!(
        "test acc {:.4}, nar {}",
        report.overall_acc,
        report.nar.map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

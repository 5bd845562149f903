//! Seeded experiment protocols: the main two-arm comparison, group holdouts
//! and training-share sweeps, with reports written under `<out>/<id>/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Kind, Variant};
use crate::datakit::{stratified_split, Dataset};
use crate::error::{Error, Result};
use crate::fairmetrics::MetricsReport;
use crate::seed;
use crate::tonemap::AffineToneMap;
use crate::trainer::{evaluate, train};

const SPLIT_STREAM: u64 = 0x5B17;
const SWEEP_STREAM: u64 = 0x5EE9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub seed: u64,
    pub variant: Variant,
    pub condition: String,
    pub train_size: usize,
    pub test_size: usize,
    /// `None` when the run aborted; see `error`.
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    /// Wall-clock training plus evaluation time. Kept out of the report files
    /// so identical configs give identical reports; see `timing.csv`.
    #[serde(skip)]
    pub seconds: f64,
}

/// Mean and sample standard deviation of each metric over the seeds of one
/// (variant, condition) cell. Aborted runs are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: Variant,
    pub condition: String,
    pub n_runs: usize,
    pub mean: SummaryStats,
    pub std: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryStats {
    pub overall_acc: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    pub eod: Option<f64>,
    pub nar: Option<f64>,
    pub acc_by_group: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment_id: String,
    pub kind: Kind,
    pub n_groups: usize,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<Summary>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    match xs.len() {
        0 => (None, None),
        1 => (Some(xs[0]), Some(0.0)),
        n => {
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            (Some(m), Some(v.sqrt()))
        }
    }
}

fn summarize(rows: &[&ReportRow], n_groups: usize) -> (SummaryStats, SummaryStats) {
    let ms: Vec<&MetricsReport> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let stat = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let xs: Vec<f64> = ms.iter().filter_map(|m| f(m)).collect();
        mean_std(&xs)
    };
    let mut mean = SummaryStats::default();
    let mut std = SummaryStats::default();
    macro_rules! fill {
        ($field:ident, $get:expr) => {{
            let (m, s) = stat(&$get);
            mean.$field = m;
            std.$field = s;
        }};
    }
    fill!(overall_acc, |m: &MetricsReport| Some(m.overall_acc));
    fill!(macro_recall, |m: &MetricsReport| Some(m.macro_recall));
    fill!(macro_f1, |m: &MetricsReport| Some(m.macro_f1));
    fill!(eod, |m: &MetricsReport| m.eod);
    fill!(nar, |m: &MetricsReport| m.nar);
    for g in 0..n_groups {
        let (m, s) = stat(&|m: &MetricsReport| m.acc_by_group.get(g).copied().flatten());
        mean.acc_by_group.push(m);
        std.acc_by_group.push(s);
    }
    (mean, std)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    fn new(cfg: &Config, rows: Vec<ReportRow>) -> Self {
        let n_groups = cfg.n_groups();
        let mut cells: Vec<(Variant, String)> = Vec::new();
        for r in &rows {
            let key = (r.variant, r.condition.clone());
            if !cells.contains(&key) {
                cells.push(key);
            }
        }
        let summaries = cells
            .into_iter()
            .map(|(variant, condition)| {
                let members: Vec<&ReportRow> = rows
                    .iter()
                    .filter(|r| r.variant == variant && r.condition == condition)
                    .collect();
                let (mean, std) = summarize(&members, n_groups);
                Summary {
                    variant,
                    n_runs: members.iter().filter(|r| r.metrics.is_some()).count(),
                    condition,
                    mean,
                    std,
                }
            })
            .collect();
        Self {
            experiment_id: cfg.experiment.id.clone(),
            kind: cfg.experiment.kind,
            n_groups,
            rows,
            summaries,
        }
    }

    pub fn summary(&self, variant: Variant, condition: &str) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.variant == variant && s.condition == condition)
    }

    /// One line per run, then one summary line per (variant, condition).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "experiment_id,kind,row,seed,variant,condition,train_size,test_size,\
             overall_acc,overall_acc_std,macro_recall,macro_recall_std,macro_f1,macro_f1_std,\
             eod,eod_std,nar,nar_std",
        );
        for g in 0..self.n_groups {
            let _ = write!(s, ",acc_g{g}");
        }
        for g in 0..self.n_groups {
            let _ = write!(s, ",acc_g{g}_std");
        }
        s.push_str(",error\n");
        let id = csv_field(&self.experiment_id);
        for r in &self.rows {
            let m = r.metrics.as_ref();
            let _ = write!(
                s,
                "{id},{},run,{},{},{},{},{}",
                self.kind,
                r.seed,
                r.variant,
                csv_field(&r.condition),
                r.train_size,
                r.test_size
            );
            let vals = [
                m.map(|m| m.overall_acc),
                m.map(|m| m.macro_recall),
                m.map(|m| m.macro_f1),
                m.and_then(|m| m.eod),
                m.and_then(|m| m.nar),
            ];
            for v in vals {
                let _ = write!(s, ",{},", fmt_opt(v));
            }
            for g in 0..self.n_groups {
                let _ = write!(s, ",{}", fmt_opt(m.and_then(|m| m.acc_by_group[g])));
            }
            s.push_str(&",".repeat(self.n_groups));
            let _ = writeln!(s, ",{}", csv_field(r.error.as_deref().unwrap_or("")));
        }
        for sm in &self.summaries {
            let _ = write!(
                s,
                "{id},{},summary,,{},{},,",
                self.kind,
                sm.variant,
                csv_field(&sm.condition)
            );
            let pairs = [
                (sm.mean.overall_acc, sm.std.overall_acc),
                (sm.mean.macro_recall, sm.std.macro_recall),
                (sm.mean.macro_f1, sm.std.macro_f1),
                (sm.mean.eod, sm.std.eod),
                (sm.mean.nar, sm.std.nar),
            ];
            for (m, sd) in pairs {
                let _ = write!(s, ",{},{}", fmt_opt(m), fmt_opt(sd));
            }
            for g in 0..self.n_groups {
                let _ = write!(s, ",{}", fmt_opt(sm.mean.acc_by_group[g]));
            }
            for g in 0..self.n_groups {
                let _ = write!(s, ",{}", fmt_opt(sm.std.acc_by_group[g]));
            }
            s.push_str(",\n");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("seed,variant,condition,seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.3}",
                r.seed,
                r.variant,
                csv_field(&r.condition),
                r.seconds
            );
        }
        s
    }

    /// Mean accuracy per group for every (variant, condition) cell.
    pub fn plot_groups_csv(&self) -> String {
        let mut s = String::from("variant,condition,group,acc_mean,acc_std\n");
        for sm in &self.summaries {
            for g in 0..self.n_groups {
                let _ = writeln!(
                    s,
                    "{},{},{g},{},{}",
                    sm.variant,
                    csv_field(&sm.condition),
                    fmt_opt(sm.mean.acc_by_group[g]),
                    fmt_opt(sm.std.acc_by_group[g])
                );
            }
        }
        s
    }

    /// Accuracy against training share, one series per (variant, target).
    pub fn plot_fraction_csv(&self) -> Option<String> {
        if self.kind != Kind::Sweep {
            return None;
        }
        let mut s = String::from("variant,target,fraction,acc_mean,acc_std,nar_mean\n");
        for sm in &self.summaries {
            let (target, frac) = parse_sweep_condition(&sm.condition)?;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                sm.variant,
                target,
                frac,
                fmt_opt(sm.mean.overall_acc),
                fmt_opt(sm.std.overall_acc),
                fmt_opt(sm.mean.nar)
            );
        }
        Some(s)
    }
}

fn group_label(g: &[usize]) -> String {
    g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("+")
}

fn sweep_condition(target: &[usize], f: f64) -> String {
    format!("target={};f={f:.4}", group_label(target))
}

fn parse_sweep_condition(c: &str) -> Option<(&str, &str)> {
    let (t, f) = c.split_once(';')?;
    Some((t.strip_prefix("target=")?, f.strip_prefix("f=")?))
}

/// Train/val/test for one run seed; a configured external test set replaces the split's.
pub fn split_for_seed(
    data: &Dataset,
    external: Option<&Dataset>,
    cfg: &Config,
    run_seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (tr, va, te) = stratified_split(data, &cfg.split, seed::derive(run_seed, 0, SPLIT_STREAM))?;
    Ok((tr, va, external.cloned().unwrap_or(te)))
}

struct Job<'a> {
    seed: u64,
    condition: String,
    train: &'a Dataset,
    val: &'a Dataset,
    test: &'a Dataset,
}

struct Runner<'a> {
    cfg: &'a Config,
    transformer: AffineToneMap,
    n_classes: usize,
    light: Vec<usize>,
    dark: Vec<usize>,
    progress: &'a mut dyn FnMut(&ReportRow),
    rows: Vec<ReportRow>,
}

impl Runner<'_> {
    fn run(&mut self, job: &Job<'_>) {
        for &variant in &self.cfg.experiment.variants {
            let t0 = Instant::now();
            let outcome = (|| -> Result<MetricsReport> {
                let tc = self.cfg.train_config(variant, job.seed, self.n_classes);
                let (model, _) = train(&tc, job.train, job.val, &self.transformer)?;
                let preds = evaluate(&model, job.test, &tc.normalization)?;
                MetricsReport::compute(&preds, &self.light, &self.dark)
            })();
            let (metrics, error) = match outcome {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let row = ReportRow {
                experiment_id: self.cfg.experiment.id.clone(),
                seed: job.seed,
                variant,
                condition: job.condition.clone(),
                train_size: job.train.len(),
                test_size: job.test.len(),
                metrics,
                error,
                seconds: t0.elapsed().as_secs_f64(),
            };
            (self.progress)(&row);
            self.rows.push(row);
        }
    }
}

fn runner<'a>(
    cfg: &'a Config,
    data: &Dataset,
    progress: &'a mut dyn FnMut(&ReportRow),
) -> Result<Runner<'a>> {
    let (light, dark) = cfg.light_dark();
    Ok(Runner {
        cfg,
        transformer: AffineToneMap::from_palette(&cfg.palette())?,
        n_classes: data.n_classes(),
        light,
        dark,
        progress,
        rows: Vec::new(),
    })
}

/// Every seed splits the data once and trains each variant on that split.
pub fn run_main(
    cfg: &Config,
    data: &Dataset,
    external: Option<&Dataset>,
    progress: &mut dyn FnMut(&ReportRow),
) -> Result<Vec<ReportRow>> {
    let mut r = runner(cfg, data, progress)?;
    for &s in &cfg.experiment.seeds {
        let (tr, va, te) = split_for_seed(data, external, cfg, s)?;
        r.run(&Job {
            seed: s,
            condition: "all".into(),
            train: &tr,
            val: &va,
            test: &te,
        });
    }
    Ok(r.rows)
}

/// Trains on a subset of groups and evaluates on the test samples of all others.
pub fn run_holdout(
    cfg: &Config,
    data: &Dataset,
    external: Option<&Dataset>,
    progress: &mut dyn FnMut(&ReportRow),
) -> Result<Vec<ReportRow>> {
    let n = cfg.n_groups();
    for g in &cfg.experiment.holdout_groups {
        if (0..n).all(|t| g.contains(&t)) {
            return Err(Error::Config(format!(
                "holdout set {g:?} leaves no group to evaluate on"
            )));
        }
    }
    let mut r = runner(cfg, data, progress)?;
    for &s in &cfg.experiment.seeds {
        let (tr, va, te) = split_for_seed(data, external, cfg, s)?;
        for g in &cfg.experiment.holdout_groups {
            let inside = |x: &crate::Sample| g.contains(&x.tone);
            r.run(&Job {
                seed: s,
                condition: format!("train={}", group_label(g)),
                train: &tr.filter(inside),
                val: &va.filter(inside),
                test: &te.filter(|x| !g.contains(&x.tone)),
            });
        }
    }
    Ok(r.rows)
}

/// Keeps `floor(f * n)` of the target groups' training samples for each `f`,
/// always a prefix of one seeded permutation, so larger shares are supersets.
pub fn run_sweep(
    cfg: &Config,
    data: &Dataset,
    external: Option<&Dataset>,
    progress: &mut dyn FnMut(&ReportRow),
) -> Result<Vec<ReportRow>> {
    let mut r = runner(cfg, data, progress)?;
    for &s in &cfg.experiment.seeds {
        let (tr, va, te) = split_for_seed(data, external, cfg, s)?;
        for (ti, target) in cfg.experiment.sweep_targets.iter().enumerate() {
            let mut pool: Vec<usize> = (0..tr.len())
                .filter(|&i| target.contains(&tr.samples()[i].tone))
                .collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::derive(s, ti as u64 + 1, SWEEP_STREAM));
            pool.shuffle(&mut rng);
            for &f in &cfg.experiment.sweep_fractions {
                let keep_n = (f * pool.len() as f64 + 1e-9).floor() as usize;
                let mut keep = vec![true; tr.len()];
                for &i in &pool[keep_n.min(pool.len())..] {
                    keep[i] = false;
                }
                let idx: Vec<usize> = (0..tr.len()).filter(|&i| keep[i]).collect();
                let sub = tr.select(&idx, tr.split_tag());
                r.run(&Job {
                    seed: s,
                    condition: sweep_condition(target, f),
                    train: &sub,
                    val: &va,
                    test: &te,
                });
            }
        }
    }
    Ok(r.rows)
}

/// Runs the configured protocol and returns the assembled report.
pub fn run_experiment(cfg: &Config, progress: &mut dyn FnMut(&ReportRow)) -> Result<Report> {
    cfg.validate()?;
    let (data, external) = cfg.load_data()?;
    let ext = external.as_ref();
    let rows = match cfg.experiment.kind {
        Kind::Main => run_main(cfg, &data, ext, progress)?,
        Kind::Holdout => run_holdout(cfg, &data, ext, progress)?,
        Kind::Sweep => run_sweep(cfg, &data, ext, progress)?,
    };
    Ok(Report::new(cfg, rows))
}

pub fn experiment_dir(cfg: &Config) -> PathBuf {
    cfg.experiment.out.join(&cfg.experiment.id)
}

/// Fails with [`Error::Exists`] if reports for this experiment id are
/// already on disk and `experiment.force` is off.
pub fn check_fresh(cfg: &Config) -> Result<()> {
    let report = experiment_dir(cfg).join("report.csv");
    if report.exists() && !cfg.experiment.force {
        return Err(Error::Exists(report));
    }
    Ok(())
}

/// Writes report.csv, report.json, timing.csv, plotdata_*.csv and the resolved config.
pub fn write_report(cfg: &Config, report: &Report) -> Result<PathBuf> {
    check_fresh(cfg)?;
    let dir = experiment_dir(cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let put = |name: &str, body: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    put("config.toml", &cfg.to_toml())?;
    put("report.csv", &report.to_csv())?;
    put("report.json", &report.to_json())?;
    put("timing.csv", &report.timing_csv())?;
    put("plotdata_groups.csv", &report.plot_groups_csv())?;
    if let Some(f) = report.plot_fraction_csv() {
        put("plotdata_fraction.csv", &f)?;
    }
    Ok(dir)
}

/// Validates, refuses to clobber, runs, and writes. Returns the output directory.
pub fn run_and_write(
    cfg: &Config,
    progress: &mut dyn FnMut(&ReportRow),
) -> Result<(Report, PathBuf)> {
    cfg.validate()?;
    check_fresh(cfg)?;
    let report = run_experiment(cfg, progress)?;
    let dir = write_report(cfg, &report)?;
    Ok((report, dir))
}

pub fn read_report(dir: &Path) -> Result<Report> {
    let p = dir.join("report.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Ingest(format!("{}: {e}", p.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: &str) -> Config {
        Config::default()
            .with_overrides(&[
                "data.synth.n_classes=3",
                "data.synth.counts=[10,10,10,10,10,10]",
                "data.synth.side=16",
                "train.epochs=1",
                "train.lr=0.01",
                "experiment.seeds=[1,2]",
                &format!("experiment.kind=\"{kind}\""),
            ])
            .unwrap()
    }

    fn quiet() -> impl FnMut(&ReportRow) {
        |_| {}
    }

    #[test]
    fn main_counts_rows_and_summaries() {
        let cfg = tiny("main");
        let rep = run_experiment(&cfg, &mut quiet()).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep.summaries.len(), 2);
        for v in [Variant::Reg, Variant::NoReg] {
            let s = rep.summary(v, "all").unwrap();
            let nars: Vec<f64> = rep
                .rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.metrics.as_ref().unwrap().nar.unwrap())
                .collect();
            let mean = nars.iter().sum::<f64>() / nars.len() as f64;
            assert!((s.mean.nar.unwrap() - mean).abs() < 1e-9);
        }
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 + 2);
        let width = csv.lines().next().unwrap().split(',').count();
        assert!(csv.lines().all(|l| l.split(',').count() == width));
    }

    #[test]
    fn paired_test_sets_within_seed() {
        let cfg = tiny("main");
        let rep = run_experiment(&cfg, &mut quiet()).unwrap();
        for s in [1, 2] {
            let counts: Vec<_> = rep
                .rows
                .iter()
                .filter(|r| r.seed == s)
                .map(|r| r.metrics.as_ref().unwrap().counts_by_group.clone())
                .collect();
            assert_eq!(counts[0], counts[1]);
        }
    }

    #[test]
    fn holdout_tests_only_unseen_groups() {
        let cfg = tiny("holdout")
            .with_overrides(&[
                "experiment.holdout_groups=[[0,1],[2,3]]",
                "experiment.seeds=[1]",
                "data.synth.counts=[30,30,30,30,30,30]",
            ])
            .unwrap();
        let rep = run_experiment(&cfg, &mut quiet()).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let unseen: usize = rep.rows[0].metrics.as_ref().unwrap().counts_by_group.iter().sum();
        assert_eq!(unseen, rep.rows[0].test_size);
        for r in &rep.rows {
            let m = r.metrics.as_ref().unwrap();
            let seen: Vec<usize> = if r.condition == "train=0+1" { vec![0, 1] } else { vec![2, 3] };
            for g in 0..6 {
                if seen.contains(&g) {
                    assert!(m.acc_by_group[g].is_none() && m.counts_by_group[g] == 0, "{r:?}");
                } else {
                    assert_eq!(m.acc_by_group[g].is_some(), m.counts_by_group[g] > 0);
                }
            }
        }
        let all = tiny("holdout")
            .with_overrides(&["experiment.holdout_groups=[[0,1,2,3,4,5]]"])
            .unwrap();
        assert!(matches!(run_experiment(&all, &mut quiet()), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_sizes_nested_and_full_matches_main() {
        let cfg = tiny("sweep")
            .with_overrides(&[
                "experiment.seeds=[1]",
                "experiment.variants=[\"noreg\"]",
                "experiment.sweep_targets=[[4,5]]",
                "experiment.sweep_fractions=[0.0,0.5,1.0]",
            ])
            .unwrap();
        let rep = run_experiment(&cfg, &mut quiet()).unwrap();
        let sizes: Vec<usize> = rep.rows.iter().map(|r| r.train_size).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
        let (data, _) = cfg.load_data().unwrap();
        let (tr, _, _) = split_for_seed(&data, None, &cfg, 1).unwrap();
        let n_target = tr.samples().iter().filter(|s| s.tone >= 4).count();
        assert_eq!(sizes[2] - sizes[0], n_target);
        assert_eq!(sizes[1] - sizes[0], n_target / 2);

        let main = tiny("main")
            .with_overrides(&["experiment.seeds=[1]", "experiment.variants=[\"noreg\"]"])
            .unwrap();
        let m = run_experiment(&main, &mut quiet()).unwrap();
        assert_eq!(m.rows[0].metrics, rep.rows[2].metrics);
        assert_eq!(m.rows[0].train_size, rep.rows[2].train_size);
        assert!(rep.plot_fraction_csv().unwrap().lines().count() == 4);
    }

    #[test]
    fn sweep_zero_drops_target_groups() {
        let cfg = tiny("sweep")
            .with_overrides(&["experiment.sweep_targets=[[0]]", "experiment.sweep_fractions=[0.0]"])
            .unwrap();
        let (data, _) = cfg.load_data().unwrap();
        let mut seen = Vec::new();
        let rows = run_sweep(&cfg, &data, None, &mut |r| seen.push(r.train_size)).unwrap();
        let (tr, _, _) = split_for_seed(&data, None, &cfg, 1).unwrap();
        let n0 = tr.samples().iter().filter(|s| s.tone == 0).count();
        assert_eq!(rows[0].train_size, tr.len() - n0);
        assert_eq!(seen.len(), rows.len());
    }

    #[test]
    fn reports_refuse_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny("main")
            .with_overrides(&[
                format!("experiment.out=\"{}\"", dir.path().display()),
                "experiment.seeds=[1]".into(),
            ])
            .unwrap();
        let (rep, out) = run_and_write(&cfg, &mut quiet()).unwrap();
        for f in ["report.csv", "report.json", "timing.csv", "plotdata_groups.csv", "config.toml"] {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(matches!(run_and_write(&cfg, &mut quiet()), Err(Error::Exists(_))));
        let forced = cfg.with_overrides(&["experiment.force=true"]).unwrap();
        let (again, _) = run_and_write(&forced, &mut quiet()).unwrap();
        assert_eq!(rep.to_csv(), again.to_csv());
        assert_eq!(read_report(&out).unwrap().rows.len(), rep.rows.len());
        let snap = Config::load(&out.join("config.toml")).unwrap();
        assert_eq!(snap, forced);
    }

    #[test]
    fn aborted_runs_are_recorded_and_others_continue() {
        let cfg = tiny("main").with_overrides(&["train.lr=1e30"]).unwrap();
        let rep = run_experiment(&cfg, &mut quiet()).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!(rep.rows.iter().all(|r| r.error.is_some() && r.metrics.is_none()));
        assert!(rep.to_csv().contains("non-finite"));
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[]), (None, None));
        assert_eq!(mean_std(&[2.0]), (Some(2.0), Some(0.0)));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}

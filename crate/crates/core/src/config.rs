//! Experiment configuration: one versioned TOML file with nested sections,
//! plus `section.key=value` overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datakit::{
    load_manifest_with, synth_generate_with, Dataset, Normalization, Palette, Ratios,
    SynthConfig, DEFAULT_MANIFEST_SIDE,
};
use crate::error::{Error, Result};
use crate::fairmetrics::default_light_dark;
use crate::micronet::{Arch, Hyper};
use crate::trainer::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Per-group training counts of the default synthetic set, light to dark.
/// Shaped like a typical clinical collection: mid-light tones dominate and
/// the darkest group is rare.
pub const DEFAULT_GROUP_COUNTS: [usize; 6] = [166, 270, 186, 156, 86, 36];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: Ratios,
    #[serde(default)]
    pub normalize: Normalization,
    /// Tone palette shared by the generator and the tone transformer.
    /// Defaults to an evenly spaced light-to-dark ramp over the data's groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<Palette>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            data: DataConfig::default(),
            split: Ratios::default(),
            normalize: Normalization::default(),
            tone: None,
            model: ModelConfig::default(),
            train: TrainSection::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synth,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    pub synth: SynthConfig,
    /// Separately generated evaluation set. When present it replaces the
    /// test part of every split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Side images from a manifest are resized to.
    #[serde(default = "default_manifest_side")]
    pub side: usize,
}

fn default_manifest_side() -> usize {
    DEFAULT_MANIFEST_SIDE
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: Source::Synth,
            synth: SynthConfig {
                n_classes: 5,
                n_groups: 6,
                counts: DEFAULT_GROUP_COUNTS.to_vec(),
                side: 32,
                rho: 0.8,
                seed: 0,
            },
            test: None,
            manifest: None,
            side: DEFAULT_MANIFEST_SIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_widths: Vec<usize>,
    pub kernel: usize,
    pub pool_grid: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let a = Arch::default();
        Self {
            conv_widths: a.conv_widths,
            kernel: a.kernel,
            pool_grid: a.pool_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub use_reg: bool,
    pub augment: bool,
    /// Seed for the single-run `train` command; experiments use their own list.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyper::default();
        Self {
            lr: h.lr,
            momentum: h.momentum,
            weight_decay: h.weight_decay,
            batch_size: h.batch_size,
            epochs: h.epochs,
            lambda: h.lambda,
            clip_norm: h.clip_norm,
            use_reg: true,
            augment: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Main,
    Holdout,
    Sweep,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Main => "main",
            Kind::Holdout => "holdout",
            Kind::Sweep => "sweep",
        })
    }
}

/// Training arm: with the invariance term or without it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Reg,
    NoReg,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Reg => "reg",
            Variant::NoReg => "noreg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: Kind,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Each entry is one set of training groups; the rest are held out.
    pub holdout_groups: Vec<Vec<usize>>,
    /// Each entry is one set of groups whose training share is varied.
    pub sweep_targets: Vec<Vec<usize>>,
    pub sweep_fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_groups: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_groups: Option<Vec<usize>>,
    pub out: PathBuf,
    /// Replace the reports of an existing experiment with the same id.
    pub force: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "default".into(),
            kind: Kind::Main,
            seeds: vec![0, 1, 2, 3, 4],
            variants: vec![Variant::Reg, Variant::NoReg],
            holdout_groups: vec![vec![0, 1]],
            sweep_targets: vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            sweep_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            light_groups: None,
            dark_groups: None,
            out: PathBuf::from("runs"),
            force: false,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Config(format!("config file not found: {}", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Applies `a.b.c=value` overrides. Values are read as TOML literals and
    /// fall back to bare strings; keys that do not exist are rejected.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Internal(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("bad override key `{key}`")));
            }
            set_path(&mut root, &path, parse_value(raw.trim()))
                .map_err(|_| Error::Config(format!("unknown config key `{key}`")))?;
            // Checked per override so the message names the offending key. A missing
            // field may still be filled by a later override, so that waits for the end.
            if let Err(e) = Config::deserialize(root.clone()) {
                if !e.to_string().contains("missing field") {
                    return Err(Error::Config(format!("override `{o}`: {e}")));
                }
            }
        }
        let text = toml::to_string(&root).map_err(|e| Error::Internal(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.normalize.validate()?;
        self.hyper(0).validate()?;
        let n = self.n_groups();
        match self.data.source {
            Source::Synth => {
                self.data.synth.validate()?;
                if let Some(t) = &self.data.test {
                    t.validate()?;
                    if t.n_classes != self.data.synth.n_classes
                        || t.n_groups != self.data.synth.n_groups
                        || t.side != self.data.synth.side
                    {
                        return Err(Error::Config(
                            "data.test must match data.synth in classes, groups and side".into(),
                        ));
                    }
                }
            }
            Source::Manifest => {
                if self.data.manifest.is_none() {
                    return Err(Error::Config("data.manifest path required".into()));
                }
            }
        }
        let palette = self.palette();
        palette.validate()?;
        if palette.colors.len() != n {
            return Err(Error::Config(format!(
                "palette has {} tones, data has {n} groups",
                palette.colors.len()
            )));
        }
        self.experiment.validate(n)
    }

    pub fn n_groups(&self) -> usize {
        match self.data.source {
            Source::Synth => self.data.synth.n_groups,
            Source::Manifest => 6,
        }
    }

    pub fn palette(&self) -> Palette {
        self.tone
            .clone()
            .unwrap_or_else(|| Palette::ramp(self.n_groups()))
    }

    /// The configured dataset and, if configured, the separate test set.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self.data.source {
            Source::Synth => {
                let palette = self.palette();
                let d = synth_generate_with(&self.data.synth, &palette)?;
                let t = match &self.data.test {
                    Some(t) => Some(synth_generate_with(t, &palette)?),
                    None => None,
                };
                Ok((d, t))
            }
            Source::Manifest => {
                let path = self.data.manifest.as_ref().ok_or_else(|| {
                    Error::Config("data.manifest path required".into())
                })?;
                Ok((load_manifest_with(path, self.data.side)?, None))
            }
        }
    }

    pub fn input_side(&self) -> usize {
        match self.data.source {
            Source::Synth => self.data.synth.side,
            Source::Manifest => self.data.side,
        }
    }

    pub fn arch(&self, n_classes: usize) -> Arch {
        Arch {
            input_side: self.input_side(),
            conv_widths: self.model.conv_widths.clone(),
            kernel: self.model.kernel,
            pool_grid: self.model.pool_grid,
            n_classes,
        }
    }

    pub fn hyper(&self, seed: u64) -> Hyper {
        let t = &self.train;
        Hyper {
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lambda: t.lambda,
            seed,
            clip_norm: t.clip_norm,
        }
    }

    /// Training setup for one experiment arm.
    pub fn train_config(&self, variant: Variant, seed: u64, n_classes: usize) -> TrainConfig {
        TrainConfig {
            arch: self.arch(n_classes),
            hyper: self.hyper(seed),
            use_reg: variant == Variant::Reg,
            augment: self.train.augment,
            normalization: self.normalize,
        }
    }

    /// Training setup for the single-run `train` command.
    pub fn single_train_config(&self, n_classes: usize) -> TrainConfig {
        TrainConfig {
            use_reg: self.train.use_reg,
            ..self.train_config(Variant::Reg, self.train.seed, n_classes)
        }
    }

    /// Group sets compared by the opportunity-difference metric.
    pub fn light_dark(&self) -> (Vec<usize>, Vec<usize>) {
        let (l, d) = default_light_dark(self.n_groups());
        (
            self.experiment.light_groups.clone().unwrap_or(l),
            self.experiment.dark_groups.clone().unwrap_or(d),
        )
    }
}

impl ExperimentConfig {
    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id.starts_with('.') {
            return Err(Error::Config(format!("bad experiment id `{}`", self.id)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("experiment.variants is empty".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return Err(Error::Config(format!("variant {v} listed twice")));
            }
        }
        let check_groups = |name: &str, g: &[usize]| -> Result<()> {
            if g.is_empty() {
                return Err(Error::Config(format!("{name} has an empty group set")));
            }
            if let Some(bad) = g.iter().find(|&&t| t >= n_groups) {
                return Err(Error::Config(format!(
                    "{name}: group {bad} outside [0,{n_groups})"
                )));
            }
            Ok(())
        };
        match self.kind {
            Kind::Main => {}
            Kind::Holdout => {
                if self.holdout_groups.is_empty() {
                    return Err(Error::Config("experiment.holdout_groups is empty".into()));
                }
                for g in &self.holdout_groups {
                    check_groups("experiment.holdout_groups", g)?;
                    if (0..n_groups).all(|t| g.contains(&t)) {
                        return Err(Error::Config(format!(
                            "holdout set {g:?} leaves no group to evaluate on"
                        )));
                    }
                }
            }
            Kind::Sweep => {
                if self.sweep_targets.is_empty() {
                    return Err(Error::Config("experiment.sweep_targets is empty".into()));
                }
                for g in &self.sweep_targets {
                    check_groups("experiment.sweep_targets", g)?;
                }
                let f = &self.sweep_fractions;
                if f.is_empty() || f.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::Config("sweep fractions must lie in [0,1]".into()));
                }
                if f.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "sweep fractions must be strictly increasing".into(),
                    ));
                }
            }
        }
        for (name, g) in [("light_groups", &self.light_groups), ("dark_groups", &self.dark_groups)] {
            if let Some(g) = g {
                check_groups(&format!("experiment.{name}"), g)?;
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(node: &mut toml::Value, path: &[&str], value: toml::Value) -> std::result::Result<(), ()> {
    let table = node.as_table_mut().ok_or(())?;
    match path {
        [last] => {
            table.insert((*last).to_string(), value);
            Ok(())
        }
        [head, rest @ ..] => {
            let child = table
                .entry((*head).to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            set_path(child, rest, value)
        }
        [] => Err(()),
    }
}

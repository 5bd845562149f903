//! Datasets: synthetic tone-biased generation, manifest ingestion, stratified
//! splitting, augmentation and normalization.

mod augment;
mod image;
mod manifest;
mod split;
mod synth;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::augment::{augment, Augmentation, MAX_ROTATION_DEG};
pub use self::image::{luminance, Image, Mask, CHANNELS, MIN_SIDE};
pub use self::manifest::{
    export_manifest, load_manifest, load_manifest_with, read_classes, read_manifest_rows,
    ManifestRow, DEFAULT_MANIFEST_SIDE,
};
pub use self::split::{stratified_partition, stratified_split, Ratios};
pub use self::synth::{
    render_sample, synth_generate, synth_generate_with, tone_oracle, Palette, SynthConfig, DEFAULT_SYNTH_SIDE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub label: usize,
    pub tone: usize,
    /// Lesion mask, known only for synthetic data.
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unsplit,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Unsplit => "unsplit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_names: Vec<String>,
    group_names: Vec<String>,
    split: SplitTag,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        class_names: Vec<String>,
        group_names: Vec<String>,
        split: SplitTag,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.label >= class_names.len() {
                return Err(Error::Ingest(format!(
                    "sample {} has label {} but only {} classes exist",
                    s.id,
                    s.label,
                    class_names.len()
                )));
            }
            if s.tone >= group_names.len() {
                return Err(Error::Ingest(format!(
                    "sample {} has tone {} but only {} groups exist",
                    s.id,
                    s.tone,
                    group_names.len()
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Ingest(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self {
            samples,
            class_names,
            group_names,
            split,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups()];
        for s in &self.samples {
            counts[s.tone] += 1;
        }
        counts
    }

    /// Same vocabularies, a subset of samples picked by index (order kept).
    pub fn select(&self, indices: &[usize], split: SplitTag) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
            split,
        }
    }

    pub fn filter<F: Fn(&Sample) -> bool>(&self, keep: F) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: SplitTag) -> Dataset {
        self.split = split;
        self
    }
}

/// Per-channel normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// Channel statistics of the ImageNet training partition.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.std.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!(
                "normalization std must be positive, got {s}"
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("normalization mean must be finite".into()));
        }
        Ok(())
    }
}

/// Per-channel `(v - mean_c) / std_c`.
pub fn normalize(img: &Image, norm: &Normalization) -> Result<Image> {
    norm.validate()?;
    let plane = img.height() * img.width();
    let mut out = img.data().to_vec();
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let (m, s) = (norm.mean[c], norm.std[c]);
        for v in chunk {
            *v = (*v - m) / s;
        }
    }
    Ok(Image::from_parts(img.height(), img.width(), out))
}

pub fn denormalize(img: &Image, norm: &Normalization) -> Result<Image> {
    norm.validate()?;
    let plane = img.height() * img.width();
    let mut out = img.data().to_vec();
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let (m, s) = (norm.mean[c], norm.std[c]);
        for v in chunk {
            *v = *v * s + m;
        }
    }
    Ok(Image::from_parts(img.height(), img.width(), out))
}

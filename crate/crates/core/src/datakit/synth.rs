use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{luminance, Image, Mask};
use super::{Dataset, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_SYNTH_SIDE: usize = 32;

/// Background tones ordered from lightest to darkest.
const BASE_TONES: [[f32; 3]; 6] = [
    [0.96, 0.86, 0.78],
    [0.90, 0.75, 0.63],
    [0.80, 0.62, 0.48],
    [0.66, 0.48, 0.35],
    [0.48, 0.33, 0.22],
    [0.30, 0.20, 0.13],
];

const LESION_DARK: [f32; 3] = [0.55, 0.16, 0.20];
const LESION_LIGHT: [f32; 3] = [0.80, 0.42, 0.44];
const LESION_NOISE: f32 = 0.03;
const CLASS_ASPECT: [f32; 5] = [1.0, 1.45, 0.7, 1.2, 0.85];

/// Tone-group background colors plus per-pixel noise amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palette {
    pub colors: Vec<[f32; 3]>,
    /// Half-width of the uniform per-pixel noise added to backgrounds.
    pub noise: f32,
}

impl Default for Palette {
    fn default() -> Self {
        Self::ramp(BASE_TONES.len())
    }
}

impl Palette {
    /// `n` tones sampled along the default light-to-dark ramp.
    pub fn ramp(n: usize) -> Self {
        let last = (BASE_TONES.len() - 1) as f32;
        let colors = (0..n)
            .map(|i| {
                let t = if n == 1 {
                    0.0
                } else {
                    i as f32 * last / (n - 1) as f32
                };
                let lo = t.floor() as usize;
                let hi = (lo + 1).min(BASE_TONES.len() - 1);
                let f = t - lo as f32;
                let mut c = [0.0; 3];
                for k in 0..3 {
                    c[k] = BASE_TONES[lo][k] * (1.0 - f) + BASE_TONES[hi][k] * f;
                }
                c
            })
            .collect();
        Self {
            colors,
            noise: 0.03,
        }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn luminances(&self) -> Vec<f32> {
        self.colors.iter().map(|c| luminance(*c)).collect()
    }

    /// Per-channel standard deviation of a background pixel.
    pub fn noise_std(&self) -> f32 {
        self.noise / 3f32.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.colors.len() < 2 {
            return Err(Error::Config("palette needs at least 2 tones".into()));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!(
                "palette noise {} outside [0, 0.5)",
                self.noise
            )));
        }
        for c in &self.colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("palette color {c:?} outside [0,1]")));
            }
        }
        let lum = self.luminances();
        if lum.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "palette luminance must strictly decrease from group 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_groups: usize,
    /// Number of samples per tone group.
    pub counts: Vec<usize>,
    #[serde(default = "default_side")]
    pub side: usize,
    /// Probability that a sample's label is the class tied to its tone group.
    pub rho: f64,
    pub seed: u64,
}

fn default_side() -> usize {
    DEFAULT_SYNTH_SIDE
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if self.n_groups < 2 {
            return Err(Error::Config("synthetic data needs at least 2 groups".into()));
        }
        if self.counts.len() != self.n_groups {
            return Err(Error::Config(format!(
                "{} group counts given for {} groups",
                self.counts.len(),
                self.n_groups
            )));
        }
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(Error::Config("group counts sum to zero".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0,1]", self.rho)));
        }
        if self.side < super::MIN_SIDE {
            return Err(Error::Config(format!("image side {} too small", self.side)));
        }
        Ok(())
    }

    /// The class a tone group is tied to when the bias fires.
    pub fn associated_class(&self, group: usize) -> usize {
        group % self.n_classes
    }
}

/// Generates a dataset with the default palette for `config.n_groups` tones.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    synth_generate_with(config, &Palette::ramp(config.n_groups))
}

/// Samples are emitted group by group. Within group `g`, each label is the
/// class tied to `g` with probability `rho`, otherwise uniform over classes.
pub fn synth_generate_with(config: &SynthConfig, palette: &Palette) -> Result<Dataset> {
    config.validate()?;
    palette.validate()?;
    if palette.len() != config.n_groups {
        return Err(Error::Config(format!(
            "palette has {} tones for {} groups",
            palette.len(),
            config.n_groups
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, 0, 0));
    let mut samples = Vec::with_capacity(config.counts.iter().sum());
    for (tone, &count) in config.counts.iter().enumerate() {
        for _ in 0..count {
            let label = if rng.gen_bool(config.rho) {
                config.associated_class(tone)
            } else {
                rng.gen_range(0..config.n_classes)
            };
            let index = samples.len() as u64;
            let shape_seed = seed::derive(config.seed, index, 1);
            let noise_seed = seed::derive(config.seed, index, 2);
            let (image, mask) =
                render_sample(label, tone, shape_seed, noise_seed, palette, config.side);
            samples.push(Sample {
                id: format!("syn-{index:06}"),
                image,
                label,
                tone,
                mask: Some(mask),
            });
        }
    }
    let class_names = (0..config.n_classes).map(|c| format!("class{c}")).collect();
    let group_names = group_names(config.n_groups);
    Dataset::new(samples, class_names, group_names, SplitTag::Unsplit)
}

pub(crate) fn group_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|g| {
            if n == 6 {
                format!("FST{}", g + 1)
            } else {
                format!("G{g}")
            }
        })
        .collect()
}

/// Renders one synthetic sample. Lesion pixels and the mask are a function of
/// `(label, shape_seed)` only; background pixels of `(tone, noise_seed)` only.
pub fn render_sample(
    label: usize,
    tone: usize,
    shape_seed: u64,
    noise_seed: u64,
    palette: &Palette,
    side: usize,
) -> (Image, Mask) {
    let plane = side * side;
    let mut data = vec![0.0f32; 3 * plane];

    let base = palette.colors[tone];
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    for c in 0..3 {
        for v in &mut data[c * plane..(c + 1) * plane] {
            *v = (base[c] + noise_rng.gen_range(-palette.noise..=palette.noise)).clamp(0.0, 1.0);
        }
    }

    let mut shape_rng = ChaCha8Rng::seed_from_u64(shape_seed);
    let s = side as f32;
    let cy = shape_rng.gen_range(0.3 * s..=0.7 * s);
    let cx = shape_rng.gen_range(0.3 * s..=0.7 * s);
    let radius = shape_rng.gen_range(0.16 * s..=0.22 * s);
    let phase = shape_rng.gen_range(0.0f32..4.0);
    let aspect = CLASS_ASPECT[label % CLASS_ASPECT.len()];
    let (ry, rx) = (radius * aspect.sqrt(), radius / aspect.sqrt());
    let half_period = 1.0 + (label / CLASS_ASPECT.len()) as f32;

    let mut alpha = vec![0.0f32; plane];
    for y in 0..side {
        for x in 0..side {
            let (v, u) = (y as f32 + 0.5 - cy, x as f32 + 0.5 - cx);
            let inside = (v / ry).powi(2) + (u / rx).powi(2) <= 1.0;
            // Noise is drawn for every pixel so the stream does not depend on the mask.
            let jitter = [
                shape_rng.gen_range(-LESION_NOISE..=LESION_NOISE),
                shape_rng.gen_range(-LESION_NOISE..=LESION_NOISE),
                shape_rng.gen_range(-LESION_NOISE..=LESION_NOISE),
            ];
            if !inside {
                continue;
            }
            let color = if texture_bit(label, u, v, phase, half_period) {
                LESION_LIGHT
            } else {
                LESION_DARK
            };
            let p = y * side + x;
            alpha[p] = 1.0;
            for c in 0..3 {
                data[c * plane + p] = (color[c] + jitter[c]).clamp(0.0, 1.0);
            }
        }
    }
    (
        Image::from_parts(side, side, data),
        Mask::new(side, side, alpha).expect("mask shape"),
    )
}

fn texture_bit(label: usize, u: f32, v: f32, phase: f32, half_period: f32) -> bool {
    let band = |t: f32| ((t + phase) / half_period).floor().rem_euclid(2.0) == 0.0;
    match label % CLASS_ASPECT.len() {
        0 => band(v),
        1 => band(u),
        2 => band(u) ^ band(v),
        3 => band((u + v) * std::f32::consts::FRAC_1_SQRT_2),
        _ => band((u * u + v * v).sqrt()),
    }
}

/// Recovers the tone group of an image by thresholding background luminance
/// halfway between adjacent palette tones. With a mask the background is the
/// mean over off-mask pixels, otherwise the median over all pixels.
pub fn tone_oracle(img: &Image, mask: Option<&Mask>, palette: &Palette) -> usize {
    let lum = img.luminance();
    let level = match mask {
        Some(m) => {
            let (sum, n) = lum
                .iter()
                .zip(m.alpha())
                .filter(|(_, a)| **a < 0.5)
                .fold((0.0f64, 0usize), |(s, n), (l, _)| (s + *l as f64, n + 1));
            if n == 0 {
                median(lum)
            } else {
                (sum / n as f64) as f32
            }
        }
        None => median(lum),
    };
    let refs = palette.luminances();
    refs.iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - level)
                .abs()
                .partial_cmp(&(b.1 - level).abs())
                .expect("finite luminance")
        })
        .map(|(g, _)| g)
        .expect("non-empty palette")
}

fn median(mut v: Vec<f32>) -> f32 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite"));
    *m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(counts: Vec<usize>, rho: f64) -> SynthConfig {
        SynthConfig {
            n_classes: 5,
            n_groups: counts.len(),
            counts,
            side: 16,
            rho,
            seed: 11,
        }
    }

    #[test]
    fn default_palette_is_valid_and_darkening() {
        let p = Palette::default();
        p.validate().unwrap();
        assert_eq!(p.len(), 6);
        Palette::ramp(3).validate().unwrap();
        Palette::ramp(11).validate().unwrap();
    }

    #[test]
    fn palette_must_darken() {
        let mut p = Palette::default();
        p.colors.swap(1, 2);
        assert!(p.validate().is_err());
    }

    #[test]
    fn counts_fix_tone() {
        let d = synth_generate(&cfg(vec![0, 0, 0, 0, 0, 10], 0.3)).unwrap();
        assert_eq!(d.len(), 10);
        assert!(d.samples().iter().all(|s| s.tone == 5));
    }

    #[test]
    fn same_seed_same_pixels() {
        let c = cfg(vec![3, 2, 4, 1, 0, 2], 0.5);
        let a = synth_generate(&c).unwrap();
        let b = synth_generate(&c).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            let xb: Vec<u32> = x.image.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.image.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn rho_one_ties_labels_to_tone() {
        let c = cfg(vec![5; 6], 1.0);
        let d = synth_generate(&c).unwrap();
        assert!(d
            .samples()
            .iter()
            .all(|s| s.label == c.associated_class(s.tone)));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(synth_generate(&cfg(vec![0; 6], 0.0)).is_err());
        assert!(synth_generate(&cfg(vec![1; 6], 1.5)).is_err());
        assert!(synth_generate(&cfg(vec![1], 0.0)).is_err());
        let mut c = cfg(vec![1; 6], 0.0);
        c.n_classes = 1;
        assert!(synth_generate(&c).is_err());
        c.n_classes = 3;
        c.counts = vec![1; 5];
        assert!(synth_generate(&c).is_err());
    }

    #[test]
    fn mask_depends_on_shape_only_background_on_tone_only() {
        let p = Palette::default();
        for label in 0..5 {
            let (img_a, mask_a) = render_sample(label, 0, 77, 88, &p, 32);
            let (img_b, mask_b) = render_sample(label, 4, 77, 88, &p, 32);
            assert_eq!(mask_a, mask_b);
            for (i, a) in mask_a.alpha().iter().enumerate() {
                for c in 0..3 {
                    let (va, vb) = (img_a.data()[c * 1024 + i], img_b.data()[c * 1024 + i]);
                    if *a == 1.0 {
                        assert_eq!(va, vb);
                    } else {
                        assert_ne!(va, vb);
                    }
                }
            }
            // Background pixels do not move when only the label changes.
            let (img_c, mask_c) = render_sample((label + 1) % 5, 0, 77, 88, &p, 32);
            for (i, (a, b)) in mask_a.alpha().iter().zip(mask_c.alpha()).enumerate() {
                if *a == 0.0 && *b == 0.0 {
                    assert_eq!(img_a.data()[i], img_c.data()[i]);
                }
            }
        }
    }

    #[test]
    fn lesion_covers_a_minority_of_pixels() {
        let p = Palette::default();
        for i in 0..50 {
            let (_, m) = render_sample(i % 5, 0, i as u64, 0, &p, 32);
            let cov = m.coverage();
            assert!(cov > 0.03 && cov < 0.3, "coverage {cov}");
        }
    }

    #[test]
    fn oracle_recovers_every_tone() {
        let d = synth_generate(&cfg(vec![40; 6], 0.0)).unwrap();
        let p = Palette::default();
        for s in d.samples() {
            assert_eq!(tone_oracle(&s.image, s.mask.as_ref(), &p), s.tone);
            assert_eq!(tone_oracle(&s.image, None, &p), s.tone);
        }
    }
}

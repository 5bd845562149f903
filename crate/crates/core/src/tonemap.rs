//! Tone transformers: maps `G(x, z, z')` that move an image from tone group
//! `z` to tone group `z'` while leaving the lesion content alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::{Image, Mask, Palette};
use crate::error::{Error, Result};

/// The contract a tone transformer satisfies. A learned generator can
/// implement this in place of the parametric remap below.
pub trait ToneTransform: Send + Sync {
    fn n_groups(&self) -> usize;

    fn method(&self) -> &'static str;

    /// Maps `x` (values in [0,1], tone group `z`) to group `z_target`.
    /// Pixels with mask weight 1 are kept; without a mask every pixel is remapped.
    fn transform(&self, x: &Image, z: usize, z_target: usize, mask: Option<&Mask>)
        -> Result<Image>;
}

fn check_groups(z: usize, z_target: usize, n: usize) -> Result<()> {
    for g in [z, z_target] {
        if g >= n {
            return Err(Error::Domain(format!(
                "tone group {g} outside [0, {n})"
            )));
        }
    }
    Ok(())
}

/// Per-channel background statistics of one tone group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneStats {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

/// Per-channel affine remap between tone statistics:
/// `v' = (v - mean_z) * std_z' / std_z + mean_z'`, blended with the original
/// by the lesion mask and clamped to [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineToneMap {
    stats: Vec<ToneStats>,
}

impl AffineToneMap {
    pub fn new(stats: Vec<ToneStats>) -> Result<Self> {
        if stats.len() < 2 {
            return Err(Error::Config("tone map needs at least 2 groups".into()));
        }
        for s in &stats {
            if s.std.iter().any(|v| !(*v > 0.0)) || s.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("invalid tone statistics {s:?}")));
            }
        }
        Ok(Self { stats })
    }

    /// Statistics of the palette's backgrounds. A zero-noise palette gets a
    /// unit spread so the remap reduces to a mean shift.
    pub fn from_palette(palette: &Palette) -> Result<Self> {
        palette.validate()?;
        let std = if palette.noise > 0.0 {
            palette.noise_std()
        } else {
            1.0
        };
        Self::new(
            palette
                .colors
                .iter()
                .map(|c| ToneStats {
                    mean: *c,
                    std: [std; 3],
                })
                .collect(),
        )
    }

    pub fn stats(&self) -> &[ToneStats] {
        &self.stats
    }
}

impl ToneTransform for AffineToneMap {
    fn n_groups(&self) -> usize {
        self.stats.len()
    }

    fn method(&self) -> &'static str {
        "affine"
    }

    fn transform(
        &self,
        x: &Image,
        z: usize,
        z_target: usize,
        mask: Option<&Mask>,
    ) -> Result<Image> {
        check_groups(z, z_target, self.stats.len())?;
        if z == z_target {
            return Ok(x.clone());
        }
        let plane = x.height() * x.width();
        if let Some(m) = mask {
            if m.alpha().len() != plane {
                return Err(Error::Internal("mask does not match image".into()));
            }
        }
        let (from, to) = (self.stats[z], self.stats[z_target]);
        let mut out = x.clone();
        for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let scale = to.std[c] / from.std[c];
            let (m_from, m_to) = (from.mean[c], to.mean[c]);
            for (p, v) in chunk.iter_mut().enumerate() {
                let alpha = mask.map_or(0.0, |m| m.alpha()[p]);
                if alpha >= 1.0 {
                    continue;
                }
                let remapped = ((*v - m_from) * scale + m_to).clamp(0.0, 1.0);
                *v = if alpha <= 0.0 {
                    remapped
                } else {
                    (alpha * *v + (1.0 - alpha) * remapped).clamp(0.0, 1.0)
                };
            }
        }
        Ok(out)
    }
}

/// `G(x, z, z') = x` for every pair.
#[derive(Debug, Clone, Copy)]
pub struct IdentityToneMap {
    pub n_groups: usize,
}

impl ToneTransform for IdentityToneMap {
    fn n_groups(&self) -> usize {
        self.n_groups
    }

    fn method(&self) -> &'static str {
        "identity"
    }

    fn transform(&self, x: &Image, z: usize, z_target: usize, _: Option<&Mask>) -> Result<Image> {
        check_groups(z, z_target, self.n_groups)?;
        Ok(x.clone())
    }
}

/// Uniform draw over the `n_groups - 1` groups other than `z`.
pub fn random_target<R: Rng + ?Sized>(z: usize, n_groups: usize, rng: &mut R) -> Result<usize> {
    if n_groups < 2 {
        return Err(Error::Config(format!(
            "need at least 2 tone groups to pick a target, got {n_groups}"
        )));
    }
    if z >= n_groups {
        return Err(Error::Domain(format!("tone group {z} outside [0, {n_groups})")));
    }
    let r = rng.gen_range(0..n_groups - 1);
    Ok(if r >= z { r + 1 } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{synth_generate, tone_oracle, SynthConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synth(n: usize, seed: u64) -> crate::Dataset {
        synth_generate(&SynthConfig {
            n_classes: 5,
            n_groups: 6,
            counts: vec![n; 6],
            side: 16,
            rho: 0.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn same_group_returns_input_bitwise() {
        let t = AffineToneMap::from_palette(&Palette::default()).unwrap();
        for s in synth(3, 1).samples() {
            let out = t.transform(&s.image, s.tone, s.tone, s.mask.as_ref()).unwrap();
            assert_eq!(out, s.image);
            let out = t.transform(&s.image, s.tone, s.tone, None).unwrap();
            assert_eq!(out, s.image);
        }
    }

    #[test]
    fn out_of_range_groups_are_domain_errors() {
        let t = AffineToneMap::from_palette(&Palette::default()).unwrap();
        let img = Image::filled(8, 8, [0.5; 3]).unwrap();
        assert!(matches!(t.transform(&img, 6, 0, None), Err(Error::Domain(_))));
        assert!(matches!(t.transform(&img, 0, 9, None), Err(Error::Domain(_))));
        let id = IdentityToneMap { n_groups: 2 };
        assert!(matches!(id.transform(&img, 0, 2, None), Err(Error::Domain(_))));
    }

    #[test]
    fn oracle_sees_target_tone_and_lesion_is_untouched() {
        let palette = Palette::default();
        let t = AffineToneMap::from_palette(&palette).unwrap();
        for s in synth(4, 2).samples() {
            let mask = s.mask.as_ref().unwrap();
            for target in 0..6 {
                let out = t.transform(&s.image, s.tone, target, Some(mask)).unwrap();
                assert_eq!(tone_oracle(&out, Some(mask), &palette), target);
                for (p, a) in mask.alpha().iter().enumerate() {
                    if *a == 1.0 {
                        for c in 0..3 {
                            let i = c * 256 + p;
                            assert_eq!(out.data()[i], s.image.data()[i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn without_mask_whole_image_moves() {
        let palette = Palette::default();
        let t = AffineToneMap::from_palette(&palette).unwrap();
        let img = Image::filled(8, 8, palette.colors[1]).unwrap();
        let out = t.transform(&img, 1, 3, None).unwrap();
        let want = palette.colors[3];
        for c in 0..3 {
            assert!(out.channel(c).iter().all(|v| (v - want[c]).abs() < 1e-6));
        }
    }

    #[test]
    fn forced_target_with_two_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(random_target(0, 2, &mut rng).unwrap(), 1);
            assert_eq!(random_target(1, 2, &mut rng).unwrap(), 0);
        }
        assert!(random_target(0, 1, &mut rng).is_err());
    }

    #[test]
    fn targets_uniform_over_other_groups() {
        // 60,000 draws over 5 groups: mean 12,000, sd sqrt(60000 * 0.2 * 0.8) ~ 98, 3 sd ~ 294 < 400.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[random_target(3, 6, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[3], 0);
        for g in [0, 1, 2, 4, 5] {
            assert!(counts[g].abs_diff(12_000) <= 400, "group {g}: {}", counts[g]);
        }
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_range(seed in any::<u64>(), z in 0usize..6, zt in 0usize..6) {
            let t = AffineToneMap::from_palette(&Palette::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..3 * 64).map(|_| rng.gen::<f32>()).collect();
            let img = Image::new(8, 8, data).unwrap();
            let out = t.transform(&img, z, zt, None).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn target_never_equals_source(seed in any::<u64>(), n in 2usize..9, z in 0usize..9) {
            prop_assume!(z < n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_target(z, n, &mut rng).unwrap();
            prop_assert!(t != z && t < n);
        }
    }
}

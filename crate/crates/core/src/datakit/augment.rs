use rand::Rng;

use super::image::{Image, Mask, CHANNELS};

pub const MAX_ROTATION_DEG: f32 = 15.0;

/// One draw of the training-time geometric augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub angle_deg: f32,
    pub flip: bool,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        angle_deg: 0.0,
        flip: false,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let angle_deg = rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let flip = rng.gen_bool(0.5);
        Self { angle_deg, flip }
    }

    /// Rotate (bilinear, replicated edges), then optionally mirror; clamps to [0,1].
    pub fn apply(&self, img: &Image) -> Image {
        let (h, w) = (img.height(), img.width());
        let mut out = if self.angle_deg == 0.0 {
            img.data().to_vec()
        } else {
            let plane = h * w;
            let mut out = vec![0.0; CHANNELS * plane];
            for c in 0..CHANNELS {
                rotate_plane(
                    img.channel(c),
                    &mut out[c * plane..(c + 1) * plane],
                    h,
                    w,
                    self.angle_deg,
                );
            }
            out
        };
        if self.flip {
            for row in out.chunks_mut(w) {
                row.reverse();
            }
        }
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        Image::from_parts(h, w, out)
    }

    /// Same geometry applied to a lesion mask, so it keeps tracking the pixels.
    pub fn apply_mask(&self, mask: &Mask) -> Mask {
        let (h, w) = (mask.height(), mask.width());
        let mut out = if self.angle_deg == 0.0 {
            mask.alpha().to_vec()
        } else {
            let mut out = vec![0.0; h * w];
            rotate_plane(mask.alpha(), &mut out, h, w, self.angle_deg);
            out
        };
        if self.flip {
            for row in out.chunks_mut(w) {
                row.reverse();
            }
        }
        Mask::new(h, w, out).expect("mask shape preserved")
    }
}

/// Random rotation in [-15°, 15°] followed by a horizontal flip with probability 0.5.
pub fn augment<R: Rng + ?Sized>(img: &Image, rng: &mut R) -> Image {
    Augmentation::sample(rng).apply(img)
}

fn rotate_plane(src: &[f32], dst: &mut [f32], h: usize, w: usize, angle_deg: f32) {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (h as f32 - 1.0) * 0.5;
    let cx = (w as f32 - 1.0) * 0.5;
    let (max_y, max_x) = ((h - 1) as f32, (w - 1) as f32);
    for y in 0..h {
        let dy = y as f32 - cy;
        for x in 0..w {
            let dx = x as f32 - cx;
            let sx = (cos * dx + sin * dy + cx).clamp(0.0, max_x);
            let sy = (-sin * dx + cos * dy + cy).clamp(0.0, max_y);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            dst[y * w + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
}

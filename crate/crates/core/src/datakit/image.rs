use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;
pub const MIN_SIDE: usize = 8;

/// A 3-channel floating-point image stored channel-major (`c * h * w`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::Config(format!(
                "image is {height}x{width}, both sides must be at least {MIN_SIDE}"
            )));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::Internal(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                CHANNELS * height * width
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite pixel at offset {pos}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let plane = height * width;
        let mut data = Vec::with_capacity(CHANNELS * plane);
        for v in rgb {
            data.extend(std::iter::repeat(v).take(plane));
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Builds an image from a buffer already known to be well formed.
    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), CHANNELS * height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Rec. 709 luminance of every pixel.
    pub fn luminance(&self) -> Vec<f32> {
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| luminance([*r, *g, *b]))
            .collect()
    }

    /// Column-reversed copy.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.data.clone();
        for row in out.chunks_mut(self.width) {
            row.reverse();
        }
        Image::from_parts(self.height, self.width, out)
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

pub fn luminance(rgb: [f32; 3]) -> f32 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// Per-pixel foreground weight in [0,1]; 1 marks lesion pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    alpha: Vec<f32>,
}

impl Mask {
    pub fn new(height: usize, width: usize, alpha: Vec<f32>) -> Result<Self> {
        if alpha.len() != height * width {
            return Err(Error::Internal(format!(
                "mask buffer has {} values, expected {}",
                alpha.len(),
                height * width
            )));
        }
        Ok(Self {
            height,
            width,
            alpha,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn alpha(&self) -> &[f32] {
        &self.alpha
    }

    pub fn coverage(&self) -> f32 {
        self.alpha.iter().sum::<f32>() / self.alpha.len() as f32
    }

    pub fn flip_horizontal(&self) -> Mask {
        let mut out = self.alpha.clone();
        for row in out.chunks_mut(self.width) {
            row.reverse();
        }
        Mask {
            height: self.height,
            width: self.width,
            alpha: out,
        }
    }
}

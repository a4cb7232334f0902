use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `H × W × C` image with intensities in `[0, 1]`, stored interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::Format(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(RasterImage { height, width, channels, pixels })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        for v in &mut pixels {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width, self.channels], self.pixels.clone()).expect("consistent extents")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[h, w, c] => Self::new(h, w, c, t.data().to_vec()),
            other => Err(Error::Format(format!("image tensor must be H×W×C, got {other:?}"))),
        }
    }

    /// Planar `[C, H, W]` copy of the pixels.
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pixels.len()];
        let plane = self.height * self.width;
        for (i, px) in self.pixels.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    pub fn from_planar(height: usize, width: usize, channels: usize, planar: &[f64]) -> Result<Self> {
        let plane = height * width;
        let mut pixels = vec![0.0; planar.len()];
        for c in 0..channels {
            for i in 0..plane {
                pixels[i * channels + c] = planar[c * plane + i];
            }
        }
        Self::from_clamped(height, width, channels, pixels)
    }

    /// Reflect-pads bottom and right edges up to multiples of `factor`.
    pub fn reflect_pad(&self, factor: usize) -> Result<RasterImage> {
        let ph = self.height.div_ceil(factor) * factor;
        let pw = self.width.div_ceil(factor) * factor;
        if ph == self.height && pw == self.width {
            return Ok(self.clone());
        }
        if ph - self.height >= self.height || pw - self.width >= self.width {
            return Err(Error::Config(format!(
                "{}x{} image too small to reflect-pad to a multiple of {factor}",
                self.height, self.width
            )));
        }
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * n - 2 - i };
        let mut pixels = Vec::with_capacity(ph * pw * self.channels);
        for y in 0..ph {
            for x in 0..pw {
                for c in 0..self.channels {
                    pixels.push(self.get(reflect(y, self.height), reflect(x, self.width), c));
                }
            }
        }
        RasterImage::new(ph, pw, self.channels, pixels)
    }

    pub fn crop(&self, height: usize, width: usize) -> Result<RasterImage> {
        if height > self.height || width > self.width {
            return Err(Error::Config("crop larger than image".into()));
        }
        let mut pixels = Vec::with_capacity(height * width * self.channels);
        for y in 0..height {
            let row = (y * self.width) * self.channels;
            pixels.extend_from_slice(&self.pixels[row..row + width * self.channels]);
        }
        RasterImage::new(height, width, self.channels, pixels)
    }
}

/// Stacks images into one planar `[N, C, H, W]` tensor.
pub fn batch_tensor(images: &[&RasterImage]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Config("empty image batch".into()))?;
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if (img.height, img.width, img.channels) != (h, w, c) {
            return Err(Error::Compatibility("images in a batch must share dimensions".into()));
        }
        data.extend(img.to_planar());
    }
    Ok(Tensor::new(vec![images.len(), c, h, w], data)?)
}

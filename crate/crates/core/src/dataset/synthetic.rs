//! Procedural multi-label scenes: each class owns a colour pair and a
//! texture, and every label of an image paints one rectangular region.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::RasterImage;
use crate::error::{Error, Result};
use crate::hash_head::LabelVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Texture {
    HorizontalStripes,
    VerticalStripes,
    DiagonalStripes,
    Checker,
    Blobs,
    RadialGradient,
    LinearGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStyle {
    pub texture: Texture,
    /// spatial frequency in cycles per 32 pixels
    pub frequency: f64,
    pub bright: [f64; 3],
    pub dark: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneConfig {
    pub size: usize,
    pub classes: usize,
    pub styles: Vec<ClassStyle>,
    /// relative weights for drawing 1, 2, 3, ... labels per image
    pub labels_per_image: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        SyntheticSceneConfig {
            size: 32,
            classes: 8,
            styles: default_styles(),
            labels_per_image: vec![0.55, 0.3, 0.15],
            noise: 0.02,
            seed: 0,
        }
    }
}

fn default_styles() -> Vec<ClassStyle> {
    use Texture::*;
    let s = |texture, frequency, bright, dark| ClassStyle { texture, frequency, bright, dark };
    vec![
        s(HorizontalStripes, 4.0, [0.90, 0.20, 0.20], [0.50, 0.08, 0.10]),
        s(VerticalStripes, 4.0, [0.25, 0.85, 0.25], [0.08, 0.42, 0.10]),
        s(Checker, 4.0, [0.25, 0.35, 0.95], [0.08, 0.10, 0.50]),
        s(Blobs, 3.0, [0.92, 0.90, 0.25], [0.52, 0.50, 0.08]),
        s(DiagonalStripes, 5.0, [0.25, 0.92, 0.92], [0.08, 0.50, 0.52]),
        s(RadialGradient, 2.0, [0.92, 0.25, 0.90], [0.50, 0.08, 0.48]),
        s(LinearGradient, 1.0, [0.96, 0.96, 0.96], [0.60, 0.60, 0.60]),
        s(Checker, 8.0, [0.98, 0.62, 0.22], [0.62, 0.32, 0.04]),
    ]
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.styles.len() < self.classes {
            return Err(Error::Config(format!(
                "{} classes need as many styles, have {}",
                self.classes,
                self.styles.len()
            )));
        }
        if self.labels_per_image.is_empty()
            || self.labels_per_image.len() > self.classes
            || self.labels_per_image.iter().any(|w| !(*w >= 0.0))
            || self.labels_per_image.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("labels-per-image weights must be non-negative, non-empty and ≤ C".into()));
        }
        if self.size < 8 || !(self.noise >= 0.0) {
            return Err(Error::Config("image size must be ≥ 8 and noise ≥ 0".into()));
        }
        Ok(())
    }

    /// Per-image generator derived from the master seed and the image id.
    pub fn image_rng(&self, id: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(id)))
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Clone, Copy, Debug)]
struct Region {
    y0: usize,
    x0: usize,
    y1: usize,
    x1: usize,
}

/// Splits the canvas into `k` non-overlapping rectangles.
fn layout(size: usize, k: usize, rng: &mut impl Rng) -> Vec<Region> {
    let mut regions = vec![Region { y0: 0, x0: 0, y1: size, x1: size }];
    while regions.len() < k {
        // split the largest region along its longer side
        let (idx, _) = regions
            .iter()
            .enumerate()
            .max_by_key(|(i, r)| ((r.y1 - r.y0) * (r.x1 - r.x0), usize::MAX - i))
            .unwrap();
        let r = regions.remove(idx);
        let (h, w) = (r.y1 - r.y0, r.x1 - r.x0);
        let vertical = if h == w { rng.random_bool(0.5) } else { w > h };
        let span = if vertical { w } else { h };
        let cut = rng.random_range(span * 3 / 8..=span * 5 / 8);
        let (a, b) = if vertical {
            (Region { x1: r.x0 + cut, ..r }, Region { x0: r.x0 + cut, ..r })
        } else {
            (Region { y1: r.y0 + cut, ..r }, Region { y0: r.y0 + cut, ..r })
        };
        regions.insert(idx, b);
        regions.insert(idx, a);
    }
    regions
}

fn texture_value(style: &ClassStyle, size: usize, y: usize, x: usize, phase: (f64, f64)) -> f64 {
    use std::f64::consts::TAU;
    let scale = style.frequency / size as f64;
    let (fy, fx) = (y as f64 * scale + phase.0, x as f64 * scale + phase.1);
    let wave = |t: f64| 0.5 + 0.5 * (TAU * t).sin();
    match style.texture {
        Texture::HorizontalStripes => wave(fy),
        Texture::VerticalStripes => wave(fx),
        Texture::DiagonalStripes => wave((fy + fx) * std::f64::consts::FRAC_1_SQRT_2),
        Texture::Checker => {
            if ((fy * 2.0).floor() as i64 + (fx * 2.0).floor() as i64).rem_euclid(2) == 0 {
                1.0
            } else {
                0.0
            }
        }
        Texture::Blobs => wave(fy) * wave(fx),
        Texture::RadialGradient => {
            let cy = y as f64 / size as f64 - 0.5 - 0.2 * (phase.0 - 0.5);
            let cx = x as f64 / size as f64 - 0.5 - 0.2 * (phase.1 - 0.5);
            wave((cy * cy + cx * cx).sqrt() * style.frequency * 2.0)
        }
        Texture::LinearGradient => ((y + x) as f64 / (2 * size - 2) as f64 + phase.0 * 0.2).fract(),
    }
}

/// Draws one scene and its label vector; a class is labelled exactly when
/// its texture was painted somewhere in the image.
pub fn generate_scene(config: &SyntheticSceneConfig, rng: &mut impl Rng) -> Result<(RasterImage, LabelVector)> {
    config.validate()?;
    let total: f64 = config.labels_per_image.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    let mut k = config.labels_per_image.len();
    for (i, w) in config.labels_per_image.iter().enumerate() {
        if draw < *w {
            k = i + 1;
            break;
        }
        draw -= w;
    }
    let classes: Vec<usize> = sample(rng, config.classes, k).into_vec();
    let regions = layout(config.size, k, rng);

    let n = config.size;
    let mut pixels = vec![0.0; n * n * 3];
    for (&class, region) in classes.iter().zip(&regions) {
        let style = &config.styles[class];
        let phase = (rng.random::<f64>(), rng.random::<f64>());
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                let t = texture_value(style, n, y, x, phase);
                for c in 0..3 {
                    pixels[(y * n + x) * 3 + c] = style.dark[c] + t * (style.bright[c] - style.dark[c]);
                }
            }
        }
    }
    if config.noise > 0.0 {
        for v in &mut pixels {
            // sum of uniforms: cheap, bounded, roughly Gaussian
            let u: f64 = (0..3).map(|_| rng.random::<f64>() - 0.5).sum();
            *v += u * config.noise * 2.0;
        }
    }
    let image = RasterImage::from_clamped(n, n, 3, pixels)?;
    Ok((image, LabelVector::from_indices(config.classes, &classes)))
}

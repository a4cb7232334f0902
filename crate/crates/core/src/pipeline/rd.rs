use std::collections::BTreeMap;
use std::io::Write;

use super::compress::{encode_images, rounded};
use crate::codec::{distortion, psnr_from_mse, CodecModel, RasterImage};
use crate::entropy::encode_latent;
use crate::{Error, Result};

/// Measured rate and quality over a set of images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    pub bpp: f64,
    /// PSNR of the mean squared error over the set
    pub psnr: f64,
    pub mse: f64,
}

/// Real entropy coding: payload bits over pixels, PSNR of the reconstruction
/// decoded from the rounded latent.
pub fn measure(codec: &CodecModel, images: &[&RasterImage]) -> Result<RatePoint> {
    if images.is_empty() {
        return Err(Error::Config("no images to measure".into()));
    }
    let latents = encode_images(codec, images)?;
    let mut bits = 0u64;
    let mut pixels = 0u64;
    let mut mse = 0.0;
    for (img, lat) in images.iter().zip(&latents) {
        bits += encode_latent(codec, lat)?.payload_bits();
        pixels += img.pixel_count() as u64;
        mse += distortion(img, &codec.decode(&rounded(lat))?)?;
    }
    let mse = mse / images.len() as f64;
    Ok(RatePoint { bpp: bits as f64 / pixels as f64, psnr: psnr_from_mse(mse, 1.0), mse })
}

/// Uniform scalar quantization of the raw pixels, `round((x − ½)/Δ)`, with
/// the rate taken as the empirical entropy of each channel's symbols over
/// the whole set. No transform and no side information.
pub fn identity_baseline(images: &[&RasterImage], step: f64) -> Result<RatePoint> {
    if images.is_empty() || !(step > 0.0) {
        return Err(Error::Config("baseline needs images and a positive step".into()));
    }
    let channels = images[0].channels();
    let mut hist = vec![BTreeMap::<i64, u64>::new(); channels];
    let mut mse = 0.0;
    let mut pixels = 0u64;
    for img in images {
        if img.channels() != channels {
            return Err(Error::Compatibility("baseline images differ in channel count".into()));
        }
        let mut err = 0.0;
        for (i, &v) in img.pixels().iter().enumerate() {
            let s = ((v - 0.5) / step).round();
            *hist[i % channels].entry(s as i64).or_default() += 1;
            let r = (s * step + 0.5).clamp(0.0, 1.0);
            err += (v - r) * (v - r);
        }
        mse += err / img.pixels().len() as f64;
        pixels += img.pixel_count() as u64;
    }
    let bits: f64 = hist
        .iter()
        .map(|h| {
            let total: u64 = h.values().sum();
            h.values().map(|&c| -(c as f64) * (c as f64 / total as f64).log2()).sum::<f64>()
        })
        .sum();
    let mse = mse / images.len() as f64;
    Ok(RatePoint { bpp: bits / pixels as f64, psnr: psnr_from_mse(mse, 1.0), mse })
}

/// The baseline on a fixed geometric grid of steps from 1/256 to 2, sorted
/// by rate.
pub fn baseline_curve(images: &[&RasterImage]) -> Result<Vec<RatePoint>> {
    let mut pts: Vec<RatePoint> =
        (0..=36).map(|i| identity_baseline(images, 2f64.powf(-8.0 + i as f64 * 0.25))).collect::<Result<_>>()?;
    pts.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
    Ok(pts)
}

/// Baseline PSNR at `bpp`: linear between bracketing grid points of the
/// upper envelope (best PSNR at no more rate), held flat beyond the ends.
pub fn baseline_psnr_at(curve: &[RatePoint], bpp: f64) -> f64 {
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
    let mut hull: Vec<RatePoint> = Vec::new();
    for p in sorted {
        let best = hull.last().map_or(p.psnr, |l| l.psnr.max(p.psnr));
        match hull.last_mut() {
            Some(last) if last.bpp == p.bpp => last.psnr = best,
            _ => hull.push(RatePoint { psnr: best, ..p }),
        }
    }
    let Some(first) = hull.first() else { return f64::NAN };
    if bpp <= first.bpp {
        return first.psnr;
    }
    for w in hull.windows(2) {
        if bpp <= w[1].bpp {
            let t = (bpp - w[0].bpp) / (w[1].bpp - w[0].bpp);
            return w[0].psnr + t * (w[1].psnr - w[0].psnr);
        }
    }
    hull.last().unwrap().psnr
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdRow {
    pub lambda: f64,
    pub bpp: f64,
    pub psnr: f64,
}

pub const RD_HEADER: &str = "lambda,bpp,psnr";

pub fn sort_by_rate(rows: &mut [RdRow]) {
    rows.sort_by(|a, b| a.bpp.total_cmp(&b.bpp).then(a.lambda.total_cmp(&b.lambda)));
}

/// Higher rate never comes with lower PSNR.
pub fn is_monotone(rows: &[RdRow]) -> bool {
    let mut sorted = rows.to_vec();
    sort_by_rate(&mut sorted);
    sorted.windows(2).all(|w| w[1].psnr >= w[0].psnr || w[1].bpp == w[0].bpp)
}

/// Rows sorted by bpp.
pub fn write_rd_csv(out: &mut impl Write, rows: &[RdRow]) -> std::io::Result<()> {
    let mut sorted = rows.to_vec();
    sort_by_rate(&mut sorted);
    writeln!(out, "{RD_HEADER}")?;
    for r in &sorted {
        writeln!(out, "{},{:.6},{:.4}", r.lambda, r.bpp, r.psnr)?;
    }
    Ok(())
}

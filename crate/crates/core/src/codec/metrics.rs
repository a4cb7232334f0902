use super::RasterImage;
use crate::error::{Error, Result};

/// Mean squared error over every pixel value.
pub fn distortion(x: &RasterImage, x_hat: &RasterImage) -> Result<f64> {
    same_dims(x, x_hat)?;
    let n = x.pixels().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sse: f64 = x.pixels().iter().zip(x_hat.pixels()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / n as f64)
}

/// `10·log10(peak² / MSE)`; `f64::INFINITY` marks identical images.
pub fn psnr(x: &RasterImage, x_hat: &RasterImage, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be > 0, got {peak}")));
    }
    Ok(psnr_from_mse(distortion(x, x_hat)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn same_dims(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if (a.height(), a.width(), a.channels()) != (b.height(), b.width(), b.channels()) {
        return Err(Error::Compatibility(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images() {
        let x = RasterImage::filled(4, 4, 3, 0.3).unwrap();
        assert_eq!(distortion(&x, &x).unwrap(), 0.0);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let x = RasterImage::filled(4, 4, 3, 0.0).unwrap();
        let y = RasterImage::filled(4, 4, 3, 0.1).unwrap();
        assert!((distortion(&x, &y).unwrap() - 0.01).abs() < 1e-15);
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr_from_mse(1e-4, 1.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn random_pair_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w, c) = (5, 7, 3);
        let a: Vec<f64> = (0..h * w * c).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..h * w * c).map(|_| rng.random()).collect();
        let x = RasterImage::new(h, w, c, a).unwrap();
        let y = RasterImage::new(h, w, c, b).unwrap();
        let mut total = 0.0;
        for yy in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    let d = x.get(yy, xx, ch) - y.get(yy, xx, ch);
                    total += d * d;
                }
            }
        }
        assert!((distortion(&x, &y).unwrap() - total / (h * w * c) as f64).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes() {
        let x = RasterImage::filled(4, 4, 3, 0.0).unwrap();
        let y = RasterImage::filled(4, 2, 3, 0.0).unwrap();
        assert!(distortion(&x, &y).is_err());
        assert!(psnr(&x, &x, 0.0).is_err());
    }
}

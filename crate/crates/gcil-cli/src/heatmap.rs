//! Correlation-matrix PNG rendering: a symmetric diverging palette around
//! zero, upscaled so small matrices stay legible.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

const NEGATIVE: [f64; 3] = [33.0, 102.0, 172.0];
const POSITIVE: [f64; 3] = [178.0, 24.0, 43.0];
const NEUTRAL: [f64; 3] = [247.0, 247.0, 247.0];

fn blend(from: [f64; 3], to: [f64; 3], t: f64) -> Rgb<u8> {
    let c = |i: usize| (from[i] + (to[i] - from[i]) * t).round().clamp(0.0, 255.0) as u8;
    Rgb([c(0), c(1), c(2)])
}

fn color(v: f64) -> Rgb<u8> {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        blend(NEUTRAL, POSITIVE, v)
    } else {
        blend(NEUTRAL, NEGATIVE, -v)
    }
}

/// Writes `values` (d×d, entries in [−1, 1]) as a PNG at `path`.
pub fn render(values: &Array2<f64>, path: &Path) -> std::io::Result<()> {
    let (rows, cols) = values.dim();
    // Upscale toward ~512 px so a 6-dim fixture doesn't render as 6 pixels.
    let scale = (512 / rows.max(cols).max(1)).clamp(1, 64) as u32;
    let img = RgbImage::from_fn(
        cols as u32 * scale,
        rows as u32 * scale,
        |x, y| color(values[[(y / scale) as usize, (x / scale) as usize]]),
    );
    img.save(path)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_hit_the_palette_and_midpoint_is_neutral() {
        assert_eq!(color(1.0), Rgb([178, 24, 43]));
        assert_eq!(color(-1.0), Rgb([33, 102, 172]));
        assert_eq!(color(0.0), Rgb([247, 247, 247]));
    }

    #[test]
    fn out_of_range_values_saturate() {
        assert_eq!(color(5.0), color(1.0));
        assert_eq!(color(-5.0), color(-1.0));
    }

    #[test]
    fn small_matrices_upscale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let m = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 1.0 } else { -0.25 });
        render(&m, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.width(), 4 * 64);
        assert_eq!(img.height(), 4 * 64);
        // diagonal cell solid red, off-diagonal light blue
        assert_eq!(*img.get_pixel(0, 0), Rgb([178, 24, 43]));
        assert_eq!(*img.get_pixel(100, 0), color(-0.25));
    }
}

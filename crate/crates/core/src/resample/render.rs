//! Raster rendering of variance matrices and point clouds, written as PPM or PNG.

use std::io::Write;
use std::path::Path;

use super::VarianceMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::PointCloud;

const NEGATIVE: [f64; 3] = [0.0, 128.0, 0.0];
const ZERO: [f64; 3] = [255.0, 255.0, 255.0];
const MIDPOSITIVE: [f64; 3] = [255.0, 215.0, 0.0];
const POSITIVE: [f64; 3] = [200.0, 0.0, 0.0];

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] + (b[c] - a[c]) * t).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Diverging colour for `t` in [-1, 1]: green below zero, white at zero,
/// yellow then red above.
pub fn color_of(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    if t < 0.0 {
        lerp(ZERO, NEGATIVE, -t)
    } else if t <= 0.5 {
        lerp(ZERO, MIDPOSITIVE, t * 2.0)
    } else {
        lerp(MIDPOSITIVE, POSITIVE, (t - 0.5) * 2.0)
    }
}

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    fn filled(width: usize, height: usize, c: [u8; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![c; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

pub fn write_ppm(image: &Image, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&image.to_ppm()).map_err(|e| Error::io(path, e))
}

pub fn write_png(image: &Image, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = image.pixels.iter().flatten().copied().collect();
    enc.write_header()
        .and_then(|mut w| w.write_image_data(&data))
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Renders with a symmetric scale of +-max|value|. Element `(i, j)` is drawn at
/// column `i`, row `r - 1 - j`, so the origin sits bottom-left; each element
/// becomes a `scale x scale` block.
pub fn render<T: Scalar>(matrix: &VarianceMatrix<T>, scale: usize) -> Result<Image> {
    if scale == 0 {
        return Err(Error::invalid("scale must be >= 1"));
    }
    if matrix.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("matrix has non-finite values".into()));
    }
    let r = matrix.r;
    let max = matrix.max_abs().as_f64();
    let side = r * scale;
    let mut img = Image::filled(side, side, ZERO.map(|c| c as u8));
    for i in 0..r {
        for j in 0..r {
            let t = if max > 0.0 { matrix.get(i, j).as_f64() / max } else { 0.0 };
            let c = color_of(t);
            let row0 = (r - 1 - j) * scale;
            for y in row0..row0 + scale {
                for x in i * scale..(i + 1) * scale {
                    img.pixels[y * side + x] = c;
                }
            }
        }
    }
    Ok(img)
}

/// Scatter plot of a point cloud on a `side x side` canvas with the same axes
/// and colour scale as [`render`].
pub fn render_scatter<T: Scalar>(cloud: &PointCloud<T>, side: usize) -> Result<Image> {
    if side < 2 {
        return Err(Error::invalid("scatter side must be >= 2"));
    }
    let mut img = Image::filled(side, side, [255, 255, 255]);
    let d_max = cloud.d_max.as_f64();
    if cloud.is_empty() || d_max <= 0.0 {
        return Ok(img);
    }
    let max = cloud.points.iter().fold(0.0f64, |m, p| m.max(p[2].as_f64().abs()));
    let to_px = |d: f64| ((d / d_max) * (side - 1) as f64).round().clamp(0.0, (side - 1) as f64) as usize;
    for p in &cloud.points {
        let (x, y) = (to_px(p[0].as_f64()), side - 1 - to_px(p[1].as_f64()));
        let t = if max > 0.0 { p[2].as_f64() / max } else { 0.0 };
        // Zero-valued points would vanish on white; draw them grey.
        let c = if t == 0.0 { [128, 128, 128] } else { color_of(t) };
        for (dx, dy) in [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (px, py) = (x as i64 + dx, y as i64 + dy);
            if (0..side as i64).contains(&px) && (0..side as i64).contains(&py) {
                img.pixels[py as usize * side + px as usize] = c;
            }
        }
    }
    Ok(img)
}

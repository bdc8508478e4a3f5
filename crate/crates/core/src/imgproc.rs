//! Minimal raster-image operations backing the augmentations: HSV conversion
//! and jitter, flips, rotations, alpha blending, patch pasting, and bilinear
//! resize. Rasters are 8-bit, 3-channel RGB throughout the toolkit.
//!
//! Every operation takes its inputs by reference and returns a fresh raster;
//! wherever a float becomes an 8-bit sample, round-half-up quantization is
//! used so results are bit-exact and independent of parallelism degree.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{DetlabError, Result};
use crate::geom::{CanvasSize, GeomTransform, PixelRect};

/// Fill color for pixels sampled outside the source during arbitrary-angle
/// rotation (conventional letterbox gray).
pub const ROTATE_FILL: [u8; 3] = [114, 114, 114];

// Row count above which per-pixel operations parallelize by row bands.
const PAR_ROW_THRESHOLD: usize = 64;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    /// Build from raw row-major RGB samples; `data.len()` must equal
    /// `width * height * 3`.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(DetlabError::InvalidRaster(format!(
                "expected {} samples for {}x{}x3, got {}",
                expected,
                width,
                height,
                data.len()
            )));
        }
        if width == 0 || height == 0 {
            return Err(DetlabError::InvalidRaster("empty raster".to_string()));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    /// Solid-color raster.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Raster::from_raw(width, height, data)
    }

    /// Build per pixel from a function of `(x, y)`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Raster::from_raw(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn canvas(&self) -> CanvasSize {
        CanvasSize::new(self.width, self.height).expect("raster dimensions are non-zero")
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Decode a PNG or JPEG file.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| DetlabError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        Raster::from_raw(img.width(), img.height(), img.into_raw())
    }

    /// Encode as PNG (lossless; the toolkit's canonical on-disk format).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("dimensions validated at construction");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| DetlabError::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Round-half-up quantization of a non-negative float to an 8-bit sample.
#[inline]
pub fn quantize_u8(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Multiplicative HSV jitter gains. A gain of 0 leaves the corresponding
/// channel untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvGains {
    pub h_gain: f64,
    pub s_gain: f64,
    pub v_gain: f64,
}

impl Default for HsvGains {
    fn default() -> Self {
        HsvGains {
            h_gain: 0.015,
            s_gain: 0.7,
            v_gain: 0.4,
        }
    }
}

impl HsvGains {
    pub fn zero() -> Self {
        HsvGains {
            h_gain: 0.0,
            s_gain: 0.0,
            v_gain: 0.0,
        }
    }
}

/// Hexcone RGB -> HSV conversion of one 8-bit pixel.
///
/// Returns hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
/// Hue of achromatic pixels is 0 by convention.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let v = max;
    let s = if max == 0.0 { 0.0 } else { chroma / max };
    let h = if chroma == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / chroma)
    } else if max == g {
        60.0 * (2.0 + (b - r) / chroma)
    } else {
        60.0 * (4.0 + (r - g) / chroma)
    };
    ((h + 360.0) % 360.0, s, v)
}

/// Inverse hexcone conversion with round-half-up quantization to 8 bits.
///
/// `h` in degrees (wrapped into `[0, 360)`), `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [
        quantize_u8((r + m) * 255.0),
        quantize_u8((g + m) * 255.0),
        quantize_u8((b + m) * 255.0),
    ]
}

/// Apply one multiplicative HSV factor triple to every pixel.
///
/// Hue is scaled as a fraction of a turn and wrapped; saturation and value
/// are clamped to `[0, 1]`. Factors of exactly 1 on all three channels make
/// this the byte-exact identity (the round trip is skipped).
pub fn hsv_apply_factors(img: &Raster, f_h: f64, f_s: f64, f_v: f64) -> Raster {
    if f_h == 1.0 && f_s == 1.0 && f_v == 1.0 {
        return img.clone();
    }
    let width = img.width as usize;
    let mut out = vec![0u8; img.data.len()];
    let apply_row = |(dst_row, src_row): (&mut [u8], &[u8])| {
        for (dst, src) in dst_row.chunks_exact_mut(3).zip(src_row.chunks_exact(3)) {
            let (h, s, v) = rgb_to_hsv([src[0], src[1], src[2]]);
            let h = ((h / 360.0 * f_h).rem_euclid(1.0)) * 360.0;
            let s = (s * f_s).clamp(0.0, 1.0);
            let v = (v * f_v).clamp(0.0, 1.0);
            dst.copy_from_slice(&hsv_to_rgb(h, s, v));
        }
    };
    if img.height as usize >= PAR_ROW_THRESHOLD {
        out.par_chunks_mut(width * 3)
            .zip(img.data.par_chunks(width * 3))
            .for_each(apply_row);
    } else {
        out.chunks_mut(width * 3)
            .zip(img.data.chunks(width * 3))
            .for_each(apply_row);
    }
    Raster {
        width: img.width,
        height: img.height,
        data: out,
    }
}

/// Jitter hue, saturation, and value with one random factor triple shared by
/// all pixels: each factor is `1 + u * gain` with `u` uniform in `[-1, 1]`.
pub fn hsv_jitter(img: &Raster, gains: &HsvGains, rng: &mut impl rand::Rng) -> Raster {
    let u_h: f64 = rng.gen_range(-1.0..=1.0);
    let u_s: f64 = rng.gen_range(-1.0..=1.0);
    let u_v: f64 = rng.gen_range(-1.0..=1.0);
    hsv_apply_factors(
        img,
        1.0 + u_h * gains.h_gain,
        1.0 + u_s * gains.s_gain,
        1.0 + u_v * gains.v_gain,
    )
}

/// Mirror axis for [`flip_raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

/// Mirror the raster: pixel `(x, y)` maps to `(width-1-x, y)` for the
/// horizontal axis, `(x, height-1-y)` for the vertical one.
pub fn flip_raster(img: &Raster, axis: FlipAxis) -> Raster {
    let (w, h) = (img.width, img.height);
    let mut out = img.clone();
    match axis {
        FlipAxis::Horizontal => {
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(x, y, img.pixel(w - 1 - x, y));
                }
            }
        }
        FlipAxis::Vertical => {
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(x, y, img.pixel(x, h - 1 - y));
                }
            }
        }
    }
    out
}

/// Rotate the raster.
///
/// 90-degree multiples are exact pixel permutations (canvas transposes for
/// 90/270). Arbitrary angles rotate clockwise about the image center with
/// bilinear sampling and [`ROTATE_FILL`] outside the source, keeping the
/// original canvas size. Flip kinds are accepted for completeness and
/// delegate to [`flip_raster`].
pub fn rotate_raster(img: &Raster, t: GeomTransform) -> Raster {
    match t {
        GeomTransform::HorizontalFlip => flip_raster(img, FlipAxis::Horizontal),
        GeomTransform::VerticalFlip => flip_raster(img, FlipAxis::Vertical),
        GeomTransform::Rotate90Cw => {
            let (w, h) = (img.width, img.height);
            let mut out = Raster::filled(h, w, [0, 0, 0]).expect("non-empty");
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(h - 1 - y, x, img.pixel(x, y));
                }
            }
            out
        }
        GeomTransform::Rotate270Cw => {
            let (w, h) = (img.width, img.height);
            let mut out = Raster::filled(h, w, [0, 0, 0]).expect("non-empty");
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(y, w - 1 - x, img.pixel(x, y));
                }
            }
            out
        }
        GeomTransform::Rotate180 => {
            let (w, h) = (img.width, img.height);
            let mut out = img.clone();
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(w - 1 - x, h - 1 - y, img.pixel(x, y));
                }
            }
            out
        }
        GeomTransform::RotateArbitrary(angle) => rotate_bilinear(img, angle),
    }
}

fn rotate_bilinear(img: &Raster, angle_deg: f64) -> Raster {
    let (w, h) = (img.width as usize, img.height as usize);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let rad = angle_deg.to_radians();
    // Destination pixels pull from the source via the inverse rotation.
    let (sin, cos) = ((-rad).sin(), (-rad).cos());
    let mut out = vec![0u8; img.data.len()];
    let fill_row = |(dy, dst_row): (usize, &mut [u8])| {
        for (dx, dst) in dst_row.chunks_exact_mut(3).enumerate() {
            let px = dx as f64 + 0.5 - cx;
            let py = dy as f64 + 0.5 - cy;
            let sx = cx + px * cos - py * sin;
            let sy = cy + px * sin + py * cos;
            dst.copy_from_slice(&sample_bilinear(img, sx, sy));
        }
    };
    if h >= PAR_ROW_THRESHOLD {
        out.par_chunks_mut(w * 3).enumerate().for_each(fill_row);
    } else {
        out.chunks_mut(w * 3).enumerate().for_each(fill_row);
    }
    Raster {
        width: img.width,
        height: img.height,
        data: out,
    }
}

// Bilinear sample at continuous pixel coordinates (pixel centers at
// half-integers); out-of-bounds taps use the fill color.
fn sample_bilinear(img: &Raster, sx: f64, sy: f64) -> [u8; 3] {
    let u = sx - 0.5;
    let v = sy - 0.5;
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let tap = |x: i64, y: i64| -> [f64; 3] {
        if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
            [
                ROTATE_FILL[0] as f64,
                ROTATE_FILL[1] as f64,
                ROTATE_FILL[2] as f64,
            ]
        } else {
            let p = img.pixel(x as u32, y as u32);
            [p[0] as f64, p[1] as f64, p[2] as f64]
        }
    };
    let (p00, p10, p01, p11) = (tap(x0, y0), tap(x0 + 1, y0), tap(x0, y0 + 1), tap(x0 + 1, y0 + 1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = quantize_u8(top * (1.0 - fy) + bot * fy);
    }
    out
}

/// Per-sample convex blend: `round(lambda * a + (1 - lambda) * b)`.
pub fn blend(a: &Raster, b: &Raster, lambda: f64) -> Result<Raster> {
    if a.width != b.width || a.height != b.height {
        return Err(DetlabError::RasterDimensionMismatch {
            expected: format!("{}x{}", a.width, a.height),
            actual: format!("{}x{}", b.width, b.height),
        });
    }
    let w1 = lambda;
    let w2 = 1.0 - lambda;
    let data = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(&sa, &sb)| quantize_u8(w1 * sa as f64 + w2 * sb as f64))
        .collect();
    Ok(Raster {
        width: a.width,
        height: a.height,
        data,
    })
}

/// Copy `src_rect` from `src` into `dst` with its top-left corner at
/// `dst_origin`; portions falling outside `dst` are silently cropped.
pub fn paste_patch(
    dst: &Raster,
    src: &Raster,
    src_rect: PixelRect,
    dst_origin: (i64, i64),
) -> Result<Raster> {
    if src_rect.is_empty() {
        return Err(DetlabError::EmptyPatch);
    }
    if src_rect.x0 < 0
        || src_rect.y0 < 0
        || src_rect.x1 > src.width as i64
        || src_rect.y1 > src.height as i64
    {
        return Err(DetlabError::InvalidRaster(format!(
            "source rectangle {:?} outside {}x{} source",
            src_rect, src.width, src.height
        )));
    }
    let mut out = dst.clone();
    let (ox, oy) = dst_origin;
    for sy in src_rect.y0..src_rect.y1 {
        let dy = oy + (sy - src_rect.y0);
        if dy < 0 || dy >= dst.height as i64 {
            continue;
        }
        for sx in src_rect.x0..src_rect.x1 {
            let dx = ox + (sx - src_rect.x0);
            if dx < 0 || dx >= dst.width as i64 {
                continue;
            }
            out.set_pixel(dx as u32, dy as u32, src.pixel(sx as u32, sy as u32));
        }
    }
    Ok(out)
}

/// Bilinear resize to `new_w` x `new_h` (used to match mixup partners to the
/// target's dimensions).
pub fn resize_bilinear(img: &Raster, new_w: u32, new_h: u32) -> Result<Raster> {
    if new_w == 0 || new_h == 0 {
        return Err(DetlabError::InvalidRaster("empty resize target".to_string()));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    let mut out = Raster::filled(new_w, new_h, [0, 0, 0])?;
    for y in 0..new_h {
        for x in 0..new_w {
            let u = (x as f64 + 0.5) * sx;
            let v = (y as f64 + 0.5) * sy;
            out.set_pixel(x, y, sample_clamped_bilinear(img, u, v));
        }
    }
    Ok(out)
}

// Like sample_bilinear but clamps taps to the image instead of filling.
fn sample_clamped_bilinear(img: &Raster, sx: f64, sy: f64) -> [u8; 3] {
    let u = sx - 0.5;
    let v = sy - 0.5;
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let tap = |x: i64, y: i64| -> [f64; 3] {
        let x = x.clamp(0, img.width as i64 - 1) as u32;
        let y = y.clamp(0, img.height as i64 - 1) as u32;
        let p = img.pixel(x, y);
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let (p00, p10, p01, p11) = (tap(x0, y0), tap(x0 + 1, y0), tap(x0, y0 + 1), tap(x0 + 1, y0 + 1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = quantize_u8(top * (1.0 - fy) + bot * fy);
    }
    out
}

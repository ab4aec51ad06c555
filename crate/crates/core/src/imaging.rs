//! Color images, their pure-quaternion encoding and reconstruction metrics.
//!
//! An RGB image becomes `X = R i + G j + B k` with a zero real plane. Binary
//! PPM (`P6`, maxval 255) is the canonical file format; PNG is available
//! behind the `png` feature.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{check_shape, Error, Result};
use crate::qmatrix::QMatrix;

/// An RGB image with channels stored as `height x width` real matrices,
/// every entry in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    r: DMatrix<f64>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn clamp_channel(c: DMatrix<f64>) -> DMatrix<f64> {
    // NaN maps to 0.
    c.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) })
}

impl ColorImage {
    /// Builds an image from three equally shaped channels, clamping entries
    /// to `[0, 255]`.
    pub fn new(r: DMatrix<f64>, g: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_shape("ColorImage::new", r.shape(), g.shape())?;
        check_shape("ColorImage::new", r.shape(), b.shape())?;
        let (height, width) = r.shape();
        if width == 0 || height == 0 {
            return Err(Error::Domain("image dimensions must be positive".into()));
        }
        Ok(ColorImage {
            width,
            height,
            r: clamp_channel(r),
            g: clamp_channel(g),
            b: clamp_channel(b),
        })
    }

    /// Interleaved `RGBRGB...` bytes in row-major pixel order.
    pub fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Domain(format!(
                "expected {} bytes for a {width}x{height} image, got {}",
                3 * width * height,
                data.len()
            )));
        }
        let channel = |c: usize| DMatrix::from_fn(height, width, |i, j| f64::from(data[3 * (i * width + j) + c]));
        Self::new(channel(0), channel(1), channel(2))
    }

    /// Interleaved bytes, each channel rounded to the nearest integer.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.width * self.height);
        for i in 0..self.height {
            for j in 0..self.width {
                for c in [&self.r, &self.g, &self.b] {
                    out.push(c[(i, j)].round() as u8);
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> [&DMatrix<f64>; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        [self.r[(row, col)], self.g[(row, col)], self.b[(row, col)]]
    }

    /// `0 + R i + G j + B k`.
    pub fn to_quaternion(&self) -> QMatrix {
        QMatrix::pure(self.r.clone(), self.g.clone(), self.b.clone()).expect("channel shapes agree")
    }

    /// Drops the real plane and clamps the imaginary planes to `[0, 255]`.
    pub fn from_quaternion(q: &QMatrix) -> Self {
        let (height, width) = q.shape();
        ColorImage {
            width,
            height,
            r: clamp_channel(q.plane(1).clone()),
            g: clamp_channel(q.plane(2).clone()),
            b: clamp_channel(q.plane(3).clone()),
        }
    }

    /// Nearest-neighbor resampling to `width x height`.
    pub fn downscale(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("target dimensions must be positive".into()));
        }
        let pick = |c: &DMatrix<f64>| {
            DMatrix::from_fn(height, width, |i, j| {
                let si = (i * self.height) / height;
                let sj = (j * self.width) / width;
                c[(si, sj)]
            })
        };
        Self::new(pick(&self.r), pick(&self.g), pick(&self.b))
    }
}

/// A deterministic smooth color test image: per channel, a linear ramp plus
/// a few Gaussian blobs, rescaled to `[0, 255]` and quantized to integers.
pub fn synthetic_image(seed: u64, width: usize, height: usize) -> Result<ColorImage> {
    use rand::{Rng, SeedableRng};
    if width == 0 || height == 0 {
        return Err(Error::Domain("image dimensions must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut channel = || {
        let (gx, gy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let blobs: Vec<[f64; 4]> = (0..4)
            .map(|_| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.5..2.0),
                ]
            })
            .collect();
        let raw = DMatrix::from_fn(height, width, |i, j| {
            let (y, x) = (i as f64 / height as f64, j as f64 / width as f64);
            let ramp = gx * x + gy * y;
            ramp + blobs
                .iter()
                .map(|&[cx, cy, r, a]| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * r * r)).exp())
                .sum::<f64>()
        });
        let (lo, hi) = (raw.min(), raw.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        raw.map(|v| (255.0 * (v - lo) / span).round())
    };
    let (r, g, b) = (channel(), channel(), channel());
    ColorImage::new(r, g, b)
}

/// Reconstruction quality of `Z` against the reference `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// Root of the mean squared entry modulus `|X_st - Z_st|`.
    pub mse: f64,
    /// `20 log10(255 / mse)`; `+inf` iff `mse == 0`.
    pub psnr_db: f64,
    /// `|Im X - Im Z|_F`.
    pub res: f64,
}

/// Quality of `z` against `x` with `psnr_db = 20 log10(255 / mse)` where
/// `mse` is the root-mean-square entry modulus of `x - z`.
pub fn psnr(x: &QMatrix, z: &QMatrix) -> Result<QualityReport> {
    let diff = x.try_sub(z)?;
    let count = (x.rows() * x.cols()) as f64;
    let mse = (diff.fro_norm_sqr() / count).sqrt();
    let psnr_db = if mse == 0.0 { f64::INFINITY } else { 20.0 * (255.0 / mse).log10() };
    Ok(QualityReport {
        mse,
        psnr_db,
        res: diff.imag().fro_norm(),
    })
}

/// Conventional `10 log10(255^2 / mean squared error)` over the three
/// imaginary planes, counting every channel sample separately.
pub fn psnr_conventional(x: &QMatrix, z: &QMatrix) -> Result<f64> {
    let diff = x.try_sub(z)?.imag();
    let mean_sq = diff.fro_norm_sqr() / (3 * x.rows() * x.cols()) as f64;
    Ok(if mean_sq == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mean_sq).log10()
    })
}

/// Serializes `img` as binary PPM (`P6`, maxval 255).
pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_rgb8());
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

/// Parses binary PPM. Only maxval 255 is accepted.
pub fn decode_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let mut h = Header { bytes, pos: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(h.err("missing P6 magic"));
    }
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = {
        h.skip_space();
        h.pos
    };
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: maxval_at,
            msg: format!("zero image dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "PPM maxval {maxval} at byte {maxval_at}; only 255 is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(h.err("expected whitespace after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| h.err("image dimensions overflow"))?;
    let raster = &bytes[h.pos..];
    if raster.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!("truncated raster: expected {need} bytes, found {}", raster.len()),
        });
    }
    if raster.len() > need {
        return Err(Error::Parse {
            offset: h.pos + need,
            msg: format!("{} trailing bytes after raster", raster.len() - need),
        });
    }
    ColorImage::from_rgb8(width, height, raster)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a PPM file, or a PNG file when built with the `png` feature.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    if is_png(path) {
        return load_png(path);
    }
    decode_ppm(&fs::read(path)?)
}

/// Saves as PPM, or as PNG for a `.png` path when built with the `png`
/// feature. Channel values are rounded to integers.
pub fn save_image(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        return save_png(img, path);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(img))?;
    Ok(())
}

#[cfg(feature = "png")]
fn load_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path)
        .map_err(|e| Error::Unsupported(format!("cannot decode {}: {e}", path.display())))?
        .to_rgb8();
    ColorImage::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
}

#[cfg(feature = "png")]
fn save_png(img: &ColorImage, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        &img.to_rgb8(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Unsupported(format!("cannot encode {}: {e}", path.display())))
}

#[cfg(not(feature = "png"))]
fn load_png(path: &Path) -> Result<ColorImage> {
    Err(Error::Unsupported(format!("{}: built without PNG support", path.display())))
}

#[cfg(not(feature = "png"))]
fn save_png(_img: &ColorImage, path: &Path) -> Result<()> {
    Err(Error::Unsupported(format!("{}: built without PNG support", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quaternion::Quaternion;
    use proptest::prelude::*;

    fn pixel_image(r: f64, g: f64, b: f64) -> ColorImage {
        let m = |v| DMatrix::from_element(1, 1, v);
        ColorImage::new(m(r), m(g), m(b)).unwrap()
    }

    #[test]
    fn encoding_is_pure() {
        let img = pixel_image(255.0, 0.0, 0.0);
        assert_eq!(img.to_quaternion().get(0, 0), Quaternion::new(0.0, 255.0, 0.0, 0.0));
        let black = ColorImage::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 3), DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(black.to_quaternion(), QMatrix::zeros(2, 3));
    }

    #[test]
    fn construction_clamps() {
        let img = pixel_image(-4.0, 300.0, f64::NAN);
        assert_eq!(img.pixel(0, 0), [0.0, 255.0, 0.0]);
    }

    #[test]
    fn from_quaternion_drops_real_and_clamps() {
        let mut q = QMatrix::zeros(1, 1);
        q.set(0, 0, Quaternion::new(7.0, -3.0, 300.0, 128.0));
        assert_eq!(ColorImage::from_quaternion(&q).pixel(0, 0), [0.0, 255.0, 128.0]);
    }

    #[test]
    fn psnr_examples() {
        let x = pixel_image(10.0, 20.0, 30.0).to_quaternion();
        let same = psnr(&x, &x).unwrap();
        assert_eq!(same.mse, 0.0);
        assert_eq!(same.psnr_db, f64::INFINITY);
        assert_eq!(same.res, 0.0);

        let z = pixel_image(10.0 + 255.0, 20.0, 30.0);
        // Unclamped difference of modulus 255.
        let mut zq = x.clone();
        zq.set(0, 0, Quaternion::new(0.0, 265.0, 20.0, 30.0));
        let r = psnr(&x, &zq).unwrap();
        assert_eq!(r.mse, 255.0);
        assert_eq!(r.psnr_db, 0.0);
        assert_eq!(z.pixel(0, 0)[0], 255.0);

        // 2x2 error of modulus 2.55 split across two planes: 1.53^2 + 2.04^2 = 2.55^2.
        let x = QMatrix::zeros(2, 2);
        let mut z = QMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                z.set(i, j, Quaternion::new(0.0, 1.53, 2.04, 0.0));
            }
        }
        let r = psnr(&x, &z).unwrap();
        assert!((r.mse - 2.55).abs() < 1e-12);
        assert!((r.psnr_db - 40.0).abs() < 1e-10);
        assert!((r.res - 5.1).abs() < 1e-12);
    }

    #[test]
    fn real_plane_counts_in_mse_not_res() {
        let x = QMatrix::zeros(1, 1);
        let mut z = QMatrix::zeros(1, 1);
        z.set(0, 0, Quaternion::new(3.0, 0.0, 0.0, 4.0));
        let r = psnr(&x, &z).unwrap();
        assert_eq!(r.mse, 5.0);
        assert_eq!(r.res, 4.0);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&QMatrix::zeros(2, 2), &QMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn psnr_monotone_in_mse() {
        let x = QMatrix::zeros(3, 3);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let e = 0.37 * f64::from(k);
            let z = QMatrix::from_real(DMatrix::from_element(3, 3, e));
            let r = psnr(&x, &z).unwrap();
            assert!(r.psnr_db < last);
            last = r.psnr_db;
        }
    }

    #[test]
    fn conventional_psnr() {
        let x = QMatrix::zeros(1, 1);
        let mut z = QMatrix::zeros(1, 1);
        z.set(0, 0, Quaternion::new(0.0, 2.55, 2.55, 2.55));
        assert!((psnr_conventional(&x, &z).unwrap() - 40.0).abs() < 1e-10);
    }

    #[test]
    fn ppm_single_pixel() {
        let img = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(img.pixel(0, 0), [255.0, 0.0, 0.0]);
        assert_eq!(encode_ppm(&img), b"P6\n1 1\n255\n\xff\x00\x00");
    }

    #[test]
    fn ppm_comments_are_skipped() {
        let img = decode_ppm(b"P6 # made by hand\n2 1\n# max\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.pixel(0, 1), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn ppm_errors_carry_offsets() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_ppm(b"P6\nx 1\n255\n"), Err(Error::Parse { offset: 3, .. })));
        let truncated = b"P6\n1 1\n255\n\x01";
        assert!(matches!(decode_ppm(truncated), Err(Error::Parse { offset: 12, .. })));
        assert!(matches!(decode_ppm(b"P6\n1 1\n255\n\x01\x02\x03\x04"), Err(Error::Parse { offset: 14, .. })));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::Unsupported(_))));
        assert!(matches!(decode_ppm(b"P6\n0 1\n255\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn downscale_nearest() {
        let r = DMatrix::from_fn(4, 4, |i, j| (4 * i + j) as f64);
        let img = ColorImage::new(r.clone(), r.clone(), r).unwrap();
        let small = img.downscale(2, 2).unwrap();
        assert_eq!(small.channels()[0], &DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 8.0, 10.0]));
        assert_eq!(img.downscale(4, 4).unwrap(), img);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ColorImage::from_rgb8(3, 2, &(0..18).map(|v| v * 13).collect::<Vec<u8>>()).unwrap();
        let path = dir.path().join("a.ppm");
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn synthetic_image_is_deterministic_and_in_range() {
        let a = synthetic_image(3, 16, 12).unwrap();
        assert_eq!((a.width(), a.height()), (16, 12));
        assert_eq!(a, synthetic_image(3, 16, 12).unwrap());
        assert_ne!(a, synthetic_image(4, 16, 12).unwrap());
        for c in a.channels() {
            assert_eq!(c.min(), 0.0);
            assert_eq!(c.max(), 255.0);
            assert!(c.iter().all(|v| v.fract() == 0.0));
        }
    }

    proptest! {
        #[test]
        fn ppm_round_trip(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let data: Vec<u8> = (0..3 * w * h).map(|k| (seed.wrapping_mul(k as u64 + 1) >> 13) as u8).collect();
            let img = ColorImage::from_rgb8(w, h, &data).unwrap();
            let bytes = encode_ppm(&img);
            let back = decode_ppm(&bytes).unwrap();
            prop_assert_eq!(back.to_rgb8(), data);
            prop_assert_eq!(encode_ppm(&back), bytes);
            prop_assert_eq!(ColorImage::from_quaternion(&img.to_quaternion()), img);
        }
    }
}

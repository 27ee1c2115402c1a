//! Dataset ingestion and generation.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NsmError, Result};
use crate::types::Dataset;

/// Magic number of an IDX file holding unsigned bytes in three dimensions.
// Generator streams, distinct from the ones training draws from the same seed.
const RING_STREAM: u64 = 3;
const STROKE_STREAM: u64 = 4;
const PATCH_STREAM: u64 = 5;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// A stack of 8-bit grayscale images, stored image-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    count: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl ImageSet {
    pub fn new(count: usize, rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        let expected = count
            .checked_mul(rows)
            .and_then(|v| v.checked_mul(cols))
            .ok_or_else(|| NsmError::InvalidArgument("image dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(NsmError::DimensionMismatch {
                what: "pixel payload length",
                expected,
                got: pixels.len(),
            });
        }
        Ok(ImageSet {
            count,
            rows,
            cols,
            pixels,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[index * size..(index + 1) * size]
    }

    /// The first `count` images (or all of them, if fewer).
    pub fn truncated(&self, count: usize) -> ImageSet {
        let count = count.min(self.count);
        ImageSet {
            count,
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..count * self.rows * self.cols].to_vec(),
        }
    }
}

/// Parses an IDX image file: big-endian magic `0x00000803`, then count,
/// rows and cols as big-endian `u32`, then the raw bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<ImageSet> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4-byte slice")))
            .ok_or_else(|| NsmError::Parse {
                offset: at,
                message: format!("truncated header: need 4 bytes at offset {at}, file has {}", bytes.len()),
            })
    };
    let magic = word(0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(NsmError::Parse {
            offset: 0,
            message: format!("wrong magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} (unsigned-byte images)"),
        });
    }
    let count = word(4)? as usize;
    let rows = word(8)? as usize;
    let cols = word(12)? as usize;
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| NsmError::Parse {
            offset: 4,
            message: format!("dimension overflow: {count} x {rows} x {cols}"),
        })?;
    let available = bytes.len() - 16;
    if available < payload {
        return Err(NsmError::Parse {
            offset: bytes.len(),
            message: format!("truncated payload: expected {payload} bytes after header, found {available}"),
        });
    }
    if available > payload {
        warn!("IDX file has {} trailing bytes", available - payload);
    }
    ImageSet::new(count, rows, cols, bytes[16..16 + payload].to_vec())
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<ImageSet> {
    parse_idx(&fs::read(path)?)
}

pub fn encode_idx(images: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [images.count, images.rows, images.cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx(images: &ImageSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_idx(images))?;
    Ok(())
}

/// Flattens each image row-major and multiplies by `scale`.
pub fn to_samples(images: &ImageSet, scale: f64) -> Result<Dataset> {
    if !(scale > 0.0) {
        return Err(NsmError::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    if images.count == 0 {
        return Err(NsmError::EmptyDataset);
    }
    let n = images.rows * images.cols;
    let data = images.pixels.iter().map(|&p| p as f64 * scale).collect();
    Dataset::new(Array2::from_shape_vec((images.count, n), data).expect("payload length checked"))
}

/// `count` square patches at uniformly random (image, row, col) offsets.
pub fn sample_patches(images: &ImageSet, patch: usize, count: usize, seed: u64) -> Result<Dataset> {
    if patch == 0 || patch > images.rows.min(images.cols) {
        return Err(NsmError::InvalidArgument(format!(
            "patch size {patch} does not fit {}x{} images",
            images.rows, images.cols
        )));
    }
    if images.count == 0 || count == 0 {
        return Err(NsmError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PATCH_STREAM);
    let mut out = Array2::<f64>::zeros((count, patch * patch));
    for mut row in out.axis_iter_mut(Axis(0)) {
        let img = images.image(rng.random_range(0..images.count));
        let r0 = rng.random_range(0..=images.rows - patch);
        let c0 = rng.random_range(0..=images.cols - patch);
        for r in 0..patch {
            for c in 0..patch {
                row[r * patch + c] = img[(r0 + r) * images.cols + c0 + c] as f64;
            }
        }
    }
    Dataset::new(out)
}

/// ZCA whitening: centers each dimension and applies `(C + eps I)^(-1/2)`
/// where `C` is the (1/T-normalized) sample covariance.
pub fn zca_whiten(data: &Dataset, epsilon: f64) -> Result<Dataset> {
    if !(epsilon >= 0.0) {
        return Err(NsmError::InvalidArgument(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let (t, n) = (data.len(), data.dim());
    if t <= n {
        warn!("whitening {t} samples of dimension {n}; covariance is rank deficient");
    }
    let x = data.as_matrix();
    let mean = x.mean_axis(Axis(0)).expect("dataset is non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / t as f64;
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, 10_000)
        .ok_or_else(|| NsmError::Eigen("covariance eigensolver did not converge".into()))?;
    let mut transform = Array2::<f64>::zeros((n, n));
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let shifted = lambda + epsilon;
        if !(shifted > 1e-12) {
            return Err(NsmError::Eigen(format!(
                "covariance eigenvalue {lambda:e} + epsilon is not positive; increase epsilon"
            )));
        }
        let s = 1.0 / shifted.sqrt();
        let q = eig.eigenvectors.column(idx);
        for i in 0..n {
            for j in 0..n {
                transform[[i, j]] += s * q[i] * q[j];
            }
        }
    }
    Dataset::new(centered.dot(&transform))
}

/// Circular distance between two angles in radians.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Angles `2 pi t / T` of the ring samples.
pub fn ring_angles(t: usize) -> Vec<f64> {
    (0..t).map(|i| 2.0 * PI * i as f64 / t as f64).collect()
}

/// A one-dimensional ring manifold embedded in `n` dimensions: sample `t`
/// has Gaussian bumps `exp(-d(theta_t, phi_i)^2 / (2 width^2))` around `n`
/// random center angles `phi_i`, normalized to unit length.
pub fn gen_ring_manifold(t: usize, n: usize, width: f64, seed: u64) -> Result<Dataset> {
    if t < 8 || n < 8 {
        return Err(NsmError::InvalidArgument(format!("ring needs T >= 8 and n >= 8, got T = {t}, n = {n}")));
    }
    if !(width > 0.0) {
        return Err(NsmError::InvalidArgument(format!("width must be positive, got {width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RING_STREAM);
    let centers: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut x = Array2::<f64>::zeros((t, n));
    for (theta, mut row) in ring_angles(t).into_iter().zip(x.axis_iter_mut(Axis(0))) {
        for (v, phi) in row.iter_mut().zip(&centers) {
            let d = circular_distance(theta, *phi);
            *v = (-d * d / (2.0 * width * width)).exp();
        }
    }
    unit_normalize(&Dataset::new(x)?)
}

/// Scales every sample to unit l2-norm.
pub fn unit_normalize(data: &Dataset) -> Result<Dataset> {
    let mut x = data.as_matrix().clone();
    for (index, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(NsmError::ZeroNormSample { index });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Dataset::new(x)
}

/// One sample per row, comma separated, no header.
pub fn write_dataset_csv<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for row in data.iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

// Digit skeletons as polylines in the unit square (x right, y down).
fn digit_strokes(digit: usize) -> Vec<Vec<(f64, f64)>> {
    let arc = |cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, n: usize| -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let a = from + (to - from) * i as f64 / n as f64;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    };
    match digit {
        0 => vec![arc(0.5, 0.5, 0.28, 0.4, 0.0, 2.0 * PI, 24)],
        1 => vec![vec![(0.38, 0.25), (0.55, 0.1), (0.55, 0.9)]],
        2 => {
            let mut top = arc(0.5, 0.32, 0.27, 0.22, PI, 2.2 * PI, 12);
            top.extend([(0.22, 0.9), (0.8, 0.9)]);
            vec![top]
        }
        3 => vec![
            arc(0.48, 0.3, 0.26, 0.2, -0.8 * PI, 0.5 * PI, 12),
            arc(0.48, 0.7, 0.28, 0.2, -0.5 * PI, 0.8 * PI, 12),
        ],
        4 => vec![vec![(0.62, 0.9), (0.62, 0.1), (0.2, 0.65), (0.82, 0.65)]],
        5 => {
            let mut s = vec![(0.78, 0.1), (0.3, 0.1), (0.27, 0.45)];
            s.extend(arc(0.48, 0.66, 0.28, 0.24, -0.75 * PI, 0.8 * PI, 14));
            vec![s]
        }
        6 => {
            let mut s = arc(0.62, 0.5, 0.36, 0.42, -0.6 * PI, -PI, 6);
            s.extend(arc(0.5, 0.68, 0.25, 0.22, PI, 3.0 * PI, 20));
            vec![s]
        }
        7 => vec![vec![(0.2, 0.1), (0.8, 0.1), (0.42, 0.9)]],
        8 => vec![
            arc(0.5, 0.3, 0.22, 0.19, 0.0, 2.0 * PI, 18),
            arc(0.5, 0.7, 0.27, 0.21, 0.0, 2.0 * PI, 18),
        ],
        _ => {
            let mut s = arc(0.5, 0.32, 0.25, 0.22, 0.0, 2.0 * PI, 20);
            s.extend([(0.74, 0.6), (0.6, 0.9)]);
            vec![s]
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + s * dx - p.0, a.1 + s * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Synthetic 28x28 handwritten-digit-like images: one of ten digit skeletons
/// under a random affine jitter, rendered as an anti-aliased pen stroke in
/// the central 20x20 box. Stand-in for an MNIST image file when none is
/// available.
pub fn gen_stroke_digits(count: usize, seed: u64) -> ImageSet {
    const SIDE: usize = 28;
    const BOX: f64 = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STROKE_STREAM);
    let mut pixels = vec![0u8; count * SIDE * SIDE];
    for img in pixels.chunks_exact_mut(SIDE * SIDE) {
        let digit = rng.random_range(0..10);
        let rot: f64 = rng.random_range(-0.25..0.25);
        let shear: f64 = rng.random_range(-0.2..0.2);
        let sx: f64 = rng.random_range(0.8..1.05);
        let sy: f64 = rng.random_range(0.85..1.05);
        let tx: f64 = rng.random_range(-1.5..1.5);
        let ty: f64 = rng.random_range(-1.5..1.5);
        let pen: f64 = rng.random_range(1.0..2.0);
        let (sin, cos) = rot.sin_cos();
        let strokes: Vec<Vec<(f64, f64)>> = digit_strokes(digit)
            .into_iter()
            .map(|s| {
                s.into_iter()
                    .map(|(x, y)| {
                        let (x, y) = (x - 0.5 + rng.random_range(-0.02..0.02), y - 0.5 + rng.random_range(-0.02..0.02));
                        let (x, y) = (sx * (x + shear * y), sy * y);
                        let (x, y) = (cos * x - sin * y, sin * x + cos * y);
                        (SIDE as f64 / 2.0 + tx + BOX * x, SIDE as f64 / 2.0 + ty + BOX * y)
                    })
                    .collect()
            })
            .collect();
        for r in 0..SIDE {
            for c in 0..SIDE {
                let p = (c as f64 + 0.5, r as f64 + 0.5);
                let d = strokes
                    .iter()
                    .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                    .fold(f64::INFINITY, f64::min);
                let ink = (pen - d + 0.5).clamp(0.0, 1.0);
                img[r * SIDE + c] = (ink * 255.0).round() as u8;
            }
        }
    }
    ImageSet::new(count, SIDE, SIDE, pixels).expect("sizes are consistent")
}

/// Per-dimension mean and covariance (1/T-normalized).
pub fn covariance(data: &Dataset) -> (Array1<f64>, Array2<f64>) {
    let x = data.as_matrix();
    let mean = x.mean_axis(Axis(0)).expect("dataset is non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / data.len() as f64;
    (mean, cov)
}

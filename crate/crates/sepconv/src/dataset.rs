//! Labeled image sets: deterministic splitting, a bundled synthetic digit
//! generator, and IDX / CSV readers and writers.
//!
//! IDX is the de-facto big-endian container used by the common
//! handwritten-digit corpora: `[0, 0, dtype, ndims]` magic, big-endian u32
//! dimension sizes, then raw bytes. The CSV fallback stores one sample per
//! row as `label, pixel0, pixel1, ...` (row-major, channel fastest) with an
//! optional `# rows cols channels` first line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::tensor::Tensor3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad IDX magic: expected {expected:#010x}, got {got:#010x}")]
    BadMagic { expected: u32, got: u32 },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("samples must share one shape: found {0}x{1}x{2} and {3}x{4}x{5}")]
    MixedShapes(usize, usize, usize, usize, usize, usize),
    #[error("CSV has no shape header; pass rows/cols/channels explicitly")]
    MissingShape,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("IDX export requires single-channel images, got {0} channels")]
    MultiChannelIdx(usize),
}

/// Uniformly shaped images with class labels in `0..class_count`.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Tensor3>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(images: Vec<Tensor3>, labels: Vec<usize>, class_count: usize) -> Result<Self, DatasetError> {
        if images.len() != labels.len() {
            return Err(DatasetError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = images.first() {
            let shape = (first.height(), first.width(), first.channels());
            for img in &images {
                let other = (img.height(), img.width(), img.channels());
                if other != shape {
                    return Err(DatasetError::MixedShapes(
                        shape.0, shape.1, shape.2, other.0, other.1, other.2,
                    ));
                }
            }
        }
        for &label in &labels {
            if label >= class_count {
                return Err(DatasetError::LabelRange {
                    label,
                    classes: class_count,
                });
            }
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &[Tensor3] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &Tensor3 {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images
            .first()
            .map(|t| (t.height(), t.width(), t.channels()))
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Deterministic shuffle-then-split. The two partitions are disjoint and
/// together contain every sample exactly once.
pub fn split_dataset(
    d: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if d.is_empty() {
        return Err(DatasetError::Empty);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let n = d.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut train_count = (n as f64 * fraction).round() as usize;
    if n >= 2 {
        train_count = train_count.clamp(1, n - 1);
    }
    let (train_idx, test_idx) = indices.split_at(train_count);
    Ok((d.subset(train_idx), d.subset(test_idx)))
}

/// 5x7 digit glyphs, `1` bits column-packed per row.
const GLYPHS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111], // 2
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

const CANVAS_H: usize = 14;
const CANVAS_W: usize = 20;
const GLYPH_H: usize = 11;
const GLYPH_W: usize = 8;

/// Balanced synthetic digit images on a 14x20 single-channel canvas.
///
/// Each sample is a glyph upsampled to 11x8, randomly rotated, sheared, and
/// shifted (rendered by inverse mapping), randomly dimmed, with Gaussian
/// pixel noise on top. Fully determined by `seed`.
pub fn synthetic_digits(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.15).expect("valid sigma");
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let digit = i % 10;
        let glyph = &GLYPHS[digit];
        let bit_at = |gy: isize, gx: isize| -> bool {
            if !(0..GLYPH_H as isize).contains(&gy) || !(0..GLYPH_W as isize).contains(&gx) {
                return false;
            }
            let src_row = gy as usize * 7 / GLYPH_H;
            let src_col = gx as usize * 5 / GLYPH_W;
            glyph[src_row] >> (4 - src_col) & 1 == 1
        };
        let center_y = 6.5 + rng.random_range(-1.0..=1.0);
        let center_x = 9.5 + rng.random_range(-3.0..=3.0);
        let angle: f64 = rng.random_range(-0.3..0.3);
        let shear: f64 = rng.random_range(-0.2..0.2);
        let intensity: f64 = rng.random_range(0.55..1.0);
        let (sin_a, cos_a) = angle.sin_cos();
        let mut img = Tensor3::zeros(CANVAS_H, CANVAS_W, 1);
        for y in 0..CANVAS_H {
            for x in 0..CANVAS_W {
                let v = y as f64 - center_y;
                let u = x as f64 - center_x - shear * v;
                let gx = cos_a * u + sin_a * v + GLYPH_W as f64 / 2.0;
                let gy = -sin_a * u + cos_a * v + GLYPH_H as f64 / 2.0;
                if bit_at(gy.floor() as isize, gx.floor() as isize) {
                    img.set(y, x, 0, intensity);
                }
            }
        }
        // Clutter strokes: straight segments in the digit's own intensity
        // range, so telling stroke layouts apart is what the filters must
        // learn, not brightness.
        let strokes = rng.random_range(1..=2);
        for _ in 0..strokes {
            let sy: f64 = rng.random_range(0.0..CANVAS_H as f64);
            let sx: f64 = rng.random_range(0.0..CANVAS_W as f64);
            let dir: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let len = rng.random_range(3..=6);
            let level: f64 = rng.random_range(0.55..1.0);
            let (dy, dx) = dir.sin_cos();
            for t in 0..len {
                let y = (sy + dy * t as f64).floor() as isize;
                let x = (sx + dx * t as f64).floor() as isize;
                if (0..CANVAS_H as isize).contains(&y) && (0..CANVAS_W as isize).contains(&x) {
                    img.set(y as usize, x as usize, 0, level);
                }
            }
        }
        for v in img.data_mut() {
            *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        images.push(img);
        labels.push(digit);
    }
    Dataset::new(images, labels, 10).expect("generator invariants")
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read) -> Result<u32, DatasetError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an IDX image/label file pair. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DatasetError> {
    let mut ir = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut ir)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&mut ir)? as usize;
    let rows = read_u32_be(&mut ir)? as usize;
    let cols = read_u32_be(&mut ir)? as usize;
    let mut raw = vec![0u8; count * rows * cols];
    ir.read_exact(&mut raw)?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lr)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let label_count = read_u32_be(&mut lr)? as usize;
    if label_count != count {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let mut raw_labels = vec![0u8; label_count];
    lr.read_exact(&mut raw_labels)?;

    let images = raw
        .chunks_exact(rows * cols)
        .map(|chunk| {
            Tensor3::new(
                rows,
                cols,
                1,
                chunk.iter().map(|&b| b as f64 / 255.0).collect(),
            )
            .expect("chunk length matches shape")
        })
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(images, labels, class_count)
}

/// Writes the dataset as an IDX image/label pair (single-channel only;
/// pixels are rounded to u8 over `[0, 1]`).
pub fn save_idx(d: &Dataset, images_path: &Path, labels_path: &Path) -> Result<(), DatasetError> {
    let (rows, cols, channels) = d.image_shape().ok_or(DatasetError::Empty)?;
    if channels != 1 {
        return Err(DatasetError::MultiChannelIdx(channels));
    }
    let mut iw = BufWriter::new(File::create(images_path)?);
    iw.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    iw.write_all(&(d.len() as u32).to_be_bytes())?;
    iw.write_all(&(rows as u32).to_be_bytes())?;
    iw.write_all(&(cols as u32).to_be_bytes())?;
    for img in d.images() {
        let bytes: Vec<u8> = img
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        iw.write_all(&bytes)?;
    }
    iw.flush()?;

    let mut lw = BufWriter::new(File::create(labels_path)?);
    lw.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    lw.write_all(&(d.len() as u32).to_be_bytes())?;
    let label_bytes: Vec<u8> = d.labels().iter().map(|&l| l as u8).collect();
    lw.write_all(&label_bytes)?;
    lw.flush()?;
    Ok(())
}

/// Loads the CSV fallback format. The shape comes from the optional
/// `# rows cols channels` header, or from `shape` when the header is absent.
pub fn load_csv(path: &Path, shape: Option<(usize, usize, usize)>) -> Result<Dataset, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut dims = shape;
    let mut max_label = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            let parts: Vec<usize> = trimmed[1..]
                .split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| DatasetError::Parse {
                        line: lineno + 1,
                        msg: format!("bad shape token '{t}'"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if parts.len() == 3 {
                dims = Some((parts[0], parts[1], parts[2]));
            }
            continue;
        }
        let (rows, cols, channels) = dims.ok_or(DatasetError::MissingShape)?;
        let mut fields = trimmed.split(',');
        let label: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| DatasetError::Parse {
                line: lineno + 1,
                msg: format!("bad label: {e}"),
            })?;
        let pixels: Vec<f64> = fields
            .map(|f| {
                f.trim().parse().map_err(|e| DatasetError::Parse {
                    line: lineno + 1,
                    msg: format!("bad pixel: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if pixels.len() != rows * cols * channels {
            return Err(DatasetError::Parse {
                line: lineno + 1,
                msg: format!(
                    "expected {} pixels, got {}",
                    rows * cols * channels,
                    pixels.len()
                ),
            });
        }
        max_label = max_label.max(label);
        images.push(Tensor3::new(rows, cols, channels, pixels).expect("length checked"));
        labels.push(label);
    }
    if images.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::new(images, labels, max_label + 1)
}

/// Writes the CSV fallback format with a shape header.
pub fn save_csv(d: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let (rows, cols, channels) = d.image_shape().ok_or(DatasetError::Empty)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {rows} {cols} {channels}")?;
    for (img, &label) in d.images().iter().zip(d.labels()) {
        write!(w, "{label}")?;
        for v in img.data() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ninety_ten_split_of_ten_samples() {
        let d = synthetic_digits(10, 7);
        let (train, test) = split_dataset(&d, 0.9, 1).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn split_is_deterministic() {
        let d = synthetic_digits(50, 7);
        let (a_train, a_test) = split_dataset(&d, 0.8, 99).unwrap();
        let (b_train, b_test) = split_dataset(&d, 0.8, 99).unwrap();
        assert_eq!(a_train.labels(), b_train.labels());
        assert_eq!(a_test.labels(), b_test.labels());
        assert_eq!(a_train.images()[0], b_train.images()[0]);
    }

    #[test]
    fn split_partitions_are_disjoint_and_exhaustive() {
        let d = synthetic_digits(37, 3);
        let (train, test) = split_dataset(&d, 0.7, 5).unwrap();
        assert_eq!(train.len() + test.len(), d.len());
        // Images carry unique noise, so data equality identifies samples.
        let key = |t: &Tensor3| {
            t.data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<u64>>()
        };
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        for img in train.images().iter().chain(test.images()) {
            assert!(seen.insert(key(img)), "sample appears twice");
        }
        let original: HashSet<Vec<u64>> = d.images().iter().map(key).collect();
        assert_eq!(seen, original);
    }

    #[test]
    fn empty_dataset_cannot_be_split() {
        let d = Dataset::new(vec![], vec![], 10).unwrap();
        assert!(matches!(
            split_dataset(&d, 0.9, 0),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let d = synthetic_digits(4, 0);
        assert!(matches!(
            split_dataset(&d, 1.0, 0),
            Err(DatasetError::BadFraction(_))
        ));
    }

    #[test]
    fn synthetic_set_is_balanced_and_deterministic() {
        let a = synthetic_digits(40, 11);
        let b = synthetic_digits(40, 11);
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.images()[17], b.images()[17]);
        let mut counts = [0usize; 10];
        for &l in a.labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4));
        assert!(a.images().iter().all(Tensor3::is_finite));
        assert_eq!(a.image_shape(), Some((14, 20, 1)));
    }

    #[test]
    fn idx_round_trip() {
        let d = synthetic_digits(23, 5);
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images-idx3-ubyte");
        let labels = dir.path().join("labels-idx1-ubyte");
        save_idx(&d, &images, &labels).unwrap();
        let back = load_idx(&images, &labels).unwrap();
        assert_eq!(back.len(), d.len());
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.image_shape(), d.image_shape());
        // Pixels pass through u8, so agreement is to quantization precision.
        for (a, b) in back.images().iter().zip(d.images()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn idx_bad_magic_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        std::fs::write(&images, 99u32.to_be_bytes()).unwrap();
        std::fs::write(&labels, IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DatasetError::BadMagic { got: 99, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = synthetic_digits(12, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("digits.csv");
        save_csv(&d, &path).unwrap();
        let back = load_csv(&path, None).unwrap();
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.image_shape(), d.image_shape());
        for (a, b) in back.images().iter().zip(d.images()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn csv_without_header_needs_explicit_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.csv");
        std::fs::write(&path, "3,0.0,0.5,1.0,0.25\n").unwrap();
        assert!(matches!(
            load_csv(&path, None),
            Err(DatasetError::MissingShape)
        ));
        let d = load_csv(&path, Some((2, 2, 1))).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.label(0), 3);
        assert_eq!(d.class_count(), 4);
    }
}

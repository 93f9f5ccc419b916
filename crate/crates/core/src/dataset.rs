//! Labeled point sets: a strict reader for the classic big-endian image
//! and label archive format, and a deterministic synthetic blob generator
//! for experiments that need controllable geometry.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, standard_normal};

/// Points with optional labels. Features are finite f64s of uniform
/// dimension; labels, when present, are class indices below `num_classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub num_classes: Option<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        x: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let ds = Dataset { name: name.into(), x, labels, num_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.x[0].len()
    }

    fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::DegenerateDataset(format!("{}: no points", self.name)));
        }
        let d = self.x[0].len();
        if d == 0 {
            return Err(Error::DegenerateDataset(format!("{}: zero-dimensional points", self.name)));
        }
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DegenerateDataset(format!(
                    "{}: point {i} has {} coordinates, expected {d}",
                    self.name,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateDataset(format!(
                    "{}: point {i} has non-finite coordinates",
                    self.name
                )));
            }
        }
        match (&self.labels, self.num_classes) {
            (None, None) => {}
            (Some(labels), Some(classes)) => {
                if labels.len() != self.x.len() {
                    return Err(Error::DegenerateDataset(format!(
                        "{}: {} labels for {} points",
                        self.name,
                        labels.len(),
                        self.x.len()
                    )));
                }
                if classes < 2 {
                    return Err(Error::DegenerateDataset(format!(
                        "{}: labeled data needs at least two classes",
                        self.name
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
                    return Err(Error::DegenerateDataset(format!(
                        "{}: label {bad} out of range for {classes} classes",
                        self.name
                    )));
                }
            }
            _ => {
                return Err(Error::DegenerateDataset(format!(
                    "{}: labels and class count must be given together",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Splits into a prefix of `n` points and the remainder; both halves
    /// must be nonempty.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::InvalidInput(format!(
                "split point {n} must leave both halves of {} points nonempty",
                self.len()
            )));
        }
        let take = |range: std::ops::Range<usize>, tag: &str| Dataset {
            name: format!("{}:{tag}", self.name),
            x: self.x[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
            num_classes: self.num_classes,
        };
        Ok((take(0..n, "head"), take(n..self.len(), "tail")))
    }
}

// ── archive reader ───────────────────────────────────────────────────────

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(data: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    let end = *pos + 4;
    let bytes = data
        .get(*pos..end)
        .ok_or_else(|| Error::FormatError(format!("truncated header: {what}")))?;
    *pos = end;
    Ok(u32::from_be_bytes(bytes.try_into().expect("slice of length 4")))
}

/// Reads a paired image/label archive (big-endian headers, one byte per
/// pixel and per label). Pixels come back scaled to `[0, 1]`; images are
/// flattened row-major. The two files must agree on the record count.
pub fn read_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images)?;
    let mut p = 0usize;
    let magic = be_u32(&img_bytes, &mut p, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::FormatError(format!(
            "bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = be_u32(&img_bytes, &mut p, "image count")? as usize;
    let rows = be_u32(&img_bytes, &mut p, "image rows")? as usize;
    let cols = be_u32(&img_bytes, &mut p, "image cols")? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::FormatError("image archive declares empty geometry".into()));
    }
    let want = count * rows * cols;
    let pixels = img_bytes
        .get(p..p + want)
        .ok_or_else(|| Error::FormatError(format!("image archive holds fewer than {want} pixels")))?;

    let lab_bytes = std::fs::read(labels)?;
    let mut q = 0usize;
    let lmagic = be_u32(&lab_bytes, &mut q, "label magic")?;
    if lmagic != LABEL_MAGIC {
        return Err(Error::FormatError(format!(
            "bad label magic {lmagic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let lcount = be_u32(&lab_bytes, &mut q, "label count")? as usize;
    if lcount != count {
        return Err(Error::FormatError(format!(
            "label count {lcount} does not match image count {count}"
        )));
    }
    let raw_labels = lab_bytes
        .get(q..q + count)
        .ok_or_else(|| Error::FormatError(format!("label archive holds fewer than {count} labels")))?;

    let dim = rows * cols;
    let x: Vec<Vec<f64>> = (0..count)
        .map(|i| pixels[i * dim..(i + 1) * dim].iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    let labels_vec: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels_vec.iter().copied().max().unwrap_or(0) + 1;
    let name = images
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "archive".into());
    Dataset::new(name, x, Some(labels_vec), Some(num_classes.max(2)))
}

// ── synthetic blobs ──────────────────────────────────────────────────────

/// Draws `classes` pairwise-orthonormal unit directions (two classes use a
/// single axis with opposite signs).
fn class_directions(classes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| standard_normal(rng)).collect()
    };
    if classes == 2 {
        for _ in 0..100 {
            let u = draw(rng);
            let n = norm2(&u);
            if n > 1e-8 {
                let unit: Vec<f64> = u.iter().map(|v| v / n).collect();
                let neg: Vec<f64> = unit.iter().map(|v| -v).collect();
                return Ok(vec![unit, neg]);
            }
        }
        return Err(Error::DegenerateInput("could not draw a class axis".into()));
    }
    if classes > dim {
        return Err(Error::InvalidConfig(format!(
            "{classes} orthogonal class directions do not fit in {dim} dimensions"
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while basis.len() < classes {
        let mut ok = false;
        for _ in 0..100 {
            let mut v = draw(rng);
            for b in &basis {
                let proj = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let n = norm2(&v);
            if n > 1e-8 {
                basis.push(v.iter().map(|x| x / n).collect());
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::DegenerateInput("could not complete class directions".into()));
        }
    }
    Ok(basis)
}

/// Deterministic Gaussian blobs in the unit cube.
///
/// Class centers sit at `0.5·1 + (separation/2)·d_c` along orthonormal
/// class directions; samples add per-coordinate Gaussian noise with
/// standard deviation `separation / 8` and are clipped into `[0, 1]`.
/// Samples interleave round-robin over classes (`label[i] = i mod classes`)
/// so every prefix stays class-balanced.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidConfig("blobs need at least two classes".into()));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::InvalidConfig("blobs need positive size and dimension".into()));
    }
    if !(separation > 0.0 && separation <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "separation must be in (0, 1] so centers stay in the cube, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = class_directions(classes, dim, &mut rng)?;
    let centers: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| d.iter().map(|v| 0.5 + 0.5 * separation * v).collect())
        .collect();
    let noise = separation / 8.0;
    let mut x = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (c, center) in centers.iter().enumerate() {
            let point: Vec<f64> = center
                .iter()
                .map(|&m| (m + noise * standard_normal(&mut rng)).clamp(0.0, 1.0))
                .collect();
            x.push(point);
            labels.push(c);
        }
    }
    Dataset::new(
        format!("blobs-{classes}x{per_class}-d{dim}"),
        x,
        Some(labels),
        Some(classes),
    )
}

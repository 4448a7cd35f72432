use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::persist::{self, Manifest};

/// A labelled feature matrix stored row-major in 32-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows"));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
                context: "feature matrix size",
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    /// A dataset with no rows and the same shape as `other`, to be filled by `push`.
    pub fn empty_like(other: &Dataset) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            dim: other.dim,
            num_classes: other.num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f32], usize)> + '_ {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("subset selects no rows"));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        })
    }

    /// Rows whose index is not in `excluded`.
    pub fn without(&self, excluded: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|i| !excluded.contains(i)).collect();
        self.subset(&keep)
    }

    pub fn push(&mut self, x: &[f32], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
                context: "appended row",
            });
        }
        if y >= self.num_classes {
            return Err(Error::InvalidInput(format!("label {y} out of range")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        self.features.extend_from_slice(x);
        self.labels.push(y);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim || other.num_classes != self.num_classes {
            return Err(Error::Misaligned("datasets differ in shape".into()));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Index of the first row equal to `(x, y)`, if any.
    pub fn find(&self, x: &[f32], y: usize) -> Option<usize> {
        self.iter().position(|(row, label)| label == y && row == x)
    }

    /// Little-endian byte image of the contents, used for content hashing.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.features.len() * 4 + self.labels.len() * 2);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u64).to_le_bytes());
        out.extend(persist::f32_le_bytes(&self.features));
        for &y in &self.labels {
            out.extend_from_slice(&(y as u16).to_le_bytes());
        }
        out
    }

    /// Writes `<stem>.manifest`, `<stem>.features.f32` and `<stem>.labels.u16`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        if self.num_classes > u16::MAX as usize + 1 {
            return Err(Error::InvalidInput("too many classes for 16-bit labels".into()));
        }
        fs::create_dir_all(dir)?;
        let feat_name = format!("{stem}.features.f32");
        let label_name = format!("{stem}.labels.u16");
        fs::write(dir.join(&feat_name), persist::f32_le_bytes(&self.features))?;
        let label_bytes: Vec<u8> = self
            .labels
            .iter()
            .flat_map(|&y| (y as u16).to_le_bytes())
            .collect();
        fs::write(dir.join(&label_name), label_bytes)?;

        let mut manifest = Manifest::new("dataset-v1");
        manifest.set("rows", self.len());
        manifest.set("dim", self.dim);
        manifest.set("num_classes", self.num_classes);
        manifest.set("features", &feat_name);
        manifest.set("labels", &label_name);
        let path = dir.join(format!("{stem}.manifest"));
        manifest.write(&path)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::read(manifest_path)?;
        manifest.expect_format("dataset-v1")?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let rows: usize = manifest.parse("rows")?;
        let dim: usize = manifest.parse("dim")?;
        let num_classes: usize = manifest.parse("num_classes")?;
        let feat_path = dir.join(manifest.get("features")?);
        let features = persist::f32_from_le_bytes(&fs::read(&feat_path)?, &feat_path)?;
        let label_path = dir.join(manifest.get("labels")?);
        let raw = fs::read(&label_path)?;
        if raw.len() != rows * 2 {
            return Err(Error::Format {
                path: label_path,
                reason: format!("expected {} bytes, found {}", rows * 2, raw.len()),
            });
        }
        let labels = raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
            .collect();
        Dataset::new(features, labels, dim, num_classes)
    }

    /// Reads a CSV with a header row whose last column is an integer label.
    ///
    /// The class count is one more than the largest label seen.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::InvalidInput(
                "CSV needs at least one feature column and a label column".into(),
            ));
        }
        let dim = width - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            for field in record.iter().take(dim) {
                let v: f32 = field.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("row {}: bad feature value `{field}`", line + 1))
                })?;
                features.push(v);
            }
            let raw = record.get(dim).unwrap_or_default().trim();
            let y: usize = raw.parse().map_err(|_| {
                Error::InvalidInput(format!("row {}: bad label `{raw}`", line + 1))
            })?;
            labels.push(y);
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Dataset::new(features, labels, dim, num_classes)
    }
}

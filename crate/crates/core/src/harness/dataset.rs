use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::Scores;
use crate::error::{Error, Result};
use crate::evidence::{derive_evidence, EvidenceSource, GroupMapping};
use crate::nn::{Matrix, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Idx,
    Csv,
}

/// Ground-truth classes of a dataset.
///
/// The labels never leave this type as a slice: they can only be scored against a predicted
/// clustering, or turned into coarse evidence the way an external auxiliary process would. No
/// training entry point accepts this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(Vec<usize>);

impl GroundTruth {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// ACC and NMI of `pred` against the true classes.
    pub fn score(&self, pred: &[usize]) -> Result<Scores> {
        Scores::compute(pred, &self.0)
    }

    /// Real evidence `mapping(class)` of the given width.
    pub fn derive_evidence(&self, mapping: &GroupMapping, width: usize) -> Result<EvidenceSource> {
        derive_evidence(&self.0, mapping, width)
    }

    /// Per-class sample counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_count()];
        for &l in &self.0 {
            c[l] += 1;
        }
        c
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self(idx.iter().map(|&i| self.0[i]).collect())
    }

    /// Writes one label per line.
    pub(crate) fn write_lines(&self, out: &mut String) {
        use std::fmt::Write;
        for l in &self.0 {
            let _ = writeln!(out, "{l}");
        }
    }

    /// Row indices of a class-stratified subsample of `n` rows, in ascending order.
    fn stratified_indices(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let sizes = self.class_sizes();
        let total = self.len();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
        for (i, &l) in self.0.iter().enumerate() {
            by_class[l].push(i);
        }
        // largest-remainder apportionment of n over classes
        let mut quota: Vec<(usize, f64)> = sizes
            .iter()
            .map(|&s| {
                let exact = n as f64 * s as f64 / total as f64;
                (exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = quota.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| quota[b].1.total_cmp(&quota[a].1).then(a.cmp(&b)));
        for &c in order.iter().take(n - assigned) {
            quota[c].0 += 1;
        }
        let mut picked = Vec::with_capacity(n);
        for (members, (q, _)) in by_class.iter_mut().zip(quota) {
            rng.shuffle(members);
            picked.extend_from_slice(&members[..q.min(members.len())]);
        }
        picked.sort_unstable();
        picked
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub truth: Option<GroundTruth>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        truth: Option<GroundTruth>,
        provenance: Provenance,
    ) -> Result<Self> {
        if let Some(t) = &truth {
            if t.len() != features.rows() {
                return Err(Error::Data(format!(
                    "{} labels for {} samples",
                    t.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            truth,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// Class-stratified subsample of `n` rows (keeps original row order).
    pub fn stratified_subsample(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        let truth = self.truth.as_ref().ok_or_else(|| {
            Error::Data("stratified subsampling needs ground-truth labels".into())
        })?;
        if n > self.len() {
            return Err(Error::Data(format!(
                "cannot subsample {n} rows from {}",
                self.len()
            )));
        }
        let idx = truth.stratified_indices(n, rng);
        Ok(Dataset {
            name: format!("{}[{n}]", self.name),
            features: self.features.select_rows(&idx),
            truth: Some(truth.select(&idx)),
            provenance: self.provenance,
        })
    }

    /// Numeric CSV, `label` column last when labels exist.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let d = self.features.cols();
        let header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        out.push_str(&header.join(","));
        if self.truth.is_some() {
            out.push_str(",label");
        }
        out.push('\n');
        let mut label_lines = String::new();
        if let Some(t) = &self.truth {
            t.write_lines(&mut label_lines);
        }
        let mut labels = label_lines.lines();
        for row in self.features.iter_rows() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&cells.join(","));
            if let Some(l) = labels.next() {
                let _ = write!(out, ",{l}");
            }
            out.push('\n');
        }
        out
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            source_name: name.to_string(),
            location: format!("offset {offset}"),
            message: format!("truncated header while reading {what}"),
        })
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

/// Parses an IDX image file (magic `0x00000803`): count, rows, cols, then `u8` pixels.
/// Pixels are scaled to `[0, 1]` and each image is flattened row-major.
pub fn parse_idx_images(bytes: &[u8], name: &str) -> Result<Matrix> {
    let magic = read_u32_be(bytes, 0, "magic", name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            source_name: name.to_string(),
            location: "offset 0".into(),
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"),
        });
    }
    let n = read_u32_be(bytes, 4, "image count", name)? as usize;
    let rows = read_u32_be(bytes, 8, "row count", name)? as usize;
    let cols = read_u32_be(bytes, 12, "column count", name)? as usize;
    let d = rows * cols;
    let payload = &bytes[16..];
    if payload.len() != n * d {
        return Err(Error::Parse {
            source_name: name.to_string(),
            location: "offset 16".into(),
            message: format!(
                "payload holds {} bytes, header promises {n}×{rows}×{cols} = {}",
                payload.len(),
                n * d
            ),
        });
    }
    let data = payload.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::from_vec(n, d, data)
}

/// Parses an IDX label file (magic `0x00000801`): count, then one `u8` label per item.
pub fn parse_idx_labels(bytes: &[u8], name: &str) -> Result<Vec<usize>> {
    let magic = read_u32_be(bytes, 0, "magic", name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            source_name: name.to_string(),
            location: "offset 0".into(),
            message: format!("bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"),
        });
    }
    let n = read_u32_be(bytes, 4, "label count", name)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Parse {
            source_name: name.to_string(),
            location: "offset 8".into(),
            message: format!("payload holds {} labels, header promises {n}", payload.len()),
        });
    }
    Ok(payload.iter().map(|&l| usize::from(l)).collect())
}

/// Image and label IDX files as one labelled dataset.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let features = parse_idx_images(&read_all(images)?, &images.display().to_string())?;
    let labels = parse_idx_labels(&read_all(labels)?, &labels.display().to_string())?;
    if labels.len() != features.rows() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let name = images
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, Some(GroundTruth::new(labels)), Provenance::Idx)
}

/// Rectangular numeric CSV with a header row. A header column named `label` holds integer
/// class labels and is split off from the features.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            source_name: name.to_string(),
            location: "line 1".into(),
            message: e.to_string(),
        })?
        .clone();
    let width = headers.len();
    let label_col = headers.iter().position(|h| h.eq_ignore_ascii_case("label"));
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            source_name: name.to_string(),
            location: format!("line {line}"),
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                source_name: name.to_string(),
                location: format!("line {line}"),
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let bad = |what: &str| Error::Parse {
                source_name: name.to_string(),
                location: format!("line {line}, column {}", j + 1),
                message: format!("{what} {cell:?}"),
            };
            if Some(j) == label_col {
                labels.push(cell.parse::<usize>().map_err(|_| bad("non-integer label"))?);
            } else {
                let v = cell.parse::<f64>().map_err(|_| bad("non-numeric cell"))?;
                if !v.is_finite() {
                    return Err(bad("non-finite value"));
                }
                data.push(v);
            }
        }
        rows += 1;
    }
    let cols = width - usize::from(label_col.is_some());
    let features = Matrix::from_vec(rows, cols, data)?;
    let truth = label_col.map(|_| GroundTruth::new(labels));
    Dataset::new(name, features, truth, Provenance::Csv)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = parse_csv(&text, &path.display().to_string())?;
    ds.name = name;
    Ok(ds)
}

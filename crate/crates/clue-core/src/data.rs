//! Dataset ingestion (IDX format, CSV fallback, synthetic digits) and
//! selection of the most uncertain inputs to explain.

pub mod synthetic;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::models::{ModelError, PredictMode, PredictiveOutput, UncertaintyModel};
use crate::util::derive_seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Which split a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Images in `[0,1]` with class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn d_input(&self) -> usize {
        self.rows * self.cols
    }

    /// Checks the stored invariants: equal lengths, pixels in `[0,1]`,
    /// labels below `n_classes`.
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.inputs.len() != self.labels.len() {
            return Err(DataError::Contract(format!(
                "{} inputs vs {} labels",
                self.inputs.len(),
                self.labels.len()
            )));
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != self.d_input() {
                return Err(DataError::Contract(format!(
                    "input {i} has {} pixels, expected {}",
                    x.len(),
                    self.d_input()
                )));
            }
            if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(DataError::Contract(format!(
                    "input {i} has pixels outside [0,1]"
                )));
            }
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= n_classes)
        {
            return Err(DataError::Contract(format!(
                "label {l} at index {i} is outside [0,{n_classes})"
            )));
        }
        Ok(())
    }

    /// A dataset holding the first `n` examples (training-subset selection).
    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            inputs: self.inputs[..n.min(self.len())].to_vec(),
            labels: self.labels[..n.min(self.len())].to_vec(),
            split: self.split,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

struct OffsetReader<R: Read> {
    inner: R,
    pos: u64,
    path: PathBuf,
}

impl<R: Read> OffsetReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| DataError::Format {
            path: self.path.clone(),
            offset: self.pos,
            message: format!("truncated read of {} bytes: {e}", buf.len()),
        })?;
        self.pos += buf.len() as u64;
        Ok(())
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_be_bytes(buf))
    }
}

/// Loads an IDX image/label file pair. Pixels are scaled to `[0,1]` by
/// dividing by 255.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let file = File::open(images_path).map_err(|e| DataError::Io {
        path: images_path.to_path_buf(),
        source: e,
    })?;
    let mut r = OffsetReader {
        inner: BufReader::new(file),
        pos: 0,
        path: images_path.to_path_buf(),
    };
    let magic = r.read_u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::Format {
            path: images_path.to_path_buf(),
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = r.read_u32_be()? as usize;
    let rows = r.read_u32_be()? as usize;
    let cols = r.read_u32_be()? as usize;
    if rows == 0 || cols == 0 || rows > 4096 || cols > 4096 {
        return Err(DataError::Format {
            path: images_path.to_path_buf(),
            offset: 8,
            message: format!("implausible image dimensions {rows}x{cols}"),
        });
    }
    let mut inputs = Vec::with_capacity(count);
    let mut pixel_buf = vec![0u8; rows * cols];
    for _ in 0..count {
        r.read_exact(&mut pixel_buf)?;
        inputs.push(pixel_buf.iter().map(|&b| b as f64 / 255.0).collect());
    }

    let file = File::open(labels_path).map_err(|e| DataError::Io {
        path: labels_path.to_path_buf(),
        source: e,
    })?;
    let mut r = OffsetReader {
        inner: BufReader::new(file),
        pos: 0,
        path: labels_path.to_path_buf(),
    };
    let magic = r.read_u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::Format {
            path: labels_path.to_path_buf(),
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let label_count = r.read_u32_be()? as usize;
    if label_count != count {
        return Err(DataError::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!("{label_count} labels but {count} images"),
        });
    }
    let mut labels = vec![0u8; label_count];
    r.read_exact(&mut labels)?;

    Ok(Dataset {
        inputs,
        labels: labels.into_iter().map(usize::from).collect(),
        split,
        rows,
        cols,
    })
}

/// Writes a dataset as an IDX image/label file pair. Pixels are mapped back
/// to bytes by `round(v·255)`, which reproduces the original bytes exactly
/// for any dataset loaded via [`load_idx`].
pub fn write_idx(
    ds: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
        move |e| DataError::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }

    let mut w = BufWriter::new(File::create(images_path).map_err(io_err(images_path))?);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> std::io::Result<()> {
        w.write_all(bytes)
    };
    (|| -> std::io::Result<()> {
        write(&mut w, &IDX_IMAGES_MAGIC.to_be_bytes())?;
        write(&mut w, &(ds.len() as u32).to_be_bytes())?;
        write(&mut w, &(ds.rows as u32).to_be_bytes())?;
        write(&mut w, &(ds.cols as u32).to_be_bytes())?;
        let mut buf = Vec::with_capacity(ds.d_input());
        for x in &ds.inputs {
            buf.clear();
            buf.extend(x.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
            write(&mut w, &buf)?;
        }
        w.flush()
    })()
    .map_err(io_err(images_path))?;

    let mut w = BufWriter::new(File::create(labels_path).map_err(io_err(labels_path))?);
    (|| -> std::io::Result<()> {
        write(&mut w, &IDX_LABELS_MAGIC.to_be_bytes())?;
        write(&mut w, &(ds.len() as u32).to_be_bytes())?;
        let bytes: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
        write(&mut w, &bytes)?;
        w.flush()
    })()
    .map_err(io_err(labels_path))?;
    Ok(())
}

/// CSV fallback: one row per example, label first, then `D` pixel values in
/// `[0,255]`.
pub fn load_csv(path: impl AsRef<Path>, rows: usize, cols: usize, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| DataError::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: e.to_string(),
        })?;
    let d = rows * cols;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("row {i}: {e}"),
        })?;
        if record.len() != d + 1 {
            return Err(DataError::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("row {i} has {} fields, expected {}", record.len(), d + 1),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| DataError::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("row {i}: `{s}` is not a number"),
            })
        };
        labels.push(parse(&record[0])? as usize);
        let mut x = Vec::with_capacity(d);
        for f in record.iter().skip(1) {
            x.push(parse(f)? / 255.0);
        }
        inputs.push(x);
    }
    Ok(Dataset {
        inputs,
        labels,
        split,
        rows,
        cols,
    })
}

/// Indices of the `count` inputs with the highest MC-dropout predictive
/// entropy, sorted by descending entropy (ties toward the lower index).
///
/// Each input gets its own RNG stream derived from `seed` and its index, so
/// the ranking is identical however the scan is scheduled.
pub fn most_uncertain(
    ds: &Dataset,
    model: &UncertaintyModel,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, PredictiveOutput)>> {
    if count > ds.len() {
        return Err(DataError::Contract(format!(
            "requested {count} uncertain inputs from a dataset of {}",
            ds.len()
        )));
    }
    let mut scored: Vec<(usize, PredictiveOutput)> = ds
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let out = model.predict(
                x,
                PredictMode::McMean {
                    seed: derive_seed(seed, i as u64),
                },
            )?;
            Ok((i, out))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.1.entropy
            .total_cmp(&a.1.entropy)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(count);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BnnArchitecture;

    fn small_dataset() -> Dataset {
        synthetic::generate(40, 123, Split::Test)
    }

    #[test]
    fn idx_round_trip_is_bit_faithful() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let img = dir.path().join("images.idx");
        let lbl = dir.path().join("labels.idx");
        write_idx(&ds, &img, &lbl).unwrap();
        let loaded = load_idx(&img, &lbl, Split::Test).unwrap();
        assert_eq!(loaded.len(), ds.len());
        assert_eq!(loaded.labels, ds.labels);

        // Re-serialize: the pixel bytes must be identical.
        let img2 = dir.path().join("images2.idx");
        let lbl2 = dir.path().join("labels2.idx");
        write_idx(&loaded, &img2, &lbl2).unwrap();
        assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(&img2).unwrap());
        assert_eq!(std::fs::read(&lbl).unwrap(), std::fs::read(&lbl2).unwrap());
    }

    #[test]
    fn ten_thousand_image_file_loads_with_declared_dims() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images.idx");
        let lbl = dir.path().join("labels.idx");
        let n = 10_000usize;
        {
            let mut w = BufWriter::new(File::create(&img).unwrap());
            w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
            w.write_all(&(n as u32).to_be_bytes()).unwrap();
            w.write_all(&28u32.to_be_bytes()).unwrap();
            w.write_all(&28u32.to_be_bytes()).unwrap();
            let zeros = vec![0u8; 784];
            for _ in 0..n {
                w.write_all(&zeros).unwrap();
            }
        }
        {
            let mut w = BufWriter::new(File::create(&lbl).unwrap());
            w.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
            w.write_all(&(n as u32).to_be_bytes()).unwrap();
            w.write_all(&vec![3u8; n]).unwrap();
        }
        let ds = load_idx(&img, &lbl, Split::Test).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.d_input(), 784);
        // An all-zero image loads as an all-zero input vector.
        assert!(ds.inputs[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_idx_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let img = dir.path().join("images.idx");
        let lbl = dir.path().join("labels.idx");
        write_idx(&ds, &img, &lbl).unwrap();
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 100]).unwrap();
        let err = load_idx(&img, &lbl, Split::Test).unwrap_err();
        match err {
            DataError::Format { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn bad_magic_and_count_mismatch_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let img = dir.path().join("images.idx");
        let lbl = dir.path().join("labels.idx");
        write_idx(&ds, &img, &lbl).unwrap();

        let mut bytes = std::fs::read(&img).unwrap();
        bytes[3] = 0x99;
        let bad_img = dir.path().join("bad.idx");
        std::fs::write(&bad_img, &bytes).unwrap();
        let err = load_idx(&bad_img, &lbl, Split::Test).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        // Truncate the label count header field.
        let mut lbl_bytes = std::fs::read(&lbl).unwrap();
        lbl_bytes[7] = lbl_bytes[7].wrapping_sub(1);
        let bad_lbl = dir.path().join("badlbl.idx");
        std::fs::write(&bad_lbl, &lbl_bytes).unwrap();
        let err = load_idx(&img, &bad_lbl, Split::Test).unwrap_err();
        assert!(err.to_string().contains("labels but"), "{err}");
    }

    #[test]
    fn csv_fallback_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut w = csv::Writer::from_path(&path).unwrap();
        // 2×2 images: label then 4 pixels in [0,255].
        w.write_record(["7", "0", "128", "255", "64"]).unwrap();
        w.write_record(["1", "10", "20", "30", "40"]).unwrap();
        w.flush().unwrap();
        let ds = load_csv(&path, 2, 2, Split::Train).unwrap();
        assert_eq!(ds.labels, vec![7, 1]);
        assert_eq!(ds.inputs[0][1], 128.0 / 255.0);
        assert!(ds.validate(10).is_ok());
    }

    #[test]
    fn most_uncertain_orders_by_descending_entropy() {
        let ds = small_dataset();
        let bnn = UncertaintyModel::init(
            BnnArchitecture {
                d_input: ds.d_input(),
                n_classes: 10,
                hidden: vec![16],
                dropout_rate: 0.25,
                mc_samples: 16,
            },
            5,
        )
        .unwrap();
        let top = most_uncertain(&ds, &bnn, 8, 99).unwrap();
        assert_eq!(top.len(), 8);
        for pair in top.windows(2) {
            assert!(pair[0].1.entropy >= pair[1].1.entropy);
        }
        // Stable across reruns with the same seed.
        let again = most_uncertain(&ds, &bnn, 8, 99).unwrap();
        let idx: Vec<usize> = top.iter().map(|(i, _)| *i).collect();
        let idx2: Vec<usize> = again.iter().map(|(i, _)| *i).collect();
        assert_eq!(idx, idx2);

        // Everything returned sits at or above the median entropy.
        let all = most_uncertain(&ds, &bnn, ds.len(), 99).unwrap();
        let median = all[all.len() / 2].1.entropy;
        assert!(top.iter().all(|(_, o)| o.entropy >= median));

        assert!(most_uncertain(&ds, &bnn, 0, 1).unwrap().is_empty());
        assert!(most_uncertain(&ds, &bnn, ds.len() + 1, 1).is_err());
    }
}

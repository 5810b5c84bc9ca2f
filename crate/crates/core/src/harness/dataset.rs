//! Datasets: synthetic Gaussian class blobs, IDX files, and a small binary
//! cache for projected data.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::dpca::WorkerShard;
use crate::error::{Error, Result};
use crate::mathkit::RngStream;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CACHE_MAGIC: &[u8; 8] = b"AWFLDS01";

/// Gaussian blobs with identity covariance. Class means sit on scaled
/// orthonormal directions so every pair of means is `separation` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    means: DMatrix<f64>,
}

impl SyntheticTask {
    pub fn new(raw_dim: usize, classes: usize, separation: f64, stream: RngStream) -> Result<Self> {
        if raw_dim == 0 || classes < 2 {
            return Err(Error::Domain(format!(
                "need raw_dim ≥ 1 and at least two classes, got {raw_dim} and {classes}"
            )));
        }
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::Domain(format!("separation must be non-negative, got {separation}")));
        }
        let mut rng = stream.generator();
        let gauss = DMatrix::from_fn(raw_dim, classes, |_, _| StandardNormal.sample(&mut rng));
        let directions = if classes <= raw_dim {
            gauss.qr().q()
        } else {
            let mut g = gauss;
            for mut col in g.column_iter_mut() {
                let n = col.norm();
                col /= n;
            }
            g
        };
        Ok(Self {
            means: directions * (separation / std::f64::consts::SQRT_2),
        })
    }

    pub fn raw_dim(&self) -> usize {
        self.means.nrows()
    }

    pub fn classes(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    /// `count` samples with labels cycling `0, 1, …, classes−1`.
    pub fn sample(&self, count: usize, stream: RngStream) -> WorkerShard {
        let mut rng = stream.generator();
        let classes = self.classes();
        let labels: Vec<usize> = (0..count).map(|i| i % classes).collect();
        let samples = DMatrix::from_fn(self.raw_dim(), count, |r, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            self.means[(r, labels[c])] + z
        });
        WorkerShard {
            samples,
            labels,
            worker_id: 0,
        }
    }
}

/// Splits a dataset into `workers` contiguous shards of equal size.
pub fn split_even(global: &WorkerShard, workers: usize) -> Result<Vec<WorkerShard>> {
    if workers == 0 {
        return Err(Error::Domain("cannot split across zero workers".into()));
    }
    let total = global.len();
    if total == 0 || !total.is_multiple_of(workers) {
        return Err(Error::Domain(format!(
            "{total} samples do not split evenly across {workers} workers"
        )));
    }
    let m = total / workers;
    Ok((0..workers)
        .map(|n| WorkerShard {
            samples: global.samples.columns(n * m, m).clone_owned(),
            labels: global.labels[n * m..(n + 1) * m].to_vec(),
            worker_id: n,
        })
        .collect())
}

/// Draws a synthetic dataset and its even worker split.
pub fn synth_dataset(
    raw_dim: usize,
    classes: usize,
    total_samples: usize,
    separation: f64,
    workers: usize,
    stream: RngStream,
) -> Result<(WorkerShard, Vec<WorkerShard>)> {
    let task = SyntheticTask::new(raw_dim, classes, separation, stream)?;
    let global = task.sample(total_samples, stream.with_worker(stream.worker_id.wrapping_add(1)));
    let shards = split_even(&global, workers)?;
    Ok((global, shards))
}

fn data_error(path: &Path, message: impl Into<String>) -> Error {
    Error::DataFormat {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| data_error(path, "truncated header"))
}

/// Reads an IDX image/label pair. Pixels are scaled to `[0, 1]` and each
/// image becomes one `rows·cols`-dimensional column.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<WorkerShard> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(data_error(images_path, format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if images.len() < expected {
        return Err(data_error(
            images_path,
            format!("truncated: header promises {count} images of {rows}×{cols} ({expected} bytes), file has {}", images.len()),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(data_error(labels_path, format!("bad label magic {magic:#010x}")));
    }
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    if labels.len() < 8 + label_count {
        return Err(data_error(
            labels_path,
            format!("truncated: header promises {label_count} labels, file has {} bytes", labels.len()),
        ));
    }
    if label_count != count {
        return Err(data_error(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }

    let pixels = &images[16..expected];
    let samples = DMatrix::from_fn(dim, count, |r, c| pixels[c * dim + r] as f64 / 255.0);
    let labels = labels[8..8 + count].iter().map(|&l| l as usize).collect();
    Ok(WorkerShard {
        samples,
        labels,
        worker_id: 0,
    })
}

/// Writes images (values clamped to `[0, 255]` after scaling by 255) in IDX format.
pub fn write_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, data: &WorkerShard, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != data.dim() {
        return Err(Error::Shape(format!("{rows}×{cols} images cannot hold {} features", data.dim())));
    }
    let mut img = Vec::with_capacity(16 + data.samples.len());
    for v in [IDX_IMAGES_MAGIC, data.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(data.samples.iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8));
    std::fs::write(images_path, img)?;

    let mut lab = Vec::with_capacity(8 + data.len());
    for v in [IDX_LABELS_MAGIC, data.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(data.labels.iter().map(|&l| l as u8));
    std::fs::write(labels_path, lab)?;
    Ok(())
}

/// Binary cache: `AWFLDS01`, then little-endian `u32` rows, `u32` columns,
/// `rows·cols` `f64` values column-major, and `cols` `u32` labels.
pub fn write_cache(path: impl AsRef<Path>, data: &WorkerShard) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&(data.dim() as u32).to_le_bytes())?;
    out.write_all(&(data.len() as u32).to_le_bytes())?;
    for v in data.samples.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    for &l in &data.labels {
        out.write_all(&(l as u32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<WorkerShard> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.get(..8) != Some(CACHE_MAGIC.as_slice()) {
        return Err(data_error(path, "not a dataset cache file"));
    }
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| data_error(path, "truncated header"))
    };
    let rows = word(8)? as usize;
    let cols = word(12)? as usize;
    let values_end = 16 + rows * cols * 8;
    if bytes.len() != values_end + cols * 4 {
        return Err(data_error(path, "file length does not match its header"));
    }
    let samples = DMatrix::from_iterator(
        rows,
        cols,
        bytes[16..values_end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))),
    );
    let labels = bytes[values_end..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte chunk")) as usize)
        .collect();
    Ok(WorkerShard {
        samples,
        labels,
        worker_id: 0,
    })
}

/// Loads a dataset from either an IDX image file (labels required) or a cache file.
pub fn load_any(path: impl AsRef<Path>, labels: Option<&Path>) -> Result<WorkerShard> {
    let path = path.as_ref();
    let head = std::fs::read(path)?;
    if head.starts_with(CACHE_MAGIC) {
        return read_cache(path);
    }
    match labels {
        Some(l) => load_idx(path, l),
        None => Err(data_error(path, "IDX images need a matching labels file")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::Lane;

    fn stream() -> RngStream {
        RngStream::new(5, 0, 0, Lane::Data)
    }

    fn nearest_centroid_accuracy(task: &SyntheticTask, data: &WorkerShard) -> f64 {
        let correct = data
            .samples
            .column_iter()
            .zip(&data.labels)
            .filter(|(x, &label)| {
                let best = (0..task.classes())
                    .min_by(|&a, &b| {
                        let da = (x - task.means().column(a)).norm();
                        let db = (x - task.means().column(b)).norm();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                best == label
            })
            .count();
        correct as f64 / data.len() as f64
    }

    #[test]
    fn means_are_separated_as_requested() {
        let task = SyntheticTask::new(20, 3, 10.0, stream()).unwrap();
        for a in 0..3 {
            for b in a + 1..3 {
                let d = (task.means().column(a) - task.means().column(b)).norm();
                assert!((d - 10.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn well_separated_blobs_are_linearly_separable() {
        let task = SyntheticTask::new(20, 3, 10.0, stream()).unwrap();
        let data = task.sample(3000, stream().with_worker(1));
        assert!(nearest_centroid_accuracy(&task, &data) > 0.99);
    }

    #[test]
    fn coincident_blobs_are_at_chance() {
        let task = SyntheticTask::new(20, 4, 0.0, stream()).unwrap();
        let data = task.sample(8000, stream().with_worker(1));
        let acc = nearest_centroid_accuracy(&task, &data);
        // all means coincide → the tie rule always picks class 0
        assert!((acc - 0.25).abs() < 0.02, "acc = {acc}");
    }

    #[test]
    fn synthesis_is_deterministic_and_splits_evenly() {
        let (g1, s1) = synth_dataset(8, 3, 60, 2.0, 6, stream()).unwrap();
        let (g2, s2) = synth_dataset(8, 3, 60, 2.0, 6, stream()).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 6);
        for (n, s) in s1.iter().enumerate() {
            assert_eq!(s.worker_id, n);
            assert_eq!(s.len(), 10);
            assert_eq!(s.samples, g1.samples.columns(n * 10, 10).clone_owned());
        }
        assert!(synth_dataset(8, 3, 61, 2.0, 6, stream()).is_err());
        assert!(SyntheticTask::new(8, 1, 1.0, stream()).is_err());
    }

    #[test]
    fn more_classes_than_dimensions() {
        let task = SyntheticTask::new(2, 5, 4.0, stream()).unwrap();
        for c in task.means().column_iter() {
            assert!((c.norm() - 4.0 / std::f64::consts::SQRT_2).abs() < 1e-12);
        }
    }
}

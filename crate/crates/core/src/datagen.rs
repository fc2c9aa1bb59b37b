//! Synthetic data, labeled/unlabeled splits, and IDX image files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::netcore::Batch;
use crate::posterior::LabeledSet;

/// Features plus optional labels in `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Batch,
    pub labels: Option<Vec<usize>>,
    /// `(rows, cols)` when every row is a flattened image.
    pub image_dims: Option<(usize, usize)>,
}

impl Dataset {
    pub fn unlabeled(x: Batch) -> Self {
        Self {
            x,
            labels: None,
            image_dims: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().copied())
            .unwrap_or(0)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            image_dims: self.image_dims,
        }
    }

    pub fn to_labeled(&self) -> Result<LabeledSet> {
        let labels = self
            .labels
            .clone()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))?;
        LabeledSet::new(self.x.clone(), labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    /// Ambient dimension `D`.
    pub ambient_dim: usize,
    /// Latent dimension `d`.
    pub latent_dim: usize,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim >= self.ambient_dim {
            return Err(Error::Config(format!(
                "latent dimension must satisfy 0 < d < D, got d={} D={}",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`gen_synthetic`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    /// Row-major `D x d` mixing matrix.
    pub mixing: Vec<f64>,
    /// The generating latents, `n x d`.
    pub latents: Batch,
}

/// Knobs of the generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProcess {
    pub latent_var: f64,
    pub noise_var: f64,
    /// Fixed mixing matrix instead of a Gaussian draw.
    pub mixing: Option<Vec<f64>>,
}

impl Default for SyntheticProcess {
    fn default() -> Self {
        Self {
            latent_var: 10.0,
            noise_var: 0.01,
            mixing: None,
        }
    }
}

/// `x = A z + eps`, `z ~ N(0, 10 I_d)`, `A ~ N(0, I_{Dxd})`, `eps ~ N(0, 0.01 I_D)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    gen_synthetic_with(spec, &SyntheticProcess::default())
}

/// [`gen_synthetic`] with an explicit process; also accepts `d == D`.
pub fn gen_synthetic_with(spec: &SyntheticSpec, process: &SyntheticProcess) -> Result<Synthetic> {
    let (big_d, d) = (spec.ambient_dim, spec.latent_dim);
    if d == 0 || d > big_d || spec.n == 0 {
        return Err(Error::Config(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixing = match &process.mixing {
        Some(a) if a.len() == big_d * d => a.clone(),
        Some(a) => {
            return Err(Error::Shape(format!("mixing matrix has {} entries, need {}", a.len(), big_d * d)))
        }
        None => (0..big_d * d).map(|_| StandardNormal.sample(&mut rng)).collect(),
    };
    let (x, latents) = draw_linear(&mixing, big_d, d, spec.n, process, &mut rng);
    Ok(Synthetic {
        data: Dataset::unlabeled(Batch::new(spec.n, big_d, x)?),
        mixing,
        latents: Batch::new(spec.n, d, latents)?,
    })
}

fn draw_linear(
    mixing: &[f64],
    big_d: usize,
    d: usize,
    n: usize,
    process: &SyntheticProcess,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let z_std = process.latent_var.sqrt();
    let e_std = process.noise_var.sqrt();
    let mut x = Vec::with_capacity(n * big_d);
    let mut latents = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            let s: f64 = StandardNormal.sample(rng);
            *zi = z_std * s;
        }
        latents.extend_from_slice(&z);
        for r in 0..big_d {
            let mut v = 0.0;
            for (k, zk) in z.iter().enumerate() {
                v += mixing[r * d + k] * zk;
            }
            if e_std > 0.0 {
                let s: f64 = StandardNormal.sample(rng);
                v += e_std * s;
            }
            x.push(v);
        }
    }
    (x, latents)
}

/// `K` classes, each with its own mixing matrix `A_k`; point `i` belongs to
/// class `i mod K + 1`.
pub fn gen_synthetic_classes(spec: &SyntheticSpec, num_classes: usize) -> Result<Dataset> {
    spec.validate()?;
    if num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let (big_d, d) = (spec.ambient_dim, spec.latent_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixings: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..big_d * d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let process = SyntheticProcess::default();
    let mut x = Vec::with_capacity(spec.n * big_d);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let k = i % num_classes;
        let (row, _) = draw_linear(&mixings[k], big_d, d, 1, &process, &mut rng);
        x.extend_from_slice(&row);
        labels.push(k + 1);
    }
    Ok(Dataset {
        x: Batch::new(spec.n, big_d, x)?,
        labels: Some(labels),
        image_dims: None,
    })
}

/// Labeled subset and the remaining unlabeled pool.
#[derive(Debug, Clone)]
pub struct LabeledSplit {
    pub labeled: LabeledSet,
    pub unlabeled: Batch,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

/// Class-balanced labeled subset of size `n_labeled`.
///
/// Per-class quotas differ by at most one unless a class runs out of
/// examples, in which case its shortfall moves to the other classes.
pub fn make_split(data: &Dataset, n_labeled: usize, seed: u64) -> Result<LabeledSplit> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Data("make_split needs labels".into()))?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let k = by_class.len();
    if n_labeled < k {
        return Err(Error::Config(format!(
            "cannot balance {n_labeled} labels over {k} classes"
        )));
    }
    if n_labeled > labels.len() {
        return Err(Error::Config(format!(
            "asked for {n_labeled} labels from a pool of {}",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<usize> = by_class.keys().copied().collect();
    // random order for who gets the +1 remainder
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);

    // water-filling: spread evenly subject to class capacity
    let caps: Vec<usize> = classes.iter().map(|c| by_class[c].len()).collect();
    let mut quota = vec![0usize; k];
    let mut left = n_labeled;
    while left > 0 {
        let open: Vec<usize> = order.iter().copied().filter(|&c| quota[c] < caps[c]).collect();
        let share = (left / open.len()).max(1);
        for &c in &open {
            if left == 0 {
                break;
            }
            let take = share.min(caps[c] - quota[c]).min(left);
            quota[c] += take;
            left -= take;
        }
    }

    let mut chosen = vec![false; labels.len()];
    let mut labeled_indices = Vec::with_capacity(n_labeled);
    for (ci, c) in classes.iter().enumerate() {
        let mut pool = by_class[c].clone();
        pool.shuffle(&mut rng);
        for &i in &pool[..quota[ci]] {
            chosen[i] = true;
            labeled_indices.push(i);
        }
    }
    labeled_indices.sort_unstable();
    let unlabeled_indices: Vec<usize> = (0..labels.len()).filter(|&i| !chosen[i]).collect();
    let labeled = LabeledSet::new(
        data.x.select_rows(&labeled_indices),
        labeled_indices.iter().map(|&i| labels[i]).collect(),
    )?;
    Ok(LabeledSplit {
        labeled,
        unlabeled: data.x.select_rows(&unlabeled_indices),
        labeled_indices,
        unlabeled_indices,
    })
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: "file ends inside the header".into(),
        })
}

/// Raw unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an unsigned-byte IDX file with the given magic number.
pub fn parse_idx(bytes: &[u8], magic: u32) -> Result<IdxArray> {
    let got = read_u32(bytes, 0)?;
    if got != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!("magic 0x{got:08x}, expected 0x{magic:08x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("payload truncated: {} of {len} bytes present", payload.len()),
        });
    }
    if payload.len() > len {
        return Err(Error::Format {
            offset: (header + len) as u64,
            message: format!("{} trailing bytes after payload", payload.len() - len),
        });
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let magic = 0x0000_0800u32 | array.dims.len() as u32;
    let mut out = magic.to_be_bytes().to_vec();
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label pair. Pixels map to `[-1, 1]` via `p / 127.5 - 1`
/// and digit labels `0..=9` map to classes `1..=10`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = parse_idx(&read_file(images_path)?, IDX_IMAGES)?;
    let labels = parse_idx(&read_file(labels_path)?, IDX_LABELS)?;
    idx_to_dataset(&images, &labels)
}

pub fn idx_to_dataset(images: &IdxArray, labels: &IdxArray) -> Result<Dataset> {
    let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("{n} images but {} labels", labels.dims[0]),
        });
    }
    let x: Vec<f64> = images.data.iter().map(|&p| f64::from(p) / 127.5 - 1.0).collect();
    Ok(Dataset {
        x: Batch::new(n, rows * cols, x)?,
        labels: Some(labels.data.iter().map(|&y| usize::from(y) + 1).collect()),
        image_dims: Some((rows, cols)),
    })
}

/// Writes an image dataset back to an IDX image/label pair.
pub fn write_idx(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = data
        .image_dims
        .ok_or_else(|| Error::Data("dataset is not an image set".into()))?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Data("dataset has no labels".into()))?;
    let pixels = data
        .x
        .as_slice()
        .iter()
        .map(|&v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
        .collect();
    let images = IdxArray {
        dims: vec![data.len(), rows, cols],
        data: pixels,
    };
    let labels = IdxArray {
        dims: vec![labels.len()],
        data: labels
            .iter()
            .map(|&y| u8::try_from(y - 1).map_err(|_| Error::Data(format!("label {y} does not fit a byte"))))
            .collect::<Result<_>>()?,
    };
    std::fs::write(images_path, encode_idx(&images)).map_err(|e| Error::io(images_path, e))?;
    std::fs::write(labels_path, encode_idx(&labels)).map_err(|e| Error::io(labels_path, e))
}

/// Block-mean pooling of every image by `factor` along both axes.
pub fn downsample(data: &Dataset, factor: usize) -> Result<Dataset> {
    let (rows, cols) = data
        .image_dims
        .ok_or_else(|| Error::Data("dataset is not an image set".into()))?;
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::Config(format!(
            "image {rows}x{cols} is not divisible by factor {factor}"
        )));
    }
    let (r2, c2) = (rows / factor, cols / factor);
    let area = (factor * factor) as f64;
    let mut out = Vec::with_capacity(data.len() * r2 * c2);
    for i in 0..data.len() {
        let img = data.x.row(i);
        for br in 0..r2 {
            for bc in 0..c2 {
                let mut s = 0.0;
                for dr in 0..factor {
                    for dc in 0..factor {
                        s += img[(br * factor + dr) * cols + bc * factor + dc];
                    }
                }
                out.push(s / area);
            }
        }
    }
    Ok(Dataset {
        x: Batch::new(data.len(), r2 * c2, out)?,
        labels: data.labels.clone(),
        image_dims: Some((r2, c2)),
    })
}

/// CSV with a header row (`x0..x{D-1}` and `label` when present), one
/// datapoint per line, shortest round-trip decimal text.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut header: Vec<String> = (0..data.dim()).map(|i| format!("x{i}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    let io = |e| Error::io(path, e);
    writeln!(f, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.len() {
        let mut cells: Vec<String> = data.x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = &data.labels {
            cells.push(l[i].to_string());
        }
        writeln!(f, "{}", cells.join(",")).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Reads the CSV layout written by [`write_csv`]. A trailing `label` column
/// is optional.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Data("empty CSV".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = names.last() == Some(&"label");
    let dim = names.len() - usize::from(has_label);
    if dim == 0 {
        return Err(Error::Data("CSV has no feature columns".into()));
    }
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for (no, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(Error::Data(format!(
                "line {}: expected {} fields, found {}",
                no + 1,
                names.len(),
                cells.len()
            )));
        }
        for c in &cells[..dim] {
            x.push(c.parse::<f64>().map_err(|_| Error::Data(format!("line {}: bad number {c:?}", no + 1)))?);
        }
        if has_label {
            let c = cells[dim];
            labels.push(c.parse::<usize>().map_err(|_| Error::Data(format!("line {}: bad label {c:?}", no + 1)))?);
        }
    }
    let n = x.len() / dim;
    Ok(Dataset {
        x: Batch::new(n, dim, x)?,
        labels: has_label.then_some(labels),
        image_dims: None,
    })
}

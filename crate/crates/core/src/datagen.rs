//! Seeded synthetic two-modality dataset.
//!
//! Each class gets one template per modality. The dense template spreads its
//! energy over every entry at a per-entry amplitude *below* the standard
//! 8/255 attack budget, riding on a 0.5 base level with a per-sample global
//! brightness nuisance and iid Gaussian noise, clipped to [0, 1]. The sparse
//! template concentrates its energy in a few entries at an amplitude *above*
//! that budget, with milder noise and no nuisance.
//!
//! That asymmetry is the point: an L-inf attacker can overpower every dense
//! entry's class evidence but only dent the sparse evidence, so a model that
//! leans on the dense modality is accurate and fragile while the sparse
//! modality is noisier but robust.
//!
//! The dense template for class `k` is the sum of two parts, pairwise
//! orthogonal across classes:
//!
//! * a coarse part: a constant boost on every entry of time slice `t = k`,
//!   coherent over channels and space so that it dominates the input
//!   covariance and gets picked up early in training;
//! * a fine part: row `k + 1` of the 8-wide Walsh-Hadamard matrix tiled over
//!   all entries.
//!
//! Dense randomness has three parts. The nuisance is a per-sample scalar
//! times a reserved Walsh row (orthogonal to every template): high-variance
//! texture a classifier must learn to ignore, controlled by
//! `dense_nuisance_std`. The noise is iid Gaussian per entry plus a
//! *low-rank* term: per-sample Gaussian coefficients on each class template.
//! The low-rank term confuses classes at a controllable rate without
//! offering the high-dimensional freedom that lets a large network memorize
//! its training set, so the dense modality saturates below 100% on its own
//! and the classifier has a reason to consult both modalities. Both noise
//! parts scale with `1 / dense_snr`.
//!
//! Sparse templates use disjoint index ranges, a few entries each.
//!
//! All randomness comes from named splitmix64 streams (see [`crate::rng`]),
//! one stream per sample, so generation is reproducible and could be
//! parallelized per sample without changing a single bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Maximum per-entry dense class amplitude (coarse plus fine part);
/// deliberately below the standard 8/255 attack budget.
pub const DENSE_SIGNAL: f64 = 0.02;
/// Coarse (time-slice) share of the dense amplitude.
const DENSE_COARSE: f64 = 0.015;
/// Fine (Walsh texture) share of the dense amplitude.
const DENSE_FINE: f64 = DENSE_SIGNAL - DENSE_COARSE;
/// Iid dense noise std is `DENSE_SIGNAL / dense_snr`.
const DENSE_NOISE_BASE: f64 = DENSE_SIGNAL;
/// Std of the low-rank class-confusion coefficients is this over `dense_snr`.
const DENSE_CONFUSION_BASE: f64 = 0.9;
/// Walsh row reserved for the nuisance texture; classes use rows 1..=6.
const NUISANCE_ROW: usize = 7;
/// Per-entry sparse class amplitude on the support; deliberately above the
/// standard 8/255 budget, but close enough that an attack dents it. Noise
/// std is `SPARSE_SIGNAL / sparse_snr`.
pub const SPARSE_SIGNAL: f64 = 0.1;
/// Std of the sparse low-rank confusion coefficients is this over
/// `sparse_snr`.
const SPARSE_CONFUSION_BASE: f64 = 1.4;
/// Number of entries carrying each class's sparse template.
pub const SPARSE_SUPPORT: usize = 2;
/// Base level of the dense modality before signal, nuisance, and noise.
pub const DENSE_BASE: f64 = 0.5;

const TAG_SAMPLE: u64 = 0x73616d706c65; // "sample"
const TAG_SPLIT: u64 = 0x73706c6974; // "split"

/// Generation parameters. The SNR knobs divide the fixed class amplitudes
/// to give each modality's noise std, so an infinite SNR means exactly zero
/// noise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Dense sample shape `[C, T, H, W]`.
    pub dense_shape: Vec<usize>,
    /// Sparse sample shape `[C, T, V]`.
    pub sparse_shape: Vec<usize>,
    pub dense_snr: f64,
    pub sparse_snr: f64,
    /// Standard deviation of the per-sample dense brightness shift.
    pub dense_nuisance_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn default_with_seed(seed: u64) -> Self {
        SynthSpec {
            num_classes: 4,
            samples_per_class: 200,
            dense_shape: vec![3, 4, 8, 8],
            sparse_shape: vec![3, 4, 5],
            dense_snr: 2.0,
            sparse_snr: 3.0,
            dense_nuisance_std: 0.1,
            seed,
        }
    }

    pub fn dense_noise_std(&self) -> f64 {
        DENSE_NOISE_BASE / self.dense_snr
    }

    /// Std of the per-sample low-rank class-confusion coefficients.
    pub fn dense_confusion_std(&self) -> f64 {
        DENSE_CONFUSION_BASE / self.dense_snr
    }

    pub fn sparse_noise_std(&self) -> f64 {
        SPARSE_SIGNAL / self.sparse_snr
    }

    /// Std of the per-sample sparse low-rank confusion coefficients.
    pub fn sparse_confusion_std(&self) -> f64 {
        SPARSE_CONFUSION_BASE / self.sparse_snr
    }

    fn validate(&self) -> Result<()> {
        if !(self.dense_snr > 0.0) || !(self.sparse_snr > 0.0) {
            return Err(Error::Data(format!(
                "signal-to-noise ratios must be positive, got {} and {}",
                self.dense_snr, self.sparse_snr
            )));
        }
        if !(self.dense_nuisance_std >= 0.0) {
            return Err(Error::Data(format!(
                "nuisance std must be nonnegative, got {}",
                self.dense_nuisance_std
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.num_classes > 6 {
            return Err(Error::Data(
                "at most 6 classes (8-wide Walsh rows; rows 0 and 7 reserved)".into(),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Data("samples_per_class must be positive".into()));
        }
        if self.dense_shape.len() != 4 || self.sparse_shape.len() != 3 {
            return Err(Error::Data(format!(
                "shapes must be [C,T,H,W] and [C,T,V], got {:?} and {:?}",
                self.dense_shape, self.sparse_shape
            )));
        }
        let slab_size: usize = self.dense_shape[2..].iter().product();
        if slab_size % 8 != 0 {
            return Err(Error::Data(format!(
                "dense spatial size {slab_size} must be a multiple of 8 for Walsh templates"
            )));
        }
        if self.num_classes > self.dense_shape[1] {
            return Err(Error::Data(format!(
                "{} classes need at least as many dense time slices, got {}",
                self.num_classes, self.dense_shape[1]
            )));
        }
        let sparse_numel: usize = self.sparse_shape.iter().product();
        if self.num_classes * SPARSE_SUPPORT > sparse_numel {
            return Err(Error::Data(format!(
                "sparse entry count {sparse_numel} too small for {} disjoint supports of {}",
                self.num_classes, SPARSE_SUPPORT
            )));
        }
        Ok(())
    }
}

/// One paired sample.
#[derive(Debug, Clone)]
pub struct ModalPair {
    pub dense: Tensor,
    pub sparse: Tensor,
    pub label: usize,
}

/// Generated dataset; sample order is classes in order, samples within a
/// class in index order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: SynthSpec,
    pub samples: Vec<ModalPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Value of 8-wide Walsh-Hadamard row `row` at flat entry `j`, in {-1, +1}.
fn walsh_row(row: usize, j: usize) -> f64 {
    let col = j % 8;
    if (row & col).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense geometry needed to evaluate templates at a flat entry.
#[derive(Clone, Copy)]
pub(crate) struct DenseGeometry {
    /// Entries per (channel, time) slab, i.e. H*W.
    pub slab_size: usize,
    /// Time extent T.
    pub time: usize,
}

impl DenseGeometry {
    pub fn of(shape: &[usize]) -> Self {
        DenseGeometry {
            slab_size: shape[2..].iter().product(),
            time: shape[1],
        }
    }

    fn time_of(self, j: usize) -> usize {
        (j / self.slab_size) % self.time
    }
}

/// Full dense template of class `k` at flat entry `j` (row-major `[C,T,H,W]`):
/// a coarse boost on time slice `t = k` plus Walsh row `k + 1` texture.
pub(crate) fn dense_template(class: usize, j: usize, geo: DenseGeometry) -> f64 {
    let coarse = if geo.time_of(j) == class {
        DENSE_COARSE
    } else {
        0.0
    };
    coarse + DENSE_FINE * walsh_row(class + 1, j)
}

/// Sparse template of class `k` at flat entry `j`: the amplitude on the
/// class's support range, zero elsewhere.
pub(crate) fn sparse_template(class: usize, j: usize) -> f64 {
    if (class * SPARSE_SUPPORT..(class + 1) * SPARSE_SUPPORT).contains(&j) {
        SPARSE_SIGNAL
    } else {
        0.0
    }
}

fn generate_sample(spec: &SynthSpec, class: usize, index: u64) -> ModalPair {
    let mut rng = Rng::derive(spec.seed, TAG_SAMPLE, index);
    let dense_noise = spec.dense_noise_std();
    let sparse_noise = spec.sparse_noise_std();
    let geo = DenseGeometry::of(&spec.dense_shape);

    let nuisance = spec.dense_nuisance_std * rng.normal();
    let confusion_std = spec.dense_confusion_std();
    let confusion: Vec<f64> = (0..spec.num_classes)
        .map(|_| confusion_std * rng.normal())
        .collect();
    let dense_numel: usize = spec.dense_shape.iter().product();
    let dense: Vec<f64> = (0..dense_numel)
        .map(|j| {
            let low_rank: f64 = confusion
                .iter()
                .enumerate()
                .map(|(k, &c)| c * dense_template(k, j, geo))
                .sum();
            let v = DENSE_BASE
                + dense_template(class, j, geo)
                + nuisance * walsh_row(NUISANCE_ROW, j)
                + low_rank
                + dense_noise * rng.normal();
            v.clamp(0.0, 1.0)
        })
        .collect();

    let sparse_confusion_std = spec.sparse_confusion_std();
    let sparse_confusion: Vec<f64> = (0..spec.num_classes)
        .map(|_| sparse_confusion_std * rng.normal())
        .collect();
    let sparse_numel: usize = spec.sparse_shape.iter().product();
    let sparse: Vec<f64> = (0..sparse_numel)
        .map(|j| {
            let low_rank: f64 = sparse_confusion
                .iter()
                .enumerate()
                .map(|(k, &c)| c * sparse_template(k, j))
                .sum();
            sparse_template(class, j) + low_rank + sparse_noise * rng.normal()
        })
        .collect();

    ModalPair {
        dense: Tensor::new(spec.dense_shape.clone(), dense).expect("sized above"),
        sparse: Tensor::new(spec.sparse_shape.clone(), sparse).expect("sized above"),
        label: class,
    }
}

/// Generates the full dataset described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for class in 0..spec.num_classes {
        for i in 0..spec.samples_per_class {
            let index = (class * spec.samples_per_class + i) as u64;
            samples.push(generate_sample(spec, class, index));
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        samples,
    })
}

/// Class-stratified split into disjoint, exhaustive train and test sets.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Data(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.spec.num_classes];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, indices) in by_class.iter().enumerate() {
        let mut order = indices.clone();
        let mut rng = Rng::derive(seed, TAG_SPLIT, class as u64);
        rng.shuffle(&mut order);
        let n_train = ((indices.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.min(indices.len());
        let mut head: Vec<usize> = order[..n_train].to_vec();
        let mut tail: Vec<usize> = order[n_train..].to_vec();
        head.sort_unstable();
        tail.sort_unstable();
        train_idx.extend(head);
        test_idx.extend(tail);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| Dataset {
        spec: dataset.spec.clone(),
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Stacks samples into batch tensors `[B, ...]` plus labels.
pub fn stack_batch(items: &[&ModalPair]) -> Result<(Tensor, Tensor, Vec<usize>)> {
    if items.is_empty() {
        return Err(Error::Data("cannot stack an empty batch".into()));
    }
    let dense_shape = items[0].dense.shape().to_vec();
    let sparse_shape = items[0].sparse.shape().to_vec();
    let mut dense = Vec::with_capacity(items.len() * items[0].dense.numel());
    let mut sparse = Vec::with_capacity(items.len() * items[0].sparse.numel());
    let mut labels = Vec::with_capacity(items.len());
    for item in items {
        if item.dense.shape() != dense_shape || item.sparse.shape() != sparse_shape {
            return Err(Error::Data("inconsistent sample shapes in batch".into()));
        }
        dense.extend_from_slice(item.dense.data());
        sparse.extend_from_slice(item.sparse.data());
        labels.push(item.label);
    }
    let mut bd = vec![items.len()];
    bd.extend_from_slice(&dense_shape);
    let mut bs = vec![items.len()];
    bs.extend_from_slice(&sparse_shape);
    Ok((Tensor::new(bd, dense)?, Tensor::new(bs, sparse)?, labels))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    spec: SynthSpec,
    count: usize,
}

/// Writes `<stem>.json` (manifest) and `<stem>.bin`: all dense tensors in
/// sample order, then all sparse tensors, then the labels, as little-endian
/// f64.
pub fn save_dataset(dataset: &Dataset, stem: &Path) -> Result<()> {
    let manifest = DatasetManifest {
        format_version: 1,
        spec: dataset.spec.clone(),
        count: dataset.len(),
    };
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut blob: Vec<u8> = Vec::new();
    for s in &dataset.samples {
        for &v in s.dense.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in &dataset.samples {
        for &v in s.sparse.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in &dataset.samples {
        blob.extend_from_slice(&(s.label as f64).to_le_bytes());
    }
    fs::write(
        stem.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(stem.with_extension("bin"), blob)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(stem: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let blob = fs::read(stem.with_extension("bin"))?;
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let dense_numel: usize = manifest.spec.dense_shape.iter().product();
    let sparse_numel: usize = manifest.spec.sparse_shape.iter().product();
    let expected = manifest.count * (dense_numel + sparse_numel + 1);
    if values.len() != expected {
        return Err(Error::Data(format!(
            "dataset blob holds {} values, manifest implies {expected}",
            values.len()
        )));
    }
    let dense_end = manifest.count * dense_numel;
    let sparse_end = dense_end + manifest.count * sparse_numel;
    let mut samples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let dense = values[i * dense_numel..(i + 1) * dense_numel].to_vec();
        let sparse =
            values[dense_end + i * sparse_numel..dense_end + (i + 1) * sparse_numel].to_vec();
        let label = values[sparse_end + i] as usize;
        samples.push(ModalPair {
            dense: Tensor::new(manifest.spec.dense_shape.clone(), dense)?,
            sparse: Tensor::new(manifest.spec.sparse_shape.clone(), sparse)?,
            label,
        });
    }
    Ok(Dataset {
        spec: manifest.spec,
        samples,
    })
}

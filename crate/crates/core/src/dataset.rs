//! Seeded synthetic dataset of oriented-bar images.
//!
//! Each class is a gaussian ridge through the image center at a
//! class-specific angle; samples add a random offset along the bar normal and
//! pixel noise. Every sample is a pure function of `(seed, global index)`, so
//! identical seeds reproduce the dataset bit for bit. Train indices are
//! `[0, train_size)` and validation indices follow them, so the splits are
//! disjoint by construction. Labels go round-robin over the classes, which
//! balances any split whose size is a multiple of the class count (the
//! defaults are).

use alloc::vec::Vec;

use libm::{cos, exp, sin};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub classes: usize,
    pub image_size: usize,
    pub noise_sigma: f32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 7,
            train_size: 64,
            val_size: 32,
            classes: 4,
            image_size: 32,
            noise_sigma: 0.15,
        }
    }
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig {
                field: "classes",
                message: alloc::string::String::from("need at least two classes"),
            });
        }
        if self.train_size == 0 || self.val_size == 0 {
            return Err(Error::EmptyInput("dataset split"));
        }
        if self.image_size < 4 {
            return Err(Error::InvalidConfig {
                field: "image_size",
                message: alloc::string::String::from("must be at least 4"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Materialized dataset: one grayscale image tensor and label list per split.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    cfg: DatasetConfig,
    train_images: Tensor4,
    train_labels: Vec<usize>,
    val_images: Tensor4,
    val_labels: Vec<usize>,
}

fn render_sample(cfg: &DatasetConfig, index: usize, out: &mut [f32]) -> usize {
    let class = index % cfg.classes;
    let mut rng = Rng::derive(cfg.seed, index as u64);
    let angle = class as f64 * core::f64::consts::PI / cfg.classes as f64
        + rng.uniform(-0.06, 0.06) as f64;
    let offset = rng.uniform(-2.0, 2.0) as f64;
    let ridge_width = 2.0f64;
    let s = cfg.image_size;
    let center = (s as f64 - 1.0) / 2.0;
    let (sin_a, cos_a) = (sin(angle), cos(angle));
    for y in 0..s {
        for x in 0..s {
            let u = x as f64 - center;
            let v = y as f64 - center;
            let d = -u * sin_a + v * cos_a - offset;
            let ridge = 2.0 * exp(-d * d / (2.0 * ridge_width * ridge_width));
            out[y * s + x] = ridge as f32 + cfg.noise_sigma * rng.normal();
        }
    }
    class
}

impl SyntheticDataset {
    pub fn generate(cfg: DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.image_size;
        let px = s * s;
        let build = |start: usize, count: usize| -> Result<(Tensor4, Vec<usize>)> {
            let mut data = alloc::vec![0.0f32; count * px];
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let label = render_sample(&cfg, start + i, &mut data[i * px..(i + 1) * px]);
                labels.push(label);
            }
            Ok((Tensor4::new(Shape::new(count, 1, s, s), data)?, labels))
        };
        let (train_images, train_labels) = build(0, cfg.train_size)?;
        let (val_images, val_labels) = build(cfg.train_size, cfg.val_size)?;
        Ok(SyntheticDataset {
            cfg,
            train_images,
            train_labels,
            val_images,
            val_labels,
        })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.cfg
    }

    pub fn classes(&self) -> usize {
        self.cfg.classes
    }

    pub fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_labels.len(),
            Split::Val => self.val_labels.len(),
        }
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    pub fn labels(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_labels,
            Split::Val => &self.val_labels,
        }
    }

    /// Gathers the samples at `indices` into one `(b, 1, s, s)` batch.
    pub fn batch(&self, split: Split, indices: &[usize]) -> Result<(Tensor4, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("batch index list"));
        }
        let (images, labels) = match split {
            Split::Train => (&self.train_images, &self.train_labels),
            Split::Val => (&self.val_images, &self.val_labels),
        };
        let s = self.cfg.image_size;
        let px = s * s;
        let mut data = Vec::with_capacity(indices.len() * px);
        let mut out_labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&images.data()[i * px..(i + 1) * px]);
            out_labels.push(labels[i]);
        }
        Ok((
            Tensor4::new(Shape::new(indices.len(), 1, s, s), data)?,
            out_labels,
        ))
    }
}

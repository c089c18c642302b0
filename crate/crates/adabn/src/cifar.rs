//! CIFAR-10 and CIFAR-100 binary batches.
//!
//! A CIFAR-10 record is one label byte followed by 3072 pixel bytes: the red,
//! green and blue 32x32 planes in row-major order. A CIFAR-100 record carries
//! a coarse and then a fine label byte before the same pixel block.

use std::fs;
use std::path::Path;

use adabn_core::data::LabeledDataset;
use adabn_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + PIXELS
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }
}

/// Raw records of one or more batch files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecords {
    pub variant: CifarVariant,
    /// Coarse labels; empty for CIFAR-10.
    pub coarse: Vec<u8>,
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl CifarRecords {
    pub fn new(variant: CifarVariant) -> Self {
        CifarRecords { variant, coarse: Vec::new(), labels: Vec::new(), pixels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Appends the records in `bytes`; `path` only labels errors.
    pub fn decode_into(&mut self, bytes: &[u8], path: &Path) -> Result<()> {
        let rec = self.variant.record_len();
        if !bytes.len().is_multiple_of(rec) {
            return Err(Error::Format {
                path: path.into(),
                reason: format!("{} bytes is not a whole number of {rec}-byte records", bytes.len()),
            });
        }
        let classes = self.variant.class_count();
        for (i, record) in bytes.chunks_exact(rec).enumerate() {
            let (head, pixels) = record.split_at(self.variant.label_bytes());
            let fine = head[head.len() - 1];
            if usize::from(fine) >= classes {
                return Err(Error::Format { path: path.into(), reason: format!("record {i}: label {fine} exceeds {classes} classes") });
            }
            if self.variant == CifarVariant::Cifar100 {
                self.coarse.push(head[0]);
            }
            self.labels.push(fine);
            self.pixels.extend_from_slice(pixels);
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.variant.record_len());
        for (i, pixels) in self.pixels.chunks_exact(PIXELS).enumerate() {
            if self.variant == CifarVariant::Cifar100 {
                out.push(self.coarse[i]);
            }
            out.push(self.labels[i]);
            out.extend_from_slice(pixels);
        }
        out
    }

    pub fn to_dataset(&self, name: &str) -> Result<LabeledDataset> {
        if self.is_empty() {
            return Err(Error::Core(adabn_core::Error::Data(format!("{name}: no records"))));
        }
        let values = self.pixels.iter().map(|&b| f32::from(b) / 255.0).collect();
        let images = Tensor::new(&[self.len(), CHANNELS, SIDE, SIDE], values)?;
        let labels = self.labels.iter().map(|&l| usize::from(l)).collect();
        Ok(LabeledDataset::new(images, labels, self.variant.class_count(), name)?)
    }

    /// Inverse of [`CifarRecords::to_dataset`]. CIFAR-100 coarse labels are
    /// not part of a dataset, so they are supplied separately (zeros if absent).
    pub fn from_dataset(data: &LabeledDataset, variant: CifarVariant, coarse: Option<&[u8]>) -> Result<Self> {
        if data.sample_shape() != [CHANNELS, SIDE, SIDE] {
            return Err(Error::Core(adabn_core::Error::Shape(format!("CIFAR images are 3x32x32, got {:?}", data.sample_shape()))));
        }
        let labels: Vec<u8> = data
            .labels
            .iter()
            .map(|&l| u8::try_from(l).ok().filter(|&b| usize::from(b) < variant.class_count()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Core(adabn_core::Error::Data(format!("labels must be below {}", variant.class_count()))))?;
        let coarse = match (variant, coarse) {
            (CifarVariant::Cifar10, _) => Vec::new(),
            (CifarVariant::Cifar100, Some(c)) if c.len() == labels.len() => c.to_vec(),
            (CifarVariant::Cifar100, Some(c)) => return Err(Error::Consistency { images: labels.len(), labels: c.len() }),
            (CifarVariant::Cifar100, None) => vec![0; labels.len()],
        };
        let pixels = data.images.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        Ok(CifarRecords { variant, coarse, labels, pixels })
    }
}

pub fn read_cifar_records<P: AsRef<Path>>(paths: &[P], variant: CifarVariant) -> Result<CifarRecords> {
    let mut records = CifarRecords::new(variant);
    for p in paths {
        let p = p.as_ref();
        records.decode_into(&fs::read(p).at(p)?, p)?;
    }
    Ok(records)
}

/// Reads and concatenates batch files into one dataset with pixels in [0, 1].
pub fn read_cifar_bin<P: AsRef<Path>>(paths: &[P], variant: CifarVariant) -> Result<LabeledDataset> {
    let name = match variant {
        CifarVariant::Cifar10 => "cifar10",
        CifarVariant::Cifar100 => "cifar100",
    };
    read_cifar_records(paths, variant)?.to_dataset(name)
}

pub fn write_cifar_bin(records: &CifarRecords, path: impl AsRef<Path>) -> Result<()> {
    let p = path.as_ref();
    fs::write(p, records.encode()).at(p)
}

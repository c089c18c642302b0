//! IDX containers as used by MNIST and Fashion-MNIST.
//!
//! An images file is the big-endian magic `0x00000803`, three big-endian
//! `u32` extents `[N, H, W]` and `N*H*W` unsigned pixel bytes. A labels file
//! is magic `0x00000801`, one extent `[N]` and `N` label bytes.

use std::fs;
use std::path::Path;

use adabn_core::data::LabeledDataset;
use adabn_core::Tensor;

use crate::error::{Error, IoContext, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Checks the magic and returns the declared extents and the payload.
fn split_header<'a>(bytes: &'a [u8], path: &Path, magic: u32, rank: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let header = 4 + 4 * rank;
    if bytes.len() < 4 {
        return Err(Error::Format { path: path.into(), reason: format!("{} bytes is too short for an IDX header", bytes.len()) });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::Magic { path: path.into(), found, expected: magic });
    }
    if bytes.len() < header {
        return Err(Error::Format { path: path.into(), reason: format!("header needs {header} bytes, file has {}", bytes.len()) });
    }
    let dims: Vec<usize> = (0..rank).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let payload = &bytes[header..];
    let expect: usize = dims.iter().product();
    if payload.len() != expect {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("extents {dims:?} need {expect} payload bytes, found {}", payload.len()),
        });
    }
    Ok((dims, payload))
}

/// Parses an IDX image/label pair already in memory. `images_path` and
/// `labels_path` only label errors.
pub fn decode_idx_pair(images: &[u8], labels: &[u8], images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (dims, pixels) = split_header(images, images_path, IMAGES_MAGIC, 3)?;
    let (ldims, label_bytes) = split_header(labels, labels_path, LABELS_MAGIC, 1)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if ldims[0] != n {
        return Err(Error::Consistency { images: n, labels: ldims[0] });
    }
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format { path: images_path.into(), reason: format!("empty extents {dims:?}") });
    }
    let values = pixels.iter().map(|&b| f32::from(b) / 255.0).collect();
    let images = Tensor::new(&[n, 1, h, w], values)?;
    let labels: Vec<usize> = label_bytes.iter().map(|&l| usize::from(l)).collect();
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    let name = images_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LabeledDataset::new(images, labels, class_count, name)?)
}

/// Reads an IDX images file and its labels file. Pixels are scaled by 1/255;
/// `class_count` is one more than the largest label.
pub fn read_idx_pair(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let ib = fs::read(ip).at(ip)?;
    let lb = fs::read(lp).at(lp)?;
    decode_idx_pair(&ib, &lb, ip, lp)
}

fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn extent(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_be_bytes)
        .map_err(|_| Error::Core(adabn_core::Error::Data(format!("{what} {v} does not fit an IDX extent"))))
}

/// Serializes single-channel images back to IDX bytes.
pub fn encode_idx_images(data: &LabeledDataset) -> Result<Vec<u8>> {
    let [c, h, w] = data.sample_shape();
    if c != 1 {
        return Err(Error::Core(adabn_core::Error::Shape(format!("IDX images carry one channel, dataset has {c}"))));
    }
    let mut out = Vec::with_capacity(16 + data.images.len());
    out.extend(IMAGES_MAGIC.to_be_bytes());
    out.extend(extent(data.len(), "count")?);
    out.extend(extent(h, "height")?);
    out.extend(extent(w, "width")?);
    out.extend(data.images.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn encode_idx_labels(data: &LabeledDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + data.len());
    out.extend(LABELS_MAGIC.to_be_bytes());
    out.extend(extent(data.len(), "count")?);
    for &l in &data.labels {
        let b = u8::try_from(l).map_err(|_| Error::Core(adabn_core::Error::Data(format!("label {l} does not fit a byte"))))?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_idx_pair(data: &LabeledDataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    fs::write(ip, encode_idx_images(data)?).at(ip)?;
    fs::write(lp, encode_idx_labels(data)?).at(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        images.extend([0, 85, 170, 255, 255, 170, 85, 0]);
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 1];
        (images, labels)
    }

    fn decode(i: &[u8], l: &[u8]) -> Result<LabeledDataset> {
        decode_idx_pair(i, l, Path::new("img"), Path::new("lbl"))
    }

    #[test]
    fn parses_small_fixture() {
        let (i, l) = fixture();
        let ds = decode(&i, &l).unwrap();
        assert_eq!(ds.images.shape(), &[2, 1, 2, 2]);
        assert_eq!(&ds.images.data()[..4], &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(ds.labels, vec![3, 1]);
        assert_eq!(ds.class_count, 4);
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let (i, l) = fixture();
        let ds = decode(&i, &l).unwrap();
        assert_eq!(encode_idx_images(&ds).unwrap(), i);
        assert_eq!(encode_idx_labels(&ds).unwrap(), l);
    }

    #[test]
    fn swapped_files_report_observed_magic() {
        let (i, l) = fixture();
        match decode(&l, &i) {
            Err(Error::Magic { found, expected, path }) => {
                assert_eq!((found, expected), (LABELS_MAGIC, IMAGES_MAGIC));
                assert_eq!(path, Path::new("img"));
            }
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let (i, _) = fixture();
        let l = vec![0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3];
        assert!(matches!(decode(&i, &l), Err(Error::Consistency { images: 2, labels: 3 })));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let (i, l) = fixture();
        assert!(matches!(decode(&i[..i.len() - 1], &l), Err(Error::Format { .. })));
        assert!(matches!(decode(&i[..10], &l), Err(Error::Format { .. })));
        assert!(matches!(decode(&i[..2], &l), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_idx_pair("/nonexistent/images", "/nonexistent/labels").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/images"));
    }
}

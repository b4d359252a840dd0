//! IDX binary format: big-endian `u32` magic, big-endian `u32` dimension
//! sizes, then unsigned bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxFile {
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse(path: &Path, magic: u32) -> Result<IdxFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let found = read_be_u32(&bytes, 0, path)?;
    if found != magic {
        return Err(Error::IdxBadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|d| read_be_u32(&bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndim;
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxFile {
        dims,
        payload: bytes[header..expected].to_vec(),
    })
}

/// Loads an image/label IDX pair; pixels are rescaled from bytes to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let images = parse(images_path, IMAGES_MAGIC)?;
    let labels = parse(labels_path.as_ref(), LABELS_MAGIC)?;
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if n != labels.dims[0] {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: labels.dims[0],
        });
    }
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::EmptyDataset);
    }
    let pixels = images.payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.payload.iter().map(|&b| usize::from(b)).collect();
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    let name = images_path
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, Tensor::new(vec![n, 1, h, w], pixels)?, labels, class_count)
}

/// Writes a single-channel dataset as an IDX pair; pixels are rounded to bytes.
pub fn write_idx(data: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let [c, h, w] = data.image_shape();
    if c != 1 {
        return Err(Error::InvalidParameter(format!("IDX export needs one channel, got {c}")));
    }
    let n = data.len() as u32;
    let mut img = Vec::with_capacity(16 + data.images().numel());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, h as u32, w as u32] {
        img.extend_from_slice(&d.to_be_bytes());
    }
    img.extend(data.images().data().iter().map(|&v| (v * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + data.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(data.labels().iter().map(|&l| l as u8));
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, img).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, lab).map_err(|e| Error::io(lp, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 128, 7, 1, 2, 254, 64]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 9];
        let ip = dir.join("img.idx");
        let lp = dir.join("lab.idx");
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.images().shape(), &[2, 1, 2, 2]);
        let expected: Vec<f64> = [0u8, 255, 128, 7, 1, 2, 254, 64]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        assert_eq!(d.images().data(), expected.as_slice());
        assert_eq!(d.images().data()[0], 0.0);
        assert_eq!(d.images().data()[1], 1.0);
        assert_eq!(d.labels(), &[3, 9]);
    }

    #[test]
    fn distinct_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        // swapped files: wrong magic
        assert!(matches!(load_idx(&lp, &ip), Err(Error::IdxBadMagic { .. })));

        let short = dir.path().join("short.idx");
        fs::write(&short, [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2]).unwrap();
        assert!(matches!(load_idx(&short, &lp), Err(Error::IdxTruncated { .. })));

        let three = dir.path().join("three.idx");
        fs::write(&three, [0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3]).unwrap();
        assert!(matches!(load_idx(&ip, &three), Err(Error::IdxCountMismatch { .. })));
    }

    #[test]
    fn write_then_load_is_identity_on_byte_grid() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let d = load_idx(&ip, &lp).unwrap();
        let (ip2, lp2) = (dir.path().join("a"), dir.path().join("b"));
        write_idx(&d, &ip2, &lp2).unwrap();
        assert_eq!(fs::read(&ip).unwrap(), fs::read(&ip2).unwrap());
        assert_eq!(load_idx(&ip2, &lp2).unwrap().images(), d.images());
    }
}

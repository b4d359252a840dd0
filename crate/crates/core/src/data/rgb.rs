use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loads a directory of header-less interleaved RGB files named
/// `<index>_<label>.rgb`, each exactly `width * height * 3` bytes.
/// Images are returned planar `(n, 3, h, w)` in index order.
pub fn load_rgb_dir(dir: impl AsRef<Path>, width: usize, height: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("rgb") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let parsed = stem
            .split_once('_')
            .and_then(|(i, l)| Some((i.parse::<usize>().ok()?, l.parse::<usize>().ok()?)));
        let Some((index, label)) = parsed else {
            return Err(Error::InvalidParameter(format!(
                "{}: expected <index>_<label>.rgb",
                path.display()
            )));
        };
        entries.push((index, label, path));
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries.sort_by_key(|e| e.0);
    let plane = width * height;
    let mut data = Vec::with_capacity(entries.len() * plane * 3);
    let mut labels = Vec::with_capacity(entries.len());
    for (_, label, path) in &entries {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != plane * 3 {
            return Err(Error::IdxTruncated {
                path: path.clone(),
                expected: plane * 3,
                found: bytes.len(),
            });
        }
        for ch in 0..3 {
            data.extend((0..plane).map(|p| f64::from(bytes[p * 3 + ch]) / 255.0));
        }
        labels.push(*label);
    }
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    let images = Tensor::new(vec![entries.len(), 3, height, width], data)?;
    let name = dir
        .file_name()
        .map_or_else(|| "rgb".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, images, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaved_to_planar() {
        let dir = tempfile::tempdir().unwrap();
        // 2x1 image: pixel0 = (255, 0, 51), pixel1 = (0, 255, 102)
        fs::write(dir.path().join("1_4.rgb"), [255, 0, 51, 0, 255, 102]).unwrap();
        fs::write(dir.path().join("0_2.rgb"), [0; 6]).unwrap();
        let d = load_rgb_dir(dir.path(), 2, 1).unwrap();
        assert_eq!(d.labels(), &[2, 4]);
        let img = d.image(1).unwrap();
        assert_eq!(img.shape(), &[3, 1, 2]);
        assert_eq!(img.data(), &[1.0, 0.0, 0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn wrong_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("0_0.rgb"), [0; 5]).unwrap();
        assert!(load_rgb_dir(dir.path(), 2, 1).is_err());
    }
}

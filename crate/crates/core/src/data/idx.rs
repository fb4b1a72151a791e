//! IDX files as used by MNIST: big-endian header, unsigned byte payload.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::graph::PointCloud;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn eof(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("{what} file is truncated"))
        } else {
            Error::Io(e)
        }
    }
}

/// Returns `(count, rows * cols, pixels scaled to [0, 1])`.
pub fn read_idx_images<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let magic = r.read_u32::<BigEndian>().map_err(eof("image"))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {magic} (expected {IMAGES_MAGIC})")));
    }
    let count = r.read_u32::<BigEndian>().map_err(eof("image"))? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(eof("image"))? as usize;
    let cols = r.read_u32::<BigEndian>().map_err(eof("image"))? as usize;
    let mut raw = vec![0u8; count * rows * cols];
    r.read_exact(&mut raw).map_err(eof("image"))?;
    Ok((count, rows * cols, raw.into_iter().map(|b| f64::from(b) / 255.0).collect()))
}

pub fn read_idx_labels<R: Read>(mut r: R) -> Result<Vec<usize>> {
    let magic = r.read_u32::<BigEndian>().map_err(eof("label"))?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {magic} (expected {LABELS_MAGIC})")));
    }
    let count = r.read_u32::<BigEndian>().map_err(eof("label"))? as usize;
    let mut raw = vec![0u8; count];
    r.read_exact(&mut raw).map_err(eof("label"))?;
    Ok(raw.into_iter().map(usize::from).collect())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Loads one image/label file pair.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    load_mnist_pairs(&[(images, labels)])
}

/// Concatenates several image/label pairs in order, e.g. train then test.
pub fn load_mnist_pairs(pairs: &[(&Path, &Path)]) -> Result<LabeledDataset> {
    let mut data = Vec::new();
    let mut all_labels = Vec::new();
    let mut dim = None;
    for &(img, lab) in pairs {
        let (count, d, pixels) = read_idx_images(open(img)?)?;
        let labels = read_idx_labels(open(lab)?)?;
        if labels.len() != count {
            return Err(Error::Format(format!(
                "{} has {count} images but {} has {} labels",
                img.display(),
                lab.display(),
                labels.len()
            )));
        }
        if *dim.get_or_insert(d) != d {
            return Err(Error::Format("image sizes differ between files".into()));
        }
        data.extend(pixels);
        all_labels.extend(labels);
    }
    let dim = dim.ok_or_else(|| Error::invalid("no IDX files given"))?;
    let k = all_labels.iter().max().map_or(0, |m| m + 1);
    let cloud = PointCloud::new(data, dim)?;
    LabeledDataset::new(cloud, all_labels, k, "mnist")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, side: u32, fill: u8) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [2051u32, count, side, side] {
            v.extend(x.to_be_bytes());
        }
        v.extend(std::iter::repeat_n(fill, (count * side * side) as usize));
        v
    }

    #[test]
    fn header_and_scaling() {
        let buf = images(2, 2, 255);
        assert_eq!(&buf[..4], &[0, 0, 8, 3]);
        let (count, dim, px) = read_idx_images(&buf[..]).unwrap();
        assert_eq!((count, dim), (2, 4));
        assert!(px.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn labels_and_errors() {
        let mut lab = Vec::new();
        lab.extend(2049u32.to_be_bytes());
        lab.extend(3u32.to_be_bytes());
        lab.extend([7u8, 0, 9]);
        assert_eq!(read_idx_labels(&lab[..]).unwrap(), vec![7, 0, 9]);
        assert!(matches!(read_idx_labels(&lab[..lab.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_idx_images(&lab[..]), Err(Error::Format(_))));
    }
}

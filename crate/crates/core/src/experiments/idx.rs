//! IDX files: a 4-byte magic `00 00 08 NN` (`NN` = rank), big-endian u32
//! dimensions, then a u8 payload.

use super::ExperimentError;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Items along the first dimension.
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item_size(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    /// Item `i` scaled to `[0, 1]`.
    pub fn scaled(&self, i: usize) -> Vec<f64> {
        let n = self.item_size();
        self.data[i * n..(i + 1) * n].iter().map(|&b| f64::from(b) / 255.0).collect()
    }
}

fn data_err(file: &str, offset: usize, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Data {
        file: file.to_string(),
        offset,
        message: message.into(),
    }
}

/// Parses IDX bytes; `file` only labels errors. Accepts the images
/// (`0x0803`) and labels (`0x0801`) magics.
pub fn parse_idx(bytes: &[u8], file: &str) -> Result<IdxArray, ExperimentError> {
    let word = |at: usize| -> Result<u32, ExperimentError> {
        if bytes.len() < at + 4 {
            return Err(data_err(file, bytes.len(), format!("truncated header: need byte {}", at + 4)));
        }
        Ok(u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()))
    };
    let magic = word(0)?;
    let rank = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        _ => return Err(data_err(file, 0, format!("bad magic {magic:#010x}"))),
    };
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        dims.push(word(4 + 4 * r)? as usize);
    }
    let start = 4 + 4 * rank;
    let need = dims.iter().product::<usize>();
    if bytes.len() < start + need {
        return Err(data_err(
            file,
            bytes.len(),
            format!("truncated payload: expected {need} bytes from offset {start}"),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..start + need].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxArray, ExperimentError> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| data_err(&name, 0, e.to_string()))?;
    parse_idx(&bytes, &name)
}

/// Serializes `array` to IDX bytes (rank 3 images or rank 1 labels).
pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let magic = if array.dims.len() == 1 { LABELS_MAGIC } else { IMAGES_MAGIC };
    let mut out = magic.to_be_bytes().to_vec();
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: usize) -> Vec<u8> {
        encode_idx(&IdxArray {
            dims: vec![n, 2, 2],
            data: (0..n * 4).map(|v| (v * 17 % 256) as u8).collect(),
        })
    }

    #[test]
    fn parses_images_and_labels() {
        let a = parse_idx(&images(3), "x").unwrap();
        assert_eq!(a.dims, vec![3, 2, 2]);
        assert_eq!(a.scaled(1)[0], 68.0 / 255.0);
        let mut lab = vec![0, 0, 8, 1, 0, 0, 0, 2];
        lab.extend([7, 9]);
        let l = parse_idx(&lab, "y").unwrap();
        assert_eq!((l.dims.clone(), l.data.clone()), (vec![2], vec![7, 9]));
    }

    #[test]
    fn header_of_full_mnist() {
        let mut b = vec![0, 0, 8, 3];
        for d in [60000u32, 28, 28] {
            b.extend(d.to_be_bytes());
        }
        match parse_idx(&b, "train") {
            Err(ExperimentError::Data { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let mut b = images(3);
        b.truncate(20);
        match parse_idx(&b, "imgs") {
            Err(ExperimentError::Data { file, offset, .. }) => assert_eq!((file.as_str(), offset), ("imgs", 20)),
            other => panic!("{other:?}"),
        }
        match parse_idx(&[0, 0, 8, 3, 0, 0], "imgs") {
            Err(ExperimentError::Data { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match parse_idx(&[1, 2, 3, 4], "imgs") {
            Err(ExperimentError::Data { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }
}

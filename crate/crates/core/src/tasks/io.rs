//! Flat binary dataset layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"FSTDATA\0"
//! 8       4     u32    format version (1)
//! 12      4     u32    layout: 0 = feature vectors, 1 = images
//! 16      4     u32    height   (1 for feature vectors)
//! 20      4     u32    width    (1 for feature vectors)
//! 24      4     u32    channels (feature dimension for feature vectors)
//! 28      4     u32    num_classes
//! 32      8     u64    item count n
//! 40      8     u64    global id of the first item
//! 48      ...   f64    n * height * width * channels inputs, row-major
//! ...     ...   i32    n * height * width labels, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DataSet;
use crate::error::{Error, Result};
use crate::models::InputShape;

pub const DATASET_MAGIC: &[u8; 8] = b"FSTDATA\0";
const VERSION: u32 = 1;

pub fn write_dataset<W: Write>(mut out: W, set: &DataSet) -> Result<()> {
    let (kind, h, w, c) = match set.input {
        InputShape::Features(d) => (0u32, 1, 1, d),
        InputShape::Image {
            height,
            width,
            channels,
        } => (1u32, height, width, channels),
    };
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::BadDataset(format!("dimension {v} exceeds u32")))
    };
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&kind.to_le_bytes())?;
    for v in [h, w, c, set.num_classes] {
        out.write_all(&to_u32(v)?.to_le_bytes())?;
    }
    out.write_all(&(set.len() as u64).to_le_bytes())?;
    out.write_all(&(set.first_id as u64).to_le_bytes())?;
    for v in &set.inputs {
        out.write_all(&v.to_le_bytes())?;
    }
    for &l in &set.labels {
        let l = i32::try_from(l).map_err(|_| Error::BadDataset(format!("label {l} exceeds i32")))?;
        out.write_all(&l.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<DataSet> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::BadDataset("bad magic".into()));
    }
    let mut u32s = [0u32; 6];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *v = u32::from_le_bytes(b);
    }
    let [version, kind, h, w, c, classes] = u32s.map(|v| v as usize);
    if version != VERSION as usize {
        return Err(Error::BadDataset(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    input.read_exact(&mut b8)?;
    let first_id = u64::from_le_bytes(b8) as usize;
    let shape = match kind {
        0 if h == 1 && w == 1 => InputShape::Features(c),
        1 => InputShape::Image {
            height: h,
            width: w,
            channels: c,
        },
        _ => return Err(Error::BadDataset(format!("bad layout tag {kind} for {h}x{w}"))),
    };
    let mut set = DataSet::new(shape, classes, first_id);
    let n_inputs = n
        .checked_mul(set.values_per_item())
        .ok_or_else(|| Error::BadDataset("size overflow".into()))?;
    let n_labels = n * set.rows_per_item();
    set.inputs.reserve(n_inputs);
    for _ in 0..n_inputs {
        input.read_exact(&mut b8)?;
        set.inputs.push(f64::from_le_bytes(b8));
    }
    set.labels.reserve(n_labels);
    let mut b4 = [0u8; 4];
    for _ in 0..n_labels {
        input.read_exact(&mut b4)?;
        let l = i32::from_le_bytes(b4);
        if l < 0 || l as usize >= classes {
            return Err(Error::BadDataset(format!("label {l} out of range")));
        }
        set.labels.push(l as usize);
    }
    if input.read(&mut b4)? != 0 {
        return Err(Error::BadDataset("trailing bytes".into()));
    }
    Ok(set)
}

pub fn write_dataset_file(path: &Path, set: &DataSet) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), set)
}

pub fn read_dataset_file(path: &Path) -> Result<DataSet> {
    read_dataset(BufReader::new(File::open(path)?))
}

//! Little-endian binary dataset file:
//!
//! ```text
//! "GSCL"  version:u32=1  H:u32  W:u32  Ch:u32  C:u32  count:u64
//! count × { C × f64 label, H·W·Ch × f64 pixels }
//! ```

use super::{DataError, Dataset, Image, LabeledExample, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

pub const DATASET_MAGIC: [u8; 4] = *b"GSCL";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(ds: &Dataset, out: &mut W) -> Result<()> {
    let (h, w, ch) = ds.shape();
    out.write_all(&DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    for v in [h, w, ch, ds.classes()] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(&(ds.len() as u64).to_le_bytes())?;
    for ex in ds.examples() {
        for v in ex.label.iter().chain(ex.image.pixels()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => DataError::Truncated,
        _ => DataError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read_dataset<R: Read>(input: &mut R, name: &str) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    read_exact(input, &mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(DataError::BadMagic(magic));
    }
    let version = read_u32(input)?;
    if version != DATASET_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let h = read_u32(input)? as usize;
    let w = read_u32(input)? as usize;
    let ch = read_u32(input)? as usize;
    let classes = read_u32(input)? as usize;
    let count = read_u64(input)?;
    if h == 0 || w == 0 || ch == 0 || classes == 0 {
        return Err(DataError::Invalid("zero dimension in header".into()));
    }
    let mut examples = Vec::new();
    for _ in 0..count {
        let label = read_f64s(input, classes)?;
        let pixels = read_f64s(input, h * w * ch)?;
        let image = Image::new(h, w, ch, pixels)?;
        examples.push(LabeledExample::new(image, label)?);
    }
    let mut probe = [0u8; 1];
    match input.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(DataError::Invalid("trailing bytes after last example".into())),
        Err(e) => return Err(DataError::Io(e)),
    }
    Dataset::new(name, (h, w, ch), classes, examples)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Loads a dataset; its display name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut input = BufReader::new(File::open(path)?);
    read_dataset(&mut input, &name)
}

//! Little-endian checkpoint file:
//!
//! ```text
//! "GSCM"  version:u32=1  count:u32
//! count × { role:u32  aux:f64  n_dims:u32  dims:n_dims×u32  n_params:u64  params:n_params×f64 }
//! ```
//!
//! `aux` carries the softening temperature for teacher records and is 0
//! otherwise.

use super::{ContrastiveModel, LinearProbe, Mlp, ModelError, Result, TeacherNet};
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GSCM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    Encoder = 0,
    Projection = 1,
    Teacher = 2,
    Probe = 3,
}

impl NetRole {
    fn from_u32(v: u32) -> Result<Self> {
        Ok(match v {
            0 => NetRole::Encoder,
            1 => NetRole::Projection,
            2 => NetRole::Teacher,
            3 => NetRole::Probe,
            other => return Err(ModelError::Checkpoint(format!("unknown net role {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetRecord {
    pub role: NetRole,
    pub aux: f64,
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub nets: Vec<NetRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &ContrastiveModel) -> Self {
        Self {
            nets: vec![
                NetRecord {
                    role: NetRole::Encoder,
                    aux: 0.0,
                    net: model.encoder.clone(),
                },
                NetRecord {
                    role: NetRole::Projection,
                    aux: 0.0,
                    net: model.projection.clone(),
                },
            ],
        }
    }

    pub fn from_teacher(teacher: &TeacherNet) -> Self {
        Self {
            nets: vec![NetRecord {
                role: NetRole::Teacher,
                aux: teacher.temperature,
                net: teacher.net.clone(),
            }],
        }
    }

    pub fn with_probe(mut self, probe: &LinearProbe) -> Self {
        self.nets.push(NetRecord {
            role: NetRole::Probe,
            aux: 0.0,
            net: probe.net.clone(),
        });
        self
    }

    pub fn find(&self, role: NetRole) -> Option<&NetRecord> {
        self.nets.iter().find(|r| r.role == role)
    }

    pub fn encoder(&self) -> Result<&Mlp> {
        self.find(NetRole::Encoder)
            .map(|r| &r.net)
            .ok_or_else(|| ModelError::Checkpoint("no encoder record".into()))
    }

    pub fn model(&self) -> Result<ContrastiveModel> {
        let proj = self
            .find(NetRole::Projection)
            .ok_or_else(|| ModelError::Checkpoint("no projection record".into()))?;
        ContrastiveModel::from_parts(self.encoder()?.clone(), proj.net.clone())
    }

    pub fn teacher(&self) -> Result<TeacherNet> {
        let r = self
            .find(NetRole::Teacher)
            .ok_or_else(|| ModelError::Checkpoint("no teacher record".into()))?;
        if !(r.aux > 0.0) {
            return Err(ModelError::Checkpoint(format!("teacher temperature {} not positive", r.aux)));
        }
        Ok(TeacherNet {
            net: r.net.clone(),
            temperature: r.aux,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(self, &mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write_checkpoint(self, &mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_checkpoint(&mut BufReader::new(File::open(path)?))
    }
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, out: &mut W) -> Result<()> {
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(ck.nets.len() as u32).to_le_bytes())?;
    for rec in &ck.nets {
        out.write_all(&(rec.role as u32).to_le_bytes())?;
        out.write_all(&rec.aux.to_le_bytes())?;
        let dims = rec.net.dims();
        out.write_all(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let params = rec.net.params();
        out.write_all(&(params.len() as u64).to_le_bytes())?;
        for p in params {
            out.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => ModelError::Truncated,
        _ => ModelError::Io(e),
    })
}

fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    fill(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn u64_le<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    fill(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn f64_le<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(u64_le(r)?))
}

const MAX_DIMS: u32 = 64;

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    fill(input, &mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic(magic));
    }
    let version = u32_le(input)?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let count = u32_le(input)?;
    let mut nets = Vec::new();
    for _ in 0..count {
        let role = NetRole::from_u32(u32_le(input)?)?;
        let aux = f64_le(input)?;
        let n_dims = u32_le(input)?;
        if n_dims > MAX_DIMS {
            return Err(ModelError::Checkpoint(format!("{n_dims} layer dims")));
        }
        let dims = (0..n_dims)
            .map(|_| u32_le(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_params = u64_le(input)? as usize;
        if n_params != super::param_count(&dims) {
            return Err(ModelError::ParamCount {
                expected: super::param_count(&dims),
                got: n_params,
            });
        }
        let mut bytes = vec![0u8; n_params * 8];
        fill(input, &mut bytes)?;
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        nets.push(NetRecord {
            role,
            aux,
            net: Mlp::from_params(&dims, params)?,
        });
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { nets })
}

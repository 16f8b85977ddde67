//! `NWSC` checkpoint files. Layout, all little-endian: magic, u32 version,
//! u8 arch id, u32-length-prefixed profile name, u32 tensor count, then per
//! tensor a u32-length-prefixed name, u32 ndim, u32 dims and f32 data.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::ParamStore;
use crate::dsp::ProfileName;

const MAGIC: &[u8; 4] = b"NWSC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchId {
    Nsf,
    WaveNet,
}

impl ArchId {
    pub fn code(self) -> u8 {
        match self {
            ArchId::Nsf => 1,
            ArchId::WaveNet => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ArchId::Nsf),
            2 => Some(ArchId::WaveNet),
            _ => None,
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchId::Nsf => "NSF",
            ArchId::WaveNet => "WAVENET",
        })
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown arch id {0}")]
    UnknownArch(u8),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after tensor table")]
    TrailingBytes(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("arch mismatch: checkpoint holds {found}, expected {expected}")]
    ArchMismatch { expected: ArchId, found: ArchId },
    #[error("profile mismatch: checkpoint uses {found}, data uses {expected}")]
    ProfileMismatch { expected: ProfileName, found: ProfileName },
    #[error("tensor {name}: shape {found:?} does not match architecture shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint lacks tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor {0}")]
    UnexpectedTensor(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub arch: ArchId,
    pub profile: ProfileName,
    pub tensors: Vec<NamedTensor>,
}

impl ModelCheckpoint {
    pub fn from_store(arch: ArchId, profile: ProfileName, store: &ParamStore<f32>) -> Self {
        let tensors = store
            .tensors()
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.data.clone(),
            })
            .collect();
        Self { arch, profile, tensors }
    }

    pub fn expect_arch(&self, arch: ArchId) -> Result<(), CheckpointError> {
        if self.arch == arch {
            Ok(())
        } else {
            Err(CheckpointError::ArchMismatch {
                expected: arch,
                found: self.arch,
            })
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Overwrites every tensor of `store` with the same-named checkpoint
    /// tensor. Names and shapes must match exactly in both directions.
    pub fn copy_into(&self, store: &mut ParamStore<f32>) -> Result<(), CheckpointError> {
        if let Some(extra) = self.tensors.iter().find(|t| store.id(&t.name).is_none()) {
            return Err(CheckpointError::UnexpectedTensor(extra.name.clone()));
        }
        for p in store.tensors_mut() {
            let t = self
                .tensor(&p.name)
                .ok_or_else(|| CheckpointError::MissingTensor(p.name.clone()))?;
            if t.shape != p.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: p.name.clone(),
                    expected: p.shape.clone(),
                    found: t.shape.clone(),
                });
            }
            p.data.copy_from_slice(&t.data);
        }
        Ok(())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(ckpt.arch.code());
    put_str(&mut buf, &ckpt.profile.to_string());
    put_u32(&mut buf, ckpt.tensors.len());
    for t in &ckpt.tensors {
        put_str(&mut buf, &t.name);
        put_u32(&mut buf, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut buf, d);
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(self.section))?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated(self.section))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()?;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Malformed("name is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint, CheckpointError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        section: "header",
    };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let code = r.take(1)?[0];
    let arch = ArchId::from_code(code).ok_or(CheckpointError::UnknownArch(code))?;
    let profile_name = r.string()?;
    let profile: ProfileName = profile_name
        .parse()
        .map_err(|_| CheckpointError::Malformed(format!("unknown profile {profile_name}")))?;
    let count = r.u32()?;
    r.section = "tensor table";
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor {name} is too large")))?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(NamedTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(ModelCheckpoint { arch, profile, tensors })
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.into(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.into(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

//! `MEL0` binary matrix files: magic, u32 frames, u32 dims,
//! u32-length-prefixed profile name, then row-major f32 (all little-endian).

use std::path::Path;

use super::{DspError, FeatureProfile, MelSpectrogram, ProfileName};

const MAGIC: &[u8; 4] = b"MEL0";

pub fn write_mel(mel: &MelSpectrogram, path: impl AsRef<Path>) -> Result<(), DspError> {
    let path = path.as_ref();
    let name = mel.profile.name.to_string();
    let mut buf = Vec::with_capacity(16 + name.len() + mel.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(mel.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(mel.n_mels as u32).to_le_bytes());
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    for v in &mel.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|source| DspError::Io {
        path: path.into(),
        source,
    })
}

pub fn read_mel(path: impl AsRef<Path>) -> Result<MelSpectrogram, DspError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DspError::Io {
        path: path.into(),
        source,
    })?;
    let bad = |message: &str| DspError::BadMelFile {
        path: path.into(),
        message: message.into(),
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], DspError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let frames = u32_at(take(4)?);
    let dims = u32_at(take(4)?);
    let name_len = u32_at(take(4)?);
    let name = std::str::from_utf8(take(name_len)?).map_err(|_| bad("profile name is not UTF-8"))?;
    let profile = FeatureProfile::by_name(name.parse::<ProfileName>()?);
    if dims != profile.n_mels {
        return Err(bad(&format!("{dims} dims but profile {name} has {}", profile.n_mels)));
    }
    let raw = take(frames.checked_mul(dims * 4).ok_or_else(|| bad("size overflow"))?)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if take(1).is_ok() {
        return Err(bad("trailing bytes"));
    }
    Ok(MelSpectrogram {
        frames,
        n_mels: dims,
        data,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.mel");
        let mel = MelSpectrogram {
            frames: 3,
            n_mels: 80,
            data: (0..240).map(|i| i as f32 * 0.5 - 7.0).collect(),
            profile: FeatureProfile::ft(),
        };
        write_mel(&mel, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"MEL0");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 80);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(&bytes[16..18], b"FT");
        assert_eq!(bytes.len(), 18 + 240 * 4);
        assert_eq!(read_mel(&p).unwrap(), mel);

        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_mel(&p), Err(DspError::BadMelFile { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, bad).unwrap();
        assert!(read_mel(&p).is_err());
    }
}

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One track: audio, its F0 labels, and where it belongs.
///
/// Paths are kept as written in the manifest; relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub audio_path: PathBuf,
    pub f0_path: PathBuf,
    pub instrument: String,
    pub piece_id: String,
    pub split: Split,
}

impl CorpusRecord {
    /// File stem of the audio path, used to name derived artifacts.
    pub fn stem(&self) -> String {
        self.audio_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Tab-separated manifest: `audio_path, f0_path, instrument, piece_id, split`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub base_dir: PathBuf,
    pub records: Vec<CorpusRecord>,
}

impl CorpusManifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        let manifest = Self {
            base_dir: base_dir.into(),
            records,
        };
        manifest.check_disjoint()?;
        Ok(manifest)
    }

    /// Loads a manifest, checking split disjointness and that every
    /// referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CorpusError::ManifestParse {
                path: path.into(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
            }
            let split = fields[4].trim().parse::<Split>().map_err(err)?;
            records.push(CorpusRecord {
                audio_path: PathBuf::from(fields[0]),
                f0_path: PathBuf::from(fields[1]),
                instrument: fields[2].to_string(),
                piece_id: fields[3].to_string(),
                split,
            });
        }
        let manifest = Self::new(base_dir, records)?;
        for (i, rec) in manifest.records.iter().enumerate() {
            for p in [manifest.audio_path(rec), manifest.f0_path(rec)] {
                if !p.is_file() {
                    return Err(manifest.record_error(
                        i,
                        CorpusError::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.audio_path.display(),
                r.f0_path.display(),
                r.instrument,
                r.piece_id,
                r.split
            ));
        }
        std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
    }

    pub fn audio_path(&self, record: &CorpusRecord) -> PathBuf {
        self.base_dir.join(&record.audio_path)
    }

    pub fn f0_path(&self, record: &CorpusRecord) -> PathBuf {
        self.base_dir.join(&record.f0_path)
    }

    pub fn subset(&self, split: Split) -> CorpusManifest {
        CorpusManifest {
            base_dir: self.base_dir.clone(),
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub(crate) fn record_error(&self, index: usize, source: CorpusError) -> CorpusError {
        let rec = &self.records[index];
        CorpusError::Record {
            record: index,
            instrument: rec.instrument.clone(),
            piece: rec.piece_id.clone(),
            source: Box::new(source),
        }
    }

    fn check_disjoint(&self) -> Result<(), CorpusError> {
        let train: HashSet<&str> = self
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.piece_id.as_str())
            .collect();
        match self
            .records
            .iter()
            .find(|r| r.split == Split::Test && train.contains(r.piece_id.as_str()))
        {
            Some(r) => Err(CorpusError::SplitOverlap(r.piece_id.clone())),
            None => Ok(()),
        }
    }
}

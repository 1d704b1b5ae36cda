//! Corpus manifests: a tab-separated listing of audio files with their split
//! assignment and duration, one `path<TAB>split<TAB>duration_s` line each.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::wav::load_waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
    pub duration_s: f64,
}

/// A parsed manifest. Relative paths are resolved against the manifest's
/// directory at load time; each file may appear in at most one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (p, s, d) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(p), Some(s), Some(d), None) => (p, s, d),
                _ => {
                    return Err(Error::Config(format!(
                        "manifest line {}: expected `path<TAB>split<TAB>duration`",
                        lineno + 1
                    )))
                }
            };
            let file = if Path::new(p).is_absolute() {
                PathBuf::from(p)
            } else {
                base.join(p)
            };
            if !seen.insert(file.clone()) {
                return Err(Error::Config(format!(
                    "manifest line {}: {} listed twice (splits must be disjoint)",
                    lineno + 1,
                    file.display()
                )));
            }
            let duration_s: f64 = d.parse().map_err(|_| {
                Error::Config(format!("manifest line {}: bad duration {d:?}", lineno + 1))
            })?;
            if !(duration_s > 0.0) {
                return Err(Error::Config(format!(
                    "manifest line {}: duration must be positive",
                    lineno + 1
                )));
            }
            entries.push(ManifestEntry { path: file, split: Split::parse(s)?, duration_s });
        }
        Ok(CorpusManifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!(
                "{}\t{}\t{}\n",
                e.path.display(),
                e.split.name(),
                e.duration_s
            ));
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn total_duration_s(&self, split: Split) -> f64 {
        self.split(split).map(|e| e.duration_s).sum()
    }

    /// Load every waveform of one split, enforcing a common sample rate.
    pub fn load_split<T: Scalar>(
        &self,
        split: Split,
        expected_rate: u32,
    ) -> Result<Vec<Waveform<T>>> {
        self.split(split).map(|e| load_waveform(&e.path, Some(expected_rate))).collect()
    }
}

//! Dataset manifest and in-memory dataset.
//!
//! ```json
//! {
//!   "vocabulary": "vocab.txt",
//!   "vocals": [{"audio": "vocals/a.wav", "alignment": "align/a.csv", "singer": "s0", "split": "train"}],
//!   "accompaniments": [{"audio": "acc/b.wav", "split": "train"}]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, AudioClip};
use crate::error::{Error, Result};
use crate::lyrics::{expand_to_frames, parse_alignment, FrameLabels, PhonemeVocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocalEntry {
    pub audio: PathBuf,
    pub alignment: PathBuf,
    pub singer: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccompanimentEntry {
    pub audio: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Phoneme vocabulary file; needed to read alignments.
    pub vocabulary: PathBuf,
    pub vocals: Vec<VocalEntry>,
    pub accompaniments: Vec<AccompanimentEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Files may not appear in more than one split or role.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let files = self
            .vocals
            .iter()
            .flat_map(|v| [&v.audio, &v.alignment])
            .chain(self.accompaniments.iter().map(|a| &a.audio));
        for f in files {
            if !seen.insert(f) {
                return Err(Error::Dataset(format!("{} is listed more than once", f.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VocalTrack {
    pub name: String,
    pub singer: String,
    pub split: Split,
    pub audio: AudioClip,
    /// Labels for every STFT frame of `audio`.
    pub labels: FrameLabels,
}

#[derive(Clone, Debug)]
pub struct AccompanimentTrack {
    pub name: String,
    pub split: Split,
    pub audio: AudioClip,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocabulary: PhonemeVocabulary,
    pub vocals: Vec<VocalTrack>,
    pub accompaniments: Vec<AccompanimentTrack>,
    /// Non-fatal notes from loading (resampling, truncated syllables).
    pub warnings: Vec<String>,
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(&manifest, root)
    }

    pub fn from_manifest(manifest: &DatasetManifest, root: &Path) -> Result<Self> {
        manifest.validate()?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
        let vocab_path = resolve(&manifest.vocabulary);
        let vocab_text = std::fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let vocabulary = PhonemeVocabulary::parse(&vocab_text)?;
        let warnings = std::cell::RefCell::new(Vec::new());
        let load_audio = |p: &Path| -> Result<AudioClip> {
            let path = resolve(p);
            let (clip, info) = read_wav(&path)?;
            if info.resampled || info.downmixed {
                warnings.borrow_mut().push(format!(
                    "{}: converted from {} Hz, {} channel(s)",
                    p.display(),
                    info.original_rate,
                    info.original_channels
                ));
            }
            Ok(clip)
        };
        let mut vocals = Vec::new();
        for v in &manifest.vocals {
            let audio = load_audio(&v.audio)?;
            let apath = resolve(&v.alignment);
            let text = std::fs::read_to_string(&apath).map_err(|e| Error::io(&apath, e))?;
            let rows = parse_alignment(&text, &vocabulary)
                .map_err(|e| Error::Dataset(format!("{}: {e}", v.alignment.display())))?;
            vocals.push((v, audio, rows));
        }
        let vocals = vocals
            .into_iter()
            .map(|(v, audio, rows)| {
                let e = expand_to_frames(&rows, audio.n_frames());
                warnings.borrow_mut().extend(e.warnings.into_iter().map(|w| format!("{}: {w}", v.alignment.display())));
                VocalTrack {
                    name: stem(&v.audio),
                    singer: v.singer.clone(),
                    split: v.split,
                    audio,
                    labels: e.labels,
                }
            })
            .collect();
        let mut accompaniments = Vec::new();
        for a in &manifest.accompaniments {
            accompaniments.push(AccompanimentTrack {
                name: stem(&a.audio),
                split: a.split,
                audio: load_audio(&a.audio)?,
            });
        }
        Ok(Dataset {
            vocabulary,
            vocals,
            accompaniments,
            warnings: warnings.into_inner(),
        })
    }

    pub fn vocals_in(&self, split: Split) -> impl Iterator<Item = &VocalTrack> {
        self.vocals.iter().filter(move |v| v.split == split)
    }

    pub fn accompaniments_in(&self, split: Split) -> impl Iterator<Item = &AccompanimentTrack> {
        self.accompaniments.iter().filter(move |a| a.split == split)
    }

    /// Distinct singers with at least one track in `split`, in first-seen order.
    pub fn singers(&self, split: Split) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for v in self.vocals_in(split) {
            if !out.contains(&v.singer) {
                out.push(v.singer.clone());
            }
        }
        out
    }
}

//! Phoneme vocabularies, syllable alignments and per-frame label sequences.
//!
//! Alignment CSV:
//!
//! ```text
//! start_sec,end_sec,onset,nucleus,coda
//! 0.000,0.139,k,a,m
//! 0.200,0.410,,o,
//! ```
//!
//! Empty onset or coda fields mean the part is absent.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{HOP, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};

pub const SILENCE: usize = 0;
pub const SILENCE_SYMBOL: &str = "SIL";
/// Frames given to an onset or a coda when the syllable is long enough.
pub const CONSONANT_FRAMES: usize = 4;

const CSV_HEADER: &str = "start_sec,end_sec,onset,nucleus,coda";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeVocabulary {
    symbols: Vec<String>,
}

impl PhonemeVocabulary {
    /// Builds a vocabulary from non-silence symbols; `SIL` is prepended.
    pub fn new<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        let mut all = vec![SILENCE_SYMBOL.to_string()];
        all.extend(symbols.iter().map(|s| s.as_ref().to_string()));
        Self::from_symbols(all)
    }

    fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        if symbols.first().map(String::as_str) != Some(SILENCE_SYMBOL) {
            return Err(Error::Validation(format!("vocabulary must start with {SILENCE_SYMBOL}")));
        }
        if symbols.len() < 2 {
            return Err(Error::Validation("vocabulary needs at least one phoneme besides SIL".into()));
        }
        let mut seen = HashSet::new();
        for s in &symbols {
            if s.is_empty() || s.contains(',') || s.chars().any(char::is_whitespace) {
                return Err(Error::Validation(format!("invalid phoneme symbol `{s}`")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Validation(format!("duplicate phoneme symbol `{s}`")));
            }
        }
        Ok(PhonemeVocabulary { symbols })
    }

    /// Parses the one-symbol-per-line file format; line 1 must be `SIL`.
    pub fn parse(text: &str) -> Result<Self> {
        let symbols: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_symbols(symbols)
    }

    pub fn to_text(&self) -> String {
        self.symbols.iter().fold(String::new(), |mut s, sym| {
            s.push_str(sym);
            s.push('\n');
            s
        })
    }

    /// Two-symbol vocabulary used for vocal-activity conditioning.
    pub fn vocal_activity() -> Self {
        PhonemeVocabulary {
            symbols: vec![SILENCE_SYMBOL.to_string(), "VOICED".to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    /// Hex SHA-256 over the newline-joined symbols.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyllableAlignment {
    pub start_sec: f64,
    pub end_sec: f64,
    pub onset: Option<usize>,
    pub nucleus: usize,
    pub coda: Option<usize>,
}

/// One phoneme ID per STFT frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub ids: Vec<usize>,
}

impl FrameLabels {
    pub fn silence(n: usize) -> Self {
        FrameLabels { ids: vec![SILENCE; n] }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn slice(&self, start: usize, len: usize) -> FrameLabels {
        FrameLabels {
            ids: self.ids[start..start + len].to_vec(),
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        match self.ids.iter().find(|&&id| id >= vocab_size) {
            Some(&bad) => Err(Error::Index {
                what: "phoneme vocabulary",
                index: bad,
                size: vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Comma-separated IDs on a single line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.ids.len() * 3);
        for (i, id) in self.ids.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{id}");
        }
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let line = text.trim();
        if line.is_empty() {
            return Ok(FrameLabels { ids: Vec::new() });
        }
        let ids = line
            .split(',')
            .map(|f| {
                f.trim().parse::<usize>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad frame id `{f}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        Ok(FrameLabels { ids })
    }
}

/// Parses an alignment CSV, sorting rows by start time and rejecting overlaps.
pub fn parse_alignment(text: &str, vocab: &PhonemeVocabulary) -> Result<Vec<SyllableAlignment>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || (idx == 0 && line.replace(' ', "") == CSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let time = |f: &str, what: &str| -> Result<f64> {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad {what} `{f}`"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("{what} must be a nonnegative number"),
                });
            }
            Ok(v)
        };
        let start_sec = time(fields[0], "start_sec")?;
        let end_sec = time(fields[1], "end_sec")?;
        if start_sec >= end_sec {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("start {start_sec} is not before end {end_sec}"),
            });
        }
        let phone = |f: &str| -> Result<usize> {
            match vocab.id(f) {
                Some(SILENCE) => Err(Error::Parse {
                    line: lineno,
                    msg: format!("{SILENCE_SYMBOL} cannot be part of a syllable"),
                }),
                Some(id) => Ok(id),
                None => Err(Error::UnknownSymbol(f.to_string())),
            }
        };
        let optional = |f: &str| -> Result<Option<usize>> {
            if f.is_empty() {
                Ok(None)
            } else {
                phone(f).map(Some)
            }
        };
        if fields[3].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "nucleus is required".into(),
            });
        }
        rows.push(SyllableAlignment {
            start_sec,
            end_sec,
            onset: optional(fields[2])?,
            nucleus: phone(fields[3])?,
            coda: optional(fields[4])?,
        });
    }
    rows.sort_by(|a, b| a.start_sec.total_cmp(&b.start_sec));
    for w in rows.windows(2) {
        if w[1].start_sec < w[0].end_sec {
            return Err(Error::Validation(format!(
                "syllables [{}, {}) and [{}, {}) overlap",
                w[0].start_sec, w[0].end_sec, w[1].start_sec, w[1].end_sec
            )));
        }
    }
    Ok(rows)
}

pub fn write_alignment(rows: &[SyllableAlignment], vocab: &PhonemeVocabulary) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let sym = |id: Option<usize>| id.and_then(|i| vocab.symbol(i)).unwrap_or("");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{},{},{}",
            r.start_sec,
            r.end_sec,
            sym(r.onset),
            sym(Some(r.nucleus)),
            sym(r.coda)
        );
    }
    s
}

fn frame_center_sec(t: usize) -> f64 {
    (t * HOP + WINDOW / 2) as f64 / SAMPLE_RATE as f64
}

/// First frame whose center time is at or after `sec`.
pub fn first_frame_at(sec: f64) -> usize {
    let guess = ((sec * SAMPLE_RATE as f64 - (WINDOW / 2) as f64) / HOP as f64).ceil();
    let mut t = guess.max(0.0) as usize;
    while t > 0 && frame_center_sec(t - 1) >= sec {
        t -= 1;
    }
    while frame_center_sec(t) < sec {
        t += 1;
    }
    t
}

/// Frames `[a, b)` whose center time lies in `[start, end)`.
pub fn syllable_frames(s: &SyllableAlignment) -> (usize, usize) {
    (first_frame_at(s.start_sec), first_frame_at(s.end_sec))
}

/// Splits a span of `n` frames into (onset, nucleus, coda) lengths.
///
/// Present consonants take four frames each when at least one nucleus frame
/// remains; shorter spans give each present part `n / parts` frames and the
/// nucleus the remainder.
pub fn split_span(n: usize, has_onset: bool, has_coda: bool) -> (usize, usize, usize) {
    let consonants = has_onset as usize + has_coda as usize;
    let per = if n > CONSONANT_FRAMES * consonants {
        CONSONANT_FRAMES
    } else {
        n / (consonants + 1)
    };
    let onset = if has_onset { per } else { 0 };
    let coda = if has_coda { per } else { 0 };
    (onset, n - onset - coda, coda)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub labels: FrameLabels,
    pub warnings: Vec<String>,
}

/// Expands syllables to per-frame IDs; frames outside every syllable are silence.
pub fn expand_to_frames(alignments: &[SyllableAlignment], n_frames: usize) -> Expansion {
    let mut ids = vec![SILENCE; n_frames];
    let mut warnings = Vec::new();
    for s in alignments {
        let (a, b) = syllable_frames(s);
        let b_clamped = b.min(n_frames);
        if b > n_frames {
            warnings.push(format!(
                "syllable [{:.3}, {:.3}) s extends past frame {n_frames}; truncated",
                s.start_sec, s.end_sec
            ));
        }
        if a >= b_clamped {
            continue;
        }
        // allocate over the full span so truncation keeps onset/nucleus positions
        let (on, nu, _) = split_span(b - a, s.onset.is_some(), s.coda.is_some());
        for (k, slot) in ids[a..b_clamped].iter_mut().enumerate() {
            *slot = if k < on {
                s.onset.unwrap_or(s.nucleus)
            } else if k < on + nu {
                s.nucleus
            } else {
                s.coda.unwrap_or(s.nucleus)
            };
        }
    }
    Expansion {
        labels: FrameLabels { ids },
        warnings,
    }
}

/// 1 where the frame is voiced.
pub fn va_labels(labels: &FrameLabels) -> Vec<u8> {
    labels.ids.iter().map(|&id| u8::from(id != SILENCE)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Every frame set to silence.
    Zero,
    /// Every frame drawn uniformly from the full vocabulary.
    Random,
    /// Silence kept; voiced frames drawn uniformly from non-silence IDs.
    VaRandom,
}

pub fn corrupt(labels: &FrameLabels, mode: Corruption, vocab_size: usize, seed: u64) -> Result<FrameLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = match mode {
        Corruption::Zero => vec![SILENCE; labels.len()],
        Corruption::Random | Corruption::VaRandom if vocab_size < 2 => {
            return Err(Error::Config(format!(
                "random corruption needs a vocabulary of at least 2, got {vocab_size}"
            )))
        }
        Corruption::Random => labels.ids.iter().map(|_| rng.gen_range(0..vocab_size)).collect(),
        Corruption::VaRandom => labels
            .ids
            .iter()
            .map(|&id| {
                if id == SILENCE {
                    SILENCE
                } else {
                    rng.gen_range(1..vocab_size)
                }
            })
            .collect(),
    };
    Ok(FrameLabels { ids })
}

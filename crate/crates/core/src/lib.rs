//! Lyrics-informed singing voice separation.
//!
//! The crate bundles a small reverse-mode tensor engine, an STFT frontend, a
//! highway-network lyrics encoder, an Open-Unmix style BLSTM separator with
//! two lyrics-conditioning variants, a training loop and a BSS-eval based
//! evaluation harness, plus a synthetic dataset generator for desk-scale runs.

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod dsp;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod lyrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod parallel;
pub mod separator;
pub mod synthdata;
pub mod tensor;
pub mod training;

pub use autodiff::{Graph, Var};
pub use dsp::Spectrogram;
pub use dsp::AudioClip;
pub use lyrics::{FrameLabels, PhonemeVocabulary};
pub use error::{Error, Result};
pub use tensor::{ParamId, ParamStore, Tensor};

//! Subcommands. Each returns the provenance record it wrote.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use lyricsep::autodiff::gradcheck::primitive_suite;
use lyricsep::checkpoint;
use lyricsep::dataset::Dataset;
use lyricsep::dsp::{read_wav, stft, write_wav};
use lyricsep::eval::{
    ablate, ablation_csv, evaluate_model, frames_csv, separate, summary_csv, test_tracks, va_csv, LyricsMode, TestTrack,
};
use lyricsep::lyrics::{corrupt, expand_to_frames, parse_alignment, FrameLabels, PhonemeVocabulary};
use lyricsep::model::{gradcheck_models, InputMode, ModelBundle};
use lyricsep::parallel::thread_count;
use lyricsep::synthdata::{generate, SynthSpec};
use lyricsep::training::{derive_seed, fit};
use sha2::{Digest, Sha256};

use crate::config::{parse_json, ExperimentConfig};
use crate::provenance::RunRecord;
use crate::report;

/// Relative tolerance of the finite-difference suite.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "lyricsep", version, about = "Lyrics-informed singing voice separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    SynthData(SynthArgs),
    /// Train the model described by a config.
    Train(TrainArgs),
    /// Extract the vocal from a mixture WAV.
    Separate(SeparateArgs),
    /// Score checkpoints on the test split.
    Evaluate(EvaluateArgs),
    /// Evaluate a lyrics model with corrupted lyrics.
    Ablate(AblateArgs),
    /// Finite-difference check of every primitive and whole models.
    Gradcheck(GradcheckArgs),
    /// Render CSV tables and spectrogram images.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mixture: PathBuf,
    /// Syllable alignment CSV of the mixture.
    #[arg(long)]
    pub alignment: Option<PathBuf>,
    /// Phoneme vocabulary for reading the alignment; lyrics models carry their own.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "lyrics", value_parser = parse_mode)]
    pub mode: LyricsMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to `model.ckpt` in the config's output directory.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to `model.ckpt` in the config's output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Inputs to run; all four when absent.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Vec<LyricsMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary, VA or ablation CSVs to tabulate.
    #[arg(long)]
    pub csv: Vec<PathBuf>,
    /// With `--checkpoint`, renders one spectrogram triptych per test track.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "lyrics", value_parser = parse_mode)]
    pub mode: LyricsMode,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<LyricsMode, String> {
    LyricsMode::parse(s).map_err(|e| e.to_string())
}

pub fn run(cli: Cli) -> Result<RunRecord> {
    match cli.command {
        Command::SynthData(a) => synth_data(&a),
        Command::Train(a) => train(&a),
        Command::Separate(a) => separate_cmd(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Ablate(a) => ablate_cmd(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Report(a) => report_cmd(&a),
    }
}

fn out_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>, rec: &mut RunRecord) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?.with_overrides(seed, out);
    rec.input(path)?;
    rec.config_hash = Some(cfg.hash());
    rec.seed = Some(cfg.seed);
    Ok(cfg)
}

/// Where `train` wrote the model for this config, ignoring any `--out`.
fn trained_checkpoint(config: &Path) -> Result<PathBuf> {
    Ok(ExperimentConfig::load(config)?.out_dir.join("model.ckpt"))
}

fn load_data(cfg: &ExperimentConfig, rec: &mut RunRecord) -> Result<Dataset> {
    let data = Dataset::load(&cfg.manifest).with_context(|| format!("loading {}", cfg.manifest.display()))?;
    rec.input(&cfg.manifest)?;
    rec.warn(data.warnings.iter().cloned());
    Ok(data)
}

fn load_model(path: &Path, data: Option<&Dataset>, rec: &mut RunRecord) -> Result<ModelBundle> {
    let model = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?.model;
    rec.input(path)?;
    if let Some(d) = data {
        if model.spec.input_mode == InputMode::Lyrics && model.vocabulary.as_ref() != Some(&d.vocabulary) {
            bail!("{} was trained with a different phoneme vocabulary than the dataset", path.display());
        }
    }
    Ok(model)
}

fn synth_data(a: &SynthArgs) -> Result<RunRecord> {
    let threads = thread_count();
    let mut rec = RunRecord::new("synth-data", threads);
    let mut spec: SynthSpec = match &a.config {
        Some(p) => {
            rec.input(p)?;
            parse_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let out = out_dir(&a.out)?;
    let text = serde_json::to_string_pretty(&spec)? + "\n";
    rec.config_hash = Some(hex::encode(Sha256::digest(text.as_bytes())));
    rec.seed = Some(spec.seed);
    let manifest = generate(&spec, &out, threads)?;
    for v in &manifest.vocals {
        rec.artifacts.push(v.audio.display().to_string());
        rec.artifacts.push(v.alignment.display().to_string());
    }
    for acc in &manifest.accompaniments {
        rec.artifacts.push(acc.audio.display().to_string());
    }
    rec.artifacts.push(manifest.vocabulary.display().to_string());
    rec.artifacts.push("manifest.json".into());
    rec.write(&out, "synth.json", text)?;
    rec.finish(&out)?;
    Ok(rec)
}

fn train(a: &TrainArgs) -> Result<RunRecord> {
    let mut rec = RunRecord::new("train", 1);
    let cfg = load_config(&a.config, a.seed, a.out.as_deref(), &mut rec)?;
    let out = out_dir(&cfg.out_dir)?;
    let data = load_data(&cfg, &mut rec)?;
    let mut model = ModelBundle::new(&cfg.model, Some(&data.vocabulary), cfg.init_seed())?;
    let report = fit(&mut model, &data, &cfg.train, Some(&out))?;
    rec.warn(report.warnings);
    rec.artifacts.extend(["history.csv".to_string(), "model.ckpt".to_string()]);
    rec.write(&out, "config.json", serde_json::to_string_pretty(&cfg)? + "\n")?;
    log::info!(
        "{}: best validation loss {:.6} at epoch {}",
        cfg.model.tag(),
        report.best_val_loss,
        report.best_epoch
    );
    rec.finish(&out)?;
    Ok(rec)
}

/// Reads an alignment for `frames` STFT frames of a mixture.
fn read_labels(path: &Path, vocab: &PhonemeVocabulary, frames: usize, rec: &mut RunRecord) -> Result<FrameLabels> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    rec.input(path)?;
    let rows = parse_alignment(&text, vocab).with_context(|| format!("in {}", path.display()))?;
    let e = expand_to_frames(&rows, frames);
    rec.warn(e.warnings);
    Ok(e.labels)
}

fn describe(mode: InputMode) -> &'static str {
    match mode {
        InputMode::None => "no side information",
        InputMode::Zeros => "all-zero side information",
        InputMode::Va => "vocal activity taken from aligned lyrics",
        InputMode::Lyrics => "aligned lyrics",
    }
}

fn separate_cmd(a: &SeparateArgs) -> Result<RunRecord> {
    let mut rec = RunRecord::new("separate", 1);
    rec.seed = Some(a.seed);
    let model = load_model(&a.checkpoint, None, &mut rec)?;
    let input_mode = model.spec.input_mode;
    if a.mode != LyricsMode::Lyrics && input_mode != InputMode::Lyrics {
        bail!(
            "--mode {} corrupts lyrics, but model `{}` takes {} (input mode `{}`)",
            a.mode.tag(),
            model.spec.tag(),
            describe(input_mode),
            input_mode.tag()
        );
    }
    let (clip, info) = read_wav(&a.mixture)?;
    rec.input(&a.mixture)?;
    if info.resampled || info.downmixed {
        rec.warn([format!(
            "{}: converted from {} Hz, {} channel(s)",
            a.mixture.display(),
            info.original_rate,
            info.original_channels
        )]);
    }
    let spec = stft(&clip)?;
    let labels = if input_mode.needs_labels() {
        let Some(path) = &a.alignment else {
            bail!(
                "model `{}` takes {} (input mode `{}`) but no --alignment was given",
                model.spec.tag(),
                describe(input_mode),
                input_mode.tag()
            );
        };
        let vocab = match (input_mode, &a.vocab) {
            (InputMode::Lyrics, _) => model.vocabulary.clone().expect("lyrics models carry a vocabulary"),
            (_, Some(p)) => {
                rec.input(p)?;
                PhonemeVocabulary::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
            }
            (_, None) => bail!(
                "model `{}` (input mode `{}`) needs --vocab to read the alignment",
                model.spec.tag(),
                input_mode.tag()
            ),
        };
        let labels = read_labels(path, &vocab, spec.frames, &mut rec)?;
        Some(match a.mode.corruption() {
            Some(c) => corrupt(&labels, c, vocab.len(), derive_seed(&[a.seed, 20, 0]))?,
            None => labels,
        })
    } else {
        None
    };
    let sep = separate(&model, &spec, clip.len(), labels.as_ref())?;
    let out = out_dir(&a.out)?;
    write_wav(&out.join("vocal.wav"), &sep.vocal)?;
    rec.artifacts.push("vocal.wav".into());
    rec.finish(&out)?;
    Ok(rec)
}

fn unique_tag(tag: String, taken: &mut Vec<String>) -> String {
    let mut name = tag.clone();
    let mut k = 1;
    while taken.contains(&name) {
        k += 1;
        name = format!("{tag}-{k}");
    }
    taken.push(name.clone());
    name
}

fn evaluate(a: &EvaluateArgs) -> Result<RunRecord> {
    let threads = thread_count();
    let mut rec = RunRecord::new("evaluate", threads);
    let cfg = load_config(&a.config, a.seed, a.out.as_deref(), &mut rec)?;
    let out = out_dir(&cfg.out_dir)?;
    let data = load_data(&cfg, &mut rec)?;
    let tracks = test_tracks(&data, &cfg.eval)?;
    let checkpoints = if a.checkpoint.is_empty() {
        vec![trained_checkpoint(&a.config)?]
    } else {
        a.checkpoint.clone()
    };
    let mut reports = Vec::new();
    let mut taken = Vec::new();
    for path in &checkpoints {
        let model = load_model(path, Some(&data), &mut rec)?;
        let mut r = evaluate_model(&model, &tracks, &cfg.eval, threads)?;
        r.model = unique_tag(r.model, &mut taken);
        rec.warn(r.warnings.iter().cloned());
        if r.excluded_frames > 0 {
            rec.warn([format!("{}: {} silent-reference frames excluded", r.model, r.excluded_frames)]);
        }
        rec.write(&out, &format!("frames_{}.csv", r.model), frames_csv(&r.tracks))?;
        log::info!(
            "{}: median SDR {:.3} SIR {:.3} SAR {:.3}",
            r.model,
            r.median.sdr,
            r.median.sir,
            r.median.sar
        );
        reports.push(r);
    }
    rec.write(&out, "summary.csv", summary_csv(&reports))?;
    rec.write(&out, "va.csv", va_csv(&reports))?;
    rec.finish(&out)?;
    Ok(rec)
}

fn ablate_cmd(a: &AblateArgs) -> Result<RunRecord> {
    let threads = thread_count();
    let mut rec = RunRecord::new("ablate", threads);
    let cfg = load_config(&a.config, a.seed, a.out.as_deref(), &mut rec)?;
    let out = out_dir(&cfg.out_dir)?;
    let data = load_data(&cfg, &mut rec)?;
    let tracks = test_tracks(&data, &cfg.eval)?;
    let path = match &a.checkpoint {
        Some(p) => p.clone(),
        None => trained_checkpoint(&a.config)?,
    };
    let model = load_model(&path, Some(&data), &mut rec)?;
    let modes = if a.mode.is_empty() { LyricsMode::ALL.to_vec() } else { a.mode.clone() };
    let table = ablate(&model, &tracks, &modes, &cfg.eval, cfg.ablation_seed(), threads)?;
    rec.warn(table.warnings.iter().cloned());
    let mut runs = String::from("model,input,run,sdr,sir,sar\n");
    for r in &table.rows {
        for (k, m) in r.runs.iter().enumerate() {
            runs += &format!("{},{},{k},{:.6},{:.6},{:.6}\n", table.model, r.mode.tag(), m.sdr, m.sir, m.sar);
        }
    }
    rec.write(&out, "ablation.csv", ablation_csv(std::slice::from_ref(&table)))?;
    rec.write(&out, "ablation_runs.csv", runs)?;
    rec.finish(&out)?;
    Ok(rec)
}

fn gradcheck(a: &GradcheckArgs) -> Result<RunRecord> {
    let mut rec = RunRecord::new("gradcheck", 1);
    rec.seed = Some(a.seed);
    let mut reports = primitive_suite(a.seed)?;
    reports.extend(gradcheck_models(a.seed)?);
    let mut csv = String::from("check,max_rel_error,checked,skipped_kinks,pass\n");
    let mut failed = Vec::new();
    for r in &reports {
        let pass = r.passes(GRADCHECK_TOL);
        println!(
            "{:<28} {:>10.3e} over {:>5} entries  {}",
            r.name,
            r.max_rel_error,
            r.checked,
            if pass { "ok" } else { "FAIL" }
        );
        csv += &format!("{},{:e},{},{},{pass}\n", r.name, r.max_rel_error, r.checked, r.skipped_kinks);
        if !pass {
            failed.push(r.name.clone());
        }
    }
    if let Some(o) = &a.out {
        let out = out_dir(o)?;
        rec.write(&out, "gradcheck.csv", csv)?;
        rec.finish(&out)?;
    }
    ensure!(failed.is_empty(), "gradient check failed for: {}", failed.join(", "));
    Ok(rec)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn report_cmd(a: &ReportArgs) -> Result<RunRecord> {
    let mut rec = RunRecord::new("report", 1);
    let out = out_dir(&a.out)?;
    let mut md = String::new();
    for p in &a.csv {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        rec.input(p)?;
        md += &format!("## {}\n\n{}\n", p.file_name().unwrap_or_default().to_string_lossy(), report::markdown_table(&text)?);
    }
    match (&a.config, &a.checkpoint) {
        (Some(c), Some(k)) => {
            let cfg = load_config(c, a.seed, None, &mut rec)?;
            let data = load_data(&cfg, &mut rec)?;
            let model = load_model(k, Some(&data), &mut rec)?;
            let tracks = test_tracks(&data, &cfg.eval)?;
            std::fs::create_dir_all(out.join("spectrograms"))?;
            md += "## Spectrograms\n\nMixture, reference vocal and estimate.\n\n";
            for (i, t) in tracks.iter().enumerate() {
                let name = format!("spectrograms/{i:02}_{}.png", sanitize(&t.name));
                triptych(&model, t, i, a.mode, cfg.ablation_seed(), &out.join(&name))?;
                rec.artifacts.push(name.clone());
                md += &format!("![{}]({name})\n", t.name);
            }
        }
        (None, None) => {}
        _ => bail!("spectrogram images need both --config and --checkpoint"),
    }
    rec.write(&out, "report.md", md)?;
    rec.finish(&out)?;
    Ok(rec)
}

fn triptych(model: &ModelBundle, track: &TestTrack, index: usize, mode: LyricsMode, seed: u64, path: &Path) -> Result<()> {
    let labels = if model.spec.input_mode.needs_labels() {
        let vocab = model.vocab_size().filter(|_| model.spec.input_mode == InputMode::Lyrics);
        Some(lyricsep::eval::run_labels(track, index, mode, vocab, seed)?)
    } else {
        None
    };
    let sep = separate(model, &track.mix_spec, track.vocal.len(), labels.as_ref())?;
    let truth = stft(&track.vocal)?.magnitudes();
    let mix = track.mix_spec.magnitudes();
    let img = report::triptych(&[&mix, &truth, &sep.magnitude], sep.frames)?;
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

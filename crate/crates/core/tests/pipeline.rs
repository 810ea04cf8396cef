//! Library-level run: generate data, train briefly, checkpoint, evaluate.

use lyricsep::checkpoint;
use lyricsep::dataset::Dataset;
use lyricsep::encoder::EncoderConfig;
use lyricsep::eval::{ablate, evaluate_model, test_tracks, EvalOptions, LyricsMode};
use lyricsep::model::{InputMode, ModelBundle, ModelSpec};
use lyricsep::separator::{SeparatorConfig, Variant};
use lyricsep::synthdata::{generate, SynthSpec};
use lyricsep::training::{fit, TrainConfig};

fn spec() -> ModelSpec {
    ModelSpec {
        input_mode: InputMode::Lyrics,
        separator: SeparatorConfig {
            width: 8,
            lstm_layers: 1,
            ..SeparatorConfig::new(Variant::Concat)
        },
        encoder: EncoderConfig {
            embedding_dim: 4,
            channels: 4,
            ..EncoderConfig::default()
        },
    }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        excerpt_frames: 32,
        batches_per_epoch: 2,
        max_epochs: 3,
        scaler_batches: 2,
        validation_excerpts: 1,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn generate_train_checkpoint_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthSpec {
        n_singers: 2,
        songs_per_singer: 3,
        song_seconds: 3.0,
        n_accompaniments: 3,
        ..SynthSpec::default()
    };
    generate(&synth, &dir.path().join("data"), 1).unwrap();
    let data = Dataset::load(&dir.path().join("data/manifest.json")).unwrap();

    let run = |out: &std::path::Path| {
        std::fs::create_dir_all(out).unwrap();
        let mut model = ModelBundle::new(&spec(), Some(&data.vocabulary), 9).unwrap();
        let report = fit(&mut model, &data, &train_cfg(), Some(out)).unwrap();
        (model, report)
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (model, report) = run(&a);
    run(&b);
    assert_eq!(report.history.len(), 3);
    assert!(report.best_val_loss.is_finite());
    for f in ["model.ckpt", "history.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    let loaded = checkpoint::load(&a.join("model.ckpt")).unwrap().model;
    let opts = EvalOptions::default();
    let tracks = test_tracks(&data, &opts).unwrap();
    assert!(!tracks.is_empty());
    let r1 = evaluate_model(&loaded, &tracks, &opts, 1).unwrap();
    let r2 = evaluate_model(&loaded, &tracks, &opts, 2).unwrap();
    assert_eq!(r1.median, r2.median, "thread count changed the scores");
    assert!(r1.median.sdr.is_finite());
    // the checkpoint holds the best epoch, not necessarily the last one
    assert_eq!(loaded.spec, model.spec);

    let opts = EvalOptions { ablation_seeds: 2, ..opts };
    let modes = [LyricsMode::Lyrics, LyricsMode::Zero, LyricsMode::Random];
    let table = ablate(&loaded, &tracks, &modes, &opts, 11, 1).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.rows[0].median.sdr, r1.median.sdr);
    assert_eq!(table.rows[2].runs.len(), 2);
}

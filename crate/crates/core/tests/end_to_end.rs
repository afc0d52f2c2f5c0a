//! Dataset files on disk feed the same pipeline as the in-memory generator.

use meshband::data::{load_dataset, save_dataset, DataFormat};
use meshband::pipeline::{run_pipeline, PipelineConfig, Stage};
use meshband::synth::{generate, SynthConfig};
use meshband::wavelet::Subband;

fn synth() -> SynthConfig {
    SynthConfig {
        n_regions: 8,
        n_classes: 3,
        n_subjects: 6,
        session_scans: 64,
        levels: 3,
        arcs_per_class: 3,
        designated: vec![Subband::Detail(2), Subband::Detail(3), Subband::Approx(3)],
        seed: 9,
        ..SynthConfig::default()
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        synth: Some(synth()),
        levels: 3,
        p: 3,
        lambda: 2.0,
        folds: 3,
        max_iter: 300,
        stages: [Stage::Single, Stage::Fusion].into_iter().collect(),
        ..PipelineConfig::default()
    }
}

#[test]
fn files_and_memory_give_the_same_results() {
    let memory = run_pipeline(&config()).unwrap().report;
    let ds = generate(&synth()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (format, path) in [(DataFormat::Csv, dir.path().join("csv")), (DataFormat::Bin, dir.path().join("d.bin"))] {
        save_dataset(&ds, &path, format).unwrap();
        assert_eq!(load_dataset(&path, format).unwrap(), ds);
        let from_disk = run_pipeline(&PipelineConfig {
            data: Some(path),
            format,
            synth: None,
            ..config()
        })
        .unwrap()
        .report;
        assert_eq!(from_disk.data_hash, memory.data_hash);
        assert_eq!(from_disk.single_subband, memory.single_subband);
        assert_eq!(from_disk.fusion, memory.fusion);
    }
}

#[test]
fn noise_free_benchmark_beats_chance_by_a_wide_margin() {
    let mut cfg = config();
    cfg.synth.as_mut().unwrap().noise = 0.0;
    let r = run_pipeline(&cfg).unwrap().report;
    let chance = 1.0 / 3.0;
    assert!(r.best_single_accuracy().unwrap() > chance);
    assert!(r.fusion_accuracy(meshband::learn::MetaKind::Logistic).unwrap() > chance + 0.3);
}

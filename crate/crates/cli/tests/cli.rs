//! End-to-end tests of the `playstyle` binary: file outputs, reference
//! values, determinism, and the documented exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use playstyle_core::dataset::{
    load_dataset, save_dataset, Action, ActionSpace, ObsShape, Observation, PlayDataset,
    PlaySample,
};
use playstyle_core::hsd::load_model;

fn playstyle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_playstyle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// One-pixel observations so states are trivial to control from a test.
fn tiny_dataset(id: &str, pixel_values: &[u8]) -> PlayDataset {
    let shape = ObsShape(vec![1, 1, 1]);
    let samples = pixel_values
        .iter()
        .map(|&v| PlaySample {
            observation: Observation::new(shape.clone(), vec![v]).unwrap(),
            action: Action::Discrete(u32::from(v) % 3),
        })
        .collect();
    PlayDataset::new(id, shape, ActionSpace::Discrete { n_actions: 3 }, samples).unwrap()
}

fn gen_grid(dir: &Path, speeds: &str, levels: &str, samples: usize, seed: u64) {
    let out = playstyle(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--speeds",
        speeds,
        "--noise-levels",
        levels,
        "--samples",
        &samples.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_code(&out, 0);
}

#[test]
fn gen_data_writes_sorted_manifest_and_loadable_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60,70", "0,1", 64, 3);

    let manifest = fs::read_to_string(dir.join("manifest.csv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "id,file,speed,noise_level,sigma_steer,sigma_accel,samples,seed");
    assert_eq!(lines.len(), 5, "four grid cells:\n{manifest}");
    let ids: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted, "manifest rows are sorted by id");

    for id in ids {
        let ds = load_dataset(dir.join(format!("{id}.psty"))).unwrap();
        assert_eq!(ds.len(), 64);
        assert_eq!(ds.obs_shape().0, vec![4, 32, 32]);
    }
}

#[test]
fn gen_data_is_deterministic_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_grid(&d1, "60", "0", 32, 11);
    gen_grid(&d2, "60", "0", 32, 11);
    let f1 = fs::read(d1.join("s60_n0.psty")).unwrap();
    let f2 = fs::read(d2.join("s60_n0.psty")).unwrap();
    assert_eq!(f1, f2, "same flags and seed give identical files");
}

#[test]
fn gen_data_expands_level_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60", "1..3", 16, 5);
    for level in 1..=3 {
        assert!(dir.join(format!("s60_n{level}.psty")).exists(), "level {level} written");
    }
}

#[test]
fn gen_data_rejects_zero_samples_as_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = playstyle(&[
        "gen-data",
        "--out",
        tmp.path().to_str().unwrap(),
        "--samples",
        "0",
    ]);
    assert_code(&out, 2);
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "samples = 32\nspeeds = 60\nnoise_levels = 0\n").unwrap();

    let from_file = tmp.path().join("from-file");
    let out = playstyle(&[
        "gen-data",
        "--out",
        from_file.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert_eq!(load_dataset(from_file.join("s60_n0.psty")).unwrap().len(), 32);

    let flag_wins = tmp.path().join("flag-wins");
    let out = playstyle(&[
        "gen-data",
        "--out",
        flag_wins.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--samples",
        "16",
    ]);
    assert_code(&out, 0);
    assert_eq!(load_dataset(flag_wins.join("s60_n0.psty")).unwrap().len(), 16);
}

#[test]
fn train_hsd_writes_model_and_loss_log() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60", "0", 128, 7);
    let model_path = tmp.path().join("m.hsdm");
    let log_path = tmp.path().join("loss.csv");
    let out = playstyle(&[
        "train-hsd",
        "--data",
        dir.join("s60_n0.psty").to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--loss-log",
        log_path.to_str().unwrap(),
        "--epochs",
        "1",
        "--seed",
        "1",
    ]);
    assert_code(&out, 0);

    let model = load_model(&model_path).unwrap();
    assert_eq!(model.config().cells, 20);
    assert_eq!(model.config().codebook, 2);

    let log = fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step,L_rec,L_vq0,L_vq1,L_pi");
    assert_eq!(lines.len(), 1 + 128 / 32, "one row per training step:\n{log}");
}

#[test]
fn train_hsd_pools_a_directory_and_honors_k_and_b() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60,70", "0", 64, 7);
    let model_path = tmp.path().join("m.hsdm");
    let out = playstyle(&[
        "train-hsd",
        "--data",
        dir.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--epochs",
        "0",
        "--K",
        "3",
        "--B",
        "10",
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("pooled 2 files into 128 training samples"));
    let model = load_model(&model_path).unwrap();
    assert_eq!(model.config().codebook, 3);
    assert_eq!(model.config().cells, 10);
}

#[test]
fn train_hsd_seeds_separate_models_and_zero_epochs_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60", "0", 64, 7);
    let data = dir.join("s60_n0.psty");
    let train = |seed: &str, out_name: &str| {
        let path = tmp.path().join(out_name);
        let out = playstyle(&[
            "train-hsd",
            "--data",
            data.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
            "--epochs",
            "0",
            "--seed",
            seed,
        ]);
        assert_code(&out, 0);
        fs::read(path).unwrap()
    };
    let (a, b, a_again) = (train("1", "a.hsdm"), train("2", "b.hsdm"), train("1", "c.hsdm"));
    assert_ne!(a, b, "different seeds give distinct models");
    assert_eq!(a, a_again, "the same seed reproduces the model byte for byte");
}

#[test]
fn distance_golden_fixture_prints_the_reference_values() {
    let out = playstyle(&["distance", "--golden-appendix-b"]);
    assert_code(&out, 0);
    let text = stdout(&out);
    for needle in [
        "0.940044",
        "reference 0.940",
        "1.224745",
        "reference 1.225",
        "0.879653",
        "reference 0.880",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}

#[test]
fn distance_of_a_dataset_to_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("a.psty");
    save_dataset(&tiny_dataset("a", &[1, 1, 2, 2, 3, 3]), &path).unwrap();
    let out = playstyle(&[
        "distance",
        "--a",
        path.to_str().unwrap(),
        "--b",
        path.to_str().unwrap(),
        "--breakdown",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("distance: 0.000000"), "got:\n{text}");
    assert!(text.contains("intersection_size: 3"), "got:\n{text}");
}

#[test]
fn undefined_distance_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.psty");
    let b = tmp.path().join("b.psty");
    save_dataset(&tiny_dataset("a", &[1, 1, 1, 1]), &a).unwrap();
    save_dataset(&tiny_dataset("b", &[2, 2, 2, 2]), &b).unwrap();
    let out = playstyle(&[
        "distance",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert_code(&out, 4);
    assert!(stdout(&out).contains("undefined"));
}

#[test]
fn malformed_dataset_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("junk.psty");
    fs::write(&path, b"not a dataset").unwrap();
    let out = playstyle(&[
        "distance",
        "--a",
        path.to_str().unwrap(),
        "--b",
        path.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}

#[test]
fn missing_flags_exit_with_code_2() {
    let out = playstyle(&["distance"]);
    assert_code(&out, 2);
}

#[test]
fn accuracy_resample_reports_per_mapper_and_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "40,80", "0", 64, 9);
    let csv_path = tmp.path().join("report.csv");
    let out = playstyle(&[
        "accuracy",
        "--candidates",
        dir.to_str().unwrap(),
        "--mapper",
        "lrd:8x8:64",
        "--mapper",
        "pixel",
        "--target-mode",
        "resample",
        "--trials",
        "2",
        "--samples",
        "32",
        "--thresholds",
        "1,2",
        "--seed",
        "5",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("lrd:8x8:64 t=1: overall"), "got:\n{text}");
    assert!(text.contains("mean over 2 mappers t=1"), "got:\n{text}");

    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mapper,threshold,style,accuracy,undefined_rate,mean_intersection");
    // 2 mappers x 2 thresholds x (overall + 2 styles) + 2 mean rows
    assert_eq!(lines.len(), 1 + 2 * 2 * 3 + 2, "csv:\n{csv}");
    let style_rows: Vec<&str> =
        lines.iter().filter(|l| l.contains(",s40_n0,") || l.contains(",s80_n0,")).copied().collect();
    assert_eq!(style_rows.len(), 8);
    assert!(
        style_rows.chunks(2).all(|pair| pair[0].contains("s40_n0") && pair[1].contains("s80_n0")),
        "styles are sorted lexicographically within each block:\n{csv}"
    );
}

#[test]
fn codebook_usage_counts_states() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_grid(&dir, "60", "0", 64, 7);
    let data = dir.join("s60_n0.psty");
    let model_path = tmp.path().join("m.hsdm");
    let out = playstyle(&[
        "train-hsd",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--epochs",
        "0",
    ]);
    assert_code(&out, 0);
    let out = playstyle(&[
        "codebook-usage",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--hierarchy",
        "1",
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("distinct states at hierarchy 1 over 64 samples"));
}

#[test]
fn print_config_echoes_the_resolved_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = playstyle(&[
        "gen-data",
        "--out",
        tmp.path().join("d").to_str().unwrap(),
        "--speeds",
        "60",
        "--noise-levels",
        "0",
        "--samples",
        "8",
        "--seed",
        "1",
        "--print-config",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    for needle in ["speeds", "noise_levels", "samples", "seed"] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}

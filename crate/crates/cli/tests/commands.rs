use std::path::Path;
use std::process::Command;

use salstruct_cli::commands::{
    cmd_eval, cmd_explain, cmd_preprocess, cmd_synth, cmd_train, CHECKPOINT_NAME, LOG_NAME, MANIFEST_NAME,
};
use salstruct_cli::config::RunConfig;
use salstruct_cli::pipeline::stack_path;
use salstruct_core::dataset::{save_stack, write_manifest, ChannelStack, QualityLabel, SampleRecord, Split, StackOrder};
use salstruct_core::fov::FovPolicy;
use salstruct_core::nn::{load_checkpoint, Architecture};
use salstruct_core::raster::{encode_ppm, RasterImage};

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn log_rows(dir: &Path) -> Vec<Vec<String>> {
    read(&dir.join(LOG_NAME))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn small_config() -> RunConfig {
    RunConfig {
        seed: 5,
        resolution: 32,
        epochs: 2,
        ..RunConfig::default()
    }
}

#[test]
fn preprocess_writes_three_stacks_per_image_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    cmd_synth(1, &corpus, &small_config()).unwrap();
    let input = tmp.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    for f in ["good_0000.ppm", "usable_0000.ppm", "reject_0000.ppm"] {
        std::fs::copy(corpus.join(f), input.join(f)).unwrap();
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cmd_preprocess(&input, &a, &small_config()).unwrap(), 0);
    assert_eq!(cmd_preprocess(&input, &b, &small_config()).unwrap(), 0);
    let rstk: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "rstk"))
        .collect();
    assert_eq!(rstk.len(), 9);
    for e in rstk {
        assert_eq!(std::fs::read(e.path()).unwrap(), std::fs::read(b.join(e.file_name())).unwrap());
    }
    let rows = log_rows(&a);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "ok"));
    assert_eq!(read(&a.join(LOG_NAME)), read(&b.join(LOG_NAME)));
}

#[test]
fn black_image_fails_unless_full_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("black.ppm"), encode_ppm(&RasterImage::zeros(96, 96, 3)).unwrap()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(cmd_preprocess(&input, &out, &small_config()).unwrap(), 1);
    let rows = log_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "no_fov");

    let cfg = RunConfig {
        fov_fallback: FovPolicy::FullFrame,
        ..small_config()
    };
    let out2 = tmp.path().join("out2");
    assert_eq!(cmd_preprocess(&input, &out2, &cfg).unwrap(), 0);
    assert_eq!(log_rows(&out2)[0][1], "ok");
    assert!(stack_path(&out2, "black.ppm", StackOrder::RgbLsTs).exists());
}

#[test]
fn synth_layout_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_synth(5, &a, &small_config()).unwrap();
    cmd_synth(5, &b, &small_config()).unwrap();
    let manifest = read(&a.join(MANIFEST_NAME));
    assert_eq!(manifest.lines().count(), 16);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",test")).count(), 3);
    assert_eq!(read(&a.join("truth.jsonl")).lines().count(), 15);
    for e in std::fs::read_dir(&a).unwrap() {
        let e = e.unwrap();
        assert_eq!(std::fs::read(e.path()).unwrap(), std::fs::read(b.join(e.file_name())).unwrap());
    }
    let c = tmp.path().join("c");
    cmd_synth(5, &c, &RunConfig { seed: 6, ..small_config() }).unwrap();
    assert_ne!(std::fs::read(a.join("good_0000.ppm")).unwrap(), std::fs::read(c.join("good_0000.ppm")).unwrap());
}

/// Class-coloured constant stacks at 8×8, in both splits.
fn toy_corpus(dir: &Path) -> std::path::PathBuf {
    let colors = [[0.9f32, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9]];
    let mut records = Vec::new();
    for i in 0..8 {
        for c in QualityLabel::ALL {
            let name = format!("{}_{i}.ppm", c.name());
            let mut data = Vec::new();
            for v in colors[c.index()] {
                data.extend(std::iter::repeat_n(v, 64));
            }
            data.extend(std::iter::repeat_n(0.0, 128));
            let s = ChannelStack::new(8, 8, StackOrder::RgbLsTs, data).unwrap();
            save_stack(&s, &stack_path(dir, &name, StackOrder::RgbLsTs)).unwrap();
            records.push(SampleRecord {
                image_path: name,
                label: c,
                split: if i < 6 { Split::Train } else { Split::Test },
            });
        }
    }
    let log: String = std::iter::once("image,status,cx,cy,r,ls_pixels,ts_pixels,message\n".to_string())
        .chain(records.iter().map(|r| format!("{},ok,,,,0,{},\n", r.image_path, 100 * (r.label.index() + 1))))
        .collect();
    std::fs::write(dir.join(LOG_NAME), log).unwrap();
    let m = dir.join(MANIFEST_NAME);
    std::fs::write(&m, write_manifest(&records)).unwrap();
    m
}

#[test]
fn train_eval_explain_on_toy_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let stacks = tmp.path().join("stacks");
    std::fs::create_dir_all(&stacks).unwrap();
    let manifest = toy_corpus(&stacks);
    let cfg = RunConfig::from_toml("resolution = 8\nepochs = 6\nbatch_size = 1\nval_fraction = 0.0\naugment = false\narchitecture = \"single\"").unwrap();
    let run = tmp.path().join("run");
    assert_eq!(cmd_train(&manifest, &stacks, &run, &cfg).unwrap(), 0);
    assert_eq!(&std::fs::read(run.join(CHECKPOINT_NAME)).unwrap()[..4], b"SIQA");
    assert_eq!(read(&run.join("loss_curve.csv")).lines().count(), 1 + 6);

    let ev = tmp.path().join("ev");
    cmd_eval(&run.join(CHECKPOINT_NAME), &manifest, &stacks, &ev, Split::Test).unwrap();
    assert!(read(&ev.join("metrics.csv")).lines().any(|l| l == "acc,1.0"));
    let conf = read(&ev.join("confusion.csv"));
    for (line, c) in conf.lines().skip(1).zip(QualityLabel::ALL) {
        let sum: u64 = line.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
        assert_eq!(sum, 2, "{c}");
    }
    assert!(read(&ev.join("mts_stats.csv")).contains("Good,2,101,100.0,101"));

    let ex = tmp.path().join("ex");
    let input = stack_path(&stacks, "Good_7.ppm", StackOrder::RgbLsTs);
    cmd_explain(&run.join(CHECKPOINT_NAME), &input, None, &ex, &cfg).unwrap();
    let pgm = std::fs::read(ex.join("heatmap_single.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    let ex2 = tmp.path().join("ex2");
    cmd_explain(&run.join(CHECKPOINT_NAME), &input, None, &ex2, &cfg).unwrap();
    assert_eq!(pgm, std::fs::read(ex2.join("heatmap_single.pgm")).unwrap());
    assert_eq!(read(&ex.join("explained_class.txt")), "Good\n");
}

#[test]
fn dual_explain_yields_two_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let stacks = tmp.path().join("stacks");
    std::fs::create_dir_all(&stacks).unwrap();
    let manifest = toy_corpus(&stacks);
    let cfg = RunConfig::from_toml("resolution = 8\nepochs = 1\naugment = false").unwrap();
    let run = tmp.path().join("run");
    cmd_train(&manifest, &stacks, &run, &cfg).unwrap();
    assert_eq!(load_checkpoint(&run.join(CHECKPOINT_NAME)).unwrap().model.arch, Architecture::Dual);
    let ex = tmp.path().join("ex");
    let input = stack_path(&stacks, "Reject_0.ppm", StackOrder::RgbLsTs);
    cmd_explain(&run.join(CHECKPOINT_NAME), &input, Some(QualityLabel::Reject), &ex, &cfg).unwrap();
    for f in ["heatmap_ls.pgm", "heatmap_ts.pgm", "overlay_ls.ppm", "overlay_ts.ppm"] {
        assert!(ex.join(f).exists(), "{f}");
    }
}

#[test]
fn train_rejects_empty_split() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join(MANIFEST_NAME);
    std::fs::write(&m, "image,quality,split\n").unwrap();
    let err = cmd_train(&m, tmp.path(), &tmp.path().join("run"), &RunConfig::default()).unwrap_err();
    assert!(err.to_string().contains("empty"), "{err}");
}

#[test]
fn binary_runs_synth_with_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_salstruct");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n").unwrap();
    let out = tmp.path().join("c");
    let st = Command::new(exe)
        .args(["--config", cfg.to_str().unwrap(), "--seed", "9", "synth", "--n", "1", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let lib = tmp.path().join("lib");
    cmd_synth(1, &lib, &RunConfig { seed: 9, ..RunConfig::default() }).unwrap();
    assert_eq!(std::fs::read(out.join("good_0000.ppm")).unwrap(), std::fs::read(lib.join("good_0000.ppm")).unwrap());
    let bad = Command::new(exe).args(["--resolution", "30", "preprocess", "x", "y"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

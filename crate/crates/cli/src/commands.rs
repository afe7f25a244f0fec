use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salstruct_core::dataset::{
    load_manifest, load_stack, save_stack, write_manifest, ChannelStack, QualityLabel, SampleRecord, Split,
    StackOrder,
};
use salstruct_core::eval::{confusion, metrics, mts_cdf, mts_cdf_svg, mts_stats_csv, render_report, MtsCdf};
use salstruct_core::fov::FovError;
use salstruct_core::nn::{
    grad_cam, load_checkpoint, predict, save_checkpoint, train, Architecture, TrainSample,
};
use salstruct_core::raster::{decode_image, encode_pgm, encode_ppm, RasterImage};
use serde::Serialize;

use crate::config::RunConfig;
use crate::pipeline::{prepare, stack_path, synth_corpus, PipelineError};
use crate::CliError;

pub const LOG_NAME: &str = "preprocess_log.csv";
pub const CHECKPOINT_NAME: &str = "model.siqa";
const IMAGE_EXTENSIONS: [&str; 5] = ["ppm", "pgm", "png", "jpg", "jpeg"];

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Serialize)]
struct LogRow {
    image: String,
    status: &'static str,
    cx: String,
    cy: String,
    r: String,
    ls_pixels: String,
    ts_pixels: String,
    message: String,
}

fn status_of(e: &CliError) -> &'static str {
    match e {
        CliError::Pipeline(PipelineError::Fov(FovError::NoFovFound)) => "no_fov",
        CliError::Pipeline(PipelineError::Fov(FovError::TooSmall { .. })) => "too_small",
        CliError::Raster(_) => "decode_error",
        _ => "error",
    }
}

/// Returns the exit code: 0 when every image produced its three stacks.
pub fn cmd_preprocess(in_dir: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    let mut failures = 0;
    for path in image_files(in_dir)? {
        let name = file_name(&path);
        let result = (|| -> Result<_, CliError> {
            let img = decode_image(&std::fs::read(&path)?)?;
            let p = prepare(&img, cfg.resolution, cfg.fov_fallback)?;
            for order in StackOrder::ALL {
                save_stack(&p.stack.select(order)?, &stack_path(out_dir, &name, order))?;
            }
            Ok(p)
        })();
        rows.push(match result {
            Ok(p) => {
                let (cx, cy, r) = p.circle.map_or((String::new(), String::new(), String::new()), |c| {
                    (format!("{:.3}", c.cx), format!("{:.3}", c.cy), format!("{:.3}", c.r))
                });
                LogRow {
                    image: name,
                    status: "ok",
                    cx,
                    cy,
                    r,
                    ls_pixels: p.ls_pixels.to_string(),
                    ts_pixels: p.ts_pixels.to_string(),
                    message: String::new(),
                }
            }
            Err(e) => {
                failures += 1;
                LogRow {
                    image: name,
                    status: status_of(&e),
                    cx: String::new(),
                    cy: String::new(),
                    r: String::new(),
                    ls_pixels: String::new(),
                    ts_pixels: String::new(),
                    message: e.to_string(),
                }
            }
        });
    }
    let mut w = csv::Writer::from_path(out_dir.join(LOG_NAME))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(i32::from(failures > 0))
}

#[derive(Serialize)]
struct DiscTruth {
    cx: f64,
    cy: f64,
    r: f64,
}

#[derive(Serialize)]
struct TruthRow<'a> {
    image: &'a str,
    quality: usize,
    grade: &'a str,
    split: &'a str,
    seed: u64,
    disc: DiscTruth,
    vessel_pixels: usize,
    fov_pixels: usize,
}

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const TRUTH_NAME: &str = "truth.jsonl";

pub fn cmd_synth(n_per_class: usize, out_dir: &Path, cfg: &RunConfig) -> Result<i32, CliError> {
    if n_per_class == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let corpus = synth_corpus(n_per_class, cfg.seed);
    let mut truth = String::new();
    for it in &corpus {
        std::fs::write(out_dir.join(&it.record.image_path), encode_ppm(&it.image)?)?;
        let row = TruthRow {
            image: &it.record.image_path,
            quality: it.record.label.index(),
            grade: it.record.label.name(),
            split: it.record.split.as_str(),
            seed: it.seed,
            disc: DiscTruth {
                cx: it.truth.disc.cx,
                cy: it.truth.disc.cy,
                r: it.truth.disc.r,
            },
            vessel_pixels: it.truth.vessels.count(),
            fov_pixels: it.truth.fov.count(),
        };
        truth.push_str(&serde_json::to_string(&row)?);
        truth.push('\n');
    }
    std::fs::write(out_dir.join(TRUTH_NAME), truth)?;
    let records: Vec<SampleRecord> = corpus.into_iter().map(|it| it.record).collect();
    std::fs::write(out_dir.join(MANIFEST_NAME), write_manifest(&records))?;
    Ok(0)
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>, CliError> {
    Ok(load_manifest(&std::fs::read(path)?)?)
}

/// Five-channel stacks of the manifest rows in `split`, in manifest order.
pub fn load_split(
    records: &[SampleRecord],
    stacks: &Path,
    split: Option<Split>,
) -> Result<Vec<(SampleRecord, ChannelStack)>, CliError> {
    records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .map(|r| {
            let p = stack_path(stacks, &file_name(Path::new(&r.image_path)), StackOrder::RgbLsTs);
            let s = load_stack(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Ok((r.clone(), s))
        })
        .collect()
}

/// Seeded per-grade hold-out; returns `(train, val)` index lists in input order.
pub fn validation_split(labels: &[QualityLabel], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11_da7e);
    let mut is_val = vec![false; labels.len()];
    for c in QualityLabel::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let k = (idx.len() as f64 * fraction).round() as usize;
        idx.shuffle(&mut rng);
        idx[..k].iter().for_each(|&i| is_val[i] = true);
    }
    (0..labels.len()).partition(|&i| !is_val[i])
}

pub fn cmd_train(manifest: &Path, stacks: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.validate()?;
    let records = read_manifest(manifest)?;
    let data = load_split(&records, stacks, Some(Split::Train))?;
    if let Some((r, s)) = data.iter().find(|(_, s)| s.width() != cfg.resolution || s.height() != cfg.resolution) {
        return Err(CliError::Usage(format!(
            "{} is {}x{}, configured resolution is {}",
            r.image_path,
            s.width(),
            s.height(),
            cfg.resolution
        )));
    }
    let labels: Vec<QualityLabel> = data.iter().map(|(r, _)| r.label).collect();
    let (tr, va) = validation_split(&labels, cfg.val_fraction, cfg.seed);
    let sample = |i: &usize| TrainSample {
        stack: data[*i].1.clone(),
        label: data[*i].0.label,
    };
    let train_set: Vec<TrainSample> = tr.iter().map(sample).collect();
    let val_set: Vec<TrainSample> = va.iter().map(sample).collect();
    let out = train(cfg.architecture, &train_set, &val_set, &cfg.train_config())?;
    std::fs::create_dir_all(out_dir)?;
    save_checkpoint(&out.best, &out_dir.join(CHECKPOINT_NAME))?;
    let mut curve = String::from("epoch,lr,train_loss,val_accuracy\n");
    for r in &out.curve {
        curve.push_str(&format!("{},{:?},{:?},{:?}\n", r.epoch, r.lr, r.train_loss, r.val_accuracy));
    }
    std::fs::write(out_dir.join("loss_curve.csv"), curve)?;
    Ok(0)
}

/// `|M_TS|` per image name from a preprocessing log; failed rows are skipped.
pub fn read_ts_sizes(log: &Path) -> Result<HashMap<String, usize>, CliError> {
    let mut rdr = csv::Reader::from_path(log)?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        if row.get(1) == Some("ok") {
            let n = row
                .get(6)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Usage(format!("bad ts_pixels in {}", log.display())))?;
            out.insert(row[0].to_string(), n);
        }
    }
    Ok(out)
}

fn cdf_for(records: &[SampleRecord], sizes: &HashMap<String, usize>) -> Result<MtsCdf, CliError> {
    let pairs = records
        .iter()
        .map(|r| {
            let name = file_name(Path::new(&r.image_path));
            sizes
                .get(&name)
                .map(|&n| (n, r.label))
                .ok_or_else(|| CliError::Usage(format!("{name} missing from preprocessing log")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mts_cdf(&pairs))
}

pub fn cmd_eval(
    checkpoint: &Path,
    manifest: &Path,
    stacks: &Path,
    out_dir: &Path,
    split: Split,
) -> Result<i32, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let records = read_manifest(manifest)?;
    let data = load_split(&records, stacks, Some(split))?;
    let mut preds = Vec::with_capacity(data.len());
    let mut lines = String::from("image,truth,pred,p_good,p_usable,p_reject\n");
    for (r, s) in &data {
        let (label, p) = predict(&ck.model, s)?;
        preds.push(label);
        lines.push_str(&format!(
            "{},{},{},{:?},{:?},{:?}\n",
            r.image_path,
            r.label.index(),
            label.index(),
            p[0],
            p[1],
            p[2]
        ));
    }
    let truths: Vec<QualityLabel> = data.iter().map(|(r, _)| r.label).collect();
    let cm = confusion(&preds, &truths)?;
    let m = metrics(&cm)?;
    let split_records: Vec<SampleRecord> = data.into_iter().map(|(r, _)| r).collect();
    let cdf = cdf_for(&split_records, &read_ts_sizes(&stacks.join(LOG_NAME))?)?;
    render_report(&m, &cm, &cdf, out_dir)?;
    std::fs::write(out_dir.join("predictions.csv"), lines)?;
    std::fs::write(out_dir.join("mts_stats.csv"), mts_stats_csv(&cdf))?;
    Ok(0)
}

/// Mask-size distribution of a manifest split, from a preprocessing log.
pub fn cmd_stats(manifest: &Path, log: &Path, out_dir: &Path, split: Option<Split>) -> Result<i32, CliError> {
    let records: Vec<SampleRecord> = read_manifest(manifest)?
        .into_iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    let cdf = cdf_for(&records, &read_ts_sizes(log)?)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("mts_stats.csv"), mts_stats_csv(&cdf))?;
    std::fs::write(out_dir.join("mts_cdf.svg"), mts_cdf_svg(&cdf))?;
    Ok(0)
}

/// Blue → cyan → yellow → red ramp.
fn colorize(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let stops = [[0.0, 0.0, 0.5], [0.0, 0.8, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
    let t = v * 3.0;
    let i = (t.floor() as usize).min(2);
    let f = t - i as f64;
    std::array::from_fn(|c| stops[i][c] * (1.0 - f) + stops[i + 1][c] * f)
}

/// Writes `heatmap_<branch>.pgm` and `overlay_<branch>.ppm`; branches are
/// `single`, or `ls` and `ts`.
pub fn cmd_explain(
    checkpoint: &Path,
    input: &Path,
    class: Option<QualityLabel>,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<i32, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let is_stack = input.extension().is_some_and(|e| e == "rstk");
    let stack = if is_stack {
        let s = load_stack(input)?;
        s.select(StackOrder::RgbLsTs)
            .map_err(|_| CliError::Usage(format!("{} is not an rgb_ls_ts stack", input.display())))?
    } else {
        let img = decode_image(&std::fs::read(input)?)?;
        prepare(&img, cfg.resolution, cfg.fov_fallback)?.stack
    };
    let target = match class {
        Some(c) => c,
        None => predict(&ck.model, &stack)?.0,
    };
    let maps = grad_cam(&ck.model, &stack, target)?;
    let names: &[&str] = match ck.model.arch {
        Architecture::Single => &["single"],
        Architecture::Dual => &["ls", "ts"],
    };
    std::fs::create_dir_all(out_dir)?;
    let rgb = stack.rgb();
    for (map, name) in maps.iter().zip(names) {
        std::fs::write(out_dir.join(format!("heatmap_{name}.pgm")), encode_pgm(&map.to_raster())?)?;
        let mut data = Vec::with_capacity(rgb.data().len());
        for (i, &h) in map.data().iter().enumerate() {
            let c = colorize(h);
            for k in 0..3 {
                data.push(0.5 * rgb.data()[3 * i + k] + 0.5 * c[k]);
            }
        }
        let overlay = RasterImage::from_clamped(rgb.width(), rgb.height(), 3, data);
        std::fs::write(out_dir.join(format!("overlay_{name}.ppm")), encode_ppm(&overlay)?)?;
    }
    std::fs::write(out_dir.join("explained_class.txt"), format!("{}\n", target.name()))?;
    Ok(0)
}

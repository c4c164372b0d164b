//! Subcommand implementations. Everything runs in f32, seeded, CPU-only.

use crate::config::{self, Overrides};
use egain_core::checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle};
use egain_core::imagecore::{self, DatasetManifest, Image};
use egain_core::metrics::{self, MetricReport};
use egain_core::trainer;
use egain_core::{Error, Result};
use std::fs;
use std::path::Path;

const PRETRAIN_DEFAULT_LR: f64 = 2e-3;
const TRAIN_DEFAULT_LR: f64 = 1e-3;
const PROGRESS_EVERY: u64 = 100;

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::validation(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn env_or_default_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(seed) = std::env::var("EGAIN_SEED") {
        return seed
            .parse()
            .map_err(|_| Error::validation(format!("EGAIN_SEED must be an integer, got {seed:?}")));
    }
    Ok(7)
}

pub fn make_data(out: &Path, n: usize, resolution: usize, seed: Option<u64>) -> Result<()> {
    let seed = env_or_default_seed(seed)?;
    let manifest = imagecore::make_toy_faces(out, n, resolution, seed)?;
    println!(
        "wrote {} images at {}x{} (seed {}) under {}",
        manifest.entries.len(),
        resolution,
        resolution,
        seed,
        out.display()
    );
    Ok(())
}

fn write_jsonl<R: serde::Serialize>(path: &Path, records: &[R]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("log record serializes");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn load_training_images(data: &Path, resolution: usize) -> Result<Vec<Image<f32>>> {
    let (manifest, images) = imagecore::load_dataset::<f32>(data)?;
    if manifest.resolution != resolution {
        return Err(Error::validation(format!(
            "dataset resolution {} does not match configured resolution {}",
            manifest.resolution, resolution
        )));
    }
    Ok(images)
}

pub fn pretrain(data: &Path, cfg_file: Option<&Path>, out: &Path, ov: &Overrides) -> Result<()> {
    require_file(data, "data manifest")?;
    let cfg = config::resolve(cfg_file, ov, PRETRAIN_DEFAULT_LR)?;
    config::write_resolved(&cfg, out)?;
    let images = load_training_images(data, cfg.resolution)?;
    let total = cfg.steps as u64;
    let (bundle, logs) = trainer::pretrain_gan(&images, &cfg, Some(out), |rec| {
        if rec.step == 1 || rec.step == total || rec.step % PROGRESS_EVERY == 0 {
            println!(
                "pretrain step {}/{} d_loss={:.4} g_loss={:.4} real={:.3} fake={:.3}",
                rec.step, total, rec.d_loss, rec.g_loss, rec.real_logit, rec.fake_logit
            );
        }
    })?;
    write_jsonl(&out.join("pretrain_log.jsonl"), &logs)?;
    save_checkpoint(&bundle, out.join("gan.ckpt"))?;
    println!("checkpoint: {}", out.join("gan.ckpt").display());
    Ok(())
}

pub fn train(
    data: &Path,
    cfg_file: Option<&Path>,
    gan: &Path,
    out: &Path,
    ov: &Overrides,
) -> Result<()> {
    require_file(data, "data manifest")?;
    require_file(gan, "generator checkpoint")?;
    let cfg = config::resolve(cfg_file, ov, TRAIN_DEFAULT_LR)?;
    config::write_resolved(&cfg, out)?;
    let images = load_training_images(data, cfg.resolution)?;
    let gan_bundle: CheckpointBundle<f32> = load_checkpoint(gan)?;
    let total = cfg.steps as u64;
    let (bundle, logs) = trainer::train_inversion(&images, &cfg, &gan_bundle, Some(out), |rec| {
        if rec.step == 1 || rec.step == total || rec.step % PROGRESS_EVERY == 0 {
            println!(
                "train step {}/{} total={:.5} l2={:.5} lpips={:.5} id={:.5}",
                rec.step, total, rec.report.total, rec.report.terms.l2, rec.report.terms.lpips,
                rec.report.terms.id
            );
        }
    })?;
    write_jsonl(&out.join("train_log.jsonl"), &logs)?;
    save_checkpoint(&bundle, out.join("inversion.ckpt"))?;
    println!("checkpoint: {}", out.join("inversion.ckpt").display());
    Ok(())
}

pub fn invert(model_path: &Path, image_path: &Path, out: &Path) -> Result<()> {
    require_file(model_path, "model checkpoint")?;
    require_file(image_path, "input image")?;
    let model: CheckpointBundle<f32> = load_checkpoint(model_path)?;
    let res = model.config.resolution;
    let x = imagecore::load_image::<f32>(image_path, res)?;
    let native = imagecore::image_file_size(image_path)?;
    if native != (res, res) {
        return Err(Error::validation(format!(
            "image is {}x{}, model expects {res}x{res}",
            native.0, native.1
        )));
    }
    let inv = trainer::invert(&x, &model)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    config::write_resolved(&model.config, out)?;
    imagecore::save_png(out.join("y0.png"), &inv.y0)?;
    imagecore::save_png(out.join("y.png"), &inv.y)?;
    // (delta + 2)/4 visualization: saving delta/2 through the [-1,1] -> [0,1]
    // PNG mapping produces exactly that
    let delta_vis = Image::new(
        x.tensor().zip(inv.y0.tensor(), |a, b| ((a - b) / 2.0).clamp(-1.0, 1.0)),
    )?;
    imagecore::save_png(out.join("delta.png"), &delta_vis)?;
    let codes: Vec<Vec<f32>> = (0..inv.w_b.rows())
        .map(|l| {
            inv.w_b.tensor().data()[l * inv.w_b.dim()..(l + 1) * inv.w_b.dim()].to_vec()
        })
        .collect();
    let json = serde_json::to_string_pretty(&codes).expect("codes serialize");
    fs::write(out.join("codes.json"), json).map_err(|e| Error::io(out.join("codes.json"), e))?;
    println!("wrote y0.png, y.png, delta.png, codes.json under {}", out.display());
    Ok(())
}

/// Side-by-side grid: rows are original / initial / final, up to 8 columns.
fn write_grid(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    model: &CheckpointBundle<f32>,
    path: &Path,
) -> Result<()> {
    let res = model.config.resolution;
    let k = manifest.entries.len().min(8);
    let mut rows: Vec<Vec<Image<f32>>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for entry in manifest.entries.iter().take(k) {
        let x = imagecore::load_image::<f32>(manifest.resolve(manifest_path, entry), res)?;
        let inv = trainer::invert(&x, model)?;
        rows[0].push(x);
        rows[1].push(inv.y0.clamped());
        rows[2].push(inv.y.clamped());
    }
    let (w, h) = (k * res, 3 * res);
    let mut rgb = vec![0u8; w * h * 3];
    for (ri, row) in rows.iter().enumerate() {
        for (ci, img) in row.iter().enumerate() {
            for y in 0..res {
                for x in 0..res {
                    for c in 0..3 {
                        let v = img.get(c, y, x).clamp(-1.0, 1.0);
                        rgb[((ri * res + y) * w + ci * res + x) * 3 + c] =
                            ((v + 1.0) / 2.0 * 255.0).round() as u8;
                    }
                }
            }
        }
    }
    imagecore::save_png_rgb(path, w, h, &rgb)
}

pub fn evaluate(model_path: &Path, data: &Path, out: &Path) -> Result<u8> {
    require_file(model_path, "model checkpoint")?;
    require_file(data, "data manifest")?;
    let model: CheckpointBundle<f32> = load_checkpoint(model_path)?;
    let manifest = DatasetManifest::load(data)?;
    config::write_resolved(&model.config, out)?;
    let report = metrics::evaluate_dataset::<f32, _>(data, &model, out)?;
    write_grid(data, &manifest, &model, &out.join("grid.png"))?;
    println!(
        "evaluated {} images ({} failed): mean ssim={:.4} scc={:.4} vif={:.4} face_id={:.4}",
        report.rows.len(),
        report.failed.len(),
        report.mean.ssim,
        report.mean.scc,
        report.mean.vif,
        report.mean.face_id
    );
    let total = report.rows.len() + report.failed.len();
    let ok = report.rows.len() as f64 / total as f64 >= 0.9;
    Ok(if ok { 0 } else { 1 })
}

struct NamedReport {
    label: String,
    report: MetricReport,
}

fn load_report(path: &Path) -> Result<NamedReport> {
    require_file(path, "metrics report")?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: MetricReport = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("bad report {}: {e}", path.display())))?;
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(NamedReport { label, report })
}

pub fn compare(reports: &[std::path::PathBuf], out: Option<&Path>) -> Result<()> {
    if reports.len() < 2 {
        return Err(Error::validation("compare needs at least two reports"));
    }
    let loaded: Vec<NamedReport> = reports.iter().map(|p| load_report(p)).collect::<Result<_>>()?;

    // all reports must cover the same image ids
    let id_set = |r: &MetricReport| {
        let mut ids: Vec<&str> = r.rows.iter().map(|row| row.id.as_str()).collect();
        ids.sort_unstable();
        ids.join(",")
    };
    let first_ids = id_set(&loaded[0].report);
    for nr in &loaded[1..] {
        if id_set(&nr.report) != first_ids {
            return Err(Error::validation(format!(
                "report {} covers a different id set than {}",
                nr.label, loaded[0].label
            )));
        }
    }

    const COLS: [&str; 5] = ["face_id", "ssim", "scc", "vif", "quality"];
    let value = |r: &MetricReport, col: usize| match col {
        0 => r.mean.face_id,
        1 => r.mean.ssim,
        2 => r.mean.scc,
        3 => r.mean.vif,
        _ => r.mean.quality,
    };
    // best (max) per column; ties all marked
    let best: Vec<f64> = (0..COLS.len())
        .map(|c| loaded.iter().map(|nr| value(&nr.report, c)).fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let mut text = String::new();
    let label_w = loaded.iter().map(|nr| nr.label.len()).max().unwrap_or(5).max(5);
    text.push_str(&format!("{:label_w$}", "model"));
    for c in COLS {
        text.push_str(&format!(" {c:>10}"));
    }
    text.push('\n');
    let mut csv = String::from("model,face_id,ssim,scc,vif,quality\n");
    for nr in &loaded {
        text.push_str(&format!("{:label_w$}", nr.label));
        csv.push_str(&nr.label);
        for c in 0..COLS.len() {
            let v = value(&nr.report, c);
            let mark = if v == best[c] { "*" } else { " " };
            text.push_str(&format!(" {:>9.4}{mark}", v));
            csv.push_str(&format!(",{v}"));
        }
        text.push('\n');
        csv.push('\n');
    }
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join("comparison.txt"), &text)
            .map_err(|e| Error::io(dir.join("comparison.txt"), e))?;
        fs::write(dir.join("comparison.csv"), &csv)
            .map_err(|e| Error::io(dir.join("comparison.csv"), e))?;
    }
    Ok(())
}

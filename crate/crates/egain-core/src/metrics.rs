//! Reconstruction-quality metrics and dataset evaluation.
//!
//! * SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic
//!   range 1, valid windowing; the raw [-1,1] score is mapped to [0,1] via
//!   (s+1)/2.
//! * SCC: Pearson correlation of 3x3-Laplacian-filtered images (center 8,
//!   neighbors -1, valid mode).
//! * VIF: pixel-domain, four scales with a [1,4,6,4,1]/16 blur and 2x
//!   decimation between scales; per non-overlapping 2x2 block,
//!   g = cov/(var_x + 1e-10), sigma_v^2 = var_y - g*cov, accumulating
//!   log2(1 + g^2 var_x / (sigma_v^2 + sigma_n^2)) over
//!   log2(1 + var_x / sigma_n^2), evaluated on the 0-255 intensity scale
//!   where the noise variance is 2.
//!
//! All metric arithmetic runs in f64 on the channel-mean grayscale of
//! [0,1]-range images.

use crate::identity::{self, IdentityNet};
use crate::imagecore::{to_unit_range, DatasetManifest, Image, UnitImage};
use crate::scalar::Scalar;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const VIF_SCALES: usize = 4;
const VIF_EPS: f64 = 1e-10;
const VIF_SIGMA_N_SQ: f64 = 2.0;

fn check_same<T: Scalar>(x: &UnitImage<T>, y: &UnitImage<T>) -> Result<usize> {
    if x.resolution() != y.resolution() {
        return Err(Error::validation(format!(
            "metric operands differ: {} vs {}",
            x.resolution(),
            y.resolution()
        )));
    }
    Ok(x.resolution())
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode filter with a symmetric odd kernel.
fn filter_valid(plane: &[f64], n: usize, kernel: &[f64]) -> (Vec<f64>, usize) {
    let k = kernel.len();
    let out_n = n - k + 1;
    // horizontal
    let mut horiz = vec![0.0; n * out_n];
    for y in 0..n {
        for x in 0..out_n {
            let mut acc = 0.0;
            for (i, &w) in kernel.iter().enumerate() {
                acc += w * plane[y * n + x + i];
            }
            horiz[y * out_n + x] = acc;
        }
    }
    // vertical
    let mut out = vec![0.0; out_n * out_n];
    for y in 0..out_n {
        for x in 0..out_n {
            let mut acc = 0.0;
            for (i, &w) in kernel.iter().enumerate() {
                acc += w * horiz[(y + i) * out_n + x];
            }
            out[y * out_n + x] = acc;
        }
    }
    (out, out_n)
}

/// Normalized structural similarity in [0, 1].
pub fn ssim<T: Scalar>(x: &UnitImage<T>, y: &UnitImage<T>) -> Result<f64> {
    let n = check_same(x, y)?;
    if n < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "image of size {n} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let gx = x.to_gray_f64();
    let gy = y.to_gray_f64();
    let kernel = gaussian_window();
    let xx: Vec<f64> = gx.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = gy.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (mu_x, m) = filter_valid(&gx, n, &kernel);
    let (mu_y, _) = filter_valid(&gy, n, &kernel);
    let (e_xx, _) = filter_valid(&xx, n, &kernel);
    let (e_yy, _) = filter_valid(&yy, n, &kernel);
    let (e_xy, _) = filter_valid(&xy, n, &kernel);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut acc = 0.0;
    for i in 0..m * m {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    let s = acc / (m * m) as f64;
    Ok((s + 1.0) / 2.0)
}

// ---------------------------------------------------------------------------
// SCC
// ---------------------------------------------------------------------------

fn laplacian_valid(plane: &[f64], n: usize) -> Vec<f64> {
    let m = n - 2;
    let mut out = vec![0.0; m * m];
    for y in 0..m {
        for x in 0..m {
            let p = |dy: usize, dx: usize| plane[(y + dy) * n + (x + dx)];
            out[y * m + x] = 8.0 * p(1, 1)
                - p(0, 0)
                - p(0, 1)
                - p(0, 2)
                - p(1, 0)
                - p(1, 2)
                - p(2, 0)
                - p(2, 1)
                - p(2, 2);
        }
    }
    out
}

/// Pearson correlation of the high-pass-filtered images, in [-1, 1].
pub fn scc<T: Scalar>(x: &UnitImage<T>, y: &UnitImage<T>) -> Result<f64> {
    let n = check_same(x, y)?;
    let f = laplacian_valid(&x.to_gray_f64(), n);
    let g = laplacian_valid(&y.to_gray_f64(), n);
    let count = f.len() as f64;
    let (mut sf, mut sg, mut sff, mut sgg, mut sfg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in f.iter().zip(&g) {
        sf += a;
        sg += b;
        sff += a * a;
        sgg += b * b;
        sfg += a * b;
    }
    let var_f = sff - sf * sf / count;
    let var_g = sgg - sg * sg / count;
    if var_f <= 0.0 || var_g <= 0.0 {
        return Err(Error::DegenerateInput(
            "high-pass filtered image has zero variance (constant input?)".into(),
        ));
    }
    let cov = sfg - sf * sg / count;
    Ok((cov / (var_f * var_g).sqrt()).clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// VIF
// ---------------------------------------------------------------------------

/// [1,4,6,4,1]/16 blur (replicated borders) followed by 2x decimation.
fn blur_decimate(plane: &[f64], n: usize) -> (Vec<f64>, usize) {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let at = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for (i, &w) in K.iter().enumerate() {
                acc += w * plane[y * n + at(x as isize + i as isize - 2)];
            }
            horiz[y * n + x] = acc;
        }
    }
    let mut blurred = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for (i, &w) in K.iter().enumerate() {
                acc += w * horiz[at(y as isize + i as isize - 2) * n + x];
            }
            blurred[y * n + x] = acc;
        }
    }
    let m = n / 2;
    let mut out = vec![0.0; m * m];
    for y in 0..m {
        for x in 0..m {
            out[y * m + x] = blurred[(2 * y) * n + 2 * x];
        }
    }
    (out, m)
}

/// Pixel-domain visual information fidelity; `x` is the reference.
///
/// Internally the grayscale is scaled to the 0-255 intensity range (noise
/// variance 2 on that scale), which keeps the 1e-10 division guard
/// negligible; the ratio itself is scale-free.
pub fn vif<T: Scalar>(x: &UnitImage<T>, y: &UnitImage<T>) -> Result<f64> {
    check_same(x, y)?;
    let mut gx: Vec<f64> = x.to_gray_f64().iter().map(|v| v * 255.0).collect();
    let mut gy: Vec<f64> = y.to_gray_f64().iter().map(|v| v * 255.0).collect();
    let mut n = x.resolution();
    let mut num = 0.0;
    let mut den = 0.0;
    for scale in 0..VIF_SCALES {
        if scale > 0 {
            let (nx, m) = blur_decimate(&gx, n);
            let (ny, _) = blur_decimate(&gy, n);
            gx = nx;
            gy = ny;
            n = m;
        }
        if n < 2 {
            break;
        }
        let blocks = n / 2;
        for by in 0..blocks {
            for bx in 0..blocks {
                let mut xs = [0.0; 4];
                let mut ys = [0.0; 4];
                for (k, (dy, dx)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    xs[k] = gx[(2 * by + dy) * n + 2 * bx + dx];
                    ys[k] = gy[(2 * by + dy) * n + 2 * bx + dx];
                }
                let mx = xs.iter().sum::<f64>() / 4.0;
                let my = ys.iter().sum::<f64>() / 4.0;
                let mut var_x = 0.0;
                let mut var_y = 0.0;
                let mut cov = 0.0;
                for k in 0..4 {
                    var_x += (xs[k] - mx) * (xs[k] - mx);
                    var_y += (ys[k] - my) * (ys[k] - my);
                    cov += (xs[k] - mx) * (ys[k] - my);
                }
                var_x /= 4.0;
                var_y /= 4.0;
                cov /= 4.0;
                let g = cov / (var_x + VIF_EPS);
                let sv_sq = (var_y - g * cov).max(0.0);
                num += (1.0 + g * g * var_x / (sv_sq + VIF_SIGMA_N_SQ)).log2();
                den += (1.0 + var_x / VIF_SIGMA_N_SQ).log2();
            }
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput("reference image carries no information".into()));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Per-pair and dataset evaluation
// ---------------------------------------------------------------------------

/// One evaluated pair, in the report column order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub face_id: f64,
    pub ssim: f64,
    pub scc: f64,
    pub vif: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AggregateRow {
    pub face_id: f64,
    pub ssim: f64,
    pub scc: f64,
    pub vif: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: AggregateRow,
    pub median: AggregateRow,
    pub failed: Vec<String>,
}

fn with_metric<R>(name: &str, r: Result<R>) -> Result<R> {
    r.map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{name}: {m}")),
        Error::DegenerateInput(m) => Error::DegenerateInput(format!("{name}: {m}")),
        other => other,
    })
}

/// All five metric values for a (source, reconstruction) pair.
pub fn evaluate_pair<T: Scalar>(
    id: &str,
    x: &Image<T>,
    y: &Image<T>,
    embedder: &IdentityNet<T>,
) -> Result<MetricRow> {
    let ux = to_unit_range(&x.clamped());
    let uy = to_unit_range(&y.clamped());
    let ex = with_metric("face_id", embedder.embed(x))?;
    let ey = with_metric("face_id", embedder.embed(y))?;
    Ok(MetricRow {
        id: id.to_string(),
        face_id: with_metric("face_id", identity::cosine_similarity(&ex, &ey))?,
        ssim: with_metric("ssim", ssim(&ux, &uy))?,
        scc: with_metric("scc", scc(&ux, &uy))?,
        vif: with_metric("vif", vif(&ux, &uy))?,
        quality: identity::quality_magnitude(&ey),
    })
}

/// Anything that can reconstruct an image: returns (initial, final).
pub trait Reconstructor<T: Scalar> {
    fn reconstruct(&self, x: &Image<T>) -> Result<(Image<T>, Image<T>)>;
}

/// Test hook: a "model" that reproduces its input exactly.
pub struct EchoModel;

impl<T: Scalar> Reconstructor<T> for EchoModel {
    fn reconstruct(&self, x: &Image<T>) -> Result<(Image<T>, Image<T>)> {
        Ok((x.clone(), x.clone()))
    }
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn aggregate(rows: &[MetricRow], f: fn(&[f64]) -> f64) -> AggregateRow {
    let col = |get: fn(&MetricRow) -> f64| -> f64 {
        let vals: Vec<f64> = rows.iter().map(get).collect();
        f(&vals)
    };
    AggregateRow {
        face_id: col(|r| r.face_id),
        ssim: col(|r| r.ssim),
        scc: col(|r| r.scc),
        vif: col(|r| r.vif),
        quality: col(|r| r.quality),
    }
}

pub const CSV_HEADER: &str = "id,face_id,ssim,scc,vif,quality";

pub fn report_to_csv(report: &MetricReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.id, r.face_id, r.ssim, r.scc, r.vif, r.quality
        ));
    }
    let agg = |name: &str, a: &AggregateRow| {
        format!("{},{},{},{},{},{}\n", name, a.face_id, a.ssim, a.scc, a.vif, a.quality)
    };
    out.push_str(&agg("mean", &report.mean));
    out.push_str(&agg("median", &report.median));
    out
}

/// Invert every manifest entry, score it, aggregate, and write
/// `metrics.csv` + `metrics.json` under `out_dir`.
///
/// Unreadable or degenerate entries are collected in `failed` instead of
/// aborting the run.
pub fn evaluate_dataset<T: Scalar, R: Reconstructor<T>>(
    manifest_path: &Path,
    model: &R,
    out_dir: &Path,
) -> Result<MetricReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let embedder = IdentityNet::<T>::new(manifest.resolution)?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for entry in &manifest.entries {
        let result = crate::imagecore::load_image::<T>(
            manifest.resolve(manifest_path, entry),
            manifest.resolution,
        )
        .and_then(|x| {
            let (_, y) = model.reconstruct(&x)?;
            evaluate_pair(&entry.id, &x, &y, &embedder)
        });
        match result {
            Ok(row) => rows.push(row),
            Err(_) => failed.push(entry.id.clone()),
        }
    }
    if rows.is_empty() {
        return Err(Error::DegenerateInput("no dataset entry could be evaluated".into()));
    }
    let report = MetricReport {
        mean: aggregate(&rows, mean_of),
        median: aggregate(&rows, median_of),
        rows,
        failed,
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    fs::write(out_dir.join("metrics.csv"), report_to_csv(&report))
        .map_err(|e| Error::io(out_dir.join("metrics.csv"), e))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out_dir.join("metrics.json"), json)
        .map_err(|e| Error::io(out_dir.join("metrics.json"), e))?;
    Ok(report)
}

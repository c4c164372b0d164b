//! Image loading, normalization and the procedural toy-face dataset that
//! stands in for a real face corpus.
//!
//! Pixel conventions: images live in `[-1, 1]` (generator convention) as
//! `[3, H, W]` tensors with H = W a power of two. Metrics consume the
//! `[0, 1]` mapping produced by [`to_unit_range`].

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// A square RGB image in `[-1, 1]`, stored channel-major (`[3, H, W]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    data: Tensor<T>,
}

/// The `[0, 1]` view of an image, used by the quality metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitImage<T> {
    data: Tensor<T>,
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

pub fn validate_resolution(res: usize) -> Result<()> {
    if !is_power_of_two(res) || res < 16 {
        return Err(Error::validation(format!(
            "resolution must be a power of two >= 16, got {res}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Image<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        let sh = data.shape();
        if sh.len() != 3 || sh[0] != 3 || sh[1] != sh[2] {
            return Err(Error::validation(format!("image must be [3,R,R], got {sh:?}")));
        }
        validate_resolution(sh[1])?;
        if !data.all_finite() {
            return Err(Error::validation("image contains non-finite values"));
        }
        Ok(Image { data })
    }

    pub fn constant(resolution: usize, value: T) -> Result<Self> {
        Image::new(Tensor::full(&[3, resolution, resolution], value))
    }

    pub fn resolution(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        let r = self.resolution();
        self.data.data()[(c * r + y) * r + x]
    }

    /// Clamp to the reporting range `[-1, 1]`.
    pub fn clamped(&self) -> Image<T> {
        Image { data: self.data.map(|v| v.maximum(-T::ONE).minimum(T::ONE)) }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image { data: self.data.cast() }
    }
}

impl<T: Scalar> UnitImage<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        let sh = data.shape();
        if sh.len() != 3 || sh[0] != 3 || sh[1] != sh[2] {
            return Err(Error::validation(format!("image must be [3,R,R], got {sh:?}")));
        }
        Ok(UnitImage { data })
    }

    pub fn resolution(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    /// Mean of the three channels, as `R*R` f64 samples (used by metrics).
    pub fn to_gray_f64(&self) -> Vec<f64> {
        let r = self.resolution();
        let plane = r * r;
        let d = self.data.data();
        (0..plane)
            .map(|i| {
                (d[i].to_f64() + d[plane + i].to_f64() + d[2 * plane + i].to_f64()) / 3.0
            })
            .collect()
    }
}

/// Affine map `[-1,1] -> [0,1]`: v' = (v+1)/2.
pub fn to_unit_range<T: Scalar>(x: &Image<T>) -> UnitImage<T> {
    let half = T::from_f64(0.5);
    UnitImage { data: x.data.map(|v| (v + T::ONE) * half) }
}

/// Exact inverse of [`to_unit_range`]: v = 2v' - 1.
pub fn from_unit_range<T: Scalar>(u: &UnitImage<T>) -> Result<Image<T>> {
    let two = T::from_f64(2.0);
    Image::new(u.data.map(|v| v * two - T::ONE))
}

// ---------------------------------------------------------------------------
// Raster decode / encode
// ---------------------------------------------------------------------------

/// Raw 8-bit RGB pixels (row-major, interleaved).
struct Raster {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

fn decode_png(path: &Path) -> Result<Raster> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Decode { path: path.into(), message: e.to_string() })?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Decode { path: path.into(), message: e.to_string() })?;
    let (w, h) = (info.width as usize, info.height as usize);
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Decode { path: path.into(), message: "only 8-bit PNG supported".into() });
    }
    let data = &buf[..info.buffer_size()];
    let rgb = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => {
            return Err(Error::Decode {
                path: path.into(),
                message: format!("unsupported PNG color type {other:?}"),
            })
        }
    };
    Ok(Raster { width: w, height: h, rgb })
}

/// Minimal binary PPM (P6, maxval 255) reader.
fn decode_ppm(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut fields = Vec::new();
    // magic, width, height, maxval; '#' comments run to end of line
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let bad = |m: &str| Error::Decode { path: path.into(), message: m.into() };
    if fields.len() < 4 || fields[0] != "P6" {
        return Err(bad("not a binary P6 PPM"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    if fields[3] != "255" {
        return Err(bad("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(bad("truncated pixel data"));
    }
    Ok(Raster { width, height, rgb: bytes[pos..pos + need].to_vec() })
}

fn decode_raster(path: &Path) -> Result<Raster> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "ppm" => decode_ppm(path),
        _ => decode_png(path),
    }
}

/// Bilinear resample of interleaved RGB u8 data into f64 channel planes
/// scaled `0..=255`. Half-pixel centers, edge clamped.
fn resize_bilinear(r: &Raster, out: usize) -> Vec<f64> {
    let (w, h) = (r.width, r.height);
    let mut planes = vec![0.0f64; 3 * out * out];
    let sx = w as f64 / out as f64;
    let sy = h as f64 / out as f64;
    for oy in 0..out {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for c in 0..3 {
                let p = |yy: usize, xx: usize| r.rgb[(yy * w + xx) * 3 + c] as f64;
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bot = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                planes[(c * out + oy) * out + ox] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
    planes
}

/// Load a raster file, resize to `resolution` and map to `[-1, 1]` via
/// v' = 2*(v/255) - 1.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>, resolution: usize) -> Result<Image<T>> {
    validate_resolution(resolution)?;
    let raster = decode_raster(path.as_ref())?;
    let planes = if raster.width == resolution && raster.height == resolution {
        let mut planes = vec![0.0f64; 3 * resolution * resolution];
        for y in 0..resolution {
            for x in 0..resolution {
                for c in 0..3 {
                    planes[(c * resolution + y) * resolution + x] =
                        raster.rgb[(y * resolution + x) * 3 + c] as f64;
                }
            }
        }
        planes
    } else {
        resize_bilinear(&raster, resolution)
    };
    let data: Vec<T> = planes.iter().map(|&v| T::from_f64(2.0 * (v / 255.0) - 1.0)).collect();
    Image::new(Tensor::new(&[3, resolution, resolution], data))
}

/// Native (width, height) of a raster file.
pub fn image_file_size(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let r = decode_raster(path.as_ref())?;
    Ok((r.width, r.height))
}

/// Write interleaved 8-bit RGB data as a PNG.
pub fn save_png_rgb(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(rgb.len(), width * height * 3, "rgb buffer size");
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Decode { path: path.into(), message: e.to_string() })?;
    writer
        .write_image_data(rgb)
        .map_err(|e| Error::Decode { path: path.into(), message: e.to_string() })?;
    Ok(())
}

/// Save as 8-bit RGB PNG, clamping to `[-1, 1]` first.
pub fn save_png<T: Scalar>(path: impl AsRef<Path>, img: &Image<T>) -> Result<()> {
    let r = img.resolution();
    let mut rgb = vec![0u8; r * r * 3];
    for y in 0..r {
        for x in 0..r {
            for c in 0..3 {
                let v = img.get(c, y, x).to_f64().clamp(-1.0, 1.0);
                rgb[(y * r + x) * 3 + c] = ((v + 1.0) / 2.0 * 255.0).round() as u8;
            }
        }
    }
    save_png_rgb(path, r, r, &rgb)
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the manifest file.
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub resolution: usize,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        validate_resolution(self.resolution)?;
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.id) {
                return Err(Error::validation(format!("duplicate manifest id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("bad manifest {}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    /// Resolve an entry path against the manifest location.
    pub fn resolve(&self, manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }
}

// ---------------------------------------------------------------------------
// Toy faces
// ---------------------------------------------------------------------------

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i64 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
}

impl Ellipse {
    /// Coverage in [0,1] with a ~1px soft edge.
    fn coverage(&self, x: f64, y: f64, px: f64) -> f64 {
        let d = ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2);
        // d == 1 on the boundary; feather width scaled to pixel size
        let fe = px / self.rx.min(self.ry);
        1.0 - smoothstep(1.0 - fe, 1.0 + fe, d)
    }
}

/// Deterministically render one face-like image: gradient background,
/// elliptical head, two eyes, a mouth. A pure function of (resolution, rng
/// state).
pub fn render_toy_face<T: Scalar>(resolution: usize, rng: &mut Rng) -> Result<Image<T>> {
    validate_resolution(resolution)?;
    let bg_top = hsv_to_rgb(rng.uniform(), rng.uniform_in(0.2, 0.5), rng.uniform_in(0.25, 0.8));
    let bg_bot = hsv_to_rgb(rng.uniform(), rng.uniform_in(0.2, 0.5), rng.uniform_in(0.25, 0.8));
    let cx = rng.uniform_in(0.42, 0.58);
    let cy = rng.uniform_in(0.44, 0.58);
    let rx = rng.uniform_in(0.24, 0.34);
    let ry = rx * rng.uniform_in(1.1, 1.35);
    let skin = hsv_to_rgb(rng.uniform_in(0.02, 0.12), rng.uniform_in(0.25, 0.6), rng.uniform_in(0.5, 0.95));
    let head = Ellipse { cx, cy, rx, ry, color: skin };

    let eye_dx = rx * rng.uniform_in(0.35, 0.5);
    let eye_dy = ry * rng.uniform_in(0.15, 0.3);
    let eye_r = rx * rng.uniform_in(0.1, 0.16);
    let eye_color = hsv_to_rgb(rng.uniform(), rng.uniform_in(0.3, 0.9), rng.uniform_in(0.05, 0.3));
    let eyes = [
        Ellipse { cx: cx - eye_dx, cy: cy - eye_dy, rx: eye_r, ry: eye_r * 1.2, color: eye_color },
        Ellipse { cx: cx + eye_dx, cy: cy - eye_dy, rx: eye_r, ry: eye_r * 1.2, color: eye_color },
    ];

    let mouth = Ellipse {
        cx,
        cy: cy + ry * rng.uniform_in(0.4, 0.55),
        rx: rx * rng.uniform_in(0.35, 0.55),
        ry: ry * rng.uniform_in(0.06, 0.14),
        color: hsv_to_rgb(rng.uniform_in(0.96, 1.02), rng.uniform_in(0.5, 0.9), rng.uniform_in(0.3, 0.7)),
    };

    let px = 1.0 / resolution as f64;
    let mut data = vec![T::ZERO; 3 * resolution * resolution];
    for iy in 0..resolution {
        let y = (iy as f64 + 0.5) * px;
        for ix in 0..resolution {
            let x = (ix as f64 + 0.5) * px;
            let mut rgb = [
                bg_top[0] + (bg_bot[0] - bg_top[0]) * y,
                bg_top[1] + (bg_bot[1] - bg_top[1]) * y,
                bg_top[2] + (bg_bot[2] - bg_top[2]) * y,
            ];
            for shape in [&head, &eyes[0], &eyes[1], &mouth] {
                let a = shape.coverage(x, y, px);
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - a) + shape.color[c] * a;
                }
            }
            for c in 0..3 {
                // quantize exactly like the PNG writer so in-memory renders
                // match what training reads back from disk
                let q = (rgb[c].clamp(0.0, 1.0) * 255.0).round();
                data[(c * resolution + iy) * resolution + ix] = T::from_f64(2.0 * (q / 255.0) - 1.0);
            }
        }
    }
    Image::new(Tensor::new(&[3, resolution, resolution], data))
}

/// A standalone toy face for tests: face `index` of the stream seeded by
/// `seed`, identical to what [`make_toy_faces`] writes.
pub fn toy_face<T: Scalar>(resolution: usize, index: usize, seed: u64) -> Result<Image<T>> {
    let mut rng = Rng::derive(seed, face_stream_label(index));
    render_toy_face(resolution, &mut rng)
}

fn face_stream_label(index: usize) -> u64 {
    0xface_0000_u64 + index as u64
}

/// Render `n` toy faces into `out_dir/images/` and write
/// `out_dir/manifest.json`. Pure function of (n, resolution, seed).
pub fn make_toy_faces(
    out_dir: impl AsRef<Path>,
    n: usize,
    resolution: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if n < 1 {
        return Err(Error::validation("dataset size must be >= 1"));
    }
    validate_resolution(resolution)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("images")).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let img: Image<f64> = toy_face(resolution, i, seed)?;
        let id = format!("face_{i:04}");
        let rel = format!("images/{id}.png");
        save_png(out_dir.join(&rel), &img)?;
        entries.push(ManifestEntry { id, path: rel });
    }
    let manifest = DatasetManifest { resolution, seed, entries };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Load all images referenced by a manifest, in manifest order.
pub fn load_dataset<T: Scalar>(
    manifest_path: impl AsRef<Path>,
) -> Result<(DatasetManifest, Vec<Image<T>>)> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(manifest_path)?;
    let mut images = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        images.push(load_image(manifest.resolve(manifest_path, e), manifest.resolution)?);
    }
    Ok((manifest, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("egain-imagecore-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write_constant_png(path: &Path, res: usize, value: u8) {
        let img = Image::<f64>::new(Tensor::full(
            &[3, res, res],
            2.0 * (value as f64 / 255.0) - 1.0,
        ))
        .unwrap();
        save_png(path, &img).unwrap();
    }

    #[test]
    fn range_map_endpoints() {
        let dir = tmp_dir("endpoints");
        write_constant_png(&dir.join("black.png"), 32, 0);
        write_constant_png(&dir.join("white.png"), 32, 255);
        write_constant_png(&dir.join("gray.png"), 32, 128);

        let black: Image<f64> = load_image(dir.join("black.png"), 32).unwrap();
        assert!(black.tensor().data().iter().all(|&v| v == -1.0));
        let white: Image<f64> = load_image(dir.join("white.png"), 32).unwrap();
        assert!(white.tensor().data().iter().all(|&v| v == 1.0));
        let gray: Image<f64> = load_image(dir.join("gray.png"), 32).unwrap();
        let expected = 2.0 * (128.0 / 255.0) - 1.0;
        assert!(gray.tensor().data().iter().all(|&v| (v - expected).abs() < 1e-12));
        assert!((expected - 0.00392).abs() < 1e-4);
    }

    #[test]
    fn bad_resolution_and_missing_file() {
        let dir = tmp_dir("errors");
        write_constant_png(&dir.join("x.png"), 16, 10);
        assert!(matches!(load_image::<f64>(dir.join("x.png"), 33), Err(Error::Validation(_))));
        assert!(matches!(load_image::<f64>(dir.join("nope.png"), 32), Err(Error::Io { .. })));
    }

    #[test]
    fn unit_range_round_trip() {
        let img: Image<f64> = toy_face(16, 0, 5).unwrap();
        let unit = to_unit_range(&img);
        assert!(unit.tensor().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let back = from_unit_range(&unit).unwrap();
        assert!(back.tensor().max_abs_diff(img.tensor()) < 1e-12);
        let lo = to_unit_range(&Image::<f64>::constant(16, -1.0).unwrap());
        assert!(lo.tensor().data().iter().all(|&v| v == 0.0));
        let hi = to_unit_range(&Image::<f64>::constant(16, 1.0).unwrap());
        assert!(hi.tensor().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn save_load_round_trip_within_quantization() {
        let dir = tmp_dir("roundtrip");
        let img: Image<f64> = toy_face(32, 3, 11).unwrap();
        save_png(dir.join("f.png"), &img).unwrap();
        let back: Image<f64> = load_image(dir.join("f.png"), 32).unwrap();
        assert!(back.tensor().max_abs_diff(img.tensor()) <= 2.0 / 255.0 + 1e-12);
    }

    #[test]
    fn ppm_decode() {
        let dir = tmp_dir("ppm");
        let mut bytes = b"P6\n# comment\n16 16\n255\n".to_vec();
        bytes.extend(std::iter::repeat([10u8, 200, 30]).take(256).flatten());
        fs::write(dir.join("x.ppm"), &bytes).unwrap();
        let img: Image<f64> = load_image(dir.join("x.ppm"), 16).unwrap();
        assert!((img.get(1, 0, 0) - (2.0 * 200.0 / 255.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn toy_faces_deterministic_and_seed_sensitive() {
        let d1 = tmp_dir("det1");
        let d2 = tmp_dir("det2");
        make_toy_faces(&d1, 1, 16, 7).unwrap();
        make_toy_faces(&d2, 1, 16, 7).unwrap();
        let a = fs::read(d1.join("images/face_0000.png")).unwrap();
        let b = fs::read(d2.join("images/face_0000.png")).unwrap();
        assert_eq!(a, b, "seeded rerun must be byte-identical");

        let d3 = tmp_dir("det3");
        make_toy_faces(&d3, 1, 16, 8).unwrap();
        let c = fs::read(d3.join("images/face_0000.png")).unwrap();
        assert_ne!(a, c, "different seeds must differ somewhere");
    }

    #[test]
    fn manifest_counts_and_shapes() {
        let dir = tmp_dir("manifest");
        let m = make_toy_faces(&dir, 64, 32, 9).unwrap();
        assert_eq!(m.entries.len(), 64);
        let (m2, images) = load_dataset::<f32>(dir.join("manifest.json")).unwrap();
        assert_eq!(m, m2);
        assert!(images.iter().all(|i| i.resolution() == 32));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let m = DatasetManifest {
            resolution: 32,
            seed: 0,
            entries: vec![
                ManifestEntry { id: "a".into(), path: "a.png".into() },
                ManifestEntry { id: "a".into(), path: "b.png".into() },
            ],
        };
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unit_range_bijection(seed in 0u64..1000) {
            let mut rng = crate::rng::Rng::new(seed);
            let data: Vec<f64> = (0..3 * 16 * 16).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let img = Image::new(Tensor::new(&[3, 16, 16], data)).unwrap();
            let back = from_unit_range(&to_unit_range(&img)).unwrap();
            prop_assert!(back.tensor().max_abs_diff(img.tensor()) < 1e-12);
        }
    }
}

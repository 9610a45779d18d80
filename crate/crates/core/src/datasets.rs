//! Subjective-score manifests and synthetic degradations.
//!
//! A manifest is a CSV file with the exact header
//!
//! ```text
//! image_path,reference_id,distortion,score,score_min,score_max,polarity
//! ```
//!
//! Relative image paths resolve against the manifest's directory. `distortion` is
//! one of `jp2k`, `jpeg`, `wn`, `gblur`; `polarity` is `lower-is-better` (DMOS)
//! or `higher-is-better` (MOS).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::image_io::{GrayImage, ImageError};

pub const MANIFEST_HEADER: [&str; 7] = [
    "image_path",
    "reference_id",
    "distortion",
    "score",
    "score_min",
    "score_max",
    "polarity",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: image file `{image}` does not exist")]
    MissingFile {
        path: PathBuf,
        line: usize,
        image: PathBuf,
    },
    #[error("{path}:{line}: score {score} outside [{min}, {max}]")]
    ScoreOutOfRange {
        path: PathBuf,
        line: usize,
        score: f64,
        min: f64,
        max: f64,
    },
    #[error("manifest `{0}` has no records")]
    Empty(PathBuf),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distortion {
    Jp2k,
    Jpeg,
    Wn,
    Gblur,
}

impl Distortion {
    pub const ALL: [Distortion; 4] = [
        Distortion::Jp2k,
        Distortion::Jpeg,
        Distortion::Wn,
        Distortion::Gblur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distortion::Jp2k => "jp2k",
            Distortion::Jpeg => "jpeg",
            Distortion::Wn => "wn",
            Distortion::Gblur => "gblur",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distortion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Distortion::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown distortion `{s}` (jp2k|jpeg|wn|gblur)"))
    }
}

/// Direction in which subjective scores improve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    LowerIsBetter,
    HigherIsBetter,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::LowerIsBetter => "lower-is-better",
            Polarity::HigherIsBetter => "higher-is-better",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower-is-better" | "lower" | "dmos" => Ok(Polarity::LowerIsBetter),
            "higher-is-better" | "higher" | "mos" => Ok(Polarity::HigherIsBetter),
            other => Err(format!(
                "unknown polarity `{other}` (lower-is-better|higher-is-better)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub image_path: PathBuf,
    pub reference_id: String,
    pub distortion: Distortion,
    pub score: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Polarity shared by every record.
    pub fn polarity(&self) -> Option<Polarity> {
        self.records.first().map(|r| r.polarity)
    }

    pub fn class_counts(&self) -> BTreeMap<Distortion, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.distortion).or_insert(0) += 1;
        }
        out
    }

    /// Distinct reference ids in first-appearance order.
    pub fn reference_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.reference_id.as_str()))
            .map(|r| r.reference_id.clone())
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        load_manifest(path)
    }

    /// Writes the manifest; image paths are made relative to `path`'s directory when possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(MANIFEST_HEADER).map_err(csv_io)?;
        for r in &self.records {
            let img = r.image_path.strip_prefix(base).unwrap_or(&r.image_path);
            w.write_record([
                img.to_string_lossy().as_ref(),
                &r.reference_id,
                r.distortion.name(),
                &r.score.to_string(),
                &r.score_min.to_string(),
                &r.score_max.to_string(),
                r.polarity.name(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> DatasetError {
    DatasetError::Io(std::io::Error::other(e.to_string()))
}

/// Reads and validates a manifest. Any bad row fails the whole load with its line number.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let schema = |line: usize, message: String| DatasetError::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => DatasetError::Io(io),
            other => schema(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| schema(1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != MANIFEST_HEADER {
        return Err(schema(
            1,
            format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| schema(line, e.to_string()))?;
        let num = |k: usize| -> Result<f64, DatasetError> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    schema(
                        line,
                        format!(
                            "{} `{}` is not a finite number",
                            MANIFEST_HEADER[k], &rec[k]
                        ),
                    )
                })
        };
        let image_path = base.join(&rec[0]);
        if rec[0].is_empty() {
            return Err(schema(line, "empty image_path".into()));
        }
        if rec[1].is_empty() {
            return Err(schema(line, "empty reference_id".into()));
        }
        let distortion: Distortion = rec[2].parse().map_err(|e| schema(line, e))?;
        let (score, score_min, score_max) = (num(3)?, num(4)?, num(5)?);
        let polarity: Polarity = rec[6].parse().map_err(|e| schema(line, e))?;
        if score_min >= score_max {
            return Err(schema(
                line,
                format!("score_min {score_min} must be below score_max {score_max}"),
            ));
        }
        if score < score_min || score > score_max {
            return Err(DatasetError::ScoreOutOfRange {
                path: path.to_path_buf(),
                line,
                score,
                min: score_min,
                max: score_max,
            });
        }
        if let Some(first) = records.first().map(|r: &Record| r.polarity) {
            if first != polarity {
                return Err(schema(line, "polarity differs from earlier records".into()));
            }
        }
        if !image_path.is_file() {
            return Err(DatasetError::MissingFile {
                path: path.to_path_buf(),
                line,
                image: image_path,
            });
        }
        records.push(Record {
            image_path,
            reference_id: rec[1].to_string(),
            distortion,
            score,
            score_min,
            score_max,
            polarity,
        });
    }
    if records.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    let dataset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(DatasetManifest {
        dataset_id,
        records,
    })
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds seeded Gaussian noise with standard deviation `sigma`, then clamps and rounds.
pub fn degrade_wn(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    GrayImage::from_fn(img.width(), img.height(), |r, c| {
        to_u8(img.get(r, c) as f64 + rng.sample(noise))
    })
    .expect("same size as a valid image")
}

/// Normalized 1-D Gaussian taps for offsets `-⌈3σ⌉..=⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Mirror index into `0..n` (edge sample repeated: `... b a | a b ...`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with reflected borders, rounded to 8 bits.
pub fn degrade_gblur(img: &GrayImage, sigma: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let src: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wgt)| wgt * src[r * w + reflect(c as i64 + k as i64 - radius, w)])
                .sum();
        }
    }
    GrayImage::from_fn(w, h, |r, c| {
        to_u8(
            kernel
                .iter()
                .enumerate()
                .map(|(k, wgt)| wgt * tmp[reflect(r as i64 + k as i64 - radius, h) * w + c])
                .sum(),
        )
    })
    .expect("same size as a valid image")
}

/// Procedural "natural-looking" base image: a random-phase field with a `1/f`
/// amplitude spectrum plus a few flat shapes for sharp edges.
pub fn synthetic_base(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size;
    let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
    let freq = |i: usize| {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    for u in 0..n {
        for v in 0..n {
            let f = (freq(u).powi(2) + freq(v).powi(2)).sqrt();
            if f == 0.0 {
                continue;
            }
            let amp = 1.0 / f.powf(1.1);
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            spec[u * n + v] = Complex64::new(a, b) * amp;
        }
    }
    let mut planner = FftPlanner::new();
    let row = planner.plan_fft_inverse(n);
    for r in spec.chunks_mut(n) {
        row.process(r);
    }
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = spec[r * n + c];
        }
    }
    for r in t.chunks_mut(n) {
        row.process(r);
    }
    let field: Vec<f64> = (0..n * n).map(|i| t[(i % n) * n + i / n].re).collect();
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
    let mut px: Vec<f64> = field
        .iter()
        .map(|v| 128.0 + 38.0 * (v - mean) / sd)
        .collect();

    let shapes = rng.random_range(3..7);
    for _ in 0..shapes {
        let level: f64 = rng.random_range(30.0..225.0);
        let (cy, cx) = (
            rng.random_range(0.0..n as f64),
            rng.random_range(0.0..n as f64),
        );
        let rad: f64 = rng.random_range(n as f64 * 0.05..n as f64 * 0.2);
        let disk = rng.random_bool(0.5);
        for r in 0..n {
            for c in 0..n {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let inside = if disk {
                    dy * dy + dx * dx <= rad * rad
                } else {
                    dy.abs() <= rad && dx.abs() <= 0.6 * rad
                };
                if inside {
                    let p = &mut px[r * n + c];
                    *p = 0.35 * *p + 0.65 * level;
                }
            }
        }
    }
    GrayImage::from_fn(n, n, |r, c| to_u8(px[r * n + c])).expect("size is at least one block")
}

/// Severity-to-score map: `score = 100 · s / (s + half)`, DMOS-like (lower is better).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMap {
    pub half_severity: f64,
}

impl ScoreMap {
    pub fn score(&self, severity: f64) -> f64 {
        100.0 * severity / (severity + self.half_severity)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    /// `(reference id, clean image)` pairs.
    pub bases: Vec<(String, GrayImage)>,
    pub wn_sigmas: Vec<f64>,
    pub gblur_sigmas: Vec<f64>,
    pub wn_scores: ScoreMap,
    pub gblur_scores: ScoreMap,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n_bases` procedural bases of `size`×`size` with four severities per class.
    pub fn procedural(n_bases: usize, size: usize, seed: u64) -> Self {
        let bases = (0..n_bases)
            .into_par_iter()
            .map(|b| {
                (
                    format!("base{b:02}"),
                    synthetic_base(size, seed.wrapping_mul(1_000_003).wrapping_add(b as u64)),
                )
            })
            .collect();
        Self {
            bases,
            wn_sigmas: vec![4.0, 10.0, 20.0, 40.0],
            gblur_sigmas: vec![0.8, 1.6, 3.0, 5.5],
            wn_scores: ScoreMap {
                half_severity: 15.0,
            },
            gblur_scores: ScoreMap { half_severity: 2.0 },
            seed,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::Spec(m.into()));
        if self.bases.is_empty() {
            return bad("no base images");
        }
        for levels in [&self.wn_sigmas, &self.gblur_sigmas] {
            if levels.len() < 2 {
                return bad("need at least two severity levels per class");
            }
            if levels.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad("severities must be positive");
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return bad("severities must be strictly increasing");
            }
        }
        Ok(())
    }
}

/// File name of the manifest written by [`build_synthetic_manifest`].
pub const SYNTHETIC_MANIFEST: &str = "synthetic.csv";

/// Writes every degraded image as PNG under `out_dir` and returns their manifest
/// (also saved as `out_dir/synthetic.csv`).
pub fn build_synthetic_manifest(
    spec: &SyntheticSpec,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut jobs = Vec::new();
    for (b, (id, _)) in spec.bases.iter().enumerate() {
        for (l, &s) in spec.wn_sigmas.iter().enumerate() {
            jobs.push((b, id, Distortion::Wn, l, s));
        }
        for (l, &s) in spec.gblur_sigmas.iter().enumerate() {
            jobs.push((b, id, Distortion::Gblur, l, s));
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(b, id, d, l, s)| {
            let base = &spec.bases[b].1;
            let (img, score) = match d {
                Distortion::Wn => {
                    let seed = spec.seed
                        ^ ((b as u64) << 32 | l as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    (degrade_wn(base, s, seed), spec.wn_scores.score(s))
                }
                _ => (degrade_gblur(base, s), spec.gblur_scores.score(s)),
            };
            let path = out_dir.join(format!("{id}_{}_{l}.png", d.name()));
            img.save_png(&path)?;
            Ok(Record {
                image_path: path,
                reference_id: id.clone(),
                distortion: d,
                score,
                score_min: 0.0,
                score_max: 100.0,
                polarity: Polarity::LowerIsBetter,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let manifest = DatasetManifest {
        dataset_id: "synthetic".into(),
        records,
    };
    manifest.save(out_dir.join(SYNTHETIC_MANIFEST))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn variance(img: &GrayImage) -> f64 {
        let px = img.pixels();
        let m = px.iter().map(|&p| p as f64).sum::<f64>() / px.len() as f64;
        px.iter().map(|&p| (p as f64 - m).powi(2)).sum::<f64>() / px.len() as f64
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn wn_statistics_and_determinism() {
        let gray = GrayImage::from_fn(256, 256, |_, _| 128).unwrap();
        let out = degrade_wn(&gray, 10.0, 5);
        let d: Vec<f64> = out.pixels().iter().map(|&p| p as f64 - 128.0).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd - 10.0).abs() < 0.5, "sd {sd}");
        assert_eq!(degrade_wn(&gray, 10.0, 5), out);
        assert_ne!(degrade_wn(&gray, 10.0, 6), out);
        let base = synthetic_base(256, 1);
        assert_eq!(degrade_wn(&base, 1e-9, 3), base);
    }

    #[test]
    fn gblur_properties() {
        for s in [0.5, 1.0, 2.7, 6.0] {
            let k = gaussian_kernel(s);
            assert_eq!(k.len(), 2 * (3.0 * s).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let flat = GrayImage::from_fn(256, 300, |_, _| 77).unwrap();
        assert_eq!(degrade_gblur(&flat, 2.0), flat);
        let base = synthetic_base(256, 2);
        let mut prev = variance(&base);
        for s in [0.7, 1.5, 3.0, 6.0] {
            let v = variance(&degrade_gblur(&base, s));
            assert!(v < prev, "sigma {s}: {v} !< {prev}");
            prev = v;
        }
    }

    #[test]
    fn reflect_indexing() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn synthetic_manifest_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec::procedural(5, 256, 42);
        let m = build_synthetic_manifest(&spec, dir.path()).unwrap();
        assert_eq!(m.len(), 40);
        assert_eq!(m.class_counts()[&Distortion::Wn], 20);
        assert_eq!(m.reference_ids().len(), 5);
        for base in m.reference_ids() {
            for d in [Distortion::Wn, Distortion::Gblur] {
                let scores: Vec<f64> = m
                    .records
                    .iter()
                    .filter(|r| r.reference_id == base && r.distortion == d)
                    .map(|r| r.score)
                    .collect();
                assert!(scores.windows(2).all(|w| w[0] < w[1]));
            }
        }
        let loaded = load_manifest(dir.path().join("synthetic.csv")).unwrap();
        assert_eq!(loaded.records, m.records);

        let first = std::fs::read(&m.records[0].image_path).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let again =
            build_synthetic_manifest(&SyntheticSpec::procedural(5, 256, 42), dir2.path()).unwrap();
        assert_eq!(std::fs::read(&again.records[0].image_path).unwrap(), first);
        let last = std::fs::read(&m.records[39].image_path).unwrap();
        assert_eq!(std::fs::read(&again.records[39].image_path).unwrap(), last);
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        GrayImage::from_fn(256, 256, |_, _| 0)
            .unwrap()
            .save_png(&dir.path().join("a.png"))
            .unwrap();
        let h = MANIFEST_HEADER.join(",");

        let ok = write(
            dir.path(),
            "ok.csv",
            &format!("{h}\na.png,r1,wn,10,0,100,lower-is-better\n"),
        );
        let m = load_manifest(&ok).unwrap();
        assert_eq!((m.dataset_id.as_str(), m.len()), ("ok", 1));

        let p = write(
            dir.path(),
            "bad1.csv",
            &format!("{h}\na.png,r1,wn,10,0,100,lower\na.png,r1,noise,10,0,100,lower\n"),
        );
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::Schema { line: 3, .. })
        ));

        let p = write(
            dir.path(),
            "bad2.csv",
            &format!("{h}\na.png,r1,wn,120,0,100,lower\n"),
        );
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::ScoreOutOfRange { line: 2, .. })
        ));

        let p = write(
            dir.path(),
            "bad3.csv",
            &format!("{h}\na.png,r1,wn,1,0,100,lower\nmissing.png,r1,wn,1,0,100,lower\n"),
        );
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::MissingFile { line: 3, .. })
        ));

        let p = write(dir.path(), "bad4.csv", "path,ref\na.png,r1\n");
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::Schema { line: 1, .. })
        ));

        let p = write(
            dir.path(),
            "bad5.csv",
            &format!("{h}\na.png,r1,wn,x,0,100,lower\n"),
        );
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::Schema { line: 2, .. })
        ));

        let p = write(
            dir.path(),
            "bad6.csv",
            &format!("{h}\na.png,r1,wn,1,0,100,lower\na.png,r1,wn,1,0,100,higher\n"),
        );
        assert!(matches!(
            load_manifest(&p),
            Err(DatasetError::Schema { line: 3, .. })
        ));

        let p = write(dir.path(), "empty.csv", &format!("{h}\n"));
        assert!(matches!(load_manifest(&p), Err(DatasetError::Empty(_))));
    }
}

//! Distortion classifier plus per-distortion quality regressors, and the
//! train/test protocol built around them.
//!
//! A [`TwoStageModel`] holds a probabilistic classifier over the distortion classes and
//! one ν-SVR per class. The quality estimate is the probability-weighted sum of the
//! regressor outputs. Training rounds split the data by reference image so no scene
//! content is shared between the training and held-out partitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::datasets::{DatasetError, DatasetManifest, Distortion, Polarity};
use crate::eval::{self, ClassScores, EvalError, RoundResult};
use crate::features::{FeatureError, FeatureExtractor};
use crate::image_io::{self, BlockPolicy, GrayImage};
use crate::svm::codec::{self, ModelKind};
use crate::svm::{
    canonical_order, DistanceMatrix, Standardizer, SvcModel, SvcParams, SvmError, SvrModel,
    SvrParams,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("need at least {need} reference images, found {have}")]
    TooFewReferences { have: usize, need: usize },
    #[error("need at least {need} samples, found {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("training partition has no `{0}` images")]
    MissingClass(Distortion),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("config line {line}: {message}")]
    InvalidConfig { line: usize, message: String },
    #[error("round {round}: reference `{reference}` appears in both training and test partitions")]
    Leakage { round: usize, reference: String },
    #[error("existing results file does not match this run: {0}")]
    ResultsMismatch(String),
    #[error("feature rows do not match the manifest: {0}")]
    FeatureMismatch(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameter search space and cross-validation layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub nu: f64,
    pub cv_folds: usize,
    pub cv_repeats: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            c_grid: (-1..=13).step_by(2).map(|k| 2f64.powi(k)).collect(),
            gamma_grid: (-8..=0).step_by(2).map(|k| 2f64.powi(k)).collect(),
            nu: 0.5,
            cv_folds: 5,
            cv_repeats: 5,
        }
    }
}

impl GridConfig {
    /// A 3×3 grid with a single CV repetition, for desk-scale runs.
    pub fn reduced() -> Self {
        Self {
            c_grid: [1, 5, 9].map(|k| 2f64.powi(k)).to_vec(),
            gamma_grid: [-6, -4, -2].map(|k| 2f64.powi(k)).to_vec(),
            cv_repeats: 1,
            ..Self::default()
        }
    }

    pub fn single(c: f64, gamma: f64) -> Self {
        Self {
            c_grid: vec![c],
            gamma_grid: vec![gamma],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidGrid(m));
        if self.c_grid.is_empty() || self.gamma_grid.is_empty() {
            return bad("grids must be non-empty".into());
        }
        if let Some(v) = self
            .c_grid
            .iter()
            .chain(&self.gamma_grid)
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return bad(format!("grid value {v} is not positive"));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad(format!("nu = {} must lie in (0, 1)", self.nu));
        }
        if self.cv_folds < 2 || self.cv_repeats == 0 {
            return bad("need at least 2 CV folds and 1 repeat".into());
        }
        Ok(())
    }

    /// Cells in tie-break order: ascending C, then ascending γ.
    fn cells(&self) -> Vec<(f64, f64)> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let gammas = sorted(&self.gamma_grid);
        sorted(&self.c_grid)
            .into_iter()
            .flat_map(|c| gammas.iter().map(move |&g| (c, g)))
            .collect()
    }
}

/// What the cross-validated search optimizes.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Class labels, scored by out-of-fold accuracy with stratified folds.
    Classes(&'a [usize]),
    /// Real targets, scored by out-of-fold Spearman correlation.
    Scores(&'a [f64]),
}

impl Target<'_> {
    fn len(&self) -> usize {
        match self {
            Target::Classes(l) => l.len(),
            Target::Scores(s) => s.len(),
        }
    }

    fn key(&self, i: usize) -> f64 {
        match self {
            Target::Classes(l) => l[i] as f64,
            Target::Scores(s) => s[i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    /// Mean cross-validated score of the chosen cell.
    pub score: f64,
}

/// Fold index per sample. Stratified when `strata` is given.
fn assign_folds(
    n: usize,
    folds: usize,
    strata: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut fold = vec![0; n];
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups
            .entry(strata.map_or(0, |s| s[i]))
            .or_default()
            .push(i);
    }
    // Continue the round-robin across strata so fold sizes stay balanced.
    let mut next = 0;
    for members in groups.values_mut() {
        members.shuffle(rng);
        for &i in members.iter() {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

/// Exhaustive cross-validated search over `grid`. Scores are averaged over the CV
/// repetitions; ties go to the smaller C, then the smaller γ.
pub fn grid_search(
    rows: &[Vec<f64>],
    target: Target<'_>,
    grid: &GridConfig,
    seed: u64,
) -> Result<GridChoice, ProtocolError> {
    grid.validate()?;
    let n = rows.len();
    if target.len() != n {
        return Err(SvmError::DimensionMismatch {
            expected: n,
            got: target.len(),
        }
        .into());
    }
    if n < grid.cv_folds {
        return Err(ProtocolError::TooFewSamples {
            have: n,
            need: grid.cv_folds,
        });
    }
    let dim = rows[0].len();
    let order = canonical_order(rows, |i| target.key(i));
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let labels: Vec<usize> = match target {
        Target::Classes(l) => order.iter().map(|&i| l[i]).collect(),
        Target::Scores(_) => Vec::new(),
    };
    let scores: Vec<f64> = match target {
        Target::Scores(s) => order.iter().map(|&i| s[i]).collect(),
        Target::Classes(_) => Vec::new(),
    };
    let classify = matches!(target, Target::Classes(_));
    let dist = DistanceMatrix::new(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layouts: Vec<Vec<usize>> = (0..grid.cv_repeats)
        .map(|_| {
            assign_folds(
                n,
                grid.cv_folds,
                classify.then_some(labels.as_slice()),
                &mut rng,
            )
        })
        .collect();

    let cells = grid.cells();
    let results: Vec<Result<f64, ProtocolError>> = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let mut total = 0.0;
            for fold_of in &layouts {
                let mut oof_class = vec![0usize; n];
                let mut oof_score = vec![0.0; n];
                for f in 0..grid.cv_folds {
                    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
                    let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
                    if held.is_empty() {
                        continue;
                    }
                    if classify {
                        let params = SvcParams {
                            probability: false,
                            ..SvcParams::new(c, gamma)
                        };
                        match SvcModel::fit_indexed(&rows, &dist, &train, &labels, dim, &params) {
                            Ok(m) => {
                                for &i in &held {
                                    oof_class[i] = m.predict_vote(&rows[i])?;
                                }
                            }
                            // A training fold with one class predicts that class.
                            Err(SvmError::SingleClass) => {
                                for &i in &held {
                                    oof_class[i] = labels[train[0]];
                                }
                            }
                            Err(e) => return Err(e.into()),
                        }
                    } else {
                        let m = SvrModel::fit_indexed(
                            &rows,
                            &dist,
                            &train,
                            &scores,
                            dim,
                            &SvrParams::new(c, gamma, grid.nu),
                        )?;
                        for &i in &held {
                            oof_score[i] = m.predict(&rows[i])?;
                        }
                    }
                }
                total += if classify {
                    eval::accuracy(&oof_class, &labels)?
                } else {
                    // Constant predictions or targets carry no rank information.
                    eval::srocc(&oof_score, &scores).unwrap_or(0.0)
                };
            }
            Ok(total / layouts.len() as f64)
        })
        .collect();

    let mut best: Option<GridChoice> = None;
    for (&(c, gamma), score) in cells.iter().zip(results) {
        let score = score?;
        if best.as_ref().map_or(true, |b| score > b.score + 1e-12) {
            best = Some(GridChoice { c, gamma, score });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Reference-disjoint fold assignments for repeated K-fold rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    /// Sorted reference ids.
    pub references: Vec<String>,
    /// `assignments[repeat][r]` is the test fold of `references[r]`.
    pub assignments: Vec<Vec<usize>>,
    pub folds: usize,
    pub seed: u64,
}

/// One train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSpec {
    /// 1-based, in plan order.
    pub round: usize,
    pub repeat: usize,
    pub fold: usize,
    pub train_refs: BTreeSet<String>,
    pub test_refs: BTreeSet<String>,
}

impl SplitPlan {
    pub fn new(
        manifest: &DatasetManifest,
        repeats: usize,
        folds: usize,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let references = manifest.reference_ids();
        if folds < 2 || references.len() < folds {
            return Err(ProtocolError::TooFewReferences {
                have: references.len(),
                need: folds.max(2),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignments = (0..repeats)
            .map(|_| {
                let mut perm: Vec<usize> = (0..references.len()).collect();
                perm.shuffle(&mut rng);
                let mut fold = vec![0; references.len()];
                for (pos, &r) in perm.iter().enumerate() {
                    fold[r] = pos % folds;
                }
                fold
            })
            .collect();
        Ok(Self {
            references,
            assignments,
            folds,
            seed,
        })
    }

    pub fn repeats(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_rounds(&self) -> usize {
        self.repeats() * self.folds
    }

    pub fn fold_sizes(&self, repeat: usize) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignments[repeat] {
            sizes[f] += 1;
        }
        sizes
    }

    /// Round `round` (1-based): repeat `(round-1) / folds`, fold `(round-1) % folds`.
    pub fn round(&self, round: usize) -> Option<RoundSpec> {
        if round == 0 || round > self.n_rounds() {
            return None;
        }
        let (repeat, fold) = ((round - 1) / self.folds, (round - 1) % self.folds);
        let (test, train): (Vec<_>, Vec<_>) = self
            .references
            .iter()
            .zip(&self.assignments[repeat])
            .partition(|(_, f)| **f == fold);
        Some(RoundSpec {
            round,
            repeat,
            fold,
            train_refs: train.into_iter().map(|(r, _)| r.clone()).collect(),
            test_refs: test.into_iter().map(|(r, _)| r.clone()).collect(),
        })
    }
}

/// A manifest with one feature row per record.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub manifest: DatasetManifest,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(
        manifest: DatasetManifest,
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, ProtocolError> {
        if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(ProtocolError::FeatureMismatch(format!(
                "{} names, row of length {}",
                names.len(),
                r.len()
            )));
        }
        if manifest.len() != rows.len() {
            return Err(ProtocolError::FeatureMismatch(format!(
                "{} records, {} feature rows",
                manifest.len(),
                rows.len()
            )));
        }
        Ok(Self {
            manifest,
            names,
            rows,
        })
    }

    /// Extracts features for every record, in manifest order.
    pub fn extract(
        manifest: DatasetManifest,
        extractor: &dyn FeatureExtractor,
    ) -> Result<Self, ProtocolError> {
        let rows = manifest
            .records
            .par_iter()
            .map(|r| -> Result<Vec<f64>, ProtocolError> {
                let img = image_io::load_gray(&r.image_path).map_err(DatasetError::from)?;
                Ok(extractor.extract(&img)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(manifest, extractor.names(), rows)
    }

    pub fn name(&self) -> &str {
        &self.manifest.dataset_id
    }
}

/// Per-stage hyperparameter choices of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub classifier: GridChoice,
    pub regressors: Vec<(Distortion, GridChoice)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityPrediction {
    /// `Σ pᵢ qᵢ`, in the score scale of the training data.
    pub quality: f64,
    /// Class probabilities, in [`TwoStageModel::classes`] order.
    pub probabilities: Vec<f64>,
    /// Every regressor's output, same order.
    pub regressions: Vec<f64>,
    pub class: Distortion,
}

/// Probability-weighted fusion, clamped to the regressor range against rounding.
pub fn fuse(probabilities: &[f64], regressions: &[f64]) -> f64 {
    let q: f64 = probabilities
        .iter()
        .zip(regressions)
        .map(|(p, q)| p * q)
        .sum();
    let lo = regressions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = regressions
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    q.clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageModel {
    pub classes: Vec<Distortion>,
    pub feature_names: Vec<String>,
    pub block_policy: BlockPolicy,
    /// Direction of the training scores.
    pub polarity: Polarity,
    pub standardizer: Standardizer,
    /// Labels are indices into `classes`.
    pub classifier: SvcModel,
    /// One per class, same order as `classes`.
    pub regressors: Vec<SvrModel>,
}

/// Training inputs for [`TwoStageModel::train`].
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions<'a> {
    pub classes: &'a [Distortion],
    pub grid: &'a GridConfig,
    pub seed: u64,
    pub block_policy: BlockPolicy,
}

impl TwoStageModel {
    /// Trains on the given rows. Records whose class is outside `options.classes` are ignored.
    pub fn train(
        set: &FeatureSet,
        subset: &[usize],
        options: &TrainOptions<'_>,
    ) -> Result<(Self, TrainReport), ProtocolError> {
        let classes = options.classes.to_vec();
        let index_of = |d: Distortion| classes.iter().position(|c| *c == d);
        let used: Vec<usize> = subset
            .iter()
            .copied()
            .filter(|&i| index_of(set.manifest.records[i].distortion).is_some())
            .collect();
        for &c in &classes {
            if !used
                .iter()
                .any(|&i| set.manifest.records[i].distortion == c)
            {
                return Err(ProtocolError::MissingClass(c));
            }
        }
        let polarity = set.manifest.polarity().unwrap_or(Polarity::LowerIsBetter);
        let raw: Vec<Vec<f64>> = used.iter().map(|&i| set.rows[i].clone()).collect();
        let standardizer = Standardizer::fit(&raw)?;
        let rows = standardizer.apply_rows(&raw);
        let labels: Vec<usize> = used
            .iter()
            .map(|&i| index_of(set.manifest.records[i].distortion).expect("filtered"))
            .collect();
        let scores: Vec<f64> = used
            .iter()
            .map(|&i| set.manifest.records[i].score)
            .collect();

        let classifier_stage = || -> Result<(SvcModel, GridChoice), ProtocolError> {
            let choice = grid_search(&rows, Target::Classes(&labels), options.grid, options.seed)?;
            let params = SvcParams {
                seed: options.seed,
                ..SvcParams::new(choice.c, choice.gamma)
            };
            Ok((SvcModel::fit(&rows, &labels, &params)?, choice))
        };
        let regressor_stage = || -> Result<Vec<(SvrModel, GridChoice)>, ProtocolError> {
            (0..classes.len())
                .into_par_iter()
                .map(|k| {
                    let idx: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == k).collect();
                    let x: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
                    let y: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                    let seed = options.seed.wrapping_add(k as u64 + 1);
                    let choice = grid_search(&x, Target::Scores(&y), options.grid, seed)?;
                    let model = SvrModel::fit(
                        &x,
                        &y,
                        &SvrParams::new(choice.c, choice.gamma, options.grid.nu),
                    )?;
                    Ok((model, choice))
                })
                .collect()
        };
        let (cls, regs) = rayon::join(classifier_stage, regressor_stage);
        let (classifier, cls_choice) = cls?;
        let regs = regs?;
        let report = TrainReport {
            classifier: cls_choice,
            regressors: classes
                .iter()
                .zip(&regs)
                .map(|(d, (_, g))| (*d, *g))
                .collect(),
        };
        let model = Self {
            feature_names: set.names.clone(),
            block_policy: options.block_policy,
            polarity,
            standardizer,
            classifier,
            regressors: regs.into_iter().map(|(m, _)| m).collect(),
            classes,
        };
        Ok((model, report))
    }

    /// Prediction from an unstandardized feature row.
    pub fn predict_features(&self, raw: &[f64]) -> Result<QualityPrediction, ProtocolError> {
        if raw.len() != self.standardizer.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.standardizer.dim(),
                got: raw.len(),
            }
            .into());
        }
        let x = self.standardizer.apply(raw);
        let probabilities = self.classifier.predict_proba(&x)?;
        let regressions = self
            .regressors
            .iter()
            .map(|r| r.predict(&x))
            .collect::<Result<Vec<_>, _>>()?;
        let hard = eval_argmax(&probabilities);
        Ok(QualityPrediction {
            quality: fuse(&probabilities, &regressions),
            class: self.classes[hard],
            probabilities,
            regressions,
        })
    }

    pub fn predict_quality(
        &self,
        extractor: &dyn FeatureExtractor,
        img: &GrayImage,
    ) -> Result<QualityPrediction, ProtocolError> {
        self.predict_features(&extractor.extract(img)?)
    }

    /// Metrics on `subset` of `set`, restricted to records of the model's classes.
    /// Correlations are sign-adjusted when `set` scores run opposite to the training scores.
    pub fn evaluate(
        &self,
        set: &FeatureSet,
        subset: &[usize],
        round: usize,
        name: &str,
    ) -> Result<RoundResult, ProtocolError> {
        let used: Vec<usize> = subset
            .iter()
            .copied()
            .filter(|&i| self.classes.contains(&set.manifest.records[i].distortion))
            .collect();
        let preds = used
            .iter()
            .map(|&i| self.predict_features(&set.rows[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let sign = match set.manifest.polarity() {
            Some(p) if p != self.polarity => -1.0,
            _ => 1.0,
        };
        let corr = |idx: &[usize]| -> ClassScores {
            let q: Vec<f64> = idx.iter().map(|&k| preds[k].quality).collect();
            let s: Vec<f64> = idx
                .iter()
                .map(|&k| set.manifest.records[used[k]].score)
                .collect();
            ClassScores {
                srocc: eval::srocc(&q, &s).ok().map(|v| sign * v),
                krocc: eval::krocc(&q, &s).ok().map(|v| sign * v),
            }
        };
        let all: Vec<usize> = (0..used.len()).collect();
        let overall = corr(&all);
        let mut per_class = BTreeMap::new();
        for &d in &self.classes {
            let idx: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&k| set.manifest.records[used[k]].distortion == d)
                .collect();
            let s = corr(&idx);
            if s != ClassScores::default() {
                per_class.insert(d, s);
            }
        }
        let predicted: Vec<Distortion> = preds.iter().map(|p| p.class).collect();
        let truth: Vec<Distortion> = used
            .iter()
            .map(|&i| set.manifest.records[i].distortion)
            .collect();
        Ok(RoundResult {
            round,
            test_set: name.to_string(),
            srocc: overall.srocc,
            krocc: overall.krocc,
            accuracy: eval::accuracy(&predicted, &truth).ok(),
            per_class,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SvmError> {
        codec::write_header(w, ModelKind::TwoStage)?;
        w.write_all(&[polarity_code(self.polarity), policy_code(self.block_policy)])?;
        codec::put_len(w, self.classes.len())?;
        for c in &self.classes {
            codec::put_len(w, c.index())?;
        }
        codec::put_len(w, self.feature_names.len())?;
        for n in &self.feature_names {
            codec::put_str(w, n)?;
        }
        self.standardizer.write_to(w)?;
        self.classifier.write_to(w)?;
        self.regressors.iter().try_for_each(|r| r.write_to(w))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SvmError> {
        if codec::read_header(r)? != ModelKind::TwoStage {
            return Err(SvmError::Format("not a two-stage model".into()));
        }
        let mut codes = [0u8; 2];
        r.read_exact(&mut codes)?;
        let polarity = match codes[0] {
            0 => Polarity::LowerIsBetter,
            1 => Polarity::HigherIsBetter,
            c => return Err(SvmError::Format(format!("bad polarity code {c}"))),
        };
        let block_policy = match codes[1] {
            0 => BlockPolicy::Flush,
            1 => BlockPolicy::Discard,
            c => return Err(SvmError::Format(format!("bad block policy code {c}"))),
        };
        let n = codec::get_len(r)?;
        let classes = (0..n)
            .map(|_| {
                let k = codec::get_len(r)?;
                Distortion::ALL
                    .get(k)
                    .copied()
                    .ok_or_else(|| SvmError::Format(format!("bad class index {k}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = codec::get_len(r)?;
        let feature_names = (0..n)
            .map(|_| codec::get_str(r))
            .collect::<Result<Vec<_>, _>>()?;
        let standardizer = Standardizer::read_from(r)?;
        let classifier = SvcModel::read_from(r)?;
        let regressors = (0..classes.len())
            .map(|_| SvrModel::read_from(r))
            .collect::<Result<Vec<_>, _>>()?;
        if classifier.classes.len() != classes.len() || classifier.dim != standardizer.dim() {
            return Err(SvmError::Format(
                "classifier does not match the class list".into(),
            ));
        }
        Ok(Self {
            classes,
            feature_names,
            block_policy,
            polarity,
            standardizer,
            classifier,
            regressors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SvmError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        Ok(w.flush()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SvmError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn eval_argmax(v: &[f64]) -> usize {
    crate::svm::argmax(v.iter().copied())
}

fn polarity_code(p: Polarity) -> u8 {
    match p {
        Polarity::LowerIsBetter => 0,
        Polarity::HigherIsBetter => 1,
    }
}

fn policy_code(p: BlockPolicy) -> u8 {
    match p {
        BlockPolicy::Flush => 0,
        BlockPolicy::Discard => 1,
    }
}

/// Settings of a protocol run; a `key = value` config file can override them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of plan rounds to run, taken from the start of the plan.
    pub rounds: usize,
    pub repeats: usize,
    pub folds: usize,
    pub grid: GridConfig,
    pub block_policy: BlockPolicy,
    pub workers: Option<usize>,
    pub classes: Vec<Distortion>,
    pub save_models: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rounds: 200,
            repeats: 40,
            folds: 5,
            grid: GridConfig::default(),
            block_policy: BlockPolicy::Flush,
            workers: None,
            classes: Distortion::ALL.to_vec(),
            save_models: true,
        }
    }
}

/// Parses `2^k`, `2^-k` or a plain number.
fn parse_grid_value(s: &str) -> Option<f64> {
    match s.split_once('^') {
        Some((base, exp)) => Some(
            base.trim()
                .parse::<f64>()
                .ok()?
                .powi(exp.trim().parse().ok()?),
        ),
        None => s.parse().ok(),
    }
}

impl RunConfig {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), ProtocolError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ProtocolError::InvalidConfig {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<usize>().map_err(|e| err(format!("{key}: {e}")));
            let real = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let list = |v: &str| {
                v.split([',', ' ', '\t'])
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        parse_grid_value(s).ok_or_else(|| err(format!("{key}: bad value `{s}`")))
                    })
                    .collect::<Result<Vec<f64>, _>>()
            };
            match key {
                "seed" => self.seed = value.parse().map_err(|e| err(format!("seed: {e}")))?,
                "rounds" => self.rounds = int(value)?,
                "repeats" => self.repeats = int(value)?,
                "folds" => self.folds = int(value)?,
                "c_grid" => self.grid.c_grid = list(value)?,
                "gamma_grid" => self.grid.gamma_grid = list(value)?,
                "nu" => self.grid.nu = real(value)?,
                "cv_folds" => self.grid.cv_folds = int(value)?,
                "cv_repeats" => self.grid.cv_repeats = int(value)?,
                "block_policy" => self.block_policy = value.parse().map_err(err)?,
                "workers" => self.workers = Some(int(value)?),
                "save_models" => {
                    self.save_models = value
                        .parse()
                        .map_err(|e| err(format!("save_models: {e}")))?
                }
                "classes" => {
                    self.classes = value
                        .split([',', ' '])
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<Distortion>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.grid.validate()?;
        let bad = |message: String| Err(ProtocolError::InvalidConfig { line: 0, message });
        if self.folds < 2 || self.repeats == 0 {
            return bad("need at least 2 folds and 1 repeat".into());
        }
        if self.rounds == 0 || self.rounds > self.repeats * self.folds {
            return bad(format!(
                "rounds must lie in [1, {}]",
                self.repeats * self.folds
            ));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        let distinct: BTreeSet<_> = self.classes.iter().collect();
        if distinct.len() < 2 || distinct.len() != self.classes.len() {
            return bad("need at least two distinct classes".into());
        }
        Ok(())
    }
}

/// Where protocol artifacts go.
#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub results: PathBuf,
    /// Per-round model files, when set.
    pub model_dir: Option<PathBuf>,
}

/// Name under which a round's held-out partition is reported.
pub fn holdout_name(train: &FeatureSet) -> String {
    format!("{}-holdout", train.name())
}

pub fn round_model_path(dir: &Path, round: usize) -> PathBuf {
    dir.join(format!("round_{round:03}.ciqm"))
}

/// Rounds already present in a results file, complete ones only.
fn completed_prefix(
    path: &Path,
    expected_sets: &[String],
) -> Result<Vec<RoundResult>, ProtocolError> {
    if !path.exists() || fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    let existing = eval::read_results(File::open(path)?)?;
    let mut kept = Vec::new();
    for (k, chunk) in existing.chunks(expected_sets.len()).enumerate() {
        if chunk.len() < expected_sets.len() {
            break;
        }
        for (r, name) in chunk.iter().zip(expected_sets) {
            if r.round != k + 1 || &r.test_set != name {
                return Err(ProtocolError::ResultsMismatch(format!(
                    "round {} / set `{}` found where round {} / set `{name}` was expected",
                    r.round,
                    r.test_set,
                    k + 1
                )));
            }
        }
        kept.extend_from_slice(chunk);
    }
    Ok(kept)
}

/// Runs the first `config.rounds` rounds of `plan`: each trains on the training
/// references, then evaluates on the held-out references and on every external set.
/// Results are appended to `output.results` as rounds finish; an existing file is
/// resumed after its last complete round.
pub fn run_protocol(
    config: &RunConfig,
    train: &FeatureSet,
    tests: &[FeatureSet],
    plan: &SplitPlan,
    output: &ProtocolOutput,
    mut on_round: impl FnMut(&RoundSpec, &TrainReport, &[RoundResult]),
) -> Result<Vec<RoundResult>, ProtocolError> {
    config.validate()?;
    let rounds = config.rounds.min(plan.n_rounds());
    let mut set_names = vec![holdout_name(train)];
    set_names.extend(tests.iter().map(|t| t.name().to_string()));

    let mut results = completed_prefix(&output.results, &set_names)?;
    let done = results.len() / set_names.len();
    results.truncate(done.min(rounds) * set_names.len());
    {
        let mut w = BufWriter::new(File::create(&output.results)?);
        eval::write_results(&mut w, &results)?;
        w.flush()?;
    }
    if let Some(dir) = &output.model_dir {
        fs::create_dir_all(dir)?;
    }
    for round in done + 1..=rounds {
        let spec = plan.round(round).expect("round within plan");
        let records = &train.manifest.records;
        let train_idx: Vec<usize> = (0..records.len())
            .filter(|&i| spec.train_refs.contains(&records[i].reference_id))
            .collect();
        let test_idx: Vec<usize> = (0..records.len())
            .filter(|&i| spec.test_refs.contains(&records[i].reference_id))
            .collect();
        if let Some(&i) = test_idx
            .iter()
            .find(|&&i| spec.train_refs.contains(&records[i].reference_id))
        {
            return Err(ProtocolError::Leakage {
                round,
                reference: records[i].reference_id.clone(),
            });
        }
        let options = TrainOptions {
            classes: &config.classes,
            grid: &config.grid,
            seed: config
                .seed
                .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            block_policy: config.block_policy,
        };
        let (model, report) = TwoStageModel::train(train, &train_idx, &options)?;
        if let Some(dir) = &output.model_dir {
            model.save(round_model_path(dir, round))?;
        }
        let mut batch = vec![model.evaluate(train, &test_idx, round, &set_names[0])?];
        for (t, name) in tests.iter().zip(&set_names[1..]) {
            let all: Vec<usize> = (0..t.rows.len()).collect();
            batch.push(model.evaluate(t, &all, round, name)?);
        }
        let file = OpenOptions::new().append(true).open(&output.results)?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        for r in &batch {
            w.write_record(eval::result_record(r))
                .map_err(|e| EvalError::Table(e.to_string()))?;
        }
        w.flush()?;
        on_round(&spec, &report, &batch);
        results.extend(batch);
    }
    Ok(results)
}

//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, non-zero exit on any FAIL.
//!
//! Every numeric check compares library output against an oracle written here,
//! independently of the library's own helpers.

use std::collections::BTreeMap;
use std::env;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use curviqa::datasets::{build_synthetic_manifest, synthetic_base, SyntheticSpec};
use curviqa::eval::{krocc, srocc, wilcoxon_paired_with, WilcoxonMethod};
use curviqa::features::{extract_block, redundancy_check};
use curviqa::robust_stats::{bowley_skew, mad, moors_kurt, octiles, qcd, rmad};
use curviqa::svm::{SvcParams, SvrParams};
use curviqa::two_stage::{
    holdout_name, round_model_path, run_protocol, FeatureSet, ProtocolOutput, RunConfig,
};
use curviqa::{
    BlockPolicy, CurveletConfig, CurveletTransform, DatasetManifest, Distortion, FeatureExtractor,
    FeatureVector, GridConfig, M1Extractor, RoundResult, SplitPlan, SvcModel, SvrModel,
    TwoStageModel,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

/// Accumulates sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    failed: bool,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, note: String) {
        if !ok {
            self.failed = true;
            self.notes.push(format!("FAILED {note}"));
        } else {
            self.notes.push(note);
        }
    }

    fn verdict(self) -> (Verdict, String) {
        let v = if self.failed {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
        (v, self.notes.join("; "))
    }
}

fn rel_l2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn random_block(rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((256, 256), |_| rng.random_range(0.0..255.0))
}

fn transform_correctness() -> (Verdict, String) {
    let t = CurveletTransform::new(CurveletConfig::default()).expect("default transform");
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut c = Checks::default();

    let blocks: Vec<Array2<f64>> = (0..100).map(|_| random_block(&mut rng)).collect();
    let mut worst_rt = 0.0f64;
    let mut pyrs = Vec::new();
    for x in &blocks {
        let pyr = t.forward(x).expect("forward");
        worst_rt = worst_rt.max(rel_l2(&t.inverse(&pyr).expect("inverse"), x));
        pyrs.push(pyr);
    }
    c.check(
        worst_rt <= 1e-6,
        format!("round-trip max rel L2 {worst_rt:.2e} (<= 1e-6)"),
    );

    let mut worst_iso = 0.0f64;
    for k in 0..50 {
        let (x, y) = (&blocks[2 * k], &blocks[2 * k + 1]);
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let norms =
            (x.iter().map(|v| v * v).sum::<f64>() * y.iter().map(|v| v * v).sum::<f64>()).sqrt();
        worst_iso = worst_iso.max((pyrs[2 * k].inner(&pyrs[2 * k + 1]) - dot).abs() / norms);
    }
    c.check(
        worst_iso <= 1e-9,
        format!("isometry max rel {worst_iso:.2e} (<= 1e-9)"),
    );

    let dev = t.partition_deviation();
    c.check(
        dev <= 1e-10,
        format!("partition deviation {dev:.2e} (<= 1e-10)"),
    );

    let s4 = t.scale_len(4);
    c.check(
        s4 > 98_000 && s4 == 107_528,
        format!("S4 has {s4} coefficients (> 98000, fixture 107528)"),
    );
    c.verdict()
}

/// Order statistic of rank `k` (0-based) found by counting, without sorting.
fn order_stat(x: &[f64], k: usize) -> f64 {
    for &v in x {
        let below = x.iter().filter(|&&u| u < v).count();
        let equal = x.iter().filter(|&&u| u == v).count();
        if below <= k && k < below + equal {
            return v;
        }
    }
    unreachable!("rank {k} out of range")
}

fn oracle_quantile(x: &[f64], p: f64) -> f64 {
    let h = (x.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = order_stat(x, lo);
    if frac == 0.0 {
        a
    } else {
        a + frac * (order_stat(x, lo + 1) - a)
    }
}

fn oracle_octiles(x: &[f64]) -> [f64; 7] {
    std::array::from_fn(|i| oracle_quantile(x, (i + 1) as f64 / 8.0))
}

fn oracle_mad(x: &[f64]) -> f64 {
    let m = oracle_quantile(x, 0.5);
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    oracle_quantile(&dev, 0.5)
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

fn oracle_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (da, db) = (a[i] - a[j], b[i] - b[j]);
            match (da == 0.0, db == 0.0) {
                (true, true) => {}
                (true, false) => tie_a += 1.0,
                (false, true) => tie_b += 1.0,
                _ if da * db > 0.0 => conc += 1.0,
                _ => disc += 1.0,
            }
        }
    }
    (conc - disc) / ((conc + disc + tie_a) * (conc + disc + tie_b)).sqrt()
}

/// Two-sided exact p-value by listing all 2^n sign assignments of the ranks.
fn enumerated_p(diffs: &[f64]) -> f64 {
    let ranks = oracle_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let observed: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = ranks.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

fn statistics_oracles() -> (Verdict, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut c = Checks::default();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, got: f64, want: f64| {
        let err = (got - want).abs() / want.abs().max(1.0);
        let e = worst.entry(name).or_insert(0.0);
        *e = e.max(err);
    };
    for case in 0..1000 {
        let n = rng.random_range(8..60);
        // A third of the cases are coarsely quantized so that ties occur.
        let coarse = case % 3 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.random_range(0.5..10.0);
            if coarse {
                v.round()
            } else {
                v
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();

        let oc = oracle_octiles(&x);
        let lib_oc = octiles(&x).expect("octiles");
        let (q1, q2, q3) = (oc[1], oc[3], oc[5]);
        note("qcd", qcd(&x).expect("qcd"), (q3 - q1) / (q3 + q1));
        note("mad", mad(&x).expect("mad"), oracle_mad(&x));
        note("rmad", rmad(&x).expect("rmad"), oracle_mad(&x) / q2);
        if q3 > q1 {
            note(
                "bowley_skew",
                bowley_skew(&lib_oc).expect("skew"),
                (q3 + q1 - 2.0 * q2) / (q3 - q1),
            );
            note(
                "moors_kurt",
                moors_kurt(&lib_oc).expect("kurt"),
                ((oc[6] - oc[4]) + (oc[2] - oc[0])) / (q3 - q1),
            );
        }
        let rx = oracle_ranks(&x);
        let ry = oracle_ranks(&y);
        let sx = rx.iter().all(|r| *r == rx[0]);
        let sy = ry.iter().all(|r| *r == ry[0]);
        if !sx && !sy {
            note(
                "srocc",
                srocc(&x, &y).expect("srocc"),
                oracle_pearson(&rx, &ry),
            );
            note("krocc", krocc(&x, &y).expect("krocc"), oracle_tau_b(&x, &y));
        }
    }
    for (name, err) in &worst {
        c.check(*err <= 1e-12, format!("{name} {err:.1e}"));
    }

    let normal: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
    let k = moors_kurt(&octiles(&normal).expect("octiles")).expect("kurt");
    c.check(
        (k - 1.233).abs() <= 0.02,
        format!("normal Moors kurtosis {k:.4} (1.233 +- 0.02)"),
    );

    let mut worst_w = 0.0f64;
    for n in 1..=12 {
        for rep in 0..20 {
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let d: f64 = rng.random_range(-3.0..4.0);
                    let d = if rep % 2 == 0 { d.round() } else { d };
                    if d == 0.0 {
                        1.0
                    } else {
                        d
                    }
                })
                .collect();
            let zeros = vec![0.0; n];
            let got = wilcoxon_paired_with(&diffs, &zeros, 0.05, WilcoxonMethod::Exact)
                .expect("wilcoxon")
                .p_value;
            worst_w = worst_w.max((got - enumerated_p(&diffs)).abs());
        }
    }
    c.check(
        worst_w <= 1e-12,
        format!("Wilcoxon exact vs enumeration {worst_w:.1e} for n <= 12"),
    );
    c.verdict()
}

fn blobs(per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centres = [(-4.0, -4.0), (4.0, -4.0), (-4.0, 4.0), (4.0, 4.0)];
    let noise = Normal::new(0.0, 0.8).expect("normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, (cx, cy)) in centres.iter().enumerate() {
        for _ in 0..per {
            rows.push(vec![cx + rng.sample(noise), cy + rng.sample(noise)]);
            labels.push(k);
        }
    }
    (rows, labels)
}

fn svm_solver() -> (Verdict, String) {
    let mut c = Checks::default();
    let (x, y) = blobs(50, 11);
    let svc = SvcModel::fit(&x, &y, &SvcParams::new(1.0, 0.5)).expect("svc");
    let (tx, ty) = blobs(50, 12);
    let hits = tx
        .iter()
        .zip(&ty)
        .filter(|(r, l)| svc.predict(r).expect("predict") == **l)
        .count();
    let acc = hits as f64 / tx.len() as f64;
    c.check(
        acc >= 0.95,
        format!("4-blob held-out accuracy {acc:.3} (>= 0.95)"),
    );

    let mut kkt = svc.kkt_gap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut nu_ok = true;
    for (i, nu) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let n = 60 + 20 * i;
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|r| r[0].sin() + 0.3 * r[1] + rng.random_range(-0.2..0.2))
            .collect();
        let m = SvrModel::fit(&xs, &ys, &SvrParams::new(4.0, 0.5, nu)).expect("svr");
        kkt = kkt.max(m.kkt_gap);
        let slack = 2.0 / n as f64;
        nu_ok &= m.bounded_fraction() <= nu + slack && m.support_fraction() >= nu - slack;
    }
    c.check(
        nu_ok,
        "nu-property within 2/n for nu in {0.2, 0.5, 0.8}".into(),
    );

    let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 49.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|r| 2.0 * r[0]).collect();
    let m = SvrModel::fit(&xs, &ys, &SvrParams::new(8.0, 1.0, 0.5)).expect("svr");
    kkt = kkt.max(m.kkt_gap);
    let mse = (0..200)
        .map(|i| (i as f64 + 0.5) / 200.0)
        .map(|t| (m.predict(&[t]).expect("predict") - 2.0 * t).powi(2))
        .sum::<f64>()
        / 200.0;
    c.check(
        mse.sqrt() <= 0.05,
        format!("1-D regression RMSE {:.4} (<= 0.05)", mse.sqrt()),
    );
    c.check(kkt <= 1e-3, format!("max KKT gap {kkt:.1e} (<= 1e-3)"));
    c.verdict()
}

struct Synthetic {
    set: FeatureSet,
    _dir: tempfile::TempDir,
}

fn synthetic_features() -> Synthetic {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = SyntheticSpec::procedural(8, 256, 42);
    let manifest = build_synthetic_manifest(&spec, dir.path()).expect("synthetic manifest");
    let extractor = M1Extractor::new(BlockPolicy::Flush).expect("extractor");
    let set = FeatureSet::extract(manifest, &extractor).expect("features");
    Synthetic { set, _dir: dir }
}

fn mean_of(results: &[RoundResult], get: impl Fn(&RoundResult) -> Option<f64>) -> f64 {
    let v: Vec<f64> = results.iter().filter_map(get).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn end_to_end(data: &Synthetic) -> (Verdict, String) {
    let mut c = Checks::default();
    let manifest = &data.set.manifest;
    let refs = manifest.reference_ids().len();
    let classes = manifest.class_counts();
    c.check(
        refs >= 5 && classes.len() == 2 && classes.values().all(|n| *n == 4 * refs),
        format!("{refs} bases x (wn, gblur) x 4 severities"),
    );

    let config = RunConfig {
        seed: 5,
        rounds: 5,
        repeats: 1,
        folds: 5,
        grid: GridConfig::reduced(),
        classes: vec![Distortion::Wn, Distortion::Gblur],
        ..RunConfig::default()
    };
    let plan = SplitPlan::new(manifest, config.repeats, config.folds, config.seed).expect("plan");
    let dir = tempfile::tempdir().expect("tempdir");
    let models = dir.path().join("models");
    let output = ProtocolOutput {
        results: dir.path().join("results.csv"),
        model_dir: Some(models.clone()),
    };
    let mut rounds = Vec::new();
    let results = run_protocol(&config, &data.set, &[], &plan, &output, |spec, _, _| {
        rounds.push(spec.clone())
    })
    .expect("protocol");
    let held: Vec<RoundResult> = results
        .into_iter()
        .filter(|r| r.test_set == holdout_name(&data.set))
        .collect();
    c.check(held.len() == 5, format!("{} rounds", held.len()));
    let acc = mean_of(&held, |r| r.accuracy);
    let rho = mean_of(&held, |r| r.srocc);
    c.check(acc >= 0.90, format!("held-out accuracy {acc:.3} (>= 0.90)"));
    c.check(rho >= 0.80, format!("held-out SROCC {rho:.3} (>= 0.80)"));

    // Severity order within a (base, class) series follows the pseudo-score.
    let (mut ordered, mut pairs) = (0usize, 0usize);
    for spec in &rounds {
        let model =
            TwoStageModel::load(round_model_path(&models, spec.round)).expect("round model");
        let mut series: BTreeMap<(String, Distortion), Vec<(f64, f64)>> = BTreeMap::new();
        for (rec, row) in manifest.records.iter().zip(&data.set.rows) {
            if spec.test_refs.contains(&rec.reference_id) {
                let q = model.predict_features(row).expect("predict").quality;
                series
                    .entry((rec.reference_id.clone(), rec.distortion))
                    .or_default()
                    .push((rec.score, q));
            }
        }
        for s in series.values_mut() {
            s.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in s.windows(2) {
                pairs += 1;
                ordered += usize::from(w[1].1 > w[0].1);
            }
        }
    }
    let frac = ordered as f64 / pairs as f64;
    c.check(
        frac >= 0.90,
        format!("Q monotone in severity for {ordered}/{pairs} adjacent pairs (>= 90%)"),
    );
    c.verdict()
}

fn feature_contract(data: &Synthetic) -> (Verdict, String) {
    let mut c = Checks::default();
    let extractor = M1Extractor::new(BlockPolicy::Flush).expect("extractor");
    let names = extractor.names().len();
    let got = extractor
        .extract(&synthetic_base(256, 3))
        .expect("extract")
        .len();
    c.check(
        names == 11 && got == 11 && FeatureVector::LEN == 11,
        format!("feature length {got}"),
    );

    let t = extractor.transform();
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let x = synthetic_base(256, 70 + seed).to_array();
        let f = extract_block(t, &x).expect("features");
        for k in [4.0, 0.5, 3.0] {
            let g = extract_block(t, &x.mapv(|v| v * k)).expect("features");
            let diffs = [
                g.d1 - f.d1,
                g.d2 - f.d2,
                g.d3 - f.d3,
                g.qcd4 - f.qcd4,
                g.rmad4 - f.rmad4,
                g.iqr5 - f.iqr5,
                g.mad5 - f.mad5,
                g.skew5 - f.skew5,
                g.kurt5 - f.kurt5,
                (g.area4 - k * f.area4) / (k * f.area4),
                g.med5 - f.med5 - k.log10(),
            ];
            worst = diffs.iter().fold(worst, |m, d| m.max(d.abs()));
        }
    }
    c.check(
        worst <= 1e-9,
        format!("contrast-scaling table max deviation {worst:.1e} (<= 1e-9)"),
    );

    let rows = &data.set.rows;
    let eig = redundancy_check(rows).expect("redundancy");
    let ratio = eig[eig.len() - 1] / eig[0];
    c.check(
        ratio >= 1e-8,
        format!("smallest/largest eigenvalue {ratio:.1e} (>= 1e-8)"),
    );
    let dup: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| [r.as_slice(), &[r[4]]].concat())
        .collect();
    let eig = redundancy_check(&dup).expect("redundancy");
    let ratio = eig[eig.len() - 1] / eig[0];
    c.check(
        ratio < 1e-8,
        format!("with a duplicated column {ratio:.1e} (< 1e-8)"),
    );
    c.verdict()
}

/// Manifest paths for the published-number check, taken from the environment.
fn dataset_paths() -> Option<(PathBuf, Option<PathBuf>, Option<PathBuf>)> {
    let get = |k: &str| env::var_os(k).map(PathBuf::from);
    Some((
        get("CURVIQA_LIVE_MANIFEST")?,
        get("CURVIQA_TID2013_MANIFEST"),
        get("CURVIQA_CSIQ_MANIFEST"),
    ))
}

fn published_numbers() -> (Verdict, String) {
    let Some((live, tid, csiq)) = dataset_paths() else {
        return (Verdict::Skip, "set CURVIQA_LIVE_MANIFEST (and optionally CURVIQA_TID2013_MANIFEST, CURVIQA_CSIQ_MANIFEST)".into());
    };
    let extractor = M1Extractor::new(BlockPolicy::Flush).expect("extractor");
    let load = |p: &PathBuf| -> FeatureSet {
        let m = DatasetManifest::load(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        FeatureSet::extract(m, &extractor).expect("features")
    };
    let train = load(&live);
    let externals: Vec<(FeatureSet, f64)> = [(tid, 0.8392), (csiq, 0.7764)]
        .into_iter()
        .filter_map(|(p, want)| p.map(|p| (load(&p), want)))
        .collect();
    let tests: Vec<FeatureSet> = externals.iter().map(|(s, _)| s.clone()).collect();

    let config = RunConfig {
        rounds: 20,
        repeats: 4,
        ..RunConfig::default()
    };
    let plan =
        SplitPlan::new(&train.manifest, config.repeats, config.folds, config.seed).expect("plan");
    let dir = tempfile::tempdir().expect("tempdir");
    let output = ProtocolOutput {
        results: dir.path().join("results.csv"),
        model_dir: None,
    };
    let results =
        run_protocol(&config, &train, &tests, &plan, &output, |_, _, _| {}).expect("protocol");

    let mut c = Checks::default();
    let held: Vec<RoundResult> = results
        .iter()
        .filter(|r| r.test_set == holdout_name(&train))
        .cloned()
        .collect();
    for (label, got, want) in [
        ("SROCC", mean_of(&held, |r| r.srocc), 0.8795),
        ("KROCC", mean_of(&held, |r| r.krocc), 0.7392),
        ("accuracy", mean_of(&held, |r| r.accuracy), 0.8627),
    ] {
        c.check(
            (got - want).abs() <= 0.05,
            format!("LIVE {label} {got:.4} ({want} +- 0.05)"),
        );
    }
    let wn = mean_of(&held, |r| {
        r.per_class.get(&Distortion::Wn).and_then(|s| s.srocc)
    });
    c.check(wn >= 0.99, format!("LIVE wn SROCC {wn:.4} (>= 0.99)"));
    for (set, want) in &externals {
        let got = mean_of(
            &results
                .iter()
                .filter(|r| r.test_set == set.name())
                .cloned()
                .collect::<Vec<_>>(),
            |r| r.srocc,
        );
        c.check(
            (got - want).abs() <= 0.07,
            format!("{} SROCC {got:.4} ({want} +- 0.07)", set.name()),
        );
    }
    c.verdict()
}

fn main() -> ExitCode {
    let mut failed = false;
    let mut report = |name: &str, start: Instant, (verdict, detail): (Verdict, String)| {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed = true;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {name} [{:.1?}]: {detail}", start.elapsed());
    };

    let t = Instant::now();
    report("transform-correctness", t, transform_correctness());
    let t = Instant::now();
    report("statistics-oracles", t, statistics_oracles());
    let t = Instant::now();
    report("svm-solver", t, svm_solver());
    let t = Instant::now();
    let data = synthetic_features();
    report("end-to-end-synthetic", t, end_to_end(&data));
    let t = Instant::now();
    report("feature-contract", t, feature_contract(&data));
    let t = Instant::now();
    report("published-numbers", t, published_numbers());

    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

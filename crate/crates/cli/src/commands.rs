use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use curviqa::datasets::{self, SyntheticSpec};
use curviqa::eval;
use curviqa::features::{FeatureExtractor, FeatureTable, M1Extractor};
use curviqa::image_io::{self, BlockPolicy};
use curviqa::selftest::{self, SelftestOptions};
use curviqa::svm::{SvrModel, SvrParams};
use curviqa::two_stage::{
    self, FeatureSet, GridConfig, ProtocolOutput, RunConfig, SplitPlan, TrainOptions, TwoStageModel,
};
use curviqa::DatasetManifest;

use crate::exit::{self, Context, Failure};
use crate::{
    BenchmarkArgs, EvaluateArgs, ExtractArgs, PredictArgs, SelftestArgs, SynthArgs, TrainArgs,
};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "tif"];

fn init_workers(workers: Option<usize>) -> Result<(), Failure> {
    match workers {
        Some(0) => Err(Failure::new(exit::USAGE, "workers must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(exit::OTHER, e.to_string())),
        None => Ok(()),
    }
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files under `input` (non-recursive), sorted by path.
fn collect_images(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(input).context(format!("reading {}", input.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).context(format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn extract(args: &ExtractArgs, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers)?;
    let files = collect_images(&args.input)?;
    if files.is_empty() {
        return Err(Failure::new(
            exit::NO_INPUTS,
            format!("no images found in {}", args.input.display()),
        ));
    }
    let extractor = M1Extractor::new(args.block_policy)?;
    let mut rows = Vec::with_capacity(files.len());
    for f in &files {
        let img = image_io::load_gray(f)?;
        rows.push(extractor.extract(&img).context(f.display())?);
    }
    let table = FeatureTable {
        names: extractor.names(),
        ids: files.iter().map(|f| f.display().to_string()).collect(),
        rows,
    };
    let mut out = output(args.out.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &args.out {
        eprintln!("wrote {} feature rows to {}", files.len(), p.display());
    }
    Ok(())
}

/// Features for every record, reusing `cache` when it lists the same images.
fn features_for(
    manifest: DatasetManifest,
    extractor: &M1Extractor,
    cache: &Path,
) -> Result<FeatureSet, Failure> {
    let ids: Vec<String> = manifest
        .records
        .iter()
        .map(|r| r.image_path.display().to_string())
        .collect();
    if let Ok(f) = File::open(cache) {
        if let Ok(t) = FeatureTable::read_csv(f) {
            if t.ids == ids && t.names == extractor.names() {
                eprintln!("using cached features {}", cache.display());
                return Ok(FeatureSet::new(manifest, t.names, t.rows)?);
            }
        }
    }
    let start = Instant::now();
    let n = manifest.len();
    let name = manifest.dataset_id.clone();
    let set = FeatureSet::extract(manifest, extractor)
        .context(format!("extracting features for `{name}`"))?;
    eprintln!(
        "extracted features of {n} images from `{name}` in {:.1?}",
        start.elapsed()
    );
    let table = FeatureTable {
        names: set.names.clone(),
        ids,
        rows: set.rows.clone(),
    };
    let mut w = BufWriter::new(File::create(cache)?);
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(set)
}

fn run_config(args: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if args.reduced_grid {
        cfg.grid = GridConfig::reduced();
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    cfg.rounds = args.rounds.unwrap_or(cfg.repeats * cfg.folds);
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = &args.classes {
        cfg.classes = c.clone();
    }
    if let Some(p) = args.block_policy {
        cfg.block_policy = p;
    }
    cfg.save_models = !args.no_models;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
        cfg.apply_config(&text).context(path.display())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs, workers: Option<usize>) -> Result<(), Failure> {
    let cfg = run_config(args)?;
    init_workers(cfg.workers.or(workers))?;
    fs::create_dir_all(&args.out).context(format!("creating {}", args.out.display()))?;

    let extractor = M1Extractor::new(cfg.block_policy)?;
    let mut sets = Vec::new();
    for path in std::iter::once(&args.manifest).chain(&args.tests) {
        let m = DatasetManifest::load(path)?;
        if sets.iter().any(|s: &FeatureSet| s.name() == m.dataset_id) {
            return Err(Failure::new(
                exit::USAGE,
                format!("two manifests are both named `{}`", m.dataset_id),
            ));
        }
        let cache = args.out.join(format!(
            "features_{}_{}.csv",
            m.dataset_id,
            cfg.block_policy.name()
        ));
        sets.push(features_for(m, &extractor, &cache)?);
    }
    let train_set = sets.remove(0);

    let plan = SplitPlan::new(&train_set.manifest, cfg.repeats, cfg.folds, cfg.seed)?;
    let out = ProtocolOutput {
        results: args.out.join("results.csv"),
        model_dir: cfg.save_models.then(|| args.out.join("models")),
    };
    let start = Instant::now();
    let results = two_stage::run_protocol(
        &cfg,
        &train_set,
        &sets,
        &plan,
        &out,
        |spec, report, batch| {
            let held = &batch[0];
            eprintln!(
                "round {}/{}: srocc {} acc {}  classifier C={} γ={}  [{:.0?}]",
                spec.round,
                cfg.rounds,
                fmt_opt(held.srocc),
                fmt_opt(held.accuracy),
                report.classifier.c,
                report.classifier.gamma,
                start.elapsed()
            );
        },
    )?;
    print_summary(&results);
    eprintln!("results: {}", out.results.display());

    if args.final_model {
        let all: Vec<usize> = (0..train_set.rows.len()).collect();
        let options = TrainOptions {
            classes: &cfg.classes,
            grid: &cfg.grid,
            seed: cfg.seed,
            block_policy: cfg.block_policy,
        };
        let (model, _) = TwoStageModel::train(&train_set, &all, &options)?;
        let path = args.out.join("model.ciqm");
        model.save(&path).context(path.display())?;
        eprintln!("final model: {}", path.display());
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(results: &[eval::RoundResult]) {
    println!(
        "{:<24} {:>8} {:>10} {:>6}",
        "test set", "metric", "mean", "n"
    );
    for (set, metric, mean, n) in eval::summarize(results) {
        println!(
            "{set:<24} {:>8} {:>10} {n:>6}",
            metric.name(),
            fmt_opt(mean)
        );
    }
    let mut per_class: BTreeMap<(String, curviqa::Distortion), Vec<f64>> = BTreeMap::new();
    for r in results {
        for (d, s) in &r.per_class {
            if let Some(v) = s.srocc {
                per_class
                    .entry((r.test_set.clone(), *d))
                    .or_default()
                    .push(v);
            }
        }
    }
    if !per_class.is_empty() {
        println!("\nper-class srocc");
        for ((set, d), v) in per_class {
            println!(
                "{set:<24} {:>8} {:>10.4} {:>6}",
                d.name(),
                v.iter().sum::<f64>() / v.len() as f64,
                v.len()
            );
        }
    }
}

pub fn predict(args: &PredictArgs, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers)?;
    let model = TwoStageModel::load(&args.model).context(args.model.display())?;
    let extractor = M1Extractor::new(model.block_policy)?;
    if model.feature_names != extractor.names() {
        return Err(Failure::new(
            exit::DATA,
            "model was trained on a different feature set",
        ));
    }
    let mut header = vec!["image".to_string(), "quality".into(), "class".into()];
    header.extend(model.classes.iter().map(|c| format!("p_{}", c.name())));
    header.extend(model.classes.iter().map(|c| format!("q_{}", c.name())));
    println!("{}", header.join("\t"));
    for path in &args.images {
        let img = image_io::load_gray(path)?;
        let p = model
            .predict_quality(&extractor, &img)
            .context(path.display())?;
        let mut line = vec![
            path.display().to_string(),
            format!("{:.6}", p.quality),
            p.class.name().to_string(),
        ];
        line.extend(
            p.probabilities
                .iter()
                .chain(&p.regressions)
                .map(|v| format!("{v:.6}")),
        );
        println!("{}", line.join("\t"));
    }
    Ok(())
}

fn read_results(path: &Path) -> Result<Vec<eval::RoundResult>, Failure> {
    let f = File::open(path).context(format!("opening {}", path.display()))?;
    eval::read_results(f).context(path.display())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let results = read_results(&args.results)?;
    if results.is_empty() {
        return Err(Failure::new(
            exit::NO_INPUTS,
            format!("{} has no rounds", args.results.display()),
        ));
    }
    print_summary(&results);
    let Some(base_path) = &args.baseline else {
        return Ok(());
    };
    let [model_label, base_label] = args.labels.as_slice() else {
        return Err(Failure::new(
            exit::USAGE,
            "--labels takes exactly two names",
        ));
    };
    let baseline = read_results(base_path)?;
    let rows = eval::compare_models(&results, &baseline, args.alpha)?;
    let labels = (model_label.as_str(), base_label.as_str());
    println!(
        "\nWilcoxon signed-rank test, alpha = {} (* marks a significant winner)",
        args.alpha
    );
    print!("{}", eval::comparison_report(&rows, labels));
    for r in rows.iter().filter(|r| r.winner.is_some()) {
        let winner = match r.winner {
            Some(eval::Group::A) => labels.0,
            _ => labels.1,
        };
        let p = r.test.as_ref().map_or(f64::NAN, |t| t.p_value);
        println!(
            "significant: {} {} favours {winner} (p = {p:.4})",
            r.test_set,
            r.metric.name()
        );
    }
    let rejections = rows.iter().filter(|r| r.winner.is_some()).count();
    println!("rejections: {rejections} of {}", rows.len());
    if let Some(p) = &args.csv {
        eval::write_comparison_csv(File::create(p)?, &rows, labels)?;
    }
    Ok(())
}

pub fn selftest(args: &SelftestArgs, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers)?;
    let opts = SelftestOptions {
        seed: args.seed,
        blocks: args.blocks,
        perturb_window: args.perturb_window,
    };
    let outcomes = selftest::run(&opts);
    for g in &outcomes {
        let status = if g.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<15} {:>8.2?}  {}", g.name, g.elapsed, g.detail);
    }
    let failed = outcomes.iter().filter(|g| !g.passed).count();
    if failed > 0 {
        return Err(Failure::new(
            exit::SELFTEST,
            format!("{failed} self-test group(s) failed"),
        ));
    }
    println!("all {} groups passed", outcomes.len());
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers)?;
    let reps = args.reps.max(1);
    let time =
        |label: &str, mut f: Box<dyn FnMut() -> Result<(), Failure> + '_>| -> Result<(), Failure> {
            f()?;
            let start = Instant::now();
            for _ in 0..reps {
                f()?;
            }
            println!("{label:<32} {:>10.3?}", start.elapsed() / reps as u32);
            Ok(())
        };
    let extractor = M1Extractor::new(BlockPolicy::Flush)?;
    let t = extractor.transform();
    let img = datasets::synthetic_base(args.size, 1);
    let block = image_io::fragment(&img, BlockPolicy::Flush)
        .blocks
        .swap_remove(0);
    let pyr = t.forward(&block)?;
    time(
        "fdct forward (256x256)",
        Box::new(|| t.forward(&block).map(drop).map_err(Into::into)),
    )?;
    time(
        "fdct inverse (256x256)",
        Box::new(|| t.inverse(&pyr).map(drop).map_err(Into::into)),
    )?;
    let label = format!("features ({0}x{0} image)", args.size);
    time(
        &label,
        Box::new(|| extractor.extract(&img).map(drop).map_err(Into::into)),
    )?;
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|i| {
            (0..11)
                .map(|j| ((i * 7 + j * 13) % 17) as f64 / 17.0)
                .collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    time(
        "nu-SVR fit (300 x 11)",
        Box::new(|| {
            SvrModel::fit(&rows, &y, &SvrParams::new(8.0, 0.1, 0.5))
                .map(drop)
                .map_err(Into::into)
        }),
    )?;
    Ok(())
}

pub fn synth(args: &SynthArgs, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers)?;
    let spec = SyntheticSpec::procedural(args.bases, args.size, args.seed);
    let manifest = datasets::build_synthetic_manifest(&spec, &args.out)?;
    println!(
        "wrote {} images and {}",
        manifest.len(),
        args.out.join(datasets::SYNTHETIC_MANIFEST).display()
    );
    Ok(())
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mealwise::features::{
    generate_synthetic, load_embeddings, split_dataset, write_embeddings, EmbeddingDataset, Example, Split,
};
use mealwise::harness::{
    breakdown_base_new, evaluate_factors, parse_factors, run_ablation, write_breakdown_table, write_plot_data,
    write_timestep_table, AblationConfig, AccuracyMode, EvalSettings, TimestepReport,
};
use mealwise::linalg::argmax;
use mealwise::pdsn::{load_checkpoint, train_base, train_session, write_checkpoint, PdsnModel};
use mealwise::simulator::{generate_corpus, load_corpus, write_corpus, PatternCorpus};

use crate::config::{ExperimentConfig, ProviderConfig};
use crate::manifest::{config_hash, digest_file, sha256_hex, FileDigest, Invocation, Manifest, MANIFEST_FORMAT};
use crate::{CliError, Common};

pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

/// Config file (or defaults plus `--seed`) with the common flags applied.
pub fn resolve(
    common: &Common,
    extra: impl FnOnce(&mut ExperimentConfig) -> Result<(), CliError>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, common.seed) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(seed)) => toml::from_str::<ExperimentConfig>(&format!("seed = {seed}"))
            .map_err(|e| CliError::internal(e.to_string()))?,
        (None, None) => return Err(CliError::user("either --config or --seed is required")),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(e) = &common.embeddings {
        cfg.provider = ProviderConfig::Embeddings { path: absolute(e)? };
    }
    if let ProviderConfig::Embeddings { path } = &mut cfg.provider {
        *path = absolute(path)?;
    }
    extra(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_eval_flags(
    cfg: &mut ExperimentConfig,
    at: Option<Vec<usize>>,
    window: Option<usize>,
) -> Result<(), CliError> {
    if let Some(at) = at {
        cfg.eval.checkpoints = at;
    }
    if let Some(w) = window {
        if w == 0 {
            return Err(CliError::user("--window must be >= 1"));
        }
        cfg.eval.mode = AccuracyMode::Windowed(w);
    }
    Ok(())
}

/// Files written by one command, with their hashes.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<FileDigest>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::user(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        self.files.push(FileDigest {
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> mealwise::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Embeddings from the provider: a file, or the seeded synthetic clusters
/// with a stratified test split.
fn embeddings(cfg: &ExperimentConfig, inputs: &mut Vec<FileDigest>) -> Result<EmbeddingDataset, CliError> {
    match &cfg.provider {
        ProviderConfig::Embeddings { path } => {
            inputs.push(digest_file(path)?);
            load_embeddings(path).map_err(CliError::input)
        }
        ProviderConfig::Synthetic { .. } => {
            let (spec, test_fraction) = cfg.synthetic_spec().expect("synthetic provider");
            let data = generate_synthetic(&spec).map_err(CliError::input)?;
            let (train, test) = split_dataset(&data, test_fraction, cfg.seeds().split).map_err(CliError::input)?;
            Ok(EmbeddingDataset::combine(train, test)?)
        }
    }
}

fn load_model(path: &Path, inputs: &mut Vec<FileDigest>) -> Result<PdsnModel, CliError> {
    inputs.push(digest_file(path)?);
    load_checkpoint(path).map_err(CliError::input)
}

fn load_patterns(
    path: &Path,
    data: &EmbeddingDataset,
    inputs: &mut Vec<FileDigest>,
) -> Result<PatternCorpus, CliError> {
    inputs.push(digest_file(path)?);
    load_corpus(path, data).map_err(CliError::input)
}

fn settings(cfg: &ExperimentConfig, jobs: usize) -> Result<EvalSettings, CliError> {
    Ok(EvalSettings {
        context: cfg.context_space()?,
        factors: cfg.factors()?,
        cadence: cfg.personalizer.cadence,
        checkpoints: cfg.eval.checkpoints.clone(),
        mode: cfg.eval.mode,
        jobs,
    })
}

fn check_classes(model: &PdsnModel, data: &EmbeddingDataset, what: &Path) -> Result<(), CliError> {
    if model.num_classes() != data.num_classes() {
        return Err(CliError::user(format!(
            "{}: checkpoint has {} classes but the embeddings have {}",
            what.display(),
            model.num_classes(),
            data.num_classes()
        )));
    }
    if model.feature_dim() != data.dim() {
        return Err(CliError::user(format!(
            "{}: checkpoint expects {}-d features but the embeddings are {}-d",
            what.display(),
            model.feature_dim(),
            data.dim()
        )));
    }
    Ok(())
}

fn model_label(model: &PdsnModel, taken: &[String]) -> String {
    let base = match model.gamma_mode() {
        mealwise::pdsn::GammaMode::Learned => "pdsn".to_string(),
        fixed => format!("dsn-{fixed}"),
    };
    let mut label = base.clone();
    let mut n = 2;
    while taken.contains(&label) {
        label = format!("{base}#{n}");
        n += 1;
    }
    label
}

fn accuracy(model: &PdsnModel, set: &[Example<'_>]) -> Result<f64, CliError> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut ok = 0usize;
    for e in set {
        if argmax(&model.probabilities(e.features)?) == Some(e.label) {
            ok += 1;
        }
    }
    Ok(ok as f64 / set.len() as f64)
}

fn simulate(cfg: &ExperimentConfig, out: &mut Outputs<'_>, inputs: &mut Vec<FileDigest>) -> Result<(), CliError> {
    let data = embeddings(cfg, inputs)?;
    if matches!(cfg.provider, ProviderConfig::Synthetic { .. }) {
        out.write("embeddings.emb", &render(|b| write_embeddings(b, &data))?)?;
    }
    let corpus = generate_corpus(&cfg.pattern_spec()?, &data)?;
    out.write("patterns.pat", &render(|b| write_corpus(b, &corpus, &data))?)?;
    for u in &corpus.users {
        let p = &u.pattern;
        let mut order: Vec<usize> = (0..p.food_subset.len()).collect();
        order.sort_by(|&a, &b| p.food_freq[b].total_cmp(&p.food_freq[a]).then(a.cmp(&b)));
        let top: Vec<&str> = order
            .iter()
            .take(3)
            .map(|&k| data.class_names()[p.food_subset[k]].as_str())
            .collect();
        println!("{}: {} foods, top {}", p.user_id, p.food_subset.len(), top.join(" "));
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig, out: &mut Outputs<'_>, inputs: &mut Vec<FileDigest>) -> Result<(), CliError> {
    let data = embeddings(cfg, inputs)?;
    let total = data.num_classes();
    let added: usize = cfg.model.sessions.iter().sum();
    if cfg.model.sessions.contains(&0) {
        return Err(CliError::user("session sizes must be >= 1"));
    }
    if added + 2 > total {
        return Err(CliError::user(format!(
            "{total} classes cannot hold {added} session classes and a base of at least 2"
        )));
    }
    let base = total - added;
    let tc = cfg.train_config();
    let seeds = cfg.seeds();
    let base_train = data.examples(Split::Train, 0..base);
    let head = train_base(&base_train, base, cfg.model.embed_dim, cfg.model.temperature, &tc)?;
    let mut model = PdsnModel::new(
        head,
        cfg.model.max_sessions,
        cfg.model.gamma,
        cfg.model.temperature,
        seeds.gamma,
    )?;
    model.record_seed("base", tc.seed);
    model.record_seed("gamma", seeds.gamma);

    let mut report = String::from("stage,classes,train_acc,heldout_acc\n");
    let mut log = |stage: &str, model: &PdsnModel| -> Result<(), CliError> {
        let n = model.num_classes();
        let tr = accuracy(model, &data.examples(Split::Train, 0..n))?;
        let te = accuracy(model, &data.examples(Split::Test, 0..n))?;
        println!("{stage}: {n} classes, train {tr:.4}, held-out {te:.4}");
        report.push_str(&format!("{stage},{n},{tr},{te}\n"));
        Ok(())
    };
    log("base", &model)?;
    let mut offset = base;
    for (i, &n) in cfg.model.sessions.iter().enumerate() {
        let mut seen = vec![0usize; total];
        let new: Vec<Example> = data
            .examples(Split::Train, offset..offset + n)
            .into_iter()
            .filter(|e| {
                seen[e.label] += 1;
                cfg.model.session_shots == 0 || seen[e.label] <= cfg.model.session_shots
            })
            .collect();
        model = train_session(&model, &new, n, &base_train, &tc)?;
        offset += n;
        log(&format!("session{}", i + 1), &model)?;
    }
    out.write("model.pdsn.json", &render(|b| write_checkpoint(b, &model))?)?;
    out.write("train.csv", report.as_bytes())?;
    Ok(())
}

fn evaluate(
    cfg: &ExperimentConfig,
    jobs: usize,
    (checkpoints, patterns, factors, breakdown): (&[PathBuf], &Path, &str, bool),
    out: &mut Outputs<'_>,
    inputs: &mut Vec<FileDigest>,
) -> Result<(), CliError> {
    let data = embeddings(cfg, inputs)?;
    let corpus = load_patterns(patterns, &data, inputs)?;
    let mask = parse_factors(factors).map_err(CliError::input)?;
    let settings = settings(cfg, jobs)?;
    let mut rows: Vec<(String, String, TimestepReport)> = Vec::new();
    let mut labels = Vec::new();
    let mut breakdowns = Vec::new();
    for path in checkpoints {
        let model = load_model(path, inputs)?;
        check_classes(&model, &data, path)?;
        let label = model_label(&model, &labels);
        let report = evaluate_factors(&model, &corpus.users, &settings, mask)?;
        for (k, m) in report.checkpoints.iter().zip(&report.mean) {
            println!("{label} [{factors}] t{k}: {m:.4}");
        }
        rows.push((factors.to_string(), label.clone(), report));
        if breakdown {
            if model.sessions().is_empty() {
                return Err(CliError::user(format!(
                    "{}: --breakdown needs a checkpoint with at least one session",
                    path.display()
                )));
            }
            let b = model.base_classes();
            let r = breakdown_base_new(
                label.clone(),
                &model,
                &data.examples(Split::Test, 0..b),
                &data.examples(Split::Test, b..model.num_classes()),
            )?;
            println!(
                "{label}: base {:.4} new {:.4} total {:.4}",
                r.base_acc, r.new_acc, r.total_acc
            );
            breakdowns.push(r);
        }
        labels.push(label);
    }
    out.write("timestep.csv", &render(|b| write_timestep_table(b, &rows))?)?;
    if breakdown {
        out.write("breakdown.csv", &render(|b| write_breakdown_table(b, &breakdowns))?)?;
    }
    Ok(())
}

fn ablate(
    cfg: &ExperimentConfig,
    jobs: usize,
    (checkpoint, patterns): (&Path, &Path),
    out: &mut Outputs<'_>,
    inputs: &mut Vec<FileDigest>,
) -> Result<(), CliError> {
    let data = embeddings(cfg, inputs)?;
    let corpus = load_patterns(patterns, &data, inputs)?;
    let model = load_model(checkpoint, inputs)?;
    check_classes(&model, &data, checkpoint)?;
    let label = model_label(&model, &[]);
    let reports = run_ablation(
        &model,
        &corpus.users,
        &settings(cfg, jobs)?,
        &AblationConfig {
            scenarios: cfg.eval.scenarios.clone(),
        },
    )?;
    let rows: Vec<(String, String, TimestepReport)> = reports
        .iter()
        .map(|(sc, r)| (sc.name().to_string(), label.clone(), r.clone()))
        .collect();
    for (sc, _, r) in &rows {
        let last = r.mean.last().copied().unwrap_or(0.0);
        println!("{sc}: t{} {last:.4}", r.checkpoints.last().copied().unwrap_or(0));
    }
    out.write("ablation.csv", &render(|b| write_timestep_table(b, &rows))?)?;
    out.write("plot.csv", &render(|b| write_plot_data(b, &reports))?)?;
    Ok(())
}

/// Run one command and write its manifest next to the outputs.
pub fn execute(cfg: &ExperimentConfig, inv: &Invocation, jobs: usize) -> Result<Manifest, CliError> {
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut inputs = Vec::new();
    match inv {
        Invocation::Simulate => simulate(cfg, &mut out, &mut inputs)?,
        Invocation::Train => train(cfg, &mut out, &mut inputs)?,
        Invocation::Evaluate {
            checkpoints,
            patterns,
            factors,
            breakdown,
        } => evaluate(
            cfg,
            jobs,
            (checkpoints, patterns, factors, *breakdown),
            &mut out,
            &mut inputs,
        )?,
        Invocation::Ablate { checkpoint, patterns } => {
            ablate(cfg, jobs, (checkpoint, patterns), &mut out, &mut inputs)?
        }
    }
    let s = cfg.seeds();
    let seeds = BTreeMap::from([
        ("master".to_string(), cfg.seed),
        ("synthetic".to_string(), s.synthetic),
        ("split".to_string(), s.split),
        ("pattern".to_string(), s.pattern),
        ("train".to_string(), s.train),
        ("gamma".to_string(), s.gamma),
    ]);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        tool: format!("mealwise {}", env!("CARGO_PKG_VERSION")),
        invocation: inv.clone(),
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        seeds,
        inputs,
        outputs: out.files,
    };
    let path = manifest.save(&cfg.output_dir)?;
    eprintln!("manifest: {}", path.display());
    Ok(manifest)
}

pub fn replay(path: &Path, out: Option<PathBuf>, jobs: usize) -> Result<(), CliError> {
    let recorded = Manifest::load(path)?;
    for input in &recorded.inputs {
        let now = digest_file(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(CliError::user(format!(
                "{}: input changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let mut cfg = recorded.config.clone();
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    let fresh = execute(&cfg, &recorded.invocation, jobs)?;
    let mut mismatches = 0;
    for want in &recorded.outputs {
        match fresh.outputs.iter().find(|f| f.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => println!("ok {}", want.path.display()),
            _ => {
                println!("MISMATCH {}", want.path.display());
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(CliError::internal(format!(
            "{mismatches} output(s) differ from the manifest"
        )));
    }
    Ok(())
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use prosody_gs::analysis::{analyze, Analysis};
use prosody_gs::audio::{read_wav, resample, write_wav};
use prosody_gs::conditioning::{
    grad_check, loss_history_csv, make_synthetic_prosody_dataset, train_toy, OptimizerKind,
    SyntheticConfig, SyntheticCorpus, ToyModel, ToyModelConfig,
};
use prosody_gs::dsp::log_mel;
use prosody_gs::features::{fit_norm_stats, read_gs_csv, write_gs_csv, GsRecord};
use prosody_gs::metrics::{
    discrimination, format_table, monte_carlo_eval, pair_metrics_from, McConfig,
};
use prosody_gs::projection::{project_features, write_scatter_csv, ScatterPoint};
use prosody_gs::synth::{self, Family, TwoFamilyCorpus};
use prosody_gs::{MetricReport, NormStats, PairMetrics};

use crate::manifest::Manifest;
use crate::{CliError, GlobalArgs, Optimizer, ReportFormat, StatsSource, ToyArgs};

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| input_err(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| input_err(format!("{}: {e}", dir.display())))
}

/// Expands glob patterns, checks that every input exists, and returns the
/// sorted, de-duplicated list.
fn expand_inputs(inputs: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = BTreeSet::new();
    for input in inputs {
        if input.contains(['*', '?', '[']) {
            let matches =
                glob::glob(input).map_err(|e| input_err(format!("bad pattern {input:?}: {e}")))?;
            let before = paths.len();
            for m in matches {
                paths.insert(m.map_err(|e| input_err(e.to_string()))?);
            }
            if paths.len() == before {
                return Err(input_err(format!("pattern {input:?} matched no files")));
            }
        } else {
            let path = PathBuf::from(input);
            if !path.is_file() {
                return Err(input_err(format!("{input}: no such file")));
            }
            paths.insert(path);
        }
    }
    Ok(paths.into_iter().collect())
}

fn stem_of(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| input_err(format!("{}: file name is not valid UTF-8", path.display())))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

pub fn extract(
    g: &GlobalArgs,
    inputs: &[String],
    out_dir: &Path,
    mel: bool,
) -> Result<(), CliError> {
    let acfg = g.analysis()?;
    let paths = expand_inputs(inputs)?;
    let mut by_stem: BTreeMap<String, &Path> = BTreeMap::new();
    for p in &paths {
        if let Some(other) = by_stem.insert(stem_of(p)?, p) {
            return Err(input_err(format!(
                "{} and {} share a file stem; outputs are named by stem",
                other.display(),
                p.display()
            )));
        }
    }
    create_dir(out_dir)?;

    let mut records = Vec::new();
    let mut failures: Vec<(&Path, CliError)> = Vec::new();
    for path in &paths {
        let stem = stem_of(path)?;
        let result = (|| -> Result<Analysis, CliError> {
            let audio = read_wav(path)?;
            let analysis = analyze(&audio, &acfg)?;
            write_file(
                &out_dir.join(format!("{stem}.f0.csv")),
                &analysis.f0.to_csv(),
            )?;
            write_file(
                &out_dir.join(format!("{stem}.rms.csv")),
                &analysis.rms.to_csv(),
            )?;
            if mel {
                let audio = if audio.sample_rate_hz() == acfg.sample_rate_hz {
                    audio
                } else {
                    resample(&audio, acfg.sample_rate_hz)?
                };
                let spec = log_mel(&audio, acfg.frame_spec, g.n_mels)?;
                write_file(&out_dir.join(format!("{stem}.mel.csv")), &spec.to_csv())?;
            }
            Ok(analysis)
        })();
        match result.and_then(|a| Ok(*a.gs()?)) {
            Ok(features) => records.push(GsRecord {
                source: stem,
                features,
            }),
            Err(e) => {
                eprintln!("{}: {}", path.display(), e.message());
                failures.push((path, e));
            }
        }
    }

    write_file(&out_dir.join("gs.csv"), &write_gs_csv(&records))?;
    let mut errors = String::from("path,error\n");
    for (path, e) in &failures {
        errors.push_str(&format!(
            "{},{}\n",
            csv_field(&path.display().to_string()),
            csv_field(e.message())
        ));
    }
    write_file(&out_dir.join("errors.csv"), &errors)?;

    eprintln!(
        "extracted GS features for {} of {} files",
        records.len(),
        paths.len()
    );
    match failures.len() {
        0 => Ok(()),
        n if n < paths.len() => Err(CliError::Partial(format!(
            "{n} of {} files failed; see errors.csv",
            paths.len()
        ))),
        _ => {
            let msg = format!("all {} files failed; see errors.csv", paths.len());
            if failures
                .iter()
                .all(|(_, e)| matches!(e, CliError::Input(_)))
            {
                Err(CliError::Input(msg))
            } else {
                Err(CliError::Compute(msg))
            }
        }
    }
}

fn read_corpus(path: &Path) -> Result<Vec<GsRecord>, CliError> {
    Ok(read_gs_csv(&read_text(path)?)?)
}

fn fit_from_corpus(path: &Path) -> Result<NormStats, CliError> {
    let records = read_corpus(path)?;
    let features: Vec<_> = records.iter().map(|r| r.features).collect();
    Ok(fit_norm_stats(&features)?.with_source(format!(
        "{} ({} utterances)",
        path.display(),
        records.len()
    )))
}

fn resolve_stats(src: &StatsSource) -> Result<NormStats, CliError> {
    match (&src.stats, &src.fit_corpus) {
        (Some(path), _) => Ok(NormStats::from_json(&read_text(path)?)?),
        (None, Some(corpus)) => fit_from_corpus(corpus),
        (None, None) => Err(input_err("pass --stats or --fit-corpus")),
    }
}

pub fn norm_fit(corpus: &Path, out: &Path) -> Result<(), CliError> {
    let stats = fit_from_corpus(corpus)?;
    write_file(out, &stats.to_json())
}

pub fn compare(
    g: &GlobalArgs,
    reference: &Path,
    candidate: &Path,
    stats: &StatsSource,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let acfg = g.analysis()?;
    let stats = resolve_stats(stats)?;
    let load = |path: &Path| -> Result<Analysis, CliError> {
        let analysis = analyze(&read_wav(path)?, &acfg)?;
        if analysis.gs.is_none() {
            return Err(CliError::Compute(format!(
                "{}: no voiced frames; GS features are undefined",
                path.display()
            )));
        }
        Ok(analysis)
    };
    let r = load(reference)?;
    let c = load(candidate)?;
    let metrics = pair_metrics_from(&r, &c, &stats)?;
    for (name, value) in PairMetrics::NAMES.iter().zip(metrics.as_array()) {
        println!("{name}: {value:.6}");
    }
    if let Some(out) = out {
        write_file(
            out,
            &(serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n"),
        )?;
    }
    Ok(())
}

pub fn mc_eval(
    g: &GlobalArgs,
    manifest_path: &Path,
    stats: &StatsSource,
    out: &Path,
    format: ReportFormat,
    n_runs: Option<usize>,
    label: &str,
) -> Result<(), CliError> {
    let acfg = g.analysis()?;
    let manifest = Manifest::load(manifest_path)?;
    let stats = resolve_stats(stats)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let provider = manifest.provider(base)?;
    let cfg = McConfig {
        n_runs: n_runs.or(manifest.n_runs).unwrap_or(McConfig::DEFAULT_RUNS),
        seed: g.seed,
        reference_pool: manifest.reference_ids(),
        text_set: manifest.texts.clone(),
    };
    if cfg.n_runs == 0 {
        return Err(input_err("--n-runs must be at least 1"));
    }
    let report = monte_carlo_eval(&provider, &cfg, &stats, &acfg)?;
    for s in &report.skipped {
        eprintln!(
            "warning: run {} skipped {}:{}: {}",
            s.run, s.text_id, s.reference_id, s.reason
        );
    }
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_csv(),
    };
    write_file(out, &text)?;
    print!("{}", format_table(&[(label, &report)]));
    Ok(())
}

fn read_report(path: &Path) -> Result<MetricReport, CliError> {
    let text = read_text(path)?;
    let report = if path.extension().is_some_and(|e| e == "csv") {
        MetricReport::from_csv(&text)?
    } else {
        MetricReport::from_json(&text)?
    };
    Ok(report)
}

pub fn table(columns: &[String], discriminate: bool) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for col in columns {
        let (label, path) = col
            .split_once('=')
            .ok_or_else(|| input_err(format!("expected LABEL=PATH, got {col:?}")))?;
        reports.push((label.to_string(), read_report(Path::new(path))?));
    }
    let view: Vec<(&str, &MetricReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    print!("{}", format_table(&view));
    if discriminate {
        let [(a, matched), (b, mismatched)] = view.as_slice() else {
            return Err(input_err(
                "--discriminate needs exactly two reports: matched then mismatched",
            ));
        };
        let d = discrimination(matched, mismatched)?;
        println!(
            "\n{a} scores lower than {b} on both cosines in {} of {} trials ({:.1}%)",
            d.wins,
            d.trials,
            100.0 * d.rate()
        );
    }
    Ok(())
}

pub fn scatter(corpus: &Path, out: &Path, groups: Option<&Path>) -> Result<(), CliError> {
    let records = read_corpus(corpus)?;
    let mut group_of: HashMap<String, String> = HashMap::new();
    if let Some(path) = groups {
        let text = read_text(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next() != Some("id,group") {
            return Err(input_err(format!(
                "{}: expected header id,group",
                path.display()
            )));
        }
        for line in lines {
            let (id, group) = line
                .split_once(',')
                .ok_or_else(|| input_err(format!("{}: bad line {line:?}", path.display())))?;
            group_of.insert(id.to_string(), group.to_string());
        }
    }
    let features: Vec<_> = records.iter().map(|r| r.features).collect();
    let (_, projection) = project_features(&features)?;
    if projection.rank < 2 {
        eprintln!(
            "warning: the corpus spans only {} principal direction(s); degenerate axes are zero",
            projection.rank
        );
    }
    let points: Vec<ScatterPoint> = records
        .iter()
        .zip(&projection.points)
        .map(|(r, &(x, y))| ScatterPoint {
            id: r.source.clone(),
            x,
            y,
            group: group_of.get(&r.source).cloned().unwrap_or_default(),
        })
        .collect();
    write_file(out, &write_scatter_csv(&points))
}

fn toy_configs(g: &GlobalArgs, toy: &ToyArgs) -> (SyntheticConfig, ToyModelConfig) {
    let data = SyntheticConfig {
        seed: g.seed,
        n_texts: toy.n_texts,
        variants_per_text: toy.variants,
        n_mels: g.n_mels,
        ..Default::default()
    };
    let model = ToyModelConfig {
        width: toy.width,
        n_mels: g.n_mels,
        learning_rate: toy.learning_rate,
        batch_size: toy.batch_size,
        max_steps: toy.steps,
        eval_every: toy.eval_every,
        optimizer: match toy.optimizer {
            Optimizer::Sgd => OptimizerKind::Sgd,
            Optimizer::Adam => OptimizerKind::Adam,
        },
        seed: g.seed,
        ..Default::default()
    };
    (data, model)
}

fn corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, CliError> {
    Ok(make_synthetic_prosody_dataset(cfg)?)
}

pub fn toy_train(
    g: &GlobalArgs,
    toy: &ToyArgs,
    out_dir: &Path,
    conditioned: bool,
) -> Result<(), CliError> {
    let (data, model) = toy_configs(g, toy);
    let corpus = corpus(&data)?;
    let outcome = train_toy(&corpus, &model, conditioned)?;
    create_dir(out_dir)?;
    outcome.model.save(out_dir.join("checkpoint.json"))?;
    write_file(
        &out_dir.join("loss.csv"),
        &loss_history_csv(&outcome.history),
    )?;
    println!(
        "{} model: {} steps, validation MSE {:.6}",
        if conditioned {
            "conditioned"
        } else {
            "unconditioned"
        },
        outcome.history.len(),
        outcome.final_val_mse
    );
    Ok(())
}

pub fn toy_gradcheck(
    g: &GlobalArgs,
    width: usize,
    examples: usize,
    tolerance: f64,
) -> Result<(), CliError> {
    if examples == 0 {
        return Err(input_err("--examples must be at least 1"));
    }
    let data = SyntheticConfig {
        seed: g.seed,
        n_texts: examples.max(2),
        variants_per_text: 2,
        n_mels: g.n_mels,
        ..Default::default()
    };
    let corpus = corpus(&data)?;
    let mut worst = 0.0f64;
    for i in 0..examples {
        let cfg = ToyModelConfig {
            width,
            n_mels: g.n_mels,
            seed: g.seed.wrapping_add(i as u64),
            ..Default::default()
        };
        let model = ToyModel::new(cfg)?;
        let example = &corpus.examples[i % corpus.examples.len()];
        let report = grad_check(&model, example)?;
        println!(
            "model seed {}: max relative error {:.3e} over {} parameters (worst in {:?})",
            cfg.seed, report.max_relative_error, report.n_params, report.worst_group
        );
        worst = worst.max(report.max_relative_error);
    }
    println!("max relative error {worst:.3e} (tolerance {tolerance:e})");
    if worst >= tolerance {
        return Err(CliError::Compute(format!(
            "gradient check failed: {worst:e} >= {tolerance:e}"
        )));
    }
    Ok(())
}

pub fn toy_ablate(g: &GlobalArgs, toy: &ToyArgs, max_ratio: f64) -> Result<(), CliError> {
    let (data, model) = toy_configs(g, toy);
    let corpus = corpus(&data)?;
    let conditioned = train_toy(&corpus, &model, true)?;
    let unconditioned = train_toy(&corpus, &model, false)?;
    let ratio = conditioned.final_val_mse / unconditioned.final_val_mse;
    println!(
        "conditioned validation MSE   {:.6}",
        conditioned.final_val_mse
    );
    println!(
        "unconditioned validation MSE {:.6}",
        unconditioned.final_val_mse
    );
    println!("ratio {ratio:.4}");
    if !(ratio <= max_ratio) {
        return Err(CliError::Compute(format!(
            "conditioning ratio {ratio:.4} exceeds {max_ratio}"
        )));
    }
    Ok(())
}

pub fn synth_corpus(
    g: &GlobalArgs,
    out_dir: &Path,
    per_family: usize,
    texts: usize,
) -> Result<(), CliError> {
    let corpus = TwoFamilyCorpus::new(per_family, texts, g.seed, g.sample_rate)?;
    create_dir(out_dir)?;
    let mut groups = String::from("id,group\n");
    for (id, audio) in corpus.utterances()? {
        let path = out_dir.join(format!("{id}.wav"));
        create_dir(path.parent().expect("utterance ids have a directory"))?;
        write_wav(&path, &audio)?;
        let stem = id.rsplit('/').next().expect("non-empty id");
        let group = match corpus.family_of(stem) {
            Some(Family::HighLoud) => "reference_high_loud",
            Some(Family::LowQuiet) => "reference_low_quiet",
            None if stem.starts_with("matched_") => "matched",
            None => "mismatched",
        };
        groups.push_str(&format!("{stem},{group}\n"));
    }
    write_file(&out_dir.join("groups.csv"), &groups)?;

    for (name, prefix) in [("matched", "matched"), ("mismatched", "mismatched")] {
        let manifest = Manifest {
            texts: corpus.texts.clone(),
            references: corpus
                .reference_ids()
                .into_iter()
                .map(|r| {
                    let path = PathBuf::from(format!("references/{r}.wav"));
                    (r, path)
                })
                .collect(),
            candidates: BTreeMap::new(),
            candidate_template: Some(format!("candidates/{prefix}_{{text}}__{{ref}}.wav")),
            n_runs: None,
        };
        write_file(&out_dir.join(format!("{name}.json")), &manifest.to_json())?;
    }
    eprintln!(
        "wrote {} references, {} texts and two manifests to {}",
        corpus.references.len(),
        corpus.texts.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn synth_tone(
    g: &GlobalArgs,
    freq: f64,
    seconds: f64,
    amplitude: f64,
    out: &Path,
) -> Result<(), CliError> {
    if !(freq > 0.0 && seconds > 0.0 && amplitude.is_finite()) {
        return Err(input_err("tone needs a positive frequency and duration"));
    }
    let audio = synth::tone(freq, seconds, amplitude, g.sample_rate);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    Ok(write_wav(out, &audio)?)
}

//! Objective prosody-transfer metrics.
//!
//! * GS cosine distance, separately for the pitch (dims 0..4) and loudness
//!   (dims 4..7) parts of the z-normalized feature vector.
//! * DTW distance between whole contours, with local cost `|a_i - b_j|`,
//!   steps `(1,0)`, `(0,1)`, `(1,1)`, matched endpoints, and the
//!   accumulated cost divided by `len(a) + len(b)`. The pitch DTW runs on the
//!   full log-F0 contour, unvoiced zeros included.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, Analysis, AnalysisConfig};
use crate::audio::AudioBuffer;
use crate::contour::FrameSpec;
use crate::error::{Error, Result};
use crate::features::{GsFeatures, NormStats, PITCH_DIMS, RMS_DIMS};
use crate::pitch::PitchConfig;

/// Share of sampled pairs that may be skipped before an evaluation fails.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    Pitch,
    Rms,
}

impl FeatureSubset {
    pub fn dims(self) -> std::ops::Range<usize> {
        match self {
            FeatureSubset::Pitch => PITCH_DIMS,
            FeatureSubset::Rms => RMS_DIMS,
        }
    }
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`. Either vector being zero is a
/// degenerate input.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|b| b * b).sum();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("zero-norm feature vector".into()));
    }
    let d = 1.0 - dot / (nu * nv).sqrt();
    if !d.is_finite() {
        return Err(Error::Numerical("non-finite cosine distance".into()));
    }
    Ok(d.clamp(0.0, 2.0))
}

/// Cosine distance between the selected sub-vectors of `a` and `b`, both
/// z-normalized with `stats`.
pub fn gs_cosine(
    a: &GsFeatures,
    b: &GsFeatures,
    stats: &NormStats,
    subset: FeatureSubset,
) -> Result<f64> {
    let (za, zb) = (stats.normalize(a), stats.normalize(b));
    let dims = subset.dims();
    cosine_distance(&za[dims.clone()], &zb[dims])
}

/// Raw accumulated DTW cost (no length normalization).
pub fn dtw_cost(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("DTW needs non-empty sequences"));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &x) in a.iter().enumerate() {
        for j in 0..m {
            let local = (x - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = best + local;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW cost normalized by `len(a) + len(b)`.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(dtw_cost(a, b)? / (a.len() + b.len()) as f64)
}

/// The four per-pair metrics, named after their report rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub pitch_cosine: f64,
    pub rms_cosine: f64,
    pub pitch_dtw: f64,
    pub rms_dtw: f64,
}

impl PairMetrics {
    pub const NAMES: [&'static str; 4] = ["pitch_cosine", "rms_cosine", "pitch_dtw", "rms_dtw"];
    pub const LABELS: [&'static str; 4] = ["Pitch cosine", "RMS cosine", "Pitch DTW", "RMS DTW"];

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.pitch_cosine,
            self.rms_cosine,
            self.pitch_dtw,
            self.rms_dtw,
        ]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            pitch_cosine: v[0],
            rms_cosine: v[1],
            pitch_dtw: v[2],
            rms_dtw: v[3],
        }
    }
}

/// Metrics between two already-analyzed utterances.
pub fn pair_metrics_from(
    reference: &Analysis,
    candidate: &Analysis,
    stats: &NormStats,
) -> Result<PairMetrics> {
    let (ga, gb) = (reference.gs()?, candidate.gs()?);
    Ok(PairMetrics {
        pitch_cosine: gs_cosine(ga, gb, stats, FeatureSubset::Pitch)?,
        rms_cosine: gs_cosine(ga, gb, stats, FeatureSubset::Rms)?,
        pitch_dtw: dtw_distance(reference.f0.values(), candidate.f0.values())?,
        rms_dtw: dtw_distance(reference.rms.values(), candidate.rms.values())?,
    })
}

/// Extracts contours and GS features of both signals and compares them.
pub fn pair_metrics(
    reference: &AudioBuffer,
    candidate: &AudioBuffer,
    stats: &NormStats,
    cfg: &PitchConfig,
    spec: FrameSpec,
) -> Result<PairMetrics> {
    let acfg = AnalysisConfig {
        sample_rate_hz: reference.sample_rate_hz(),
        frame_spec: spec,
        pitch: *cfg,
    };
    pair_metrics_from(
        &analyze(reference, &acfg)?,
        &analyze(candidate, &acfg)?,
        stats,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_runs: usize,
    pub seed: u64,
    pub reference_pool: Vec<String>,
    pub text_set: Vec<String>,
}

impl McConfig {
    pub const DEFAULT_RUNS: usize = 50;

    pub fn new(reference_pool: Vec<String>, text_set: Vec<String>, seed: u64) -> Self {
        Self {
            n_runs: Self::DEFAULT_RUNS,
            seed,
            reference_pool,
            text_set,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs must be at least 1"));
        }
        if self.reference_pool.is_empty() || self.text_set.is_empty() {
            return Err(Error::invalid(
                "reference pool and text set must be non-empty",
            ));
        }
        Ok(())
    }
}

/// Resolves the audio behind the ids of a Monte Carlo evaluation.
pub trait PairsProvider {
    fn reference(&self, reference_id: &str) -> Result<AudioBuffer>;
    /// The utterance synthesized for `text_id` conditioned on `reference_id`.
    fn candidate(&self, text_id: &str, reference_id: &str) -> Result<AudioBuffer>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub run: usize,
    pub text_id: String,
    pub reference_id: String,
    #[serde(flatten)]
    pub metrics: PairMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub run: usize,
    pub text_id: String,
    pub reference_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population std, summed in slice order.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pitch_cosine: MeanStd,
    pub rms_cosine: MeanStd,
    pub pitch_dtw: MeanStd,
    pub rms_dtw: MeanStd,
}

impl Aggregate {
    pub fn from_rows(rows: &[PairRow]) -> Self {
        let column = |k: usize| {
            let xs: Vec<f64> = rows.iter().map(|r| r.metrics.as_array()[k]).collect();
            MeanStd::of(&xs)
        };
        Self {
            pitch_cosine: column(0),
            rms_cosine: column(1),
            pitch_dtw: column(2),
            rms_dtw: column(3),
        }
    }

    pub fn as_array(&self) -> [MeanStd; 4] {
        [
            self.pitch_cosine,
            self.rms_cosine,
            self.pitch_dtw,
            self.rms_dtw,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_runs: usize,
    pub seed: u64,
    pub per_pair: Vec<PairRow>,
    pub skipped: Vec<SkippedPair>,
    pub aggregate: Aggregate,
}

const CSV_HEADER: &str = "run,text_id,reference_id,pitch_cosine,rms_cosine,pitch_dtw,rms_dtw";

impl MetricReport {
    pub fn from_rows(
        n_runs: usize,
        seed: u64,
        per_pair: Vec<PairRow>,
        skipped: Vec<SkippedPair>,
    ) -> Self {
        let aggregate = Aggregate::from_rows(&per_pair);
        Self {
            n_runs,
            seed,
            per_pair,
            skipped,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-pair rows as CSV, preceded by `#` lines for the run count, seed
    /// and skipped pairs. Aggregates are recomputed when reading.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# n_runs={}", self.n_runs).unwrap();
        writeln!(out, "# seed={}", self.seed).unwrap();
        for s in &self.skipped {
            writeln!(
                out,
                "# skipped={},{},{},{}",
                s.run,
                s.text_id,
                s.reference_id,
                s.reason.replace('\n', " ")
            )
            .unwrap();
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.per_pair {
            let m = r.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.run,
                r.text_id,
                r.reference_id,
                m.pitch_cosine,
                m.rms_cosine,
                m.pitch_dtw,
                m.rms_dtw
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: &str| Error::Parse(format!("report line {line:?}"));
        let mut n_runs = None;
        let mut seed = None;
        let mut skipped = Vec::new();
        let mut per_pair = Vec::new();
        let mut seen_header = false;
        for line in text.lines().filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix("# ") {
                if let Some(v) = meta.strip_prefix("n_runs=") {
                    n_runs = Some(v.parse().map_err(|_| parse_err(line))?);
                } else if let Some(v) = meta.strip_prefix("seed=") {
                    seed = Some(v.parse().map_err(|_| parse_err(line))?);
                } else if let Some(v) = meta.strip_prefix("skipped=") {
                    let mut parts = v.splitn(4, ',');
                    let mut next = || parts.next().ok_or_else(|| parse_err(line));
                    skipped.push(SkippedPair {
                        run: next()?.parse().map_err(|_| parse_err(line))?,
                        text_id: next()?.to_string(),
                        reference_id: next()?.to_string(),
                        reason: next()?.to_string(),
                    });
                }
                continue;
            }
            if !seen_header {
                if line != CSV_HEADER {
                    return Err(parse_err(line));
                }
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(parse_err(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(line));
            per_pair.push(PairRow {
                run: cols[0].parse().map_err(|_| parse_err(line))?,
                text_id: cols[1].to_string(),
                reference_id: cols[2].to_string(),
                metrics: PairMetrics::from_array([
                    num(cols[3])?,
                    num(cols[4])?,
                    num(cols[5])?,
                    num(cols[6])?,
                ]),
            });
        }
        let n_runs = n_runs.ok_or_else(|| Error::Parse("report lacks n_runs".into()))?;
        let seed = seed.ok_or_else(|| Error::Parse("report lacks seed".into()))?;
        Ok(Self::from_rows(n_runs, seed, per_pair, skipped))
    }
}

/// Outcome of comparing a matched-prosody evaluation with a mismatched one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    /// Aligned `(run, text, reference)` pairs compared.
    pub trials: usize,
    /// Trials where the matched candidate scored strictly lower on both the
    /// pitch and the loudness cosine.
    pub wins: usize,
}

impl Discrimination {
    pub fn rate(&self) -> f64 {
        self.wins as f64 / self.trials as f64
    }
}

/// Compares two reports produced with the same seed, text set and reference
/// pool (so every run samples the same pairs), one with candidates that share
/// the reference's prosody and one with candidates that do not. Pairs
/// skipped in either report are left out.
pub fn discrimination(matched: &MetricReport, mismatched: &MetricReport) -> Result<Discrimination> {
    if matched.seed != mismatched.seed || matched.n_runs != mismatched.n_runs {
        return Err(Error::invalid(
            "reports were produced with different seeds or run counts",
        ));
    }
    let key = |r: &PairRow| (r.run, r.text_id.clone());
    let other: HashMap<_, &PairRow> = mismatched.per_pair.iter().map(|r| (key(r), r)).collect();
    let mut trials = 0;
    let mut wins = 0;
    for m in &matched.per_pair {
        let Some(x) = other.get(&key(m)) else {
            continue;
        };
        if x.reference_id != m.reference_id {
            return Err(Error::invalid(format!(
                "run {} text {:?} sampled different references; the reports are not aligned",
                m.run, m.text_id
            )));
        }
        trials += 1;
        if m.metrics.pitch_cosine < x.metrics.pitch_cosine
            && m.metrics.rms_cosine < x.metrics.rms_cosine
        {
            wins += 1;
        }
    }
    if trials == 0 {
        return Err(Error::invalid("the reports share no evaluated pairs"));
    }
    Ok(Discrimination { trials, wins })
}

/// Renders one or more reports side by side as a mean ± std table, one row
/// per metric and one column per system.
pub fn format_table(columns: &[(&str, &MetricReport)]) -> String {
    let mut out = String::from("Objective metrics for prosody transfer. Lower is better.\n\n");
    out.push_str("| Distance Metric |");
    for (name, _) in columns {
        write!(out, " {name} |").unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for (k, label) in PairMetrics::LABELS.iter().enumerate() {
        write!(out, "| {label} |").unwrap();
        for (_, report) in columns {
            let ms = report.aggregate.as_array()[k];
            write!(out, " {:.4} ± {:.4} |", ms.mean, ms.std).unwrap();
        }
        out.push('\n');
    }
    out.push('\n');
    for (name, report) in columns {
        writeln!(
            out,
            "{name}: n_runs = {}, seed = {}, pairs = {}, skipped = {}",
            report.n_runs,
            report.seed,
            report.per_pair.len(),
            report.skipped.len()
        )
        .unwrap();
    }
    out
}

type Cached = std::result::Result<Arc<Analysis>, String>;

/// For every run and every text, samples one reference uniformly from the
/// pool and compares it with the candidate synthesized for that pair.
/// Unresolvable or unanalyzable pairs are skipped and recorded; more than
/// [`MAX_SKIP_FRACTION`] skipped fails the evaluation.
pub fn monte_carlo_eval(
    provider: &dyn PairsProvider,
    cfg: &McConfig,
    stats: &NormStats,
    analysis: &AnalysisConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut references: HashMap<String, Cached> = HashMap::new();
    let mut candidates: HashMap<(String, String), Cached> = HashMap::new();
    let load = |audio: Result<AudioBuffer>| -> Cached {
        audio
            .and_then(|a| analyze(&a, analysis))
            .map(Arc::new)
            .map_err(|e| e.to_string())
    };

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for run in 0..cfg.n_runs {
        for text in &cfg.text_set {
            let reference_id = &cfg.reference_pool[rng.random_range(0..cfg.reference_pool.len())];
            let r = references
                .entry(reference_id.clone())
                .or_insert_with(|| load(provider.reference(reference_id)))
                .clone();
            let c = candidates
                .entry((text.clone(), reference_id.clone()))
                .or_insert_with(|| load(provider.candidate(text, reference_id)))
                .clone();
            let outcome = r
                .and_then(|r| c.map(|c| (r, c)))
                .and_then(|(r, c)| pair_metrics_from(&r, &c, stats).map_err(|e| e.to_string()));
            match outcome {
                Ok(metrics) => rows.push(PairRow {
                    run,
                    text_id: text.clone(),
                    reference_id: reference_id.clone(),
                    metrics,
                }),
                Err(reason) => skipped.push(SkippedPair {
                    run,
                    text_id: text.clone(),
                    reference_id: reference_id.clone(),
                    reason,
                }),
            }
        }
    }
    let total = rows.len() + skipped.len();
    if skipped.len() as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::EvaluationFailed {
            skipped: skipped.len(),
            total,
        });
    }
    Ok(MetricReport::from_rows(cfg.n_runs, cfg.seed, rows, skipped))
}

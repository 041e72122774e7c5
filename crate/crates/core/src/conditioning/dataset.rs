//! Synthetic one-to-many prosody task: every text appears with several GS
//! vectors, and the GS vector decides the overall level and the position of
//! a spectral "pitch band" in the target mel frames. A model that never sees
//! the GS vector can at best predict the average over variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::MEL_RANGE;
use crate::error::{Error, Result};
use crate::features::{fit_norm_stats, GsFeatures, NormStats, GS_DIM};

/// Distribution of self-consistent GS vectors. Means and spreads are
/// normal; `var = spread²`, `max = mean + k·spread`, `min = mean − k·spread`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsGenerator {
    pub f0_mean: (f64, f64),
    pub f0_spread: (f64, f64),
    pub f0_extent: f64,
    pub rms_mean: (f64, f64),
    pub rms_spread: (f64, f64),
    pub rms_extent: f64,
}

impl Default for GsGenerator {
    fn default() -> Self {
        Self {
            f0_mean: (5.0, 0.3),
            f0_spread: (0.12, 0.02),
            f0_extent: 2.0,
            rms_mean: (0.1, 0.02),
            rms_spread: (0.03, 0.005),
            rms_extent: 2.5,
        }
    }
}

impl GsGenerator {
    pub fn sample(&self, rng: &mut impl Rng) -> GsFeatures {
        let normal = |(mu, sigma): (f64, f64)| Normal::new(mu, sigma).expect("valid normal");
        let f0_mean = normal(self.f0_mean).sample(rng);
        let f0_spread = normal(self.f0_spread).sample(rng).abs();
        let rms_mean = normal(self.rms_mean).sample(rng);
        let rms_spread = normal(self.rms_spread).sample(rng).abs();
        GsFeatures::new([
            f0_mean,
            f0_spread * f0_spread,
            f0_mean + self.f0_extent * f0_spread,
            f0_mean - self.f0_extent * f0_spread,
            rms_mean,
            rms_spread * rms_spread,
            rms_mean + self.rms_extent * rms_spread,
        ])
        .expect("generated GS vector is self-consistent")
    }

    /// Analytic per-dimension mean of sampled vectors (ignoring the
    /// negligible folding of negative spreads).
    pub fn expected_mean(&self) -> [f64; GS_DIM] {
        let (fm, fs) = (self.f0_mean.0, self.f0_spread.0);
        let (rm, rs) = (self.rms_mean.0, self.rms_spread.0);
        [
            fm,
            fs * fs + self.f0_spread.1.powi(2),
            fm + self.f0_extent * fs,
            fm - self.f0_extent * fs,
            rm,
            rs * rs + self.rms_spread.1.powi(2),
            rm + self.rms_extent * rs,
        ]
    }

    pub fn expected_std(&self) -> [f64; GS_DIM] {
        // Var(s²) = 4 μ² σ² + 2 σ⁴ for s ~ N(μ, σ).
        let square_std =
            |(mu, sigma): (f64, f64)| (4.0 * mu * mu * sigma * sigma + 2.0 * sigma.powi(4)).sqrt();
        let range_std =
            |m: (f64, f64), s: (f64, f64), k: f64| (m.1 * m.1 + k * k * s.1 * s.1).sqrt();
        let f_ext = range_std(self.f0_mean, self.f0_spread, self.f0_extent);
        let r_ext = range_std(self.rms_mean, self.rms_spread, self.rms_extent);
        [
            self.f0_mean.1,
            square_std(self.f0_spread),
            f_ext,
            f_ext,
            self.rms_mean.1,
            square_std(self.rms_spread),
            r_ext,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_texts: usize,
    pub variants_per_text: usize,
    pub min_text_len: usize,
    pub max_text_len: usize,
    pub charset_size: usize,
    pub n_mels: usize,
    pub frames_per_symbol: usize,
    pub generator: GsGenerator,
    /// Target level offset is `level_gain * (rms_mean - generator mean)`.
    pub level_gain: f64,
    pub band_amplitude: f64,
    pub band_width_bins: f64,
    /// Band centre shift, in mel bins, per generator std of `f0_mean`.
    pub band_shift_bins: f64,
    pub validation_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let generator = GsGenerator::default();
        Self {
            seed: 0,
            n_texts: 48,
            variants_per_text: 8,
            min_text_len: 3,
            max_text_len: 8,
            charset_size: 37,
            n_mels: 80,
            frames_per_symbol: 2,
            level_gain: 1.0 / generator.rms_mean.1,
            generator,
            band_amplitude: 1.5,
            band_width_bins: 3.0,
            band_shift_bins: 10.0,
            validation_fraction: 0.2,
        }
    }
}

/// One (text, prosody, target mel) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub text_index: usize,
    pub text: Vec<usize>,
    pub gs: GsFeatures,
    pub gs_normalized: [f64; GS_DIM],
    /// Level offset written into every target cell before clamping.
    pub level: f64,
    /// `(text.len() * frames_per_symbol) x n_mels`, row-major.
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub examples: Vec<ToyExample>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// Fitted on the training examples and applied to all of them.
    pub stats: NormStats,
}

impl SyntheticCorpus {
    pub fn train_examples(&self) -> impl Iterator<Item = &ToyExample> {
        self.train.iter().map(|&i| &self.examples[i])
    }

    pub fn validation_examples(&self) -> impl Iterator<Item = &ToyExample> {
        self.validation.iter().map(|&i| &self.examples[i])
    }

    /// A corpus holding a single example, used both for training and
    /// validation.
    pub fn single(example: ToyExample, config: SyntheticConfig, stats: NormStats) -> Self {
        Self {
            config,
            examples: vec![example],
            train: vec![0],
            validation: vec![0],
            stats,
        }
    }
}

/// Renders the target frames of `text` under the prosody `gs`.
fn render_target(
    cfg: &SyntheticConfig,
    patterns: &[Vec<f64>],
    text: &[usize],
    gs: &GsFeatures,
) -> (f64, Vec<f64>) {
    let g = &cfg.generator;
    let level = cfg.level_gain * (gs.rms_mean() - g.rms_mean.0);
    let centre = (cfg.n_mels as f64 - 1.0) / 2.0
        + cfg.band_shift_bins * (gs.f0_mean() - g.f0_mean.0) / g.f0_mean.1;
    let band: Vec<f64> = (0..cfg.n_mels)
        .map(|m| {
            let x = (m as f64 - centre) / cfg.band_width_bins;
            cfg.band_amplitude * (-0.5 * x * x).exp()
        })
        .collect();
    let row = cfg.frames_per_symbol * cfg.n_mels;
    let mut target = Vec::with_capacity(text.len() * row);
    for &sym in text {
        for (i, p) in patterns[sym].iter().enumerate() {
            let v = p + level + band[i % cfg.n_mels];
            target.push(v.clamp(MEL_RANGE.0, MEL_RANGE.1));
        }
    }
    (level, target)
}

/// Builds the seeded synthetic corpus described in [`SyntheticConfig`].
pub fn make_synthetic_prosody_dataset(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.n_texts == 0 || cfg.variants_per_text == 0 {
        return Err(Error::invalid(
            "corpus needs at least one text and one variant",
        ));
    }
    if cfg.min_text_len == 0 || cfg.min_text_len > cfg.max_text_len {
        return Err(Error::invalid("bad text length range"));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::invalid("validation fraction must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Per-symbol spectral pattern for each of the frames a symbol emits.
    let patterns: Vec<Vec<f64>> = (0..cfg.charset_size)
        .map(|_| {
            let amp = rng.random_range(0.3..1.0);
            let cycles = rng.random_range(0.5..3.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (0..cfg.frames_per_symbol)
                .flat_map(|f| {
                    (0..cfg.n_mels).map(move |m| {
                        let x = m as f64 / cfg.n_mels as f64;
                        amp * (std::f64::consts::TAU * cycles * x + phase + 0.7 * f as f64).cos()
                    })
                })
                .collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(cfg.n_texts * cfg.variants_per_text);
    for text_index in 0..cfg.n_texts {
        let len = rng.random_range(cfg.min_text_len..=cfg.max_text_len);
        let text: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..cfg.charset_size))
            .collect();
        for _ in 0..cfg.variants_per_text {
            let gs = cfg.generator.sample(&mut rng);
            let (level, target) = render_target(cfg, &patterns, &text, &gs);
            examples.push(ToyExample {
                text_index,
                text: text.clone(),
                gs,
                gs_normalized: [0.0; GS_DIM],
                level,
                target,
            });
        }
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_val = ((examples.len() as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(examples.len() - 1);
    let mut validation = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();

    let train_gs: Vec<GsFeatures> = train.iter().map(|&i| examples[i].gs).collect();
    let stats = fit_norm_stats(&train_gs)?.with_source(format!(
        "synthetic corpus seed {} ({} training examples)",
        cfg.seed,
        train.len()
    ));
    for ex in &mut examples {
        ex.gs_normalized = stats.normalize(&ex.gs);
    }
    Ok(SyntheticCorpus {
        config: *cfg,
        examples,
        train,
        validation,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_differ_only_through_prosody() {
        let corpus = make_synthetic_prosody_dataset(&SyntheticConfig::default()).unwrap();
        let a = &corpus.examples[0];
        let b = &corpus.examples[1];
        assert_eq!(a.text, b.text);
        assert_ne!(a.gs, b.gs);
        assert_ne!(a.target, b.target);
    }

    #[test]
    fn level_tracks_rms_mean() {
        let cfg = SyntheticConfig::default();
        let corpus = make_synthetic_prosody_dataset(&cfg).unwrap();
        for ex in &corpus.examples {
            let expected = cfg.level_gain * (ex.gs.rms_mean() - cfg.generator.rms_mean.0);
            assert_eq!(ex.level, expected);
        }
    }

    #[test]
    fn mean_prosody_gives_mid_level_targets() {
        let cfg = SyntheticConfig::default();
        let g = cfg.generator;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let patterns: Vec<Vec<f64>> = (0..cfg.charset_size)
            .map(|_| vec![rng.random_range(-0.5..0.5); 2 * cfg.n_mels])
            .collect();
        let gs = GsFeatures::new(g.expected_mean()).unwrap();
        let (level, target) = render_target(&cfg, &patterns, &[0, 1], &gs);
        assert_eq!(level, 0.0);
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        assert!(mean.abs() < 0.5, "{mean}");
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let corpus = make_synthetic_prosody_dataset(&SyntheticConfig::default()).unwrap();
        let mut all: Vec<usize> = corpus
            .train
            .iter()
            .chain(&corpus.validation)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..corpus.examples.len()).collect::<Vec<_>>());
        assert_eq!(corpus.validation.len(), (384.0f64 * 0.2).round() as usize);
    }

    #[test]
    fn fitted_stats_recover_generator_moments() {
        let cfg = SyntheticConfig {
            n_texts: 125,
            variants_per_text: 8,
            validation_fraction: 0.0,
            seed: 17,
            ..Default::default()
        };
        let corpus = make_synthetic_prosody_dataset(&cfg).unwrap();
        assert_eq!(corpus.train.len(), 1000);
        let (mean, std) = (cfg.generator.expected_mean(), cfg.generator.expected_std());
        for d in 0..GS_DIM {
            assert!(
                (corpus.stats.mean[d] - mean[d]).abs() <= 0.05 * mean[d].abs(),
                "mean {d}"
            );
            assert!(
                (corpus.stats.std[d] - std[d]).abs() <= 0.05 * std[d],
                "std {d}"
            );
        }
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SyntheticConfig {
                n_texts: 0,
                ..Default::default()
            },
            SyntheticConfig {
                min_text_len: 0,
                ..Default::default()
            },
            SyntheticConfig {
                validation_fraction: 1.0,
                ..Default::default()
            },
        ] {
            assert!(make_synthetic_prosody_dataset(&cfg).is_err());
        }
    }
}

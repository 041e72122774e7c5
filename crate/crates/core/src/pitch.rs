//! Pitch tracking with the normalized cross-correlation function (NCCF).
//!
//! Each frame contributes up to [`MAX_CANDIDATES`] lag candidates, the local
//! maxima of its NCCF over the admissible lag range, plus one unvoiced
//! candidate. A Viterbi pass picks one candidate per frame, minimizing
//!
//! ```text
//! sum_i local(i) + w * |ln f0[i] - ln f0[i-1]|      (consecutive voiced frames)
//! ```
//!
//! where `local = 1 - nccf + octave_cost * log2(lag / min_lag)` for a voiced
//! candidate and `nccf_voicing_floor` for the unvoiced one. Transitions into
//! or out of the unvoiced state are free. Finally every frame whose RMS falls
//! below `voicing_rms_threshold` is forced unvoiced.
//!
//! For a frame `x` of length `N` and lag `L` the NCCF is
//!
//! ```text
//! sum_{n<N-L} x[n] x[n+L] / sqrt( sum_{n<N-L} x[n]^2 * sum_{n<N-L} x[n+L]^2 )
//! ```
//!
//! The numerator is evaluated for every lag at once through an FFT
//! autocorrelation and the two energies come from a prefix sum.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::contour::{Contour, FrameSpec};
use crate::dsp::rms_contour;
use crate::error::{Error, Result};

pub const MAX_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Frames with RMS below this amplitude are unvoiced.
    pub voicing_rms_threshold: f64,
    /// Cost per unit of absolute log-F0 change between voiced frames.
    pub transition_cost_weight: f64,
    /// Local cost of the unvoiced candidate.
    pub nccf_voicing_floor: f64,
    /// Extra local cost per octave of lag above the shortest admissible lag.
    /// Breaks the tie between a period and its multiples, which all reach
    /// an NCCF near 1 on strongly periodic input.
    pub octave_cost: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f0_min_hz: 50.0,
            f0_max_hz: 400.0,
            voicing_rms_threshold: 5e-3,
            transition_cost_weight: 0.2,
            nccf_voicing_floor: 0.3,
            octave_cost: 0.02,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(0.0 < self.f0_min_hz && self.f0_min_hz < self.f0_max_hz && self.f0_max_hz < nyquist) {
            return Err(Error::invalid(format!(
                "need 0 < f0_min ({}) < f0_max ({}) < Nyquist ({nyquist})",
                self.f0_min_hz, self.f0_max_hz
            )));
        }
        if !(self.voicing_rms_threshold > 0.0) {
            return Err(Error::invalid("voicing RMS threshold must be positive"));
        }
        if !(self.transition_cost_weight >= 0.0 && self.octave_cost >= 0.0) {
            return Err(Error::invalid("cost weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.nccf_voicing_floor) {
            return Err(Error::invalid("NCCF voicing floor must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Admissible lags in samples: `ceil(rate / f0_max) ..= floor(rate / f0_min)`.
    pub fn lag_range(&self, sample_rate_hz: u32) -> RangeInclusive<usize> {
        let rate = sample_rate_hz as f64;
        let lo = (rate / self.f0_max_hz).ceil().max(1.0) as usize;
        let hi = (rate / self.f0_min_hz).floor() as usize;
        lo..=hi
    }
}

/// A local NCCF maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCandidate {
    pub lag: usize,
    pub score: f64,
    /// Sub-sample peak position from a parabola through the peak and its
    /// two neighbours; equals `lag` at the edges of the computed range.
    pub refined_lag: f64,
}

/// Reusable NCCF evaluator for frames of one fixed length.
pub struct Nccf {
    frame_len: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Nccf {
    pub fn new(frame_len: usize) -> Self {
        let fft_len = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            frame_len,
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    /// NCCF for every lag `0..frame_len`. Lags with zero energy on either
    /// side score 0.
    pub fn scores(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len, "frame length changed");
        let n = self.frame_len;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.forward.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;

        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &x in frame {
            acc += x * x;
            prefix.push(acc);
        }
        let total = prefix[n];
        (0..n)
            .map(|lag| {
                let head = prefix[n - lag];
                let tail = total - prefix[lag];
                let denom = (head * tail).sqrt();
                if denom <= f64::MIN_POSITIVE || head <= 1e-12 * total || tail <= 1e-12 * total {
                    0.0
                } else {
                    (buf[lag].re * scale / denom).clamp(-1.0, 1.0)
                }
            })
            .collect()
    }

    /// Local NCCF maxima within `lag_range`, best first, at most
    /// [`MAX_CANDIDATES`]. Only positive peaks are kept.
    pub fn candidates(
        &self,
        frame: &[f64],
        lag_range: RangeInclusive<usize>,
    ) -> Result<Vec<LagCandidate>> {
        let (lo, hi) = (*lag_range.start(), *lag_range.end());
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("bad lag range {lo}..={hi}")));
        }
        if frame.len() < hi + 1 {
            return Err(Error::invalid(format!(
                "frame of {} samples is too short for lag {hi}",
                frame.len()
            )));
        }
        if frame.iter().all(|&x| x == 0.0) {
            return Ok(Vec::new());
        }
        let s = self.scores(frame);
        let last = s.len() - 1;
        let mut out: Vec<LagCandidate> = (lo..=hi)
            .filter(|&l| s[l] > 0.0 && s[l] >= s[l - 1] && (l == last || s[l] > s[l + 1]))
            .map(|l| {
                let refined_lag = if l < last {
                    let (a, b, c) = (s[l - 1], s[l], s[l + 1]);
                    let curvature = a - 2.0 * b + c;
                    if curvature < 0.0 {
                        l as f64 + (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
                    } else {
                        l as f64
                    }
                } else {
                    l as f64
                };
                LagCandidate {
                    lag: l,
                    score: s[l],
                    refined_lag,
                }
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.lag.cmp(&b.lag)));
        out.truncate(MAX_CANDIDATES);
        Ok(out)
    }
}

/// NCCF peak candidates of a single frame; see [`Nccf::candidates`].
pub fn nccf_frame(frame: &[f64], lag_range: RangeInclusive<usize>) -> Result<Vec<LagCandidate>> {
    Nccf::new(frame.len()).candidates(frame, lag_range)
}

struct State {
    log_f0: Option<f64>,
    local: f64,
}

/// Smoothed log-F0 contour with the same frame geometry as
/// [`rms_contour`](crate::dsp::rms_contour).
pub fn track_pitch(audio: &AudioBuffer, spec: FrameSpec, cfg: &PitchConfig) -> Result<Contour> {
    let rate = audio.sample_rate_hz();
    cfg.validate(rate)?;
    let n_frames = spec.require_frames(audio.len())?;
    let lags = cfg.lag_range(rate);
    let min_lag = *lags.start() as f64;
    let (ln_min, ln_max) = (cfg.f0_min_hz.ln(), cfg.f0_max_hz.ln());

    let nccf = Nccf::new(spec.window_len());
    let mut lattice: Vec<Vec<State>> = Vec::with_capacity(n_frames);
    for frame in spec.frames(audio.samples()) {
        let mut states = vec![State {
            log_f0: None,
            local: cfg.nccf_voicing_floor,
        }];
        for c in nccf.candidates(frame, lags.clone())? {
            let f0 = rate as f64 / c.refined_lag;
            states.push(State {
                log_f0: Some(f0.ln().clamp(ln_min, ln_max)),
                local: 1.0 - c.score + cfg.octave_cost * (c.lag as f64 / min_lag).log2(),
            });
        }
        lattice.push(states);
    }

    let path = viterbi(&lattice, cfg.transition_cost_weight);
    let rms = rms_contour(audio, spec)?;
    let mut values = Vec::with_capacity(n_frames);
    let mut voicing = Vec::with_capacity(n_frames);
    for ((states, &choice), &r) in lattice.iter().zip(&path).zip(rms.values()) {
        match states[choice].log_f0 {
            Some(v) if r >= cfg.voicing_rms_threshold => {
                values.push(v);
                voicing.push(true);
            }
            _ => {
                values.push(0.0);
                voicing.push(false);
            }
        }
    }
    Contour::log_f0(values, voicing, spec, rate)
}

fn transition(a: &State, b: &State, weight: f64) -> f64 {
    match (a.log_f0, b.log_f0) {
        (Some(x), Some(y)) => weight * (x - y).abs(),
        _ => 0.0,
    }
}

/// Minimum-cost path through the candidate lattice; ties go to the lowest
/// state index.
fn viterbi(lattice: &[Vec<State>], weight: f64) -> Vec<usize> {
    if lattice.is_empty() {
        return Vec::new();
    }
    let mut cost: Vec<f64> = lattice[0].iter().map(|s| s.local).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(lattice.len());
    back.push(vec![0; lattice[0].len()]);
    for pair in lattice.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let mut next = Vec::with_capacity(cur.len());
        let mut ptr = Vec::with_capacity(cur.len());
        for s in cur {
            let (best, arg) = prev
                .iter()
                .enumerate()
                .map(|(j, p)| (cost[j] + transition(p, s, weight), j))
                .fold(
                    (f64::INFINITY, 0),
                    |acc, x| if x.0 < acc.0 { x } else { acc },
                );
            next.push(best + s.local);
            ptr.push(arg);
        }
        cost = next;
        back.push(ptr);
    }
    let mut idx = cost
        .iter()
        .enumerate()
        .fold(
            (f64::INFINITY, 0),
            |acc, (j, &c)| if c < acc.0 { (c, j) } else { acc },
        )
        .1;
    let mut path = vec![0; lattice.len()];
    for t in (0..lattice.len()).rev() {
        path[t] = idx;
        idx = back[t][idx];
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn direct_nccf(x: &[f64], lag: usize) -> f64 {
        let n = x.len() - lag;
        let num: f64 = (0..n).map(|i| x[i] * x[i + lag]).sum();
        let e1: f64 = x[..n].iter().map(|v| v * v).sum();
        let e2: f64 = x[lag..].iter().map(|v| v * v).sum();
        num / (e1 * e2).sqrt()
    }

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn fft_scores_match_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..800).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Nccf::new(800).scores(&x);
        for lag in [1, 40, 123, 320, 700] {
            assert!((s[lag] - direct_nccf(&x, lag)).abs() < 1e-10, "lag {lag}");
        }
    }

    #[test]
    fn periodic_frame_peaks_at_period() {
        // 16 kHz / 160 Hz = period of exactly 100 samples.
        let frame = sine(160.0, 800);
        let c = nccf_frame(&frame, 40..=320).unwrap();
        assert!(!c.is_empty() && c.len() <= MAX_CANDIDATES);
        let best = c
            .iter()
            .min_by_key(|c| c.lag)
            .filter(|c| c.score > 0.99)
            .unwrap();
        assert!(best.lag.abs_diff(100) <= 1);
        assert!(c.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn zero_frame_has_no_candidates() {
        assert!(nccf_frame(&[0.0; 800], 40..=320).unwrap().is_empty());
    }

    #[test]
    fn short_frame_is_rejected() {
        assert!(matches!(
            nccf_frame(&[0.1; 320], 40..=320),
            Err(Error::InvalidInput(_))
        ));
        assert!(nccf_frame(&[0.1; 321], 40..=320).is_ok());
    }

    #[test]
    fn noise_scores_stay_low() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let frame: Vec<f64> = (0..800).map(|_| rng.random_range(-1.0..1.0)).collect();
            for c in nccf_frame(&frame, 40..=320).unwrap() {
                assert!(c.score < 0.6, "noise candidate {c:?}");
            }
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let audio = AudioBuffer::new(vec![0.0; 16_000], 16_000).unwrap();
        let c = track_pitch(
            &audio,
            FrameSpec::default_for_rate(16_000),
            &PitchConfig::default(),
        )
        .unwrap();
        assert_eq!(c.len(), 77);
        assert_eq!(c.n_voiced(), 0);
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let audio = AudioBuffer::new(vec![0.0; 16_000], 16_000).unwrap();
        let spec = FrameSpec::default_for_rate(16_000);
        let bad = PitchConfig {
            f0_max_hz: 9000.0,
            ..Default::default()
        };
        assert!(track_pitch(&audio, spec, &bad).is_err());
        let bad = PitchConfig {
            voicing_rms_threshold: 0.0,
            ..Default::default()
        };
        assert!(track_pitch(&audio, spec, &bad).is_err());
    }

    #[test]
    fn viterbi_prefers_smooth_path() {
        let v = |f: f64, local| State {
            log_f0: Some(f),
            local,
        };
        // Middle frame's best local candidate is an octave jump; smoothing
        // must keep the path on the 5.0 track.
        let lattice = vec![
            vec![v(5.0, 0.0)],
            vec![v(5.0 + 2f64.ln(), 0.0), v(5.0, 0.05)],
            vec![v(5.0, 0.0)],
        ];
        assert_eq!(viterbi(&lattice, 0.2), vec![0, 1, 0]);
        assert_eq!(viterbi(&lattice, 0.0), vec![0, 0, 0]);
    }
}

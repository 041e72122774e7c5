use proptest::prelude::*;
use prosody_gs::analysis::{analyze, AnalysisConfig};
use prosody_gs::audio::resample;
use prosody_gs::pitch::{track_pitch, PitchConfig};
use prosody_gs::synth::{harmonic_from_tracks, linear_chirp, silence, tone};
use prosody_gs::{AudioBuffer, FrameSpec};

const RATE: u32 = 16_000;

fn spec() -> FrameSpec {
    FrameSpec::default_for_rate(RATE)
}

fn track(audio: &AudioBuffer) -> prosody_gs::Contour {
    track_pitch(audio, spec(), &PitchConfig::default()).unwrap()
}

/// Largest |log-F0 error| over frames `1..n-1` against `truth(frame)`.
fn interior_error(c: &prosody_gs::Contour, truth: impl Fn(usize) -> f64) -> f64 {
    let voicing = c.voicing().unwrap();
    (1..c.len() - 1)
        .map(|i| {
            assert!(voicing[i], "frame {i} unvoiced");
            (c.values()[i] - truth(i)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn steady_tones_are_tracked_within_two_hundredths() {
    for f in [100.0, 150.0, 220.0, 300.0, 400.0] {
        let c = track(&tone(f, 2.0, 0.5, RATE));
        assert_eq!(c.n_voiced(), c.len(), "{f} Hz");
        let err = interior_error(&c, |_| f64::ln(f));
        assert!(err < 0.02, "{f} Hz: error {err}");
    }
}

#[test]
fn silence_and_sub_threshold_audio_are_unvoiced() {
    assert_eq!(track(&silence(2.0, RATE)).n_voiced(), 0);
    // Peak 0.006 gives frame RMS ~0.0042, under the 5e-3 threshold.
    assert_eq!(track(&tone(200.0, 1.0, 0.006, RATE)).n_voiced(), 0);
}

#[test]
fn harmonic_complex_reports_its_fundamental() {
    for f in [90.0, 150.0, 240.0] {
        let n = 2 * RATE as usize;
        let audio = harmonic_from_tracks(&vec![f; n], &vec![0.4; n], 6, RATE);
        let err = interior_error(&track(&audio), |_| f64::ln(f));
        assert!(err < 0.02, "{f} Hz: error {err}");
    }
}

#[test]
fn linear_chirp_follows_the_instantaneous_frequency() {
    let (f0, f1, dur) = (120.0, 240.0, 2.0);
    let c = track(&linear_chirp(f0, f1, dur, 0.5, RATE));
    let s = spec();
    let err = interior_error(&c, |i| {
        let t = (i * s.hop_len() + s.window_len() / 2) as f64 / RATE as f64;
        (f0 + (f1 - f0) * t / dur).ln()
    });
    assert!(err < 0.03, "error {err}");
}

#[test]
fn pitch_step_is_followed() {
    let a = tone(150.0, 1.0, 0.5, RATE)
        .concat(&tone(200.0, 1.0, 0.5, RATE))
        .unwrap();
    let c = track(&a);
    let s = spec();
    for i in 0..c.len() {
        let start = i * s.hop_len();
        let end = start + s.window_len();
        let truth = if end <= RATE as usize {
            150.0f64
        } else if start >= RATE as usize {
            200.0
        } else {
            continue;
        };
        assert!((c.values()[i] - truth.ln()).abs() < 0.02, "frame {i}");
    }
}

#[test]
fn non_native_sample_rates_are_resampled() {
    let cfg = AnalysisConfig::default();
    for rate in [8_000, 22_050, 44_100] {
        let a = analyze(&tone(220.0, 1.5, 0.5, rate), &cfg).unwrap();
        let err = interior_error(&a.f0, |_| f64::ln(220.0));
        assert!(err < 0.02, "{rate} Hz input: error {err}");
    }
    // Resampling itself keeps the duration.
    let r = resample(&tone(220.0, 1.5, 0.5, 44_100), RATE).unwrap();
    assert_eq!(r.len(), 24_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_tones_are_tracked(f in 70.0f64..390.0, amp in 0.05f64..0.95) {
        let c = track(&tone(f, 0.5, amp, RATE));
        let err = interior_error(&c, |_| f.ln());
        prop_assert!(err < 0.02, "{} Hz: {}", f, err);
    }

    #[test]
    fn gain_does_not_change_the_track(f in 80.0f64..380.0, gain in 0.2f64..5.0) {
        let base = tone(f, 0.5, 0.15, RATE);
        let a = track(&base);
        let b = track(&base.scaled(gain));
        prop_assert_eq!(a.voicing(), b.voicing());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

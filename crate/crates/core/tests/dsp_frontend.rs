use std::f64::consts::PI;

use proptest::prelude::*;
use prosody_gs::audio::{read_wav, resample, write_wav_with, WavEncoding};
use prosody_gs::dsp::{
    hz_to_mel, log_mel, mel_to_hz, rms_contour, scale_log_mel, MelFilterbank, MelSpectrogram, Stft,
};
use prosody_gs::synth::{silence, tone};
use prosody_gs::{AudioBuffer, FrameSpec};

const RATE: u32 = 16_000;

fn nearest(values: &[f64], x: f64) -> usize {
    (0..values.len())
        .min_by(|&a, &b| (values[a] - x).abs().total_cmp(&(values[b] - x).abs()))
        .unwrap()
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len())
        .max_by(|&a, &b| xs[a].total_cmp(&xs[b]))
        .unwrap()
}

#[test]
fn one_second_gives_seventy_seven_frames() {
    let spec = FrameSpec::default_for_rate(RATE);
    assert_eq!((spec.window_len(), spec.hop_len()), (800, 200));
    let audio = tone(200.0, 1.0, 0.5, RATE);
    assert_eq!(rms_contour(&audio, spec).unwrap().len(), 77);
    assert_eq!(log_mel(&audio, spec, 80).unwrap().n_frames(), 77);
}

#[test]
fn sine_rms_is_amplitude_over_root_two() {
    // 200 Hz fits exactly 10 periods in a 50 ms window.
    let c = rms_contour(
        &tone(200.0, 1.0, 0.3, RATE),
        FrameSpec::default_for_rate(RATE),
    )
    .unwrap();
    for v in c.values() {
        assert!((v - 0.3 / 2f64.sqrt()).abs() < 1e-12, "{v}");
    }
}

#[test]
fn tone_energy_peaks_in_the_nearest_mel_band() {
    let spec = FrameSpec::default_for_rate(RATE);
    let bank = MelFilterbank::new(80, 1024, RATE).unwrap();
    let centres = bank.center_frequencies();
    for f in [250.0, 700.0, 1500.0, 3100.0, 6000.0] {
        let mel = log_mel(&tone(f, 0.5, 0.5, RATE), spec, 80).unwrap();
        let band = argmax(mel.frame(mel.n_frames() / 2));
        let expect = nearest(&centres, f);
        assert!(
            band.abs_diff(expect) <= 1,
            "{f} Hz: band {band}, nearest centre {expect}"
        );
    }
}

#[test]
fn resampled_tone_keeps_its_spectral_peak() {
    let r = resample(&tone(1000.0, 0.5, 0.5, 44_100), RATE).unwrap();
    let stft = Stft::new(800);
    let mags = stft.magnitudes(&r.samples()[2000..2800]);
    let bin_hz = RATE as f64 / stft.n_fft() as f64;
    let peak = argmax(&mags) as f64 * bin_hz;
    assert!((peak - 1000.0).abs() <= bin_hz, "peak at {peak} Hz");
}

#[test]
fn downsampling_rejects_content_above_the_new_nyquist() {
    // 5 kHz passes 44.1 -> 16 kHz intact; 12 kHz must be filtered out, not
    // aliased down to 4 kHz.
    let kept = resample(&tone(5_000.0, 0.5, 0.5, 44_100), RATE).unwrap();
    let gone = resample(&tone(12_000.0, 0.5, 0.5, 44_100), RATE).unwrap();
    let rms = |a: &AudioBuffer| {
        let s = &a.samples()[500..a.len() - 500];
        (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt()
    };
    assert!(
        (rms(&kept) - 0.5 / 2f64.sqrt()).abs() < 0.01,
        "passband rms {}",
        rms(&kept)
    );
    assert!(rms(&gone) < 0.01, "stopband rms {}", rms(&gone));
}

#[test]
fn silence_is_the_range_floor() {
    let mel = log_mel(&silence(1.0, RATE), FrameSpec::default_for_rate(RATE), 80).unwrap();
    assert!(mel.as_slice().iter().all(|&v| v == -4.0));
}

#[test]
fn mel_csv_round_trips() {
    let mel = log_mel(
        &tone(300.0, 0.3, 0.2, RATE),
        FrameSpec::default_for_rate(RATE),
        40,
    )
    .unwrap();
    let back = MelSpectrogram::from_csv(&mel.to_csv()).unwrap();
    assert_eq!(back, mel);
    assert!(MelSpectrogram::from_csv("0,1\n2\n").is_err());
    assert!(MelSpectrogram::from_csv("5.0\n").is_err());
}

#[test]
fn wav_encodings_round_trip_within_their_precision() {
    let dir = tempfile::tempdir().unwrap();
    let audio = tone(220.0, 0.2, 0.5, 22_050);
    for (enc, tol) in [
        (WavEncoding::Int16, 1.0 / 32768.0),
        (WavEncoding::Int24, 1.0 / 8_388_608.0),
        (WavEncoding::Float32, 1e-7),
    ] {
        let path = dir.path().join(format!("{enc:?}.wav"));
        write_wav_with(&path, &audio, enc).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz(), 22_050);
        assert_eq!(back.len(), audio.len());
        for (a, b) in audio.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= tol, "{enc:?}: {a} vs {b}");
        }
    }
}

#[test]
fn sine_phase_does_not_matter_for_rms() {
    let spec = FrameSpec::default_for_rate(RATE);
    let shifted: Vec<f64> = (0..RATE as usize)
        .map(|i| 0.3 * (2.0 * PI * 200.0 * i as f64 / RATE as f64 + 1.1).sin())
        .collect();
    let c = rms_contour(&AudioBuffer::new(shifted, RATE).unwrap(), spec).unwrap();
    assert!(c
        .values()
        .iter()
        .all(|v| (v - 0.3 / 2f64.sqrt()).abs() < 1e-12));
}

proptest! {
    #[test]
    fn frame_count_formula(n in 0usize..5000, w in 1usize..600, h_frac in 0.0f64..1.0) {
        let h = 1 + (h_frac * (w - 1) as f64) as usize;
        let spec = FrameSpec::new(w, h).unwrap();
        let audio = AudioBuffer::new(vec![0.1; n], RATE).unwrap();
        match rms_contour(&audio, spec) {
            Ok(c) => {
                prop_assert!(n >= w);
                prop_assert_eq!(c.len(), 1 + (n - w) / h);
            }
            Err(_) => prop_assert!(n < w),
        }
    }

    #[test]
    fn scaled_log_mel_is_bounded_and_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (x, y) = (scale_log_mel(a), scale_log_mel(b));
        prop_assert!((-4.0..=4.0).contains(&x));
        if a <= b {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn mel_scale_inverts(hz in 0.0f64..8000.0) {
        prop_assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
    }

    #[test]
    fn rms_scales_with_gain(gain in 0.0f64..10.0, f in 60.0f64..3000.0) {
        let spec = FrameSpec::default_for_rate(RATE);
        let base = tone(f, 0.2, 0.1, RATE);
        let a = rms_contour(&base, spec).unwrap();
        let b = rms_contour(&base.scaled(gain), spec).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x * gain - y).abs() < 1e-12);
        }
    }
}

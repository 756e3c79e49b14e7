//! Per-video-frame F0 targets by normalized autocorrelation.

use crate::types::{AudioClip, PitchContour, SAMPLES_PER_FRAME};

pub const PITCH_WINDOW: usize = 400;
pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 400.0;
const VOICING_THRESHOLD: f64 = 0.5;
const SILENCE_RMS: f64 = 1e-3;
/// A shorter-lag peak wins when it reaches this share of the best one.
const OCTAVE_RATIO: f64 = 0.9;

fn normalized_ac(w: &[f64], lag: usize) -> f64 {
    let (a, b) = (&w[..w.len() - lag], &w[lag..]);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa <= 0.0 || bb <= 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}

/// F0 of one analysis window, or 0 when unvoiced.
fn window_f0(w: &[f64], sample_rate: f64) -> f64 {
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    if rms < SILENCE_RMS {
        return 0.0;
    }
    let min_lag = (sample_rate / F0_MAX_HZ).floor() as usize;
    let max_lag = ((sample_rate / F0_MIN_HZ).ceil() as usize).min(w.len() - 2);
    if min_lag + 2 > max_lag {
        return 0.0;
    }
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|lag| normalized_ac(w, lag)).collect();
    let at = |lag: usize| r[lag + 1 - min_lag];
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| at(l) >= at(l - 1) && at(l) >= at(l + 1))
        .collect();
    let best = peaks.iter().map(|&l| at(l)).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= VOICING_THRESHOLD) {
        return 0.0;
    }
    let lag = *peaks
        .iter()
        .find(|&&l| at(l) >= OCTAVE_RATIO * best)
        .expect("the best peak qualifies");
    let (y0, y1, y2) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = sample_rate / (lag as f64 + shift);
    if (F0_MIN_HZ..=F0_MAX_HZ).contains(&f0) {
        f0
    } else {
        0.0
    }
}

/// One F0 value per video frame from a 25 ms window centered on the frame;
/// unvoiced, silent or out-of-range frames are 0.
pub fn extract_pitch(audio: &AudioClip, frames: usize) -> PitchContour {
    let x = audio.samples();
    let sr = audio.sample_rate() as f64;
    let half = PITCH_WINDOW as i64 / 2;
    let f0 = (0..frames)
        .map(|i| {
            let center = (i * SAMPLES_PER_FRAME + SAMPLES_PER_FRAME / 2) as i64;
            let w: Vec<f64> = (center - half..center + half)
                .map(|n| {
                    usize::try_from(n)
                        .ok()
                        .and_then(|n| x.get(n))
                        .map_or(0.0, |v| *v as f64)
                })
                .collect();
            window_f0(&w, sr) as f32
        })
        .collect();
    PitchContour::new(f0).expect("estimates are finite and nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SAMPLE_RATE;
    use std::f64::consts::PI;

    fn tone(hz: f64, frames: usize, harmonics: usize) -> AudioClip {
        let n = frames * SAMPLES_PER_FRAME;
        let s = (0..n)
            .map(|i| {
                let ph = 2.0 * PI * hz * i as f64 / SAMPLE_RATE as f64;
                let v: f64 = (1..=harmonics).map(|h| (h as f64 * ph).sin() / h as f64).sum();
                (0.3 * v) as f32
            })
            .collect();
        AudioClip::new(SAMPLE_RATE, s).unwrap()
    }

    #[test]
    fn pure_tone_is_recovered() {
        let p = extract_pitch(&tone(220.0, 50, 1), 50);
        assert_eq!(p.len(), 50);
        for f in &p.f0()[2..48] {
            assert!((*f - 220.0).abs() < 2.0, "{f}");
        }
    }

    #[test]
    fn harmonic_tone_avoids_octave_errors() {
        for hz in [90.0, 130.0, 180.0, 310.0] {
            let p = extract_pitch(&tone(hz, 30, 6), 30);
            for f in &p.f0()[2..28] {
                assert!((*f as f64 - hz).abs() < 0.02 * hz, "{hz}: {f}");
            }
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let a = AudioClip::new(SAMPLE_RATE, vec![0.0; 20 * SAMPLES_PER_FRAME]).unwrap();
        assert!(extract_pitch(&a, 20).f0().iter().all(|f| *f == 0.0));
        let empty = AudioClip::new(SAMPLE_RATE, vec![]);
        if let Ok(e) = empty {
            assert_eq!(extract_pitch(&e, 4).f0(), &[0.0; 4]);
        }
    }
}

//! Synthetic corpus builder: a reproducible population of participants, each
//! with its own piecewise-linear heart-rate trajectory and noise realization.

use anyhow::Result;
use pulsekd_core::data::{synth_ppg, PpgRecording};
use pulsekd_core::rng;

use crate::config::DataSection;

/// Stream tag separating corpus randomness from model/split/training streams.
const CORPUS_STREAM: u64 = 0x636f_7270_7573; // "corpus"

/// Generates `participants` recordings from one seed. Each participant draws
/// a heart-rate profile (control points uniform in `[hr_min, hr_max)`) and a
/// private signal seed from a single corpus-level generator, so the corpus is
/// a pure function of `(section, seed)`.
pub fn synth_corpus(section: &DataSection, seed: u64) -> Result<Vec<PpgRecording>> {
    let mut r = rng::derived(seed, CORPUS_STREAM);
    let mut out = Vec::with_capacity(section.participants);
    for i in 0..section.participants {
        let id = format!("synth{i:03}");
        let points = section.control_points;
        let profile: Vec<(f64, f64)> = (0..points)
            .map(|j| {
                let t = if points == 1 {
                    0.0
                } else {
                    section.duration_s * j as f64 / (points - 1) as f64
                };
                (t, rng::uniform(&mut r, section.hr_min, section.hr_max))
            })
            .collect();
        let signal_seed: u64 = rng::uniform(&mut r, 0, u64::MAX);
        out.push(synth_ppg(
            &id,
            &profile,
            section.duration_s,
            section.sample_rate_hz,
            section.noise_level,
            section.label_jitter_bpm,
            signal_seed,
        )?);
    }
    Ok(out)
}

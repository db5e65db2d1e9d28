//! PPG data pipeline: recordings, resampling, windowing, HR binning,
//! synthetic signal generation, and participant-independent splits.
//!
//! The pipeline normalizes every recording to 25 Hz, cuts 8-second windows
//! (200 samples) at a 2-second stride (50 samples), z-scores each window
//! independently, and labels it with the mean of the ground-truth heart-rate
//! series over the window's time span. Labels are discretized into 180
//! one-BPM bins covering [30, 210).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor;

/// Target sample rate of the pipeline, in Hz.
pub const PIPELINE_HZ: f64 = 25.0;
/// Window length in seconds.
pub const WINDOW_S: f64 = 8.0;
/// Window stride in seconds.
pub const STRIDE_S: f64 = 2.0;
/// Window length in samples at [`PIPELINE_HZ`].
pub const WINDOW_SAMPLES: usize = 200;
/// Window stride in samples at [`PIPELINE_HZ`].
pub const STRIDE_SAMPLES: usize = 50;
/// Lowest representable heart rate (inclusive), BPM.
pub const HR_MIN_BPM: f64 = 30.0;
/// Number of one-BPM heart-rate bins.
pub const NUM_BINS: usize = 180;

/// One participant's raw green-channel PPG trace with aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgRecording {
    pub participant_id: String,
    /// Raw samples at `sample_rate_hz`.
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// `(time_s, bpm)` ground-truth points, nondecreasing in time.
    pub hr_series: Vec<(f64, f64)>,
}

impl PpgRecording {
    pub fn validate(&self) -> Result<()> {
        if self.participant_id.is_empty() {
            return Err(Error::InvalidConfig("empty participant_id".into()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("ppg samples"));
        }
        let mut last = f64::NEG_INFINITY;
        for &(t, bpm) in &self.hr_series {
            if !t.is_finite() || !bpm.is_finite() || bpm <= 0.0 || bpm >= 300.0 {
                return Err(Error::NonFiniteInput("hr series"));
            }
            if t < last {
                return Err(Error::InvalidConfig(
                    "hr series times must be nondecreasing".into(),
                ));
            }
            last = t;
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One training example: a z-scored 8-second window and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    pub participant_id: String,
    /// `[1, 200]` z-scored window.
    pub window: Tensor,
    /// Mean ground-truth heart rate over the window's span.
    pub hr_bpm: f64,
    /// `clamp(floor(hr_bpm) − 30, 0, 179)`.
    pub class_bin: usize,
}

/// Resamples `signal` from `src_hz` to `dst_hz`.
///
/// Downsampling first applies a linear-phase windowed-sinc low-pass filter
/// (127 taps, Hamming window, cutoff at 0.45·dst_hz, edge-replicated padding,
/// unit DC gain) and then linearly interpolates at the new rate; upsampling
/// interpolates directly. Output length is `round(len · dst_hz / src_hz)`.
/// Equal rates return the input unchanged.
pub fn resample(signal: &[f64], src_hz: f64, dst_hz: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(src_hz.is_finite() && src_hz > 0.0 && dst_hz.is_finite() && dst_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sample rates must be positive, got {src_hz} -> {dst_hz}"
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("signal"));
    }
    if src_hz == dst_hz {
        return Ok(signal.to_vec());
    }
    let filtered: Vec<f64> = if dst_hz < src_hz {
        low_pass(signal, 0.45 * dst_hz / src_hz)
    } else {
        signal.to_vec()
    };
    let out_len = math::round(signal.len() as f64 * dst_hz / src_hz) as usize;
    let out_len = out_len.max(1);
    let step = src_hz / dst_hz;
    let last = filtered.len() - 1;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * step;
        let lo = math::floor(pos) as usize;
        if lo >= last {
            out.push(filtered[last]);
        } else {
            let frac = pos - lo as f64;
            out.push(filtered[lo] * (1.0 - frac) + filtered[lo + 1] * frac);
        }
    }
    Ok(out)
}

/// Zero-delay FIR low-pass: 127-tap Hamming-windowed sinc at normalized
/// cutoff `fc` (cycles per input sample), edge-replicated padding, taps
/// normalized to unit sum so constants pass through exactly.
fn low_pass(signal: &[f64], fc: f64) -> Vec<f64> {
    const TAPS: usize = 127;
    const M: isize = (TAPS as isize - 1) / 2;
    let mut h = [0.0f64; TAPS];
    let mut sum = 0.0;
    for (n, tap) in h.iter_mut().enumerate() {
        let k = n as isize - M;
        let sinc = if k == 0 {
            2.0 * fc
        } else {
            let x = core::f64::consts::PI * k as f64;
            math::sin(2.0 * fc * x) / x
        };
        let window = 0.54 - 0.46 * math::cos(2.0 * core::f64::consts::PI * n as f64 / (TAPS - 1) as f64);
        *tap = sinc * window;
        sum += *tap;
    }
    for tap in h.iter_mut() {
        *tap /= sum;
    }
    let n = signal.len();
    let clamped = |i: isize| -> f64 {
        let i = i.clamp(0, n as isize - 1);
        signal[i as usize]
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        let mut acc = 0.0;
        for (t, &tap) in h.iter().enumerate() {
            acc += tap * clamped(i + t as isize - M);
        }
        out.push(acc);
    }
    out
}

/// Discretizes a heart rate into its class bin:
/// `clamp(floor(bpm) − 30, 0, 179)`.
pub fn bin_hr(bpm: f64) -> Result<usize> {
    if !(bpm.is_finite() && bpm > 0.0) {
        return Err(Error::NonFiniteInput("heart rate"));
    }
    let idx = math::floor(bpm) as i64 - HR_MIN_BPM as i64;
    Ok(idx.clamp(0, NUM_BINS as i64 - 1) as usize)
}

/// Representative heart rate of bin `i`: the bin center `30.5 + i`.
pub fn bin_to_bpm(bin: usize) -> Result<f64> {
    if bin >= NUM_BINS {
        return Err(Error::LabelOutOfRange {
            label: bin,
            num_classes: NUM_BINS,
        });
    }
    Ok(HR_MIN_BPM + 0.5 + bin as f64)
}

/// Cuts a 25 Hz recording into z-scored, labeled windows.
///
/// The recording must already be at [`PIPELINE_HZ`] (callers run [`resample`]
/// first). Windows with zero variance or with no ground-truth point inside
/// their `[start, start+8s)` span are dropped.
pub fn window(rec: &PpgRecording) -> Result<Vec<WindowedSample>> {
    rec.validate()?;
    if (rec.sample_rate_hz - PIPELINE_HZ).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "windowing expects a {PIPELINE_HZ} Hz recording, got {} Hz",
            rec.sample_rate_hz
        )));
    }
    let n = rec.samples.len();
    if n < WINDOW_SAMPLES {
        return Ok(Vec::new());
    }
    let count = (n - WINDOW_SAMPLES) / STRIDE_SAMPLES + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * STRIDE_SAMPLES;
        let slice = &rec.samples[start..start + WINDOW_SAMPLES];
        let mean = slice.iter().sum::<f64>() / WINDOW_SAMPLES as f64;
        let var = slice
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / WINDOW_SAMPLES as f64;
        if var <= 0.0 {
            continue; // constant window carries no pulse information
        }
        let inv_std = 1.0 / math::sqrt(var);
        let t0 = start as f64 / PIPELINE_HZ;
        let t1 = t0 + WINDOW_S;
        let mut hr_sum = 0.0;
        let mut hr_n = 0usize;
        for &(t, bpm) in &rec.hr_series {
            if t >= t0 && t < t1 {
                hr_sum += bpm;
                hr_n += 1;
            }
        }
        if hr_n == 0 {
            continue; // no ground truth covers this span
        }
        let hr_bpm = hr_sum / hr_n as f64;
        let data: Vec<f64> = slice.iter().map(|v| (v - mean) * inv_std).collect();
        out.push(WindowedSample {
            participant_id: rec.participant_id.clone(),
            window: Tensor::from_vec(&[1, WINDOW_SAMPLES], data)?,
            hr_bpm,
            class_bin: bin_hr(hr_bpm)?,
        });
    }
    Ok(out)
}

/// Number of full windows a 25 Hz signal of `n` samples yields (before any
/// variance/label drops): `(n − 200)/50 + 1` for `n ≥ 200`, else 0.
pub fn max_window_count(n: usize) -> usize {
    if n < WINDOW_SAMPLES {
        0
    } else {
        (n - WINDOW_SAMPLES) / STRIDE_SAMPLES + 1
    }
}

/// Piecewise-linear heart-rate profile evaluation with edge hold.
fn profile_bpm(profile: &[(f64, f64)], t: f64) -> f64 {
    if t <= profile[0].0 {
        return profile[0].1;
    }
    let last = profile[profile.len() - 1];
    if t >= last.0 {
        return last.1;
    }
    for pair in profile.windows(2) {
        let (t0, b0) = pair[0];
        let (t1, b1) = pair[1];
        if t >= t0 && t <= t1 {
            let f = (t - t0) / (t1 - t0);
            return b0 * (1.0 - f) + b1 * f;
        }
    }
    last.1
}

/// Generates a synthetic PPG recording whose instantaneous fundamental tracks
/// the given heart-rate profile.
///
/// The signal integrates phase `φ' = 2π·bpm(t)/60`, emitting the fundamental
/// plus second and third harmonics whose relative amplitudes and phase
/// offsets are drawn per recording (pulse morphology differs between wearers,
/// so waveform shape is not a stable proxy for rate across participants),
/// under a slow respiratory-style amplitude modulation, plus baseline wander
/// below 0.1 Hz and white Gaussian noise scaled by `noise_level`. Ground
/// truth is sampled at 1 Hz. Identical arguments yield identical recordings.
///
/// `hr_profile` is `(time_s, bpm)` control points (strictly increasing time,
/// BPM within (30, 210)); `sample_rate_hz` is the raw generation rate.
///
/// `label_jitter_bpm` adds slow (15–50 s period) zero-mean error to the
/// *reported* ground-truth series only — the waveform always tracks the true
/// profile — imitating the reference-monitor error real corpora carry. The
/// reported series stays clamped inside the valid BPM range, and a given seed
/// produces the identical waveform at every jitter scale.
pub fn synth_ppg(
    participant_id: &str,
    hr_profile: &[(f64, f64)],
    duration_s: f64,
    sample_rate_hz: f64,
    noise_level: f64,
    label_jitter_bpm: f64,
    seed: u64,
) -> Result<PpgRecording> {
    if hr_profile.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if !(noise_level.is_finite() && noise_level >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise level must be non-negative, got {noise_level}"
        )));
    }
    if !(label_jitter_bpm.is_finite() && label_jitter_bpm >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "label jitter must be non-negative, got {label_jitter_bpm}"
        )));
    }
    let mut last_t = f64::NEG_INFINITY;
    for &(t, bpm) in hr_profile {
        if !t.is_finite() || t <= last_t {
            return Err(Error::InvalidConfig(
                "hr profile times must be finite and strictly increasing".into(),
            ));
        }
        if !(bpm > HR_MIN_BPM && bpm < HR_MIN_BPM + NUM_BINS as f64) {
            return Err(Error::InvalidConfig(format!(
                "hr profile must stay within (30, 210) BPM, got {bpm}"
            )));
        }
        last_t = t;
    }
    // same count convention as `resample`: round, don't truncate
    let n = math::round(duration_s * sample_rate_hz) as usize;
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut r = rng::derived(seed, 0x73796e7468); // synth stream
    // seeded slow drift: two components, both below 0.1 Hz
    let wander_f1 = rng::uniform(&mut r, 0.03, 0.06);
    let wander_f2 = rng::uniform(&mut r, 0.06, 0.095);
    let wander_p1 = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    let wander_p2 = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    // per-recording pulse morphology: harmonic mix and phase offsets vary
    // between wearers, so local waveform shape does not determine rate
    let h2_amp = rng::uniform(&mut r, 0.15, 0.6);
    let h3_amp = rng::uniform(&mut r, 0.05, 0.35);
    let h2_phase = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    let h3_phase = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    // respiratory-style amplitude modulation (slow multiplicative envelope)
    let am_depth = rng::uniform(&mut r, 0.15, 0.45);
    let am_freq = rng::uniform(&mut r, 0.15, 0.4);
    let am_phase = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    // reference-monitor error: slow drift applied to the reported truth only;
    // drawn unconditionally so the waveform is jitter-scale-invariant
    let lj_f1 = rng::uniform(&mut r, 0.02, 0.045);
    let lj_f2 = rng::uniform(&mut r, 0.045, 0.07);
    let lj_p1 = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    let lj_p2 = rng::uniform(&mut r, 0.0, core::f64::consts::TAU);
    let dt = 1.0 / sample_rate_hz;
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let bpm = profile_bpm(hr_profile, t);
        phase += core::f64::consts::TAU * (bpm / 60.0) * dt;
        if phase > core::f64::consts::TAU {
            phase -= core::f64::consts::TAU; // keep sin() arguments small
        }
        let shape = math::sin(phase)
            + h2_amp * math::sin(2.0 * phase + h2_phase)
            + h3_amp * math::sin(3.0 * phase + h3_phase);
        let envelope = 1.0 + am_depth * math::sin(core::f64::consts::TAU * am_freq * t + am_phase);
        let pulse = envelope * shape;
        let wander = 0.25 * math::sin(core::f64::consts::TAU * wander_f1 * t + wander_p1)
            + 0.15 * math::sin(core::f64::consts::TAU * wander_f2 * t + wander_p2);
        let noise = if noise_level > 0.0 {
            noise_level * rng::normal(&mut r, 0.0, 1.0)
        } else {
            0.0
        };
        samples.push(pulse + wander + noise);
    }
    let hr_series: Vec<(f64, f64)> = (0..math::ceil(duration_s) as usize)
        .map(|s| {
            let t = s as f64;
            let jitter = label_jitter_bpm
                * 0.707
                * (math::sin(core::f64::consts::TAU * lj_f1 * t + lj_p1)
                    + math::sin(core::f64::consts::TAU * lj_f2 * t + lj_p2));
            let reported = (profile_bpm(hr_profile, t) + jitter).clamp(31.0, 209.0);
            (t, reported)
        })
        .collect();
    let rec = PpgRecording {
        participant_id: participant_id.to_string(),
        samples,
        sample_rate_hz,
        hr_series,
    };
    rec.validate()?;
    Ok(rec)
}

/// A participant-level train/test assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Which cross-validation fold this plan realizes (0 or 1).
    pub fold: usize,
    pub seed: u64,
}

/// Number of cross-validation folds supported by [`split_participants`].
pub const NUM_FOLDS: usize = 2;

/// Splits participant ids into disjoint train/test sets at the participant
/// level (no participant ever appears on both sides).
///
/// Ids are shuffled once by `seed`; fold `k` takes the `k`-th chunk of
/// `round((1 − train_fraction)·N)` ids as its test set, so the two folds'
/// test sets never overlap.
pub fn split_participants(
    ids: &[String],
    train_fraction: f64,
    fold: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if fold >= NUM_FOLDS {
        return Err(Error::InvalidConfig(format!(
            "fold must be 0 or 1, got {fold}"
        )));
    }
    let n = ids.len();
    {
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(Error::InvalidConfig("duplicate participant id".into()));
        }
    }
    let test_size = math::round(n as f64 * (1.0 - train_fraction)) as usize;
    let test_size = test_size.max(1);
    if NUM_FOLDS * test_size > n {
        return Err(Error::InsufficientData {
            needed: NUM_FOLDS * test_size,
            got: n,
        });
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut r = rng::derived(seed, 0x73706c6974); // split stream
    rng::shuffle(&mut r, &mut shuffled);
    let test: Vec<String> = shuffled[fold * test_size..(fold + 1) * test_size].to_vec();
    let train: Vec<String> = shuffled
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < fold * test_size || *i >= (fold + 1) * test_size)
        .map(|(_, id)| id.clone())
        .collect();
    Ok(SplitPlan {
        train,
        test,
        fold,
        seed,
    })
}

/// Serializes a recording in the line-oriented interchange format:
///
/// ```text
/// participant_id,<id>
/// sample_rate_hz,<float>
/// ppg,<comma-separated floats>
/// hr,<comma-separated time:bpm pairs>
/// ```
///
/// Floats print in shortest round-trip form, so
/// [`parse_recording`] reproduces the exact values.
pub fn format_recording(rec: &PpgRecording) -> String {
    let mut out = String::new();
    out.push_str("participant_id,");
    out.push_str(&rec.participant_id);
    out.push('\n');
    out.push_str("sample_rate_hz,");
    out.push_str(&rec.sample_rate_hz.to_string());
    out.push('\n');
    out.push_str("ppg");
    for v in &rec.samples {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out.push('\n');
    out.push_str("hr");
    for (t, bpm) in &rec.hr_series {
        out.push(',');
        out.push_str(&t.to_string());
        out.push(':');
        out.push_str(&bpm.to_string());
    }
    out.push('\n');
    out
}

/// Parses the interchange format written by [`format_recording`], validating
/// structure line by line.
pub fn parse_recording(text: &str) -> Result<PpgRecording> {
    let mut lines = text.lines();
    let id_line = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing participant_id line".into(),
    })?;
    let participant_id = id_line
        .strip_prefix("participant_id,")
        .ok_or(Error::Parse {
            line: 1,
            message: format!("expected 'participant_id,<id>', got '{id_line}'"),
        })?
        .trim()
        .to_string();
    let rate_line = lines.next().ok_or(Error::Parse {
        line: 2,
        message: "missing sample_rate_hz line".into(),
    })?;
    let rate_str = rate_line.strip_prefix("sample_rate_hz,").ok_or(Error::Parse {
        line: 2,
        message: format!("expected 'sample_rate_hz,<float>', got '{rate_line}'"),
    })?;
    let sample_rate_hz: f64 = rate_str.trim().parse().map_err(|_| Error::Parse {
        line: 2,
        message: format!("invalid sample rate '{rate_str}'"),
    })?;
    let ppg_line = lines.next().ok_or(Error::Parse {
        line: 3,
        message: "missing ppg line".into(),
    })?;
    let ppg_body = ppg_line.strip_prefix("ppg").ok_or(Error::Parse {
        line: 3,
        message: format!("expected 'ppg,<floats>', got start '{ppg_line:.20}'"),
    })?;
    let mut samples = Vec::new();
    for (i, tok) in ppg_body.split(',').skip(1).enumerate() {
        let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
            line: 3,
            message: format!("invalid ppg sample #{i}: '{tok}'"),
        })?;
        samples.push(v);
    }
    let hr_line = lines.next().ok_or(Error::Parse {
        line: 4,
        message: "missing hr line".into(),
    })?;
    let hr_body = hr_line.strip_prefix("hr").ok_or(Error::Parse {
        line: 4,
        message: format!("expected 'hr,<time:bpm pairs>', got start '{hr_line:.20}'"),
    })?;
    let mut hr_series = Vec::new();
    for (i, tok) in hr_body.split(',').skip(1).enumerate() {
        let (t_str, bpm_str) = tok.split_once(':').ok_or(Error::Parse {
            line: 4,
            message: format!("hr pair #{i} is not 'time:bpm': '{tok}'"),
        })?;
        let t: f64 = t_str.trim().parse().map_err(|_| Error::Parse {
            line: 4,
            message: format!("invalid hr time '{t_str}'"),
        })?;
        let bpm: f64 = bpm_str.trim().parse().map_err(|_| Error::Parse {
            line: 4,
            message: format!("invalid hr bpm '{bpm_str}'"),
        })?;
        hr_series.push((t, bpm));
    }
    for (extra, l) in lines.enumerate() {
        if !l.trim().is_empty() {
            return Err(Error::Parse {
                line: 5 + extra,
                message: "unexpected content after hr line".into(),
            });
        }
    }
    let rec = PpgRecording {
        participant_id,
        samples,
        sample_rate_hz,
        hr_series,
    };
    rec.validate()?;
    Ok(rec)
}

/// Full pipeline for one recording: resample to 25 Hz, then window.
pub fn prepare_recording(rec: &PpgRecording) -> Result<Vec<WindowedSample>> {
    rec.validate()?;
    let samples = resample(&rec.samples, rec.sample_rate_hz, PIPELINE_HZ)?;
    let at_rate = PpgRecording {
        participant_id: rec.participant_id.clone(),
        samples,
        sample_rate_hz: PIPELINE_HZ,
        hr_series: rec.hr_series.clone(),
    };
    window(&at_rate)
}

//! Binary checkpoint container for training state.
//!
//! Layout: a fixed preamble (`PKDC` magic, u32 LE format version, u64 LE
//! header length), a JSON header describing the model spec and every tensor's
//! name and shape, then the tensor payloads as little-endian f64 runs in
//! header order: model parameters, batchnorm running statistics, Adam first
//! moments, Adam second moments, and — when the run trains a feature
//! projector — its weight, bias, and Adam moments.
//!
//! Loading rebuilds the model from the spec and overwrites its tensors,
//! verifying each name and shape against the freshly built structure, so a
//! checkpoint produced by a different architecture (or a truncated file)
//! fails loudly instead of yielding a silently corrupt model.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use pulsekd_core::adam::AdamState;
use pulsekd_core::distill::Projector;
use pulsekd_core::model::{Model, ModelSpec};
use pulsekd_core::tensor::Tensor;
use pulsekd_core::train::TrainState;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"PKDC";
const VERSION: u32 = 1;

/// Adam hyperparameters and step counter, enough to resume bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamMeta {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl AdamMeta {
    fn of(state: &AdamState) -> Self {
        AdamMeta {
            beta1: state.beta1,
            beta2: state.beta2,
            eps: state.eps,
            step: state.step_count(),
        }
    }
}

/// Projector dimensions and optimizer metadata, present only for runs that
/// train a feature projector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectorMeta {
    pub student_dim: usize,
    pub teacher_dim: usize,
    pub adam: AdamMeta,
}

/// JSON header stored ahead of the tensor payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub completed_epochs: usize,
    pub adam: AdamMeta,
    /// Named parameter tensors in payload order.
    pub params: Vec<(String, Vec<usize>)>,
    /// Named running-statistic tensors in payload order.
    pub running_stats: Vec<(String, Vec<usize>)>,
    #[serde(default)]
    pub projector: Option<ProjectorMeta>,
}

impl CheckpointHeader {
    /// Total trainable parameters recorded in the header.
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }
}

fn write_tensor(out: &mut impl Write, t: &Tensor) -> Result<()> {
    for &x in t.data() {
        out.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_into(inp: &mut impl Read, t: &mut Tensor, what: &str) -> Result<()> {
    for slot in t.data_mut() {
        *slot = inp
            .read_f64::<LittleEndian>()
            .with_context(|| format!("checkpoint truncated while reading {what}"))?;
    }
    Ok(())
}

/// Serializes the full training state to `path`, writing through a temporary
/// sibling file and renaming so a crash never leaves a half-written
/// checkpoint at the destination.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        spec: state.model.spec().clone(),
        completed_epochs: state.completed_epochs,
        adam: AdamMeta::of(&state.adam),
        params: state
            .model
            .named_params()
            .iter()
            .map(|(name, t)| (name.clone(), t.shape().to_vec()))
            .collect(),
        running_stats: state
            .model
            .named_running_stats()
            .iter()
            .map(|(name, t)| (name.clone(), t.shape().to_vec()))
            .collect(),
        projector: state.projector.as_ref().map(|p| ProjectorMeta {
            student_dim: p.student_dim(),
            teacher_dim: p.teacher_dim(),
            adam: AdamMeta::of(
                state
                    .projector_adam
                    .as_ref()
                    .expect("projector always trains with its own optimizer state"),
            ),
        }),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut buf: Vec<u8> = Vec::new();
    buf.write_all(MAGIC)?;
    buf.write_u32::<LittleEndian>(VERSION)?;
    buf.write_u64::<LittleEndian>(header_json.len() as u64)?;
    buf.write_all(&header_json)?;

    for (_, t) in state.model.named_params() {
        write_tensor(&mut buf, t)?;
    }
    for (_, t) in state.model.named_running_stats() {
        write_tensor(&mut buf, t)?;
    }
    let (m, v) = state.adam.moments();
    for t in m {
        write_tensor(&mut buf, t)?;
    }
    for t in v {
        write_tensor(&mut buf, t)?;
    }
    if let Some(proj) = &state.projector {
        write_tensor(&mut buf, &proj.linear.weight)?;
        write_tensor(&mut buf, &proj.linear.bias)?;
        let pa = state
            .projector_adam
            .as_ref()
            .expect("projector always trains with its own optimizer state");
        let (pm, pv) = pa.moments();
        for t in pm.iter().chain(pv.iter()) {
            write_tensor(&mut buf, t)?;
        }
    }

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &buf).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("moving checkpoint into place at {}", path.display()))?;
    Ok(())
}

fn read_preamble(inp: &mut impl Read, path: &Path) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 4];
    inp.read_exact(&mut magic)
        .with_context(|| format!("reading {}", path.display()))?;
    if &magic != MAGIC {
        bail!("{} is not a checkpoint (bad magic)", path.display());
    }
    let version = inp.read_u32::<LittleEndian>()?;
    if version != VERSION {
        bail!(
            "{} uses checkpoint format v{version}; this build reads v{VERSION}",
            path.display()
        );
    }
    let header_len = inp.read_u64::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    inp.read_exact(&mut header_bytes)
        .with_context(|| format!("checkpoint header truncated in {}", path.display()))?;
    serde_json::from_slice(&header_bytes)
        .with_context(|| format!("parsing checkpoint header of {}", path.display()))
}

/// Reads only the header — cheap metadata access for inspection without
/// deserializing tensor payloads.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let mut file =
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_preamble(&mut file, path)
}

fn check_names(
    kind: &str,
    expected: &[(String, &Tensor)],
    recorded: &[(String, Vec<usize>)],
    path: &Path,
) -> Result<()> {
    if expected.len() != recorded.len() {
        bail!(
            "{}: checkpoint lists {} {kind} tensors but the rebuilt model has {}",
            path.display(),
            recorded.len(),
            expected.len()
        );
    }
    for ((want_name, want), (got_name, got_shape)) in expected.iter().zip(recorded) {
        if want_name != got_name || want.shape() != &got_shape[..] {
            bail!(
                "{}: {kind} tensor mismatch: model expects {want_name} {:?}, checkpoint has {got_name} {:?}",
                path.display(),
                want.shape(),
                got_shape
            );
        }
    }
    Ok(())
}

/// Deserializes a checkpoint back into resumable training state.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cursor = &bytes[..];
    let header = read_preamble(&mut cursor, path)?;

    let mut model = Model::build(&header.spec, 0)
        .with_context(|| format!("rebuilding model from spec in {}", path.display()))?;
    check_names("parameter", &model.named_params(), &header.params, path)?;
    check_names(
        "running-statistic",
        &model.named_running_stats(),
        &header.running_stats,
        path,
    )?;

    for ((name, _), t) in header.params.iter().zip(model.params_mut()) {
        read_into(&mut cursor, t, name)?;
    }
    for ((name, _), t) in header
        .running_stats
        .iter()
        .zip(model.running_stats_mut())
    {
        read_into(&mut cursor, t, name)?;
    }

    let mut m = Vec::with_capacity(header.params.len());
    let mut v = Vec::with_capacity(header.params.len());
    for (name, shape) in &header.params {
        let mut t = Tensor::zeros(shape);
        read_into(&mut cursor, &mut t, &format!("adam m[{name}]"))?;
        m.push(t);
    }
    for (name, shape) in &header.params {
        let mut t = Tensor::zeros(shape);
        read_into(&mut cursor, &mut t, &format!("adam v[{name}]"))?;
        v.push(t);
    }
    let adam = AdamState::from_parts(
        m,
        v,
        header.adam.step,
        header.adam.beta1,
        header.adam.beta2,
        header.adam.eps,
    )?;

    let (projector, projector_adam) = match &header.projector {
        None => (None, None),
        Some(meta) => {
            let mut proj = Projector::new(meta.student_dim, meta.teacher_dim, 0);
            read_into(&mut cursor, &mut proj.linear.weight, "projector weight")?;
            read_into(&mut cursor, &mut proj.linear.bias, "projector bias")?;
            let shapes = [
                proj.linear.weight.shape().to_vec(),
                proj.linear.bias.shape().to_vec(),
            ];
            let mut pm = Vec::new();
            let mut pv = Vec::new();
            for (dst, what) in [(&mut pm, "projector adam m"), (&mut pv, "projector adam v")]
            {
                for shape in &shapes {
                    let mut t = Tensor::zeros(shape);
                    read_into(&mut cursor, &mut t, what)?;
                    dst.push(t);
                }
            }
            let pa = AdamState::from_parts(
                pm,
                pv,
                meta.adam.step,
                meta.adam.beta1,
                meta.adam.beta2,
                meta.adam.eps,
            )?;
            (Some(proj), Some(pa))
        }
    };

    if !cursor.is_empty() {
        bail!(
            "{}: {} trailing bytes after the final tensor",
            path.display(),
            cursor.len()
        );
    }

    Ok(TrainState {
        model,
        adam,
        projector,
        projector_adam,
        completed_epochs: header.completed_epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pulsekd_core::distill::{DistillConfig, Strategy};
    use pulsekd_core::model::Arch;
    use pulsekd_core::train::{init_state, TrainConfig};

    fn spec(blocks: usize) -> ModelSpec {
        ModelSpec {
            arch: Arch::Resnet1d { num_blocks: blocks },
            input_channels: 1,
            input_length: 32,
            num_classes: 12,
        }
    }

    fn toy_state(with_projector: bool) -> TrainState {
        let cfg = TrainConfig {
            epochs: 1,
            lr: 5e-4,
            batch_size: 4,
            seed: 9,
            distill: if with_projector {
                DistillConfig::for_strategy(Strategy::Feature)
            } else {
                DistillConfig::for_strategy(Strategy::Scratch)
            },
            teacher_checkpoint: None,
        };
        let teacher = if with_projector {
            Some(Model::build(&spec(2), 5).unwrap())
        } else {
            None
        };
        let mut state = init_state(&spec(1), &cfg, teacher.as_ref()).unwrap();
        // Perturb parameters and progress so the round-trip exercises
        // non-default values, not just freshly initialized state.
        for t in state.model.params_mut() {
            t.data_mut()[0] = 0.123456789;
        }
        state.completed_epochs = 7;
        state
    }

    fn assert_states_match(a: &TrainState, b: &TrainState) {
        let ap = a.model.named_params();
        let bp = b.model.named_params();
        assert_eq!(ap.len(), bp.len());
        for ((an, at), (bn, bt)) in ap.iter().zip(&bp) {
            assert_eq!(an, bn);
            assert_eq!(at.data(), bt.data(), "parameter {an} differs");
        }
        for ((_, at), (_, bt)) in a
            .model
            .named_running_stats()
            .iter()
            .zip(&b.model.named_running_stats())
        {
            assert_eq!(at.data(), bt.data());
        }
        assert_eq!(a.adam.step_count(), b.adam.step_count());
        let (am, av) = a.adam.moments();
        let (bm, bv) = b.adam.moments();
        for (x, y) in am.iter().zip(bm).chain(av.iter().zip(bv)) {
            assert_eq!(x.data(), y.data());
        }
        assert_eq!(a.completed_epochs, b.completed_epochs);
        assert_eq!(a.projector.is_some(), b.projector.is_some());
        if let (Some(pa), Some(pb)) = (&a.projector, &b.projector) {
            assert_eq!(pa.linear.weight.data(), pb.linear.weight.data());
            assert_eq!(pa.linear.bias.data(), pb.linear.bias.data());
        }
    }

    #[test]
    fn round_trip_preserves_every_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let state = toy_state(false);
        save_checkpoint(&state, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_states_match(&state, &loaded);
    }

    #[test]
    fn round_trip_preserves_projector_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feature.ckpt");
        let state = toy_state(true);
        save_checkpoint(&state, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_states_match(&state, &loaded);
    }

    #[test]
    fn header_reports_spec_and_progress_without_payload_cost() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let state = toy_state(false);
        save_checkpoint(&state, &path).unwrap();
        let header = read_header(&path).unwrap();
        assert_eq!(header.completed_epochs, 7);
        assert_eq!(header.spec, spec(1));
        assert_eq!(header.param_count(), state.model.count_params());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&toy_state(false), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(format!("{err:#}").contains("truncated"), "{err:#}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        fs::write(&path, b"NOPExxxxxxxxxxxxxxxx").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(format!("{err:#}").contains("magic"), "{err:#}");
    }

    #[test]
    fn checkpoint_for_a_different_architecture_is_caught_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&toy_state(false), &path).unwrap();
        // Corrupt the header's spec: claim two blocks while the payload and
        // tensor list describe one.
        let bytes = fs::read(&path).unwrap();
        let json_start = 16;
        let header_len =
            u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut header: CheckpointHeader =
            serde_json::from_slice(&bytes[json_start..json_start + header_len]).unwrap();
        header.spec = spec(2);
        let new_json = serde_json::to_vec(&header).unwrap();
        let mut rewritten = Vec::new();
        rewritten.extend_from_slice(&bytes[..8]);
        rewritten.extend_from_slice(&(new_json.len() as u64).to_le_bytes());
        rewritten.extend_from_slice(&new_json);
        rewritten.extend_from_slice(&bytes[json_start + header_len..]);
        fs::write(&path, rewritten).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(format!("{err:#}").contains("tensor"), "{err:#}");
    }
}

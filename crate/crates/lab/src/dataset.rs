//! Recording files on disk: one `.ppg` text file per participant, organized
//! either flat (`root/p01.ppg`) or grouped by dataset (`root/dalia/p01.ppg`).
//! The per-dataset layout feeds per-dataset split mode; the flat layout is a
//! single anonymous dataset.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pulsekd_core::data::{format_recording, parse_recording, PpgRecording};

/// A recording plus the dataset it belongs to (its parent directory name, or
/// the root's own name for flat layouts).
#[derive(Debug, Clone)]
pub struct LabeledRecording {
    pub dataset: String,
    pub recording: PpgRecording,
}

const EXTENSION: &str = "ppg";

/// Writes recordings as `<participant_id>.ppg` files under `dir`.
pub fn write_recordings(dir: &Path, recordings: &[PpgRecording]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for rec in recordings {
        rec.validate()?;
        let path = dir.join(format!("{}.{EXTENSION}", rec.participant_id));
        fs::write(&path, format_recording(rec))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Loads every `.ppg` file under `root`: files directly in the root form one
/// dataset named after the root directory; each immediate subdirectory forms
/// its own dataset. Participant ids must be unique across the whole corpus —
/// a duplicate would let one person straddle a split.
pub fn load_corpus(root: &Path) -> Result<Vec<LabeledRecording>> {
    if !root.is_dir() {
        bail!("dataset root {} is not a directory", root.display());
    }
    let root_label = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    // deterministic order: sorted directory walk
    let mut groups: Vec<(String, Vec<std::path::PathBuf>)> = Vec::new();
    let mut flat = Vec::new();
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            subdirs.push(path);
        } else if path.extension().is_some_and(|e| e == EXTENSION) {
            flat.push(path);
        }
    }
    flat.sort();
    subdirs.sort();
    if !flat.is_empty() {
        groups.push((root_label, flat));
    }
    for dir in subdirs {
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<_> = fs::read_dir(&dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == EXTENSION))
            .collect();
        files.sort();
        if !files.is_empty() {
            groups.push((label, files));
        }
    }

    let mut out = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (dataset, files) in groups {
        for path in files {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let recording = parse_recording(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if !seen_ids.insert(recording.participant_id.clone()) {
                bail!(
                    "participant id \"{}\" appears more than once in the corpus ({})",
                    recording.participant_id,
                    path.display()
                );
            }
            out.push(LabeledRecording {
                dataset: dataset.clone(),
                recording,
            });
        }
    }
    if out.is_empty() {
        bail!("no .{EXTENSION} recordings found under {}", root.display());
    }
    Ok(out)
}

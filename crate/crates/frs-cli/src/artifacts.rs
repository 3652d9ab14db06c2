//! On-disk handoff between pipeline stages: the selected-samples file written
//! by `select` and consumed by `sweep`. Line-delimited JSON with a meta line
//! carrying the config hash, so stages refuse to mix runs.

use std::io::BufRead;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use frs_core::protocol::SelectedSample;

pub const SELECTED_FILE: &str = "selected.jsonl";
pub const RUN_STATE_FILE: &str = "runstate.jsonl";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectedMeta {
    pub config_hash: String,
    pub model_id: String,
    pub selected: usize,
    pub scanned: usize,
    pub exhausted_early: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SelectedLine {
    Meta(SelectedMeta),
    Sample(SelectedSample),
}

pub fn write_selected(
    path: &Path,
    meta: &SelectedMeta,
    samples: &[SelectedSample],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&SelectedLine::Meta(SelectedMeta {
        config_hash: meta.config_hash.clone(),
        model_id: meta.model_id.clone(),
        selected: meta.selected,
        scanned: meta.scanned,
        exhausted_early: meta.exhausted_early,
    }))?);
    out.push('\n');
    for sample in samples {
        out.push_str(&serde_json::to_string(&SelectedLine::Sample(sample.clone()))?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_selected(path: &Path) -> Result<(SelectedMeta, Vec<SelectedSample>)> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("selected-samples file {} not found; run `frs select` first", path.display()))?;
    let mut meta = None;
    let mut samples = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SelectedLine = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        match parsed {
            SelectedLine::Meta(m) => meta = Some(m),
            SelectedLine::Sample(s) => samples.push(s),
        }
    }
    let Some(meta) = meta else {
        bail!("{} has no meta line", path.display());
    };
    Ok((meta, samples))
}

/// Peek at the meta line only.
pub fn read_selected_meta(path: &Path) -> Result<SelectedMeta> {
    Ok(read_selected(path)?.0)
}

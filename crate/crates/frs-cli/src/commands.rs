//! The pipeline stages behind the CLI subcommands. Each stage reads and
//! writes files under the configured output directory and stamps every
//! artifact with the config hash, so stages from different configurations
//! cannot be mixed.

use std::collections::HashMap;

use anyhow::{bail, Context, Result};

use frs_core::analysis::{aggregate_frs, audit_report, emit_report, RunMetadata, RunReport};
use frs_core::config::RunConfig;
use frs_core::datasets::{load_dataset, load_type_labels, DatasetTag, QaRecord, QuestionType};
use frs_core::protocol::{select_baseline, sweep, AccuracyCurve, SweepMode};
use frs_core::runstate::RunStore;
use frs_core::score::RobustnessSample;
use frs_core::validation::run_all_checks;

use crate::artifacts::{
    read_selected, read_selected_meta, write_selected, SelectedMeta, REPORT_DIR, RUN_STATE_FILE,
    SELECTED_FILE,
};

fn records_for(config: &RunConfig) -> Result<Vec<QaRecord>> {
    if let Some(source) = &config.dataset {
        let loaded = load_dataset(&source.path, source.format)?;
        if loaded.skipped > 0 {
            println!(
                "loaded {} records from {} ({} malformed or duplicate entries skipped)",
                loaded.records.len(),
                source.path.display(),
                loaded.skipped
            );
        } else {
            println!(
                "loaded {} records from {}",
                loaded.records.len(),
                source.path.display()
            );
        }
        Ok(loaded.records)
    } else if let Some(spec) = config.synthetic_spec() {
        // synthetic runs need no dataset; probe questions are generated
        let gold = spec.gold_answer();
        Ok((0..config.target_count)
            .map(|i| QaRecord {
                question_id: format!("synth-{i:06}"),
                question: format!("synthetic probe {i}"),
                gold_answers: vec![gold.clone()],
                dataset_tag: DatasetTag::Custom,
                question_type: None,
            })
            .collect())
    } else {
        bail!("config has no dataset and the backend cannot synthesize one");
    }
}

/// Generate every record once at `t = 0` and persist the exactly-correct
/// ones with their baseline traces and entropies.
pub fn cmd_select(config: &RunConfig) -> Result<()> {
    let hash = config.config_hash();
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let path = config.output_dir.join(SELECTED_FILE);
    if path.exists() {
        let meta = read_selected_meta(&path)?;
        if meta.config_hash == hash {
            println!(
                "selection already complete for config {hash} ({} samples); nothing to do",
                meta.selected
            );
            return Ok(());
        }
        bail!(
            "{} belongs to config {}, current config is {hash}; use a fresh --out directory",
            path.display(),
            meta.config_hash
        );
    }

    let model = config.build_model()?;
    let template = config.template()?;
    let sweep_config = config.sweep_config();
    let records = records_for(config)?;
    let outcome = select_baseline(
        model.as_ref(),
        records,
        &template,
        &sweep_config,
        config.target_count,
    )?;

    let meta = SelectedMeta {
        config_hash: hash.clone(),
        model_id: model.id(),
        selected: outcome.samples.len(),
        scanned: outcome.scanned,
        exhausted_early: outcome.exhausted_early,
    };
    write_selected(&path, &meta, &outcome.samples)?;
    println!(
        "selected {} of {} scanned records at t=0 -> {}",
        outcome.samples.len(),
        outcome.scanned,
        path.display()
    );
    if outcome.exhausted_early {
        println!(
            "warning: record stream exhausted below the target of {}; continuing with a partial selection",
            config.target_count
        );
    }
    Ok(())
}

/// Run the temperature sweep over the selected samples, persisting progress
/// per (question, temperature) so interrupted runs resume.
pub fn cmd_sweep(config: &RunConfig, mode: SweepMode, resume: bool) -> Result<()> {
    let hash = config.config_hash();
    let selected_path = config.output_dir.join(SELECTED_FILE);
    let (meta, samples) = read_selected(&selected_path)?;
    if meta.config_hash != hash {
        bail!(
            "selected samples belong to config {}, current config is {hash}",
            meta.config_hash
        );
    }
    if samples.is_empty() {
        println!("no selected samples; nothing to sweep");
        return Ok(());
    }

    let state_path = config.output_dir.join(RUN_STATE_FILE);
    if state_path.exists() && !resume {
        bail!(
            "{} already exists; pass --resume to continue the run or remove the file",
            state_path.display()
        );
    }
    let store = RunStore::open(&state_path, &hash, &mode.to_string())?;

    let model = config.build_model()?;
    let template = config.template()?;
    let sweep_config = config.sweep_config();
    println!(
        "sweeping {} samples over {} temperatures ({} trials each, {} mode, concurrency {})",
        samples.len(),
        sweep_config.grid.len(),
        sweep_config.trials_per_temperature,
        mode,
        sweep_config.concurrency_limit
    );
    let output = sweep(
        model.as_ref(),
        &samples,
        &template,
        &sweep_config,
        mode,
        &config.d_values,
        Some(&store),
    )?;

    println!(
        "swept {} samples ({} restored from run state), {} quarantined -> {}",
        output.samples.len(),
        output.resumed,
        output.quarantined.len(),
        state_path.display()
    );
    for q in &output.quarantined {
        println!("quarantined {}: {}", q.question_id, q.error);
    }
    if !output.samples.is_empty() {
        let broke = output.samples.iter().filter(|s| s.break_result.broke()).count();
        println!(
            "{} of {} samples broke within the grid",
            broke,
            output.samples.len()
        );
        for (d, mean) in aggregate_frs(&output.samples, &config.d_values)? {
            println!("mean FRS at d={d}: {mean:.4}");
        }
    }
    Ok(())
}

/// Aggregate the persisted run state into the report files.
pub fn cmd_report(config: &RunConfig, audit: bool) -> Result<()> {
    let hash = config.config_hash();
    let state_path = config.output_dir.join(RUN_STATE_FILE);
    if !state_path.exists() {
        bail!(
            "{} not found; run `frs sweep` before `frs report`",
            state_path.display()
        );
    }
    let store = RunStore::open(&state_path, &hash, "report")?;
    let outcomes = store.outcomes();
    if outcomes.is_empty() {
        bail!("run state has no completed samples yet");
    }

    let primary_d = config.d_values[0];
    let mut samples = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        samples.push(RobustnessSample::new(
            outcome.question_id.clone(),
            outcome.entropy,
            outcome.break_result,
            primary_d,
            outcome.question_type,
        )?);
    }
    let mut curves: Vec<AccuracyCurve> = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        curves.push(AccuracyCurve {
            question_id: outcome.question_id.clone(),
            points: store.completed_points(&outcome.question_id),
        });
    }

    let labels: Option<HashMap<String, QuestionType>> = match &config.labels_path {
        Some(path) if path.exists() => Some(load_type_labels(path)?),
        Some(path) => {
            println!(
                "notice: label file {} not found; the question-type table will be omitted",
                path.display()
            );
            None
        }
        None => None,
    };

    let report = RunReport::build(
        RunMetadata {
            model_id: config.model_label(),
            dataset_tag: config.dataset_tag(),
            config_hash: hash,
        },
        samples,
        curves,
        &config.d_values,
        labels.as_ref(),
        None,
        store.quarantined().len(),
    )?;

    let report_dir = config.output_dir.join(REPORT_DIR);
    let files = emit_report(&report, &report_dir)?;
    println!("report for {} samples:", report.samples.len());
    for (d, mean) in &report.frs_means {
        println!("  mean FRS at d={d}: {mean:.4}");
    }
    match &report.correlation {
        Some(c) => println!(
            "  entropy/breaking-temperature pearson r = {:.4} over {} broken samples ({} never broke)",
            c.r, c.broken, c.excluded_no_break
        ),
        None => println!("  entropy/breaking-temperature correlation unavailable"),
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
    for file in &files {
        println!("  wrote {}", file.display());
    }
    if audit {
        audit_report(&report_dir)?;
        println!("audit: emitted aggregates match recomputation from per-sample rows");
    }
    Ok(())
}

/// Run the network-free property and oracle suite against the synthetic
/// backend; nonzero exit on any failure.
pub fn cmd_validate() -> Result<()> {
    let outcomes = run_all_checks();
    let mut failures = 0usize;
    for outcome in &outcomes {
        if outcome.passed {
            println!("PASS  {} — {}", outcome.name, outcome.detail);
        } else {
            failures += 1;
            println!("FAIL  {} — {}", outcome.name, outcome.detail);
        }
    }
    if failures > 0 {
        bail!("{failures} of {} checks failed", outcomes.len());
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}

//! The pipeline stages. Each stage builds all of its outputs in memory and
//! only then writes them, so a failing run leaves no partial files behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tempfile::NamedTempFile;

use dner_core::arbiter::{
    arbitrate_all, write_transcript, ArbiterSettings, ArbitrationInput, ChatClient, HttpChatClient,
    MockClient, OutcomeSource, RateLimited,
};
use dner_core::evaluation::{
    check_f1_consistency, consistency_csv, corpus_stats, friedman_ranks, improvements_against,
    improvements_csv, metrics_table, rank_blocks, read_reported_scores, render_report,
    score_records, CorpusStats, MetricsReport, RankReport,
};
use dner_core::formats::{
    parse_gold, parse_model_output, read_uniform, write_uniform, GoldDocument, ParseOptions,
};
use dner_core::{vote_record, Entity, PredictionSet, Sentence, UniformRecord};

use crate::config::{ClientChoice, RunConfig, RESOLVED_CONFIG_NAME};

/// Tolerance, in percentage points, for recomputed F1 against printed F1.
pub const F1_TOLERANCE: f64 = 0.10;

pub const NORMALIZED_DIR: &str = "normalized";
pub const FUSED_VOTING: &str = "fused.voting.jsonl";
pub const FUSED_ARBITRATED: &str = "fused.arbitrated.jsonl";
pub const TRANSCRIPT: &str = "transcript.jsonl";

/// Files to write once a stage has succeeded.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file to a temporary sibling first and renames them only
    /// after all writes succeeded.
    pub fn commit(self) -> Result<()> {
        let mut pending = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            let dir = path
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut tmp = NamedTempFile::new_in(dir)
                .with_context(|| format!("creating a temp file in {}", dir.display()))?;
            tmp.write_all(&bytes)
                .and_then(|_| tmp.flush())
                .with_context(|| format!("writing {}", path.display()))?;
            pending.push((tmp, path));
        }
        for (tmp, path) in pending {
            tmp.persist(&path)
                .with_context(|| format!("moving output into {}", path.display()))?;
        }
        Ok(())
    }
}

fn stage_config(cfg: &RunConfig, staged: &mut Staged) -> Result<()> {
    staged.add(cfg.out.join(RESOLVED_CONFIG_NAME), cfg.to_resolved_toml()?);
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub fn load_gold(path: &Path, default_label: &str) -> Result<Vec<GoldDocument>> {
    parse_gold(open(path)?, default_label).with_context(|| format!("{} (gold)", path.display()))
}

fn gold_sentences(docs: &[GoldDocument]) -> Vec<(&str, &Sentence, &BTreeSet<Entity>)> {
    docs.iter()
        .flat_map(|d| &d.sentences)
        .map(|s| (s.record_id.as_str(), &s.sentence, &s.entities))
        .collect()
}

fn preview(ids: &[&str]) -> String {
    const SHOWN: usize = 5;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .copied()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    s
}

fn check_alignment<'a>(
    what: &str,
    expected: impl IntoIterator<Item = &'a str>,
    found: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let expected: BTreeSet<&str> = expected.into_iter().collect();
    let found: BTreeSet<&str> = found.into_iter().collect();
    let missing: Vec<&str> = expected.difference(&found).copied().collect();
    let unknown: Vec<&str> = found.difference(&expected).copied().collect();
    if !missing.is_empty() || !unknown.is_empty() {
        let mut msg = format!("{what}: record ids do not match");
        if !missing.is_empty() {
            msg.push_str(&format!("; missing {}", preview(&missing)));
        }
        if !unknown.is_empty() {
            msg.push_str(&format!("; unexpected {}", preview(&unknown)));
        }
        bail!(msg);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSummary {
    pub id: String,
    pub records: usize,
    pub entities: usize,
    pub discontinuous: usize,
}

impl std::fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} records, {} entities, {} discontinuous",
            self.id, self.records, self.entities, self.discontinuous
        )
    }
}

pub fn normalized_path(cfg: &RunConfig, model_id: &str) -> PathBuf {
    cfg.out
        .join(NORMALIZED_DIR)
        .join(format!("{model_id}.jsonl"))
}

/// Converts every model's predictions to uniform records aligned with gold.
pub fn normalize(cfg: &RunConfig) -> Result<(Vec<ModelSummary>, Staged)> {
    if cfg.models.is_empty() {
        bail!("no models declared in the config");
    }
    let gold_path = cfg.gold_path()?;
    let docs = load_gold(gold_path, &cfg.default_label)?;
    let sentences = gold_sentences(&docs);
    let options = ParseOptions {
        default_label: cfg.default_label.clone(),
        resolve_mode: cfg.resolve_mode,
    };
    let mut staged = Staged::default();
    let mut summaries = Vec::new();
    for model in &cfg.models {
        let origin = format!("{} ({})", model.path.display(), model.kind);
        let sets = parse_model_output(model.kind, open(&model.path)?, &model.id, &options)
            .context(origin.clone())?;
        check_alignment(
            &origin,
            sentences.iter().map(|s| s.0),
            sets.iter().map(|s| s.record_id.as_str()),
        )?;
        let by_id: BTreeMap<&str, &PredictionSet> =
            sets.iter().map(|s| (s.record_id.as_str(), s)).collect();
        let mut records = Vec::with_capacity(sentences.len());
        let mut summary = ModelSummary {
            id: model.id.clone(),
            records: 0,
            entities: 0,
            discontinuous: 0,
        };
        for (rid, sentence, _) in &sentences {
            let set = by_id[rid];
            let record = UniformRecord::from_entities(*rid, sentence, &set.entities)
                .with_context(|| format!("{origin}: record {rid}"))?;
            summary.records += 1;
            summary.entities += set.entities.len();
            summary.discontinuous += set.entities.iter().filter(|e| e.is_discontinuous()).count();
            records.push(record);
        }
        let mut bytes = Vec::new();
        write_uniform(&records, &mut bytes)?;
        staged.add(normalized_path(cfg, &model.id), bytes);
        summaries.push(summary);
    }
    stage_config(cfg, &mut staged)?;
    Ok((summaries, staged))
}

pub fn read_uniform_file(path: &Path) -> Result<Vec<UniformRecord>> {
    read_uniform(open(path)?).with_context(|| format!("{} (uniform)", path.display()))
}

/// Per-record inputs for the ensemble, in the first model's record order.
pub fn load_normalized(cfg: &RunConfig) -> Result<Vec<ArbitrationInput>> {
    if cfg.models.is_empty() {
        bail!("no models declared in the config");
    }
    let mut per_model = Vec::new();
    for model in &cfg.models {
        let path = normalized_path(cfg, &model.id);
        if !path.is_file() {
            bail!("{} does not exist; run `normalize` first", path.display());
        }
        per_model.push((model.id.as_str(), path.clone(), read_uniform_file(&path)?));
    }
    let (_, first_path, first) = &per_model[0];
    for rec in first {
        if rec.record_id.is_empty() {
            bail!("{}: a record has no record_id", first_path.display());
        }
    }
    let mut inputs = Vec::with_capacity(first.len());
    for rec in first {
        inputs.push(ArbitrationInput {
            record_id: rec.record_id.clone(),
            sentence: rec
                .to_sentence()
                .with_context(|| format!("record {}", rec.record_id))?,
            predictions: Vec::with_capacity(per_model.len()),
        });
    }
    let index: BTreeMap<&str, usize> = first
        .iter()
        .enumerate()
        .map(|(i, r)| (r.record_id.as_str(), i))
        .collect();
    for (id, path, records) in &per_model {
        let origin = path.display().to_string();
        check_alignment(
            &origin,
            first.iter().map(|r| r.record_id.as_str()),
            records.iter().map(|r| r.record_id.as_str()),
        )?;
        for rec in records {
            let slot = &mut inputs[index[rec.record_id.as_str()]];
            if rec.sentence != slot.sentence.tokens() {
                bail!(
                    "{origin}: record {} has different tokens than {}",
                    rec.record_id,
                    first_path.display()
                );
            }
            let entities = rec
                .entities(&cfg.default_label)
                .with_context(|| format!("{origin}: record {}", rec.record_id))?;
            slot.predictions.push(PredictionSet::with_entities(
                *id,
                rec.record_id.clone(),
                entities,
            ));
        }
    }
    Ok(inputs)
}

pub fn build_client(choice: &ClientChoice, cfg: &RunConfig) -> Result<Box<dyn ChatClient>> {
    Ok(match choice {
        ClientChoice::Live => {
            let client = HttpChatClient::from_env(cfg.endpoint.clone())?;
            if cfg.requests_per_second > 0.0 {
                Box::new(RateLimited::new(client, cfg.requests_per_second))
            } else {
                Box::new(client)
            }
        }
        ClientChoice::Policy(p) => Box::new(MockClient::policy(*p)),
        ClientChoice::Script(path) => Box::new(
            MockClient::from_script(open(path)?)
                .with_context(|| format!("mock script {}", path.display()))?,
        ),
    })
}

pub fn settings(cfg: &RunConfig) -> ArbiterSettings {
    ArbiterSettings {
        vote: cfg.vote,
        prompt: cfg.prompt.clone(),
        retry: cfg.retry.clone(),
        strict_union: cfg.strict_union,
        default_label: cfg.default_label.clone(),
        concurrency: cfg.concurrency,
    }
}

fn fused_bytes(inputs: &[ArbitrationInput], sets: &[BTreeSet<Entity>]) -> Result<Vec<u8>> {
    let records = inputs
        .iter()
        .zip(sets)
        .map(|(input, set)| {
            UniformRecord::from_entities(input.record_id.clone(), &input.sentence, set)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut bytes = Vec::new();
    write_uniform(&records, &mut bytes)?;
    Ok(bytes)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnsembleSummary {
    pub records: usize,
    pub voting_entities: Option<usize>,
    pub arbitrated_entities: Option<usize>,
    pub fallbacks: usize,
    pub rejected_items: usize,
}

/// Votes and/or arbitrates the normalized predictions. With a client
/// override the caller supplies its own client (used by tests).
pub fn ensemble(
    cfg: &RunConfig,
    client: Option<&dyn ChatClient>,
) -> Result<(EnsembleSummary, Staged)> {
    let choice = if cfg.mode.arbitrates() && client.is_none() {
        Some(cfg.validate_for_arbitration()?)
    } else {
        None
    };
    let inputs = load_normalized(cfg)?;
    let mut staged = Staged::default();
    let mut summary = EnsembleSummary {
        records: inputs.len(),
        ..EnsembleSummary::default()
    };
    if cfg.mode.votes() {
        let sets = inputs
            .iter()
            .map(|i| {
                vote_record(&i.predictions, &cfg.vote)
                    .with_context(|| format!("record {}", i.record_id))
            })
            .collect::<Result<Vec<_>>>()?;
        summary.voting_entities = Some(sets.iter().map(BTreeSet::len).sum());
        staged.add(cfg.out.join(FUSED_VOTING), fused_bytes(&inputs, &sets)?);
    }
    if cfg.mode.arbitrates() {
        let owned;
        let client: &dyn ChatClient = match (client, &choice) {
            (Some(c), _) => c,
            (None, Some(choice)) => {
                owned = build_client(choice, cfg)?;
                owned.as_ref()
            }
            (None, None) => unreachable!("arbitrated mode validated a client above"),
        };
        let outcomes = arbitrate_all(&inputs, &settings(cfg), client)?;
        summary.fallbacks = outcomes
            .iter()
            .filter(|o| o.source == OutcomeSource::FallbackVoting)
            .count();
        summary.rejected_items = outcomes.iter().map(|o| o.validation_report.len()).sum();
        let sets: Vec<BTreeSet<Entity>> = outcomes.iter().map(|o| o.entities.clone()).collect();
        summary.arbitrated_entities = Some(sets.iter().map(BTreeSet::len).sum());
        staged.add(cfg.out.join(FUSED_ARBITRATED), fused_bytes(&inputs, &sets)?);
        let mut transcript = Vec::new();
        write_transcript(&outcomes, &mut transcript)?;
        staged.add(cfg.out.join(TRANSCRIPT), transcript);
    }
    stage_config(cfg, &mut staged)?;
    Ok((summary, staged))
}

/// Entity sets of a system file keyed by record id. `.jsonl`/`.json` files
/// are uniform records; anything else is read with the gold grammar.
pub fn load_system(path: &Path, default_label: &str) -> Result<BTreeMap<String, BTreeSet<Entity>>> {
    let uniform = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json")
    );
    let mut out = BTreeMap::new();
    if uniform {
        for rec in read_uniform_file(path)? {
            if rec.record_id.is_empty() {
                bail!("{}: a record has no record_id", path.display());
            }
            let entities = rec
                .entities(default_label)
                .with_context(|| format!("{}: record {}", path.display(), rec.record_id))?;
            if out.insert(rec.record_id.clone(), entities).is_some() {
                bail!("{}: duplicate record {}", path.display(), rec.record_id);
            }
        }
    } else {
        for (rid, _, entities) in gold_sentences(&load_gold(path, default_label)?) {
            out.insert(rid.to_string(), entities.clone());
        }
    }
    Ok(out)
}

/// Systems scored when none are named: normalized models, then fused outputs,
/// whichever exist.
pub fn default_systems(cfg: &RunConfig) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    for m in &cfg.models {
        let p = normalized_path(cfg, &m.id);
        if p.is_file() {
            out.push((m.id.clone(), p));
        }
    }
    for (id, name) in [("voting", FUSED_VOTING), ("arbitrated", FUSED_ARBITRATED)] {
        let p = cfg.out.join(name);
        if p.is_file() {
            out.push((id.to_string(), p));
        }
    }
    out
}

fn rank_report(cfg: &RunConfig, metrics: &[MetricsReport]) -> Result<Option<RankReport>> {
    let (systems, blocks) = rank_blocks(metrics, &cfg.rank_metrics);
    if systems.len() < 2 || blocks.len() < 2 {
        return Ok(None);
    }
    let report = friedman_ranks(&systems, &blocks)?;
    Ok(Some(
        match report.clone().with_critical_difference(cfg.alpha) {
            Ok(r) => r,
            Err(_) => report,
        },
    ))
}

fn rank_lines(ranks: Option<&RankReport>) -> String {
    let Some(r) = ranks else {
        return "Ranks: needs at least two systems and two blocks.\n".into();
    };
    let mut order: Vec<usize> = (0..r.systems.len()).collect();
    order.sort_by(|&a, &b| r.average_ranks[a].total_cmp(&r.average_ranks[b]));
    let mut s = format!(
        "Average ranks over {} blocks (Friedman chi-square {:.4}",
        r.blocks, r.friedman_statistic
    );
    match (r.critical_difference, r.alpha) {
        (Some(cd), Some(a)) => s.push_str(&format!(", CD {cd:.4} at alpha {})\n", a.as_str())),
        _ => s.push_str(")\n"),
    }
    for i in order {
        s.push_str(&format!("  {:.4}  {}\n", r.average_ranks[i], r.systems[i]));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub metrics: Vec<MetricsReport>,
    pub ranks: Option<RankReport>,
}

/// Scores each system against gold.
pub fn evaluate(
    cfg: &RunConfig,
    systems: &[(String, PathBuf)],
) -> Result<(EvaluationResult, Staged)> {
    let gold_path = cfg.gold_path()?;
    let gold = load_system(gold_path, &cfg.default_label)?;
    let systems = if systems.is_empty() {
        default_systems(cfg)
    } else {
        systems.to_vec()
    };
    if systems.is_empty() {
        bail!("no systems to evaluate (pass --system id=path, or run normalize/ensemble first)");
    }
    let mut seen = BTreeSet::new();
    let mut metrics = Vec::new();
    for (id, path) in &systems {
        if !seen.insert(id.as_str()) {
            bail!("system {id:?} given twice");
        }
        let pred = load_system(path, &cfg.default_label)?;
        let counts = score_records(&gold, &pred)
            .with_context(|| format!("system {id} ({})", path.display()))?;
        metrics.push(MetricsReport::from_counts(
            id.clone(),
            cfg.dataset.clone(),
            counts,
        ));
    }
    let disc: Vec<MetricsReport> = metrics
        .iter()
        .filter_map(MetricsReport::discontinuous)
        .collect();
    let ranks = rank_report(cfg, &metrics)?;
    let artifacts = render_report(&metrics, ranks.as_ref());

    let mut text = format!(
        "Exact-match scores ({})\n\n{}\n",
        cfg.dataset, artifacts.metrics_table
    );
    text.push_str(&format!(
        "Discontinuous entities only\n\n{}\n",
        metrics_table(&disc)
    ));
    text.push_str(&rank_lines(ranks.as_ref()));

    let mut staged = Staged::default();
    if let Some(baseline) = &cfg.baseline {
        let rows = improvements_against(&metrics, baseline)?;
        text.push_str(&format!("\nRelative F1 improvement over {baseline}\n"));
        for r in &rows {
            text.push_str(&format!(
                "  {:+.2}%  {} ({})\n",
                r.relative_improvement, r.system, r.dataset
            ));
        }
        staged.add(cfg.out.join("improvements.csv"), improvements_csv(&rows));
    }
    staged.add(cfg.out.join("metrics.csv"), artifacts.metrics_csv);
    staged.add(
        cfg.out.join("metrics.discontinuous.csv"),
        dner_core::evaluation::metrics_csv(&disc),
    );
    staged.add(cfg.out.join("ranks.csv"), artifacts.ranks_csv);
    staged.add(cfg.out.join("report.txt"), text);
    stage_config(cfg, &mut staged)?;
    Ok((EvaluationResult { metrics, ranks }, staged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuesResult {
    pub metrics: Vec<MetricsReport>,
    pub ranks: Option<RankReport>,
    pub inconsistent: Vec<dner_core::evaluation::ConsistencyCheck>,
    pub checked: usize,
}

/// Report from published (P, R, F1) values: the table with marks, ranks,
/// improvements, and a check of every F1 against its P and R.
pub fn report_values(cfg: &RunConfig, values: &Path) -> Result<(ValuesResult, Staged)> {
    let rows = read_reported_scores(open(values)?)
        .with_context(|| format!("{} (values)", values.display()))?;
    let metrics: Vec<MetricsReport> = rows.iter().map(MetricsReport::from).collect();
    let checks = check_f1_consistency(&rows, F1_TOLERANCE);
    let ranks = rank_report(cfg, &metrics)?;
    let artifacts = render_report(&metrics, ranks.as_ref());
    let inconsistent: Vec<_> = checks.iter().filter(|c| !c.consistent).cloned().collect();

    let mut text = format!(
        "Reported scores from {}\n\n{}\n",
        values.display(),
        artifacts.metrics_table
    );
    text.push_str(&format!(
        "F1 recomputed from P and R: {} of {} rows within {F1_TOLERANCE:.2}\n",
        checks.len() - inconsistent.len(),
        checks.len()
    ));
    for c in &inconsistent {
        text.push_str(&format!(
            "  inconsistent: {} {} printed {:.2}, computed {:.2}\n",
            c.system, c.dataset, c.printed_f1, c.computed_f1
        ));
    }
    text.push('\n');
    text.push_str(&rank_lines(ranks.as_ref()));

    let mut staged = Staged::default();
    if let Some(baseline) = &cfg.baseline {
        let rows = improvements_against(&metrics, baseline)?;
        text.push_str(&format!("\nRelative F1 improvement over {baseline}\n"));
        for r in &rows {
            text.push_str(&format!(
                "  {:+.2}%  {} ({})\n",
                r.relative_improvement, r.system, r.dataset
            ));
        }
        staged.add(cfg.out.join("improvements.csv"), improvements_csv(&rows));
    }
    staged.add(cfg.out.join("metrics.csv"), artifacts.metrics_csv);
    staged.add(cfg.out.join("consistency.csv"), consistency_csv(&checks));
    staged.add(cfg.out.join("ranks.csv"), artifacts.ranks_csv);
    staged.add(cfg.out.join("report.txt"), text);
    stage_config(cfg, &mut staged)?;
    Ok((
        ValuesResult {
            metrics,
            ranks,
            inconsistent,
            checked: checks.len(),
        },
        staged,
    ))
}

pub fn stats(cfg: &RunConfig) -> Result<(CorpusStats, Staged)> {
    let docs = load_gold(cfg.gold_path()?, &cfg.default_label)?;
    let s = corpus_stats(&docs);
    let csv = format!(
        "documents,sentences,tokens,entities,discontinuous_entities,discontinuous_fraction\n{},{},{},{},{},{:.4}\n",
        s.documents,
        s.sentences,
        s.tokens,
        s.entities,
        s.discontinuous_entities,
        s.discontinuous_fraction()
    );
    let mut staged = Staged::default();
    staged.add(cfg.out.join("stats.csv"), csv);
    stage_config(cfg, &mut staged)?;
    Ok((s, staged))
}

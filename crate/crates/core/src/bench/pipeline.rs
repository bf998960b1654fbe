use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::rank_test_users;
use super::{
    grid_search, io_error, train_model, validation_plan, write_results, BenchError, BestHyper, ExperimentConfig,
    FusionStageName, HpoProblem, ResultRow, Result, StageExt,
};
use crate::corpus::{k_core_filter, load_interactions, simulate_cold_start, split, InteractionLog, SplitPlan};
use crate::earlyfusion::{align, fuse, AlignedFeatures, CcaSplit, FusedFeatures, FusionOperator, FusionRecord, FusionStage};
use crate::ids::compare_ids;
use crate::latefusion::{aggregate, write_interchange, FusionInput, InterchangeRow, WeightSchedule};
use crate::metrics::{evaluate, EvalContext};
use crate::models::{item_features_for, ItemFeatures, ModelFamily, RankedList, TrainData};
use crate::rng::derive_seed;
use crate::textprep::{
    augment_with_fallback, canonical_text_na, l2_normalize, load_embedding_table, load_item_metadata,
    CanonicalText, EmbeddingTable, ItemMetadata, Modality, StubProvider, TranscriptLog,
};

/// Present in a run directory until every output has been written.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Stage timer that records wall seconds in execution order.
#[derive(Default)]
struct Timings(IndexMap<String, f64>);

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.0.entry(stage.to_string()).or_insert(0.0) += t0.elapsed().as_secs_f64();
        out
    }
}

/// Corpus, split and features ready for training.
pub struct Prepared {
    pub log: InteractionLog,
    pub plan: SplitPlan,
    pub aligned: Option<AlignedFeatures>,
    pub texts: Vec<CanonicalText>,
    /// Genre indices per catalog item, when metadata is configured.
    pub genres: Option<Vec<Vec<usize>>>,
    pub warnings: Vec<String>,
    stage_seconds: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_name: String,
    pub config_hash: String,
    pub library_version: String,
    pub seeds: IndexMap<String, u64>,
    pub n_interactions: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub cold_items: usize,
    pub best_hyper: Option<BestHyper>,
    pub stage_seconds: IndexMap<String, f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
}

fn seeds(config: &ExperimentConfig) -> IndexMap<String, u64> {
    let m = config.runtime.seed;
    let mut s = IndexMap::new();
    s.insert("master".into(), m);
    s.insert("split".into(), derive_seed(m, "split"));
    s.insert("cold_start".into(), derive_seed(m, "cold-start"));
    s.insert("validation".into(), derive_seed(m, "validation-fold"));
    for f in config.systems() {
        s.insert(format!("train:{f}"), derive_seed(m, &format!("train:{f}")));
    }
    s
}

fn load_tables(config: &ExperimentConfig, warnings: &mut Vec<String>) -> Result<Vec<EmbeddingTable>> {
    let m = &config.modality;
    m.enabled_modalities()
        .into_iter()
        .map(|modality| {
            let path = config.resolve(m.embedding_path(modality).expect("validated"));
            let table = load_embedding_table(&path, modality, m.variant(modality))?;
            if !m.normalize {
                return Ok(table);
            }
            let (table, zero) = l2_normalize(&table);
            if !zero.is_empty() {
                warnings.push(format!("{modality} table has {} all-zero rows", zero.len()));
            }
            Ok(table)
        })
        .collect()
}

fn build_texts(
    config: &ExperimentConfig,
    metadata: &[ItemMetadata],
    out_dir: Option<&Path>,
) -> Result<Vec<CanonicalText>> {
    if !config.modality.augmentation {
        return Ok(metadata.iter().map(canonical_text_na).collect());
    }
    let transcript = match out_dir {
        Some(d) => {
            let p = d.join("synopsis_log.jsonl");
            if p.exists() {
                fs::remove_file(&p).map_err(io_error(&p))?;
            }
            Some(TranscriptLog::append_to(&p)?)
        }
        None => None,
    };
    let provider = StubProvider;
    metadata
        .iter()
        .map(|meta| Ok(augment_with_fallback(meta, &provider, config.modality.fallback, transcript.as_ref())?))
        .collect()
}

fn genre_index(log: &InteractionLog, metadata: &[ItemMetadata]) -> Vec<Vec<usize>> {
    let names: BTreeSet<&str> = metadata.iter().flat_map(|m| m.genres.iter().map(String::as_str)).collect();
    let code: HashMap<&str, usize> = names.into_iter().enumerate().map(|(k, g)| (g, k)).collect();
    let by_item: HashMap<&str, &ItemMetadata> = metadata.iter().map(|m| (m.item_id.as_str(), m)).collect();
    log.items()
        .ids()
        .iter()
        .map(|id| {
            let mut g: Vec<usize> = by_item
                .get(id.as_str())
                .map(|m| m.genres.iter().map(|x| code[x.as_str()]).collect())
                .unwrap_or_default();
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect()
}

/// Ingests, filters and splits the corpus and loads the item side
/// information. Events on items without a row in every enabled embedding
/// table are dropped before splitting, so all backbones share one catalog.
pub fn prepare(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Prepared> {
    let mut timings = Timings::default();
    let mut warnings = Vec::new();
    let mut log = timings
        .time("ingest", || -> Result<InteractionLog> {
            let log = load_interactions(config.resolve(&config.dataset.path), config.dataset.format)?;
            if config.split.k_core > 0 {
                return Ok(k_core_filter(&log, config.split.k_core)?);
            }
            Ok(log)
        })
        .stage("ingest")?;

    let (metadata, texts, tables) = timings
        .time("textprep", || -> Result<_> {
            let metadata = match &config.dataset.metadata {
                Some(p) => Some(load_item_metadata(config.resolve(p), config.dataset.metadata_format)?),
                None => None,
            };
            let texts = match &metadata {
                Some(m) => build_texts(config, m, out_dir)?,
                None => Vec::new(),
            };
            let tables = load_tables(config, &mut warnings)?;
            Ok((metadata, texts, tables))
        })
        .stage("textprep")?;

    let aligned = timings
        .time("align", || -> Result<Option<AlignedFeatures>> {
            if tables.is_empty() {
                return Ok(None);
            }
            let aligned = align(&tables)?;
            let keep: BTreeSet<&str> = aligned.item_ids.iter().map(String::as_str).collect();
            let before = log.len();
            log = log.retain_items(|id| keep.contains(id));
            if log.len() < before {
                warnings.push(format!(
                    "dropped {} interactions on items missing from an embedding table",
                    before - log.len()
                ));
            }
            if log.is_empty() {
                return Err(BenchError::Config("no interactions remain after aligning with the embeddings".into()));
            }
            Ok(Some(aligned))
        })
        .stage("align")?;

    let plan = timings
        .time("split", || -> Result<SplitPlan> {
            let s = &config.split;
            let seed = config.runtime.seed;
            let plan = split(&log, s.strategy, s.test_ratio, derive_seed(seed, "split"))?;
            if s.simulate_cold_start {
                return Ok(simulate_cold_start(&plan, &log, s.cold_fraction, derive_seed(seed, "cold-start"))?);
            }
            Ok(plan)
        })
        .stage("split")?;

    let genres = metadata.as_deref().map(|m| genre_index(&log, m));
    Ok(Prepared {
        log,
        plan,
        aligned,
        texts,
        genres,
        warnings,
        stage_seconds: timings.0,
    })
}

/// Content features for the catalog items. VBPR and VMF see one block;
/// AMR gets one gate input per modality when the operator keeps them apart.
fn content_features(
    family: ModelFamily,
    log: &InteractionLog,
    aligned: &AlignedFeatures,
    fused: &FusedFeatures,
) -> Result<ItemFeatures> {
    let ids = log.items().ids();
    let blocks: Vec<(Option<Modality>, DMatrix<f64>)> = match (family, fused.operator, fused.stage) {
        (ModelFamily::Amr, FusionOperator::Concat, _) => {
            aligned.blocks.iter().map(|b| (Some(b.modality), b.matrix.clone())).collect()
        }
        (ModelFamily::Amr, _, FusionStage::Mid) => {
            let mut off = 0;
            fused
                .projections
                .iter()
                .map(|p| {
                    let w = p.loadings.ncols();
                    let block = fused.matrix.columns(off, w).into_owned();
                    off += w;
                    (None, block)
                })
                .collect()
        }
        _ => vec![(None, fused.matrix.clone())],
    };
    let refs: Vec<(Option<Modality>, &DMatrix<f64>)> = blocks.iter().map(|(m, x)| (*m, x)).collect();
    Ok(item_features_for(ids, &fused.item_ids, &refs)?)
}

/// Per-item rows of the aligned concatenation, for list diversity.
fn diversity_rows(log: &InteractionLog, aligned: &AlignedFeatures) -> Vec<Option<Vec<f64>>> {
    let (matrix, _) = aligned.concatenated();
    let index: HashMap<&str, usize> = aligned.item_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    log.items()
        .ids()
        .iter()
        .map(|id| index.get(id.as_str()).map(|&r| matrix.row(r).iter().copied().collect()))
        .collect()
}

fn to_rows(log: &InteractionLog, lists: &[RankedList]) -> Vec<InterchangeRow> {
    lists
        .iter()
        .flat_map(|l| {
            l.items.iter().zip(&l.scores).enumerate().map(|(r, (&i, &s))| InterchangeRow {
                user: log.users().id(l.user).to_string(),
                item: log.items().id(i).to_string(),
                rank: r + 1,
                score: s,
            })
        })
        .collect()
}

fn write_lists(path: &Path, log: &InteractionLog, lists: &[RankedList]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    write_interchange(std::io::BufWriter::new(file), &to_rows(log, lists))?;
    Ok(())
}

fn write_texts(path: &Path, texts: &[CanonicalText]) -> Result<()> {
    let mut sorted: Vec<&CanonicalText> = texts.iter().collect();
    sorted.sort_by(|a, b| compare_ids(&a.item_id, &b.item_id));
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').has_headers(false).from_writer(file);
    for t in sorted {
        let mode = match t.mode {
            crate::textprep::TextMode::Na => "NA",
            crate::textprep::TextMode::A => "A",
        };
        w.write_record([t.item_id.as_str(), mode, t.text.as_str()])
            .map_err(|e| BenchError::Io { path: path.display().to_string(), source: e.into() })?;
    }
    w.flush().map_err(io_error(path))
}

fn write_trials(path: &Path, best: &BestHyper) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| BenchError::Io { path: path.display().to_string(), source: e.into() };
    w.write_record(["id", "params", "seed", "recall", "ndcg", "score", "error"]).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &best.trials {
        let params: Vec<String> = t.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([
            t.id.to_string(),
            params.join(";"),
            t.seed.to_string(),
            opt(t.recall),
            opt(t.ndcg),
            opt(t.score),
            t.error.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(io_error(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(io_error(path))
}

struct SystemRun {
    family: ModelFamily,
    lists: Vec<RankedList>,
    train_seconds: f64,
}

/// Runs the full pipeline and writes the run directory:
/// `results.csv`, `ranked_lists*.tsv`, `fusion.json`, `trials.csv`,
/// `canonical_text.tsv`, `synopsis_log.jsonl` and `manifest.json`.
/// The [`INCOMPLETE_MARKER`] file stays behind if any stage fails.
pub fn run_experiment(config: &ExperimentConfig, warnings: &[String]) -> Result<RunOutcome> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run in progress or failed\n").map_err(io_error(&marker))?;

    let prepared = prepare(config, Some(&dir))?;
    let mut timings = Timings(prepared.stage_seconds.clone());
    let mut warnings: Vec<String> = warnings.iter().cloned().chain(prepared.warnings.iter().cloned()).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let log = &prepared.log;
    let plan = &prepared.plan;
    if !prepared.texts.is_empty() {
        write_texts(&dir.join("canonical_text.tsv"), &prepared.texts).stage("textprep")?;
    }

    let systems = config.systems();
    let needs_features = systems.iter().any(|f| f.uses_features());
    let fused = timings
        .time("fusion", || -> Result<Option<FusedFeatures>> {
            if !needs_features {
                return Ok(None);
            }
            let aligned = prepared.aligned.as_ref().expect("validated: content models have modalities");
            let (operator, stage, cca_split) = match &config.fusion {
                Some(f) => (f.feature_operator(), f.feature_stage(), f.cca_split),
                None => (FusionOperator::Concat, FusionStage::Early, CcaSplit::Halves),
            };
            let fused = fuse(aligned, operator, stage, cca_split)?;
            FusionRecord::new(fused.operator, fused.stage, fused.projections.clone()).save(dir.join("fusion.json"))?;
            Ok(Some(fused))
        })
        .stage("fusion")?;

    let base_ctx = EvalContext {
        k: config.evaluation.k,
        catalog_size: log.n_items(),
        relevant: plan.test_items_by_user(log),
        popularity: plan.train_popularity(log),
        history: plan.train_items_by_user(log),
        features: prepared.aligned.as_ref().map(|a| diversity_rows(log, a)),
        item_genres: prepared.genres.clone(),
        item_ids: Some(log.items().ids().to_vec()),
        cold_mode: config.evaluation.cold_mode,
    };
    let train_data = TrainData::from_events(log, &plan.train);
    let needs_validation = config.model.grid.is_some()
        || matches!(&config.fusion, Some(f) if f.stage == FusionStageName::Late && f.weights == WeightSchedule::Proportional);
    let validation = if needs_validation {
        Some(validation_plan(log, plan, derive_seed(config.runtime.seed, "validation-fold")).stage("train")?)
    } else {
        None
    };

    let mut best_hyper = None;
    let mut runs = Vec::new();
    let mut validation_scores = Vec::new();
    for &family in &systems {
        let features = match &fused {
            Some(f) if family.uses_features() => Some(
                content_features(family, log, prepared.aligned.as_ref().expect("aligned"), f).stage("fusion")?,
            ),
            _ => None,
        };
        let mut hp = config.base_hyper(family);
        let problem = |base| HpoProblem {
            log,
            validation: validation.as_ref().expect("validation fold"),
            family,
            features: features.as_ref(),
            base,
            master_seed: config.runtime.seed,
            objective: config.model.objective,
        };
        if family == config.model.family {
            if let Some(grid) = &config.model.grid {
                let best = timings
                    .time("hpo", || grid_search(&problem(hp.clone()), grid, config.runtime.hpo_workers()))
                    .stage("hpo")?;
                write_trials(&dir.join("trials.csv"), &best).stage("hpo")?;
                hp = best.hyper.clone();
                best_hyper = Some(best);
            }
        }
        if config.is_late() && validation.is_some() {
            let single: super::GridSpec = [("epochs".to_string(), vec![hp.epochs as f64])].into_iter().collect();
            let best = timings.time("hpo", || grid_search(&problem(hp.clone()), &single, 1)).stage("hpo")?;
            validation_scores.push(best.score);
        }
        hp.seed = derive_seed(config.runtime.seed, &format!("train:{family}"));
        let t0 = Instant::now();
        let model = timings
            .time("train", || train_model(family, &train_data, features.as_ref(), &hp))
            .stage("train")?;
        let train_seconds = t0.elapsed().as_secs_f64();
        let lists = timings
            .time("recommend", || rank_test_users(&model, log, plan, config.evaluation.k))
            .stage("recommend")?;
        runs.push(SystemRun { family, lists, train_seconds });
    }

    let mut rows = Vec::new();
    let m = &config.modality;
    let enabled = m.enabled_modalities();
    let variant = |modality: Modality| {
        if enabled.contains(&modality) {
            m.variant(modality).to_string()
        } else {
            String::new()
        }
    };
    let row = |model: String, fusion: String, stage: String, lists: &[RankedList], secs: f64| -> Result<ResultRow> {
        let r = evaluate(lists, &base_ctx)?;
        Ok(ResultRow {
            model,
            fusion,
            stage,
            text_variant: variant(Modality::Text),
            augmented: enabled.contains(&Modality::Text) && m.augmentation,
            audio_variant: variant(Modality::Audio),
            visual_variant: variant(Modality::Visual),
            seed: config.runtime.seed,
            k: config.evaluation.k,
            recall: r.recall,
            ndcg: r.ndcg,
            hitrate: r.hitrate,
            coverage: r.coverage,
            coldrate: r.coldrate,
            novelty: r.novelty,
            ild: r.ild,
            calibration_bias: r.calibration_bias,
            train_seconds: secs,
        })
    };
    let multi = runs.len() > 1;
    timings
        .time("evaluate", || -> Result<()> {
            for run in &runs {
                let (fusion, stage) = match &fused {
                    Some(f) if run.family.uses_features() => (
                        f.operator.label(),
                        match f.stage {
                            FusionStage::Early => "early",
                            FusionStage::Mid => "mid",
                        }
                        .to_string(),
                    ),
                    _ => ("none".to_string(), "none".to_string()),
                };
                rows.push(row(run.family.to_string(), fusion, stage, &run.lists, run.train_seconds)?);
                let name = if multi {
                    format!("ranked_lists_{}.tsv", run.family)
                } else {
                    "ranked_lists.tsv".to_string()
                };
                write_lists(&dir.join(name), log, &run.lists)?;
            }
            if let Some(f) = config.fusion.as_ref().filter(|_| config.is_late()) {
                let weights = f.weights.weights(runs.len(), (!validation_scores.is_empty()).then_some(&validation_scores[..]))?;
                let n_users = runs[0].lists.len();
                let mut fused_lists = Vec::with_capacity(n_users);
                for u in 0..n_users {
                    let user = runs[0].lists[u].user;
                    let input = FusionInput {
                        user,
                        lists: runs.iter().map(|r| r.lists[u].items.clone()).collect(),
                        catalog_size: log.n_items(),
                        weights: Some(weights.clone()),
                        rrf_k: f.rrf_k,
                        missing_rank: f.missing_rank,
                    };
                    let mut meta = aggregate(f.rule, &input)?;
                    meta.truncate(config.evaluation.k);
                    fused_lists.push(RankedList { user, items: meta.items, scores: meta.fused_scores });
                }
                let label = runs.iter().map(|r| r.family.as_str()).collect::<Vec<_>>().join("+");
                let secs = runs.iter().map(|r| r.train_seconds).sum();
                rows.push(row(label, f.rule.as_str().to_string(), "late".into(), &fused_lists, secs)?);
                write_lists(&dir.join("ranked_lists.tsv"), log, &fused_lists)?;
            }
            Ok(())
        })
        .stage("evaluate")?;

    write_results(&dir.join("results.csv"), &rows).stage("write")?;
    if fused.is_none() && config.fusion.is_some() && !config.is_late() {
        warnings.push("fusion block ignored".into());
    }
    warnings.dedup();
    let manifest = RunManifest {
        run_name: config.run_name(),
        config_hash: config.config_hash(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: seeds(config),
        n_interactions: log.len(),
        n_train: plan.train.len(),
        n_test: plan.test.len(),
        cold_items: plan.cold_items.len(),
        best_hyper,
        stage_seconds: timings.0,
        warnings,
    };
    write_json(&dir.join("manifest.json"), &manifest).stage("write")?;
    fs::remove_file(&marker).map_err(io_error(&marker))?;
    Ok(RunOutcome { dir, rows, manifest })
}

/// Loads and aligns the configured embeddings and applies the fusion
/// operator, writing `fused.tsv` and `fusion.json` into `out_dir`.
pub fn run_fusion_only(config: &ExperimentConfig, out_dir: &Path) -> Result<FusedFeatures> {
    let mut warnings = Vec::new();
    let tables = load_tables(config, &mut warnings).stage("textprep")?;
    for w in &warnings {
        log::warn!("{w}");
    }
    if tables.is_empty() {
        return Err(BenchError::Config("no enabled modality has an embeddings entry".into()));
    }
    let aligned = align(&tables).stage("align")?;
    let (operator, stage, cca_split) = match &config.fusion {
        Some(f) => (f.feature_operator(), f.feature_stage(), f.cca_split),
        None => (FusionOperator::Concat, FusionStage::Early, CcaSplit::Halves),
    };
    let fused = fuse(&aligned, operator, stage, cca_split).stage("fusion")?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    FusionRecord::new(fused.operator, fused.stage, fused.projections.clone())
        .save(out_dir.join("fusion.json"))
        .stage("fusion")?;
    let path = out_dir.join("fused.tsv");
    let mut text = String::new();
    for (r, id) in fused.item_ids.iter().enumerate() {
        text.push_str(id);
        for x in fused.matrix.row(r).iter() {
            text.push('\t');
            text.push_str(&x.to_string());
        }
        text.push('\n');
    }
    fs::write(&path, text).map_err(io_error(&path))?;
    Ok(fused)
}

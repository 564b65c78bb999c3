//! Stage runner: every stage reads and writes files under the work
//! directory, and `checkpoints.json` records what each completed stage
//! consumed and produced so `--resume` can skip it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    annual_counts, export_csv, stage_averages, top_k_per_year, top_rows, ANNUAL_HEADER, STAGES_HEADER, TOPK_HEADER,
};
use crate::classifier::{
    decide, evaluate, train, BagEncoder, Evaluation, Example, HeadCheckpoint, ParagraphEncoder, RemoteEncoder,
    Truncated,
};
use crate::config::PipelineConfig;
use crate::corpus::{extract_titled_paragraphs, load_corpus, serialize_corpus, Paper, Paragraph};
use crate::error::{Error, Result};
use crate::generate::{generate_all, read_phrases, write_phrases, ChatBackend, GenerationBackend, OfflineBackend};
use crate::llm::{api_key_from_env, ChatConfig, ChatModel, RemoteChat};
use crate::metrics::{evaluate_generation, RougeReport};
use crate::normalize::{cluster_records, normalize_phrases, write_cluster_report};
use crate::pu::{run_spy_pipeline, split_dataset, PoolManifest};
use crate::shallow::EmbeddingBagModel;
use crate::stage::{classify_all, read_staged, write_staged, StagedPhrase};
use crate::workflow::{assemble, render_table, write_flowcharts, ResearchWorkflow};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoints.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const PAPERS: &str = "papers.jsonl";
pub const PARAGRAPHS: &str = "paragraphs.jsonl";
pub const TITLED: &str = "titled.jsonl";
pub const POOLS: &str = "pools.json";
pub const SHALLOW_MODEL: &str = "shallow.json";
pub const HEAD: &str = "head.json";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CLASSIFIED: &str = "classified.jsonl";
pub const PHRASES: &str = "phrases.jsonl";
pub const NORMALIZED: &str = "normalized.jsonl";
pub const CLUSTERS: &str = "clusters.jsonl";
pub const STAGED: &str = "staged.jsonl";
pub const WORKFLOWS: &str = "workflows.jsonl";
pub const WORKFLOW_TABLE: &str = "workflows.tsv";
pub const FLOWCHART_DIR: &str = "flowcharts";
pub const ANNUAL_CSV: &str = "annual.csv";
pub const STAGES_CSV: &str = "stages.csv";
pub const TOPK_CSV: &str = "topk.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Ingest,
    Pu,
    Train,
    Classify,
    Generate,
    Normalize,
    StageClassify,
    Assemble,
    Analytics,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 9] = [
        PipelineStage::Ingest,
        PipelineStage::Pu,
        PipelineStage::Train,
        PipelineStage::Classify,
        PipelineStage::Generate,
        PipelineStage::Normalize,
        PipelineStage::StageClassify,
        PipelineStage::Assemble,
        PipelineStage::Analytics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Pu => "pu",
            PipelineStage::Train => "train",
            PipelineStage::Classify => "classify",
            PipelineStage::Generate => "generate",
            PipelineStage::Normalize => "normalize",
            PipelineStage::StageClassify => "stage_classify",
            PipelineStage::Assemble => "assemble",
            PipelineStage::Analytics => "analytics",
        }
    }

    /// Work-directory files the stage reads. Ingest also reads the corpus.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            PipelineStage::Ingest => &[],
            PipelineStage::Pu => &[PARAGRAPHS],
            PipelineStage::Train => &[PARAGRAPHS, POOLS, SHALLOW_MODEL],
            PipelineStage::Classify => &[PARAGRAPHS, SHALLOW_MODEL, HEAD],
            PipelineStage::Generate => &[PARAGRAPHS, CLASSIFIED],
            PipelineStage::Normalize => &[PHRASES],
            PipelineStage::StageClassify => &[NORMALIZED],
            PipelineStage::Assemble => &[PAPERS, NORMALIZED, STAGED],
            PipelineStage::Analytics => &[PAPERS, WORKFLOWS],
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|st| st.name() == wanted)
            .ok_or_else(|| Error::Config(format!("unknown pipeline stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    /// Relative to the work directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCheckpoint {
    pub stage: PipelineStage,
    pub status: StageStatus,
    /// Digest over the stage's configuration and input files.
    pub fingerprint: String,
    pub artifacts: Vec<ArtifactDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoints {
    pub version: u32,
    pub stages: Vec<StageCheckpoint>,
}

impl Default for Checkpoints {
    fn default() -> Self {
        Checkpoints {
            version: CHECKPOINT_VERSION,
            stages: Vec::new(),
        }
    }
}

impl Checkpoints {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoints =
            serde_json::from_str(&raw).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if c.version != CHECKPOINT_VERSION {
            warn!("ignoring checkpoint file with version {}", c.version);
            return Ok(Self::default());
        }
        Ok(c)
    }

    pub fn get(&self, stage: PipelineStage) -> Option<&StageCheckpoint> {
        self.stages.iter().find(|c| c.stage == stage)
    }

    fn put(&mut self, cp: StageCheckpoint) {
        self.stages.retain(|c| c.stage != cp.stage);
        self.stages.push(cp);
        self.stages.sort_by_key(|c| c.stage);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: PipelineStage,
    pub skipped: bool,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: Vec<StageOutcome>,
}

/// One row of `classified.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphPrediction {
    pub paper_id: String,
    pub ordinal: usize,
    pub y_prob: f64,
    pub y_pred: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub positives: usize,
    pub reliable_negatives: usize,
    pub split_sizes: [usize; 3],
    pub max_len: usize,
    pub best_epoch: usize,
    pub test: Evaluation,
}

/// One record of an `evaluate` input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPair {
    pub generated: String,
    pub reference: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                field: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Reads ROUGE input pairs and scores them.
pub fn evaluate_pairs(path: &Path, macro_average: bool) -> Result<RougeReport> {
    let pairs: Vec<GenerationPair> = read_jsonl(path)?;
    let pairs: Vec<(String, String)> = pairs.into_iter().map(|p| (p.generated, p.reference)).collect();
    evaluate_generation(&pairs, macro_average)
}

pub struct Pipeline {
    config: PipelineConfig,
    workdir: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let workdir = config.workdir.clone();
        fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        Ok(Pipeline { config, workdir })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::Dependency { path: p })
        }
    }

    fn corpus_path(&self) -> Result<&Path> {
        let p = self
            .config
            .corpus_path
            .as_deref()
            .ok_or_else(|| Error::Config("corpus_path is not set".into()))?;
        if !p.is_file() {
            return Err(Error::Dependency { path: p.to_path_buf() });
        }
        Ok(p)
    }

    /// Configuration slice a stage's outputs depend on.
    fn stage_settings(&self, stage: PipelineStage) -> serde_json::Value {
        let c = &self.config;
        let chat_model = |cfg: &ChatConfig| serde_json::json!({"model": cfg.model, "base_url": cfg.base_url});
        let v = match stage {
            PipelineStage::Ingest => Ok(serde_json::json!({})),
            PipelineStage::Pu => serde_json::to_value(&c.spy),
            PipelineStage::Train => serde_json::to_value((&c.training, c.split_ratios, &c.spy.spies_rejoin_positives, self.encoder_id())),
            PipelineStage::Classify => serde_json::to_value(self.encoder_id()),
            PipelineStage::Generate => serde_json::to_value((
                &c.generation,
                c.offline,
                if c.offline { serde_json::Value::Null } else { chat_model(&c.chat) },
            )),
            PipelineStage::Normalize => serde_json::to_value(&c.normalizer),
            PipelineStage::StageClassify => serde_json::to_value((
                &c.stage,
                c.offline,
                if c.offline { serde_json::Value::Null } else { chat_model(&c.chat) },
            )),
            PipelineStage::Assemble => Ok(serde_json::json!({})),
            PipelineStage::Analytics => serde_json::to_value(&c.analytics),
        };
        v.unwrap_or(serde_json::Value::Null)
    }

    fn encoder_id(&self) -> String {
        match (&self.config.encoder, self.config.offline) {
            (Some(e), false) => format!("remote:{}", e.base_url),
            _ => "bag".to_string(),
        }
    }

    pub fn fingerprint(&self, stage: PipelineStage) -> Result<String> {
        let mut inputs: Vec<(String, String)> = Vec::new();
        if stage == PipelineStage::Ingest {
            inputs.push(("<corpus>".into(), file_digest(self.corpus_path()?)?));
        }
        for name in stage.inputs() {
            inputs.push((name.to_string(), file_digest(&self.require(name)?)?));
        }
        let doc = serde_json::json!({
            "stage": stage.name(),
            "settings": self.stage_settings(stage),
            "inputs": inputs,
        });
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    fn artifacts_intact(&self, cp: &StageCheckpoint) -> bool {
        cp.artifacts.iter().all(|a| {
            let p = self.workdir.join(&a.path);
            matches!(file_digest(&p), Ok(d) if d == a.sha256)
        })
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.workdir)
            .unwrap_or(p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Runs one stage (or skips it when `resume` and its checkpoint still
    /// matches) and records the checkpoint.
    pub fn run_stage(&self, stage: PipelineStage, resume: bool) -> Result<StageOutcome> {
        let wrap = |e: Error| match e {
            Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.name().to_string(),
                source: Box::new(e),
            },
        };
        let cp_path = self.path(CHECKPOINT_FILE);
        let mut checkpoints = Checkpoints::load(&cp_path).map_err(wrap)?;
        let fingerprint = self.fingerprint(stage).map_err(wrap)?;
        if resume {
            if let Some(cp) = checkpoints.get(stage) {
                if cp.fingerprint == fingerprint && self.artifacts_intact(cp) {
                    info!("{stage}: up to date, skipped");
                    return Ok(StageOutcome {
                        stage,
                        skipped: true,
                        artifacts: cp.artifacts.iter().map(|a| a.path.clone()).collect(),
                    });
                }
                info!("{stage}: checkpoint stale, re-running");
            }
        }
        info!("{stage}: running");
        let produced = self.execute(stage).map_err(wrap)?;
        let artifacts = produced
            .iter()
            .map(|p| {
                Ok(ArtifactDigest {
                    path: self.relative(p),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        let names = artifacts.iter().map(|a| a.path.clone()).collect();
        checkpoints.put(StageCheckpoint {
            stage,
            status: StageStatus::Complete,
            fingerprint,
            artifacts,
        });
        write_json(&cp_path, &checkpoints).map_err(wrap)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            artifacts: names,
        })
    }

    /// Runs stages in order through `until` and writes `summary.json`.
    pub fn run(&self, resume: bool, until: Option<PipelineStage>) -> Result<RunSummary> {
        let last = until.unwrap_or(PipelineStage::Analytics);
        let mut summary = RunSummary::default();
        for stage in PipelineStage::ALL.into_iter().filter(|s| *s <= last) {
            summary.stages.push(self.run_stage(stage, resume)?);
        }
        write_json(&self.path(SUMMARY_FILE), &summary)?;
        Ok(summary)
    }

    fn execute(&self, stage: PipelineStage) -> Result<Vec<PathBuf>> {
        match stage {
            PipelineStage::Ingest => self.ingest(),
            PipelineStage::Pu => self.pu(),
            PipelineStage::Train => self.train(),
            PipelineStage::Classify => self.classify(),
            PipelineStage::Generate => self.generate(),
            PipelineStage::Normalize => self.normalize(),
            PipelineStage::StageClassify => self.stage_classify(),
            PipelineStage::Assemble => self.assemble(),
            PipelineStage::Analytics => self.analytics(),
        }
    }

    fn ingest(&self) -> Result<Vec<PathBuf>> {
        let papers = load_corpus(self.corpus_path()?)?;
        info!("loaded {} papers", papers.len());
        let papers_path = self.path(PAPERS);
        fs::write(&papers_path, serialize_corpus(&papers)).map_err(|e| Error::io(&papers_path, e))?;
        let paragraphs: Vec<Paragraph> = papers.iter().flat_map(|p| p.paragraphs().cloned()).collect();
        let para_path = self.path(PARAGRAPHS);
        write_jsonl(&para_path, &paragraphs)?;
        let titled = self.extract_titled(&papers)?;
        Ok(vec![papers_path, para_path, titled])
    }

    /// Writes `titled.jsonl` from already-ingested papers.
    pub fn extract(&self) -> Result<PathBuf> {
        let papers = load_corpus(self.require(PAPERS)?)?;
        self.extract_titled(&papers)
    }

    fn extract_titled(&self, papers: &[Paper]) -> Result<PathBuf> {
        let titled: Vec<Paragraph> = papers.iter().flat_map(extract_titled_paragraphs).collect();
        info!("{} titled paragraphs", titled.len());
        let path = self.path(TITLED);
        write_jsonl(&path, &titled)?;
        Ok(path)
    }

    fn paragraphs(&self) -> Result<Vec<Paragraph>> {
        read_jsonl(&self.require(PARAGRAPHS)?)
    }

    fn pu(&self) -> Result<Vec<PathBuf>> {
        let paragraphs = self.paragraphs()?;
        let (positives, unlabeled): (Vec<Paragraph>, Vec<Paragraph>) =
            paragraphs.into_iter().partition(Paragraph::is_titled);
        info!("PU input: {} positives, {} unlabeled", positives.len(), unlabeled.len());
        let run = run_spy_pipeline(&positives, &unlabeled, &self.config.spy)?;
        for w in &run.diagnostics.warnings {
            warn!("{w}");
        }
        let pools = self.path(POOLS);
        PoolManifest::new(&run, &self.config.spy).save(&pools)?;
        let model = self.path(SHALLOW_MODEL);
        run.model.save(&model)?;
        Ok(vec![pools, model])
    }

    fn encoder(&self) -> Result<Box<dyn ParagraphEncoder>> {
        match (&self.config.encoder, self.config.offline) {
            (Some(cfg), false) => Ok(Box::new(RemoteEncoder::connect(cfg, api_key_from_env())?)),
            _ => {
                let model = EmbeddingBagModel::load(self.require(SHALLOW_MODEL)?)?;
                Ok(Box::new(BagEncoder::new(model)))
            }
        }
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let paragraphs = self.paragraphs()?;
        let pools = PoolManifest::load(self.require(POOLS)?)?.resolve(&paragraphs)?;
        let positives = pools.training_positives(self.config.spy.spies_rejoin_positives);
        let mut examples: Vec<Example> = positives.iter().map(|p| (p.text.clone(), 1)).collect();
        examples.extend(pools.reliable_negatives.iter().map(|p| (p.text.clone(), 0)));
        let (tr, va, te) = split_dataset(&examples, self.config.split_ratios, self.config.training.seed)?;
        if va.is_empty() || te.is_empty() {
            return Err(Error::Data(format!(
                "{} labelled paragraphs are too few for a {:?} split",
                examples.len(),
                self.config.split_ratios
            )));
        }
        let encoder = self.encoder()?;
        let outcome = train(encoder.as_ref(), &tr, &va, &self.config.training)?;
        let truncated = Truncated {
            inner: encoder.as_ref(),
            max_len: outcome.max_len,
        };
        let test = evaluate(&outcome.params, &truncated, &te, self.config.training.decision_threshold)?;
        info!(
            "head: best epoch {}, test F1 {:.4}",
            outcome.best_epoch, test.scores.f1
        );
        let head = self.path(HEAD);
        HeadCheckpoint::new(&outcome, &self.config.training).save(&head)?;
        let report = self.path(TRAIN_REPORT);
        write_json(
            &report,
            &TrainReport {
                positives: positives.len(),
                reliable_negatives: pools.reliable_negatives.len(),
                split_sizes: [tr.len(), va.len(), te.len()],
                max_len: outcome.max_len,
                best_epoch: outcome.best_epoch,
                test,
            },
        )?;
        Ok(vec![head, report])
    }

    fn classify(&self) -> Result<Vec<PathBuf>> {
        let paragraphs = self.paragraphs()?;
        let head = HeadCheckpoint::load(self.require(HEAD)?)?;
        let encoder = self.encoder()?;
        if encoder.dimension() != head.input_dim {
            return Err(Error::Data(format!(
                "encoder dimension {} does not match head input {}",
                encoder.dimension(),
                head.input_dim
            )));
        }
        let truncated = Truncated {
            inner: encoder.as_ref(),
            max_len: head.max_len,
        };
        let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
        let xs = truncated.encode_batch(&texts)?;
        let threshold = head.config.decision_threshold;
        let predictions = paragraphs
            .iter()
            .zip(&xs)
            .map(|(p, x)| {
                let y_prob = head.params.forward(x)?;
                Ok(ParagraphPrediction {
                    paper_id: p.paper_id.clone(),
                    ordinal: p.ordinal,
                    y_prob,
                    y_pred: decide(y_prob, threshold),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        info!(
            "{} of {} paragraphs classified as workflow paragraphs",
            predictions.iter().filter(|p| p.y_pred == 1).count(),
            predictions.len()
        );
        let path = self.path(CLASSIFIED);
        write_jsonl(&path, &predictions)?;
        Ok(vec![path])
    }

    fn chat(&self, model: Option<&str>, temperature: f64) -> Result<RemoteChat> {
        let mut cfg = self.config.chat.clone();
        if let Some(m) = model {
            cfg.model = m.to_string();
        }
        cfg.temperature = temperature;
        RemoteChat::new(cfg, api_key_from_env())
    }

    fn generate(&self) -> Result<Vec<PathBuf>> {
        let paragraphs = self.paragraphs()?;
        let predictions: Vec<ParagraphPrediction> = read_jsonl(&self.require(CLASSIFIED)?)?;
        let positive: BTreeSet<(&str, usize)> = predictions
            .iter()
            .filter(|p| p.y_pred == 1)
            .map(|p| (p.paper_id.as_str(), p.ordinal))
            .collect();
        let selected: Vec<Paragraph> = paragraphs
            .into_iter()
            .filter(|p| positive.contains(&(p.paper_id.as_str(), p.ordinal)))
            .collect();
        let gen = &self.config.generation;
        let template = gen.template()?;
        let remote;
        let backend: Box<dyn GenerationBackend + '_> = if self.config.offline {
            Box::new(OfflineBackend)
        } else {
            remote = self.chat(None, gen.params.temperature)?;
            Box::new(ChatBackend { model: &remote })
        };
        let pass = generate_all(
            backend.as_ref(),
            &template,
            &selected,
            gen.params,
            gen.max_len,
            self.config.chat.concurrency,
        )?;
        if !pass.empty.is_empty() {
            warn!("{} paragraphs produced no phrase", pass.empty.len());
        }
        let path = self.path(PHRASES);
        write_phrases(&path, &pass.phrases)?;
        Ok(vec![path])
    }

    fn normalize(&self) -> Result<Vec<PathBuf>> {
        let mut phrases = read_phrases(self.require(PHRASES)?)?;
        let tau = self.config.normalizer.tau;
        let clusters = normalize_phrases(&mut phrases, tau)?;
        info!("{} phrases in {} clusters", phrases.len(), clusters.len());
        let norm = self.path(NORMALIZED);
        write_phrases(&norm, &phrases)?;
        let report = self.path(CLUSTERS);
        write_cluster_report(&report, &cluster_records(&clusters, tau))?;
        Ok(vec![norm, report])
    }

    fn stage_classify(&self) -> Result<Vec<PathBuf>> {
        let phrases = read_phrases(self.require(NORMALIZED)?)?;
        let unique: Vec<String> = phrases
            .iter()
            .map(|p| p.text().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cfg = &self.config.stage;
        let remote = if self.config.offline {
            None
        } else {
            Some(self.chat(Some(&cfg.model_name), cfg.temperature)?)
        };
        let client = remote.as_ref().map(|c| c as &dyn ChatModel);
        let staged = classify_all(client, cfg, &unique, self.config.chat.concurrency)?;
        let path = self.path(STAGED);
        write_staged(&path, &staged)?;
        Ok(vec![path])
    }

    fn assemble(&self) -> Result<Vec<PathBuf>> {
        let papers = load_corpus(self.require(PAPERS)?)?;
        let phrases = read_phrases(self.require(NORMALIZED)?)?;
        let staged: HashMap<String, StagedPhrase> = read_staged(self.require(STAGED)?)?
            .into_iter()
            .map(|s| (s.phrase.clone(), s))
            .collect();
        let mut per_paper: BTreeMap<&str, Vec<(StagedPhrase, usize)>> = BTreeMap::new();
        for p in &phrases {
            let s = staged.get(p.text()).ok_or_else(|| {
                Error::Data(format!("phrase `{}` has no stage in {STAGED}", p.text()))
            })?;
            per_paper
                .entry(p.paper_id.as_str())
                .or_default()
                .push((s.clone(), p.paragraph_ordinal));
        }
        let workflows: Vec<ResearchWorkflow> = papers
            .iter()
            .map(|paper| assemble(&paper.id, per_paper.get(paper.id.as_str()).map_or(&[][..], Vec::as_slice)))
            .collect();
        let empty = workflows.iter().filter(|w| w.is_empty()).count();
        if empty > 0 {
            info!("{empty} papers have no workflow content");
        }
        let jsonl = self.path(WORKFLOWS);
        write_jsonl(&jsonl, &workflows)?;
        let table = self.path(WORKFLOW_TABLE);
        fs::write(&table, render_table(&workflows)).map_err(|e| Error::io(&table, e))?;
        let dir = self.path(FLOWCHART_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let mut out = vec![jsonl, table];
        out.extend(write_flowcharts(&dir, &workflows)?);
        Ok(out)
    }

    fn analytics(&self) -> Result<Vec<PathBuf>> {
        let papers = load_corpus(self.require(PAPERS)?)?;
        let years: HashMap<String, i32> = papers.iter().map(|p| (p.id.clone(), p.year)).collect();
        let workflows: Vec<ResearchWorkflow> = read_jsonl(&self.require(WORKFLOWS)?)?;
        let annual = self.path(ANNUAL_CSV);
        export_csv(&annual, &ANNUAL_HEADER, &annual_counts(&workflows, &years)?)?;
        let stages = self.path(STAGES_CSV);
        export_csv(&stages, &STAGES_HEADER, &stage_averages(&workflows, &years)?)?;
        let topk = self.path(TOPK_CSV);
        let top = top_k_per_year(&workflows, &years, self.config.analytics.top_k)?;
        export_csv(&topk, &TOPK_HEADER, &top_rows(&top))?;
        Ok(vec![annual, stages, topk])
    }
}

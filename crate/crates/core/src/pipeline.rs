//! The end-to-end flow, one function per stage. Every stage reads its
//! inputs from and writes its outputs to the output directory, so stages
//! can be run one at a time or all together with the same result.
//!
//! ```text
//! out/
//!   keys/warehouse.key, keys/warehouse.pub
//!   sources/<id>.csv          plaintext held by each source
//!   dropbox/<id>.ecp          encrypted frames as received
//!   staging/<id>.csv          decrypted at the warehouse
//!   warehouse/cleaned.csv, warehouse/cleaning_report.txt
//!   perturbed/perturbed.csv
//!   rules/original_<n>.txt, rules/perturbed_<n>.txt
//!   report/report.csv, report/report.txt
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Settings, SourceInput, TransportMode};
use crate::curve::EcPoint;
use crate::elgamal::{keygen as make_keys, random_scalar, CryptoError, KeyPair};
use crate::etl::{clean, ingest_csv, merge_sources, parse_csv, CleanPolicy, CleaningReport, Dataset, EtlError};
use crate::mining::{format_rules, run_experiment, AccuracyReport, ExperimentResult, MiningError, SyntheticModel};
use crate::perturb::{transform_dataset, PerturbError};
use crate::transport::{
    decrypt_batch, encrypt_batch, send_batches, EncryptedBatch, FileDropBox, ReceivedFrame, SourceManifest,
    StreamReceiver, TransportError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Keygen,
    Send,
    Receive,
    Etl,
    Perturb,
    Mine,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Keygen => "keygen",
            Stage::Send => "send",
            Stage::Receive => "receive",
            Stage::Etl => "etl",
            Stage::Perturb => "perturb",
            Stage::Mine => "mine",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Etl(#[from] EtlError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} not found; run `{hint}` first")]
    MissingArtifact { path: PathBuf, hint: &'static str },
    #[error("{path}: {reason}")]
    MalformedArtifact { path: PathBuf, reason: String },
    #[error("no source with id `{0}` in the configuration")]
    UnknownSource(String),
    #[error("nothing has been staged; run `receive` first")]
    NothingStaged,
}

#[derive(Debug, Error)]
#[error("{stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

impl PipelineError {
    pub fn is_transport(&self) -> bool {
        matches!(self.source, StageError::Transport(_))
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn at<E: Into<StageError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, source: e.into() }
}

fn io_at(stage: Stage, path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError { stage, source: StageError::Io { path: path.into(), source } }
}

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn private_key(&self) -> PathBuf {
        self.root.join("keys/warehouse.key")
    }

    pub fn public_key(&self) -> PathBuf {
        self.root.join("keys/warehouse.pub")
    }

    pub fn source(&self, id: &str) -> PathBuf {
        self.root.join("sources").join(format!("{id}.csv"))
    }

    pub fn dropbox(&self) -> PathBuf {
        self.root.join("dropbox")
    }

    pub fn staging(&self) -> PathBuf {
        self.root.join("staging")
    }

    pub fn cleaned(&self) -> PathBuf {
        self.root.join("warehouse/cleaned.csv")
    }

    pub fn cleaning_report(&self) -> PathBuf {
        self.root.join("warehouse/cleaning_report.txt")
    }

    pub fn perturbed(&self) -> PathBuf {
        self.root.join("perturbed/perturbed.csv")
    }

    pub fn rules(&self, kind: &str, records: usize) -> PathBuf {
        self.root.join("rules").join(format!("{kind}_{records}.txt"))
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report/report.csv")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.root.join("report/report.txt")
    }
}

fn write(stage: Stage, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_at(stage, dir))?;
    }
    fs::write(path, contents).map_err(io_at(stage, path))
}

fn read(stage: Stage, path: &Path, hint: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(PipelineError { stage, source: StageError::MissingArtifact { path: path.into(), hint } });
    }
    fs::read_to_string(path).map_err(io_at(stage, path))
}

fn malformed(stage: Stage, path: &Path, reason: impl ToString) -> PipelineError {
    PipelineError { stage, source: StageError::MalformedArtifact { path: path.into(), reason: reason.to_string() } }
}

fn parse_point(stage: Stage, path: &Path, text: &str) -> Result<EcPoint> {
    let (x, y) = text.trim().split_once(',').ok_or_else(|| malformed(stage, path, "expected `x,y`"))?;
    let coord = |s: &str| s.trim().parse::<u32>().map_err(|e| malformed(stage, path, e));
    Ok(EcPoint::affine(coord(x)?, coord(y)?))
}

fn point_text(pt: EcPoint) -> String {
    match pt.coords() {
        Some((x, y)) => format!("{x},{y}"),
        None => "infinity".into(),
    }
}

/// Generates the warehouse key pair and writes both halves.
pub fn keygen(s: &Settings) -> Result<KeyPair> {
    let scalar = match s.private_key {
        Some(k) => k,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed("warehouse-key", s.seed, ""));
            random_scalar(&s.domain, &mut rng)
        }
    };
    let keys = make_keys(&s.domain, scalar).map_err(at(Stage::Keygen))?;
    let layout = Layout::new(&s.out_dir);
    let public = point_text(keys.public_point());
    write(Stage::Keygen, &layout.private_key(), format!("private_scalar={scalar}\npublic={public}\n"))?;
    write(Stage::Keygen, &layout.public_key(), format!("{public}\n"))?;
    Ok(keys)
}

fn load_public(s: &Settings, stage: Stage) -> Result<EcPoint> {
    let path = Layout::new(&s.out_dir).public_key();
    let text = read(stage, &path, "keygen")?;
    let pt = parse_point(stage, &path, &text)?;
    if !s.domain.curve().is_on_curve(pt) {
        return Err(malformed(stage, &path, "public key is not on the configured curve"));
    }
    Ok(pt)
}

/// Reads the private key file and checks it against its public half.
pub fn load_keys(s: &Settings, stage: Stage) -> Result<KeyPair> {
    let path = Layout::new(&s.out_dir).private_key();
    let text = read(stage, &path, "keygen")?;
    let mut scalar = None;
    let mut public = None;
    for line in text.lines() {
        match line.split_once('=') {
            Some(("private_scalar", v)) => scalar = v.trim().parse::<u64>().ok(),
            Some(("public", v)) => public = Some(parse_point(stage, &path, v)?),
            _ => {}
        }
    }
    let scalar = scalar.ok_or_else(|| malformed(stage, &path, "missing private_scalar"))?;
    let keys = make_keys(&s.domain, scalar).map_err(|e| malformed(stage, &path, e))?;
    if public != Some(keys.public_point()) {
        return Err(malformed(stage, &path, "public point does not match the private scalar"));
    }
    Ok(keys)
}

/// The plaintext dataset held by one source.
pub fn load_source(s: &Settings, id: &str) -> Result<Dataset> {
    let (_, input) = s
        .sources
        .iter()
        .find(|(sid, _)| sid == id)
        .ok_or_else(|| PipelineError { stage: Stage::Send, source: StageError::UnknownSource(id.into()) })?;
    let data = match input {
        SourceInput::Csv(path) => ingest_csv(path, &s.schema).map_err(at(Stage::Send))?,
        SourceInput::Generator { records, label_noise } => {
            SyntheticModel::medical(*label_noise).generate(*records, crate::derive_seed("generate", s.seed, id))
        }
    };
    Ok(data.with_provenance(vec![id.to_owned()]))
}

/// Loads and encrypts one source's data for the warehouse, keeping a copy
/// of the plaintext under `sources/`.
pub fn prepare_batch(s: &Settings, id: &str) -> Result<EncryptedBatch> {
    let public = load_public(s, Stage::Send)?;
    let data = load_source(s, id)?;
    save(&data, Stage::Send, &Layout::new(&s.out_dir).source(id))?;
    let manifest = SourceManifest {
        source_id: id.to_owned(),
        domain: s.domain,
        recipient_public: public,
        schema: s.schema.clone(),
        record_count: data.len(),
    };
    encrypt_batch(&data, &manifest, &s.encoding, s.seed).map_err(at(Stage::Send))
}

fn save(data: &Dataset, stage: Stage, path: &Path) -> Result<()> {
    write(stage, path, data.to_canonical_string())
}

/// Encrypts and transmits one source.
pub fn send(s: &Settings, id: &str) -> Result<()> {
    let batch = prepare_batch(s, id)?;
    match s.transport {
        TransportMode::File => {
            FileDropBox::new(Layout::new(&s.out_dir).dropbox()).send(&batch).map_err(at(Stage::Send))?;
        }
        TransportMode::Stream => send_batches(s.endpoint, &[batch]).map_err(at(Stage::Send))?,
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiveSummary {
    /// `(source id, rows staged)`, by source id.
    pub staged: Vec<(String, usize)>,
}

fn stage_frames(s: &Settings, frames: &[ReceivedFrame]) -> Result<ReceiveSummary> {
    let layout = Layout::new(&s.out_dir);
    let staging = layout.staging();
    if staging.exists() {
        for entry in fs::read_dir(&staging).map_err(io_at(Stage::Receive, &staging))? {
            let path = entry.map_err(io_at(Stage::Receive, &staging))?.path();
            if path.extension().is_some_and(|x| x == "csv") {
                fs::remove_file(&path).map_err(io_at(Stage::Receive, &path))?;
            }
        }
    }
    fs::create_dir_all(&staging).map_err(io_at(Stage::Receive, &staging))?;
    if frames.is_empty() {
        return Ok(ReceiveSummary { staged: Vec::new() });
    }
    let keys = load_keys(s, Stage::Receive)?;
    let mut by_source: BTreeMap<&str, Vec<&ReceivedFrame>> = BTreeMap::new();
    for f in frames {
        by_source.entry(&f.source_id).or_default().push(f);
    }
    let mut staged = Vec::new();
    for (id, frames) in by_source {
        let mut rows = Vec::new();
        for f in frames {
            let data = decrypt_batch(&f.batch, &keys, &s.domain, &s.encoding, &s.schema).map_err(at(Stage::Receive))?;
            rows.extend(data.rows().iter().cloned());
        }
        let data = Dataset::new(s.schema.clone(), rows, vec![id.to_owned()]).map_err(at(Stage::Receive))?;
        save(&data, Stage::Receive, &staging.join(format!("{id}.csv")))?;
        staged.push((id.to_owned(), data.len()));
    }
    Ok(ReceiveSummary { staged })
}

fn finish_receive(s: &Settings, frames: Vec<ReceivedFrame>, failures: Vec<TransportError>) -> Result<ReceiveSummary> {
    let summary = stage_frames(s, &frames)?;
    match failures.into_iter().next() {
        Some(first) => Err(at(Stage::Receive)(first)),
        None => Ok(summary),
    }
}

/// Collects frames from the drop box (file mode) and decrypts them into
/// `staging/`. Stream mode uses [`receive_stream`] instead.
pub fn receive_files(s: &Settings) -> Result<ReceiveSummary> {
    let delivery = FileDropBox::new(Layout::new(&s.out_dir).dropbox()).receive_all().map_err(at(Stage::Receive))?;
    finish_receive(s, delivery.frames, delivery.failures)
}

/// Accepts one connection per configured source on `receiver`, keeps each
/// frame under `dropbox/` and decrypts into `staging/`.
pub fn receive_stream(s: &Settings, receiver: &StreamReceiver) -> Result<ReceiveSummary> {
    let delivery = receiver.receive(s.sources.len(), s.timeout).map_err(at(Stage::Receive))?;
    let dropbox = FileDropBox::new(Layout::new(&s.out_dir).dropbox());
    for f in &delivery.frames {
        write(Stage::Receive, &dropbox.path_for(&f.source_id), &f.bytes)?;
    }
    finish_receive(s, delivery.frames, delivery.failures)
}

/// Receives in the configured mode, binding the configured endpoint in
/// stream mode.
pub fn receive(s: &Settings) -> Result<ReceiveSummary> {
    match s.transport {
        TransportMode::File => receive_files(s),
        TransportMode::Stream => {
            let receiver = StreamReceiver::bind(s.endpoint).map_err(|e| at(Stage::Receive)(TransportError::from(e)))?;
            receive_stream(s, &receiver)
        }
    }
}

/// Merges the staged datasets and cleans the result.
pub fn etl(s: &Settings) -> Result<(Dataset, CleaningReport)> {
    let layout = Layout::new(&s.out_dir);
    let staging = layout.staging();
    let mut paths: Vec<PathBuf> = match fs::read_dir(&staging) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    if paths.is_empty() {
        return Err(PipelineError { stage: Stage::Etl, source: StageError::NothingStaged });
    }
    let staged = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_at(Stage::Etl, p))?;
            parse_csv(&text, &s.schema).map_err(at(Stage::Etl))
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_sources(staged).map_err(at(Stage::Etl))?;
    let (cleaned, report) = clean(&merged, CleanPolicy::default());
    save(&cleaned, Stage::Etl, &layout.cleaned())?;
    write(Stage::Etl, &layout.cleaning_report(), format!("{report}\n"))?;
    Ok((cleaned, report))
}

fn load_dataset(s: &Settings, stage: Stage, path: &Path, hint: &'static str) -> Result<Dataset> {
    let text = read(stage, path, hint)?;
    parse_csv(&text, &s.schema).map_err(at(stage))
}

/// Perturbs the cleaned warehouse data.
pub fn perturb(s: &Settings) -> Result<Dataset> {
    let layout = Layout::new(&s.out_dir);
    let cleaned = load_dataset(s, Stage::Perturb, &layout.cleaned(), "etl")?;
    let perturbed = transform_dataset(&cleaned, &s.plan).map_err(at(Stage::Perturb))?;
    save(&perturbed, Stage::Perturb, &layout.perturbed())?;
    Ok(perturbed)
}

/// Mines original and perturbed data over the schedule and writes rules
/// and the report.
pub fn mine(s: &Settings) -> Result<ExperimentResult> {
    let layout = Layout::new(&s.out_dir);
    let cleaned = load_dataset(s, Stage::Mine, &layout.cleaned(), "etl")?;
    let perturbed = load_dataset(s, Stage::Mine, &layout.perturbed(), "perturb")?;
    let result = run_experiment(&cleaned, &perturbed, s.model.as_ref(), &s.experiment, &s.noise_description())
        .map_err(at(Stage::Mine))?;
    for sample in &result.samples {
        write(Stage::Mine, &layout.rules("original", sample.records), format_rules(&sample.original))?;
        write(Stage::Mine, &layout.rules("perturbed", sample.records), format_rules(&sample.perturbed))?;
    }
    write(Stage::Mine, &layout.report_csv(), result.report.to_csv())?;
    write(Stage::Mine, &layout.report_txt(), result.report.to_string())?;
    Ok(result)
}

/// Reloads the report written by [`mine`] and rewrites its text table.
pub fn report(s: &Settings) -> Result<AccuracyReport> {
    let layout = Layout::new(&s.out_dir);
    let path = layout.report_csv();
    let text = read(Stage::Report, &path, "mine")?;
    let report = AccuracyReport::from_csv(&text, s.experiment.params, &s.noise_description(), s.seed)
        .map_err(at(Stage::Report))?;
    write(Stage::Report, &layout.report_txt(), report.to_string())?;
    Ok(report)
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub received: ReceiveSummary,
    pub cleaning: CleaningReport,
    pub report: AccuracyReport,
}

/// Runs every stage in order. In stream mode the sources send concurrently
/// to a receiver bound on the configured endpoint.
pub fn run_pipeline(s: &Settings) -> Result<PipelineOutcome> {
    keygen(s)?;
    let received = match s.transport {
        TransportMode::File => {
            for (id, _) in &s.sources {
                send(s, id)?;
            }
            receive_files(s)?
        }
        TransportMode::Stream => {
            let receiver = StreamReceiver::bind(s.endpoint).map_err(|e| at(Stage::Receive)(TransportError::from(e)))?;
            let addr = receiver.local_addr().map_err(|e| at(Stage::Receive)(TransportError::from(e)))?;
            std::thread::scope(|scope| {
                let senders: Vec<_> = s
                    .sources
                    .iter()
                    .map(|(id, _)| {
                        scope.spawn(move || -> Result<()> {
                            let batch = prepare_batch(s, id)?;
                            send_batches(addr, &[batch]).map_err(at(Stage::Send))
                        })
                    })
                    .collect();
                let received = receive_stream(s, &receiver);
                for h in senders {
                    h.join().expect("sender thread panicked")?;
                }
                received
            })?
        }
    };
    let (_, cleaning) = etl(s)?;
    perturb(s)?;
    mine(s)?;
    let report = report(s)?;
    Ok(PipelineOutcome { received, cleaning, report })
}

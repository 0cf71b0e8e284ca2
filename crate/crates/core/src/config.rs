//! Pipeline configuration, read from a TOML file.
//!
//! Every section is optional; a file containing only `seed = 1` describes
//! two synthetic sources of 400 records each sent to the warehouse through
//! a file drop box. Relative paths are resolved against the directory of
//! the config file.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::curve::DomainParams;
use crate::elgamal::EncodingParams;
use crate::etl::Schema;
use crate::mining::{ExperimentSpec, MiningParams, SyntheticModel, DEFAULT_SCHEDULE};
use crate::perturb::{PerturbOp, PerturbPlan, PlanEntry};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub p: u64,
    pub a: u64,
    pub b: u64,
    pub gx: u32,
    pub gy: u32,
}

impl Default for DomainConfig {
    /// y^2 = x^3 + x + 42 over GF(1000003); G has prime order 1001713.
    fn default() -> Self {
        DomainConfig { p: 1_000_003, a: 1, b: 42, gx: 2, gy: 463_086 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    #[serde(default = "default_pad")]
    pub k_pad: u32,
}

fn default_pad() -> u32 {
    EncodingParams::DEFAULT_PAD
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { k_pad: EncodingParams::DEFAULT_PAD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    File,
    Stream,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarehouseConfig {
    /// Private scalar; derived from the seed when absent.
    pub private_key: Option<u64>,
    #[serde(default)]
    pub transport: TransportMode,
    /// Listen address in stream mode. Port 0 picks a free port, which only
    /// works when sources and warehouse run in one `pipeline` process.
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_endpoint() -> String {
    "127.0.0.1:0".into()
}

fn default_timeout() -> u64 {
    10_000
}

impl Default for WarehouseConfig {
    fn default() -> Self {
        WarehouseConfig {
            private_key: None,
            transport: TransportMode::File,
            endpoint: default_endpoint(),
            timeout_ms: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub records: usize,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
}

fn default_label_noise() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    /// CSV file with a header matching the schema.
    pub input: Option<PathBuf>,
    pub generator: Option<GeneratorConfig>,
}

fn default_sources() -> Vec<SourceConfig> {
    ["S1", "S2"]
        .into_iter()
        .map(|id| SourceConfig {
            id: id.into(),
            input: None,
            generator: Some(GeneratorConfig { records: 400, label_noise: default_label_noise() }),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Applied to every confidential attribute without its own entry.
    #[serde(default = "default_op")]
    pub op: PerturbOp,
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default)]
    pub attrs: Vec<PlanEntry>,
}

fn default_op() -> PerturbOp {
    PerturbOp::Mult
}

fn default_variance() -> f64 {
    0.01
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { op: default_op(), variance: default_variance(), attrs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    #[serde(default = "default_minsup")]
    pub minsup: f64,
    #[serde(default = "default_minconf")]
    pub minconf: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
}

fn default_minsup() -> f64 {
    MiningParams::default().minsup
}

fn default_minconf() -> f64 {
    MiningParams::default().minconf
}

fn default_bins() -> usize {
    MiningParams::default().bins
}

fn default_schedule() -> Vec<usize> {
    DEFAULT_SCHEDULE.to_vec()
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            minsup: default_minsup(),
            minconf: default_minconf(),
            bins: default_bins(),
            schedule: default_schedule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub warehouse: WarehouseConfig,
    /// Defaults to the synthetic generator's schema.
    pub schema: Option<Schema>,
    #[serde(default = "default_sources")]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    42
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

/// A source after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceInput {
    Csv(PathBuf),
    Generator { records: usize, label_noise: f64 },
}

/// A validated configuration with every derived object built.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub domain: DomainParams,
    pub encoding: EncodingParams,
    pub private_key: Option<u64>,
    pub transport: TransportMode,
    pub endpoint: SocketAddr,
    pub timeout: std::time::Duration,
    pub schema: Schema,
    pub sources: Vec<(String, SourceInput)>,
    pub plan: PerturbPlan,
    pub experiment: ExperimentSpec,
    /// Present when every source is synthetic, enabling planted-rule accuracy.
    pub model: Option<SyntheticModel>,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks the whole configuration, reporting the first violated field.
    pub fn validate(&self) -> Result<Settings, ConfigError> {
        let d = &self.domain;
        let domain = DomainParams::from_u64(d.p, d.a, d.b, d.gx, d.gy).map_err(|e| invalid("domain", e))?;
        let encoding = EncodingParams::new(self.encoding.k_pad, &domain).map_err(|e| invalid("encoding.k_pad", e))?;

        let w = &self.warehouse;
        if let Some(k) = w.private_key {
            if k == 0 || k >= domain.order() {
                return Err(invalid(
                    "warehouse.private_key",
                    format!("must be in [1, {}) for this domain", domain.order()),
                ));
            }
        }
        let endpoint: SocketAddr = w.endpoint.parse().map_err(|e| invalid("warehouse.endpoint", e))?;
        if w.timeout_ms == 0 {
            return Err(invalid("warehouse.timeout_ms", "must be positive"));
        }

        let all_synthetic = self.sources.iter().all(|s| s.generator.is_some());
        let model = all_synthetic.then(|| {
            let noise = self.sources.first().and_then(|s| s.generator.as_ref()).map_or(0.1, |g| g.label_noise);
            SyntheticModel::medical(noise)
        });
        let synthetic_schema = SyntheticModel::default().schema();
        let schema = match &self.schema {
            Some(s) => {
                if self.sources.iter().any(|s| s.generator.is_some()) && *s != synthetic_schema {
                    return Err(invalid("schema", "generator sources require the generator's schema"));
                }
                s.clone()
            }
            None => synthetic_schema,
        };
        if self.sources.is_empty() {
            return Err(invalid("sources", "at least one source is required"));
        }
        let mut ids = HashSet::new();
        let mut sources = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            let field = format!("sources[{i}]");
            let id_ok = !s.id.is_empty()
                && s.id.len() <= 255
                && s.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !id_ok {
                return Err(invalid(format!("{field}.id"), "1-255 characters from [A-Za-z0-9_-]"));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(invalid(format!("{field}.id"), format!("duplicate source id `{}`", s.id)));
            }
            let input = match (&s.input, &s.generator) {
                (Some(path), None) => SourceInput::Csv(self.resolve_path(path)),
                (None, Some(g)) => {
                    if !(0.0..=1.0).contains(&g.label_noise) {
                        return Err(invalid(format!("{field}.generator.label_noise"), "must be in [0, 1]"));
                    }
                    SourceInput::Generator { records: g.records, label_noise: g.label_noise }
                }
                _ => return Err(invalid(field, "exactly one of `input` or `generator` is required")),
            };
            sources.push((s.id.clone(), input));
        }

        let p = &self.perturbation;
        if !(p.variance >= 0.0 && p.variance.is_finite()) {
            return Err(invalid("perturbation.variance", "must be a finite number >= 0"));
        }
        for (i, e) in p.attrs.iter().enumerate() {
            if schema.confidential_index(&e.attr).is_none() {
                return Err(invalid(
                    format!("perturbation.attrs[{i}].attr"),
                    format!("`{}` is not a confidential attribute", e.attr),
                ));
            }
            if !(e.variance >= 0.0 && e.variance.is_finite()) {
                return Err(invalid(format!("perturbation.attrs[{i}].variance"), "must be a finite number >= 0"));
            }
        }
        if p.attrs.iter().map(|e| &e.attr).collect::<HashSet<_>>().len() != p.attrs.len() {
            return Err(invalid("perturbation.attrs", "an attribute is listed twice"));
        }
        let entries = schema
            .confidential()
            .iter()
            .map(|a| {
                p.attrs.iter().find(|e| e.attr == a.name).cloned().unwrap_or(PlanEntry {
                    attr: a.name.clone(),
                    op: p.op,
                    variance: p.variance,
                })
            })
            .collect();
        let plan = PerturbPlan::new(entries, self.seed).map_err(|e| invalid("perturbation.attrs", e))?;

        let m = &self.mining;
        for (name, v) in [("mining.minsup", m.minsup), ("mining.minconf", m.minconf)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, "must be in (0, 1]"));
            }
        }
        if m.bins == 0 {
            return Err(invalid("mining.bins", "must be at least 1"));
        }
        if m.schedule.is_empty() || m.schedule.contains(&0) {
            return Err(invalid("mining.schedule", "must list positive record counts"));
        }
        let experiment = ExperimentSpec {
            params: MiningParams { minsup: m.minsup, minconf: m.minconf, bins: m.bins },
            schedule: m.schedule.clone(),
            seed: self.seed,
        };

        if self.output.dir.as_os_str().is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }

        Ok(Settings {
            seed: self.seed,
            domain,
            encoding,
            private_key: w.private_key,
            transport: w.transport,
            endpoint,
            timeout: std::time::Duration::from_millis(w.timeout_ms),
            schema,
            sources,
            plan,
            experiment,
            model,
            out_dir: self.resolve_path(&self.output.dir),
        })
    }
}

impl Settings {
    /// Short description of the perturbation plan for reports.
    pub fn noise_description(&self) -> String {
        let entries = self.plan.entries();
        let op = |op: PerturbOp| match op {
            PerturbOp::Mult => "mult",
            PerturbOp::Add => "add",
        };
        match entries.first() {
            Some(first) if entries.iter().all(|e| e.op == first.op && e.variance == first.variance) => {
                format!("{} variance={}", op(first.op), first.variance)
            }
            _ => entries
                .iter()
                .map(|e| format!("{}:{}:{}", e.attr, op(e.op), e.variance))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_example_spells_out_the_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/medical.toml");
        let mut loaded = PipelineConfig::load(&path).unwrap();
        loaded.base_dir = PipelineConfig::default().base_dir;
        assert_eq!(loaded, PipelineConfig::default());
    }

    fn field_of(text: &str) -> String {
        match PipelineConfig::from_toml(text, ".").unwrap().validate() {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_validate() {
        let cfg = PipelineConfig::default();
        let s = cfg.validate().unwrap();
        assert_eq!(s.domain.order(), 1_001_713);
        assert_eq!(s.encoding.max_message(), 49_999);
        assert_eq!(s.sources.len(), 2);
        assert_eq!(s.plan.entries().len(), 4);
        assert_eq!(s.experiment.schedule, vec![200, 400, 600, 800]);
        assert!(s.model.is_some());
        assert_eq!(s.noise_description(), "mult variance=0.01");
    }

    #[test]
    fn first_violated_field_is_named() {
        assert_eq!(field_of("[domain]\np = 23\na = 0\nb = 0\ngx = 1\ngy = 1"), "domain");
        assert_eq!(field_of("[encoding]\nk_pad = 0"), "encoding.k_pad");
        assert_eq!(field_of("[warehouse]\nprivate_key = 0"), "warehouse.private_key");
        assert_eq!(field_of("[warehouse]\nendpoint = \"nowhere\""), "warehouse.endpoint");
        assert_eq!(field_of("sources = []"), "sources");
        assert_eq!(field_of("[[sources]]\nid = \"S 1\"\n[sources.generator]\nrecords = 3"), "sources[0].id");
        assert_eq!(field_of("[[sources]]\nid = \"S1\""), "sources[0]");
        assert_eq!(field_of("[perturbation]\nvariance = -1.0"), "perturbation.variance");
        assert_eq!(
            field_of("[[perturbation.attrs]]\nattr = \"nope\"\nop = \"add\"\nvariance = 1.0"),
            "perturbation.attrs[0].attr"
        );
        assert_eq!(field_of("[mining]\nminsup = 0.0"), "mining.minsup");
        assert_eq!(field_of("[mining]\nschedule = []"), "mining.schedule");
        // domain is checked before mining
        assert_eq!(field_of("[domain]\np = 24\na = 1\nb = 1\ngx = 0\ngy = 1\n[mining]\nbins = 0"), "domain");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sed = 4", "."), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn csv_sources_and_overrides() {
        let text = r#"
            seed = 7
            [schema]
            confidential = [{ name = "x", scale = 10 }]
            categorical = ["c"]
            [[sources]]
            id = "A"
            input = "a.csv"
            [perturbation]
            op = "add"
            variance = 2.0
            [output]
            dir = "/tmp/elsewhere"
        "#;
        let s = PipelineConfig::from_toml(text, "/data").unwrap().validate().unwrap();
        assert_eq!(s.sources, vec![("A".to_string(), SourceInput::Csv("/data/a.csv".into()))]);
        assert!(s.model.is_none());
        assert_eq!(s.plan.entries()[0].op, PerturbOp::Add);
        assert_eq!(s.out_dir, PathBuf::from("/tmp/elsewhere"));
        assert_eq!(s.plan.seed(), 7);
    }

    #[test]
    fn generator_requires_its_schema() {
        let text = "[schema]\nconfidential = [{ name = \"x\" }]";
        assert_eq!(field_of(text), "schema");
    }
}

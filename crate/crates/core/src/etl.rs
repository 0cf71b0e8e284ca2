//! Warehouse-side transformation: schemas, tabular datasets, CSV ingestion,
//! multi-source merge and cleaning.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("datasets do not share a schema")]
    SchemaMismatch,
    #[error("CSV header {found:?} does not match schema columns {expected:?}")]
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("row {row} has {found} cells, schema expects {expected}")]
    Arity { row: usize, expected: usize, found: usize },
    #[error("value {value} of `{attr}` quantizes outside [0, {max}]")]
    QuantizeOutOfRange { attr: String, value: f64, max: u64 },
    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

fn default_scale() -> f64 {
    100.0
}

/// A confidential numeric column and its fixed-point quantization
/// `q = round((v - offset) * scale)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ConfidentialAttr {
    pub name: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

impl ConfidentialAttr {
    pub fn new(name: impl Into<String>) -> Self {
        ConfidentialAttr { name: name.into(), scale: default_scale(), offset: 0.0 }
    }

    pub fn quantize(&self, value: f64, max: u64) -> Result<u64, EtlError> {
        let q = ((value - self.offset) * self.scale).round();
        if !q.is_finite() || q < 0.0 || q > max as f64 {
            return Err(EtlError::QuantizeOutOfRange { attr: self.name.clone(), value, max });
        }
        Ok(q as u64)
    }

    pub fn dequantize(&self, q: u64) -> f64 {
        q as f64 / self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    confidential: Vec<ConfidentialAttr>,
    categorical: Vec<String>,
}

#[derive(Deserialize)]
struct RawSchema {
    confidential: Vec<ConfidentialAttr>,
    #[serde(default)]
    categorical: Vec<String>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = EtlError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        Schema::new(raw.confidential, raw.categorical)
    }
}

impl Schema {
    pub fn new(confidential: Vec<ConfidentialAttr>, categorical: Vec<String>) -> Result<Self, EtlError> {
        let mut seen = HashSet::new();
        for name in confidential.iter().map(|a| &a.name).chain(&categorical) {
            if name.is_empty() {
                return Err(EtlError::InvalidSchema("empty attribute name".into()));
            }
            if !seen.insert(name) {
                return Err(EtlError::InvalidSchema(format!("duplicate attribute `{name}`")));
            }
        }
        for attr in &confidential {
            if !(attr.scale > 0.0 && attr.scale.is_finite()) || !attr.offset.is_finite() {
                return Err(EtlError::InvalidSchema(format!("bad quantization for `{}`", attr.name)));
            }
        }
        Ok(Schema { confidential, categorical })
    }

    pub fn confidential(&self) -> &[ConfidentialAttr] {
        &self.confidential
    }

    pub fn categorical(&self) -> &[String] {
        &self.categorical
    }

    /// Column order used in CSV files: confidential columns, then categorical.
    pub fn columns(&self) -> Vec<String> {
        self.confidential
            .iter()
            .map(|a| a.name.clone())
            .chain(self.categorical.iter().cloned())
            .collect()
    }

    pub fn confidential_index(&self, name: &str) -> Option<usize> {
        self.confidential.iter().position(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// `None` marks a missing or unparseable reading.
    pub confidential: Vec<Option<f64>>,
    pub categorical: Vec<String>,
}

impl Record {
    pub fn new(confidential: Vec<f64>, categorical: Vec<String>) -> Self {
        Record { confidential: confidential.into_iter().map(Some).collect(), categorical }
    }

    fn is_complete(&self) -> bool {
        self.confidential.iter().all(Option::is_some)
    }

    fn key(&self) -> (Vec<Option<u64>>, &[String]) {
        let bits = self.confidential.iter().map(|v| v.map(f64::to_bits)).collect();
        (bits, &self.categorical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Record>,
    provenance: Vec<String>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Record>, provenance: Vec<String>) -> Result<Self, EtlError> {
        let (d, c) = (schema.confidential.len(), schema.categorical.len());
        for (i, row) in rows.iter().enumerate() {
            if row.confidential.len() != d || row.categorical.len() != c {
                return Err(EtlError::Arity {
                    row: i,
                    expected: d + c,
                    found: row.confidential.len() + row.categorical.len(),
                });
            }
        }
        Ok(Dataset { schema, rows, provenance })
    }

    pub fn empty(schema: Schema) -> Self {
        Dataset { schema, rows: Vec::new(), provenance: Vec::new() }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Vec<String>) -> Self {
        self.provenance = provenance;
        self
    }

    /// Column `k` of the confidential attributes.
    pub fn column(&self, k: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r.confidential[k])
    }

    /// Keeps only the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same schema and provenance, replacing every confidential column.
    pub(crate) fn with_confidential_columns(&self, columns: Vec<Vec<Option<f64>>>) -> Dataset {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| Record {
                confidential: columns.iter().map(|col| col[i]).collect(),
                categorical: r.categorical.clone(),
            })
            .collect();
        Dataset { schema: self.schema.clone(), rows, provenance: self.provenance.clone() }
    }

    /// Canonical CSV: a sorted `#provenance:` line, the header, then rows.
    pub fn write_canonical<W: Write>(&self, out: W) -> Result<(), EtlError> {
        let mut out = out;
        let provenance: BTreeSet<&String> = self.provenance.iter().collect();
        let joined: Vec<&str> = provenance.iter().map(|s| s.as_str()).collect();
        writeln!(out, "#provenance:{}", joined.join(","))?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.schema.columns())?;
        for row in &self.rows {
            let cells = row
                .confidential
                .iter()
                .map(|v| v.map(|v| v.to_string()).unwrap_or_default())
                .chain(row.categorical.iter().cloned());
            writer.write_record(cells)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_canonical_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EtlError> {
        let file = std::fs::File::create(path)?;
        self.write_canonical(std::io::BufWriter::new(file))
    }
}

/// Parses CSV text whose header must equal `schema.columns()`. A leading
/// `#provenance:` line, if present, populates the dataset's provenance.
pub fn parse_csv(text: &str, schema: &Schema) -> Result<Dataset, EtlError> {
    let (provenance, body) = match text.strip_prefix("#provenance:") {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let ids = line
                .trim_end_matches('\r')
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            (ids, body)
        }
        None => (Vec::new(), text),
    };

    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body.as_bytes());
    let expected = schema.columns();
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(EtlError::HeaderMismatch { expected, found });
    }

    let d = schema.confidential.len();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(EtlError::Arity { row: i, expected: expected.len(), found: rec.len() });
        }
        let confidential = rec.iter().take(d).map(|cell| cell.trim().parse::<f64>().ok()).collect();
        let categorical = rec.iter().skip(d).map(str::to_owned).collect();
        rows.push(Record { confidential, categorical });
    }
    Ok(Dataset { schema: schema.clone(), rows, provenance })
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, EtlError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, schema)
}

/// Concatenates datasets ordered by source id, preserving row order within
/// each source.
pub fn merge_sources(mut batches: Vec<Dataset>) -> Result<Dataset, EtlError> {
    let Some(first) = batches.first() else {
        return Err(EtlError::InvalidSchema("nothing to merge".into()));
    };
    let schema = first.schema.clone();
    if batches.iter().any(|b| b.schema != schema) {
        return Err(EtlError::SchemaMismatch);
    }
    batches.sort_by(|a, b| a.provenance.iter().min().cmp(&b.provenance.iter().min()));
    let provenance: BTreeSet<String> = batches.iter().flat_map(|b| b.provenance.iter().cloned()).collect();
    let rows = batches.into_iter().flat_map(|b| b.rows).collect();
    Ok(Dataset { schema, rows, provenance: provenance.into_iter().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanPolicy {
    pub drop_missing: bool,
    pub dedupe: bool,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        CleanPolicy { drop_missing: true, dedupe: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub duplicates: usize,
    pub dropped_missing: usize,
}

impl CleaningReport {
    pub fn is_clean(&self) -> bool {
        self.duplicates == 0 && self.dropped_missing == 0
    }
}

impl fmt::Display for CleaningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows_in={} rows_out={} duplicates={} dropped_missing={}",
            self.rows_in, self.rows_out, self.duplicates, self.dropped_missing
        )
    }
}

/// Drops rows with missing confidential values, then removes exact
/// duplicates keeping the first occurrence. Surviving cells are untouched.
pub fn clean(data: &Dataset, policy: CleanPolicy) -> (Dataset, CleaningReport) {
    let mut report = CleaningReport { rows_in: data.rows.len(), ..Default::default() };
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(data.rows.len());
    for row in &data.rows {
        if policy.drop_missing && !row.is_complete() {
            report.dropped_missing += 1;
            continue;
        }
        if policy.dedupe && !seen.insert(row.key()) {
            report.duplicates += 1;
            continue;
        }
        rows.push(row.clone());
    }
    report.rows_out = rows.len();
    let cleaned = Dataset { schema: data.schema.clone(), rows, provenance: data.provenance.clone() };
    (cleaned, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::new(
            vec![ConfidentialAttr::new("glucose"), ConfidentialAttr::new("bp")],
            vec!["diagnosis".into()],
        )
        .unwrap()
    }

    fn rec(g: f64, bp: f64, diag: &str) -> Record {
        Record::new(vec![g, bp], vec![diag.into()])
    }

    fn ds(rows: Vec<Record>, src: &str) -> Dataset {
        Dataset::new(schema(), rows, vec![src.into()]).unwrap()
    }

    #[test]
    fn schema_validation() {
        assert!(Schema::new(vec![ConfidentialAttr::new("a")], vec!["a".into()]).is_err());
        let mut bad = ConfidentialAttr::new("a");
        bad.scale = 0.0;
        assert!(Schema::new(vec![bad], vec![]).is_err());
        assert_eq!(schema().columns(), vec!["glucose", "bp", "diagnosis"]);
    }

    #[test]
    fn arity_enforced() {
        let r = Record::new(vec![1.0], vec!["x".into()]);
        assert!(matches!(Dataset::new(schema(), vec![r], vec![]), Err(EtlError::Arity { .. })));
    }

    #[test]
    fn merge_examples() {
        let d1 = ds(vec![rec(1.0, 2.0, "a"), rec(3.0, 4.0, "b"), rec(5.0, 6.0, "c")], "S1");
        let d2 = ds(vec![rec(7.0, 8.0, "d"), rec(9.0, 1.0, "e")], "S2");

        let one = merge_sources(vec![d1.clone()]).unwrap();
        assert_eq!(one.rows(), d1.rows());
        assert_eq!(one.provenance(), ["S1"]);

        let merged = merge_sources(vec![d2.clone(), d1.clone()]).unwrap();
        assert_eq!(merged.len(), 5);
        assert_eq!(merged.provenance(), ["S1", "S2"]);
        assert_eq!(merged.rows()[0], d1.rows()[0]);
        assert_eq!(merged.rows()[3], d2.rows()[0]);
        assert_eq!(merged, merge_sources(vec![d1.clone(), d2]).unwrap());

        let other = Dataset::empty(Schema::new(vec![ConfidentialAttr::new("x")], vec![]).unwrap());
        assert!(matches!(merge_sources(vec![d1, other]), Err(EtlError::SchemaMismatch)));
    }

    #[test]
    fn clean_examples() {
        let dup = ds(vec![rec(1.0, 2.0, "a"), rec(1.0, 2.0, "a"), rec(1.0, 2.0, "b")], "S1");
        let (out, report) = clean(&dup, CleanPolicy::default());
        assert_eq!(out.len(), 2);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.rows_in, 3);
        assert_eq!(report.rows_out, 2);

        let fine = ds(vec![rec(1.0, 2.0, "a"), rec(3.0, 2.0, "a")], "S1");
        let (out, report) = clean(&fine, CleanPolicy::default());
        assert_eq!(out, fine);
        assert!(report.is_clean());

        let mut missing = rec(1.0, 2.0, "a");
        missing.confidential[1] = None;
        let holes = ds(vec![missing.clone(), rec(5.0, 2.0, "a"), missing], "S1");
        let (out, report) = clean(&holes, CleanPolicy::default());
        assert_eq!(out.rows(), &[rec(5.0, 2.0, "a")]);
        assert_eq!(report.dropped_missing, 2);
        assert_eq!(report.duplicates, 0);
    }

    #[test]
    fn csv_ingest() {
        let s = schema();
        let empty = parse_csv("glucose,bp,diagnosis\n", &s).unwrap();
        assert!(empty.is_empty());

        let d = parse_csv("glucose,bp,diagnosis\n101.5,abc,\"flu, mild\"\n", &s).unwrap();
        assert_eq!(d.rows()[0].confidential, vec![Some(101.5), None]);
        assert_eq!(d.rows()[0].categorical, vec!["flu, mild".to_string()]);
        let (cleaned, report) = clean(&d, CleanPolicy::default());
        assert!(cleaned.is_empty());
        assert_eq!(report.dropped_missing, 1);

        assert!(matches!(
            parse_csv("bp,glucose,diagnosis\n", &s),
            Err(EtlError::HeaderMismatch { .. })
        ));
        assert!(matches!(ingest_csv("/nonexistent/file.csv", &s), Err(EtlError::IoFailure(_))));
    }

    #[test]
    fn canonical_roundtrip_and_determinism() {
        let d = ds(vec![rec(120.37, 80.0, "flu"), rec(0.1, 2.5, "a,b")], "S2")
            .with_provenance(vec!["S2".into(), "S1".into()]);
        let text = d.to_canonical_string();
        assert!(text.starts_with("#provenance:S1,S2\nglucose,bp,diagnosis\n120.37,80,flu\n"));
        let back = parse_csv(&text, &schema()).unwrap();
        assert_eq!(back.rows(), d.rows());
        assert_eq!(back.to_canonical_string(), text);
    }

    #[test]
    fn quantize_bounds() {
        let a = ConfidentialAttr::new("x");
        assert_eq!(a.quantize(120.37, 1_000_000).unwrap(), 12037);
        assert_eq!(a.dequantize(12037), 120.37);
        assert!(a.quantize(-0.01, 1_000_000).is_err());
        assert!(a.quantize(f64::NAN, 1_000_000).is_err());
        assert!(a.quantize(100.0, 9999).is_err());
    }

    proptest! {
        #[test]
        fn quantization_error_is_half_step(v in 0.0f64..5000.0, scale in prop::sample::select(vec![1.0, 10.0, 100.0, 1000.0])) {
            let a = ConfidentialAttr { name: "x".into(), scale, offset: 0.0 };
            let q = a.quantize(v, u64::MAX >> 11).unwrap();
            prop_assert!((a.dequantize(q) - v).abs() <= 0.5 / scale + 1e-9);
        }

        #[test]
        fn clean_is_idempotent_and_preserves_cells(
            cells in prop::collection::vec((0u8..4, 0u8..3, prop::option::weighted(0.9, 0u8..3)), 0..40)
        ) {
            let rows: Vec<Record> = cells
                .iter()
                .map(|&(g, d, bp)| Record {
                    confidential: vec![Some(g as f64), bp.map(f64::from)],
                    categorical: vec![format!("d{d}")],
                })
                .collect();
            let data = Dataset::new(schema(), rows, vec!["S1".into()]).unwrap();
            let (once, _) = clean(&data, CleanPolicy::default());
            let (twice, report) = clean(&once, CleanPolicy::default());
            prop_assert_eq!(&once, &twice);
            prop_assert!(report.is_clean());
            for row in once.rows() {
                prop_assert!(data.rows().contains(row));
            }
        }
    }
}

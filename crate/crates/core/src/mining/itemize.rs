//! Turns records into item sets: numeric attributes are cut into
//! equal-width bins fitted on the original data, categorical attributes
//! become `name=value` items.

use super::MiningError;
use crate::etl::Dataset;

#[derive(Debug, Clone, PartialEq)]
struct AttrBins {
    name: String,
    /// `bins - 1` interior edges, ascending. Empty when the attribute had
    /// no values to fit on.
    edges: Vec<f64>,
    fitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Itemizer {
    bins: usize,
    numeric: Option<Vec<AttrBins>>,
}

impl Itemizer {
    pub fn new(bins: usize) -> Result<Self, MiningError> {
        if bins == 0 {
            return Err(MiningError::InvalidBins);
        }
        Ok(Itemizer { bins, numeric: None })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Computes bin edges from the min and max of each confidential column.
    pub fn fit(&mut self, original: &Dataset) {
        let attrs = original
            .schema()
            .confidential()
            .iter()
            .enumerate()
            .map(|(k, attr)| {
                let (lo, hi) = original
                    .column(k)
                    .flatten()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let fitted = lo <= hi;
                let width = if fitted { (hi - lo) / self.bins as f64 } else { 0.0 };
                let edges = if fitted { (1..self.bins).map(|j| lo + width * j as f64).collect() } else { Vec::new() };
                AttrBins { name: attr.name.clone(), edges, fitted }
            })
            .collect();
        self.numeric = Some(attrs);
    }

    pub fn fitted(bins: usize, original: &Dataset) -> Result<Self, MiningError> {
        let mut it = Self::new(bins)?;
        it.fit(original);
        Ok(it)
    }

    /// Bin of `value` for confidential attribute `k`: the number of interior
    /// edges at or below it, so intervals are half-open and values outside
    /// the fitted range land in the first or last bin.
    pub fn bin_of(&self, k: usize, value: f64) -> Result<usize, MiningError> {
        let attrs = self.numeric.as_ref().ok_or(MiningError::UnfittedItemizer)?;
        Ok(attrs[k].edges.iter().take_while(|&&e| e <= value).count())
    }

    pub fn bin_item(name: &str, bin: usize) -> String {
        format!("{name}=bin{bin}")
    }

    /// Item label for a value of the named confidential attribute.
    pub fn numeric_item(&self, name: &str, value: f64) -> Result<Option<String>, MiningError> {
        let attrs = self.numeric.as_ref().ok_or(MiningError::UnfittedItemizer)?;
        let Some(k) = attrs.iter().position(|a| a.name == name) else {
            return Ok(None);
        };
        if !attrs[k].fitted {
            return Ok(None);
        }
        Ok(Some(Self::bin_item(name, self.bin_of(k, value)?)))
    }

    pub fn itemize(&self, data: &Dataset) -> Result<Vec<Vec<String>>, MiningError> {
        let attrs = self.numeric.as_ref().ok_or(MiningError::UnfittedItemizer)?;
        let schema = data.schema();
        if schema.confidential().len() != attrs.len()
            || schema.confidential().iter().zip(attrs).any(|(a, b)| a.name != b.name)
        {
            return Err(MiningError::ItemizerSchemaMismatch);
        }
        data.rows()
            .iter()
            .map(|row| {
                let mut items = Vec::with_capacity(row.confidential.len() + row.categorical.len());
                for (k, cell) in row.confidential.iter().enumerate() {
                    if let (Some(v), true) = (cell, attrs[k].fitted) {
                        items.push(Self::bin_item(&attrs[k].name, self.bin_of(k, *v)?));
                    }
                }
                for (name, value) in schema.categorical().iter().zip(&row.categorical) {
                    items.push(format!("{name}={value}"));
                }
                Ok(items)
            })
            .collect()
    }
}

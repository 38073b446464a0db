//! Line-delimited dataset encoding for caching and debugging.
//!
//! One sample per line: `label <TAB> domain <TAB> f0,f1,...,fd-1`.
//! Features use Rust's shortest round-trip float formatting, so
//! export → import reproduces every value bit-exactly.

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use std::fmt::Write as _;

pub fn export_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for s in dataset.samples() {
        write!(out, "{}\t{}\t", s.label, s.domain).unwrap();
        for (i, f) in s.features.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{f}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn import_dataset(text: &str, class_count: usize, domain_count: usize) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let label = parse_field::<usize>(fields.next(), "label", lineno)?;
        let domain = parse_field::<usize>(fields.next(), "domain", lineno)?;
        let feat_text = fields
            .next()
            .ok_or_else(|| Error::parse(format!("line {}: missing features", lineno + 1)))?;
        if fields.next().is_some() {
            return Err(Error::parse(format!("line {}: too many fields", lineno + 1)));
        }
        let features = feat_text
            .split(',')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(format!("line {}: bad feature '{t}': {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample::new(features, label, domain));
    }
    Dataset::new(samples, class_count, domain_count)
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    name: &str,
    lineno: usize,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let text = field.ok_or_else(|| Error::parse(format!("line {}: missing {name}", lineno + 1)))?;
    text.parse::<T>()
        .map_err(|e| Error::parse(format!("line {}: bad {name} '{text}': {e}", lineno + 1)))
}

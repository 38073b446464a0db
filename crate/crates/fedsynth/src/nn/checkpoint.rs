//! Parameter checkpoint format: a text header with the topology descriptor
//! followed by one decimal per line. Values use shortest round-trip
//! formatting, so read(write(p)) == p bit for bit.

use super::{MlpTopology, ParamVector};
use crate::error::{Error, Result};
use std::fmt::Write as _;

const MAGIC: &str = "fedsynth-params v1";

pub fn write_params(params: &ParamVector) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&serde_json::to_string(params.topology()).expect("topology serializes"));
    out.push('\n');
    writeln!(out, "{}", params.len()).unwrap();
    for v in params.values() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn read_params(text: &str) -> Result<ParamVector> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l == MAGIC => {}
        other => return Err(Error::parse(format!("bad checkpoint header: {other:?}"))),
    }
    let topo_line = lines.next().ok_or_else(|| Error::parse("missing topology line"))?;
    let topology: MlpTopology = serde_json::from_str(topo_line)
        .map_err(|e| Error::parse(format!("bad topology descriptor: {e}")))?;
    let count: usize = lines
        .next()
        .ok_or_else(|| Error::parse("missing count line"))?
        .parse()
        .map_err(|e| Error::parse(format!("bad count: {e}")))?;
    let mut values = Vec::with_capacity(count);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .map_err(|e| Error::parse(format!("bad value '{line}': {e}")))?,
        );
    }
    if values.len() != count {
        return Err(Error::parse(format!(
            "checkpoint declares {count} values, found {}",
            values.len()
        )));
    }
    ParamVector::new(values, topology)
}

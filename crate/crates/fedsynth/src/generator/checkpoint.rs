//! Generator checkpoint: a meta header, the schedule table, and the flat
//! denoiser parameters (network + embeddings), all in round-trip-exact text.

use super::denoiser::DenoiserModel;
use super::schedule::NoiseSchedule;
use super::GeneratorModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

const MAGIC: &str = "fedsynth-generator v1";

#[derive(Serialize, Deserialize)]
struct Meta {
    steps: usize,
    guidance_scale: f64,
    frozen: bool,
    data_dim: usize,
    class_count: usize,
    class_embed_dim: usize,
    time_embed_dim: usize,
    hidden_layers: Vec<usize>,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
}

pub fn write_generator(model: &GeneratorModel) -> String {
    let d = model.denoiser();
    let meta = Meta {
        steps: model.schedule().steps(),
        guidance_scale: model.guidance_scale(),
        frozen: model.is_frozen(),
        data_dim: d.data_dim(),
        class_count: d.class_count(),
        class_embed_dim: d.class_embed_dim(),
        time_embed_dim: d.time_embed_dim(),
        hidden_layers: d.topology().trunk_layers.clone(),
        norm_mean: model.norm_mean().to_vec(),
        norm_std: model.norm_std().to_vec(),
    };
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
    out.push('\n');
    for v in model.schedule().alpha_bar_table() {
        writeln!(out, "{v}").unwrap();
    }
    writeln!(out, "{}", d.param_len()).unwrap();
    for v in d.params() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn read_generator(text: &str) -> Result<GeneratorModel> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l == MAGIC => {}
        other => return Err(Error::parse(format!("bad generator header: {other:?}"))),
    }
    let meta: Meta = serde_json::from_str(
        lines.next().ok_or_else(|| Error::parse("missing generator meta"))?,
    )
    .map_err(|e| Error::parse(format!("bad generator meta: {e}")))?;

    let mut alpha_bar = Vec::with_capacity(meta.steps + 1);
    for _ in 0..=meta.steps {
        let line = lines.next().ok_or_else(|| Error::parse("truncated schedule table"))?;
        alpha_bar.push(
            line.parse::<f64>()
                .map_err(|e| Error::parse(format!("bad schedule value '{line}': {e}")))?,
        );
    }
    let schedule = NoiseSchedule::from_alpha_bar(alpha_bar)?;

    let count: usize = lines
        .next()
        .ok_or_else(|| Error::parse("missing parameter count"))?
        .parse()
        .map_err(|e| Error::parse(format!("bad parameter count: {e}")))?;
    let mut params = Vec::with_capacity(count);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        params.push(
            line.parse::<f64>()
                .map_err(|e| Error::parse(format!("bad parameter '{line}': {e}")))?,
        );
    }
    if params.len() != count {
        return Err(Error::parse(format!(
            "generator declares {count} parameters, found {}",
            params.len()
        )));
    }
    let denoiser = DenoiserModel::from_parts(
        params,
        meta.data_dim,
        meta.class_count,
        &meta.hidden_layers,
        meta.time_embed_dim,
        meta.class_embed_dim,
        meta.steps,
    )?;
    Ok(GeneratorModel::new(
        denoiser,
        schedule,
        meta.guidance_scale,
        meta.frozen,
        meta.norm_mean,
        meta.norm_std,
    ))
}

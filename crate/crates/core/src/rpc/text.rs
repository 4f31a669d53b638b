//! `KEY: value [unit]` RPC text metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{InverseRpc, Normalization, Poly20, RpcModel};
use crate::error::{Error, Result};

const SCALARS: [(&str, &str); 10] = [
    ("LINE_OFF", "pixels"),
    ("SAMP_OFF", "pixels"),
    ("LAT_OFF", "degrees"),
    ("LONG_OFF", "degrees"),
    ("HEIGHT_OFF", "meters"),
    ("LINE_SCALE", "pixels"),
    ("SAMP_SCALE", "pixels"),
    ("LAT_SCALE", "degrees"),
    ("LONG_SCALE", "degrees"),
    ("HEIGHT_SCALE", "meters"),
];

const FORWARD_BLOCKS: [&str; 4] = ["LINE_NUM_COEFF", "LINE_DEN_COEFF", "SAMP_NUM_COEFF", "SAMP_DEN_COEFF"];

const INVERSE_BLOCKS: [&str; 4] =
    ["INV_LAT_NUM_COEFF", "INV_LAT_DEN_COEFF", "INV_LONG_NUM_COEFF", "INV_LONG_DEN_COEFF"];

#[derive(Default)]
struct Entries {
    scalars: BTreeMap<String, (String, f64)>,
    coeffs: BTreeMap<String, BTreeMap<usize, f64>>,
}

impl Entries {
    fn scalar(&self, key: &str) -> Result<f64> {
        self.scalars.get(key).map(|(_, v)| *v).ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    fn has_block(&self, block: &str) -> bool {
        self.coeffs.contains_key(block)
    }

    fn block(&self, block: &str) -> Result<Poly20> {
        let entries = self.coeffs.get(block).ok_or_else(|| Error::MissingKey(format!("{block}_1")))?;
        let complete = entries.len() == 20 && entries.keys().copied().eq(1..=20);
        if !complete {
            return Err(Error::CoefficientCount { block: block.to_string(), count: entries.len() });
        }
        let mut c = [0.0; 20];
        for (i, v) in entries {
            c[i - 1] = *v;
        }
        Ok(Poly20::new(c))
    }
}

fn parse_number(key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric { key: key.to_string(), value: raw.to_string() })
}

fn split_block_index(key: &str) -> Option<(&str, usize)> {
    let (block, idx) = key.rsplit_once('_')?;
    if !block.ends_with("_COEFF") {
        return None;
    }
    idx.parse::<usize>().ok().map(|i| (block, i))
}

/// Parses RPC text. Unknown keys are ignored; each line may carry a trailing
/// unit after the value.
pub fn parse_rpc(text: &str) -> Result<RpcModel> {
    let mut entries = Entries::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::Format(format!("line {}: expected `KEY: value`", lineno + 1)));
        };
        let key = key.trim().to_ascii_uppercase();
        let raw = rest.split_whitespace().next().unwrap_or("");

        if let Some((block, idx)) = split_block_index(&key) {
            let value = parse_number(&key, raw)?;
            let slot = entries.coeffs.entry(block.to_string()).or_default();
            if slot.insert(idx, value).is_some() {
                return Err(Error::Format(format!("duplicate key {key}")));
            }
        } else if SCALARS.iter().any(|(k, _)| *k == key) || key == "MIN_HEIGHT" || key == "MAX_HEIGHT" {
            let value = parse_number(&key, raw)?;
            if entries.scalars.insert(key.clone(), (raw.to_string(), value)).is_some() {
                return Err(Error::Format(format!("duplicate key {key}")));
            }
        }
    }

    let norm = Normalization {
        line_off: entries.scalar("LINE_OFF")?,
        samp_off: entries.scalar("SAMP_OFF")?,
        lat_off: entries.scalar("LAT_OFF")?,
        lon_off: entries.scalar("LONG_OFF")?,
        hei_off: entries.scalar("HEIGHT_OFF")?,
        line_scale: entries.scalar("LINE_SCALE")?,
        samp_scale: entries.scalar("SAMP_SCALE")?,
        lat_scale: entries.scalar("LAT_SCALE")?,
        lon_scale: entries.scalar("LONG_SCALE")?,
        hei_scale: entries.scalar("HEIGHT_SCALE")?,
    };
    let line_num = entries.block("LINE_NUM_COEFF")?;
    let line_den = entries.block("LINE_DEN_COEFF")?;
    let samp_num = entries.block("SAMP_NUM_COEFF")?;
    let samp_den = entries.block("SAMP_DEN_COEFF")?;

    let inverse = if INVERSE_BLOCKS.iter().any(|b| entries.has_block(b)) {
        Some(InverseRpc {
            lat_num: entries.block(INVERSE_BLOCKS[0])?,
            lat_den: entries.block(INVERSE_BLOCKS[1])?,
            lon_num: entries.block(INVERSE_BLOCKS[2])?,
            lon_den: entries.block(INVERSE_BLOCKS[3])?,
        })
    } else {
        None
    };

    let height_range = match (entries.scalars.get("MIN_HEIGHT"), entries.scalars.get("MAX_HEIGHT")) {
        (Some((_, lo)), Some((_, hi))) => Some([*lo, *hi]),
        (None, None) => None,
        (None, Some(_)) => return Err(Error::MissingKey("MIN_HEIGHT".into())),
        (Some(_), None) => return Err(Error::MissingKey("MAX_HEIGHT".into())),
    };

    let model = RpcModel { norm, samp_num, samp_den, line_num, line_den, inverse, explicit_height_range: height_range };
    model.validate()?;
    Ok(model)
}

/// Serializes a model with shortest round-trip float formatting, so that
/// `parse_rpc(&write_rpc(m)) == m` holds exactly.
pub fn write_rpc(m: &RpcModel) -> String {
    let n = &m.norm;
    let values = [
        n.line_off,
        n.samp_off,
        n.lat_off,
        n.lon_off,
        n.hei_off,
        n.line_scale,
        n.samp_scale,
        n.lat_scale,
        n.lon_scale,
        n.hei_scale,
    ];
    let mut out = String::new();
    for ((key, unit), v) in SCALARS.iter().zip(values) {
        let _ = writeln!(out, "{key}: {v:?} {unit}");
    }
    let forward = [&m.line_num, &m.line_den, &m.samp_num, &m.samp_den];
    for (block, poly) in FORWARD_BLOCKS.iter().zip(forward) {
        for (i, c) in poly.c.iter().enumerate() {
            let _ = writeln!(out, "{block}_{}: {c:?}", i + 1);
        }
    }
    if let Some(inv) = &m.inverse {
        let polys = [&inv.lat_num, &inv.lat_den, &inv.lon_num, &inv.lon_den];
        for (block, poly) in INVERSE_BLOCKS.iter().zip(polys) {
            for (i, c) in poly.c.iter().enumerate() {
                let _ = writeln!(out, "{block}_{}: {c:?}", i + 1);
            }
        }
    }
    if let Some([lo, hi]) = m.explicit_height_range {
        let _ = writeln!(out, "MIN_HEIGHT: {lo:?} meters");
        let _ = writeln!(out, "MAX_HEIGHT: {hi:?} meters");
    }
    out
}

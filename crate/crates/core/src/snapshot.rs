//! Versioned binary snapshots of a trained recommender.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "OFFSNAP\0" | version u32 | payload length u64 | payload
//! ```
//!
//! The payload holds the feature schema, the latent layout with its slot
//! tables, the variant count and bound, the trainer config and state, then
//! every feature value vector and every variant vector as raw f64 bits.
//! Loading a saved snapshot reproduces the recommender bit for bit.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::layout::{num_pairs, IndexLayout};
use crate::model::Model;
use crate::offset::OffSet;
use crate::schema::{FeatureDescriptor, FeatureSchema};
use crate::trainer::{RescaleMode, StepMode, TrainerConfig, TrainerState};

const MAGIC: &[u8; 8] = b"OFFSNAP\0";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn save<W: Write>(offset: &OffSet, mut out: W) -> Result<()> {
    let payload = encode_payload(offset)?;
    out.write_all(MAGIC)?;
    out.write_u32::<LE>(SNAPSHOT_VERSION)?;
    out.write_u64::<LE>(payload.len() as u64)?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn to_bytes(offset: &OffSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    save(offset, &mut buf)?;
    Ok(buf)
}

pub fn load<R: Read>(mut input: R) -> Result<OffSet> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<OffSet> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a snapshot file"));
    }
    let mut header = &bytes[8..20];
    let version = header.read_u32::<LE>()?;
    if version != SNAPSHOT_VERSION {
        return Err(corrupt(&format!("unsupported snapshot version {}", version)));
    }
    let len = header.read_u64::<LE>()?;
    let payload = &bytes[20..];
    if payload.len() as u64 != len {
        return Err(corrupt(&format!(
            "payload is {} bytes, header declares {}",
            payload.len(),
            len
        )));
    }
    let mut cur = payload;
    let offset = decode_payload(&mut cur).map_err(|e| match e {
        Error::Io(_) => corrupt("payload ends early"),
        other => other,
    })?;
    if !cur.is_empty() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(offset)
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptSnapshot(msg.to_string())
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    out.write_u32::<LE>(s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) -> Result<()> {
    for &x in xs {
        out.write_u64::<LE>(x.to_bits())?;
    }
    Ok(())
}

fn encode_payload(offset: &OffSet) -> Result<Vec<u8>> {
    let model = offset.model();
    let schema = model.schema();
    let layout = model.layout();
    let cfg = offset.config();
    let st = offset.state();
    let mut out = Vec::new();

    out.write_u32::<LE>(schema.num_features() as u32)?;
    for f in schema.features() {
        write_str(&mut out, &f.name)?;
        out.write_u32::<LE>(f.cardinality() as u32)?;
        for v in &f.values {
            write_str(&mut out, v)?;
        }
    }

    out.write_u32::<LE>(layout.standalone_dim() as u32)?;
    out.write_u32::<LE>(layout.overlap_dim() as u32)?;
    out.write_u64::<LE>(layout.seed())?;
    for idx in layout.standalone_tables().iter().chain(layout.pair_tables()).flatten() {
        out.write_u32::<LE>(*idx as u32)?;
    }

    out.write_u32::<LE>(model.num_variants() as u32)?;
    out.write_u64::<LE>(model.bound().to_bits())?;

    out.write_u8(match cfg.step_mode {
        StepMode::ConstantRatio => 0,
        StepMode::ClickProbability => 1,
    })?;
    out.write_u64::<LE>(cfg.alpha.to_bits())?;
    out.write_u64::<LE>(cfg.gamma.to_bits())?;
    out.write_u64::<LE>(cfg.mu_update_cadence)?;
    out.write_u64::<LE>(cfg.mu_initial.to_bits())?;
    out.write_u8(match cfg.rescale_mode {
        RescaleMode::Off => 0,
        RescaleMode::LinfClip => 1,
    })?;

    out.write_u64::<LE>(st.mu.to_bits())?;
    out.write_u64::<LE>(st.window_clicks)?;
    out.write_u64::<LE>(st.window_nonclicks)?;
    out.write_u64::<LE>(st.total_clicks)?;
    out.write_u64::<LE>(st.total_impressions)?;
    out.write_u64::<LE>(st.log_norm.to_bits())?;
    out.write_u64::<LE>(st.window_log_sum.to_bits())?;

    for k in 0..schema.num_features() {
        write_f64s(&mut out, model.feature_family(k))?;
    }
    write_f64s(&mut out, model.variant_family())?;
    Ok(out)
}

/// Upper bound on any element count read from a snapshot, so a corrupt
/// length cannot trigger a huge allocation.
const MAX_COUNT: usize = 1 << 28;

fn read_count(cur: &mut &[u8], what: &str) -> Result<usize> {
    let n = cur.read_u32::<LE>()? as usize;
    if n > MAX_COUNT || n > cur.len() {
        return Err(corrupt(&format!("implausible {} count {}", what, n)));
    }
    Ok(n)
}

fn read_str(cur: &mut &[u8]) -> Result<String> {
    let n = read_count(cur, "string length")?;
    let mut buf = vec![0u8; n];
    cur.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| corrupt("label is not utf-8"))
}

fn read_f64(cur: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_bits(cur.read_u64::<LE>()?))
}

fn read_f64s(cur: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if n.checked_mul(8).map_or(true, |bytes| bytes > cur.len()) {
        return Err(corrupt("vector data ends early"));
    }
    (0..n).map(|_| read_f64(cur)).collect()
}

fn decode_payload(cur: &mut &[u8]) -> Result<OffSet> {
    let k = read_count(cur, "feature")?;
    let mut features = Vec::with_capacity(k);
    for _ in 0..k {
        let name = read_str(cur)?;
        let card = read_count(cur, "value")?;
        let values = (0..card).map(|_| read_str(cur)).collect::<Result<Vec<_>>>()?;
        features.push(FeatureDescriptor::new(name, values));
    }
    let schema = FeatureSchema::new(features).map_err(|e| corrupt(&e.to_string()))?;

    let s = read_count(cur, "standalone")?;
    let o = read_count(cur, "overlap")?;
    let seed = cur.read_u64::<LE>()?;
    let mut read_table = |rows: usize, cols: usize| -> Result<Vec<Vec<usize>>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| Ok(cur.read_u32::<LE>()? as usize)).collect())
            .collect()
    };
    let standalone = read_table(k, s)?;
    let pairs = read_table(num_pairs(k), o)?;
    let layout = IndexLayout::from_tables(k, s, o, seed, standalone, pairs)
        .map_err(|e| corrupt(&e.to_string()))?;

    let num_variants = read_count(cur, "variant")?;
    let bound = read_f64(cur)?;

    let config = TrainerConfig {
        step_mode: match cur.read_u8()? {
            0 => StepMode::ConstantRatio,
            1 => StepMode::ClickProbability,
            other => return Err(corrupt(&format!("unknown step mode {}", other))),
        },
        alpha: read_f64(cur)?,
        gamma: read_f64(cur)?,
        mu_update_cadence: cur.read_u64::<LE>()?,
        mu_initial: read_f64(cur)?,
        rescale_mode: match cur.read_u8()? {
            0 => RescaleMode::Off,
            1 => RescaleMode::LinfClip,
            other => return Err(corrupt(&format!("unknown rescale mode {}", other))),
        },
    };
    config.validate().map_err(|e| corrupt(&e.to_string()))?;
    let state = TrainerState {
        mu: read_f64(cur)?,
        window_clicks: cur.read_u64::<LE>()?,
        window_nonclicks: cur.read_u64::<LE>()?,
        total_clicks: cur.read_u64::<LE>()?,
        total_impressions: cur.read_u64::<LE>()?,
        log_norm: read_f64(cur)?,
        window_log_sum: read_f64(cur)?,
    };
    if !(state.mu < 0.0) {
        return Err(corrupt("step ratio must be negative"));
    }

    let d = layout.feature_dim();
    let feature_vectors = schema
        .features()
        .iter()
        .map(|f| read_f64s(cur, f.cardinality() * d))
        .collect::<Result<Vec<_>>>()?;
    let variant_vectors = read_f64s(cur, num_variants * layout.total_dim())?;
    let model = Model::from_parts(schema, layout, feature_vectors, variant_vectors, num_variants, bound)
        .map_err(|e| corrupt(&e.to_string()))?;
    Ok(OffSet::from_parts(model, state, config))
}

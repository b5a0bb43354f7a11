//! Model files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic        8 bytes  "EEPRECMD"
//! version      u32      1
//! layout       u32 length + UTF-8 feature layout descriptor
//! element      u32 length + "f32" | "f64"
//! activation   u32 length + "sigmoid" | "relu" | "elu"
//! sizes        u32 count + u32 x count
//! bn_eps       f64
//! bn_momentum  f64
//! features     u32 dim + mean f64 x dim + std f64 x dim
//! labels       u32 dim + mean f64 x dim + std f64 x dim
//! params       u64 count + element x count
//! per hidden layer: running mean, running variance, element x width each
//! ```

use std::path::Path;

use eeprec_core::nn::{Activation, ErrorCorrector, Mlp, Normalization, Real};
use eeprec_core::robot::layout;

use super::{check_header, put_string, ByteReader, FormatError};

pub const MAGIC: &[u8; 8] = b"EEPRECMD";
pub const VERSION: u32 = 1;

fn put_real<T: Real>(out: &mut Vec<u8>, v: T) {
    match T::NAME {
        "f32" => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
        _ => out.extend_from_slice(&v.as_f64().to_le_bytes()),
    }
}

fn get_real<T: Real>(r: &mut ByteReader<'_>) -> Result<T, FormatError> {
    Ok(match T::NAME {
        "f32" => T::of(f64::from(r.f32()?)),
        _ => T::of(r.f64()?),
    })
}

fn put_norm(out: &mut Vec<u8>, n: &Normalization) {
    out.extend_from_slice(&(n.dim() as u32).to_le_bytes());
    for v in n.mean.iter().chain(&n.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_norm(r: &mut ByteReader<'_>) -> Result<Normalization, FormatError> {
    let dim = r.u32()? as usize;
    let read = |r: &mut ByteReader<'_>| (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>();
    let mean = read(r)?;
    let std = read(r)?;
    Ok(Normalization { mean, std })
}

pub fn encode<T: Real>(model: &ErrorCorrector<T>) -> Vec<u8> {
    let mlp = &model.mlp;
    let mut out = Vec::with_capacity(mlp.params().len() * 8 + 4096);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_string(&mut out, layout::DESCRIPTOR);
    put_string(&mut out, T::NAME);
    put_string(&mut out, mlp.activation().name());
    out.extend_from_slice(&(mlp.sizes().len() as u32).to_le_bytes());
    for s in mlp.sizes() {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    out.extend_from_slice(&mlp.bn_eps().to_le_bytes());
    out.extend_from_slice(&mlp.bn_momentum().to_le_bytes());
    put_norm(&mut out, &model.features);
    put_norm(&mut out, &model.labels);
    out.extend_from_slice(&(mlp.params().len() as u64).to_le_bytes());
    for v in mlp.params() {
        put_real(&mut out, *v);
    }
    for (m, v) in mlp.running_mean().iter().zip(mlp.running_var()) {
        for x in m.iter().chain(v) {
            put_real(&mut out, *x);
        }
    }
    out
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<ErrorCorrector<T>, FormatError> {
    let mut r = ByteReader::new(bytes, "model");
    check_header(&mut r, MAGIC, VERSION)?;
    let desc = r.string()?;
    if desc != layout::DESCRIPTOR {
        return Err(FormatError::Layout(desc));
    }
    let element = r.string()?;
    if element != T::NAME {
        return Err(FormatError::Parse(format!("model stores {element}, expected {}", T::NAME)));
    }
    let act_name = r.string()?;
    let activation =
        Activation::from_name(&act_name).ok_or_else(|| FormatError::Parse(format!("unknown activation `{act_name}`")))?;
    let layers = r.u32()? as usize;
    let sizes = (0..layers).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let bn_eps = r.f64()?;
    let bn_momentum = r.f64()?;
    let features = get_norm(&mut r)?;
    let labels = get_norm(&mut r)?;
    let count = r.u64()? as usize;
    if count > bytes.len() {
        return Err(FormatError::Truncated("model"));
    }
    let params = (0..count).map(|_| get_real(&mut r)).collect::<Result<Vec<T>, _>>()?;
    let hidden = sizes.get(1..sizes.len().saturating_sub(1)).unwrap_or(&[]);
    let (mut mean, mut var) = (Vec::new(), Vec::new());
    for h in hidden {
        mean.push((0..*h).map(|_| get_real(&mut r)).collect::<Result<Vec<T>, _>>()?);
        var.push((0..*h).map(|_| get_real(&mut r)).collect::<Result<Vec<T>, _>>()?);
    }
    r.finish()?;
    let bad = |e: eeprec_core::nn::NnError| FormatError::Parse(format!("model: {e}"));
    let mlp = Mlp::from_parts(&sizes, activation, params, mean, var, bn_eps, bn_momentum).map_err(bad)?;
    ErrorCorrector::new(mlp, features, labels).map_err(bad)
}

pub fn write<T: Real>(path: &Path, model: &ErrorCorrector<T>) -> Result<(), FormatError> {
    super::write_bytes(path, &encode(model))
}

pub fn read<T: Real>(path: &Path) -> Result<ErrorCorrector<T>, FormatError> {
    decode(&super::read_bytes(path)?)
}

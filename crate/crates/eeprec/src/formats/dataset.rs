//! Dataset files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic      8 bytes  "EEPRECDS"
//! version    u32      1
//! layout     u32 length + UTF-8 feature layout descriptor
//! features   u32      118
//! labels     u32      3
//! count      u64
//! count x { trajectory_id u32, timestamp f64, features f64 x 118, labels f64 x 3 }
//! ```
//!
//! Labels are true minus reported tool position, mm. Records of one
//! trajectory are contiguous.

use std::path::Path;

use eeprec_core::nn::{Dataset, TrainingPair};
use eeprec_core::robot::{layout, RavenStateRecord, RECORD_LEN};

use super::{check_header, put_string, ByteReader, FormatError};

pub const MAGIC: &[u8; 8] = b"EEPRECDS";
pub const VERSION: u32 = 1;
const RECORD_BYTES: usize = 4 + 8 * (1 + RECORD_LEN + 3);

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + layout::DESCRIPTOR.len() + ds.len() * RECORD_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_string(&mut out, layout::DESCRIPTOR);
    out.extend_from_slice(&(RECORD_LEN as u32).to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for p in &ds.pairs {
        out.extend_from_slice(&p.trajectory_id.to_le_bytes());
        out.extend_from_slice(&p.record.timestamp.to_le_bytes());
        for v in p.record.values.iter().chain(&p.error) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = ByteReader::new(bytes, "dataset");
    check_header(&mut r, MAGIC, VERSION)?;
    let desc = r.string()?;
    if desc != layout::DESCRIPTOR {
        return Err(FormatError::Layout(desc));
    }
    let (features, labels) = (r.u32()? as usize, r.u32()? as usize);
    if features != RECORD_LEN || labels != 3 {
        return Err(FormatError::Parse(format!("dataset has {features} features and {labels} labels")));
    }
    let count = r.u64()? as usize;
    if count.saturating_mul(RECORD_BYTES) > bytes.len() {
        return Err(FormatError::Truncated("dataset"));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let trajectory_id = r.u32()?;
        let mut record = RavenStateRecord::zeroed(r.f64()?);
        for v in record.values.iter_mut() {
            *v = r.f64()?;
        }
        let error = [r.f64()?, r.f64()?, r.f64()?];
        pairs.push(TrainingPair {
            trajectory_id,
            record,
            error,
        });
    }
    r.finish()?;
    Dataset::new(pairs).map_err(|e| FormatError::Parse(format!("dataset: {e}")))
}

pub fn write(path: &Path, ds: &Dataset) -> Result<(), FormatError> {
    super::write_bytes(path, &encode(ds))
}

pub fn read(path: &Path) -> Result<Dataset, FormatError> {
    decode(&super::read_bytes(path)?)
}

/// Column names of the text export, expanded from the layout descriptor:
/// a range field `name=a..b` becomes `name_0 .. name_{b-a-1}`.
pub fn feature_names() -> Vec<String> {
    let mut names = vec![String::new(); RECORD_LEN];
    for entry in layout::DESCRIPTOR.split(';').skip(1) {
        let (name, span) = entry.split_once('=').expect("descriptor entries are name=span");
        match span.split_once("..") {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().expect("start"), b.parse().expect("end"));
                for (k, slot) in names[a..b].iter_mut().enumerate() {
                    *slot = format!("{name}_{k}");
                }
            }
            None => names[span.parse::<usize>().expect("index")] = name.to_string(),
        }
    }
    names
}

/// Text export: `trajectory_id,timestamp,<118 feature columns>,error_x,error_y,error_z`.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<(), FormatError> {
    let csv_err = |source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_writer(super::create(path)?);
    let mut header = vec!["trajectory_id".to_string(), "timestamp".to_string()];
    header.extend(feature_names());
    header.extend(["error_x", "error_y", "error_z"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for p in &ds.pairs {
        row.clear();
        row.push(p.trajectory_id.to_string());
        // Display for floats is the shortest string that parses back exactly
        row.extend(std::iter::once(&p.record.timestamp).chain(&p.record.values).chain(&p.error).map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

//! On-disk formats. Tables are comma-separated text with a header line;
//! floats are written in shortest round-trip form so every value reads back
//! bit-exact. Datasets and models are little-endian binary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod dataset;
pub mod model;
pub mod ppm;
pub mod tables;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("not a {0} file")]
    BadMagic(&'static str),
    #[error("{kind} format version {found} is not supported (expected {expected})")]
    Version { kind: &'static str, found: u32, expected: u32 },
    #[error("layout descriptor mismatch: file has `{0}`")]
    Layout(String),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("{0}")]
    Parse(String),
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `rows` with a header taken from the row type's field names.
/// `comments` go first, each prefixed with `# `. An empty table has no
/// header line.
pub fn write_table<T: Serialize>(path: &Path, comments: &[&str], rows: &[T]) -> Result<(), FormatError> {
    let csv_err = |source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut f = create(path)?;
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_table`], skipping `#` lines.
pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let f = open(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| FormatError::Csv {
            path: path.display().to_string(),
            source,
        })
}

/// Little-endian cursor over a byte buffer.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated(self.what))?;
        let s = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated(self.what))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn string(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let s = self.take(n)?;
        String::from_utf8(s.to_vec()).map_err(|_| FormatError::Parse(format!("{}: string is not UTF-8", self.what)))
    }

    pub fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Parse(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn check_header(r: &mut ByteReader<'_>, magic: &[u8; 8], version: u32) -> Result<(), FormatError> {
    if r.take(8).ok() != Some(&magic[..]) {
        return Err(FormatError::BadMagic(r.what));
    }
    let found = r.u32()?;
    if found != version {
        return Err(FormatError::Version {
            kind: r.what,
            found,
            expected: version,
        });
    }
    Ok(())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let mut f = create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

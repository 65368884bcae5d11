//! Feature file formats.
//!
//! CSV: header `label,c0,...,c{d-1}`, one `label,v0,...,v{d-1}` record per
//! line, `,` separator, `.` decimal point, `\n` terminator, no quoting.
//! Values are written with [`format_f64`].
//!
//! Binary (little-endian):
//!
//! ```text
//! "FSLF"  u16 version=1  u32 num_classes
//! per class:  u16 name_len  name (UTF-8)  u32 vector_count
//! u32 d
//! vectors, grouped by class in declared order, each d x f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{ClassSamples, EmbeddingDataset, FeatureVector};
use crate::error::{Error, Result};
use crate::numfmt::format_f64;

pub const BINARY_MAGIC: &[u8; 4] = b"FSLF";
pub const BINARY_VERSION: u16 = 1;

pub fn load_features_csv(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_csv(&text, &path.display().to_string())
}

pub fn parse_features_csv(text: &str, source: &str) -> Result<EmbeddingDataset> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (_, header) = match lines.next() {
        Some((n, h)) if !h.is_empty() => (n, h),
        _ => return Err(Error::Empty(source.to_string())),
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns[0] != "label" || columns.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header must be `label,c0,c1,...`".into(),
        });
    }
    for (l, name) in columns[1..].iter().enumerate() {
        if *name != format!("c{l}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("header column {} is {name:?}, expected \"c{l}\"", l + 1),
            });
        }
    }
    let d = columns.len() - 1;

    let mut rows = Vec::new();
    let mut pending_blank: Option<usize> = None;
    for (line_no, line) in lines {
        if line.is_empty() {
            pending_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(Error::Parse {
                line: blank,
                message: "blank line inside data".into(),
            });
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default();
        if label.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty label".into(),
            });
        }
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != d {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {d} values, found {}", values.len()),
            });
        }
        let vector = FeatureVector::new(values)
            .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
        rows.push((label.to_string(), vector));
    }
    if rows.is_empty() {
        return Err(Error::Empty(source.to_string()));
    }
    EmbeddingDataset::from_rows(d, rows)
}

pub fn features_to_csv(dataset: &EmbeddingDataset) -> String {
    let mut out = String::from("label");
    for l in 0..dataset.dimensionality() {
        out.push_str(&format!(",c{l}"));
    }
    out.push('\n');
    for class in dataset.classes() {
        for v in &class.vectors {
            out.push_str(&class.name);
            for x in v.iter() {
                out.push(',');
                out.push_str(&format_f64(*x));
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_features_csv(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for class in dataset.classes() {
        if class.name.contains([',', '\n', '\r']) {
            return Err(Error::Validation(format!(
                "class name {:?} cannot be written to CSV",
                class.name
            )));
        }
    }
    fs::write(path, features_to_csv(dataset)).map_err(|e| Error::io(path, e))
}

pub fn load_features_binary(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features_binary(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::Truncated(format!(
                "{what} needs {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_features_binary(bytes: &[u8]) -> Result<EmbeddingDataset> {
    if bytes.is_empty() {
        return Err(Error::Empty("binary feature data".into()));
    }
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != BINARY_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"FSLF\"", String::from_utf8_lossy(magic))));
    }
    let version = cur.u16("version")?;
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let num_classes = cur.u32("class count")? as usize;
    let mut headers = Vec::with_capacity(num_classes.min(1 << 16));
    for c in 0..num_classes {
        let name_len = cur.u16("class name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "class name")?)
            .map_err(|_| Error::Format(format!("class {c} name is not UTF-8")))?
            .to_string();
        let count = cur.u32("vector count")? as usize;
        headers.push((name, count));
    }
    let d = cur.u32("dimensionality")? as usize;
    let mut classes = Vec::with_capacity(headers.len());
    for (name, count) in headers {
        let mut vectors = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let raw = cur.take(d * 4, "vector data")?;
            let values: Vec<f64> = raw
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect();
            vectors.push(FeatureVector::new(values)?);
        }
        classes.push(ClassSamples { name, vectors });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    EmbeddingDataset::new(d, classes)
}

/// Values are stored as `f32`; anything not exactly representable is rounded.
pub fn encode_features_binary(dataset: &EmbeddingDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.num_classes() as u32).to_le_bytes());
    for class in dataset.classes() {
        let name = class.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("class name too long ({} bytes)", name.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(class.vectors.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(&(dataset.dimensionality() as u32).to_le_bytes());
    for class in dataset.classes() {
        for v in &class.vectors {
            for &x in v.iter() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save_features_binary(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_features_binary(dataset)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Loads either format, sniffing the binary magic.
pub fn load_features(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_features_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is neither FSLF binary nor UTF-8 CSV", path.display())))?;
        parse_features_csv(&text, &path.display().to_string())
    }
}

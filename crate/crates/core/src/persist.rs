//! Trained dictionaries and sparse codes on disk.
//!
//! A dictionary is stored as concatenated `ODM1` records (one per block for
//! a union, a single `p × n` record for an overcomplete dictionary) next to
//! a JSON-lines header `<stem>.meta.json`: one header object, then one
//! object per record giving its shape and byte offset.
//!
//! Codes are stored as two `ODM1` records: a `1 × 2` matrix
//! `[atoms, signals]` and a `3 × nnz` matrix of `(signal, atom, value)`
//! triplets in column order.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::OvercompleteDictionary;
use crate::data::odm::{decode_matrix, encode_matrix};
use crate::error::{Error, Result};
use crate::linalg::{Atoms, Matrix, SparseCodes};
use crate::onb::OrthoBlock;
use crate::sbo::{EnergyKind, UnionDictionary};

#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary {
    Union(UnionDictionary),
    Overcomplete(OvercompleteDictionary),
}

impl Dictionary {
    pub fn kind(&self) -> DictionaryKind {
        match self {
            Dictionary::Union(_) => DictionaryKind::Union,
            Dictionary::Overcomplete(_) => DictionaryKind::Overcomplete,
        }
    }

    pub fn atoms(&self) -> &dyn Atoms {
        match self {
            Dictionary::Union(d) => d,
            Dictionary::Overcomplete(d) => d,
        }
    }

    fn records(&self) -> Vec<&Matrix> {
        match self {
            Dictionary::Union(d) => d.blocks().iter().map(|b| b.matrix()).collect(),
            Dictionary::Overcomplete(d) => vec![d.matrix()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    Union,
    Overcomplete,
}

/// A dictionary with the coding parameters it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDictionary {
    pub dictionary: Dictionary,
    pub s0: usize,
    /// Block scoring; only meaningful for union dictionaries.
    pub energy: Option<EnergyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    kind: DictionaryKind,
    signal_dim: usize,
    records: usize,
    s0: usize,
    #[serde(default)]
    energy: Option<EnergyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordEntry {
    record: usize,
    rows: usize,
    cols: usize,
    offset: usize,
}

/// `dict.odm` → `dict.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn meta_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "dictionary meta",
        offset,
        msg: msg.into(),
    }
}

pub fn save_dictionary(path: impl AsRef<Path>, stored: &StoredDictionary) -> Result<()> {
    let path = path.as_ref();
    let records = stored.dictionary.records();
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(records.len());
    for (i, m) in records.iter().enumerate() {
        entries.push(RecordEntry {
            record: i,
            rows: m.rows(),
            cols: m.cols(),
            offset: bytes.len(),
        });
        encode_matrix(m, &mut bytes);
    }
    let header = Header {
        format: "ODM1".into(),
        kind: stored.dictionary.kind(),
        signal_dim: stored.dictionary.atoms().signal_dim(),
        records: records.len(),
        s0: stored.s0,
        energy: stored.energy,
    };
    let mut meta = Vec::new();
    serde_json::to_writer(&mut meta, &header).expect("header serializes");
    meta.push(b'\n');
    for e in &entries {
        serde_json::to_writer(&mut meta, e).expect("entry serializes");
        meta.push(b'\n');
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mp = meta_path(path);
    let mut f = std::fs::File::create(&mp).map_err(|e| Error::io(&mp, e))?;
    f.write_all(&meta).map_err(|e| Error::io(&mp, e))
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<StoredDictionary> {
    let path = path.as_ref();
    let mp = meta_path(path);
    let meta = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;

    let mut lines = meta.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| meta_err(0, "empty header file"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| meta_err(0, e.to_string()))?;
    if header.format != "ODM1" {
        return Err(meta_err(0, format!("unsupported format {:?}", header.format)));
    }
    let entries = lines
        .map(|l| serde_json::from_str::<RecordEntry>(l).map_err(|e| meta_err(0, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if entries.len() != header.records {
        return Err(meta_err(
            0,
            format!("header announces {} records, found {}", header.records, entries.len()),
        ));
    }

    let mut mats = Vec::with_capacity(entries.len());
    let mut offset = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.record != i || e.offset != offset {
            return Err(meta_err(
                offset,
                format!("record {i}: header says index {} at byte {}", e.record, e.offset),
            ));
        }
        let (m, next) = decode_matrix(&bytes, offset)?;
        if m.shape() != (e.rows, e.cols) || m.rows() != header.signal_dim {
            return Err(meta_err(
                offset,
                format!(
                    "record {i} is {}x{}, header says {}x{} with signal_dim {}",
                    m.rows(),
                    m.cols(),
                    e.rows,
                    e.cols,
                    header.signal_dim
                ),
            ));
        }
        mats.push(m);
        offset = next;
    }
    if offset != bytes.len() {
        return Err(Error::Parse {
            what: "odm",
            offset,
            msg: format!("{} trailing bytes after the last record", bytes.len() - offset),
        });
    }

    let dictionary = match header.kind {
        DictionaryKind::Union => {
            let blocks = mats.into_iter().map(OrthoBlock::new).collect::<Result<Vec<_>>>()?;
            Dictionary::Union(UnionDictionary::new(blocks)?)
        }
        DictionaryKind::Overcomplete => {
            if mats.len() != 1 {
                return Err(meta_err(0, "overcomplete dictionary must be a single record"));
            }
            Dictionary::Overcomplete(OvercompleteDictionary::new(mats.pop().expect("one record"))?)
        }
    };
    Ok(StoredDictionary {
        dictionary,
        s0: header.s0,
        energy: header.energy,
    })
}

pub fn encode_codes(x: &SparseCodes, out: &mut Vec<u8>) {
    let shape = Matrix::from_col_major(1, 2, vec![x.atoms() as f64, x.cols() as f64]).expect("1x2");
    let mut triplets = Vec::with_capacity(3 * x.nnz());
    for j in 0..x.cols() {
        let (idx, val) = x.column(j);
        for (&i, &v) in idx.iter().zip(val) {
            triplets.extend_from_slice(&[j as f64, i as f64, v]);
        }
    }
    let triplets = Matrix::from_col_major(3, x.nnz(), triplets).expect("3 x nnz");
    encode_matrix(&shape, out);
    encode_matrix(&triplets, out);
}

fn as_index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 9.007_199_254_740_992e15 {
        Ok(v as usize)
    } else {
        Err(Error::Input(format!("codes file: {what} {v} is not a valid index")))
    }
}

pub fn decode_codes(bytes: &[u8]) -> Result<SparseCodes> {
    let (shape, next) = decode_matrix(bytes, 0)?;
    if shape.shape() != (1, 2) {
        return Err(Error::Input(format!(
            "codes file: expected a 1x2 shape record, got {}x{}",
            shape.rows(),
            shape.cols()
        )));
    }
    let atoms = as_index(shape[(0, 0)], "atom count")?;
    let cols = as_index(shape[(0, 1)], "signal count")?;
    let (t, end) = decode_matrix(bytes, next)?;
    if end != bytes.len() {
        return Err(Error::Input(format!(
            "codes file: {} trailing bytes",
            bytes.len() - end
        )));
    }
    if t.rows() != 3 {
        return Err(Error::Input(format!(
            "codes file: expected 3 rows of triplets, got {}",
            t.rows()
        )));
    }
    let mut out = SparseCodes::with_capacity(atoms, cols, t.cols());
    let mut k = 0;
    let (mut idx, mut val) = (Vec::new(), Vec::new());
    for j in 0..cols {
        idx.clear();
        val.clear();
        while k < t.cols() && as_index(t[(0, k)], "signal")? == j {
            let a = as_index(t[(1, k)], "atom")?;
            if a >= atoms || idx.last().is_some_and(|&prev| prev >= a) {
                return Err(Error::Input(format!(
                    "codes file: triplet {k} has atom {a} out of order or range"
                )));
            }
            idx.push(a);
            val.push(t[(2, k)]);
            k += 1;
        }
        out.push_column(&idx, &val);
    }
    if k != t.cols() {
        return Err(Error::Input(format!(
            "codes file: triplet {k} is out of signal order"
        )));
    }
    Ok(out)
}

pub fn save_codes(path: impl AsRef<Path>, x: &SparseCodes) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    encode_codes(x, &mut bytes);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<SparseCodes> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_codes(&bytes)
}

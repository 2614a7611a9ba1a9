//! Flat serialization of fields.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! b"RFLD"  u8 version  u32 d  u32 L  u16 n  n bytes distribution tag
//! u64 base_seed  u64 count  count × f64 values in site-index order
//! ```
//!
//! The CSV form starts with one `# d=..,L=..,distribution=..,seed=..` line,
//! then a `x1,...,xd,value` header and one row per site in index order.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::lattice::Lattice;

const MAGIC: &[u8; 4] = b"RFLD";
const VERSION: u8 = 1;

/// Provenance written in front of every stored field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub side: usize,
    /// Disorder law tag, e.g. `gaussian` or `one-dependent`; free text for
    /// fields that are not disorder.
    pub distribution: String,
    pub base_seed: u64,
}

impl FieldHeader {
    pub fn new(lattice: &Lattice, distribution: impl Into<String>, base_seed: u64) -> Self {
        FieldHeader {
            dim: lattice.dim(),
            side: lattice.side(),
            distribution: distribution.into(),
            base_seed,
        }
    }

    /// Rebuilds the box the header describes.
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::build_box(self.dim, self.side)
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_field_binary<W: Write>(mut out: W, header: &FieldHeader, field: &Field) -> Result<()> {
    if field.dim() != header.dim || field.side() != header.side {
        return Err(Error::LatticeMismatch {
            expected_d: header.dim,
            expected_l: header.side,
            got_d: field.dim(),
            got_l: field.side(),
        });
    }
    let tag = header.distribution.as_bytes();
    let tag_len = u16::try_from(tag.len()).map_err(|_| format_err("distribution tag too long"))?;
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&(header.dim as u32).to_le_bytes())?;
    out.write_all(&(header.side as u32).to_le_bytes())?;
    out.write_all(&tag_len.to_le_bytes())?;
    out.write_all(tag)?;
    out.write_all(&header.base_seed.to_le_bytes())?;
    out.write_all(&(field.values().len() as u64).to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| format_err(format!("truncated field file: {e}")))?;
    Ok(buf)
}

pub fn read_field_binary<R: Read>(mut input: R) -> Result<(FieldHeader, Field)> {
    if &read_array::<4, _>(&mut input)? != MAGIC {
        return Err(format_err("not a field file (bad magic)"));
    }
    let [version] = read_array::<1, _>(&mut input)?;
    if version != VERSION {
        return Err(format_err(format!("unsupported field file version {version}")));
    }
    let dim = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let side = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let tag_len = u16::from_le_bytes(read_array(&mut input)?) as usize;
    let mut tag = vec![0u8; tag_len];
    input
        .read_exact(&mut tag)
        .map_err(|e| format_err(format!("truncated field file: {e}")))?;
    let distribution = String::from_utf8(tag).map_err(|_| format_err("distribution tag is not UTF-8"))?;
    let base_seed = u64::from_le_bytes(read_array(&mut input)?);
    let count = u64::from_le_bytes(read_array(&mut input)?) as usize;
    let header = FieldHeader {
        dim,
        side,
        distribution,
        base_seed,
    };
    let lattice = header.lattice()?;
    if count != lattice.n_sites() {
        return Err(format_err(format!(
            "field has {count} values, box (d={dim}, L={side}) has {}",
            lattice.n_sites()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(read_array(&mut input)?));
    }
    Ok((header, Field::from_values(&lattice, values)?))
}

pub fn write_field_csv<W: Write>(mut out: W, header: &FieldHeader, field: &Field) -> Result<()> {
    let lattice = header.lattice()?;
    field.check(&lattice)?;
    writeln!(
        out,
        "# d={},L={},distribution={},seed={}",
        header.dim, header.side, header.distribution, header.base_seed
    )?;
    let mut wtr = csv::Writer::from_writer(out);
    let mut cols: Vec<String> = (1..=header.dim).map(|i| format!("x{i}")).collect();
    cols.push("value".into());
    wtr.write_record(&cols).map_err(|e| format_err(e.to_string()))?;
    for (i, v) in field.values().iter().enumerate() {
        let mut row: Vec<String> = lattice.site(i).iter().map(|c| c.to_string()).collect();
        row.push(format!("{v:e}"));
        wtr.write_record(&row).map_err(|e| format_err(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_meta(line: &str) -> Result<FieldHeader> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| format_err("missing `#` metadata line"))?
        .trim();
    let mut dim = None;
    let mut side = None;
    let mut distribution = None;
    let mut seed = None;
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad metadata entry `{part}`")))?;
        let bad = || format_err(format!("bad value for `{k}`: `{v}`"));
        match k.trim() {
            "d" => dim = Some(v.trim().parse().map_err(|_| bad())?),
            "L" => side = Some(v.trim().parse().map_err(|_| bad())?),
            "distribution" => distribution = Some(v.trim().to_string()),
            "seed" => seed = Some(v.trim().parse().map_err(|_| bad())?),
            _ => {}
        }
    }
    let missing = |k: &str| format_err(format!("metadata lacks `{k}`"));
    Ok(FieldHeader {
        dim: dim.ok_or_else(|| missing("d"))?,
        side: side.ok_or_else(|| missing("L"))?,
        distribution: distribution.ok_or_else(|| missing("distribution"))?,
        base_seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

pub fn read_field_csv<R: Read>(input: R) -> Result<(FieldHeader, Field)> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = parse_meta(first.trim_end())?;
    let lattice = header.lattice()?;
    let mut values = vec![0.0; lattice.n_sites()];
    let mut seen = vec![false; lattice.n_sites()];
    let mut rdr = csv::Reader::from_reader(reader);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        if rec.len() != header.dim + 1 {
            return Err(format_err(format!("expected {} columns, got {}", header.dim + 1, rec.len())));
        }
        let site: Vec<i32> = rec
            .iter()
            .take(header.dim)
            .map(|c| c.trim().parse().map_err(|_| format_err(format!("bad coordinate `{c}`"))))
            .collect::<Result<_>>()?;
        let idx = lattice
            .index_of(&site)
            .ok_or_else(|| format_err(format!("site {site:?} outside the box")))?;
        let v = rec[header.dim].trim();
        values[idx] = v.parse().map_err(|_| format_err(format!("bad value `{v}`")))?;
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format_err(format!("no value for site {:?}", lattice.site(missing))));
    }
    Ok((header, Field::from_values(&lattice, values)?))
}

//! `DCOM` package files.
//!
//! ```text
//! 0..4    magic "DCOM"
//! 4..8    version, u32 LE (= 1)
//! 8..16   header length L, u64 LE
//! 16..    L bytes of JSON header
//! ...     payload
//! ```
//!
//! Every payload segment starts at a 64-byte aligned offset (relative to the
//! payload start) and there is no padding after the last one. Per matrix
//! entry the segments are: singular values, then for each group either
//!
//! * `k = 16`: U as `h_out × w` then Vᵀ as `w × h_in`, LE f16 row-major;
//! * otherwise: U scales, Vᵀ scales, U zeros, Vᵀ zeros (both absent for
//!   `k = 1`), U codes, Vᵀ codes.
//!
//! Scales and zeros are LE f16, one per `(row, group)` (one per factor for
//! `k = 1`); codes are packed LSB-first, row-major. Raw entries are a single
//! LE f16 segment. The payload checksum is FNV-1a 64 over all payload bytes.

use std::path::Path;

use half::f16;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{CompressedGroup, CompressedMatrix, DeltaPackage, Factor, PackageEntry};
use crate::error::{Error, Result};
use crate::model_io::{align_up, split_container, Tensor, ALIGN};
use crate::numerics::half_ext::to_f16;
use crate::numerics::{fnv1a64, Matrix};
use crate::quant::{packed_len, QuantizedTensor};

pub const PACKAGE_MAGIC: &[u8; 4] = b"DCOM";
pub const PACKAGE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    alpha: f64,
    schedule: String,
    backbone_checksum: String,
    payload_len: usize,
    payload_checksum: String,
    entries: Vec<EntryHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EntryHeader {
    Matrix {
        name: String,
        h_out: usize,
        h_in: usize,
        alpha: f64,
        sigma_offset: usize,
        groups: Vec<GroupHeader>,
    },
    Raw {
        name: String,
        rows: usize,
        cols: usize,
        vec: bool,
        offset: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupHeader {
    bits: u8,
    r_begin: usize,
    r_end: usize,
    group_size: usize,
    u: FactorHeader,
    v: FactorHeader,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FactorHeader {
    rows: usize,
    cols: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    data_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    scales_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    zeros_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    codes_offset: Option<usize>,
}

struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    fn start(&mut self) -> usize {
        let offset = align_up(self.buf.len());
        self.buf.resize(offset, 0);
        offset
    }

    fn halves(&mut self, values: impl Iterator<Item = f64>, context: &'static str) -> Result<usize> {
        let offset = self.start();
        for v in values {
            self.buf.extend_from_slice(&to_f16(v, context)?.to_le_bytes());
        }
        Ok(offset)
    }

    fn bytes(&mut self, bytes: &[u8]) -> usize {
        let offset = self.start();
        self.buf.extend_from_slice(bytes);
        offset
    }
}

fn write_group(w: &mut PayloadWriter, g: &CompressedGroup) -> Result<GroupHeader> {
    let (mut uh, mut vh) = (FactorHeader::default(), FactorHeader::default());
    (uh.rows, uh.cols) = g.u.shape();
    (vh.rows, vh.cols) = g.vt.shape();
    let mut group_size = 0;
    match (&g.u, &g.vt) {
        (Factor::Half(u), Factor::Half(v)) => {
            uh.data_offset = Some(w.halves(u.data().iter().map(|&x| x as f64), "U factor")?);
            vh.data_offset = Some(w.halves(v.data().iter().map(|&x| x as f64), "V factor")?);
        }
        (Factor::Quantized(u), Factor::Quantized(v)) => {
            if u.group_size() != v.group_size() && u.bits() != 1 {
                return Err(Error::Corrupt("U and V factors use different group sizes".into()));
            }
            group_size = if u.bits() == 1 { 0 } else { u.group_size() };
            uh.scales_offset = Some(w.halves(u.scales().iter().copied(), "scale")?);
            vh.scales_offset = Some(w.halves(v.scales().iter().copied(), "scale")?);
            if u.bits() != 1 {
                uh.zeros_offset = Some(w.halves(u.zeros().iter().copied(), "zero point")?);
                vh.zeros_offset = Some(w.halves(v.zeros().iter().copied(), "zero point")?);
            }
            uh.codes_offset = Some(w.bytes(u.packed_codes()));
            vh.codes_offset = Some(w.bytes(v.packed_codes()));
        }
        _ => return Err(Error::Corrupt("mixed factor kinds in one group".into())),
    }
    Ok(GroupHeader {
        bits: g.bits,
        r_begin: g.r_begin,
        r_end: g.r_end,
        group_size,
        u: uh,
        v: vh,
    })
}

impl DeltaPackage {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = PayloadWriter { buf: Vec::new() };
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, entry) in &self.entries {
            entries.push(match entry {
                PackageEntry::Matrix(cm) => {
                    let sigma_offset = w.halves(cm.sigma().iter().map(|&s| s as f64), "singular value")?;
                    let groups = cm
                        .groups()
                        .iter()
                        .map(|g| write_group(&mut w, g))
                        .collect::<Result<_>>()?;
                    EntryHeader::Matrix {
                        name: name.clone(),
                        h_out: cm.h_out(),
                        h_in: cm.h_in(),
                        alpha: cm.schedule().alpha(),
                        sigma_offset,
                        groups,
                    }
                }
                PackageEntry::Raw(t) => {
                    let (rows, cols) = t.shape();
                    let offset = w.halves(t.data.data().iter().map(|&x| x as f64), "raw tensor")?;
                    EntryHeader::Raw {
                        name: name.clone(),
                        rows,
                        cols,
                        vec: t.is_vector,
                        offset,
                    }
                }
            });
        }
        let payload = w.buf;
        let header = Header {
            alpha: self.alpha,
            schedule: self.schedule_spec.clone(),
            backbone_checksum: self.backbone_checksum.to_string(),
            payload_len: payload.len(),
            payload_checksum: fnv1a64(&payload).to_string(),
            entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidArgument(format!("package header: {e}")))?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(PACKAGE_MAGIC);
        out.extend_from_slice(&PACKAGE_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, payload) = split_container(bytes, PACKAGE_MAGIC, PACKAGE_VERSION)?;
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::MalformedHeader(format!("{what} '{s}' is not a u64")))
        };
        let expected = parse_u64(&header.payload_checksum, "payload_checksum")?;
        let backbone_checksum = parse_u64(&header.backbone_checksum, "backbone_checksum")?;
        if payload.len() < header.payload_len {
            return Err(Error::Truncated {
                needed: bytes.len() - payload.len() + header.payload_len,
                available: bytes.len(),
            });
        }
        if payload.len() > header.payload_len {
            return Err(Error::Corrupt(format!(
                "{} bytes after the declared payload",
                payload.len() - header.payload_len
            )));
        }
        let actual = fnv1a64(payload);
        if actual != expected {
            return Err(Error::PayloadChecksum { expected, actual });
        }

        let reader = PayloadReader { payload };
        let mut entries = IndexMap::with_capacity(header.entries.len());
        for e in header.entries {
            let (name, entry) = match e {
                EntryHeader::Matrix {
                    name,
                    h_out,
                    h_in,
                    alpha,
                    sigma_offset,
                    groups,
                } => {
                    let ranks = groups.last().map_or(0, |g| g.r_end);
                    let sigma = reader.halves(sigma_offset, ranks)?;
                    let groups = groups
                        .iter()
                        .map(|g| read_group(&reader, g))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|err| annotate(err, &name))?;
                    let cm = CompressedMatrix::from_parts(h_out, h_in, sigma, groups, alpha)
                        .map_err(|err| annotate(err, &name))?;
                    (name, PackageEntry::Matrix(cm))
                }
                EntryHeader::Raw {
                    name,
                    rows,
                    cols,
                    vec,
                    offset,
                } => {
                    if vec && cols != 1 {
                        return Err(Error::MalformedHeader(format!("vector '{name}' must have cols = 1")));
                    }
                    let data = Matrix::new(rows, cols, reader.halves(offset, rows * cols)?)
                        .map_err(|err| annotate(err, &name))?;
                    (name, PackageEntry::Raw(Tensor { data, is_vector: vec }))
                }
            };
            if entries.insert(name.clone(), entry).is_some() {
                return Err(Error::MalformedHeader(format!("duplicate entry '{name}'")));
            }
        }
        let pkg = DeltaPackage {
            alpha: header.alpha,
            schedule_spec: header.schedule,
            backbone_checksum,
            entries,
        };
        // offsets, padding and field order must be exactly what the writer emits
        if pkg.to_bytes()? != bytes {
            return Err(Error::Corrupt("package is not in canonical layout".into()));
        }
        Ok(pkg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn annotate(err: Error, name: &str) -> Error {
    match err {
        Error::Corrupt(msg) => Error::Corrupt(format!("entry '{name}': {msg}")),
        Error::MalformedHeader(msg) => Error::MalformedHeader(format!("entry '{name}': {msg}")),
        Error::InvalidSchedule { reason, .. } | Error::InvalidArgument(reason) => {
            Error::Corrupt(format!("entry '{name}': {reason}"))
        }
        Error::RankOverflow { .. } | Error::NonFinite(_) | Error::DimensionMismatch { .. } => {
            Error::Corrupt(format!("entry '{name}': {err}"))
        }
        other => other,
    }
}

struct PayloadReader<'a> {
    payload: &'a [u8],
}

impl PayloadReader<'_> {
    fn slice(&self, offset: usize, len: usize) -> Result<&[u8]> {
        if !offset.is_multiple_of(ALIGN) {
            return Err(Error::MalformedHeader(format!(
                "offset {offset} is not {ALIGN}-byte aligned"
            )));
        }
        offset
            .checked_add(len)
            .filter(|&end| end <= self.payload.len())
            .map(|end| &self.payload[offset..end])
            .ok_or_else(|| Error::MalformedHeader(format!("segment {offset}+{len} outside the payload")))
    }

    fn halves(&self, offset: usize, count: usize) -> Result<Vec<f32>> {
        let bytes = self.slice(
            offset,
            count
                .checked_mul(2)
                .ok_or_else(|| Error::MalformedHeader("segment too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect())
    }
}

fn required(v: Option<usize>, what: &str) -> Result<usize> {
    v.ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))
}

fn read_factor(reader: &PayloadReader, h: &FactorHeader, bits: u8, group_size: usize) -> Result<Factor> {
    if h.rows == 0 || h.cols == 0 {
        return Err(Error::MalformedHeader("factor with a zero dimension".into()));
    }
    if bits == 16 {
        let data = reader.halves(required(h.data_offset, "data_offset")?, h.rows * h.cols)?;
        return Ok(Factor::Half(Matrix::new(h.rows, h.cols, data)?));
    }
    let (gs, n_meta) = if bits == 1 {
        (h.cols, 1)
    } else {
        if group_size == 0 {
            return Err(Error::MalformedHeader("group_size must be positive".into()));
        }
        (group_size, h.rows * h.cols.div_ceil(group_size))
    };
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<f64>>();
    let scales = widen(reader.halves(required(h.scales_offset, "scales_offset")?, n_meta)?);
    let zeros = if bits == 1 {
        Vec::new()
    } else {
        widen(reader.halves(required(h.zeros_offset, "zeros_offset")?, n_meta)?)
    };
    let codes = reader
        .slice(
            required(h.codes_offset, "codes_offset")?,
            packed_len(h.rows * h.cols, bits),
        )?
        .to_vec();
    Ok(Factor::Quantized(QuantizedTensor::from_parts(
        h.rows, h.cols, bits, gs, scales, zeros, codes,
    )?))
}

fn read_group(reader: &PayloadReader, g: &GroupHeader) -> Result<CompressedGroup> {
    Ok(CompressedGroup {
        bits: g.bits,
        r_begin: g.r_begin,
        r_end: g.r_end,
        u: read_factor(reader, &g.u, g.bits, g.group_size)?,
        vt: read_factor(reader, &g.v, g.bits, g.group_size)?,
    })
}

/// Payload length in bytes implied by the entry shapes and schedules alone.
///
/// Segment lengths: `2·r` for singular values; `2·rows·cols` per 16-bit
/// factor; for quantized factors `2·rows·⌈cols/group⌉` each for scales and
/// zeros (a single 2-byte scale and no zeros at 1 bit) and
/// `⌈rows·cols·k/8⌉` for codes; `2·len` for raw entries. Each segment is
/// preceded by padding to the next multiple of 64.
pub fn predicted_payload_len(pkg: &DeltaPackage, group_size: usize) -> usize {
    let mut segments: Vec<usize> = Vec::new();
    for entry in pkg.entries.values() {
        match entry {
            PackageEntry::Raw(t) => segments.push(2 * t.data.data().len()),
            PackageEntry::Matrix(cm) => {
                let (h_out, h_in) = (cm.h_out(), cm.h_in());
                segments.push(2 * cm.schedule().total_ranks());
                for g in cm.schedule().groups() {
                    let w = g.width();
                    let (u, v) = ((h_out, w), (w, h_in));
                    match g.bits {
                        16 => segments.extend([2 * h_out * w, 2 * w * h_in]),
                        1 => segments.extend([2, 2, (h_out * w).div_ceil(8), (w * h_in).div_ceil(8)]),
                        k => {
                            let meta = |(r, c): (usize, usize)| 2 * r * c.div_ceil(group_size);
                            let codes = |(r, c): (usize, usize)| (r * c * k as usize).div_ceil(8);
                            segments.extend([meta(u), meta(v), meta(u), meta(v), codes(u), codes(v)]);
                        }
                    }
                }
            }
        }
    }
    segments
        .into_iter()
        .fold(0, |end, len| end.div_ceil(ALIGN) * ALIGN + len)
}

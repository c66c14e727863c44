//! Weight quantizers: min/max group grids (RTN and GPTQ), 1-bit sign
//! quantization, dequantization, and bit packing.
//!
//! Groups run along the column (input) dimension. For `bits >= 2` each
//! `(row, group)` pair has its own `scale` and `zero`; `bits == 1` uses one
//! global scale and codes encode the sign.

mod gptq;
mod pack;
mod rtn;
mod sign;

pub(crate) use gptq::GptqPrep;
pub use gptq::{gptq_quantize, gptq_quantize_with, GptqOutput};
pub(crate) use pack::BitReader;
pub use pack::{pack_bits, packed_len, unpack_bits};
pub use rtn::{rtn_quantize, rtn_quantize_with};
pub use sign::{sign_quantize, sign_quantize_with};

use crate::error::{Error, Result};
use crate::numerics::half_ext::{f16_ceil, f16_floor, f16_next_up, round_f16};
use crate::numerics::Matrix;

pub const SUPPORTED_BITS: [u8; 5] = [1, 2, 3, 4, 8];
pub const DEFAULT_GROUP_SIZE: usize = 128;

/// Precision of the stored scales and zero points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetaPrecision {
    /// Kept exactly as computed.
    #[default]
    Full,
    /// Restricted to values representable in IEEE half precision. The zero
    /// point rounds down and the scale rounds up, so the grid still spans the
    /// group's `[min, max]`.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantParams {
    pub bits: u8,
    pub group_size: usize,
    pub meta: MetaPrecision,
}

impl QuantParams {
    pub fn new(bits: u8, group_size: usize) -> Self {
        QuantParams {
            bits,
            group_size,
            meta: MetaPrecision::Full,
        }
    }

    pub fn with_meta(mut self, meta: MetaPrecision) -> Self {
        self.meta = meta;
        self
    }

    pub(crate) fn validate_multibit(&self) -> Result<()> {
        if !matches!(self.bits, 2 | 3 | 4 | 8) {
            return Err(Error::InvalidArgument(format!(
                "grid quantization supports 2, 3, 4 or 8 bits, got {}",
                self.bits
            )));
        }
        if self.group_size == 0 {
            return Err(Error::InvalidArgument("group_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Affine grid `x̂ = zero + scale · code` for one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Grid {
    pub scale: f64,
    pub zero: f64,
    pub max_code: u8,
}

impl Grid {
    pub(crate) fn fit(values: impl Iterator<Item = f32>, bits: u8, meta: MetaPrecision) -> Result<Grid> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
        let max_code = ((1u16 << bits) - 1) as u8;
        let levels = max_code as f64;
        if lo == hi {
            let zero = match meta {
                MetaPrecision::Full => lo,
                MetaPrecision::Half => round_f16(lo, "zero point")?,
            };
            return Ok(Grid {
                scale: 0.0,
                zero,
                max_code,
            });
        }
        let (scale, zero) = match meta {
            MetaPrecision::Full => ((hi - lo) / levels, lo),
            MetaPrecision::Half => {
                let zero = f16_floor(lo, "zero point")?;
                let mut scale = f16_ceil((hi - zero) / levels, "scale")?;
                while zero + levels * scale < hi {
                    scale = f16_next_up(scale);
                }
                (scale, zero)
            }
        };
        Ok(Grid { scale, zero, max_code })
    }

    /// Nearest code, ties away from zero.
    #[inline]
    pub(crate) fn code(&self, x: f64) -> u8 {
        if self.scale == 0.0 {
            return 0;
        }
        ((x - self.zero) / self.scale).round().clamp(0.0, self.max_code as f64) as u8
    }

    #[inline]
    pub(crate) fn value(&self, code: u8) -> f64 {
        self.zero + self.scale * code as f64
    }
}

/// Quantized `rows × cols` matrix with packed codes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    bits: u8,
    group_size: usize,
    scales: Vec<f64>,
    zeros: Vec<f64>,
    codes: Vec<u8>,
}

impl QuantizedTensor {
    /// Assembles and validates a tensor from its stored parts.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        bits: u8,
        group_size: usize,
        scales: Vec<f64>,
        zeros: Vec<f64>,
        codes: Vec<u8>,
    ) -> Result<Self> {
        let q = QuantizedTensor {
            rows,
            cols,
            bits,
            group_size,
            scales,
            zeros,
            codes,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        let corrupt = |msg: String| Err(Error::Corrupt(msg));
        if !SUPPORTED_BITS.contains(&self.bits) {
            return corrupt(format!("unsupported bit width {}", self.bits));
        }
        if self.rows == 0 || self.cols == 0 || self.group_size == 0 {
            return corrupt("zero dimension in quantized tensor".into());
        }
        if self.codes.len() != packed_len(self.rows * self.cols, self.bits) {
            return corrupt(format!(
                "code stream has {} bytes, expected {}",
                self.codes.len(),
                packed_len(self.rows * self.cols, self.bits)
            ));
        }
        if self.scales.iter().chain(&self.zeros).any(|v| !v.is_finite()) {
            return corrupt("non-finite scale or zero point".into());
        }
        if self.bits == 1 {
            if self.scales.len() != 1 || !self.zeros.is_empty() {
                return corrupt("1-bit tensors carry exactly one scale and no zeros".into());
            }
            return Ok(());
        }
        let n_groups = self.rows * self.groups_per_row();
        if self.scales.len() != n_groups || self.zeros.len() != n_groups {
            return corrupt(format!("expected {n_groups} scales and zeros"));
        }
        if self.scales.iter().any(|&s| s < 0.0) {
            return corrupt("negative scale".into());
        }
        // a zero scale marks a constant group, whose codes must all be 0
        let gpr = self.groups_per_row();
        for r in 0..self.rows {
            let mut reader = BitReader::new(&self.codes, r * self.cols, self.bits);
            for c in 0..self.cols {
                let code = reader.next_code();
                if code != 0 && self.scales[r * gpr + c / self.group_size] == 0.0 {
                    return corrupt(format!("nonzero code in constant group at ({r}, {c})"));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups_per_row(&self) -> usize {
        if self.bits == 1 {
            1
        } else {
            self.cols.div_ceil(self.group_size)
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Packed code stream.
    pub fn packed_codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn codes(&self) -> Vec<u8> {
        unpack_bits(&self.codes, self.rows * self.cols, self.bits).expect("validated code stream")
    }

    /// Bits spent on codes alone.
    pub fn code_bits(&self) -> usize {
        self.rows * self.cols * self.bits as usize
    }

    /// Decodes row `r` into `out` (length `cols`).
    #[inline]
    pub fn dequantize_row(&self, r: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.cols);
        let mut reader = BitReader::new(&self.codes, r * self.cols, self.bits);
        if self.bits == 1 {
            let gamma = self.scales[0];
            let (pos, neg) = (gamma as f32, (-gamma) as f32);
            for o in out.iter_mut() {
                *o = if reader.next_code() == 1 { pos } else { neg };
            }
            return;
        }
        let gpr = self.groups_per_row();
        for (g, chunk) in out.chunks_mut(self.group_size).enumerate() {
            let (scale, zero) = (self.scales[r * gpr + g], self.zeros[r * gpr + g]);
            for o in chunk.iter_mut() {
                *o = (zero + scale * reader.next_code() as f64) as f32;
            }
        }
    }
}

/// Dense reconstruction: `zero + scale · code` per group, or `±γ` for 1 bit.
pub fn dequantize(q: &QuantizedTensor) -> Result<Matrix> {
    q.validate()?;
    let mut data = vec![0.0f32; q.rows * q.cols];
    for (r, row) in data.chunks_mut(q.cols).enumerate() {
        q.dequantize_row(r, row);
    }
    Matrix::new(q.rows, q.cols, data).map_err(|_| Error::NonFinite("dequantize"))
}

/// Builds a tensor from per-group grids and unpacked codes.
pub(crate) fn assemble(
    rows: usize,
    cols: usize,
    params: QuantParams,
    grids: &[Grid],
    codes: &[u8],
) -> Result<QuantizedTensor> {
    QuantizedTensor::from_parts(
        rows,
        cols,
        params.bits,
        params.group_size,
        grids.iter().map(|g| g.scale).collect(),
        grids.iter().map(|g| g.zero).collect(),
        pack_bits(codes, params.bits)?,
    )
}

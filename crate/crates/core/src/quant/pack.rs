//! LSB-first bit packing of small integer codes.

use crate::error::{Error, Result};

fn check_bits(bits: u8) -> Result<()> {
    if (1..=8).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("cannot pack {bits}-bit codes")))
    }
}

pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Packs codes back to back with no padding; the first code occupies the low
/// bits of byte 0 and the final byte is zero-padded.
pub fn pack_bits(codes: &[u8], bits: u8) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let limit = 1u16 << bits;
    let mut out = Vec::with_capacity(packed_len(codes.len(), bits));
    let mut acc: u32 = 0;
    let mut filled = 0u32;
    for (i, &c) in codes.iter().enumerate() {
        if c as u16 >= limit {
            return Err(Error::InvalidArgument(format!(
                "code {c} at index {i} does not fit in {bits} bits"
            )));
        }
        acc |= (c as u32) << filled;
        filled += bits as u32;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(out)
}

pub fn unpack_bits(bytes: &[u8], count: usize, bits: u8) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let needed = packed_len(count, bits);
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let mut reader = BitReader::new(bytes, 0, bits);
    Ok((0..count).map(|_| reader.next_code()).collect())
}

/// Sequential code reader starting at an arbitrary code index.
pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    bits: u32,
    mask: u32,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], first_code: usize, bits: u8) -> Self {
        BitReader {
            bytes,
            pos: first_code * bits as usize,
            bits: bits as u32,
            mask: (1u32 << bits) - 1,
        }
    }

    #[inline]
    pub(crate) fn next_code(&mut self) -> u8 {
        let byte = self.pos >> 3;
        let shift = (self.pos & 7) as u32;
        let lo = self.bytes[byte] as u32;
        let word = if shift + self.bits > 8 {
            lo | (self.bytes[byte + 1] as u32) << 8
        } else {
            lo
        };
        self.pos += self.bits as usize;
        ((word >> shift) & self.mask) as u8
    }
}

//! Rounding helpers for 16-bit float storage.

use half::f16;

use crate::error::{Error, Result};

/// Nearest `f16`, erroring on overflow.
pub fn to_f16(x: f64, context: &'static str) -> Result<f16> {
    let h = f16::from_f64(x);
    if !h.is_finite() {
        return Err(Error::HalfOverflow { value: x, context });
    }
    Ok(h)
}

/// `x` rounded to the nearest `f16` value, widened back.
pub fn round_f16(x: f64, context: &'static str) -> Result<f64> {
    to_f16(x, context).map(f64::from)
}

fn next_up(h: f16) -> f16 {
    let bits = h.to_bits();
    if h.to_f64() == 0.0 {
        return f16::from_bits(0x0001);
    }
    if bits & 0x8000 == 0 {
        f16::from_bits(bits + 1)
    } else {
        f16::from_bits(bits - 1)
    }
}

fn next_down(h: f16) -> f16 {
    let bits = h.to_bits();
    if h.to_f64() == 0.0 {
        return f16::from_bits(0x8001);
    }
    if bits & 0x8000 == 0 {
        f16::from_bits(bits - 1)
    } else {
        f16::from_bits(bits + 1)
    }
}

/// Largest `f16` value `<= x`.
pub fn f16_floor(x: f64, context: &'static str) -> Result<f64> {
    let mut h = to_f16(x, context)?;
    if h.to_f64() > x {
        h = next_down(h);
    }
    if !h.is_finite() {
        return Err(Error::HalfOverflow { value: x, context });
    }
    Ok(h.to_f64())
}

/// Smallest `f16` value `>= x`.
pub fn f16_ceil(x: f64, context: &'static str) -> Result<f64> {
    let mut h = to_f16(x, context)?;
    if h.to_f64() < x {
        h = next_up(h);
    }
    if !h.is_finite() {
        return Err(Error::HalfOverflow { value: x, context });
    }
    Ok(h.to_f64())
}

/// Next representable `f16` above a finite `f16` value.
pub fn f16_next_up(x: f64) -> f64 {
    next_up(f16::from_f64(x)).to_f64()
}

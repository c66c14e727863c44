use super::{pack_bits, MetaPrecision, QuantizedTensor};
use crate::error::Result;
use crate::numerics::half_ext::round_f16;
use crate::numerics::Matrix;

/// 1-bit quantization `Ŵ = γ · sign(W)` with `γ = mean(|W|)`, the scale that
/// minimizes `‖W − γ·sign(W)‖_F`. Zero maps to the positive code.
pub fn sign_quantize(w: &Matrix) -> QuantizedTensor {
    sign_quantize_with(w, MetaPrecision::Full).expect("full-precision scale always fits")
}

pub fn sign_quantize_with(w: &Matrix, meta: MetaPrecision) -> Result<QuantizedTensor> {
    let n = w.data().len() as f64;
    let gamma = w.data().iter().map(|&v| (v as f64).abs()).sum::<f64>() / n;
    let gamma = match meta {
        MetaPrecision::Full => gamma,
        MetaPrecision::Half => round_f16(gamma, "sign scale")?,
    };
    let codes: Vec<u8> = w.data().iter().map(|&v| u8::from(v >= 0.0)).collect();
    QuantizedTensor::from_parts(
        w.rows(),
        w.cols(),
        1,
        w.cols(),
        vec![gamma],
        Vec::new(),
        pack_bits(&codes, 1)?,
    )
}

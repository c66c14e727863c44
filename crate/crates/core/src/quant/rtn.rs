use super::{assemble, Grid, QuantParams, QuantizedTensor};
use crate::error::Result;
use crate::numerics::Matrix;

/// Round-to-nearest on a per-group min/max grid.
pub fn rtn_quantize(w: &Matrix, bits: u8, group_size: usize) -> Result<QuantizedTensor> {
    rtn_quantize_with(w, QuantParams::new(bits, group_size))
}

pub fn rtn_quantize_with(w: &Matrix, params: QuantParams) -> Result<QuantizedTensor> {
    params.validate_multibit()?;
    let grids = fit_grids(w, params)?;
    let gpr = w.cols().div_ceil(params.group_size);
    let mut codes = Vec::with_capacity(w.rows() * w.cols());
    for r in 0..w.rows() {
        for (c, &x) in w.row(r).iter().enumerate() {
            codes.push(grids[r * gpr + c / params.group_size].code(x as f64));
        }
    }
    assemble(w.rows(), w.cols(), params, &grids, &codes)
}

/// One grid per `(row, group)`, row-major.
pub(crate) fn fit_grids(w: &Matrix, params: QuantParams) -> Result<Vec<Grid>> {
    let mut grids = Vec::with_capacity(w.rows() * w.cols().div_ceil(params.group_size));
    for r in 0..w.rows() {
        for chunk in w.row(r).chunks(params.group_size) {
            grids.push(Grid::fit(chunk.iter().copied(), params.bits, params.meta)?);
        }
    }
    Ok(grids)
}

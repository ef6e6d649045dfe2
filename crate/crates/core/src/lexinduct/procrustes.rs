use nalgebra::DMatrix;

use super::{EmbeddingTable, SeedDictionary};
use crate::error::{Error, Result};

/// Orthogonal `W` minimizing `‖X_s W − Y_s‖_F` over the seed rows, from
/// the SVD `X_sᵀ Y_s = U Σ Vᵀ` as `W = U Vᵀ`.
pub fn procrustes_map(x: &EmbeddingTable, y: &EmbeddingTable, seed: &SeedDictionary) -> Result<DMatrix<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::ShapeMismatch {
            name: "embedding dim".into(),
            expected: vec![x.dim()],
            got: vec![y.dim()],
        });
    }
    if seed.is_empty() {
        return Err(Error::SeedDictionaryEmpty);
    }
    let d = x.dim();
    let mut cross = DMatrix::<f64>::zeros(d, d);
    for (s, t) in &seed.pairs {
        let xi = x.index_of(s).ok_or_else(|| Error::MissingSeedWord(s.clone()))?;
        let yi = y.index_of(t).ok_or_else(|| Error::MissingSeedWord(t.clone()))?;
        let xr = x.matrix().row(xi);
        let yr = y.matrix().row(yi);
        cross += xr.transpose() * yr;
    }
    let svd = cross.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        unreachable!("both factors requested");
    };
    Ok(u * v_t)
}

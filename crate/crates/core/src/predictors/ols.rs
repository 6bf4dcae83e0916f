use nalgebra::{DMatrix, DVector};

use super::{FittedModel, PredictorKind};
use crate::data::Transform;
use crate::error::Result;

/// Columns whose pivoted R diagonal falls below this fraction of the leading
/// diagonal are treated as linearly dependent.
const RANK_TOL: f64 = 1e-7;

/// Least squares with an unpenalized intercept. The centered design is
/// factorized by column-pivoted QR; dependent columns get zero coefficients.
pub(super) fn fit(x: &DMatrix<f64>, y: &[f64]) -> Result<FittedModel> {
    let n = y.len();
    let p = x.ncols();
    let transform = Transform::fit(x, false);
    let ybar = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        let mut m = FittedModel::mean_only(y, 0);
        m.kind = PredictorKind::Ols;
        m.rank = Some(0);
        return Ok(m);
    }
    let xc = transform.apply(x)?;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));

    let qr = xc.col_piv_qr();
    let r = qr.r();
    let m = n.min(p);
    let lead = r[(0, 0)].abs();
    let rank = if lead > 0.0 {
        (0..m)
            .take_while(|&i| r[(i, i)].abs() > RANK_TOL * lead)
            .count()
    } else {
        0
    };

    let mut beta = DVector::zeros(p);
    if rank > 0 {
        let q = qr.q();
        let qty = q.columns(0, rank).tr_mul(&yc);
        for i in (0..rank).rev() {
            let mut acc = qty[i];
            for j in i + 1..rank {
                acc -= r[(i, j)] * beta[j];
            }
            beta[i] = acc / r[(i, i)];
        }
        qr.p().inv_permute_rows(&mut beta);
    }
    for (j, b) in beta.iter_mut().enumerate() {
        if transform.zero_variance[j] {
            *b = 0.0;
        }
    }
    let mut model = FittedModel::new(
        PredictorKind::Ols,
        beta.iter().copied().collect(),
        ybar,
        transform,
        n,
    );
    model.rank = Some(rank);
    Ok(model)
}

//! Pruning of the contest-organizer feature matrix: columns that are zero in
//! every training row are dropped, and the surviving column indices are
//! reapplied verbatim to test rows.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Drops all-zero columns. Returns the pruned matrix and the sorted list of
/// kept column indices. When `expected_kept` is given, a mismatch signals a
/// corpus mixup and fails.
pub fn prune_zero_columns(
    raw: &Matrix,
    expected_kept: Option<usize>,
) -> Result<(Matrix, Vec<usize>)> {
    if raw.nrows() == 0 {
        return Err(Error::Validation(
            "prune_zero_columns: matrix has no rows".into(),
        ));
    }
    let kept: Vec<usize> = (0..raw.ncols())
        .filter(|&c| raw.column(c).iter().any(|v| *v != 0.0))
        .collect();
    if let Some(expected) = expected_kept {
        if kept.len() != expected {
            return Err(Error::Validation(format!(
                "prune_zero_columns: kept {} columns, expected {expected}",
                kept.len()
            )));
        }
    }
    Ok((select_columns(raw, &kept), kept))
}

/// Projects a matrix onto the given column indices, in order.
pub fn select_columns(m: &Matrix, indices: &[usize]) -> Matrix {
    Matrix::from_shape_fn((m.nrows(), indices.len()), |(r, c)| m[[r, indices[c]]])
}

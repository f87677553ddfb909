use nalgebra::DMatrix;

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_EPS: f64 = 1e-10;

/// Generalized inverse of `j`.
///
/// With `damping == 0` this is the Moore-Penrose inverse computed from a
/// truncated SVD. Otherwise it is the damped least-squares inverse
/// `J^T (J J^T + damping^2 I)^-1`.
pub fn pseudoinverse(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (m, n) = j.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    if damping == 0.0 {
        return moore_penrose(j);
    }
    let mut gram = j * j.transpose();
    let d2 = damping * damping;
    for i in 0..m {
        gram[(i, i)] += d2;
    }
    match gram.clone().cholesky() {
        Some(chol) => j.transpose() * chol.inverse(),
        // gram + d2 I is SPD for any finite J, this only trips on NaN input
        None => j.transpose() * moore_penrose(&gram),
    }
}

fn moore_penrose(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = j.shape();
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_EPS * smax.max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(n, m);
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff && smax > 0.0 {
            out += v_t.row(k).transpose() * u.column(k).transpose() / *s;
        }
    }
    out
}

/// Orthogonal projector onto the null space of `j`, `I - J^+ J`, built from
/// the undamped pseudoinverse.
pub fn null_space_projector(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    let mut out = DMatrix::identity(n, n);
    if j.nrows() == 0 {
        return out;
    }
    let basis = row_space_basis(j);
    out -= &basis * basis.transpose();
    out
}

/// Orthonormal basis (as columns) of the row space of `j`.
pub fn row_space_basis(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    if j.nrows() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let (v, rank) = full_right_singular_vectors(j);
    v.columns(0, rank).into_owned()
}

/// Orthonormal basis (as columns) of the null space of `j`.
pub fn null_space_basis(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    if j.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let (v, rank) = full_right_singular_vectors(j);
    v.columns(rank, n - rank).into_owned()
}

/// All `n` right singular vectors ordered by decreasing singular value,
/// together with the numerical rank.
fn full_right_singular_vectors(j: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (m, n) = j.shape();
    // J^T J shares the right singular vectors and always yields a full n x n basis
    // but squares the conditioning, so go through the SVD of the padded matrix.
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m).copy_from(j);
        p
    } else {
        j.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| {
        svd.singular_values[*b]
            .partial_cmp(&svd.singular_values[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_EPS * smax * (m.max(n) as f64);
    let rank = if smax == 0.0 {
        0
    } else {
        order
            .iter()
            .filter(|k| svd.singular_values[**k] > cutoff)
            .count()
    };
    let mut v = DMatrix::zeros(n, n);
    for (col, k) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(*k).transpose());
    }
    (v, rank)
}

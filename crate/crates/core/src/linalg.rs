//! Small helpers around faer's compressed-column matrices.

use faer::sparse::SparseColMat;

/// `y = A x`.
pub fn spmv(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += v[p] * xj;
        }
    }
    y
}

#[cfg(test)]
/// `y = Aᵀ x`.
pub fn spmv_t(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), x.len());
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    (0..a.ncols())
        .map(|j| (cp[j]..cp[j + 1]).map(|p| v[p] * x[ri[p]]).sum())
        .collect()
}

#[cfg(test)]
/// Entry `(i, j)`, zero if not stored.
pub fn entry(a: &SparseColMat<usize, f64>, i: usize, j: usize) -> f64 {
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    (cp[j]..cp[j + 1])
        .filter(|&p| ri[p] == i)
        .map(|p| a.val()[p])
        .sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::sparse::Triplet;

    #[test]
    fn products_match_dense() {
        let t = [
            Triplet::new(0, 0, 1.0),
            Triplet::new(1, 0, 2.0),
            Triplet::new(0, 2, -1.0),
            Triplet::new(1, 1, 3.0),
            Triplet::new(1, 1, 1.0),
        ];
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(2, 3, &t).unwrap();
        assert_eq!(spmv(&a, &[1.0, 1.0, 1.0]), vec![0.0, 6.0]);
        assert_eq!(spmv_t(&a, &[1.0, 2.0]), vec![5.0, 8.0, -1.0]);
        assert_eq!(entry(&a, 1, 1), 4.0);
        assert_eq!(entry(&a, 0, 1), 0.0);
    }
}

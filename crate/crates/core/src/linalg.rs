//! Weighted least squares through a column-pivoted Householder QR of
//! `W^{1/2} X`, plus the hat values and the per-coordinate `h̃` diagonals used
//! by the median adjustment.

use crate::error::{GlmError, Result};
use nalgebra::{DMatrix, DVector};

/// Pivots smaller than this multiple of the leading pivot mark an aliased column.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub coefficients: DVector<f64>,
    pub xtwx_inverse: DMatrix<f64>,
    pub hat: DVector<f64>,
}

/// Factorization `W^{1/2} X P = Q R` reused for solves, hat values and the
/// inverse cross-product.
#[derive(Debug, Clone)]
pub struct WeightedQr {
    // R in the upper triangle, Householder vectors below it
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    sqrt_w: DVector<f64>,
    /// `W^{1/2} X` before factorization, kept for the hat values.
    scaled: DMatrix<f64>,
}

impl WeightedQr {
    pub fn new(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if w.len() != n {
            return Err(GlmError::Dimension(format!(
                "design has {n} rows but {} weights were given",
                w.len()
            )));
        }
        if p == 0 || n < p {
            return Err(GlmError::Dimension(format!(
                "need n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        if let Some(i) = w.iter().position(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
            return Err(GlmError::InvalidArgument(format!(
                "weight {} at row {i} is not a finite non-negative number",
                w[i]
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::InvalidArgument("design has non-finite entries".into()));
        }
        let sqrt_w = w.map(f64::sqrt);
        let mut a = x.clone();
        for (i, s) in sqrt_w.iter().enumerate() {
            a.row_mut(i).scale_mut(*s);
        }
        let scaled = a.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = vec![0.0; p];
        let mut norms: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared()).collect();
        let mut leading = 0.0;

        for k in 0..p {
            let (best, _) = norms[k..]
                .iter()
                .enumerate()
                .fold((k, -1.0), |acc, (i, &v)| if v > acc.1 { (k + i, v) } else { acc });
            if best != k {
                a.swap_columns(k, best);
                norms.swap(k, best);
                perm.swap(k, best);
            }
            let alpha = a.view((k, k), (n - k, 1)).norm();
            if k == 0 {
                leading = alpha;
            }
            if !(alpha > RANK_TOLERANCE * leading) || leading == 0.0 {
                return Err(GlmError::RankDeficient { column: perm[k] });
            }
            let beta = if a[(k, k)] > 0.0 { -alpha } else { alpha };
            let v0 = a[(k, k)] - beta;
            for i in k + 1..n {
                a[(i, k)] /= v0;
            }
            tau[k] = (beta - a[(k, k)]) / beta;
            a[(k, k)] = beta;
            for j in k + 1..p {
                let mut s = a[(k, j)];
                for i in k + 1..n {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= tau[k];
                a[(k, j)] -= s;
                for i in k + 1..n {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
                // exact downdate is cheap enough at these sizes
                norms[j] = a.view((k + 1, j), (n - k - 1, 1)).norm_squared();
            }
        }
        Ok(WeightedQr {
            qr: a,
            tau,
            perm,
            sqrt_w,
            scaled,
        })
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// Column permutation: position `k` of the factor holds design column `perm[k]`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn apply_qt(&self, b: &mut DVector<f64>) {
        let n = b.len();
        for k in 0..self.ncols() {
            let mut s = b[k];
            for i in k + 1..n {
                s += self.qr[(i, k)] * b[i];
            }
            s *= self.tau[k];
            b[k] -= s;
            for i in k + 1..n {
                b[i] -= s * self.qr[(i, k)];
            }
        }
    }

    fn solve_r(&self, rhs: &mut [f64]) {
        let p = self.ncols();
        for k in (0..p).rev() {
            let mut s = rhs[k];
            for j in k + 1..p {
                s -= self.qr[(k, j)] * rhs[j];
            }
            rhs[k] = s / self.qr[(k, k)];
        }
    }

    /// `(XᵀWX)⁻¹ XᵀW z`.
    pub fn solve(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.sqrt_w.len() {
            return Err(GlmError::Dimension(format!(
                "response has length {}, expected {}",
                z.len(),
                self.sqrt_w.len()
            )));
        }
        let mut b = z.component_mul(&self.sqrt_w);
        self.apply_qt(&mut b);
        let p = self.ncols();
        let mut head: Vec<f64> = b.iter().take(p).copied().collect();
        self.solve_r(&mut head);
        let mut beta = DVector::zeros(p);
        for (k, &c) in self.perm.iter().enumerate() {
            beta[c] = head[k];
        }
        Ok(beta)
    }

    /// `R⁻¹` for the permuted columns, as a dense upper-triangular matrix.
    fn r_inverse(&self) -> DMatrix<f64> {
        let p = self.ncols();
        let mut inv = DMatrix::zeros(p, p);
        for col in 0..p {
            let mut e = vec![0.0; p];
            e[col] = 1.0;
            self.solve_r(&mut e);
            for (row, v) in e.into_iter().enumerate() {
                inv[(row, col)] = v;
            }
        }
        inv
    }

    /// `(XᵀWX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ`.
    pub fn xtwx_inverse(&self) -> DMatrix<f64> {
        let ri = self.r_inverse();
        let inner = &ri * ri.transpose();
        let p = self.ncols();
        let mut out = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                out[(self.perm[a], self.perm[b])] = inner[(a, b)];
            }
        }
        // exact symmetry
        let t = out.transpose();
        (out + t) * 0.5
    }

    /// Diagonal of `X(XᵀWX)⁻¹XᵀW`, computed as squared row norms of
    /// `Q₁ = W^{1/2} X P R⁻¹`. Zero-weight rows give exactly zero.
    pub fn hat(&self) -> DVector<f64> {
        let ri = self.r_inverse();
        let n = self.scaled.nrows();
        let p = self.ncols();
        let mut h = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for col in 0..p {
                let mut q = 0.0;
                for k in 0..=col {
                    q += self.scaled[(i, self.perm[k])] * ri[(k, col)];
                }
                acc += q * q;
            }
            h[i] = acc;
        }
        h
    }
}

pub fn wls_solve(x: &DMatrix<f64>, w: &DVector<f64>, z: &DVector<f64>) -> Result<WlsSolution> {
    let qr = WeightedQr::new(x, w)?;
    Ok(WlsSolution {
        coefficients: qr.solve(z)?,
        xtwx_inverse: qr.xtwx_inverse(),
        hat: qr.hat(),
    })
}

pub fn hat_diagonals(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(WeightedQr::new(x, w)?.hat())
}

/// Diagonal of `X K_j Xᵀ W` with `K_j = c_j c_jᵀ / c_jj`, `c_j` the `j`th
/// column (zero-based) of `(XᵀWX)⁻¹`. The entries sum to one.
pub fn htilde_diagonals(x: &DMatrix<f64>, w: &DVector<f64>, j: usize) -> Result<DVector<f64>> {
    let inv = WeightedQr::new(x, w)?.xtwx_inverse();
    htilde_from_inverse(x, w, &inv, j)
}

pub(crate) fn htilde_from_inverse(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    inv: &DMatrix<f64>,
    j: usize,
) -> Result<DVector<f64>> {
    if j >= inv.ncols() {
        return Err(GlmError::Dimension(format!(
            "coordinate {j} out of range for p = {}",
            inv.ncols()
        )));
    }
    let c = inv.column(j);
    let cjj = c[j];
    if !(cjj > 0.0) {
        return Err(GlmError::SingularInformation);
    }
    let xc = x * c;
    Ok(DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| w[i] * xc[i] * xc[i] / cjj),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(data)
    }

    // normal equations solved with the explicit inverse: the oracle the QR
    // route must agree with
    fn normal_equations(x: &DMatrix<f64>, w: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let wx = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| w[i] * x[(i, j)]);
        let xtwx = x.transpose() * &wx;
        xtwx.try_inverse().unwrap() * wx.transpose() * z
    }

    #[test]
    fn interpolation_and_exact_line() {
        let s = wls_solve(&DMatrix::identity(2, 2), &v(&[1.0, 1.0]), &v(&[1.0, 2.0])).unwrap();
        assert!((s.coefficients - v(&[1.0, 2.0])).amax() < 1e-14);
        let x = m(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let s = wls_solve(&x, &v(&[1.0; 3]), &v(&[0.0, 1.0, 2.0])).unwrap();
        assert!((s.coefficients - v(&[0.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn weighted_two_by_two_closed_form() {
        let x = m(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let w = v(&[1.0, 2.0, 1.0]);
        let z = v(&[1.0, 0.0, 2.0]);
        // XᵀWX = [[4, 5], [5, 11]], XᵀWz = [3, 6]; det = 19
        let (a, b, c) = (4.0, 5.0, 11.0);
        let det = a * c - b * b;
        let beta0 = (c * 3.0 - b * 6.0) / det;
        let beta1 = (-b * 3.0 + a * 6.0) / det;
        let s = wls_solve(&x, &w, &z).unwrap();
        assert!((s.coefficients[0] - beta0).abs() < 1e-14);
        assert!((s.coefficients[1] - beta1).abs() < 1e-14);
        let inv = m(2, 2, &[c / det, -b / det, -b / det, a / det]);
        assert!((s.xtwx_inverse - inv).amax() < 1e-14);
    }

    #[test]
    fn hat_values_match_dense_product() {
        let x = m(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let w = v(&[1.0, 2.0, 1.0]);
        let s = wls_solve(&x, &w, &v(&[0.0; 3])).unwrap();
        let wd = DMatrix::from_diagonal(&w);
        let h = &x * &s.xtwx_inverse * x.transpose() * wd;
        for i in 0..3 {
            assert!((s.hat[i] - h[(i, i)]).abs() < 1e-14);
        }
        assert!((s.hat.sum() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_intercept_hat_is_one_over_n() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let h = hat_diagonals(&x, &v(&[2.0; 5])).unwrap();
        assert!(h.iter().all(|&hi| (hi - 0.2).abs() < 1e-15));
    }

    #[test]
    fn htilde_examples() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, -1.0, 0.5]);
        let w = v(&[1.0, 0.5, 2.0, 1.0]);
        let ht = htilde_diagonals(&x, &w, 0).unwrap();
        let h = hat_diagonals(&x, &w).unwrap();
        assert!((ht - h).amax() < 1e-15);

        // orthogonal columns, unit weights
        let x = m(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 2.0, 1.0, -2.0]);
        let w = v(&[1.0; 4]);
        let ht = htilde_diagonals(&x, &w, 1).unwrap();
        let ss: f64 = x.column(1).iter().map(|a| a * a).sum();
        for i in 0..4 {
            assert!((ht[i] - x[(i, 1)].powi(2) / ss).abs() < 1e-15);
        }

        // dense K_j product on the non-orthogonal example
        let x = m(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let w = v(&[1.0, 2.0, 1.0]);
        let inv = wls_solve(&x, &w, &v(&[0.0; 3])).unwrap().xtwx_inverse;
        let c = inv.column(1).into_owned();
        let k = &c * c.transpose() / c[1];
        let dense = &x * k * x.transpose() * DMatrix::from_diagonal(&w);
        let ht = htilde_diagonals(&x, &w, 1).unwrap();
        for i in 0..3 {
            assert!((ht[i] - dense[(i, i)]).abs() < 1e-14);
        }
        assert!((ht.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_names_the_column() {
        let x = m(4, 3, &[1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0, 5.0, 6.0, 1.0, 1.0, 2.0]);
        // column 2 = column 0 + column 1
        let err = wls_solve(&x, &v(&[1.0; 4]), &v(&[0.0; 4])).unwrap_err();
        assert!(matches!(err, GlmError::RankDeficient { .. }));
        let x = m(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            wls_solve(&x, &v(&[1.0; 3]), &v(&[0.0; 3])).unwrap_err(),
            GlmError::RankDeficient { column: 1 }
        );
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = m(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 7.0]);
        let s = wls_solve(&x, &v(&[1.0, 1.0, 1.0, 0.0]), &v(&[0.0, 1.0, 2.0, 100.0])).unwrap();
        assert!((s.coefficients - v(&[0.0, 1.0])).amax() < 1e-13);
        assert_eq!(s.hat[3], 0.0);
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        (1usize..=3, 0usize..=5).prop_flat_map(|(p, extra)| {
            let n = p + 1 + extra;
            (
                proptest::collection::vec(-2.0f64..2.0, n * p),
                proptest::collection::vec(0.2f64..3.0, n),
                proptest::collection::vec(-5.0f64..5.0, n),
            )
                .prop_map(move |(xs, ws, zs)| {
                    let mut x = DMatrix::from_row_slice(n, p, &xs);
                    // keep an intercept-like column to stay well conditioned
                    for i in 0..n {
                        x[(i, 0)] = 1.0 + 0.1 * i as f64;
                    }
                    (x, DVector::from_vec(ws), DVector::from_vec(zs))
                })
        })
    }

    proptest! {
        #[test]
        fn qr_matches_normal_equations((x, w, z) in instance()) {
            let s = match wls_solve(&x, &w, &z) {
                Ok(s) => s,
                Err(GlmError::RankDeficient { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let xtwx = x.transpose() * DMatrix::from_diagonal(&w) * &x;
            prop_assume!(xtwx.clone().try_inverse().is_some());
            let cond = {
                let sv = xtwx.singular_values();
                sv.max() / sv.min()
            };
            prop_assume!(cond < 1e6);
            let oracle = normal_equations(&x, &w, &z);
            prop_assert!((s.coefficients.clone() - oracle).amax() < 1e-8);
            let resid = &z - &x * &s.coefficients;
            let ortho = x.transpose() * resid.component_mul(&w);
            prop_assert!(ortho.amax() < 1e-8 * (1.0 + z.amax()));
            prop_assert!(s.hat.iter().all(|&h| (-1e-12..=1.0 + 1e-12).contains(&h)));
            prop_assert!((s.hat.sum() - x.ncols() as f64).abs() < 1e-8);
        }

        #[test]
        fn weight_scaling((x, w, z) in instance(), c in 0.1f64..10.0) {
            let Ok(a) = wls_solve(&x, &w, &z) else { return Ok(()) };
            let b = wls_solve(&x, &(w.clone() * c), &z).unwrap();
            let scale = 1.0 + a.coefficients.amax();
            prop_assert!((a.coefficients.clone() - b.coefficients).amax() < 1e-10 * scale);
            prop_assert!((a.hat.clone() - b.hat).amax() < 1e-10);
            let inv_scale = 1.0 + a.xtwx_inverse.amax();
            prop_assert!((a.xtwx_inverse.clone() / c - b.xtwx_inverse).amax() < 1e-10 * inv_scale);
        }

        #[test]
        fn htilde_sums_to_one((x, w, _z) in instance()) {
            let Ok(s) = wls_solve(&x, &w, &DVector::zeros(x.nrows())) else { return Ok(()) };
            for j in 0..x.ncols() {
                let ht = htilde_from_inverse(&x, &w, &s.xtwx_inverse, j).unwrap();
                prop_assert!((ht.sum() - 1.0).abs() < 1e-8);
            }
        }
    }
}

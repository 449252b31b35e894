//! Small dense linear algebra: exactly-symmetric and exactly-skew matrix
//! wrappers, a pivot-guarded Cholesky positive-definiteness test, and the
//! canonical block normal form of skew-symmetric matrices.
//!
//! Everything here works at "desk scale" (dimensions up to ~10); there is
//! no attempt at large-scale performance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric matrix with `entries[(i,j)] == entries[(j,i)]` bit-exactly.
///
/// Constructors evaluate each unordered index pair once and mirror the
/// value, so the invariant holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Wraps a matrix that is already bit-exactly symmetric.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("symmetric matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if m[(i, j)].to_bits() != m[(j, i)].to_bits() {
                    return Err(Error::Validation(format!(
                        "matrix not exactly symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Symmetrizes by averaging the off-diagonal pairs.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        SymMatrix::from_fn(m.nrows(), |i, j| {
            if i == j { m[(i, i)] } else { 0.5 * (m[(i, j)] + m[(j, i)]) }
        })
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Skew-symmetric matrix with `entries[(i,j)] == -entries[(j,i)]` exactly
/// and a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix(DMatrix<f64>);

impl SkewMatrix {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        SkewMatrix(m)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("skew matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if a != -b || (i == j && a != 0.0) {
                    return Err(Error::Validation(format!(
                        "matrix not exactly skew-symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SkewMatrix(m))
    }

    pub fn zeros(dim: usize) -> Self {
        SkewMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Conjugation `G^T Omega G`, re-wrapped with exact skewness.
    pub fn conjugate(&self, g: &DMatrix<f64>) -> SkewMatrix {
        let m = g.transpose() * &self.0 * g;
        SkewMatrix::from_fn(self.dim(), |i, j| 0.5 * (m[(i, j)] - m[(j, i)]))
    }
}

impl std::ops::Index<(usize, usize)> for SkewMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Outcome of the positive-definiteness test.
#[derive(Debug, Clone)]
pub enum CholeskyOutcome {
    /// Lower-triangular factor `L` with `L L^T = M`.
    Factor(DMatrix<f64>),
    /// The factorization met a non-positive pivot at this index.
    NotPd { pivot_index: usize },
}

impl CholeskyOutcome {
    pub fn is_pd(&self) -> bool {
        matches!(self, CholeskyOutcome::Factor(_))
    }

    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        match self {
            CholeskyOutcome::Factor(l) => Some(l),
            CholeskyOutcome::NotPd { .. } => None,
        }
    }
}

/// Cholesky factorization used as a positive-definiteness test.
///
/// A pivot is rejected when it drops to `1e-13` times the largest diagonal
/// entry of the input; that threshold is the numerical boundary of the
/// conic domain in the callers.
pub fn cholesky_pd(m: &SymMatrix) -> Result<CholeskyOutcome> {
    let n = m.dim();
    let a = m.matrix();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entries".into()));
    }
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let threshold = 1e-13 * max_diag.max(0.0);

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= threshold {
            return Ok(CholeskyOutcome::NotPd { pivot_index: j });
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(CholeskyOutcome::Factor(l))
}

/// Canonical block normal form of a skew-symmetric matrix: an orthogonal
/// `B` with `B^T Omega B = a_1 J (+) ... (+) a_m J` (a trailing zero row
/// and column in odd dimension), `a_1 >= ... >= a_m >= 0` and
/// `J = [[0, 1], [-1, 0]]`.
#[derive(Debug, Clone)]
pub struct SkewNormalForm {
    /// Block values, sorted descending; length `dim / 2`.
    pub blocks: Vec<f64>,
    /// True when the dimension is odd (trailing zero direction).
    pub residual_zero: bool,
    /// Orthogonal change of basis.
    pub transform: DMatrix<f64>,
}

impl SkewNormalForm {
    /// Assembles the block-diagonal matrix this form describes.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.blocks.len() + usize::from(self.residual_zero);
        let mut m = DMatrix::zeros(n, n);
        for (b, &a) in self.blocks.iter().enumerate() {
            m[(2 * b, 2 * b + 1)] = a;
            m[(2 * b + 1, 2 * b)] = -a;
        }
        m
    }
}

/// Computes the canonical block normal form of `omega`.
///
/// The block values are the nonnegative imaginary parts of the spectrum,
/// obtained from the symmetric eigendecomposition of `Omega^T Omega`; the
/// basis pairs each eigenvector `u` with `Omega u / a`.
pub fn skew_normal_form(omega: &SkewMatrix) -> Result<SkewNormalForm> {
    let n = omega.dim();
    let om = omega.matrix();
    if om.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entries".into()));
    }
    let scale = om.amax().max(1e-300);
    let zero_tol = 1e-12 * scale;

    // S = Omega^T Omega = -Omega^2 is symmetric PSD with eigenvalues a_k^2,
    // each appearing twice (plus zeros).
    let s = om.transpose() * om;
    let eig = nalgebra::SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let mut pool: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut blocks: Vec<f64> = Vec::with_capacity(n / 2);

    while let Some(mut u) = pool.first().cloned() {
        pool.remove(0);
        // Re-orthogonalize against the columns already chosen, then
        // normalize; degenerate leftovers are skipped.
        for c in &columns {
            let p = c.dot(&u);
            u -= c * p;
        }
        let nu = u.norm();
        if nu < 1e-8 {
            continue;
        }
        u /= nu;

        let wu = om * &u;
        let a = wu.norm(); // |Omega u| = a for an eigenvector of S
        if a <= zero_tol {
            // Kernel direction: a zero column of the normal form.
            columns.push(u);
            continue;
        }
        let v = wu / a;
        // Column order (v, u) realizes the +aJ block.
        columns.push(v);
        columns.push(u);
        blocks.push(a);
    }

    if columns.len() != n {
        return Err(Error::Validation(format!(
            "normal-form basis incomplete: {} of {n} columns",
            columns.len()
        )));
    }

    // Move kernel columns last and pair them into zero blocks.
    let mut paired: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut kernel: Vec<DVector<f64>> = Vec::new();
    let mut it = columns.into_iter();
    for _ in 0..blocks.len() {
        paired.push(it.next().expect("paired column"));
        paired.push(it.next().expect("paired column"));
    }
    kernel.extend(it);
    while kernel.len() >= 2 {
        paired.push(kernel.remove(0));
        paired.push(kernel.remove(0));
        blocks.push(0.0);
    }
    let residual_zero = if let Some(last) = kernel.pop() {
        paired.push(last);
        true
    } else {
        false
    };

    let transform = DMatrix::from_columns(&paired);
    blocks.sort_by(|x, y| y.partial_cmp(x).expect("finite block values"));

    let form = SkewNormalForm { blocks, residual_zero, transform };

    // The construction can only fail to reproduce the block form through
    // numerical degeneracy; surface that instead of returning garbage.
    let bt_omega_b = form.transform.transpose() * om * &form.transform;
    let residual = (&bt_omega_b - form.block_matrix()).amax();
    let ortho = (form.transform.transpose() * &form.transform - DMatrix::identity(n, n)).amax();
    if residual > 1e-8 * scale.max(1.0) || ortho > 1e-10 {
        return Err(Error::Validation(format!(
            "normal form residuals too large: block {residual:.3e}, orthogonality {ortho:.3e}"
        )));
    }
    Ok(form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_identity() {
        let m = SymMatrix::identity(3);
        let out = cholesky_pd(&m).unwrap();
        let l = out.factor().expect("identity is PD");
        assert_abs_diff_eq!(l, &DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn cholesky_diagonal() {
        let m = SymMatrix::from_fn(2, |i, j| {
            if i == j { [2.0, 3.0][i] } else { 0.0 }
        });
        let out = cholesky_pd(&m).unwrap();
        let l = out.factor().expect("diag(2,3) is PD");
        assert_abs_diff_eq!(l[(0, 0)], 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 3.0_f64.sqrt(), epsilon = 1e-15);
        let rec = l * l.transpose();
        assert!((rec - m.matrix()).amax() < 1e-12);
    }

    #[test]
    fn cholesky_indefinite() {
        let m = SymMatrix::from_fn(2, |i, j| {
            if i == j { [1.0, -1.0][i] } else { 0.0 }
        });
        assert!(!cholesky_pd(&m).unwrap().is_pd());
    }

    #[test]
    fn cholesky_rejects_non_finite() {
        let m = SymMatrix::from_fn(2, |i, j| if (i, j) == (0, 1) { f64::NAN } else { 1.0 });
        assert!(cholesky_pd(&m).is_err());
    }

    #[test]
    fn normal_form_of_j() {
        let j = SkewMatrix::from_fn(2, |_, _| 1.0);
        let nf = skew_normal_form(&j).unwrap();
        assert_eq!(nf.blocks.len(), 1);
        assert_abs_diff_eq!(nf.blocks[0], 1.0, epsilon = 1e-12);
        assert!(!nf.residual_zero);
    }

    #[test]
    fn normal_form_of_zero() {
        let z = SkewMatrix::zeros(4);
        let nf = skew_normal_form(&z).unwrap();
        assert_eq!(nf.blocks, vec![0.0, 0.0]);
    }

    #[test]
    fn normal_form_odd_dimension() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 2.0;
        m[(1, 0)] = -2.0;
        let nf = skew_normal_form(&SkewMatrix::from_matrix(m).unwrap()).unwrap();
        assert_eq!(nf.blocks.len(), 1);
        assert!(nf.residual_zero);
        assert_abs_diff_eq!(nf.blocks[0], 2.0, epsilon = 1e-12);
    }

    /// Characteristic polynomial coefficients by Faddeev-LeVerrier; the
    /// independent route for the 4x4 block example.
    fn char_poly(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut coeffs = vec![1.0];
        let mut aux = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            aux = m * aux;
            let c = -aux.trace() / k as f64;
            coeffs.push(c);
            for i in 0..n {
                aux[(i, i)] += c;
            }
        }
        coeffs
    }

    #[test]
    fn normal_form_of_assembled_block_matrix() {
        // Omega from C = (1,0,0) and Q = [[0,0,0],[0,0,1],[0,-1,0]] in the
        // [0 C^t; -C -Q] block layout.
        let c = [1.0, 0.0, 0.0];
        let q = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]];
        let omega = SkewMatrix::from_fn(4, |i, j| {
            if i == 0 {
                c[j - 1]
            } else {
                -q[i - 1][j - 1]
            }
        });

        // Independent oracle: lambda^4 + p lambda^2 + r with roots
        // lambda = +-i a; solve a^4 - p a^2 + r = 0.
        let cp = char_poly(omega.matrix());
        assert_abs_diff_eq!(cp[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cp[3], 0.0, epsilon = 1e-12);
        let (p, r) = (cp[2], cp[4]);
        let disc = (p * p - 4.0 * r).max(0.0).sqrt();
        let mut a_sq = [(p + disc) / 2.0, (p - disc) / 2.0];
        a_sq.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let expected: Vec<f64> = a_sq.iter().map(|v| v.max(0.0).sqrt()).collect();
        assert_abs_diff_eq!(expected[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expected[1], 1.0, epsilon = 1e-12);

        let nf = skew_normal_form(&omega).unwrap();
        for (got, want) in nf.blocks.iter().zip(&expected) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn normal_form_with_repeated_blocks_and_kernel() {
        // Block values (2, 2, 0) hidden by a fixed rotation: the repeated
        // eigenvalue and the kernel must both come back out.
        let mut block = DMatrix::zeros(6, 6);
        for b in 0..2 {
            block[(2 * b, 2 * b + 1)] = 2.0;
            block[(2 * b + 1, 2 * b)] = -2.0;
        }
        let mut rng_state = 1234_u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        let g = DMatrix::from_fn(6, 6, |_, _| next()).qr().q();
        let omega = SkewMatrix::from_matrix(
            DMatrix::from_fn(6, 6, |i, j| {
                let m = g.transpose() * &block * &g;
                0.5 * (m[(i, j)] - m[(j, i)])
            }),
        )
        .unwrap();
        let nf = skew_normal_form(&omega).unwrap();
        assert_eq!(nf.blocks.len(), 3);
        assert_abs_diff_eq!(nf.blocks[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nf.blocks[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nf.blocks[2], 0.0, epsilon = 1e-10);
        assert!(!nf.residual_zero);
    }

    #[test]
    fn normal_form_reconstructs_omega() {
        let omega = SkewMatrix::from_fn(5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 3.0 - 1.0);
        let nf = skew_normal_form(&omega).unwrap();
        let b = &nf.transform;
        assert!((b.transpose() * b - DMatrix::identity(5, 5)).amax() < 1e-12);
        let reassembled = b.transpose() * omega.matrix() * b;
        assert!((reassembled - nf.block_matrix()).amax() < 1e-10);
        assert!(nf.residual_zero);
    }
}

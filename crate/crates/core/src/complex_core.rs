//! Small dense complex linear algebra for the closed-form beamformers.
//!
//! Everything here is double precision. The only factorization is a
//! Hermitian Cholesky decomposition: every matrix the beamformers need to
//! invert is `sum_l w_l h_l h_l^H + sigma^2 I` (positive definite whenever
//! `sigma^2 > 0`) or the Gram matrix `H H^H` of a full-row-rank channel.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A dense complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec(pub Vec<C64>);

impl CVec {
    pub fn new(entries: Vec<C64>) -> Self {
        CVec(entries)
    }

    pub fn zeros(len: usize) -> Self {
        CVec(vec![C64::new(0.0, 0.0); len])
    }

    /// `e_k` of length `len`.
    pub fn basis(len: usize, k: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[k] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_re_im(re: &[f64], im: &[f64]) -> Self {
        assert_eq!(re.len(), im.len());
        CVec(re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: C64) -> CVec {
        CVec(self.0.iter().map(|z| z * c).collect())
    }

    /// Unit-norm copy. `None` for the zero vector.
    pub fn normalized(&self) -> Option<CVec> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self.scale(C64::new(1.0 / n, 0.0)))
        } else {
            None
        }
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// `a^H b = sum conj(a_i) b_i`.
pub fn hdot(a: &CVec, b: &CVec) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "hdot of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(hdot_unchecked(a.as_slice(), b.as_slice()))
}

pub(crate) fn hdot_unchecked(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Dense Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMat {
    dim: usize,
    entries: Vec<C64>,
}

impl HermMat {
    pub fn scaled_identity(dim: usize, diag: f64) -> Self {
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = C64::new(diag, 0.0);
        }
        HermMat { dim, entries }
    }

    /// Builds from row-major entries, checking Hermitian symmetry to 1e-12.
    pub fn from_rows(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        let m = HermMat { dim, entries };
        let asym = m.max_asymmetry();
        if asym > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "matrix is not Hermitian (max |A - A^H| = {asym:e})"
            )));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &CVec) -> Result<CVec> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of length {}",
                self.dim,
                self.dim,
                x.len()
            )));
        }
        let n = self.dim;
        Ok(CVec(
            (0..n)
                .map(|i| {
                    self.entries[i * n..(i + 1) * n]
                        .iter()
                        .zip(x.iter())
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
        ))
    }

    /// Adds `w * v v^H`. Only the lower triangle is computed; the upper one is
    /// mirrored so the result is exactly Hermitian.
    fn add_rank1(&mut self, v: &[C64], w: f64) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..i {
                let z = v[i] * v[j].conj() * w;
                self.entries[i * n + j] += z;
                self.entries[j * n + i] = self.entries[i * n + j].conj();
            }
            self.entries[i * n + i] += C64::new(w * v[i].norm_sqr(), 0.0);
        }
    }
}

/// `sum_l w_l v_l v_l^H + ridge * I` for vectors of length `dim`.
pub fn rank1_accumulate(dim: usize, vectors: &[&CVec], weights: &[f64], ridge: f64) -> Result<HermMat> {
    if vectors.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} vectors but {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if dim == 0 {
        return Err(Error::Dimension("zero-dimensional matrix".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
    }
    let mut acc = HermMat::scaled_identity(dim, ridge);
    for (v, &w) in vectors.iter().zip(weights) {
        if v.len() != dim {
            return Err(Error::Dimension(format!("vector of length {} in a {dim}-dim sum", v.len())));
        }
        if !(w >= 0.0) {
            return Err(Error::InvalidInput(format!("weight must be nonnegative, got {w}")));
        }
        acc.add_rank1(v.as_slice(), w);
    }
    Ok(acc)
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H` and real positive diagonal.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<C64>,
}

impl Cholesky {
    /// Factors `a`. A pivot `<= tol * max_diag(a)` is reported as not positive
    /// definite; `tol = 0` accepts any strictly positive pivot.
    pub fn factor(a: &HermMat, tol: f64) -> Result<Self> {
        let n = a.dim;
        let scale = (0..n).map(|i| a.get(i, i).re).fold(0.0f64, f64::max);
        let mut l = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = a.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > tol * scale) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }

    /// Squared diagonal of `L`, i.e. the pivots of the factorization.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.lower[i * self.dim + i].re.powi(2)).collect()
    }

    pub fn solve(&self, b: &CVec) -> Result<CVec> {
        let n = self.dim;
        if b.len() != n {
            return Err(Error::Dimension(format!(
                "{n}x{n} system with right-hand side of length {}",
                b.len()
            )));
        }
        // L y = b
        let mut y = b.0.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i].re;
        }
        // L^H x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i].conj() * y[k];
            }
            y[i] = s / self.lower[i * n + i].re;
        }
        Ok(CVec(y))
    }
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn pd_solve(a: &HermMat, b: &CVec) -> Result<CVec> {
    Cholesky::factor(a, 0.0)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hdot_examples() {
        let e1 = CVec::new(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(hdot(&e1, &e1).unwrap(), c(1.0, 0.0));
        let i1 = CVec::new(vec![c(0.0, 1.0), c(0.0, 0.0)]);
        assert_eq!(hdot(&i1, &i1).unwrap(), c(1.0, 0.0));
        let a = CVec::new(vec![c(1.0, 1.0), c(2.0, 0.0)]);
        let b = CVec::new(vec![c(3.0, 0.0), c(0.0, -1.0)]);
        assert_eq!(hdot(&a, &b).unwrap(), c(3.0, -5.0));
    }

    #[test]
    fn hdot_rejects_length_mismatch() {
        let a = CVec::zeros(2);
        let b = CVec::zeros(3);
        assert!(matches!(hdot(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn rank1_examples() {
        let m = rank1_accumulate(2, &[], &[], 2.0).unwrap();
        assert_eq!(m, HermMat::scaled_identity(2, 2.0));

        let v = CVec::new(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let m = rank1_accumulate(2, &[&v], &[1.0], 0.0).unwrap();
        assert_eq!(m.entries(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        let v = CVec::new(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let m = rank1_accumulate(2, &[&v], &[0.5], 1.0).unwrap();
        assert_eq!(m.entries(), &[c(1.5, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(1.5, 0.0)]);
    }

    #[test]
    fn rank1_rejects_mismatch() {
        let v = CVec::zeros(3);
        assert!(rank1_accumulate(2, &[&v], &[1.0], 1.0).is_err());
        assert!(rank1_accumulate(3, &[&v], &[], 1.0).is_err());
    }

    #[test]
    fn pd_solve_diagonal_cases() {
        let b = CVec::new(vec![c(0.3, -1.0), c(2.0, 0.5)]);
        let x = pd_solve(&HermMat::scaled_identity(2, 1.0), &b).unwrap();
        assert_eq!(x, b);
        let b = CVec::new(vec![c(4.0, 0.0), c(0.0, 2.0)]);
        let x = pd_solve(&HermMat::scaled_identity(2, 2.0), &b).unwrap();
        let want = CVec::new(vec![c(2.0, 0.0), c(0.0, 1.0)]);
        assert!(x.iter().zip(want.iter()).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn cholesky_names_failing_pivot() {
        // [[1, 1], [1, 1]] is singular: the second pivot is 0.
        let a = HermMat::from_rows(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        match pd_solve(&a, &CVec::zeros(2)) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
        let neg = HermMat::scaled_identity(3, -1.0);
        assert!(matches!(
            pd_solve(&neg, &CVec::zeros(3)),
            Err(Error::NotPositiveDefinite { pivot: 0, .. })
        ));
    }

    #[test]
    fn from_rows_checks_symmetry() {
        let bad = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(1.0, 0.0)];
        assert!(HermMat::from_rows(2, bad).is_err());
    }
}

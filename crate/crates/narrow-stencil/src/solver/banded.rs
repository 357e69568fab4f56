//! Banded LU factorization with partial pivoting, in LAPACK band storage
//! (an extra `kl` superdiagonals absorb pivoting fill-in).

use super::SolverError;

/// Square banded matrix with `kl` subdiagonals and `ku` superdiagonals.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Rows of the band storage: `2 kl + ku + 1`.
    rows: usize,
    /// Column-major band storage; entry `(i, j)` lives at
    /// `data[j * rows + kl + ku + i - j]`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            rows,
            data: vec![0.0; rows * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.kl + self.ku >= j && j + self.kl >= i, "({i},{j}) outside band");
        j * self.rows + self.kl + self.ku + i - j
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.kl + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    /// In-place LU factorization with partial pivoting.
    pub fn factor(&mut self) -> Result<BandedLu<'_>, SolverError> {
        let n = self.n;
        let kl = self.kl;
        let width = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            let i_end = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = self.data[self.slot(j, j)].abs();
            for i in (j + 1)..=i_end {
                let v = self.data[self.slot(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(SolverError::SingularJacobian { column: j });
            }
            piv[j] = p;
            let c_end = (j + width).min(n - 1);
            if p != j {
                for c in j..=c_end {
                    let sj = self.slot(j, c);
                    let sp = self.slot(p, c);
                    self.data.swap(sj, sp);
                }
            }
            let d = self.data[self.slot(j, j)];
            for i in (j + 1)..=i_end {
                let s_ij = self.slot(i, j);
                let m = self.data[s_ij] / d;
                self.data[s_ij] = m;
                if m != 0.0 {
                    for c in (j + 1)..=c_end {
                        let s_jc = self.slot(j, c);
                        let s_ic = self.slot(i, c);
                        self.data[s_ic] -= m * self.data[s_jc];
                    }
                }
            }
        }
        Ok(BandedLu { mat: self, piv })
    }
}

/// A factored banded matrix, ready to solve.
pub struct BandedLu<'a> {
    mat: &'a BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu<'_> {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let width = self.mat.kl + self.mat.ku;
        assert_eq!(b.len(), n);
        // Forward pass: apply the pivots and the unit-lower factor.
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let i_end = (j + kl).min(n - 1);
                for i in (j + 1)..=i_end {
                    b[i] -= self.mat.data[self.mat.slot(i, j)] * bj;
                }
            }
        }
        // Back substitution with the banded upper factor.
        for j in (0..n).rev() {
            b[j] /= self.mat.data[self.mat.slot(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let i_start = j.saturating_sub(width);
                for i in i_start..j {
                    b[i] -= self.mat.data[self.mat.slot(i, j)] * bj;
                }
            }
        }
    }
}

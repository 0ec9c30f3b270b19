//! Symmetric band matrices with a lower-band store, plus the Cholesky and
//! LDL^T kernels the eigen solver is built on.

use nalgebra::DMatrix;

/// Symmetric `n x n` matrix with half-bandwidth `kd`; only the lower band is
/// stored, row-major, `data[i * (kd + 1) + (i - j)] = A[i][j]` for
/// `0 <= i - j <= kd`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSym {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl BandSym {
    pub fn zeros(n: usize, kd: usize) -> Self {
        BandSym {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.kd);
        i * (self.kd + 1) + (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.kd {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.kd, "entry ({i}, {j}) outside band {}", self.kd);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &BandSym, beta: f64) -> BandSym {
        assert_eq!(self.n, other.n);
        assert_eq!(self.kd, other.kd);
        BandSym {
            n: self.n,
            kd: self.kd,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> BandSym {
        BandSym {
            n: self.n,
            kd: self.kd,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let diag = self.data[self.idx(i, i)];
            y[i] += diag * x[i];
            for j in i.saturating_sub(self.kd)..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Maximum absolute row sum (the infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kd);
                let hi = (i + self.kd).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Band Cholesky `A = L L^T`; `None` as soon as a pivot is not strictly
    /// positive, i.e. the matrix is not (numerically) positive definite.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let (n, kd) = (self.n, self.kd);
        let mut l = self.data.clone();
        let at = |i: usize, j: usize| i * (kd + 1) + (i - j);
        for j in 0..n {
            let mut s = l[at(j, j)];
            for k in j.saturating_sub(kd)..j {
                let v = l[at(j, k)];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            let d = s.sqrt();
            l[at(j, j)] = d;
            for i in j + 1..=(j + kd).min(n - 1) {
                let mut s = l[at(i, j)];
                for k in i.saturating_sub(kd)..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                l[at(i, j)] = s / d;
            }
        }
        Some(BandCholesky { n, kd, l })
    }

    /// Number of negative eigenvalues (Sylvester inertia) from an unpivoted
    /// LDL^T factorization. Zero pivots are nudged to a tiny positive value.
    pub fn negative_inertia(&self) -> usize {
        let (n, kd) = (self.n, self.kd);
        let at = |i: usize, j: usize| i * (kd + 1) + (i - j);
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let tiny = f64::EPSILON * self.norm_inf().max(f64::MIN_POSITIVE);
        let mut negatives = 0;
        for j in 0..n {
            let mut s = l[at(j, j)];
            for k in j.saturating_sub(kd)..j {
                let v = l[at(j, k)];
                s -= v * v * d[k];
            }
            if s.abs() < tiny {
                s = tiny;
            }
            if s < 0.0 {
                negatives += 1;
            }
            d[j] = s;
            for i in j + 1..=(j + kd).min(n - 1) {
                let mut t = l[at(i, j)];
                for k in i.saturating_sub(kd)..j {
                    t -= l[at(i, k)] * l[at(j, k)] * d[k];
                }
                l[at(i, j)] = t / s;
            }
        }
        negatives
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves `L L^T x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kd) = (self.n, self.kd);
        let at = |i: usize, j: usize| i * (kd + 1) + (i - j);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(kd)..i {
                s -= self.l[at(i, k)] * y[k];
            }
            y[i] = s / self.l[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..=(i + kd).min(n - 1) {
                s -= self.l[at(k, i)] * y[k];
            }
            y[i] = s / self.l[at(i, i)];
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

//! Banded LU without pivoting, for the diagonally dominant implicit-step
//! operator of the slip-flow stepper.

/// Square band matrix with `lower` sub- and `upper` super-diagonals, stored
/// row-wise as `data[i * width + (j + lower - i)]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.lower - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let j0 = i.saturating_sub(self.lower);
                let j1 = (i + self.upper).min(self.n - 1);
                (j0..=j1).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization (Doolittle, no pivoting). Returns `None` when a
    /// pivot is negligible relative to its row.
    pub fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            let row_scale = (k..=(k + self.upper).min(n - 1))
                .map(|j| self.get(k, j).abs())
                .fold(0.0, f64::max);
            if !(pivot.abs() > 1e-14 * row_scale) {
                return None;
            }
            let i_end = (k + self.lower).min(n - 1);
            let j_end = (k + self.upper).min(n - 1);
            for i in (k + 1)..=i_end {
                let l = self.get(i, k) / pivot;
                let ik = self.idx(i, k);
                self.data[ik] = l;
                for j in (k + 1)..=j_end {
                    let ukj = self.get(k, j);
                    if ukj != 0.0 {
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * ukj;
                    }
                }
            }
        }
        Some(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.m;
        let n = a.n;
        for i in 0..n {
            let j0 = i.saturating_sub(a.lower);
            let mut s = b[i];
            for j in j0..i {
                s -= a.data[a.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let j1 = (i + a.upper).min(n - 1);
            let mut s = b[i];
            for j in (i + 1)..=j1 {
                s -= a.data[a.idx(i, j)] * b[j];
            }
            b[i] = s / a.data[a.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn sample(n: usize) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, 2, 2);
        for i in 0..n {
            m.add(i, i, 10.0 + i as f64);
            if i >= 1 {
                m.add(i, i - 1, -1.5);
            }
            if i >= 2 {
                m.add(i, i - 2, 0.25 * (i as f64).sin());
            }
            if i + 1 < n {
                m.add(i, i + 1, 2.0);
            }
            if i + 2 < n {
                m.add(i, i + 2, -0.5);
            }
        }
        m
    }

    #[test]
    fn solve_matches_dense() {
        let n = 17;
        let m = sample(n);
        let dense = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = m.clone().factor().unwrap().solve(&b);
        let xd = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
        let r = m.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(2, 2, 1.0);
        assert!(m.factor().is_none());
    }
}

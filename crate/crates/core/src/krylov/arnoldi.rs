use super::{axpy, dot, norm, KrylovConfig, KrylovError, LinearOperator, C64};
use nalgebra::{DMatrix, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Ritz values of the discrete operator, descending modulus. A conjugate
    /// pair split by the requested count is kept whole.
    pub kappas: Vec<C64>,
    /// Continuous-time eigenvalues, filled by [`EigenReport::with_horizon`].
    pub lambdas: Vec<C64>,
    pub residuals: Vec<f64>,
    /// Unit Ritz vectors matching `kappas`.
    pub vectors: Vec<Vec<C64>>,
    pub converged: bool,
    pub restarts: usize,
}

impl EigenReport {
    pub fn with_horizon(mut self, t_h: f64) -> Result<Self, KrylovError> {
        self.lambdas = to_continuous(&self.kappas, t_h)?;
        Ok(self)
    }

    /// Largest real part among `lambdas`.
    pub fn max_real_lambda(&self) -> f64 {
        self.lambdas.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether pair `i` is known to lie strictly inside the unit circle even
    /// though it may not have converged: `|kappa| + residual < 1`.
    pub fn decidedly_inside(&self, i: usize) -> bool {
        self.kappas[i].norm() + self.residuals[i] < 1.0
    }
}

/// `lambda = log(kappa) / t_h` on the principal branch.
pub fn to_continuous(kappas: &[C64], t_h: f64) -> Result<Vec<C64>, KrylovError> {
    kappas
        .iter()
        .map(|k| {
            if k.norm() == 0.0 {
                Err(KrylovError::ZeroEigenvalue)
            } else {
                Ok(C64::new(k.norm().ln() / t_h, k.arg() / t_h))
            }
        })
        .collect()
}

/// Implicitly restarted Arnoldi (exact shifts) for the `k` eigenvalues of
/// largest modulus. The factorization length is `min(cfg.max_dim, dim)`.
pub fn arnoldi_eigs(a: &dyn LinearOperator, k: usize, cfg: &KrylovConfig) -> Result<EigenReport, KrylovError> {
    cfg.validate()?;
    let n = a.dim();
    let m = cfg.max_dim.min(n);
    if k < 1 || k > m {
        return Err(KrylovError::InvalidConfig(format!("k = {k} with Krylov dimension {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fact = Factorization::start(n, m, &mut rng);
    fact.extend(a, 0, &mut rng)?;

    let mut restarts = 0;
    loop {
        let ritz = ritz_pairs(&fact)?;
        let k_eff = keep_pairs_whole(&ritz.values, k);
        let report = EigenReport {
            kappas: ritz.values[..k_eff].to_vec(),
            lambdas: Vec::new(),
            residuals: ritz.residuals[..k_eff].to_vec(),
            vectors: ritz.coords[..k_eff].iter().map(|y| fact.lift(y)).collect(),
            converged: false,
            restarts,
        };
        let done = report
            .kappas
            .iter()
            .zip(&report.residuals)
            .all(|(t, r)| *r <= cfg.tol * t.norm().max(1.0));
        if done || m == n {
            return Ok(EigenReport {
                converged: true,
                ..report
            });
        }
        if restarts >= cfg.max_restarts || k_eff >= m - 1 {
            return Err(KrylovError::EigenNotConverged {
                tol: cfg.tol,
                restarts,
                report: Box::new(report),
            });
        }
        let keep = fact.apply_shifts(&ritz.values, k_eff);
        fact.extend(a, keep, &mut rng)?;
        restarts += 1;
    }
}

/// Smallest count >= k that does not split a conjugate pair.
fn keep_pairs_whole(values: &[C64], k: usize) -> usize {
    if k < values.len() && is_pair(values[k - 1], values[k]) {
        k + 1
    } else {
        k
    }
}

fn is_pair(a: C64, b: C64) -> bool {
    let scale = a.norm().max(b.norm()).max(1e-300);
    a.im.abs() > 1e-10 * scale && (a - b.conj()).norm() <= 1e-8 * scale
}

struct Ritz {
    values: Vec<C64>,
    residuals: Vec<f64>,
    /// Ritz vectors in the Krylov basis.
    coords: Vec<Vec<C64>>,
}

/// `A V = V H + f e_m^T`
struct Factorization {
    v: Vec<Vec<f64>>,
    h: DMatrix<f64>,
    f: Vec<f64>,
    m: usize,
}

impl Factorization {
    fn start(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = norm(&v0);
        v0.iter_mut().for_each(|x| *x /= s);
        Self {
            v: vec![v0],
            h: DMatrix::zeros(m, m),
            f: Vec::new(),
            m,
        }
    }

    /// Grows a length-`from` factorization to length `m`.
    fn extend(&mut self, a: &dyn LinearOperator, from: usize, rng: &mut ChaCha8Rng) -> Result<(), KrylovError> {
        let n = self.v[0].len();
        for j in from..self.m {
            if j > 0 {
                let beta = norm(&self.f);
                let scale = self.h.abs().max().max(1e-300);
                if beta > 1e-12 * scale {
                    self.v.truncate(j);
                    self.v.push(self.f.iter().map(|x| x / beta).collect());
                    self.h[(j, j - 1)] = beta;
                } else {
                    // invariant subspace found; continue with a fresh direction
                    self.v.truncate(j);
                    let fresh = self.random_orthogonal(n, rng);
                    self.v.push(fresh);
                    self.h[(j, j - 1)] = 0.0;
                }
            }
            let mut w = a.apply(&self.v[j])?;
            for _pass in 0..2 {
                for i in 0..=j {
                    let c = dot(&w, &self.v[i]);
                    self.h[(i, j)] += c;
                    axpy(-c, &self.v[i], &mut w);
                }
            }
            self.f = w;
        }
        Ok(())
    }

    /// `V y`, normalized.
    fn lift(&self, y: &[C64]) -> Vec<C64> {
        let n = self.v[0].len();
        let mut z = vec![C64::new(0.0, 0.0); n];
        for (v, c) in self.v.iter().zip(y) {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += c * vi;
            }
        }
        let s = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        z.iter_mut().for_each(|w| *w /= s);
        z
    }

    fn random_orthogonal(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for _pass in 0..2 {
                for v in &self.v {
                    let c = dot(&w, v);
                    axpy(-c, v, &mut w);
                }
            }
            let s = norm(&w);
            if s > 1e-8 {
                w.iter_mut().for_each(|x| *x /= s);
                return w;
            }
        }
    }

    /// Filters the unwanted Ritz values `values[k_eff..]` out of the start
    /// vector. Returns the length of the truncated factorization.
    fn apply_shifts(&mut self, values: &[C64], k_eff: usize) -> usize {
        let m = self.m;
        let budget = (m - k_eff) / 2 + (m - k_eff) % 2;
        // shifts come from the tail; the wanted block grows to avoid splitting pairs
        let mut shifts: Vec<Shift> = Vec::new();
        let mut used = 0;
        let mut tail: Vec<C64> = values[k_eff..].iter().rev().copied().collect();
        while used < budget {
            let Some(mu) = tail.first().copied() else { break };
            tail.remove(0);
            if mu.im.abs() > 1e-10 * mu.norm() {
                if used + 2 > budget {
                    break;
                }
                if let Some(pos) = tail.iter().position(|&b| is_pair(mu, b)) {
                    tail.remove(pos);
                }
                shifts.push(Shift::Pair(mu));
                used += 2;
            } else {
                shifts.push(Shift::Real(mu.re));
                used += 1;
            }
        }
        if used == 0 {
            return m;
        }
        let keep = m - used;

        let mut q_acc = DMatrix::<f64>::identity(m, m);
        for s in &shifts {
            let shifted = match *s {
                Shift::Real(mu) => &self.h - DMatrix::identity(m, m) * mu,
                Shift::Pair(mu) => {
                    &self.h * &self.h - &self.h * (2.0 * mu.re) + DMatrix::identity(m, m) * mu.norm_sqr()
                }
            };
            let q = shifted.qr().q();
            self.h = q.transpose() * &self.h * &q;
            for j in 0..m {
                for i in (j + 2)..m {
                    self.h[(i, j)] = 0.0;
                }
            }
            q_acc = q_acc * q;
        }

        let n = self.f.len();
        let mut new_v = vec![vec![0.0; n]; keep + 1];
        for (c, nv) in new_v.iter_mut().enumerate() {
            for (r, v) in self.v.iter().enumerate() {
                let coef = q_acc[(r, c)];
                if coef != 0.0 {
                    axpy(coef, v, nv);
                }
            }
        }
        let mut f = vec![0.0; n];
        axpy(self.h[(keep, keep - 1)], &new_v[keep], &mut f);
        axpy(q_acc[(m - 1, keep - 1)], &self.f, &mut f);
        new_v.truncate(keep);
        self.v = new_v;
        self.f = f;
        for j in 0..m {
            for i in 0..m {
                if i >= keep || j >= keep {
                    self.h[(i, j)] = 0.0;
                }
            }
        }
        keep
    }
}

enum Shift {
    Real(f64),
    Pair(C64),
}

/// Ritz values sorted by descending modulus, with residual norms
/// `|f| |e_m^T y|` from eigenvectors of the complex Schur form of `H`.
fn ritz_pairs(fact: &Factorization) -> Result<Ritz, KrylovError> {
    let m = fact.m;
    let hc: DMatrix<C64> = fact.h.map(|x| C64::new(x, 0.0));
    let schur = Schur::try_new(hc, f64::EPSILON, 100 * m.max(10)).ok_or(KrylovError::DenseEigenFailure)?;
    let (q, t) = schur.unpack();
    let t_norm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let f_norm = norm(&fact.f);

    let mut pairs: Vec<(C64, f64, Vec<C64>)> = (0..m)
        .map(|i| {
            let theta = t[(i, i)];
            let mut x = vec![C64::new(0.0, 0.0); m];
            x[i] = C64::new(1.0, 0.0);
            for j in (0..i).rev() {
                let mut s = C64::new(0.0, 0.0);
                for l in j + 1..=i {
                    s += t[(j, l)] * x[l];
                }
                let mut d = t[(j, j)] - theta;
                if d.norm() < 1e-14 * t_norm {
                    d = C64::new(1e-14 * t_norm, 0.0);
                }
                x[j] = -s / d;
            }
            let mut y: Vec<C64> = (0..m).map(|r| (0..=i).map(|l| q[(r, l)] * x[l]).sum()).collect();
            let y_norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            y.iter_mut().for_each(|z| *z /= y_norm);
            (theta, f_norm * y[m - 1].norm(), y)
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.0.norm()
            .partial_cmp(&a.0.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.0.im.partial_cmp(&a.0.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    for i in 1..pairs.len() {
        if is_pair(pairs[i - 1].0, pairs[i].0) && pairs[i - 1].0.im < pairs[i].0.im {
            pairs.swap(i - 1, i);
        }
    }
    Ok(Ritz {
        values: pairs.iter().map(|p| p.0).collect(),
        residuals: pairs.iter().map(|p| p.1).collect(),
        coords: pairs.into_iter().map(|p| p.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::DenseOperator;
    use nalgebra::DVector;

    fn cfg(max_dim: usize) -> KrylovConfig {
        KrylovConfig {
            tol: 1e-10,
            max_dim,
            ..Default::default()
        }
    }

    #[test]
    fn diagonal_dominant_value() {
        let a = DenseOperator(DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5, 0.1])));
        let r = arnoldi_eigs(&a, 1, &cfg(30)).unwrap();
        assert!((r.kappas[0] - C64::new(0.9, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn scaled_rotation_gives_conjugate_pair() {
        let (rad, th) = (0.8f64, 0.3f64);
        let a = DenseOperator(DMatrix::from_row_slice(
            2,
            2,
            &[rad * th.cos(), -rad * th.sin(), rad * th.sin(), rad * th.cos()],
        ));
        let r = arnoldi_eigs(&a, 1, &cfg(30)).unwrap();
        assert_eq!(r.kappas.len(), 2);
        let expect = C64::from_polar(rad, th);
        assert!((r.kappas[0] - expect).norm() < 1e-10);
        assert!((r.kappas[1] - expect.conj()).norm() < 1e-10);
        // A z = kappa z
        let z = &r.vectors[0];
        let az0 = C64::new(a.0[(0, 0)], 0.0) * z[0] + C64::new(a.0[(0, 1)], 0.0) * z[1];
        assert!((az0 - r.kappas[0] * z[0]).norm() < 1e-10);
    }

    #[test]
    fn identity_gives_one() {
        let a = DenseOperator(DMatrix::identity(8, 8));
        let r = arnoldi_eigs(&a, 1, &cfg(30)).unwrap();
        assert!((r.kappas[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn restarts_find_dominant_values_of_large_operator() {
        // 300 eigenvalues in (0, 0.9) plus a separated pair and a real one
        let n = 300;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n - 3 {
            m[(i, i)] = 0.9 * (i as f64 + 1.0) / n as f64;
        }
        let (rad, th) = (0.98f64, 0.1f64);
        m[(n - 3, n - 3)] = rad * th.cos();
        m[(n - 3, n - 2)] = -rad * th.sin();
        m[(n - 2, n - 3)] = rad * th.sin();
        m[(n - 2, n - 2)] = rad * th.cos();
        m[(n - 1, n - 1)] = -0.95;
        // similarity transform so the operator is not normal-aligned with the basis
        let mut p = DMatrix::<f64>::identity(n, n);
        for i in 0..n - 1 {
            p[(i, i + 1)] = 0.3;
        }
        let pinv = p.clone().try_inverse().unwrap();
        let a = DenseOperator(&p * m * pinv);
        let r = arnoldi_eigs(&a, 3, &cfg(20)).unwrap();
        assert!(r.converged);
        assert!(r.restarts > 0);
        assert!((r.kappas[0] - C64::from_polar(rad, th)).norm() < 1e-9, "{:?}", r.kappas);
        assert!((r.kappas[1] - C64::from_polar(rad, -th)).norm() < 1e-9);
        assert!((r.kappas[2] - C64::new(-0.95, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn continuous_mapping() {
        let l = to_continuous(&[C64::new(1.0, 0.0)], 0.5).unwrap();
        assert_eq!(l[0], C64::new(0.0, 0.0));
        let l = to_continuous(&[C64::new((-0.002f64).exp(), 0.0)], 1e-3).unwrap();
        assert!((l[0] - C64::new(-2.0, 0.0)).norm() < 1e-10);
        let k = (C64::new(0.5, 3.0) * 1e-3).exp();
        let l = to_continuous(&[k], 1e-3).unwrap();
        assert!((l[0] - C64::new(0.5, 3.0)).norm() < 1e-9);
        assert_eq!(
            to_continuous(&[C64::new(0.0, 0.0)], 1.0),
            Err(KrylovError::ZeroEigenvalue)
        );
    }

    #[test]
    fn k_larger_than_dimension_rejected() {
        let a = DenseOperator(DMatrix::identity(3, 3));
        assert!(arnoldi_eigs(&a, 4, &cfg(30)).is_err());
    }
}

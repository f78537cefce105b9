use super::{norm, KrylovError, LinearOperator};

/// Forward-difference action of the Jacobian of `map` at `u`:
/// `(map(u + eps q) - map(u)) / eps` with `eps = eps0 (1 + |u|) / |q|`.
///
/// For many directions use [`FdJacobian`], which evaluates `map(u)` once.
pub fn fd_directional<M>(map: M, u: &[f64], q: &[f64], eps0: f64) -> Result<Vec<f64>, KrylovError>
where
    M: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    FdJacobian::new(map, u.to_vec(), eps0)?.apply(q)
}

pub struct FdJacobian<M> {
    map: M,
    u: Vec<f64>,
    base: Vec<f64>,
    scale: f64,
}

impl<M> FdJacobian<M>
where
    M: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    pub fn new(map: M, u: Vec<f64>, eps0: f64) -> Result<Self, KrylovError> {
        let base = map(&u)?;
        Ok(Self::with_base(map, u, base, eps0))
    }

    /// Reuses an already computed `map(u)`.
    pub fn with_base(map: M, u: Vec<f64>, base: Vec<f64>, eps0: f64) -> Self {
        let scale = eps0 * (1.0 + norm(&u));
        Self { map, u, base, scale }
    }

    /// `map(u)`.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn point(&self) -> &[f64] {
        &self.u
    }
}

impl<M> LinearOperator for FdJacobian<M>
where
    M: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn apply(&self, q: &[f64]) -> Result<Vec<f64>, KrylovError> {
        if q.len() != self.u.len() {
            return Err(KrylovError::DimensionMismatch {
                expected: self.u.len(),
                got: q.len(),
            });
        }
        let qn = norm(q);
        if qn == 0.0 {
            return Ok(vec![0.0; q.len()]);
        }
        let eps = self.scale / qn;
        let shifted: Vec<f64> = self.u.iter().zip(q).map(|(u, d)| u + eps * d).collect();
        let out = (self.map)(&shifted)?;
        Ok(out.iter().zip(&self.base).map(|(a, b)| (a - b) / eps).collect())
    }
}

use super::{axpy, dot, norm, KrylovConfig, KrylovError, LinearOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Relative residual estimates `|b - A x_j| / |b|`, starting with `x0`.
    pub history: Vec<f64>,
    /// Final estimate is below `tol`.
    pub converged: bool,
    pub iterations: usize,
    /// `|b - A x| / |b|` recomputed with one more operator application. Differs
    /// from the last estimate when the operator is only approximately linear.
    pub true_residual: f64,
}

/// Unrestarted GMRES with modified Gram-Schmidt plus one reorthogonalization
/// pass, up to `cfg.max_dim` iterations.
pub fn gmres(a: &dyn LinearOperator, b: &[f64], x0: &[f64], cfg: &KrylovConfig) -> Result<GmresOutcome, KrylovError> {
    cfg.validate()?;
    let n = a.dim();
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(KrylovError::DimensionMismatch { expected: n, got: len });
        }
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            history: vec![0.0],
            converged: true,
            iterations: 0,
            true_residual: 0.0,
        });
    }
    let mut r0 = b.to_vec();
    if x0.iter().any(|&v| v != 0.0) {
        let ax = a.apply(x0)?;
        r0.iter_mut().zip(&ax).for_each(|(r, v)| *r -= v);
    }
    let beta = norm(&r0);
    let mut history = vec![beta / bnorm];
    if beta / bnorm <= cfg.tol {
        return Ok(GmresOutcome {
            x: x0.to_vec(),
            history,
            converged: true,
            iterations: 0,
            true_residual: beta / bnorm,
        });
    }

    let m = cfg.max_dim.min(n);
    let mut basis: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    // columns of the rotated Hessenberg, i.e. R
    let mut r: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs: Vec<f64> = Vec::with_capacity(m);
    let mut sn: Vec<f64> = Vec::with_capacity(m);
    let mut g = vec![beta];
    let mut h_norm: f64 = 0.0;
    let mut converged = false;

    for j in 0..m {
        let mut w = a.apply(&basis[j])?;
        let mut col = vec![0.0; j + 2];
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] += c;
                axpy(-c, v, &mut w);
            }
        }
        let h_next = norm(&w);
        col[j + 1] = h_next;
        h_norm = col.iter().fold(h_norm, |s, v| s.max(v.abs()));

        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let rho = col[j].hypot(col[j + 1]);
        let (c, s) = if rho == 0.0 {
            (1.0, 0.0)
        } else {
            (col[j] / rho, col[j + 1] / rho)
        };
        cs.push(c);
        sn.push(s);
        col[j] = rho;
        col.truncate(j + 1);
        g.push(-s * g[j]);
        g[j] *= c;
        r.push(col);

        let est = g[j + 1].abs() / bnorm;
        history.push(est);
        if rho <= 1e-13 * h_norm {
            return Err(KrylovError::Breakdown {
                iteration: j + 1,
                residual: est,
            });
        }
        if est <= cfg.tol {
            converged = true;
            break;
        }
        if h_next <= 1e-14 * h_norm {
            // invariant subspace: the least-squares solution is exact
            converged = true;
            break;
        }
        basis.push(w.iter().map(|v| v / h_next).collect());
    }

    let k = r.len();
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        let mut s = y[i];
        for l in i + 1..k {
            s -= r[l][i] * y[l];
        }
        y[i] = s / r[i][i];
    }
    let mut x = x0.to_vec();
    for (yi, v) in y.iter().zip(&basis) {
        axpy(*yi, v, &mut x);
    }
    let ax = a.apply(&x)?;
    let true_residual = norm(&b.iter().zip(&ax).map(|(b, v)| b - v).collect::<Vec<_>>()) / bnorm;
    Ok(GmresOutcome {
        x,
        history,
        converged,
        iterations: k,
        true_residual,
    })
}

use super::objective::QuadraticObjective;
use crate::error::{Error, Result};
use crate::sparse::{norm_inf, CscMatrix, SparseLu};

/// `[[H/s, Aᵀ], [A, 0]]·[x; λ] = [−g/s; b]`. The objective is divided by
/// `scale` (its largest Hessian entry) so that both blocks are of order one;
/// this leaves `x` unchanged and multiplies `λ` by `1/scale`.
#[derive(Clone, Debug)]
pub struct KktSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub scale: f64,
}

/// Solution of a KKT system with its a-posteriori checks, all in the
/// scaled units of the system.
#[derive(Clone, Debug)]
pub struct KktSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `‖K·[x; λ] − rhs‖∞`.
    pub residual: f64,
    /// `‖H·x/s + g/s + Aᵀλ‖∞`.
    pub stationarity: f64,
    /// `‖A·x − b‖∞`.
    pub feasibility: f64,
}

pub fn assemble_kkt(objective: &QuadraticObjective, a: &CscMatrix, b: &[f64]) -> KktSystem {
    let n = objective.dim();
    let m = a.nrows();
    assert_eq!(
        a.ncols(),
        n,
        "constraint Jacobian has {} columns for {n} unknowns",
        a.ncols()
    );
    assert_eq!(b.len(), m);
    let peak = objective
        .hessian
        .iter()
        .fold(0.0, |acc: f64, (_, _, v)| acc.max(v.abs()));
    let scale = if peak > 0.0 { peak } else { 1.0 };

    let mut entries = Vec::with_capacity(objective.hessian.nnz() + 2 * a.nnz());
    entries.extend(objective.hessian.iter().map(|(r, c, v)| (r, c, v / scale)));
    for (r, c, v) in a.iter() {
        entries.push((n + r, c, v));
        entries.push((c, n + r, v));
    }
    let rhs = objective
        .gradient0
        .iter()
        .map(|g| -g / scale)
        .chain(b.iter().copied())
        .collect();
    KktSystem {
        matrix: CscMatrix::from_triplets(n + m, n + m, &entries),
        rhs,
        n,
        m,
        scale,
    }
}

fn residual(k: &CscMatrix, z: &[f64], rhs: &[f64]) -> Vec<f64> {
    k.mul_vec(z).iter().zip(rhs).map(|(a, b)| b - a).collect()
}

/// Rows and columns without entries, named by `labels` (unknowns first,
/// then constraints).
pub(crate) fn structural_diagnostic(k: &KktSystem, labels: &dyn Fn(usize) -> String) -> String {
    let mut empty: Vec<usize> = k.matrix.empty_columns();
    for r in k.matrix.empty_rows() {
        if !empty.contains(&r) {
            empty.push(r);
        }
    }
    if empty.is_empty() {
        return "no empty row or column; the constraint rows are dependent or some unknowns are unobservable"
            .to_string();
    }
    let names: Vec<String> = empty.iter().take(8).map(|&i| labels(i)).collect();
    let more = if empty.len() > 8 {
        format!(" and {} more", empty.len() - 8)
    } else {
        String::new()
    };
    format!("no coupling for {}{more}", names.join(", "))
}

/// One sparse LU factorization, then up to three steps of iterative
/// refinement. A singular or numerically useless factorization is an error.
pub fn solve_kkt(k: &KktSystem, labels: &dyn Fn(usize) -> String) -> Result<KktSolution> {
    let singular = |detail: String| Error::SingularKkt {
        diagnostic: format!("{detail}; {}", structural_diagnostic(k, labels)),
    };
    let lu = SparseLu::factor(&k.matrix).map_err(|e| match e {
        Error::SingularKkt { diagnostic } => singular(diagnostic),
        other => other,
    })?;
    let mut z = lu.solve(&k.rhs);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(singular("factorization produced non-finite values".into()));
    }
    let mut r = residual(&k.matrix, &z, &k.rhs);
    let mut r_norm = norm_inf(&r);
    for _ in 0..3 {
        if r_norm == 0.0 {
            break;
        }
        let dz = lu.solve(&r);
        let candidate: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
        let r_new = residual(&k.matrix, &candidate, &k.rhs);
        let new_norm = norm_inf(&r_new);
        if !(new_norm < r_norm) {
            break;
        }
        z = candidate;
        r = r_new;
        r_norm = new_norm;
    }
    let rhs_norm = norm_inf(&k.rhs).max(1.0);
    let z_norm = norm_inf(&z).max(1.0);
    if r_norm > 1e-6 * rhs_norm.max(z_norm) {
        return Err(singular(format!("residual {r_norm:e} after refinement")));
    }
    let stationarity = norm_inf(&r[..k.n]);
    let feasibility = norm_inf(&r[k.n..]);
    let lambda = z.split_off(k.n);
    Ok(KktSolution {
        x: z,
        lambda,
        residual: r_norm,
        stationarity,
        feasibility,
    })
}

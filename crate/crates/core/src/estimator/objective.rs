use super::circuit::Residual;
use crate::sparse::{CscMatrix, TripletMatrix};

/// `f(x) = ½·xᵀHx + gᵀx + c`, built from weighted squared residuals.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    pub hessian: CscMatrix,
    pub gradient0: Vec<f64>,
    pub constant: f64,
    residuals: Vec<Residual>,
}

impl QuadraticObjective {
    /// Objective value evaluated from the residuals (no cancellation from
    /// the expanded form).
    pub fn value(&self, x: &[f64]) -> f64 {
        self.residuals.iter().map(|r| r.weight * r.eval(x).powi(2)).sum()
    }

    /// `∇f(x) = Hx + g`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = self.hessian.mul_vec(x);
        for (d, g) in grad.iter_mut().zip(&self.gradient0) {
            *d += g;
        }
        grad
    }

    pub fn residuals(&self) -> &[Residual] {
        &self.residuals
    }

    pub fn dim(&self) -> usize {
        self.gradient0.len()
    }
}

/// Expands `Σ w·(aᵀx − d)²` into its constant Hessian and linear term.
pub fn build_objective(dim: usize, residuals: &[Residual]) -> QuadraticObjective {
    let mut h = TripletMatrix::new(dim, dim);
    let mut g = vec![0.0; dim];
    let mut constant = 0.0;
    for r in residuals {
        for &(i, ai) in &r.terms {
            for &(j, aj) in &r.terms {
                h.push(i, j, 2.0 * r.weight * ai * aj);
            }
            g[i] -= 2.0 * r.weight * r.target * ai;
        }
        constant += r.weight * r.target * r.target;
    }
    QuadraticObjective {
        hessian: h.to_csc(),
        gradient0: g,
        constant,
        residuals: residuals.to_vec(),
    }
}

//! Dense real polynomials with exact derivatives and Taylor shifts.

use crate::dd::Dd;
use serde::{Deserialize, Serialize};

/// `p(x) = Σ c[k] x^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_dd(&self, x: Dd) -> Dd {
        self.coeffs
            .iter()
            .rev()
            .fold(Dd::ZERO, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Coefficients `t_k` of `p(center + y) = Σ t_k y^k`, in double-double.
    pub fn taylor_shift_dd(&self, center: Dd) -> Vec<Dd> {
        let mut t: Vec<Dd> = self.coeffs.iter().map(|&c| Dd::new(c)).collect();
        let n = t.len();
        // Repeated synthetic division (Horner's shift).
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let carry = t[j + 1] * center;
                t[j] += carry;
            }
        }
        t
    }

    /// Cauchy bound: every real root satisfies |x| < bound.
    pub fn root_bound(&self) -> f64 {
        let lead = self.leading().abs();
        let m = self.coeffs[..self.degree()]
            .iter()
            .fold(0.0f64, |m, &c| m.max(c.abs()));
        1.0 + m / lead
    }
}

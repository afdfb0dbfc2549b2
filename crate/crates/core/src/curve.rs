//! Analytic one-parameter model families.
//!
//! A [`ModelCurve`] is a matrix polynomial Delta(eps) = sum_k D_k eps^k with
//! a fixed symbol map; evaluating it at a point gives an ordinary model,
//! and expanding it at a point gives a jet-valued model whose word
//! probabilities carry exact derivatives in eps. The binary-symmetric-channel
//! family of a 2x2 chain is provided as a built-in constructor.

use crate::error::{Error, Result};
use crate::hmm::{solve_overdetermined, HiddenMarkovModel, StochasticMatrix, SymbolMap};
use crate::jet::Jet;
use serde::{Deserialize, Serialize};

/// Matrix polynomial in one scalar parameter, with its symbol map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCurve {
    /// Coefficient matrices D_0, D_1, ... of Delta(eps).
    coeffs: Vec<Vec<Vec<f64>>>,
    phi: SymbolMap,
}

/// Jet-valued model at a fixed expansion point.
#[derive(Debug, Clone)]
pub struct JetModel {
    pub delta: Vec<Vec<Jet>>,
    pub phi: SymbolMap,
    pub stationary: Vec<Jet>,
    pub order: usize,
}

impl ModelCurve {
    /// Rows of D_0 must sum to 1 and rows of each D_k (k >= 1) to 0, so the
    /// row sums are 1 identically in eps. Entry nonnegativity is checked at
    /// each evaluation point.
    pub fn new(coeffs: Vec<Vec<Vec<f64>>>, phi: SymbolMap) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidCurve {
                reason: "curve needs at least the constant matrix".into(),
            });
        }
        let b = phi.states();
        for (k, mat) in coeffs.iter().enumerate() {
            if mat.len() != b || mat.iter().any(|row| row.len() != b) {
                return Err(Error::InvalidCurve {
                    reason: format!("coefficient matrix {k} is not {b}x{b}"),
                });
            }
            let target = if k == 0 { 1.0 } else { 0.0 };
            for (i, row) in mat.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - target).abs() > 1e-10 {
                    return Err(Error::InvalidCurve {
                        reason: format!(
                            "row {i} of coefficient matrix {k} sums to {sum}, expected {target}"
                        ),
                    });
                }
            }
        }
        Ok(ModelCurve { coeffs, phi })
    }

    /// The 4x4 family of a binary chain Pi observed through a binary
    /// symmetric channel with crossover eps. States are (y, e) pairs in the
    /// order (0,0), (0,1), (1,0), (1,1); the emitted symbol is y xor e.
    pub fn bsc(pi: [[f64; 2]; 2]) -> Result<Self> {
        for (i, row) in pi.iter().enumerate() {
            if (row[0] + row[1] - 1.0).abs() > 1e-12 {
                return Err(Error::RowSum {
                    row: i,
                    sum: row[0] + row[1],
                    tol: 1e-12,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        let mut d0 = vec![vec![0.0; 4]; 4];
        let mut d1 = vec![vec![0.0; 4]; 4];
        for y in 0..2 {
            for state in [2 * y, 2 * y + 1] {
                for y2 in 0..2 {
                    // columns: (y2, e2=0) and (y2, e2=1); p_E(0) = 1 - eps
                    d0[state][2 * y2] = pi[y][y2];
                    d1[state][2 * y2] = -pi[y][y2];
                    d1[state][2 * y2 + 1] = pi[y][y2];
                }
            }
        }
        ModelCurve::new(vec![d0, d1], SymbolMap::new(vec![0, 1, 1, 0])?)
    }

    pub fn phi(&self) -> &SymbolMap {
        &self.phi
    }

    pub fn states(&self) -> usize {
        self.phi.states()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Entry (i, j) of Delta(eps).
    pub fn entry_at(&self, eps: f64, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for mat in self.coeffs.iter().rev() {
            acc = acc * eps + mat[i][j];
        }
        acc
    }

    /// Ordinary model at the point eps; fails if any entry is negative there.
    pub fn model_at(&self, eps: f64) -> Result<HiddenMarkovModel> {
        let b = self.states();
        let mut rows = vec![vec![0.0; b]; b];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.entry_at(eps, i, j);
            }
        }
        HiddenMarkovModel::new(StochasticMatrix::new(rows)?, self.phi.clone())
    }

    /// Jet entry (i, j) expanded at eps to the requested order, by Taylor
    /// shift of the polynomial coefficients.
    fn entry_jet(&self, eps: f64, order: usize, i: usize, j: usize) -> Jet {
        let mut out = vec![0.0; order + 1];
        for (k, mat) in self.coeffs.iter().enumerate() {
            let v = mat[i][j];
            if v == 0.0 {
                continue;
            }
            // v * (eps0 + t)^k contributes v * C(k, m) eps0^(k-m) to t^m
            let mut binom = 1.0f64;
            for m in 0..=k.min(order) {
                out[m] += v * binom * eps.powi((k - m) as i32);
                binom = binom * (k - m) as f64 / (m + 1) as f64;
            }
        }
        Jet::from_coeffs(out).expect("nonempty coefficients")
    }

    /// Jet-valued model at eps: jet matrix entries plus the stationary
    /// vector expanded order by order.
    pub fn jet_model_at(&self, eps: f64, order: usize) -> Result<JetModel> {
        let model = self.model_at(eps)?; // validates nonnegativity at eps
        let b = self.states();
        let mut delta = Vec::with_capacity(b);
        for i in 0..b {
            let mut row = Vec::with_capacity(b);
            for j in 0..b {
                row.push(self.entry_jet(eps, order, i, j));
            }
            delta.push(row);
        }
        let stationary = stationary_jets(&model.delta, &delta, order)?;
        Ok(JetModel {
            delta,
            phi: self.phi.clone(),
            stationary,
            order,
        })
    }
}

/// Taylor coefficients of the stationary vector: with Delta(t) = sum D_m t^m
/// (jet coefficients at the expansion point), order k solves
///
///   c_k (I - D_0) = sum_{m=1}^{k} c_{k-m} D_m,   sum_i (c_k)_i = [k = 0].
///
/// The same appended linear system serves every order. Requires a unique
/// stationary distribution at the point (single recurrent class), which is
/// weaker than irreducibility — Black-Hole points are often reducible.
fn stationary_jets(d0: &StochasticMatrix, delta: &[Vec<Jet>], order: usize) -> Result<Vec<Jet>> {
    let b = d0.dim();
    // c[k][i]: k-th Taylor coefficient of stationary entry i
    let mut c: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut rhs = vec![0.0; b + 1];
        for i in 0..b {
            // transpose of c_k (I - D_0): row i is sum_j (I - D_0)(j -> i)
            // handled inside solve; here we build the right-hand side
            let mut s = 0.0;
            for m in 1..=k {
                for (j, cj) in c[k - m].iter().enumerate() {
                    s += cj * delta[j][i].coeffs()[m];
                }
            }
            rhs[i] = s;
        }
        rhs[b] = if k == 0 { 1.0 } else { 0.0 };
        let mut a = vec![vec![0.0; b]; b + 1];
        for i in 0..b {
            for j in 0..b {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - d0.get(j, i);
            }
            a[b][i] = 1.0;
        }
        let x = solve_overdetermined(&mut a, &mut rhs)?;
        c.push(x);
    }
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let coeffs: Vec<f64> = (0..=order).map(|k| c[k][i]).collect();
        out.push(Jet::from_coeffs(coeffs)?);
    }
    Ok(out)
}

//! Hidden-Markov-chain data model.
//!
//! A hidden Markov chain is Z = Phi(Y) for a finite Markov chain Y with
//! row-stochastic transition matrix Delta and a state-to-symbol map Phi.
//! For each symbol a, Delta_a keeps the columns j of Delta with Phi(j) = a
//! and zeroes the rest. The belief state w (a probability vector over
//! hidden states) evolves under an observed symbol a by
//!
//!   r_a(w) = w Delta_a 1      (probability of seeing a)
//!   f_a(w) = w Delta_a / r_a(w)
//!
//! A model is a "Black Hole" when every Delta_a has rank one with each
//! column either strictly positive or identically zero; then f_a collapses
//! the whole simplex to a single point.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic B x B matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochasticMatrix {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for StochasticMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        StochasticMatrix::new(rows)
    }
}

impl From<StochasticMatrix> for Vec<Vec<f64>> {
    fn from(m: StochasticMatrix) -> Self {
        m.rows
    }
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let b = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != b {
                return Err(Error::NotSquare {
                    rows: b,
                    row: i,
                    cols: row.len(),
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
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSum {
                    row: i,
                    sum,
                    tol: ROW_SUM_TOL,
                });
            }
        }
        Ok(StochasticMatrix { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Strong connectivity of the positive-entry graph.
    pub fn is_irreducible(&self) -> bool {
        let b = self.dim();
        let mut reach = vec![vec![false; b]; b];
        for i in 0..b {
            reach[i][i] = true;
            for j in 0..b {
                if self.rows[i][j] > 0.0 {
                    reach[i][j] = true;
                }
            }
        }
        for k in 0..b {
            for i in 0..b {
                if reach[i][k] {
                    for j in 0..b {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        (0..b).all(|i| (0..b).all(|j| reach[i][j]))
    }
}

/// State-to-symbol map Phi: {0..B-1} -> {0..A-1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SymbolMap {
    phi: Vec<usize>,
    alphabet: usize,
}

impl TryFrom<Vec<usize>> for SymbolMap {
    type Error = Error;
    fn try_from(phi: Vec<usize>) -> Result<Self> {
        SymbolMap::new(phi)
    }
}

impl From<SymbolMap> for Vec<usize> {
    fn from(m: SymbolMap) -> Self {
        m.phi
    }
}

impl SymbolMap {
    /// The alphabet size is taken as max value + 1; every symbol below it
    /// must be attained by at least one state.
    pub fn new(phi: Vec<usize>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::DimensionMismatch {
                phi_len: 0,
                states: 0,
            });
        }
        let alphabet = phi.iter().max().unwrap() + 1;
        for a in 0..alphabet {
            if !phi.contains(&a) {
                return Err(Error::UnusedSymbol { symbol: a });
            }
        }
        Ok(SymbolMap { phi, alphabet })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn states(&self) -> usize {
        self.phi.len()
    }

    pub fn symbol_of(&self, state: usize) -> usize {
        self.phi[state]
    }

    pub fn values(&self) -> &[usize] {
        &self.phi
    }
}

/// Probability vector over hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    w: Vec<f64>,
}

impl BeliefState {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        for (i, &v) in w.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NegativeBelief { index: i, value: v });
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::BeliefSum {
                sum,
                tol: ROW_SUM_TOL,
            });
        }
        Ok(BeliefState { w })
    }

    pub fn unit(i: usize, b: usize) -> Self {
        let mut w = vec![0.0; b];
        w[i] = 1.0;
        BeliefState { w }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.w
    }
}

/// A hidden Markov chain: transition matrix plus symbol map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenMarkovModel {
    pub delta: StochasticMatrix,
    pub phi: SymbolMap,
}

impl HiddenMarkovModel {
    pub fn new(delta: StochasticMatrix, phi: SymbolMap) -> Result<Self> {
        if phi.states() != delta.dim() {
            return Err(Error::DimensionMismatch {
                phi_len: phi.states(),
                states: delta.dim(),
            });
        }
        Ok(HiddenMarkovModel { delta, phi })
    }

    pub fn states(&self) -> usize {
        self.delta.dim()
    }

    pub fn alphabet(&self) -> usize {
        self.phi.alphabet()
    }

    /// Delta_a: Delta restricted to columns j with Phi(j) = a.
    pub fn symbol_matrix(&self, a: usize) -> Result<Vec<Vec<f64>>> {
        if a >= self.alphabet() {
            return Err(Error::SymbolOutOfRange {
                symbol: a,
                alphabet: self.alphabet(),
            });
        }
        let b = self.states();
        let mut out = vec![vec![0.0; b]; b];
        for j in 0..b {
            if self.phi.symbol_of(j) == a {
                for i in 0..b {
                    out[i][j] = self.delta.get(i, j);
                }
            }
        }
        Ok(out)
    }

    /// r_a(w) = w Delta_a 1.
    pub fn symbol_probability(&self, a: usize, w: &BeliefState) -> Result<f64> {
        if a >= self.alphabet() {
            return Err(Error::SymbolOutOfRange {
                symbol: a,
                alphabet: self.alphabet(),
            });
        }
        let b = self.states();
        let mut total = 0.0;
        for j in 0..b {
            if self.phi.symbol_of(j) == a {
                for i in 0..b {
                    total += w.probabilities()[i] * self.delta.get(i, j);
                }
            }
        }
        Ok(total)
    }

    /// f_a(w) = w Delta_a / r_a(w).
    pub fn belief_update(&self, a: usize, w: &BeliefState) -> Result<BeliefState> {
        let r = self.symbol_probability(a, w)?;
        if r <= 0.0 {
            return Err(Error::ZeroProbabilitySymbol { symbol: a });
        }
        let b = self.states();
        let mut out = vec![0.0; b];
        for j in 0..b {
            if self.phi.symbol_of(j) == a {
                let mut s = 0.0;
                for i in 0..b {
                    s += w.probabilities()[i] * self.delta.get(i, j);
                }
                out[j] = s / r;
            }
        }
        BeliefState::new(out)
    }
}

/// Classification of one column of a symbol matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Zero,
    Positive,
    Mixed,
}

/// Per-symbol diagnostics from the Black-Hole test.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolRankReport {
    pub symbol: usize,
    pub columns: Vec<ColumnKind>,
    /// Second singular value over first (0 when the matrix is zero).
    pub singular_ratio: f64,
    /// Largest relative deviation of a nonzero column from a multiple of the
    /// reference nonzero column.
    pub proportionality_residual: f64,
    pub rank_one: bool,
    pub columns_ok: bool,
}

/// Result of [`is_black_hole`].
#[derive(Debug, Clone, Serialize)]
pub struct BlackHoleReport {
    pub is_black_hole: bool,
    pub symbols: Vec<SymbolRankReport>,
}

/// Tests whether every Delta_a is rank one with each column strictly
/// positive or exactly zero. The structural zero pattern is required exactly;
/// `tol` is the relative tolerance for the rank-one checks.
pub fn is_black_hole(m: &HiddenMarkovModel, tol: f64) -> BlackHoleReport {
    let b = m.states();
    let mut symbols = Vec::new();
    let mut all_ok = true;
    for a in 0..m.alphabet() {
        let mat = m.symbol_matrix(a).expect("symbol in range");
        let mut columns = Vec::with_capacity(b);
        let mut nonzero_cols: Vec<usize> = Vec::new();
        let mut columns_ok = true;
        for j in 0..b {
            let col: Vec<f64> = (0..b).map(|i| mat[i][j]).collect();
            let kind = if col.iter().all(|&v| v == 0.0) {
                ColumnKind::Zero
            } else if col.iter().all(|&v| v > 0.0) {
                nonzero_cols.push(j);
                ColumnKind::Positive
            } else {
                nonzero_cols.push(j);
                columns_ok = false;
                ColumnKind::Mixed
            };
            columns.push(kind);
        }
        // structural proportionality of the nonzero columns
        let mut residual = 0.0f64;
        if nonzero_cols.len() > 1 {
            let norm = |j: usize| (0..b).map(|i| mat[i][j] * mat[i][j]).sum::<f64>().sqrt();
            let reference = *nonzero_cols
                .iter()
                .max_by(|&&x, &&y| norm(x).total_cmp(&norm(y)))
                .unwrap();
            let rn = norm(reference);
            for &j in &nonzero_cols {
                if j == reference {
                    continue;
                }
                let dot: f64 = (0..b).map(|i| mat[i][j] * mat[i][reference]).sum();
                let lambda = dot / (rn * rn);
                for i in 0..b {
                    let dev = (mat[i][j] - lambda * mat[i][reference]).abs();
                    residual = residual.max(dev / rn);
                }
            }
        }
        let singular_ratio = second_singular_ratio(&mat);
        let rank_one = !nonzero_cols.is_empty() && singular_ratio < tol && residual < tol;
        if !(rank_one && columns_ok) {
            all_ok = false;
        }
        symbols.push(SymbolRankReport {
            symbol: a,
            columns,
            singular_ratio,
            proportionality_residual: residual,
            rank_one,
            columns_ok,
        });
    }
    BlackHoleReport {
        is_black_hole: all_ok,
        symbols,
    }
}

fn second_singular_ratio(mat: &[Vec<f64>]) -> f64 {
    let b = mat.len();
    let m = DMatrix::from_fn(b, b, |i, j| mat[i][j]);
    let svd = m.svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv.is_empty() || sv[0] == 0.0 {
        0.0
    } else if sv.len() < 2 {
        0.0
    } else {
        sv[1] / sv[0]
    }
}

/// Stationary distribution of an irreducible stochastic matrix, via the
/// linear system (I - Delta^t) pi^t = 0 with the normalization row appended.
pub fn stationary_distribution(m: &StochasticMatrix) -> Result<BeliefState> {
    if !m.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let pi = stationary_unchecked(m)?;
    BeliefState::new(pi)
}

/// Stationary solve without the irreducibility precondition; fails when the
/// appended system has no unique solution (multiple recurrent classes).
pub(crate) fn stationary_unchecked(m: &StochasticMatrix) -> Result<Vec<f64>> {
    let b = m.dim();
    // rows of the (B+1) x B system: (I - Delta^t) then all-ones
    let mut a = vec![vec![0.0; b]; b + 1];
    for i in 0..b {
        for j in 0..b {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - m.get(j, i);
        }
        a[b][i] = 1.0;
    }
    let mut rhs = vec![0.0; b + 1];
    rhs[b] = 1.0;
    let x = solve_overdetermined(&mut a, &mut rhs)?;
    // clip tiny negative rounding, then renormalize
    let mut pi: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= s;
    }
    Ok(pi)
}

/// Gaussian elimination with row pivoting on a consistent (B+1) x B system.
/// The leftover row must reduce to ~0 or the system is declared singular.
pub(crate) fn solve_overdetermined(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Result<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    let mut used = vec![false; rows];
    let mut pivot_row = vec![usize::MAX; cols];
    for col in 0..cols {
        let mut best = usize::MAX;
        let mut best_val = 0.0;
        for r in 0..rows {
            if !used[r] && a[r][col].abs() > best_val {
                best = r;
                best_val = a[r][col].abs();
            }
        }
        if best == usize::MAX || best_val < 1e-13 {
            return Err(Error::NoUniqueStationary);
        }
        used[best] = true;
        pivot_row[col] = best;
        for r in 0..rows {
            if r != best && a[r][col] != 0.0 {
                let factor = a[r][col] / a[best][col];
                for c in 0..cols {
                    a[r][c] -= factor * a[best][c];
                }
                rhs[r] -= factor * rhs[best];
            }
        }
    }
    // consistency of the unused row
    for r in 0..rows {
        if !used[r] && rhs[r].abs() > 1e-8 {
            return Err(Error::NoUniqueStationary);
        }
    }
    let mut x = vec![0.0; cols];
    for col in 0..cols {
        let r = pivot_row[col];
        x[col] = rhs[r] / a[r][col];
    }
    Ok(x)
}

/// Reverse-chain model: diag(pi)^-1 Delta^t diag(pi) with the same Phi.
pub fn reverse_model(m: &HiddenMarkovModel) -> Result<HiddenMarkovModel> {
    let pi = stationary_distribution(&m.delta)?;
    let b = m.states();
    let p = pi.probabilities();
    let mut rows = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            rows[i][j] = p[j] * m.delta.get(j, i) / p[i];
        }
        // guard against rounding pushing the row sum past the tolerance
        let s: f64 = rows[i].iter().sum();
        for v in &mut rows[i] {
            *v /= s;
        }
    }
    HiddenMarkovModel::new(StochasticMatrix::new(rows)?, m.phi.clone())
}

//! Finite entropy approximations and stabilized derivatives.
//!
//! H_n(Z) = H(Z_0 | Z_-n..Z_-1) is computed as a block-entropy difference
//! S_{n+1} - S_n with S_k = -sum_{|w|=k} p(w) log p(w); the sequence H_n is
//! nonincreasing and converges to the entropy rate from above.
//!
//! The same enumeration runs over f64 weights or over jets; with jets the
//! result carries exact derivatives in the curve parameter. At a Black Hole
//! the N-th derivative of H_n is independent of n once n reaches
//! ceil((N+1)/2), which [`stabilized_derivative`] exploits.
//!
//! Summation is over words in lexicographic order with compensated (Kahan)
//! accumulation; the parallel split uses a fixed prefix depth and reduces
//! partial sums in prefix order, so results do not depend on the worker
//! count.

use crate::curve::{JetModel, ModelCurve};
use crate::error::{Error, Result};
use crate::hmm::{is_black_hole, stationary_unchecked, HiddenMarkovModel, SymbolMap};
use crate::jet::Jet;
use rayon::prelude::*;

/// Guard on the number of enumerated words (A^(n+1) <= 2^26).
pub const ENUMERATION_LIMIT: u64 = 1 << 26;

/// Scalar kind the word enumeration runs over: f64 or [`Jet`].
pub trait Weight: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    /// -p log p with the 0 log 0 = 0 convention; only an exactly-zero
    /// probability (zero jet tail included) qualifies for the convention.
    fn neg_xlogx(&self) -> Result<Self>;
    fn constant_term(&self) -> f64;
}

impl Weight for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_xlogx(&self) -> Result<Self> {
        if *self == 0.0 {
            Ok(0.0)
        } else if *self < 0.0 {
            Err(Error::NonpositiveConstantTerm { value: *self })
        } else {
            Ok(-self * self.ln())
        }
    }
    fn constant_term(&self) -> f64 {
        *self
    }
}

impl Weight for Jet {
    fn zero_like(&self) -> Self {
        Jet::constant(0.0, self.order())
    }
    fn add(&self, other: &Self) -> Self {
        Jet::add(self, other).expect("uniform jet order")
    }
    fn sub(&self, other: &Self) -> Self {
        Jet::sub(self, other).expect("uniform jet order")
    }
    fn mul(&self, other: &Self) -> Self {
        Jet::mul(self, other).expect("uniform jet order")
    }
    fn neg_xlogx(&self) -> Result<Self> {
        if self.is_zero() {
            return Ok(self.zero_like());
        }
        if self.value() == 0.0 {
            return Err(Error::ZeroProbabilityNonzeroTail);
        }
        Ok(self.xlogx()?.neg())
    }
    fn constant_term(&self) -> f64 {
        self.value()
    }
}

/// Kahan-compensated accumulator; for jets the compensation acts
/// coefficientwise, which is exact because jet addition is coefficientwise.
struct Kahan<T: Weight> {
    sum: T,
    c: T,
}

impl<T: Weight> Kahan<T> {
    fn new(zero: T) -> Self {
        Kahan {
            c: zero.clone(),
            sum: zero,
        }
    }
    fn add(&mut self, x: &T) {
        let y = x.sub(&self.c);
        let t = self.sum.add(&y);
        self.c = t.sub(&self.sum).sub(&y);
        self.sum = t;
    }
    fn merge(&mut self, other: &T) {
        self.add(other);
    }
    fn finish(self) -> T {
        self.sum
    }
}

/// Column-major view of the symbol matrices: for each symbol, the list of
/// (target state, column of Delta restricted to that symbol).
struct SymbolColumns<T> {
    by_symbol: Vec<Vec<(usize, Vec<T>)>>,
    states: usize,
}

impl<T: Weight> SymbolColumns<T> {
    fn from_parts(delta: &[Vec<T>], phi: &SymbolMap) -> Self {
        let b = phi.states();
        let mut by_symbol = vec![Vec::new(); phi.alphabet()];
        for j in 0..b {
            let col: Vec<T> = (0..b).map(|i| delta[i][j].clone()).collect();
            by_symbol[phi.symbol_of(j)].push((j, col));
        }
        SymbolColumns {
            by_symbol,
            states: b,
        }
    }

    /// v Delta_a, written into `out`.
    fn step(&self, v: &[T], a: usize, out: &mut [T]) {
        for slot in out.iter_mut() {
            *slot = v[0].zero_like();
        }
        for (j, col) in &self.by_symbol[a] {
            let mut acc = v[0].zero_like();
            for (vi, ci) in v.iter().zip(col) {
                acc = acc.add(&vi.mul(ci));
            }
            out[*j] = acc;
        }
    }

    fn total(&self, v: &[T]) -> T {
        let mut acc = v[0].zero_like();
        for vi in v {
            acc = acc.add(vi);
        }
        acc
    }
}

fn check_enumeration(alphabet: usize, length: usize) -> Result<()> {
    let mut total: u64 = 1;
    for _ in 0..length {
        total = total.saturating_mul(alphabet as u64);
        if total > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                requested: total,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    Ok(())
}

/// Negative block sums S_1..S_L (S_k = -sum_{|w|=k} p_w log p_w), all depths
/// in one pass over the word tree.
fn block_sums<T: Weight>(cols: &SymbolColumns<T>, initial: &[T], max_len: usize) -> Result<Vec<T>> {
    let a = cols.by_symbol.len();
    check_enumeration(a, max_len)?;
    let zero = initial[0].zero_like();
    if max_len == 0 {
        return Ok(Vec::new());
    }

    // fixed parallel split depth: smallest d with A^d >= 256, capped at L
    let mut split = 0usize;
    let mut width: u64 = 1;
    while width < 256 && split < max_len {
        split += 1;
        width = width.saturating_mul(a as u64);
    }

    let mut sums: Vec<Kahan<T>> = (0..max_len).map(|_| Kahan::new(zero.clone())).collect();

    // serial prefix pass: accumulate depths 1..=split, collect frontier
    let mut frontier: Vec<Vec<T>> = vec![initial.to_vec()];
    for depth in 1..=split {
        let mut next = Vec::with_capacity(frontier.len() * a);
        for v in &frontier {
            for sym in 0..a {
                let mut out = vec![zero.clone(); cols.states];
                cols.step(v, sym, &mut out);
                let p = cols.total(&out);
                sums[depth - 1].add(&p.neg_xlogx()?);
                next.push(out);
            }
        }
        frontier = next;
    }

    if split < max_len {
        // parallel subtree pass in fixed prefix order
        let partials: Vec<Result<Vec<T>>> = frontier
            .par_iter()
            .map(|start| {
                let mut local: Vec<Kahan<T>> = (split..max_len)
                    .map(|_| Kahan::new(zero.clone()))
                    .collect();
                let mut stack: Vec<(Vec<T>, usize, usize)> = vec![(start.clone(), split, 0)];
                // iterative DFS emitting symbols in lexicographic order
                let mut scratch = vec![zero.clone(); cols.states];
                while let Some((v, depth, sym)) = stack.pop() {
                    if sym + 1 < a {
                        stack.push((v.clone(), depth, sym + 1));
                    }
                    cols.step(&v, sym, &mut scratch);
                    let p = cols.total(&scratch);
                    local[depth - split].add(&p.neg_xlogx()?);
                    if depth + 1 < max_len {
                        stack.push((scratch.clone(), depth + 1, 0));
                    }
                }
                Ok(local.into_iter().map(|k| k.finish()).collect())
            })
            .collect();
        for partial in partials {
            let partial = partial?;
            for (k, p) in partial.into_iter().enumerate() {
                sums[split + k].merge(&p);
            }
        }
    }

    Ok(sums.into_iter().map(|k| k.finish()).collect())
}

fn initial_vector(m: &HiddenMarkovModel) -> Result<Vec<f64>> {
    stationary_unchecked(&m.delta)
}

fn scalar_columns(m: &HiddenMarkovModel) -> SymbolColumns<f64> {
    let b = m.states();
    let delta: Vec<Vec<f64>> = (0..b)
        .map(|i| (0..b).map(|j| m.delta.get(i, j)).collect())
        .collect();
    SymbolColumns::from_parts(&delta, &m.phi)
}

fn jet_columns(jm: &JetModel) -> SymbolColumns<Jet> {
    SymbolColumns::from_parts(&jm.delta, &jm.phi)
}

/// p(z_1..z_n) = pi Delta_{z1} ... Delta_{zn} 1 with the stationary initial
/// vector.
pub fn word_probability(m: &HiddenMarkovModel, word: &[usize]) -> Result<f64> {
    for &z in word {
        if z >= m.alphabet() {
            return Err(Error::SymbolOutOfRange {
                symbol: z,
                alphabet: m.alphabet(),
            });
        }
    }
    let cols = scalar_columns(m);
    let mut v = initial_vector(m)?;
    let mut out = vec![0.0; m.states()];
    for &z in word {
        cols.step(&v, z, &mut out);
        std::mem::swap(&mut v, &mut out);
    }
    Ok(v.iter().sum())
}

/// Jet-valued word probability along a model curve expansion.
pub fn word_probability_jet(jm: &JetModel, word: &[usize]) -> Result<Jet> {
    for &z in word {
        if z >= jm.phi.alphabet() {
            return Err(Error::SymbolOutOfRange {
                symbol: z,
                alphabet: jm.phi.alphabet(),
            });
        }
    }
    let cols = jet_columns(jm);
    let zero = Jet::constant(0.0, jm.order);
    let mut v = jm.stationary.clone();
    let mut out = vec![zero; jm.phi.states()];
    for &z in word {
        cols.step(&v, z, &mut out);
        std::mem::swap(&mut v, &mut out);
    }
    Ok(cols.total(&v))
}

/// Conditional entropy H_n = H(Z_0 | Z_-n..Z_-1) in nats; n = 0 gives the
/// marginal entropy H(Z_0).
pub fn h_n(m: &HiddenMarkovModel, n: usize) -> Result<f64> {
    let cols = scalar_columns(m);
    let init = initial_vector(m)?;
    let sums = block_sums(&cols, &init, n + 1)?;
    Ok(if n == 0 {
        sums[0]
    } else {
        sums[n] - sums[n - 1]
    })
}

/// Jet-valued H_n along a curve expansion.
pub fn h_n_jet(jm: &JetModel, n: usize) -> Result<Jet> {
    let cols = jet_columns(jm);
    let sums = block_sums(&cols, &jm.stationary, n + 1)?;
    Ok(if n == 0 {
        sums[0].clone()
    } else {
        sums[n].sub(&sums[n - 1]).expect("uniform order")
    })
}

/// The sequence H_1..H_n, computed in a single pass.
#[derive(Debug, Clone)]
pub struct EntropySequence {
    pub model: HiddenMarkovModel,
    pub values: Vec<f64>,
}

impl EntropySequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn entropy_sequence(m: &HiddenMarkovModel, n: usize) -> Result<EntropySequence> {
    let cols = scalar_columns(m);
    let init = initial_vector(m)?;
    let sums = block_sums(&cols, &init, n + 1)?;
    let values: Vec<f64> = (1..=n).map(|k| sums[k] - sums[k - 1]).collect();
    for w in values.windows(2) {
        if w[1] > w[0] + 1e-12 {
            return Err(Error::DomainError {
                value: w[1] - w[0],
                domain: "nonincreasing entropy sequence",
            });
        }
    }
    Ok(EntropySequence {
        model: m.clone(),
        values,
    })
}

/// Result of [`entropy_rate_estimate`]: H_{n_used} is an upper bound on the
/// entropy rate; `gap` is H_{n_used - 1} - H_{n_used}.
#[derive(Debug, Clone, Copy)]
pub struct RateEstimate {
    pub estimate: f64,
    pub n_used: usize,
    pub gap: f64,
}

/// Walks H_n down from n = 1 until the successive gap drops below `gap_tol`
/// or n reaches `n_max`.
pub fn entropy_rate_estimate(m: &HiddenMarkovModel, n_max: usize, gap_tol: f64) -> Result<RateEstimate> {
    let cols = scalar_columns(m);
    let init = initial_vector(m)?;
    let sums = block_sums(&cols, &init, n_max + 1)?;
    let h = |k: usize| if k == 0 { sums[0] } else { sums[k] - sums[k - 1] };
    for n in 1..=n_max {
        let gap = h(n - 1) - h(n);
        if gap.abs() <= gap_tol {
            return Ok(RateEstimate {
                estimate: h(n),
                n_used: n,
                gap,
            });
        }
    }
    Ok(RateEstimate {
        estimate: h(n_max),
        n_used: n_max,
        gap: h(n_max - 1) - h(n_max),
    })
}

/// Output of [`stabilized_derivative`]: the Theorem-2 value together with
/// the longer Theorem-1 length consistency value.
#[derive(Debug, Clone)]
pub struct StabilizedDerivative {
    pub order: usize,
    /// Derivative of H_n at the stabilizing length n = ceil((order+1)/2).
    pub value: f64,
    pub stabilizing_length: usize,
    /// Same derivative computed at length n = order (>= 1).
    pub consistency_value: f64,
    pub consistency_length: usize,
}

/// N-th derivative of the entropy rate at a Black Hole of the curve, taken
/// as the N-th derivative of H_n with n = ceil((N+1)/2). Errors when the
/// model at `at` is not a Black Hole.
pub fn stabilized_derivative(
    curve: &ModelCurve,
    at: f64,
    order: usize,
    bh_tol: f64,
) -> Result<StabilizedDerivative> {
    let model = curve.model_at(at)?;
    let report = is_black_hole(&model, bh_tol);
    if !report.is_black_hole {
        let mut parts = Vec::new();
        for s in &report.symbols {
            if !(s.rank_one && s.columns_ok) {
                parts.push(format!(
                    "symbol {}: singular ratio {:.3e}, proportionality residual {:.3e}, columns {:?}",
                    s.symbol, s.singular_ratio, s.proportionality_residual, s.columns
                ));
            }
        }
        return Err(Error::NotABlackHole {
            reason: parts.join("; "),
        });
    }
    let short = ((order + 1) + 1) / 2; // ceil((order+1)/2)
    let short = short.max(1);
    let long = order.max(1);
    let jm = curve.jet_model_at(at, order.max(1))?;
    let value = h_n_jet(&jm, short)?.derivative(order);
    let consistency_value = h_n_jet(&jm, long)?.derivative(order);
    Ok(StabilizedDerivative {
        order,
        value,
        stabilizing_length: short,
        consistency_value,
        consistency_length: long,
    })
}

/// First derivative of H_1 along the curve; equals the entropy-rate
/// derivative whenever the chain at `at` is itself Markov (the caller
/// asserts this; it is not verified here).
pub fn markov_first_derivative(curve: &ModelCurve, at: f64) -> Result<f64> {
    let jm = curve.jet_model_at(at, 1)?;
    Ok(h_n_jet(&jm, 1)?.derivative(1))
}

//! Formal-derivative combinatorics.
//!
//! Expanding (y'/y)^(n) over partitions a_1 >= ... >= a_m >= 1 of n+1 gives
//! coefficients C_[a_1..a_m] with the closed form
//!
//!   C = (-1)^(m+1) (1/m) P(a_1..a_m) (a_1+...+a_m)! / (a_1! ... a_m!),
//!
//! where P counts distinct permutations of the multiset. The same values
//! satisfy a two-case recursion (decrement one part; subtract (m-1) times the
//! shorter coefficient when a trailing 1 is present), and both routes are
//! kept and compared exactly in rational arithmetic.
//!
//! The N-th formal derivative of y log y splits as High_N + Low_N, where
//! High_N collects the terms in y^(i) for i >= ceil((N+1)/2) and each such
//! coefficient is an integer multiple of (log y + 1)^(N-i). The integers
//! C_{i,N} are extracted numerically from probe jets and frozen, not assumed.

use crate::error::{Error, Result};
use crate::jet::Jet;
use num::{BigInt, BigRational, BigUint, One, Zero};
use std::collections::HashMap;

/// Integer partition, parts sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|&p| p == 0) {
            return Err(Error::DomainError {
                value: 0.0,
                domain: "partition parts must be positive",
            });
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Partition(parts))
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

/// All partitions of `n`, reverse-lexicographic (largest part first).
pub fn partitions_of(n: u32) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn descend(remaining: u32, max_part: u32, current: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if remaining == 0 {
            out.push(Partition(current.clone()));
            return;
        }
        let top = remaining.min(max_part);
        for part in (1..=top).rev() {
            current.push(part);
            descend(remaining - part, part, current, out);
            current.pop();
        }
    }
    descend(n, n, &mut current, &mut out);
    out
}

fn factorial(n: u32) -> BigUint {
    let mut acc = BigUint::one();
    for k in 2..=n {
        acc *= BigUint::from(k);
    }
    acc
}

/// Number of distinct sequences obtained by permuting the parts:
/// m! / (m_1! m_2! ... m_j!) over the multiplicity blocks.
pub fn permutation_count(p: &Partition) -> u128 {
    let m = p.len() as u32;
    let mut num = factorial(m);
    let mut i = 0;
    let parts = p.parts();
    while i < parts.len() {
        let mut j = i;
        while j < parts.len() && parts[j] == parts[i] {
            j += 1;
        }
        num /= factorial((j - i) as u32);
        i = j;
    }
    let digits = num.to_u64_digits();
    match digits.len() {
        0 => 0,
        1 => digits[0] as u128,
        2 => (digits[1] as u128) << 64 | digits[0] as u128,
        _ => panic!("permutation count exceeds u128"),
    }
}

/// Closed form for C_[a_1..a_m], exact.
pub fn coefficient_closed_form(p: &Partition) -> BigRational {
    let m = p.len() as u32;
    let sign = if m % 2 == 1 { 1 } else { -1 };
    let mut num = factorial(p.weight()) * factorial(m);
    let mut den = BigUint::from(m);
    // P(a) = m! / prod multiplicities!, folded into num/den
    let parts = p.parts();
    let mut i = 0;
    while i < parts.len() {
        let mut j = i;
        while j < parts.len() && parts[j] == parts[i] {
            j += 1;
        }
        den *= factorial((j - i) as u32);
        i = j;
    }
    for &a in parts {
        den *= factorial(a);
    }
    num *= BigUint::one();
    let num = BigInt::from(num) * BigInt::from(sign);
    BigRational::new(num, BigInt::from(den))
}

/// Same coefficients by the decrement recursion from C_[1] = 1, memoized per
/// invocation.
pub fn coefficient_recursion(p: &Partition) -> BigRational {
    let mut memo: HashMap<Vec<u32>, BigRational> = HashMap::new();
    recurse(p.parts(), &mut memo)
}

fn recurse(parts: &[u32], memo: &mut HashMap<Vec<u32>, BigRational>) -> BigRational {
    if parts == [1] {
        return BigRational::one();
    }
    if let Some(v) = memo.get(parts) {
        return v.clone();
    }
    let m = parts.len();
    let mut acc = BigRational::zero();
    // distinct partitions reachable by decrementing one part >= 2
    let mut seen: Vec<Vec<u32>> = Vec::new();
    for k in 0..m {
        if parts[k] < 2 {
            continue;
        }
        let mut b: Vec<u32> = parts.to_vec();
        b[k] -= 1;
        b.sort_unstable_by(|x, y| y.cmp(x));
        if seen.contains(&b) {
            continue;
        }
        // D = multiplicity of the decremented value in b
        let dec = parts[k] - 1;
        let mult = b.iter().filter(|&&v| v == dec).count() as i64;
        let sub = recurse(&b, memo);
        acc += BigRational::from(BigInt::from(mult)) * sub;
        seen.push(b);
    }
    if *parts.last().unwrap() == 1 && m >= 2 {
        let shorter = &parts[..m - 1];
        let sub = recurse(shorter, memo);
        acc -= BigRational::from(BigInt::from((m - 1) as i64)) * sub;
    }
    memo.insert(parts.to_vec(), acc.clone());
    acc
}

/// The full expansion of (y'/y)^(n): partitions of n+1 with exact
/// coefficients, in reverse-lexicographic partition order.
pub fn yprime_over_y_expansion(n: u32) -> Vec<(Partition, BigRational)> {
    partitions_of(n + 1)
        .into_iter()
        .map(|p| {
            let c = coefficient_closed_form(&p);
            (p, c)
        })
        .collect()
}

/// Evaluates the expansion on a jet (numerator side): sum over partitions of
/// C * y^(a_1) ... y^(a_m) / y^m, using raw derivatives from the jet.
pub fn evaluate_yprime_expansion(expansion: &[(Partition, BigRational)], y: &Jet) -> Result<f64> {
    if y.value() <= 0.0 {
        return Err(Error::NonpositiveConstantTerm { value: y.value() });
    }
    let mut total = 0.0;
    for (p, c) in expansion {
        let mut term = rational_to_f64(c);
        for &a in p.parts() {
            term *= y.derivative(a as usize);
        }
        term /= y.value().powi(p.len() as i32);
        total += term;
    }
    Ok(total)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    // exact for the magnitudes used here; falls back to string parsing
    // when the parts exceed i128
    let num = r.numer();
    let den = r.denom();
    let to_f64 = |b: &BigInt| -> f64 {
        let (sign, digits) = b.to_u64_digits();
        let mut v = 0.0f64;
        for d in digits.iter().rev() {
            v = v * 1.8446744073709552e19 + *d as f64;
        }
        if sign == num::bigint::Sign::Minus {
            -v
        } else {
            v
        }
    };
    to_f64(num) / to_f64(den)
}

/// High/Low split of (y log y)^(N) with frozen integer coefficients for the
/// high part.
#[derive(Debug, Clone)]
pub struct YlogySplit {
    order: usize,
    /// (i, C_{i,N}) for i = ceil((N+1)/2) .. N.
    pub high_coeffs: Vec<(usize, i64)>,
}

/// Numeric values of the split on one jet.
#[derive(Debug, Clone, Copy)]
pub struct YlogyEval {
    pub full: f64,
    pub high: f64,
    pub low: f64,
}

fn splitmix64(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn probe_jet(state: &mut u64, order: usize) -> Jet {
    let mut coeffs = vec![0.0; order + 1];
    coeffs[0] = 1.0 + splitmix64(state); // constant term in [1, 2]
    for c in coeffs.iter_mut().skip(1) {
        *c = splitmix64(state) - 0.5;
    }
    Jet::from_coeffs(coeffs).expect("nonempty")
}

/// (log y + 1)^(k) from a jet of log y.
fn log_plus_one_derivative(y: &Jet, k: usize) -> Result<f64> {
    let l = y.log()?;
    Ok(if k == 0 {
        l.value() + 1.0
    } else {
        l.derivative(k)
    })
}

/// Builds the split for order N >= 1. The coefficients C_{i,N} are measured:
/// (y log y)^(N) is linear in the isolated Taylor coefficient i for i in the
/// high range, so two evaluations give q_i[y] exactly, and q_i divided by
/// (log y + 1)^(N-i) must be the same integer across probe jets.
pub fn ylogy_expansion(n: usize) -> Result<YlogySplit> {
    if n < 1 {
        return Err(Error::DomainError {
            value: n as f64,
            domain: "split order must be >= 1",
        });
    }
    let lo = (n + 2) / 2; // ceil((N+1)/2)
    let mut state = 0x5eed_1234_abcd_0001u64;
    let mut high_coeffs = Vec::new();
    for i in lo..=n {
        let mut measured: Option<f64> = None;
        for _ in 0..4 {
            let base = probe_jet(&mut state, n);
            let mut bumped_coeffs = base.coeffs().to_vec();
            bumped_coeffs[i] += 1.0;
            let bumped = Jet::from_coeffs(bumped_coeffs)?;
            let fact_i = (1..=i).map(|v| v as f64).product::<f64>();
            // slope with respect to y^(i): the bump changes y^(i) by i!
            let qi = (bumped.xlogx()?.derivative(n) - base.xlogx()?.derivative(n)) / fact_i;
            let denom = log_plus_one_derivative(&base, n - i)?;
            if denom.abs() < 1e-3 {
                continue; // unluckily flat probe; try the next one
            }
            let c = qi / denom;
            match measured {
                None => measured = Some(c),
                Some(prev) => {
                    if (prev - c).abs() > 1e-8 * (1.0 + prev.abs()) {
                        return Err(Error::DomainError {
                            value: prev - c,
                            domain: "high-part coefficient not constant across probes",
                        });
                    }
                }
            }
        }
        let c = measured.ok_or(Error::DomainError {
            value: 0.0,
            domain: "no usable probe jet",
        })?;
        let rounded = c.round();
        if (c - rounded).abs() > 1e-9 * (1.0 + rounded.abs()) {
            return Err(Error::DomainError {
                value: c,
                domain: "high-part coefficient is not an integer",
            });
        }
        high_coeffs.push((i, rounded as i64));
    }
    Ok(YlogySplit {
        order: n,
        high_coeffs,
    })
}

impl YlogySplit {
    pub fn order(&self) -> usize {
        self.order
    }

    /// full = (y log y)^(N); high = sum C_{i,N} (log y + 1)^(N-i) y^(i);
    /// low = full - high.
    pub fn eval(&self, y: &Jet) -> Result<YlogyEval> {
        if y.order() < self.order {
            return Err(Error::MixedOrder {
                left: y.order(),
                right: self.order,
            });
        }
        let full = y.xlogx()?.derivative(self.order);
        let mut high = 0.0;
        for &(i, c) in &self.high_coeffs {
            high += c as f64 * log_plus_one_derivative(y, self.order - i)? * y.derivative(i);
        }
        Ok(YlogyEval {
            full,
            high,
            low: full - high,
        })
    }

    /// Low part alone.
    pub fn low(&self, y: &Jet) -> Result<f64> {
        Ok(self.eval(y)?.low)
    }
}

/// Numeric verification of the Low-part structure.
#[derive(Debug, Clone)]
pub struct LowpartReport {
    pub order: usize,
    /// Low_N[ax] must ignore jet coefficients above ceil((N-1)/2) in either
    /// factor.
    pub truncation_residual: f64,
    /// Low_N[c x] = c Low_N[x] for constant jets c (c = 1 recovers Low_N[x]).
    pub constant_recovery_residual: f64,
    /// With a_1 + a_2 + a_3 = 1 (constant-one jet), the map
    /// x |-> sum_k Low_N[a_k x] - Low_N[x] is linear in the x jet.
    pub linearity_residual: f64,
    pub pass: bool,
}

pub fn lowpart_structure_check(n: usize) -> Result<LowpartReport> {
    if n < 2 {
        return Err(Error::DomainError {
            value: n as f64,
            domain: "low-part check needs order >= 2",
        });
    }
    let split = ylogy_expansion(n)?;
    // ceil((N-1)/2): highest derivative order Low may depend on
    let keep = n / 2;
    let mut state = 0xfeed_5678_0042_9001u64;
    let mut truncation = 0.0f64;
    let mut constant = 0.0f64;
    let mut linearity = 0.0f64;
    for _ in 0..20 {
        let a = probe_jet(&mut state, n);
        let x = probe_jet(&mut state, n);

        // truncation insensitivity in x and in a
        let low_ref = split.low(&a.mul(&x)?)?;
        let mut xt = x.coeffs().to_vec();
        for c in xt.iter_mut().skip(keep + 1) {
            *c += splitmix64(&mut state) - 0.5;
        }
        let xt = Jet::from_coeffs(xt)?;
        truncation = truncation.max((split.low(&a.mul(&xt)?)? - low_ref).abs());
        let mut at = a.coeffs().to_vec();
        for c in at.iter_mut().skip(keep + 1) {
            *c += splitmix64(&mut state) - 0.5;
        }
        let at = Jet::from_coeffs(at)?;
        truncation = truncation.max((split.low(&at.mul(&x)?)? - low_ref).abs());

        // constant-jet recovery: s_0[x] = Low_N[x]
        let one = Jet::constant(1.0, n);
        constant = constant.max((split.low(&one.mul(&x)?)? - split.low(&x)?).abs());
        let cval = 0.5 + splitmix64(&mut state);
        let cj = Jet::constant(cval, n);
        constant = constant.max((split.low(&cj.mul(&x)?)? - cval * split.low(&x)?).abs());

        // additive-family linearity in the x jet
        let a1 = probe_jet(&mut state, n).scale(0.25);
        let a2 = probe_jet(&mut state, n).scale(0.25);
        let sum12 = a1.add(&a2)?;
        let a3 = Jet::constant(1.0, n).sub(&sum12)?;
        if a3.value() <= 0.05 {
            continue;
        }
        let g = |x: &Jet| -> Result<f64> {
            let mut s = 0.0;
            for ak in [&a1, &a2, &a3] {
                s += split.low(&ak.mul(x)?)?;
            }
            Ok(s - split.low(x)?)
        };
        let x2 = probe_jet(&mut state, n);
        let alpha = 0.4 + splitmix64(&mut state);
        let beta = 0.4 + splitmix64(&mut state);
        let combo = x.scale(alpha).add(&x2.scale(beta))?;
        let lhs = g(&combo)?;
        let rhs = alpha * g(&x)? + beta * g(&x2)?;
        linearity = linearity.max((lhs - rhs).abs());
    }
    let pass = truncation < 1e-9 && constant < 1e-9 && linearity < 1e-9;
    Ok(LowpartReport {
        order: n,
        truncation_residual: truncation,
        constant_recovery_residual: constant,
        linearity_residual: linearity,
        pass,
    })
}

/// Exact binomial moments: (sum i C(n,i), sum i^2 C(n,i)) with the closed
/// forms n 2^(n-1) and n(n-1) 2^(n-2) + n 2^(n-1) verified on the way out.
pub fn binomial_moment_identities(n: u32) -> Result<(u128, u128)> {
    if n > 62 {
        return Err(Error::Overflow {
            n: n as u64,
            limit: 62,
        });
    }
    let mut s1: u128 = 0;
    let mut s2: u128 = 0;
    let mut c: u128 = 1; // C(n, 0)
    for i in 0..=n as u128 {
        s1 += i * c;
        s2 += i * i * c;
        if i < n as u128 {
            c = c * (n as u128 - i) / (i + 1);
        }
    }
    let closed1 = if n == 0 { 0 } else { (n as u128) << (n - 1) };
    let closed2 = if n < 2 {
        closed1
    } else {
        (n as u128) * (n as u128 - 1) * (1u128 << (n - 2)) + closed1
    };
    if s1 != closed1 || s2 != closed2 {
        return Err(Error::DomainError {
            value: n as f64,
            domain: "binomial moment identity",
        });
    }
    Ok((s1, s2))
}

//! Binary Markov chains observed through a binary symmetric channel.
//!
//! With a 2x2 chain Pi and crossover eps, the conditional belief reduces to
//! the scalar ratio x = p(z_1^i, y_i = 0) / p(z_1^i, y_i = 1), driven by the
//! iterated function system
//!
//!   f_z(x) = (p_E(z) / p_E(!z)) (pi00 x + pi10) / (pi01 x + pi11),
//!
//! starting from x_0 = pi10 / pi01. The maps have unique positive fixed
//! points p_1 <= p_0; I = [p_1, p_0] is invariant, and the limiting law Q of
//! x_n (Blackwell's measure on the line) is supported on the attractor of
//! {f_0, f_1}. When f_1(p_0) < f_0(p_1) the images are disjoint and the
//! support is a Cantor set; otherwise it is the whole interval.
//!
//! Level-n cylinder data (points, probabilities, interval images) yield a
//! quadrature of the entropy-rate integral, rigorous upper/lower bounds from
//! per-cylinder extrema of r(x) = -(r0 log r0 + r1 log r1), and the deleted
//! intervals of the Cantor construction.

use crate::curve::ModelCurve;
use crate::error::{Error, Result};
use crate::hmm::HiddenMarkovModel;
use rayon::prelude::*;
use serde::Serialize;

/// Guard for operations that materialize all 2^n cylinders.
pub const MATERIALIZE_LIMIT: u32 = 22;
/// Guard for streaming enumerations.
pub const STREAM_LIMIT: u32 = 26;

const DEGENERATE_TOL: f64 = 1e-12;
const BOUNDARY_TOL: f64 = 1e-12;

/// 2x2 chain plus channel crossover, eps in [0, 1/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryChainParams {
    pi: [[f64; 2]; 2],
    eps: f64,
}

impl BinaryChainParams {
    pub fn new(pi: [[f64; 2]; 2], eps: f64) -> Result<Self> {
        for (i, row) in pi.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum = row[0] + row[1];
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::RowSum {
                    row: i,
                    sum,
                    tol: 1e-12,
                });
            }
        }
        if !(0.0..=0.5).contains(&eps) {
            return Err(Error::DomainError {
                value: eps,
                domain: "eps must lie in [0, 1/2]",
            });
        }
        Ok(BinaryChainParams { pi, eps })
    }

    pub fn pi(&self) -> [[f64; 2]; 2] {
        self.pi
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        BinaryChainParams::new(self.pi, eps)
    }

    /// det Pi = pi00 - pi10 for a stochastic 2x2 matrix.
    pub fn det(&self) -> f64 {
        self.pi[0][0] * self.pi[1][1] - self.pi[0][1] * self.pi[1][0]
    }

    pub fn all_positive(&self) -> bool {
        self.pi.iter().flatten().all(|&v| v > 0.0)
    }

    /// Standing assumptions of the interval analysis: det Pi > 0, all
    /// pi_ij > 0, eps > 0.
    pub fn standard_regime(&self) -> Result<()> {
        if !self.all_positive() {
            return Err(Error::RegimeViolation {
                reason: "all pi entries must be positive".into(),
            });
        }
        if self.det() <= 0.0 {
            return Err(Error::RegimeViolation {
                reason: format!("det Pi = {} must be positive", self.det()),
            });
        }
        if self.eps <= 0.0 {
            return Err(Error::RegimeViolation {
                reason: "eps must be positive".into(),
            });
        }
        Ok(())
    }

    /// Stationary distribution of the 2-state chain.
    pub fn chain_stationary(&self) -> (f64, f64) {
        let s = self.pi[0][1] + self.pi[1][0];
        (self.pi[1][0] / s, self.pi[0][1] / s)
    }

    /// Start of the belief-ratio iteration (stationary odds).
    pub fn x_start(&self) -> f64 {
        self.pi[1][0] / self.pi[0][1]
    }

    /// The 4x4 hidden-chain model over (y, e) states with Phi = (0,1,1,0).
    pub fn build_model(&self) -> Result<HiddenMarkovModel> {
        ModelCurve::bsc(self.pi)?.model_at(self.eps)
    }

    /// The one-parameter family through this Pi.
    pub fn curve(&self) -> Result<ModelCurve> {
        ModelCurve::bsc(self.pi)
    }
}

/// The pair of Mobius maps f_0, f_1 with their partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct MobiusPair {
    pi: [[f64; 2]; 2],
    eps: f64,
    beta: [f64; 2],
}

impl MobiusPair {
    /// Requires pi_ij > 0, eps in (0, 1/2], det >= 0 (decreasing maps from
    /// det < 0 are rejected).
    pub fn new(p: &BinaryChainParams) -> Result<Self> {
        if !p.all_positive() {
            return Err(Error::RegimeViolation {
                reason: "all pi entries must be positive".into(),
            });
        }
        if p.eps <= 0.0 {
            return Err(Error::RegimeViolation {
                reason: "eps must be positive for the belief-ratio maps".into(),
            });
        }
        if p.det() < -DEGENERATE_TOL {
            return Err(Error::RegimeViolation {
                reason: "det Pi < 0: decreasing maps are out of scope".into(),
            });
        }
        Ok(MobiusPair {
            pi: p.pi,
            eps: p.eps,
            beta: [(1.0 - p.eps) / p.eps, p.eps / (1.0 - p.eps)],
        })
    }

    fn core(&self, x: f64) -> f64 {
        (self.pi[0][0] * x + self.pi[1][0]) / (self.pi[0][1] * x + self.pi[1][1])
    }

    pub fn apply(&self, z: usize, x: f64) -> f64 {
        self.beta[z] * self.core(x)
    }

    /// d f_z / d x.
    pub fn dx(&self, z: usize, x: f64) -> f64 {
        let det = self.pi[0][0] * self.pi[1][1] - self.pi[0][1] * self.pi[1][0];
        let den = self.pi[0][1] * x + self.pi[1][1];
        self.beta[z] * det / (den * den)
    }

    /// d f_z / d eps.
    pub fn deps(&self, z: usize, x: f64) -> f64 {
        let m = self.core(x);
        if z == 0 {
            -m / (self.eps * self.eps)
        } else {
            m / ((1.0 - self.eps) * (1.0 - self.eps))
        }
    }

    /// Positive fixed point of f_z via the numerically stable quadratic
    /// formula: pi01 x^2 + (pi11 - beta pi00) x - beta pi10 = 0.
    pub fn fixed_point(&self, z: usize) -> f64 {
        let beta = self.beta[z];
        let a = self.pi[0][1];
        let b = self.pi[1][1] - beta * self.pi[0][0];
        let c = -beta * self.pi[1][0];
        let disc = (b * b - 4.0 * a * c).sqrt();
        let q = -0.5 * (b + b.signum() * disc);
        let (x1, x2) = (q / a, c / q);
        if x1 > 0.0 {
            x1
        } else {
            x2
        }
    }
}

/// Fixed points p_1 <= p_0 with their residuals |f_z(p_z) - p_z|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoints {
    pub p1: f64,
    pub p0: f64,
    pub residual_p1: f64,
    pub residual_p0: f64,
}

pub fn fixed_points(p: &BinaryChainParams) -> Result<FixedPoints> {
    let maps = MobiusPair::new(p)?;
    let p0 = maps.fixed_point(0);
    let p1 = maps.fixed_point(1);
    Ok(FixedPoints {
        p1,
        p0,
        residual_p1: (maps.apply(1, p1) - p1).abs(),
        residual_p0: (maps.apply(0, p0) - p0).abs(),
    })
}

/// p(z_i = 0 | x): ((1-e) pi00 + e pi01) x + ((1-e) pi10 + e pi11) over x+1.
pub fn r0(p: &BinaryChainParams, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::DomainError {
            value: x,
            domain: "belief ratio must be nonnegative",
        });
    }
    let e = p.eps;
    let c0 = (1.0 - e) * p.pi[0][0] + e * p.pi[0][1];
    let c1 = (1.0 - e) * p.pi[1][0] + e * p.pi[1][1];
    Ok((c0 * x + c1) / (x + 1.0))
}

/// p(z_i = 1 | x) = 1 - r0.
pub fn r1(p: &BinaryChainParams, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::DomainError {
            value: x,
            domain: "belief ratio must be nonnegative",
        });
    }
    let e = p.eps;
    let c0 = e * p.pi[0][0] + (1.0 - e) * p.pi[0][1];
    let c1 = e * p.pi[1][0] + (1.0 - e) * p.pi[1][1];
    Ok((c0 * x + c1) / (x + 1.0))
}

/// r(x) = -(r0 log r0 + r1 log r1), the conditional symbol entropy at x.
pub fn symbol_entropy(p: &BinaryChainParams, x: f64) -> Result<f64> {
    let a = r0(p, x)?;
    let b = r1(p, x)?;
    Ok(-(a * a.ln() + b * b.ln()))
}

/// Support classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportClass {
    CantorSet,
    Interval,
    Degenerate,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupportWitnesses {
    pub p0: f64,
    pub p1: f64,
    pub f1_p0: f64,
    pub f0_p1: f64,
    /// f0(p1) - f1(p0): positive in the non-overlapping case.
    pub gap: f64,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupportClassification {
    pub class: SupportClass,
    /// Set when |f0(p1) - f1(p0)| is within the 1e-12 band.
    pub boundary: bool,
    pub witnesses: SupportWitnesses,
}

/// Cantor set iff f1(p0) < f0(p1) strictly (1e-12 band reported as the
/// boundary overlapping case); interval otherwise. det Pi = 0 degenerates to
/// point masses; det Pi < 0 is rejected.
pub fn classify_support(p: &BinaryChainParams) -> Result<SupportClassification> {
    if !p.all_positive() || p.eps <= 0.0 {
        return Err(Error::RegimeViolation {
            reason: "classification needs pi > 0 and eps > 0".into(),
        });
    }
    if p.det() < -DEGENERATE_TOL {
        return Err(Error::RegimeViolation {
            reason: "det Pi < 0: orientation out of scope".into(),
        });
    }
    let maps = MobiusPair::new(p)?;
    let fp = fixed_points(p)?;
    let f1_p0 = maps.apply(1, fp.p0);
    let f0_p1 = maps.apply(0, fp.p1);
    let witnesses = SupportWitnesses {
        p0: fp.p0,
        p1: fp.p1,
        f1_p0,
        f0_p1,
        gap: f0_p1 - f1_p0,
        interval: (fp.p1, fp.p0),
    };
    if p.det().abs() <= DEGENERATE_TOL {
        return Ok(SupportClassification {
            class: SupportClass::Degenerate,
            boundary: false,
            witnesses,
        });
    }
    let gap = witnesses.gap;
    let (class, boundary) = if gap > BOUNDARY_TOL {
        (SupportClass::CantorSet, false)
    } else if gap >= -BOUNDARY_TOL {
        (SupportClass::Interval, true)
    } else {
        (SupportClass::Interval, false)
    };
    Ok(SupportClassification {
        class,
        boundary,
        witnesses,
    })
}

fn check_level(n: usize, limit: u32) -> Result<()> {
    if n as u32 > limit {
        return Err(Error::EnumerationTooLarge {
            requested: 1u64 << (n.min(63)),
            limit: 1u64 << limit,
        });
    }
    Ok(())
}

/// L_n: all n-fold compositions applied to the fixed points, sorted and
/// deduplicated at 1e-14 absolute.
pub fn support_points(p: &BinaryChainParams, n: usize) -> Result<Vec<f64>> {
    p.standard_regime()?;
    check_level(n + 1, MATERIALIZE_LIMIT)?;
    let maps = MobiusPair::new(p)?;
    let fp = fixed_points(p)?;
    let mut current = vec![fp.p1, fp.p0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(current.len() * 2);
        for &x in &current {
            next.push(maps.apply(0, x));
            next.push(maps.apply(1, x));
        }
        current = next;
    }
    current.sort_by(f64::total_cmp);
    current.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    Ok(current)
}

/// One level-n cylinder: the point reached by its word, the word
/// probability, and the interval image of I under the word's composition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CylinderPoint {
    pub x: f64,
    pub probability: f64,
    /// Word bits: z_k is bit k-1 (z_1 in the least significant bit).
    pub word: u32,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct CylinderLevel {
    pub level: usize,
    /// Sorted ascending by x.
    pub points: Vec<CylinderPoint>,
    pub base_interval: (f64, f64),
}

impl CylinderLevel {
    pub fn total_probability(&self) -> f64 {
        self.points.iter().map(|c| c.probability).sum()
    }

    pub fn max_probability(&self) -> f64 {
        self.points
            .iter()
            .map(|c| c.probability)
            .fold(0.0, f64::max)
    }
}

pub fn word_symbols(word: u32, level: usize) -> Vec<usize> {
    (0..level).map(|k| ((word >> k) & 1) as usize).collect()
}

pub fn word_string(word: u32, level: usize) -> String {
    (0..level)
        .map(|k| if (word >> k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Level-n cylinder data: x by iterating the maps from x_0, probabilities by
/// the joint (a, b) recursion, intervals as word images of I.
pub fn cylinder_level(p: &BinaryChainParams, n: usize) -> Result<CylinderLevel> {
    p.standard_regime()?;
    check_level(n, MATERIALIZE_LIMIT)?;
    let maps = MobiusPair::new(p)?;
    let fp = fixed_points(p)?;
    let (pix0, pix1) = p.chain_stationary();
    let count = 1usize << n;
    let mut points = Vec::with_capacity(count);
    // iterative DFS in word order
    struct Node {
        a: f64,
        b: f64,
        x: f64,
        lo: f64,
        hi: f64,
        depth: usize,
        word: u32,
    }
    let mut stack = vec![Node {
        a: pix0,
        b: pix1,
        x: p.x_start(),
        lo: fp.p1,
        hi: fp.p0,
        depth: 0,
        word: 0,
    }];
    let e = p.eps;
    while let Some(node) = stack.pop() {
        if node.depth == n {
            points.push(CylinderPoint {
                x: node.x,
                probability: node.a + node.b,
                word: node.word,
                interval: (node.lo, node.hi),
            });
            continue;
        }
        for z in [1usize, 0] {
            let (pe, pec) = if z == 0 { (1.0 - e, e) } else { (e, 1.0 - e) };
            let a2 = pe * (p.pi[0][0] * node.a + p.pi[1][0] * node.b);
            let b2 = pec * (p.pi[0][1] * node.a + p.pi[1][1] * node.b);
            stack.push(Node {
                a: a2,
                b: b2,
                x: maps.apply(z, node.x),
                lo: maps.apply(z, node.lo),
                hi: maps.apply(z, node.hi),
                depth: node.depth + 1,
                word: node.word | ((z as u32) << node.depth),
            });
        }
    }
    points.sort_by(|u, v| u.x.total_cmp(&v.x));
    Ok(CylinderLevel {
        level: n,
        points,
        base_interval: (fp.p1, fp.p0),
    })
}

/// Streaming fold over all level-n cylinders with a fixed parallel split
/// depth and in-order Kahan reduction, so the result is independent of the
/// worker count.
pub(crate) fn fold_cylinders<const M: usize>(
    p: &BinaryChainParams,
    n: usize,
    leaf: impl Fn(f64, f64, f64, f64, f64) -> [f64; M] + Sync,
) -> Result<[f64; M]> {
    p.standard_regime()?;
    check_level(n, STREAM_LIMIT)?;
    let maps = MobiusPair::new(p)?;
    let fp = fixed_points(p)?;
    let (pix0, pix1) = p.chain_stationary();
    let e = p.eps;
    let split = n.min(8);

    #[derive(Clone, Copy)]
    struct State {
        a: f64,
        b: f64,
        x: f64,
        lo: f64,
        hi: f64,
    }
    let advance = |s: &State, z: usize| {
        let (pe, pec) = if z == 0 { (1.0 - e, e) } else { (e, 1.0 - e) };
        State {
            a: pe * (p.pi[0][0] * s.a + p.pi[1][0] * s.b),
            b: pec * (p.pi[0][1] * s.a + p.pi[1][1] * s.b),
            x: maps.apply(z, s.x),
            lo: maps.apply(z, s.lo),
            hi: maps.apply(z, s.hi),
        }
    };

    let mut frontier = vec![State {
        a: pix0,
        b: pix1,
        x: p.x_start(),
        lo: fp.p1,
        hi: fp.p0,
    }];
    for _ in 0..split {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for s in &frontier {
            next.push(advance(s, 0));
            next.push(advance(s, 1));
        }
        frontier = next;
    }

    let subtree = |start: &State| -> [f64; M] {
        let mut sums = [0.0f64; M];
        let mut comp = [0.0f64; M];
        let mut stack = vec![(*start, split)];
        while let Some((s, depth)) = stack.pop() {
            if depth == n {
                let vals = leaf(s.a + s.b, s.x, s.lo, s.hi, s.a);
                for k in 0..M {
                    let y = vals[k] - comp[k];
                    let t = sums[k] + y;
                    comp[k] = (t - sums[k]) - y;
                    sums[k] = t;
                }
                continue;
            }
            stack.push((advance(&s, 1), depth + 1));
            stack.push((advance(&s, 0), depth + 1));
        }
        sums
    };

    let partials: Vec<[f64; M]> = frontier.par_iter().map(subtree).collect();
    let mut sums = [0.0f64; M];
    let mut comp = [0.0f64; M];
    for part in partials {
        for k in 0..M {
            let y = part[k] - comp[k];
            let t = sums[k] + y;
            comp[k] = (t - sums[k]) - y;
            sums[k] = t;
        }
    }
    Ok(sums)
}

/// Entropy-rate bounds from per-cylinder extrema of r.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EntropyBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Requires the non-overlapping case; returns an error with the witness
/// points otherwise.
pub fn require_non_overlapping(p: &BinaryChainParams) -> Result<()> {
    let c = classify_support(p)?;
    if c.class != SupportClass::CantorSet {
        return Err(Error::NotNonOverlapping {
            f1_p0: c.witnesses.f1_p0,
            f0_p1: c.witnesses.f0_p1,
        });
    }
    Ok(())
}

/// Min and max of r over [lo, hi]: endpoint values plus the interior
/// critical point of r (where r0 = 1/2, so r = log 2), located by bisection
/// of the monotone log-ratio.
fn r_extrema(p: &BinaryChainParams, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let rl = symbol_entropy(p, lo)?;
    let rh = symbol_entropy(p, hi)?;
    let mut min = rl.min(rh);
    let mut max = rl.max(rh);
    let s = |x: f64| -> Result<f64> { Ok(r0(p, x)? - 0.5) };
    let sl = s(lo)?;
    let sh = s(hi)?;
    if sl < 0.0 && sh > 0.0 {
        // r0 crosses 1/2 inside; safeguarded bisection, then evaluate r there
        let (mut a, mut b) = (lo, hi);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if s(mid)? < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= f64::EPSILON * b.abs() {
                break;
            }
        }
        let xc = 0.5 * (a + b);
        let rc = symbol_entropy(p, xc)?;
        min = min.min(rc);
        max = max.max(rc);
    }
    Ok((min, max))
}

/// sum of p * min r and p * max r over level-n cylinders; lower <= H(Z) <=
/// upper in the non-overlapping case, with nonincreasing widths in n.
pub fn entropy_bounds(p: &BinaryChainParams, n: usize) -> Result<EntropyBounds> {
    require_non_overlapping(p)?;
    let sums = fold_cylinders::<2>(p, n, |prob, _x, lo, hi, _a| {
        let (min, max) = r_extrema(p, lo, hi).expect("interval inside [p1, p0]");
        [prob * min, prob * max]
    })?;
    Ok(EntropyBounds {
        lower: sums[0],
        upper: sums[1],
    })
}

/// sum of p_{n,i} r(x_{n,i}): the level-n quadrature of the entropy-rate
/// integral; identical to H_n of the 4x4 model.
pub fn blackwell_entropy(p: &BinaryChainParams, n: usize) -> Result<f64> {
    let sums = fold_cylinders::<1>(p, n, |prob, x, _lo, _hi, _a| {
        [prob * symbol_entropy(p, x).expect("x inside [p1, p0]")]
    })?;
    Ok(sums[0])
}

/// Largest single-cylinder mass at level n.
pub fn max_cylinder_probability(p: &BinaryChainParams, n: usize) -> Result<f64> {
    p.standard_regime()?;
    check_level(n, STREAM_LIMIT)?;
    let e = p.eps;
    let (pix0, pix1) = p.chain_stationary();
    let split = n.min(8);
    let advance = |(a, b): (f64, f64), z: usize| {
        let (pe, pec) = if z == 0 { (1.0 - e, e) } else { (e, 1.0 - e) };
        (
            pe * (p.pi[0][0] * a + p.pi[1][0] * b),
            pec * (p.pi[0][1] * a + p.pi[1][1] * b),
        )
    };
    let mut frontier = vec![(pix0, pix1)];
    for _ in 0..split {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &s in &frontier {
            next.push(advance(s, 0));
            next.push(advance(s, 1));
        }
        frontier = next;
    }
    let best = frontier
        .par_iter()
        .map(|&start| {
            let mut best = 0.0f64;
            let mut stack = vec![(start, split)];
            while let Some((s, depth)) = stack.pop() {
                if depth == n {
                    best = best.max(s.0 + s.1);
                    continue;
                }
                stack.push((advance(s, 0), depth + 1));
                stack.push((advance(s, 1), depth + 1));
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// xi = max over I of max(r0, r1) < 1; cylinder masses obey p <= xi^n.
pub fn mass_ratio_bound(p: &BinaryChainParams) -> Result<f64> {
    let fp = fixed_points(p)?;
    // r0 is increasing and r1 decreasing on I in the standard regime
    Ok(r0(p, fp.p0)?.max(r1(p, fp.p1)?))
}

/// A deleted interval of the Cantor construction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeletedInterval {
    pub level: usize,
    /// Generating word (empty at level 0), bit k-1 = z_k.
    pub word: u32,
    pub lo: f64,
    pub hi: f64,
}

/// All deleted intervals up to the given level: the base gap
/// I^d = (f1(p0), f0(p1)) and its images under every word composition of
/// length <= n.
pub fn deleted_intervals(p: &BinaryChainParams, n: usize) -> Result<Vec<DeletedInterval>> {
    require_non_overlapping(p)?;
    check_level(n + 1, MATERIALIZE_LIMIT)?;
    let maps = MobiusPair::new(p)?;
    let fp = fixed_points(p)?;
    let base = (maps.apply(1, fp.p0), maps.apply(0, fp.p1));
    let mut out = Vec::new();
    let mut frontier = vec![DeletedInterval {
        level: 0,
        word: 0,
        lo: base.0,
        hi: base.1,
    }];
    out.extend_from_slice(&frontier);
    for level in 1..=n {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for d in &frontier {
            for z in 0..2usize {
                next.push(DeletedInterval {
                    level,
                    word: d.word | ((z as u32) << (level - 1)),
                    lo: maps.apply(z, d.lo),
                    hi: maps.apply(z, d.hi),
                });
            }
        }
        out.extend_from_slice(&next);
        frontier = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::h_n;
    use approx::assert_relative_eq;

    const PI: [[f64; 2]; 2] = [[0.7, 0.3], [0.4, 0.6]];

    fn params(eps: f64) -> BinaryChainParams {
        BinaryChainParams::new(PI, eps).unwrap()
    }

    #[test]
    fn model_matches_formula() {
        let p = params(0.1);
        let m = p.build_model().unwrap();
        for y in 0..2 {
            for s in [2 * y, 2 * y + 1] {
                for y2 in 0..2 {
                    assert_relative_eq!(m.delta.get(s, 2 * y2), PI[y][y2] * 0.9);
                    assert_relative_eq!(m.delta.get(s, 2 * y2 + 1), PI[y][y2] * 0.1);
                }
            }
        }
        for i in 0..4 {
            let sum: f64 = (0..4).map(|j| m.delta.get(i, j)).sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn r_functions_sum_to_one() {
        let p = params(0.1);
        for x in [0.0, 0.5, 1.0, 2.0, 10.0] {
            assert_relative_eq!(
                r0(&p, x).unwrap() + r1(&p, x).unwrap(),
                1.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn r_at_half_noise_is_uniform() {
        let p = params(0.5);
        for x in [0.1, 1.0, 7.0] {
            assert_relative_eq!(r0(&p, x).unwrap(), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn r0_substitution_value() {
        let p = params(0.1);
        let expect = ((0.9 * 0.7 + 0.1 * 0.3) * 2.0 + (0.9 * 0.4 + 0.1 * 0.6)) / 3.0;
        assert_relative_eq!(r0(&p, 2.0).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn r_rejects_negative_state() {
        let p = params(0.1);
        assert!(r0(&p, -0.5).is_err());
    }

    #[test]
    fn fixed_points_have_small_residuals() {
        for eps in [0.02, 0.1, 0.3, 0.45] {
            let fp = fixed_points(&params(eps)).unwrap();
            assert!(fp.p1 <= fp.p0);
            assert!(fp.residual_p0 < 1e-12, "residual {}", fp.residual_p0);
            assert!(fp.residual_p1 < 1e-12);
        }
    }

    #[test]
    fn symmetric_chain_has_reciprocal_fixed_points() {
        let p = BinaryChainParams::new([[0.7, 0.3], [0.3, 0.7]], 0.1).unwrap();
        let fp = fixed_points(&p).unwrap();
        assert_relative_eq!(fp.p1, 1.0 / fp.p0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_chain_fixed_points_are_map_constants() {
        let p = BinaryChainParams::new([[0.3, 0.7], [0.3, 0.7]], 0.2).unwrap();
        let fp = fixed_points(&p).unwrap();
        let maps = MobiusPair::new(&p).unwrap();
        // constant maps: fixed point equals the constant value
        assert_relative_eq!(fp.p0, maps.apply(0, 5.0), epsilon = 1e-12);
        assert_relative_eq!(fp.p1, maps.apply(1, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn quadratic_oracle_for_fixed_point() {
        let p = params(0.1);
        let fp = fixed_points(&p).unwrap();
        for (z, x) in [(0usize, fp.p0), (1, fp.p1)] {
            let beta = if z == 0 { 0.9 / 0.1 } else { 0.1 / 0.9 };
            let resid = PI[0][1] * x * x + (PI[1][1] - beta * PI[0][0]) * x - beta * PI[1][0];
            assert!(resid.abs() < 1e-10, "quadratic residual {resid}");
        }
    }

    #[test]
    fn start_point_lies_in_invariant_interval() {
        for eps in [0.02, 0.1, 0.25, 0.49] {
            let p = params(eps);
            let fp = fixed_points(&p).unwrap();
            let x0 = p.x_start();
            assert!(fp.p1 <= x0 && x0 <= fp.p0, "eps = {eps}");
        }
    }

    #[test]
    fn classification_small_eps_is_cantor() {
        let c = classify_support(&params(0.02)).unwrap();
        assert_eq!(c.class, SupportClass::CantorSet);
        assert!(!c.boundary);
        assert!(c.witnesses.f1_p0 < c.witnesses.f0_p1);
    }

    #[test]
    fn classification_matches_predicate_on_sweep() {
        for k in 1..50 {
            let eps = 0.01 * k as f64;
            if eps >= 0.5 {
                break;
            }
            let c = classify_support(&params(eps)).unwrap();
            let expect = if c.witnesses.gap > 1e-12 {
                SupportClass::CantorSet
            } else {
                SupportClass::Interval
            };
            assert_eq!(c.class, expect, "eps = {eps}");
        }
    }

    #[test]
    fn strongly_mixing_chain_overlaps() {
        let p = BinaryChainParams::new([[0.9, 0.1], [0.1, 0.9]], 0.45).unwrap();
        let c = classify_support(&p).unwrap();
        assert_eq!(c.class, SupportClass::Interval);
    }

    #[test]
    fn degenerate_class_for_rank_one() {
        let p = BinaryChainParams::new([[0.3, 0.7], [0.3, 0.7]], 0.2).unwrap();
        assert_eq!(
            classify_support(&p).unwrap().class,
            SupportClass::Degenerate
        );
    }

    #[test]
    fn negative_det_rejected() {
        let p = BinaryChainParams::new([[0.3, 0.7], [0.6, 0.4]], 0.2).unwrap();
        assert!(matches!(
            classify_support(&p),
            Err(Error::RegimeViolation { .. })
        ));
    }

    #[test]
    fn support_points_level_zero() {
        let p = params(0.1);
        let fp = fixed_points(&p).unwrap();
        let pts = support_points(&p, 0).unwrap();
        assert_eq!(pts.len(), 2);
        assert_relative_eq!(pts[0], fp.p1);
        assert_relative_eq!(pts[1], fp.p0);
    }

    #[test]
    fn support_points_stay_in_interval_and_avoid_gap() {
        let p = params(0.05);
        let fp = fixed_points(&p).unwrap();
        let c = classify_support(&p).unwrap();
        let pts = support_points(&p, 10).unwrap();
        for &x in &pts {
            assert!(x >= fp.p1 - 1e-12 && x <= fp.p0 + 1e-12);
            assert!(
                !(x > c.witnesses.f1_p0 + 1e-12 && x < c.witnesses.f0_p1 - 1e-12),
                "point {x} inside the deleted gap"
            );
        }
    }

    #[test]
    fn cylinder_probabilities_sum_to_one() {
        let p = params(0.1);
        for n in [1, 4, 8] {
            let level = cylinder_level(&p, n).unwrap();
            assert_relative_eq!(level.total_probability(), 1.0, epsilon = 1e-12);
            assert_eq!(level.points.len(), 1 << n);
        }
    }

    #[test]
    fn cylinder_points_sorted_and_injective() {
        let p = params(0.05);
        let level = cylinder_level(&p, 8).unwrap();
        for w in level.points.windows(2) {
            assert!(w[0].x < w[1].x, "points must be strictly increasing");
        }
    }

    #[test]
    fn cylinder_mass_identity_against_level_refinement() {
        // mass of I_{w} measured at a deeper level m equals p_w
        let p = params(0.02);
        let n = 3;
        let level_n = cylinder_level(&p, n).unwrap();
        for m in [n + 1, n + 3] {
            let level_m = cylinder_level(&p, m).unwrap();
            for cyl in &level_n.points {
                let mass: f64 = level_m
                    .points
                    .iter()
                    .filter(|q| q.x >= cyl.interval.0 && q.x <= cyl.interval.1)
                    .map(|q| q.probability)
                    .sum();
                assert_relative_eq!(mass, cyl.probability, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn blackwell_entropy_equals_conditional_entropy() {
        let p = params(0.1);
        let m = p.build_model().unwrap();
        for n in [1, 3, 6] {
            assert_relative_eq!(
                blackwell_entropy(&p, n).unwrap(),
                h_n(&m, n).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn blackwell_entropy_near_half_noise() {
        let p = params(0.499);
        let h = blackwell_entropy(&p, 8).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn bounds_bracket_and_refine() {
        let p = params(0.05);
        let mut prev: Option<EntropyBounds> = None;
        for n in 1..=10 {
            let b = entropy_bounds(&p, n).unwrap();
            assert!(b.lower <= b.upper + 1e-15);
            let h = blackwell_entropy(&p, n).unwrap();
            assert!(b.lower - 1e-12 <= h && h <= b.upper + 1e-12);
            if let Some(q) = prev {
                assert!(b.lower >= q.lower - 1e-12);
                assert!(b.upper <= q.upper + 1e-12);
            }
            prev = Some(b);
        }
    }

    #[test]
    fn bounds_require_non_overlapping() {
        let p = BinaryChainParams::new([[0.9, 0.1], [0.1, 0.9]], 0.45).unwrap();
        assert!(matches!(
            entropy_bounds(&p, 4),
            Err(Error::NotNonOverlapping { .. })
        ));
    }

    #[test]
    fn mass_bound_holds() {
        for eps in [0.02, 0.1, 0.3] {
            let p = params(eps);
            let xi = mass_ratio_bound(&p).unwrap();
            assert!(xi < 1.0);
            for n in [4, 8, 12] {
                let max = max_cylinder_probability(&p, n).unwrap();
                assert!(
                    max <= xi.powi(n as i32) + 1e-15,
                    "eps {eps} n {n}: {max} vs {}",
                    xi.powi(n as i32)
                );
            }
        }
    }

    #[test]
    fn deleted_intervals_structure() {
        let p = params(0.05);
        let dels = deleted_intervals(&p, 6).unwrap();
        let c = classify_support(&p).unwrap();
        // level 0 is the base gap
        assert_relative_eq!(dels[0].lo, c.witnesses.f1_p0);
        assert_relative_eq!(dels[0].hi, c.witnesses.f0_p1);
        // pairwise disjoint
        let mut sorted: Vec<(f64, f64)> = dels.iter().map(|d| (d.lo, d.hi)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sorted.windows(2) {
            assert!(w[0].1 <= w[1].0 + 1e-12, "{:?} overlaps {:?}", w[0], w[1]);
        }
        // total deleted length below |I|
        let total: f64 = dels.iter().map(|d| d.hi - d.lo).sum();
        let fp = fixed_points(&p).unwrap();
        assert!(total < fp.p0 - fp.p1);
    }

    #[test]
    fn cylinder_points_avoid_shallower_deleted_intervals() {
        // a level-n point can only enter a deleted interval of level n or
        // deeper, and only when the start point x_0 lies in the base gap
        // (as it does for this chain); all shallower gaps are avoided
        let p = params(0.05);
        let dels = deleted_intervals(&p, 11).unwrap();
        for n in [4usize, 8, 12] {
            let level = cylinder_level(&p, n).unwrap();
            for q in &level.points {
                for d in dels.iter().filter(|d| d.level < n) {
                    assert!(
                        !(q.x > d.lo + 1e-13 && q.x < d.hi - 1e-13),
                        "level {n} point {} inside level-{} deleted ({}, {})",
                        q.x,
                        d.level,
                        d.lo,
                        d.hi
                    );
                }
            }
        }
    }

    #[test]
    fn support_points_avoid_all_deleted_intervals() {
        let p = params(0.05);
        let dels = deleted_intervals(&p, 11).unwrap();
        for n in [4usize, 8, 11] {
            for &x in &support_points(&p, n).unwrap() {
                for d in &dels {
                    assert!(
                        !(x > d.lo + 1e-13 && x < d.hi - 1e-13),
                        "support point {x} inside level-{} deleted ({}, {})",
                        d.level,
                        d.lo,
                        d.hi
                    );
                }
            }
        }
    }

    #[test]
    fn maps_increase_and_dominate() {
        let p = params(0.1);
        let maps = MobiusPair::new(&p).unwrap();
        let fp = fixed_points(&p).unwrap();
        let mut x = fp.p1;
        while x < fp.p0 {
            assert!(maps.dx(0, x) > 0.0);
            assert!(maps.dx(1, x) > 0.0);
            assert!(maps.apply(1, x) <= maps.apply(0, x));
            x += (fp.p0 - fp.p1) / 37.0;
        }
    }

    #[test]
    fn interval_lengths_decay_geometrically() {
        // fit log length of a fixed word-family against level
        let p = params(0.1);
        let maps = MobiusPair::new(&p).unwrap();
        let fp = fixed_points(&p).unwrap();
        let mut lo = fp.p1;
        let mut hi = fp.p0;
        let mut lengths = Vec::new();
        for k in 0..24 {
            let z = [0, 1, 1, 0, 1, 0][k % 6];
            lo = maps.apply(z, lo);
            hi = maps.apply(z, hi);
            lengths.push(hi - lo);
        }
        // eventual geometric decay: compare window maxima a period apart
        // (single steps may expand; six-step blocks must contract)
        let tail = &lengths[6..];
        for k in 0..tail.len() - 6 {
            assert!(tail[k + 6] < tail[k], "no contraction at block {k}");
        }
        // fitted ratio over the tail
        let rho = (tail[tail.len() - 1] / tail[0]).powf(1.0 / (tail.len() as f64 - 1.0));
        assert!(rho < 1.0, "fitted ratio {rho}");
    }

    #[test]
    fn fold_deterministic_across_thread_counts() {
        let p = params(0.05);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| blackwell_entropy(&p, 14).unwrap());
        let b = pool4.install(|| blackwell_entropy(&p, 14).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

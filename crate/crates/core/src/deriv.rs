//! Derivative structure of the entropy rate in eps.
//!
//! In the non-overlapping case the derivative of H_n in eps splits exactly
//! into four interpretable pieces:
//!
//!   H_n' = dr/deps(eps, p0)                      (moving right edge of I)
//!        + sum_i p_i x_i' g(eps, x_i)            (instantaneous location change)
//!        - int_I F_n'(eps, x) g(eps, x) dx       (instantaneous probability change)
//!        - int_I F_n(eps, x) g'(eps, x) dx
//!
//! with g = dr/dx and F_n the CDF of the level-n cylinder distribution. The
//! first term is the partial derivative of r in eps evaluated at (eps, p0):
//! the motion of p0(eps) itself cancels against the boundary term of the
//! integration by parts, so no p0'(eps) contribution remains. As n grows the
//! location and probability kernels converge to the limit kernels on the
//! support, and the total converges to the entropy-rate derivative.
//!
//! The module also carries the degenerate closed forms: iid entropy for
//! det Pi = 0, the binary entropy of eps when two chain entries vanish, the
//! log-divergence probe for the one-zero boundary, and the closed-form
//! second derivative -4 ((pi10 - pi01) / (pi10 + pi01))^2 at eps = 1/2.

use crate::bsc::{
    deleted_intervals, fixed_points, r0, r1, require_non_overlapping,
    BinaryChainParams, MobiusPair,
};
use crate::entropy::{h_n, h_n_jet};
use crate::error::{Error, Result};
use serde::Serialize;

/// g(eps, x) = dr/dx = -(1-2 eps) det(Pi) / (x+1)^2 * log(r0/r1).
pub fn g_function(p: &BinaryChainParams, x: f64) -> Result<f64> {
    let a = r0(p, x)?;
    let b = r1(p, x)?;
    let det = p.det();
    let s = x + 1.0;
    Ok(-(1.0 - 2.0 * p.eps()) * det / (s * s) * (a / b).ln())
}

/// dr0/deps at fixed x.
fn r0_eps_derivative(p: &BinaryChainParams, x: f64) -> f64 {
    let pi = p.pi();
    ((pi[0][1] - pi[0][0]) * x + (pi[1][1] - pi[1][0])) / (x + 1.0)
}

/// g'(eps, x) = dg/deps.
pub fn g_eps_derivative(p: &BinaryChainParams, x: f64) -> Result<f64> {
    let a = r0(p, x)?;
    let b = r1(p, x)?;
    let det = p.det();
    let s = x + 1.0;
    let dre = r0_eps_derivative(p, x);
    Ok(det / (s * s) * (2.0 * (a / b).ln() - (1.0 - 2.0 * p.eps()) * dre * (1.0 / a + 1.0 / b)))
}

/// dr/deps at fixed x (the x-antiderivative of g').
pub fn r_eps_derivative(p: &BinaryChainParams, x: f64) -> Result<f64> {
    let a = r0(p, x)?;
    let b = r1(p, x)?;
    Ok(-r0_eps_derivative(p, x) * (a / b).ln())
}

/// Location and probability first-order data for one cylinder.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocationJet {
    pub x: f64,
    /// dx/deps along the word, from x' <- df/deps + df/dx x'.
    pub x_prime: f64,
    pub probability: f64,
    pub probability_prime: f64,
    pub word: u32,
}

/// Per-cylinder first-order data at level n, sorted by x. The location
/// recursion starts from x_0 = pi10/pi01 with x_0' = 0 (the start point does
/// not depend on eps); the probability recursion differentiates the joint
/// (a, b) dynamics.
pub fn location_jets(p: &BinaryChainParams, n: usize) -> Result<Vec<LocationJet>> {
    require_non_overlapping(p)?;
    if n as u32 > crate::bsc::MATERIALIZE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            requested: 1u64 << n.min(63),
            limit: 1u64 << crate::bsc::MATERIALIZE_LIMIT,
        });
    }
    let maps = MobiusPair::new(p)?;
    let (pix0, pix1) = p.chain_stationary();
    let e = p.eps();
    let pi = p.pi();
    struct Node {
        a: f64,
        b: f64,
        ap: f64,
        bp: f64,
        x: f64,
        xp: f64,
        depth: usize,
        word: u32,
    }
    let mut out = Vec::with_capacity(1 << n);
    let mut stack = vec![Node {
        a: pix0,
        b: pix1,
        ap: 0.0,
        bp: 0.0,
        x: p.x_start(),
        xp: 0.0,
        depth: 0,
        word: 0,
    }];
    while let Some(node) = stack.pop() {
        if node.depth == n {
            out.push(LocationJet {
                x: node.x,
                x_prime: node.xp,
                probability: node.a + node.b,
                probability_prime: node.ap + node.bp,
                word: node.word,
            });
            continue;
        }
        for z in [1usize, 0] {
            let (pe, pec, dpe, dpec) = if z == 0 {
                (1.0 - e, e, -1.0, 1.0)
            } else {
                (e, 1.0 - e, 1.0, -1.0)
            };
            let u = pi[0][0] * node.a + pi[1][0] * node.b;
            let v = pi[0][1] * node.a + pi[1][1] * node.b;
            let up = pi[0][0] * node.ap + pi[1][0] * node.bp;
            let vp = pi[0][1] * node.ap + pi[1][1] * node.bp;
            stack.push(Node {
                a: pe * u,
                b: pec * v,
                ap: dpe * u + pe * up,
                bp: dpec * v + pec * vp,
                x: maps.apply(z, node.x),
                xp: maps.deps(z, node.x) + maps.dx(z, node.x) * node.xp,
                depth: node.depth + 1,
                word: node.word | ((z as u32) << node.depth),
            });
        }
    }
    out.sort_by(|u, v| u.x.total_cmp(&v.x));
    Ok(out)
}

/// Step data of F_n and F_n' at level n: cumulative sums of p and p' in
/// x-order. Between cylinder points both are constant; on a deleted
/// interval the value of F_n' is the instantaneous probability change K_2.
#[derive(Debug, Clone)]
pub struct CdfJets {
    pub points: Vec<LocationJet>,
    cum_p: Vec<f64>,
    cum_p_prime: Vec<f64>,
    pub interval: (f64, f64),
}

pub fn probability_cdf_jets(p: &BinaryChainParams, n: usize) -> Result<CdfJets> {
    let points = location_jets(p, n)?;
    let fp = fixed_points(p)?;
    let mut cum_p = Vec::with_capacity(points.len());
    let mut cum_p_prime = Vec::with_capacity(points.len());
    let (mut sp, mut spp) = (0.0, 0.0);
    for q in &points {
        sp += q.probability;
        spp += q.probability_prime;
        cum_p.push(sp);
        cum_p_prime.push(spp);
    }
    Ok(CdfJets {
        points,
        cum_p,
        cum_p_prime,
        interval: (fp.p1, fp.p0),
    })
}

impl CdfJets {
    fn rank(&self, x: f64) -> usize {
        // number of points with x_i <= x
        self.points.partition_point(|q| q.x <= x)
    }

    /// F_n(x): total mass at or left of x.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.rank(x) {
            0 => 0.0,
            k => self.cum_p[k - 1],
        }
    }

    /// F_n'(x): eps-derivative of the mass left of x, x held fixed.
    pub fn cdf_prime(&self, x: f64) -> f64 {
        match self.rank(x) {
            0 => 0.0,
            k => self.cum_p_prime[k - 1],
        }
    }
}

/// The four-term breakdown of H_n'(eps).
#[derive(Debug, Clone, Serialize)]
pub struct HpzBreakdown {
    /// dr/deps at (eps, p0(eps)).
    pub term1: f64,
    /// sum p_i x_i' g(x_i).
    pub term2: f64,
    /// -int K2 g dx.
    pub term3: f64,
    /// -int F g' dx.
    pub term4: f64,
    pub total: f64,
    pub level: usize,
    pub quad_points: usize,
    pub node_spacing: f64,
    pub snapped_nodes: usize,
    pub p0: f64,
    /// p0'(eps) by implicit differentiation (reported; its contribution to
    /// the total cancels against the boundary term).
    pub p0_prime: f64,
}

/// Four-term derivative at level n with composite-Simpson quadrature for the
/// two integrals. `quad_points` must be odd and at least 3; nodes falling on
/// cylinder points are snapped away by 1e-12.
pub fn hpz_derivative(p: &BinaryChainParams, n: usize, quad_points: usize) -> Result<HpzBreakdown> {
    require_non_overlapping(p)?;
    if quad_points < 3 || quad_points % 2 == 0 {
        return Err(Error::DomainError {
            value: quad_points as f64,
            domain: "quadrature needs an odd node count >= 3",
        });
    }
    let cdf = probability_cdf_jets(p, n)?;
    let maps = MobiusPair::new(p)?;
    let (p1, p0) = cdf.interval;

    // term1: partial derivative of r in eps at the right endpoint
    let term1 = r_eps_derivative(p, p0)?;
    // p0' via implicit differentiation of the fixed-point equation; the
    // attracting fixed point has df0/dx < 1
    let p0_prime = maps.deps(0, p0) / (1.0 - maps.dx(0, p0));

    // term2: weighted mean of the instantaneous location change
    let mut term2 = 0.0;
    let mut comp = 0.0;
    for q in &cdf.points {
        let v = q.probability * q.x_prime * g_function(p, q.x)?;
        let y = v - comp;
        let t = term2 + y;
        comp = (t - term2) - y;
        term2 = t;
    }

    // quadrature nodes over I, snapped off cylinder points
    let h = (p0 - p1) / (quad_points - 1) as f64;
    let mut nodes = Vec::with_capacity(quad_points);
    let mut snapped = 0usize;
    for k in 0..quad_points {
        let mut x = p1 + h * k as f64;
        let i = cdf.points.partition_point(|q| q.x < x - 1e-12);
        if i < cdf.points.len() && (cdf.points[i].x - x).abs() < 1e-12 {
            snapped += 1;
            x += 1e-12;
            if x > p0 {
                x -= 2e-12;
            }
        }
        nodes.push(x);
    }

    // coarseness guard: no panel may strictly contain more than one deleted
    // interval among the three coarsest levels (the gaps a grid of this
    // spacing must resolve individually)
    let guard_level = n.saturating_sub(1).min(2);
    let dels = deleted_intervals(p, guard_level)?;
    for w in nodes.windows(2) {
        let contained = dels
            .iter()
            .filter(|d| d.lo > w[0] && d.hi < w[1])
            .count();
        if contained > 1 {
            return Err(Error::QuadratureTooCoarse {
                count: contained,
                max_level: guard_level + 1,
            });
        }
    }

    // composite Simpson for term3 = -int K2 g and term4 = -int F g'
    let mut i3 = 0.0;
    let mut i4 = 0.0;
    for (k, &x) in nodes.iter().enumerate() {
        let w = if k == 0 || k == quad_points - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        i3 += w * cdf.cdf_prime(x) * g_function(p, x)?;
        i4 += w * cdf.cdf(x) * g_eps_derivative(p, x)?;
    }
    let term3 = -i3 * h / 3.0;
    let term4 = -i4 * h / 3.0;

    Ok(HpzBreakdown {
        term1,
        term2,
        term3,
        term4,
        total: term1 + term2 + term3 + term4,
        level: n,
        quad_points,
        node_spacing: h,
        snapped_nodes: snapped,
        p0,
        p0_prime,
    })
}

fn binary_entropy(x: f64) -> f64 {
    if x == 0.0 || x == 1.0 {
        0.0
    } else {
        -(x * x.ln() + (1.0 - x) * (1.0 - x).ln())
    }
}

/// det Pi = 0: the output is iid with p = pi00 (1 - eps) + pi01 eps.
pub fn iid_entropy(p: &BinaryChainParams) -> Result<f64> {
    if p.det().abs() > 1e-12 {
        return Err(Error::NotRankOne { det: p.det() });
    }
    let pi = p.pi();
    let prob = pi[0][0] * (1.0 - p.eps()) + pi[0][1] * p.eps();
    Ok(binary_entropy(prob))
}

/// Two zero chain entries: H(Z) = h(eps), with unbounded slope at 0+.
pub fn two_zero_entropy(eps: f64) -> Result<f64> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::DomainError {
            value: eps,
            domain: "binary entropy needs eps in (0, 1)",
        });
    }
    Ok(binary_entropy(eps))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DivergenceRow {
    pub eps: f64,
    /// Central finite-difference slope of H_n at eps.
    pub slope: f64,
    /// slope / log(eps); stabilizes to a negative constant as eps drops
    /// (slopes grow like |log eps|).
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceProbe {
    pub level: usize,
    pub rows: Vec<DivergenceRow>,
    /// Linear fit |slope| = a |log eps| + b.
    pub fit_slope: f64,
    pub fit_intercept: f64,
    pub r_squared: f64,
}

/// Finite-difference slope probe for the one-zero boundary pi00 = 0,
/// pi01 = 1, 0 < pi10 < 1, where the entropy rate behaves like eps log eps.
pub fn one_zero_divergence_probe(
    pi10: f64,
    grid: &[f64],
    level: usize,
) -> Result<DivergenceProbe> {
    if !(0.0 < pi10 && pi10 < 1.0) {
        return Err(Error::DomainError {
            value: pi10,
            domain: "pi10 must lie strictly between 0 and 1",
        });
    }
    let pi = [[0.0, 1.0], [pi10, 1.0 - pi10]];
    let mut rows = Vec::with_capacity(grid.len());
    for &eps in grid {
        if !(0.0 < eps && eps < 0.4) {
            return Err(Error::DomainError {
                value: eps,
                domain: "probe grid must lie in (0, 0.4)",
            });
        }
        let step = eps / 10.0;
        let value = |e: f64| -> Result<f64> {
            let params = BinaryChainParams::new(pi, e)?;
            h_n(&params.build_model()?, level)
        };
        let slope = (value(eps + step)? - value(eps - step)?) / (2.0 * step);
        rows.push(DivergenceRow {
            eps,
            slope,
            ratio: slope / eps.ln(),
        });
    }
    // least squares on |slope| vs |log eps|
    let xs: Vec<f64> = rows.iter().map(|r| -r.eps.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.slope.abs()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (a * x + b);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    Ok(DivergenceProbe {
        level,
        rows,
        fit_slope: a,
        fit_intercept: b,
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

/// Closed form H''(Z) at eps = 1/2: -4 ((pi10 - pi01)/(pi10 + pi01))^2.
pub fn low_snr_second_derivative(p: &BinaryChainParams) -> Result<f64> {
    if !p.all_positive() {
        return Err(Error::RegimeViolation {
            reason: "closed form needs all pi entries positive".into(),
        });
    }
    let pi = p.pi();
    let t = (pi[1][0] - pi[0][1]) / (pi[1][0] + pi[0][1]);
    Ok(-4.0 * t * t)
}

/// Jet check of the closed form at eps = 1/2.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LowSnrCheck {
    pub level: usize,
    pub h_at_half: f64,
    pub first_derivative: f64,
    pub jet_value: f64,
    pub closed_form: f64,
    pub gap: f64,
}

pub fn low_snr_numeric_check(p: &BinaryChainParams, n: usize) -> Result<LowSnrCheck> {
    let closed = low_snr_second_derivative(p)?;
    let jm = p.curve()?.jet_model_at(0.5, 2)?;
    let h = h_n_jet(&jm, n)?;
    let jet_value = h.derivative(2);
    Ok(LowSnrCheck {
        level: n,
        h_at_half: h.value(),
        first_derivative: h.derivative(1),
        jet_value,
        closed_form: closed,
        gap: (jet_value - closed).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsc::{classify_support, SupportClass};
    use crate::jet::Jet;
    use approx::assert_relative_eq;

    const PI: [[f64; 2]; 2] = [[0.7, 0.3], [0.4, 0.6]];

    fn params(eps: f64) -> BinaryChainParams {
        BinaryChainParams::new(PI, eps).unwrap()
    }

    fn r_jet_in_x(p: &BinaryChainParams, x0: f64, order: usize) -> Jet {
        // r as a jet in x, for oracle-checking g
        let e = p.eps();
        let pi = p.pi();
        let x = Jet::variable(x0, order);
        let c00 = Jet::constant((1.0 - e) * pi[0][0] + e * pi[0][1], order);
        let c10 = Jet::constant((1.0 - e) * pi[1][0] + e * pi[1][1], order);
        let c01 = Jet::constant(e * pi[0][0] + (1.0 - e) * pi[0][1], order);
        let c11 = Jet::constant(e * pi[1][0] + (1.0 - e) * pi[1][1], order);
        let den = x.add(&Jet::constant(1.0, order)).unwrap();
        let a = c00.mul(&x).unwrap().add(&c10).unwrap().div(&den).unwrap();
        let b = c01.mul(&x).unwrap().add(&c11).unwrap().div(&den).unwrap();
        a.xlogx().unwrap().add(&b.xlogx().unwrap()).unwrap().neg()
    }

    fn r_jet_in_eps(pi: [[f64; 2]; 2], e0: f64, x: f64, order: usize) -> Jet {
        let e = Jet::variable(e0, order);
        let one = Jet::constant(1.0, order);
        let ie = one.sub(&e).unwrap();
        let c = |a: f64, b: f64| -> Jet {
            // (1-e) a + e b
            ie.scale(a).add(&e.scale(b)).unwrap()
        };
        let den = Jet::constant(x + 1.0, order);
        let a = c(pi[0][0], pi[0][1])
            .scale(x)
            .add(&c(pi[1][0], pi[1][1]))
            .unwrap()
            .div(&den)
            .unwrap();
        let b = c(pi[0][1], pi[0][0])
            .scale(x)
            .add(&c(pi[1][1], pi[1][0]))
            .unwrap()
            .div(&den)
            .unwrap();
        a.xlogx().unwrap().add(&b.xlogx().unwrap()).unwrap().neg()
    }

    #[test]
    fn g_matches_jet_in_x() {
        let mut state = 0x1234u64;
        let mut rand = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let eps = 0.05 + 0.4 * rand();
            let p = params(eps);
            let fp = fixed_points(&p).unwrap();
            let x = fp.p1 + (fp.p0 - fp.p1) * rand();
            let jet = r_jet_in_x(&p, x, 1);
            assert_relative_eq!(
                g_function(&p, x).unwrap(),
                jet.derivative(1),
                epsilon = 1e-11,
                max_relative = 1e-11
            );
        }
    }

    #[test]
    fn g_eps_matches_jet_in_eps() {
        for eps in [0.05, 0.2, 0.35] {
            let p = params(eps);
            let fp = fixed_points(&p).unwrap();
            for k in 1..6 {
                let x = fp.p1 + (fp.p0 - fp.p1) * k as f64 / 6.0;
                // d/deps of g = d/deps d/dx r: differentiate the eps-jet of
                // g's closed form numerically via a fine FD as a second
                // route, and the eps-jet of r' via mixed construction
                let h = 1e-6;
                let pa = params(eps + h);
                let pb = params(eps - h);
                let fd = (g_function(&pa, x).unwrap() - g_function(&pb, x).unwrap()) / (2.0 * h);
                assert_relative_eq!(
                    g_eps_derivative(&p, x).unwrap(),
                    fd,
                    epsilon = 1e-7,
                    max_relative = 1e-6
                );
                // and r_eps_derivative against the eps-jet of r
                let jet = r_jet_in_eps(PI, eps, x, 1);
                assert_relative_eq!(
                    r_eps_derivative(&p, x).unwrap(),
                    jet.derivative(1),
                    epsilon = 1e-11,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn g_vanishes_at_half_noise_and_balance_point() {
        let p = params(0.5);
        for x in [0.2, 1.0, 3.0] {
            assert_relative_eq!(g_function(&p, x).unwrap(), 0.0, epsilon = 1e-14);
        }
        // symmetric chain: r0 = r1 = 1/2 at x = 1
        let sym = BinaryChainParams::new([[0.7, 0.3], [0.3, 0.7]], 0.2).unwrap();
        assert_relative_eq!(g_function(&sym, 1.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn location_jets_zero_for_constant_curve() {
        // eps enters every map; the analogue of a constant curve is the
        // x-iteration at det-balanced maps where df/deps = 0 cannot occur,
        // so instead verify x' = 0 propagates when forced: depth 0
        let p = params(0.05);
        let jets = location_jets(&p, 0).unwrap();
        assert_eq!(jets.len(), 1);
        assert_eq!(jets[0].x_prime, 0.0);
    }

    #[test]
    fn location_jets_match_finite_differences() {
        let p = params(0.05);
        let n = 6;
        let jets = location_jets(&p, n).unwrap();
        let h = 1e-7;
        let up = location_jets(&params(0.05 + h), n).unwrap();
        let dn = location_jets(&params(0.05 - h), n).unwrap();
        // identical word order after sorting by x is not guaranteed between
        // eps values, so match on the word tag
        use std::collections::HashMap;
        let m_up: HashMap<u32, f64> = up.iter().map(|q| (q.word, q.x)).collect();
        let m_dn: HashMap<u32, f64> = dn.iter().map(|q| (q.word, q.x)).collect();
        for q in &jets {
            let fd = (m_up[&q.word] - m_dn[&q.word]) / (2.0 * h);
            assert_relative_eq!(q.x_prime, fd, epsilon = 1e-4, max_relative = 1e-4);
        }
    }

    #[test]
    fn location_change_bounded_by_geometric_series() {
        // frozen configuration with single-step contraction: rho < 1
        let p = BinaryChainParams::new([[0.7, 0.3], [0.64, 0.36]], 0.35).unwrap();
        assert_eq!(
            classify_support(&p).unwrap().class,
            SupportClass::CantorSet
        );
        let maps = MobiusPair::new(&p).unwrap();
        let fp = fixed_points(&p).unwrap();
        let rho = maps.dx(0, fp.p1).max(maps.dx(1, fp.p1));
        assert!(rho < 1.0, "fixture must contract, rho = {rho}");
        let sup_deps = maps
            .deps(0, fp.p1)
            .abs()
            .max(maps.deps(0, fp.p0).abs())
            .max(maps.deps(1, fp.p1).abs())
            .max(maps.deps(1, fp.p0).abs());
        let bound = sup_deps / (1.0 - rho);
        for n in [6, 10, 12] {
            let jets = location_jets(&p, n).unwrap();
            let max = jets.iter().map(|q| q.x_prime.abs()).fold(0.0, f64::max);
            assert!(max <= bound, "n = {n}: {max} > {bound}");
        }
    }

    #[test]
    fn location_change_uniformly_bounded_in_level() {
        // even where single-step slopes exceed 1, |x'| stabilizes in n
        let p = params(0.05);
        let maxes: Vec<f64> = [6, 9, 12]
            .iter()
            .map(|&n| {
                location_jets(&p, n)
                    .unwrap()
                    .iter()
                    .map(|q| q.x_prime.abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!((maxes[2] - maxes[1]).abs() < 1e-3 * (1.0 + maxes[1]));
        assert!(maxes[2] < 2.0 * maxes[0] + 1.0);
    }

    #[test]
    fn shared_suffix_location_changes_converge() {
        // words u + t and v + t with a long common tail t have nearby x'
        let p = params(0.05);
        let maps = MobiusPair::new(&p).unwrap();
        let run = |word: &[usize]| -> (f64, f64) {
            let mut x = p.x_start();
            let mut xp = 0.0;
            for &z in word {
                xp = maps.deps(z, x) + maps.dx(z, x) * xp;
                x = maps.apply(z, x);
            }
            (x, xp)
        };
        let tail = [0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0];
        let mut prev_gap = f64::INFINITY;
        for len in [4, 8, 12] {
            let mut wa = vec![0, 0];
            wa.extend_from_slice(&tail[..len]);
            let mut wb = vec![1, 1];
            wb.extend_from_slice(&tail[..len]);
            let (_, xa) = run(&wa);
            let (_, xb) = run(&wb);
            let gap = (xa - xb).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-6);
    }

    #[test]
    fn cdf_jets_totals() {
        let p = params(0.05);
        let cdf = probability_cdf_jets(&p, 8).unwrap();
        let right = cdf.interval.1;
        assert_relative_eq!(cdf.cdf(right), 1.0, epsilon = 1e-12);
        assert_relative_eq!(cdf.cdf_prime(right), 0.0, epsilon = 1e-12);
        assert_eq!(cdf.cdf(cdf.interval.0 - 1e-9), 0.0);
    }

    #[test]
    fn cdf_prime_on_fixed_gap_is_stationary_in_level() {
        // K2 on a fixed deleted interval does not depend on the level:
        // membership left of the gap is a suffix event of fixed depth
        let p = params(0.05);
        let base_gap = {
            let c = classify_support(&p).unwrap();
            (c.witnesses.f1_p0, c.witnesses.f0_p1)
        };
        let x = 0.5 * (base_gap.0 + base_gap.1);
        let mut prev: Option<f64> = None;
        for n in 5..=11 {
            let cdf = probability_cdf_jets(&p, n).unwrap();
            let v = cdf.cdf_prime(x);
            if let Some(q) = prev {
                // geometric decay bound, trivially satisfied by exactness
                assert!((v - q).abs() <= 0.9f64.powi(n as i32) + 1e-12);
            }
            prev = Some(v);
        }
        // and the value itself equals d/deps P(Z = 1) = piX(0) - piX(1)
        let (pix0, pix1) = p.chain_stationary();
        assert_relative_eq!(prev.unwrap(), pix0 - pix1, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_chain_central_gap_has_zero_probability_change() {
        let p = BinaryChainParams::new([[0.7, 0.3], [0.3, 0.7]], 0.1).unwrap();
        let c = classify_support(&p).unwrap();
        assert_eq!(c.class, SupportClass::CantorSet);
        let x = 0.5 * (c.witnesses.f1_p0 + c.witnesses.f0_p1);
        let cdf = probability_cdf_jets(&p, 10).unwrap();
        assert_relative_eq!(cdf.cdf_prime(x), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn hpz_total_matches_jet_derivative_of_same_level() {
        // the four-term identity is exact at each level up to quadrature
        // error in terms 3 and 4
        let p = params(0.05);
        for n in [6, 9] {
            let bd = hpz_derivative(&p, n, 8193).unwrap();
            let jm = p.curve().unwrap().jet_model_at(0.05, 1).unwrap();
            let reference = h_n_jet(&jm, n).unwrap().derivative(1);
            assert!(
                (bd.total - reference).abs() < 2e-4,
                "n = {n}: {} vs {reference}",
                bd.total
            );
        }
    }

    #[test]
    fn hpz_terms_bounded_across_regime() {
        for eps in [0.02, 0.05, 0.1, 0.2, 0.3] {
            let p = params(eps);
            let bd = hpz_derivative(&p, 8, 4097).unwrap();
            for (name, v) in [
                ("term1", bd.term1),
                ("term2", bd.term2),
                ("term3", bd.term3),
                ("term4", bd.term4),
            ] {
                assert!(v.is_finite() && v.abs() < 50.0, "{name} = {v} at eps {eps}");
            }
        }
    }

    #[test]
    fn hpz_rejects_overlapping_and_coarse() {
        let overlapping = BinaryChainParams::new([[0.9, 0.1], [0.1, 0.9]], 0.45).unwrap();
        assert!(matches!(
            hpz_derivative(&overlapping, 8, 1025),
            Err(Error::NotNonOverlapping { .. })
        ));
        let p = params(0.05);
        assert!(matches!(
            hpz_derivative(&p, 10, 9),
            Err(Error::QuadratureTooCoarse { .. })
        ));
    }

    #[test]
    fn iid_entropy_cases() {
        let uniform = BinaryChainParams::new([[0.5, 0.5], [0.5, 0.5]], 0.3).unwrap();
        assert_relative_eq!(iid_entropy(&uniform).unwrap(), 2f64.ln());
        let p = BinaryChainParams::new([[0.3, 0.7], [0.3, 0.7]], 0.1).unwrap();
        let q: f64 = 0.3 * 0.9 + 0.7 * 0.1;
        assert_relative_eq!(
            iid_entropy(&p).unwrap(),
            -(q * q.ln() + (1.0 - q) * (1.0 - q).ln())
        );
        assert!(matches!(
            iid_entropy(&params(0.1)),
            Err(Error::NotRankOne { .. })
        ));
        let half = BinaryChainParams::new([[0.3, 0.7], [0.3, 0.7]], 0.5).unwrap();
        assert_relative_eq!(iid_entropy(&half).unwrap(), 2f64.ln());
    }

    #[test]
    fn two_zero_entropy_cases() {
        assert_relative_eq!(two_zero_entropy(0.5).unwrap(), 2f64.ln());
        let h = two_zero_entropy(0.25).unwrap();
        assert_relative_eq!(h, -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln()));
        assert!(two_zero_entropy(0.0).is_err());
        assert!(two_zero_entropy(1.0).is_err());
        // slope blows up toward 0+
        let s1 = (two_zero_entropy(1e-3).unwrap() - two_zero_entropy(1e-3 - 1e-6).unwrap()) / 1e-6;
        let s2 = (two_zero_entropy(1e-5).unwrap() - two_zero_entropy(1e-5 - 1e-8).unwrap()) / 1e-8;
        assert!(s2 > s1 && s1 > 0.0);
    }

    #[test]
    fn alternating_two_zero_chain_decreases_to_binary_entropy() {
        // pi00 = pi11 = 0: deterministic alternation plus channel noise
        let p = BinaryChainParams::new([[0.0, 1.0], [1.0, 0.0]], 0.1).unwrap();
        let m = p.build_model().unwrap();
        let target = two_zero_entropy(0.1).unwrap();
        let mut prev = f64::INFINITY;
        for n in [2, 6, 10] {
            let h = h_n(&m, n).unwrap();
            assert!(h >= target - 1e-12);
            assert!(h <= prev + 1e-12);
            prev = h;
        }
        assert!(prev - target < 1e-2);
    }

    #[test]
    fn divergence_probe_fits_log() {
        let probe =
            one_zero_divergence_probe(0.5, &[1e-2, 1e-3, 1e-4, 1e-5], 12).unwrap();
        // slopes grow in magnitude
        for w in probe.rows.windows(2) {
            assert!(w[1].slope.abs() > w[0].slope.abs());
        }
        assert!(probe.fit_slope > 0.0);
        assert!(probe.r_squared > 0.99, "R^2 = {}", probe.r_squared);
        // contrast: all-positive chain has bounded slopes on the same grid
        let p = PI;
        let mut slopes = Vec::new();
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let d = eps / 10.0;
            let f = |e: f64| {
                h_n(
                    &BinaryChainParams::new(p, e).unwrap().build_model().unwrap(),
                    8,
                )
                .unwrap()
            };
            slopes.push((f(eps + d) - f(eps - d)) / (2.0 * d));
        }
        assert!(slopes.iter().all(|s| s.abs() < 5.0), "{slopes:?}");
    }

    #[test]
    fn divergence_probe_stabilizes_in_level() {
        let s10 = one_zero_divergence_probe(0.5, &[1e-3], 10).unwrap().rows[0].slope;
        let s12 = one_zero_divergence_probe(0.5, &[1e-3], 12).unwrap().rows[0].slope;
        let s14 = one_zero_divergence_probe(0.5, &[1e-3], 14).unwrap().rows[0].slope;
        assert!((s14 - s12).abs() < (s12 - s10).abs() + 1e-9);
        assert!((s14 - s12).abs() < 1e-3);
    }

    #[test]
    fn low_snr_closed_form_values() {
        let sym = BinaryChainParams::new([[0.7, 0.3], [0.3, 0.7]], 0.5).unwrap();
        assert_relative_eq!(low_snr_second_derivative(&sym).unwrap(), 0.0);
        let p = params(0.5);
        assert_relative_eq!(
            low_snr_second_derivative(&p).unwrap(),
            -4.0 / 49.0,
            epsilon = 1e-15
        );
        // pi10 = 0.9, pi01 = 0.1: -4 (0.8/1.0)^2
        let q = BinaryChainParams::new([[0.9, 0.1], [0.9, 0.1]], 0.5).unwrap();
        assert_relative_eq!(
            low_snr_second_derivative(&q).unwrap(),
            -4.0 * (0.8f64 / 1.0).powi(2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn low_snr_jet_check() {
        let p = params(0.5);
        let check = low_snr_numeric_check(&p, 8).unwrap();
        assert_relative_eq!(check.h_at_half, 2f64.ln(), epsilon = 1e-13);
        assert!(check.first_derivative.abs() < 1e-11);
        assert!(check.gap < 1e-10, "gap = {}", check.gap);
        // symmetric chain: second derivative heads to 0
        let sym = BinaryChainParams::new([[0.7, 0.3], [0.3, 0.7]], 0.5).unwrap();
        let c = low_snr_numeric_check(&sym, 8).unwrap();
        assert!(c.jet_value.abs() < 1e-11);
    }
}

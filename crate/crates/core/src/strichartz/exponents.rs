//! Exact exponent bookkeeping in `(1/q, 1/p)` coordinates.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Parses `"3"`, `"8/3"` or a finite decimal such as `"0.25"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::InvalidExponent(format!("cannot parse {s:?} as a rational"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(rat(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let w: i64 = if whole.is_empty() || whole == "-" { 0 } else { whole.parse().map_err(|_| bad())? };
        let den = 10i64.pow(frac.len() as u32);
        let f: i64 = frac.parse().map_err(|_| bad())?;
        let mag = rat(w.abs() * den + f, den);
        return Ok(if negative { -mag } else { mag });
    }
    s.parse::<i64>().map(int).map_err(|_| bad())
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Serde adapter writing rationals as strings like `"8/3"`.
pub mod rational_str {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Rational::from_integer(n)),
            Raw::Text(t) => parse_rational(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// Serde adapter for optional rationals.
pub mod rational_opt {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => super::rational_str::serialize(r, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::rational_str")] Rational);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// A point `(x, y) = (1/q, 1/p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Point {
    pub x: Rational,
    pub y: Rational,
}

impl Point {
    pub fn new(x: Rational, y: Rational) -> Self {
        Point { x, y }
    }

    /// The point `(1/q, 1/p)`.
    pub fn from_exponents(p: Rational, q: Rational) -> Self {
        Point { x: q.recip(), y: p.recip() }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

fn cross(o: Point, a: Point, b: Point) -> Rational {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p).is_zero()
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Counter-clockwise hull (monotone chain) without collinear points.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.cmp(&b.x).then(a.y.cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= Rational::zero() {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sutherland–Hodgman against the half-plane `a·x + b·y ≥ c`.
fn clip(poly: &[Point], a: Rational, b: Rational, c: Rational) -> Vec<Point> {
    let side = |p: &Point| a * p.x + b * p.y - c;
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        let cur = poly[i];
        let prev = poly[(i + n - 1) % n];
        let (sc, sp) = (side(&cur), side(&prev));
        if sc >= Rational::zero() {
            if sp < Rational::zero() {
                out.push(intersect(prev, cur, sp, sc));
            }
            out.push(cur);
        } else if sp >= Rational::zero() && n > 1 {
            out.push(intersect(prev, cur, sp, sc));
        }
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn intersect(p: Point, q: Point, sp: Rational, sq: Rational) -> Point {
    let t = sp / (sp - sq);
    Point { x: p.x + t * (q.x - p.x), y: p.y + t * (q.y - p.y) }
}

/// Verdict of [`region_membership`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
    /// On the closed segment `AB` in dimension two, which is removed.
    ExcludedAb,
}

impl Membership {
    pub fn is_member(self) -> bool {
        matches!(self, Membership::Inside | Membership::Boundary)
    }
}

/// The quadrilateral `ABCD` (convex hull of its corners) intersected with `[0,1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionAbcd {
    d: usize,
    sigma: Rational,
    corners: [Point; 4],
    polygon: Vec<Point>,
}

impl RegionAbcd {
    pub fn new(d: usize, sigma: Rational) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let di = d as i64;
        if sigma < Rational::zero() || sigma >= rat(di, 2) {
            return Err(Error::Exponents(format!("sigma = {sigma} must lie in [0, d/2) = [0, {})", rat(di, 2))));
        }
        let a = Point::new(Rational::zero(), (int(di) - sigma * 2) / 2);
        let b = Point::new((int(di) - sigma * 2) / di, Rational::zero());
        let c = Point::new(Rational::one(), Rational::zero());
        let dd = Point::new(rat(di - 2, di), Rational::one());
        let mut polygon = convex_hull(&[a, b, c, dd]);
        let (z, o) = (Rational::zero(), Rational::one());
        if polygon.len() >= 3 {
            polygon = clip(&polygon, o, z, z);
            polygon = clip(&polygon, -o, z, -o);
            polygon = clip(&polygon, z, o, z);
            polygon = clip(&polygon, z, -o, -o);
        } else {
            polygon = clip_segment(&polygon);
        }
        Ok(RegionAbcd { d, sigma, corners: [a, b, c, dd], polygon })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> Rational {
        self.sigma
    }

    /// `[A, B, C, D]` before clipping.
    pub fn corners(&self) -> [Point; 4] {
        self.corners
    }

    /// Vertices of the clipped region, counter-clockwise; two points when the region degenerates to a segment.
    pub fn vertices(&self) -> &[Point] {
        &self.polygon
    }
}

/// Clips a segment (or single point) to the unit square.
fn clip_segment(seg: &[Point]) -> Vec<Point> {
    let inside = |p: &Point| {
        p.x >= Rational::zero() && p.x <= Rational::one() && p.y >= Rational::zero() && p.y <= Rational::one()
    };
    match seg {
        [] => Vec::new(),
        [p] => if inside(p) { vec![*p] } else { Vec::new() },
        [p, q] => {
            // parametrize p + t (q - p) and intersect t-ranges of the four slabs
            let (mut lo, mut hi) = (Rational::zero(), Rational::one());
            for (a, b) in [(p.x, q.x), (p.y, q.y)] {
                let delta = b - a;
                if delta.is_zero() {
                    if a < Rational::zero() || a > Rational::one() {
                        return Vec::new();
                    }
                    continue;
                }
                let t0 = (Rational::zero() - a) / delta;
                let t1 = (Rational::one() - a) / delta;
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
            if lo > hi {
                return Vec::new();
            }
            let at = |t: Rational| Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y));
            let mut out = vec![at(lo), at(hi)];
            out.dedup();
            out
        }
        _ => unreachable!("segment has at most two points"),
    }
}

/// Membership of `pt` in `region`, with the closed segment `AB` removed when `d = 2`.
pub fn region_membership(pt: Point, region: &RegionAbcd) -> Membership {
    let [a, b, ..] = region.corners;
    if region.d == 2 && on_segment(pt, a, b) {
        return Membership::ExcludedAb;
    }
    let poly = &region.polygon;
    match poly.len() {
        0 => Membership::Outside,
        1 => if pt == poly[0] { Membership::Boundary } else { Membership::Outside },
        2 => if on_segment(pt, poly[0], poly[1]) { Membership::Boundary } else { Membership::Outside },
        n => {
            let mut on_edge = false;
            for i in 0..n {
                let c = cross(poly[i], poly[(i + 1) % n], pt);
                if c < Rational::zero() {
                    return Membership::Outside;
                }
                if c.is_zero() {
                    on_edge = true;
                }
            }
            if on_edge { Membership::Boundary } else { Membership::Inside }
        }
    }
}

fn check_finite_exponent(name: &str, v: Rational) -> Result<()> {
    if v < Rational::one() {
        return Err(Error::InvalidExponent(format!("{name} = {v} must be at least 1")));
    }
    Ok(())
}

/// Upper end `(d+1)/(d-1)` of the sharp deterministic range; `None` for `d = 1`.
pub fn sharp_q_limit(d: usize) -> Option<Rational> {
    (d >= 2).then(|| rat(d as i64 + 1, d as i64 - 1))
}

/// `2q/(q+1)` on `1 ≤ q ≤ (d+1)/(d-1)`.
pub fn deterministic_sharp_alpha(q: Rational, d: usize) -> Result<Rational> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if q < Rational::one() || sharp_q_limit(d).is_some_and(|lim| q > lim) {
        let range = match sharp_q_limit(d) {
            Some(lim) => format!("[1, {lim}]"),
            None => "[1, inf)".into(),
        };
        return Err(Error::Exponents(format!("q = {q} outside the sharp deterministic range {range} for d = {d}")));
    }
    Ok(q * 2 / (q + 1))
}

/// `min(p, q, 2)`.
pub fn strichartz_alpha(p: Rational, q: Rational) -> Rational {
    p.min(q).min(int(2))
}

/// Exponents of one randomized Strichartz estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTuple {
    pub d: usize,
    #[serde(with = "rational_str")]
    pub p: Rational,
    #[serde(with = "rational_str")]
    pub q: Rational,
    #[serde(with = "rational_str")]
    pub alpha: Rational,
    #[serde(with = "rational_str")]
    pub sigma: Rational,
    #[serde(with = "rational_opt", default)]
    pub q_hat: Option<Rational>,
    /// Smallest admissible moment order.
    #[serde(with = "rational_str")]
    pub r: Rational,
}

/// `2/p + d/q`.
pub fn scaling_sum(p: Rational, q: Rational, d: usize) -> Rational {
    p.recip() * 2 + q.recip() * d as i64
}

/// Exponents for singular-value randomization: `(1/q, 1/p)` in the region,
/// `2/p + d/q = d − σ`, `α = min(p,q,2)`, `r ≥ max(p,q)`.
pub fn singular_strichartz_exponents(p: Rational, q: Rational, sigma: Rational, d: usize) -> Result<ExponentTuple> {
    check_finite_exponent("p", p)?;
    check_finite_exponent("q", q)?;
    let region = RegionAbcd::new(d, sigma)?;
    let pt = Point::from_exponents(p, q);
    match region_membership(pt, &region) {
        Membership::Inside | Membership::Boundary => {}
        Membership::Outside => {
            return Err(Error::Exponents(format!("singular-randomization region: point {pt} lies outside ABCD")))
        }
        Membership::ExcludedAb => {
            return Err(Error::Exponents(format!(
                "singular-randomization region: point {pt} on excluded segment AB (d=2)"
            )))
        }
    }
    let lhs = scaling_sum(p, q, d);
    let rhs = int(d as i64) - sigma;
    if lhs != rhs {
        return Err(Error::Exponents(format!("scaling: 2/p + d/q = {lhs}, expected d - sigma = {rhs}")));
    }
    let alpha = strichartz_alpha(p, q);
    if let Ok(beta) = deterministic_sharp_alpha(q, d) {
        if alpha <= beta {
            return Err(Error::Exponents(format!("alpha = {alpha} does not exceed the sharp exponent {beta}")));
        }
    }
    Ok(ExponentTuple { d, p, q, alpha, sigma, q_hat: None, r: p.max(q) })
}

/// Exponents for full randomization: `2/p + d/q = d`, `p ≥ 2`,
/// `q̂ ≥ max(q, 2)`, `α = 2`, `r ≥ max(p, q̂)`.
pub fn full_strichartz_exponents(
    p: Rational,
    q: Rational,
    q_hat: Rational,
    sigma: Rational,
    d: usize,
) -> Result<ExponentTuple> {
    check_finite_exponent("q", q)?;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if sigma < Rational::zero() || sigma >= rat(d as i64, 2) {
        return Err(Error::Exponents(format!("sigma = {sigma} must lie in [0, d/2)")));
    }
    if p < int(2) {
        return Err(Error::Exponents(format!("full randomization needs p >= 2, got {p}")));
    }
    let lhs = scaling_sum(p, q, d);
    if lhs != int(d as i64) {
        return Err(Error::Exponents(format!("scaling: 2/p + d/q = {lhs}, expected d = {d}")));
    }
    if q_hat < q.max(int(2)) {
        return Err(Error::Exponents(format!("q_hat = {q_hat} must be at least max(q, 2) = {}", q.max(int(2)))));
    }
    Ok(ExponentTuple { d, p, q, alpha: int(2), sigma, q_hat: Some(q_hat), r: p.max(q_hat) })
}

/// Standard Strichartz pair with finite exponents: `2/p + d/q = d/2`, `p, q ∈ [2, ∞)`.
pub fn standard_admissible(p: Rational, q: Rational, d: usize) -> Result<()> {
    if p < int(2) || q < int(2) {
        return Err(Error::Exponents(format!("admissible pair needs p, q >= 2, got p = {p}, q = {q}")));
    }
    let lhs = scaling_sum(p, q, d);
    if lhs != rat(d as i64, 2) {
        return Err(Error::Exponents(format!("admissible pair: 2/p + d/q = {lhs}, expected d/2")));
    }
    Ok(())
}

/// Exponents for a Wiener-randomized function: admissible `(p,q)`, `q̂ ≥ q`, `r ≥ max(p, q̂)`.
pub fn function_randomization_exponents(p: Rational, q: Rational, q_hat: Rational, d: usize) -> Result<ExponentTuple> {
    standard_admissible(p, q, d)?;
    if q_hat < q {
        return Err(Error::Exponents(format!("q_hat = {q_hat} must be at least q = {q}")));
    }
    Ok(ExponentTuple {
        d,
        p,
        q,
        alpha: int(2),
        sigma: Rational::zero(),
        q_hat: Some(q_hat),
        r: p.max(q_hat),
    })
}

/// Conditions of the Sobolev orthonormal Strichartz estimate, each reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    /// `1/α ≥ 1/(dp) + 1/q`.
    pub schatten_bound: bool,
    /// `α < p`.
    pub strict_alpha: bool,
    /// `2/p + d/q = d − 2s`.
    pub scaling: bool,
    /// `0 < s < d/2`.
    pub s_in_range: bool,
}

impl Admissibility {
    /// The triple `(p, q, α)` is admissible.
    pub fn admissible(&self) -> bool {
        self.schatten_bound && self.strict_alpha
    }

    /// Every hypothesis of the estimate holds.
    pub fn estimate_applies(&self) -> bool {
        self.admissible() && self.scaling && self.s_in_range
    }
}

pub fn sobolev_admissible(p: Rational, q: Rational, alpha: Rational, s: Rational, d: usize) -> Admissibility {
    let di = d as i64;
    Admissibility {
        schatten_bound: alpha.recip() >= (p * di).recip() + q.recip(),
        strict_alpha: alpha < p,
        scaling: scaling_sum(p, q, d) == int(di) - s * 2,
        s_in_range: s > Rational::zero() && s < rat(di, 2),
    }
}

/// Time–space exponents `(μ, ν)` of the key trace estimate, `2/μ + d/ν = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyExponents {
    pub mu: Rational,
    /// `1/ν`; zero means `ν = ∞`.
    pub inv_nu: Rational,
}

impl KeyExponents {
    pub fn nu(&self) -> f64 {
        if self.inv_nu.is_zero() { f64::INFINITY } else { to_f64(self.inv_nu.recip()) }
    }
}

/// `μ ∈ [1, 4/3]` (d=1), `[1, 2)` (d=2), `[1, 2]` (d≥3), with `ν` from `2/μ + d/ν = 2`.
pub fn key_estimate_exponents(mu: Rational, d: usize) -> Result<KeyExponents> {
    let ok = match d {
        0 => false,
        1 => mu >= int(1) && mu <= rat(4, 3),
        2 => mu >= int(1) && mu < int(2),
        _ => mu >= int(1) && mu <= int(2),
    };
    if !ok {
        return Err(Error::Exponents(format!("mu = {mu} outside the trace-estimate range for d = {d}")));
    }
    let inv_nu = (int(2) - mu.recip() * 2) / d as i64;
    debug_assert!(!inv_nu.is_negative());
    Ok(KeyExponents { mu, inv_nu })
}

/// One point of the comparison scan: `q`, `α = min(p,q,2)` and `β = 2q/(q+1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaComparison {
    pub q: Rational,
    pub p: Rational,
    pub alpha: Rational,
    pub beta: Rational,
}

/// Compares `min(p,q,2)` with `2q/(q+1)` at `points` equispaced `q` in the open
/// interval `(1, (d+1)/(d-1))`, with `p` on the line `2/p + d/q = d`.
/// For `d = 1` the interval is cut at `q_cap`.
pub fn alpha_comparison_scan(d: usize, points: usize, q_cap: Rational) -> Result<Vec<AlphaComparison>> {
    if d == 0 || points == 0 {
        return Err(Error::InvalidArgument("need d >= 1 and at least one point".into()));
    }
    let hi = sharp_q_limit(d).unwrap_or(q_cap);
    let step = (hi - 1) / (points as i64 + 1);
    (1..=points as i64)
        .map(|k| {
            let q = int(1) + step * k;
            let p = (q * 2) / ((q - 1) * d as i64);
            Ok(AlphaComparison { q, p, alpha: strichartz_alpha(p, q), beta: deterministic_sharp_alpha(q, d)? })
        })
        .collect()
}

//! Reproducible random media: i.i.d. lattice obstacle fields, Poisson point
//! samples, and the expectation `E[max_k (Z_k - k)]` that decides whether a
//! lattice field can pin an interface.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::rng::{self, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediaError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("expectation diverges to -inf: {0}")]
    Divergent(String),
    #[error("support too wide for exact evaluation ({0} lattice points)")]
    SupportTooWide(u128),
    #[error("degenerate window: {0}")]
    DegenerateWindow(String),
    #[error("intensity must be positive and finite, got {0}")]
    InvalidIntensity(f64),
}

/// An integer or `-inf`. `NegInf` orders below every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExtInt {
    NegInf,
    Finite(i64),
}

impl ExtInt {
    pub fn finite(self) -> Option<i64> {
        match self {
            ExtInt::Finite(v) => Some(v),
            ExtInt::NegInf => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtInt::Finite(_))
    }

    /// `self - m`, with `-inf - m = -inf`.
    pub fn minus(self, m: i64) -> ExtInt {
        match self {
            ExtInt::Finite(v) => ExtInt::Finite(v - m),
            ExtInt::NegInf => ExtInt::NegInf,
        }
    }
}

impl fmt::Display for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtInt::Finite(v) => write!(f, "{v}"),
            ExtInt::NegInf => f.write_str("minus_inf"),
        }
    }
}

impl FromStr for ExtInt {
    type Err = MediaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "minus_inf" {
            return Ok(ExtInt::NegInf);
        }
        s.parse::<i64>()
            .map(ExtInt::Finite)
            .map_err(|_| MediaError::InvalidDistribution(format!("bad value token {s:?}")))
    }
}

/// Parse `"0.25"`, `"1/3"`, `"3"` or `"1e-3"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, MediaError> {
    let bad = || MediaError::InvalidDistribution(format!("bad probability {s:?}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits == "-" || digits == "+" || digits.is_empty() {
        return Err(bad());
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Law of a single lattice obstacle strength: finitely many integer atoms plus
/// an optional mass at `-inf`, bounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    /// Finite atoms, ascending by value, positive probabilities.
    atoms: Vec<(i64, BigRational)>,
    minus_infinity_mass: BigRational,
    upper_bound: i64,
    // Sampling table: cumulative probabilities over `[-inf, atoms...]`.
    cumulative: Vec<f64>,
    probs: Vec<f64>,
}

impl DistributionSpec {
    /// Build from exact atoms. Probabilities must sum to exactly one.
    /// `upper_bound` defaults to the largest finite atom.
    pub fn new(atoms: Vec<(ExtInt, BigRational)>, upper_bound: Option<i64>) -> Result<Self, MediaError> {
        let mut finite: Vec<(i64, BigRational)> = Vec::new();
        let mut minus_inf = BigRational::zero();
        let mut total = BigRational::zero();
        for (value, p) in atoms {
            if p.is_negative() {
                return Err(MediaError::InvalidDistribution(format!("negative probability for {value}")));
            }
            total += &p;
            match value {
                ExtInt::NegInf => minus_inf += p,
                ExtInt::Finite(v) => match finite.iter_mut().find(|(w, _)| *w == v) {
                    Some((_, q)) => *q += p,
                    None => finite.push((v, p)),
                },
            }
        }
        if total != BigRational::one() {
            return Err(MediaError::InvalidDistribution(format!(
                "probabilities sum to {total}, expected exactly 1"
            )));
        }
        finite.retain(|(_, p)| !p.is_zero());
        finite.sort_by_key(|(v, _)| *v);
        let Some(&(max_atom, _)) = finite.last() else {
            return Err(MediaError::InvalidDistribution("no finite value has positive probability".into()));
        };
        let upper_bound = upper_bound.unwrap_or(max_atom);
        if max_atom > upper_bound {
            return Err(MediaError::InvalidDistribution(format!(
                "atom {max_atom} exceeds declared upper bound {upper_bound}"
            )));
        }
        let mut probs = Vec::with_capacity(finite.len() + 1);
        probs.push(minus_inf.to_f64().unwrap_or(0.0));
        probs.extend(finite.iter().map(|(_, p)| p.to_f64().unwrap_or(0.0)));
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = BigRational::zero();
        cumulative.push(minus_inf.to_f64().unwrap_or(0.0));
        acc += &minus_inf;
        for (_, p) in &finite {
            acc += p;
            cumulative.push(acc.to_f64().unwrap_or(1.0));
        }
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self { atoms: finite, minus_infinity_mass: minus_inf, upper_bound, cumulative, probs })
    }

    /// Build from decimal (or `a/b`) strings, as read from a config file. The
    /// sum may be off by at most `1e-12`; the atoms are then renormalised exactly.
    pub fn from_strings<S: AsRef<str>>(pairs: &[(S, S)], upper_bound: Option<i64>) -> Result<Self, MediaError> {
        let mut atoms = Vec::with_capacity(pairs.len());
        let mut total = BigRational::zero();
        for (v, p) in pairs {
            let value: ExtInt = v.as_ref().parse()?;
            let prob = parse_rational(p.as_ref())?;
            total += &prob;
            atoms.push((value, prob));
        }
        let tol = BigRational::new(BigInt::one(), BigInt::from(1_000_000_000_000u64));
        if (&total - BigRational::one()).abs() > tol {
            return Err(MediaError::InvalidDistribution(format!(
                "probabilities sum to {:.15}, not within 1e-12 of 1",
                total.to_f64().unwrap_or(f64::NAN)
            )));
        }
        if total.is_zero() {
            return Err(MediaError::InvalidDistribution("empty distribution".into()));
        }
        let atoms = atoms.into_iter().map(|(v, p)| (v, p / &total)).collect();
        Self::new(atoms, upper_bound)
    }

    pub fn point_mass(value: i64) -> Self {
        Self::new(vec![(ExtInt::Finite(value), BigRational::one())], None).expect("valid point mass")
    }

    /// `hi` with probability `p`, `lo` otherwise. `p` is taken at its exact binary value.
    pub fn two_point(hi: i64, lo: ExtInt, p: f64) -> Result<Self, MediaError> {
        let p = BigRational::from_float(p)
            .filter(|p| !p.is_negative() && *p <= BigRational::one())
            .ok_or_else(|| MediaError::InvalidDistribution(format!("p = {p} is not a probability")))?;
        let q = BigRational::one() - &p;
        Self::new(vec![(ExtInt::Finite(hi), p), (lo, q)], None)
    }

    /// `+1` with probability `p`, `-1` otherwise.
    pub fn bernoulli_pm1(p: f64) -> Result<Self, MediaError> {
        Self::two_point(1, ExtInt::Finite(-1), p)
    }

    /// `+1` with exact probability `p` (`"0.3"`, `"3/10"`), `-1` otherwise.
    pub fn bernoulli_pm1_exact(p: &str) -> Result<Self, MediaError> {
        let p = parse_rational(p)?;
        if p.is_negative() || p > BigRational::one() {
            return Err(MediaError::InvalidDistribution(format!("p = {p} is not a probability")));
        }
        let q = BigRational::one() - &p;
        Self::new(vec![(ExtInt::Finite(1), p), (ExtInt::Finite(-1), q)], None)
    }

    pub fn atoms(&self) -> &[(i64, BigRational)] {
        &self.atoms
    }

    pub fn minus_infinity_mass(&self) -> &BigRational {
        &self.minus_infinity_mass
    }

    pub fn has_minus_infinity(&self) -> bool {
        !self.minus_infinity_mass.is_zero()
    }

    pub fn upper_bound(&self) -> i64 {
        self.upper_bound
    }

    /// Largest finite atom with positive mass.
    pub fn max_atom(&self) -> i64 {
        self.atoms.last().expect("non-empty").0
    }

    /// Smallest finite atom with positive mass.
    pub fn min_atom(&self) -> i64 {
        self.atoms[0].0
    }

    /// `P(Z <= t)` in floating point.
    pub fn cdf(&self, t: i64) -> f64 {
        let idx = self.atoms.partition_point(|(v, _)| *v <= t);
        self.cumulative[idx]
    }

    /// Exact `E[Z]` restricted to finite atoms, as `f64` (ignores `-inf`).
    pub fn finite_mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs[1..]).map(|((v, _), p)| *v as f64 * p).sum()
    }

    /// Inverse-CDF sample from a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn sample_with(&self, u: f64) -> ExtInt {
        let idx = self.cumulative.partition_point(|c| *c <= u);
        if idx == 0 {
            ExtInt::NegInf
        } else {
            ExtInt::Finite(self.atoms[(idx - 1).min(self.atoms.len() - 1)].0)
        }
    }

    /// Atoms as `(value, decimal probability)` strings.
    pub fn to_string_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.has_minus_infinity() {
            out.push(("minus_inf".to_string(), self.minus_infinity_mass.to_string()));
        }
        out.extend(self.atoms.iter().map(|(v, p)| (v.to_string(), p.to_string())));
        out
    }
}

/// Lattice obstacle field `f(i, j)`, generated lazily from a seed.
#[derive(Debug, Clone)]
pub struct SeededField {
    pub seed: u64,
    pub spec: DistributionSpec,
}

impl SeededField {
    pub fn new(seed: u64, spec: DistributionSpec) -> Self {
        Self { seed, spec }
    }

    /// Obstacle strength at column `i`, height `j`.
    #[inline]
    pub fn value(&self, i: i64, j: i64) -> ExtInt {
        site_value(self, i, j)
    }
}

/// Obstacle strength at site `(i, j)`; a pure function of `(seed, i, j, spec)`.
#[inline]
pub fn site_value(field: &SeededField, i: i64, j: i64) -> ExtInt {
    let bits = rng::hash_key(field.seed, streams::FIELD, i, j);
    field.spec.sample_with(rng::unit_f64(bits))
}

/// Axis-aligned rectangle in the continuum plane (half-open: `[min, max)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Closed containment.
    pub fn contains_closed(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x_max > self.x_min && self.y_max > self.y_min) || !self.area().is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub window: Rect,
    pub points: Vec<(f64, f64)>,
    pub intensity: f64,
}

/// Homogeneous Poisson points in `window`.
///
/// Points are generated per unit cell `[cx, cx+1) x [cy, cy+1)` from a key
/// `(seed, stream, cx, cy)`, then clipped to the window, so adjacent windows
/// tile consistently.
pub fn sample_poisson_points(window: Rect, intensity: f64, seed: u64, stream: u64) -> Result<PointSample, MediaError> {
    if window.is_degenerate() {
        return Err(MediaError::DegenerateWindow(format!("{window:?}")));
    }
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(MediaError::InvalidIntensity(intensity));
    }
    let cell_law = Poisson::new(intensity).map_err(|_| MediaError::InvalidIntensity(intensity))?;
    let stream_word = rng::mix64(stream ^ 0x5157_0000);
    let (cx0, cx1) = (window.x_min.floor() as i64, window.x_max.ceil() as i64);
    let (cy0, cy1) = (window.y_min.floor() as i64, window.y_max.ceil() as i64);
    let mut points = Vec::new();
    for cy in cy0..cy1 {
        for cx in cx0..cx1 {
            let mut rng = rng::keyed_rng(seed, stream_word, cx, cy);
            let count = cell_law.sample(&mut rng) as u64;
            for _ in 0..count {
                let x = cx as f64 + rng.random::<f64>();
                let y = cy as f64 + rng.random::<f64>();
                if window.contains(x, y) {
                    points.push((x, y));
                }
            }
        }
    }
    Ok(PointSample { window, points, intensity })
}

/// Value of `E[max_{0<=k<=depth} (Z_k - k)]` with a one-sided truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMax {
    pub value: f64,
    /// Upper bound on `E[M_inf] - E[M_depth]` (which is non-negative).
    pub error_bound: f64,
}

const MAX_EXACT_WORK: u128 = 400_000_000;

/// Exact `E[M_depth]`, `M_depth = max_{0<=k<=depth}(Z_k - k)`.
///
/// Uses `P(M_depth <= t) = prod_{k=0}^{depth} P(Z <= t + k)`. `M_depth` grows
/// with `depth`, so the returned value is a lower bound for the infinite-depth
/// limit, and `error_bound = E[(U - depth - 1 - M_depth)^+]` bounds the gap from
/// above (`U` the largest atom). With mass at `-inf` the truncated maximum is
/// `-inf` with positive probability and the call reports divergence.
pub fn mean_max_exact(spec: &DistributionSpec, depth: u32) -> Result<MeanMax, MediaError> {
    if spec.has_minus_infinity() {
        return Err(MediaError::Divergent(format!(
            "P(M_{depth} = -inf) = P(Z = -inf)^{} > 0; use mean_max_limit",
            depth + 1
        )));
    }
    let (lo, hi) = (spec.min_atom(), spec.max_atom());
    let width = (hi - lo) as u128;
    if width * (depth as u128 + 1) > MAX_EXACT_WORK {
        return Err(MediaError::SupportTooWide(width * (depth as u128 + 1)));
    }
    let cdf_max = |t: i64| -> f64 { (0..=depth as i64).map(|k| spec.cdf(t + k)).product() };
    let mut value = hi as f64;
    let mut error_bound = 0.0;
    let cutoff = hi - depth as i64 - 1;
    let mut prev = 0.0;
    for t in lo..hi {
        let c = cdf_max(t);
        value -= c;
        let mass = c - prev;
        if t < cutoff {
            error_bound += mass * (cutoff - t) as f64;
        }
        prev = c;
    }
    Ok(MeanMax { value, error_bound })
}

/// Exact `E[max_{k>=0}(Z_k - k)]`.
///
/// `P(M <= t) = prod_{s=t}^{U-1} P(Z <= s)` is a finite product for every
/// `t < U`; below the smallest finite atom each further factor equals
/// `P(Z = -inf)`, so the lower tail is a geometric series summed in closed form.
pub fn mean_max_limit(spec: &DistributionSpec) -> Result<f64, MediaError> {
    let (lo, hi) = (spec.min_atom(), spec.max_atom());
    let width = (hi - lo) as u128;
    if width > MAX_EXACT_WORK {
        return Err(MediaError::SupportTooWide(width));
    }
    let q = spec.minus_infinity_mass().to_f64().unwrap_or(0.0);
    let mut g = 1.0;
    let mut tail_sum = 0.0;
    for t in (lo..hi).rev() {
        g *= spec.cdf(t);
        tail_sum += g;
    }
    if q > 0.0 {
        if q >= 1.0 {
            return Err(MediaError::Divergent("all mass at -inf".into()));
        }
        tail_sum += g * q / (1.0 - q);
    }
    Ok(hi as f64 - tail_sum)
}

/// Monte-Carlo estimate of `E[M_depth]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_BLOCK: u64 = 4096;

/// One draw of `M_depth` for sample index `s`.
#[inline]
fn draw_max(spec: &DistributionSpec, seed: u64, s: u64, depth: u32) -> Option<i64> {
    let top = spec.max_atom();
    let mut best: Option<i64> = None;
    for k in 0..=depth as i64 {
        if let Some(b) = best {
            // Z_k - k <= top - k cannot beat the running maximum.
            if top - k <= b {
                break;
            }
        }
        let z = spec.sample_with(rng::unit_f64(rng::hash_key(seed, streams::MEAN_MAX_MC, s as i64, k)));
        if let ExtInt::Finite(z) = z {
            let cand = z - k;
            if best.is_none_or(|b| cand > b) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Monte-Carlo estimate of `E[M_depth]`. Samples are keyed by index, and the
/// sums are exact integers, so sequential and parallel runs agree bit for bit.
pub fn mean_max_mc(spec: &DistributionSpec, samples: u64, depth: u32, seed: u64, exec: Exec) -> McEstimate {
    let blocks = samples.div_ceil(MC_BLOCK) as usize;
    let partial = exec::map_indexed(blocks, exec, |b| {
        let start = b as u64 * MC_BLOCK;
        let end = (start + MC_BLOCK).min(samples);
        let (mut sum, mut sq, mut neg_inf) = (0i128, 0i128, false);
        for s in start..end {
            match draw_max(spec, seed, s, depth) {
                Some(m) => {
                    sum += m as i128;
                    sq += (m as i128) * (m as i128);
                }
                None => neg_inf = true,
            }
        }
        (sum, sq, neg_inf)
    });
    let (sum, sq, neg_inf) = partial
        .into_iter()
        .fold((0i128, 0i128, false), |(a, b, c), (x, y, z)| (a + x, b + y, c || z));
    if neg_inf {
        return McEstimate { estimate: f64::NEG_INFINITY, std_error: f64::INFINITY, samples };
    }
    if samples == 0 {
        return McEstimate { estimate: f64::NAN, std_error: f64::NAN, samples };
    }
    let n = samples as f64;
    let mean = sum as f64 / n;
    let std_error = if samples > 1 {
        // n * sum(x^2) - sum(x)^2 is exact in i128.
        let centred = (samples as i128) * sq - sum * sum;
        let var = centred as f64 / (n * (n - 1.0));
        (var.max(0.0) / n).sqrt()
    } else {
        f64::NAN
    };
    McEstimate { estimate: mean, std_error, samples }
}

/// Whether the lattice field pins the interface at force `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinningVerdict {
    pub satisfied: bool,
    /// Lower bound on `E[M] - F`.
    pub margin: f64,
}

/// `E[M] > F` tested through a certified lower bound on `E[M]`.
///
/// For finite-valued laws the lower bound is `E[M_depth]`; with mass at `-inf`
/// the closed-form limit is used instead.
pub fn pinning_condition(spec: &DistributionSpec, force: i64, depth: u32) -> Result<PinningVerdict, MediaError> {
    let lower = if spec.has_minus_infinity() {
        mean_max_limit(spec)?
    } else {
        mean_max_exact(spec, depth)?.value
    };
    let margin = lower - force as f64;
    Ok(PinningVerdict { satisfied: margin > 0.0, margin })
}

/// `3p - 1 - p^2`: the expectation for the `+-1` law with `P(+1) = p`.
pub fn bernoulli_mean_max(p: f64) -> f64 {
    3.0 * p - 1.0 - p * p
}

/// `(3 - sqrt 5) / 2`, where [`bernoulli_mean_max`] changes sign.
pub fn bernoulli_threshold() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn ext_int_order_and_parse() {
        assert!(ExtInt::NegInf < ExtInt::Finite(i64::MIN));
        assert_eq!("minus_inf".parse::<ExtInt>().unwrap(), ExtInt::NegInf);
        assert_eq!(" -3 ".parse::<ExtInt>().unwrap(), ExtInt::Finite(-3));
        assert!("inf".parse::<ExtInt>().is_err());
        assert_eq!(ExtInt::NegInf.minus(4), ExtInt::NegInf);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rational("1/3").unwrap(), rat(1, 3));
        assert_eq!(parse_rational("1e-3").unwrap(), rat(1, 1000));
        assert_eq!(parse_rational("2.5E1").unwrap(), rat(25, 1));
        assert_eq!(parse_rational(".5").unwrap(), rat(1, 2));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DistributionSpec::new(vec![(ExtInt::Finite(1), rat(1, 2))], None).is_err());
        assert!(DistributionSpec::new(vec![(ExtInt::NegInf, rat(1, 1))], None).is_err());
        assert!(DistributionSpec::new(vec![(ExtInt::Finite(3), rat(1, 1))], Some(2)).is_err());
        assert!(DistributionSpec::new(vec![(ExtInt::Finite(1), rat(3, 2)), (ExtInt::Finite(0), rat(-1, 2))], None).is_err());
        let s = DistributionSpec::new(
            vec![(ExtInt::Finite(1), rat(1, 3)), (ExtInt::Finite(1), rat(1, 3)), (ExtInt::NegInf, rat(1, 3))],
            Some(5),
        )
        .unwrap();
        assert_eq!(s.atoms().len(), 1);
        assert_eq!(s.upper_bound(), 5);
        assert!((s.cdf(0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.cdf(1), 1.0);
    }

    #[test]
    fn config_strings_tolerate_rounding() {
        let pairs = [("1", "0.333333333333"), ("0", "0.333333333333"), ("minus_inf", "0.333333333334")];
        let s = DistributionSpec::from_strings(&pairs, None).unwrap();
        assert!(s.has_minus_infinity());
        let pairs = [("1", "0.3333"), ("0", "0.3333")];
        assert!(DistributionSpec::from_strings(&pairs, None).is_err());
        let pairs = [("1", "1/3"), ("-1", "2/3")];
        let s = DistributionSpec::from_strings(&pairs, None).unwrap();
        assert_eq!(s.to_string_pairs()[1], ("1".to_string(), "1/3".to_string()));
    }

    #[test]
    fn point_mass_field() {
        let f = SeededField::new(9, DistributionSpec::point_mass(1));
        assert_eq!(site_value(&f, 5, -3), ExtInt::Finite(1));
    }

    #[test]
    fn field_is_deterministic() {
        let f = SeededField::new(42, DistributionSpec::bernoulli_pm1(0.5).unwrap());
        for i in -20..20 {
            assert_eq!(site_value(&f, i, 3 * i), site_value(&f, i, 3 * i));
        }
    }

    #[test]
    fn bernoulli_field_frequency() {
        let f = SeededField::new(2024, DistributionSpec::bernoulli_pm1(0.5).unwrap());
        let n = 100_000i64;
        let ups = (0..n).filter(|&s| site_value(&f, s % 317, s / 317) == ExtInt::Finite(1)).count();
        let frac = ups as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn minus_inf_sampling() {
        let s = DistributionSpec::two_point(2, ExtInt::NegInf, 0.75).unwrap();
        assert_eq!(s.sample_with(0.0), ExtInt::NegInf);
        assert_eq!(s.sample_with(0.2499), ExtInt::NegInf);
        assert_eq!(s.sample_with(0.25), ExtInt::Finite(2));
        assert_eq!(s.sample_with(0.999_999), ExtInt::Finite(2));
    }

    #[test]
    fn poisson_rejects_bad_input() {
        assert!(sample_poisson_points(Rect::new(0.0, 0.0, 0.0, 1.0), 1.0, 1, 1).is_err());
        assert!(sample_poisson_points(Rect::new(0.0, 1.0, 0.0, 1.0), 0.0, 1, 1).is_err());
        assert!(sample_poisson_points(Rect::new(0.0, 1.0, 0.0, 1.0), f64::NAN, 1, 1).is_err());
    }

    #[test]
    fn poisson_tiny_intensity_is_mostly_empty() {
        let w = Rect::new(0.0, 1.0, 0.0, 1.0);
        let empty = (0..10_000u64).filter(|s| sample_poisson_points(w, 1e-9, *s, 0).unwrap().points.is_empty()).count();
        assert!(empty >= 9990);
    }

    #[test]
    fn poisson_mean_count() {
        let w = Rect::new(0.0, 1.0, 0.0, 1.0);
        let total: usize = (0..10_000u64).map(|s| sample_poisson_points(w, 4.0, s, 7).unwrap().points.len()).sum();
        let mean = total as f64 / 10_000.0;
        assert!((mean - 4.0).abs() <= 3.0 * 2.0 / 100.0, "{mean}");
    }

    #[test]
    fn poisson_determinism_and_tiling() {
        let a = sample_poisson_points(Rect::new(-2.5, 1.5, 0.0, 3.0), 3.0, 5, 1).unwrap();
        let b = sample_poisson_points(Rect::new(-2.5, 1.5, 0.0, 3.0), 3.0, 5, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|&(x, y)| a.window.contains(x, y)));
        let left = sample_poisson_points(Rect::new(-2.5, 0.3, 0.0, 3.0), 3.0, 5, 1).unwrap();
        let right = sample_poisson_points(Rect::new(0.3, 1.5, 0.0, 3.0), 3.0, 5, 1).unwrap();
        let mut union: Vec<_> = left.points.iter().chain(&right.points).copied().collect();
        let mut whole = a.points.clone();
        let key = |p: &(f64, f64)| (p.0.to_bits(), p.1.to_bits());
        union.sort_by_key(key);
        whole.sort_by_key(key);
        assert_eq!(union, whole);
        let other = sample_poisson_points(Rect::new(-2.5, 1.5, 0.0, 3.0), 3.0, 5, 2).unwrap();
        assert_ne!(a.points, other.points);
    }

    #[test]
    fn mean_max_point_mass() {
        for depth in [1, 5, 64] {
            let m = mean_max_exact(&DistributionSpec::point_mass(3), depth).unwrap();
            assert_eq!(m.value, 3.0);
            assert_eq!(m.error_bound, 0.0);
        }
        assert_eq!(mean_max_limit(&DistributionSpec::point_mass(-2)).unwrap(), -2.0);
    }

    #[test]
    fn mean_max_bernoulli_closed_form() {
        for p in [0.1, 0.2, 0.3819, 0.5, 0.75, 0.99] {
            let s = DistributionSpec::bernoulli_pm1(p).unwrap();
            let m = mean_max_exact(&s, 64).unwrap();
            assert!((m.value - bernoulli_mean_max(p)).abs() < 1e-14, "p={p}");
            assert_eq!(m.error_bound, 0.0);
            assert!((mean_max_limit(&s).unwrap() - bernoulli_mean_max(p)).abs() < 1e-14);
        }
        let half = mean_max_exact(&DistributionSpec::bernoulli_pm1(0.5).unwrap(), 64).unwrap();
        assert!((half.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mean_max_sign_flip_at_threshold() {
        let t = bernoulli_threshold();
        assert!((t - 0.381_966_011_250_105_1).abs() < 1e-15);
        for eps in [1e-3, 1e-6] {
            let below = mean_max_exact(&DistributionSpec::bernoulli_pm1(t - eps).unwrap(), 64).unwrap();
            let above = mean_max_exact(&DistributionSpec::bernoulli_pm1(t + eps).unwrap(), 64).unwrap();
            assert!(below.value < 0.0 && above.value > 0.0);
        }
    }

    #[test]
    fn mean_max_depth_zero_gap_is_bounded() {
        let s = DistributionSpec::bernoulli_pm1(0.5).unwrap();
        let m0 = mean_max_exact(&s, 0).unwrap();
        assert_eq!(m0.value, 0.0);
        let exact = bernoulli_mean_max(0.5);
        assert!(exact - m0.value <= m0.error_bound + 1e-15);
        assert!(m0.error_bound > 0.0);
    }

    #[test]
    fn minus_inf_truncation_diverges_but_limit_is_finite() {
        let s = DistributionSpec::two_point(1, ExtInt::NegInf, 0.5).unwrap();
        assert!(matches!(mean_max_exact(&s, 10), Err(MediaError::Divergent(_))));
        // T = first index with Z_T = 1 is geometric: E[M] = E[1 - T] = 1 - (1-p)/p.
        assert!((mean_max_limit(&s).unwrap() - 0.0).abs() < 1e-15);
        let v = pinning_condition(&s, -1, 64).unwrap();
        assert!(v.satisfied && (v.margin - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mc_degenerate_and_bernoulli() {
        let z = mean_max_mc(&DistributionSpec::point_mass(0), 1000, 64, 1, Exec::Parallel);
        assert_eq!((z.estimate, z.std_error), (0.0, 0.0));
        for (p, expect) in [(0.5, 0.25), (0.2, -0.44)] {
            let s = DistributionSpec::bernoulli_pm1(p).unwrap();
            let e = mean_max_mc(&s, 100_000, 64, 77, Exec::Parallel);
            assert!((e.estimate - expect).abs() <= 3.0 * e.std_error, "p={p}: {e:?}");
        }
    }

    #[test]
    fn mc_modes_agree() {
        let s = DistributionSpec::bernoulli_pm1(0.4).unwrap();
        let a = mean_max_mc(&s, 20_000, 16, 3, Exec::Sequential);
        let b = mean_max_mc(&s, 20_000, 16, 3, Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn mc_with_minus_inf_reports_neg_infinity() {
        let s = DistributionSpec::two_point(1, ExtInt::NegInf, 0.5).unwrap();
        let e = mean_max_mc(&s, 1000, 2, 3, Exec::Sequential);
        assert_eq!(e.estimate, f64::NEG_INFINITY);
    }

    #[test]
    fn pinning_condition_examples() {
        let v = pinning_condition(&DistributionSpec::point_mass(2), 1, 64).unwrap();
        assert!(v.satisfied && v.margin == 1.0);
        let s = DistributionSpec::bernoulli_pm1(0.5).unwrap();
        let v = pinning_condition(&s, 0, 64).unwrap();
        assert!(v.satisfied && (v.margin - 0.25).abs() < 1e-12);
        assert!(!pinning_condition(&s, 1, 64).unwrap().satisfied);
    }
}

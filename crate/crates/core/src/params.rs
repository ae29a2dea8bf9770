//! Structural parameters of a sliding filter and the leading-term space
//! bounds for the `(n, m, ε)` problem.
//!
//! Everything here is a pure function of `(n, m, ε, u)`. The filter, the
//! harness and the CLI all derive their geometry from [`FilterParams`].

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest universe supported: elements are `u64`.
pub const MAX_UNIVERSE: u128 = 1 << 64;

/// Slackness: how many elements before the window may be answered freely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slack {
    Finite(u64),
    Infinite,
}

impl Slack {
    pub fn finite(self) -> Option<u64> {
        match self {
            Slack::Finite(m) => Some(m),
            Slack::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Slack::Infinite)
    }
}

impl fmt::Display for Slack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slack::Finite(m) => write!(f, "{m}"),
            Slack::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Slack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(Slack::Infinite);
        }
        s.parse::<u64>()
            .map(Slack::Finite)
            .map_err(|e| Error::InvalidParams(format!("slack {s:?}: {e}")))
    }
}

impl Serialize for Slack {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Slack::Finite(m) => serializer.serialize_u64(*m),
            Slack::Infinite => serializer.serialize_str("inf"),
        }
    }
}

/// Derived geometry of a sliding filter.
///
/// * `c` generations (plus the current one) cover the window.
/// * `g = ⌈n/c⌉` elements per generation.
/// * `n′ = n + g` fingerprints are live at once (`(c + 1)·g` when `g` does
///   not divide `n`, see [`FilterParams::live_capacity`]).
/// * fingerprints live in `[0, R)` with `R = ⌈(c + 1)·g/ε⌉ ≥ n′/ε`.
/// * generation labels cycle modulo `G = 2c + 3` in the deamortized filter,
///   and take `s = ⌈log₂ G⌉` bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FilterParams {
    n: u64,
    m: Slack,
    epsilon: f64,
    #[serde(serialize_with = "ser_u128")]
    u: u128,
    c: u64,
    g: u64,
    n_prime: u64,
    live_capacity: u64,
    #[serde(serialize_with = "ser_u128")]
    fp_range: u128,
    gen_modulus: u64,
    tag_bits: u32,
}

fn ser_u128<S: Serializer>(v: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    match u64::try_from(*v) {
        Ok(v) => s.serialize_u64(v),
        Err(_) => s.serialize_str(&v.to_string()),
    }
}

impl FilterParams {
    /// Derives the filter geometry.
    ///
    /// `c = max(⌈log₂(1/ε)⌉, ⌈n/m⌉)` clamped to `[1, n]`, then raised further
    /// if needed so that an element never stays live past `n + m` arrivals:
    /// `(c + 1)·g − 1 ≤ n + m`.
    pub fn derive(n: u64, m: Slack, epsilon: f64, u: u128) -> Result<Self> {
        check_common(n, m, epsilon)?;
        if !(2..=MAX_UNIVERSE).contains(&u) {
            return Err(Error::InvalidParams(format!(
                "universe size {u} must lie in [2, 2^64]"
            )));
        }
        if (n as f64) >= epsilon * (u as f64) {
            return Err(Error::InvalidParams(format!(
                "window n={n} must be smaller than epsilon*u={}",
                epsilon * (u as f64)
            )));
        }

        let log_term = (1.0 / epsilon).log2().ceil().max(1.0) as u64;
        let slack_term = match m {
            Slack::Finite(m) => n.div_ceil(m),
            Slack::Infinite => 1,
        };
        let mut c = log_term.max(slack_term).clamp(1, n);
        let mut g = n.div_ceil(c);
        if let Slack::Finite(m) = m {
            let limit = u128::from(n) + u128::from(m);
            while c < n && (u128::from(c) + 1) * u128::from(g) - 1 > limit {
                c += 1;
                g = n.div_ceil(c);
            }
        }

        let n_prime = n + g;
        let live_capacity = (c + 1) * g;
        let fp_range = (live_capacity as f64 / epsilon).ceil() as u128;
        if fp_range > MAX_UNIVERSE {
            return Err(Error::InvalidParams(format!(
                "fingerprint range {fp_range} exceeds 2^64"
            )));
        }
        let gen_modulus = 2 * c + 3;

        Ok(FilterParams {
            n,
            m,
            epsilon,
            u,
            c,
            g,
            n_prime,
            live_capacity,
            fp_range,
            gen_modulus,
            tag_bits: ceil_log2(u128::from(gen_modulus)),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m(&self) -> Slack {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn u(&self) -> u128 {
        self.u
    }

    pub fn c(&self) -> u64 {
        self.c
    }

    /// Generation size.
    pub fn g(&self) -> u64 {
        self.g
    }

    pub fn n_prime(&self) -> u64 {
        self.n_prime
    }

    /// Most fingerprints that can be live at once: `c + 1` generations of
    /// `g`. Equal to `n′` when `g` divides `n`, and at most `c − 1` above it
    /// otherwise.
    pub fn live_capacity(&self) -> u64 {
        self.live_capacity
    }

    pub fn fp_range(&self) -> u128 {
        self.fp_range
    }

    pub fn gen_modulus(&self) -> u64 {
        self.gen_modulus
    }

    pub fn tag_bits(&self) -> u32 {
        self.tag_bits
    }
}

/// `⌈log₂ x⌉`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

fn check_common(n: u64, m: Slack, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon {epsilon} must lie strictly between 0 and 1"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParams("window n must be positive".into()));
    }
    if m == Slack::Finite(0) {
        return Err(Error::InvalidParams(
            "slack m must be positive or inf".into(),
        ));
    }
    Ok(())
}

fn leading_terms(n: u64, m: Slack, epsilon: f64) -> Result<f64> {
    check_common(n, m, epsilon)?;
    let n_f = n as f64;
    let log_inv_eps = (1.0 / epsilon).log2();
    let slack_term = match m {
        Slack::Finite(m) => (n_f / m as f64).log2(),
        Slack::Infinite => 0.0,
    };
    let extra = slack_term.max(log_inv_eps.log2()).max(0.0);
    Ok(n_f * log_inv_eps + n_f * extra)
}

/// Leading terms of the achievable space:
/// `n·log₂(1/ε) + n·max(log₂(n/m), log₂log₂(1/ε))`, max-term floored at 0.
pub fn upper_bound_bits(n: u64, m: Slack, epsilon: f64) -> Result<f64> {
    leading_terms(n, m, epsilon)
}

/// Leading terms of the space lower bound. They coincide with
/// [`upper_bound_bits`]; the two differ only in lower-order terms that are
/// not computed here.
pub fn lower_bound_bits(n: u64, m: Slack, epsilon: f64) -> Result<f64> {
    leading_terms(n, m, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const U64: u128 = 1 << 64;

    #[test]
    fn derive_balanced() {
        let p = FilterParams::derive(1000, Slack::Finite(1000), 2f64.powi(-10), U64).unwrap();
        assert_eq!(p.c(), 10);
        assert_eq!(p.g(), 100);
        assert_eq!(p.n_prime(), 1100);
        assert_eq!(p.fp_range(), 1_126_400);
        assert_eq!(p.gen_modulus(), 23);
        assert_eq!(p.tag_bits(), 5);
    }

    #[test]
    fn derive_small_slack() {
        let p = FilterParams::derive(1000, Slack::Finite(10), 2f64.powi(-4), U64).unwrap();
        assert_eq!(p.c(), 100);
        assert_eq!(p.g(), 10);
        assert_eq!(p.n_prime(), 1010);
        assert_eq!(p.fp_range(), 16_160);
        assert_eq!(p.gen_modulus(), 203);
        assert_eq!(p.tag_bits(), 8);
    }

    #[test]
    fn derive_single_generation() {
        let p = FilterParams::derive(1000, Slack::Infinite, 0.5, U64).unwrap();
        assert_eq!(p.c(), 1);
        assert_eq!(p.g(), 1000);
        assert_eq!(p.n_prime(), 2000);
        assert_eq!(p.gen_modulus(), 5);
    }

    #[test]
    fn derive_rounding_raises_c() {
        // c=6, g=167 would keep elements for 7*167-1 = 1168 > 1167 arrivals.
        let p = FilterParams::derive(1000, Slack::Finite(167), 2f64.powi(-6), U64).unwrap();
        assert!(p.c() > 6);
        assert!((p.c() + 1) * p.g() - 1 <= 1167);
    }

    #[test]
    fn derive_rejects_bad_input() {
        for (n, m, eps, u) in [
            (0, Slack::Infinite, 0.1, U64),
            (10, Slack::Finite(0), 0.1, U64),
            (10, Slack::Infinite, 0.0, U64),
            (10, Slack::Infinite, 1.0, U64),
            (10, Slack::Infinite, f64::NAN, U64),
            (10, Slack::Infinite, 0.1, 100),
            (10, Slack::Infinite, 0.1, U64 + 1),
        ] {
            assert!(
                matches!(
                    FilterParams::derive(n, m, eps, u),
                    Err(Error::InvalidParams(_))
                ),
                "{n} {m} {eps} {u}"
            );
        }
    }

    #[test]
    fn bounds_examples() {
        let ub = upper_bound_bits(1024, Slack::Infinite, 2f64.powi(-8)).unwrap();
        assert_eq!(ub, 11_264.0);
        let ub = upper_bound_bits(1024, Slack::Finite(1), 0.5).unwrap();
        assert_eq!(ub, 11_264.0);
        let ub = upper_bound_bits(100, Slack::Finite(100), 2f64.powi(-16)).unwrap();
        assert_eq!(ub, 2000.0);

        let lb = lower_bound_bits(1024, Slack::Infinite, 2f64.powi(-8)).unwrap();
        assert_eq!(lb, 11_264.0);
        let lb = lower_bound_bits(1024, Slack::Finite(1024), 2f64.powi(-8)).unwrap();
        assert_eq!(lb, 11_264.0);
        let lb = lower_bound_bits(2048, Slack::Finite(2), 2f64.powi(-4)).unwrap();
        assert_eq!(lb, 28_672.0);
    }

    #[test]
    fn slack_parse() {
        assert_eq!("inf".parse::<Slack>().unwrap(), Slack::Infinite);
        assert_eq!("12".parse::<Slack>().unwrap(), Slack::Finite(12));
        assert!("x".parse::<Slack>().is_err());
        assert_eq!(serde_json::to_string(&Slack::Infinite).unwrap(), "\"inf\"");
    }

    fn slack() -> impl Strategy<Value = Slack> {
        prop_oneof![
            (1u64..100_000).prop_map(Slack::Finite),
            Just(Slack::Infinite)
        ]
    }

    proptest! {
        #[test]
        fn derive_invariants(n in 1u64..200_000, m in slack(), k in 1i32..30) {
            let eps = 2f64.powi(-k);
            let p = FilterParams::derive(n, m, eps, U64).unwrap();
            prop_assert!(p.c() >= 1 && p.c() <= n);
            prop_assert!(p.g() * p.c() >= n);
            prop_assert_eq!(p.n_prime(), n + p.g());
            prop_assert!(p.live_capacity() >= p.n_prime());
            prop_assert!(p.live_capacity() < p.n_prime() + p.c());
            prop_assert!(p.fp_range() as f64 >= p.n_prime() as f64 / eps);
            prop_assert_eq!(p.gen_modulus(), 2 * p.c() + 3);
            prop_assert!(1u128 << p.tag_bits() >= u128::from(p.gen_modulus()));
            if let Slack::Finite(m) = m {
                prop_assert!(p.g() <= m);
                prop_assert!((p.c() + 1) * p.g() - 1 <= n + m);
            }
            prop_assert_eq!(FilterParams::derive(n, m, eps, U64).unwrap(), p);
        }

        #[test]
        fn lower_bound_monotone(n in 1u64..10_000, m in 1u64..10_000, k in 1i32..20) {
            let eps = 2f64.powi(-k);
            let lb = lower_bound_bits(n, Slack::Finite(m), eps).unwrap();
            prop_assert!(upper_bound_bits(n, Slack::Finite(m), eps).unwrap() >= lb);
            prop_assert!(lower_bound_bits(n, Slack::Finite(m), eps / 2.0).unwrap() >= lb);
            prop_assert!(lower_bound_bits(n, Slack::Finite(m + 1), eps).unwrap() <= lb);
            prop_assert!(lower_bound_bits(n, Slack::Infinite, eps).unwrap() <= lb);
            prop_assert!(lower_bound_bits(n + 1, Slack::Finite(m), eps).unwrap() >= lb);
        }

        #[test]
        fn large_slack_matches_infinite(n in 1u64..100_000, k in 1i32..30, extra in 0u64..1000) {
            let eps = 2f64.powi(-k);
            let m = (n as f64 / f64::from(k)).ceil() as u64 + extra;
            prop_assert_eq!(
                lower_bound_bits(n, Slack::Finite(m.max(1)), eps).unwrap(),
                lower_bound_bits(n, Slack::Infinite, eps).unwrap()
            );
        }
    }
}

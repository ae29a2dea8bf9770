//! Carter–Wegman style universal hashing from the element universe onto
//! fingerprints: `h_a(x) = ((a·x mod p) mod R)`.
//!
//! `p` is the smallest prime `≥ max(u, R)` and `a ∈ [1, p)` is drawn from a
//! ChaCha8 stream seeded with the caller's seed, so `(u, R, seed)` pins the
//! function down on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Products are reduced through 32-bit Horner steps, which stays inside
/// `u128` for any modulus below this.
const MAX_MODULUS: u128 = 1 << 94;

/// Witnesses making Miller–Rabin deterministic below 3.3·10²⁴.
const WITNESSES: [u128; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
const DETERMINISTIC_LIMIT: u128 = 3_317_044_064_679_887_385_961_981;

/// `a·b mod p` for `p < 2^94`.
pub fn mul_mod(a: u128, b: u128, p: u128) -> u128 {
    debug_assert!(p > 0 && p < MAX_MODULUS);
    let (a, b) = (a % p, b % p);
    if p <= u128::from(u64::MAX) {
        return (a * b) % p;
    }
    let mut acc = 0u128;
    for shift in [96u32, 64, 32, 0] {
        let chunk = (b >> shift) & 0xffff_ffff;
        acc = ((acc << 32) % p + a * chunk) % p;
    }
    acc
}

fn pow_mod(mut base: u128, mut exp: u128, p: u128) -> u128 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin primality test, valid for `n < 3.3·10²⁴`
/// (in particular for everything up to a little past 2^64).
pub fn is_prime(n: u128) -> bool {
    assert!(
        n < DETERMINISTIC_LIMIT,
        "primality witness set too small for {n}"
    );
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &w in &WITNESSES {
        let mut x = pow_mod(w, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `≥ n`.
pub fn next_prime(n: u128) -> u128 {
    let mut candidate = n.max(2);
    while !is_prime(candidate) {
        candidate += 1;
    }
    candidate
}

/// SplitMix64 finalizer; used to derive independent seeds per component.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, domain: u64) -> u64 {
    mix64(seed ^ mix64(domain.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// One member `h_a` of the universal family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct UniversalHash {
    #[serde(serialize_with = "ser_u128")]
    p: u128,
    #[serde(serialize_with = "ser_u128")]
    a: u128,
    #[serde(serialize_with = "ser_u128")]
    range: u128,
}

fn ser_u128<S: serde::Serializer>(v: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl UniversalHash {
    /// Draws a function mapping `[0, u)` onto `[0, range)`.
    ///
    /// Panics unless `2 ≤ u ≤ 2^64` and `1 ≤ range ≤ 2^64`.
    pub fn new(u: u128, range: u128, seed: u64) -> Self {
        assert!(
            (2..=1u128 << 64).contains(&u),
            "universe size {u} out of range"
        );
        assert!(
            (1..=1u128 << 64).contains(&range),
            "fingerprint range {range} out of range"
        );
        let p = next_prime(u.max(range));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.gen_range(1..p);
        UniversalHash { p, a, range }
    }

    /// Rebuilds a function from its description, validating it.
    pub fn from_parts(p: u128, a: u128, range: u128) -> Result<Self> {
        if p >= MAX_MODULUS || !is_prime(p) {
            return Err(Error::InvalidParams(format!(
                "modulus {p} is not a usable prime"
            )));
        }
        if a == 0 || a >= p {
            return Err(Error::InvalidParams(format!(
                "multiplier {a} not in [1, {p})"
            )));
        }
        if range == 0 || range > p || range > 1u128 << 64 {
            return Err(Error::InvalidParams(format!(
                "range {range} not in [1, {p}]"
            )));
        }
        Ok(UniversalHash { p, a, range })
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        (mul_mod(self.a, u128::from(x), self.p) % self.range) as u64
    }

    pub fn p(&self) -> u128 {
        self.p
    }

    pub fn a(&self) -> u128 {
        self.a
    }

    pub fn range(&self) -> u128 {
        self.range
    }

    /// Bits needed to store `p` and `a`.
    pub fn description_bits(&self) -> u64 {
        u64::from((128 - self.p.leading_zeros()) + (128 - self.a.leading_zeros()))
    }
}

/// Exact fraction of multipliers `a ∈ [1, p)` for which `h_a(x) = h_a(y)`.
///
/// Enumerates every `a`, so it is meant for small `p`.
pub fn collision_prob_check(p: u128, range: u128, x: u64, y: u64) -> f64 {
    assert!(x != y, "collision check needs distinct elements");
    let collisions = (1..p)
        .filter(|&a| {
            let h = UniversalHash { p, a, range };
            h.eval(x) == h.eval(y)
        })
        .count();
    collisions as f64 / (p - 1) as f64
}

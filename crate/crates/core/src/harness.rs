//! Measurement drivers: false-positive rate, exhaustive false-positive
//! census, space against the bounds, label-reuse stress and step costs.
//!
//! Every run is a pure function of its arguments, seed included. Reports
//! serialize to JSON with a `schema` tag.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{CostReport, Mode, SlidingFilter, SpaceReport};
use crate::hashing::{derive_seed, mix64};
use crate::oracle::{Classification, WindowOracle};
use crate::params::{lower_bound_bits, upper_bound_bits, FilterParams, Slack};

/// Universe used when the caller does not pick one.
pub const FULL_UNIVERSE: u128 = 1 << 64;

/// Probing happens at this many evenly spaced points of the stream.
pub const FPR_CHECKPOINTS: u64 = 10;

/// `ε·T` below this flags an FPR run as underpowered.
pub const MIN_EXPECTED_POSITIVES: f64 = 20.0;

const DOMAIN_STREAM: u64 = 0x71;
const DOMAIN_PROBE: u64 = 0x72;

/// Shapes of input streams used to exercise the filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StreamPattern {
    /// Never repeats.
    Distinct,
    /// Uniform draws from `[0, alphabet)`; duplicate-heavy when the alphabet
    /// is close to the window.
    Uniform { alphabet: u64 },
    /// The same element forever.
    AllSame,
    /// `0, 1, …, period − 1, 0, 1, …`.
    RoundRobin { period: u64 },
    /// Fresh elements, except that every `period` steps the element that is
    /// exactly `lag` positions old is repeated `burst` times.
    EdgeBursts { period: u64, lag: u64, burst: u64 },
}

/// Deterministic element stream for a pattern.
pub struct Stream {
    pattern: StreamPattern,
    rng: ChaCha8Rng,
    key: u64,
    t: u64,
    recent: std::collections::VecDeque<u64>,
    pending_burst: u64,
    burst_value: u64,
}

impl Stream {
    pub fn new(pattern: StreamPattern, seed: u64) -> Self {
        let key = derive_seed(seed, DOMAIN_STREAM);
        Stream {
            pattern,
            rng: ChaCha8Rng::seed_from_u64(key),
            key,
            t: 0,
            recent: std::collections::VecDeque::new(),
            pending_burst: 0,
            burst_value: 0,
        }
    }

    fn fresh(&mut self) -> u64 {
        // distinct for distinct t; never collides with probe_element
        let x = mix64(self.key.wrapping_add(self.t) & (u64::MAX >> 1));
        self.t += 1;
        x
    }
}

impl Iterator for Stream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let x = match self.pattern {
            StreamPattern::Distinct => self.fresh(),
            StreamPattern::Uniform { alphabet } => self.rng.gen_range(0..alphabet.max(1)),
            StreamPattern::AllSame => 42,
            StreamPattern::RoundRobin { period } => {
                let x = self.t % period.max(1);
                self.t += 1;
                x
            }
            StreamPattern::EdgeBursts { period, lag, burst } => {
                if self.pending_burst > 0 {
                    self.pending_burst -= 1;
                    self.burst_value
                } else {
                    let step = self.t;
                    let lag = lag as usize;
                    if step > 0 && step.is_multiple_of(period.max(1)) && self.recent.len() > lag {
                        self.burst_value = self.recent[self.recent.len() - 1 - lag];
                        self.pending_burst = burst.saturating_sub(1);
                        self.t += 1;
                        self.burst_value
                    } else {
                        self.fresh()
                    }
                }
            }
        };
        if let StreamPattern::EdgeBursts { lag, .. } = self.pattern {
            self.recent.push_back(x);
            if self.recent.len() > lag as usize + 1 {
                self.recent.pop_front();
            }
        }
        Some(x)
    }
}

/// An element that no [`Stream`] ever produces for `Distinct`/`EdgeBursts`
/// patterns built with the same seed: the mixing input has the top bit set.
fn probe_element(key: u64, j: u64) -> u64 {
    mix64(key.wrapping_add(j) | 1 << 63)
}

#[derive(Clone, Debug, Serialize)]
pub struct FprReport {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub hash_p: String,
    pub hash_a: String,
    pub stream_len: u64,
    pub trials: u64,
    pub yes_count: u64,
    pub estimate: f64,
    pub bound: f64,
    pub three_sigma: f64,
    pub pass: bool,
    pub underpowered: bool,
}

/// Estimates the rate of yes answers for elements never inserted, probing
/// `trials / 10` fresh elements at each of 10 checkpoints past `n + m`.
pub fn measure_fpr(
    n: u64,
    m: Slack,
    epsilon: f64,
    stream_len: u64,
    trials: u64,
    seed: u64,
) -> Result<FprReport> {
    let params = FilterParams::derive(n, m, epsilon, FULL_UNIVERSE)?;
    let start = n + m.finite().unwrap_or(0);
    if stream_len < start {
        return Err(Error::InvalidParams(format!(
            "stream length {stream_len} shorter than n + m = {start}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let mut filter = SlidingFilter::new(params, seed);
    let mut stream = Stream::new(StreamPattern::Distinct, seed);
    let probe_key = derive_seed(seed, DOMAIN_PROBE);

    let mut inserted = 0;
    let mut probed = 0;
    let mut yes_count = 0;
    for k in 1..=FPR_CHECKPOINTS {
        let checkpoint = start + (stream_len - start) * k / FPR_CHECKPOINTS;
        while inserted < checkpoint {
            filter.insert(stream.next().expect("infinite stream"))?;
            inserted += 1;
        }
        let quota = trials * k / FPR_CHECKPOINTS - probed;
        for _ in 0..quota {
            yes_count += u64::from(filter.query(probe_element(probe_key, probed)));
            probed += 1;
        }
    }

    let estimate = yes_count as f64 / trials as f64;
    let three_sigma = 3.0 * (epsilon * (1.0 - epsilon) / trials as f64).sqrt();
    Ok(FprReport {
        schema: "slbf.fpr/1",
        params,
        seed,
        hash_p: filter.hash().p().to_string(),
        hash_a: filter.hash().a().to_string(),
        stream_len,
        trials,
        yes_count,
        estimate,
        bound: epsilon,
        three_sigma,
        pass: estimate <= epsilon + three_sigma,
        underpowered: epsilon * (trials as f64) < MIN_EXPECTED_POSITIVES,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FpCensus {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub u: u64,
    pub stream_len: u64,
    pub checkpoints: u64,
    /// Live fingerprints at the worst checkpoint.
    pub window_snapshot_size: u64,
    /// Largest false-positive count seen at any checkpoint.
    pub false_positive_count: u64,
    /// `ε·u + (c + 1)·g`; the latter equals `n′` whenever `g` divides `n`.
    pub bound: f64,
    pub violations: u64,
    pub pass: bool,
}

/// Sweeps the whole universe at every generation boundary and every
/// mid-generation point, counting yes answers for elements outside the last
/// `n + m`. `u` must be prime and at least the fingerprint range, so the
/// hash modulus is `u` itself.
pub fn census_false_positives(
    n: u64,
    m: Slack,
    epsilon: f64,
    u: u64,
    stream_len: u64,
    seed: u64,
) -> Result<FpCensus> {
    let params = FilterParams::derive(n, m, epsilon, u128::from(u))?;
    let mut filter = SlidingFilter::new(params, seed);
    if filter.hash().p() != u128::from(u) {
        return Err(Error::InvalidParams(format!(
            "census needs a prime universe at least the fingerprint range {}; hash modulus is {}",
            params.fp_range(),
            filter.hash().p()
        )));
    }
    let bound = epsilon * u as f64 + params.live_capacity() as f64;
    let mut oracle = WindowOracle::new(n, m);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_STREAM));
    let half = (params.g() / 2).max(1);

    let mut checkpoints = 0;
    let mut worst = 0;
    let mut worst_live = 0;
    let mut violations = 0;
    for _ in 0..stream_len {
        let x = rng.gen_range(0..u);
        filter.insert(x)?;
        oracle.push(x);
        let pos = filter.position();
        if pos != 0 && pos != half {
            continue;
        }
        checkpoints += 1;
        let count = (0..u)
            .filter(|&y| filter.query(y) && oracle.classify(y) == Classification::Out)
            .count() as u64;
        if count > worst {
            worst = count;
            worst_live = filter.active_cells() as u64;
        }
        if count as f64 > bound {
            violations += 1;
        }
    }

    Ok(FpCensus {
        schema: "slbf.census/1",
        params,
        seed,
        u,
        stream_len,
        checkpoints,
        window_snapshot_size: worst_live,
        false_positive_count: worst,
        bound,
        violations,
        pass: violations == 0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceVsBounds {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub space: SpaceReport,
    pub measured_bits: u64,
    pub lower_bound_bits: f64,
    pub upper_bound_bits: f64,
    pub ratio: f64,
    pub bits_per_element: f64,
    /// Share of the total taken by counters, hash description and the
    /// dictionary's fixed bookkeeping words.
    pub fixed_overhead_fraction: f64,
}

pub fn space_report(n: u64, m: Slack, epsilon: f64, seed: u64) -> Result<SpaceVsBounds> {
    let params = FilterParams::derive(n, m, epsilon, FULL_UNIVERSE)?;
    let filter = SlidingFilter::new(params, seed);
    let space = filter.bits_used();
    let lower = lower_bound_bits(n, m, epsilon)?;
    let upper = upper_bound_bits(n, m, epsilon)?;
    let fixed = space.total_bits - space.dictionary.cell_bits;
    Ok(SpaceVsBounds {
        schema: "slbf.space/1",
        params,
        seed,
        space,
        measured_bits: space.total_bits,
        lower_bound_bits: lower,
        upper_bound_bits: upper,
        ratio: space.total_bits as f64 / lower,
        bits_per_element: space.total_bits as f64 / n as f64,
        fixed_overhead_fraction: fixed as f64 / space.total_bits as f64,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PassReport {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub pattern: StreamPattern,
    pub steps: u64,
    pub label_violations: u64,
    pub probes: u64,
    pub false_negatives: u64,
    pub max_active_cells: u64,
    pub pass: bool,
}

/// Runs `steps` inserts with the label-reuse audit armed, checking after
/// every step that the newest element, the oldest in-window element and two
/// random in-window elements are all reported.
pub fn stress_label_safety(
    n: u64,
    m: Slack,
    epsilon: f64,
    pattern: StreamPattern,
    steps: u64,
    seed: u64,
) -> Result<PassReport> {
    let params = FilterParams::derive(n, m, epsilon, FULL_UNIVERSE)?;
    let mut filter = SlidingFilter::new(params, seed);
    filter.set_label_audit(true);
    let mut oracle = WindowOracle::new(n, m);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_PROBE));
    let mut probes = 0;
    let mut false_negatives = 0;
    let mut max_active = 0;
    let window = n as usize;
    let sample_live = n <= 1000;

    for (step, x) in Stream::new(pattern, seed).take(steps as usize).enumerate() {
        filter.insert(x)?;
        oracle.push(x);
        let filled = (step + 1).min(window);
        let picks = [
            0,
            filled - 1,
            rng.gen_range(0..filled),
            rng.gen_range(0..filled),
        ];
        for k in picks {
            let y = oracle.recent(k).expect("within retained buffer");
            probes += 1;
            if !filter.query(y) {
                false_negatives += 1;
            }
        }
        if sample_live && filter.position() == 0 {
            max_active = max_active.max(filter.active_cells() as u64);
        }
    }

    let label_violations = filter.label_violations();
    Ok(PassReport {
        schema: "slbf.stress/1",
        params,
        seed,
        pattern,
        steps,
        label_violations,
        probes,
        false_negatives,
        max_active_cells: max_active,
        pass: label_violations == 0 && false_negatives == 0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeReport {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub steps: u64,
    pub probes: u64,
    pub disagreements: u64,
}

/// Drives an amortized and a deamortized filter with the same seed and
/// stream over a small universe, comparing every answer in `[0, u)` after
/// every step.
pub fn compare_modes(
    n: u64,
    m: Slack,
    epsilon: f64,
    u: u64,
    steps: u64,
    seed: u64,
) -> Result<ModeReport> {
    let params = FilterParams::derive(n, m, epsilon, u128::from(u))?;
    let mut lazy = SlidingFilter::with_mode(params, seed, Mode::Deamortized);
    let mut eager = SlidingFilter::with_mode(params, seed, Mode::Amortized);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_STREAM));
    let mut probes = 0;
    let mut disagreements = 0;
    for _ in 0..steps {
        let x = rng.gen_range(0..u);
        lazy.insert(x)?;
        eager.insert(x)?;
        for y in 0..u {
            probes += 1;
            disagreements += u64::from(lazy.query(y) != eager.query(y));
        }
    }
    Ok(ModeReport {
        schema: "slbf.modes/1",
        params,
        seed,
        steps,
        probes,
        disagreements,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CostRun {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub inserts: u64,
    pub cost: CostReport,
    /// Live capacity over cell count, the load the table is sized for.
    pub design_load: f64,
    /// Largest share of cells physically occupied at a generation boundary,
    /// expired cells not yet reclaimed included.
    pub peak_occupancy: f64,
}

/// Inserts `inserts` distinct elements, querying a fresh element after each
/// one, and returns the touched-cell statistics.
pub fn measure_costs(n: u64, m: Slack, epsilon: f64, inserts: u64, seed: u64) -> Result<CostRun> {
    let params = FilterParams::derive(n, m, epsilon, FULL_UNIVERSE)?;
    let mut filter = SlidingFilter::new(params, seed);
    let probe_key = derive_seed(seed, DOMAIN_PROBE);
    let mut max_load = 0f64;
    let cells = filter.dictionary().capacity_cells() as f64;
    for (i, x) in Stream::new(StreamPattern::Distinct, seed)
        .take(inserts as usize)
        .enumerate()
    {
        filter.insert(x)?;
        filter.query(probe_element(probe_key, i as u64));
        if filter.position() == 0 {
            max_load = max_load.max(filter.dictionary().occupancy() as f64 / cells);
        }
    }
    Ok(CostRun {
        schema: "slbf.cost/1",
        params,
        seed,
        inserts,
        cost: filter.step_cost_stats(),
        design_load: params.live_capacity() as f64 / cells,
        peak_occupancy: max_load,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_shaped() {
        let a: Vec<u64> = Stream::new(StreamPattern::Distinct, 1).take(1000).collect();
        let b: Vec<u64> = Stream::new(StreamPattern::Distinct, 1).take(1000).collect();
        assert_eq!(a, b);
        let unique: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 1000);
        assert!(a
            .iter()
            .all(|&x| (0..10_000).all(|j| x != probe_element(derive_seed(1, DOMAIN_PROBE), j))));

        let rr: Vec<u64> = Stream::new(StreamPattern::RoundRobin { period: 3 }, 0)
            .take(7)
            .collect();
        assert_eq!(rr, vec![0, 1, 2, 0, 1, 2, 0]);
        assert!(Stream::new(StreamPattern::AllSame, 0)
            .take(5)
            .all(|x| x == 42));

        let bursts: Vec<u64> = Stream::new(
            StreamPattern::EdgeBursts {
                period: 10,
                lag: 4,
                burst: 3,
            },
            5,
        )
        .take(30)
        .collect();
        // step 10 repeats the element 4 positions back, three times
        assert_eq!(bursts[10], bursts[5]);
        assert_eq!(bursts[11], bursts[5]);
        assert_eq!(bursts[12], bursts[5]);
    }

    #[test]
    fn fpr_is_deterministic() {
        let a = measure_fpr(200, Slack::Finite(200), 1.0 / 16.0, 1000, 2000, 3).unwrap();
        let b = measure_fpr(200, Slack::Finite(200), 1.0 / 16.0, 1000, 2000, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(!a.underpowered);
    }

    #[test]
    fn fpr_power_rule() {
        let r = measure_fpr(100, Slack::Infinite, 1.0 / 1024.0, 300, 1000, 3).unwrap();
        assert!(r.underpowered);
        assert!(measure_fpr(100, Slack::Finite(100), 0.1, 150, 100, 3).is_err());
    }

    #[test]
    fn census_small() {
        let r = census_false_positives(100, Slack::Finite(100), 0.1, 10_007, 600, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.checkpoints > 0);
    }

    #[test]
    fn census_injective_regime() {
        // R = u = 101: h is a bijection, so nothing outside the window hits.
        let r = census_false_positives(1, Slack::Finite(1), 2.0 / 100.5, 101, 200, 4).unwrap();
        assert_eq!(r.params.fp_range(), 101);
        assert_eq!(r.false_positive_count, 0);
    }

    #[test]
    fn census_single_element_window() {
        let eps = 0.1;
        let r = census_false_positives(1, Slack::Finite(3), eps, 10_007, 500, 9).unwrap();
        let live = r.params.live_capacity() as f64;
        assert!(r.false_positive_count as f64 <= (eps * 10_007.0 / live).ceil() * live);
        assert!(r.pass);
    }

    #[test]
    fn census_rejects_composite_universe() {
        assert!(census_false_positives(100, Slack::Finite(100), 0.1, 10_000, 10, 1).is_err());
    }

    #[test]
    fn stress_small() {
        let r = stress_label_safety(
            100,
            Slack::Finite(10),
            1.0 / 16.0,
            StreamPattern::Uniform { alphabet: 150 },
            20_000,
            5,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn stress_all_duplicates() {
        let r = stress_label_safety(
            100,
            Slack::Finite(10),
            1.0 / 16.0,
            StreamPattern::AllSame,
            10_000,
            5,
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.max_active_cells, 1);
    }

    #[test]
    fn modes_agree_small() {
        let r = compare_modes(20, Slack::Finite(5), 0.25, 211, 300, 2).unwrap();
        assert_eq!(r.disagreements, 0);
    }

    #[test]
    fn space_fields() {
        let r = space_report(1 << 14, Slack::Finite(1 << 14), 1.0 / 1024.0, 0).unwrap();
        assert!(r.ratio >= 1.0);
        assert!(r.fixed_overhead_fraction <= 0.01);
        assert_eq!(r.measured_bits, r.space.total_bits);
    }
}

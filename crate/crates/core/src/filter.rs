//! The sliding filter.
//!
//! The stream is cut into generations of `g` consecutive arrivals. Each
//! arrival stores its fingerprint in the dictionary tagged with the current
//! generation label, overwriting the tag if the fingerprint is already there.
//! A fingerprint answers yes while its tag is one of the `c + 1` most recent
//! labels.
//!
//! Two ways of forgetting old generations are provided:
//!
//! * [`Mode::Deamortized`] (default): labels cycle modulo `2c + 3`. Only the
//!   `c + 1` newest labels are active; cells carrying any other label are
//!   ignored by lookups and freed lazily, either when an insert touches them
//!   or by a cursor that sweeps a few cells per insert. One sweep finishes
//!   long before an expired label comes around again.
//! * [`Mode::Amortized`]: labels cycle modulo `c + 1` and every label change
//!   sweeps the whole table once, deleting the generation being reused. This
//!   is the simple reference the deamortized mode is tested against.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::dictionary::{capacity_cells_for, DictSpace, Dictionary, BUCKET_SIZE};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, UniversalHash};
use crate::params::{ceil_log2, FilterParams};

const DOMAIN_HASH: u64 = 0x51;
const DOMAIN_DICT: u64 = 0x52;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Mode {
    Amortized,
    #[default]
    Deamortized,
}

/// Space used by a filter, itemized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceReport {
    pub dictionary: DictSpace,
    /// Position within the generation and generation label.
    pub counter_bits: u64,
    pub hash_bits: u64,
    pub total_bits: u64,
}

/// Touched-cell statistics gathered since construction (or the last reset).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub queries: u64,
    pub mean_query_cells: f64,
    pub max_query_cells: u64,
    pub inserts: u64,
    /// Scan cells plus candidate-bucket cells; cuckoo kicks are reported
    /// separately.
    pub mean_insert_cells: f64,
    pub max_insert_cells: u64,
    pub total_kicks: u64,
    pub max_kick_chain: u64,
    pub max_kick_cells: u64,
    pub reclaimed_by_scan: u64,
    pub reclaimed_by_insert: u64,
}

#[derive(Debug, Default)]
struct QueryStats {
    count: AtomicU64,
    cells: AtomicU64,
    max_cells: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default)]
struct InsertTotals {
    count: u64,
    cells: u64,
    max_cells: u64,
    kicks: u64,
    max_kicks: u64,
    max_kick_cells: u64,
    reclaimed_by_scan: u64,
    reclaimed_by_insert: u64,
}

#[derive(Debug)]
pub struct SlidingFilter {
    params: FilterParams,
    mode: Mode,
    seed: u64,
    hash: UniversalHash,
    dict: Dictionary,
    /// Arrivals so far in the current generation, in `[0, g)`.
    position: u64,
    /// Current generation label, in `[0, labels)`.
    label: u64,
    labels: u64,
    scan_rate: usize,
    audit: bool,
    audit_violations: u64,
    queries: QueryStats,
    inserts: InsertTotals,
}

/// Tables below this many cells are enlarged (see [`dictionary_cells`]).
pub const SMALL_TABLE_CELLS: usize = 4096;

/// Cell count for the dictionary. Small cuckoo tables overflow far more often
/// than large ones at the same load, so a table under
/// [`SMALL_TABLE_CELLS`] is grown towards that size, but never past
/// `2·(c + 2)·g` cells so that two cells per insert still complete a sweep
/// before any label is reused.
pub fn dictionary_cells(params: &FilterParams) -> usize {
    let base = capacity_cells_for(params.live_capacity());
    if base >= SMALL_TABLE_CELLS {
        return base;
    }
    let align = 2 * BUCKET_SIZE as u64;
    let sweepable = (2 * (params.c() + 2) * params.g() / align * align) as usize;
    base.max(SMALL_TABLE_CELLS.min(sweepable))
}

/// Cells the deamortized sweep visits per insert. Two suffices whenever a
/// full sweep fits in the `(c + 2)·g` arrivals a label spends expired before
/// reuse, which holds for all but tiny windows.
fn scan_rate_for(params: &FilterParams, capacity_cells: usize) -> usize {
    let expired_steps = (params.c() + 2) * params.g();
    (capacity_cells as u64).div_ceil(expired_steps).max(2) as usize
}

impl SlidingFilter {
    /// Deamortized filter.
    pub fn new(params: FilterParams, seed: u64) -> Self {
        Self::with_mode(params, seed, Mode::Deamortized)
    }

    pub fn with_mode(params: FilterParams, seed: u64, mode: Mode) -> Self {
        let labels = match mode {
            Mode::Deamortized => params.gen_modulus(),
            Mode::Amortized => params.c() + 1,
        };
        let tag_bits = ceil_log2(u128::from(labels));
        let hash = UniversalHash::new(
            params.u(),
            params.fp_range(),
            derive_seed(seed, DOMAIN_HASH),
        );
        let dict = Dictionary::with_cells(
            params.live_capacity(),
            dictionary_cells(&params),
            params.fp_range(),
            tag_bits,
            derive_seed(seed, DOMAIN_DICT),
        );
        let scan_rate = match mode {
            Mode::Deamortized => scan_rate_for(&params, dict.capacity_cells()),
            Mode::Amortized => 0,
        };
        SlidingFilter {
            params,
            mode,
            seed,
            hash,
            dict,
            position: 0,
            label: 0,
            labels,
            scan_rate,
            audit: false,
            audit_violations: 0,
            queries: QueryStats::default(),
            inserts: InsertTotals::default(),
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hash(&self) -> &UniversalHash {
        &self.hash
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn label(&self) -> u64 {
        self.label
    }

    /// Number of distinct generation labels in use.
    pub fn label_modulus(&self) -> u64 {
        self.labels
    }

    /// Cells swept per insert in deamortized mode (0 in amortized mode).
    pub fn scan_rate(&self) -> usize {
        self.scan_rate
    }

    /// Whether cells tagged `tag` are expired.
    #[inline]
    pub fn is_stale(&self, tag: u64) -> bool {
        stale(self.mode, self.label, self.labels, self.params.c(), tag)
    }

    /// Arms the label-reuse audit: at every label change, count occupied
    /// cells already carrying the incoming label. Costs a full sweep per
    /// generation.
    pub fn set_label_audit(&mut self, armed: bool) {
        self.audit = armed;
    }

    /// Cells found carrying a label at the moment it was reused.
    pub fn label_violations(&self) -> u64 {
        self.audit_violations
    }

    /// Cells carrying an active label.
    pub fn active_cells(&self) -> usize {
        let (mode, label, labels, c) = (self.mode, self.label, self.labels, self.params.c());
        self.dict.count_tags(|t| !stale(mode, label, labels, c, t))
    }

    /// Records `x` as the newest stream element.
    pub fn insert(&mut self, x: u64) -> Result<()> {
        if u128::from(x) >= self.params.u() {
            return Err(Error::OutOfUniverse {
                x,
                u: self.params.u(),
            });
        }
        let (mode, label, labels, c) = (self.mode, self.label, self.labels, self.params.c());
        let is_stale = |t| stale(mode, label, labels, c, t);

        let swept = self.dict.scan_step(self.scan_rate, is_stale);
        let stats = self
            .dict
            .insert_or_update(self.hash.eval(x), label, is_stale)?;

        let totals = &mut self.inserts;
        let cells = (self.scan_rate + stats.probed) as u64;
        totals.count += 1;
        totals.cells += cells;
        totals.max_cells = totals.max_cells.max(cells);
        totals.kicks += stats.kicks as u64;
        totals.max_kicks = totals.max_kicks.max(stats.kicks as u64);
        totals.max_kick_cells = totals.max_kick_cells.max(stats.kick_cells as u64);
        totals.reclaimed_by_scan += swept as u64;
        totals.reclaimed_by_insert += stats.reclaimed as u64;

        self.position += 1;
        if self.position == self.params.g() {
            self.position = 0;
            self.advance_label();
        }
        Ok(())
    }

    fn advance_label(&mut self) {
        self.label = (self.label + 1) % self.labels;
        let incoming = self.label;
        match self.mode {
            Mode::Deamortized => {
                if self.audit {
                    self.audit_violations += self.dict.count_tags(|t| t == incoming) as u64;
                }
            }
            Mode::Amortized => {
                self.dict.purge(|t| t == incoming);
                let cells = self.dict.capacity_cells() as u64;
                self.inserts.cells += cells;
                self.inserts.max_cells = self.inserts.max_cells.max(cells);
                if self.audit {
                    self.audit_violations += self.dict.count_tags(|t| t == incoming) as u64;
                }
            }
        }
    }

    /// Whether `x` is reported as a recent element. Read-only.
    pub fn query(&self, x: u64) -> bool {
        debug_assert!(u128::from(x) < self.params.u());
        let (mode, label, labels, c) = (self.mode, self.label, self.labels, self.params.c());
        let (tag, touched) = self
            .dict
            .member_probe(self.hash.eval(x), |t| stale(mode, label, labels, c, t));
        let touched = touched as u64;
        self.queries.count.fetch_add(1, Ordering::Relaxed);
        self.queries.cells.fetch_add(touched, Ordering::Relaxed);
        self.queries.max_cells.fetch_max(touched, Ordering::Relaxed);
        tag.is_some()
    }

    pub fn bits_used(&self) -> SpaceReport {
        let dictionary = self.dict.space();
        let counter_bits =
            u64::from(ceil_log2(u128::from(self.params.g())) + ceil_log2(u128::from(self.labels)));
        let hash_bits = self.hash.description_bits();
        SpaceReport {
            dictionary,
            counter_bits,
            hash_bits,
            total_bits: dictionary.total_bits + counter_bits + hash_bits,
        }
    }

    pub fn step_cost_stats(&self) -> CostReport {
        let queries = self.queries.count.load(Ordering::Relaxed);
        let query_cells = self.queries.cells.load(Ordering::Relaxed);
        let ins = &self.inserts;
        CostReport {
            queries,
            mean_query_cells: mean(query_cells, queries),
            max_query_cells: self.queries.max_cells.load(Ordering::Relaxed),
            inserts: ins.count,
            mean_insert_cells: mean(ins.cells, ins.count),
            max_insert_cells: ins.max_cells,
            total_kicks: ins.kicks,
            max_kick_chain: ins.max_kicks,
            max_kick_cells: ins.max_kick_cells,
            reclaimed_by_scan: ins.reclaimed_by_scan,
            reclaimed_by_insert: ins.reclaimed_by_insert,
        }
    }

    pub fn reset_cost_stats(&mut self) {
        self.queries = QueryStats::default();
        self.inserts = InsertTotals::default();
    }

    /// Upper bound on cells a query may touch.
    pub const MAX_QUERY_CELLS: usize = 2 * BUCKET_SIZE;

    pub(crate) fn restore_counters(
        &mut self,
        position: u64,
        label: u64,
        dict: Dictionary,
    ) -> Result<()> {
        if position >= self.params.g() || label >= self.labels {
            return Err(Error::Snapshot("generation counters out of range".into()));
        }
        if dict.seed() != self.dict.seed()
            || dict.capacity_cells() != self.dict.capacity_cells()
            || dict.fp_range() != self.dict.fp_range()
            || dict.tag_bits() != self.dict.tag_bits()
        {
            return Err(Error::Snapshot(
                "dictionary does not match parameters".into(),
            ));
        }
        self.position = position;
        self.label = label;
        self.dict = dict;
        Ok(())
    }
}

#[inline]
fn stale(mode: Mode, label: u64, labels: u64, c: u64, tag: u64) -> bool {
    match mode {
        Mode::Deamortized => (label + labels - tag) % labels > c,
        Mode::Amortized => false,
    }
}

fn mean(total: u64, count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Slack;

    const U64: u128 = 1 << 64;

    fn filter(n: u64, m: Slack, eps: f64, seed: u64) -> SlidingFilter {
        SlidingFilter::new(FilterParams::derive(n, m, eps, U64).unwrap(), seed)
    }

    #[test]
    fn fresh_filter_says_no() {
        let f = filter(1000, Slack::Finite(1000), 1.0 / 1024.0, 1);
        assert!((0..10_000).all(|x| !f.query(x)));
    }

    #[test]
    fn insert_then_query() {
        let mut f = filter(1000, Slack::Finite(1000), 1.0 / 1024.0, 1);
        f.insert(99).unwrap();
        assert!(f.query(99));
    }

    #[test]
    fn element_survives_whole_window() {
        let mut f = filter(1000, Slack::Finite(1000), 1.0 / 1024.0, 2);
        f.insert(u64::MAX).unwrap();
        for y in 0..999 {
            f.insert(y).unwrap();
            assert!(f.query(u64::MAX), "lost after {y}");
        }
    }

    #[test]
    fn reinsert_refreshes() {
        let n = 500;
        let mut f = filter(n, Slack::Finite(50), 1.0 / 64.0, 3);
        f.insert(7).unwrap();
        for y in 1000..1000 + n - 1 {
            f.insert(y).unwrap();
        }
        f.insert(7).unwrap();
        for y in 5000..5000 + n - 1 {
            f.insert(y).unwrap();
        }
        assert!(f.query(7));
    }

    #[test]
    fn element_expires_after_window_and_slack() {
        // With every other element distinct, x is only reported afterwards
        // if its fingerprint collides with a live one.
        let (n, m) = (100, 100);
        let mut expired = 0;
        for seed in 0..200 {
            let mut f = filter(n, Slack::Finite(m), 1.0 / 1024.0, seed);
            f.insert(1).unwrap();
            for y in 0..n + m {
                f.insert(1_000_000 + y).unwrap();
            }
            expired += u32::from(!f.query(1));
        }
        assert!(expired >= 195, "{expired}");
    }

    #[test]
    fn out_of_universe_rejected() {
        let params = FilterParams::derive(10, Slack::Infinite, 0.5, 1000).unwrap();
        let mut f = SlidingFilter::new(params, 0);
        assert!(matches!(f.insert(1000), Err(Error::OutOfUniverse { .. })));
        f.insert(999).unwrap();
    }

    #[test]
    fn collision_is_a_false_positive() {
        let params = FilterParams::derive(4, Slack::Finite(4), 0.25, 10_007).unwrap();
        let mut f = SlidingFilter::new(params, 5);
        f.insert(3).unwrap();
        let target = f.hash().eval(3);
        let twin = (0..10_007u64)
            .find(|&x| x != 3 && f.hash().eval(x) == target)
            .unwrap();
        assert!(f.query(twin));
    }

    #[test]
    fn deterministic() {
        let run = |seed| {
            let mut f = filter(300, Slack::Finite(30), 1.0 / 16.0, seed);
            let mut answers = Vec::new();
            for x in 0..5000u64 {
                f.insert(x * 7919 % 1201).unwrap();
                answers.push(f.query(x % 1500));
            }
            answers
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn label_audit_clean_at_boundaries() {
        for (n, m, eps) in [
            (1, Slack::Finite(1), 0.5),
            (2, Slack::Finite(1), 0.5),
            (100, Slack::Finite(1), 1.0 / 16.0),
            (100, Slack::Infinite, 0.5),
            (64, Slack::Finite(10), 1.0 / 1024.0),
        ] {
            let mut f = filter(n, m, eps, 13);
            f.set_label_audit(true);
            for x in 0..20_000u64 {
                f.insert(x).unwrap();
            }
            assert_eq!(f.label_violations(), 0, "n={n} m={m} eps={eps}");
        }
    }

    #[test]
    fn small_tables_are_enlarged_within_sweep_budget() {
        let p = FilterParams::derive(100, Slack::Finite(100), 1.0 / 1024.0, U64).unwrap();
        assert_eq!(dictionary_cells(&p), 240);
        let p = FilterParams::derive(1 << 16, Slack::Finite(1 << 16), 1.0 / 1024.0, U64).unwrap();
        assert_eq!(dictionary_cells(&p), capacity_cells_for(p.live_capacity()));
        let p = FilterParams::derive(1000, Slack::Finite(1000), 1.0 / 1024.0, U64).unwrap();
        assert_eq!(dictionary_cells(&p), 2400);
    }

    #[test]
    fn scan_rate_is_two_except_tiny_windows() {
        assert_eq!(
            filter(1000, Slack::Finite(1000), 1.0 / 1024.0, 0).scan_rate(),
            2
        );
        assert_eq!(filter(100, Slack::Finite(1), 1.0 / 16.0, 0).scan_rate(), 2);
        assert!(filter(1, Slack::Finite(1), 0.5, 0).scan_rate() > 2);
    }

    #[test]
    fn cost_and_space_reports() {
        let mut f = filter(1000, Slack::Finite(1000), 1.0 / 1024.0, 4);
        for x in 0..10_000u64 {
            f.insert(x).unwrap();
            f.query(x ^ 0xdead);
        }
        let cost = f.step_cost_stats();
        assert_eq!(cost.inserts, 10_000);
        assert_eq!(cost.queries, 10_000);
        assert!(cost.max_query_cells <= SlidingFilter::MAX_QUERY_CELLS as u64);
        assert!(cost.max_insert_cells <= 10);
        let space = f.bits_used();
        assert!(space.counter_bits + space.hash_bits <= 4 * 64);
        assert_eq!(
            space.total_bits,
            space.dictionary.total_bits + space.counter_bits + space.hash_bits
        );
    }

    #[test]
    fn all_duplicates_keep_one_cell() {
        let mut f = filter(100, Slack::Finite(10), 1.0 / 16.0, 8);
        f.set_label_audit(true);
        for _ in 0..100_000 {
            f.insert(42).unwrap();
        }
        assert_eq!(f.active_cells(), 1);
        assert_eq!(f.dictionary().occupancy(), 1);
        assert_eq!(f.label_violations(), 0);
    }
}

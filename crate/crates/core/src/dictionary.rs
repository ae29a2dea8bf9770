//! Dynamic dictionary of fingerprints with small associated tags.
//!
//! Bucketized cuckoo hashing: [`BUCKET_SIZE`] cells per bucket, two candidate
//! buckets per fingerprint, random-walk eviction bounded by [`MAX_KICKS`].
//! The table is sized for [`LOAD_TARGET`] of its cells.
//!
//! Fingerprints are stored quotiented. A seeded permutation of `[0, R)` (a
//! four-round Feistel network with cycle-walking) maps a fingerprint `f` to
//! `z`; the home bucket is `z mod buckets` and the
//! cell keeps `q = z / buckets` plus one bit saying whether it sits in the home
//! or the alternate bucket. The alternate bucket is `home + 1 + H(q) mod
//! (buckets - 1)`, so `(cell contents, cell position)` recovers `f`.
//!
//! Every occupied cell carries a tag. Callers pass a `stale` predicate on
//! tags; cells whose tag is stale are logically absent. They are physically
//! freed by [`Dictionary::scan_step`] and by any insert that touches them, and
//! never block an insert.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashing::{derive_seed, mix64};
use crate::params::ceil_log2;

pub const BUCKET_SIZE: usize = 4;
pub const MAX_KICKS: usize = 500;
pub const LOAD_TARGET: f64 = 0.9;

const DOMAIN_PERMUTATION: u64 = 1;
const DOMAIN_ALT: u64 = 2;
const DOMAIN_WALK: u64 = 3;

/// Width of each fixed bookkeeping word counted in [`DictSpace`].
const WORD_BITS: u64 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Slot {
    occupied: bool,
    alt: bool,
    quotient: u64,
    tag: u64,
}

/// Decoded view of an occupied cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DictCell {
    pub fingerprint: u64,
    pub tag: u64,
}

/// What an insert did, in touched cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InsertStats {
    /// The fingerprint was already stored; only its tag changed.
    pub updated: bool,
    /// Cells examined in the two candidate buckets.
    pub probed: usize,
    /// Evictions performed by the cuckoo walk.
    pub kicks: usize,
    /// Cells examined while relocating evicted fingerprints.
    pub kick_cells: usize,
    /// Stale cells freed along the way.
    pub reclaimed: usize,
}

impl InsertStats {
    pub fn touched(&self) -> usize {
        self.probed + self.kick_cells
    }
}

/// Itemized space accounting. Cell bits scale with the table; the rest is a
/// fixed number of machine words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DictSpace {
    pub capacity_cells: u64,
    pub occupied_flag_bits: u32,
    pub alt_flag_bits: u32,
    pub quotient_bits: u32,
    pub tag_bits: u32,
    pub bits_per_cell: u32,
    pub cell_bits: u64,
    pub cursor_bits: u64,
    pub occupancy_bits: u64,
    pub seed_bits: u64,
    pub walk_state_bits: u64,
    pub total_bits: u64,
}

pub struct Dictionary {
    slots: Vec<Slot>,
    buckets: usize,
    element_capacity: u64,
    fp_range: u128,
    tag_bits: u32,
    quotient_bits: u32,
    seed: u64,
    perm: Permutation,
    alt_key: u64,
    cursor: usize,
    occupancy: usize,
    walk: ChaCha8Rng,
    path: Vec<(usize, Slot)>,
}

impl std::fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dictionary")
            .field("capacity_cells", &self.slots.len())
            .field("element_capacity", &self.element_capacity)
            .field("fp_range", &self.fp_range)
            .field("occupancy", &self.occupancy)
            .field("cursor", &self.cursor)
            .finish_non_exhaustive()
    }
}

/// Smallest multiple of `2·BUCKET_SIZE` holding `element_capacity` at
/// [`LOAD_TARGET`].
pub fn capacity_cells_for(element_capacity: u64) -> usize {
    // ⌈ec / 0.9⌉ in integers
    let needed = (element_capacity * 10).div_ceil(9) as usize;
    needed.div_ceil(2 * BUCKET_SIZE).max(1) * 2 * BUCKET_SIZE
}

impl Dictionary {
    /// Builds an empty dictionary for `element_capacity` live fingerprints
    /// drawn from `[0, fp_range)`, with `tag_bits`-bit tags.
    pub fn new(element_capacity: u64, fp_range: u128, tag_bits: u32, seed: u64) -> Self {
        let cells = capacity_cells_for(element_capacity);
        Self::with_cells(element_capacity, cells, fp_range, tag_bits, seed)
    }

    /// Like [`new`](Self::new) but with an explicit, larger cell count.
    /// `cells` must be a multiple of `2·BUCKET_SIZE` and at least
    /// [`capacity_cells_for`]`(element_capacity)`.
    pub fn with_cells(
        element_capacity: u64,
        cells: usize,
        fp_range: u128,
        tag_bits: u32,
        seed: u64,
    ) -> Self {
        assert!(element_capacity >= 1, "element capacity must be positive");
        assert!(
            (1..=1u128 << 64).contains(&fp_range),
            "fingerprint range out of bounds"
        );
        assert!(
            cells.is_multiple_of(2 * BUCKET_SIZE) && cells >= capacity_cells_for(element_capacity),
            "cell count {cells} too small or misaligned"
        );
        let capacity = cells;
        let buckets = capacity / BUCKET_SIZE;

        let perm = Permutation::new(fp_range, derive_seed(seed, DOMAIN_PERMUTATION));
        let quotient_bits = ceil_log2(fp_range.div_ceil(buckets as u128));

        Dictionary {
            slots: vec![Slot::default(); capacity],
            buckets,
            element_capacity,
            fp_range,
            tag_bits,
            quotient_bits,
            seed,
            perm,
            alt_key: derive_seed(seed, DOMAIN_ALT),
            cursor: 0,
            occupancy: 0,
            walk: ChaCha8Rng::seed_from_u64(derive_seed(seed, DOMAIN_WALK)),
            path: Vec::with_capacity(MAX_KICKS),
        }
    }

    pub fn capacity_cells(&self) -> usize {
        self.slots.len()
    }

    pub fn element_capacity(&self) -> u64 {
        self.element_capacity
    }

    pub fn fp_range(&self) -> u128 {
        self.fp_range
    }

    pub fn tag_bits(&self) -> u32 {
        self.tag_bits
    }

    /// Occupied cells, including stale ones not yet reclaimed.
    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Home bucket and quotient of a fingerprint.
    #[inline]
    fn locate(&self, fp: u64) -> (usize, u64) {
        debug_assert!(u128::from(fp) < self.fp_range);
        let z = self.perm.forward(fp);
        let buckets = self.buckets as u64;
        ((z % buckets) as usize, z / buckets)
    }

    #[inline]
    fn alt_offset(&self, quotient: u64) -> usize {
        1 + (mix64(quotient ^ self.alt_key) % (self.buckets as u64 - 1)) as usize
    }

    #[inline]
    fn alt_bucket(&self, home: usize, quotient: u64) -> usize {
        (home + self.alt_offset(quotient)) % self.buckets
    }

    fn home_of(&self, bucket: usize, slot: &Slot) -> usize {
        if slot.alt {
            (bucket + self.buckets - self.alt_offset(slot.quotient)) % self.buckets
        } else {
            bucket
        }
    }

    fn fingerprint_of(&self, index: usize, slot: &Slot) -> u64 {
        let home = self.home_of(index / BUCKET_SIZE, slot);
        self.perm
            .backward(slot.quotient * self.buckets as u64 + home as u64)
    }

    #[inline]
    fn bucket_cells(bucket: usize) -> std::ops::Range<usize> {
        bucket * BUCKET_SIZE..(bucket + 1) * BUCKET_SIZE
    }

    #[inline]
    fn free(&mut self, index: usize) {
        self.slots[index] = Slot::default();
        self.occupancy -= 1;
    }

    /// Tag of `fp` if it is stored and not stale. Never mutates.
    pub fn member(&self, fp: u64, stale: impl Fn(u64) -> bool) -> Option<u64> {
        self.member_probe(fp, stale).0
    }

    /// [`member`](Self::member) plus the number of cells examined.
    pub fn member_probe(&self, fp: u64, stale: impl Fn(u64) -> bool) -> (Option<u64>, usize) {
        let (home, quotient) = self.locate(fp);
        let mut touched = 0;
        for (bucket, alt) in [(home, false), (self.alt_bucket(home, quotient), true)] {
            for slot in &self.slots[Self::bucket_cells(bucket)] {
                touched += 1;
                if slot.occupied && slot.alt == alt && slot.quotient == quotient {
                    let tag = (!stale(slot.tag)).then_some(slot.tag);
                    return (tag, touched);
                }
            }
        }
        (None, touched)
    }

    /// Stores `fp` with `tag`, or retags it if already present (stale or not).
    ///
    /// Stale cells met on the way are freed first. On [`Error::InsertOverflow`]
    /// every displaced fingerprint is put back where it was.
    pub fn insert_or_update(
        &mut self,
        fp: u64,
        tag: u64,
        stale: impl Fn(u64) -> bool,
    ) -> Result<InsertStats> {
        debug_assert!(self.tag_bits >= 64 || tag < 1 << self.tag_bits);
        let (home, quotient) = self.locate(fp);
        let alt_bucket = self.alt_bucket(home, quotient);
        let mut stats = InsertStats::default();
        let mut free: Option<(usize, bool)> = None;

        for (bucket, alt) in [(home, false), (alt_bucket, true)] {
            for index in Self::bucket_cells(bucket) {
                stats.probed += 1;
                let slot = self.slots[index];
                if !slot.occupied {
                    free.get_or_insert((index, alt));
                    continue;
                }
                if slot.alt == alt && slot.quotient == quotient {
                    self.slots[index].tag = tag;
                    stats.updated = true;
                    return Ok(stats);
                }
                if stale(slot.tag) {
                    self.free(index);
                    stats.reclaimed += 1;
                    free.get_or_insert((index, alt));
                }
            }
        }

        let mut carry = Slot {
            occupied: true,
            alt: false,
            quotient,
            tag,
        };
        if let Some((index, alt)) = free {
            carry.alt = alt;
            self.slots[index] = carry;
            self.occupancy += 1;
            return Ok(stats);
        }

        self.path.clear();
        carry.alt = self.walk.gen::<bool>();
        let mut bucket = if carry.alt { alt_bucket } else { home };
        while stats.kicks < MAX_KICKS {
            let index = bucket * BUCKET_SIZE + self.walk.gen_range(0..BUCKET_SIZE);
            let victim = self.slots[index];
            self.path.push((index, victim));
            self.slots[index] = carry;
            stats.kicks += 1;

            let victim_home = self.home_of(bucket, &victim);
            let (target, target_alt) = if victim.alt {
                (victim_home, false)
            } else {
                (self.alt_bucket(victim_home, victim.quotient), true)
            };
            carry = Slot {
                alt: target_alt,
                ..victim
            };

            let mut placed = None;
            for index in Self::bucket_cells(target) {
                stats.kick_cells += 1;
                let slot = self.slots[index];
                if slot.occupied && stale(slot.tag) {
                    self.free(index);
                    stats.reclaimed += 1;
                }
                if !self.slots[index].occupied {
                    placed = Some(index);
                    break;
                }
            }
            if let Some(index) = placed {
                self.slots[index] = carry;
                self.occupancy += 1;
                return Ok(stats);
            }
            bucket = target;
        }

        while let Some((index, previous)) = self.path.pop() {
            self.slots[index] = previous;
        }
        Err(Error::InsertOverflow { kicks: stats.kicks })
    }

    /// Removes `fp` if present, stale or not.
    pub fn delete(&mut self, fp: u64) -> bool {
        let (home, quotient) = self.locate(fp);
        for (bucket, alt) in [(home, false), (self.alt_bucket(home, quotient), true)] {
            for index in Self::bucket_cells(bucket) {
                let slot = self.slots[index];
                if slot.occupied && slot.alt == alt && slot.quotient == quotient {
                    self.free(index);
                    return true;
                }
            }
        }
        false
    }

    /// Visits the next `k` cells in scan order, freeing stale ones.
    /// Returns how many were freed.
    pub fn scan_step(&mut self, k: usize, stale: impl Fn(u64) -> bool) -> usize {
        let mut freed = 0;
        for _ in 0..k {
            let index = self.cursor;
            let slot = self.slots[index];
            if slot.occupied && stale(slot.tag) {
                self.free(index);
                freed += 1;
            }
            self.cursor = (index + 1) % self.slots.len();
        }
        freed
    }

    /// Frees every occupied cell whose tag satisfies `pred`. Full sweep.
    pub fn purge(&mut self, pred: impl Fn(u64) -> bool) -> usize {
        let mut freed = 0;
        for index in 0..self.slots.len() {
            let slot = self.slots[index];
            if slot.occupied && pred(slot.tag) {
                self.free(index);
                freed += 1;
            }
        }
        freed
    }

    /// Number of occupied cells whose tag satisfies `pred`. Full sweep.
    pub fn count_tags(&self, pred: impl Fn(u64) -> bool) -> usize {
        self.slots
            .iter()
            .filter(|s| s.occupied && pred(s.tag))
            .count()
    }

    /// Decoded contents of cell `index` in scan order.
    pub fn cell(&self, index: usize) -> Option<DictCell> {
        let slot = &self.slots[index];
        slot.occupied.then(|| DictCell {
            fingerprint: self.fingerprint_of(index, slot),
            tag: slot.tag,
        })
    }

    /// All occupied cells in scan order.
    pub fn cells(&self) -> impl Iterator<Item = DictCell> + '_ {
        (0..self.slots.len()).filter_map(|i| self.cell(i))
    }

    pub fn space(&self) -> DictSpace {
        let bits_per_cell = 2 + self.quotient_bits + self.tag_bits;
        let capacity_cells = self.slots.len() as u64;
        let cell_bits = capacity_cells * u64::from(bits_per_cell);
        let (cursor_bits, occupancy_bits, seed_bits, walk_state_bits) =
            (WORD_BITS, WORD_BITS, WORD_BITS, WORD_BITS);
        DictSpace {
            capacity_cells,
            occupied_flag_bits: 1,
            alt_flag_bits: 1,
            quotient_bits: self.quotient_bits,
            tag_bits: self.tag_bits,
            bits_per_cell,
            cell_bits,
            cursor_bits,
            occupancy_bits,
            seed_bits,
            walk_state_bits,
            total_bits: cell_bits + cursor_bits + occupancy_bits + seed_bits + walk_state_bits,
        }
    }

    pub fn bits_used(&self) -> u64 {
        self.space().total_bits
    }

    /// Checks structural invariants with a full sweep: every cell decodes to
    /// a fingerprint in range whose candidate buckets include the cell, no
    /// fingerprint appears twice, and the occupancy counter is exact.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        let mut occupied = 0;
        for (index, slot) in self.slots.iter().enumerate() {
            if !slot.occupied {
                if *slot != Slot::default() {
                    return Err(format!("free cell {index} not cleared"));
                }
                continue;
            }
            occupied += 1;
            let home = self.home_of(index / BUCKET_SIZE, slot);
            if u128::from(slot.quotient) * self.buckets as u128 + home as u128 >= self.fp_range {
                return Err(format!("cell {index} decodes outside the range"));
            }
            let fp = self.fingerprint_of(index, slot);
            let (home, quotient) = self.locate(fp);
            let expected = if slot.alt {
                self.alt_bucket(home, quotient)
            } else {
                home
            };
            if quotient != slot.quotient || expected != index / BUCKET_SIZE {
                return Err(format!("cell {index} is not in a candidate bucket of {fp}"));
            }
            if !seen.insert(fp) {
                return Err(format!("fingerprint {fp} stored twice"));
            }
        }
        if occupied != self.occupancy {
            return Err(format!(
                "occupancy {} but {occupied} cells occupied",
                self.occupancy
            ));
        }
        Ok(())
    }

    pub(crate) fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn write_state<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u64::<LittleEndian>(self.element_capacity)?;
        w.write_u128::<LittleEndian>(self.fp_range)?;
        w.write_u32::<LittleEndian>(self.tag_bits)?;
        w.write_u64::<LittleEndian>(self.slots.len() as u64)?;
        w.write_u64::<LittleEndian>(self.cursor as u64)?;
        w.write_u64::<LittleEndian>(self.occupancy as u64)?;
        w.write_u128::<LittleEndian>(self.walk.get_word_pos())?;
        for slot in &self.slots {
            w.write_u8(u8::from(slot.occupied) | u8::from(slot.alt) << 1)?;
            w.write_u64::<LittleEndian>(slot.quotient)?;
            w.write_u64::<LittleEndian>(slot.tag)?;
        }
        Ok(())
    }

    pub(crate) fn read_state<R: Read>(r: &mut R) -> Result<Self> {
        let seed = r.read_u64::<LittleEndian>()?;
        let element_capacity = r.read_u64::<LittleEndian>()?;
        let fp_range = r.read_u128::<LittleEndian>()?;
        let tag_bits = r.read_u32::<LittleEndian>()?;
        if element_capacity == 0 || fp_range == 0 || fp_range > 1 << 64 || tag_bits > 64 {
            return Err(Error::Snapshot("dictionary header out of range".into()));
        }
        let cells = r.read_u64::<LittleEndian>()?;
        let minimum = capacity_cells_for(element_capacity) as u64;
        if cells < minimum || cells % (2 * BUCKET_SIZE as u64) != 0 || cells > 1 << 40 {
            return Err(Error::Snapshot(format!("cell count {cells} not valid")));
        }
        let mut dict =
            Dictionary::with_cells(element_capacity, cells as usize, fp_range, tag_bits, seed);
        let cursor = r.read_u64::<LittleEndian>()?;
        if cursor >= cells {
            return Err(Error::Snapshot("scan cursor out of range".into()));
        }
        dict.cursor = cursor as usize;
        dict.occupancy = r.read_u64::<LittleEndian>()? as usize;
        dict.walk.set_word_pos(r.read_u128::<LittleEndian>()?);
        for slot in dict.slots.iter_mut() {
            let flags = r.read_u8()?;
            if flags > 3 {
                return Err(Error::Snapshot("bad cell flags".into()));
            }
            slot.occupied = flags & 1 == 1;
            slot.alt = flags & 2 == 2;
            slot.quotient = r.read_u64::<LittleEndian>()?;
            slot.tag = r.read_u64::<LittleEndian>()?;
        }
        dict.validate().map_err(Error::Snapshot)?;
        Ok(dict)
    }
}

/// Seeded permutation of `[0, range)`: a balanced Feistel network on the
/// smallest even bit width covering `range`, cycle-walked back into range.
#[derive(Clone, Debug)]
struct Permutation {
    range: u128,
    half_bits: u32,
    keys: [u64; 4],
}

impl Permutation {
    fn new(range: u128, seed: u64) -> Self {
        let half_bits = ceil_log2(range).div_ceil(2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Permutation {
            range,
            half_bits,
            keys: rng.gen(),
        }
    }

    #[inline]
    fn mask(&self) -> u64 {
        (1u64 << self.half_bits) - 1
    }

    #[inline]
    fn encrypt(&self, z: u64) -> u64 {
        let mask = self.mask();
        let (mut left, mut right) = (z >> self.half_bits, z & mask);
        for key in self.keys {
            (left, right) = (right, left ^ (mix64(right ^ key) & mask));
        }
        left << self.half_bits | right
    }

    #[inline]
    fn decrypt(&self, z: u64) -> u64 {
        let mask = self.mask();
        let (mut left, mut right) = (z >> self.half_bits, z & mask);
        for key in self.keys.iter().rev() {
            (left, right) = (right ^ (mix64(left ^ key) & mask), left);
        }
        left << self.half_bits | right
    }

    fn forward(&self, fp: u64) -> u64 {
        let mut z = self.encrypt(fp);
        while u128::from(z) >= self.range {
            z = self.encrypt(z);
        }
        z
    }

    fn backward(&self, z: u64) -> u64 {
        let mut fp = self.decrypt(z);
        while u128::from(fp) >= self.range {
            fp = self.decrypt(fp);
        }
        fp
    }
}

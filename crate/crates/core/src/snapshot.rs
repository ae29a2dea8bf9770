//! Binary snapshots of a [`SlidingFilter`].
//!
//! All integers are little-endian. Layout, version 1:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SLBF"
//!      4     2  version (1)
//!      6     1  mode (0 = deamortized, 1 = amortized)
//!      7     1  slack kind (0 = finite, 1 = infinite)
//!      8     8  n
//!     16     8  m (0 when infinite)
//!     24     8  epsilon (IEEE-754 binary64 bits)
//!     32    16  u
//!     48     8  seed
//!     56    16  hash modulus p
//!     72    16  hash multiplier a
//!     88    16  fingerprint range R
//!    104     8  position within generation
//!    112     8  generation label
//!    120     8  dictionary seed
//!    128     8  dictionary element capacity
//!    136    16  dictionary fingerprint range
//!    152     4  tag bits
//!    156     8  cell count N
//!    164     8  scan cursor
//!    172     8  occupancy
//!    180    16  eviction-walk stream position
//!    196  17·N  cells: flags u8 (bit 0 occupied, bit 1 alternate bucket),
//!               quotient u64, tag u64
//! ```
//!
//! Everything except the counters, cells and walk position is re-derived on
//! load and checked against the stored values.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::filter::{Mode, SlidingFilter};
use crate::params::{FilterParams, Slack};

pub const MAGIC: &[u8; 4] = b"SLBF";
pub const VERSION: u16 = 1;

impl SlidingFilter {
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        let params = self.params();
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u8(match self.mode() {
            Mode::Deamortized => 0,
            Mode::Amortized => 1,
        })?;
        let (kind, m) = match params.m() {
            Slack::Finite(m) => (0, m),
            Slack::Infinite => (1, 0),
        };
        w.write_u8(kind)?;
        w.write_u64::<LittleEndian>(params.n())?;
        w.write_u64::<LittleEndian>(m)?;
        w.write_u64::<LittleEndian>(params.epsilon().to_bits())?;
        w.write_u128::<LittleEndian>(params.u())?;
        w.write_u64::<LittleEndian>(self.seed())?;
        w.write_u128::<LittleEndian>(self.hash().p())?;
        w.write_u128::<LittleEndian>(self.hash().a())?;
        w.write_u128::<LittleEndian>(self.hash().range())?;
        w.write_u64::<LittleEndian>(self.position())?;
        w.write_u64::<LittleEndian>(self.label())?;
        self.dictionary().write_state(w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let mode = match r.read_u8()? {
            0 => Mode::Deamortized,
            1 => Mode::Amortized,
            other => return Err(Error::Snapshot(format!("unknown mode {other}"))),
        };
        let kind = r.read_u8()?;
        let n = r.read_u64::<LittleEndian>()?;
        let m = r.read_u64::<LittleEndian>()?;
        let m = match (kind, m) {
            (0, m) => Slack::Finite(m),
            (1, 0) => Slack::Infinite,
            _ => return Err(Error::Snapshot("bad slack encoding".into())),
        };
        let epsilon = f64::from_bits(r.read_u64::<LittleEndian>()?);
        let u = r.read_u128::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let params = FilterParams::derive(n, m, epsilon, u)?;
        let mut filter = SlidingFilter::with_mode(params, seed, mode);

        let (p, a, range) = (
            r.read_u128::<LittleEndian>()?,
            r.read_u128::<LittleEndian>()?,
            r.read_u128::<LittleEndian>()?,
        );
        let hash = filter.hash();
        if (p, a, range) != (hash.p(), hash.a(), hash.range()) {
            return Err(Error::Snapshot("hash function does not match seed".into()));
        }
        let position = r.read_u64::<LittleEndian>()?;
        let label = r.read_u64::<LittleEndian>()?;
        let dict = Dictionary::read_state(r)?;
        filter.restore_counters(position, label, dict)?;

        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        Ok(filter)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::load(&mut bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn busy_filter(mode: Mode) -> SlidingFilter {
        let params = FilterParams::derive(200, Slack::Finite(40), 1.0 / 32.0, 1 << 64).unwrap();
        let mut f = SlidingFilter::with_mode(params, 21, mode);
        for x in 0..1234u64 {
            f.insert(x * 31 % 977).unwrap();
        }
        f
    }

    #[test]
    fn header_layout() {
        let bytes = busy_filter(Mode::Deamortized).to_bytes();
        assert_eq!(&bytes[..4], b"SLBF");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[7], 0);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 200);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 40);
        let cells = u64::from_le_bytes(bytes[156..164].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 196 + 17 * cells);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for mode in [Mode::Deamortized, Mode::Amortized] {
            let f = busy_filter(mode);
            let bytes = f.to_bytes();
            let g = SlidingFilter::from_bytes(&bytes).unwrap();
            assert_eq!(g.to_bytes(), bytes);
            assert_eq!(g.mode(), mode);
        }
    }

    #[test]
    fn restored_filter_continues_identically() {
        let mut a = busy_filter(Mode::Deamortized);
        let mut b = SlidingFilter::from_bytes(&a.to_bytes()).unwrap();
        for x in 5000..9000u64 {
            a.insert(x % 1500).unwrap();
            b.insert(x % 1500).unwrap();
            assert_eq!(a.query(x % 1700), b.query(x % 1700));
        }
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = busy_filter(Mode::Deamortized).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SlidingFilter::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(SlidingFilter::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[72] ^= 1; // multiplier
        assert!(SlidingFilter::from_bytes(&bad).is_err());
        assert!(SlidingFilter::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(SlidingFilter::from_bytes(&long).is_err());
    }

    #[test]
    fn infinite_slack_encoding() {
        let params = FilterParams::derive(50, Slack::Infinite, 0.1, 1 << 32).unwrap();
        let f = SlidingFilter::new(params, 3);
        let bytes = f.to_bytes();
        assert_eq!(bytes[7], 1);
        let g = SlidingFilter::from_bytes(&bytes).unwrap();
        assert_eq!(g.params().m(), Slack::Infinite);
    }
}

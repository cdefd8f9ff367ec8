//! Time-ordered particle ids and graph-local strand ids.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text::SplitMix64;

const ALPHABET: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const ENCODED_LEN: usize = 26;
const TIMESTAMP_BITS: u32 = 48;
const RANDOM_BITS: u32 = 80;

/// 128-bit identifier: a 48-bit millisecond timestamp followed by 80 random
/// bits, rendered as 26 Crockford base32 characters.
///
/// Numeric order and the order of the encoded strings coincide, so ids sort by
/// creation time.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticleId(u128);

impl ParticleId {
    pub const MIN: ParticleId = ParticleId(0);
    pub const MAX: ParticleId = ParticleId(u128::MAX);

    pub fn from_parts(timestamp_ms: u64, random: u128) -> Self {
        let ts = (timestamp_ms as u128) & ((1u128 << TIMESTAMP_BITS) - 1);
        let rnd = random & ((1u128 << RANDOM_BITS) - 1);
        ParticleId((ts << RANDOM_BITS) | rnd)
    }

    pub fn timestamp_ms(self) -> u64 {
        (self.0 >> RANDOM_BITS) as u64
    }

    pub fn random_bits(self) -> u128 {
        self.0 & ((1u128 << RANDOM_BITS) - 1)
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }

    fn encode(self) -> [u8; ENCODED_LEN] {
        let mut out = [0u8; ENCODED_LEN];
        let mut v = self.0;
        for slot in out.iter_mut().rev() {
            *slot = ALPHABET[(v & 0x1f) as usize];
            v >>= 5;
        }
        out
    }
}

impl fmt::Display for ParticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let buf = self.encode();
        // alphabet is ASCII
        f.write_str(core::str::from_utf8(&buf).unwrap_or_default())
    }
}

impl fmt::Debug for ParticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParticleId({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIdError;

impl fmt::Display for ParseIdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("malformed particle id")
    }
}

fn decode_char(c: u8) -> Option<u128> {
    let c = c.to_ascii_uppercase();
    // Crockford aliases
    let c = match c {
        b'O' => b'0',
        b'I' | b'L' => b'1',
        other => other,
    };
    ALPHABET.iter().position(|&a| a == c).map(|p| p as u128)
}

impl FromStr for ParticleId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != ENCODED_LEN {
            return Err(ParseIdError);
        }
        // 26 * 5 = 130 bits; the leading character may carry only 3.
        if decode_char(bytes[0]).ok_or(ParseIdError)? > 7 {
            return Err(ParseIdError);
        }
        let mut v: u128 = 0;
        for &b in bytes {
            v = (v << 5) | decode_char(b).ok_or(ParseIdError)?;
        }
        Ok(ParticleId(v))
    }
}

impl Serialize for ParticleId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let buf = self.encode();
        s.serialize_str(core::str::from_utf8(&buf).map_err(serde::ser::Error::custom)?)
    }
}

impl<'de> Deserialize<'de> for ParticleId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom("malformed particle id"))
    }
}

/// Mints the id for a particle created at `now`. The random suffix is drawn
/// from a splitmix64 stream seeded with `rng_seed`, so the result is a pure
/// function of its arguments.
pub fn new_particle_id(now: u64, rng_seed: u64) -> ParticleId {
    let mut rng = SplitMix64::new(rng_seed);
    let hi = rng.next_u64() as u128;
    let lo = (rng.next_u64() >> 48) as u128;
    ParticleId::from_parts(now, (hi << 16) | lo)
}

/// Strand identifier, unique within one graph and never reused.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrandId(pub u64);

impl fmt::Display for StrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn zero_case_has_zero_prefix() {
        let id = new_particle_id(0, 0);
        assert_eq!(id.timestamp_ms(), 0);
        assert!(id.to_string().starts_with("0000000000"));
        assert_eq!(id.to_string().len(), 26);
    }

    #[test]
    fn deterministic() {
        assert_eq!(new_particle_id(1234, 99), new_particle_id(1234, 99));
        assert_ne!(new_particle_id(1234, 99), new_particle_id(1234, 100));
    }

    #[test]
    fn earlier_timestamp_sorts_first_as_text() {
        // Hand oracle: 1000 = 0b11_11101000 and 2000 = 0b111_11010000 in the
        // 48-bit prefix. The prefix occupies the first ten characters (the
        // first one carries 3 bits). 1000 = 31*32 + 8 -> "...0Z8", and
        // 2000 = 1*1024 + 30*32 + 16 -> "...1YG".
        let a = new_particle_id(1000, u64::MAX).to_string();
        let b = new_particle_id(2000, 0).to_string();
        assert_eq!(&a[..10], "00000000Z8");
        assert_eq!(&b[..10], "00000001YG");
        assert!(a < b);
    }

    #[test]
    fn parse_round_trip_and_rejects_garbage() {
        let id = new_particle_id(1_700_000_000_000, 42);
        let s = id.to_string();
        assert_eq!(s.parse::<ParticleId>().unwrap(), id);
        assert_eq!(s.to_lowercase().parse::<ParticleId>().unwrap(), id);
        assert!("short".parse::<ParticleId>().is_err());
        assert!("8ZZZZZZZZZZZZZZZZZZZZZZZZZ".parse::<ParticleId>().is_err());
        assert!("0000000000000000000000000U".parse::<ParticleId>().is_err());
    }
}

//! The interface the interpreter uses to reach contract storage, account
//! metadata and block hashes.

use primitive_types::H160;

use super::Word;

pub type Address = H160;

/// Lowest 160 bits of a word, as the EVM does when a word names an account.
pub fn word_to_address(word: Word) -> Address {
    let be = word.to_big_endian();
    Address::from_slice(&be[12..])
}

pub fn address_to_word(addr: Address) -> Word {
    Word::from_big_endian(addr.as_bytes())
}

/// Account metadata returned by lookups. Code bytes are derived from
/// `code_seed` by [`code_byte`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Account {
    pub balance: Word,
    pub code_size: u64,
    pub code_seed: u64,
}

impl Account {
    /// `len` code bytes starting at `offset`, zero past the end of the code.
    pub fn code_slice(&self, offset: u64, len: usize) -> Vec<u8> {
        (0..len as u64)
            .map(|i| {
                let at = offset.saturating_add(i);
                if at < self.code_size {
                    code_byte(self.code_seed, at)
                } else {
                    0
                }
            })
            .collect()
    }
}

/// Which layer served a state read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    /// Application-level LRU.
    Lru,
    /// Simulated OS page cache.
    Page,
    /// Neither cache held the key.
    Store,
    /// No lookup was needed (e.g. out-of-range block height).
    None,
}

impl Layer {
    pub fn is_cache_hit(self) -> bool {
        matches!(self, Layer::Lru | Layer::Page)
    }
}

/// A value together with the simulated cost of fetching it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access<T> {
    pub value: T,
    pub cost_ns: u64,
    pub layer: Layer,
}

impl<T> Access<T> {
    pub fn free(value: T) -> Self {
        Access { value, cost_ns: 0, layer: Layer::None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("state store unavailable: {0}")]
    StoreUnavailable(#[from] std::io::Error),
    #[error("state store corrupt: {0}")]
    Corrupt(String),
}

/// State as seen from a single execution.
pub trait StateAccess {
    fn storage_read(&mut self, addr: Address, slot: Word) -> Result<Access<Word>, StateError>;

    /// Writes `value` and returns the previous one.
    fn storage_write(&mut self, addr: Address, slot: Word, value: Word) -> Result<Access<Word>, StateError>;

    fn account(&mut self, addr: Address) -> Result<Access<Account>, StateError>;

    /// Hash of block `height` when it is one of the 256 ancestors of
    /// `current`; the zero word otherwise.
    fn block_hash(&mut self, height: Word, current: u64) -> Result<Access<Word>, StateError>;
}

/// Whether `height` is one of the 256 most recent ancestors of `current`.
pub fn blockhash_in_range(height: Word, current: u64) -> Option<u64> {
    if height.bits() > 64 {
        return None;
    }
    let h = height.low_u64();
    (h < current && current - h <= 256).then_some(h)
}

/// SplitMix64 finaliser; the building block for all synthetic state.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds bytes into a seeded 64-bit hash.
pub fn hash_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = mix64(seed);
    for chunk in bytes.chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ u64::from_le_bytes(buf));
    }
    mix64(h ^ bytes.len() as u64)
}

/// A pseudo-random word from a 64-bit hash.
pub fn word_from_hash(h: u64) -> Word {
    let limbs = [mix64(h), mix64(h ^ 1), mix64(h ^ 2), mix64(h ^ 3)];
    primitive_types::U256(limbs)
}

pub fn code_byte(seed: u64, index: u64) -> u8 {
    (mix64(seed ^ (index / 8).wrapping_mul(0x2545_f491_4f6c_dd1d)) >> ((index % 8) * 8)) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_round_trip_truncates_high_bits() {
        let w = Word::MAX;
        let a = word_to_address(w);
        assert_eq!(address_to_word(a), (Word::one() << 160) - 1);
    }

    #[test]
    fn blockhash_window() {
        assert_eq!(blockhash_in_range(Word::from(1000u64), 1000), None);
        assert_eq!(blockhash_in_range(Word::from(999u64), 1000), Some(999));
        assert_eq!(blockhash_in_range(Word::from(744u64), 1000), Some(744));
        assert_eq!(blockhash_in_range(Word::from(743u64), 1000), None);
        assert_eq!(blockhash_in_range(Word::from(1001u64), 1000), None);
        assert_eq!(blockhash_in_range(Word::MAX, 1000), None);
    }

    #[test]
    fn code_slice_zero_pads() {
        let acct = Account { balance: Word::zero(), code_size: 3, code_seed: 42 };
        let bytes = acct.code_slice(1, 4);
        assert_eq!(bytes[2..], [0, 0]);
        assert_eq!(bytes[0], code_byte(42, 1));
    }
}

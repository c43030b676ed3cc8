//! Persistent key-value stores behind the cache layers.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::vm::{Address, StateError, Word};

/// Key of a state item. Only storage items are ever persisted; accounts and
/// block hashes are synthetic but share the cache layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateKey {
    Storage { addr: Address, slot: Word },
    Account(Address),
    BlockHash(u64),
}

pub trait KvStore {
    fn get(&self, key: &StateKey) -> Result<Option<Word>, StateError>;

    /// Stores `value`; the zero word removes the key.
    fn put(&mut self, key: StateKey, value: Word) -> Result<(), StateError>;

    /// All present entries, sorted by key.
    fn entries(&self) -> Vec<(StateKey, Word)>;

    fn flush(&mut self) -> Result<(), StateError> {
        Ok(())
    }

    /// Makes the store hold exactly `entries`.
    fn replace_all(&mut self, entries: &[(StateKey, Word)]) -> Result<(), StateError> {
        let target: HashMap<StateKey, Word> = entries.iter().copied().collect();
        for (key, _) in self.entries() {
            if !target.contains_key(&key) {
                self.put(key, Word::zero())?;
            }
        }
        for (key, value) in entries {
            if self.get(key)? != Some(*value) {
                self.put(*key, *value)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemStore {
    map: HashMap<StateKey, Word>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl KvStore for MemStore {
    fn get(&self, key: &StateKey) -> Result<Option<Word>, StateError> {
        Ok(self.map.get(key).copied())
    }

    fn put(&mut self, key: StateKey, value: Word) -> Result<(), StateError> {
        if value.is_zero() {
            self.map.remove(&key);
        } else {
            self.map.insert(key, value);
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(StateKey, Word)> {
        let mut out: Vec<_> = self.map.iter().map(|(k, v)| (*k, *v)).collect();
        out.sort();
        out
    }
}

const RECORD_LEN: usize = 1 + 20 + 32 + 32;
const TAG_STORAGE: u8 = 1;

/// Append-only log of fixed-size records with an in-memory index rebuilt
/// on open. Later records win.
#[derive(Debug)]
pub struct LogStore {
    path: PathBuf,
    writer: BufWriter<File>,
    index: HashMap<StateKey, Word>,
}

impl LogStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StateError> {
        let path = path.as_ref().to_path_buf();
        let mut index = HashMap::new();
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(&path)?.read_to_end(&mut bytes)?;
            if bytes.len() % RECORD_LEN != 0 {
                return Err(StateError::Corrupt(format!(
                    "{}: length {} is not a multiple of the record size",
                    path.display(),
                    bytes.len()
                )));
            }
            for record in bytes.chunks_exact(RECORD_LEN) {
                let (key, value) = decode_record(record)?;
                if value.is_zero() {
                    index.remove(&key);
                } else {
                    index.insert(key, value);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LogStore { path, writer: BufWriter::new(file), index })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn encode_record(key: &StateKey, value: Word) -> Option<[u8; RECORD_LEN]> {
    let StateKey::Storage { addr, slot } = key else {
        return None;
    };
    let mut rec = [0u8; RECORD_LEN];
    rec[0] = TAG_STORAGE;
    rec[1..21].copy_from_slice(addr.as_bytes());
    rec[21..53].copy_from_slice(&slot.to_big_endian());
    rec[53..].copy_from_slice(&value.to_big_endian());
    Some(rec)
}

fn decode_record(rec: &[u8]) -> Result<(StateKey, Word), StateError> {
    if rec[0] != TAG_STORAGE {
        return Err(StateError::Corrupt(format!("unknown record tag {}", rec[0])));
    }
    let addr = Address::from_slice(&rec[1..21]);
    let slot = Word::from_big_endian(&rec[21..53]);
    let value = Word::from_big_endian(&rec[53..]);
    Ok((StateKey::Storage { addr, slot }, value))
}

impl KvStore for LogStore {
    fn get(&self, key: &StateKey) -> Result<Option<Word>, StateError> {
        Ok(self.index.get(key).copied())
    }

    fn put(&mut self, key: StateKey, value: Word) -> Result<(), StateError> {
        let Some(record) = encode_record(&key, value) else {
            return Err(StateError::Corrupt(format!("{key:?} cannot be persisted")));
        };
        self.writer.write_all(&record)?;
        if value.is_zero() {
            self.index.remove(&key);
        } else {
            self.index.insert(key, value);
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(StateKey, Word)> {
        let mut out: Vec<_> = self.index.iter().map(|(k, v)| (*k, *v)).collect();
        out.sort();
        out
    }

    fn flush(&mut self) -> Result<(), StateError> {
        self.writer.flush()?;
        Ok(())
    }
}

impl Drop for LogStore {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

//! Contract storage, account metadata and block hashes behind an
//! application LRU and a simulated page cache.
//!
//! Every read walks the layers in order (LRU, page cache, store) and
//! reports which layer served it together with the simulated latency from
//! [`IoCostModel`]. Writes go through to the store and populate both layers.

pub mod store;

use std::num::NonZeroUsize;

use lru::LruCache;
use serde::{Deserialize, Serialize};

pub use store::{KvStore, LogStore, MemStore, StateKey};

use crate::vm::host::{blockhash_in_range, hash_bytes, mix64, word_from_hash};
use crate::vm::{Access, Account, Address, Layer, StateAccess, StateError, Word};

/// Simulated latency of each layer, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCostModel {
    pub lru_hit_ns: u64,
    pub page_hit_ns: u64,
    pub miss_ns: u64,
    pub write_ns: u64,
}

impl Default for IoCostModel {
    fn default() -> Self {
        IoCostModel { lru_hit_ns: 100, page_hit_ns: 5_000, miss_ns: 150_000, write_ns: 5_000 }
    }
}

impl IoCostModel {
    /// Every latency multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        IoCostModel {
            lru_hit_ns: self.lru_hit_ns * factor,
            page_hit_ns: self.page_hit_ns * factor,
            miss_ns: self.miss_ns * factor,
            write_ns: self.write_ns * factor,
        }
    }

    pub fn read_cost(&self, layer: Layer) -> u64 {
        match layer {
            Layer::Lru => self.lru_hit_ns,
            Layer::Page => self.page_hit_ns,
            Layer::Store => self.miss_ns,
            Layer::None => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn reads(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn hit_rate(&self) -> f64 {
        if self.reads() == 0 {
            0.0
        } else {
            self.hits as f64 / self.reads() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateConfig {
    /// Application LRU capacity in entries; 0 disables the layer.
    pub lru_capacity: usize,
    /// Page-cache capacity in entries; 0 disables the layer.
    pub page_capacity: usize,
    pub costs: IoCostModel,
    /// Seed for synthetic accounts and block hashes.
    pub seed: u64,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { lru_capacity: 1024, page_capacity: 65_536, costs: IoCostModel::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CachedValue {
    Word(Word),
    Account(Account),
}

/// Complete copy of a backend's data, cache contents and counters.
#[derive(Debug, Clone)]
pub struct Snapshot {
    entries: Vec<(StateKey, Word)>,
    /// Least recently used first.
    lru: Vec<(StateKey, CachedValue)>,
    page: Vec<StateKey>,
    lru_stats: CacheStats,
    page_stats: CacheStats,
}

impl Snapshot {
    pub fn entries(&self) -> &[(StateKey, Word)] {
        &self.entries
    }
}

const NS_ACCOUNT: u64 = 0xacc0_u64 << 48;
const NS_BLOCK: u64 = 0xb10c_u64 << 48;

pub struct StateBackend<S: KvStore = MemStore> {
    store: S,
    lru: Option<LruCache<StateKey, CachedValue>>,
    page: Option<LruCache<StateKey, ()>>,
    config: StateConfig,
    lru_stats: CacheStats,
    page_stats: CacheStats,
}

impl StateBackend<MemStore> {
    pub fn in_memory(config: StateConfig) -> Self {
        StateBackend::new(MemStore::new(), config)
    }
}

impl StateBackend<LogStore> {
    pub fn open(path: impl AsRef<std::path::Path>, config: StateConfig) -> Result<Self, StateError> {
        Ok(StateBackend::new(LogStore::open(path)?, config))
    }
}

impl<S: KvStore> StateBackend<S> {
    pub fn new(store: S, config: StateConfig) -> Self {
        StateBackend {
            store,
            lru: NonZeroUsize::new(config.lru_capacity).map(LruCache::new),
            page: NonZeroUsize::new(config.page_capacity).map(LruCache::new),
            config,
            lru_stats: CacheStats::default(),
            page_stats: CacheStats::default(),
        }
    }

    pub fn config(&self) -> &StateConfig {
        &self.config
    }

    pub fn costs(&self) -> &IoCostModel {
        &self.config.costs
    }

    pub fn set_costs(&mut self, costs: IoCostModel) {
        self.config.costs = costs;
    }

    pub fn lru_stats(&self) -> CacheStats {
        self.lru_stats
    }

    pub fn page_stats(&self) -> CacheStats {
        self.page_stats
    }

    pub fn reset_stats(&mut self) {
        self.lru_stats = CacheStats::default();
        self.page_stats = CacheStats::default();
    }

    pub fn lru_len(&self) -> usize {
        self.lru.as_ref().map_or(0, LruCache::len)
    }

    pub fn page_len(&self) -> usize {
        self.page.as_ref().map_or(0, LruCache::len)
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn flush(&mut self) -> Result<(), StateError> {
        self.store.flush()
    }

    /// Whether `key` is resident in the application LRU (no promotion).
    pub fn lru_contains(&self, key: &StateKey) -> bool {
        self.lru.as_ref().is_some_and(|c| c.contains(key))
    }

    /// Empties both cache layers; persisted data is untouched.
    pub fn drop_caches(&mut self) {
        self.drop_app_cache();
        if let Some(page) = &mut self.page {
            page.clear();
        }
    }

    /// Empties only the application LRU, as a process restart would.
    pub fn drop_app_cache(&mut self) {
        if let Some(lru) = &mut self.lru {
            lru.clear();
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let mut lru: Vec<_> = self.lru.as_ref().map(|c| c.iter().map(|(k, v)| (*k, *v)).collect()).unwrap_or_default();
        lru.reverse();
        let mut page: Vec<_> = self.page.as_ref().map(|c| c.iter().map(|(k, _)| *k).collect()).unwrap_or_default();
        page.reverse();
        Snapshot { entries: self.store.entries(), lru, page, lru_stats: self.lru_stats, page_stats: self.page_stats }
    }

    /// Restores data, cache contents and counters.
    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<(), StateError> {
        self.store.replace_all(&snapshot.entries)?;
        if let Some(lru) = &mut self.lru {
            lru.clear();
            for (k, v) in &snapshot.lru {
                lru.push(*k, *v);
            }
        }
        if let Some(page) = &mut self.page {
            page.clear();
            for k in &snapshot.page {
                page.push(*k, ());
            }
        }
        self.lru_stats = snapshot.lru_stats;
        self.page_stats = snapshot.page_stats;
        Ok(())
    }

    /// Restores persisted data only. Cache residency and counters are kept;
    /// cached values are refreshed to stay consistent with the store.
    pub fn restore_data(&mut self, snapshot: &Snapshot) -> Result<(), StateError> {
        self.store.replace_all(&snapshot.entries)?;
        if let Some(lru) = &mut self.lru {
            for (key, value) in lru.iter_mut() {
                if let (StateKey::Storage { .. }, CachedValue::Word(w)) = (key, value) {
                    *w = self.store.get(key)?.unwrap_or_default();
                }
            }
        }
        Ok(())
    }

    fn synthesize(&self, key: &StateKey) -> CachedValue {
        match key {
            StateKey::Account(addr) => {
                let h = hash_bytes(self.config.seed ^ NS_ACCOUNT, addr.as_bytes());
                CachedValue::Account(Account {
                    balance: word_from_hash(h) >> 128,
                    code_size: mix64(h ^ 0x51ce) % 24_577,
                    code_seed: mix64(h ^ 0xc0de),
                })
            }
            StateKey::BlockHash(height) => {
                let h = hash_bytes(self.config.seed ^ NS_BLOCK, &height.to_be_bytes());
                CachedValue::Word(word_from_hash(h))
            }
            StateKey::Storage { .. } => CachedValue::Word(Word::zero()),
        }
    }

    fn load(&self, key: &StateKey) -> Result<CachedValue, StateError> {
        match key {
            StateKey::Storage { .. } => Ok(CachedValue::Word(self.store.get(key)?.unwrap_or_default())),
            _ => Ok(self.synthesize(key)),
        }
    }

    fn lru_insert(&mut self, key: StateKey, value: CachedValue) {
        if let Some(lru) = &mut self.lru {
            if let Some((evicted, _)) = lru.push(key, value) {
                if evicted != key {
                    self.lru_stats.evictions += 1;
                }
            }
        }
    }

    fn page_insert(&mut self, key: StateKey) {
        if let Some(page) = &mut self.page {
            if let Some((evicted, _)) = page.push(key, ()) {
                if evicted != key {
                    self.page_stats.evictions += 1;
                }
            }
        }
    }

    /// Reads `key` through the cache layers.
    fn read(&mut self, key: StateKey) -> Result<(CachedValue, Layer), StateError> {
        if let Some(value) = self.lru.as_mut().and_then(|c| c.get(&key)).copied() {
            self.lru_stats.hits += 1;
            return Ok((value, Layer::Lru));
        }
        self.lru_stats.misses += 1;
        let in_page = self.page.as_mut().is_some_and(|p| p.get(&key).is_some());
        let layer = if in_page {
            self.page_stats.hits += 1;
            Layer::Page
        } else {
            self.page_stats.misses += 1;
            self.page_insert(key);
            Layer::Store
        };
        let value = self.load(&key)?;
        self.lru_insert(key, value);
        Ok((value, layer))
    }

    fn access<T>(&self, value: T, layer: Layer) -> Access<T> {
        Access { value, cost_ns: self.config.costs.read_cost(layer), layer }
    }

    /// Reads a storage slot; absent slots are zero.
    pub fn storage_read(&mut self, addr: Address, slot: Word) -> Result<Access<Word>, StateError> {
        let (value, layer) = self.read(StateKey::Storage { addr, slot })?;
        let CachedValue::Word(w) = value else { unreachable!("storage keys cache words") };
        Ok(self.access(w, layer))
    }

    /// Write-through store; returns the previous value.
    pub fn storage_write(&mut self, addr: Address, slot: Word, value: Word) -> Result<Access<Word>, StateError> {
        let key = StateKey::Storage { addr, slot };
        let old = match self.lru.as_ref().and_then(|c| c.peek(&key)) {
            Some(CachedValue::Word(w)) => *w,
            _ => self.store.get(&key)?.unwrap_or_default(),
        };
        self.store.put(key, value)?;
        self.lru_insert(key, CachedValue::Word(value));
        self.page_insert(key);
        Ok(Access { value: old, cost_ns: self.config.costs.write_ns, layer: Layer::None })
    }

    pub fn account_lookup(&mut self, addr: Address) -> Result<Access<Account>, StateError> {
        let (value, layer) = self.read(StateKey::Account(addr))?;
        let CachedValue::Account(a) = value else { unreachable!("account keys cache accounts") };
        Ok(self.access(a, layer))
    }

    /// Hash of block `height` seen from block `current`; zero outside the
    /// 256-block window, without touching the caches.
    pub fn blockhash(&mut self, height: Word, current: u64) -> Result<Access<Word>, StateError> {
        let Some(h) = blockhash_in_range(height, current) else {
            return Ok(Access::free(Word::zero()));
        };
        let (value, layer) = self.read(StateKey::BlockHash(h))?;
        let CachedValue::Word(w) = value else { unreachable!("block keys cache words") };
        Ok(self.access(w, layer))
    }
}

impl<S: KvStore> StateAccess for StateBackend<S> {
    fn storage_read(&mut self, addr: Address, slot: Word) -> Result<Access<Word>, StateError> {
        StateBackend::storage_read(self, addr, slot)
    }

    fn storage_write(&mut self, addr: Address, slot: Word, value: Word) -> Result<Access<Word>, StateError> {
        StateBackend::storage_write(self, addr, slot, value)
    }

    fn account(&mut self, addr: Address) -> Result<Access<Account>, StateError> {
        self.account_lookup(addr)
    }

    fn block_hash(&mut self, height: Word, current: u64) -> Result<Access<Word>, StateError> {
        self.blockhash(height, current)
    }
}

//! Process-wide tables keyed by value (grid shape plus parameters).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::grid::Grid;

pub(crate) struct KeyedCache<V> {
    map: Mutex<HashMap<Vec<u64>, Arc<V>>>,
}

impl<V> KeyedCache<V> {
    pub(crate) fn new() -> Self {
        Self { map: Mutex::new(HashMap::new()) }
    }

    /// Look up `key`, building the value outside the lock on a miss. Two
    /// racing builders produce equal values; the first insert wins.
    pub(crate) fn get_or_build<F>(&self, key: Vec<u64>, build: F) -> Arc<V>
    where
        F: FnOnce() -> V,
    {
        if let Some(v) = self.map.lock().expect("cache poisoned").get(&key) {
            return v.clone();
        }
        let value = Arc::new(build());
        self.map.lock().expect("cache poisoned").entry(key).or_insert(value).clone()
    }
}

pub(crate) fn grid_key(grid: &Grid) -> Vec<u64> {
    let mut key = vec![grid.dim() as u64];
    for a in 0..grid.dim() {
        key.push(grid.extent(a).to_bits());
        key.push(grid.points(a) as u64);
    }
    key
}

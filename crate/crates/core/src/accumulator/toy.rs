use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::TreeHasher;

type InternTable = HashMap<(u8, u64, u64), u64>;

/// Hasher over the integer domain `[0, end)` that interns every distinct
/// input to a fresh identifier, so it is injective by construction.
///
/// Clones share the intern table; roots are only comparable between trees
/// built from clones of one instance.
#[derive(Clone, Debug)]
pub struct ToyHasher {
    end: u64,
    table: Arc<Mutex<InternTable>>,
}

impl ToyHasher {
    pub fn new(end: u64) -> Self {
        Self { end, table: Arc::default() }
    }

    fn intern(&self, key: (u8, u64, u64)) -> u64 {
        let mut table = self.table.lock().expect("toy hasher table poisoned");
        let next = table.len() as u64 + 1;
        *table.entry(key).or_insert(next)
    }
}

impl TreeHasher for ToyHasher {
    type Elem = u64;
    type Digest = u64;

    fn domain_start(&self) -> u64 {
        0
    }

    fn domain_end(&self) -> u64 {
        self.end
    }

    fn successor(&self, e: u64) -> u64 {
        e + 1
    }

    fn leaf(&self, a: u64, b: u64) -> u64 {
        self.intern((0, a, b))
    }

    fn node(&self, left: u64, right: u64) -> u64 {
        self.intern((1, left, right))
    }

    fn empty_leaf(&self) -> u64 {
        0
    }
}

//! Negative accumulator backed by a complementary Merkle tree.
//!
//! The tree stores the complement of the blocked set as disjoint half-open
//! intervals `[a, b)`, one per leaf slot. Non-membership of `x` is shown by a
//! leaf `[a, b)` with `a <= x < b` plus its authentication path.
//!
//! The structure is generic over a [`TreeHasher`], which fixes the ordered
//! element domain and the two-to-one hash. Production trees use
//! [`FieldTreeHasher`]; [`ToyHasher`] runs the same logic over a small
//! integer domain so tests can enumerate every point.

mod field_tree;
pub mod gadget;
mod toy;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use field_tree::{FieldTree, FieldTreeHasher, FieldWitness, SerializedFieldTree};
pub use toy::ToyHasher;

pub trait TreeHasher: Clone {
    type Elem: Copy + Ord + Hash + Debug;
    type Digest: Copy + Eq + Hash + Debug;

    /// Smallest element of the domain.
    fn domain_start(&self) -> Self::Elem;
    /// Exclusive upper end of the authenticatable domain.
    fn domain_end(&self) -> Self::Elem;
    /// `e + 1`; only called with `e < domain_end()`.
    fn successor(&self, e: Self::Elem) -> Self::Elem;
    fn leaf(&self, a: Self::Elem, b: Self::Elem) -> Self::Digest;
    fn node(&self, left: Self::Digest, right: Self::Digest) -> Self::Digest;
    /// Content of an unoccupied leaf slot.
    fn empty_leaf(&self) -> Self::Digest;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccumulatorError {
    #[error("element is already blocked")]
    AlreadyBlocked,
    #[error("element is not blocked")]
    NotBlocked,
    #[error("no free leaf slot (capacity {0})")]
    CapacityExceeded(u64),
    #[error("element lies outside the authenticatable domain")]
    OutOfDomain,
    #[error("serialized tree is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval<E> {
    pub a: E,
    pub b: E,
}

impl<E: Ord> Interval<E> {
    pub fn contains(&self, x: &E) -> bool {
        self.a <= *x && *x < self.b
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonMembershipWitness<E, D> {
    pub a: E,
    pub b: E,
    pub leaf_index: u64,
    /// Sibling digests from the leaf level upwards.
    pub path: Vec<D>,
}

impl<E, D> NonMembershipWitness<E, D> {
    /// Direction bit per level: `true` when the running node is a right child.
    pub fn directions(&self) -> Vec<bool> {
        (0..self.path.len()).map(|i| (self.leaf_index >> i) & 1 == 1).collect()
    }
}

/// Slots touched by one update and the resulting root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateRecord<D> {
    pub changed_slots: Vec<u64>,
    pub root: D,
}

#[derive(Clone, Debug)]
pub struct ComplementaryMerkleTree<H: TreeHasher> {
    hasher: H,
    depth: u32,
    slots: BTreeMap<u64, Interval<H::Elem>>,
    // Free slots are `freed ∪ [high_water, 2^depth)`; `high_water - 1` is
    // always occupied, which keeps the representation canonical.
    freed: BTreeSet<u64>,
    high_water: u64,
    index: BTreeMap<H::Elem, u64>,
    blocked: BTreeSet<H::Elem>,
    // Non-default internal nodes keyed by (level, position); level 0 holds leaves.
    nodes: HashMap<(u32, u64), H::Digest>,
    empty: Vec<H::Digest>,
}

impl<H: TreeHasher> ComplementaryMerkleTree<H> {
    /// A tree whose single interval covers the whole domain.
    pub fn new(hasher: H, depth: u32) -> Self {
        assert!((1..=40).contains(&depth), "depth out of range");
        let mut empty = Vec::with_capacity(depth as usize + 1);
        empty.push(hasher.empty_leaf());
        for level in 0..depth as usize {
            empty.push(hasher.node(empty[level], empty[level]));
        }
        let mut tree = Self {
            depth,
            slots: BTreeMap::new(),
            freed: BTreeSet::new(),
            high_water: 0,
            index: BTreeMap::new(),
            blocked: BTreeSet::new(),
            nodes: HashMap::new(),
            empty,
            hasher,
        };
        let whole = Interval { a: tree.hasher.domain_start(), b: tree.hasher.domain_end() };
        let slot = tree.allocate().expect("fresh tree has free slots");
        tree.put(slot, whole);
        tree.refresh(&[slot]);
        tree
    }

    pub fn hasher(&self) -> &H {
        &self.hasher
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn root(&self) -> H::Digest {
        self.node_at(self.depth, 0)
    }

    pub fn blocked(&self) -> &BTreeSet<H::Elem> {
        &self.blocked
    }

    pub fn is_blocked(&self, x: &H::Elem) -> bool {
        self.blocked.contains(x)
    }

    /// Occupied slots in slot order.
    pub fn slots(&self) -> impl Iterator<Item = (u64, Interval<H::Elem>)> + '_ {
        self.slots.iter().map(|(k, v)| (*k, *v))
    }

    pub fn slot(&self, index: u64) -> Option<Interval<H::Elem>> {
        self.slots.get(&index).copied()
    }

    /// Stored intervals ordered by lower bound.
    pub fn intervals(&self) -> Vec<Interval<H::Elem>> {
        self.index.values().map(|s| self.slots[s]).collect()
    }

    pub fn lowest_free_slot(&self) -> Option<u64> {
        let tail = (self.high_water < self.capacity()).then_some(self.high_water);
        match (self.freed.first().copied(), tail) {
            (Some(f), _) => Some(f),
            (None, t) => t,
        }
    }

    fn containing(&self, x: &H::Elem) -> Option<(u64, Interval<H::Elem>)> {
        let (_, slot) = self.index.range(..=*x).next_back()?;
        let interval = self.slots[slot];
        interval.contains(x).then_some((*slot, interval))
    }

    pub fn add(&mut self, x: H::Elem) -> Result<UpdateRecord<H::Digest>, AccumulatorError> {
        if self.blocked.contains(&x) {
            return Err(AccumulatorError::AlreadyBlocked);
        }
        if x < self.hasher.domain_start() || x >= self.hasher.domain_end() {
            return Err(AccumulatorError::OutOfDomain);
        }
        let (slot, Interval { a, b }) = self
            .containing(&x)
            .expect("partition covers every unblocked domain element");
        let next = self.hasher.successor(x);
        let left = (a < x).then_some(Interval { a, b: x });
        let right = (next < b).then_some(Interval { a: next, b });

        let mut changed = vec![slot];
        self.index.remove(&a);
        match (left, right) {
            (Some(l), Some(r)) => {
                let Some(fresh) = self.allocate() else {
                    self.index.insert(a, slot);
                    return Err(AccumulatorError::CapacityExceeded(self.capacity()));
                };
                self.put(slot, l);
                self.put(fresh, r);
                changed.push(fresh);
            }
            (Some(only), None) | (None, Some(only)) => self.put(slot, only),
            (None, None) => self.release(slot),
        }
        self.blocked.insert(x);
        self.refresh(&changed);
        Ok(UpdateRecord { changed_slots: changed, root: self.root() })
    }

    pub fn remove(&mut self, x: H::Elem) -> Result<UpdateRecord<H::Digest>, AccumulatorError> {
        if !self.blocked.contains(&x) {
            return Err(AccumulatorError::NotBlocked);
        }
        let next = self.hasher.successor(x);
        let left = self
            .index
            .range(..x)
            .next_back()
            .map(|(_, s)| (*s, self.slots[s]))
            .filter(|(_, iv)| iv.b == x);
        let right = self.index.get(&next).map(|s| (*s, self.slots[s]));
        let merged = Interval {
            a: left.map_or(x, |(_, iv)| iv.a),
            b: right.map_or(next, |(_, iv)| iv.b),
        };

        let changed = match (left, right) {
            (Some((ls, _)), Some((rs, r))) => {
                self.index.remove(&r.a);
                self.release(rs);
                self.put(ls, merged);
                vec![ls, rs]
            }
            (Some((ls, _)), None) => {
                self.put(ls, merged);
                vec![ls]
            }
            (None, Some((rs, r))) => {
                self.index.remove(&r.a);
                self.put(rs, merged);
                vec![rs]
            }
            (None, None) => {
                let fresh = self
                    .allocate()
                    .ok_or(AccumulatorError::CapacityExceeded(self.capacity()))?;
                self.put(fresh, merged);
                vec![fresh]
            }
        };
        self.blocked.remove(&x);
        self.refresh(&changed);
        Ok(UpdateRecord { changed_slots: changed, root: self.root() })
    }

    /// Witness that `x` is not blocked, or `None` if it is (or lies outside
    /// the authenticatable domain).
    pub fn non_mem_prove(&self, x: &H::Elem) -> Option<NonMembershipWitness<H::Elem, H::Digest>> {
        let (slot, Interval { a, b }) = self.containing(x)?;
        Some(NonMembershipWitness { a, b, leaf_index: slot, path: self.path(slot) })
    }

    /// Sibling digests for a slot, occupied or not.
    pub fn path(&self, slot: u64) -> Vec<H::Digest> {
        (0..self.depth)
            .map(|level| self.node_at(level, (slot >> level) ^ 1))
            .collect()
    }

    fn node_at(&self, level: u32, pos: u64) -> H::Digest {
        self.nodes
            .get(&(level, pos))
            .copied()
            .unwrap_or(self.empty[level as usize])
    }

    fn allocate(&mut self) -> Option<u64> {
        if let Some(f) = self.freed.pop_first() {
            return Some(f);
        }
        if self.high_water < self.capacity() {
            self.high_water += 1;
            return Some(self.high_water - 1);
        }
        None
    }

    fn put(&mut self, slot: u64, interval: Interval<H::Elem>) {
        if let Some(old) = self.slots.insert(slot, interval) {
            if self.index.get(&old.a) == Some(&slot) {
                self.index.remove(&old.a);
            }
        }
        self.index.insert(interval.a, slot);
    }

    fn release(&mut self, slot: u64) {
        if let Some(old) = self.slots.remove(&slot) {
            if self.index.get(&old.a) == Some(&slot) {
                self.index.remove(&old.a);
            }
        }
        if slot + 1 == self.high_water {
            self.high_water -= 1;
            while self.high_water > 0 && self.freed.remove(&(self.high_water - 1)) {
                self.high_water -= 1;
            }
        } else {
            self.freed.insert(slot);
        }
    }

    fn set_node(&mut self, level: u32, pos: u64, value: H::Digest) {
        if value == self.empty[level as usize] {
            self.nodes.remove(&(level, pos));
        } else {
            self.nodes.insert((level, pos), value);
        }
    }

    fn refresh(&mut self, slots: &[u64]) {
        for &slot in slots {
            let content = match self.slots.get(&slot) {
                Some(iv) => self.hasher.leaf(iv.a, iv.b),
                None => self.hasher.empty_leaf(),
            };
            self.set_node(0, slot, content);
            let mut pos = slot;
            for level in 0..self.depth {
                let parent = pos >> 1;
                let left = self.node_at(level, parent << 1);
                let right = self.node_at(level, (parent << 1) | 1);
                let value = self.hasher.node(left, right);
                self.set_node(level + 1, parent, value);
                pos = parent;
            }
        }
    }

    /// Rebuilds a tree from its occupied slots and blocked set, checking
    /// that they form an exact partition of the domain.
    pub fn from_parts(
        hasher: H,
        depth: u32,
        occupied: impl IntoIterator<Item = (u64, Interval<H::Elem>)>,
        blocked: impl IntoIterator<Item = H::Elem>,
    ) -> Result<Self, AccumulatorError> {
        let bad = |m: &str| AccumulatorError::Inconsistent(m.to_string());
        let mut tree = Self::new(hasher, depth);
        tree.slots.clear();
        tree.index.clear();
        tree.nodes.clear();
        tree.freed.clear();
        tree.high_water = 0;
        for (slot, iv) in occupied {
            if slot >= tree.capacity() {
                return Err(bad("slot index beyond capacity"));
            }
            if iv.a >= iv.b {
                return Err(bad("empty interval"));
            }
            if tree.slots.insert(slot, iv).is_some() {
                return Err(bad("duplicate slot"));
            }
            if tree.index.insert(iv.a, slot).is_some() {
                return Err(bad("duplicate lower bound"));
            }
        }
        tree.blocked = blocked.into_iter().collect();
        if tree.blocked.len() as u64 > tree.capacity() {
            return Err(bad("more blocked elements than capacity"));
        }

        // Walk the domain: intervals and blocked points must alternate so
        // that every element is covered exactly once.
        let end = tree.hasher.domain_end();
        let mut cursor = tree.hasher.domain_start();
        let mut intervals = tree.index.values().map(|s| tree.slots[s]).peekable();
        let mut blocked = tree.blocked.iter().copied().peekable();
        while cursor < end {
            if let Some(iv) = intervals.peek().copied().filter(|iv| iv.a == cursor) {
                intervals.next();
                cursor = iv.b;
            } else if blocked.peek() == Some(&cursor) {
                blocked.next();
                cursor = tree.hasher.successor(cursor);
            } else {
                return Err(bad("domain element neither covered nor blocked"));
            }
        }
        if cursor != end || intervals.next().is_some() || blocked.next().is_some() {
            return Err(bad("intervals or blocked elements beyond the domain"));
        }

        tree.high_water = tree.slots.keys().next_back().map_or(0, |m| m + 1);
        tree.freed = (0..tree.high_water).filter(|s| !tree.slots.contains_key(s)).collect();
        tree.rebuild_nodes();
        Ok(tree)
    }

    fn rebuild_nodes(&mut self) {
        let mut level_nodes: BTreeMap<u64, H::Digest> = self
            .slots
            .iter()
            .map(|(s, iv)| (*s, self.hasher.leaf(iv.a, iv.b)))
            .collect();
        for level in 0..self.depth {
            let mut parents = BTreeMap::new();
            for (&pos, value) in &level_nodes {
                self.set_node(level, pos, *value);
                let parent = pos >> 1;
                if parents.contains_key(&parent) {
                    continue;
                }
                let sibling = |p: u64| {
                    level_nodes.get(&p).copied().unwrap_or(self.empty[level as usize])
                };
                let value = self.hasher.node(sibling(parent << 1), sibling((parent << 1) | 1));
                parents.insert(parent, value);
            }
            level_nodes = parents;
        }
        for (pos, value) in level_nodes {
            self.set_node(self.depth, pos, value);
        }
    }
}

/// Checks a non-membership witness against a root.
pub fn ver_non_mem<H: TreeHasher>(
    hasher: &H,
    depth: u32,
    root: &H::Digest,
    x: &H::Elem,
    witness: &NonMembershipWitness<H::Elem, H::Digest>,
) -> bool {
    if witness.path.len() != depth as usize || witness.leaf_index >> depth != 0 {
        return false;
    }
    if !(witness.a <= *x && *x < witness.b) {
        return false;
    }
    let mut current = hasher.leaf(witness.a, witness.b);
    for (sibling, is_right) in witness.path.iter().zip(witness.directions()) {
        current = if is_right {
            hasher.node(*sibling, current)
        } else {
            hasher.node(current, *sibling)
        };
    }
    current == *root
}

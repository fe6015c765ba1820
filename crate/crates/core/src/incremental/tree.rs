//! Memoized aggregation tree over the map results of one reduce partition.
//!
//! The tree is a treap ordered by `(timestamp, id)` whose priorities are a
//! fixed hash of the item id. Its shape is therefore a function of the leaf
//! set alone: an incrementally maintained tree and one built from scratch
//! over the same items are identical, and so are their floating-point
//! aggregates. Each node caches the merged moments of its subtree; an
//! insertion or removal recomputes only the nodes on the affected paths.

use super::Moments;
use crate::scalar::Scalar;
use crate::stream::ItemId;

pub type LeafKey = (u64, ItemId);

/// Priority of the tree node holding item `id` (splitmix64 finalizer).
pub fn tree_priority(id: ItemId) -> u64 {
    let mut z = id.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Link = Option<u32>;

#[derive(Clone, Debug)]
struct Node<S> {
    key: LeafKey,
    prio: u64,
    leaf: Moments<S>,
    agg: Moments<S>,
    left: Link,
    right: Link,
}

#[derive(Clone, Debug)]
pub struct AggTree<S> {
    nodes: Vec<Node<S>>,
    free: Vec<u32>,
    root: Link,
    len: usize,
    recomputed: u64,
}

impl<S: Scalar> Default for AggTree<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> AggTree<S> {
    pub fn new() -> Self {
        AggTree {
            nodes: Vec::new(),
            free: Vec::new(),
            root: None,
            len: 0,
            recomputed: 0,
        }
    }

    pub fn from_leaves(leaves: impl IntoIterator<Item = (LeafKey, Moments<S>)>) -> Self {
        let mut t = Self::new();
        for (k, m) in leaves {
            t.insert(k, m);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Moments over every leaf.
    pub fn total(&self) -> Moments<S> {
        self.agg(self.root)
    }

    /// Number of node aggregates recomputed since the last call.
    pub fn take_recomputed(&mut self) -> u64 {
        std::mem::take(&mut self.recomputed)
    }

    /// Leaf keys in order.
    pub fn keys(&self) -> Vec<LeafKey> {
        let mut out = Vec::with_capacity(self.len);
        self.collect_keys(self.root, &mut out);
        out
    }

    /// Depth of the deepest leaf; zero for an empty tree.
    pub fn height(&self) -> usize {
        self.height_of(self.root)
    }

    /// Inserts a leaf. Returns `false` (and changes nothing) if the key is
    /// already present.
    pub fn insert(&mut self, key: LeafKey, leaf: Moments<S>) -> bool {
        if self.contains(key) {
            return false;
        }
        let node = self.alloc(Node {
            key,
            prio: tree_priority(key.1),
            leaf,
            agg: leaf,
            left: None,
            right: None,
        });
        self.root = self.insert_at(self.root, node);
        self.len += 1;
        true
    }

    /// Removes a leaf; returns whether it was present.
    pub fn remove(&mut self, key: LeafKey) -> bool {
        let (root, removed) = self.remove_at(self.root, key);
        self.root = root;
        if removed {
            self.len -= 1;
        }
        removed
    }

    pub fn contains(&self, key: LeafKey) -> bool {
        let mut cur = self.root;
        while let Some(i) = cur {
            let n = &self.nodes[i as usize];
            cur = match key.cmp(&n.key) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => n.left,
                std::cmp::Ordering::Greater => n.right,
            };
        }
        false
    }

    fn alloc(&mut self, node: Node<S>) -> u32 {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn agg(&self, link: Link) -> Moments<S> {
        link.map(|i| self.nodes[i as usize].agg)
            .unwrap_or_else(Moments::empty)
    }

    fn update(&mut self, i: u32) {
        let (l, r, leaf) = {
            let n = &self.nodes[i as usize];
            (n.left, n.right, n.leaf)
        };
        let agg = self.agg(l).merge(&leaf).merge(&self.agg(r));
        self.nodes[i as usize].agg = agg;
        self.recomputed += 1;
    }

    fn outranks(&self, a: u32, b: u32) -> bool {
        let (na, nb) = (&self.nodes[a as usize], &self.nodes[b as usize]);
        (na.prio, na.key) > (nb.prio, nb.key)
    }

    fn insert_at(&mut self, link: Link, node: u32) -> Link {
        let Some(t) = link else {
            return Some(node);
        };
        if self.outranks(node, t) {
            let key = self.nodes[node as usize].key;
            let (l, r) = self.split(Some(t), key);
            let n = &mut self.nodes[node as usize];
            n.left = l;
            n.right = r;
            self.update(node);
            return Some(node);
        }
        if self.nodes[node as usize].key < self.nodes[t as usize].key {
            let l = self.insert_at(self.nodes[t as usize].left, node);
            self.nodes[t as usize].left = l;
        } else {
            let r = self.insert_at(self.nodes[t as usize].right, node);
            self.nodes[t as usize].right = r;
        }
        self.update(t);
        Some(t)
    }

    /// Splits into keys `< key` and keys `> key`.
    fn split(&mut self, link: Link, key: LeafKey) -> (Link, Link) {
        let Some(t) = link else {
            return (None, None);
        };
        if self.nodes[t as usize].key < key {
            let (l, r) = self.split(self.nodes[t as usize].right, key);
            self.nodes[t as usize].right = l;
            self.update(t);
            (Some(t), r)
        } else {
            let (l, r) = self.split(self.nodes[t as usize].left, key);
            self.nodes[t as usize].left = r;
            self.update(t);
            (l, Some(t))
        }
    }

    /// Joins two trees where every key of `a` precedes every key of `b`.
    fn merge(&mut self, a: Link, b: Link) -> Link {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                if self.outranks(x, y) {
                    let r = self.merge(self.nodes[x as usize].right, Some(y));
                    self.nodes[x as usize].right = r;
                    self.update(x);
                    Some(x)
                } else {
                    let l = self.merge(Some(x), self.nodes[y as usize].left);
                    self.nodes[y as usize].left = l;
                    self.update(y);
                    Some(y)
                }
            }
        }
    }

    fn remove_at(&mut self, link: Link, key: LeafKey) -> (Link, bool) {
        let Some(t) = link else {
            return (None, false);
        };
        let (tk, l, r) = {
            let n = &self.nodes[t as usize];
            (n.key, n.left, n.right)
        };
        match key.cmp(&tk) {
            std::cmp::Ordering::Equal => {
                self.free.push(t);
                (self.merge(l, r), true)
            }
            std::cmp::Ordering::Less => {
                let (nl, removed) = self.remove_at(l, key);
                if removed {
                    self.nodes[t as usize].left = nl;
                    self.update(t);
                }
                (Some(t), removed)
            }
            std::cmp::Ordering::Greater => {
                let (nr, removed) = self.remove_at(r, key);
                if removed {
                    self.nodes[t as usize].right = nr;
                    self.update(t);
                }
                (Some(t), removed)
            }
        }
    }

    fn collect_keys(&self, link: Link, out: &mut Vec<LeafKey>) {
        if let Some(i) = link {
            let n = &self.nodes[i as usize];
            self.collect_keys(n.left, out);
            out.push(n.key);
            self.collect_keys(n.right, out);
        }
    }

    fn height_of(&self, link: Link) -> usize {
        match link {
            None => 0,
            Some(i) => {
                let n = &self.nodes[i as usize];
                1 + self.height_of(n.left).max(self.height_of(n.right))
            }
        }
    }
}

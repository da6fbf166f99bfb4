//! Agglomerative dendrogram over the embedding table.
//!
//! Distances are cosine distances (`1 - cosine`). Clusters are merged in the
//! order of the naive primitive algorithm: at every step the globally closest
//! pair is merged, and exact distance ties go to the pair whose smallest member
//! codepoints compare lowest. The implementation keeps a cached nearest
//! neighbor per active cluster, which reproduces that order exactly while
//! usually avoiding the full O(n^2) scan per step.
//!
//! Node ids follow the usual dendrogram convention: leaves are `0..n` in table
//! order, and the internal node created by merge step `s` has id `n + s`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(Error::Config(format!("unknown linkage {other:?}"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

impl Linkage {
    /// Lance-Williams update: distance from `k` to the union of `a` (size
    /// `na`) and `b` (size `nb`).
    fn combine(self, d_ka: f64, d_kb: f64, na: usize, nb: usize) -> f64 {
        match self {
            Linkage::Single => d_ka.min(d_kb),
            Linkage::Complete => d_ka.max(d_kb),
            Linkage::Average => (na as f64 * d_ka + nb as f64 * d_kb) / (na + nb) as f64,
        }
    }
}

/// How `hint_for` resolves candidates that tie on every ranking criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Codepoint,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub id: usize,
    pub children: Option<(usize, usize)>,
    pub height: f64,
    /// Offset of this node's leaves in the tree's leaf ordering.
    start: usize,
    size: usize,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// One merge step: `left < right` are node ids, `height` the merge distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    parent: Vec<Option<usize>>,
    leaf_order: Vec<usize>,
    leaf_chars: Vec<char>,
    leaf_index: HashMap<char, usize>,
    root: usize,
}

impl PartialEq for ClusterTree {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.leaf_chars == other.leaf_chars
    }
}

/// Total order on candidate merges: distance, then the sorted pair of the two
/// clusters' smallest member codepoints.
#[derive(Debug, Clone, Copy)]
struct PairKey {
    dist: f64,
    lo: char,
    hi: char,
}

impl PairKey {
    fn new(dist: f64, a: char, b: char) -> Self {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        PairKey { dist, lo, hi }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

impl ClusterTree {
    pub fn build(table: &EmbeddingTable, linkage: Linkage) -> Self {
        let n = table.len();
        let mut dist = Condensed {
            n,
            d: Vec::with_capacity(n * (n - 1) / 2),
        };
        for i in 0..n {
            for j in i + 1..n {
                dist.d.push(1.0 - table.cosine_at(i, j));
            }
        }
        let merges = merge_sequence(&mut dist, table.chars(), linkage);
        Self::from_merges(table.chars().to_vec(), &merges)
    }

    /// Assemble a tree from a merge list whose entries reference node ids
    /// under the leaves-then-merges numbering.
    pub fn from_merges(leaf_chars: Vec<char>, merges: &[Merge]) -> Self {
        let n = leaf_chars.len();
        assert_eq!(merges.len() + 1, n, "a tree over n leaves needs n-1 merges");
        let mut nodes: Vec<ClusterNode> = (0..n)
            .map(|id| ClusterNode {
                id,
                children: None,
                height: 0.0,
                start: 0,
                size: 1,
            })
            .collect();
        let mut parent = vec![None; 2 * n - 1];
        for (step, m) in merges.iter().enumerate() {
            let id = n + step;
            let (l, r) = (m.left.min(m.right), m.left.max(m.right));
            let height = m.height.max(nodes[l].height).max(nodes[r].height);
            parent[l] = Some(id);
            parent[r] = Some(id);
            nodes.push(ClusterNode {
                id,
                children: Some((l, r)),
                height,
                start: 0,
                size: nodes[l].size + nodes[r].size,
            });
        }
        let root = nodes.len() - 1;

        // Preorder walk: each node's start is the position of its first leaf,
        // so every subtree owns a contiguous range.
        let mut leaf_order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            nodes[id].start = leaf_order.len();
            match nodes[id].children {
                None => leaf_order.push(id),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        let leaf_index = leaf_chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        ClusterTree {
            nodes,
            parent,
            leaf_order,
            leaf_chars,
            leaf_index,
            root,
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_height(&self) -> f64 {
        self.nodes[self.root].height
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_chars.len()
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&ClusterNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn leaf_char(&self, leaf: usize) -> char {
        self.leaf_chars[leaf]
    }

    pub fn leaf_chars(&self) -> &[char] {
        &self.leaf_chars
    }

    pub fn leaf_of(&self, c: char) -> Result<usize> {
        self.leaf_index.get(&c).copied().ok_or(Error::UnknownChar(c))
    }

    /// Leaf ids under `id`.
    pub fn member_leaves(&self, id: usize) -> &[usize] {
        let node = &self.nodes[id];
        &self.leaf_order[node.start..node.start + node.size]
    }

    pub fn members(&self, id: usize) -> impl Iterator<Item = char> + '_ {
        self.member_leaves(id).iter().map(|&l| self.leaf_chars[l])
    }

    pub fn merges(&self) -> impl Iterator<Item = Merge> + '_ {
        self.nodes[self.num_leaves()..].iter().map(|node| {
            let (left, right) = node.children.expect("internal node");
            Merge {
                left,
                right,
                height: node.height,
            }
        })
    }

    /// Text dump, one merge per line: `<step> <left_id> <right_id> <height>`.
    pub fn dump(&self) -> String {
        self.merges()
            .enumerate()
            .map(|(s, m)| format!("{s} {} {} {:?}\n", m.left, m.right, m.height))
            .collect()
    }

    pub fn parent_cluster(&self, id: usize) -> Result<usize> {
        self.node(id)?;
        self.parent[id].ok_or(Error::NoParent(id))
    }

    /// Ancestors of `id`, nearest first, ending at the root.
    pub fn ancestors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.parent[id], move |&p| self.parent[p])
    }

    pub fn cophenetic_distance(&self, a: char, b: char) -> Result<f64> {
        let (la, lb) = (self.leaf_of(a)?, self.leaf_of(b)?);
        if la == lb {
            return Ok(0.0);
        }
        let lca = self
            .ancestors(la)
            .find(|&p| self.contains_leaf(p, lb))
            .expect("root contains every leaf");
        Ok(self.nodes[lca].height)
    }

    /// Cophenetic distance from `leaf` to every leaf, indexed by leaf id.
    pub fn cophenetic_row(&self, leaf: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_leaves()];
        let mut below = leaf;
        for p in self.ancestors(leaf) {
            let (l, r) = self.nodes[p].children.expect("ancestor is internal");
            let other = if l == below { r } else { l };
            let h = self.nodes[p].height;
            for &x in self.member_leaves(other) {
                row[x] = h;
            }
            below = p;
        }
        row
    }

    fn contains_leaf(&self, id: usize, leaf: usize) -> bool {
        let node = &self.nodes[id];
        let pos = self.nodes[leaf].start;
        (node.start..node.start + node.size).contains(&pos)
    }

    /// Proximity feedback for `guess` against `target` on a scale of
    /// `levels`: 0 means correct, `levels` means maximally distant.
    pub fn feedback_level(&self, guess: char, target: char, levels: u32) -> Result<u32> {
        if guess == target {
            self.leaf_of(guess)?;
            return Ok(0);
        }
        let d = self.cophenetic_distance(guess, target)?;
        Ok(self.level_for_distance(d, levels))
    }

    /// Quantize a nonzero cophenetic distance into `1..=levels`.
    pub fn level_for_distance(&self, d: f64, levels: u32) -> u32 {
        let h = self.root_height();
        if h <= 0.0 || h.is_nan() {
            return 1;
        }
        let raw = 1.0 + (f64::from(levels - 1) * (d / h)).floor();
        (raw as u32).clamp(1, levels)
    }

    /// Every character other than `reference` whose feedback against
    /// `reference` would be `level`.
    pub fn candidates_at_level(&self, reference: char, level: u32, levels: u32) -> Result<BTreeSet<char>> {
        let leaf = self.leaf_of(reference)?;
        let row = self.cophenetic_row(leaf);
        Ok(row
            .iter()
            .enumerate()
            .filter(|&(x, &d)| x != leaf && self.level_for_distance(d, levels) == level)
            .map(|(x, _)| self.leaf_chars[x])
            .collect())
    }

    /// Plaintext hint for a newly coined symbol: a character from the
    /// smallest ancestor cluster of `target` that holds anything else.
    /// Known characters are preferred, then cophenetic proximity, then the
    /// lowest codepoint (or a uniform pick among exact ties if `tie` is
    /// [`TieBreak::Random`]).
    pub fn hint_for<R: Rng + ?Sized>(
        &self,
        target: char,
        is_known: impl Fn(char) -> bool,
        tie: TieBreak,
        rng: &mut R,
    ) -> Result<char> {
        let leaf = self.leaf_of(target)?;
        let cluster = self
            .ancestors(leaf)
            .find(|&p| self.nodes[p].size > 1)
            .ok_or_else(|| Error::Protocol("tree has a single leaf".into()))?;
        let row = self.cophenetic_row(leaf);
        let others: Vec<usize> = self
            .member_leaves(cluster)
            .iter()
            .copied()
            .filter(|&x| x != leaf)
            .collect();
        let known: Vec<usize> = others
            .iter()
            .copied()
            .filter(|&x| is_known(self.leaf_chars[x]))
            .collect();
        let pool = if known.is_empty() { others } else { known };
        let best = pool
            .iter()
            .map(|&x| row[x])
            .min_by(f64::total_cmp)
            .expect("ancestor has another member");
        let mut tied: Vec<char> = pool
            .iter()
            .filter(|&&x| row[x] == best)
            .map(|&x| self.leaf_chars[x])
            .collect();
        tied.sort_unstable();
        Ok(match tie {
            TieBreak::Codepoint => tied[0],
            TieBreak::Random => tied[rng.gen_range(0..tied.len())],
        })
    }
}

fn merge_sequence(dist: &mut Condensed, chars: &[char], linkage: Linkage) -> Vec<Merge> {
    let n = dist.n;
    let mut active = vec![true; n];
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut key: Vec<char> = chars.to_vec();
    let mut nn = vec![usize::MAX; n];
    let mut nn_key = vec![
        PairKey {
            dist: f64::INFINITY,
            lo: char::MAX,
            hi: char::MAX,
        };
        n
    ];

    let best_neighbor = |dist: &Condensed, active: &[bool], key: &[char], k: usize| {
        let mut best: Option<(usize, PairKey)> = None;
        for x in (0..n).filter(|&x| x != k && active[x]) {
            let cand = PairKey::new(dist.get(k, x), key[k], key[x]);
            if best.is_none_or(|(_, b)| cand.cmp(&b).is_lt()) {
                best = Some((x, cand));
            }
        }
        best
    };

    for k in 0..n {
        if let Some((x, pk)) = best_neighbor(dist, &active, &key, k) {
            nn[k] = x;
            nn_key[k] = pk;
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let a = (0..n)
            .filter(|&k| active[k])
            .min_by(|&x, &y| nn_key[x].cmp(&nn_key[y]))
            .expect("at least two active clusters");
        let b = nn[a];
        let height = nn_key[a].dist;
        let (keep, drop) = (a.min(b), a.max(b));

        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let d = linkage.combine(dist.get(k, a), dist.get(k, b), size[a], size[b]);
            dist.set(k, keep, d);
        }
        let (la, lb) = (node_id[a], node_id[b]);
        merges.push(Merge {
            left: la.min(lb),
            right: la.max(lb),
            height,
        });
        active[drop] = false;
        size[keep] = size[a] + size[b];
        key[keep] = key[a].min(key[b]);
        node_id[keep] = n + step;

        if step + 1 == n - 1 {
            break;
        }
        for k in (0..n).filter(|&k| active[k] && k != keep) {
            if nn[k] == a || nn[k] == b {
                let (x, pk) = best_neighbor(dist, &active, &key, k).expect("two active");
                nn[k] = x;
                nn_key[k] = pk;
            } else {
                let cand = PairKey::new(dist.get(k, keep), key[k], key[keep]);
                if cand.cmp(&nn_key[k]).is_lt() {
                    nn[k] = keep;
                    nn_key[k] = cand;
                }
            }
        }
        let (x, pk) = best_neighbor(dist, &active, &key, keep).expect("two active");
        nn[keep] = x;
        nn_key[keep] = pk;
    }
    merges
}

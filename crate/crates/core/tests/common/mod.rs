//! Slow, obviously-correct reference implementations used as test oracles.
//! Nothing here calls into the code it checks beyond reading inputs.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashMap, HashSet};

use ain_core::cluster::{ClusterTree, Linkage};
use ain_core::embedding::EmbeddingTable;
use ain_core::glyph::{GlyphCode, COMPONENTS};

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

pub fn distance_matrix(table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let n = table.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = 1.0 - cos(table.vector(i), table.vector(j));
            }
        }
    }
    d
}

/// Textbook agglomerative clustering: at every step recompute the linkage
/// distance of every pair of clusters from the raw distance matrix and merge
/// the closest pair. Ties go to the pair whose smaller min-codepoint is
/// smaller, then the larger one. Returns `(left id, right id, height)` with
/// leaves numbered `0..n` and the merge at step `s` numbered `n + s`.
pub fn naive_merges(table: &EmbeddingTable, linkage: Linkage) -> Vec<(usize, usize, f64)> {
    let n = table.len();
    let d = distance_matrix(table);
    let chars = table.chars();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, char, char, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ma, mb) = (&clusters[a].1, &clusters[b].1);
                let pairs = ma.iter().flat_map(|&i| mb.iter().map(move |&j| (i, j)));
                let dist = match linkage {
                    Linkage::Single => pairs.map(|(i, j)| d[i][j]).fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.map(|(i, j)| d[i][j]).fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Average => pairs.map(|(i, j)| d[i][j]).sum::<f64>() / (ma.len() * mb.len()) as f64,
                };
                let ka = ma.iter().map(|&i| chars[i]).min().unwrap();
                let kb = mb.iter().map(|&i| chars[i]).min().unwrap();
                let (lo, hi) = (ka.min(kb), ka.max(kb));
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => (dist, lo, hi) < (bd, blo, bhi),
                };
                if better {
                    best = Some((dist, lo, hi, a, b));
                }
            }
        }
        let (dist, _, _, a, b) = best.unwrap();
        let (cb, mb) = clusters.remove(b);
        let (ca, ma) = clusters.remove(a);
        out.push((ca.min(cb), ca.max(cb), dist));
        clusters.push((n + step, ma.into_iter().chain(mb).collect()));
    }
    out
}

/// Sample covariance (divisor n - 1), built entry by entry.
pub fn covariance(table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let (n, dim) = (table.len(), table.dim());
    let mean: Vec<f64> = (0..dim)
        .map(|j| (0..n).map(|i| table.vector(i)[j] as f64).sum::<f64>() / n as f64)
        .collect();
    let mut c = vec![vec![0.0; dim]; dim];
    for (a, row) in c.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = (0..n)
                .map(|i| (table.vector(i)[a] as f64 - mean[a]) * (table.vector(i)[b] as f64 - mean[b]))
                .sum::<f64>()
                / (n - 1) as f64;
        }
    }
    c
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalue, unit eigenvector)` pairs, largest eigenvalue first.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|k| (a[k][k], (0..n).map(|i| v[i][k]).collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// Flip `v` so its largest-magnitude component is positive.
pub fn sign_normalized(v: &[f64]) -> Vec<f64> {
    let big = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if big < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * s).collect()
}

/// Scan all 13824 cells for the free one closest in L1 to `code`, ties to
/// the lexicographically smallest.
pub fn grid_scan_resolve(code: GlyphCode, occupied: &HashSet<GlyphCode>) -> Option<GlyphCode> {
    let n = COMPONENTS as u8;
    let l1 = |g: &GlyphCode| -> i32 {
        let (x, y) = (g.components(), code.components());
        (0..3).map(|i| (x[i] as i32 - y[i] as i32).abs()).sum()
    };
    let mut best: Option<(i32, GlyphCode)> = None;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let g = GlyphCode::new(a, b, c).unwrap();
                if occupied.contains(&g) {
                    continue;
                }
                let key = (l1(&g), g);
                if best.is_none_or(|bk| key < bk) {
                    best = Some(key);
                }
            }
        }
    }
    best.map(|(_, g)| g)
}

/// Characters `c` for which every `(guess, level)` in `history` is exactly
/// the feedback the tree would give had `c` been the target.
pub fn brute_consistent(tree: &ClusterTree, history: &[(char, u32)], levels: u32) -> BTreeSet<char> {
    tree.leaf_chars()
        .iter()
        .copied()
        .filter(|&c| {
            history
                .iter()
                .all(|&(g, f)| tree.feedback_level(g, c, levels).unwrap() == f)
        })
        .collect()
}

/// Target selection rule, written out directly.
pub fn brute_select(verse: &[char], known: &HashSet<char>, freq: &HashMap<char, u32>) -> (char, bool) {
    let mut best: Option<char> = None;
    for &c in verse {
        if known.contains(&c) {
            continue;
        }
        let f = freq.get(&c).copied().unwrap_or(0);
        best = match best {
            None => Some(c),
            Some(b) => {
                let fb = freq.get(&b).copied().unwrap_or(0);
                if f > fb || (f == fb && c < b) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    match best {
        Some(c) => (c, false),
        None => (verse[0], true),
    }
}

pub fn char_frequencies(sentences: &[Vec<char>]) -> HashMap<char, u32> {
    let mut f = HashMap::new();
    for s in sentences {
        for &c in s {
            *f.entry(c).or_insert(0) += 1;
        }
    }
    f
}

fn centroid(table: &EmbeddingTable, s: &[char]) -> Vec<f64> {
    let mut acc = vec![0.0; table.dim()];
    for &c in s {
        for (a, &x) in acc.iter_mut().zip(table.get(c).unwrap()) {
            *a += x as f64;
        }
    }
    acc.iter().map(|a| a / s.len() as f64).collect()
}

/// Indices of the `k` corpus sentences whose centroids are most cosine
/// similar to the centroid of `obs`; ties by index.
pub fn retrieve(table: &EmbeddingTable, corpus: &[Vec<char>], obs: &[char], k: usize) -> Vec<usize> {
    let q = centroid(table, obs);
    let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let c = centroid(table, s);
            let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dot: f64 = q.iter().zip(&c).map(|(a, b)| a * b).sum();
            let score = if qn == 0.0 || cn == 0.0 { 0.0 } else { dot / (qn * cn) };
            (score, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Every character that can occur in a template-composed verse: the first
/// `max_len` characters of an observation followed by one of its retrieved
/// sentences. These are exactly the characters target selection can reach.
pub fn reachable_targets(
    table: &EmbeddingTable,
    script: &[Vec<char>],
    corpus: &[Vec<char>],
    k: usize,
    max_len: usize,
) -> BTreeSet<char> {
    let mut out = BTreeSet::new();
    for obs in script {
        for m in retrieve(table, corpus, obs, k) {
            out.extend(obs.iter().chain(&corpus[m]).take(max_len).copied());
        }
    }
    out
}

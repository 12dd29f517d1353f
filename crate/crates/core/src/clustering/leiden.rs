//! Leiden community detection on weighted undirected graphs, optimising
//! modularity with a resolution parameter γ:
//!
//! ```text
//! Q = 1/(2m) Σ_c [ in_c − γ · tot_c² / (2m) ]
//! ```
//!
//! Each level runs queue-based local moving, refines every community into
//! well-connected subcommunities by greedy merging, and aggregates the graph
//! by the refined partition while keeping the unrefined one as the starting
//! point for the next level.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::snn::SNNGraph;
use super::{relabel_contiguous, ClusterAssignment, MethodParams};
use crate::{Error, Result};

const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    /// Ordered-pair self weight A_ii.
    self_w: Vec<f64>,
    degree: Vec<f64>,
    /// 2m
    total: f64,
}

impl Graph {
    fn n(&self) -> usize {
        self.adj.len()
    }

    fn from_adj(adj: Vec<Vec<(usize, f64)>>, self_w: Vec<f64>) -> Graph {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_w)
            .map(|(a, s)| s + a.iter().map(|e| e.1).sum::<f64>())
            .collect();
        let total = degree.iter().sum();
        Graph {
            adj,
            self_w,
            degree,
            total,
        }
    }
}

fn count_distinct(part: &[usize]) -> usize {
    let mut seen = vec![false; part.len()];
    part.iter().filter(|&&c| !std::mem::replace(&mut seen[c], true)).count()
}

/// Moves single nodes to the neighbouring community with the largest
/// modularity gain until no move improves it.
fn local_move(g: &Graph, part: &mut [usize], gamma: f64) {
    let n = g.n();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.degree[v];
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).rev().filter(|&c| size[c] == 0).collect();
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    let mut w_to = vec![0.0; n];
    let mut touched = Vec::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let old = part[v];
        let kv = g.degree[v];
        for &(u, w) in &g.adj[v] {
            let c = part[u];
            if w_to[c] == 0.0 && !touched.contains(&c) {
                touched.push(c);
            }
            w_to[c] += w;
        }
        tot[old] -= kv;
        size[old] -= 1;
        let gain = |c: usize, w: f64| w - gamma * kv * tot[c] / g.total;

        let mut best = old;
        let mut best_gain = gain(old, w_to[old]);
        for &c in &touched {
            let gc = gain(c, w_to[c]);
            if gc > best_gain + GAIN_EPS {
                best = c;
                best_gain = gc;
            }
        }
        if best_gain < -GAIN_EPS && size[old] > 0 {
            if let Some(&c) = empty.last() {
                best = c;
            }
        }
        for &c in &touched {
            w_to[c] = 0.0;
        }
        touched.clear();

        if best == old {
            tot[old] += kv;
            size[old] += 1;
            continue;
        }
        if empty.last() == Some(&best) {
            empty.pop();
        }
        if size[old] == 0 {
            empty.push(old);
        }
        part[v] = best;
        tot[best] += kv;
        size[best] += 1;
        for &(u, _) in &g.adj[v] {
            if !queued[u] && part[u] != best {
                queued[u] = true;
                queue.push_back(u);
            }
        }
    }
}

/// Splits every community of `part` into subcommunities: a singleton node is
/// merged into the well-connected subcommunity of its own community with the
/// largest non-negative gain.
fn refine(g: &Graph, part: &[usize], gamma: f64) -> Vec<usize> {
    let n = g.n();
    let mut comm_tot = vec![0.0; n];
    for v in 0..n {
        comm_tot[part[v]] += g.degree[v];
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_tot = g.degree.clone();
    let mut r_size = vec![1usize; n];
    // weight from each subcommunity to the rest of its community
    let mut cut: Vec<f64> = (0..n)
        .map(|v| g.adj[v].iter().filter(|&&(u, _)| part[u] == part[v]).map(|e| e.1).sum())
        .collect();
    let mut w_to = vec![0.0; n];
    let mut touched = Vec::new();

    for v in 0..n {
        if r_size[refined[v]] != 1 {
            continue;
        }
        let c = part[v];
        let kv = g.degree[v];
        if cut[v] < gamma * kv * (comm_tot[c] - kv) / g.total {
            continue;
        }
        for &(u, w) in &g.adj[v] {
            if part[u] != c {
                continue;
            }
            let t = refined[u];
            if w_to[t] == 0.0 && !touched.contains(&t) {
                touched.push(t);
            }
            w_to[t] += w;
        }
        let own = refined[v];
        let mut best: Option<(usize, f64)> = None;
        for &t in &touched {
            if t == own {
                continue;
            }
            let well_connected = cut[t] >= gamma * r_tot[t] * (comm_tot[c] - r_tot[t]) / g.total;
            if !well_connected {
                continue;
            }
            let gain = w_to[t] - gamma * kv * r_tot[t] / g.total;
            if gain >= 0.0 && best.is_none_or(|(_, bg)| gain > bg + GAIN_EPS) {
                best = Some((t, gain));
            }
        }
        if let Some((t, _)) = best {
            cut[t] += cut[v] - 2.0 * w_to[t];
            r_tot[t] += kv;
            r_size[t] += 1;
            r_size[own] = 0;
            refined[v] = t;
        }
        for &t in &touched {
            w_to[t] = 0.0;
        }
        touched.clear();
    }
    refined
}

/// Collapses each group of `by` into one node. Returns the new graph and the
/// node → aggregate map; aggregates are numbered by first appearance.
fn aggregate(g: &Graph, by: &[usize]) -> (Graph, Vec<usize>) {
    let map = relabel_contiguous(by);
    let m = map.iter().max().map_or(0, |x| x + 1);
    let mut self_w = vec![0.0; m];
    let mut triples = Vec::new();
    for v in 0..g.n() {
        let a = map[v];
        self_w[a] += g.self_w[v];
        for &(u, w) in &g.adj[v] {
            let b = map[u];
            if a == b {
                self_w[a] += w;
            } else {
                triples.push((a, b, w));
            }
        }
    }
    triples.sort_by_key(|t| (t.0, t.1));
    let mut adj = vec![Vec::new(); m];
    for (a, b, w) in triples {
        match adj[a].last_mut() {
            Some((last, acc)) if *last == b => *acc += w,
            _ => adj[a].push((b, w)),
        }
    }
    (Graph::from_adj(adj, self_w), map)
}

/// Modularity of `labels` on `g` at resolution `gamma`; 0 for an edgeless
/// graph.
pub fn modularity(g: &SNNGraph, labels: &[usize], gamma: f64) -> Result<f64> {
    if labels.len() != g.n_vertices {
        return Err(Error::dim(format!("{} labels for {} vertices", labels.len(), g.n_vertices)));
    }
    let two_m = 2.0 * g.total_weight();
    if two_m == 0.0 {
        return Ok(0.0);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for &(i, j, w) in &g.edges {
        tot[labels[i]] += w;
        tot[labels[j]] += w;
        if labels[i] == labels[j] {
            inside[labels[i]] += 2.0 * w;
        }
    }
    Ok(inside
        .iter()
        .zip(&tot)
        .map(|(i, t)| i - gamma * t * t / two_m)
        .sum::<f64>()
        / two_m)
}

/// Leiden communities of `g`. The vertex visit order is shuffled once with
/// `seed`; the result is deterministic given the seed.
pub fn leiden_communities(g: &SNNGraph, resolution: f64, seed: u64) -> Result<ClusterAssignment> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::invalid("resolution must be positive"));
    }
    let n = g.n_vertices;
    for &(i, j, w) in &g.edges {
        if i >= n || j >= n || i == j || !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("bad graph edge ({i}, {j}, {w})")));
        }
    }
    let done = |labels: Vec<usize>| ClusterAssignment {
        labels,
        params: MethodParams::Leiden { resolution },
        seed,
    };
    if g.edges.is_empty() {
        return Ok(done((0..n).collect()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pos = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let mut adj = vec![Vec::new(); n];
    for (v, list) in g.adjacency().into_iter().enumerate() {
        adj[pos[v]] = list.into_iter().map(|(u, w)| (pos[u], w)).collect();
    }
    let mut graph = Graph::from_adj(adj, vec![0.0; n]);

    // membership[p] = aggregate node holding shuffled vertex p
    let mut membership: Vec<usize> = (0..n).collect();
    let mut part: Vec<usize> = (0..n).collect();
    loop {
        local_move(&graph, &mut part, resolution);
        if count_distinct(&part) == graph.n() {
            break;
        }
        let refined = refine(&graph, &part, resolution);
        let by = if count_distinct(&refined) == graph.n() {
            part.clone()
        } else {
            refined
        };
        let (next, map) = aggregate(&graph, &by);
        let mut next_part = vec![0; next.n()];
        for v in 0..graph.n() {
            next_part[map[v]] = part[v];
        }
        for m in membership.iter_mut() {
            *m = map[*m];
        }
        part = relabel_contiguous(&next_part);
        graph = next;
    }
    let labels: Vec<usize> = (0..n).map(|v| part[membership[pos[v]]]).collect();
    Ok(done(relabel_contiguous(&labels)))
}

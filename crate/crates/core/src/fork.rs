//! Forks: rooted trees whose vertices carry slot labels, checked against the
//! four fork axioms for a characteristic string.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::charstring::CharString;

/// Longest string accepted by the brute-force enumeration.
pub const MAX_ENUMERATION_LEN: usize = 10;
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForkError {
    #[error("malformed fork: {0}")]
    Malformed(String),
    #[error("axiom F1 violated: root must be the unique vertex labelled 0 (vertices {vertices:?})")]
    AxiomF1 { vertices: Vec<usize> },
    #[error("axiom F2 violated: edge {parent} -> {child} does not increase the label")]
    AxiomF2 { parent: usize, child: usize },
    #[error("axiom F3 violated: honest slot {slot} labels vertices {vertices:?}")]
    AxiomF3 { slot: usize, vertices: Vec<usize> },
    #[error("axiom F4 violated: honest vertex {later} is not deeper than honest vertex {earlier}")]
    AxiomF4 { earlier: usize, later: usize },
    #[error("vertex {vertex} has label {label} beyond the string length {len}")]
    LabelOutOfRange { vertex: usize, label: usize, len: usize },
    #[error("unknown tine {0}")]
    UnknownTine(usize),
    #[error("fork is not closed")]
    NotClosed,
    #[error("tine {tine} has reserve {reserve} below its gap {gap}")]
    InsufficientReserve { tine: usize, gap: usize, reserve: usize },
    #[error("string of length {len} exceeds the enumeration guard {max}")]
    TooLong { len: usize, max: usize },
    #[error("enumeration exceeded the cap of {cap} forks")]
    CapExceeded { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub label: usize,
    pub parent: Option<usize>,
}

/// A tine is identified by its terminal vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tine(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TineStats {
    pub length: usize,
    pub gap: usize,
    pub reserve: usize,
    pub reach: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ForkJson", into = "ForkJson")]
pub struct Fork {
    vertices: Vec<Vertex>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct ForkJson {
    vertices: Vec<Vertex>,
}

impl TryFrom<ForkJson> for Fork {
    type Error = ForkError;

    fn try_from(json: ForkJson) -> Result<Self, Self::Error> {
        Fork::from_vertices(json.vertices)
    }
}

impl From<Fork> for ForkJson {
    fn from(fork: Fork) -> Self {
        ForkJson { vertices: fork.vertices }
    }
}

impl Default for Fork {
    fn default() -> Self {
        Self::trivial()
    }
}

impl Fork {
    /// The genesis-only fork.
    pub fn trivial() -> Self {
        Self {
            vertices: vec![Vertex { id: 0, label: 0, parent: None }],
            depth: vec![0],
            children: vec![Vec::new()],
            height: 0,
        }
    }

    /// Rebuilds a fork from stored vertices. Ids must be `0..n` in order and
    /// every parent must precede its child; the axioms are left to [`validate`].
    pub fn from_vertices(vertices: Vec<Vertex>) -> Result<Self, ForkError> {
        if vertices.is_empty() {
            return Err(ForkError::Malformed("no vertices".into()));
        }
        let mut fork = Self {
            vertices: Vec::with_capacity(vertices.len()),
            depth: Vec::with_capacity(vertices.len()),
            children: Vec::with_capacity(vertices.len()),
            height: 0,
        };
        for (i, v) in vertices.into_iter().enumerate() {
            if v.id != i {
                return Err(ForkError::Malformed(format!("vertex {i} carries id {}", v.id)));
            }
            match v.parent {
                Some(p) if p >= i => {
                    return Err(ForkError::Malformed(format!(
                        "vertex {i} has parent {p} created after it"
                    )))
                }
                Some(p) => {
                    let d = fork.depth[p] + 1;
                    fork.children[p].push(i);
                    fork.depth.push(d);
                    fork.height = fork.height.max(d);
                }
                None => fork.depth.push(0),
            }
            fork.children.push(Vec::new());
            fork.vertices.push(v);
        }
        Ok(fork)
    }

    /// Builds a fork from `(parent, label)` pairs appended after the root.
    pub fn from_edges(edges: &[(usize, usize)]) -> Result<Self, ForkError> {
        let mut vertices = vec![Vertex { id: 0, label: 0, parent: None }];
        for (i, &(parent, label)) in edges.iter().enumerate() {
            vertices.push(Vertex { id: i + 1, label, parent: Some(parent) });
        }
        Self::from_vertices(vertices)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn label(&self, v: usize) -> usize {
        self.vertices[v].label
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.vertices[v].parent
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, t: Tine) -> bool {
        t.0 < self.len()
    }

    pub fn tines(&self) -> impl Iterator<Item = Tine> {
        (0..self.len()).map(Tine)
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.is_leaf(v))
    }

    /// Terminals of the maximum-length tines, in creation order.
    pub fn longest_tines(&self) -> Vec<Tine> {
        (0..self.len())
            .filter(|&v| self.depth[v] == self.height)
            .map(Tine)
            .collect()
    }

    /// Appends a vertex and returns its id. Axioms are not checked here.
    pub fn push_vertex(&mut self, parent: usize, label: usize) -> usize {
        let id = self.len();
        let d = self.depth[parent] + 1;
        self.vertices.push(Vertex { id, label, parent: Some(parent) });
        self.depth.push(d);
        self.children.push(Vec::new());
        self.children[parent].push(id);
        self.height = self.height.max(d);
        id
    }

    /// Appends `(parent, label)` vertices in order; parents may name
    /// vertices added earlier in the same growth.
    pub fn apply_growth(&mut self, growth: &[(usize, usize)]) {
        for &(parent, label) in growth {
            self.push_vertex(parent, label);
        }
    }

    /// Appends a chain of vertices below `parent`; returns the last one.
    pub fn push_chain(&mut self, parent: usize, labels: &[usize]) -> usize {
        labels.iter().fold(parent, |p, &l| self.push_vertex(p, l))
    }

    /// Vertex ids from the root to `v` inclusive.
    pub fn path(&self, v: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[v] + 1);
        let mut cur = Some(v);
        while let Some(u) = cur {
            path.push(u);
            cur = self.vertices[u].parent;
        }
        path.reverse();
        path
    }

    pub fn path_labels(&self, v: usize) -> Vec<usize> {
        self.path(v).into_iter().map(|u| self.label(u)).collect()
    }

    /// Last common vertex of the tines ending at `a` and `b`.
    pub fn meet(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.vertices[a].parent.expect("depth > 0 has a parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.vertices[b].parent.expect("depth > 0 has a parent");
        }
        while a != b {
            a = self.vertices[a].parent.expect("distinct vertices below the root");
            b = self.vertices[b].parent.expect("distinct vertices below the root");
        }
        a
    }

    /// `ℓ(t1 ∩ t2)`: label of the last vertex the two tines share.
    pub fn meet_label(&self, a: usize, b: usize) -> usize {
        self.label(self.meet(a, b))
    }

    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        if self.depth[a] > self.depth[b] {
            return false;
        }
        while self.depth[b] > self.depth[a] {
            b = self.vertices[b].parent.expect("depth > 0 has a parent");
        }
        a == b
    }

    /// Reach of every tine, indexed by terminal vertex, using `height(F)` for the gap.
    pub fn reaches(&self, w: &CharString) -> Vec<i64> {
        let ones = w.ones_prefix_counts();
        let total = ones[w.len()] as i64;
        (0..self.len())
            .map(|v| {
                let label = self.label(v).min(w.len());
                let reserve = total - ones[label] as i64;
                reserve - (self.height - self.depth[v]) as i64
            })
            .collect()
    }

    /// Canonical token stream: the same for two forks iff they are
    /// isomorphic as labelled rooted trees.
    pub fn canonical_form(&self) -> Vec<u32> {
        self.canonical_from(self.root())
    }

    fn canonical_from(&self, v: usize) -> Vec<u32> {
        let mut kids: Vec<Vec<u32>> =
            self.children[v].iter().map(|&c| self.canonical_from(c)).collect();
        kids.sort_unstable();
        let mut out = Vec::with_capacity(2 + kids.iter().map(Vec::len).sum::<usize>());
        out.push(self.label(v) as u32);
        for k in kids {
            out.extend(k);
        }
        out.push(u32::MAX);
        out
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for token in self.canonical_form() {
            hasher.update(token.to_le_bytes());
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fork serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ForkError> {
        serde_json::from_str(text).map_err(|e| ForkError::Malformed(e.to_string()))
    }
}

pub fn validate(fork: &Fork, w: &CharString) -> Result<(), ForkError> {
    let roots: Vec<usize> = fork
        .vertices
        .iter()
        .filter(|v| v.parent.is_none() || v.label == 0)
        .map(|v| v.id)
        .collect();
    if roots != [0] || fork.label(0) != 0 {
        return Err(ForkError::AxiomF1 { vertices: roots });
    }
    for v in &fork.vertices {
        if v.label > w.len() {
            return Err(ForkError::LabelOutOfRange { vertex: v.id, label: v.label, len: w.len() });
        }
        if let Some(p) = v.parent {
            if fork.label(p) >= v.label {
                return Err(ForkError::AxiomF2 { parent: p, child: v.id });
            }
        }
    }
    let mut by_slot: Vec<Vec<usize>> = vec![Vec::new(); w.len() + 1];
    for v in &fork.vertices[1..] {
        by_slot[v.label].push(v.id);
    }
    let mut previous: Option<usize> = None;
    for slot in w.honest_slots() {
        let holders = &by_slot[slot];
        if holders.len() != 1 {
            return Err(ForkError::AxiomF3 { slot, vertices: holders.clone() });
        }
        let v = holders[0];
        if let Some(u) = previous {
            if fork.depth(u) >= fork.depth(v) {
                return Err(ForkError::AxiomF4 { earlier: u, later: v });
            }
        }
        previous = Some(v);
    }
    Ok(())
}

pub fn tine_stats(fork: &Fork, w: &CharString, t: Tine) -> Result<TineStats, ForkError> {
    if !fork.contains(t) {
        return Err(ForkError::UnknownTine(t.0));
    }
    let length = fork.depth(t.0);
    let gap = fork.height() - length;
    let label = fork.label(t.0).min(w.len());
    let reserve = w.count_ones() - w.ones_through(label);
    Ok(TineStats { length, gap, reserve, reach: reserve as i64 - gap as i64 })
}

/// Every leaf is honest; the genesis-only fork counts as closed.
pub fn is_closed(fork: &Fork, w: &CharString) -> bool {
    fork.leaves().all(|v| v == fork.root() || w.is_honest(fork.label(v)))
}

/// Two maximum-length tines sharing no edge that ends at a label above
/// `split`. A tine pairs with itself only when all its labels are `≤ split`.
pub fn is_x_balanced(fork: &Fork, split: usize) -> bool {
    let longest = fork.longest_tines();
    longest.iter().enumerate().any(|(i, a)| {
        longest[i..].iter().any(|b| fork.meet_label(a.0, b.0) <= split)
    })
}

pub fn is_balanced(fork: &Fork) -> bool {
    is_x_balanced(fork, 0)
}

/// Whether `f` embeds into `g` as a label-preserving subtree at the root.
pub fn is_prefix(f: &Fork, g: &Fork) -> bool {
    let same_ids = f.len() <= g.len()
        && f.vertices.iter().zip(&g.vertices).all(|(a, b)| a == b);
    same_ids || embeds(f, f.root(), g, g.root())
}

fn embeds(f: &Fork, u: usize, g: &Fork, v: usize) -> bool {
    if f.label(u) != g.label(v) {
        return false;
    }
    let fk = f.children(u);
    let gk = g.children(v);
    if fk.len() > gk.len() {
        return false;
    }
    // Bipartite matching of f-children onto distinct compatible g-children.
    let compatible: Vec<Vec<usize>> = fk
        .iter()
        .map(|&a| (0..gk.len()).filter(|&j| embeds(f, a, g, gk[j])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gk.len()];
    fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|o| augment(o, adj, owner, seen)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    (0..fk.len()).all(|i| augment(i, &compatible, &mut owner, &mut vec![false; gk.len()]))
}

/// Extends `s` to a fork for `w·0`: `gap(s)` adversarial vertices on the
/// smallest adversarial slots after `ℓ(s)`, then the honest vertex `|w|+1`.
pub fn conservative_extend(fork: &Fork, w: &CharString, s: Tine) -> Result<Fork, ForkError> {
    validate(fork, w)?;
    if !is_closed(fork, w) {
        return Err(ForkError::NotClosed);
    }
    let stats = tine_stats(fork, w, s)?;
    if stats.reach < 0 {
        return Err(ForkError::InsufficientReserve { tine: s.0, gap: stats.gap, reserve: stats.reserve });
    }
    let mut out = fork.clone();
    append_conservative(&mut out, w, s.0);
    Ok(out)
}

/// Unchecked body of [`conservative_extend`]; returns the new honest vertex.
pub(crate) fn append_conservative(fork: &mut Fork, w: &CharString, s: usize) -> usize {
    let gap = fork.height() - fork.depth(s);
    let labels: Vec<usize> = (fork.label(s) + 1..=w.len())
        .filter(|&i| w.is_adversarial(i))
        .take(gap)
        .chain(std::iter::once(w.len() + 1))
        .collect();
    fork.push_chain(s, &labels)
}

/// Every closed fork for `w` up to isomorphism.
///
/// Honest vertices are attached in slot order. The path to honest vertex `h`
/// leaves the fork built so far at some vertex `u` and continues through
/// adversarial vertices whose labels are an increasing subset of the
/// adversarial slots strictly between `ℓ(u)` and `h`. Each closed fork arises
/// this way, and isomorphic partial forks are merged after every slot.
pub fn enumerate_closed_forks(w: &CharString, cap: usize) -> Result<Vec<Fork>, ForkError> {
    if w.len() > MAX_ENUMERATION_LEN {
        return Err(ForkError::TooLong { len: w.len(), max: MAX_ENUMERATION_LEN });
    }
    let mut level = vec![(Fork::trivial(), 0usize)];
    for h in w.honest_slots() {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for (fork, last_depth) in &level {
            for u in 0..fork.len() {
                let lu = fork.label(u);
                if lu >= h {
                    continue;
                }
                let slots: Vec<usize> = (lu + 1..h).filter(|&i| w.is_adversarial(i)).collect();
                for mask in 0u32..(1 << slots.len()) {
                    let chain_len = mask.count_ones() as usize;
                    let d = fork.depth(u) + chain_len + 1;
                    if *last_depth > 0 && d <= *last_depth {
                        continue;
                    }
                    let mut labels: Vec<usize> = slots
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &s)| s)
                        .collect();
                    labels.push(h);
                    let mut f = fork.clone();
                    f.push_chain(u, &labels);
                    if seen.insert(f.canonical_form()) {
                        if next.len() >= cap {
                            return Err(ForkError::CapExceeded { cap });
                        }
                        next.push((f, d));
                    }
                }
            }
        }
        level = next;
    }
    Ok(level.into_iter().map(|(f, _)| f).collect())
}

/// `ρ(F)` and `μ_{w[..m]}(F)` for every split `m`, by scanning all tine pairs.
pub fn fork_margins(fork: &Fork, w: &CharString) -> (i64, Vec<i64>) {
    let n = w.len();
    let reach = fork.reaches(w);
    let rho = *reach.iter().max().expect("forks are nonempty");
    // best_at[l]: best min-reach over pairs whose last shared label is l.
    let mut best_at = vec![i64::MIN; n + 1];
    for a in 0..fork.len() {
        for b in a..fork.len() {
            let l = fork.meet_label(a, b).min(n);
            best_at[l] = best_at[l].max(reach[a].min(reach[b]));
        }
    }
    let mut running = i64::MIN;
    let margins = best_at
        .into_iter()
        .map(|v| {
            running = running.max(v);
            running
        })
        .collect();
    (rho, margins)
}

/// Brute-force `ρ(w)` and `μ_{w[..m]}(w[m..])` for every split `m`,
/// maximized over all closed forks.
pub fn brute_margins(w: &CharString) -> Result<(i64, Vec<i64>), ForkError> {
    let mut rho = i64::MIN;
    let mut best = vec![i64::MIN; w.len() + 1];
    for fork in enumerate_closed_forks(w, DEFAULT_ENUMERATION_CAP)? {
        let (r, margins) = fork_margins(&fork, w);
        rho = rho.max(r);
        for (b, m) in best.iter_mut().zip(margins) {
            *b = (*b).max(m);
        }
    }
    Ok((rho, best))
}

pub fn brute_rho(w: &CharString) -> Result<i64, ForkError> {
    Ok(brute_margins(w)?.0)
}

pub fn brute_relative_margin(x: &CharString, y: &CharString) -> Result<i64, ForkError> {
    Ok(brute_margins(&x.concat(y))?.1[x.len()])
}

/// A viable pair `(t1, t2)` with `ℓ(t1) ≤ ℓ(t2)` where `t1` trimmed of its
/// last `k` slots is not a prefix of `t2`.
pub fn find_slot_cp_violation(fork: &Fork, w: &CharString, k: usize) -> Option<(Tine, Tine)> {
    let n = w.len();
    // deepest[l]: largest depth of an honest vertex with label ≤ l.
    let mut deepest = vec![0usize; n + 1];
    for v in 1..fork.len() {
        let l = fork.label(v);
        if l <= n && w.is_honest(l) {
            deepest[l] = deepest[l].max(fork.depth(v));
        }
    }
    for l in 1..=n {
        deepest[l] = deepest[l].max(deepest[l - 1]);
    }
    let viable: Vec<usize> = (0..fork.len())
        .filter(|&v| fork.depth(v) >= deepest[fork.label(v).min(n)])
        .collect();
    for &a in &viable {
        let la = fork.label(a);
        let Some(cut) = la.checked_sub(k) else { continue };
        let trimmed = fork
            .path(a)
            .into_iter()
            .take_while(|&u| fork.label(u) <= cut)
            .last()
            .expect("the root has label 0");
        for &b in &viable {
            if fork.label(b) >= la && !fork.is_ancestor(trimmed, b) {
                return Some((Tine(a), Tine(b)));
            }
        }
    }
    None
}

/// Graphviz rendering; honest vertices get a double border.
pub fn to_dot(fork: &Fork, w: &CharString) -> String {
    let mut out = String::from("digraph fork {\n  rankdir=LR;\n  node [shape=circle];\n");
    for v in fork.vertices() {
        let shape = if w.is_honest(v.label) && v.label <= w.len() { "doublecircle" } else { "circle" };
        let _ = writeln!(out, "  v{} [label=\"{}\", shape={}];", v.id, v.label, shape);
    }
    for v in fork.vertices() {
        if let Some(p) = v.parent {
            let _ = writeln!(out, "  v{} -> v{};", p, v.id);
        }
    }
    out.push_str("}\n");
    out
}

/// Total order on tines: label sequences compared lexicographically, ties
/// broken by the vertex ids along the path (creation order).
pub fn tine_order(fork: &Fork, a: Tine, b: Tine) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    let pa = fork.path(a.0);
    let pb = fork.path(b.0);
    let la = pa.iter().map(|&u| fork.label(u));
    let lb = pb.iter().map(|&u| fork.label(u));
    la.cmp(lb).then_with(|| pa.cmp(&pb))
}

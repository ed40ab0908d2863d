//! Inductive Miner with infrequent-behavior filtering (IMf).
//!
//! Cuts are searched on the directly-follows graph of the current sub-log
//! in the order exclusive, sequence, parallel, loop, and the sub-log is split
//! along the cut. When no cut exists, the directly-follows graph is filtered
//! and the search repeats. Remaining fall-throughs are a silent loop over
//! split traces and, last, the flower model. Without filtering every trace of
//! the log is replayable on the result.

use std::collections::BTreeSet;

use crate::eventlog::EventLog;

use super::{check_threshold, DiscoveryError, ProcessTree};

pub fn inductive_miner(
    log: &EventLog,
    noise_threshold: f64,
) -> Result<ProcessTree, DiscoveryError> {
    inductive_miner_traces(&log.traces(), noise_threshold)
}

pub fn inductive_miner_traces(
    traces: &[Vec<String>],
    noise_threshold: f64,
) -> Result<ProcessTree, DiscoveryError> {
    check_threshold(noise_threshold)?;
    if traces.is_empty() {
        return Err(DiscoveryError::EmptyLog);
    }
    // Activities are indexed in label order so the result is canonical.
    let names: Vec<String> = traces
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |a: &String| names.binary_search(a).expect("activity collected above");
    let log: Vec<Vec<usize>> = traces
        .iter()
        .map(|t| t.iter().map(index).collect())
        .collect();
    let miner = Miner {
        names: &names,
        noise: noise_threshold,
    };
    Ok(miner.mine(log).flattened())
}

type Trace = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operator {
    Exclusive,
    Sequence,
    Parallel,
    Loop,
}

struct Cut {
    op: Operator,
    /// Activity sets; for loops the body comes first.
    parts: Vec<Vec<usize>>,
}

/// Directly-follows relation over the activity indices of a sub-log.
struct Dfg {
    n: usize,
    acts: Vec<usize>,
    present: Vec<bool>,
    edges: Vec<Vec<usize>>,
    start: Vec<bool>,
    end: Vec<bool>,
    end_freq: Vec<usize>,
}

impl Dfg {
    fn new(log: &[Trace], n: usize) -> Self {
        let mut present = vec![false; n];
        let mut edges = vec![vec![0; n]; n];
        let mut start = vec![false; n];
        let mut end = vec![false; n];
        let mut end_freq = vec![0; n];
        for t in log {
            for &a in t {
                present[a] = true;
            }
            if let (Some(&f), Some(&l)) = (t.first(), t.last()) {
                start[f] = true;
                end[l] = true;
                end_freq[l] += 1;
            }
            for w in t.windows(2) {
                edges[w[0]][w[1]] += 1;
            }
        }
        let acts = (0..n).filter(|&a| present[a]).collect();
        Self {
            n,
            acts,
            present,
            edges,
            start,
            end,
            end_freq,
        }
    }

    /// Drops edges below `threshold` times the strongest outgoing edge of
    /// their source. Ending a trace counts as an outgoing edge.
    fn filtered(&self, threshold: f64) -> Self {
        let mut edges = self.edges.clone();
        for &a in &self.acts {
            let max = self
                .acts
                .iter()
                .map(|&b| self.edges[a][b])
                .chain([self.end_freq[a]])
                .max()
                .unwrap_or(0);
            for &b in &self.acts {
                if (edges[a][b] as f64) < threshold * max as f64 {
                    edges[a][b] = 0;
                }
            }
        }
        Self {
            n: self.n,
            acts: self.acts.clone(),
            present: self.present.clone(),
            edges,
            start: self.start.clone(),
            end: self.end.clone(),
            end_freq: self.end_freq.clone(),
        }
    }

    fn has(&self, a: usize, b: usize) -> bool {
        self.edges[a][b] > 0
    }

    /// Transitive closure over at least one edge.
    fn reach(&self) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; self.n]; self.n];
        for &a in &self.acts {
            let mut stack: Vec<usize> = self
                .acts
                .iter()
                .copied()
                .filter(|&b| self.has(a, b))
                .collect();
            while let Some(b) = stack.pop() {
                if !r[a][b] {
                    r[a][b] = true;
                    stack.extend(
                        self.acts
                            .iter()
                            .copied()
                            .filter(|&c| self.has(b, c) && !r[a][c]),
                    );
                }
            }
        }
        r
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }

    /// Groups of `acts`, ordered by smallest member.
    fn groups(&mut self, acts: &[usize]) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut roots: Vec<usize> = Vec::new();
        for &a in acts {
            let r = self.find(a);
            match roots.iter().position(|&x| x == r) {
                Some(i) => groups[i].push(a),
                None => {
                    roots.push(r);
                    groups.push(vec![a]);
                }
            }
        }
        groups
    }
}

fn exclusive_cut(d: &Dfg) -> Option<Cut> {
    let mut uf = UnionFind::new(d.n);
    for &a in &d.acts {
        for &b in &d.acts {
            if d.has(a, b) {
                uf.union(a, b);
            }
        }
    }
    let parts = uf.groups(&d.acts);
    (parts.len() > 1).then_some(Cut {
        op: Operator::Exclusive,
        parts,
    })
}

fn sequence_cut(d: &Dfg) -> Option<Cut> {
    let r = d.reach();
    let mut uf = UnionFind::new(d.n);
    for (i, &a) in d.acts.iter().enumerate() {
        for &b in &d.acts[i + 1..] {
            if r[a][b] == r[b][a] {
                uf.union(a, b);
            }
        }
    }
    let mut parts = uf.groups(&d.acts);
    if parts.len() < 2 {
        return None;
    }
    // Earlier groups reach more of the others.
    let reach_count = |g: &Vec<usize>| {
        d.acts
            .iter()
            .filter(|&&b| !g.contains(&b) && g.iter().any(|&a| r[a][b]))
            .count()
    };
    parts.sort_by_key(|g| std::cmp::Reverse(reach_count(g)));
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            for &a in &parts[i] {
                for &b in &parts[j] {
                    if !r[a][b] || r[b][a] {
                        return None;
                    }
                }
            }
        }
    }
    Some(Cut {
        op: Operator::Sequence,
        parts,
    })
}

fn parallel_cut(d: &Dfg) -> Option<Cut> {
    let mut uf = UnionFind::new(d.n);
    for (i, &a) in d.acts.iter().enumerate() {
        for &b in &d.acts[i + 1..] {
            if !(d.has(a, b) && d.has(b, a)) {
                uf.union(a, b);
            }
        }
    }
    let groups = uf.groups(&d.acts);
    if groups.len() < 2 {
        return None;
    }
    let complete = |g: &Vec<usize>| g.iter().any(|&a| d.start[a]) && g.iter().any(|&a| d.end[a]);
    let (mut good, bad): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        groups.into_iter().partition(complete);
    if good.is_empty() {
        return None;
    }
    for g in bad {
        good[0].extend(g);
    }
    good[0].sort_unstable();
    (good.len() > 1).then_some(Cut {
        op: Operator::Parallel,
        parts: good,
    })
}

fn loop_cut(d: &Dfg) -> Option<Cut> {
    let mut body = vec![false; d.n];
    for &a in &d.acts {
        if d.start[a] || d.end[a] {
            body[a] = true;
        }
    }
    let starts: Vec<usize> = d.acts.iter().copied().filter(|&a| d.start[a]).collect();
    let ends: Vec<usize> = d.acts.iter().copied().filter(|&a| d.end[a]).collect();

    let mut uf = UnionFind::new(d.n);
    let rest: Vec<usize> = d.acts.iter().copied().filter(|&a| !body[a]).collect();
    for &a in &rest {
        for &b in &rest {
            if d.has(a, b) {
                uf.union(a, b);
            }
        }
    }
    let mut candidates = uf.groups(&rest);
    loop {
        let before = candidates.len();
        candidates.retain(|c| {
            let mut reaches_start = false;
            let mut entered = false;
            for &x in &d.acts {
                if !body[x] {
                    continue;
                }
                for &y in c {
                    // body -> redo only from end activities, reaching from all of them
                    if d.has(x, y) {
                        entered = true;
                        if !d.end[x] || !ends.iter().all(|&e| d.has(e, y)) {
                            return keep_in_body(&mut body, c);
                        }
                    }
                    // redo -> body only into start activities, reaching all of them
                    if d.has(y, x) {
                        reaches_start = true;
                        if !d.start[x] || !starts.iter().all(|&s| d.has(y, s)) {
                            return keep_in_body(&mut body, c);
                        }
                    }
                }
            }
            if !(entered && reaches_start) {
                return keep_in_body(&mut body, c);
            }
            true
        });
        if candidates.len() == before {
            break;
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let mut parts = vec![d
        .acts
        .iter()
        .copied()
        .filter(|&a| body[a])
        .collect::<Vec<_>>()];
    parts.extend(candidates);
    Some(Cut {
        op: Operator::Loop,
        parts,
    })
}

fn keep_in_body(body: &mut [bool], component: &[usize]) -> bool {
    for &a in component {
        body[a] = true;
    }
    false
}

fn find_cut(d: &Dfg) -> Option<Cut> {
    exclusive_cut(d)
        .or_else(|| sequence_cut(d))
        .or_else(|| parallel_cut(d))
        .or_else(|| loop_cut(d))
}

fn part_of(parts: &[Vec<usize>], n: usize) -> Vec<Option<usize>> {
    let mut owner = vec![None; n];
    for (i, p) in parts.iter().enumerate() {
        for &a in p {
            owner[a] = Some(i);
        }
    }
    owner
}

fn split(log: &[Trace], cut: &Cut, n: usize) -> Vec<Vec<Trace>> {
    let owner = part_of(&cut.parts, n);
    let k = cut.parts.len();
    let mut sublogs: Vec<Vec<Trace>> = vec![Vec::new(); k];
    match cut.op {
        Operator::Exclusive => {
            for t in log {
                let mut counts = vec![0usize; k];
                for &a in t {
                    if let Some(p) = owner[a] {
                        counts[p] += 1;
                    }
                }
                let best = (0..k)
                    .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
                    .unwrap();
                sublogs[best].push(
                    t.iter()
                        .copied()
                        .filter(|&a| owner[a] == Some(best))
                        .collect(),
                );
            }
        }
        Operator::Sequence | Operator::Parallel => {
            for t in log {
                for (i, sub) in sublogs.iter_mut().enumerate() {
                    sub.push(t.iter().copied().filter(|&a| owner[a] == Some(i)).collect());
                }
            }
        }
        Operator::Loop => {
            for t in log {
                let mut body_run: Trace = Vec::new();
                let mut redo_run: Option<(usize, Trace)> = None;
                for &a in t {
                    match owner[a] {
                        Some(0) | None => {
                            if let Some((r, run)) = redo_run.take() {
                                sublogs[r].push(run);
                            }
                            body_run.push(a);
                        }
                        Some(r) => match &mut redo_run {
                            Some((cur, run)) if *cur == r => run.push(a),
                            _ => {
                                if let Some((prev, run)) = redo_run.take() {
                                    sublogs[prev].push(run);
                                }
                                sublogs[0].push(std::mem::take(&mut body_run));
                                redo_run = Some((r, vec![a]));
                            }
                        },
                    }
                }
                if let Some((r, run)) = redo_run.take() {
                    sublogs[r].push(run);
                }
                sublogs[0].push(body_run);
            }
        }
    }
    sublogs
}

struct Miner<'a> {
    names: &'a [String],
    noise: f64,
}

impl Miner<'_> {
    fn leaf(&self, a: usize) -> ProcessTree {
        ProcessTree::Activity(self.names[a].clone())
    }

    fn mine(&self, log: Vec<Trace>) -> ProcessTree {
        let total = log.len();
        let empty = log.iter().filter(|t| t.is_empty()).count();
        if empty == total {
            return ProcessTree::Tau;
        }
        if empty > 0 {
            let rest: Vec<Trace> = log.into_iter().filter(|t| !t.is_empty()).collect();
            if self.noise > 0.0 && (empty as f64) < self.noise * total as f64 {
                return self.mine(rest);
            }
            return ProcessTree::Exclusive(vec![ProcessTree::Tau, self.mine(rest)]);
        }

        let n = self.names.len();
        let dfg = Dfg::new(&log, n);
        if dfg.acts.len() == 1 {
            let a = dfg.acts[0];
            return if log.iter().all(|t| t.len() == 1) {
                self.leaf(a)
            } else {
                ProcessTree::Loop(vec![self.leaf(a), ProcessTree::Tau])
            };
        }

        if let Some(tree) = self.apply_cut(&log, find_cut(&dfg)) {
            return tree;
        }
        if self.noise > 0.0 {
            if let Some(tree) = self.apply_cut(&log, find_cut(&dfg.filtered(self.noise))) {
                return tree;
            }
        }

        // Silent loop: cut traces wherever an end activity meets a start activity.
        let mut pieces: Vec<Trace> = Vec::new();
        for t in &log {
            let mut cur: Trace = vec![t[0]];
            for w in t.windows(2) {
                if dfg.end[w[0]] && dfg.start[w[1]] {
                    pieces.push(std::mem::take(&mut cur));
                }
                cur.push(w[1]);
            }
            pieces.push(cur);
        }
        if pieces.len() > log.len() {
            return ProcessTree::Loop(vec![self.mine(pieces), ProcessTree::Tau]);
        }

        // Flower model over the alphabet.
        ProcessTree::Loop(vec![
            ProcessTree::Exclusive(dfg.acts.iter().map(|&a| self.leaf(a)).collect()),
            ProcessTree::Tau,
        ])
    }

    fn apply_cut(&self, log: &[Trace], cut: Option<Cut>) -> Option<ProcessTree> {
        let cut = cut?;
        let children: Vec<ProcessTree> = split(log, &cut, self.names.len())
            .into_iter()
            .map(|sub| {
                if sub.is_empty() {
                    ProcessTree::Tau
                } else {
                    self.mine(sub)
                }
            })
            .collect();
        Some(match cut.op {
            Operator::Exclusive => ProcessTree::Exclusive(children),
            Operator::Sequence => ProcessTree::Sequence(children),
            Operator::Parallel => ProcessTree::Parallel(children),
            Operator::Loop => ProcessTree::Loop(children),
        })
    }
}

//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use spnfault::conformance::Alignment;
use spnfault::discovery::ProcessTree;
use spnfault::petri::{Marking, PetriNet, TransitionId};

/// Random block-structured tree over `n_leaves` distinct activities
/// `a0, a1, ...`. Tau leaves may be added under choices and loops.
pub fn random_tree<R: Rng>(rng: &mut R, n_leaves: usize) -> ProcessTree {
    let mut next = 0;
    build(rng, n_leaves.max(1), &mut next)
}

fn build<R: Rng>(rng: &mut R, leaves: usize, next: &mut usize) -> ProcessTree {
    if leaves == 1 {
        let name = format!("a{next}");
        *next += 1;
        return ProcessTree::activity(name);
    }
    let split = rng.random_range(1..leaves);
    let left = build(rng, split, next);
    let right = build(rng, leaves - split, next);
    match rng.random_range(0..5) {
        0 | 1 => ProcessTree::Sequence(vec![left, right]),
        2 => {
            if rng.random_bool(0.2) {
                ProcessTree::Exclusive(vec![left, right, ProcessTree::Tau])
            } else {
                ProcessTree::Exclusive(vec![left, right])
            }
        }
        3 => ProcessTree::Parallel(vec![left, right]),
        _ => {
            if rng.random_bool(0.2) {
                ProcessTree::Sequence(vec![ProcessTree::Loop(vec![left, ProcessTree::Tau]), right])
            } else {
                ProcessTree::Loop(vec![left, right])
            }
        }
    }
}

/// Uniformly random complete firing sequence, or `None` if it got stuck
/// or ran past `max_firings`.
pub fn playout<R: Rng>(
    net: &PetriNet,
    rng: &mut R,
    max_firings: usize,
) -> Option<Vec<TransitionId>> {
    let mut m = net.initial_marking().clone();
    let mut seq = Vec::new();
    while &m != net.final_marking() {
        let enabled = net.enabled(&m);
        let &t = enabled.choose(rng)?;
        m = net.fire(&m, t).ok()?;
        seq.push(t);
        if seq.len() > max_firings {
            return None;
        }
    }
    Some(seq)
}

pub fn visible_trace(net: &PetriNet, seq: &[TransitionId]) -> Vec<String> {
    seq.iter()
        .filter_map(|&t| net.transition(t).label.clone())
        .collect()
}

/// Random visible trace of `net` with at most `max_len` events.
pub fn random_trace<R: Rng>(net: &PetriNet, rng: &mut R, max_len: usize) -> Option<Vec<String>> {
    for _ in 0..50 {
        if let Some(seq) = playout(net, rng, 200) {
            let tr = visible_trace(net, &seq);
            if tr.len() <= max_len {
                return Some(tr);
            }
        }
    }
    None
}

/// Swaps, drops, duplicates and foreign insertions, capped at `max_len`.
pub fn perturb<R: Rng>(trace: &[String], rng: &mut R, max_len: usize) -> Vec<String> {
    let mut t = trace.to_vec();
    for _ in 0..rng.random_range(0..4) {
        match rng.random_range(0..4) {
            0 if t.len() >= 2 => {
                let i = rng.random_range(0..t.len() - 1);
                t.swap(i, i + 1);
            }
            1 if !t.is_empty() => {
                let i = rng.random_range(0..t.len());
                t.remove(i);
            }
            2 if !t.is_empty() => {
                let i = rng.random_range(0..t.len());
                let x = t[i].clone();
                t.insert(i, x);
            }
            _ => {
                let i = rng.random_range(0..=t.len());
                t.insert(i, "zz".to_string());
            }
        }
    }
    t.truncate(max_len);
    t
}

/// Optimal alignment cost by enumerating the whole synchronous product
/// (marking, trace position) and relaxing edges until nothing changes.
/// Log and visible model moves cost 1; silent and synchronous moves cost 0.
/// `None` if the product has more than `cap` states.
pub fn brute_force_cost(trace: &[String], net: &PetriNet, cap: usize) -> Option<u32> {
    let start = (net.initial_marking().clone(), 0usize);
    let mut index: HashMap<(Marking, usize), usize> = HashMap::new();
    let mut states = vec![start.clone()];
    index.insert(start, 0);
    let mut edges: Vec<(usize, usize, u32)> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (m, pos) = states[i].clone();
        let mut succ: Vec<((Marking, usize), u32)> = Vec::new();
        if pos < trace.len() {
            succ.push(((m.clone(), pos + 1), 1));
        }
        for t in net.enabled(&m) {
            let next = net.fire(&m, t).ok()?;
            match &net.transition(t).label {
                None => succ.push(((next, pos), 0)),
                Some(l) => {
                    succ.push(((next.clone(), pos), 1));
                    if pos < trace.len() && &trace[pos] == l {
                        succ.push(((next, pos + 1), 0));
                    }
                }
            }
        }
        for (s, c) in succ {
            let j = match index.get(&s) {
                Some(&j) => j,
                None => {
                    if states.len() >= cap {
                        return None;
                    }
                    let j = states.len();
                    index.insert(s.clone(), j);
                    states.push(s);
                    queue.push_back(j);
                    j
                }
            };
            edges.push((i, j, c));
        }
    }
    let mut dist = vec![u32::MAX; states.len()];
    dist[0] = 0;
    loop {
        let mut changed = false;
        for &(a, b, c) in &edges {
            if dist[a] != u32::MAX && dist[a] + c < dist[b] {
                dist[b] = dist[a] + c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let goal = (net.final_marking().clone(), trace.len());
    index
        .get(&goal)
        .map(|&g| dist[g])
        .filter(|&d| d != u32::MAX)
}

/// Checks that `al` is a valid alignment of `trace` on `net` with the
/// stated cost: model moves form a complete firing sequence, log moves
/// spell the trace, synchronous moves agree on the label.
pub fn check_alignment(al: &Alignment, trace: &[String], net: &PetriNet) -> Result<(), String> {
    let mut m = net.initial_marking().clone();
    let mut log = Vec::new();
    let mut cost = 0;
    for mv in &al.moves {
        if let Some(t) = mv.model {
            m = net.fire(&m, t).map_err(|e| e.to_string())?;
        }
        let label = mv.model.and_then(|t| net.transition(t).label.clone());
        match (&mv.log, mv.model) {
            (Some(l), Some(_)) => {
                if label.as_ref() != Some(l) {
                    return Err(format!("synchronous move {l} on {label:?}"));
                }
                log.push(l.clone());
            }
            (Some(l), None) => {
                log.push(l.clone());
                cost += 1;
            }
            (None, Some(_)) => cost += u32::from(label.is_some()),
            (None, None) => return Err("empty move".into()),
        }
    }
    if &m != net.final_marking() {
        return Err("model moves do not reach the final marking".into());
    }
    if log != trace {
        return Err(format!("log projection {log:?} differs from {trace:?}"));
    }
    if cost != al.cost {
        return Err(format!("recounted cost {cost}, reported {}", al.cost));
    }
    Ok(())
}

/// In/out arc counts per node recounted from the JSON arc list.
pub fn recount_degrees(net: &PetriNet) -> HashMap<String, usize> {
    let json = net.to_json();
    let mut deg: HashMap<String, usize> = HashMap::new();
    for p in &json.places {
        deg.insert(p.clone(), 0);
    }
    for t in &json.transitions {
        deg.insert(t.id.clone(), 0);
    }
    for (a, b) in &json.arcs {
        *deg.get_mut(a).unwrap() += 1;
        *deg.get_mut(b).unwrap() += 1;
    }
    deg
}

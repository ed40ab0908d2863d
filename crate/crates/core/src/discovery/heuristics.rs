//! Heuristics Miner: dependency graph, split/join bindings and the
//! conversion of the resulting causal net to a workflow net.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eventlog::EventLog;
use crate::petri::{Marking, PetriNet, PetriNetBuilder, PlaceId, TransitionId};

use super::{check_threshold, DirectlyFollowsGraph, DiscoveryError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicsParams {
    pub dependency_threshold: f64,
    pub and_threshold: f64,
}

impl Default for HeuristicsParams {
    fn default() -> Self {
        Self {
            dependency_threshold: 0.75,
            and_threshold: 0.65,
        }
    }
}

/// Dependency measure of `a => b` on a directly-follows graph. For `a == b`
/// this is the length-one loop measure.
pub fn dependency(dfg: &DirectlyFollowsGraph, a: &str, b: &str) -> f64 {
    dep_value(dfg.edge(a, b), dfg.edge(b, a), a == b)
}

fn dep_value(ab: usize, ba: usize, same: bool) -> f64 {
    if same {
        ab as f64 / (ab as f64 + 1.0)
    } else {
        (ab as f64 - ba as f64) / (ab as f64 + ba as f64 + 1.0)
    }
}

pub fn heuristics_miner(
    log: &EventLog,
    dependency_threshold: f64,
    and_threshold: f64,
) -> Result<PetriNet, DiscoveryError> {
    heuristics_miner_traces(
        &log.traces(),
        HeuristicsParams {
            dependency_threshold,
            and_threshold,
        },
    )
}

pub fn heuristics_miner_traces(
    traces: &[Vec<String>],
    params: HeuristicsParams,
) -> Result<PetriNet, DiscoveryError> {
    check_threshold(params.dependency_threshold)?;
    check_threshold(params.and_threshold)?;
    if traces.is_empty() {
        return Err(DiscoveryError::EmptyLog);
    }
    let names: Vec<String> = traces
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = names.len();
    let (start, end) = (n, n + 1);
    let size = n + 2;

    // Counts over traces wrapped in artificial start and end activities.
    let mut follows = vec![vec![0usize; size]; size];
    let mut twice = vec![vec![0usize; size]; size];
    for t in traces {
        let mut w = Vec::with_capacity(t.len() + 2);
        w.push(start);
        w.extend(t.iter().map(|a| names.binary_search(a).unwrap()));
        w.push(end);
        for p in w.windows(2) {
            follows[p[0]][p[1]] += 1;
        }
        for p in w.windows(3) {
            if p[0] == p[2] && p[0] != p[1] {
                twice[p[0]][p[1]] += 1;
            }
        }
    }

    let thr = params.dependency_threshold;
    let dep = |a: usize, b: usize| dep_value(follows[a][b], follows[b][a], a == b);
    let self_loop: Vec<bool> = (0..size)
        .map(|a| follows[a][a] > 0 && dep(a, a) >= thr)
        .collect();

    let mut edge = vec![vec![false; size]; size];
    for a in 0..size {
        for b in 0..size {
            if a == b {
                edge[a][b] = self_loop[a];
            } else if follows[a][b] > 0 && dep(a, b) >= thr {
                edge[a][b] = true;
            }
        }
    }
    // Length-two loops between activities that do not loop on themselves.
    for a in 0..n {
        for b in a + 1..n {
            if self_loop[a] || self_loop[b] {
                continue;
            }
            let c = (twice[a][b] + twice[b][a]) as f64;
            if c > 0.0 && c / (c + 1.0) >= thr {
                edge[a][b] = true;
                edge[b][a] = true;
            }
        }
    }
    // The artificial activities always connect to the observed start and end.
    for a in 0..n {
        edge[start][a] |= follows[start][a] > 0;
        edge[a][end] |= follows[a][end] > 0;
    }
    edge[start][end] |= follows[start][end] > 0;
    // Every activity keeps its best cause and best successor.
    for a in 0..n {
        if !(0..size).any(|x| x != a && edge[x][a]) {
            if let Some(x) = best(
                size,
                |x| x != a && x != end && follows[x][a] > 0,
                |x| dep(x, a),
            ) {
                edge[x][a] = true;
            }
        }
        if !(0..size).any(|y| y != a && edge[a][y]) {
            if let Some(y) = best(
                size,
                |y| y != a && y != start && follows[a][y] > 0,
                |y| dep(a, y),
            ) {
                edge[a][y] = true;
            }
        }
    }

    // Bindings: activities related by the AND measure sit in different groups.
    let and_thr = params.and_threshold;
    let out_groups: Vec<Vec<Vec<usize>>> = (0..size)
        .map(|a| {
            let outs: Vec<usize> = (0..size).filter(|&b| edge[a][b]).collect();
            groups(&outs, |b, c| {
                b != a && c != a && {
                    let m = (follows[b][c] + follows[c][b]) as f64
                        / (follows[a][b] + follows[a][c] + 1) as f64;
                    m >= and_thr
                }
            })
        })
        .collect();
    let in_groups: Vec<Vec<Vec<usize>>> = (0..size)
        .map(|b| {
            let ins: Vec<usize> = (0..size).filter(|&a| edge[a][b]).collect();
            groups(&ins, |a, c| {
                a != b && c != b && {
                    let m = (follows[a][c] + follows[c][a]) as f64
                        / (follows[a][b] + follows[c][b] + 1) as f64;
                    m >= and_thr
                }
            })
        })
        .collect();

    let mut bld = PetriNetBuilder::new();
    let source = bld.place("source");
    let sink = bld.place("sink");
    let mut n_places = 0;
    let mut place = |bld: &mut PetriNetBuilder| {
        n_places += 1;
        bld.place(format!("p{n_places}"))
    };
    let trans: Vec<TransitionId> = (0..size)
        .map(|a| match a {
            x if x == start => bld.silent("tau_start"),
            x if x == end => bld.silent("tau_end"),
            x => bld.visible(format!("t{}", x + 1), names[x].clone()),
        })
        .collect();
    bld.input(source, trans[start]);
    bld.output(trans[end], sink);

    let group_of = |gs: &[Vec<usize>], x: usize| gs.iter().position(|g| g.contains(&x)).unwrap();
    let mut out_places: Vec<Vec<Option<PlaceId>>> =
        out_groups.iter().map(|gs| vec![None; gs.len()]).collect();
    let mut in_places: Vec<Vec<Option<PlaceId>>> =
        in_groups.iter().map(|gs| vec![None; gs.len()]).collect();
    let mut n_tau = 0;
    for a in 0..size {
        for b in 0..size {
            if !edge[a][b] {
                continue;
            }
            let g = group_of(&out_groups[a], b);
            let h = group_of(&in_groups[b], a);
            let out_single = out_groups[a][g].len() == 1;
            let in_single = in_groups[b][h].len() == 1;
            if out_single && in_single {
                let p = place(&mut bld);
                bld.output(trans[a], p).input(p, trans[b]);
                continue;
            }
            if out_single {
                let p_in = *in_places[b][h]
                    .get_or_insert_with(|| new_input(&mut bld, &mut place, trans[b]));
                bld.output(trans[a], p_in);
                continue;
            }
            let p_out =
                *out_places[a][g].get_or_insert_with(|| new_output(&mut bld, &mut place, trans[a]));
            if in_single {
                // The only input of this group may consume straight from `p_out`.
                bld.input(p_out, trans[b]);
                continue;
            }
            let p_in =
                *in_places[b][h].get_or_insert_with(|| new_input(&mut bld, &mut place, trans[b]));
            n_tau += 1;
            let t = bld.silent(format!("tau{n_tau}"));
            bld.input(p_out, t).output(t, p_in);
        }
    }
    let n = bld.n_places();
    bld.build(
        Marking::with(n, &[(source, 1)]),
        Marking::with(n, &[(sink, 1)]),
    )
    .map_err(|e| DiscoveryError::InvalidTree(e.to_string()))
}

fn new_input(
    bld: &mut PetriNetBuilder,
    place: &mut impl FnMut(&mut PetriNetBuilder) -> PlaceId,
    t: TransitionId,
) -> PlaceId {
    let p = place(bld);
    bld.input(p, t);
    p
}

fn new_output(
    bld: &mut PetriNetBuilder,
    place: &mut impl FnMut(&mut PetriNetBuilder) -> PlaceId,
    t: TransitionId,
) -> PlaceId {
    let p = place(bld);
    bld.output(t, p);
    p
}

fn best(size: usize, ok: impl Fn(usize) -> bool, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut found: Option<(usize, f64)> = None;
    for x in (0..size).filter(|&x| ok(x)) {
        let s = score(x);
        if found.is_none_or(|(_, b)| s > b) {
            found = Some((x, s));
        }
    }
    found.map(|(x, _)| x)
}

/// Partitions `items` so that members of one group are exclusive. Two items
/// land in different groups only when `concurrent` holds for them.
fn groups(items: &[usize], concurrent: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..items.len()).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if !concurrent(items[i], items[j]) {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..items.len() {
        let r = root(&mut parent, i);
        match roots.iter().position(|&x| x == r) {
            Some(k) => out[k].push(items[i]),
            None => {
                roots.push(r);
                out.push(vec![items[i]]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::{check_soundness, Soundness};

    fn log(spec: &[(&str, usize)]) -> Vec<Vec<String>> {
        spec.iter()
            .flat_map(|(t, n)| {
                std::iter::repeat_n(
                    t.split_whitespace().map(String::from).collect::<Vec<_>>(),
                    *n,
                )
            })
            .collect()
    }

    fn replays(net: &PetriNet, trace: &[&str]) -> bool {
        // Silent transitions are explored breadth-first between visible steps.
        let mut frontier = vec![net.initial_marking().clone()];
        for (step, label) in trace.iter().map(Some).chain([None]).enumerate() {
            let mut seen = frontier.clone();
            let mut i = 0;
            while i < seen.len() {
                let m = seen[i].clone();
                for t in net.enabled(&m) {
                    if net.transition(t).label.is_none() {
                        let next = net.fire(&m, t).unwrap();
                        if !seen.contains(&next) {
                            seen.push(next);
                        }
                    }
                }
                i += 1;
                assert!(seen.len() < 10_000, "step {step}");
            }
            match label {
                None => return seen.contains(net.final_marking()),
                Some(l) => {
                    frontier = seen
                        .iter()
                        .flat_map(|m| {
                            net.enabled(m)
                                .into_iter()
                                .filter(|&t| net.transition(t).label.as_deref() == Some(*l))
                                .map(|t| net.fire(m, t).unwrap())
                                .collect::<Vec<_>>()
                        })
                        .collect();
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn dependency_examples() {
        let dfg = DirectlyFollowsGraph::from_traces(&log(&[("a b", 100)])).unwrap();
        assert!((dependency(&dfg, "a", "b") - 100.0 / 101.0).abs() < 1e-12);
        assert!((dependency(&dfg, "b", "a") + 100.0 / 101.0).abs() < 1e-12);

        let sym = DirectlyFollowsGraph::from_traces(&log(&[("a b", 50), ("b a", 50)])).unwrap();
        assert_eq!(dependency(&sym, "a", "b"), 0.0);

        let selfloop = DirectlyFollowsGraph::from_traces(&log(&[("a a", 3)])).unwrap();
        assert_eq!(dependency(&selfloop, "a", "a"), 0.75);
    }

    #[test]
    fn sequence_net() {
        let net =
            heuristics_miner_traces(&log(&[("a b c", 20)]), HeuristicsParams::default()).unwrap();
        assert!(net.is_workflow_net());
        assert_eq!(check_soundness(&net, 10_000), Soundness::Sound);
        assert!(replays(&net, &["a", "b", "c"]));
        assert!(!replays(&net, &["a", "c"]));
    }

    #[test]
    fn exclusive_split() {
        let net = heuristics_miner_traces(
            &log(&[("a b d", 10), ("a c d", 10)]),
            HeuristicsParams::default(),
        )
        .unwrap();
        assert_eq!(check_soundness(&net, 10_000), Soundness::Sound);
        assert!(replays(&net, &["a", "b", "d"]));
        assert!(replays(&net, &["a", "c", "d"]));
        assert!(!replays(&net, &["a", "b", "c", "d"]));
    }

    #[test]
    fn parallel_split() {
        let net = heuristics_miner_traces(
            &log(&[("a b c d", 10), ("a c b d", 10)]),
            HeuristicsParams::default(),
        )
        .unwrap();
        assert_eq!(check_soundness(&net, 10_000), Soundness::Sound);
        assert!(replays(&net, &["a", "b", "c", "d"]));
        assert!(replays(&net, &["a", "c", "b", "d"]));
        assert!(!replays(&net, &["a", "b", "d"]));
    }

    #[test]
    fn self_loop_and_short_loop() {
        let net = heuristics_miner_traces(
            &log(&[("a b b b c", 10), ("a b c", 10)]),
            HeuristicsParams::default(),
        )
        .unwrap();
        assert!(replays(&net, &["a", "b", "b", "c"]));

        let net = heuristics_miner_traces(
            &log(&[("a b c b c d", 10), ("a b c d", 10)]),
            HeuristicsParams::default(),
        )
        .unwrap();
        assert!(replays(&net, &["a", "b", "c", "b", "c", "d"]));
    }

    #[test]
    fn low_frequency_edge_dropped() {
        let traces = log(&[("a b c", 30), ("a c", 1)]);
        let net = heuristics_miner_traces(&traces, HeuristicsParams::default()).unwrap();
        assert!(!replays(&net, &["a", "c"]));
        let all = heuristics_miner_traces(
            &traces,
            HeuristicsParams {
                dependency_threshold: 0.0,
                and_threshold: 1.0,
            },
        )
        .unwrap();
        assert!(replays(&all, &["a", "c"]));
    }

    #[test]
    fn errors() {
        assert_eq!(
            heuristics_miner_traces(&[], HeuristicsParams::default()),
            Err(DiscoveryError::EmptyLog)
        );
        let bad = HeuristicsParams {
            dependency_threshold: -0.1,
            and_threshold: 0.65,
        };
        assert_eq!(
            heuristics_miner_traces(&log(&[("a", 1)]), bad),
            Err(DiscoveryError::BadThreshold(-0.1))
        );
    }
}

//! Shared fixtures for the integration suites: an independent brute-force
//! path oracle, random graph generation, a deterministic compositional
//! benchmark dataset, and a finite-difference helper.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use ptranse::kg::{KnowledgeGraph, Triple};

/// Deduplicated adjacency built by scanning the raw training triples, keyed
/// by (entity, relation). Deliberately independent of the library's
/// prebuilt indexes.
pub fn raw_adjacency(
    graph: &KnowledgeGraph,
    excluded: &HashSet<Triple>,
) -> HashMap<(usize, usize), Vec<usize>> {
    let mut seen: HashSet<Triple> = HashSet::new();
    let mut adj: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for t in &graph.train {
        if excluded.contains(t) || !seen.insert(*t) {
            continue;
        }
        adj.entry((t.head, t.relation)).or_default().push(t.tail);
    }
    for succ in adj.values_mut() {
        succ.sort_unstable();
    }
    adj
}

/// Resource reaching each entity after flowing a unit of resource from
/// `head` along the relation sequence, splitting evenly at every step.
/// Straight-line reimplementation used as the reliability oracle.
pub fn oracle_flow(
    adj: &HashMap<(usize, usize), Vec<usize>>,
    head: usize,
    sequence: &[usize],
) -> HashMap<usize, f64> {
    let mut frontier: HashMap<usize, f64> = HashMap::from([(head, 1.0)]);
    for &rel in sequence {
        let mut next: HashMap<usize, f64> = HashMap::new();
        for (&node, &resource) in &frontier {
            let Some(succ) = adj.get(&(node, rel)) else { continue };
            let share = resource / succ.len() as f64;
            for &m in succ {
                *next.entry(m).or_insert(0.0) += share;
            }
        }
        frontier = next;
    }
    frontier
}

/// Every relation sequence of length 2..=max_len connecting `head` to
/// `tail` through at least one walk, found by depth-first walk enumeration,
/// with the flow-based reliability of each. Sequences below or at the
/// threshold are dropped; output is sorted by sequence.
pub fn oracle_paths(
    graph: &KnowledgeGraph,
    head: usize,
    tail: usize,
    max_len: usize,
    threshold: f64,
    excluded: &HashSet<Triple>,
) -> Vec<(Vec<usize>, f64)> {
    let adj = raw_adjacency(graph, excluded);
    let mut by_node: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (&(h, r), succ) in &adj {
        for &t in succ {
            by_node.entry(h).or_default().push((r, t));
        }
    }
    let mut sequences: HashSet<Vec<usize>> = HashSet::new();
    let mut stack: Vec<usize> = Vec::new();
    dfs_walks(&by_node, head, tail, max_len, &mut stack, &mut sequences);
    let mut out: Vec<(Vec<usize>, f64)> = sequences
        .into_iter()
        .filter_map(|seq| {
            let reliability = oracle_flow(&adj, head, &seq).get(&tail).copied().unwrap_or(0.0);
            (reliability > threshold).then_some((seq, reliability))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn dfs_walks(
    by_node: &HashMap<usize, Vec<(usize, usize)>>,
    node: usize,
    tail: usize,
    max_len: usize,
    stack: &mut Vec<usize>,
    sequences: &mut HashSet<Vec<usize>>,
) {
    if node == tail && stack.len() >= 2 {
        sequences.insert(stack.clone());
    }
    if stack.len() == max_len {
        return;
    }
    let Some(edges) = by_node.get(&node) else { return };
    for &(rel, next) in edges {
        stack.push(rel);
        dfs_walks(by_node, next, tail, max_len, stack, sequences);
        stack.pop();
    }
}

/// Random multigraph for oracle comparison: up to `max_entities` entities,
/// up to `max_relations` relations, train split only.
pub fn random_graph(rng: &mut ChaCha20Rng, max_entities: usize, max_relations: usize) -> KnowledgeGraph {
    let n_e = rng.gen_range(3..=max_entities);
    let n_r = rng.gen_range(1..=max_relations);
    let n_t = rng.gen_range(n_e..=3 * n_e);
    let names_e: Vec<String> = (0..n_e).map(|i| format!("e{i}")).collect();
    let names_r: Vec<String> = (0..n_r).map(|i| format!("r{i}")).collect();
    let mut triples: Vec<(&str, &str, &str)> = Vec::with_capacity(n_t);
    for _ in 0..n_t {
        let h = rng.gen_range(0..n_e);
        let r = rng.gen_range(0..n_r);
        let t = rng.gen_range(0..n_e);
        triples.push((&names_e[h], &names_r[r], &names_e[t]));
    }
    KnowledgeGraph::from_named(&triples, &[], &[])
}

/// Central finite difference of a scalar function of one coordinate.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Deterministic compositional benchmark: people are born in cities, cities
/// sit in countries, and nationality follows the two-step chain. A
/// confusable relation (`visited`, same type signature as nationality but
/// random) and random `friend` edges provide noise; a handful of
/// `rare`-relation test queries involve entities with no connecting paths
/// at all. A quarter of the nationality facts are held out as the test
/// split; their component edges stay in train, so the compositional path is
/// always available to the miner.
pub const SYNTH_PERSONS: usize = 160;
pub const SYNTH_CITIES: usize = 16;
pub const SYNTH_COUNTRIES: usize = 4;
pub const SYNTH_NOISE_RELATIONS: usize = 24;

pub fn synth_dataset(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let persons: Vec<String> = (0..SYNTH_PERSONS).map(|i| format!("p{i}")).collect();
    let cities: Vec<String> = (0..SYNTH_CITIES).map(|i| format!("c{i}")).collect();
    let countries: Vec<String> = (0..SYNTH_COUNTRIES).map(|i| format!("k{i}")).collect();
    let languages: Vec<String> = (0..SYNTH_COUNTRIES).map(|i| format!("l{i}")).collect();
    let mut train: Vec<(String, String, String)> = Vec::new();
    let mut test: Vec<(String, String, String)> = Vec::new();
    let city_of = |i: usize| i % SYNTH_CITIES;
    let country_of = |c: usize| c % SYNTH_COUNTRIES;
    for i in 0..SYNTH_PERSONS {
        let c = city_of(i);
        let k = country_of(c);
        train.push((persons[i].clone(), "born_in".into(), cities[c].clone()));
        train.push((persons[i].clone(), "lives_in".into(), cities[c].clone()));
        train.push((persons[i].clone(), "speaks".into(), languages[k].clone()));
        let nat = (persons[i].clone(), "nationality".into(), countries[k].clone());
        if i % 4 == 0 {
            test.push(nat);
        } else {
            train.push(nat);
        }
        // Confusable person→country edges: half follow nationality, half
        // are random, so the direct translation resembles nationality's
        // without the compositional support behind it.
        let visited =
            if rng.gen_bool(0.5) { k } else { rng.gen_range(0..SYNTH_COUNTRIES) };
        train.push((persons[i].clone(), "visited".into(), countries[visited].clone()));
    }
    for c in 0..SYNTH_CITIES {
        train.push((cities[c].clone(), "city_in".into(), countries[country_of(c)].clone()));
    }
    for k in 0..SYNTH_COUNTRIES {
        train.push((countries[k].clone(), "language_of".into(), languages[k].clone()));
    }
    // A wide tail of sparse noise relations, so relation corruption draws
    // from a rich candidate pool during training (as in a real KB) without
    // distorting the underlying geometry.
    for r in 0..SYNTH_NOISE_RELATIONS {
        for _ in 0..4 {
            let a = rng.gen_range(0..SYNTH_PERSONS);
            let b = rng.gen_range(0..SYNTH_PERSONS);
            if a != b {
                train.push((persons[a].clone(), format!("n{r}"), persons[b].clone()));
            }
        }
    }
    // Queries whose pair has no connecting path: u_i touches train only
    // through v_i, and w_i only through an unrelated outgoing edge.
    for i in 0..6 {
        train.push((format!("u{i}"), "rare".into(), format!("v{i}")));
        train.push((format!("w{i}"), "rare".into(), format!("x{i}")));
        test.push((format!("u{i}"), "rare".into(), format!("w{i}")));
    }
    let mut order = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    train.shuffle(&mut order);
    fn view(v: &[(String, String, String)]) -> Vec<(&str, &str, &str)> {
        v.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect()
    }
    let train_view = view(&train);
    let test_view = view(&test);
    KnowledgeGraph::from_named(&train_view, &[], &test_view).augment_reverse().unwrap()
}

/// Writes a graph's splits as tab-separated files for CLI tests.
pub fn write_splits(dir: &std::path::Path, graph: &KnowledgeGraph) {
    let dump = |name: &str, triples: &[Triple]| {
        let mut out = String::new();
        for t in triples {
            // Reverse triples are a runtime artifact; only originals persist.
            if t.relation < graph.n_original_relations {
                out.push_str(&format!(
                    "{}\t{}\t{}\n",
                    graph.entities.name(t.head),
                    graph.relations.name(t.relation),
                    graph.entities.name(t.tail)
                ));
            }
        }
        std::fs::write(dir.join(name), out).unwrap();
    };
    dump("train.txt", &graph.train);
    dump("valid.txt", &graph.valid);
    dump("test.txt", &graph.test);
}

//! Relation-path mining: bounded-length enumeration between entity pairs,
//! path-constraint resource allocation (PCRA) reliability scoring, and the
//! corpus-level path→relation confidence statistics.
//!
//! PCRA starts a unit of resource at the head entity and flows it layer by
//! layer along the relation sequence; each entity splits its resource evenly
//! among its successors for the layer's relation. The amount arriving at the
//! tail is the path's reliability for that pair.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};

pub const DEFAULT_MAX_LEN: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// A relation sequence between an entity pair, with its PCRA reliability.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationPath {
    pub relations: Vec<usize>,
    pub reliability: f64,
}

/// Reliable paths for one (head, tail) pair plus the normalizer Z.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairPaths {
    pub paths: Vec<RelationPath>,
    pub z: f64,
}

/// Mined paths for every covered training pair.
#[derive(Debug, Clone, Default)]
pub struct PathSet {
    pub pairs: HashMap<(usize, usize), PairPaths>,
}

/// Pr(r|p) per (path signature, relation), estimated by pair co-occurrence
/// counts on the training graph.
#[derive(Debug, Clone, Default)]
pub struct PathRelationStats {
    pub confidence: HashMap<(Vec<usize>, usize), f64>,
}

impl PathSet {
    pub fn get(&self, head: usize, tail: usize) -> Option<&PairPaths> {
        self.pairs.get(&(head, tail))
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_paths(&self) -> usize {
        self.pairs.values().map(|p| p.paths.len()).sum()
    }
}

impl PathRelationStats {
    pub fn get(&self, signature: &[usize], relation: usize) -> f64 {
        self.confidence
            .get(&(signature.to_vec(), relation))
            .copied()
            .unwrap_or(0.0)
    }
}

fn is_excluded(excluded: &[Triple], head: usize, relation: usize, tail: usize) -> bool {
    excluded
        .iter()
        .any(|e| e.head == head && e.relation == relation && e.tail == tail)
}

/// One PCRA propagation layer: flow `frontier` resources along `relation`,
/// skipping `excluded` edges. Dead ends drop their resource.
fn propagate_layer(
    graph: &KnowledgeGraph,
    frontier: &BTreeMap<usize, f64>,
    relation: usize,
    excluded: &[Triple],
) -> BTreeMap<usize, f64> {
    let mut next: BTreeMap<usize, f64> = BTreeMap::new();
    for (&n, &resource) in frontier {
        let succ: Vec<usize> = graph
            .successors(n, relation)
            .iter()
            .copied()
            .filter(|&m| !is_excluded(excluded, n, relation, m))
            .collect();
        if succ.is_empty() {
            continue;
        }
        let share = resource / succ.len() as f64;
        for m in succ {
            *next.entry(m).or_insert(0.0) += share;
        }
    }
    next
}

/// Resource reaching each entity from `head` along the exact relation
/// sequence `path`. Entities with zero resource are omitted.
pub fn pcra(graph: &KnowledgeGraph, head: usize, path: &[usize]) -> BTreeMap<usize, f64> {
    pcra_excluding(graph, head, path, &[])
}

/// PCRA with a set of edges removed from the traversal graph.
pub fn pcra_excluding(
    graph: &KnowledgeGraph,
    head: usize,
    path: &[usize],
    excluded: &[Triple],
) -> BTreeMap<usize, f64> {
    let mut frontier = BTreeMap::from([(head, 1.0)]);
    for &relation in path {
        frontier = propagate_layer(graph, &frontier, relation, excluded);
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

/// All relation sequences of length 2..=`max_len` connecting `head` to
/// `tail` with PCRA reliability strictly above `threshold`.
pub fn enumerate_paths(
    graph: &KnowledgeGraph,
    head: usize,
    tail: usize,
    max_len: usize,
    threshold: f64,
) -> Vec<RelationPath> {
    enumerate_paths_excluding(graph, head, tail, max_len, threshold, &[])
}

pub fn enumerate_paths_excluding(
    graph: &KnowledgeGraph,
    head: usize,
    tail: usize,
    max_len: usize,
    threshold: f64,
    excluded: &[Triple],
) -> Vec<RelationPath> {
    let mut out = Vec::new();
    // Breadth-first over relation prefixes; each prefix carries the full
    // entity → resource frontier so shared walks collapse.
    let mut frontier: Vec<(Vec<usize>, BTreeMap<usize, f64>)> =
        vec![(Vec::new(), BTreeMap::from([(head, 1.0)]))];
    for depth in 1..=max_len {
        let mut next_frontier = Vec::new();
        for (prefix, resources) in &frontier {
            let mut candidate_rels: Vec<usize> = resources
                .keys()
                .flat_map(|&e| graph.out_relations(e).iter().copied())
                .collect();
            candidate_rels.sort_unstable();
            candidate_rels.dedup();
            for r in candidate_rels {
                let next = propagate_layer(graph, resources, r, excluded);
                if next.is_empty() {
                    continue;
                }
                let mut path = prefix.clone();
                path.push(r);
                if depth >= 2 {
                    if let Some(&res) = next.get(&tail) {
                        if res > threshold {
                            out.push(RelationPath { relations: path.clone(), reliability: res });
                        }
                    }
                }
                if depth < max_len {
                    next_frontier.push((path, next));
                }
            }
        }
        frontier = next_frontier;
    }
    out.sort_by(|a, b| a.relations.cmp(&b.relations));
    out
}

/// Edges between `head` and `tail` (both directions) in train; removed from
/// traversal when mining for that pair so the target relation cannot route
/// through itself.
fn direct_edges(graph: &KnowledgeGraph, head: usize, tail: usize) -> Vec<Triple> {
    let mut edges = Vec::new();
    for &r in graph.relations_between(head, tail) {
        edges.push(Triple::new(head, r, tail));
    }
    for &r in graph.relations_between(tail, head) {
        edges.push(Triple::new(tail, r, head));
    }
    edges
}

/// Mines one pair with the leakage guard applied; `None` when no reliable
/// path exists. This is the on-demand variant used at evaluation time for
/// pairs outside the persisted training path set.
pub fn mine_pair(
    graph: &KnowledgeGraph,
    head: usize,
    tail: usize,
    max_len: usize,
    threshold: f64,
) -> Option<PairPaths> {
    let excluded = direct_edges(graph, head, tail);
    let paths = enumerate_paths_excluding(graph, head, tail, max_len, threshold, &excluded);
    if paths.is_empty() {
        return None;
    }
    let z = paths.iter().map(|p| p.reliability).sum();
    Some(PairPaths { paths, z })
}

/// Mines reliable paths for every (head, tail) pair appearing in train.
/// The graph must already have reverse relations materialized.
pub fn mine_training_paths(graph: &KnowledgeGraph, max_len: usize, threshold: f64) -> PathSet {
    let pairs = graph.train_pairs();
    let mined: Vec<((usize, usize), PairPaths)> = pairs
        .par_iter()
        .filter_map(|&(h, t)| {
            let excluded = direct_edges(graph, h, t);
            let paths = enumerate_paths_excluding(graph, h, t, max_len, threshold, &excluded);
            if paths.is_empty() {
                return None;
            }
            let z = paths.iter().map(|p| p.reliability).sum();
            Some(((h, t), PairPaths { paths, z }))
        })
        .collect();
    PathSet { pairs: mined.into_iter().collect() }
}

/// Pr(r|p) = (pairs connected by p that also hold r directly) / (pairs
/// connected by p), counted over the mined training pairs.
pub fn path_relation_confidence(graph: &KnowledgeGraph, paths: &PathSet) -> PathRelationStats {
    let mut pairs_by_sig: HashMap<&[usize], Vec<(usize, usize)>> = HashMap::new();
    for (&(h, t), entry) in &paths.pairs {
        for p in &entry.paths {
            pairs_by_sig.entry(&p.relations).or_default().push((h, t));
        }
    }
    let mut confidence = HashMap::new();
    for (sig, pairs) in pairs_by_sig {
        let denom = pairs.len() as f64;
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for (h, t) in pairs {
            for &r in graph.relations_between(h, t) {
                *counts.entry(r).or_insert(0) += 1;
            }
        }
        for (r, c) in counts {
            confidence.insert((sig.to_vec(), r), c as f64 / denom);
        }
    }
    PathRelationStats { confidence }
}

// --- persistence --------------------------------------------------------
//
// PathSet file: one record per pair,
//   <head> <tail> <n_paths>
//   <len> <r_1> ... <r_len> <reliability>      (n_paths lines)
// Reliabilities carry 6 significant digits.
//
// Stats file: <r_1> ... <r_len> TAB <relation> TAB <confidence>

impl PathSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut w = BufWriter::new(file);
        let mut keys: Vec<&(usize, usize)> = self.pairs.keys().collect();
        keys.sort();
        let io = |e| Error::Io { path: path.into(), source: e };
        for &&(h, t) in &keys {
            let entry = &self.pairs[&(h, t)];
            writeln!(w, "{h} {t} {}", entry.paths.len()).map_err(io)?;
            for p in &entry.paths {
                let rels: Vec<String> = p.relations.iter().map(|r| r.to_string()).collect();
                writeln!(w, "{} {} {:.5e}", p.relations.len(), rels.join(" "), p.reliability)
                    .map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        let mut pairs = HashMap::new();
        let bad = |line: usize, msg: &str| Error::MalformedFile {
            path: path.into(),
            line: line + 1,
            msg: msg.to_string(),
        };
        while let Some((lineno, line)) = lines.next() {
            let line = line.map_err(|e| Error::Io { path: path.into(), source: e })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad(lineno, "expected `head tail n_paths`"));
            }
            let h: usize = fields[0].parse().map_err(|_| bad(lineno, "bad head id"))?;
            let t: usize = fields[1].parse().map_err(|_| bad(lineno, "bad tail id"))?;
            let n: usize = fields[2].parse().map_err(|_| bad(lineno, "bad path count"))?;
            let mut entry = PairPaths::default();
            for _ in 0..n {
                let (lineno, line) = lines
                    .next()
                    .ok_or_else(|| bad(lineno, "truncated record"))?;
                let line = line.map_err(|e| Error::Io { path: path.into(), source: e })?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < 2 {
                    return Err(bad(lineno, "truncated path line"));
                }
                let len: usize = fields[0].parse().map_err(|_| bad(lineno, "bad path length"))?;
                if fields.len() != len + 2 {
                    return Err(bad(lineno, "path line field count mismatch"));
                }
                let relations = fields[1..=len]
                    .iter()
                    .map(|f| f.parse())
                    .collect::<std::result::Result<Vec<usize>, _>>()
                    .map_err(|_| bad(lineno, "bad relation id"))?;
                let reliability: f64 =
                    fields[len + 1].parse().map_err(|_| bad(lineno, "bad reliability"))?;
                entry.paths.push(RelationPath { relations, reliability });
            }
            entry.z = entry.paths.iter().map(|p| p.reliability).sum();
            pairs.insert((h, t), entry);
        }
        Ok(PathSet { pairs })
    }
}

impl PathRelationStats {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut w = BufWriter::new(file);
        let mut keys: Vec<&(Vec<usize>, usize)> = self.confidence.keys().collect();
        keys.sort();
        for key in keys {
            let (sig, r) = key;
            let rels: Vec<String> = sig.iter().map(|r| r.to_string()).collect();
            writeln!(w, "{}\t{}\t{}", rels.join(" "), r, self.confidence[key])
                .map_err(|e| Error::Io { path: path.into(), source: e })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let reader = BufReader::new(file);
        let mut confidence = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Io { path: path.into(), source: e })?;
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::MalformedFile {
                path: path.into(),
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected `signature TAB relation TAB confidence`"));
            }
            let sig = fields[0]
                .split(' ')
                .map(|f| f.parse())
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| bad("bad relation id in signature"))?;
            let r: usize = fields[1].parse().map_err(|_| bad("bad relation id"))?;
            let c: f64 = fields[2].parse().map_err(|_| bad("bad confidence"))?;
            confidence.insert((sig, r), c);
        }
        Ok(PathRelationStats { confidence })
    }
}

/// Coverage statistics used for run summaries: expected paths per covered
/// pair (P) and expected path length (L).
pub fn coverage_summary(paths: &PathSet) -> (f64, f64) {
    let n_pairs = paths.n_pairs();
    if n_pairs == 0 {
        return (0.0, 0.0);
    }
    let n_paths = paths.n_paths();
    let total_len: usize = paths
        .pairs
        .values()
        .flat_map(|e| e.paths.iter().map(|p| p.relations.len()))
        .sum();
    (
        n_paths as f64 / n_pairs as f64,
        if n_paths == 0 { 0.0 } else { total_len as f64 / n_paths as f64 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;

    /// Fork-join graph from a worked PCRA example: h splits to e1, e2; e1
    /// feeds t; e2 feeds t and u.
    fn fork_join() -> KnowledgeGraph {
        KnowledgeGraph::from_named(
            &[
                ("h", "r1", "e1"),
                ("h", "r1", "e2"),
                ("e1", "r2", "t"),
                ("e2", "r2", "t"),
                ("e2", "r2", "u"),
            ],
            &[],
            &[],
        )
    }

    #[test]
    fn lossless_chain_conserves_resource() {
        let g = KnowledgeGraph::from_named(&[("h", "r1", "e1"), ("e1", "r2", "t")], &[], &[]);
        let r = pcra(&g, 0, &[0, 1]);
        assert_eq!(r.len(), 1);
        let t = g.entities.id("t").unwrap();
        assert!((r[&t] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fork_join_hand_propagation() {
        let g = fork_join();
        let h = g.entities.id("h").unwrap();
        let t = g.entities.id("t").unwrap();
        let u = g.entities.id("u").unwrap();
        let r = pcra(&g, h, &[0, 1]);
        // R(e1)=R(e2)=0.5; R(t)=0.5/1 + 0.5/2 = 0.75; R(u)=0.25
        assert!((r[&t] - 0.75).abs() < 1e-12);
        assert!((r[&u] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn no_successor_gives_empty_map() {
        let g = fork_join();
        let t = g.entities.id("t").unwrap();
        assert!(pcra(&g, t, &[0, 1]).is_empty());
    }

    #[test]
    fn triangle_unique_chain() {
        let g = KnowledgeGraph::from_named(&[("h", "r1", "e"), ("e", "r2", "t")], &[], &[]);
        let h = g.entities.id("h").unwrap();
        let t = g.entities.id("t").unwrap();
        let paths = enumerate_paths(&g, h, t, 2, 0.01);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].relations, vec![0, 1]);
        assert!((paths[0].reliability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fork_join_low_resource_branch() {
        let g = fork_join();
        let h = g.entities.id("h").unwrap();
        let u = g.entities.id("u").unwrap();
        let paths = enumerate_paths(&g, h, u, 2, 0.01);
        assert_eq!(paths.len(), 1);
        assert!((paths[0].reliability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_triple_graph_mines_nothing() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b")], &[], &[])
            .augment_reverse()
            .unwrap();
        let ps = mine_training_paths(&g, 3, 0.01);
        assert_eq!(ps.n_pairs(), 0);
    }

    #[test]
    fn z_is_sum_of_reliabilities() {
        let g = fork_join().augment_reverse().unwrap();
        let ps = mine_training_paths(&g, 3, 0.01);
        for entry in ps.pairs.values() {
            let sum: f64 = entry.paths.iter().map(|p| p.reliability).sum();
            assert!((entry.z - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_filters_monotonically() {
        let g = fork_join().augment_reverse().unwrap();
        let lo = mine_training_paths(&g, 3, 0.01);
        let hi = mine_training_paths(&g, 3, 0.3);
        for (pair, entry) in &hi.pairs {
            let lo_entry = lo.get(pair.0, pair.1).expect("pair lost at lower threshold");
            for p in &entry.paths {
                assert!(lo_entry.paths.iter().any(|q| q.relations == p.relations));
            }
        }
    }

    #[test]
    fn confidence_counting() {
        // Path (r1, r2) connects 4 pairs; 3 of them also hold r directly.
        let mut train = vec![
            ("a1", "r1", "m1"),
            ("m1", "r2", "b1"),
            ("a2", "r1", "m2"),
            ("m2", "r2", "b2"),
            ("a3", "r1", "m3"),
            ("m3", "r2", "b3"),
            ("a4", "r1", "m4"),
            ("m4", "r2", "b4"),
        ];
        // The fourth pair holds an unrelated relation so it still counts in
        // the denominator (confidence is estimated over mined train pairs).
        train.extend([
            ("a1", "r", "b1"),
            ("a2", "r", "b2"),
            ("a3", "r", "b3"),
            ("a4", "s", "b4"),
        ]);
        let g = KnowledgeGraph::from_named(&train, &[], &[]).augment_reverse().unwrap();
        let ps = mine_training_paths(&g, 2, 0.01);
        let stats = path_relation_confidence(&g, &ps);
        let r1 = g.relations.id("r1").unwrap();
        let r2 = g.relations.id("r2").unwrap();
        let r = g.relations.id("r").unwrap();
        assert!((stats.get(&[r1, r2], r) - 0.75).abs() < 1e-12);
        // A relation that never co-occurs with the path.
        assert_eq!(stats.get(&[r1, r2], r1), 0.0);
    }

    #[test]
    fn confidence_full_cooccurrence() {
        let g = KnowledgeGraph::from_named(
            &[("a", "r1", "m"), ("m", "r2", "b"), ("a", "r", "b")],
            &[],
            &[],
        )
        .augment_reverse()
        .unwrap();
        let ps = mine_training_paths(&g, 2, 0.01);
        let stats = path_relation_confidence(&g, &ps);
        let r1 = g.relations.id("r1").unwrap();
        let r2 = g.relations.id("r2").unwrap();
        let r = g.relations.id("r").unwrap();
        assert!((stats.get(&[r1, r2], r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leakage_guard_excludes_direct_edge() {
        // Without the guard, pair (a, c) would get the 2-step path (r, rb)
        // routing through its own direct edge a→c.
        let g = KnowledgeGraph::from_named(
            &[("a", "r", "c"), ("c", "rb", "c2"), ("c2", "rc", "c")],
            &[],
            &[],
        )
        .augment_reverse()
        .unwrap();
        let ps = mine_training_paths(&g, 3, 0.01);
        if let Some(entry) = ps.get(0, 1) {
            let r = g.relations.id("r").unwrap();
            for p in &entry.paths {
                assert_ne!(p.relations.first(), Some(&r), "path starts with excluded edge");
            }
        }
    }

    #[test]
    fn pathset_roundtrip() {
        let g = fork_join().augment_reverse().unwrap();
        let ps = mine_training_paths(&g, 3, 0.01);
        assert!(ps.n_pairs() > 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paths.txt");
        ps.save(&path).unwrap();
        let loaded = PathSet::load(&path).unwrap();
        assert_eq!(loaded.n_pairs(), ps.n_pairs());
        for (pair, entry) in &ps.pairs {
            let other = loaded.get(pair.0, pair.1).unwrap();
            assert_eq!(other.paths.len(), entry.paths.len());
            for (a, b) in entry.paths.iter().zip(&other.paths) {
                assert_eq!(a.relations, b.relations);
                assert!((a.reliability - b.reliability).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn stats_roundtrip() {
        let g = fork_join().augment_reverse().unwrap();
        let ps = mine_training_paths(&g, 3, 0.01);
        let stats = path_relation_confidence(&g, &ps);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.txt");
        stats.save(&path).unwrap();
        let loaded = PathRelationStats::load(&path).unwrap();
        assert_eq!(loaded.confidence, stats.confidence);
    }
}

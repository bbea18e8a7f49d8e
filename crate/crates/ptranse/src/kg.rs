//! Triple store: vocabularies, train/valid/test splits, reverse-relation
//! materialization and the adjacency indexes used by mining, training and
//! evaluation.
//!
//! Datasets follow the FB15K file convention: UTF-8 text, one triple per
//! line, `head TAB relation TAB tail`. Small graphs can also be built
//! straight from names:
//!
//! ```
//! use ptranse::kg::KnowledgeGraph;
//!
//! let g = KnowledgeGraph::from_named(
//!     &[("h", "r1", "e1"), ("h", "r1", "e2"),
//!       ("e1", "r2", "t"), ("e2", "r2", "t"), ("e2", "r2", "u")],
//!     &[], &[]);
//! assert_eq!(g.n_entities(), 5);
//! assert_eq!(g.successors(g.entities.id("h").unwrap(), 0), &[1, 2]);
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A single fact: (head entity, relation, tail entity), all as vocabulary ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple { head, relation, tail }
    }
}

/// Bidirectional string ↔ id map. Ids are assigned in first-encounter order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get_or_insert(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    /// Writes `name TAB id` per line (the entity2id / relation2id convention).
    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut w = BufWriter::new(file);
        for (id, name) in self.names.iter().enumerate() {
            writeln!(w, "{name}\t{id}").map_err(|e| Error::Io { path: path.into(), source: e })?;
        }
        Ok(())
    }
}

/// Mapping category of a relation by its average fan-out on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationCategory {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl std::fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RelationCategory::OneToOne => "1-to-1",
            RelationCategory::OneToMany => "1-to-N",
            RelationCategory::ManyToOne => "N-to-1",
            RelationCategory::ManyToMany => "N-to-N",
        };
        f.write_str(s)
    }
}

/// In-memory knowledge graph: vocabularies, splits, adjacency indexes.
///
/// Built once, then immutable; all queries are read-only.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    /// Number of relations before reverse augmentation.
    pub n_original_relations: usize,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    train_set: HashSet<Triple>,
    /// (head, relation) → sorted successor entity ids, over train.
    out_index: HashMap<(usize, usize), Vec<usize>>,
    /// (head, tail) → sorted relation ids, over train.
    pair_index: HashMap<(usize, usize), Vec<usize>>,
    /// entity → sorted relation ids with at least one outgoing edge, over train.
    out_rels: HashMap<usize, Vec<usize>>,
    /// Membership over train ∪ valid ∪ test, for the filter setting.
    all_known: HashSet<Triple>,
    augmented: bool,
}

/// Parses one triple file, extending the vocabularies with unseen names.
/// Duplicate lines are collapsed; line order determines id assignment.
pub fn load_triples(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
) -> Result<Vec<Triple>> {
    let file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let reader = BufReader::new(file);
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io { path: path.into(), source: e })?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedTriple {
                path: path.into(),
                line: lineno + 1,
                fields: fields.len(),
            });
        }
        let t = Triple {
            head: entities.get_or_insert(fields[0]),
            relation: relations.get_or_insert(fields[1]),
            tail: entities.get_or_insert(fields[2]),
        };
        if seen.insert(t) {
            triples.push(t);
        }
    }
    Ok(triples)
}

impl KnowledgeGraph {
    /// Loads train/valid/test splits and builds the indexes. No reverse
    /// relations yet; call [`KnowledgeGraph::augment_reverse`] for that.
    pub fn load(train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let train = load_triples(train, &mut entities, &mut relations)?;
        let valid = load_triples(valid, &mut entities, &mut relations)?;
        let test = load_triples(test, &mut entities, &mut relations)?;
        Ok(Self::from_parts(entities, relations, train, valid, test))
    }

    /// Builds a graph from already-resolved triples (used heavily by tests).
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        let n_original_relations = relations.len();
        let mut g = KnowledgeGraph {
            entities,
            relations,
            n_original_relations,
            train,
            valid,
            test,
            ..Default::default()
        };
        g.rebuild_indexes();
        g
    }

    /// Convenience constructor for tests: triples given as string names.
    pub fn from_named(
        train: &[(&str, &str, &str)],
        valid: &[(&str, &str, &str)],
        test: &[(&str, &str, &str)],
    ) -> Self {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let resolve = |set: &[(&str, &str, &str)],
                           entities: &mut Vocab,
                           relations: &mut Vocab| {
            let mut out = Vec::new();
            let mut seen = HashSet::new();
            for &(h, r, t) in set {
                let t = Triple {
                    head: entities.get_or_insert(h),
                    relation: relations.get_or_insert(r),
                    tail: entities.get_or_insert(t),
                };
                if seen.insert(t) {
                    out.push(t);
                }
            }
            out
        };
        let train = resolve(train, &mut entities, &mut relations);
        let valid = resolve(valid, &mut entities, &mut relations);
        let test = resolve(test, &mut entities, &mut relations);
        Self::from_parts(entities, relations, train, valid, test)
    }

    fn rebuild_indexes(&mut self) {
        self.train_set = self.train.iter().copied().collect();
        self.out_index.clear();
        self.pair_index.clear();
        self.out_rels.clear();
        for &t in &self.train {
            self.out_index.entry((t.head, t.relation)).or_default().push(t.tail);
            self.pair_index.entry((t.head, t.tail)).or_default().push(t.relation);
            self.out_rels.entry(t.head).or_default().push(t.relation);
        }
        for v in self.out_rels.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        for v in self.out_index.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        for v in self.pair_index.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        self.all_known = self
            .train
            .iter()
            .chain(self.valid.iter())
            .chain(self.test.iter())
            .copied()
            .collect();
    }

    /// Adds the reverse triple (t, r⁻¹, h) for every training triple.
    /// Reverse of relation `i` gets id `i + n_original_relations`.
    pub fn augment_reverse(mut self) -> Result<Self> {
        if self.augmented {
            return Err(Error::AlreadyAugmented { n: self.relations.len() });
        }
        let n = self.n_original_relations;
        for i in 0..n {
            let name = format!("~{}", self.relations.name(i));
            self.relations.get_or_insert(&name);
        }
        let mut reversed: Vec<Triple> = self
            .train
            .iter()
            .map(|t| Triple::new(t.tail, t.relation + n, t.head))
            .collect();
        self.train.append(&mut reversed);
        self.augmented = true;
        self.rebuild_indexes();
        Ok(self)
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Reverse relation id; an involution over the augmented vocabulary.
    pub fn reverse_of(&self, relation: usize) -> usize {
        let n = self.n_original_relations;
        if relation < n {
            relation + n
        } else {
            relation - n
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Successor tails of `entity` via `relation` in the training graph.
    pub fn successors(&self, entity: usize, relation: usize) -> &[usize] {
        self.out_index.get(&(entity, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Relations with at least one outgoing edge from `entity` in train.
    pub fn out_relations(&self, entity: usize) -> &[usize] {
        self.out_rels.get(&entity).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Relations connecting (head, tail) directly in the training graph.
    pub fn relations_between(&self, head: usize, tail: usize) -> &[usize] {
        self.pair_index.get(&(head, tail)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn in_train(&self, t: &Triple) -> bool {
        self.train_set.contains(t)
    }

    pub fn is_known(&self, t: &Triple) -> bool {
        self.all_known.contains(t)
    }

    /// All distinct (head, tail) pairs appearing in training triples,
    /// in first-appearance order.
    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        for t in &self.train {
            if seen.insert((t.head, t.tail)) {
                pairs.push((t.head, t.tail));
            }
        }
        pairs
    }

    /// Mapping category of an original relation over the training triples.
    pub fn classify_relation(&self, relation: usize) -> Result<RelationCategory> {
        let mut tails_by_head: HashMap<usize, HashSet<usize>> = HashMap::new();
        let mut heads_by_tail: HashMap<usize, HashSet<usize>> = HashMap::new();
        for t in &self.train {
            if t.relation == relation {
                tails_by_head.entry(t.head).or_default().insert(t.tail);
                heads_by_tail.entry(t.tail).or_default().insert(t.head);
            }
        }
        if tails_by_head.is_empty() {
            return Err(Error::EmptyRelation { relation });
        }
        let tails_per_head: f64 = tails_by_head.values().map(|s| s.len() as f64).sum::<f64>()
            / tails_by_head.len() as f64;
        let heads_per_tail: f64 = heads_by_tail.values().map(|s| s.len() as f64).sum::<f64>()
            / heads_by_tail.len() as f64;
        Ok(match (tails_per_head >= 1.5, heads_per_tail >= 1.5) {
            (false, false) => RelationCategory::OneToOne,
            (true, false) => RelationCategory::OneToMany,
            (false, true) => RelationCategory::ManyToOne,
            (true, true) => RelationCategory::ManyToMany,
        })
    }

    /// Writes entity2id / relation2id dumps into `dir`.
    pub fn dump_vocabs(&self, dir: &Path) -> Result<()> {
        self.entities.dump(&dir.join("entity2id.txt"))?;
        self.relations.dump(&dir.join("relation2id.txt"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn single_line_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "train", "a\tlikes\tb\n");
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        let triples = load_triples(&path, &mut e, &mut r).unwrap();
        assert_eq!(triples, vec![Triple::new(0, 0, 1)]);
        assert_eq!(e.id("a"), Some(0));
        assert_eq!(e.id("b"), Some(1));
        assert_eq!(r.id("likes"), Some(0));
    }

    #[test]
    fn empty_file_yields_empty_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "train", "");
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        assert!(load_triples(&path, &mut e, &mut r).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "train", "a\tlikes\tb\na\tb\n");
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        match load_triples(&path, &mut e, &mut r) {
            Err(Error::MalformedTriple { line, fields, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(fields, 2);
            }
            other => panic!("expected MalformedTriple, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_lines_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "train", "a\tlikes\tb\na\tlikes\tb\n");
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        assert_eq!(load_triples(&path, &mut e, &mut r).unwrap().len(), 1);
    }

    #[test]
    fn augment_single_triple() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b")], &[], &[]);
        let g = g.augment_reverse().unwrap();
        assert_eq!(g.n_relations(), 2);
        assert_eq!(g.train.len(), 2);
        assert!(g.in_train(&Triple::new(1, 1, 0)));
    }

    #[test]
    fn augment_twice_errors() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b")], &[], &[]);
        let g = g.augment_reverse().unwrap();
        assert!(matches!(g.augment_reverse(), Err(Error::AlreadyAugmented { .. })));
    }

    #[test]
    fn reverse_is_involution() {
        let g = KnowledgeGraph::from_named(
            &[("a", "r1", "b"), ("b", "r2", "c"), ("a", "r3", "c")],
            &[],
            &[],
        )
        .augment_reverse()
        .unwrap();
        for r in 0..g.n_relations() {
            assert_eq!(g.reverse_of(g.reverse_of(r)), r);
        }
    }

    #[test]
    fn successors_direct_and_absent() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b"), ("a", "r", "c")], &[], &[]);
        assert_eq!(g.successors(0, 0), &[1, 2]);
        assert_eq!(g.successors(1, 0), &[] as &[usize]);
    }

    #[test]
    fn successors_match_linear_scan() {
        let g = KnowledgeGraph::from_named(
            &[
                ("a", "r1", "b"),
                ("a", "r1", "c"),
                ("b", "r2", "c"),
                ("c", "r1", "a"),
                ("b", "r1", "a"),
            ],
            &[],
            &[],
        )
        .augment_reverse()
        .unwrap();
        for e in 0..g.n_entities() {
            for r in 0..g.n_relations() {
                let mut scan: Vec<usize> = g
                    .train
                    .iter()
                    .filter(|t| t.head == e && t.relation == r)
                    .map(|t| t.tail)
                    .collect();
                scan.sort_unstable();
                scan.dedup();
                assert_eq!(g.successors(e, r), scan.as_slice());
            }
        }
    }

    #[test]
    fn classify_relation_kinds() {
        let g = KnowledgeGraph::from_named(
            &[
                ("a", "one2one", "b"),
                ("a", "one2n", "b"),
                ("a", "one2n", "c"),
                ("a", "n2one", "c"),
                ("b", "n2one", "c"),
            ],
            &[],
            &[],
        );
        assert_eq!(g.classify_relation(0).unwrap(), RelationCategory::OneToOne);
        assert_eq!(g.classify_relation(1).unwrap(), RelationCategory::OneToMany);
        assert_eq!(g.classify_relation(2).unwrap(), RelationCategory::ManyToOne);
    }

    #[test]
    fn classify_empty_relation_errors() {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        entities.get_or_insert("a");
        entities.get_or_insert("b");
        relations.get_or_insert("r");
        relations.get_or_insert("unused");
        let g = KnowledgeGraph::from_parts(
            entities,
            relations,
            vec![Triple::new(0, 0, 1)],
            vec![],
            vec![],
        );
        assert!(matches!(g.classify_relation(1), Err(Error::EmptyRelation { relation: 1 })));
    }

    #[test]
    fn augmentation_doubles_train_and_mirrors() {
        let g = KnowledgeGraph::from_named(
            &[("a", "r1", "b"), ("b", "r2", "c"), ("c", "r1", "a")],
            &[],
            &[],
        );
        let before = g.train.len();
        let g = g.augment_reverse().unwrap();
        assert_eq!(g.train.len(), 2 * before);
        for t in &g.train {
            let rev = Triple::new(t.tail, g.reverse_of(t.relation), t.head);
            assert!(g.in_train(&rev));
        }
    }

    #[test]
    fn vocab_roundtrip_is_identity() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b"), ("c", "s", "a")], &[], &[]);
        for id in 0..g.n_entities() {
            assert_eq!(g.entities.id(g.entities.name(id)), Some(id));
        }
        for id in 0..g.n_relations() {
            assert_eq!(g.relations.id(g.relations.name(id)), Some(id));
        }
    }
}

//! Link-prediction evaluation: entity prediction (Mean Rank and Hits@10,
//! raw and filter, with two-stage top-500 re-ranking) and relation
//! prediction (Mean Rank and Hits@1), plus the per-relation-category
//! breakdown.
//!
//! Ties are broken pessimistically: the true answer is placed after every
//! equal-scored competitor, so identical scores never flatter the model.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationCategory, Triple};
use crate::model::EmbeddingStore;
use crate::paths::{mine_pair, PairPaths, PathRelationStats, PathSet, DEFAULT_MAX_LEN, DEFAULT_THRESHOLD};

/// Which term combination scores a candidate triple. The six configurations
/// mirror the ablation rows of the relation-prediction experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Direct energy only, forward direction.
    Transe,
    /// Direct energy, forward plus reverse.
    TranseRev,
    /// Direct plus path terms at test time (model trained without paths).
    TranseRevPath,
    /// Full score: direct plus path terms, both directions.
    Ptranse,
    /// Path term dropped from a path-trained model.
    PtranseMinusPath,
    /// Path terms only; pairs without paths score zero for every candidate.
    PtranseMinusTranse,
}

impl ScoreMode {
    fn uses_reverse(self) -> bool {
        !matches!(self, ScoreMode::Transe)
    }

    fn uses_paths(self) -> bool {
        matches!(
            self,
            ScoreMode::TranseRevPath | ScoreMode::Ptranse | ScoreMode::PtranseMinusTranse
        )
    }

    fn uses_direct(self) -> bool {
        !matches!(self, ScoreMode::PtranseMinusTranse)
    }
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Transe => "transe",
            ScoreMode::TranseRev => "transe+rev",
            ScoreMode::TranseRevPath => "transe+rev+path",
            ScoreMode::Ptranse => "ptranse",
            ScoreMode::PtranseMinusPath => "ptranse-minus-path",
            ScoreMode::PtranseMinusTranse => "ptranse-minus-transe",
        })
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transe" => Ok(ScoreMode::Transe),
            "transe+rev" => Ok(ScoreMode::TranseRev),
            "transe+rev+path" => Ok(ScoreMode::TranseRevPath),
            "ptranse" => Ok(ScoreMode::Ptranse),
            "ptranse-minus-path" => Ok(ScoreMode::PtranseMinusPath),
            "ptranse-minus-transe" => Ok(ScoreMode::PtranseMinusTranse),
            other => Err(Error::Config(format!("unknown scoring mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictTarget {
    Head,
    Tail,
    Relation,
}

impl std::fmt::Display for PredictTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictTarget::Head => "head",
            PredictTarget::Tail => "tail",
            PredictTarget::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Entity,
    Relation,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" => Ok(Task::Entity),
            "relation" => Ok(Task::Relation),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Resolves the paths connecting a candidate pair at evaluation time.
/// Pairs already present in the mined training path set reuse their entry;
/// any other queried pair is mined on the fly over the training graph with
/// the same leakage guard, so test edges never contribute paths.
pub struct PathResolver<'a> {
    graph: &'a KnowledgeGraph,
    base: &'a PathSet,
    pub max_len: usize,
    pub threshold: f64,
}

impl<'a> PathResolver<'a> {
    pub fn new(graph: &'a KnowledgeGraph, base: &'a PathSet, max_len: usize, threshold: f64) -> Self {
        PathResolver { graph, base, max_len, threshold }
    }

    /// Resolver with the default mining parameters.
    pub fn with_defaults(graph: &'a KnowledgeGraph, base: &'a PathSet) -> Self {
        Self::new(graph, base, DEFAULT_MAX_LEN, DEFAULT_THRESHOLD)
    }

    pub fn entry(&self, head: usize, tail: usize) -> Option<Cow<'_, PairPaths>> {
        if let Some(e) = self.base.get(head, tail) {
            return Some(Cow::Borrowed(e));
        }
        mine_pair(self.graph, head, tail, self.max_len, self.threshold).map(Cow::Owned)
    }

    fn path_term(&self, store: &EmbeddingStore, stats: &PathRelationStats, triple: &Triple) -> f64 {
        match self.entry(triple.head, triple.tail) {
            Some(e) => store.path_term_entry(&e, stats, triple.relation),
            None => 0.0,
        }
    }
}

/// Full mode score of one candidate triple.
pub fn mode_score(
    mode: ScoreMode,
    store: &EmbeddingStore,
    graph: &KnowledgeGraph,
    resolver: &PathResolver<'_>,
    stats: &PathRelationStats,
    triple: &Triple,
) -> f64 {
    let reverse = Triple::new(triple.tail, graph.reverse_of(triple.relation), triple.head);
    let mut score = 0.0;
    if mode.uses_direct() {
        score += store.energy_direct(triple);
        if mode.uses_reverse() {
            score += store.energy_direct(&reverse);
        }
    }
    if mode.uses_paths() {
        score += resolver.path_term(store, stats, triple);
        if mode.uses_reverse() {
            score += resolver.path_term(store, stats, &reverse);
        }
    }
    score
}

/// Cheap first-stage score for entity ranking: the mode's direct part.
/// The path-only mode falls back to the direct translation energy, since a
/// pure path score cannot order the full candidate set.
fn stage1_score(
    mode: ScoreMode,
    store: &EmbeddingStore,
    graph: &KnowledgeGraph,
    triple: &Triple,
) -> f64 {
    let mut score = store.energy_direct(triple);
    if mode.uses_reverse() {
        let reverse = Triple::new(triple.tail, graph.reverse_of(triple.relation), triple.head);
        score += store.energy_direct(&reverse);
    }
    score
}

fn candidate_triple(query: &Triple, target: PredictTarget, candidate: usize) -> Triple {
    match target {
        PredictTarget::Head => Triple::new(candidate, query.relation, query.tail),
        PredictTarget::Tail => Triple::new(query.head, query.relation, candidate),
        PredictTarget::Relation => Triple::new(query.head, candidate, query.tail),
    }
}

/// Raw and filter rank of the true entity for one query. Stage 1 ranks all
/// candidates by the direct score; stage 2 re-scores the top `rerank`
/// candidates with the full mode score and orders them among themselves,
/// with the remainder keeping stage-1 order below them.
pub fn rank_entities(
    store: &EmbeddingStore,
    graph: &KnowledgeGraph,
    resolver: &PathResolver<'_>,
    stats: &PathRelationStats,
    triple: &Triple,
    target: PredictTarget,
    mode: ScoreMode,
    rerank: usize,
) -> (usize, usize) {
    debug_assert!(matches!(target, PredictTarget::Head | PredictTarget::Tail));
    let true_id = match target {
        PredictTarget::Head => triple.head,
        _ => triple.tail,
    };
    // Candidates are capped to entities that actually have embedding rows.
    let n = graph.n_entities().min(store.n_entities);
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|c| (stage1_score(mode, store, graph, &candidate_triple(triple, target, c)), c))
        .collect();
    sort_pessimistic(&mut order, true_id);
    let cut = rerank.min(n);
    let mut top: Vec<(f64, usize)> = order[..cut]
        .iter()
        .map(|&(_, c)| {
            (mode_score(mode, store, graph, resolver, stats, &candidate_triple(triple, target, c)), c)
        })
        .collect();
    sort_pessimistic(&mut top, true_id);
    let final_order: Vec<usize> =
        top.iter().map(|&(_, c)| c).chain(order[cut..].iter().map(|&(_, c)| c)).collect();
    ranks_from_order(&final_order, true_id, |c| {
        graph.is_known(&candidate_triple(triple, target, c))
    })
}

/// Raw and filter rank of the true relation among the original relations.
/// No re-ranking stage; every candidate gets the full mode score.
pub fn rank_relations(
    store: &EmbeddingStore,
    graph: &KnowledgeGraph,
    resolver: &PathResolver<'_>,
    stats: &PathRelationStats,
    triple: &Triple,
    mode: ScoreMode,
) -> (usize, usize) {
    let true_id = triple.relation;
    let mut order: Vec<(f64, usize)> = (0..graph.n_original_relations)
        .map(|c| {
            (
                mode_score(mode, store, graph, resolver, stats, &candidate_triple(triple, PredictTarget::Relation, c)),
                c,
            )
        })
        .collect();
    sort_pessimistic(&mut order, true_id);
    let final_order: Vec<usize> = order.iter().map(|&(_, c)| c).collect();
    ranks_from_order(&final_order, true_id, |c| {
        graph.is_known(&candidate_triple(triple, PredictTarget::Relation, c))
    })
}

/// Ascending by score; the true answer sorts after equal-scored
/// competitors, everything else ties deterministically by id.
fn sort_pessimistic(order: &mut [(f64, usize)], true_id: usize) {
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.1 == true_id).cmp(&(b.1 == true_id)))
            .then_with(|| a.1.cmp(&b.1))
    });
}

fn ranks_from_order<F: Fn(usize) -> bool>(
    order: &[usize],
    true_id: usize,
    known: F,
) -> (usize, usize) {
    let raw = order.iter().position(|&c| c == true_id).expect("true id in candidate set") + 1;
    let filtered_out = order[..raw - 1].iter().filter(|&&c| c != true_id && known(c)).count();
    (raw, raw - filtered_out)
}

#[derive(Debug, Clone)]
pub struct QueryRank {
    pub triple: Triple,
    pub target: PredictTarget,
    pub raw: usize,
    pub filter: usize,
}

#[derive(Debug, Clone)]
pub struct RankingReport {
    pub task: Task,
    pub mode: ScoreMode,
    pub hits_n: usize,
    pub per_query: Vec<QueryRank>,
    pub mean_rank_raw: f64,
    pub mean_rank_filter: f64,
    pub hits_raw: f64,
    pub hits_filter: f64,
    /// Filter Hits@10 per (relation category, prediction direction);
    /// entity task only.
    pub category_table: Option<HashMap<(RelationCategory, PredictTarget), f64>>,
}

fn aggregate(ranks: &[QueryRank], hits_n: usize) -> (f64, f64, f64, f64) {
    let n = ranks.len() as f64;
    let mean_raw = ranks.iter().map(|r| r.raw as f64).sum::<f64>() / n;
    let mean_filter = ranks.iter().map(|r| r.filter as f64).sum::<f64>() / n;
    let hits_raw = 100.0 * ranks.iter().filter(|r| r.raw <= hits_n).count() as f64 / n;
    let hits_filter = 100.0 * ranks.iter().filter(|r| r.filter <= hits_n).count() as f64 / n;
    (mean_raw, mean_filter, hits_raw, hits_filter)
}

/// Runs the full protocol over the test split. Entity queries predict both
/// head and tail; relation queries predict the relation. Queries evaluate
/// in parallel and merge deterministically by query index.
pub fn evaluate(
    store: &EmbeddingStore,
    graph: &KnowledgeGraph,
    resolver: &PathResolver<'_>,
    stats: &PathRelationStats,
    task: Task,
    mode: ScoreMode,
    rerank: usize,
) -> Result<RankingReport> {
    if graph.test.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    for t in &graph.test {
        if t.head >= store.n_entities || t.tail >= store.n_entities {
            let missing = if t.head >= store.n_entities { t.head } else { t.tail };
            return Err(Error::UnknownEntity(graph.entities.name(missing).to_string()));
        }
    }
    let queries: Vec<(Triple, PredictTarget)> = match task {
        Task::Entity => graph
            .test
            .iter()
            .flat_map(|&t| [(t, PredictTarget::Head), (t, PredictTarget::Tail)])
            .collect(),
        Task::Relation => graph.test.iter().map(|&t| (t, PredictTarget::Relation)).collect(),
    };
    let per_query: Vec<QueryRank> = queries
        .par_iter()
        .map(|&(triple, target)| {
            let (raw, filter) = match target {
                PredictTarget::Relation => {
                    rank_relations(store, graph, resolver, stats, &triple, mode)
                }
                _ => rank_entities(store, graph, resolver, stats, &triple, target, mode, rerank),
            };
            QueryRank { triple, target, raw, filter }
        })
        .collect();
    let hits_n = match task {
        Task::Entity => 10,
        Task::Relation => 1,
    };
    let (mean_rank_raw, mean_rank_filter, hits_raw, hits_filter) = aggregate(&per_query, hits_n);
    let category_table = match task {
        Task::Entity => Some(build_category_table(graph, &per_query)),
        Task::Relation => None,
    };
    Ok(RankingReport {
        task,
        mode,
        hits_n,
        per_query,
        mean_rank_raw,
        mean_rank_filter,
        hits_raw,
        hits_filter,
        category_table,
    })
}

fn build_category_table(
    graph: &KnowledgeGraph,
    ranks: &[QueryRank],
) -> HashMap<(RelationCategory, PredictTarget), f64> {
    let mut categories: HashMap<usize, RelationCategory> = HashMap::new();
    let mut cell_hits: HashMap<(RelationCategory, PredictTarget), (usize, usize)> = HashMap::new();
    for q in ranks {
        let cat = match categories.get(&q.triple.relation) {
            Some(&c) => c,
            None => match graph.classify_relation(q.triple.relation) {
                Ok(c) => {
                    categories.insert(q.triple.relation, c);
                    c
                }
                // Relations unseen in train have no fan-out statistics.
                Err(_) => continue,
            },
        };
        let cell = cell_hits.entry((cat, q.target)).or_insert((0, 0));
        cell.1 += 1;
        if q.filter <= 10 {
            cell.0 += 1;
        }
    }
    cell_hits
        .into_iter()
        .map(|(k, (hits, total))| (k, 100.0 * hits as f64 / total as f64))
        .collect()
}

impl RankingReport {
    pub fn summary(&self) -> String {
        let task = match self.task {
            Task::Entity => "entity prediction",
            Task::Relation => "relation prediction",
        };
        let mut out = String::new();
        out.push_str(&format!("task: {task}  mode: {}  queries: {}\n", self.mode, self.per_query.len()));
        out.push_str(&format!(
            "              {:>10} {:>10} {:>12} {:>12}\n",
            "MR raw",
            "MR filter",
            format!("Hits@{} raw", self.hits_n),
            format!("Hits@{} flt", self.hits_n)
        ));
        out.push_str(&format!(
            "              {:>10.1} {:>10.1} {:>12.1} {:>12.1}\n",
            self.mean_rank_raw, self.mean_rank_filter, self.hits_raw, self.hits_filter
        ));
        if let Some(table) = &self.category_table {
            out.push_str("filter Hits@10 by relation category:\n");
            for target in [PredictTarget::Head, PredictTarget::Tail] {
                out.push_str(&format!("  predicting {target}:"));
                for cat in [
                    RelationCategory::OneToOne,
                    RelationCategory::OneToMany,
                    RelationCategory::ManyToOne,
                    RelationCategory::ManyToMany,
                ] {
                    match table.get(&(cat, target)) {
                        Some(v) => out.push_str(&format!("  {cat} {v:.1}")),
                        None => out.push_str(&format!("  {cat} -")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Summary table followed by a machine-readable per-query rank dump:
    /// `head relation tail target raw filter`, one line per query.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::Io { path: path.into(), source: e };
        w.write_all(self.summary().as_bytes()).map_err(io)?;
        writeln!(w, "per-query ranks:").map_err(io)?;
        for q in &self.per_query {
            writeln!(
                w,
                "{} {} {} {} {} {}",
                q.triple.head, q.triple.relation, q.triple.tail, q.target, q.raw, q.filter
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

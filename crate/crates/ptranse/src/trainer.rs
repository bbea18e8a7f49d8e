//! Margin-ranking SGD over direct and path triples.
//!
//! Each step visits one training triple, applies the direct hinge loss
//! against one corrupted triple per slot (head, relation, tail), then one
//! weighted path hinge per reliable path of the pair. Touched rows are
//! projected back into the unit ball after every update.

use std::cell::UnsafeCell;
use std::collections::HashMap;
use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::compose::{compose, compose_gradient, Activation, ComposeKind};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::model::{dissim, dissim_grad, project_row, EmbeddingStore, Norm};
use crate::paths::PathSet;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub dim: usize,
    pub epochs: usize,
    pub compose: ComposeKind,
    pub activation: Activation,
    pub norm: Norm,
    pub seed: u64,
    /// false runs the -Path ablation: plain TransE with reverse relations.
    pub use_paths: bool,
    pub checkpoint_every: usize,
    /// 1 = deterministic mode; >1 = non-deterministic throughput mode.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            margin: 1.0,
            dim: 100,
            epochs: 500,
            compose: ComposeKind::Add,
            activation: Activation::Identity,
            norm: Norm::L1,
            seed: 0,
            use_paths: true,
            checkpoint_every: 50,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::ZeroDim);
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head,
    Relation,
    Tail,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Head, Slot::Relation, Slot::Tail];
}

#[derive(Debug, Clone, Copy)]
pub struct NegativeSample {
    pub corrupted: Triple,
    pub slot: Slot,
}

const MAX_REJECTIONS: usize = 100;

/// Uniformly corrupts one slot of `triple`, resampling while the corrupted
/// triple is present in train.
pub fn sample_negative<R: Rng>(
    graph: &KnowledgeGraph,
    triple: &Triple,
    slot: Slot,
    rng: &mut R,
) -> Result<NegativeSample> {
    for _ in 0..MAX_REJECTIONS {
        let corrupted = match slot {
            Slot::Head => Triple::new(rng.gen_range(0..graph.n_entities()), triple.relation, triple.tail),
            Slot::Relation => Triple::new(triple.head, rng.gen_range(0..graph.n_relations()), triple.tail),
            Slot::Tail => Triple::new(triple.head, triple.relation, rng.gen_range(0..graph.n_entities())),
        };
        if corrupted != *triple && !graph.in_train(&corrupted) {
            return Ok(NegativeSample { corrupted, slot });
        }
    }
    Err(Error::NegativeSaturated {
        attempts: MAX_REJECTIONS,
        slot: format!("{slot:?}"),
    })
}

/// Sparse gradients keyed by row, plus the RNN weight gradient.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    pub entity: HashMap<usize, Vec<f64>>,
    pub relation: HashMap<usize, Vec<f64>>,
    pub rnn_weight: Option<Vec<f64>>,
}

impl GradientSet {
    pub fn is_empty(&self) -> bool {
        self.entity.is_empty() && self.relation.is_empty() && self.rnn_weight.is_none()
    }

    fn add_entity(&mut self, id: usize, grad: &[f64], scale: f64) {
        let slot = self.entity.entry(id).or_insert_with(|| vec![0.0; grad.len()]);
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += scale * g;
        }
    }

    fn add_relation(&mut self, id: usize, grad: &[f64], scale: f64) {
        let slot = self.relation.entry(id).or_insert_with(|| vec![0.0; grad.len()]);
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += scale * g;
        }
    }
}

fn direct_diff(store: &EmbeddingStore, t: &Triple) -> Vec<f64> {
    let h = store.entity_vec(t.head);
    let r = store.relation_vec(t.relation);
    let tl = store.entity_vec(t.tail);
    (0..store.dim).map(|i| h[i] + r[i] - tl[i]).collect()
}

/// Hinge [γ + E(pos) − E(neg)]₊ with subgradients for all touched rows.
/// Zero loss produces an empty gradient set.
pub fn loss_direct(
    store: &EmbeddingStore,
    positive: &Triple,
    negative: &NegativeSample,
    margin: f64,
) -> (f64, GradientSet) {
    let diff_pos = direct_diff(store, positive);
    let diff_neg = direct_diff(store, &negative.corrupted);
    let hinge = margin + dissim(store.norm, &diff_pos) - dissim(store.norm, &diff_neg);
    let mut grads = GradientSet::default();
    if hinge <= 0.0 {
        return (0.0, grads);
    }
    let g_pos = dissim_grad(store.norm, &diff_pos);
    let g_neg = dissim_grad(store.norm, &diff_neg);
    grads.add_entity(positive.head, &g_pos, 1.0);
    grads.add_relation(positive.relation, &g_pos, 1.0);
    grads.add_entity(positive.tail, &g_pos, -1.0);
    let neg = &negative.corrupted;
    grads.add_entity(neg.head, &g_neg, -1.0);
    grads.add_relation(neg.relation, &g_neg, -1.0);
    grads.add_entity(neg.tail, &g_neg, 1.0);
    (hinge, grads)
}

/// Weighted path hinge weight·[γ + E(p, r) − E(p, r′)]₊. Gradients flow to
/// relation rows (and the RNN weights) only, never to entity rows.
pub fn loss_path(
    store: &EmbeddingStore,
    path: &[usize],
    relation: usize,
    neg_relation: usize,
    margin: f64,
    weight: f64,
) -> (f64, GradientSet) {
    let vecs: Vec<&[f64]> = path.iter().map(|&r| store.relation_vec(r)).collect();
    let p = compose(store.compose_kind, store.rnn.as_ref(), &vecs)
        .expect("store vectors share one dimension");
    let r = store.relation_vec(relation);
    let r_neg = store.relation_vec(neg_relation);
    let diff_pos: Vec<f64> = (0..store.dim).map(|i| p[i] - r[i]).collect();
    let diff_neg: Vec<f64> = (0..store.dim).map(|i| p[i] - r_neg[i]).collect();
    let hinge = margin + dissim(store.norm, &diff_pos) - dissim(store.norm, &diff_neg);
    let mut grads = GradientSet::default();
    if hinge <= 0.0 {
        return (0.0, grads);
    }
    let g_pos = dissim_grad(store.norm, &diff_pos);
    let g_neg = dissim_grad(store.norm, &diff_neg);
    // d/dp of [E(p,r) − E(p,r′)].
    let upstream: Vec<f64> = g_pos.iter().zip(&g_neg).map(|(a, b)| a - b).collect();
    let (path_grads, w_grad) =
        compose_gradient(store.compose_kind, store.rnn.as_ref(), &vecs, &upstream)
            .expect("shapes already validated by compose");
    for (&rid, grad) in path.iter().zip(&path_grads) {
        grads.add_relation(rid, grad, weight);
    }
    grads.add_relation(relation, &g_pos, -weight);
    grads.add_relation(neg_relation, &g_neg, weight);
    if let Some(w) = w_grad {
        grads.rnn_weight = Some(w.into_iter().map(|x| weight * x).collect());
    }
    (weight * hinge, grads)
}

/// SGD step: subtract lr·grad and project the touched rows.
pub fn apply_gradients(store: &mut EmbeddingStore, grads: &GradientSet, lr: f64) {
    for (&id, grad) in &grads.entity {
        let row = store.entity_vec_mut(id);
        for (x, g) in row.iter_mut().zip(grad) {
            *x -= lr * g;
        }
        project_row(row);
    }
    for (&id, grad) in &grads.relation {
        let row = store.relation_vec_mut(id);
        for (x, g) in row.iter_mut().zip(grad) {
            *x -= lr * g;
        }
        project_row(row);
    }
    if let Some(w_grad) = &grads.rnn_weight {
        if let Some(cell) = store.rnn.as_mut() {
            for (w, g) in cell.weight.iter_mut().zip(w_grad) {
                *w -= lr * g;
            }
        }
    }
}

/// One full training step for a single positive triple. Returns the summed
/// hinge losses of the step.
fn train_step<R: Rng>(
    store: &mut EmbeddingStore,
    graph: &KnowledgeGraph,
    paths: &PathSet,
    cfg: &TrainConfig,
    triple: &Triple,
    rng: &mut R,
) -> Result<f64> {
    let mut total = 0.0;
    for slot in Slot::ALL {
        let negative = sample_negative(graph, triple, slot, rng)?;
        let (loss, grads) = loss_direct(store, triple, &negative, cfg.margin);
        if loss > 0.0 {
            apply_gradients(store, &grads, cfg.learning_rate);
            total += loss;
        }
    }
    if cfg.use_paths {
        if let Some(entry) = paths.get(triple.head, triple.tail) {
            for path in &entry.paths {
                let weight = path.reliability / entry.z;
                let negative = sample_negative(graph, triple, Slot::Relation, rng)?;
                let (loss, grads) = loss_path(
                    store,
                    &path.relations,
                    triple.relation,
                    negative.corrupted.relation,
                    cfg.margin,
                    weight,
                );
                if loss > 0.0 {
                    apply_gradients(store, &grads, cfg.learning_rate);
                    total += loss;
                }
            }
        }
    }
    Ok(total)
}

/// Straight-line recomputation of the full objective: for every training
/// triple, the direct hinge summed over every corruption of every slot not
/// present in train, plus the reliability-weighted path hinges summed over
/// every relation corruption. Exhaustive, so only sensible on small graphs.
pub fn objective(
    graph: &KnowledgeGraph,
    paths: &PathSet,
    store: &EmbeddingStore,
    margin: f64,
    use_paths: bool,
) -> f64 {
    let mut total = 0.0;
    for triple in &graph.train {
        let e_pos = store.energy_direct(triple);
        let mut hinge_sum = 0.0;
        let mut consider = |corrupted: Triple| {
            if corrupted != *triple && !graph.in_train(&corrupted) {
                let h = margin + e_pos - store.energy_direct(&corrupted);
                if h > 0.0 {
                    hinge_sum += h;
                }
            }
        };
        for e in 0..graph.n_entities() {
            consider(Triple::new(e, triple.relation, triple.tail));
            consider(Triple::new(triple.head, triple.relation, e));
        }
        for r in 0..graph.n_relations() {
            consider(Triple::new(triple.head, r, triple.tail));
        }
        total += hinge_sum;
        if use_paths {
            if let Some(entry) = paths.get(triple.head, triple.tail) {
                for path in &entry.paths {
                    let weight = path.reliability / entry.z;
                    let e_path = store.energy_path(&path.relations, triple.relation);
                    for r in 0..graph.n_relations() {
                        let corrupted = Triple::new(triple.head, r, triple.tail);
                        if corrupted != *triple && !graph.in_train(&corrupted) {
                            let h = margin + e_path - store.energy_path(&path.relations, r);
                            if h > 0.0 {
                                total += weight * h;
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

fn write_config(dir: &Path, cfg: &TrainConfig) -> Result<()> {
    let path = dir.join("config.txt");
    let mut f = File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let act = match cfg.activation {
        Activation::Identity => "identity",
        Activation::Tanh => "tanh",
    };
    write!(
        f,
        "lr={}\nmargin={}\ndim={}\nepochs={}\ncompose={}\nactivation={}\nnorm={}\nseed={}\nuse_paths={}\nworkers={}\n",
        cfg.learning_rate,
        cfg.margin,
        cfg.dim,
        cfg.epochs,
        cfg.compose,
        act,
        cfg.norm,
        cfg.seed,
        cfg.use_paths,
        cfg.workers
    )
    .map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

/// Shared parameter cell for throughput mode. Workers update rows without
/// mutual exclusion; lost updates are tolerated by contract and the mode is
/// non-deterministic.
struct SharedStore(UnsafeCell<EmbeddingStore>);
unsafe impl Sync for SharedStore {}

/// Runs the full training loop. With `cfg.workers == 1` the run is
/// deterministic given the seed; checkpoints land in `checkpoint_dir` every
/// `checkpoint_every` epochs plus a final `epoch_<n>.emb`.
pub fn train(
    graph: &KnowledgeGraph,
    paths: &PathSet,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<EmbeddingStore> {
    cfg.validate()?;
    let store = EmbeddingStore::init(
        graph.n_entities(),
        graph.n_relations(),
        cfg.dim,
        cfg.norm,
        cfg.compose,
        cfg.activation,
        cfg.seed,
    )?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        write_config(dir, cfg)?;
    }
    let shared = SharedStore(UnsafeCell::new(store));
    let mut order_rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut indices: Vec<usize> = (0..graph.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut order_rng);
        if cfg.workers <= 1 {
            let store = unsafe { &mut *shared.0.get() };
            let mut rng = ChaCha20Rng::seed_from_u64(
                cfg.seed.wrapping_add(0x9e37_79b9).wrapping_add(epoch as u64),
            );
            let mut epoch_loss = 0.0;
            for &i in &indices {
                epoch_loss += train_step(store, graph, paths, cfg, &graph.train[i], &mut rng)?;
            }
            let _ = epoch_loss;
        } else {
            let chunk = indices.len().div_ceil(cfg.workers);
            std::thread::scope(|scope| -> Result<()> {
                let mut handles = Vec::new();
                for (w, slice) in indices.chunks(chunk).enumerate() {
                    let shared = &shared;
                    let handle = scope.spawn(move || -> Result<()> {
                        let mut rng = ChaCha20Rng::seed_from_u64(
                            cfg.seed ^ (epoch as u64) << 16 ^ w as u64,
                        );
                        for &i in slice {
                            let store = unsafe { &mut *shared.0.get() };
                            train_step(store, graph, paths, cfg, &graph.train[i], &mut rng)?;
                        }
                        Ok(())
                    });
                    handles.push(handle);
                }
                for h in handles {
                    h.join().expect("worker panicked")?;
                }
                Ok(())
            })?;
        }
        let store = unsafe { &*shared.0.get() };
        if store.has_nan() {
            return Err(Error::NumericNan { what: "embedding store".into(), epoch });
        }
        if let Some(dir) = checkpoint_dir {
            if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
                store.save(&dir.join(format!("epoch_{epoch}.emb")))?;
            }
        }
    }
    Ok(shared.0.into_inner())
}

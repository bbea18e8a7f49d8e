//! Embedding store and energy functions.
//!
//! A direct triple (h, r, t) is scored by the translation energy
//! ‖h + r − t‖; a path triple is scored by ‖p − r‖ where p is the composed
//! path vector, touching no entity embeddings. Test-time scoring combines
//! both with path reliabilities and Pr(r|p) confidences.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::compose::{compose, Activation, ComposeKind, RnnCell};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::paths::{PairPaths, PathRelationStats, PathSet};

/// Dissimilarity used inside the energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(Norm::L1),
            "l2" | "L2" => Ok(Norm::L2),
            other => Err(Error::Config(format!("unknown norm '{other}'"))),
        }
    }
}

/// ‖v‖ under the given dissimilarity.
pub fn dissim(norm: Norm, v: &[f64]) -> f64 {
    match norm {
        Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Subgradient of ‖v‖ with respect to v. The L1 subgradient at zero
/// coordinates is 0; the L2 gradient at the origin is 0.
pub fn dissim_grad(norm: Norm, v: &[f64]) -> Vec<f64> {
    match norm {
        Norm::L1 => v
            .iter()
            .map(|x| {
                if *x > 0.0 {
                    1.0
                } else if *x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L2 => {
            let n = dissim(Norm::L2, v);
            if n == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x / n).collect()
            }
        }
    }
}

/// Dense entity and relation embeddings, plus the RNN cell when the RNN
/// composition operator is in use.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub norm: Norm,
    pub compose_kind: ComposeKind,
    pub n_entities: usize,
    /// Augmented relation count (reverses have independent rows).
    pub n_relations: usize,
    entity: Vec<f64>,
    relation: Vec<f64>,
    pub rnn: Option<RnnCell>,
}

impl EmbeddingStore {
    /// Uniform init in ±6/√k per coordinate, projected into the unit ball.
    /// Deterministic given the seed.
    pub fn init(
        n_entities: usize,
        n_relations: usize,
        dim: usize,
        norm: Norm,
        compose_kind: ComposeKind,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bound = 6.0 / (dim as f64).sqrt();
        let draw = |n: usize, rng: &mut ChaCha20Rng| -> Vec<f64> {
            (0..n * dim).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let entity = draw(n_entities, &mut rng);
        let relation = draw(n_relations, &mut rng);
        let rnn = match compose_kind {
            ComposeKind::Rnn => Some(RnnCell::near_identity(dim, activation, &mut rng)),
            _ => None,
        };
        let mut store = EmbeddingStore {
            dim,
            norm,
            compose_kind,
            n_entities,
            n_relations,
            entity,
            relation,
            rnn,
        };
        store.project_norms();
        Ok(store)
    }

    pub fn entity_vec(&self, id: usize) -> &[f64] {
        &self.entity[id * self.dim..(id + 1) * self.dim]
    }

    pub fn relation_vec(&self, id: usize) -> &[f64] {
        &self.relation[id * self.dim..(id + 1) * self.dim]
    }

    pub fn entity_vec_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.entity[id * self.dim..(id + 1) * self.dim]
    }

    pub fn relation_vec_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.relation[id * self.dim..(id + 1) * self.dim]
    }

    /// E(h, r, t) = ‖h + r − t‖.
    /// Flat row-major entity matrix (read-only).
    pub fn entity_rows(&self) -> &[f64] {
        &self.entity
    }

    pub fn energy_direct(&self, triple: &Triple) -> f64 {
        let h = self.entity_vec(triple.head);
        let r = self.relation_vec(triple.relation);
        let t = self.entity_vec(triple.tail);
        let diff: Vec<f64> = (0..self.dim).map(|i| h[i] + r[i] - t[i]).collect();
        dissim(self.norm, &diff)
    }

    /// E(p, r) = ‖p − r‖ over the composed path vector; entity-free.
    pub fn energy_path(&self, path: &[usize], relation: usize) -> f64 {
        let vecs: Vec<&[f64]> = path.iter().map(|&r| self.relation_vec(r)).collect();
        let p = compose(self.compose_kind, self.rnn.as_ref(), &vecs)
            .expect("store vectors share one dimension");
        let r = self.relation_vec(relation);
        let diff: Vec<f64> = (0..self.dim).map(|i| p[i] - r[i]).collect();
        dissim(self.norm, &diff)
    }

    /// Path half of the test-time score: (1/Z) Σ_p Pr(r|p) R(p|h,t) ‖p − r‖.
    /// Zero when the pair has no mined paths.
    pub fn path_term(
        &self,
        paths: &PathSet,
        stats: &PathRelationStats,
        triple: &Triple,
    ) -> f64 {
        let Some(entry) = paths.get(triple.head, triple.tail) else {
            return 0.0;
        };
        self.path_term_entry(entry, stats, triple.relation)
    }

    /// Same as [`path_term`](Self::path_term) for an already-resolved set of
    /// paths between one pair.
    pub fn path_term_entry(
        &self,
        entry: &PairPaths,
        stats: &PathRelationStats,
        relation: usize,
    ) -> f64 {
        if entry.z == 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for p in &entry.paths {
            let conf = stats.get(&p.relations, relation);
            if conf == 0.0 {
                continue;
            }
            sum += conf * p.reliability * self.energy_path(&p.relations, relation);
        }
        sum / entry.z
    }

    /// Test-time G(h, r, t): direct energy plus the confidence-weighted
    /// path term.
    pub fn score_g(&self, paths: &PathSet, stats: &PathRelationStats, triple: &Triple) -> f64 {
        self.energy_direct(triple) + self.path_term(paths, stats, triple)
    }

    /// Prediction score S(h, r, t) = G(h, r, t) + G(t, r⁻¹, h).
    pub fn score_s(
        &self,
        graph: &KnowledgeGraph,
        paths: &PathSet,
        stats: &PathRelationStats,
        triple: &Triple,
    ) -> f64 {
        let reverse = Triple::new(triple.tail, graph.reverse_of(triple.relation), triple.head);
        self.score_g(paths, stats, triple) + self.score_g(paths, stats, &reverse)
    }

    /// Rescales every row with L2 norm > 1 back onto the unit sphere.
    pub fn project_norms(&mut self) {
        let dim = self.dim;
        for row in self.entity.chunks_mut(dim).chain(self.relation.chunks_mut(dim)) {
            project_row(row);
        }
    }

    pub fn max_row_norm(&self) -> f64 {
        self.entity
            .chunks(self.dim)
            .chain(self.relation.chunks(self.dim))
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn has_nan(&self) -> bool {
        self.entity.iter().chain(self.relation.iter()).any(|x| x.is_nan())
            || self
                .rnn
                .as_ref()
                .map(|c| c.weight.iter().any(|x| x.is_nan()))
                .unwrap_or(false)
    }

    // --- persistence ----------------------------------------------------

    /// Versioned text format:
    ///   ptranse v1 <n_entities> <n_relations> <k> <norm> <compose>
    /// then one row per entity vector, one per relation vector, and for RNN
    /// composition a `rnn <activation>` line followed by k rows of 2k
    /// weights. Floats use the shortest round-trip decimal form, so a
    /// save/load cycle reproduces scores bit-identically.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::Io { path: path.into(), source: e };
        writeln!(
            w,
            "ptranse v1 {} {} {} {} {}",
            self.n_entities, self.n_relations, self.dim, self.norm, self.compose_kind
        )
        .map_err(io)?;
        let write_rows = |w: &mut BufWriter<File>, data: &[f64], dim: usize| -> Result<()> {
            for row in data.chunks(dim) {
                let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
                writeln!(w, "{}", cells.join(" "))
                    .map_err(|e| Error::Io { path: path.into(), source: e })?;
            }
            Ok(())
        };
        write_rows(&mut w, &self.entity, self.dim)?;
        write_rows(&mut w, &self.relation, self.dim)?;
        if let Some(cell) = &self.rnn {
            let act = match cell.activation {
                Activation::Identity => "identity",
                Activation::Tanh => "tanh",
            };
            writeln!(w, "rnn {act}").map_err(io)?;
            write_rows(&mut w, &cell.weight, 2 * self.dim)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let bad = |line: usize, msg: &str| Error::MalformedFile {
            path: path.into(),
            line,
            msg: msg.to_string(),
        };
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "empty embedding file"))?
            .map_err(|e| Error::Io { path: path.into(), source: e })?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 7 || fields[0] != "ptranse" || fields[1] != "v1" {
            return Err(bad(1, "bad header, expected `ptranse v1 ...`"));
        }
        let n_entities: usize = fields[2].parse().map_err(|_| bad(1, "bad entity count"))?;
        let n_relations: usize = fields[3].parse().map_err(|_| bad(1, "bad relation count"))?;
        let dim: usize = fields[4].parse().map_err(|_| bad(1, "bad dimension"))?;
        let norm: Norm = fields[5].parse()?;
        let compose_kind: ComposeKind = fields[6].parse()?;

        let lineno = std::cell::Cell::new(1usize);
        let read_row = |lines: &mut std::io::Lines<BufReader<File>>,
                        width: usize|
         -> Result<Vec<f64>> {
            lineno.set(lineno.get() + 1);
            let lineno = lineno.get();
            let line = lines
                .next()
                .ok_or_else(|| bad(lineno, "truncated embedding file"))?
                .map_err(|e| Error::Io { path: path.into(), source: e })?;
            let row = line
                .split(' ')
                .map(|f| f.parse())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad(lineno, "bad float"))?;
            if row.len() != width {
                return Err(bad(lineno, "row width mismatch"));
            }
            Ok(row)
        };
        let mut entity = Vec::with_capacity(n_entities * dim);
        for _ in 0..n_entities {
            entity.extend(read_row(&mut lines, dim)?);
        }
        let mut relation = Vec::with_capacity(n_relations * dim);
        for _ in 0..n_relations {
            relation.extend(read_row(&mut lines, dim)?);
        }
        let rnn = if compose_kind == ComposeKind::Rnn {
            lineno.set(lineno.get() + 1);
            let line = lines
                .next()
                .ok_or_else(|| bad(lineno.get(), "missing rnn section"))?
                .map_err(|e| Error::Io { path: path.into(), source: e })?;
            let activation = match line.as_str() {
                "rnn identity" => Activation::Identity,
                "rnn tanh" => Activation::Tanh,
                _ => return Err(bad(lineno.get(), "bad rnn section header")),
            };
            let mut weight = Vec::with_capacity(dim * 2 * dim);
            for _ in 0..dim {
                weight.extend(read_row(&mut lines, 2 * dim)?);
            }
            Some(RnnCell { dim, weight, activation })
        } else {
            None
        };
        Ok(EmbeddingStore {
            dim,
            norm,
            compose_kind,
            n_entities,
            n_relations,
            entity,
            relation,
            rnn,
        })
    }
}

/// Projects one row into the L2 unit ball; interior rows are untouched.
pub fn project_row(row: &mut [f64]) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
}

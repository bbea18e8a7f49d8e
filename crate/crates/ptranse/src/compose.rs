//! Path composition operators: merge a sequence of relation embeddings into
//! one path embedding by elementwise addition, elementwise multiplication,
//! or a plain recurrent cell c_i = f(W·[c_{i-1}; r_i]).
//!
//! Forward passes are paired with analytic gradients; both are checked
//! against finite differences in the test suites.

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposeKind {
    Add,
    Mul,
    Rnn,
}

impl std::fmt::Display for ComposeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComposeKind::Add => "add",
            ComposeKind::Mul => "mul",
            ComposeKind::Rnn => "rnn",
        })
    }
}

impl std::str::FromStr for ComposeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(ComposeKind::Add),
            "mul" => Ok(ComposeKind::Mul),
            "rnn" => Ok(ComposeKind::Rnn),
            other => Err(Error::Config(format!("unknown composition operator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

/// Recurrent composition cell: a k × 2k matrix applied to [c_{i-1}; r_i].
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub dim: usize,
    /// Row-major, `dim` rows of `2*dim` columns.
    pub weight: Vec<f64>,
    pub activation: Activation,
}

impl RnnCell {
    /// W = [I | I] plus uniform noise in ±0.01, so the cell starts as a
    /// near-exact addition.
    pub fn near_identity<R: Rng>(dim: usize, activation: Activation, rng: &mut R) -> Self {
        let mut weight = vec![0.0; dim * 2 * dim];
        for i in 0..dim {
            weight[i * 2 * dim + i] = 1.0;
            weight[i * 2 * dim + dim + i] = 1.0;
        }
        for w in weight.iter_mut() {
            *w += rng.gen_range(-0.01..0.01);
        }
        RnnCell { dim, weight, activation }
    }

    /// Exact [I | I] with identity activation; composes to plain addition.
    pub fn exact_identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * 2 * dim];
        for i in 0..dim {
            weight[i * 2 * dim + i] = 1.0;
            weight[i * 2 * dim + dim + i] = 1.0;
        }
        RnnCell { dim, weight, activation: Activation::Identity }
    }

    fn step(&self, prev: &[f64], rel: &[f64]) -> Vec<f64> {
        let k = self.dim;
        let mut out = vec![0.0; k];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weight[i * 2 * k..(i + 1) * 2 * k];
            let mut acc = 0.0;
            for j in 0..k {
                acc += row[j] * prev[j] + row[k + j] * rel[j];
            }
            *o = match self.activation {
                Activation::Identity => acc,
                Activation::Tanh => acc.tanh(),
            };
        }
        out
    }
}

fn check_dims(dim: usize, vectors: &[&[f64]]) -> Result<()> {
    if vectors.is_empty() {
        return Err(Error::Config("cannot compose an empty relation sequence".into()));
    }
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: v.len() });
        }
    }
    Ok(())
}

/// Composes relation vectors into a path vector. `rnn` is required for
/// [`ComposeKind::Rnn`] and ignored otherwise.
pub fn compose(kind: ComposeKind, rnn: Option<&RnnCell>, vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
    check_dims(dim, vectors)?;
    match kind {
        ComposeKind::Add => {
            let mut out = vectors[0].to_vec();
            for v in &vectors[1..] {
                for (o, x) in out.iter_mut().zip(v.iter()) {
                    *o += x;
                }
            }
            Ok(out)
        }
        ComposeKind::Mul => {
            let mut out = vectors[0].to_vec();
            for v in &vectors[1..] {
                for (o, x) in out.iter_mut().zip(v.iter()) {
                    *o *= x;
                }
            }
            Ok(out)
        }
        ComposeKind::Rnn => {
            let cell = rnn.ok_or_else(|| Error::Config("RNN composition needs a cell".into()))?;
            if cell.dim != dim {
                return Err(Error::DimMismatch { expected: cell.dim, got: dim });
            }
            let mut c = vectors[0].to_vec();
            for v in &vectors[1..] {
                c = cell.step(&c, v);
            }
            Ok(c)
        }
    }
}

/// Gradients of `upstream · compose(...)` with respect to each relation
/// vector, plus the RNN weight gradient when applicable.
pub fn compose_gradient(
    kind: ComposeKind,
    rnn: Option<&RnnCell>,
    vectors: &[&[f64]],
    upstream: &[f64],
) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
    check_dims(dim, vectors)?;
    if upstream.len() != dim {
        return Err(Error::DimMismatch { expected: dim, got: upstream.len() });
    }
    match kind {
        ComposeKind::Add => Ok((vec![upstream.to_vec(); vectors.len()], None)),
        ComposeKind::Mul => {
            let l = vectors.len();
            // prefix[i] = r_0 ⊙ … ⊙ r_{i-1}; suffix[i] = r_i ⊙ … ⊙ r_{l-1}
            let mut prefix = vec![vec![1.0; dim]; l + 1];
            let mut suffix = vec![vec![1.0; dim]; l + 1];
            for i in 0..l {
                for j in 0..dim {
                    prefix[i + 1][j] = prefix[i][j] * vectors[i][j];
                }
            }
            for i in (0..l).rev() {
                for j in 0..dim {
                    suffix[i][j] = suffix[i + 1][j] * vectors[i][j];
                }
            }
            let grads = (0..l)
                .map(|i| {
                    (0..dim)
                        .map(|j| upstream[j] * prefix[i][j] * suffix[i + 1][j])
                        .collect()
                })
                .collect();
            Ok((grads, None))
        }
        ComposeKind::Rnn => {
            let cell = rnn.ok_or_else(|| Error::Config("RNN composition needs a cell".into()))?;
            if cell.dim != dim {
                return Err(Error::DimMismatch { expected: cell.dim, got: dim });
            }
            let l = vectors.len();
            let k = dim;
            // Forward pass, keeping every hidden state.
            let mut states: Vec<Vec<f64>> = Vec::with_capacity(l);
            states.push(vectors[0].to_vec());
            for v in &vectors[1..] {
                let next = cell.step(states.last().unwrap(), v);
                states.push(next);
            }
            // Backward pass.
            let mut grads = vec![vec![0.0; k]; l];
            let mut w_grad = vec![0.0; k * 2 * k];
            let mut d_state = upstream.to_vec();
            for i in (1..l).rev() {
                // d/dz through the activation; tanh derivative from the output.
                let dz: Vec<f64> = match cell.activation {
                    Activation::Identity => d_state.clone(),
                    Activation::Tanh => d_state
                        .iter()
                        .zip(&states[i])
                        .map(|(d, c)| d * (1.0 - c * c))
                        .collect(),
                };
                let prev = &states[i - 1];
                let rel = vectors[i];
                let mut d_prev = vec![0.0; k];
                for (row_idx, dz_i) in dz.iter().enumerate() {
                    let row = &cell.weight[row_idx * 2 * k..(row_idx + 1) * 2 * k];
                    for j in 0..k {
                        w_grad[row_idx * 2 * k + j] += dz_i * prev[j];
                        w_grad[row_idx * 2 * k + k + j] += dz_i * rel[j];
                        d_prev[j] += row[j] * dz_i;
                        grads[i][j] += row[k + j] * dz_i;
                    }
                }
                d_state = d_prev;
            }
            grads[0] = d_state;
            Ok((grads, Some(w_grad)))
        }
    }
}

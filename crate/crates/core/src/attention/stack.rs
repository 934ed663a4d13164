//! Multi-layer prefixed transformers: classical heads alternating with
//! position-wise stages.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::{classical_head, AttentionHeadParams, PrefixTokens};
use crate::error::{check_dim, Result};
use crate::linalg::Matrix;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A position-wise stage, applied to every sequence element independently.
#[derive(Clone)]
pub enum Stage {
    /// Affine layers with ReLU between consecutive layers (none after the last).
    Mlp(Vec<(Matrix, Vec<f64>)>),
    /// A fixed, named map. Used for embeddings and for stages evaluated exactly.
    Map { name: String, out_dim: usize, f: MapFn },
    /// Appends a one-hot encoding of the element's position (length `t`).
    Positional { t: usize },
}

impl fmt::Debug for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Mlp(l) => write!(f, "Mlp({} layers)", l.len()),
            Stage::Map { name, out_dim, .. } => write!(f, "Map({name}, out {out_dim})"),
            Stage::Positional { t } => write!(f, "Positional({t})"),
        }
    }
}

impl Stage {
    pub fn map(name: &str, out_dim: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        Stage::Map { name: name.to_string(), out_dim, f: Arc::new(f) }
    }

    fn apply(&self, x: &[f64], pos: usize) -> Result<Vec<f64>> {
        match self {
            Stage::Mlp(layers) => {
                let mut v = x.to_vec();
                for (i, (a, b)) in layers.iter().enumerate() {
                    check_dim(a.rows, b.len())?;
                    v = a.mul_vec(&v)?;
                    v.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
                    if i + 1 < layers.len() {
                        v.iter_mut().for_each(|o| *o = o.max(0.0));
                    }
                }
                Ok(v)
            }
            Stage::Map { f, out_dim, .. } => {
                let v = f(x)?;
                check_dim(*out_dim, v.len())?;
                Ok(v)
            }
            Stage::Positional { t } => {
                let mut v = x.to_vec();
                let mut one_hot = vec![0.0; *t];
                if pos < *t {
                    one_hot[pos] = 1.0;
                }
                v.extend(one_hot);
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub head: AttentionHeadParams,
    pub prefix: PrefixTokens,
    /// Add the head output to its input instead of replacing it.
    pub residual: bool,
    pub post: Vec<Stage>,
}

#[derive(Debug, Clone, Default)]
pub struct TransformerStack {
    /// Position-wise stages applied before the first attention layer.
    pub embed: Vec<Stage>,
    pub layers: Vec<Layer>,
}

impl TransformerStack {
    pub fn attention_layers(&self) -> usize {
        self.layers.len()
    }
}

fn apply_stages(stages: &[Stage], xs: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    if stages.is_empty() {
        return Ok(xs);
    }
    xs.into_par_iter().enumerate().map(|(pos, x)| stages.iter().try_fold(x, |v, s| s.apply(&v, pos))).collect()
}

/// Evaluates the stack on one input sequence.
pub fn transformer_eval(stack: &TransformerStack, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    transformer_trace(stack, inputs).map(|mut t| t.pop().unwrap())
}

/// Like [`transformer_eval`] but also returns the sequence after the embedding
/// stages and after every layer (head plus its position-wise stages).
pub fn transformer_trace(stack: &TransformerStack, inputs: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut xs = apply_stages(&stack.embed, inputs.to_vec())?;
    let mut trace = vec![xs.clone()];
    for layer in &stack.layers {
        let h = classical_head(&xs, &layer.prefix, &layer.head)?;
        xs = if layer.residual {
            xs.into_iter().zip(h).map(|(x, h)| x.iter().zip(&h).map(|(a, b)| a + b).collect()).collect()
        } else {
            h
        };
        xs = apply_stages(&layer.post, xs)?;
        trace.push(xs.clone());
    }
    Ok(trace)
}

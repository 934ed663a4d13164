//! The T+2 attention-layer transformer: an element-wise ψ head, a summation
//! head producing R at every position, then one head per output position.
//!
//! Hybrid mode evaluates ψ and the G_i exactly in fixed map stages behind
//! pass-through heads. Full mode replaces them by split heads synthesized over
//! an inverse-stereographic embedding of the unit cube, evaluated through the
//! augmented universal head.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FLOAT_TERNARY_DIGITS;
use super::{decode_sequence, psi_encode, AggregatedR, DigitConfig, SeqFunction, SequenceSample};
use crate::attention::{
    assemble_prefix_tokens, build_universal_head, default_m, lift, transformer_eval, transformer_trace,
    AttentionHeadParams, Layer, PrefixTokens, Stage, TransformerStack,
};
use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::Matrix;
use crate::prefix::synthesize_prefix_fn;
use crate::sphere::{stereographic_inverse, SpherePoint};

/// Logit of a position attending to itself in a pass-through head.
const K_SELF: f64 = 200.0;
/// Logit between a position and its tag token in the summation head.
const K_TAG: f64 = 1.0;
/// Bias magnitude of the positional factor gadget; exceeds 3⟨w, ψ⟩ < 3/2.
const S_GATE: f64 = 2.0;

pub const FULL_MAX_T: usize = 3;
pub const FULL_MAX_M: usize = 1;
pub const FULL_MAX_DIGITS: usize = 3;
pub const FULL_MAX_N: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    Hybrid,
    Full,
}

/// u ∈ [0,1]^k ↦ inverse stereographic image of 2u − 1 on S^k.
pub fn cube_to_sphere(u: &[f64]) -> Result<SpherePoint> {
    let y: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
    stereographic_inverse(&y)
}

/// Left inverse of [`cube_to_sphere`], clamped to the cube; points outside the
/// image (including the pole) go to the nearest face.
pub fn sphere_to_cube(z: &SpherePoint) -> Vec<f64> {
    let c = z.coords();
    let k = c.len() - 1;
    let denom = 1.0 - c[k];
    c[..k]
        .iter()
        .map(|v| {
            let y = if denom > 0.0 {
                v / denom
            } else if *v == 0.0 {
                f64::NAN
            } else {
                v.signum() * f64::INFINITY
            };
            let u = if y.is_nan() { 0.5 } else { (y + 1.0) / 2.0 };
            u.clamp(0.0, 1.0)
        })
        .collect()
}

/// A built transformer with its problem shape.
#[derive(Debug, Clone)]
pub struct Seq2SeqStack {
    pub stack: TransformerStack,
    pub mode: BuildMode,
    pub t: usize,
    pub m: usize,
    pub out_dim: usize,
    pub cfg: DigitConfig,
    /// Index of R in the layout after the summation layer.
    r_index: usize,
}

/// Per-stage values of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqTrace {
    /// Per-position contribution 3·3^{−(i−1)(m+1)} Σ_p 3^{−p} ψ(x_{i,p}).
    pub contributions: Vec<f64>,
    /// R as seen by every position after the summation head.
    pub r: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

impl Seq2SeqStack {
    pub fn attention_layers(&self) -> usize {
        self.stack.attention_layers()
    }

    fn check(&self, s: &SequenceSample) -> Result<()> {
        check_dim(self.t, s.t)?;
        check_dim(self.m, s.m)
    }

    pub fn eval(&self, s: &SequenceSample) -> Result<Vec<Vec<f64>>> {
        self.check(s)?;
        transformer_eval(&self.stack, &s.elements)
    }

    pub fn eval_batch(&self, samples: &[SequenceSample]) -> Result<Vec<Vec<Vec<f64>>>> {
        samples.par_iter().map(|s| self.eval(s)).collect()
    }

    pub fn trace(&self, s: &SequenceSample) -> Result<Seq2SeqTrace> {
        self.check(s)?;
        let tr = transformer_trace(&self.stack, &s.elements)?;
        Ok(Seq2SeqTrace {
            contributions: tr[1].iter().map(|v| v[0]).collect(),
            r: tr[2].iter().map(|v| v[self.r_index]).collect(),
            outputs: tr.last().unwrap().clone(),
        })
    }
}

/// Builds the stack. `n` and `lambda` size the synthesized heads in full
/// mode and are ignored in hybrid mode.
pub fn build_seq2seq_transformer(
    f: &SeqFunction,
    t: usize,
    m: usize,
    cfg: &DigitConfig,
    n: usize,
    lambda: f64,
    mode: BuildMode,
) -> Result<Seq2SeqStack> {
    cfg.validate()?;
    if t < 1 {
        return domain("T must be >= 1");
    }
    let d = t * (m + 1);
    let len = d * cfg.digits;
    if len > FLOAT_TERNARY_DIGITS {
        return Err(Error::PrecisionBudgetExceeded(format!(
            "R needs {len} ternary digits; a double carries {FLOAT_TERNARY_DIGITS}"
        )));
    }
    if mode == BuildMode::Full {
        if t > FULL_MAX_T || m > FULL_MAX_M || cfg.digits > FULL_MAX_DIGITS || n > FULL_MAX_N || f.out_dim > 2 {
            return Err(Error::InstanceTooLarge(format!(
                "full mode allows T <= {FULL_MAX_T}, m <= {FULL_MAX_M}, digits <= {FULL_MAX_DIGITS}, \
                 N <= {FULL_MAX_N} and outputs of width <= 2; got T = {t}, m = {m}, digits = {}, N = {n}, width {}",
                cfg.digits, f.out_dim
            )));
        }
        if !(lambda > 0.0) || n < 1 {
            return domain("full mode needs N >= 1 and lambda > 0");
        }
    }
    let psi_cfg = cfg.with_stride(d)?;
    let k = f.out_dim;
    let mut layers = Vec::with_capacity(t + 2);

    // layer 1: ψ per coordinate, then the contraction and positional factor
    let embed;
    match mode {
        BuildMode::Hybrid => {
            embed = vec![Stage::Positional { t }];
            let w = m + 1 + t;
            let (head, prefix) = pass_through(w, m, (m + 1)..w)?;
            let psi = Stage::map("psi", w, move |v| {
                let mut out = v.to_vec();
                for x in out.iter_mut().take(m + 1) {
                    *x = psi_encode(x.clamp(0.0, 1.0), &psi_cfg)?;
                }
                Ok(out)
            });
            let gadget = contraction_gadget(w, 0, m + 1, t)?;
            layers.push(Layer { head, prefix, residual: false, post: vec![psi, gadget] });
        }
        BuildMode::Full => {
            let sm = m + 1;
            embed = vec![Stage::map("cube-to-sphere", 3 * (sm + 1) + 1, |u| Ok(lift(&cube_to_sphere(u)?, true)))];
            let cp = synthesize_prefix_fn(sm, n, lambda, 0, |b| {
                let mut v = sphere_to_cube(b).iter().map(|&u| psi_encode(u, &psi_cfg)).collect::<Result<Vec<_>>>()?;
                v.push(0.0);
                Ok(v)
            })?;
            let mm = default_m(lambda, n + t);
            let head = build_universal_head(sm, mm, true)?;
            let prefix = assemble_prefix_tokens(&cp, mm, true)?;
            let w = head.d + t;
            let gadget = contraction_gadget(w, 0, m + 1, t)?;
            layers.push(Layer { head, prefix, residual: false, post: vec![Stage::Positional { t }, gadget] });
        }
    }

    // layer 2: summation; layout afterwards [LIFT(R) | GOUT | R | POS | OUT]
    let lr = if mode == BuildMode::Full { 7 } else { 0 };
    let (head, prefix, restore) = summation(t, m, k)?;
    let mut post = vec![restore];
    if mode == BuildMode::Full {
        post.push(Stage::map("lift-r", lr + 2 * k + 1 + t, move |v| {
            let mut out = lift(&cube_to_sphere(&[v[k].clamp(0.0, 1.0)])?, true);
            out.extend_from_slice(v);
            Ok(out)
        }));
    }
    layers.push(Layer { head, prefix, residual: false, post });

    // layers 3..T+2: G_i for position i, gated by the one-hot position
    let wg = lr + 2 * k + 1 + t;
    let r_index = lr + k;
    let cfg = *cfg;
    let g = move |f: &SeqFunction, i: usize, r: AggregatedR| -> Result<Vec<f64>> {
        let s = decode_sequence(&r, t, m, &cfg)?;
        Ok(f.eval(&s)?.swap_remove(i))
    };
    for i in 0..t {
        let mut post = Vec::new();
        let (head, prefix, residual, bound) = match mode {
            BuildMode::Hybrid => {
                let (head, prefix) = pass_through(wg, m, (r_index + 1)..(r_index + 1 + t))?;
                let fc = f.clone();
                post.push(Stage::map("g", wg, move |v| {
                    let r = AggregatedR::from_f64(v[r_index], len)?;
                    let mut out = v.to_vec();
                    out[lr..lr + k].copy_from_slice(&g(&fc, i, r)?);
                    Ok(out)
                }));
                (head, prefix, false, f.bound)
            }
            BuildMode::Full => {
                let cp = synthesize_prefix_fn(1, n, lambda, 0, |b| {
                    let r = AggregatedR::nearest_cantor(sphere_to_cube(b)[0], len)?;
                    let mut v = g(f, i, r)?;
                    v.resize(2, 0.0);
                    Ok(v)
                })?;
                let bound = cp.max_beta_norm();
                let mm = default_m(lambda, n + t);
                let (head, prefix) = embedded_universal(&cp, mm, wg, lr, k)?;
                (head, prefix, true, bound)
            }
        };
        post.push(gating(wg, lr, k, t, i, bound + 1.0)?);
        if i + 1 == t {
            let mut sel = Matrix::zeros(k, wg);
            for c in 0..k {
                sel[(c, r_index + 1 + t + c)] = 1.0;
            }
            post.push(Stage::Mlp(vec![(sel, vec![0.0; k])]));
        }
        layers.push(Layer { head, prefix, residual, post });
    }
    Ok(Seq2SeqStack { stack: TransformerStack { embed, layers }, mode, t, m, out_dim: k, cfg, r_index })
}

/// Each position attends to itself with logit K_SELF through its one-hot
/// block; a single zero prefix token absorbs nothing.
fn pass_through(w: usize, m: usize, pos: std::ops::Range<usize>) -> Result<(AttentionHeadParams, PrefixTokens)> {
    let mut h = Matrix::zeros(w, w);
    for a in pos {
        h[(a, a)] = K_SELF;
    }
    let head = AttentionHeadParams::new(h, Matrix::identity(w))?;
    let prefix = PrefixTokens::new(w, m, K_SELF, vec![vec![0.0; w]], -K_SELF, false)?;
    Ok((head, prefix))
}

/// MLP from a layout holding ψ values at `psi_at..psi_at+m+1` and the one-hot
/// position in the last t slots to [V | POS | 0_t], where for position j
/// V = 3^{−j(m+1)} · 3 Σ_p 3^{−(p+1)} ψ_p.
/// Hidden unit j is ReLU(3⟨w, ψ⟩ + S·POS_j − S), which is the contraction at
/// the active position and zero elsewhere.
fn contraction_gadget(w_in: usize, psi_at: usize, k: usize, t: usize) -> Result<Stage> {
    let pos_at = w_in - t;
    let mut a = Matrix::zeros(2 * t, w_in);
    let mut b = vec![0.0; 2 * t];
    for j in 0..t {
        for p in 0..k {
            a[(j, psi_at + p)] = 3f64.powi(-(p as i32));
        }
        a[(j, pos_at + j)] = S_GATE;
        b[j] = -S_GATE;
        a[(t + j, pos_at + j)] = 1.0;
    }
    let mut o = Matrix::zeros(1 + 2 * t, 2 * t);
    for j in 0..t {
        o[(0, j)] = 3f64.powi(-((j * k) as i32));
        o[(1 + j, t + j)] = 1.0;
    }
    Ok(Stage::Mlp(vec![(a, b), (o, vec![0.0; 1 + 2 * t])]))
}

/// Summation head over [V | POS | TAG] with one tagged prefix token per
/// position, plus the affine stage undoing its normalisation. The restore
/// stage writes [GOUT = 0 | R | POS | OUT = 0].
fn summation(t: usize, m: usize, k: usize) -> Result<(AttentionHeadParams, PrefixTokens, Stage)> {
    let w = 1 + 2 * t;
    let mut h = Matrix::zeros(w, w);
    let mut wv = Matrix::zeros(w, w);
    wv[(0, 0)] = 1.0;
    let mut tokens = Vec::with_capacity(t);
    for a in 0..t {
        h[(1 + a, 1 + t + a)] = K_TAG;
        wv[(1 + a, 1 + t + a)] = 1.0;
        let mut tok = vec![0.0; w];
        tok[1 + t + a] = 1.0;
        tokens.push(tok);
    }
    let head = AttentionHeadParams::new(h, wv)?;
    let prefix = PrefixTokens::new(w, m, K_TAG, tokens, -1.0, false)?;
    // Z = e^K + (T − 1) + T
    let z = K_TAG.exp() + (2 * t - 1) as f64;
    let out_w = 2 * k + 1 + t;
    let mut r = Matrix::zeros(out_w, w);
    let mut b = vec![0.0; out_w];
    r[(k, 0)] = z;
    for a in 0..t {
        r[(k + 1 + a, 1 + a)] = z / K_TAG.exp_m1();
        b[k + 1 + a] = -1.0 / K_TAG.exp_m1();
    }
    Ok((head, prefix, Stage::Mlp(vec![(r, b)])))
}

/// The augmented universal head on the LIFT block of the G-layer layout,
/// writing its output into GOUT.
fn embedded_universal(
    cp: &crate::attention::ControlPoints,
    mm: f64,
    wg: usize,
    lr: usize,
    k: usize,
) -> Result<(AttentionHeadParams, PrefixTokens)> {
    let base = build_universal_head(cp.m, mm, true)?;
    let tok = assemble_prefix_tokens(cp, mm, true)?;
    check_dim(lr, base.d)?;
    let kk = cp.m + 1;
    let mut h = Matrix::zeros(wg, wg);
    for i in 0..lr {
        for j in 0..lr {
            h[(i, j)] = base.h[(i, j)];
        }
    }
    let mut wv = Matrix::zeros(wg, wg);
    for c in 0..k {
        wv[(lr + c, 2 * kk + c)] = 1.0;
    }
    let tokens = tok
        .tokens
        .into_iter()
        .map(|mut v| {
            v.resize(wg, 0.0);
            v
        })
        .collect();
    Ok((AttentionHeadParams::new(h, wv)?, PrefixTokens::new(wg, cp.m, cp.lambda, tokens, mm, true)?))
}

/// MLP over [LIFT | GOUT | R | POS | OUT] that adds GOUT into OUT when the
/// position is `i` and clears GOUT. Signed values pass as ReLU(v) − ReLU(−v);
/// the gate is ReLU(±g + B·POS_i − B), exact for |g| < B.
fn gating(wg: usize, lr: usize, k: usize, t: usize, i: usize, bound: f64) -> Result<Stage> {
    let carried: Vec<usize> = (0..wg).filter(|&c| !(lr..lr + k).contains(&c)).collect();
    let hidden = 2 * carried.len() + 2 * k;
    let pos_i = lr + k + 1 + i;
    let out_at = lr + k + 1 + t;
    let mut a = Matrix::zeros(hidden, wg);
    let mut b = vec![0.0; hidden];
    let mut o = Matrix::zeros(wg, hidden);
    for (h, &c) in carried.iter().enumerate() {
        a[(2 * h, c)] = 1.0;
        a[(2 * h + 1, c)] = -1.0;
        o[(c, 2 * h)] = 1.0;
        o[(c, 2 * h + 1)] = -1.0;
    }
    let g0 = 2 * carried.len();
    for c in 0..k {
        for (s, sign) in [(0, 1.0), (1, -1.0)] {
            let row = g0 + 2 * c + s;
            a[(row, lr + c)] = sign;
            a[(row, pos_i)] = bound;
            b[row] = -bound;
            o[(out_at + c, row)] = sign;
        }
    }
    Ok(Stage::Mlp(vec![(a, b), (o, vec![0.0; wg])]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::seq2seq::{aggregate_r, reference_seq2seq};
    use rand::Rng;

    fn random_sample(t: usize, m: usize, seed: u64) -> SequenceSample {
        let mut r = rng::rng(seed);
        SequenceSample::new(m, (0..t).map(|_| (0..=m).map(|_| r.gen::<f64>()).collect()).collect()).unwrap()
    }

    #[test]
    fn cube_sphere_maps() {
        for u in [vec![0.0], vec![0.3], vec![1.0], vec![0.2, 0.9]] {
            let z = cube_to_sphere(&u).unwrap();
            let back = sphere_to_cube(&z);
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert_eq!(sphere_to_cube(&SpherePoint::pole(1)), vec![0.5]);
        let top = SpherePoint::new(vec![0.6, 0.8]).unwrap();
        assert_eq!(sphere_to_cube(&top), vec![1.0]);
    }

    #[test]
    fn layer_count_is_t_plus_two() {
        let c = DigitConfig::new(2).unwrap();
        for t in 1..=3 {
            for mode in [BuildMode::Hybrid, BuildMode::Full] {
                let s = build_seq2seq_transformer(&SeqFunction::mean(0), t, 0, &c, 64, 50.0, mode).unwrap();
                assert_eq!(s.attention_layers(), t + 2);
            }
        }
    }

    #[test]
    fn hybrid_matches_reference() {
        let c = DigitConfig::new(4).unwrap();
        for f in [SeqFunction::mean(1), SeqFunction::identity(1), SeqFunction::causal_mean(1)] {
            let stack = build_seq2seq_transformer(&f, 2, 1, &c, 1, 1.0, BuildMode::Hybrid).unwrap();
            for seed in 0..50 {
                let s = random_sample(2, 1, seed);
                let want = reference_seq2seq(&f, &s, &c).unwrap();
                let got = stack.eval(&s).unwrap();
                for (a, b) in want.iter().zip(&got) {
                    assert!(crate::linalg::dist(a, b) <= 1e-9, "{}: {a:?} vs {b:?}", f.name);
                }
            }
        }
    }

    #[test]
    fn summation_head_gives_r() {
        let c = DigitConfig::new(3).unwrap();
        for (t, m) in [(1, 0), (2, 1), (3, 2), (4, 0)] {
            let stack = build_seq2seq_transformer(&SeqFunction::mean(m), t, m, &c, 1, 1.0, BuildMode::Hybrid).unwrap();
            for seed in 0..20 {
                let s = random_sample(t, m, seed);
                let r = aggregate_r(&s, &c).unwrap().to_f64();
                let tr = stack.trace(&s).unwrap();
                for v in &tr.r {
                    assert!((v - r).abs() <= 1e-12 * r.max(1e-300), "{v} vs {r}");
                }
                let sum: f64 = tr.contributions.iter().sum();
                assert!((sum - r).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn size_caps() {
        let c = DigitConfig::new(4).unwrap();
        let f = SeqFunction::mean(0);
        assert!(matches!(
            build_seq2seq_transformer(&f, 2, 0, &c, 64, 10.0, BuildMode::Full),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(matches!(
            build_seq2seq_transformer(&f, 4, 0, &DigitConfig::new(2).unwrap(), 64, 10.0, BuildMode::Full),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(matches!(
            build_seq2seq_transformer(
                &SeqFunction::mean(2),
                4,
                2,
                &DigitConfig::new(4).unwrap(),
                1,
                1.0,
                BuildMode::Hybrid
            ),
            Err(Error::PrecisionBudgetExceeded(_))
        ));
        let s = build_seq2seq_transformer(&f, 2, 0, &DigitConfig::new(2).unwrap(), 8, 1.0, BuildMode::Hybrid).unwrap();
        assert!(s.eval(&random_sample(3, 0, 1)).is_err());
    }

    #[test]
    fn full_mode_small_instance() {
        // coarse heads still land on the right Cantor cells at grid midpoints
        let c = DigitConfig::new(2).unwrap();
        let f = SeqFunction::mean(0);
        let stack = build_seq2seq_transformer(&f, 2, 0, &c, 4096, 2e4, BuildMode::Full).unwrap();
        let mut worst = 0.0f64;
        for a in 0..4 {
            for b in 0..4 {
                let s = SequenceSample::new(0, vec![vec![(2 * a + 1) as f64 / 8.0], vec![(2 * b + 1) as f64 / 8.0]])
                    .unwrap();
                let want = reference_seq2seq(&f, &s, &c).unwrap();
                let got = stack.eval(&s).unwrap();
                for (x, y) in want.iter().zip(&got) {
                    worst = worst.max(crate::linalg::dist(x, y));
                }
            }
        }
        assert!(worst < 0.05, "{worst}");
    }
}

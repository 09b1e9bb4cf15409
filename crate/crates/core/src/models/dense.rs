//! Transformers and GAT with dense (unstructured) weights. A token is a user
//! (or an antenna for the `_an` variant) whose representation concatenates
//! the features of all its edges; the non-token axis is zero-padded to the
//! declared size.

use super::model::{Bound, Init, Input};
use super::ops::{attend, effective_heads, positional_code};
use super::spec::{Arch, ModelSpec};
use crate::error::Result;
use crate::numkit::{Tensor, Var};
use crate::Scalar;

fn edges_per_token(spec: &ModelSpec) -> usize {
    if spec.arch == Arch::Transformer1dAn {
        spec.k
    } else {
        spec.n
    }
}

pub(crate) fn init<T: Scalar>(spec: &ModelSpec, init: &mut Init<'_, T>) {
    let e = edges_per_token(spec);
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (wi, wo) = (e * w[0], e * w[1]);
        if spec.arch == Arch::Gat {
            for m in ["wq", "wk", "wv"] {
                init.dense(&format!("l{l}.{m}"), wo, wi);
            }
        } else {
            let np = spec.proj_dim.unwrap_or(wi);
            init.dense(&format!("l{l}.wq"), np, wi);
            init.dense(&format!("l{l}.wk"), np, wi);
            init.dense(&format!("l{l}.wv"), wi, wi);
            init.dense(&format!("l{l}.wf"), wo, wi);
        }
    }
}

/// `[B, T, E, 2]` → `[B, T, cap·2]`, zero-padding `E` up to `cap`.
fn tokens<'t, T: Scalar>(d: Var<'t, T>, cap: usize) -> Result<Var<'t, T>> {
    let s = d.shape();
    let (b, t, e) = (s[0], s[1], s[2]);
    let padded = if e < cap {
        let zeros = d.tape().constant(Tensor::zeros(&[b, t, cap - e, 2]));
        Var::concat(&[d, zeros], 2)?
    } else {
        d
    };
    padded.reshape(&[b, t, cap * 2])
}

/// `[B, T, cap·2]` → `[B, T, e, 2]`, dropping padded edges.
fn untokens<'t, T: Scalar>(x: Var<'t, T>, cap: usize, e: usize) -> Result<Var<'t, T>> {
    let s = x.shape();
    let y = x.reshape(&[s[0], s[1], cap, 2])?;
    if e < cap {
        y.slice(2, 0, e)
    } else {
        Ok(y)
    }
}

/// Encoder stack: `d ← σ(W^F (d + Σ_i ξ(q_d·k_i) W^V d_i))`, last layer
/// linear. Scores are scaled by `1/√(N_p/M_h)`.
fn encoder<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, mut x: Var<'t, T>) -> Result<Var<'t, T>> {
    let s = x.shape();
    let (b, t) = (s[0], s[1]);
    if spec.positional_encoding {
        x = x.add(x.tape().constant(positional_code(t, s[2])))?;
    }
    for l in 0..spec.layers() {
        let w = |m: &str| p.get(&format!("l{l}.{m}"));
        let wi = x.shape()[2];
        let q = x.linear(w("wq")?)?;
        let np = q.shape()[2];
        let per_head = np as f64 / effective_heads(spec.heads, np, wi) as f64;
        let q = q.scale(T::of(1.0 / per_head.sqrt())).reshape(&[b, t, 1, np])?;
        let k = x.linear(w("wk")?)?.reshape(&[b, t, 1, np])?;
        let v = x.linear(w("wv")?)?.reshape(&[b, t, 1, wi])?;
        let c = attend(q, k, v, spec.heads, true)?.reshape(&[b, t, wi])?;
        let y = x.add(c)?.linear(w("wf")?)?;
        x = if l + 1 < spec.layers() { y.tanh() } else { y };
    }
    Ok(x)
}

/// Tokens are users.
pub(crate) fn transformer_users<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let n = input.d0.shape()[2];
    let out = encoder(spec, p, tokens(input.d0, spec.n)?)?;
    untokens(out, spec.n, n)
}

/// Tokens are antennas.
pub(crate) fn transformer_antennas<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let k = input.d0.shape()[1];
    let rows = input.d0.permute(&[0, 2, 1, 3])?;
    let out = encoder(spec, p, tokens(rows, spec.k)?)?;
    untokens(out, spec.k, k)?.permute(&[0, 2, 1, 3])
}

/// `d_k ← Σ_i σ(W^Q d_k + W^K d_i) ⊙ W^V d_i`, tokens are users.
pub(crate) fn gat<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let n = input.d0.shape()[2];
    let mut x = tokens(input.d0, spec.n)?;
    let s = x.shape();
    let (b, t) = (s[0], s[1]);
    for l in 0..spec.layers() {
        let w = |m: &str| p.get(&format!("l{l}.{m}"));
        let q = x.linear(w("wq")?)?;
        let wo = q.shape()[2];
        let score = q
            .reshape(&[b, t, 1, wo])?
            .add(x.linear(w("wk")?)?.reshape(&[b, 1, t, wo])?)?
            .tanh();
        let v = x.linear(w("wv")?)?.reshape(&[b, 1, t, wo])?;
        x = score.mul(v)?.sum_axis(2)?.reshape(&[b, t, wo])?;
    }
    untokens(x, spec.n, n)
}

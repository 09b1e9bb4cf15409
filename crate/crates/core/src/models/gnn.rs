//! Edge-GNN baselines over the antenna-user graph. Features are
//! `[B, K, N, J]` (user, antenna, feature).

use super::model::{Bound, Init, Input};
use super::ops::bias;
use super::spec::{Arch, ModelSpec};
use crate::error::Result;
use crate::numkit::Var;
use crate::Scalar;

pub(crate) fn init<T: Scalar>(spec: &ModelSpec, init: &mut Init<'_, T>) {
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (ji, jo) = (w[0], w[1]);
        match spec.arch {
            Arch::EdgeGcn | Arch::ModelGnn => {
                init.structured(&format!("l{l}.w"), jo, ji);
                init.structured(&format!("l{l}.u"), jo, ji);
            }
            Arch::Rgnn => init_rgnn_layer(init, l, ji, jo),
            _ => unreachable!("not a GNN architecture"),
        }
    }
}

fn activate<'t, T: Scalar>(x: Var<'t, T>, layer: usize, spec: &ModelSpec) -> Var<'t, T> {
    if layer + 1 < spec.layers() {
        x.tanh()
    } else {
        x
    }
}

/// `d_k ← σ(W d_k + U Σ_i d_i)` with block-structured `W`, `U`.
pub(crate) fn edge_gcn<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let mut d = input.d0;
    for l in 0..spec.layers() {
        let own = p.structured(d, &format!("l{l}.w"))?;
        let pooled = p.structured(d.sum_axis(1)?, &format!("l{l}.u"))?;
        d = activate(own.add(pooled)?, l, spec);
    }
    Ok(d)
}

/// Features are read as `J/2` complex numbers per edge (pairs `2p`, `2p+1`).
/// With `z_{kn,p}` the `p`-th number of edge `(n, k)`:
/// `α_{ki,p} = Σ_n conj(z_{kn,p}) h_{ni}` and the aggregate is
/// `s_{kn,p} = Σ_i α_{ki,p} z_{in,p} / N`, then `d_k ← σ(W d_k + U s_k)`.
pub(crate) fn model_gnn<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let s = input.h_re.shape();
    let (b, k, n) = (s[0], s[1], s[2]);
    let mut d = input.d0;
    for l in 0..spec.layers() {
        let pairs = spec.widths[l] / 2;
        let z = d.reshape(&[b, k, n, pairs, 2])?;
        // [B, P, K, N] → [B·P, K, N]
        let plane = |c: usize| -> Result<Var<'t, T>> {
            z.slice(4, c, c + 1)?
                .reshape(&[b, k, n, pairs])?
                .permute(&[0, 3, 1, 2])?
                .reshape(&[b * pairs, k, n])
        };
        let (zr, zi) = (plane(0)?, plane(1)?);
        let spread = |h: Var<'t, T>| -> Result<Var<'t, T>> {
            h.reshape(&[b, 1, k, n])?.broadcast_to(&[b, pairs, k, n])?.reshape(&[b * pairs, k, n])
        };
        let (hr, hi) = (spread(input.h_re)?, spread(input.h_im)?);
        let c = T::of(1.0 / spec.n as f64);
        let ar = zr.bmm_nt(hr)?.add(zi.bmm_nt(hi)?)?.scale(c);
        let ai = zr.bmm_nt(hi)?.sub(zi.bmm_nt(hr)?)?.scale(c);
        let sr = ar.bmm(zr)?.sub(ai.bmm(zi)?)?;
        let si = ar.bmm(zi)?.add(ai.bmm(zr)?)?;
        let back = |x: Var<'t, T>| -> Result<Var<'t, T>> {
            x.reshape(&[b, pairs, k, n])?.permute(&[0, 2, 3, 1])?.reshape(&[b, k, n, pairs, 1])
        };
        let agg = Var::concat(&[back(sr)?, back(si)?], 4)?.reshape(&[b, k, n, 2 * pairs])?;
        let own = p.structured(d, &format!("l{l}.w"))?;
        let mixed = p.structured(agg, &format!("l{l}.u"))?;
        d = activate(own.add(mixed)?, l, spec);
    }
    Ok(d)
}

fn init_rgnn_layer<T: Scalar>(init: &mut Init<'_, T>, l: usize, ji: usize, jo: usize) {
    let h = jo;
    let q = format!("l{l}.q");
    for part in ["a1k", "a1i", "a2k", "a2i", "c1k", "c1i"] {
        init.dense(&format!("{q}.{part}"), h, ji);
    }
    init.bias(&format!("{q}.a0"), h, 2 * ji);
    init.dense(&format!("{q}.c2"), h, h);
    init.bias(&format!("{q}.c0"), h, 2 * ji + h);
    init.dense(&format!("{q}.out"), jo, h);
    init.bias(&format!("{q}.out0"), jo, h);
    let f = format!("l{l}.f");
    for part in ["e1", "e2", "g1"] {
        init.dense(&format!("{f}.{part}"), h, ji + jo);
    }
    init.bias(&format!("{f}.e0"), h, 2 * (ji + jo));
    init.dense(&format!("{f}.g2"), h, h);
    init.bias(&format!("{f}.g0"), h, ji + jo + h);
    init.dense(&format!("{f}.out"), jo, h);
    init.bias(&format!("{f}.out0"), jo, h);
}

/// Recursive GNN. Both the processor `q_R(d_k, d_i)` and the combiner
/// `f_R(d_k, s_k)` act per antenna as `y_n = φ(x_n, Σ_{n'} ψ(x_n, x_{n'}))`
/// with one-hidden-layer tanh networks `φ`, `ψ`.
pub(crate) fn rgnn<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, input: &Input<'t, T>) -> Result<Var<'t, T>> {
    let s = input.h_re.shape();
    let (b, k, n) = (s[0], s[1], s[2]);
    let mut d = input.d0;
    for l in 0..spec.layers() {
        let jo = spec.widths[l + 1];
        let h = jo;
        let w = |name: &str| p.get(&format!("l{l}.{name}"));

        // Processor over user pairs (k, i): x_n = [d_kn; d_in].
        let lin = |name: &str, shape: &[usize]| -> Result<Var<'t, T>> { d.linear(w(name)?)?.reshape(shape) };
        let psi = lin("q.a1k", &[b, k, 1, n, 1, h])?
            .add(lin("q.a1i", &[b, 1, k, n, 1, h])?)?
            .add(lin("q.a2k", &[b, k, 1, 1, n, h])?)?
            .add(lin("q.a2i", &[b, 1, k, 1, n, h])?)?
            .add(bias(w("q.a0")?, 6)?)?
            .tanh()
            .sum_axis(4)?
            .reshape(&[b, k, k, n, h])?;
        let hidden = lin("q.c1k", &[b, k, 1, n, h])?
            .add(lin("q.c1i", &[b, 1, k, n, h])?)?
            .add(psi.linear(w("q.c2")?)?)?
            .add(bias(w("q.c0")?, 5)?)?
            .tanh();
        let q = hidden.linear(w("q.out")?)?.add(bias(w("q.out0")?, 5)?)?;
        let pooled = q.sum_axis(2)?.reshape(&[b, k, n, jo])?;

        // Combiner: x_n = [d_kn; s_kn].
        let x = Var::concat(&[d, pooled], 3)?;
        let psi_f = x
            .linear(w("f.e1")?)?
            .reshape(&[b, k, n, 1, h])?
            .add(x.linear(w("f.e2")?)?.reshape(&[b, k, 1, n, h])?)?
            .add(bias(w("f.e0")?, 5)?)?
            .tanh()
            .sum_axis(3)?
            .reshape(&[b, k, n, h])?;
        let hidden_f = x
            .linear(w("f.g1")?)?
            .add(psi_f.linear(w("f.g2")?)?)?
            .add(bias(w("f.g0")?, 4)?)?
            .tanh();
        let y = hidden_f.linear(w("f.out")?)?.add(bias(w("f.out0")?, 4)?)?;
        d = activate(y, l, spec);
    }
    Ok(d)
}

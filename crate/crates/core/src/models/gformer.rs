//! Graph transformers. Tokens are users, each carrying one feature vector
//! per antenna; all weights are block-structured over antennas.

use super::model::{Bound, Init, Input};
use super::ops::{attend, effective_heads};
use super::spec::{Arch, ModelSpec};
use crate::error::Result;
use crate::numkit::Var;
use crate::Scalar;

fn has_query(arch: Arch) -> bool {
    arch == Arch::F2dGformer
}

fn has_key(arch: Arch) -> bool {
    arch != Arch::Gformer2dWoUk
}

fn has_value(arch: Arch) -> bool {
    arch != Arch::Gformer2dWoUv
}

pub(crate) fn init<T: Scalar>(spec: &ModelSpec, init: &mut Init<'_, T>) {
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (ji, jo) = (w[0], w[1]);
        if spec.arch == Arch::EdgeGcn3d {
            for m in ["w", "u", "r"] {
                init.structured(&format!("l{l}.{m}"), jo, ji);
            }
            continue;
        }
        if has_query(spec.arch) {
            init.structured(&format!("l{l}.uq"), ji, ji);
        }
        if has_key(spec.arch) {
            init.structured(&format!("l{l}.uk"), ji, ji);
        }
        if has_value(spec.arch) {
            init.structured(&format!("l{l}.uv"), ji, ji);
        }
        init.structured(&format!("l{l}.uf"), jo, ji);
    }
}

/// Fixed factor on query-key scores, with `N` as declared in the spec.
/// Raw scores are divided by the full contraction length `N·J`; softmax
/// scores by `√(N·J/M_h)`, the per-head length. A constant factor is
/// absorbed by `U^K`.
fn score_scale(spec: &ModelSpec, j_in: usize, softmax: bool) -> f64 {
    let c = (spec.n * j_in) as f64;
    if softmax {
        1.0 / (c / effective_heads(spec.heads, j_in, j_in) as f64).sqrt()
    } else {
        1.0 / c
    }
}

/// `d_k ← σ(U^F (d_k + Σ_i ξ(q_k · k_i) v_i))` on `[G, K, N, J]`. The F-2D
/// variant uses `q = U^Q d`, softmax scores; the others use `q = d` and raw
/// scores. Ablations replace `U^K` or `U^V` by the identity.
pub(crate) fn gformer_2d<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, d0: Var<'t, T>) -> Result<Var<'t, T>> {
    let arch = spec.arch;
    let mut d = d0;
    for l in 0..spec.layers() {
        let map = |on: bool, m: &str| -> Result<Var<'t, T>> {
            if on {
                p.structured(d, &format!("l{l}.{m}"))
            } else {
                Ok(d)
            }
        };
        let q = map(has_query(arch), "uq")?;
        let q = q.scale(T::of(score_scale(spec, spec.widths[l], has_query(arch))));
        let k = map(has_key(arch), "uk")?;
        let v = map(has_value(arch), "uv")?;
        let c = attend(q, k, v, spec.heads, has_query(arch))?;
        let y = p.structured(d.add(c)?, &format!("l{l}.uf"))?;
        d = if l + 1 < spec.layers() { y.tanh() } else { y };
    }
    Ok(d)
}

/// Hyper-edge features `[B, R, K, N, 2]` with `[Re h_nk + a_r, Im h_nk]`.
fn hyper_edges<'t, T: Scalar>(input: &Input<'t, T>, a: Var<'t, T>) -> Result<Var<'t, T>> {
    let s = input.h_re.shape();
    let (b, k, n, r) = (s[0], s[1], s[2], a.shape()[0]);
    let full = [b, r, k, n, 1];
    let re = input
        .h_re
        .reshape(&[b, 1, k, n, 1])?
        .add(a.reshape(&[1, r, 1, 1, 1])?)?;
    let im = input.h_im.reshape(&[b, 1, k, n, 1])?.broadcast_to(&full)?;
    Var::concat(&[re, im], 4)
}

/// 3D Edge-GCN layer stack on `[B, R, K, N, J]`:
/// `d_kr ← σ(W d_kr + U Σ_i d_ir + R Σ_r' d_kr')`.
fn edge_gcn_3d<'t, T: Scalar>(spec: &ModelSpec, p: &Bound<'t, T>, d0: Var<'t, T>) -> Result<Var<'t, T>> {
    let mut d = d0;
    for l in 0..spec.layers() {
        let own = p.structured(d, &format!("l{l}.w"))?;
        let users = p.structured(d.sum_axis(2)?, &format!("l{l}.u"))?;
        let chains = p.structured(d.sum_axis(1)?, &format!("l{l}.r"))?;
        let y = own.add(users)?.add(chains)?;
        d = if l + 1 < spec.layers() { y.tanh() } else { y };
    }
    Ok(d)
}

/// Hybrid read-out: `V_RF` as `[B, R, N, 2]` (sum over users) and `V_BB` as
/// `[B, K, R, 2]` (sum over antennas), both unnormalized.
pub(crate) fn hybrid<'t, T: Scalar>(
    spec: &ModelSpec,
    p: &Bound<'t, T>,
    input: &Input<'t, T>,
    a: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let d0 = hyper_edges(input, a)?;
    let s = d0.shape();
    let (b, r, k, n) = (s[0], s[1], s[2], s[3]);
    let out = if spec.arch == Arch::EdgeGcn3d {
        edge_gcn_3d(spec, p, d0)?
    } else {
        let flat = d0.reshape(&[b * r, k, n, 2])?;
        let j = *spec.widths.last().expect("validated widths");
        gformer_2d(spec, p, flat)?.reshape(&[b, r, k, n, j])?
    };
    let j = out.shape()[4];
    let rf = out.sum_axis(2)?.reshape(&[b, r, n, j])?;
    let bb = out.sum_axis(3)?.reshape(&[b, r, k, j])?.permute(&[0, 2, 1, 3])?;
    Ok((rf, bb))
}

use crate::error::Result;
use crate::numkit::{Tensor, Var};
use crate::Scalar;

/// Multi-head token attention. `q`, `k` are `[G, T, N, W]`, `v` is
/// `[G, T, N, Wv]`; head `m` owns a contiguous slice of the last axis of all
/// three. Scores `s_{ti} = Σ_{n, j∈m} q_{tnj} k_{inj}` are optionally
/// softmax-normalized over `i`, then `out_t = Σ_i s_{ti} v_i` per head.
pub fn attend<'t, T: Scalar>(q: Var<'t, T>, k: Var<'t, T>, v: Var<'t, T>, heads: usize, softmax: bool) -> Result<Var<'t, T>> {
    let sq = q.shape();
    let sv = v.shape();
    let (g, t, n, w, wv) = (sq[0], sq[1], sq[2], sq[3], sv[3]);
    let h = effective_heads(heads, w, wv);
    let score = |qm: Var<'t, T>, km: Var<'t, T>| -> Result<Var<'t, T>> {
        let s = qm.bmm_nt(km)?;
        if softmax {
            s.softmax_last()
        } else {
            Ok(s)
        }
    };
    if w % h == 0 && wv % h == 0 {
        let (c, cv) = (w / h, wv / h);
        let split = |x: Var<'t, T>, c: usize| -> Result<Var<'t, T>> {
            x.reshape(&[g, t, n, h, c])?.permute(&[0, 3, 1, 2, 4])?.reshape(&[g * h, t, n * c])
        };
        let s = score(split(q, c)?, split(k, c)?)?;
        let out = s.bmm(split(v, cv)?)?;
        return out.reshape(&[g, h, t, n, cv])?.permute(&[0, 2, 3, 1, 4])?.reshape(&[g, t, n, wv]);
    }
    let mut parts = Vec::with_capacity(h);
    for m in 0..h {
        let (a, b) = (m * w / h, (m + 1) * w / h);
        let (av, bv) = (m * wv / h, (m + 1) * wv / h);
        let qm = q.slice(3, a, b)?.reshape(&[g, t, n * (b - a)])?;
        let km = k.slice(3, a, b)?.reshape(&[g, t, n * (b - a)])?;
        let vm = v.slice(3, av, bv)?.reshape(&[g, t, n * (bv - av)])?;
        parts.push(score(qm, km)?.bmm(vm)?.reshape(&[g, t, n, bv - av])?);
    }
    Var::concat(&parts, 3)
}

/// Heads actually used by [`attend`] for query width `w` and value width `wv`.
pub fn effective_heads(heads: usize, w: usize, wv: usize) -> usize {
    heads.min(w).min(wv).max(1)
}

/// Sinusoidal position code for `tokens × width`.
pub fn positional_code<T: Scalar>(tokens: usize, width: usize) -> Tensor<T> {
    Tensor::from_fn(&[1, tokens, width], |idx| {
        let (pos, j) = ((idx / width) as f64, idx % width);
        let freq = 10000f64.powf(-((2 * (j / 2)) as f64) / width as f64);
        T::of(if j % 2 == 0 { (pos * freq).sin() } else { (pos * freq).cos() })
    })
}

/// Reshapes a bias vector so it broadcasts against a rank-`rank` tensor.
pub fn bias<'t, T: Scalar>(b: Var<'t, T>, rank: usize) -> Result<Var<'t, T>> {
    let mut shape = vec![1; rank];
    shape[rank - 1] = b.shape()[0];
    b.reshape(&shape)
}

/// Splits the trailing feature axis of `[..., 2]` into real and imaginary planes.
pub fn split_pair<'t, T: Scalar>(x: Var<'t, T>) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let s = x.shape();
    let r = s.len() - 1;
    let out: Vec<usize> = s[..r].to_vec();
    Ok((x.slice(r, 0, 1)?.reshape(&out)?, x.slice(r, 1, 2)?.reshape(&out)?))
}

/// Stacks real and imaginary planes into a trailing feature axis of 2.
pub fn join_pair<'t, T: Scalar>(re: Var<'t, T>, im: Var<'t, T>) -> Result<Var<'t, T>> {
    let mut s = re.shape();
    s.push(1);
    let r = s.len() - 1;
    Var::concat(&[re.reshape(&s)?, im.reshape(&s)?], r)
}

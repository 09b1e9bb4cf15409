//! Batched, differentiable counterparts of the metric and normalizers.
//!
//! Batches are real planes shaped `[B, K, N]` (user-major): entry `[b, k, n]`
//! of a channel batch is `h_nk` of sample `b`, and likewise `v_nk` for a
//! precoder batch.

use num_complex::Complex;

use crate::channels::ChannelSample;
use crate::error::{dim_err, Result};
use crate::numkit::{ComplexMatrix, Tensor, Var};
use crate::Scalar;

/// Real and imaginary `[B, K, N]` planes of a batch of equally sized channels.
pub fn stack_channels<T: Scalar>(samples: &[&ChannelSample<T>]) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = samples.first().ok_or_else(|| dim_err("empty channel batch"))?;
    let (n, k) = (first.n(), first.k());
    let mut re = Vec::with_capacity(samples.len() * n * k);
    let mut im = Vec::with_capacity(samples.len() * n * k);
    for s in samples {
        if s.n() != n || s.k() != k {
            return Err(dim_err(format!(
                "batch mixes {n}x{k} with {}x{} channels",
                s.n(),
                s.k()
            )));
        }
        for u in 0..k {
            for a in 0..n {
                let z = s.h.get(a, u);
                re.push(z.re);
                im.push(z.im);
            }
        }
    }
    let shape = [samples.len(), k, n];
    Ok((Tensor::new(&shape, re)?, Tensor::new(&shape, im)?))
}

/// Inverse of the `[B, K, N]` layout: one `N × K` precoder per batch entry.
pub fn unstack_precoders<T: Scalar>(re: &Tensor<T>, im: &Tensor<T>) -> Result<Vec<ComplexMatrix<T>>> {
    if re.shape() != im.shape() || re.rank() != 3 {
        return Err(dim_err(format!("precoder planes {:?} / {:?}", re.shape(), im.shape())));
    }
    let (b, k, n) = (re.shape()[0], re.shape()[1], re.shape()[2]);
    Ok((0..b)
        .map(|s| {
            ComplexMatrix::from_fn(n, k, |a, u| {
                let i = (s * k + u) * n + a;
                Complex::new(re.data()[i], im.data()[i])
            })
        })
        .collect())
}

/// Sum SE of every batch entry, shape `[B]`.
pub fn tape_sum_se<'t, T: Scalar>(
    h_re: Var<'t, T>,
    h_im: Var<'t, T>,
    v_re: Var<'t, T>,
    v_im: Var<'t, T>,
    sigma2: T,
) -> Result<Var<'t, T>> {
    let shape = h_re.shape();
    if shape.len() != 3 || h_im.shape() != shape || v_re.shape() != shape || v_im.shape() != shape {
        return Err(dim_err(format!(
            "SE of channel {:?} with precoder {:?}",
            shape,
            v_re.shape()
        )));
    }
    let (b, k) = (shape[0], shape[1]);
    // g[b, k, i] = h_kᴴ v_i
    let g_re = h_re.bmm_nt(v_re)?.add(h_im.bmm_nt(v_im)?)?;
    let g_im = h_re.bmm_nt(v_im)?.sub(h_im.bmm_nt(v_re)?)?;
    let gain = g_re.square().add(g_im.square())?;
    let eye = h_re.tape().constant(Tensor::eye(k).reshape(&[1, k, k])?);
    let signal = gain.mul(eye)?.sum_axis(2)?;
    let total = gain.sum_axis(2)?.add_scalar(sigma2);
    let interference = total.sub(signal)?;
    let rates = total.ln().sub(interference.ln())?.scale(T::one() / T::LN_2());
    rates.sum_axis(1)?.reshape(&[b])
}

fn frame_power<'t, T: Scalar>(re: Var<'t, T>, im: Var<'t, T>) -> Result<Var<'t, T>> {
    re.square().add(im.square())?.sum_axis(2)?.sum_axis(1)
}

/// Scales every batch entry to total power `pt`.
pub fn tape_normalize_power<'t, T: Scalar>(
    re: Var<'t, T>,
    im: Var<'t, T>,
    pt: T,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let norm = frame_power(re, im)?.scale(T::one() / pt).sqrt();
    Ok((re.div(norm)?, im.div(norm)?))
}

pub struct HybridOutput<'t, T: Scalar> {
    /// `[B, N_RF, N]`, unit modulus.
    pub rf_re: Var<'t, T>,
    pub rf_im: Var<'t, T>,
    /// `[B, K, N_RF]`.
    pub bb_re: Var<'t, T>,
    pub bb_im: Var<'t, T>,
    /// Effective precoder `V_BB · V_RF`, `[B, K, N]`, total power `pt`.
    pub v_re: Var<'t, T>,
    pub v_im: Var<'t, T>,
}

/// Batched hybrid normalization: `V_RF` entries divided by their modulus,
/// `V_BB` rescaled so the effective precoder has power `pt`.
pub fn tape_normalize_hybrid<'t, T: Scalar>(
    rf_re: Var<'t, T>,
    rf_im: Var<'t, T>,
    bb_re: Var<'t, T>,
    bb_im: Var<'t, T>,
    pt: T,
) -> Result<HybridOutput<'t, T>> {
    let modulus = rf_re.square().add(rf_im.square())?.sqrt();
    let (rr, ri) = (rf_re.div(modulus)?, rf_im.div(modulus)?);
    let v_re = bb_re.bmm(rr)?.sub(bb_im.bmm(ri)?)?;
    let v_im = bb_re.bmm(ri)?.add(bb_im.bmm(rr)?)?;
    let norm = frame_power(v_re, v_im)?.scale(T::one() / pt).sqrt();
    Ok(HybridOutput {
        rf_re: rr,
        rf_im: ri,
        bb_re: bb_re.div(norm)?,
        bb_im: bb_im.div(norm)?,
        v_re: v_re.div(norm)?,
        v_im: v_im.div(norm)?,
    })
}

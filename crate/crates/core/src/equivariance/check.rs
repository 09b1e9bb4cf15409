use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{permute_axis, Permutation};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::numkit::{ComplexMatrix, Tape, Tensor};
use crate::Scalar;

/// Which index sets are permuted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermKind {
    User,
    Antenna,
    Rf,
    /// Every axis the model has: users and antennas, plus RF chains for
    /// hybrid models.
    Joint,
}

/// Outcome of an equivariance check. Violations are reported, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub kind: PermKind,
    pub trials: usize,
    pub max_deviation: f64,
    pub deviations: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

struct Perms {
    user: Permutation,
    antenna: Permutation,
    rf: Permutation,
}

fn planes<T: Scalar>(hs: &[ComplexMatrix<T>]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, k) = (hs[0].rows(), hs[0].cols());
    let mut re = Vec::with_capacity(hs.len() * n * k);
    let mut im = Vec::with_capacity(hs.len() * n * k);
    for h in hs {
        for u in 0..k {
            for a in 0..n {
                let z = h.get(a, u);
                re.push(z.re);
                im.push(z.im);
            }
        }
    }
    let shape = [hs.len(), k, n];
    Ok((Tensor::new(&shape, re)?, Tensor::new(&shape, im)?))
}

fn run<T: Scalar>(model: &Model<T>, hs: &[ComplexMatrix<T>], n_rf: usize, a: Option<&[T]>) -> Result<Vec<Tensor<T>>> {
    let tape = Tape::new();
    let bound = model.bind(&tape, false);
    let (re, im) = planes(hs)?;
    let out = model.forward(&bound, tape.constant(re), tape.constant(im), n_rf, a)?;
    Ok(out.tensors())
}

/// Applies the permutations to raw outputs: `[B, K, N]` planes for baseband
/// models, `[B, R, N]` and `[B, K, R]` planes for hybrid ones.
fn permute_outputs<T: Scalar>(outs: &[Tensor<T>], p: &Perms, hybrid: bool) -> Result<Vec<Tensor<T>>> {
    outs.iter()
        .enumerate()
        .map(|(i, t)| {
            let (first, second) = match (hybrid, i < 2) {
                (false, _) => (&p.user, &p.antenna),
                (true, true) => (&p.rf, &p.antenna),
                (true, false) => (&p.user, &p.rf),
            };
            permute_axis(&permute_axis(t, 1, first)?, 2, second)
        })
        .collect()
}

fn inf_norm<T: Scalar>(ts: &[Tensor<T>]) -> f64 {
    ts.iter().map(|t| t.max_abs().as_f64()).fold(0.0, f64::max)
}

fn batch_row<T: Scalar>(t: &Tensor<T>, b: usize) -> Result<Tensor<T>> {
    let s = t.shape();
    let size: usize = s[1..].iter().product();
    let mut shape = s.to_vec();
    shape[0] = 1;
    Tensor::new(&shape, t.data()[b * size..(b + 1) * size].to_vec())
}

/// Relative deviation `‖f(Πx) − Π f(x)‖∞ / ‖f(x)‖∞` of the raw outputs for
/// `trials` random permutations of the chosen kind, using channel `h`
/// (`N × K`) and `n_rf` RF chains (ignored for baseband models).
pub fn check_pe<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    h: &ComplexMatrix<T>,
    n_rf: usize,
    kind: PermKind,
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> Result<PeReport> {
    let hybrid = model.arch().is_hybrid();
    let (n, k) = (h.rows(), h.cols());
    let r = if hybrid { n_rf } else { 0 };
    if kind == PermKind::Rf && !hybrid {
        return Err(Error::Config(format!("{} has no RF-chain axis", model.arch())));
    }
    let a: Vec<T> = model.virtual_vec().iter().take(r).copied().collect();
    let base = run(model, std::slice::from_ref(h), n_rf, hybrid.then_some(a.as_slice()))?;
    let scale = inf_norm(&base);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(format!("model output has norm {scale}")));
    }

    let draws: Vec<Perms> = (0..trials)
        .map(|_| {
            let draw = |len: usize, on: bool, rng: &mut R| {
                if on {
                    Permutation::random(len, rng)
                } else {
                    Permutation::identity(len)
                }
            };
            let joint = kind == PermKind::Joint;
            Perms {
                user: draw(k, joint || kind == PermKind::User, rng),
                antenna: draw(n, joint || kind == PermKind::Antenna, rng),
                rf: draw(r, joint || kind == PermKind::Rf, rng),
            }
        })
        .collect();
    let permuted_input = |p: &Perms| -> Result<ComplexMatrix<T>> {
        let (pa, pu) = (p.antenna.as_slice(), p.user.as_slice());
        Ok(ComplexMatrix::from_fn(n, k, |i, j| h.get(pa[i], pu[j])))
    };

    let mut deviations = Vec::with_capacity(trials);
    if hybrid {
        for p in &draws {
            let ap = p.rf.apply(&a)?;
            let got = run(model, &[permuted_input(p)?], n_rf, Some(&ap))?;
            let want = permute_outputs(&base, p, true)?;
            deviations.push(deviation(&got, &want, scale)?);
        }
    } else if trials > 0 {
        let inputs = draws.iter().map(&permuted_input).collect::<Result<Vec<_>>>()?;
        let got = run(model, &inputs, n_rf, None)?;
        for (b, p) in draws.iter().enumerate() {
            let row = got.iter().map(|t| batch_row(t, b)).collect::<Result<Vec<_>>>()?;
            let want = permute_outputs(&base, p, false)?;
            deviations.push(deviation(&row, &want, scale)?);
        }
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let pass = deviations.iter().all(|d| *d <= tol);
    Ok(PeReport {
        kind,
        trials,
        max_deviation,
        deviations,
        tol,
        pass,
    })
}

fn deviation<T: Scalar>(got: &[Tensor<T>], want: &[Tensor<T>], scale: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (g, w) in got.iter().zip(want) {
        if g.shape() != w.shape() {
            return Err(Error::Dimension(format!("output {:?} vs {:?}", g.shape(), w.shape())));
        }
        for (x, y) in g.data().iter().zip(w.data()) {
            let d = (x.as_f64() - y.as_f64()).abs();
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
    }
    Ok(worst / scale)
}

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{join_pair, split_pair};
use super::spec::{Arch, Axis, ModelSpec};
use super::{dense, gformer, gnn};
use crate::channels::ChannelSample;
use crate::error::{Error, Result};
use crate::numkit::{ComplexMatrix, Tape, Tensor, Var};
use crate::precoding::{
    stack_channels, tape_normalize_hybrid, tape_normalize_power, tape_sum_se, unstack_precoders, HybridPrecoder,
};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Architecture, weights and (hybrid models) the virtual vector `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    pub(crate) spec: ModelSpec,
    pub(crate) params: Vec<Param<T>>,
    pub(crate) virtual_vec: Vec<T>,
}

/// Collects freshly initialized parameters in declaration order.
pub(crate) struct Init<'r, T: Scalar> {
    rng: &'r mut ChaCha8Rng,
    blocks: usize,
    params: Vec<Param<T>>,
}

impl<T: Scalar> Init<'_, T> {
    fn push(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.push_bound(name, shape, 1.0 / (fan_in as f64).sqrt());
    }

    fn push_bound(&mut self, name: String, shape: &[usize], bound: f64) {
        let value = Tensor::uniform(shape, T::of(bound), self.rng);
        self.params.push(Param { name, value });
    }

    /// Diagonal and off-diagonal blocks `name.w1`, `name.w2`, each `[j_out, j_in]`.
    /// The off-diagonal block acts on a sum over the other blocks and is
    /// scaled down by the block count.
    pub fn structured(&mut self, name: &str, j_out: usize, j_in: usize) {
        let b = 1.0 / (j_in as f64).sqrt();
        self.push_bound(format!("{name}.w1"), &[j_out, j_in], b);
        self.push_bound(format!("{name}.w2"), &[j_out, j_in], b / self.blocks as f64);
    }

    pub fn dense(&mut self, name: &str, out: usize, inp: usize) {
        self.push(name.to_string(), &[out, inp], inp);
    }

    pub fn bias(&mut self, name: &str, len: usize, fan_in: usize) {
        self.push(name.to_string(), &[len], fan_in);
    }
}

/// Parameters of one model placed on a tape.
pub struct Bound<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
    index: HashMap<String, usize>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    pub(crate) fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("model has no parameter {name:?}")))
    }

    /// `x` through the structured map stored as `name.w1` / `name.w2`.
    pub(crate) fn structured(&self, x: Var<'t, T>, name: &str) -> Result<Var<'t, T>> {
        x.structured(self.get(&format!("{name}.w1"))?, self.get(&format!("{name}.w2"))?)
    }
}

/// Network output before any normalization.
pub enum RawOutput<'t, T: Scalar> {
    /// `[B, K, N]` planes.
    Baseband { v_re: Var<'t, T>, v_im: Var<'t, T> },
    /// `V_RF` as `[B, N_RF, N]`, `V_BB` as `[B, K, N_RF]`.
    Hybrid {
        rf_re: Var<'t, T>,
        rf_im: Var<'t, T>,
        bb_re: Var<'t, T>,
        bb_im: Var<'t, T>,
    },
}

impl<'t, T: Scalar> RawOutput<'t, T> {
    /// All raw outputs as tensors, in a fixed order.
    pub fn tensors(&self) -> Vec<Tensor<T>> {
        match self {
            RawOutput::Baseband { v_re, v_im } => vec![(*v_re.value()).clone(), (*v_im.value()).clone()],
            RawOutput::Hybrid { rf_re, rf_im, bb_re, bb_im } => [rf_re, rf_im, bb_re, bb_im]
                .iter()
                .map(|v| (*v.value()).clone())
                .collect(),
        }
    }
}

/// Normalized precoders, differentiable.
pub struct Precoded<'t, T: Scalar> {
    /// Effective precoder `[B, K, N]` with total power `pt` per sample.
    pub v_re: Var<'t, T>,
    pub v_im: Var<'t, T>,
    /// `(V_RF, V_BB)` planes for hybrid models.
    pub hybrid: Option<[Var<'t, T>; 4]>,
}

/// Inputs handed to an architecture's forward pass.
pub(crate) struct Input<'t, T: Scalar> {
    /// `[B, K, N]`
    pub h_re: Var<'t, T>,
    pub h_im: Var<'t, T>,
    /// `[B, K, N, 2]` edge features `[Re h_nk, Im h_nk]`.
    pub d0: Var<'t, T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh weights; for hybrid models the virtual vector holds one
    /// uniform draw from each of `N_RF` equal bins of `[-2, 2]`, in random
    /// order.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            blocks: spec.n,
            params: Vec::new(),
        };
        match spec.arch {
            Arch::EdgeGcn | Arch::ModelGnn | Arch::Rgnn => gnn::init(&spec, &mut init),
            Arch::Transformer1d | Arch::Transformer1dAn | Arch::Gat => dense::init(&spec, &mut init),
            _ => gformer::init(&spec, &mut init),
        }
        let params = init.params;
        let virtual_vec = if spec.arch.is_hybrid() {
            stratified_virtual(spec.n_rf, &mut rng)
        } else {
            Vec::new()
        };
        Ok(Self {
            spec,
            params,
            virtual_vec,
        })
    }

    pub fn from_parts(spec: ModelSpec, params: Vec<Param<T>>, virtual_vec: Vec<T>) -> Result<Self> {
        let fresh = Self::new(spec.clone(), 0)?;
        if fresh.params.len() != params.len()
            || fresh
                .params
                .iter()
                .zip(&params)
                .any(|(a, b)| a.name != b.name || a.value.shape() != b.value.shape())
        {
            return Err(Error::Config(format!("parameters do not match a {} model with this spec", spec.arch)));
        }
        if virtual_vec.len() != fresh.virtual_vec.len() {
            return Err(Error::Config(format!(
                "virtual vector of length {}, expected {}",
                virtual_vec.len(),
                fresh.virtual_vec.len()
            )));
        }
        Ok(Self {
            spec,
            params,
            virtual_vec,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn arch(&self) -> Arch {
        self.spec.arch
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn param_tensors(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_param_tensors(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Config(format!("{} tensors for {} parameters", values.len(), self.params.len())));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Config(format!("parameter {} has shape {:?}, got {:?}", p.name, p.value.shape(), v.shape())));
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn virtual_vec(&self) -> &[T] {
        &self.virtual_vec
    }

    pub fn set_virtual_vec(&mut self, a: Vec<T>) -> Result<()> {
        if a.len() != self.virtual_vec.len() {
            return Err(Error::Config(format!("virtual vector of length {}, expected {}", a.len(), self.virtual_vec.len())));
        }
        self.virtual_vec = a;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Places the parameters on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.param(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect();
        let index = self.params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Bound { vars, index }
    }

    /// Rejects dimensions the architecture cannot process.
    pub fn check_dims(&self, n: usize, k: usize, n_rf: usize) -> Result<()> {
        let s = &self.spec;
        for axis in s.arch.padded_axes() {
            let (got, cap, what) = match axis {
                Axis::Antennas => (n, s.n, "antennas"),
                Axis::Users => (k, s.k, "users"),
                Axis::RfChains => (n_rf, s.n_rf, "RF chains"),
            };
            if got > cap {
                return Err(Error::Config(format!(
                    "{} was built for at most {cap} {what} (zero-padded), got {got}",
                    s.arch
                )));
            }
        }
        if s.arch.is_hybrid() {
            if n_rf == 0 || n_rf > self.virtual_vec.len() {
                return Err(Error::Config(format!(
                    "{} supports 1..={} RF chains, got {n_rf}",
                    s.arch,
                    self.virtual_vec.len()
                )));
            }
        }
        Ok(())
    }

    /// Raw network output for a `[B, K, N]` channel batch. `n_rf` selects the
    /// number of RF chains for hybrid models; `virtual_vec` overrides the
    /// stored vector (first `n_rf` entries are used).
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        h_re: Var<'t, T>,
        h_im: Var<'t, T>,
        n_rf: usize,
        virtual_vec: Option<&[T]>,
    ) -> Result<RawOutput<'t, T>> {
        let shape = h_re.shape();
        if shape.len() != 3 || h_im.shape() != shape {
            return Err(Error::Dimension(format!("channel batch planes {:?} / {:?}", shape, h_im.shape())));
        }
        let (k, n) = (shape[1], shape[2]);
        self.check_dims(n, k, n_rf)?;
        let input = Input {
            h_re,
            h_im,
            d0: join_pair(h_re, h_im)?,
        };
        let s = &self.spec;
        let baseband = |d: Var<'t, T>| -> Result<RawOutput<'t, T>> {
            let (v_re, v_im) = split_pair(d)?;
            Ok(RawOutput::Baseband { v_re, v_im })
        };
        match s.arch {
            Arch::EdgeGcn => baseband(gnn::edge_gcn(s, bound, &input)?),
            Arch::ModelGnn => baseband(gnn::model_gnn(s, bound, &input)?),
            Arch::Rgnn => baseband(gnn::rgnn(s, bound, &input)?),
            Arch::Transformer1d => baseband(dense::transformer_users(s, bound, &input)?),
            Arch::Transformer1dAn => baseband(dense::transformer_antennas(s, bound, &input)?),
            Arch::Gat => baseband(dense::gat(s, bound, &input)?),
            Arch::F2dGformer | Arch::Gformer2d | Arch::Gformer2dWoUk | Arch::Gformer2dWoUv => {
                baseband(gformer::gformer_2d(s, bound, input.d0)?)
            }
            Arch::Gformer3d | Arch::EdgeGcn3d => {
                let a = virtual_vec.unwrap_or(&self.virtual_vec);
                if a.len() < n_rf {
                    return Err(Error::Config(format!("virtual vector of length {} for {n_rf} RF chains", a.len())));
                }
                let a = h_re.tape().constant(Tensor::new(&[n_rf], a[..n_rf].to_vec())?);
                let (rf, bb) = gformer::hybrid(s, bound, &input, a)?;
                let (rf_re, rf_im) = split_pair(rf)?;
                let (bb_re, bb_im) = split_pair(bb)?;
                Ok(RawOutput::Hybrid { rf_re, rf_im, bb_re, bb_im })
            }
        }
    }

    /// Forward pass followed by the power (and constant-modulus) normalization.
    pub fn precode<'t>(
        &self,
        bound: &Bound<'t, T>,
        h_re: Var<'t, T>,
        h_im: Var<'t, T>,
        n_rf: usize,
        pt: T,
    ) -> Result<Precoded<'t, T>> {
        match self.forward(bound, h_re, h_im, n_rf, None)? {
            RawOutput::Baseband { v_re, v_im } => {
                let (v_re, v_im) = tape_normalize_power(v_re, v_im, pt)?;
                Ok(Precoded { v_re, v_im, hybrid: None })
            }
            RawOutput::Hybrid { rf_re, rf_im, bb_re, bb_im } => {
                let o = tape_normalize_hybrid(rf_re, rf_im, bb_re, bb_im, pt)?;
                Ok(Precoded {
                    v_re: o.v_re,
                    v_im: o.v_im,
                    hybrid: Some([o.rf_re, o.rf_im, o.bb_re, o.bb_im]),
                })
            }
        }
    }

    /// Per-sample sum SE `[B]` of the normalized output.
    pub fn sum_se<'t>(
        &self,
        bound: &Bound<'t, T>,
        h_re: Var<'t, T>,
        h_im: Var<'t, T>,
        n_rf: usize,
        pt: T,
        sigma2: T,
    ) -> Result<Var<'t, T>> {
        let p = self.precode(bound, h_re, h_im, n_rf, pt)?;
        tape_sum_se(h_re, h_im, p.v_re, p.v_im, sigma2)
    }

    /// Effective `N × K` precoders for a batch of equally sized channels.
    pub fn infer(&self, samples: &[&ChannelSample<T>], n_rf: usize) -> Result<Vec<ComplexMatrix<T>>> {
        Ok(self.infer_full(samples, n_rf)?.0)
    }

    /// Effective precoders plus the hybrid factors when the model is hybrid.
    pub fn infer_full(
        &self,
        samples: &[&ChannelSample<T>],
        n_rf: usize,
    ) -> Result<(Vec<ComplexMatrix<T>>, Option<Vec<HybridPrecoder<T>>>)> {
        let first = samples.first().ok_or_else(|| Error::Config("empty batch".into()))?;
        let pt = first.pt;
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let (hr, hi) = stack_channels(samples)?;
        let p = self.precode(&bound, tape.constant(hr), tape.constant(hi), n_rf, pt)?;
        let v = unstack_precoders(&p.v_re.value(), &p.v_im.value())?;
        let hybrid = match p.hybrid {
            None => None,
            Some([rr, ri, br, bi]) => {
                let rf = planes_to_matrices(&rr.value(), &ri.value());
                let bb = planes_to_matrices(&br.value(), &bi.value());
                Some(rf.into_iter().zip(bb).map(|(v_rf, v_bb)| HybridPrecoder { v_rf, v_bb }).collect())
            }
        };
        Ok((v, hybrid))
    }
}

/// `[B, R, C]` planes to `B` complex `R × C` matrices.
fn planes_to_matrices<T: Scalar>(re: &Tensor<T>, im: &Tensor<T>) -> Vec<ComplexMatrix<T>> {
    let s = re.shape();
    let (b, r, c) = (s[0], s[1], s[2]);
    (0..b)
        .map(|i| {
            let lo = i * r * c;
            ComplexMatrix::from_parts(r, c, re.data()[lo..lo + r * c].to_vec(), im.data()[lo..lo + r * c].to_vec())
                .expect("plane slice has r*c entries")
        })
        .collect()
}

const VIRTUAL_SPAN: f64 = 2.0;

fn stratified_virtual<T: Scalar>(r: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let width = 2.0 * VIRTUAL_SPAN / r as f64;
    let mut bins: Vec<usize> = (0..r).collect();
    bins.shuffle(rng);
    bins.into_iter()
        .map(|b| T::of(-VIRTUAL_SPAN + (b as f64 + rng.random::<f64>()) * width))
        .collect()
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    EdgeGcn,
    Rgnn,
    ModelGnn,
    #[serde(rename = "transformer_1d")]
    Transformer1d,
    #[serde(rename = "transformer_1d_an")]
    Transformer1dAn,
    Gat,
    #[serde(rename = "f_2d_gformer")]
    F2dGformer,
    #[serde(rename = "gformer_2d")]
    Gformer2d,
    /// 2D-Gformer with the key projection removed: scores are `d_kᵀ d_i`.
    #[serde(rename = "gformer_2d_wo_uk")]
    Gformer2dWoUk,
    /// 2D-Gformer with the value projection removed.
    #[serde(rename = "gformer_2d_wo_uv")]
    Gformer2dWoUv,
    #[serde(rename = "gformer_3d")]
    Gformer3d,
    /// Edge-GCN on the antenna × user × RF-chain hypergraph.
    #[serde(rename = "edge_gcn_3d")]
    EdgeGcn3d,
}

/// Index sets a model can be permuted along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Users,
    Antennas,
    RfChains,
}

impl Arch {
    pub const ALL: [Arch; 12] = [
        Arch::EdgeGcn,
        Arch::Rgnn,
        Arch::ModelGnn,
        Arch::Transformer1d,
        Arch::Transformer1dAn,
        Arch::Gat,
        Arch::F2dGformer,
        Arch::Gformer2d,
        Arch::Gformer2dWoUk,
        Arch::Gformer2dWoUv,
        Arch::Gformer3d,
        Arch::EdgeGcn3d,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Arch::EdgeGcn => "edge_gcn",
            Arch::Rgnn => "rgnn",
            Arch::ModelGnn => "model_gnn",
            Arch::Transformer1d => "transformer_1d",
            Arch::Transformer1dAn => "transformer_1d_an",
            Arch::Gat => "gat",
            Arch::F2dGformer => "f_2d_gformer",
            Arch::Gformer2d => "gformer_2d",
            Arch::Gformer2dWoUk => "gformer_2d_wo_uk",
            Arch::Gformer2dWoUv => "gformer_2d_wo_uv",
            Arch::Gformer3d => "gformer_3d",
            Arch::EdgeGcn3d => "edge_gcn_3d",
        }
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, Arch::Gformer3d | Arch::EdgeGcn3d)
    }

    /// Axes along which the architecture is permutation equivariant.
    pub fn equivariant_axes(self) -> &'static [Axis] {
        match self {
            Arch::Transformer1d | Arch::Gat => &[Axis::Users],
            Arch::Transformer1dAn => &[Axis::Antennas],
            Arch::Gformer3d | Arch::EdgeGcn3d => &[Axis::Users, Axis::Antennas, Axis::RfChains],
            _ => &[Axis::Users, Axis::Antennas],
        }
    }

    /// Axes that are zero-padded to the declared size instead of being
    /// handled natively.
    pub fn padded_axes(self) -> &'static [Axis] {
        match self {
            Arch::Transformer1d | Arch::Gat => &[Axis::Antennas],
            Arch::Transformer1dAn => &[Axis::Users],
            _ => &[],
        }
    }

    /// Hidden widths, layer count and learning rate of the reference
    /// configuration. Architectures outside that table use the 2D-Gformer row.
    fn reference(self) -> (&'static [usize], f64) {
        match self {
            Arch::EdgeGcn => (&[128, 128, 128, 128], 0.002),
            Arch::Gformer3d | Arch::EdgeGcn3d => (&[128, 128, 128, 128], 0.005),
            Arch::Transformer1d => (&[32, 32, 32], 0.0005),
            _ => (&[32, 32, 32], 0.002),
        }
    }

    fn uses_heads(self) -> bool {
        matches!(
            self,
            Arch::Transformer1d
                | Arch::Transformer1dAn
                | Arch::F2dGformer
                | Arch::Gformer2d
                | Arch::Gformer2dWoUk
                | Arch::Gformer2dWoUv
                | Arch::Gformer3d
        )
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .iter()
            .copied()
            .find(|a| a.id() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Arch::ALL.iter().map(|a| a.id()).collect();
                Error::Config(format!("unknown architecture {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Per-antenna feature widths `J^(0), …, J^(L)`; first and last are 2.
    pub widths: Vec<usize>,
    #[serde(default = "one")]
    pub heads: usize,
    /// Antennas. For padded axes this is the maximum accepted size; it also
    /// scales weight initialization.
    pub n: usize,
    pub k: usize,
    /// RF chains (hybrid architectures); the maximum accepted at inference.
    #[serde(default)]
    pub n_rf: usize,
    #[serde(default)]
    pub positional_encoding: bool,
    /// Query/key width of the dense Transformers; defaults to the token width.
    #[serde(default)]
    pub proj_dim: Option<usize>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    /// Reference configuration for `arch`: hidden widths from the
    /// hyper-parameter table plus a linear output layer, 32 heads for the
    /// Transformer family.
    pub fn reference(arch: Arch, n: usize, k: usize, n_rf: usize) -> Self {
        let (hidden, _) = arch.reference();
        Self::with_hidden(arch, hidden, if arch.uses_heads() { 32 } else { 1 }, n, k, n_rf)
    }

    pub fn with_hidden(arch: Arch, hidden: &[usize], heads: usize, n: usize, k: usize, n_rf: usize) -> Self {
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(2);
        Self {
            arch,
            widths,
            heads,
            n,
            k,
            n_rf,
            positional_encoding: false,
            proj_dim: None,
        }
    }

    pub fn reference_lr(arch: Arch) -> f64 {
        arch.reference().1
    }

    pub fn layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.arch)));
        if self.widths.len() < 2 {
            return bad(format!("need at least one layer, widths {:?}", self.widths));
        }
        if self.widths[0] != 2 || *self.widths.last().unwrap() != 2 {
            return bad(format!("input and output widths must be 2, got {:?}", self.widths));
        }
        if self.widths.contains(&0) {
            return bad(format!("zero width in {:?}", self.widths));
        }
        if self.heads == 0 {
            return bad("heads must be at least 1".into());
        }
        if self.n == 0 || self.k == 0 {
            return bad(format!("dimensions must be positive, N={} K={}", self.n, self.k));
        }
        if self.arch.is_hybrid() && self.n_rf == 0 {
            return bad("hybrid architectures need n_rf >= 1".into());
        }
        if self.arch == Arch::ModelGnn && self.widths.iter().any(|w| w % 2 != 0) {
            return bad(format!("widths must be even (complex feature pairs), got {:?}", self.widths));
        }
        if self.positional_encoding && self.arch != Arch::Transformer1d {
            return bad("positional encoding applies to transformer_1d only".into());
        }
        if self.proj_dim == Some(0) {
            return bad("proj_dim must be positive".into());
        }
        Ok(())
    }
}

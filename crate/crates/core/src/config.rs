//! Run configuration: a TOML file with `[graph]`, `[weights]` and
//! `[experiment]` sections. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{LatticeWeights, WeightSystem};
use crate::error::{Error, Result};
use crate::graph::Model;
use crate::hypergeom::HypergeomParams;
use crate::lattice::{build_box_graph, build_torus, BoxGraphSpec, TorusSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    #[default]
    Torus,
    Box,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default)]
    pub kind: GraphKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Side length of a torus or box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_direction: Option<usize>,
    /// Vertex count of a general graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<usize>,
    /// `[tail, head]` pairs of a general graph; edge ids follow list order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    /// Root edge of a general graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_edge: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcWeight {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Per-direction weights (`2d` entries) on lattices, per-edge weights on
    /// general graphs, or the simplex exponents for `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// Exponents of the mixing factor for `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// `2d x 2d` direction matrix on lattices, or the `l x n` matrix for `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<f64>>>,
    /// Per-arc `Z` on general graphs, keyed by edge ids; unlisted arcs get 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc_z: Option<Vec<ArcWeight>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special_alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiMethod {
    Quadrature,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_environments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycle_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hitting_envs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_quenched_envs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_walks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<PhiMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed.unwrap_or(1)
    }

    pub fn d(&self) -> usize {
        self.graph.d.unwrap_or(3)
    }

    /// Lattice weights from `[weights]`: symmetric 1 when `alpha` is absent.
    pub fn lattice_weights(&self) -> Result<LatticeWeights> {
        let d = self.d();
        let alpha = self.weights.alpha.clone().unwrap_or_else(|| vec![1.0; 2 * d]);
        if alpha.len() != 2 * d {
            return Err(Error::Config(format!("lattice alpha needs 2d = {} entries, got {}", 2 * d, alpha.len())));
        }
        LatticeWeights::new(alpha, self.weights.z.clone())
    }

    /// Builds the configured graph at side length `n` (overriding `graph.n`).
    pub fn lattice_model(&self, kind: GraphKind, n: usize) -> Result<Model> {
        let d = self.d();
        let root_direction = self.graph.root_direction.unwrap_or(0);
        match kind {
            GraphKind::Torus => build_torus(TorusSpec { d, n, root_direction }),
            GraphKind::Box => build_box_graph(BoxGraphSpec {
                d,
                n,
                root_direction,
                special_alpha: self.weights.special_alpha.unwrap_or(1.0),
            }),
            GraphKind::General => Err(Error::Config("a lattice experiment needs kind = torus or box".into())),
        }
    }

    /// The configured model and weight system, with a root edge.
    pub fn model(&self) -> Result<(Model, WeightSystem, usize)> {
        match self.graph.kind {
            GraphKind::Torus | GraphKind::Box => {
                let model = self.lattice_model(self.graph.kind, self.graph.n.unwrap_or(4))?;
                let ws = self.lattice_weights()?.weight_system(&model)?;
                let root = model.lattice.as_ref().map_or(0, |l| l.root_edge);
                Ok((model, ws, root))
            }
            GraphKind::General => {
                let n = self.graph.vertices.ok_or_else(|| Error::Config("general graph needs `vertices`".into()))?;
                let edges: Vec<(usize, usize)> = self
                    .graph
                    .edges
                    .as_ref()
                    .ok_or_else(|| Error::Config("general graph needs `edges`".into()))?
                    .iter()
                    .map(|e| (e[0], e[1]))
                    .collect();
                let model = Model::from_edges(n, &edges)?;
                let alpha = self.weights.alpha.clone().unwrap_or_else(|| vec![1.0; model.n_edges()]);
                if alpha.len() != model.n_edges() {
                    return Err(Error::Config(format!(
                        "general alpha needs one entry per edge ({}), got {}",
                        model.n_edges(),
                        alpha.len()
                    )));
                }
                let mut z = vec![1.0; model.n_arcs()];
                for w in self.weights.arc_z.iter().flatten() {
                    let a = model
                        .arcs
                        .find_arc(w.from, w.to)
                        .ok_or_else(|| Error::Config(format!("({}, {}) is not an arc", w.from, w.to)))?;
                    z[a] = w.value;
                }
                let root = self.graph.root_edge.unwrap_or(0);
                if root >= model.n_edges() {
                    return Err(Error::Config(format!("root edge {root} out of range")));
                }
                let ws = WeightSystem::new(&model, alpha, z)?;
                Ok((model, ws, root))
            }
        }
    }

    /// `(alpha, beta, Z)` of a single simplex integral.
    pub fn phi_params(&self) -> Result<HypergeomParams> {
        let alpha = self.weights.alpha.clone().ok_or_else(|| Error::Config("phi needs weights.alpha".into()))?;
        let beta = self.weights.beta.clone().ok_or_else(|| Error::Config("phi needs weights.beta".into()))?;
        let z = self.weights.z.clone().ok_or_else(|| Error::Config("phi needs weights.z".into()))?;
        HypergeomParams::new(alpha, beta, z)
    }
}

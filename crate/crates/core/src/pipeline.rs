//! End-to-end run: hierarchy, per-layer partition and GAN, sum-up, stages,
//! and the run directory that records all of it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gan::{
    make_subgraph_batch, regenerate_layer, train_layer_gan, write_training_csv, GanConfig, GanModel,
    LayerReconstruction,
};
use crate::graph::generators::GeneratorSpec;
use crate::graph::io::{load_edge_list, write_edge_list};
use crate::graph::Graph;
use crate::hierarchy::{louvain_levels, HierarchyLevel};
use crate::partition::{partition_balanced, PartitionResult, DEFAULT_TOLERANCE};
use crate::reconstruct::{inter_edges, sum_up, InterEdgeMatrix, Reconstruction, SumUpConfig, SumUpParams};
use crate::report::{write_degree_csv, write_matrix_market, write_stages_csv};
use crate::sampling::SampleMethod;
use crate::stages::{identify_stages, stage_degree_distribution, Stage, DEFAULT_MAX_STAGES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Edge-list file; exclusive with `generator`.
    pub input: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    pub seed: u64,
    pub max_stages: usize,
    pub gan_iterations: usize,
    pub gan_learning_rate: f64,
    pub latent_dim: usize,
    pub gan_batch_size: Option<usize>,
    pub gan_instance_noise: f64,
    pub sumup_iterations: usize,
    pub sumup_learning_rate: f64,
    pub tolerance: f64,
    /// Also sample the input with each baseline method at stage 1's size.
    pub compare_sampling: bool,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Replace a non-empty output directory.
    #[serde(skip_serializing)]
    pub overwrite: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gan = GanConfig::default();
        let sumup = SumUpConfig::default();
        Self {
            input: None,
            generator: None,
            seed: 0,
            max_stages: DEFAULT_MAX_STAGES,
            gan_iterations: gan.iterations,
            gan_learning_rate: gan.learning_rate,
            latent_dim: gan.latent_dim,
            gan_batch_size: gan.batch_size,
            gan_instance_noise: gan.instance_noise,
            sumup_iterations: sumup.iterations,
            sumup_learning_rate: sumup.learning_rate,
            tolerance: DEFAULT_TOLERANCE,
            compare_sampling: false,
            out_dir: None,
            overwrite: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input.is_some() == self.generator.is_some() {
            return Err(Error::InvalidParameter(
                "exactly one of an input file or a generator must be given".into(),
            ));
        }
        if self.max_stages < 1 {
            return Err(Error::InvalidParameter("max_stages must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {} must be >= 0",
                self.tolerance
            )));
        }
        if !(self.sumup_learning_rate > 0.0 && self.sumup_learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sum-up learning rate {} must be positive",
                self.sumup_learning_rate
            )));
        }
        self.gan_config(0).validate()
    }

    fn gan_config(&self, seed: u64) -> GanConfig {
        GanConfig {
            latent_dim: self.latent_dim,
            iterations: self.gan_iterations,
            learning_rate: self.gan_learning_rate,
            batch_size: self.gan_batch_size,
            instance_noise: self.gan_instance_noise,
            seed,
        }
    }
}

/// Independent seed for one consumer of the run seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Clone, Debug)]
pub enum LayerOutcome {
    Trained {
        model: Box<GanModel>,
        reconstruction: LayerReconstruction,
    },
    /// GAN training diverged; the layer is left out of the sum-up.
    Excluded { reason: String },
}

#[derive(Clone, Debug)]
pub struct LayerArtifacts {
    /// Hierarchy level the layer was built from.
    pub level: usize,
    pub partition: PartitionResult,
    pub outcome: LayerOutcome,
}

impl LayerArtifacts {
    pub fn model(&self) -> Option<&GanModel> {
        match &self.outcome {
            LayerOutcome::Trained { model, .. } => Some(model),
            LayerOutcome::Excluded { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub communities: usize,
    pub modularity: f64,
    /// False when the level has one community or only singletons.
    pub used: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub level: usize,
    pub parts: usize,
    pub k: usize,
    pub cut_edges: usize,
    pub balance: f64,
    pub trained: bool,
    /// Sum-up weight of the layer's `G'`.
    pub weight: Option<f64>,
    pub final_d_loss: Option<f64>,
    pub final_g_loss: Option<f64>,
    pub initial_d_accuracy: Option<f64>,
    pub excluded_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumUpSummary {
    pub layer_weights: Vec<f64>,
    pub inter_weight: f64,
    pub bias: f64,
    pub final_loss: f64,
    pub literal_loss: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub cut_value: f64,
    pub edge_count: usize,
    pub non_isolated_nodes: usize,
    pub max_degree: usize,
    pub deleted_edge_pct: f64,
    /// L1 distance between the stage's and the input's normalized degree
    /// histograms.
    pub degree_l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubSummary {
    /// Highest-degree node of the input, lowest id on ties.
    pub node: usize,
    pub degree: usize,
    pub stage1_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub method: String,
    pub nodes: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingComparison {
    pub stage1: SampleSummary,
    pub samples: Vec<SampleSummary>,
}

/// Everything in `report.json`. Holds no timings, so equal runs give equal
/// reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub graph: GraphSummary,
    pub hierarchy: Vec<LevelSummary>,
    pub layers: Vec<LayerSummary>,
    pub inter_edge_count: usize,
    pub sumup: SumUpSummary,
    pub stages: Vec<StageSummary>,
    pub hub: HubSummary,
    pub sampling: Option<SamplingComparison>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub graph: Graph,
    pub levels: Vec<HierarchyLevel>,
    pub layers: Vec<LayerArtifacts>,
    pub inter_edges: InterEdgeMatrix,
    pub params: SumUpParams,
    pub reconstruction: Reconstruction,
    pub stages: Vec<Stage>,
    pub report: RunReport,
    /// Wall-clock seconds per phase, in execution order.
    pub timings: Vec<(String, f64)>,
}

struct Phases(Vec<(String, f64)>);

impl Phases {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_phase(name));
        let secs = start.elapsed().as_secs_f64();
        info!("{name}: {secs:.2}s");
        self.0.push((name.to_string(), secs));
        out
    }
}

fn load_input(cfg: &RunConfig) -> Result<(Graph, GraphSummary)> {
    let (graph, self_loops_dropped, duplicate_edges) = match (&cfg.input, &cfg.generator) {
        (Some(path), None) => {
            let loaded = load_edge_list(path, false)?;
            (loaded.graph, loaded.self_loops_dropped, loaded.duplicate_edges)
        }
        (None, Some(spec)) => (spec.generate(cfg.seed)?, 0, 0),
        _ => unreachable!("validated"),
    };
    if graph.edge_count() == 0 {
        return Err(Error::Degenerate(
            "the input graph has no edges; there is nothing to learn or stage".into(),
        ));
    }
    let summary = GraphSummary {
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        self_loops_dropped,
        duplicate_edges,
    };
    Ok((graph, summary))
}

fn stage_summary(stage: &Stage, g: &Graph) -> StageSummary {
    let graph = stage.to_graph();
    StageSummary {
        index: stage.index,
        cut_value: stage.cut_value,
        edge_count: stage.edge_count(),
        non_isolated_nodes: graph.non_isolated_count(),
        max_degree: graph.max_degree(),
        deleted_edge_pct: stage.deleted_edge_pct,
        degree_l1: stage_degree_distribution(stage).l1_distance(&g.degree_distribution()),
    }
}

/// Runs every phase in memory. Nothing is written to disk.
pub fn execute(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut phases = Phases(Vec::new());
    let mut warnings = Vec::new();

    let (g, graph_summary) = phases.run("input", || load_input(cfg))?;
    let n = g.node_count();
    info!("input: {} nodes, {} edges", n, g.edge_count());

    let levels = phases.run("hierarchy", || louvain_levels(&g, derive_seed(cfg.seed, 1)))?;
    let usable = |l: &HierarchyLevel| l.community_count > 1 && l.community_count < n;
    let hierarchy: Vec<LevelSummary> = levels
        .iter()
        .map(|l| LevelSummary {
            level: l.level,
            communities: l.community_count,
            modularity: l.modularity,
            used: usable(l),
        })
        .collect();
    let used: Vec<&HierarchyLevel> = levels.iter().filter(|l| usable(l)).collect();
    if used.is_empty() {
        return Err(Error::Degenerate(
            "every hierarchy level has a single community or only singletons, so no layer can be built; \
             the graph may be too small or too uniform"
                .into(),
        )
        .in_phase("hierarchy"));
    }
    if used.len() == 1 {
        let msg = "only one usable hierarchy layer; the reconstruction rests on a single GAN".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut layers = Vec::with_capacity(used.len());
    for level in used {
        let id = level.level;
        let m = level.community_count;
        let partition = phases.run("partition", || {
            partition_balanced(&g, m, cfg.tolerance, derive_seed(cfg.seed, 100 + id as u64))
        })?;
        let batch = phases.run("partition", || make_subgraph_batch(&g, &partition, id))?;
        info!("layer {id}: {m} parts of padded size {}", batch.k);
        let trained = phases.run("layer-gan", || {
            match train_layer_gan(&batch, &cfg.gan_config(derive_seed(cfg.seed, 200 + id as u64))) {
                Ok(model) => Ok(Ok(model)),
                Err(e @ Error::Diverged { .. }) => Ok(Err(e.to_string())),
                Err(e) => Err(e),
            }
        })?;
        let outcome = match trained {
            Ok(model) => {
                let reconstruction = phases.run("regenerate", || {
                    regenerate_layer(&model, &batch, n, derive_seed(cfg.seed, 300 + id as u64))
                })?;
                LayerOutcome::Trained {
                    model: Box::new(model),
                    reconstruction,
                }
            }
            Err(reason) => {
                let msg = format!("layer {id} excluded from the sum-up: {reason}");
                warn!("{msg}");
                warnings.push(msg);
                LayerOutcome::Excluded { reason }
            }
        };
        layers.push(LayerArtifacts {
            level: id,
            partition,
            outcome,
        });
    }

    let trained: Vec<&LayerArtifacts> = layers.iter().filter(|l| l.model().is_some()).collect();
    if trained.is_empty() {
        return Err(Error::Degenerate(
            "GAN training diverged on every layer; try a lower --gan-lr or fewer iterations".into(),
        )
        .in_phase("layer-gan"));
    }
    let partitions: Vec<PartitionResult> = trained.iter().map(|l| l.partition.clone()).collect();
    let reconstructions: Vec<LayerReconstruction> = trained
        .iter()
        .map(|l| match &l.outcome {
            LayerOutcome::Trained { reconstruction, .. } => reconstruction.clone(),
            LayerOutcome::Excluded { .. } => unreachable!("filtered"),
        })
        .collect();
    let e = phases.run("inter-edges", || inter_edges(&g, &partitions))?;
    let sumup_cfg = SumUpConfig {
        iterations: cfg.sumup_iterations,
        learning_rate: cfg.sumup_learning_rate,
        ..SumUpConfig::default()
    };
    let (params, reconstruction) = phases.run("sum-up", || sum_up(&reconstructions, &e, &g, &sumup_cfg))?;
    let stages = phases.run("stages", || identify_stages(&reconstruction.re_g, &g, cfg.max_stages))?;
    if stages.len() < 2 {
        let msg = format!(
            "only {} stage(s); the reconstruction weights original edges almost uniformly",
            stages.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let stage_summaries: Vec<StageSummary> = stages.iter().map(|s| stage_summary(s, &g)).collect();
    let hub_node = (0..n)
        .max_by_key(|&u| (g.degree(u), std::cmp::Reverse(u)))
        .expect("graph has nodes");
    let stage1 = stages[0].to_graph();
    let hub = HubSummary {
        node: hub_node,
        degree: g.degree(hub_node),
        stage1_degree: stage1.degree(hub_node),
    };

    let sampling = if cfg.compare_sampling {
        Some(phases.run("sampling", || compare_sampling(&g, &stage1, cfg.seed))?)
    } else {
        None
    };

    let mut weights = params.layer_weights.iter();
    let layer_summaries = layers
        .iter()
        .map(|l| {
            let model = l.model();
            let last = model.and_then(|m| m.history.last());
            LayerSummary {
                level: l.level,
                parts: l.partition.parts.len(),
                k: crate::gan::padded_side(l.partition.max_part_size()),
                cut_edges: l.partition.cut_edges,
                balance: l.partition.balance,
                trained: model.is_some(),
                weight: model.map(|_| *weights.next().expect("one weight per trained layer")),
                final_d_loss: last.map(|h| h.d_loss),
                final_g_loss: last.map(|h| h.g_loss),
                initial_d_accuracy: model.map(|m| m.initial_d_accuracy),
                excluded_reason: match &l.outcome {
                    LayerOutcome::Excluded { reason } => Some(reason.clone()),
                    LayerOutcome::Trained { .. } => None,
                },
            }
        })
        .collect();

    let report = RunReport {
        // run-location settings are not part of the result
        config: RunConfig {
            out_dir: None,
            overwrite: false,
            ..cfg.clone()
        },
        graph: graph_summary,
        hierarchy,
        layers: layer_summaries,
        inter_edge_count: e.edges().len(),
        sumup: SumUpSummary {
            layer_weights: params.layer_weights.clone(),
            inter_weight: params.inter_weight,
            bias: params.bias,
            final_loss: reconstruction.final_loss,
            literal_loss: reconstruction.literal_loss,
            iterations: cfg.sumup_iterations,
        },
        stages: stage_summaries,
        hub,
        sampling,
        warnings,
    };
    Ok(RunArtifacts {
        graph: g,
        levels,
        layers,
        inter_edges: e,
        params,
        reconstruction,
        stages,
        report,
        timings: phases.0,
    })
}

/// Samples `g` with every baseline method at the size of stage 1's
/// non-isolated node set.
pub fn compare_sampling(g: &Graph, stage1: &Graph, seed: u64) -> Result<SamplingComparison> {
    let n = stage1.non_isolated_count();
    let samples = SampleMethod::ALL
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let r = m.sample(g, n, derive_seed(seed, 400 + j as u64))?;
            Ok(SampleSummary {
                method: m.name().to_string(),
                nodes: r.nodes.len(),
                edges: r.subgraph.edge_count(),
                max_degree: r.subgraph.max_degree(),
                partial: r.partial,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplingComparison {
        stage1: SampleSummary {
            method: "gti_stage_1".into(),
            nodes: n,
            edges: stage1.edge_count(),
            max_degree: stage1.max_degree(),
            partial: false,
        },
        samples,
    })
}

/// `method,nodes,edges,max_degree,stage1_nodes,stage1_edges,stage1_max_degree`.
pub fn write_sampling_csv(c: &SamplingComparison, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "method,nodes,edges,max_degree,stage1_nodes,stage1_edges,stage1_max_degree"
    )?;
    for s in &c.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.method, s.nodes, s.edges, s.max_degree, c.stage1.nodes, c.stage1.edges, c.stage1.max_degree
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub config: RunConfig,
    pub timings: Vec<(String, f64)>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects file contents and writes them under one directory, hashing each.
struct RunWriter {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl RunWriter {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(ManifestEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn text(&mut self, rel: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| Error::io(self.dir.join(rel), e))?;
        self.put(rel, &buf)
    }

    fn json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.put(rel, &buf)
    }
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            if !overwrite {
                return Err(Error::InvalidParameter(format!(
                    "output directory {} is not empty; choose another or allow overwriting",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

impl RunArtifacts {
    /// Writes the run directory and returns its manifest, which lists every
    /// other file in it.
    pub fn write(&self, dir: &Path, overwrite: bool) -> Result<Manifest> {
        let start = Instant::now();
        prepare_dir(dir, overwrite).map_err(|e| e.in_phase("write"))?;
        let mut w = RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        };
        self.write_files(&mut w).map_err(|e| e.in_phase("write"))?;
        let mut timings = self.timings.clone();
        timings.push(("write".into(), start.elapsed().as_secs_f64()));
        let manifest = Manifest {
            tool: "gti".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: self.report.config.clone(),
            timings,
            files: w.files,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest)?;
        buf.push(b'\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, buf).map_err(|e| Error::io(&path, e).in_phase("write"))?;
        Ok(manifest)
    }

    fn write_files(&self, w: &mut RunWriter) -> Result<()> {
        w.text("input.txt", |b| write_edge_list(&self.graph, b))?;
        w.json("hierarchy.json", &self.levels)?;
        for l in &self.layers {
            let id = l.level;
            w.json(&format!("layer_{id}_partition.json"), &l.partition)?;
            if let LayerOutcome::Trained { model, reconstruction } = &l.outcome {
                let mut ckpt = Vec::new();
                gti_nn::checkpoint::write_tensors(&mut ckpt, &model.named_tensors())?;
                w.put(&format!("layer_{id}.ckpt"), &ckpt)?;
                w.text(&format!("layer_{id}_training.csv"), |b| {
                    write_training_csv(&model.history, b)
                })?;
                w.text(&format!("layer_{id}_gprime.mtx"), |b| {
                    write_matrix_market(&reconstruction.g_prime, b)
                })?;
            }
        }
        w.text("reconstruction.mtx", |b| {
            write_matrix_market(&self.reconstruction.re_g, b)
        })?;
        w.json(
            "sumup.json",
            &serde_json::json!({
                "layer_weights": self.params.layer_weights,
                "inter_weight": self.params.inter_weight,
                "bias": self.params.bias,
                "final_loss": self.reconstruction.final_loss,
                "literal_loss": self.reconstruction.literal_loss,
                "loss_history": self.reconstruction.loss_history,
            }),
        )?;
        for s in &self.stages {
            w.text(&format!("stages/stage_{}.txt", s.index), |b| {
                write_edge_list(&s.to_graph(), b)
            })?;
        }
        w.text("stages.csv", |b| write_stages_csv(&self.stages, b))?;
        w.text("degree_distribution.csv", |b| {
            write_degree_csv(&self.graph, &self.stages, b)
        })?;
        if let Some(c) = &self.report.sampling {
            w.text("sampling_comparison.csv", |b| write_sampling_csv(c, b))?;
        }
        w.json("report.json", &self.report)
    }
}

/// [`execute`] followed by writing the run directory named in the config.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(RunArtifacts, Manifest)> {
    let dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidParameter("no output directory configured".into()))?;
    let artifacts = execute(cfg)?;
    let manifest = artifacts.write(&dir, cfg.overwrite)?;
    Ok((artifacts, manifest))
}

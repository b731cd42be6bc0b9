use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gti_core::graph::generators::{standard_initiator, GeneratorSpec};
use gti_core::graph::io::{load_edge_list, save_edge_list};
use gti_core::graph::Graph;
use gti_core::pipeline::{run_pipeline, RunConfig, RunReport};
use gti_core::report::{load_matrix_market, write_dot, write_stages_csv};
use gti_core::sampling::{forest_fire_sample, random_jump_sample, random_walk_sample, SampleMethod};
use gti_core::sampling::{DEFAULT_BURN_PROB, DEFAULT_JUMP_PROB, DEFAULT_RESTART_PROB};
use gti_core::stages::identify_stages;

/// Graph topology interpolation: learn per-layer generators over a
/// community hierarchy and cut the fused reconstruction into edge stages.
#[derive(Parser)]
#[command(name = "gti", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random graph as an edge list.
    Generate(GenerateArgs),
    /// Run the full pipeline and write a run directory.
    Run(RunArgs),
    /// Recompute stages from a run directory's reconstruction.
    Stages(StagesArgs),
    /// Sample a graph with a baseline sampler.
    Sample(SampleArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Er,
    Ba,
    Ws,
    Kron,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Node count; for kron, rounded up to the next power of two unless
    /// --power is given.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Row-major initiator, rows separated by ';', e.g. "0.9,0.5;0.5,0.3".
    #[arg(long)]
    initiator: Option<String>,
    #[arg(long)]
    power: Option<u32>,
    /// Keep Kronecker nodes that received no edges.
    #[arg(long)]
    keep_isolated: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_stages: Option<usize>,
    #[arg(long)]
    gan_iters: Option<usize>,
    #[arg(long)]
    gan_lr: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    gan_batch: Option<usize>,
    #[arg(long)]
    sumup_iters: Option<usize>,
    #[arg(long)]
    sumup_lr: Option<f64>,
    /// Allowed part-size excess over N/M in the balanced partitions.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write a comparison against the baseline samplers.
    #[arg(long)]
    compare_sampling: bool,
    /// Replace the output directory if it is not empty.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct StagesArgs {
    /// Run directory holding input.txt and reconstruction.mtx.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = gti_core::stages::DEFAULT_MAX_STAGES)]
    max_stages: usize,
    /// Write stage edge lists and stages.csv here (must not exist or be
    /// empty).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// rw, rj or ff.
    #[arg(long)]
    method: SampleMethod,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restart, jump or burn probability; the method's default if omitted.
    #[arg(long)]
    prob: Option<f64>,
    /// Writes <out>_nodes.txt and <out>_edges.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Print the degree distribution table.
    #[arg(long)]
    degree_csv: bool,
    /// Print a DOT drawing with these comma-separated node ids (or "hub")
    /// highlighted.
    #[arg(long)]
    dot: Option<String>,
    /// Stage to draw with --dot; 0 draws the input graph.
    #[arg(long, default_value_t = 0)]
    stage: usize,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let need_nodes = || a.nodes.context("--nodes is required for this model");
    let spec = match a.model {
        Model::Er => GeneratorSpec::Er {
            nodes: need_nodes()?,
            p: a.p.context("--p is required for er")?,
        },
        Model::Ba => GeneratorSpec::Ba {
            nodes: need_nodes()?,
            m: a.m.context("--m is required for ba")?,
        },
        Model::Ws => GeneratorSpec::Ws {
            nodes: need_nodes()?,
            k: a.k.context("--k is required for ws")?,
            beta: a.beta.context("--beta is required for ws")?,
        },
        Model::Kron => {
            let initiator = match &a.initiator {
                Some(s) => parse_initiator(s)?,
                None => standard_initiator(),
            };
            let power = match (a.power, a.nodes) {
                (Some(p), _) => p,
                (None, Some(n)) => {
                    let side = initiator.len().max(2);
                    let mut p = 0;
                    while side.pow(p) < n {
                        p += 1;
                    }
                    p
                }
                (None, None) => bail!("kron needs --power or --nodes"),
            };
            GeneratorSpec::Kron {
                initiator,
                power,
                drop_isolated: !a.keep_isolated,
            }
        }
    };
    let g = spec.generate(a.seed)?;
    save_edge_list(&g, &a.out)?;
    println!(
        "{} nodes, {} edges -> {}",
        g.node_count(),
        g.edge_count(),
        a.out.display()
    );
    Ok(())
}

fn parse_initiator(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad initiator entry {x:?}"))
                })
                .collect()
        })
        .collect()
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<RunConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(input) = a.input {
        cfg.input = Some(input);
        cfg.generator = None;
    }
    if let Some(out) = a.out {
        cfg.out_dir = Some(out);
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(seed => seed, max_stages => max_stages, gan_iters => gan_iterations, gan_lr => gan_learning_rate,
         latent_dim => latent_dim, sumup_iters => sumup_iterations, sumup_lr => sumup_learning_rate,
         tolerance => tolerance);
    if a.gan_batch.is_some() {
        cfg.gan_batch_size = a.gan_batch;
    }
    cfg.compare_sampling |= a.compare_sampling;
    cfg.overwrite |= a.force;
    if cfg.out_dir.is_none() {
        bail!("an output directory is required (--out)");
    }
    let (artifacts, manifest) = run_pipeline(&cfg)?;
    let dir = cfg.out_dir.as_ref().expect("checked");
    print_summary(&artifacts.report);
    println!("{} files written to {}", manifest.files.len() + 1, dir.display());
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!("graph: {} nodes, {} edges", r.graph.nodes, r.graph.edges);
    for l in &r.layers {
        match l.weight {
            Some(w) => println!("layer {}: {} parts, k = {}, weight {w:.4}", l.level, l.parts, l.k),
            None => println!("layer {}: {} parts, excluded", l.level, l.parts),
        }
    }
    println!(
        "sum-up: inter weight {:.4}, bias {:.4}, loss {:.6}",
        r.sumup.inter_weight, r.sumup.bias, r.sumup.final_loss
    );
    println!("stage  cut_value  edges  nodes  max_degree  deleted_pct");
    for s in &r.stages {
        println!(
            "{:>5}  {:>9.3}  {:>5}  {:>5}  {:>10}  {:>11.2}",
            s.index, s.cut_value, s.edge_count, s.non_isolated_nodes, s.max_degree, s.deleted_edge_pct
        );
    }
    if let Some(c) = &r.sampling {
        println!("sampling at n = {}:", c.stage1.nodes);
        for s in std::iter::once(&c.stage1).chain(&c.samples) {
            println!(
                "  {:<12} edges {:>5}  max_degree {:>4}",
                s.method, s.edges, s.max_degree
            );
        }
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

fn load_run_graph(dir: &Path) -> Result<Graph> {
    Ok(load_edge_list(&dir.join("input.txt"), false)?.graph)
}

fn stages(a: StagesArgs) -> Result<()> {
    let g = load_run_graph(&a.dir)?;
    let re_g = load_matrix_market(&a.dir.join("reconstruction.mtx"))?;
    let stages = identify_stages(&re_g, &g, a.max_stages)?;
    let mut out = io::stdout().lock();
    write_stages_csv(&stages, &mut out)?;
    if let Some(dir) = a.out {
        if dir.exists() && fs::read_dir(&dir)?.next().is_some() {
            bail!("{} is not empty", dir.display());
        }
        fs::create_dir_all(&dir)?;
        for s in &stages {
            save_edge_list(&s.to_graph(), &dir.join(format!("stage_{}.txt", s.index)))?;
        }
        let mut csv = Vec::new();
        write_stages_csv(&stages, &mut csv)?;
        fs::write(dir.join("stages.csv"), csv)?;
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let g = load_edge_list(&a.input, false)?.graph;
    let r = match a.method {
        SampleMethod::RandomWalk => random_walk_sample(&g, a.nodes, a.prob.unwrap_or(DEFAULT_RESTART_PROB), a.seed)?,
        SampleMethod::RandomJump => random_jump_sample(&g, a.nodes, a.prob.unwrap_or(DEFAULT_JUMP_PROB), a.seed)?,
        SampleMethod::ForestFire => forest_fire_sample(&g, a.nodes, a.prob.unwrap_or(DEFAULT_BURN_PROB), a.seed)?,
    };
    println!(
        "{}: {} nodes, {} edges, max degree {}{}",
        r.method,
        r.nodes.len(),
        r.subgraph.edge_count(),
        r.subgraph.max_degree(),
        if r.partial { " (partial coverage)" } else { "" }
    );
    if let Some(prefix) = a.out {
        let with_suffix = |s: &str| {
            let mut name = prefix.clone().into_os_string();
            name.push(s);
            PathBuf::from(name)
        };
        let nodes: String = r.nodes.iter().map(|u| format!("{u}\n")).collect();
        fs::write(with_suffix("_nodes.txt"), nodes)?;
        let mut edges = format!("# Nodes: {} Edges: {}\n", r.nodes.len(), r.subgraph.edge_count());
        for (u, v) in r.subgraph.edges() {
            edges.push_str(&format!("{}\t{}\n", r.nodes[u], r.nodes[v]));
        }
        fs::write(with_suffix("_edges.txt"), edges)?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let path = a.dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let r: RunReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let summary_only = !a.degree_csv && a.dot.is_none();
    let mut out = io::stdout().lock();
    if a.degree_csv {
        out.write_all(&fs::read(a.dir.join("degree_distribution.csv"))?)?;
    }
    if let Some(spec) = a.dot {
        let g = if a.stage == 0 {
            load_run_graph(&a.dir)?
        } else {
            let stage = a.dir.join("stages").join(format!("stage_{}.txt", a.stage));
            load_edge_list(&stage, false)
                .with_context(|| format!("no stage {}", a.stage))?
                .graph
        };
        let highlight: BTreeSet<usize> = if spec == "hub" {
            BTreeSet::from([r.hub.node])
        } else {
            spec.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad node id {s:?}")))
                .collect::<Result<_>>()?
        };
        write_dot(&g, None, &highlight, &mut out)?;
    }
    if summary_only {
        print_summary(&r);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Stages(a) => stages(a),
        Command::Sample(a) => sample(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::json;

use rdpg::error::{RdpgError, Result};
use rdpg::experiments::{run_celegans, run_power, write_power_csv, write_samples_csv, Scenario, ScenarioConfig};
use rdpg::graph::{
    dcsbm_latent_positions, sample_assignments, sample_rdpg, sbm_latent_positions, uniform_degree_corrections,
    BlockModelSpec,
};
use rdpg::io::{read_edge_list, write_edge_list, write_latent_csv};
use rdpg::rng::{derive_seed, entropy_seed};
use rdpg::spectral::{ase, check_graph_assumption1, dimension_select, Assumption1Thresholds};
use rdpg::testing::{two_sample_test, ErrorScale, Method, TestConfig, TestKind, TestResult, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "rdpgtest", version, about = "Two-sample tests for random dot product graphs")]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a (degree-corrected) stochastic blockmodel graph.
    Generate(GenerateArgs),
    /// Adjacency spectral embedding of an edge list.
    Embed(EmbedArgs),
    /// Pick an embedding dimension from the scree plot.
    Dimselect(DimselectArgs),
    /// Two-sample test between two graphs on the same vertices.
    Test(TestArgs),
    /// Monte Carlo power study.
    Power(PowerArgs),
    /// Scaling test between the C. elegans chemical and gap-junction connectomes.
    Celegans(CelegansArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Block probability matrix, rows separated by ';'.
    #[arg(long, value_parser = parse_matrix)]
    sbm_b: DMatrix<f64>,
    /// Block membership probabilities.
    #[arg(long, value_delimiter = ',', required = true)]
    pi: Vec<f64>,
    /// Degree corrections, e.g. `uniform:0.2,1.0`.
    #[arg(long, value_parser = parse_uniform)]
    degree_corrections: Option<(f64, f64)>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generating latent positions.
    #[arg(long)]
    latent_out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    dim: usize,
    /// Write the embedding as latent CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DimselectArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_d: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    graph_a: PathBuf,
    #[arg(long)]
    graph_b: PathBuf,
    #[arg(long, default_value = "identity", value_parser = parse_kind)]
    kind: TestKind,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value = "theoretical", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    bs: u64,
    /// Vertex blocks for the subgraph bootstrap.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    blocks: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Rejection threshold C > 1 for the theoretical method.
    #[arg(long, default_value_t = rdpg::testing::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Use C(X̂) instead of √(d/γ₂) in the denominator.
    #[arg(long)]
    noise_constant: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    bs: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Override the scenario's vertex counts.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Override the scenario's ε / n₃ / pair list.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-replicate statistics.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Args)]
struct CelegansArgs {
    #[arg(long)]
    chem: PathBuf,
    #[arg(long)]
    gap: PathBuf,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    bs: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|f| f.trim().parse::<f64>().map_err(|_| format!("invalid number {f:?}"))).collect()
}

fn parse_matrix(s: &str) -> std::result::Result<DMatrix<f64>, String> {
    let rows = s.split(';').map(parse_vector).collect::<std::result::Result<Vec<_>, _>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(format!(
            "expected a square matrix, got {k} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        ));
    }
    Ok(DMatrix::from_row_iterator(k, k, rows.into_iter().flatten()))
}

fn parse_uniform(s: &str) -> std::result::Result<(f64, f64), String> {
    let range = s.strip_prefix("uniform:").ok_or("expected uniform:<lo>,<hi>")?;
    match parse_vector(range)?.as_slice() {
        &[lo, hi] if 0.0 < lo && lo <= hi => Ok((lo, hi)),
        _ => Err(format!("invalid range {range:?}")),
    }
}

fn parse_kind(s: &str) -> std::result::Result<TestKind, String> {
    s.parse().map_err(|e: RdpgError| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: RdpgError| e.to_string())
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: RdpgError| e.to_string())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = entropy_seed();
        eprintln!("seed: {s}");
        s
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| RdpgError::Io { path: path.to_path_buf(), source })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json");
    std::fs::write(path, text + "\n").map_err(|source| RdpgError::Io { path: path.to_path_buf(), source })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let tau = sample_assignments(&args.pi, args.n, derive_seed(seed, 0))?;
    let spec = BlockModelSpec::with_probabilities(args.sbm_b, args.pi)?;
    let x = match args.degree_corrections {
        Some((lo, hi)) => {
            let c = uniform_degree_corrections(args.n, lo, hi, derive_seed(seed, 1));
            dcsbm_latent_positions(&spec.with_degree_corrections(c)?, &tau)?
        }
        None => sbm_latent_positions(&spec, &tau)?,
    };
    let g = sample_rdpg(&x, derive_seed(seed, 2))?;
    write_edge_list(&g, &args.out)?;
    if let Some(path) = &args.latent_out {
        write_latent_csv(&x, path)?;
    }
    println!("wrote {} vertices, {} edges to {}", g.n(), g.edge_count(), args.out.display());
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<()> {
    let g = read_edge_list(&args.graph)?.graph;
    let emb = ase(&g, args.dim)?;
    if let Some(path) = &args.out {
        write_latent_csv(emb.xhat(), path)?;
    }
    let report = check_graph_assumption1(&g, args.dim, Assumption1Thresholds::default())?;
    let diag = emb.diagnostics();
    if args.json {
        let mut value = diag.to_json();
        value["schema_version"] = json!(SCHEMA_VERSION);
        value["eigenvalues"] = json!(emb.eigenvalues());
        value["assumption1"] = json!(report.holds());
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    } else {
        println!("n = {}, d = {}", diag.n, diag.d);
        println!("eigenvalues: {:?}", emb.eigenvalues());
        println!("delta = {:.4}, gamma1 = {:.6}, gamma2 = {:.6}", diag.delta, diag.gamma1, diag.gamma2);
        println!("assumption 1 {}", if report.holds() { "holds" } else { "fails" });
    }
    Ok(())
}

fn dimselect(args: DimselectArgs) -> Result<()> {
    let g = read_edge_list(&args.graph)?.graph;
    let max_d = args.max_d.min(g.n().saturating_sub(1)).max(1);
    let emb = ase(&g, max_d)?;
    let spectrum = &emb.diagnostics().sigma;
    let d = dimension_select(spectrum, max_d);
    if args.json {
        let value = json!({ "schema_version": SCHEMA_VERSION, "d": d, "spectrum": spectrum });
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    } else {
        println!("{d}");
    }
    Ok(())
}

fn print_result(r: &TestResult) {
    println!("{} test, {} method, d = {}", r.kind.name(), r.method.name(), r.d);
    println!("statistic = {:.6} ({:.6} / {:.6})", r.statistic, r.numerator, r.denominator);
    if let Some(p) = r.p_value {
        println!("p-value = {p:.6}");
    }
    if let Some(rej) = r.rejected {
        println!("{}", if rej { "reject H0" } else { "do not reject H0" });
    }
}

fn test(args: TestArgs) -> Result<()> {
    let seed = match args.method {
        Method::Theoretical => args.seed.unwrap_or(0),
        _ => resolve_seed(args.seed),
    };
    let a = read_edge_list(&args.graph_a)?.graph;
    let b = read_edge_list(&args.graph_b)?.graph;
    let cfg = TestConfig {
        method: args.method,
        bs: args.bs as usize,
        blocks: args.blocks as usize,
        alpha: args.alpha,
        threshold: args.threshold,
        seed,
        scale: if args.noise_constant { ErrorScale::NoiseConstant } else { ErrorScale::Eigengap },
        ..TestConfig::default()
    };
    let result = two_sample_test(&a, &b, args.kind, args.dim, &cfg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result).expect("json"));
    } else {
        print_result(&result);
    }
    Ok(())
}

fn power(args: PowerArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::new(args.scenario);
    cfg.replicates = args.reps as usize;
    cfg.bs = args.bs as usize;
    cfg.alpha = args.alpha;
    cfg.seed = resolve_seed(args.seed);
    cfg.d = args.dim;
    if let Some(n) = args.n {
        cfg.ns = n;
    }
    if let Some(p) = args.params {
        cfg.params = p;
    }
    cfg.validate()?;
    let run = run_power(&cfg)?;
    write_power_csv(&run.cells, create(&args.out)?)
        .map_err(|source| RdpgError::Io { path: args.out.clone(), source })?;
    if let Some(path) = &args.samples_out {
        write_samples_csv(&run.samples, create(path)?)
            .map_err(|source| RdpgError::Io { path: path.clone(), source })?;
    }
    let mut sidecar = args.out.clone().into_os_string();
    sidecar.push(".json");
    let config = serde_json::to_value(&cfg).expect("config serializes");
    write_json(Path::new(&sidecar), &json!({ "schema_version": SCHEMA_VERSION, "config": config }))?;
    for c in &run.cells {
        println!("n={:<5} param={:<5} {:<11} power={:.3} (se {:.3})", c.n, c.epsilon, c.method.name(), c.power, c.se);
    }
    Ok(())
}

fn celegans(args: CelegansArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let report = run_celegans(&args.chem, &args.gap, args.dim, args.bs as usize, seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    } else {
        println!(
            "{} vertices; {} chemical and {} gap-junction edges",
            report.vertices, report.chemical_edges, report.gap_edges
        );
        print_result(&report.result);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Embed(a) => embed(a),
        Command::Dimselect(a) => dimselect(a),
        Command::Test(a) => test(a),
        Command::Power(a) => power(a),
        Command::Celegans(a) => celegans(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (RdpgError::InvalidConfig(_) | RdpgError::InvalidThreshold(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

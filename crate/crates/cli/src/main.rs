use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tfem_core::analysis::{
    estimate_broken_bh_constant, kinked_function, markdown_tables, run_experiment,
    run_verification, solve_level, ConvergenceReport, ExactSolution, ExperimentConfig,
    VerifyOptions,
};
use tfem_core::assembly::DataApproximation;
use tfem_core::geometry::builtin::Geometry;
use tfem_core::geometry::SmoothFunction;
use tfem_core::mesh::{read_mesh, write_mesh};
use tfem_core::solver::{CgOptions, PreconditionerKind};

#[derive(Parser)]
#[command(
    name = "tfem",
    version,
    about = "Finite elements on curved domains via polyhedral pullback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence experiment and print its table.
    Run(RunArgs),
    /// Compare broken and conforming best-approximation errors across levels.
    BhRatio(BhArgs),
    /// Emit, refine or validate a mesh file.
    Mesh(MeshArgs),
    /// Check the pullback identities and the structural invariants.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataApprox {
    /// Cellwise L² projection.
    L2,
    /// Nodal interpolation at the Lagrange points.
    Nodal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precond {
    Jacobi,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestFunction {
    /// The exact solution of the geometry's problem, pulled back.
    Solution,
    /// |x| e^y, with a gradient jump across x = 0.
    Kinked,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment geometry: anulus or ball-quadrant.
    #[arg(long, default_value = "anulus", value_parser = parse_geometry)]
    experiment: Geometry,
    /// Polynomial degree(s), comma separated, each in 1..=4.
    #[arg(long, default_value = "2", value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=4))]
    degree: Vec<u8>,
    /// Finest refinement level; levels 0..=LEVELS are run.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(0..=7))]
    levels: u8,
    /// Degree of the coefficient and data approximation [default: the element degree].
    #[arg(long)]
    data_degree: Option<usize>,
    /// How coefficient and data are approximated.
    #[arg(long, value_enum, default_value_t = DataApprox::L2)]
    data_approx: DataApprox,
    /// Evaluate the pulled-back coefficient and data exactly at quadrature points.
    #[arg(long, default_value_t = false)]
    exact_data: bool,
    /// Assembly quadrature degree [default: 2r + 2].
    #[arg(long)]
    quad_degree: Option<usize>,
    /// Error quadrature degree [default: 2r + 6].
    #[arg(long)]
    error_quad_degree: Option<usize>,
    /// Relative residual tolerance of conjugate gradients.
    #[arg(long, default_value = "1e-12")]
    tol: f64,
    /// Conjugate gradient iteration cap [default: 50·sqrt(N) + 1000].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Conjugate gradient preconditioner.
    #[arg(long, value_enum, default_value_t = Precond::Jacobi)]
    precond: Precond,
    /// Row-parallel matrix-vector products inside conjugate gradients.
    #[arg(long, default_value_t = false)]
    parallel_matvec: bool,
    /// Number of levels solved concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Output format: full-precision CSV or Markdown tables.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the finest-level stiffness matrix of the first degree in MatrixMarket format.
    #[arg(long)]
    export_matrix: Option<PathBuf>,
}

#[derive(Args)]
struct BhArgs {
    /// Geometry: anulus or ball-quadrant.
    #[arg(long, default_value = "anulus", value_parser = parse_geometry)]
    geometry: Geometry,
    /// Polynomial degree(s), comma separated.
    #[arg(long, default_value = "1,2,3,4", value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=4))]
    degree: Vec<u8>,
    /// Finest level; levels 0..=LEVELS are compared.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(0..=6))]
    levels: u8,
    /// Function whose best approximations are compared.
    #[arg(long, value_enum, default_value_t = TestFunction::Solution)]
    function: TestFunction,
    /// Quadrature degree [default: 2r + 6].
    #[arg(long)]
    quad_degree: Option<usize>,
    /// Output file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    /// Start from the initial mesh of a built-in geometry.
    #[arg(long, value_parser = parse_geometry, conflicts_with = "input", required_unless_present = "input")]
    geometry: Option<Geometry>,
    /// Start from a mesh file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Uniform refinements to apply.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=8))]
    refine: u8,
    /// Output file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Mesh level for the pullback identities.
    #[arg(long, default_value_t = 3)]
    level: usize,
    /// Quadrature degree for the pullback identities.
    #[arg(long, default_value_t = 12)]
    quad_degree: usize,
    /// Number of random test-function pairs.
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    /// Seed for the test-function generator.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn parse_geometry(s: &str) -> Result<Geometry, String> {
    s.parse()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| format!("cannot write output: {e}")),
    }
}

fn run(args: RunArgs) -> Result<(), String> {
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    for &r in &args.degree {
        let mut config = ExperimentConfig::new(args.experiment, r as usize, args.levels as usize);
        config.data_degree = args.data_degree;
        config.data_approximation = match args.data_approx {
            DataApprox::Nodal => DataApproximation::Nodal,
            DataApprox::L2 => DataApproximation::L2Projection,
        };
        config.exact_data = args.exact_data;
        config.quad_degree = args.quad_degree;
        config.error_quad_degree = args.error_quad_degree;
        config.solver = CgOptions {
            tol: args.tol,
            max_iter: args.max_iter,
            preconditioner: match args.precond {
                Precond::Jacobi => PreconditionerKind::Jacobi,
                Precond::None => PreconditionerKind::None,
            },
            parallel: args.parallel_matvec,
        };
        config.jobs = args.jobs as usize;
        if let (Some(path), true) = (&args.export_matrix, reports.is_empty()) {
            let level = solve_level(&config, config.levels).map_err(|e| e.to_string())?;
            let file = fs::File::create(path)
                .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
            level
                .system
                .matrix
                .write_matrix_market(io::BufWriter::new(file))
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        }
        reports.push(run_experiment(&config).map_err(|e| e.to_string())?);
    }
    let text = match args.format {
        Format::Md => markdown_tables(&reports),
        Format::Csv if reports.len() == 1 => reports[0].to_csv(),
        Format::Csv => reports
            .iter()
            .map(|r| format!("# {} r={}\n{}", r.experiment, r.degree, r.to_csv()))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(args.out.as_deref(), &text)
}

fn bh_ratio(args: BhArgs) -> Result<(), String> {
    let v: Arc<dyn SmoothFunction> = match args.function {
        TestFunction::Solution => ExactSolution::of_geometry(args.geometry).0,
        TestFunction::Kinked => Arc::new(kinked_function()),
    };
    let base = args.geometry.mesh();
    let mut text = String::new();
    for &r in &args.degree {
        let r = r as usize;
        let q = args.quad_degree.unwrap_or(2 * r + 6);
        let report = estimate_broken_bh_constant(&base, r, v.as_ref(), args.levels as usize, q)
            .map_err(|e| e.to_string())?;
        let verdict = match report.spread() {
            None => "both errors vanish on every level".to_string(),
            Some(s) if s < 3.0 => format!("bounded, max/min ratio {s:.5}"),
            Some(s) => format!("growing, max/min ratio {s:.5}"),
        };
        text.push_str(&format!(
            "# {} r={r}: {verdict}\n{}",
            args.geometry,
            report.to_csv()
        ));
    }
    emit(args.out.as_deref(), &text)
}

fn mesh(args: MeshArgs) -> Result<(), String> {
    let base = match (&args.geometry, &args.input) {
        (Some(g), _) => g.mesh(),
        (None, Some(p)) => {
            let text =
                fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            read_mesh(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let refined = base
        .refine_times(args.refine as usize)
        .map_err(|e| e.to_string())?;
    log::info!(
        "{} vertices, {} cells, mesh size {:e}",
        refined.num_vertices(),
        refined.num_cells(),
        refined.mesh_size()
    );
    emit(args.out.as_deref(), &write_mesh(&refined))
}

fn verify(args: VerifyArgs) -> Result<(), String> {
    let outcomes = run_verification(&VerifyOptions {
        level: args.level,
        quad_degree: args.quad_degree,
        pairs: args.pairs,
        seed: args.seed,
        ..VerifyOptions::default()
    });
    let mut failed = Vec::new();
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        if !o.passed {
            failed.push(o.name.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(format!("failed invariants: {}", failed.join(", ")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::BhRatio(a) => bh_ratio(a),
        Command::Mesh(a) => mesh(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

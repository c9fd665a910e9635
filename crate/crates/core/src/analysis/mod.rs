//! Error norms, convergence rates and the convergence experiments.

mod identity;
mod verify;

pub use identity::{
    pullback_identity, random_wave_pairs, test_coefficient, IdentityCheck, PullbackIdentity, Wave,
};
pub use verify::{run_verification, CheckOutcome, VerifyOptions};

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    apply_dirichlet, assemble_load, assemble_stiffness, interpolate_data, AssemblyError,
    Coefficient, DataApproximation, LoadData, SparseSymmetricSystem,
};
use crate::elements::quadrature;
use crate::geometry::builtin::Geometry;
use crate::geometry::{
    finite_difference_gradient, pullback_scalar, GeometryError, SmoothFunction, TensorField,
};
use crate::interp::{
    broken_conforming_ratio, cellwise_errors, GlobalLagrangeSpace, InterpError, RatioRow,
};
use crate::mesh::SimplicialComplex;
use crate::solver::{cg_solve, CgOptions, SolveReport};
use crate::Error as PipelineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("errors must be positive and finite to compute rates (got {0:e})")]
    NonPositiveError(f64),
    #[error("degree {0} outside the supported range 1..=4")]
    DegreeOutOfRange(usize),
    #[error("at most 7 refinement levels are supported (got {0})")]
    TooManyLevels(usize),
}

/// An exact solution with analytic gradient on the parametric domain.
#[derive(Clone)]
pub struct ExactSolution(pub Arc<dyn SmoothFunction>);

impl ExactSolution {
    /// û = ŭ∘Φ for a geometry's physical solution.
    pub fn of_geometry(geometry: Geometry) -> Self {
        ExactSolution(Arc::new(pullback_scalar(
            geometry.map(),
            geometry.physical_solution(),
        )))
    }

    /// Largest relative deviation between the analytic gradient and centered
    /// differences over the given points.
    pub fn gradient_consistency(
        &self,
        points: &[Vec<f64>],
        step: f64,
    ) -> Result<f64, GeometryError> {
        let mut worst = 0.0f64;
        for x in points {
            let g = self.0.gradient(x)?;
            let fd = finite_difference_gradient(self.0.as_ref(), x, step)?;
            worst = worst.max((g - &fd).norm() / fd.norm().max(1e-12));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
}

/// ‖û − û_h‖ and |û − û_h|₁ on the parametric domain.
pub fn error_norms(
    space: &GlobalLagrangeSpace,
    coeffs: &[f64],
    exact: &dyn SmoothFunction,
    quad_degree: usize,
) -> Result<ErrorNorms, InterpError> {
    let e = cellwise_errors(space, coeffs, exact, quad_degree)?;
    Ok(ErrorNorms {
        l2: e.l2(),
        h1_semi: e.h1_semi(),
    })
}

/// (∫ ∇e · Â ∇e)^{1/2} for e = û − û_h.
pub fn energy_error(
    space: &GlobalLagrangeSpace,
    coeffs: &[f64],
    exact: &dyn SmoothFunction,
    coefficient: &dyn TensorField,
    quad_degree: usize,
) -> Result<f64, InterpError> {
    let element = space.element();
    let n = element.dim();
    let nb = element.num_basis();
    let rule = quadrature(n, quad_degree)?;
    let fractions = rule.volume_fractions();
    let table = element.tabulate(rule.points());
    let mut grads = vec![0.0; nb * n];
    let mut total = 0.0;
    for c in 0..space.complex().num_cells() {
        let geom = space.cell_geometry(c);
        let bg = geom.barycentric_gradients()?;
        for (q, lam) in rule.points().iter().enumerate() {
            let x = geom.point_at(lam);
            table.gradients_at(q, bg, &mut grads);
            let mut e = exact.gradient(&x)?;
            for (k, &g) in space.cell_dofs(c).iter().enumerate() {
                for d in 0..n {
                    e[d] -= coeffs[g] * grads[k * n + d];
                }
            }
            let a = coefficient.tensor(&x)?;
            total += fractions[q] * geom.volume() * (e.transpose() * a * &e)[(0, 0)];
        }
    }
    Ok(total.sqrt())
}

/// ρ_L = log₂(e_{L−1}/e_L) for consecutive levels.
pub fn convergence_rate(errors: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if let Some(&bad) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(AnalysisError::NonPositiveError(bad));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

fn rates_or_none(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(
            errors
                .windows(2)
                .map(|w| convergence_rate(w).ok().map(|r| r[0])),
        )
        .take(errors.len())
        .collect()
}

/// Settings for one convergence experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub degree: usize,
    /// Levels 0..=levels are computed.
    pub levels: usize,
    /// Degree of the coefficient and data approximation; `None` means the
    /// element degree.
    pub data_degree: Option<usize>,
    pub data_approximation: DataApproximation,
    /// Evaluate Â, f̂, ĝ at quadrature points instead of approximating them.
    pub exact_data: bool,
    /// Assembly quadrature degree; `None` means 2r + 2.
    pub quad_degree: Option<usize>,
    /// Error quadrature degree; `None` means 2r + 6.
    pub error_quad_degree: Option<usize>,
    pub solver: CgOptions,
    /// Worker threads for running levels concurrently; 1 runs them in order.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(geometry: Geometry, degree: usize, levels: usize) -> Self {
        ExperimentConfig {
            geometry,
            degree,
            levels,
            data_degree: None,
            data_approximation: DataApproximation::default(),
            exact_data: false,
            quad_degree: None,
            error_quad_degree: None,
            solver: CgOptions::default(),
            jobs: 1,
        }
    }

    pub fn data_degree(&self) -> usize {
        self.data_degree.unwrap_or(self.degree)
    }

    pub fn quad_degree(&self) -> usize {
        self.quad_degree.unwrap_or(2 * self.degree + 2)
    }

    pub fn error_quad_degree(&self) -> usize {
        self.error_quad_degree.unwrap_or(2 * self.degree + 6)
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        if !(1..=4).contains(&self.degree) {
            return Err(AnalysisError::DegreeOutOfRange(self.degree));
        }
        if self.levels > 7 {
            return Err(AnalysisError::TooManyLevels(self.levels));
        }
        Ok(())
    }
}

/// Outcome of the pipeline on one refinement level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    /// Free (unconstrained) DOFs.
    pub dofs: usize,
    pub errors: ErrorNorms,
    /// `None` when every DOF is constrained and nothing was solved.
    pub solve: Option<SolveReport>,
    /// Cells where the approximated coefficient lost definiteness.
    pub non_positive_cells: usize,
}

/// Solution on one level together with the space it lives in.
pub struct LevelSolution {
    pub mesh: SimplicialComplex,
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub system: SparseSymmetricSystem,
    pub result: LevelResult,
}

impl LevelSolution {
    pub fn space(&self) -> Result<GlobalLagrangeSpace<'_>, PipelineError> {
        Ok(GlobalLagrangeSpace::conforming(&self.mesh, self.degree)?)
    }
}

/// Builds, assembles, solves and measures one level.
pub fn solve_level(
    config: &ExperimentConfig,
    level: usize,
) -> Result<LevelSolution, PipelineError> {
    config.validate()?;
    let mesh = config.geometry.mesh().refine_times(level)?;
    solve_on_mesh(config, mesh, level)
}

/// As [`solve_level`], on a given triangulation of the parametric domain.
/// Cells must carry the region tags of the geometry's transformation.
pub fn solve_on_mesh(
    config: &ExperimentConfig,
    mesh: SimplicialComplex,
    level: usize,
) -> Result<LevelSolution, PipelineError> {
    config.validate()?;
    let geometry = config.geometry;
    let r = config.degree;
    let space = GlobalLagrangeSpace::conforming(&mesh, r)?;
    let problem = geometry.physical_problem().pull_back(geometry.map());
    let q = config.quad_degree();

    let (stiffness, rhs) = if config.exact_data {
        let k = assemble_stiffness(&space, Coefficient::Exact(problem.coefficient.as_ref()), q)?;
        let b = assemble_load(
            &space,
            LoadData::Exact {
                source: problem.source.as_ref(),
                flux: Some(problem.flux.as_ref()),
            },
            q,
        )?;
        (k, b)
    } else {
        let data = interpolate_data(
            &problem,
            &mesh,
            config.data_degree(),
            config.data_approximation,
        )?;
        let k = assemble_stiffness(&space, Coefficient::Interpolated(&data), q)?;
        let b = assemble_load(&space, LoadData::Interpolated(&data), q)?;
        (k, b)
    };
    let system = SparseSymmetricSystem {
        matrix: stiffness.matrix,
        rhs,
        dirichlet: space.dirichlet_mask().to_vec(),
    };

    let (coeffs, solve, dofs) = match apply_dirichlet(&system) {
        Ok(reduced) => {
            let (x, report) = cg_solve(&reduced.matrix, &reduced.rhs, &config.solver)?;
            (reduced.expand(&x), Some(report), reduced.free.len())
        }
        Err(AssemblyError::AllDofsConstrained) => {
            log::info!("level {level}: every DOF is constrained, the discrete solution is zero");
            (vec![0.0; space.num_dofs()], None, 0)
        }
        Err(e) => return Err(e.into()),
    };

    let exact = ExactSolution::of_geometry(geometry);
    let errors = error_norms(
        &space,
        &coeffs,
        exact.0.as_ref(),
        config.error_quad_degree(),
    )?;
    log::info!(
        "{} r={r} level {level}: dofs {dofs}, |e|_1 {:e}, |e|_0 {:e}",
        geometry.name(),
        errors.h1_semi,
        errors.l2
    );
    let result = LevelResult {
        level,
        h: mesh.mesh_size(),
        dofs,
        errors,
        solve,
        non_positive_cells: stiffness.warnings.len(),
    };
    Ok(LevelSolution {
        degree: r,
        coeffs,
        system,
        result,
        mesh,
    })
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub err_h1semi: f64,
    pub rate_h1: Option<f64>,
    pub err_l2: f64,
    pub rate_l2: Option<f64>,
    pub cg_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub degree: usize,
    pub data_degree: usize,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "level,h,dofs,err_h1semi,rate_h1,err_l2,rate_l2,cg_iters";

impl ConvergenceReport {
    pub fn from_levels(
        experiment: &str,
        degree: usize,
        data_degree: usize,
        levels: &[LevelResult],
    ) -> Self {
        let h1: Vec<f64> = levels.iter().map(|l| l.errors.h1_semi).collect();
        let l2: Vec<f64> = levels.iter().map(|l| l.errors.l2).collect();
        let rows = levels
            .iter()
            .zip(rates_or_none(&h1))
            .zip(rates_or_none(&l2))
            .map(|((l, rate_h1), rate_l2)| ReportRow {
                level: l.level,
                h: l.h,
                dofs: l.dofs,
                err_h1semi: l.errors.h1_semi,
                rate_h1,
                err_l2: l.errors.l2,
                rate_l2,
                cg_iters: l.solve.as_ref().map_or(0, |s| s.iterations),
            })
            .collect();
        ConvergenceReport {
            experiment: experiment.to_string(),
            degree,
            data_degree,
            rows,
        }
    }

    pub fn last(&self) -> &ReportRow {
        self.rows.last().expect("report has at least one level")
    }

    pub fn row(&self, level: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    /// Full-precision CSV; missing rates are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:?}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{},{:?},{},{:?},{},{}",
                r.level,
                r.h,
                r.dofs,
                r.err_h1semi,
                opt(r.rate_h1),
                r.err_l2,
                opt(r.rate_l2),
                r.cg_iters
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        markdown_tables(std::slice::from_ref(self))
    }
}

/// Five significant digits: plain decimals down to 1e-3, scientific below.
pub fn format_sig5(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-3..5).contains(&exp) {
        format!("{:.*}", (4 - exp) as usize, v)
    } else {
        let m = format!("{v:.4e}");
        let (mant, e) = m.split_once('e').unwrap();
        let e: i32 = e.parse().unwrap();
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn format_rate(r: Option<f64>) -> String {
    r.map_or("--".to_string(), |v| format!("{:.2}", v))
}

/// Convergence tables for several degrees side by side, one subtable for
/// the H¹ seminorm and one for the L² norm.
pub fn markdown_tables(reports: &[ConvergenceReport]) -> String {
    let mut out = String::new();
    let levels: Vec<usize> = {
        let mut l: Vec<usize> = reports
            .iter()
            .flat_map(|r| r.rows.iter().map(|x| x.level))
            .collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    let experiment = reports.first().map_or("", |r| r.experiment.as_str());
    for (title, sym, pick) in [
        ("H1 seminorm of error e and convergence rate", "|e|_1", 0),
        ("L2 norm of error e and convergence rate", "‖e‖_2", 1),
    ] {
        let _ = writeln!(out, "**{experiment}: {title}**\n");
        out.push_str("| L |");
        for r in reports {
            let _ = write!(out, " r={} {sym} | ρ |", r.degree);
        }
        out.push_str("\n|---:|");
        for _ in reports {
            out.push_str("---:|:---|");
        }
        out.push('\n');
        for &level in &levels {
            let _ = write!(out, "| {level} |");
            for r in reports {
                match r.row(level) {
                    Some(row) => {
                        let (e, rate) = if pick == 0 {
                            (row.err_h1semi, row.rate_h1)
                        } else {
                            (row.err_l2, row.rate_l2)
                        };
                        let _ = write!(out, " {} | {} |", format_sig5(e), format_rate(rate));
                    }
                    None => out.push_str("  |  |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Runs levels 0..=levels and collects the convergence table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport, PipelineError> {
    config.validate()?;
    let run = |level| solve_level(config, level).map(|s| s.result);
    let levels: Vec<LevelResult> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            (0..=config.levels)
                .into_par_iter()
                .map(run)
                .collect::<Result<_, _>>()
        })?
    } else {
        (0..=config.levels).map(run).collect::<Result<_, _>>()?
    };
    Ok(ConvergenceReport::from_levels(
        config.geometry.name(),
        config.degree,
        config.data_degree(),
        &levels,
    ))
}

/// Broken/conforming best-approximation ratios over a refinement sequence.
#[derive(Debug, Clone)]
pub struct BhReport {
    pub degree: usize,
    pub rows: Vec<RatioRow>,
}

impl BhReport {
    /// max/min of the defined ratios; `None` if every level had both errors
    /// vanish.
    pub fn spread(&self) -> Option<f64> {
        let ratios: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).collect();
        if ratios.is_empty() {
            return None;
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    }

    pub fn both_zero(&self) -> bool {
        self.rows.iter().all(|r| r.ratio.is_none())
    }

    /// Flags growth of the ratio across levels (spread of 3 or more).
    pub fn is_bounded(&self) -> bool {
        self.spread().is_none_or(|s| s < 3.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h,dofs,conforming_h1semi,broken_h1semi,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{},{:?},{:?},{}",
                r.level,
                r.h,
                r.dofs,
                r.conforming,
                r.broken,
                r.ratio
                    .map_or("both zero".to_string(), |v| format!("{v:?}"))
            );
        }
        out
    }
}

pub fn estimate_broken_bh_constant(
    base: &SimplicialComplex,
    degree: usize,
    v: &dyn SmoothFunction,
    levels: usize,
    quad_degree: usize,
) -> Result<BhReport, InterpError> {
    Ok(BhReport {
        degree,
        rows: broken_conforming_ratio(base, degree, v, levels, quad_degree)?,
    })
}

/// |x| e^y: continuous, with a gradient jump across x = 0.
pub fn kinked_function() -> impl SmoothFunction {
    crate::geometry::FnSmooth::new(
        |x: &[f64]| x[0].abs() * x[1].exp(),
        |x: &[f64]| {
            let s = if x[0] < 0.0 { -1.0 } else { 1.0 };
            nalgebra::DVector::from_vec(vec![s * x[1].exp(), x[0].abs() * x[1].exp()])
        },
    )
}

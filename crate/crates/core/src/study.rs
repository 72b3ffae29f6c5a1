//! Per-level solves and convergence tables for the benchmark problems.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::assembly::{assemble_bh, assemble_rhs_qp_load, Discretization};
use crate::dg::{prolongate, DgFunction};
use crate::error::{Error, Result};
use crate::galerkin::{compute_singular_obstacle, ReferenceField};
use crate::metrics::{error_energy, error_l2, error_linf, mean_tail, observed_orders};
use crate::pdas::{pdas_solve_with, ObstacleQP, PdasOptions, PdasState};
use crate::problems::{
    example_lshape, example_square, lshape_coefficients, lshape_domain, MeshMode, ProblemSpec, DEFAULT_MU,
};

pub const PROBLEM_NAMES: [&str; 3] = ["square", "lshape-uniform", "lshape-graded"];

/// Builds a benchmark problem by name. The L-shape problems need `reference`.
pub fn problem_by_name(name: &str, reference: Option<Arc<ReferenceField>>, mu: f64) -> Result<ProblemSpec> {
    match name {
        "square" => Ok(example_square()),
        "lshape-uniform" => example_lshape(reference, MeshMode::Uniform),
        "lshape-graded" => example_lshape(reference, MeshMode::Graded(mu)),
        other => Err(Error::InvalidParameter(format!(
            "unknown problem '{other}'; expected one of {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

pub fn needs_reference(name: &str) -> bool {
    name.starts_with("lshape")
}

fn reference_path(dir: &Path, level: usize, mu: f64) -> PathBuf {
    dir.join(format!("psi_s_level{level}_mu{mu}.txt"))
}

/// Loads the `ψ_s` reference from `cache` if present, else computes it on the
/// graded L-shape mesh of `level` and stores it there.
pub fn load_or_build_reference(cache: Option<&Path>, level: usize, mu: f64) -> Result<Arc<ReferenceField>> {
    let domain = lshape_domain();
    if let Some(dir) = cache {
        let path = reference_path(dir, level, mu);
        if path.exists() {
            let r = ReferenceField::read_text(&domain, BufReader::new(File::open(&path)?))?;
            if r.level() == level && r.mu() == mu {
                return Ok(Arc::new(r));
            }
        }
    }
    let r = compute_singular_obstacle(&domain, &lshape_coefficients(), level, mu)?;
    if let Some(dir) = cache {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(reference_path(dir, level, mu))?);
        r.write_text(&mut w)?;
        w.flush()?;
    }
    Ok(Arc::new(r))
}

/// Finest reference stored in `dir`, if any.
pub fn latest_cached_reference(dir: &Path) -> Result<Option<Arc<ReferenceField>>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let level = name
            .strip_prefix("psi_s_level")
            .and_then(|r| r.split('_').next())
            .and_then(|l| l.parse::<usize>().ok());
        if let Some(l) = level {
            if best.as_ref().is_none_or(|(b, _)| l > *b) {
                best = Some((l, path));
            }
        }
    }
    match best {
        Some((_, path)) => {
            let r = ReferenceField::read_text(&lshape_domain(), BufReader::new(File::open(path)?))?;
            Ok(Some(Arc::new(r)))
        }
        None => Ok(None),
    }
}

/// Reference level used for a study whose finest level is `max_level`.
pub fn reference_level(max_level: usize) -> usize {
    max_level + 2
}

pub fn default_reference_mu() -> f64 {
    DEFAULT_MU
}

/// Everything produced by one constrained solve.
pub struct LevelSolution {
    pub level: usize,
    pub disc: Discretization,
    pub qp: ObstacleQP,
    pub yd_load: Vec<f64>,
    pub pdas: PdasState,
    pub state: DgFunction,
    pub control: DgFunction,
}

/// One constrained solve. `warm` is a state on the next coarser level; when
/// given it replaces the initial guess of `opts` after prolongation.
pub fn solve_level(
    problem: &ProblemSpec,
    level: usize,
    opts: &PdasOptions,
    warm: Option<&DgFunction>,
) -> Result<LevelSolution> {
    problem.validate()?;
    let mesh = Arc::new(problem.mesh(level)?);
    let disc = Discretization::new(mesh.clone(), problem.coeffs.clone(), problem.sigma, &*problem.g)?;
    let b = assemble_bh(disc.stiffness(), disc.mass(), problem.beta)?;
    let yd_load = disc.load(&*problem.y_d);
    let rhs = assemble_rhs_qp_load(
        disc.stiffness(),
        disc.mass(),
        disc.boundary_vector(),
        &yd_load,
        problem.beta,
    )?;
    let psi = DgFunction::from_vertex_values(mesh.clone(), &*problem.psi).into_values();
    let qp = ObstacleQP::new(b, rhs, psi)?;
    let pdas = match warm {
        Some(c) => {
            let y0 = prolongate(c, &mesh)?.into_values();
            let opts = PdasOptions {
                y0: Some(y0),
                lambda0: None,
                ..opts.clone()
            };
            pdas_solve_with(&qp, disc.mass(), &opts)?
        }
        None => pdas_solve_with(&qp, disc.mass(), opts)?,
    };
    let state = DgFunction::new(mesh, pdas.y.clone())?;
    let control = disc.lhg(&state)?;
    Ok(LevelSolution {
        level,
        disc,
        qp,
        yd_load,
        pdas,
        state,
        control,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub dofs: usize,
    pub h: f64,
    pub e_l2: f64,
    pub e_energy: f64,
    pub e_ctrl: f64,
    pub e_linf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub problem: String,
    pub rows: Vec<StudyRow>,
}

/// Error columns of a study, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    L2,
    Energy,
    Control,
    Linf,
}

impl StudyReport {
    pub fn errors(&self, c: Column) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match c {
                Column::L2 => r.e_l2,
                Column::Energy => r.e_energy,
                Column::Control => r.e_ctrl,
                Column::Linf => r.e_linf,
            })
            .collect()
    }

    pub fn orders(&self, c: Column) -> Vec<Option<f64>> {
        observed_orders(&self.errors(c))
    }

    /// Mean order over the last `k` level transitions.
    pub fn mean_order(&self, c: Column, k: usize) -> Option<f64> {
        mean_tail(&self.orders(c), k)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    fn order_cells(&self) -> Vec<[String; 4]> {
        let cols = [Column::L2, Column::Energy, Column::Control, Column::Linf].map(|c| self.orders(c));
        (0..self.rows.len())
            .map(|i| {
                std::array::from_fn(|k| match i.checked_sub(1).and_then(|j| cols[k][j]) {
                    Some(o) => format!("{o:.2}"),
                    None => String::new(),
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "level,dofs,h,e_L2,ord_L2,e_energy,ord_energy,e_ctrlL2,ord_ctrlL2,e_Linf,ord_Linf,pdas_iters,converged"
        )?;
        for (r, o) in self.rows.iter().zip(self.order_cells()) {
            writeln!(
                w,
                "{},{},{:.6e},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{},{},{}",
                r.level,
                r.dofs,
                r.h,
                r.e_l2,
                o[0],
                r.e_energy,
                o[1],
                r.e_ctrl,
                o[2],
                r.e_linf,
                o[3],
                r.iterations,
                r.converged
            )?;
        }
        Ok(())
    }

    /// Aligned text table; non-converged rows are marked with `*`.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.problem)?;
        writeln!(
            w,
            "{:>5} {:>9} {:>9}  {:>9} {:>5}  {:>9} {:>5}  {:>9} {:>5}  {:>9} {:>5}  {:>5}",
            "level", "dofs", "h", "L2", "ord", "energy", "ord", "ctrl L2", "ord", "Linf", "ord", "iters"
        )?;
        for (r, o) in self.rows.iter().zip(self.order_cells()) {
            let o = o.map(|s| if s.is_empty() { "-".to_string() } else { s });
            writeln!(
                w,
                "{:>5} {:>9} {:>9.3e}  {:>9.2e} {:>5}  {:>9.2e} {:>5}  {:>9.2e} {:>5}  {:>9.2e} {:>5}  {:>4}{}",
                r.level,
                r.dofs,
                r.h,
                r.e_l2,
                o[0],
                r.e_energy,
                o[1],
                r.e_ctrl,
                o[2],
                r.e_linf,
                o[3],
                r.iterations,
                if r.converged { " " } else { "*" }
            )?;
        }
        if !self.all_converged() {
            writeln!(w, "* PDAS did not converge within the iteration limit")?;
        }
        Ok(())
    }
}

pub fn study_row(sol: &LevelSolution, problem: &ProblemSpec) -> Result<StudyRow> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("problem '{}' has no exact solution", problem.name)))?;
    let mesh = sol.disc.mesh();
    Ok(StudyRow {
        level: sol.level,
        dofs: mesh.num_dofs(),
        h: mesh.h(),
        e_l2: error_l2(&sol.state, &*exact.state),
        e_energy: error_energy(&sol.state, problem.sigma, &*exact.state, &*exact.gradient),
        e_ctrl: error_l2(&sol.control, &*exact.control),
        e_linf: error_linf(&sol.state, &*exact.state),
        iterations: sol.pdas.iterations,
        converged: sol.pdas.converged,
        active: sol.pdas.num_active(),
    })
}

/// Solves levels `1..=level`, each warm-started from the previous one, and
/// returns the last.
pub fn solve_nested(problem: &ProblemSpec, level: usize, opts: &PdasOptions) -> Result<LevelSolution> {
    let mut sol = solve_level(problem, level.min(1), opts, None)?;
    for l in 2..=level {
        sol = solve_level(problem, l, opts, Some(&sol.state))?;
    }
    Ok(sol)
}

/// Solves every level in order and tabulates errors against the exact
/// solution. Each level starts from the prolonged state of the previous one.
/// Non-converged levels are kept and flagged.
pub fn run_convergence(
    problem: &ProblemSpec,
    levels: std::ops::RangeInclusive<usize>,
    opts: &PdasOptions,
    mut progress: impl FnMut(&LevelSolution, &StudyRow),
) -> Result<StudyReport> {
    let mut rows = Vec::new();
    let mut prev: Option<DgFunction> = None;
    for level in levels {
        let sol = match prev.take() {
            Some(c) => solve_level(problem, level, opts, Some(&c))?,
            None if level > 1 => {
                let coarse = solve_nested(problem, level - 1, opts)?;
                solve_level(problem, level, opts, Some(&coarse.state))?
            }
            None => solve_level(problem, level, opts, None)?,
        };
        let row = study_row(&sol, problem)?;
        progress(&sol, &row);
        rows.push(row);
        prev = Some(sol.state);
    }
    Ok(StudyReport {
        problem: problem.name.clone(),
        rows,
    })
}

/// Writes mesh, state, control, multiplier, and active indicator of one solve.
pub fn export_fields(sol: &LevelSolution, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mesh = sol.disc.mesh();
    let mut written = Vec::new();
    let mut open = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        written.push(p.clone());
        Ok(BufWriter::new(File::create(p)?))
    };
    mesh.write_text(open("mesh.txt")?)?;
    sol.state.write_csv(open("state.csv")?)?;
    sol.control.write_csv(open("control.csv")?)?;
    DgFunction::new(mesh.clone(), sol.pdas.lambda.clone())?.write_csv(open("multiplier.csv")?)?;
    let ind = sol.pdas.active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    DgFunction::new(mesh.clone(), ind)?.write_csv(open("active.csv")?)?;
    let mut log = open("pdas_log.csv")?;
    writeln!(log, "iter,active,changed,residual")?;
    for r in &sol.pdas.history {
        writeln!(log, "{},{},{},{:.6e}", r.iteration, r.active, r.changed, r.residual)?;
    }
    log.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_low_levels() {
        let p = example_square();
        let rep = run_convergence(&p, 1..=3, &PdasOptions::default(), |_, _| {}).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.all_converged());
        let e = rep.errors(Column::L2);
        assert!(e[2] < e[0]);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 13);
        let mut again = Vec::new();
        run_convergence(&p, 1..=3, &PdasOptions::default(), |_, _| {})
            .unwrap()
            .write_csv(&mut again)
            .unwrap();
        assert_eq!(text.as_bytes(), &again[..]);
    }

    #[test]
    fn unknown_problem_name() {
        assert!(problem_by_name("disk", None, 0.6).is_err());
        assert!(problem_by_name("lshape-graded", None, 0.6).is_err());
        assert!(problem_by_name("square", None, 0.6).is_ok());
    }
}

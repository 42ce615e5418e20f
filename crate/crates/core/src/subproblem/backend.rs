//! Conic solver backends. The only shipped backend hands the program to the
//! Clarabel interior-point solver.

use std::collections::{BTreeMap, HashMap};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::program::{Assignment, ConeKind, ConicProgram, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    /// Solved to reduced accuracy.
    AlmostSolved,
    Infeasible,
    Unbounded,
    Failed,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Solved | SolveStatus::AlmostSolved)
    }
}

#[derive(Debug, Clone)]
pub struct ProgramSolution {
    pub status: SolveStatus,
    /// Backend-specific status text.
    pub detail: String,
    pub values: Assignment,
    pub objective: f64,
    pub iterations: u32,
}

pub trait ConicBackend: Send + Sync {
    fn solve(&self, program: &ConicProgram) -> ProgramSolution;
}

#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol_gap: f64,
    pub tol_feas: f64,
    /// Tolerance of the second attempt after a failed solve.
    pub retry_tol: f64,
    /// Largest constraint violation accepted from a stalled solve.
    pub accept_violation: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            retry_tol: 1e-7,
            accept_violation: 1e-7,
        }
    }
}

/// Column layout of the flattened variable vector: each PSD block in
/// upper-triangular, column-major order with √2-scaled off-diagonals, then
/// the scalars.
struct Layout {
    block_offset: HashMap<usize, usize>,
    scalar_col: HashMap<super::program::Scalar, usize>,
    tri: usize,
    cols: usize,
}

fn tri_index(row: usize, col: usize) -> usize {
    col * (col + 1) / 2 + row
}

impl Layout {
    fn new(p: &ConicProgram) -> Self {
        let tri = p.dim * (p.dim + 1) / 2;
        let block_offset = p
            .psd_streams
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i * tri))
            .collect();
        let base = p.psd_streams.len() * tri;
        let scalar_col = p
            .scalars
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, base + i))
            .collect();
        Self {
            block_offset,
            scalar_col,
            tri,
            cols: base + p.scalars.len(),
        }
    }

    /// Column and multiplier of a variable in the flattened vector.
    fn column(&self, v: &Var) -> Option<(usize, f64)> {
        match v {
            Var::Scalar(s) => self.scalar_col.get(s).map(|c| (*c, 1.0)),
            Var::Entry { stream, row, col } => {
                let (r, c) = if row <= col { (*row, *col) } else { (*col, *row) };
                let scale = if r == c { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
                self.block_offset
                    .get(stream)
                    .map(|off| (off + tri_index(r, c), scale))
            }
        }
    }
}

impl ClarabelBackend {
    fn assemble(
        &self,
        p: &ConicProgram,
        layout: &Layout,
    ) -> (Vec<f64>, CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let mut q = vec![0.0; layout.cols];
        for (v, c) in &p.objective.terms {
            if let Some((col, s)) = layout.column(v) {
                q[col] -= c * s;
            }
        }
        // rows as (column -> value) maps, b as constants, s = b − A x
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let push_row = |expr: &super::program::AffineExpr,
                            triplets: &mut Vec<(usize, usize, f64)>,
                            b: &mut Vec<f64>| {
            let row = b.len();
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (v, c) in &expr.terms {
                if let Some((col, s)) = layout.column(v) {
                    *acc.entry(col).or_insert(0.0) += c * s;
                }
            }
            for (col, val) in acc {
                if val != 0.0 {
                    triplets.push((row, col, -val));
                }
            }
            b.push(expr.constant);
        };
        for c in &p.constraints {
            for e in &c.exprs {
                push_row(e, &mut triplets, &mut b);
            }
            let cone = match c.cone {
                ConeKind::NonNegative => SupportedConeT::NonnegativeConeT(c.exprs.len()),
                ConeKind::Zero => SupportedConeT::ZeroConeT(c.exprs.len()),
                ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(c.exprs.len()),
                ConeKind::Exponential => SupportedConeT::ExponentialConeT(),
            };
            cones.push(cone);
        }
        for stream in &p.psd_streams {
            let off = layout.block_offset[stream];
            for i in 0..layout.tri {
                triplets.push((b.len(), off + i, -1.0));
                b.push(0.0);
            }
            cones.push(SupportedConeT::PSDTriangleConeT(p.dim));
        }
        let a = csc_from_triplets(b.len(), layout.cols, &mut triplets);
        (q, a, b, cones)
    }
}

fn csc_from_triplets(m: usize, n: usize, t: &mut [(usize, usize, f64)]) -> CscMatrix<f64> {
    t.sort_by(|x, y| (x.1, x.0).cmp(&(y.1, y.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(t.len());
    let mut nzval = Vec::with_capacity(t.len());
    for &(r, c, v) in t.iter() {
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

impl ClarabelBackend {
    fn run(&self, p: &ConicProgram, layout: &Layout, tol: f64, equilibrate: bool) -> ProgramSolution {
        let (q, a, b, cones) = self.assemble(p, layout);
        let quad = CscMatrix::<f64>::zeros((layout.cols, layout.cols));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .equilibrate_enable(equilibrate)
            .build()
            .expect("valid solver settings");
        let failed = |detail: String| ProgramSolution {
            status: SolveStatus::Failed,
            detail,
            values: Assignment {
                scalars: BTreeMap::new(),
                blocks: vec![DMatrix::zeros(p.dim, p.dim); p.num_streams],
            },
            objective: f64::NAN,
            iterations: 0,
        };
        let mut solver = match DefaultSolver::new(&quad, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return failed(format!("{e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let x = &sol.x;
        let mut blocks = vec![DMatrix::zeros(p.dim, p.dim); p.num_streams];
        for (stream, off) in &layout.block_offset {
            let m = &mut blocks[*stream];
            for col in 0..p.dim {
                for row in 0..=col {
                    let v = x[off + tri_index(row, col)];
                    let v = if row == col { v } else { v * std::f64::consts::FRAC_1_SQRT_2 };
                    m[(row, col)] = v;
                    m[(col, row)] = v;
                }
            }
        }
        let scalars = layout
            .scalar_col
            .iter()
            .map(|(s, c)| (*s, x[*c]))
            .collect();
        let values = Assignment { scalars, blocks };
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Solved,
            SolverStatus::AlmostSolved => SolveStatus::AlmostSolved,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            // a stalled interior point is often already accurate enough
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
                if p.max_violation(&values) <= self.accept_violation =>
            {
                SolveStatus::AlmostSolved
            }
            _ => SolveStatus::Failed,
        };
        ProgramSolution {
            status,
            detail: format!("{:?}", sol.status),
            values,
            objective: -sol.obj_val,
            iterations: sol.iterations,
        }
    }
}

impl ConicBackend for ClarabelBackend {
    fn solve(&self, p: &ConicProgram) -> ProgramSolution {
        let layout = Layout::new(p);
        let mut out = self.run(p, &layout, self.tol_gap.min(self.tol_feas), true);
        for (tol, equilibrate) in [(self.retry_tol, true), (self.retry_tol, false)] {
            if out.status != SolveStatus::Failed {
                break;
            }
            out = self.run(p, &layout, tol, equilibrate);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::program::*;
    use super::*;

    fn base(dim: usize) -> ConicProgram {
        ConicProgram {
            dim,
            num_streams: 1,
            psd_streams: vec![0],
            scalars: vec![Scalar::Objective],
            objective: AffineExpr::scalar(Scalar::Objective),
            constraints: Vec::new(),
        }
    }

    #[test]
    fn max_eigenvalue_via_psd_block() {
        // max ⟨C, P⟩ s.t. Tr P = 1, P ⪰ 0 gives λ_max(C)
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut p = base(2);
        p.objective = AffineExpr::constant(0.0).plus_inner(0, &c, 1.0);
        p.scalars.clear();
        p.constraints.push(Constraint {
            tag: Tag::Power,
            cone: ConeKind::Zero,
            exprs: vec![AffineExpr::constant(-1.0)
                .plus_diag(0, 0, 1.0)
                .plus_diag(0, 1, 1.0)],
        });
        let sol = ClarabelBackend::default().solve(&p);
        assert_eq!(sol.status, SolveStatus::Solved);
        assert!((sol.objective - 3.0).abs() < 1e-6);
        let m = &sol.values.blocks[0];
        assert!((m[(0, 1)] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn exponential_and_soc_cones() {
        // max t s.t. exp(t) ≤ 1 + u, u² ≤ 4 (as ‖u‖ ≤ 2)
        let mut p = base(1);
        p.psd_streams.clear();
        p.scalars.push(Scalar::Theta);
        let u = Scalar::Theta;
        p.constraints.push(Constraint {
            tag: Tag::Power,
            cone: ConeKind::Exponential,
            exprs: vec![
                AffineExpr::scalar(Scalar::Objective),
                AffineExpr::constant(1.0),
                AffineExpr::scalar(u).offset(1.0),
            ],
        });
        p.constraints.push(Constraint {
            tag: Tag::Power,
            cone: ConeKind::SecondOrder,
            exprs: vec![AffineExpr::constant(2.0), AffineExpr::scalar(u)],
        });
        let sol = ClarabelBackend::default().solve(&p);
        assert!(sol.status.is_usable());
        assert!((sol.objective - 3f64.ln()).abs() < 1e-6);
        assert!(p.max_violation(&sol.values) < 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = base(1);
        p.psd_streams.clear();
        p.constraints.push(Constraint {
            tag: Tag::Power,
            cone: ConeKind::NonNegative,
            exprs: vec![
                AffineExpr::scalar(Scalar::Objective).offset(-1.0),
                AffineExpr::scalar(Scalar::Objective).scaled(-1.0),
            ],
        });
        let sol = ClarabelBackend::default().solve(&p);
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}

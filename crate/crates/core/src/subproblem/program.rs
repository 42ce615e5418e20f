//! Solver-agnostic conic program: symmetric matrix blocks constrained to the
//! PSD cone, named scalar variables, and affine expressions placed in
//! non-negative, zero, second-order or exponential cones. The objective is
//! maximized.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

/// Role of a rate slack variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RateSlot {
    /// Common stream decoded at user k.
    Common(usize),
    /// Private stream of user k decoded at user k.
    Private(usize),
    /// Stream of `owner` decoded at `decoder` inside a SIC chain.
    Sic { owner: usize, decoder: usize },
}

/// Scalar variables of the subproblem, addressed by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scalar {
    Objective,
    Theta,
    Share(usize),
    Slack(RateSlot),
}

/// A decision variable: a scalar, or entry `(row, col)` (row ≤ col) of the
/// lifted precoder of `stream`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Scalar(Scalar),
    Entry { stream: usize, row: usize, col: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn scalar(s: Scalar) -> Self {
        Self::constant(0.0).plus(s, 1.0)
    }

    pub fn plus(mut self, s: Scalar, coef: f64) -> Self {
        self.terms.push((Var::Scalar(s), coef));
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn add(mut self, other: &AffineExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    /// Adds `scale · ⟨coef, P_stream⟩` for a symmetric coefficient matrix.
    pub fn plus_inner(mut self, stream: usize, coef: &DMatrix<f64>, scale: f64) -> Self {
        let n = coef.nrows();
        for col in 0..n {
            for row in 0..=col {
                let w = if row == col {
                    coef[(row, col)]
                } else {
                    coef[(row, col)] + coef[(col, row)]
                };
                if w != 0.0 {
                    self.terms.push((Var::Entry { stream, row, col }, scale * w));
                }
            }
        }
        self
    }

    /// Adds `scale · P_stream[n, n]`.
    pub fn plus_diag(mut self, stream: usize, n: usize, scale: f64) -> Self {
        self.terms.push((Var::Entry { stream, row: n, col: n }, scale));
        self
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        let mut acc: BTreeMap<Var, f64> = BTreeMap::new();
        for (v, c) in self.terms.drain(..) {
            *acc.entry(v).or_insert(0.0) += c;
        }
        self.terms = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
        self
    }

    pub fn eval(&self, values: &Assignment) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(v, c)| c * values.get(v))
                .sum::<f64>()
    }

    pub fn references_stream(&self, stream: usize) -> bool {
        self.terms
            .iter()
            .any(|(v, _)| matches!(v, Var::Entry { stream: s, .. } if *s == stream))
    }

    /// Replaces a scalar by a fixed value.
    pub fn substitute(&mut self, s: Scalar, value: f64) {
        let mut fixed = 0.0;
        self.terms.retain(|(v, c)| {
            if *v == Var::Scalar(s) {
                fixed += c * value;
                false
            } else {
                true
            }
        });
        self.constant += fixed;
    }

    /// Removes every entry of a stream that is fixed to zero.
    pub fn drop_stream(&mut self, stream: usize) {
        self.terms
            .retain(|(v, _)| !matches!(v, Var::Entry { stream: s, .. } if *s == stream));
    }
}

/// What a constraint encodes; used to add or drop constraints by meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Rate(RateSlot),
    Bilinear(RateSlot),
    Optical(usize),
    Power,
    ThetaFloor,
    ThetaCap,
    ShareFloor(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Every expression is ≥ 0.
    NonNegative,
    /// Every expression is = 0.
    Zero,
    /// `e[0] ≥ ‖(e[1], …)‖₂`.
    SecondOrder,
    /// `(x, y, z)` with `y·exp(x/y) ≤ z`, `y > 0`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub tag: Tag,
    pub cone: ConeKind,
    pub exprs: Vec<AffineExpr>,
}

impl Constraint {
    /// Distance outside the cone, zero when satisfied.
    pub fn violation(&self, values: &Assignment) -> f64 {
        let e: Vec<f64> = self.exprs.iter().map(|x| x.eval(values)).collect();
        match self.cone {
            ConeKind::NonNegative => e.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max),
            ConeKind::Zero => e.iter().map(|x| x.abs()).fold(0.0, f64::max),
            ConeKind::SecondOrder => {
                let norm = e[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                (norm - e[0]).max(0.0)
            }
            ConeKind::Exponential => {
                let (x, y, z) = (e[0], e[1], e[2]);
                if y <= 0.0 {
                    f64::INFINITY
                } else {
                    (y * (x / y).exp() - z).max(0.0)
                }
            }
        }
    }
}

/// Values of every variable, used to evaluate expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub scalars: BTreeMap<Scalar, f64>,
    /// One symmetric matrix per stream, zero when the stream is inactive.
    pub blocks: Vec<DMatrix<f64>>,
}

impl Assignment {
    pub fn get(&self, v: &Var) -> f64 {
        match v {
            Var::Scalar(s) => self.scalars.get(s).copied().unwrap_or(0.0),
            Var::Entry { stream, row, col } => self.blocks[*stream][(*row, *col)],
        }
    }

    pub fn scalar(&self, s: Scalar) -> f64 {
        self.scalars.get(&s).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    /// Size of every matrix block.
    pub dim: usize,
    /// Number of streams addressed by `Var::Entry` (active or not).
    pub num_streams: usize,
    /// Streams whose lifted precoder is a PSD decision block.
    pub psd_streams: Vec<usize>,
    pub scalars: Vec<Scalar>,
    pub objective: AffineExpr,
    pub constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn count(&self, cone: ConeKind) -> usize {
        self.constraints.iter().filter(|c| c.cone == cone).count()
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        self.constraints.iter().any(|c| c.tag == tag)
    }

    pub fn remove_where(&mut self, pred: impl Fn(&Tag) -> bool) {
        self.constraints.retain(|c| !pred(&c.tag));
    }

    /// Pins a scalar to `value` and removes it from the variable list.
    pub fn fix_scalar(&mut self, s: Scalar, value: f64) {
        self.scalars.retain(|x| *x != s);
        self.objective.substitute(s, value);
        for c in &mut self.constraints {
            for e in &mut c.exprs {
                e.substitute(s, value);
            }
        }
    }

    /// Forces the lifted precoder of `stream` to zero.
    pub fn zero_stream(&mut self, stream: usize) {
        self.psd_streams.retain(|s| *s != stream);
        self.objective.drop_stream(stream);
        for c in &mut self.constraints {
            for e in &mut c.exprs {
                e.drop_stream(stream);
            }
        }
    }

    /// Removes scalars that no constraint or objective term references.
    pub fn prune_scalars(&mut self) {
        let used = |s: &Scalar| {
            let v = Var::Scalar(*s);
            self.objective.terms.iter().any(|(x, _)| *x == v)
                || self
                    .constraints
                    .iter()
                    .any(|c| c.exprs.iter().any(|e| e.terms.iter().any(|(x, _)| *x == v)))
        };
        let keep: Vec<Scalar> = self.scalars.iter().copied().filter(used).collect();
        self.scalars = keep;
    }

    /// Largest cone violation of an assignment.
    pub fn max_violation(&self, values: &Assignment) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.6e}", self.constant)?;
        for (v, c) in &self.terms {
            match v {
                Var::Scalar(s) => write!(f, " {c:+.6e}·{s:?}")?,
                Var::Entry { stream, row, col } => write!(f, " {c:+.6e}·P{stream}[{row},{col}]")?,
            }
        }
        Ok(())
    }
}

/// Line-oriented dump: header, variables, objective, then one line per
/// constraint expression.
impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "program dim={} psd_blocks={:?} scalars={}",
            self.dim,
            self.psd_streams,
            self.scalars.len()
        )?;
        for s in &self.scalars {
            writeln!(f, "var {s:?}")?;
        }
        writeln!(f, "maximize {}", self.objective)?;
        for c in &self.constraints {
            writeln!(f, "{:?} {:?}", c.cone, c.tag)?;
            for e in &c.exprs {
                writeln!(f, "  {e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment() -> Assignment {
        let mut scalars = BTreeMap::new();
        scalars.insert(Scalar::Theta, 0.5);
        scalars.insert(Scalar::Objective, 2.0);
        Assignment {
            scalars,
            blocks: vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])],
        }
    }

    #[test]
    fn inner_product_counts_off_diagonals_twice() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let e = AffineExpr::constant(0.0).plus_inner(0, &c, 1.0);
        // ⟨11ᵀ, P⟩ = 1 + 2 + 2·0.3
        assert!((e.eval(&assignment()) - 3.6).abs() < 1e-12);
    }

    #[test]
    fn substitution_and_compaction() {
        let mut e = AffineExpr::scalar(Scalar::Theta)
            .plus(Scalar::Theta, 2.0)
            .plus(Scalar::Objective, 1.0)
            .offset(1.0);
        let before = e.eval(&assignment());
        e.substitute(Scalar::Theta, 0.5);
        assert!((e.eval(&assignment()) - before).abs() < 1e-12);
        let c = AffineExpr::scalar(Scalar::Theta).plus(Scalar::Theta, -1.0).compact();
        assert!(c.terms.is_empty());
    }

    #[test]
    fn cone_violations() {
        let a = assignment();
        let soc = Constraint {
            tag: Tag::Power,
            cone: ConeKind::SecondOrder,
            exprs: vec![AffineExpr::constant(1.0), AffineExpr::constant(0.6), AffineExpr::constant(0.8)],
        };
        assert!(soc.violation(&a) < 1e-12);
        let exp = Constraint {
            tag: Tag::Power,
            cone: ConeKind::Exponential,
            exprs: vec![AffineExpr::constant(1.0), AffineExpr::constant(1.0), AffineExpr::constant(2.0)],
        };
        assert!((exp.violation(&a) - (std::f64::consts::E - 2.0)).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_defect, hermitian_part, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    /// Independent real and imaginary part per entry.
    Complex,
    /// Real diagonal plus complex strict upper triangle.
    Hermitian,
}

/// Handle to a matrix-valued group of real scalar variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: MatrixKind,
    pub indices: Vec<usize>,
}

impl MatrixVar {
    /// Reads the matrix out of a full variable vector.
    pub fn value(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        match self.kind {
            MatrixKind::Complex => {
                let n = self.rows * self.cols;
                for (p, z) in m.iter_mut().enumerate() {
                    *z = c(x[self.indices[p]], x[self.indices[n + p]]);
                }
            }
            MatrixKind::Hermitian => {
                let mut it = self.indices.iter();
                for i in 0..self.rows {
                    m[(i, i)] = c(x[*it.next().unwrap()], 0.0);
                }
                for j in 0..self.cols {
                    for i in 0..j {
                        let re = x[*it.next().unwrap()];
                        let im = x[*it.next().unwrap()];
                        m[(i, j)] = c(re, im);
                        m[(j, i)] = c(re, -im);
                    }
                }
            }
        }
        m
    }

    /// Writes `m` into the variable slots of `x`.
    pub fn assign(&self, m: &CMat, x: &mut [f64]) {
        match self.kind {
            MatrixKind::Complex => {
                let n = self.rows * self.cols;
                for (p, z) in m.iter().enumerate() {
                    x[self.indices[p]] = z.re;
                    x[self.indices[n + p]] = z.im;
                }
            }
            MatrixKind::Hermitian => {
                let mut it = self.indices.iter();
                for i in 0..self.rows {
                    x[*it.next().unwrap()] = m[(i, i)].re;
                }
                for j in 0..self.cols {
                    for i in 0..j {
                        let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                        x[*it.next().unwrap()] = z.re;
                        x[*it.next().unwrap()] = z.im;
                    }
                }
            }
        }
    }
}

mod cmat_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::channel::{matrix_to_rows, rows_to_matrix};
    use crate::linalg::CMat;

    #[derive(Serialize, Deserialize)]
    struct Shaped {
        rows: usize,
        cols: usize,
        data: Vec<Vec<[f64; 2]>>,
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        Shaped {
            rows: m.nrows(),
            cols: m.ncols(),
            data: matrix_to_rows(m),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let sh = Shaped::deserialize(d)?;
        if sh.rows == 0 || sh.cols == 0 {
            return Ok(CMat::zeros(sh.rows, sh.cols));
        }
        let m = rows_to_matrix(&sh.data).ok_or_else(|| serde::de::Error::custom("ragged matrix"))?;
        if m.shape() != (sh.rows, sh.cols) {
            return Err(serde::de::Error::custom("matrix shape does not match header"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiTerm {
    pub var: usize,
    #[serde(with = "cmat_serde")]
    pub matrix: CMat,
}

/// `constant + Σ x_var · matrix ⪰ 0`, every matrix Hermitian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiConstraint {
    pub name: String,
    #[serde(with = "cmat_serde")]
    pub constant: CMat,
    pub terms: Vec<LmiTerm>,
}

impl LmiConstraint {
    pub fn new(name: impl Into<String>, constant: CMat, terms: Vec<LmiTerm>) -> Result<Self> {
        let name = name.into();
        let n = constant.nrows();
        let check = |m: &CMat| -> Result<()> {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    context: "LMI coefficient",
                    expected: format!("{n}x{n}"),
                    actual: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if hermitian_defect(m) > 1e-10 * scale {
                return Err(Error::InvalidConfig(format!("LMI '{name}' has a non-Hermitian coefficient")));
            }
            Ok(())
        };
        check(&constant)?;
        for t in &terms {
            check(&t.matrix)?;
        }
        Ok(Self {
            name,
            constant: hermitian_part(&constant),
            terms: terms
                .into_iter()
                .map(|t| LmiTerm {
                    var: t.var,
                    matrix: hermitian_part(&t.matrix),
                })
                .collect(),
        })
    }

    /// Extracts the affine structure of `f` by evaluating it at the origin and
    /// at each unit vector in `vars`; `f` must be affine in those variables
    /// and independent of all others.
    pub fn from_affine_fn(name: impl Into<String>, nvars: usize, vars: &[usize], f: impl Fn(&[f64]) -> CMat) -> Result<Self> {
        let mut x = vec![0.0; nvars];
        let constant = f(&x);
        let mut terms = Vec::with_capacity(vars.len());
        for &v in vars {
            x[v] = 1.0;
            let m = f(&x) - &constant;
            x[v] = 0.0;
            if m.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                terms.push(LmiTerm { var: v, matrix: m });
            }
        }
        Self::new(name, constant, terms)
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, x: &[f64]) -> CMat {
        let mut m = self.constant.clone();
        for t in &self.terms {
            m += &t.matrix * c(x[t.var], 0.0);
        }
        m
    }
}

/// `weight · log2 det` of one constraint block, added to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDetTerm {
    pub constraint: usize,
    pub weight: f64,
}

/// Optimize `c^T x + Σ w_l log2 det F_l(x)` subject to `F_j(x) ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub sense: Sense,
    pub variables: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<LmiConstraint>,
    pub logdet: Vec<LogDetTerm>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            logdet: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> usize {
        self.variables.push(name.into());
        self.objective.push(0.0);
        self.variables.len() - 1
    }

    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize, kind: MatrixKind) -> MatrixVar {
        let mut indices = Vec::new();
        match kind {
            MatrixKind::Complex => {
                for part in ["re", "im"] {
                    for j in 0..cols {
                        for i in 0..rows {
                            indices.push(self.add_scalar(format!("{name}.{part}[{i},{j}]")));
                        }
                    }
                }
            }
            MatrixKind::Hermitian => {
                assert_eq!(rows, cols, "Hermitian variable must be square");
                for i in 0..rows {
                    indices.push(self.add_scalar(format!("{name}[{i},{i}]")));
                }
                for j in 0..cols {
                    for i in 0..j {
                        indices.push(self.add_scalar(format!("{name}.re[{i},{j}]")));
                        indices.push(self.add_scalar(format!("{name}.im[{i},{j}]")));
                    }
                }
            }
        }
        MatrixVar {
            name: name.to_string(),
            rows,
            cols,
            kind,
            indices,
        }
    }

    pub fn set_cost(&mut self, var: usize, coefficient: f64) {
        self.objective[var] = coefficient;
    }

    pub fn add_constraint(&mut self, lmi: LmiConstraint) -> usize {
        self.constraints.push(lmi);
        self.constraints.len() - 1
    }

    pub fn add_logdet(&mut self, constraint: usize, weight: f64) {
        self.logdet.push(LogDetTerm { constraint, weight });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Objective value at `x` in the problem's own sense; `None` when a
    /// log-det block is not positive definite.
    pub fn objective_value(&self, x: &[f64]) -> Option<f64> {
        let mut v: f64 = self.objective.iter().zip(x).map(|(a, b)| a * b).sum();
        for term in &self.logdet {
            let block = self.constraints[term.constraint].evaluate(x);
            v += term.weight * crate::linalg::log2_det_hpd(&block)?;
        }
        Some(v)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.objective.len() != self.variables.len() {
            return Err(Error::InvalidConfig("objective length differs from variable count".into()));
        }
        for (j, lmi) in self.constraints.iter().enumerate() {
            if lmi.terms.iter().any(|t| t.var >= self.variables.len()) {
                return Err(Error::InvalidConfig(format!("constraint {j} references an unknown variable")));
            }
        }
        for term in &self.logdet {
            if term.constraint >= self.constraints.len() {
                return Err(Error::InvalidConfig("log-det term references an unknown constraint".into()));
            }
            let concave = match self.sense {
                Sense::Maximize => term.weight >= 0.0,
                Sense::Minimize => term.weight <= 0.0,
            };
            if !concave {
                return Err(Error::InvalidConfig("log-det weight has the wrong sign for a convex problem".into()));
            }
        }
        Ok(())
    }
}

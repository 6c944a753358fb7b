//! Butcher and modified Shu–Osher representations of explicit Runge–Kutta
//! methods, structural validation, conversion between the two forms, and the
//! JSON document formats used for catalog files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack for the row-sum abscissa check and Shu–Osher consistency.
pub const ROW_SUM_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableauError {
    #[error("tableau must have at least one stage")]
    Empty,
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("`{field}` is not explicit: entry ({row}, {col}) = {value} on or above the diagonal")]
    NotExplicit {
        field: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("`{field}` contains a non-finite entry")]
    NonFinite { field: &'static str },
    #[error("Shu–Osher row {row} is inconsistent: v + sum(alpha) = {sum}")]
    Inconsistent { row: usize, sum: f64 },
    #[error("non-explicit Shu–Osher form: I - alpha is singular")]
    SingularShuOsher,
    #[error("malformed tableau document: {0}")]
    Malformed(String),
}

/// Explicit `s`-stage Runge–Kutta method in Butcher form.
///
/// The abscissae are always the row sums of `A` when built through
/// [`ButcherTableau::new`]; [`ButcherTableau::from_raw`] exists only so that
/// externally supplied data can be diagnosed by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, TableauError> {
        let s = b.len();
        if s == 0 {
            return Err(TableauError::Empty);
        }
        if a.len() != s {
            return Err(TableauError::Dimension {
                field: "A",
                expected: s,
                found: a.len(),
            });
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != s {
                return Err(TableauError::Dimension {
                    field: "A",
                    expected: s,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(TableauError::NonFinite { field: "A" });
                }
                if j >= i && x != 0.0 {
                    return Err(TableauError::NotExplicit {
                        field: "A",
                        row: i + 1,
                        col: j + 1,
                        value: x,
                    });
                }
            }
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(TableauError::NonFinite { field: "b" });
        }
        let c = a.iter().map(|row| row.iter().sum()).collect();
        Ok(Self { a, b, c })
    }

    /// Stores the three arrays verbatim without any checks.
    pub fn from_raw(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Self {
        Self { a, b, c }
    }

    /// Builds a tableau from the strictly lower triangular part given row by
    /// row: `lower[i]` holds `a_{i+1,1..=i}`.
    pub fn from_lower(lower: &[Vec<f64>], b: Vec<f64>) -> Result<Self, TableauError> {
        let s = b.len();
        let mut a = vec![vec![0.0; s]; s];
        for (i, row) in lower.iter().enumerate() {
            if i + 1 >= s || row.len() > i + 1 {
                return Err(TableauError::Dimension {
                    field: "A",
                    expected: i + 1,
                    found: row.len(),
                });
            }
            a[i + 1][..row.len()].copy_from_slice(row);
        }
        Self::new(a, b)
    }

    pub fn forward_euler() -> Self {
        Self::new(vec![vec![0.0]], vec![1.0]).expect("forward Euler is explicit")
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `K = [A; b^T]`, the `(s+1) x s` stacked coefficient matrix.
    pub fn k_matrix(&self) -> KMatrix {
        let mut rows = self.a.clone();
        rows.push(self.b.clone());
        KMatrix { rows }
    }

    /// Stability polynomial `R(z) = 1 + z b^T (I - zA)^{-1} e` evaluated at
    /// a real argument.
    pub fn stability_function(&self, z: f64) -> f64 {
        let s = self.stages();
        let mut y = vec![0.0; s];
        for i in 0..s {
            let acc: f64 = (0..i).map(|j| self.a[i][j] * y[j]).sum();
            y[i] = 1.0 + z * acc;
        }
        1.0 + z * self.b.iter().zip(&y).map(|(b, y)| b * y).sum::<f64>()
    }
}

/// The stacked matrix `K = [A; b^T]` of an explicit method.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl KMatrix {
    pub fn stages(&self) -> usize {
        self.rows.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Empty,
    Dimension { field: &'static str },
    NonFinite,
    NotExplicit { col: usize },
    RowSum { expected: f64, found: f64 },
    ZeroWeight,
    UnreachableStage,
}

/// A single failed invariant. Stage numbers are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub stage: usize,
    pub severity: Severity,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.kind {
            ViolationKind::Empty => write!(f, "{level}: no stages"),
            ViolationKind::Dimension { field } => {
                write!(f, "{level}: `{field}` has the wrong length at stage {}", self.stage)
            }
            ViolationKind::NonFinite => write!(f, "{level}: non-finite entry at stage {}", self.stage),
            ViolationKind::NotExplicit { col } => write!(
                f,
                "{level}: a[{}][{col}] is on or above the diagonal",
                self.stage
            ),
            ViolationKind::RowSum { expected, found } => write!(
                f,
                "{level}: c[{}] = {found} but the row sum of A is {expected}",
                self.stage
            ),
            ViolationKind::ZeroWeight => write!(f, "{level}: b[{}] = 0", self.stage),
            ViolationKind::UnreachableStage => {
                write!(f, "{level}: stage {} never influences the update", self.stage)
            }
        }
    }
}

/// Checks the structural invariants of a tableau. Reducibility (a zero
/// weight or a stage that never feeds the update) is reported with
/// [`Severity::Warning`]; everything else is an error.
pub fn validate(tableau: &ButcherTableau, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let s = tableau.b.len();
    let err = |kind, stage| Violation {
        kind,
        stage,
        severity: Severity::Error,
    };
    if s == 0 {
        out.push(err(ViolationKind::Empty, 0));
        return out;
    }
    if tableau.a.len() != s {
        out.push(err(ViolationKind::Dimension { field: "A" }, 0));
        return out;
    }
    if tableau.c.len() != s {
        out.push(err(ViolationKind::Dimension { field: "c" }, 0));
        return out;
    }
    for (i, row) in tableau.a.iter().enumerate() {
        if row.len() != s {
            out.push(err(ViolationKind::Dimension { field: "A" }, i + 1));
            continue;
        }
        if row.iter().any(|x| !x.is_finite()) || !tableau.b[i].is_finite() || !tableau.c[i].is_finite() {
            out.push(err(ViolationKind::NonFinite, i + 1));
            continue;
        }
        for (j, &x) in row.iter().enumerate().skip(i) {
            if x != 0.0 {
                out.push(err(ViolationKind::NotExplicit { col: j + 1 }, i + 1));
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - tableau.c[i]).abs() > tol {
            out.push(err(
                ViolationKind::RowSum {
                    expected: sum,
                    found: tableau.c[i],
                },
                i + 1,
            ));
        }
    }
    if out.iter().any(|v| matches!(v.kind, ViolationKind::Dimension { .. })) {
        return out;
    }

    // A stage is live if its derivative reaches the update directly through
    // b or through some later live stage.
    let mut live = vec![false; s];
    for j in (0..s).rev() {
        live[j] = tableau.b[j] != 0.0 || (j + 1..s).any(|i| live[i] && tableau.a[i][j] != 0.0);
    }
    for j in 0..s {
        if tableau.b[j] == 0.0 {
            out.push(Violation {
                kind: ViolationKind::ZeroWeight,
                stage: j + 1,
                severity: Severity::Warning,
            });
        }
        if !live[j] {
            out.push(Violation {
                kind: ViolationKind::UnreachableStage,
                stage: j + 1,
                severity: Severity::Warning,
            });
        }
    }
    out
}

/// Modified Shu–Osher form
/// `Y_i = v_i u + sum_j (alpha_ij Y_j + dt beta_ij F(Y_j))`, `i = 1..=s+1`,
/// with `u_{n+1} = Y_{s+1}`. Rows are 0-based here: row `i` is stage `i+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuOsherForm {
    s: usize,
    v: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl ShuOsherForm {
    pub fn new(v: Vec<f64>, alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self, TableauError> {
        if v.len() < 2 {
            return Err(TableauError::Empty);
        }
        let s = v.len() - 1;
        for (field, m) in [("alpha", &alpha), ("beta", &beta)] {
            if m.len() != s + 1 {
                return Err(TableauError::Dimension {
                    field,
                    expected: s + 1,
                    found: m.len(),
                });
            }
            for (i, row) in m.iter().enumerate() {
                if row.len() != s {
                    return Err(TableauError::Dimension {
                        field,
                        expected: s,
                        found: row.len(),
                    });
                }
                for (j, &x) in row.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(TableauError::NonFinite { field });
                    }
                    if j >= i && x != 0.0 {
                        return Err(TableauError::NotExplicit {
                            field,
                            row: i + 1,
                            col: j + 1,
                            value: x,
                        });
                    }
                }
            }
        }
        for (i, row) in alpha.iter().enumerate() {
            let sum = v[i] + row.iter().sum::<f64>();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(TableauError::Inconsistent { row: i + 1, sum });
            }
        }
        Ok(Self { s, v, alpha, beta })
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn alpha(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    pub fn to_butcher(&self) -> Result<ButcherTableau, TableauError> {
        shu_osher_to_butcher(self)
    }
}

/// `A = (I - alpha_top)^{-1} beta_top`, `b^T = beta_last + alpha_last A`.
///
/// `I - alpha_top` is unit lower triangular, so the solve is a forward
/// substitution over rows.
pub fn shu_osher_to_butcher(so: &ShuOsherForm) -> Result<ButcherTableau, TableauError> {
    let s = so.s;
    let mut a = vec![vec![0.0; s]; s];
    for i in 0..s {
        for j in 0..s {
            let mut x = so.beta[i][j];
            for k in 0..i {
                x += so.alpha[i][k] * a[k][j];
            }
            if !x.is_finite() {
                return Err(TableauError::SingularShuOsher);
            }
            a[i][j] = x;
        }
    }
    let b = (0..s)
        .map(|j| so.beta[s][j] + (0..s).map(|k| so.alpha[s][k] * a[k][j]).sum::<f64>())
        .collect();
    // Entries on or above the diagonal are exactly zero by construction.
    ButcherTableau::new(a, b)
}

/// On-disk tableau document. `c` is never serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableauDocument {
    pub label: String,
    pub s: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub q: Option<u32>,
    pub p: Option<u32>,
}

impl TableauDocument {
    pub fn from_tableau(label: impl Into<String>, tableau: &ButcherTableau, q: Option<u32>, p: Option<u32>) -> Self {
        Self {
            label: label.into(),
            s: tableau.stages(),
            a: tableau.a.clone(),
            b: tableau.b.clone(),
            q,
            p,
        }
    }

    pub fn tableau(&self) -> Result<ButcherTableau, TableauError> {
        if self.b.len() != self.s {
            return Err(TableauError::Dimension {
                field: "b",
                expected: self.s,
                found: self.b.len(),
            });
        }
        ButcherTableau::new(self.a.clone(), self.b.clone())
    }
}

pub fn parse_tableau(text: &[u8]) -> Result<(TableauDocument, ButcherTableau), TableauError> {
    let doc: TableauDocument =
        serde_json::from_slice(text).map_err(|e| TableauError::Malformed(e.to_string()))?;
    let tableau = doc.tableau()?;
    Ok((doc, tableau))
}

/// Pretty-printed JSON with a trailing newline. `serde_json` prints the
/// shortest decimal that round-trips, so parse∘emit is exact.
pub fn emit_tableau(doc: &TableauDocument) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("tableau documents always serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuOsherDocument {
    pub s: usize,
    pub v: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

pub fn parse_shu_osher(text: &[u8]) -> Result<ShuOsherForm, TableauError> {
    let doc: ShuOsherDocument =
        serde_json::from_slice(text).map_err(|e| TableauError::Malformed(e.to_string()))?;
    if doc.v.len() != doc.s + 1 {
        return Err(TableauError::Dimension {
            field: "v",
            expected: doc.s + 1,
            found: doc.v.len(),
        });
    }
    ShuOsherForm::new(doc.v, doc.alpha, doc.beta)
}

pub fn emit_shu_osher(so: &ShuOsherForm) -> Vec<u8> {
    let doc = ShuOsherDocument {
        s: so.s,
        v: so.v.clone(),
        alpha: so.alpha.clone(),
        beta: so.beta.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("Shu–Osher documents always serialize");
    out.push(b'\n');
    out
}

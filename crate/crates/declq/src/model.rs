//! Problem data types, partition bookkeeping, and validation.
//!
//! A problem instance is a plant ([`PartitionedSystem`]), a quadratic cost
//! ([`CostWeights`]), and an observation map ([`OutputMap`]). The state and
//! input are each split in two, one slice per controller; all block
//! accessors follow that split.

use nalgebra::DMatrix;

use crate::Error;

/// Silent symmetrization threshold for weight matrices.
pub const SYM_SILENT_TOL: f64 = 1e-10;
/// Above this asymmetry a weight matrix is rejected instead of symmetrized.
pub const SYM_WARN_TOL: f64 = 1e-6;
/// Smallest admissible eigenvalue for matrices required to be PSD.
pub const PSD_TOL: f64 = -1e-10;

/// Plant matrices `A` (n x n) and `B` (n x m) with a two-block partition
/// of the state (`n1 + n2 = n`) and input (`m1 + m2 = m`) dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl PartitionedSystem {
    /// Builds a system, rejecting malformed shapes, empty partitions, and
    /// non-finite entries.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        n1: usize,
        n2: usize,
        m1: usize,
        m2: usize,
    ) -> Result<Self, Error> {
        if n1 == 0 || n2 == 0 || m1 == 0 || m2 == 0 {
            return Err(Error::Dimension(
                "partition sizes n1, n2, m1, m2 must all be >= 1".into(),
            ));
        }
        let (n, m) = (n1 + n2, m1 + m2);
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() != m {
            return Err(Error::Dimension(format!(
                "B must be {n}x{m}, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("A and B must have finite entries".into()));
        }
        Ok(Self { a, b, n1, n2, m1, m2 })
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn m(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn a11(&self) -> DMatrix<f64> {
        self.a.view((0, 0), (self.n1, self.n1)).into_owned()
    }

    pub fn a12(&self) -> DMatrix<f64> {
        self.a.view((0, self.n1), (self.n1, self.n2)).into_owned()
    }

    pub fn a21(&self) -> DMatrix<f64> {
        self.a.view((self.n1, 0), (self.n2, self.n1)).into_owned()
    }

    pub fn a22(&self) -> DMatrix<f64> {
        self.a.view((self.n1, self.n1), (self.n2, self.n2)).into_owned()
    }

    pub fn b11(&self) -> DMatrix<f64> {
        self.b.view((0, 0), (self.n1, self.m1)).into_owned()
    }

    pub fn b12(&self) -> DMatrix<f64> {
        self.b.view((0, self.m1), (self.n1, self.m2)).into_owned()
    }

    pub fn b21(&self) -> DMatrix<f64> {
        self.b.view((self.n1, 0), (self.n2, self.m1)).into_owned()
    }

    pub fn b22(&self) -> DMatrix<f64> {
        self.b.view((self.n1, self.m1), (self.n2, self.m2)).into_owned()
    }
}

/// Cost data: state weight `Q`, input weight `R`, terminal penalty, and the
/// seed `delta` of the forward value recursion (`P(0) = delta*I`).
///
/// The terminal penalty enters only the cost evaluation; the forward scheme
/// is always seeded with `delta*I`, so the two are independent fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_terminal: DMatrix<f64>,
    pub delta: f64,
    ingest_asymmetry: f64,
}

impl CostWeights {
    /// Stores the weights, symmetrizing each matrix by `(M + M')/2` when its
    /// asymmetry is at most [`SYM_WARN_TOL`]. Worse asymmetry is kept as-is
    /// and flagged fatal by [`validate_problem`].
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p_terminal: DMatrix<f64>,
        delta: f64,
    ) -> Result<Self, Error> {
        for (name, m) in [("Q", &q), ("R", &r), ("P_terminal", &p_terminal)] {
            if m.nrows() != m.ncols() {
                return Err(Error::Dimension(format!(
                    "{name} must be square, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let mut ingest_asymmetry = 0.0f64;
        let symmetrize = |m: DMatrix<f64>, worst: &mut f64| -> DMatrix<f64> {
            let asym = (&m - m.transpose()).amax();
            *worst = worst.max(asym);
            if asym <= SYM_WARN_TOL {
                (&m + m.transpose()) * 0.5
            } else {
                m
            }
        };
        let q = symmetrize(q, &mut ingest_asymmetry);
        let r = symmetrize(r, &mut ingest_asymmetry);
        let p_terminal = symmetrize(p_terminal, &mut ingest_asymmetry);
        Ok(Self { q, r, p_terminal, delta, ingest_asymmetry })
    }

    /// Worst asymmetry `max |M - M'|` observed across the weight matrices
    /// before symmetrization.
    pub fn ingest_asymmetry(&self) -> f64 {
        self.ingest_asymmetry
    }

    pub fn q11(&self, n1: usize) -> DMatrix<f64> {
        self.q.view((0, 0), (n1, n1)).into_owned()
    }

    pub fn q12(&self, n1: usize) -> DMatrix<f64> {
        let n2 = self.q.ncols() - n1;
        self.q.view((0, n1), (n1, n2)).into_owned()
    }

    pub fn q22(&self, n1: usize) -> DMatrix<f64> {
        let n2 = self.q.ncols() - n1;
        self.q.view((n1, n1), (n2, n2)).into_owned()
    }

    pub fn r11(&self, m1: usize) -> DMatrix<f64> {
        self.r.view((0, 0), (m1, m1)).into_owned()
    }

    pub fn r12(&self, m1: usize) -> DMatrix<f64> {
        let m2 = self.r.ncols() - m1;
        self.r.view((0, m1), (m1, m2)).into_owned()
    }

    pub fn r22(&self, m1: usize) -> DMatrix<f64> {
        let m2 = self.r.ncols() - m1;
        self.r.view((m1, m1), (m2, m2)).into_owned()
    }
}

/// Observation maps `y_i = H_i x_i` of the two controllers, `H_i` of size
/// `p_i x n_i`. State feedback is the special case where both are identity.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMap {
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
}

impl OutputMap {
    pub fn new(h1: DMatrix<f64>, h2: DMatrix<f64>) -> Self {
        Self { h1, h2 }
    }

    /// State-feedback map: `H1 = I_{n1}`, `H2 = I_{n2}`, so the assembled
    /// block-diagonal `H` is the n x n identity.
    pub fn identity(n1: usize, n2: usize) -> Self {
        Self { h1: DMatrix::identity(n1, n1), h2: DMatrix::identity(n2, n2) }
    }

    pub fn p1(&self) -> usize {
        self.h1.nrows()
    }

    pub fn p2(&self) -> usize {
        self.h2.nrows()
    }

    /// Block-diagonal `H = blkdiag(H1, H2)`, size `(p1+p2) x (n1+n2)`.
    pub fn assembled(&self) -> DMatrix<f64> {
        block_diagonal(&self.h1, &self.h2)
    }

    /// True when the assembled map is exactly the identity.
    pub fn is_identity(&self) -> bool {
        let (p1, p2) = (self.p1(), self.p2());
        p1 == self.h1.ncols()
            && p2 == self.h2.ncols()
            && self.h1 == DMatrix::identity(p1, p1)
            && self.h2 == DMatrix::identity(p2, p2)
    }
}

/// One gain per controller: `K1` is `m1 x p1`, `K2` is `m2 x p2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
}

impl GainPair {
    pub fn new(k1: DMatrix<f64>, k2: DMatrix<f64>) -> Self {
        Self { k1, k2 }
    }

    pub fn zeros(m1: usize, p1: usize, m2: usize, p2: usize) -> Self {
        Self { k1: DMatrix::zeros(m1, p1), k2: DMatrix::zeros(m2, p2) }
    }

    /// Splits an assembled block-diagonal gain back into its two blocks,
    /// rejecting matrices with nonzero off-diagonal coupling.
    pub fn from_block_diagonal(k: &DMatrix<f64>, m1: usize, p1: usize) -> Result<Self, Error> {
        if k.nrows() <= m1 || k.ncols() <= p1 {
            return Err(Error::Dimension(format!(
                "assembled gain {}x{} too small for split at ({m1}, {p1})",
                k.nrows(),
                k.ncols()
            )));
        }
        let (m2, p2) = (k.nrows() - m1, k.ncols() - p1);
        let off1 = k.view((0, p1), (m1, p2));
        let off2 = k.view((m1, 0), (m2, p1));
        if off1.iter().any(|&v| v != 0.0) || off2.iter().any(|&v| v != 0.0) {
            return Err(Error::Validation(
                "assembled gain has nonzero off-diagonal blocks".into(),
            ));
        }
        Ok(Self {
            k1: k.view((0, 0), (m1, p1)).into_owned(),
            k2: k.view((m1, p1), (m2, p2)).into_owned(),
        })
    }
}

/// `blkdiag(K1, K2)` with exact zeros off the diagonal.
pub fn assemble_gain(k: &GainPair) -> DMatrix<f64> {
    block_diagonal(&k.k1, &k.k2)
}

pub(crate) fn block_diagonal(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols() + bottom.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), top.ncols()), bottom.shape()).copy_from(bottom);
    out
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Outcome of [`validate_problem`]: fatal violations and non-fatal warnings.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks a full problem instance: cross-object dimensions, weight-matrix
/// symmetry and positive semidefiniteness, and the positivity of the value
/// seed `delta`.
pub fn validate_problem(
    sys: &PartitionedSystem,
    cost: &CostWeights,
    hmap: &OutputMap,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, m) = (sys.n(), sys.m());

    if cost.q.nrows() != n {
        report.errors.push(format!("Q must be {n}x{n}, got {}x{}", cost.q.nrows(), cost.q.ncols()));
    }
    if cost.r.nrows() != m {
        report.errors.push(format!("R must be {m}x{m}, got {}x{}", cost.r.nrows(), cost.r.ncols()));
    }
    if cost.p_terminal.nrows() != n {
        report.errors.push(format!(
            "P_terminal must be {n}x{n}, got {}x{}",
            cost.p_terminal.nrows(),
            cost.p_terminal.ncols()
        ));
    }
    if hmap.h1.ncols() != sys.n1 {
        report.errors.push(format!(
            "H1 must have {} columns (size of x1), got {}",
            sys.n1,
            hmap.h1.ncols()
        ));
    }
    if hmap.h2.ncols() != sys.n2 {
        report.errors.push(format!(
            "H2 must have {} columns (size of x2), got {}",
            sys.n2,
            hmap.h2.ncols()
        ));
    }

    let asym = cost.ingest_asymmetry();
    if asym > SYM_WARN_TOL {
        report.errors.push(format!(
            "weight matrix asymmetry {asym:.3e} exceeds {SYM_WARN_TOL:.0e}"
        ));
    } else if asym > SYM_SILENT_TOL {
        report.warnings.push(format!(
            "weight matrix asymmetry {asym:.3e} symmetrized on ingest"
        ));
    }

    if report.errors.is_empty() {
        for (name, mat) in
            [("Q", &cost.q), ("R", &cost.r), ("P_terminal", &cost.p_terminal)]
        {
            let min_eig = min_symmetric_eigenvalue(mat);
            if min_eig < PSD_TOL {
                report
                    .errors
                    .push(format!("{name} is indefinite: min eigenvalue {min_eig:.3e}"));
            }
        }
    }

    if cost.delta <= 0.0 {
        report.errors.push(format!("delta must be positive, got {}", cost.delta));
    }

    report
}

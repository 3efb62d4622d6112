//! Forward propagation of the closed-loop second moments and of the value
//! matrix `P`, plus assembly of the gain-equation coefficients.
//!
//! The moment blocks satisfy `X(k+1) = F X(k) F'` with the closed loop
//! `F = A + B K H`; the value matrix runs forward as
//! `P(k+1) = Q + H'K'RKH + F' P(k) F` from the seed `P(0) = delta*I`.
//! Both recursions preserve symmetry only in exact arithmetic, so every
//! step re-symmetrizes its result.

use nalgebra::{DMatrix, DVector};

use crate::model::{assemble_gain, block_diagonal, CostWeights, GainPair, OutputMap, PartitionedSystem};
use crate::Error;

/// Second-moment blocks of the state: `X11 = x1 x1'`, `X12 = x1 x2'`,
/// `X22 = x2 x2'` when seeded from an outer product.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub x11: DMatrix<f64>,
    pub x12: DMatrix<f64>,
    pub x22: DMatrix<f64>,
}

impl MomentState {
    /// Full symmetric matrix `[[X11, X12], [X12', X22]]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.x11.nrows(), self.x22.nrows());
        let mut x = DMatrix::zeros(n1 + n2, n1 + n2);
        x.view_mut((0, 0), (n1, n1)).copy_from(&self.x11);
        x.view_mut((0, n1), (n1, n2)).copy_from(&self.x12);
        x.view_mut((n1, 0), (n2, n1)).copy_from(&self.x12.transpose());
        x.view_mut((n1, n1), (n2, n2)).copy_from(&self.x22);
        x
    }

    fn from_assembled(x: &DMatrix<f64>, n1: usize) -> Self {
        let n2 = x.nrows() - n1;
        let x11 = x.view((0, 0), (n1, n1)).into_owned();
        let x22 = x.view((n1, n1), (n2, n2)).into_owned();
        Self {
            x11: (&x11 + x11.transpose()) * 0.5,
            x12: x.view((0, n1), (n1, n2)).into_owned(),
            x22: (&x22 + x22.transpose()) * 0.5,
        }
    }
}

/// Seeds the moment blocks from the outer product of an initial state split
/// at `n1`.
pub fn seed_moments(x0: &DVector<f64>, n1: usize) -> Result<MomentState, Error> {
    if n1 == 0 || n1 >= x0.len() {
        return Err(Error::Dimension(format!(
            "state split n1 = {n1} must satisfy 1 <= n1 < {}",
            x0.len()
        )));
    }
    let x1 = x0.rows(0, n1).into_owned();
    let x2 = x0.rows(n1, x0.len() - n1).into_owned();
    Ok(MomentState {
        x11: &x1 * x1.transpose(),
        x12: &x1 * x2.transpose(),
        x22: &x2 * x2.transpose(),
    })
}

/// Advances the moment blocks one step under the closed loop `A + B K H`.
pub fn propagate_moments(
    x: &MomentState,
    k: &GainPair,
    sys: &PartitionedSystem,
    hmap: &OutputMap,
) -> Result<MomentState, Error> {
    check_loop_dims(x, k, sys, hmap)?;
    let f = closed_loop(sys, k, hmap);
    let next = &f * x.assembled() * f.transpose();
    Ok(MomentState::from_assembled(&next, sys.n1))
}

/// Same update as [`propagate_moments`] written out block by block, four
/// congruence terms per block. Kept as an independent route for testing the
/// factored form.
pub fn propagate_moments_expanded(
    x: &MomentState,
    k: &GainPair,
    sys: &PartitionedSystem,
    hmap: &OutputMap,
) -> Result<MomentState, Error> {
    check_loop_dims(x, k, sys, hmap)?;
    let f11 = sys.a11() + sys.b11() * &k.k1 * &hmap.h1;
    let f12 = sys.a12() + sys.b12() * &k.k2 * &hmap.h2;
    let f21 = sys.a21() + sys.b21() * &k.k1 * &hmap.h1;
    let f22 = sys.a22() + sys.b22() * &k.k2 * &hmap.h2;
    let x12t = x.x12.transpose();
    let x11 = &f11 * &x.x11 * f11.transpose()
        + &f11 * &x.x12 * f12.transpose()
        + &f12 * &x12t * f11.transpose()
        + &f12 * &x.x22 * f12.transpose();
    let x12 = &f11 * &x.x11 * f21.transpose()
        + &f11 * &x.x12 * f22.transpose()
        + &f12 * &x12t * f21.transpose()
        + &f12 * &x.x22 * f22.transpose();
    let x22 = &f21 * &x.x11 * f21.transpose()
        + &f21 * &x.x12 * f22.transpose()
        + &f22 * &x12t * f21.transpose()
        + &f22 * &x.x22 * f22.transpose();
    Ok(MomentState {
        x11: (&x11 + x11.transpose()) * 0.5,
        x12,
        x22: (&x22 + x22.transpose()) * 0.5,
    })
}

/// Value matrix of the forward recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub p: DMatrix<f64>,
}

impl RiccatiState {
    /// Forward seed `P = delta * I`.
    pub fn seed(delta: f64, n: usize) -> Self {
        Self { p: DMatrix::identity(n, n) * delta }
    }
}

/// One forward value step `P' = Q + H'K'RKH + (A+BKH)' P (A+BKH)`,
/// re-symmetrized.
pub fn riccati_forward_step(
    p: &RiccatiState,
    k: &GainPair,
    sys: &PartitionedSystem,
    cost: &CostWeights,
    hmap: &OutputMap,
) -> Result<RiccatiState, Error> {
    let n = sys.n();
    if p.p.nrows() != n || p.p.ncols() != n {
        return Err(Error::Dimension(format!(
            "P must be {n}x{n}, got {}x{}",
            p.p.nrows(),
            p.p.ncols()
        )));
    }
    if cost.q.nrows() != n || cost.r.nrows() != sys.m() {
        return Err(Error::Dimension("cost weights do not match the system".into()));
    }
    let kh = assemble_gain(k) * block_diagonal(&hmap.h1, &hmap.h2);
    let f = &sys.a + &sys.b * &kh;
    let next = &cost.q + kh.transpose() * &cost.r * &kh + f.transpose() * &p.p * &f;
    Ok(RiccatiState { p: (&next + next.transpose()) * 0.5 })
}

/// Coefficients of the coupled gain equations: `upsilon = R + B'PB`
/// (symmetric) and `m = B'PA`, with block views under the input/state
/// partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonM {
    pub upsilon: DMatrix<f64>,
    pub m: DMatrix<f64>,
    m1: usize,
    m2: usize,
    n1: usize,
    n2: usize,
}

impl UpsilonM {
    pub fn upsilon11(&self) -> DMatrix<f64> {
        self.upsilon.view((0, 0), (self.m1, self.m1)).into_owned()
    }

    pub fn upsilon12(&self) -> DMatrix<f64> {
        self.upsilon.view((0, self.m1), (self.m1, self.m2)).into_owned()
    }

    pub fn upsilon22(&self) -> DMatrix<f64> {
        self.upsilon.view((self.m1, self.m1), (self.m2, self.m2)).into_owned()
    }

    pub fn m11(&self) -> DMatrix<f64> {
        self.m.view((0, 0), (self.m1, self.n1)).into_owned()
    }

    pub fn m12(&self) -> DMatrix<f64> {
        self.m.view((0, self.n1), (self.m1, self.n2)).into_owned()
    }

    pub fn m21(&self) -> DMatrix<f64> {
        self.m.view((self.m1, 0), (self.m2, self.n1)).into_owned()
    }

    pub fn m22(&self) -> DMatrix<f64> {
        self.m.view((self.m1, self.n1), (self.m2, self.n2)).into_owned()
    }
}

/// Forms `upsilon = R + B'PB` (symmetrized) and `m = B'PA` from the current
/// value matrix.
pub fn assemble_upsilon_m(p: &RiccatiState, sys: &PartitionedSystem, cost: &CostWeights) -> UpsilonM {
    let bt_p = sys.b.transpose() * &p.p;
    let upsilon = &cost.r + &bt_p * &sys.b;
    UpsilonM {
        upsilon: (&upsilon + upsilon.transpose()) * 0.5,
        m: &bt_p * &sys.a,
        m1: sys.m1,
        m2: sys.m2,
        n1: sys.n1,
        n2: sys.n2,
    }
}

pub(crate) fn closed_loop(sys: &PartitionedSystem, k: &GainPair, hmap: &OutputMap) -> DMatrix<f64> {
    &sys.a + &sys.b * assemble_gain(k) * block_diagonal(&hmap.h1, &hmap.h2)
}

fn check_loop_dims(
    x: &MomentState,
    k: &GainPair,
    sys: &PartitionedSystem,
    hmap: &OutputMap,
) -> Result<(), Error> {
    if x.x11.nrows() != sys.n1 || x.x22.nrows() != sys.n2 {
        return Err(Error::Dimension(format!(
            "moment blocks ({}, {}) do not match the state partition ({}, {})",
            x.x11.nrows(),
            x.x22.nrows(),
            sys.n1,
            sys.n2
        )));
    }
    if x.x12.shape() != (sys.n1, sys.n2) {
        return Err(Error::Dimension("X12 must be n1 x n2".into()));
    }
    if hmap.h1.ncols() != sys.n1 || hmap.h2.ncols() != sys.n2 {
        return Err(Error::Dimension("output maps do not match the state partition".into()));
    }
    if k.k1.shape() != (sys.m1, hmap.p1()) || k.k2.shape() != (sys.m2, hmap.p2()) {
        return Err(Error::Dimension(format!(
            "gains ({:?}, {:?}) do not match (m1 x p1, m2 x p2) = (({}, {}), ({}, {}))",
            k.k1.shape(),
            k.k2.shape(),
            sys.m1,
            hmap.p1(),
            sys.m2,
            hmap.p2()
        )));
    }
    Ok(())
}

//! Vectorized form of the coupled gain equations.
//!
//! The stationarity conditions couple `K1` and `K2` through the moment
//! blocks. Stacking `xbar = [vec(K1); vec(K2)]` (column-major) and applying
//! `vec(ABC) = (C' kron A) vec(B)` turns them into one symmetric PSD system
//! `Abar xbar = bbar`, where with `S_ij = H_i X_ij H_j'`:
//!
//! ```text
//! Abar = [ S11' kron U11    S12  kron U12  ]      b1 = -vec((M11 X11 + M12 X12') H1')
//!        [ S12' kron U12'   S22' kron U22  ]      b2 = -vec((M21 X12 + M22 X22) H2')
//! ```
//!
//! `Abar` is the structure-selected principal part of the PSD product
//! `S' kron Upsilon`, hence symmetric PSD; it is rank-deficient whenever the
//! moment matrix has rank one, but `bbar` stays in its range, so the least
//! squares residual can still be driven to zero.

use nalgebra::{DMatrix, DVector};

use crate::moments::{MomentState, UpsilonM};
use crate::model::OutputMap;
use crate::Error;

/// Stacked gain vector `[vec(K1); vec(K2)]`, column-major.
pub type GainVector = DVector<f64>;

/// Shapes of the two gain blocks carried alongside the linear system so the
/// solution vector can be reshaped back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GainDims {
    pub m1: usize,
    pub p1: usize,
    pub m2: usize,
    pub p2: usize,
}

impl GainDims {
    /// Length of the stacked gain vector.
    pub fn total(&self) -> usize {
        self.m1 * self.p1 + self.m2 * self.p2
    }

    /// Offset of the `vec(K2)` segment.
    pub fn split(&self) -> usize {
        self.m1 * self.p1
    }
}

/// The linear system `Abar xbar = bbar` whose solutions are stationary gain
/// pairs for the current time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaritySystem {
    pub abar: DMatrix<f64>,
    pub bbar: DVector<f64>,
    pub dims: GainDims,
}

impl StationaritySystem {
    /// Offset of the `vec(K2)` segment within `xbar`.
    pub fn d1(&self) -> usize {
        self.dims.split()
    }
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major stacking of a matrix into a vector.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: reshapes a vector into `rows x cols`, column-major.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>, Error> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape length-{} vector into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Reshapes a stacked gain vector into the two gain blocks.
pub fn unvec_gains(x: &GainVector, dims: &GainDims) -> Result<crate::model::GainPair, Error> {
    if x.len() != dims.total() {
        return Err(Error::Dimension(format!(
            "gain vector length {} does not match partition total {}",
            x.len(),
            dims.total()
        )));
    }
    let split = dims.split();
    let k1 = unvec(&x.rows(0, split).into_owned(), dims.m1, dims.p1)?;
    let k2 = unvec(&x.rows(split, x.len() - split).into_owned(), dims.m2, dims.p2)?;
    Ok(crate::model::GainPair::new(k1, k2))
}

/// Assembles the stationarity system from the current moments, the gain
/// equation coefficients, and the observation maps. The result is
/// symmetrized to remove rounding asymmetry in the off-diagonal blocks.
pub fn build_system(
    x: &MomentState,
    um: &UpsilonM,
    hmap: &OutputMap,
) -> Result<StationaritySystem, Error> {
    let (n1, n2) = (x.x11.nrows(), x.x22.nrows());
    if hmap.h1.ncols() != n1 || hmap.h2.ncols() != n2 {
        return Err(Error::Dimension(format!(
            "output maps ({}, {}) do not match moment blocks ({n1}, {n2})",
            hmap.h1.ncols(),
            hmap.h2.ncols()
        )));
    }
    let u11 = um.upsilon11();
    let u12 = um.upsilon12();
    let u22 = um.upsilon22();
    if um.m11().ncols() != n1 || um.m22().ncols() != n2 {
        return Err(Error::Dimension(
            "gain equation coefficients do not match the moment partition".into(),
        ));
    }

    let h1t = hmap.h1.transpose();
    let h2t = hmap.h2.transpose();
    let s11 = &hmap.h1 * &x.x11 * &h1t;
    let s12 = &hmap.h1 * &x.x12 * &h2t;
    let s22 = &hmap.h2 * &x.x22 * &h2t;

    let dims = GainDims {
        m1: u11.nrows(),
        p1: hmap.p1(),
        m2: u22.nrows(),
        p2: hmap.p2(),
    };
    let (d, d1) = (dims.total(), dims.split());

    let mut abar = DMatrix::zeros(d, d);
    abar.view_mut((0, 0), (d1, d1)).copy_from(&kron(&s11.transpose(), &u11));
    abar.view_mut((0, d1), (d1, d - d1)).copy_from(&kron(&s12, &u12));
    abar.view_mut((d1, 0), (d - d1, d1))
        .copy_from(&kron(&s12.transpose(), &u12.transpose()));
    abar.view_mut((d1, d1), (d - d1, d - d1))
        .copy_from(&kron(&s22.transpose(), &u22));
    let abar = (&abar + abar.transpose()) * 0.5;

    let b1 = -vec(&((um.m11() * &x.x11 + um.m12() * x.x12.transpose()) * &h1t));
    let b2 = -vec(&((um.m21() * &x.x12 + um.m22() * &x.x22) * &h2t));
    let mut bbar = DVector::zeros(d);
    bbar.rows_mut(0, d1).copy_from(&b1);
    bbar.rows_mut(d1, d - d1).copy_from(&b2);

    Ok(StationaritySystem { abar, bbar, dims })
}

/// Squared residual `f(x) = (Abar x - bbar)' (Abar x - bbar)`.
pub fn residual_value(s: &StationaritySystem, x: &GainVector) -> f64 {
    let r = &s.abar * x - &s.bbar;
    r.dot(&r)
}

/// Euclidean residual `||Abar x - bbar||`.
pub fn residual_norm(s: &StationaritySystem, x: &GainVector) -> f64 {
    (&s.abar * x - &s.bbar).norm()
}

/// Gradient of [`residual_value`]: `2 Abar' (Abar x - bbar)`.
pub fn residual_gradient(s: &StationaritySystem, x: &GainVector) -> DVector<f64> {
    s.abar.transpose() * (&s.abar * x - &s.bbar) * 2.0
}

/// Hessian of [`residual_value`]: `2 Abar' Abar`, constant in `x`.
pub fn residual_hessian(s: &StationaritySystem) -> DMatrix<f64> {
    s.abar.transpose() * &s.abar * 2.0
}

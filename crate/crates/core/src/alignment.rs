//! Orthogonal Procrustes alignment and row normalizations.

use nalgebra::DMatrix;

use crate::error::{RdpgError, Result};

/// Row norms below this are treated as zero by [`sphere_project`].
pub const ROW_NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ProcrustesSolution {
    /// Orthogonal `d × d` minimizer (reflections allowed).
    pub w: DMatrix<f64>,
    /// `min_W ‖XW − Y‖_F`.
    pub distance: f64,
}

fn check_same_shape(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(RdpgError::ShapeMismatch { left: x.shape(), right: y.shape() });
    }
    Ok(())
}

/// Solve `min_{W ∈ O(d)} ‖XW − Y‖_F` with `W = UVᵀ` from the SVD
/// `XᵀY = UΣVᵀ`. The reported distance is evaluated directly at the
/// minimizer rather than through `‖X‖² + ‖Y‖² − 2Σσ`, which cancels badly
/// when the two configurations nearly coincide.
pub fn orthogonal_procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesSolution> {
    check_same_shape(x, y)?;
    let d = x.ncols();
    if d == 0 {
        return Ok(ProcrustesSolution { w: DMatrix::zeros(0, 0), distance: 0.0 });
    }
    let cross = x.transpose() * y;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let w = u * v_t;
    let distance = (x * &w - y).norm();
    Ok(ProcrustesSolution { w, distance })
}

/// Just the Procrustes distance.
pub fn procrustes_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    Ok(orthogonal_procrustes(x, y)?.distance)
}

/// Rows projected onto the unit sphere, with the original row norms.
#[derive(Debug, Clone)]
pub struct SphereProjection {
    pub projected: DMatrix<f64>,
    pub row_norms: Vec<f64>,
}

impl SphereProjection {
    /// `‖𝒟⁻¹(Z)‖₂ = 1 / minᵢ ‖Zᵢ‖`.
    pub fn inverse_norm_bound(&self) -> f64 {
        1.0 / self.row_norms.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn sphere_project(z: &DMatrix<f64>) -> Result<SphereProjection> {
    sphere_project_with(z, ROW_NORM_TOLERANCE)
}

pub fn sphere_project_with(z: &DMatrix<f64>, tol: f64) -> Result<SphereProjection> {
    let mut projected = z.clone();
    let mut row_norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in projected.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > tol) {
            return Err(RdpgError::ZeroRow(i));
        }
        row /= norm;
        row_norms.push(norm);
    }
    Ok(SphereProjection { projected, row_norms })
}

/// `Z / ‖Z‖_F`.
pub fn frobenius_normalize(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norm = z.norm();
    if !(norm > 0.0) {
        return Err(RdpgError::ZeroMatrix);
    }
    Ok(z / norm)
}

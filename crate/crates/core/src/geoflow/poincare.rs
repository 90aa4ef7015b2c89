//! Linearized first-return map on the orthogonal transversal and `det(I − P)`.

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;

use super::GeoError;

/// Relative agreement required between the direct and Schur determinants.
const SCHUR_AGREEMENT: f64 = 1e-8;
/// `|det(I − D)|` below which the Schur route is skipped.
const SCHUR_SINGULAR: f64 = 1e-12;
/// `|det(I − P)|` above which an orbit counts as nondegenerate.
const NONDEGENERATE: f64 = 1e-8;

/// `P` on the transversal spanned by the horizontal and vertical normals, with
/// its `(n−1) × (n−1)` blocks
///
/// ```text
/// P = [ A  B ]   horizontal → horizontal, vertical → horizontal
///     [ C  D ]   horizontal → vertical,   vertical → vertical
/// ```
///
/// The blocks depend on the chosen normal frame; `det(I − P)` does not.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareBlocks {
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Extracts `P` from a `(2n−1) × (2n−1)` monodromy in Sasaki frames. The flow
/// direction is frame vector 0 and is quotiented out.
pub fn poincare_map(monodromy: &DMatrix<f64>) -> Result<PoincareBlocks, GeoError> {
    let dim = monodromy.nrows();
    let flow = monodromy.column(0).norm();
    if !(flow >= 1e-12) {
        return Err(GeoError::DegenerateFrame(flow));
    }
    let m = (dim - 1) / 2;
    let p = monodromy.view((1, 1), (dim - 1, dim - 1)).into_owned();
    Ok(PoincareBlocks {
        a: p.view((0, 0), (m, m)).into_owned(),
        b: p.view((0, m), (m, m)).into_owned(),
        c: p.view((m, 0), (m, m)).into_owned(),
        d: p.view((m, m), (m, m)).into_owned(),
        p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetReport {
    /// `det(I − P)` by LU.
    pub direct: f64,
    /// `det(I−D) · det((I−A) − B(I−D)⁻¹C)`, absent when `I − D` is singular.
    pub schur: Option<f64>,
    pub agree: bool,
    pub nondegenerate: bool,
}

pub fn det_i_minus_p(blocks: &PoincareBlocks) -> DetReport {
    let k = blocks.p.nrows();
    let direct = (DMatrix::identity(k, k) - &blocks.p).determinant();
    let m = blocks.a.nrows();
    let id = DMatrix::<f64>::identity(m, m);
    let i_d = &id - &blocks.d;
    let det_id = i_d.determinant();
    let schur = if det_id.abs() < SCHUR_SINGULAR {
        info!("det(I − D) = {det_id:e}: Schur evaluation skipped");
        None
    } else {
        let inv = i_d.try_inverse().expect("nonsingular");
        let s = (&id - &blocks.a) - &blocks.b * inv * &blocks.c;
        Some(det_id * s.determinant())
    };
    let agree = schur.is_none_or(|s| (s - direct).abs() <= SCHUR_AGREEMENT * direct.abs().max(1.0));
    DetReport { direct, schur, agree, nondegenerate: direct.abs() > NONDEGENERATE }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monodromy(p: &DMatrix<f64>) -> DMatrix<f64> {
        let k = p.nrows();
        let mut m = DMatrix::identity(k + 1, k + 1);
        m.view_mut((1, 1), (k, k)).copy_from(p);
        m
    }

    #[test]
    fn torus_blocks() {
        let tau = 1.7;
        let p = DMatrix::from_row_slice(2, 2, &[1.0, tau, 0.0, 1.0]);
        let b = poincare_map(&monodromy(&p)).unwrap();
        assert_eq!(b.a[(0, 0)], 1.0);
        assert_eq!(b.b[(0, 0)], tau);
        assert_eq!(b.c[(0, 0)], 0.0);
        assert_eq!(b.d[(0, 0)], 1.0);
        let r = det_i_minus_p(&b);
        assert_eq!(r.direct, 0.0);
        assert!(r.schur.is_none());
        assert!(!r.nondegenerate && r.agree);
    }

    #[test]
    fn hyperbolic_block() {
        let l = std::f64::consts::TAU;
        let p = DMatrix::from_row_slice(2, 2, &[l.cosh(), l.sinh(), l.sinh(), l.cosh()]);
        let r = det_i_minus_p(&poincare_map(&monodromy(&p)).unwrap());
        let oracle = 2.0 - 2.0 * l.cosh();
        assert!((r.direct - oracle).abs() <= 1e-10 * oracle.abs());
        assert!(r.agree && r.nondegenerate);
    }

    #[test]
    fn block_triangular_factorizes() {
        // C = 0 in dimension 3 (n = 3)
        let p = DMatrix::from_row_slice(
            4,
            4,
            &[0.5, 0.2, 1.0, -0.3, 0.1, 2.0, 0.4, 0.7, 0.0, 0.0, 3.0, 0.2, 0.0, 0.0, -0.5, 0.25],
        );
        let b = poincare_map(&monodromy(&p)).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        let factored = (&id - &b.a).determinant() * (&id - &b.d).determinant();
        let r = det_i_minus_p(&b);
        assert!((r.direct - factored).abs() <= 1e-12 * factored.abs().max(1.0));
        assert!(r.agree);
    }

    #[test]
    fn degenerate_flow_column() {
        let m = DMatrix::zeros(3, 3);
        assert!(matches!(poincare_map(&m), Err(GeoError::DegenerateFrame(_))));
    }
}

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Rows projected onto the top two principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `(n, 2)` coordinates of the centered rows.
    pub coords: Array2<f64>,
    /// `(2, h)` unit principal directions.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    /// True when all rows coincide; coordinates are then zero.
    pub degenerate: bool,
}

/// PCA to two dimensions via the eigendecomposition of the scatter matrix.
/// Each component's sign is fixed so its largest-magnitude coordinate is
/// positive.
pub fn project_2d(rows: ArrayView2<'_, f64>) -> Result<Projection> {
    let (n, h) = rows.dim();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 rows to project, got {n}"
        )));
    }
    let mean = rows.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &rows - &mean;
    let spread = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = rows.iter().map(|v| v * v).sum::<f64>().sqrt();
    if spread <= 1e-12 * (1.0 + scale) {
        return Ok(Projection {
            coords: Array2::zeros((n, 2)),
            components: Array2::zeros((2, h)),
            mean,
            degenerate: true,
        });
    }

    let x = DMatrix::from_row_iterator(n, h, centered.iter().copied());
    let eigen = SymmetricEigen::new(x.transpose() * &x);
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Array2::zeros((2, h));
    for (c, &k) in order.iter().take(2).enumerate() {
        for d in 0..h {
            components[[c, d]] = eigen.eigenvectors[(d, k)];
        }
    }
    let mut coords = centered.dot(&components.t());
    for c in 0..2.min(h) {
        let col = coords.column(c);
        let largest = col.iter().fold(
            0.0f64,
            |best, &v| if v.abs() > best.abs() { v } else { best },
        );
        if largest < 0.0 {
            coords.column_mut(c).mapv_inplace(|v| -v);
            components.row_mut(c).mapv_inplace(|v| -v);
        }
    }
    Ok(Projection {
        coords,
        components,
        mean,
        degenerate: false,
    })
}

#![allow(dead_code)]

use levyou::{Atom, LevyMeasure, Matrix, OuModel};

/// Kinetic Fokker-Planck drift with friction parameter 3/16.
pub fn kinetic_fp() -> OuModel {
    OuModel::new(
        Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
        Matrix::from_row_slice(2, 2, &[-1.0, 3.0 / 16.0, -1.0, 0.0]),
        LevyMeasure::Null { dim: 2 },
    )
    .unwrap()
}

/// `Q = 1`, `B = -1`, unit-rate jumps of size 1.
pub fn cp1d() -> OuModel {
    OuModel::new(
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, -1.0),
        LevyMeasure::FiniteAtomic { atoms: vec![Atom::new(vec![1.0], 1.0)] },
    )
    .unwrap()
}

/// `Q = 1`, `B = -1`, symmetric 1.5-stable jumps.
pub fn stable1d() -> OuModel {
    OuModel::new(
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, -1.0),
        LevyMeasure::AlphaStable {
            alpha: 1.5,
            atoms: vec![Atom::new(vec![1.0], 0.5), Atom::new(vec![-1.0], 0.5)],
        },
    )
    .unwrap()
}

/// `Q = 2`, `B = -1`: standard normal invariant law.
pub fn gauss1d() -> OuModel {
    OuModel::new(
        Matrix::from_element(1, 1, 2.0),
        Matrix::from_element(1, 1, -1.0),
        LevyMeasure::Null { dim: 1 },
    )
    .unwrap()
}

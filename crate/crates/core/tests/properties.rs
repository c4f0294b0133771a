mod common;

use proptest::prelude::*;

proptest! {
    #[test]
    fn reproduction(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        common::reproduction(x, y)?;
    }

    #[test]
    fn kernel_smoothness(z in 1e-4f64..1.3) {
        common::kernel_smoothness(z)?;
    }

    #[test]
    fn closed_contour(cell in 0usize..10_000) {
        common::closed_contour(cell)?;
    }

    #[test]
    fn nsni_annihilates_affine(cell in 0usize..10_000, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        common::nsni_annihilates_affine(cell, a, b, c)?;
    }

    #[test]
    fn line_of_sight_symmetry(px in -2.0f64..2.0, py in -2.0f64..2.0, qx in -2.0f64..2.0, qy in -2.0f64..2.0) {
        common::line_of_sight_symmetry(px, py, qx, qy)?;
    }
}

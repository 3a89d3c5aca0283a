//! Benchmark fixtures shared by the criterion benches.

use srheat_core::poly::rat;
use srheat_core::{MultiPoly, PolyVectorField};

/// Left-invariant Heisenberg frame `d_x - y/2 d_z`, `d_y + x/2 d_z`.
pub fn heisenberg() -> Vec<PolyVectorField> {
    let (one, zero) = (MultiPoly::one(3), MultiPoly::zero(3));
    let x = MultiPoly::var(3, 0).scale(&rat(1, 2));
    let y = MultiPoly::var(3, 1).scale(&rat(-1, 2));
    vec![
        PolyVectorField::new(vec![one.clone(), zero.clone(), y]).expect("three components"),
        PolyVectorField::new(vec![zero, one, x]).expect("three components"),
    ]
}

/// `d_1`, `(x_1 + x_1^2) d_2`.
pub fn grushin_pert() -> Vec<PolyVectorField> {
    let x1 = MultiPoly::var(2, 0);
    vec![PolyVectorField::coordinate(2, 0), PolyVectorField::along(1, &x1 + &x1.pow(2))]
}

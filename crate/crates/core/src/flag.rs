//! The sub-Riemannian flag at a point: growth vector, weights, degree of
//! nonholonomy and homogeneous dimension.
//!
//! `D^1` is spanned by the generating fields and `D^{k+1} = D^k + [D, D^k]`.
//! Right-normed bracket words span each `D^k`, so only those are enumerated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{lie_bracket, PolyVectorField, Weights};
use crate::linalg::EchelonBasis;
use crate::poly::{rat, to_f64, Rational};

pub const DEFAULT_MAX_DEPTH: usize = 10;

/// A bracket `[X_{w_1}, [X_{w_2}, ... X_{w_k}]]` selected into the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameElement {
    pub field: PolyVectorField,
    pub depth: usize,
    /// Zero-based indices of the generating fields, outermost first.
    pub word: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlagData {
    pub growth_vector: Vec<usize>,
    pub weights: Weights,
    pub r: usize,
    pub q: u32,
    /// Adapted frame ordered by depth; depth equals the weight of the slot.
    pub bracket_frame: Vec<FrameElement>,
}

impl FlagData {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `sum_i i (n_i - n_{i-1})`, which must agree with the sum of weights.
    pub fn q_from_growth(&self) -> u32 {
        let mut prev = 0;
        let mut q = 0;
        for (i, &n) in self.growth_vector.iter().enumerate() {
            q += (i + 1) * (n - prev);
            prev = n;
        }
        q as u32
    }
}

impl Serialize for FlagData {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FlagData", 4)?;
        st.serialize_field("growth_vector", &self.growth_vector)?;
        st.serialize_field("weights", &self.weights)?;
        st.serialize_field("r", &self.r)?;
        st.serialize_field("Q", &self.q)?;
        st.end()
    }
}

/// Weights from a growth vector: `w_i = j` when `n_{j-1} < i <= n_j`.
pub fn weights_from_growth(growth: &[usize]) -> Weights {
    let mut w = Vec::new();
    let mut prev = 0;
    for (j, &n) in growth.iter().enumerate() {
        for _ in prev..n {
            w.push(j as u32 + 1);
        }
        prev = n;
    }
    Weights::new(w).expect("growth vectors give nondecreasing positive weights")
}

pub fn compute_flag(fields: &[PolyVectorField], point: &[Rational], max_depth: usize) -> Result<FlagData> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one generating field is required".into()))?;
    let n = first.dim();
    for f in fields {
        if f.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.dim(),
            });
        }
    }
    if point.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: point.len(),
        });
    }
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }

    let mut basis = EchelonBasis::new(n);
    let mut frame = Vec::new();
    let mut growth = Vec::new();
    // all nonzero brackets of the current depth, in lexicographic word order
    let mut level: Vec<(Vec<usize>, PolyVectorField)> = fields
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.is_zero())
        .map(|(i, f)| (vec![i], f.clone()))
        .collect();

    for depth in 1..=max_depth {
        if depth > 1 {
            let mut next = Vec::new();
            for (i, x) in fields.iter().enumerate() {
                for (word, b) in &level {
                    let br = lie_bracket(x, b)?;
                    if !br.is_zero() {
                        let mut w = Vec::with_capacity(word.len() + 1);
                        w.push(i);
                        w.extend_from_slice(word);
                        next.push((w, br));
                    }
                }
            }
            level = next;
        }
        for (word, b) in &level {
            if basis.is_full() {
                break;
            }
            if basis.insert(&b.evaluate_exact(point)) {
                frame.push(FrameElement {
                    field: b.clone(),
                    depth,
                    word: word.clone(),
                });
            }
        }
        growth.push(basis.rank());
        if basis.is_full() {
            let weights = weights_from_growth(&growth);
            let q = weights.homogeneous_dim();
            return Ok(FlagData {
                r: depth,
                growth_vector: growth,
                weights,
                q,
                bracket_frame: frame,
            });
        }
        if level.is_empty() {
            break;
        }
    }
    Err(Error::HormanderViolation {
        max_depth,
        rank: basis.rank(),
        dim: n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    /// `true` means no counterexample was found among the probes.
    pub regular: bool,
    pub growth_at_point: Vec<usize>,
    pub witness: Option<Vec<Rational>>,
    pub witness_growth: Option<Vec<usize>>,
    pub probes: usize,
}

/// Samples rational points in the Euclidean ball of radius `probe_radius`
/// around `point` and compares growth vectors.
pub fn is_regular(
    fields: &[PolyVectorField],
    point: &[Rational],
    probe_radius: f64,
    probe_count: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if probe_count == 0 {
        return Err(Error::InvalidParameter("probe_count must be at least 1".into()));
    }
    if !(probe_radius > 0.0) {
        return Err(Error::InvalidParameter("probe_radius must be positive".into()));
    }
    let base = compute_flag(fields, point, DEFAULT_MAX_DEPTH)?;
    let n = point.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const DEN: i64 = 1 << 12;
    let scale = (probe_radius * DEN as f64).floor() as i64;
    let mut probes = 0;
    while probes < probe_count {
        let offs: Vec<i64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        let r2: f64 = offs.iter().map(|&o| (o as f64 / DEN as f64).powi(2)).sum();
        if r2 > probe_radius * probe_radius || offs.iter().all(|&o| o == 0) {
            continue;
        }
        probes += 1;
        let p: Vec<Rational> = point.iter().zip(&offs).map(|(q, &o)| q + rat(o, DEN)).collect();
        let g = compute_flag(fields, &p, DEFAULT_MAX_DEPTH)?;
        if g.growth_vector != base.growth_vector {
            return Ok(RegularityReport {
                regular: false,
                growth_at_point: base.growth_vector,
                witness: Some(p),
                witness_growth: Some(g.growth_vector),
                probes,
            });
        }
    }
    Ok(RegularityReport {
        regular: true,
        growth_at_point: base.growth_vector,
        witness: None,
        witness_growth: None,
        probes,
    })
}

/// `sum_i |x_i|^{1/w_i}`; homogeneous of degree one under dilations.
pub fn sr_pseudo_norm(x: &[f64], w: &Weights) -> f64 {
    x.iter()
        .zip(w.as_slice())
        .map(|(&xi, &wi)| match wi {
            1 => xi.abs(),
            2 => xi.abs().sqrt(),
            _ => xi.abs().powf(1.0 / wi as f64),
        })
        .sum()
}

pub fn sr_pseudo_norm_exact(x: &[Rational], w: &Weights) -> f64 {
    let xf: Vec<f64> = x.iter().map(to_f64).collect();
    sr_pseudo_norm(&xf, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, MultiPoly};
    use proptest::prelude::*;

    fn zero_point(n: usize) -> Vec<Rational> {
        vec![int(0); n]
    }

    fn heisenberg() -> Vec<PolyVectorField> {
        let h = rat(1, 2);
        vec![
            PolyVectorField::new(vec![MultiPoly::one(3), MultiPoly::zero(3), MultiPoly::var(3, 1).scale(&-h.clone())]).unwrap(),
            PolyVectorField::new(vec![MultiPoly::zero(3), MultiPoly::one(3), MultiPoly::var(3, 0).scale(&h)]).unwrap(),
        ]
    }

    fn grushin(k: u32) -> Vec<PolyVectorField> {
        vec![
            PolyVectorField::coordinate(2, 0),
            PolyVectorField::along(1, MultiPoly::var(2, 0).pow(k)),
        ]
    }

    fn martinet() -> Vec<PolyVectorField> {
        vec![
            PolyVectorField::coordinate(3, 0),
            PolyVectorField::new(vec![MultiPoly::zero(3), MultiPoly::one(3), MultiPoly::var(3, 0).pow(2)]).unwrap(),
        ]
    }

    /// Rank of all brackets up to each depth, enumerated without reuse of
    /// previous levels and with a fresh elimination per depth.
    fn brute_growth(fields: &[PolyVectorField], point: &[Rational], depth: usize) -> Vec<usize> {
        let mut all: Vec<Vec<PolyVectorField>> = vec![fields.to_vec()];
        for _ in 1..depth {
            let prev = all.last().unwrap().clone();
            let mut next = Vec::new();
            for x in fields {
                for b in &prev {
                    next.push(lie_bracket(x, b).unwrap());
                }
            }
            all.push(next);
        }
        (0..depth)
            .map(|d| {
                let vs: Vec<Vec<Rational>> = all[..=d].iter().flatten().map(|f| f.evaluate_exact(point)).collect();
                crate::linalg::rank(&vs)
            })
            .collect()
    }

    #[test]
    fn heisenberg_flag() {
        let f = compute_flag(&heisenberg(), &zero_point(3), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(f.growth_vector, vec![2, 3]);
        assert_eq!(f.weights.as_slice(), &[1, 1, 2]);
        assert_eq!((f.r, f.q), (2, 4));
        assert_eq!(f.bracket_frame[2].word, vec![0, 1]);
    }

    #[test]
    fn grushin_flags() {
        for k in 1..=4u32 {
            let f = compute_flag(&grushin(k), &zero_point(2), DEFAULT_MAX_DEPTH).unwrap();
            assert_eq!(f.weights.as_slice(), &[1, k + 1]);
            assert_eq!(f.r, k as usize + 1);
            assert_eq!(f.q, k + 2);
        }
    }

    #[test]
    fn euclidean_flag() {
        for n in 1..=4 {
            let fields: Vec<_> = (0..n).map(|i| PolyVectorField::coordinate(n, i)).collect();
            let p: Vec<Rational> = (0..n).map(|i| rat(i as i64 + 1, 3)).collect();
            let f = compute_flag(&fields, &p, DEFAULT_MAX_DEPTH).unwrap();
            assert_eq!(f.growth_vector, vec![n]);
            assert_eq!(f.q as usize, n);
        }
    }

    #[test]
    fn martinet_flag_matches_brute_force() {
        let f = compute_flag(&martinet(), &zero_point(3), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(f.growth_vector, brute_growth(&martinet(), &zero_point(3), 3));
        assert_eq!(f.growth_vector, vec![2, 2, 3]);
        assert_eq!(f.weights.as_slice(), &[1, 1, 3]);
        assert_eq!((f.r, f.q), (3, 5));
    }

    #[test]
    fn hormander_violation_is_reported() {
        let fields = vec![PolyVectorField::coordinate(2, 0)];
        let e = compute_flag(&fields, &zero_point(2), 4).unwrap_err();
        assert_eq!(e, Error::HormanderViolation { max_depth: 4, rank: 1, dim: 2 });
        let e = compute_flag(&grushin(3), &zero_point(2), 3).unwrap_err();
        assert!(matches!(e, Error::HormanderViolation { rank: 1, .. }));
    }

    #[test]
    fn regularity_probes() {
        let h = is_regular(&heisenberg(), &zero_point(3), 1.0, 20, 7).unwrap();
        assert!(h.regular);
        let g = is_regular(&grushin(1), &zero_point(2), 1.0, 20, 7).unwrap();
        assert!(!g.regular);
        assert_eq!(g.witness_growth, Some(vec![2]));
        assert_ne!(g.witness.unwrap()[0], int(0));
        let e: Vec<_> = (0..2).map(|i| PolyVectorField::coordinate(2, i)).collect();
        assert!(is_regular(&e, &[int(3), int(-1)], 2.0, 10, 1).unwrap().regular);
    }

    #[test]
    fn pseudo_norm_examples() {
        let w = Weights::new(vec![1, 2]).unwrap();
        assert_eq!(sr_pseudo_norm(&[1.0, 1.0], &w), 2.0);
        assert_eq!(sr_pseudo_norm(&[0.0, 0.0], &w), 0.0);
        assert_eq!(sr_pseudo_norm(&[4.0, 4.0], &w), 6.0);
    }

    #[test]
    fn flag_json_has_four_keys() {
        let f = compute_flag(&heisenberg(), &zero_point(3), DEFAULT_MAX_DEPTH).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"growth_vector":[2,3],"weights":[1,1,2],"r":2,"Q":4}"#);
    }

    fn rational_point(n: usize) -> impl Strategy<Value = Vec<Rational>> {
        proptest::collection::vec((-6i64..=6, 1i64..=4).prop_map(|(a, b)| rat(a, b)), n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn both_q_formulas_agree(p in rational_point(3)) {
            let f = compute_flag(&martinet(), &p, DEFAULT_MAX_DEPTH).unwrap();
            prop_assert_eq!(f.q, f.q_from_growth());
            prop_assert_eq!(*f.growth_vector.last().unwrap(), 3);
            prop_assert!(f.growth_vector.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(f.weights[0], 1);
        }

        #[test]
        fn weights_invariant_under_rescaling(p in rational_point(3), a in 1i64..5, b in -5i64..-1) {
            let base = compute_flag(&martinet(), &p, DEFAULT_MAX_DEPTH).unwrap();
            let f = martinet();
            let scaled = vec![f[1].scale(&int(b)), f[0].scale(&rat(1, a))];
            let g = compute_flag(&scaled, &p, DEFAULT_MAX_DEPTH).unwrap();
            prop_assert_eq!(base.weights, g.weights);
        }

        #[test]
        fn pseudo_norm_is_homogeneous(x in proptest::collection::vec(-10.0f64..10.0, 3), eps in -3.0f64..3.0) {
            let w = Weights::new(vec![1, 1, 2]).unwrap();
            let dx: Vec<f64> = x.iter().zip(w.as_slice()).map(|(v, &k)| eps.powi(k as i32) * v).collect();
            let lhs = sr_pseudo_norm(&dx, &w);
            let rhs = eps.abs() * sr_pseudo_norm(&x, &w);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }
}

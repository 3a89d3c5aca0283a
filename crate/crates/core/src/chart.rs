//! Privileged coordinate charts as truncated polynomial jets.
//!
//! Internally every map is written in coordinates relative to the base
//! point: `u = y - q` on the manifold side and `x` on the chart side. The
//! forward map `x -> u` is the time-one flow of `sum_i x_i Z_i` started at
//! `q`, expanded as a Lie series; the inverse is its formal compositional
//! inverse. Both jets are exact through ordinary degree `trunc_order + 1`,
//! which covers weighted degree `trunc_order` for pushed-forward fields.

use num_traits::{One, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{PolyVectorField, Weights};
use crate::flag::FlagData;
use crate::linalg::{self, EchelonBasis};
use crate::poly::{int, total_degree, weighted_degree, CompiledPoly, MultiPoly, Rational};

#[derive(Clone, Debug, PartialEq)]
pub struct PrivilegedChart {
    pub base_point: Vec<Rational>,
    pub weights: Weights,
    /// Adapted frame `Z_1..Z_n`, ordered by weight.
    pub frame: Vec<PolyVectorField>,
    /// `x -> u = y - q`, exact through ordinary degree `jet_degree()`.
    forward_rel: Vec<MultiPoly>,
    /// `u -> x`, exact through ordinary degree `jet_degree()`.
    inverse_rel: Vec<MultiPoly>,
    pub trunc_order: i64,
    /// Whether a triangular correction was applied to the raw chart.
    pub adjusted: bool,
}

impl PrivilegedChart {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn jet_degree(&self) -> i64 {
        self.trunc_order + 1
    }

    /// Forward map `x -> y` with `y(0) = q`.
    pub fn forward_map(&self) -> Vec<MultiPoly> {
        let n = self.dim();
        self.forward_rel
            .iter()
            .zip(&self.base_point)
            .map(|(p, q)| p + &MultiPoly::constant(n, q.clone()))
            .collect()
    }

    /// Inverse map `y -> x` in absolute manifold coordinates.
    pub fn inverse_map(&self) -> Vec<MultiPoly> {
        let n = self.dim();
        let shift: Vec<MultiPoly> = (0..n)
            .map(|i| &MultiPoly::var(n, i) - &MultiPoly::constant(n, self.base_point[i].clone()))
            .collect();
        self.inverse_rel.iter().map(|p| p.compose(&shift)).collect()
    }

    pub fn forward_relative(&self) -> &[MultiPoly] {
        &self.forward_rel
    }

    pub fn inverse_relative(&self) -> &[MultiPoly] {
        &self.inverse_rel
    }

    pub fn compile(&self) -> CompiledChart {
        let q: Vec<f64> = self.base_point.iter().map(crate::poly::to_f64).collect();
        CompiledChart {
            base: q,
            forward: self.forward_rel.iter().map(MultiPoly::compile).collect(),
            inverse: self.inverse_rel.iter().map(MultiPoly::compile).collect(),
            jacobian: (0..self.dim())
                .map(|i| (0..self.dim()).map(|j| self.forward_rel[i].derivative(j).compile()).collect())
                .collect(),
        }
    }

    /// `f o phi` truncated to weighted degree `max_deg` in chart coordinates.
    pub fn pull_function(&self, f: &MultiPoly, max_deg: i64) -> Result<MultiPoly> {
        if max_deg > self.trunc_order {
            return Err(Error::TruncationLoss {
                requested: max_deg,
                available: self.trunc_order,
            });
        }
        let rel = shift_poly(f, &self.base_point);
        let w = self.weights.as_slice().to_vec();
        let d = self.jet_degree();
        let composed = rel.compose_truncated(&self.forward_rel, |e| total_degree(e) <= d);
        Ok(composed.truncate_weighted(&w, max_deg))
    }

    /// `|det D phi|` truncated to weighted degree `max_deg`.
    pub fn jacobian_determinant(&self, max_deg: i64) -> Result<MultiPoly> {
        if max_deg > self.trunc_order {
            return Err(Error::TruncationLoss {
                requested: max_deg,
                available: self.trunc_order,
            });
        }
        let n = self.dim();
        let w = self.weights.as_slice().to_vec();
        let jac: Vec<Vec<MultiPoly>> = (0..n)
            .map(|i| (0..n).map(|j| self.forward_rel[i].derivative(j)).collect())
            .collect();
        let det = determinant(&jac, &|e: &[u32]| weighted_degree(e, &w) <= max_deg);
        let sign = det.constant_term();
        Ok(if sign < Rational::zero() { -&det } else { det })
    }
}

/// Float form of a chart for sampling and interpolation.
#[derive(Clone, Debug)]
pub struct CompiledChart {
    base: Vec<f64>,
    forward: Vec<CompiledPoly>,
    inverse: Vec<CompiledPoly>,
    jacobian: Vec<Vec<CompiledPoly>>,
}

impl CompiledChart {
    pub fn to_manifold(&self, x: &[f64]) -> Vec<f64> {
        self.forward.iter().zip(&self.base).map(|(p, q)| q + p.eval(x)).collect()
    }

    pub fn to_chart(&self, y: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = y.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        self.inverse.iter().map(|p| p.eval(&u)).collect()
    }

    pub fn to_chart_into(&self, y: &[f64], u: &mut [f64], out: &mut [f64]) {
        for ((ui, yi), qi) in u.iter_mut().zip(y).zip(&self.base) {
            *ui = yi - qi;
        }
        for (o, p) in out.iter_mut().zip(&self.inverse) {
            *o = p.eval(u);
        }
    }

    /// `|det D phi(x)|`.
    pub fn jacobian_det(&self, x: &[f64]) -> f64 {
        let n = self.base.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.jacobian[i][j].eval(x));
        m.determinant().abs()
    }
}

impl Serialize for PrivilegedChart {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PrivilegedChart", 6)?;
        let bp: Vec<String> = self.base_point.iter().map(|q| q.to_string()).collect();
        st.serialize_field("base_point", &bp)?;
        st.serialize_field("weights", &self.weights)?;
        st.serialize_field("trunc_order", &self.trunc_order)?;
        st.serialize_field("adjusted", &self.adjusted)?;
        st.serialize_field("forward_map", &self.forward_map())?;
        st.serialize_field("inverse_map", &self.inverse_map())?;
        st.end()
    }
}

/// `p(q + u)` as a polynomial in `u`.
pub fn shift_poly(p: &MultiPoly, q: &[Rational]) -> MultiPoly {
    let n = p.dim();
    if q.iter().all(Zero::is_zero) {
        return p.clone();
    }
    let subs: Vec<MultiPoly> = (0..n)
        .map(|i| &MultiPoly::var(n, i) + &MultiPoly::constant(n, q[i].clone()))
        .collect();
    p.compose(&subs)
}

/// The field `X` written in coordinates `u = y - q`.
pub fn shift_field(x: &PolyVectorField, q: &[Rational]) -> PolyVectorField {
    x.map_components(|p| shift_poly(p, q))
}

fn determinant<F: Fn(&[u32]) -> bool>(m: &[Vec<MultiPoly>], keep: &F) -> MultiPoly {
    let n = m.len();
    if n == 1 {
        return m[0][0].filter(keep);
    }
    let dim = m[0][0].dim();
    let mut acc = MultiPoly::zero(dim);
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<MultiPoly>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, p)| p.clone()).collect())
            .collect();
        let term = m[0][j].mul_truncated(&determinant(&minor, keep), keep);
        acc = if j % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}

/// Compositional inverse of a polynomial map with zero constant term and
/// invertible linear part, exact through ordinary degree `degree`.
pub fn invert_jet(map: &[MultiPoly], degree: i64) -> Result<Vec<MultiPoly>> {
    let n = map.len();
    for p in map {
        if !p.constant_term().is_zero() {
            return Err(Error::InvalidParameter("map must fix the origin".into()));
        }
    }
    let lin: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut e = vec![0u32; n];
                    e[j] = 1;
                    map[i].coeff(&e)
                })
                .collect()
        })
        .collect();
    // columns of A^{-1}
    let mut inv = vec![vec![Rational::zero(); n]; n];
    for j in 0..n {
        let mut ej = vec![Rational::zero(); n];
        ej[j] = Rational::one();
        let col = linalg::solve(&lin, &ej).ok_or(Error::FrameNotAdapted)?;
        for i in 0..n {
            inv[i][j] = col[i].clone();
        }
    }
    let nonlinear: Vec<MultiPoly> = map.iter().map(|p| p.filter(|e| total_degree(e) >= 2)).collect();
    let apply_inv = |v: &[MultiPoly]| -> Vec<MultiPoly> {
        (0..n)
            .map(|i| {
                let mut acc = MultiPoly::zero(n);
                for j in 0..n {
                    if !inv[i][j].is_zero() {
                        acc = &acc + &v[j].scale(&inv[i][j]);
                    }
                }
                acc
            })
            .collect()
    };
    let ids: Vec<MultiPoly> = (0..n).map(|i| MultiPoly::var(n, i)).collect();
    let base = apply_inv(&ids);
    let mut cur = base.clone();
    // each pass fixes one more ordinary degree
    for _ in 1..degree.max(1) {
        let nl: Vec<MultiPoly> = nonlinear
            .iter()
            .map(|p| p.compose_truncated(&cur, |e| total_degree(e) <= degree))
            .collect();
        let corr = apply_inv(&nl);
        let next: Vec<MultiPoly> = base.iter().zip(&corr).map(|(b, c)| b - c).collect();
        if next == cur {
            break;
        }
        cur = next;
    }
    Ok(cur)
}

/// Composition `f o g` truncated to ordinary degree `degree`.
pub fn compose_maps(f: &[MultiPoly], g: &[MultiPoly], degree: i64) -> Vec<MultiPoly> {
    f.iter()
        .map(|p| p.compose_truncated(g, |e| total_degree(e) <= degree))
        .collect()
}

/// Time-one flow of `sum_i x_i Z_i` from the base point, as a polynomial in
/// `x` exact through ordinary degree `degree`, written relative to `q`.
fn exponential_map(frame_rel: &[PolyVectorField], degree: i64) -> Vec<MultiPoly> {
    let n = frame_rel.len();
    // variables: x_0..x_{n-1}, u_0..u_{n-1}
    let xmap: Vec<usize> = (n..2 * n).collect();
    let mut v: Vec<MultiPoly> = vec![MultiPoly::zero(2 * n); n];
    for (k, z) in frame_rel.iter().enumerate() {
        let xk = MultiPoly::var(2 * n, k);
        for (i, c) in z.components().iter().enumerate() {
            if !c.is_zero() {
                v[i] = &v[i] + &(&c.embed(2 * n, &xmap) * &xk);
            }
        }
    }
    let u_degree = |e: &[u32]| -> i64 { e[n..].iter().map(|&a| a as i64).sum() };
    let at_origin = |p: &MultiPoly| -> MultiPoly {
        let mut out = MultiPoly::zero(n);
        for (e, c) in p.terms() {
            if e[n..].iter().all(|&a| a == 0) {
                out.add_term(e[..n].to_vec(), c.clone());
            }
        }
        out
    };
    (0..n)
        .map(|j| {
            let mut g = MultiPoly::var(2 * n, n + j);
            let mut out = at_origin(&g);
            let mut fact = Rational::one();
            for k in 1..=degree {
                let mut next = MultiPoly::zero(2 * n);
                for (i, vi) in v.iter().enumerate() {
                    let d = g.derivative(n + i);
                    if d.is_zero() || vi.is_zero() {
                        continue;
                    }
                    next = &next + &vi.mul_truncated(&d, |e| u_degree(e) <= degree - k);
                }
                g = next;
                if g.is_zero() {
                    break;
                }
                fact *= int(k);
                out = &out + &at_origin(&g).scale(&fact.recip());
            }
            out
        })
        .collect()
}

fn check_frame(flag: &FlagData, point: &[Rational]) -> Result<Vec<PolyVectorField>> {
    let n = point.len();
    if flag.bracket_frame.len() != n || flag.weights.len() != n {
        return Err(Error::FrameNotAdapted);
    }
    let mut basis = EchelonBasis::new(n);
    for (i, el) in flag.bracket_frame.iter().enumerate() {
        if el.depth as u32 != flag.weights[i] || !basis.insert(&el.field.evaluate_exact(point)) {
            return Err(Error::FrameNotAdapted);
        }
    }
    Ok(flag
        .bracket_frame
        .iter()
        .map(|e| {
            // scale so the first nonzero entry at the base point is one
            let v = e.field.evaluate_exact(point);
            let lead = v.iter().find(|c| !c.is_zero()).expect("frame vectors are nonzero");
            e.field.scale(&lead.recip())
        })
        .collect())
}

/// Exponential chart of the first kind at `point`, corrected triangularly
/// if its coordinates are not privileged. Frame brackets are rescaled so
/// that their first nonzero entry at `point` is one.
pub fn build_exponential_chart(
    fields: &[PolyVectorField],
    flag: &FlagData,
    point: &[Rational],
    trunc_order: i64,
) -> Result<PrivilegedChart> {
    if trunc_order < flag.r as i64 {
        return Err(Error::InvalidParameter(format!(
            "trunc_order {trunc_order} is below the degree of nonholonomy {}",
            flag.r
        )));
    }
    let frame = check_frame(flag, point)?;
    let frame_rel: Vec<PolyVectorField> = frame.iter().map(|z| shift_field(z, point)).collect();
    let d = trunc_order + 1;
    let forward_rel = exponential_map(&frame_rel, d);
    let inverse_rel = invert_jet(&forward_rel, d)?;
    let chart = PrivilegedChart {
        base_point: point.to_vec(),
        weights: flag.weights.clone(),
        frame,
        forward_rel,
        inverse_rel,
        trunc_order,
        adjusted: false,
    };
    let report = verify_orders(&chart, fields)?;
    if report.passes {
        Ok(chart)
    } else {
        adjust_triangular(&chart, fields)
    }
}

/// Chart from an explicit inverse map `u -> x` (relative to `point`).
pub fn chart_from_inverse(
    point: &[Rational],
    weights: Weights,
    frame: Vec<PolyVectorField>,
    inverse_rel: Vec<MultiPoly>,
    trunc_order: i64,
) -> Result<PrivilegedChart> {
    let d = trunc_order + 1;
    let inverse_rel: Vec<MultiPoly> = inverse_rel.iter().map(|p| p.truncate_total(d)).collect();
    let forward_rel = invert_jet(&inverse_rel, d)?;
    Ok(PrivilegedChart {
        base_point: point.to_vec(),
        weights,
        frame,
        forward_rel,
        inverse_rel,
        trunc_order,
        adjusted: false,
    })
}

/// The model coordinates themselves, shifted to `point`, as a chart. Fails
/// unless they are privileged for the flag weights.
pub fn identity_chart(
    fields: &[PolyVectorField],
    flag: &FlagData,
    point: &[Rational],
    trunc_order: i64,
) -> Result<PrivilegedChart> {
    let n = point.len();
    let frame = check_frame(flag, point)?;
    let id: Vec<MultiPoly> = (0..n).map(|i| MultiPoly::var(n, i)).collect();
    let chart = chart_from_inverse(point, flag.weights.clone(), frame, id, trunc_order)?;
    if verify_orders(&chart, fields)?.passes {
        Ok(chart)
    } else {
        Err(Error::InvalidParameter("model coordinates are not privileged at the point".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderReport {
    pub orders: Vec<usize>,
    pub weights: Vec<u32>,
    pub passes: bool,
}

/// Nonholonomic order at the base point of `f` (relative coordinates),
/// searched over words of length at most `max_len`.
fn nonholonomic_order(f: &MultiPoly, fields_rel: &[PolyVectorField], max_len: i64) -> Option<usize> {
    if !f.constant_term().is_zero() {
        return Some(0);
    }
    let mut level = vec![f.clone()];
    for k in 1..=max_len {
        let mut next = Vec::new();
        for g in &level {
            for x in fields_rel {
                // only terms of degree <= max_len - k can still reach the origin
                let h = x.apply(g).truncate_total(max_len - k);
                if !h.is_zero() {
                    next.push(h);
                }
            }
        }
        if next.iter().any(|h| !h.constant_term().is_zero()) {
            return Some(k as usize);
        }
        if next.is_empty() {
            return None;
        }
        next.sort_by_key(|a| a.to_string());
        next.dedup();
        level = next;
    }
    None
}

/// Nonholonomic orders of the chart coordinates, computed from the
/// generating fields on the manifold side.
pub fn verify_orders(chart: &PrivilegedChart, fields: &[PolyVectorField]) -> Result<OrderReport> {
    let fields_rel: Vec<PolyVectorField> = fields.iter().map(|x| shift_field(x, &chart.base_point)).collect();
    let max_len = chart.trunc_order.min(chart.jet_degree());
    let mut orders = Vec::with_capacity(chart.dim());
    for (j, psi) in chart.inverse_rel.iter().enumerate() {
        match nonholonomic_order(psi, &fields_rel, max_len) {
            Some(k) => orders.push(k),
            None => {
                return Err(Error::Inconclusive(format!(
                    "all nonholonomic derivatives of x{} vanish up to order {max_len}",
                    j + 1
                )))
            }
        }
    }
    let weights = chart.weights.as_slice().to_vec();
    let passes = orders.iter().zip(&weights).all(|(&o, &w)| o == w as usize);
    Ok(OrderReport {
        orders,
        weights,
        passes,
    })
}

/// Values at the base point of all nonholonomic derivatives of order `k`,
/// in lexicographic word order.
fn derivative_vector(f: &MultiPoly, fields_rel: &[PolyVectorField], k: usize) -> Vec<Rational> {
    let mut level = vec![f.truncate_total(k as i64)];
    for step in 1..=k {
        let mut next = Vec::with_capacity(level.len() * fields_rel.len());
        for g in &level {
            for x in fields_rel {
                // word X_{j1}..X_{jk}: the outermost field acts last
                next.push(x.apply(g).truncate_total((k - step) as i64));
            }
        }
        level = next;
    }
    level.iter().map(MultiPoly::constant_term).collect()
}

/// Exponent vectors of weighted degree exactly `deg` using only the
/// coordinates `0..limit`.
fn monomials_of_degree(w: &[u32], limit: usize, deg: i64) -> Vec<Vec<u32>> {
    let n = w.len();
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, limit: usize, w: &[u32], left: i64, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        if i == limit {
            return;
        }
        let wi = w[i] as i64;
        let mut a = 0;
        while a * wi <= left {
            cur[i] = a as u32;
            rec(i + 1, limit, w, left - a * wi, cur, out);
            a += 1;
        }
        cur[i] = 0;
    }
    rec(0, limit, w, deg, &mut cur, &mut out);
    out
}

/// Replaces each coordinate whose order is below its weight by
/// `x_j - P(x_1..)` where `P` uses only lower-weight coordinates, in
/// increasing weight order, until all orders match.
pub fn adjust_triangular(chart: &PrivilegedChart, fields: &[PolyVectorField]) -> Result<PrivilegedChart> {
    let n = chart.dim();
    let w = chart.weights.as_slice().to_vec();
    let d = chart.jet_degree();
    let fields_rel: Vec<PolyVectorField> = fields.iter().map(|x| shift_field(x, &chart.base_point)).collect();
    let mut psi = chart.inverse_rel.clone();
    let max_len = chart.trunc_order.min(d);
    for j in 0..n {
        let target = w[j] as usize;
        loop {
            let k = nonholonomic_order(&psi[j], &fields_rel, max_len)
                .ok_or_else(|| Error::Inconclusive(format!("coordinate x{} has no finite order", j + 1)))?;
            if k >= target {
                if k > target {
                    return Err(Error::FrameNotAdapted);
                }
                break;
            }
            let limit = (0..n).take_while(|&i| w[i] < w[j]).count();
            let monos = monomials_of_degree(&w, limit, k as i64);
            if monos.is_empty() {
                return Err(Error::FrameNotAdapted);
            }
            let candidates: Vec<MultiPoly> = monos
                .iter()
                .map(|e| MultiPoly::monomial(n, e.clone(), Rational::one()).compose_truncated(&psi, |t| total_degree(t) <= d))
                .collect();
            let rhs = derivative_vector(&psi[j], &fields_rel, k);
            let cols: Vec<Vec<Rational>> = candidates.iter().map(|c| derivative_vector(c, &fields_rel, k)).collect();
            let coeffs = least_norm_solve(&cols, &rhs).ok_or(Error::FrameNotAdapted)?;
            let mut correction = MultiPoly::zero(n);
            for (c, p) in coeffs.iter().zip(&candidates) {
                if !c.is_zero() {
                    correction = &correction + &p.scale(c);
                }
            }
            psi[j] = (&psi[j] - &correction).truncate_total(d);
        }
    }
    let mut out = chart_from_inverse(&chart.base_point, chart.weights.clone(), chart.frame.clone(), psi, chart.trunc_order)?;
    out.adjusted = true;
    Ok(out)
}

/// Solves `sum_i c_i cols[i] = rhs` exactly using an independent subset of
/// the columns; `None` if `rhs` is outside their span.
fn least_norm_solve(cols: &[Vec<Rational>], rhs: &[Rational]) -> Option<Vec<Rational>> {
    let m = rhs.len();
    let mut basis = EchelonBasis::new(m);
    let mut chosen = Vec::new();
    for (i, c) in cols.iter().enumerate() {
        if basis.insert(c) {
            chosen.push(i);
        }
    }
    if !basis.contains(rhs) {
        return None;
    }
    // normal equations on the independent columns
    let k = chosen.len();
    let gram: Vec<Vec<Rational>> = (0..k)
        .map(|a| (0..k).map(|b| dot(&cols[chosen[a]], &cols[chosen[b]])).collect())
        .collect();
    let proj: Vec<Rational> = (0..k).map(|a| dot(&cols[chosen[a]], rhs)).collect();
    let sol = linalg::solve(&gram, &proj)?;
    let mut out = vec![Rational::zero(); cols.len()];
    for (a, &i) in chosen.iter().enumerate() {
        out[i] = sol[a].clone();
    }
    Some(out)
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

/// `delta_eps x`.
pub fn dilate(x: &[f64], w: &Weights, eps: f64) -> Vec<f64> {
    x.iter()
        .zip(w.as_slice())
        .map(|(&xi, &wi)| eps.powi(wi as i32) * xi)
        .collect()
}

/// `psi_* X` in chart coordinates, truncated to component weighted degree
/// `trunc_order - max(w)`.
pub fn push_field(chart: &PrivilegedChart, x: &PolyVectorField) -> Result<PolyVectorField> {
    push_field_to_degree(chart, x, chart.trunc_order - chart.weights.max() as i64)
}

/// Like [`push_field`] with an explicit top degree; fails with
/// `TruncationLoss` beyond the exact jet.
pub fn push_field_to_degree(chart: &PrivilegedChart, x: &PolyVectorField, max_deg: i64) -> Result<PolyVectorField> {
    let available = chart.trunc_order - chart.weights.max() as i64;
    if max_deg > available {
        return Err(Error::TruncationLoss {
            requested: max_deg,
            available,
        });
    }
    if x.dim() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            found: x.dim(),
        });
    }
    let d = chart.jet_degree();
    let w = chart.weights.as_slice().to_vec();
    let xr = shift_field(x, &chart.base_point);
    let comps = chart
        .inverse_rel
        .iter()
        .enumerate()
        .map(|(j, psi_j)| {
            // (X psi_j) o phi, exact through x-weighted degree trunc_order
            let xpsi = xr.apply(psi_j).truncate_total(d - 1);
            let lim = max_deg + w[j] as i64;
            xpsi.compose_truncated(&chart.forward_rel, |e| total_degree(e) <= d)
                .truncate_weighted(&w, lim)
        })
        .collect();
    PolyVectorField::new(comps)
}

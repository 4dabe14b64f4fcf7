//! Sector geometry, characteristic roots of `aω² + 1 = 0`, domain grids and
//! ε-weighted boundary functionals.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{lq_norm, C64, ZERO};

const ARG_TOL: f64 = 1e-12;

/// Closed sector `S_φ = {λ : |arg λ| ≤ φ} ∪ {0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    phi: f64,
}

impl Sector {
    pub fn new(phi: f64) -> Result<Self> {
        if !(0.0..PI).contains(&phi) {
            return Err(Error::InvalidSpec(format!("sector angle {phi} not in [0, pi)")));
        }
        Ok(Self { phi })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn contains(&self, lambda: C64) -> bool {
        lambda == ZERO || lambda.arg().abs() <= self.phi + ARG_TOL
    }
}

/// The two roots of `aω² + 1 = 0`, ordered by real part (ties broken by imaginary part).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoots {
    pub omega1: C64,
    pub omega2: C64,
    /// Set when `Re ω₁ = Re ω₂ = 0`.
    pub degenerate: bool,
}

impl CharacteristicRoots {
    pub fn roots(&self) -> [C64; 2] {
        [self.omega1, self.omega2]
    }

    pub fn require_admissible(&self) -> Result<()> {
        if self.degenerate {
            Err(Error::AdmissibilityViolation { root: self.omega1 })
        } else {
            Ok(())
        }
    }
}

pub fn characteristic_roots(a: C64) -> Result<CharacteristicRoots> {
    if a == ZERO || !a.re.is_finite() || !a.im.is_finite() {
        return Err(Error::ZeroCoefficient);
    }
    let s = (-a.inv()).sqrt();
    let (mut w1, mut w2) = (-s, s);
    if w1.re > w2.re || (w1.re == w2.re && w1.im > w2.im) {
        std::mem::swap(&mut w1, &mut w2);
    }
    let tiny = 1e-14 * s.norm();
    let degenerate = w1.re.abs() <= tiny || w2.re.abs() <= tiny;
    Ok(CharacteristicRoots {
        omega1: w1,
        omega2: w2,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilitySample {
    pub lambda: C64,
    /// Whether `λ/ω₁` and `λ/ω₂` lie in the sector.
    pub in_sector: [bool; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub roots: CharacteristicRoots,
    pub gate_passed: bool,
    pub offending_root: Option<C64>,
    /// Fraction of sampled λ with `λ/ωₖ ∉ S_φ`, per root.
    pub failing_fraction: [f64; 2],
    pub samples: Vec<AdmissibilitySample>,
}

impl AdmissibilityReport {
    pub fn check_gate(&self) -> Result<()> {
        match self.offending_root {
            Some(root) => Err(Error::AdmissibilityViolation { root }),
            None => Ok(()),
        }
    }
}

/// Hard gate `Re ωₖ ≠ 0` plus a sampled diagnostic of `λ/ωₖ ∈ S_φ` on the rays
/// `arg λ ∈ {−φ, 0, φ}` at `n_samples` log-spaced moduli in `[1e-3, 1e3]`.
pub fn sector_admissibility(a: C64, phi: f64, n_samples: usize) -> Result<AdmissibilityReport> {
    let sector = Sector::new(phi)?;
    if n_samples < 3 {
        return Err(Error::InvalidSpec("n_samples must be at least 3".into()));
    }
    let roots = characteristic_roots(a)?;
    let offending_root = roots
        .roots()
        .into_iter()
        .find(|w| w.re.abs() <= 1e-14 * w.norm());
    let mut samples = Vec::with_capacity(3 * n_samples);
    let mut fails = [0usize; 2];
    for theta in [-phi, 0.0, phi] {
        for i in 0..n_samples {
            let t = i as f64 / (n_samples - 1) as f64;
            let r = 10f64.powf(-3.0 + 6.0 * t);
            let lambda = C64::from_polar(r, theta);
            let in_sector = [
                sector.contains(lambda / roots.omega1),
                sector.contains(lambda / roots.omega2),
            ];
            for k in 0..2 {
                if !in_sector[k] {
                    fails[k] += 1;
                }
            }
            samples.push(AdmissibilitySample { lambda, in_sector });
        }
    }
    let total = samples.len() as f64;
    Ok(AdmissibilityReport {
        roots,
        gate_passed: offending_root.is_none(),
        offending_root,
        failing_fraction: [fails[0] as f64 / total, fails[1] as f64 / total],
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    FullLine,
    HalfLine,
    Interval,
    Exterior,
}

/// Domain description. `b` is used by `Interval`/`Exterior`, `length` (the far-field
/// truncation `L`) by `FullLine`/`HalfLine`/`Exterior`; `n_cells` is per connected piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub b: f64,
    pub length: f64,
    pub n_cells: usize,
}

impl DomainSpec {
    pub fn full_line(length: f64, n_cells: usize) -> Self {
        Self { kind: DomainKind::FullLine, b: 1.0, length, n_cells }
    }

    pub fn half_line(length: f64, n_cells: usize) -> Self {
        Self { kind: DomainKind::HalfLine, b: 1.0, length, n_cells }
    }

    pub fn interval(b: f64, n_cells: usize) -> Self {
        Self { kind: DomainKind::Interval, b, length: b, n_cells }
    }

    pub fn exterior(b: f64, length: f64, n_cells: usize) -> Self {
        Self { kind: DomainKind::Exterior, b, length, n_cells }
    }

    pub fn has_boundary_at_b(&self) -> bool {
        matches!(self.kind, DomainKind::Interval | DomainKind::Exterior)
    }

    pub fn has_boundary_at_zero(&self) -> bool {
        !matches!(self.kind, DomainKind::FullLine)
    }
}

/// Default far-field truncation `10·max(1, |λ|^{-1/2} ε^{1/2})`, clamped to `[5b, 100b]`.
/// Domains without an interval length use `b = 1` as the reference scale.
pub fn default_length(eps: f64, lambda: C64, b: f64) -> f64 {
    let m = lambda.norm();
    let layer = if m > 0.0 { eps.sqrt() / m.sqrt() } else { f64::INFINITY };
    (10.0 * layer.max(1.0)).clamp(5.0 * b, 100.0 * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcSite {
    /// The endpoint `x = 0` (conditions with coefficients `αᵢ`).
    AtZero,
    /// The endpoint `x = b` (conditions with coefficients `βᵢ`).
    AtB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndKind {
    FarField,
    Boundary(BcSite),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceEnd {
    Left,
    Right,
}

/// One uniformly spaced connected piece of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub x0: f64,
    pub h: f64,
    pub n_points: usize,
    /// Global index of the first point.
    pub offset: usize,
    pub left: EndKind,
    pub right: EndKind,
}

impl Piece {
    pub fn x(&self, local: usize) -> f64 {
        self.x0 + self.h * local as f64
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.n_points - 1)
    }

    pub fn end_index(&self, end: PieceEnd) -> usize {
        match end {
            PieceEnd::Left => self.offset,
            PieceEnd::Right => self.offset + self.n_points - 1,
        }
    }

    pub fn end_kind(&self, end: PieceEnd) -> EndKind {
        match end {
            PieceEnd::Left => self.left,
            PieceEnd::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: DomainSpec,
    pub pieces: Vec<Piece>,
}

pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    if spec.n_cells < 4 {
        return Err(Error::InvalidSpec(format!("n_cells = {} < 4", spec.n_cells)));
    }
    let need_b = spec.has_boundary_at_b();
    let need_l = !matches!(spec.kind, DomainKind::Interval);
    if need_b && !(spec.b > 0.0 && spec.b.is_finite()) {
        return Err(Error::InvalidSpec(format!("b = {} must be positive", spec.b)));
    }
    if need_l && !(spec.length > 0.0 && spec.length.is_finite()) {
        return Err(Error::InvalidSpec(format!("length = {} must be positive", spec.length)));
    }
    let n = spec.n_cells;
    let piece = |x0: f64, x1: f64, offset: usize, left, right| Piece {
        x0,
        h: (x1 - x0) / n as f64,
        n_points: n + 1,
        offset,
        left,
        right,
    };
    use EndKind::*;
    let pieces = match spec.kind {
        DomainKind::FullLine => vec![piece(-spec.length, spec.length, 0, FarField, FarField)],
        DomainKind::HalfLine => vec![piece(0.0, spec.length, 0, Boundary(BcSite::AtZero), FarField)],
        DomainKind::Interval => vec![piece(
            0.0,
            spec.b,
            0,
            Boundary(BcSite::AtZero),
            Boundary(BcSite::AtB),
        )],
        DomainKind::Exterior => vec![
            piece(-spec.length, 0.0, 0, FarField, Boundary(BcSite::AtZero)),
            piece(spec.b, spec.b + spec.length, n + 1, Boundary(BcSite::AtB), FarField),
        ],
    };
    Ok(Grid { spec: *spec, pieces })
}

impl Grid {
    pub fn n_points(&self) -> usize {
        self.pieces.iter().map(|p| p.n_points).sum()
    }

    pub fn points(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .flat_map(|p| (0..p.n_points).map(move |i| p.x(i)))
            .collect()
    }

    /// Composite trapezoid weights, piece by piece.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_points());
        for p in &self.pieces {
            for i in 0..p.n_points {
                let end = i == 0 || i + 1 == p.n_points;
                w.push(if end { 0.5 * p.h } else { p.h });
            }
        }
        w
    }

    /// Locates the piece end carrying the boundary condition at `site`.
    pub fn bc_end(&self, site: BcSite) -> Option<(usize, PieceEnd)> {
        for (i, p) in self.pieces.iter().enumerate() {
            for end in [PieceEnd::Left, PieceEnd::Right] {
                if p.end_kind(end) == EndKind::Boundary(site) {
                    return Some((i, end));
                }
            }
        }
        None
    }

    /// Smallest spacing over all pieces.
    pub fn h_min(&self) -> f64 {
        self.pieces.iter().map(|p| p.h).fold(f64::INFINITY, f64::min)
    }
}

/// One-sided second-order stencil for `u^{(order)}` at a piece end, pointing into the piece.
/// Returns `(global index, weight)` pairs.
pub fn one_sided_stencil(piece: &Piece, end: PieceEnd, order: usize) -> Result<Vec<(usize, f64)>> {
    let needed = order + 2;
    if piece.n_points < needed.max(3) {
        return Err(Error::GridTooCoarse(format!(
            "{} points available, one-sided stencil of order {order} needs {}",
            piece.n_points,
            needed.max(3)
        )));
    }
    let h = piece.h;
    let (base, dir): (usize, isize) = match end {
        PieceEnd::Left => (piece.offset, 1),
        PieceEnd::Right => (piece.offset + piece.n_points - 1, -1),
    };
    let at = |k: isize| (base as isize + dir * k) as usize;
    Ok(match order {
        0 => vec![(base, 1.0)],
        1 => {
            let s = dir as f64 / (2.0 * h);
            vec![(at(0), -3.0 * s), (at(1), 4.0 * s), (at(2), -s)]
        }
        2 => {
            let s = 1.0 / (h * h);
            vec![(at(0), 2.0 * s), (at(1), -5.0 * s), (at(2), 4.0 * s), (at(3), -s)]
        }
        _ => return Err(Error::InvalidSpec(format!("derivative order {order} unsupported"))),
    })
}

/// Values in `ℂᴺ` at every grid point, stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub dim: usize,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(n_points: usize, dim: usize) -> Self {
        Self { dim, values: vec![ZERO; n_points * dim] }
    }

    pub fn from_values(dim: usize, values: Vec<C64>) -> Self {
        assert_eq!(values.len() % dim, 0);
        Self { dim, values }
    }

    pub fn from_fn(grid: &Grid, dim: usize, f: impl Fn(f64) -> Vec<C64>) -> Self {
        let mut values = Vec::with_capacity(grid.n_points() * dim);
        for x in grid.points() {
            let v = f(x);
            assert_eq!(v.len(), dim, "function returned wrong dimension");
            values.extend(v);
        }
        Self { dim, values }
    }

    pub fn scalar_from_fn(grid: &Grid, f: impl Fn(f64) -> C64) -> Self {
        Self::from_fn(grid, 1, |x| vec![f(x)])
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn at(&self, k: usize) -> &[C64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { dim: self.dim, values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    /// Discrete `L_p(σ; ℓ_q)` norm with trapezoid weights.
    pub fn norm(&self, grid: &Grid, p: f64, q: f64) -> f64 {
        let w = grid.weights();
        assert_eq!(w.len(), self.n_points());
        if p.is_infinite() {
            return (0..self.n_points()).map(|k| lq_norm(self.at(k), q)).fold(0.0, f64::max);
        }
        let s: f64 = w
            .iter()
            .enumerate()
            .map(|(k, wk)| wk * lq_norm(self.at(k), q).powf(p))
            .sum();
        s.powf(1.0 / p)
    }

    /// Largest pointwise `ℓ_q` value.
    pub fn max_norm(&self, q: f64) -> f64 {
        (0..self.n_points()).map(|k| lq_norm(self.at(k), q)).fold(0.0, f64::max)
    }
}

/// Finite-difference derivative of order 1 or 2: centered in the interior of each piece,
/// second-order one-sided at piece ends.
pub fn derivative(grid: &Grid, u: &GridFunction, order: usize) -> Result<GridFunction> {
    let dim = u.dim;
    let mut out = GridFunction::zeros(u.n_points(), dim);
    for piece in &grid.pieces {
        let h = piece.h;
        for local in 1..piece.n_points - 1 {
            let k = piece.offset + local;
            for c in 0..dim {
                let (um, u0, up) = (u.at(k - 1)[c], u.at(k)[c], u.at(k + 1)[c]);
                out.at_mut(k)[c] = match order {
                    1 => (up - um) / (2.0 * h),
                    2 => (up - 2.0 * u0 + um) / (h * h),
                    _ => return Err(Error::InvalidSpec(format!("order {order} unsupported"))),
                };
            }
        }
        for end in [PieceEnd::Left, PieceEnd::Right] {
            let st = one_sided_stencil(piece, end, order)?;
            let k = piece.end_index(end);
            for c in 0..dim {
                out.at_mut(k)[c] = st.iter().map(|&(j, w)| u.at(j)[c] * w).sum();
            }
        }
    }
    Ok(out)
}

/// Boundary coefficients `αᵢ` (at 0) and `βᵢ` (at b) with `μ = len − 1 ∈ {0, 1}`,
/// and the norm exponent `p` fixing the weights `νᵢ = i/2 + 1/(2p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditionSet {
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
    pub p: f64,
}

impl BoundaryConditionSet {
    pub fn new(alpha: Vec<C64>, beta: Vec<C64>, p: f64) -> Result<Self> {
        let bc = Self { alpha, beta, p };
        bc.validate()?;
        Ok(bc)
    }

    pub fn dirichlet(p: f64) -> Self {
        Self { alpha: vec![C64::new(1.0, 0.0)], beta: vec![C64::new(1.0, 0.0)], p }
    }

    pub fn neumann(p: f64) -> Self {
        Self { alpha: vec![ZERO, C64::new(1.0, 0.0)], beta: vec![ZERO, C64::new(1.0, 0.0)], p }
    }

    pub fn mu1(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn mu2(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn nu(&self, i: usize) -> f64 {
        i as f64 / 2.0 + 1.0 / (2.0 * self.p)
    }

    pub fn coeffs(&self, site: BcSite) -> &[C64] {
        match site {
            BcSite::AtZero => &self.alpha,
            BcSite::AtB => &self.beta,
        }
    }

    /// `η = (−1)^{μ₁} α_{μ₁} β_{μ₂}`.
    pub fn eta(&self) -> C64 {
        let sign = if self.mu1().is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * self.alpha[self.mu1()] * self.beta[self.mu2()]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::Validation { field: "p".into(), message: format!("p = {} not in (1, inf)", self.p) });
        }
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if v.is_empty() || v.len() > 2 {
                return Err(Error::Validation {
                    field: name.into(),
                    message: format!("order mu = {} not in {{0, 1}}", v.len() as isize - 1),
                });
            }
            if *v.last().unwrap() == ZERO {
                return Err(Error::Validation { field: name.into(), message: "leading coefficient is zero".into() });
            }
        }
        if self.eta() == ZERO {
            return Err(Error::Validation { field: "bc".into(), message: "eta = 0".into() });
        }
        Ok(())
    }

    /// Row weights `cᵢ ε^{νᵢ}` for the condition at `site`.
    pub fn weights(&self, site: BcSite, eps: f64) -> Vec<C64> {
        self.coeffs(site)
            .iter()
            .enumerate()
            .map(|(i, c)| c * eps.powf(self.nu(i)))
            .collect()
    }
}

/// `Σᵢ cᵢ ε^{νᵢ} u^{(i)}(endpoint)` with one-sided derivatives taken into the domain.
pub fn boundary_functional(
    grid: &Grid,
    u: &GridFunction,
    bc: &BoundaryConditionSet,
    eps: f64,
    site: BcSite,
) -> Result<Vec<C64>> {
    let (pi, end) = grid
        .bc_end(site)
        .ok_or_else(|| Error::InvalidSpec(format!("grid has no boundary at {site:?}")))?;
    let piece = &grid.pieces[pi];
    if piece.n_points < 3 {
        return Err(Error::GridTooCoarse("fewer than 3 points next to the boundary".into()));
    }
    let mut out = vec![ZERO; u.dim];
    for (i, w) in bc.weights(site, eps).into_iter().enumerate() {
        for (k, s) in one_sided_stencil(piece, end, i)? {
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * s * u.at(k)[c];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn roots_of_minus_one() {
        let r = characteristic_roots(cx(-1.0, 0.0)).unwrap();
        assert_eq!(r.omega1, cx(-1.0, 0.0));
        assert_eq!(r.omega2, cx(1.0, 0.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn roots_of_i_square_to_minus_inverse() {
        let a = cx(0.0, 1.0);
        let r = characteristic_roots(a).unwrap();
        for w in r.roots() {
            assert!((w * w + a.inv()).norm() < 1e-14);
        }
        // both square roots of i are ±e^{iπ/4}
        let e = C64::from_polar(1.0, FRAC_PI_4);
        assert!((r.omega2 - e).norm() < 1e-14 || (r.omega1 - e).norm() < 1e-14);
        assert!(r.omega1.re <= r.omega2.re);
    }

    #[test]
    fn roots_of_plus_one_are_degenerate() {
        let r = characteristic_roots(cx(1.0, 0.0)).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.omega1, cx(0.0, -1.0));
        assert_eq!(r.omega2, cx(0.0, 1.0));
        assert!(matches!(r.require_admissible(), Err(Error::AdmissibilityViolation { .. })));
    }

    #[test]
    fn zero_coefficient_rejected() {
        assert!(matches!(characteristic_roots(ZERO), Err(Error::ZeroCoefficient)));
    }

    #[test]
    fn admissibility_real_negative_phi_zero() {
        let rep = sector_admissibility(cx(-1.0, 0.0), 0.0, 10).unwrap();
        assert!(rep.gate_passed);
        assert_eq!(rep.failing_fraction, [1.0, 0.0]);
    }

    #[test]
    fn admissibility_gate_fails_for_positive_a() {
        let rep = sector_admissibility(cx(1.0, 0.0), 0.3, 5).unwrap();
        assert!(!rep.gate_passed);
        assert!(rep.check_gate().is_err());
    }

    #[test]
    fn admissibility_quarter_sector_matches_angle_check() {
        let a = cx(-1.0, 0.0);
        let rep = sector_admissibility(a, FRAC_PI_4, 7).unwrap();
        let roots = characteristic_roots(a).unwrap();
        // independent angle check |arg λ − arg ω| ≤ π/4 (wrapped)
        let mut fails = [0usize; 2];
        for s in &rep.samples {
            for (k, w) in roots.roots().iter().enumerate() {
                let mut d = s.lambda.arg() - w.arg();
                while d > PI {
                    d -= 2.0 * PI;
                }
                while d < -PI {
                    d += 2.0 * PI;
                }
                if d.abs() > FRAC_PI_4 + 1e-12 {
                    fails[k] += 1;
                }
            }
        }
        let n = rep.samples.len() as f64;
        assert_eq!(rep.failing_fraction, [fails[0] as f64 / n, fails[1] as f64 / n]);
        assert_eq!(rep.failing_fraction, [1.0, 0.0]);
    }

    #[test]
    fn interval_grid() {
        let g = build_grid(&DomainSpec::interval(1.0, 4)).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.bc_end(BcSite::AtZero), Some((0, PieceEnd::Left)));
        assert_eq!(g.bc_end(BcSite::AtB), Some((0, PieceEnd::Right)));
    }

    #[test]
    fn exterior_grid() {
        let g = build_grid(&DomainSpec::exterior(1.0, 2.0, 4)).unwrap();
        assert_eq!(g.points(), vec![-2.0, -1.5, -1.0, -0.5, 0.0, 1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(g.pieces[0].right, EndKind::Boundary(BcSite::AtZero));
        assert_eq!(g.pieces[1].left, EndKind::Boundary(BcSite::AtB));
        assert_eq!(g.pieces[0].left, EndKind::FarField);
        assert_eq!(g.pieces[1].right, EndKind::FarField);
    }

    #[test]
    fn half_line_grid() {
        let g = build_grid(&DomainSpec::half_line(10.0, 100)).unwrap();
        assert_eq!(g.n_points(), 101);
        assert_eq!(g.pieces[0].left, EndKind::Boundary(BcSite::AtZero));
        assert_eq!(g.pieces[0].right, EndKind::FarField);
        assert!((g.pieces[0].x_end() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(build_grid(&DomainSpec::interval(1.0, 3)).is_err());
        assert!(build_grid(&DomainSpec::interval(-1.0, 8)).is_err());
        assert!(build_grid(&DomainSpec::half_line(0.0, 8)).is_err());
    }

    #[test]
    fn functional_dirichlet_constant() {
        let g = build_grid(&DomainSpec::interval(1.0, 10)).unwrap();
        let v = [cx(1.0, 2.0), cx(-3.0, 0.5)];
        let u = GridFunction::from_fn(&g, 2, |_| v.to_vec());
        let bc = BoundaryConditionSet::dirichlet(2.0);
        let f = boundary_functional(&g, &u, &bc, 1.0, BcSite::AtZero).unwrap();
        assert!((f[0] - v[0]).norm() < 1e-15 && (f[1] - v[1]).norm() < 1e-15);
    }

    #[test]
    fn functional_neumann_linear() {
        let g = build_grid(&DomainSpec::interval(1.0, 10)).unwrap();
        let u = GridFunction::scalar_from_fn(&g, |x| cx(x, 0.0));
        let bc = BoundaryConditionSet::new(vec![ZERO, cx(1.0, 0.0)], vec![cx(1.0, 0.0)], 2.0).unwrap();
        let f = boundary_functional(&g, &u, &bc, 1.0, BcSite::AtZero).unwrap();
        assert!((f[0] - cx(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn functional_robin_quadratic() {
        let h = 1e-3;
        let g = build_grid(&DomainSpec::interval(1.0, (1.0 / h) as usize)).unwrap();
        let u = GridFunction::scalar_from_fn(&g, |x| cx(1.0 + x * x, 0.0));
        let bc = BoundaryConditionSet::new(vec![cx(1.0, 0.0), cx(2.0, 0.0)], vec![cx(1.0, 0.0)], 2.0).unwrap();
        let f = boundary_functional(&g, &u, &bc, 4.0, BcSite::AtZero).unwrap();
        assert!((f[0] - cx(2f64.sqrt(), 0.0)).norm() < 1e-6);
    }

    #[test]
    fn functional_needs_three_points() {
        let g = Grid {
            spec: DomainSpec::interval(1.0, 4),
            pieces: vec![Piece {
                x0: 0.0,
                h: 1.0,
                n_points: 2,
                offset: 0,
                left: EndKind::Boundary(BcSite::AtZero),
                right: EndKind::Boundary(BcSite::AtB),
            }],
        };
        let u = GridFunction::zeros(2, 1);
        let bc = BoundaryConditionSet::dirichlet(2.0);
        assert!(matches!(
            boundary_functional(&g, &u, &bc, 1.0, BcSite::AtZero),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn mu_two_rejected() {
        let r = BoundaryConditionSet::new(vec![cx(1.0, 0.0); 3], vec![cx(1.0, 0.0)], 2.0);
        assert!(matches!(r, Err(Error::Validation { .. })));
    }

    fn arb_c() -> impl Strategy<Value = C64> {
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| C64::new(a, b))
    }

    proptest! {
        #[test]
        fn roots_square_to_minus_inverse(a in arb_c().prop_filter("nonzero", |a| a.norm() > 1e-3)) {
            let r = characteristic_roots(a).unwrap();
            for w in r.roots() {
                let target = -a.inv();
                prop_assert!((w * w - target).norm() <= 1e-12 * target.norm());
            }
            prop_assert_eq!(r.omega1, -r.omega2);
        }

        #[test]
        fn gate_invariant_under_positive_scaling(a in arb_c().prop_filter("nonzero", |a| a.norm() > 1e-3), t in 0.01f64..100.0) {
            let g1 = sector_admissibility(a, 0.5, 4).unwrap().gate_passed;
            let g2 = sector_admissibility(a * t, 0.5, 4).unwrap().gate_passed;
            prop_assert_eq!(g1, g2);
        }

        #[test]
        fn functional_is_linear(seed in 0u64..1000, cr in -3.0f64..3.0, ci in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = build_grid(&DomainSpec::exterior(1.0, 3.0, 12)).unwrap();
            let n = g.n_points() * 2;
            let mut rnd = || GridFunction::from_values(2, (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect());
            let (u, w) = (rnd(), rnd());
            let bc = BoundaryConditionSet::new(vec![C64::new(1.0, 0.5), C64::new(-2.0, 0.0)], vec![C64::new(0.0, 1.0), C64::new(1.0, 1.0)], 3.0).unwrap();
            let cc = C64::new(cr, ci);
            for site in [BcSite::AtZero, BcSite::AtB] {
                let lhs = boundary_functional(&g, &u.scaled(cc).add(&w), &bc, 0.3, site).unwrap();
                let fu = boundary_functional(&g, &u, &bc, 0.3, site).unwrap();
                let fw = boundary_functional(&g, &w, &bc, 0.3, site).unwrap();
                for c in 0..2 {
                    let rhs = cc * fu[c] + fw[c];
                    prop_assert!((lhs[c] - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
                }
            }
        }

        #[test]
        fn grid_spacing_uniform(kind in 0usize..4, n in 4usize..200, b in 0.1f64..5.0, l in 0.5f64..20.0) {
            let spec = match kind {
                0 => DomainSpec::full_line(l, n),
                1 => DomainSpec::half_line(l, n),
                2 => DomainSpec::interval(b, n),
                _ => DomainSpec::exterior(b, l, n),
            };
            let g = build_grid(&spec).unwrap();
            let pts = g.points();
            for p in &g.pieces {
                let xs = &pts[p.offset..p.offset + p.n_points];
                for wdw in xs.windows(3) {
                    prop_assert!(((wdw[2] - wdw[1]) - (wdw[1] - wdw[0])).abs() <= 1e-14 * (1.0 + xs[xs.len()-1].abs()) * 10.0);
                }
            }
            prop_assert_eq!(g.bc_end(BcSite::AtZero).is_some(), spec.has_boundary_at_zero());
            prop_assert_eq!(g.bc_end(BcSite::AtB).is_some(), spec.has_boundary_at_b());
        }
    }
}

//! Numeric accessibility and small-time local controllability checks on the
//! control-affine form ẋ = f₀(x) + Σ gᵢ(x)uᵢ with x = [q; ζ].
//!
//! Brackets are evaluated by central finite differences on the fields so the
//! check stays independent of the analytic derivatives used elsewhere.

use std::cmp::Ordering;
use std::fmt;

use crate::config::SwarmConfig;
use crate::constraint::nullspace_basis;
use crate::dynamics::{coriolis_force, mass_matrix};
use crate::error::{check_dim, EmffError, Result};
use crate::kinematics::apply_rate_matrix;
use crate::linalg::{singular_values, span_residual};
use crate::{DMat, DVec};

/// Default relative step of the finite-difference Jacobians.
pub const DEFAULT_STEP: f64 = 1e-6;
/// Rank threshold relative to the largest singular value.
pub const RANK_TOLERANCE: f64 = 1e-8;
/// Relative least-squares residual below which a bracket counts as spanned.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// Directional derivative DF(x)·d by central differences along d/‖d‖.
pub fn directional_derivative<F>(f: F, x: &DVec, d: &DVec, step: f64) -> DVec
where
    F: Fn(&DVec) -> DVec,
{
    let dn = d.norm();
    if dn == 0.0 {
        return DVec::zeros(f(x).len());
    }
    let h = step * x.norm().max(1.0);
    let dir = d * (h / dn);
    (f(&(x + &dir)) - f(&(x - &dir))) * (dn / (2.0 * h))
}

/// [f, g](x) = Dg·f − Df·g with relative step `step`.
pub fn lie_bracket<F, G>(f: F, g: G, x: &DVec, step: f64) -> DVec
where
    F: Fn(&DVec) -> DVec,
    G: Fn(&DVec) -> DVec,
{
    let fx = f(x);
    let gx = g(x);
    directional_derivative(&g, x, &fx, step) - directional_derivative(&f, x, &gx, step)
}

/// A generator of the bracket algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    Drift,
    /// Control field gᵢ, zero-based.
    Control(usize),
}

impl Letter {
    fn rank(self) -> usize {
        match self {
            Letter::Drift => 0,
            Letter::Control(i) => i + 1,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::Drift => write!(f, "f0"),
            Letter::Control(i) => write!(f, "g{}", i + 1),
        }
    }
}

/// A bracket word: a letter or the bracket of two words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Word {
    Letter(Letter),
    Bracket(Box<Word>, Box<Word>),
}

impl Word {
    pub fn letter(l: Letter) -> Self {
        Word::Letter(l)
    }

    pub fn bracket(a: Word, b: Word) -> Self {
        Word::Bracket(Box::new(a), Box::new(b))
    }

    pub fn degree(&self) -> usize {
        match self {
            Word::Letter(_) => 1,
            Word::Bracket(a, b) => a.degree() + b.degree(),
        }
    }

    /// Occurrences of f₀ and of each gᵢ (`controls` entries).
    pub fn counts(&self, controls: usize) -> (usize, Vec<usize>) {
        let mut d0 = 0;
        let mut di = vec![0; controls];
        self.count_into(&mut d0, &mut di);
        (d0, di)
    }

    fn count_into(&self, d0: &mut usize, di: &mut [usize]) {
        match self {
            Word::Letter(Letter::Drift) => *d0 += 1,
            Word::Letter(Letter::Control(i)) => di[*i] += 1,
            Word::Bracket(a, b) => {
                a.count_into(d0, di);
                b.count_into(d0, di);
            }
        }
    }

    /// Bad iff f₀ occurs an odd number of times and every gᵢ an even number.
    pub fn is_bad(&self, controls: usize) -> bool {
        let (d0, di) = self.counts(controls);
        d0 % 2 == 1 && di.iter().all(|c| c % 2 == 0)
    }

    /// Hall order: by degree, then letters, then lexicographically on parts.
    fn hall_cmp(&self, other: &Word) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        match (self, other) {
            (Word::Letter(a), Word::Letter(b)) => a.rank().cmp(&b.rank()),
            (Word::Bracket(a1, b1), Word::Bracket(a2, b2)) => {
                a1.hall_cmp(a2).then_with(|| b1.hall_cmp(b2))
            }
            _ => unreachable!("equal degree"),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Letter(l) => write!(f, "{l}"),
            Word::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

/// Philip Hall basis of the free Lie algebra on f₀, g₁..g_k up to
/// `max_degree`, in Hall order.
pub fn philip_hall_basis(controls: usize, max_degree: usize) -> Vec<Word> {
    let mut by_degree: Vec<Vec<Word>> = vec![Vec::new(); max_degree + 1];
    if max_degree == 0 {
        return Vec::new();
    }
    by_degree[1].push(Word::letter(Letter::Drift));
    by_degree[1].extend((0..controls).map(|i| Word::letter(Letter::Control(i))));
    for d in 2..=max_degree {
        let mut words = Vec::new();
        for da in 1..d {
            let db = d - da;
            for a in &by_degree[da] {
                for b in &by_degree[db] {
                    if a.hall_cmp(b) != Ordering::Less {
                        continue;
                    }
                    if let Word::Bracket(b1, _) = b {
                        if b1.hall_cmp(a) == Ordering::Greater {
                            continue;
                        }
                    }
                    words.push(Word::bracket(a.clone(), b.clone()));
                }
            }
        }
        words.sort_by(|a, b| a.hall_cmp(b));
        by_degree[d] = words;
    }
    by_degree.into_iter().flatten().collect()
}

/// ẋ = f₀(x) + Σ gᵢ(x)uᵢ with f₀ = [Ẑζ; −[M]⁻¹[C]ζ] and gᵢ = [0; Sᵢ(q)].
#[derive(Debug, Clone)]
pub struct AffineSystem {
    pub swarm: SwarmConfig,
    m_inv: DMat,
    /// Relative step of the finite differences along directions that move q.
    pub step: f64,
}

impl AffineSystem {
    pub fn new(swarm: SwarmConfig) -> Result<Self> {
        swarm.validate()?;
        let m_inv = mass_matrix(&swarm).try_inverse().ok_or(EmffError::NotPositiveDefinite)?;
        Ok(Self { swarm, m_inv, step: DEFAULT_STEP })
    }

    /// 12n − 6.
    pub fn dim(&self) -> usize {
        2 * self.swarm.dim_q()
    }

    /// 6n − 6.
    pub fn controls(&self) -> usize {
        self.swarm.dim_v()
    }

    pub fn split(&self, x: &DVec) -> (DVec, DVec) {
        let nq = self.swarm.dim_q();
        (x.rows(0, nq).into_owned(), x.rows(nq, nq).into_owned())
    }

    pub fn join(&self, q: &DVec, zeta: &DVec) -> DVec {
        let nq = self.swarm.dim_q();
        let mut x = DVec::zeros(2 * nq);
        x.rows_mut(0, nq).copy_from(q);
        x.rows_mut(nq, nq).copy_from(zeta);
        x
    }

    pub fn drift(&self, x: &DVec) -> DVec {
        let (q, zeta) = self.split(x);
        let top = apply_rate_matrix(&self.swarm, &q, &zeta);
        let bottom = -(&self.m_inv * coriolis_force(&self.swarm, &zeta));
        self.join(&top, &bottom)
    }

    pub fn control_field(&self, i: usize, x: &DVec) -> DVec {
        let (q, _) = self.split(x);
        let s = nullspace_basis(&self.swarm, &q);
        self.join(&DVec::zeros(q.len()), &s.column(i).into_owned())
    }

    pub fn field(&self, l: Letter, x: &DVec) -> DVec {
        match l {
            Letter::Drift => self.drift(x),
            Letter::Control(i) => self.control_field(i, x),
        }
    }

    /// Directional derivative of a word's field along d. The fields are
    /// polynomials of degree at most two in ζ, so along directions that
    /// leave q fixed a central difference with unit step is exact and
    /// avoids amplifying the noise of nested differences.
    fn derivative_along(&self, w: &Word, x: &DVec, d: &DVec) -> DVec {
        let nq = self.swarm.dim_q();
        let moves_q = d.rows(0, nq).iter().any(|&c| c != 0.0);
        let f = |y: &DVec| self.evaluate(w, y);
        if moves_q {
            directional_derivative(f, x, d, self.step)
        } else {
            let dn = d.norm();
            if dn == 0.0 {
                return DVec::zeros(x.len());
            }
            let dir = d / dn;
            (f(&(x + &dir)) - f(&(x - &dir))) * (dn / 2.0)
        }
    }

    /// Field of a bracket word at x.
    pub fn evaluate(&self, w: &Word, x: &DVec) -> DVec {
        match w {
            Word::Letter(l) => self.field(*l, x),
            Word::Bracket(a, b) => {
                let fa = self.evaluate(a, x);
                let fb = self.evaluate(b, x);
                self.derivative_along(b, x, &fa) - self.derivative_along(a, x, &fb)
            }
        }
    }

    fn check_state(&self, x: &DVec) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let (q, _) = self.split(x);
        let s = nullspace_basis(&self.swarm, &q);
        let sv = singular_values(&s);
        let lo = sv.last().copied().unwrap_or(0.0);
        if !(lo > 1e-9 * sv[0]) || !x.iter().all(|v| v.is_finite()) {
            return Err(EmffError::DegenerateState(format!(
                "null-space basis is rank deficient (smallest singular value {lo:.3e})"
            )));
        }
        let pose = crate::kinematics::Pose::new(&self.swarm, &q);
        for i in 0..pose.positions.len() {
            for j in i + 1..pose.positions.len() {
                let d = (pose.positions[i] - pose.positions[j]).norm();
                if d < self.swarm.r_min {
                    return Err(EmffError::DegenerateState(format!(
                        "satellites {} and {} are {d:.3e} m apart",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// The listed spanning set: gᵢ, [f₀,gᵢ], the three cyclic [gₐ,[f₀,g_b]]
    /// and, for the same three pairs, [[f₀,gₐ],[f₀,g_b]].
    ///
    /// With gᵢ = [0; Sᵢ(q)] the brackets [gₐ,g_b] vanish identically on x,
    /// so the configuration-space brackets [Xₐ,X_b] enter through their
    /// second-order lift [[f₀,gₐ],[f₀,g_b]], which carries −[Xₐ,X_b] in
    /// its q block at zero velocity.
    pub fn spanning_words(&self, pairs: &[(usize, usize)]) -> Vec<Word> {
        let g = |i: usize| Word::letter(Letter::Control(i));
        let f0 = || Word::letter(Letter::Drift);
        let mut words: Vec<Word> = (0..self.controls()).map(g).collect();
        words.extend((0..self.controls()).map(|i| Word::bracket(f0(), g(i))));
        for &(a, b) in pairs {
            words.push(Word::bracket(g(a), Word::bracket(f0(), g(b))));
        }
        for &(a, b) in pairs {
            words.push(Word::bracket(Word::bracket(f0(), g(a)), Word::bracket(f0(), g(b))));
        }
        words
    }
}

/// Cyclic pairs (1,2), (2,3), (3,1) of the first three control fields.
pub const CYCLIC_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Rank of the spanning set at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Dimension 12n − 6 of the state space.
    pub dim: usize,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    /// Rank equals the state dimension.
    pub fn full(&self) -> bool {
        self.rank == self.dim
    }

    /// Dimension 12n − 9 of the level set Aζ = const through the state.
    ///
    /// The drift is free rigid-body motion and every gᵢ lies in ker A, so
    /// both conserve total angular momentum and every bracket is tangent to
    /// this level set. The rank can therefore never exceed this value.
    pub fn level_set_dim(&self) -> usize {
        self.dim - 3
    }

    /// Rank equals the dimension of the momentum level set.
    pub fn full_on_level_set(&self) -> bool {
        self.rank == self.level_set_dim()
    }
}

/// Numerical rank of the spanning set at x (threshold σ_max·10⁻⁸).
pub fn accessibility_rank(sys: &AffineSystem, x: &DVec) -> Result<RankReport> {
    sys.check_state(x)?;
    let words = sys.spanning_words(&CYCLIC_PAIRS);
    let cols: Vec<DVec> = words.iter().map(|w| sys.evaluate(w, x)).collect();
    let m = DMat::from_columns(&cols);
    let sv = singular_values(&m);
    let hi = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * hi).count();
    Ok(RankReport { rank, dim: sys.dim(), singular_values: sv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Good,
    Bad,
}

/// One Philip Hall word with its δ-counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketTerm {
    pub word: Word,
    pub delta_0: usize,
    pub delta: Vec<usize>,
    pub classification: Classification,
}

/// Tags every Philip Hall word up to `max_degree` as good or bad.
pub fn classify_brackets(controls: usize, max_degree: usize) -> Vec<BracketTerm> {
    philip_hall_basis(controls, max_degree)
        .into_iter()
        .map(|word| {
            let (delta_0, delta) = word.counts(controls);
            let classification =
                if word.is_bad(controls) { Classification::Bad } else { Classification::Good };
            BracketTerm { word, delta_0, delta, classification }
        })
        .collect()
}

/// Span residual of one bad bracket at one state, relative to the larger of
/// the bracket's norm and the spectral norm of the lower-order good set, so
/// that a bracket vanishing up to difference noise counts as spanned.
#[derive(Debug, Clone, PartialEq)]
pub struct BadBracketCheck {
    pub word: Word,
    pub norm: f64,
    pub residual: f64,
}

impl BadBracketCheck {
    pub fn passes(&self) -> bool {
        self.residual <= SPAN_TOLERANCE
    }
}

/// Evaluates every bad word up to `max_degree` at x and measures its
/// distance from the span of the good words of lower degree.
pub fn check_bad_brackets(sys: &AffineSystem, x: &DVec, max_degree: usize) -> Result<Vec<BadBracketCheck>> {
    sys.check_state(x)?;
    let terms = classify_brackets(sys.controls(), max_degree);
    // Good words in Hall order, so those of degree < d form a prefix.
    let good: Vec<(usize, DVec)> = terms
        .iter()
        .filter(|t| t.classification == Classification::Good && t.word.degree() < max_degree)
        .map(|t| (t.word.degree(), sys.evaluate(&t.word, x)))
        .collect();
    let mut out = Vec::new();
    for term in terms.iter().filter(|t| t.classification == Classification::Bad) {
        let deg = term.word.degree();
        let lower: Vec<DVec> = good.iter().filter(|(d, _)| *d < deg).map(|(_, v)| v.clone()).collect();
        let b = sys.evaluate(&term.word, x);
        let norm = b.norm();
        let residual = if norm == 0.0 {
            0.0
        } else if lower.is_empty() {
            1.0
        } else {
            let basis = DMat::from_columns(&lower);
            let scale = norm.max(singular_values(&basis)[0]);
            span_residual(&basis, &b, RANK_TOLERANCE) * norm / scale
        };
        out.push(BadBracketCheck { word: term.word.clone(), norm, residual });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state(sys: &AffineSystem) -> DVec {
        let nq = sys.swarm.dim_q();
        let q = DVec::from_fn(nq, |i, _| 0.3 * ((i as f64) * 1.7 + 0.4).sin() + if i < 3 { 1.0 } else { 0.0 });
        sys.join(&q, &DVec::zeros(nq))
    }

    #[test]
    fn drift_vanishes_at_rest() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let x = sample_state(&sys);
        assert_eq!(sys.drift(&x).norm(), 0.0);
        assert_eq!(sys.dim(), 30);
    }

    #[test]
    fn control_fields_have_zero_top_block() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let x = sample_state(&sys);
        for i in 0..sys.controls() {
            assert!(sys.control_field(i, &x).rows(0, 15).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_fields_bracket_is_commutator() {
        let a = DMat::from_fn(4, 4, |i, j| (i as f64 - 2.0 * j as f64).sin());
        let b = DMat::from_fn(4, 4, |i, j| (1.0 + i as f64 * j as f64).cos());
        let x = DVec::from_vec(vec![0.3, -1.2, 0.7, 2.0]);
        let br = lie_bracket(|y: &DVec| &a * y, |y: &DVec| &b * y, &x, DEFAULT_STEP);
        let expect = (&b * &a - &a * &b) * &x;
        assert!((br - &expect).norm() <= 1e-8 * expect.norm());
    }

    #[test]
    fn bracket_of_field_with_itself_is_zero() {
        let f = |y: &DVec| y.map(|v| v.sin());
        let x = DVec::from_vec(vec![0.3, -1.2, 0.7]);
        assert!(lie_bracket(f, f, &x, DEFAULT_STEP).norm() == 0.0);
    }

    #[test]
    fn constant_fields_commute() {
        let c1 = DVec::from_vec(vec![1.0, 2.0]);
        let c2 = DVec::from_vec(vec![-3.0, 0.5]);
        let x = DVec::from_vec(vec![0.1, 0.2]);
        assert_eq!(lie_bracket(|_: &DVec| c1.clone(), |_: &DVec| c2.clone(), &x, DEFAULT_STEP).norm(), 0.0);
    }

    #[test]
    fn hall_basis_sizes_match_witt_formula() {
        // k letters: k, (k² − k)/2 and (k³ − k)/3 words of degree 1, 2, 3.
        for controls in [1usize, 2, 5, 12] {
            let k = controls + 1;
            let words = philip_hall_basis(controls, 3);
            let count = |d: usize| words.iter().filter(|w| w.degree() == d).count();
            assert_eq!(count(1), k);
            assert_eq!(count(2), (k * k - k) / 2);
            assert_eq!(count(3), (k * k * k - k) / 3);
        }
    }

    #[test]
    fn delta_count_rule() {
        let f0 = Word::letter(Letter::Drift);
        let g1 = Word::letter(Letter::Control(0));
        assert!(!Word::bracket(f0.clone(), g1.clone()).is_bad(3));
        assert!(Word::bracket(g1.clone(), Word::bracket(f0.clone(), g1.clone())).is_bad(3));
        assert!(f0.is_bad(3));
    }

    #[test]
    fn reference_swarm_spans_momentum_level_set() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let rep = accessibility_rank(&sys, &sample_state(&sys)).unwrap();
        assert_eq!(rep.rank, 27, "{:?}", rep.singular_values);
        assert!(rep.full_on_level_set());
        // Clear gap between the spanned directions and difference noise.
        assert!(rep.singular_values[26] > 1e6 * rep.singular_values[27]);
    }

    #[test]
    fn brackets_stay_tangent_to_momentum_level_set() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let x = sample_state(&sys);
        let (q, _) = sys.split(&x);
        let a = crate::constraint::momentum_matrix(&sys.swarm, &q);
        for w in sys.spanning_words(&CYCLIC_PAIRS) {
            let v = sys.evaluate(&w, &x);
            // d(Aζ) = A dζ + (dA[dq]) ζ, and ζ = 0 here.
            let (_, dz) = sys.split(&v);
            assert!((&a * dz).norm() <= 1e-8 * v.norm().max(1.0), "{w}");
        }
    }

    #[test]
    fn control_fields_alone_do_not_span() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let x = sample_state(&sys);
        let cols: Vec<DVec> = (0..sys.controls()).map(|i| sys.control_field(i, &x)).collect();
        assert!(crate::linalg::numerical_rank(&DMat::from_columns(&cols), RANK_TOLERANCE) <= 12);
    }

    #[test]
    fn bad_brackets_are_spanned_at_rest() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let checks = check_bad_brackets(&sys, &sample_state(&sys), 3).unwrap();
        assert_eq!(checks.len(), 1 + sys.controls());
        for c in &checks {
            assert!(c.passes(), "{} residual {:.3e} norm {:.3e}", c.word, c.residual, c.norm);
        }
    }

    #[test]
    fn co_located_satellites_are_degenerate() {
        let sys = AffineSystem::new(SwarmConfig::three_satellite_reference()).unwrap();
        let x = DVec::zeros(30);
        assert!(matches!(accessibility_rank(&sys, &x), Err(EmffError::DegenerateState(_))));
    }
}

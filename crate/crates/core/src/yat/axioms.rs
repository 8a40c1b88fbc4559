//! Empirical check of the metric-space axioms for the yat products.
//!
//! The axioms are evaluated verbatim on the measure's values: `d := E` or
//! `d := Ē`. Findings are reported, never asserted.

use serde::{Deserialize, Serialize};

use super::product::{posi_yat_unchecked, yat_unchecked};
use crate::error::{domain_err, Result};
use crate::linalg::{DrawKind, RngState};

/// Relative slack applied before a comparison counts as a violation.
pub const AXIOM_TOLERANCE: f64 = 1e-9;
pub const MAX_COUNTEREXAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "E")]
    E,
    #[serde(rename = "Ebar")]
    Ebar,
}

impl Measure {
    pub fn eval(self, a: &[f64], b: &[f64], epsilon: f64) -> f64 {
        match self {
            Measure::E => yat_unchecked(a, b, epsilon),
            Measure::Ebar => posi_yat_unchecked(a, b, epsilon),
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" | "yat" => Ok(Measure::E),
            "ebar" | "posi-yat" | "posi_yat" => Ok(Measure::Ebar),
            other => Err(domain_err!("unknown measure {other:?} (expected e or ebar)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    NonNegativity,
    Symmetry,
    IdentityForward,
    IdentityReverse,
    Triangle,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomViolations {
    pub non_negativity: u64,
    pub symmetry: u64,
    pub identity_forward: u64,
    pub identity_reverse: u64,
    pub triangle: u64,
}

impl AxiomViolations {
    fn bump(&mut self, axiom: Axiom) {
        match axiom {
            Axiom::NonNegativity => self.non_negativity += 1,
            Axiom::Symmetry => self.symmetry += 1,
            Axiom::IdentityForward => self.identity_forward += 1,
            Axiom::IdentityReverse => self.identity_reverse += 1,
            Axiom::Triangle => self.triangle += 1,
        }
    }
}

/// A stored violation: the points involved and the values that broke the axiom.
///
/// `points` holds one vector for `identity_forward`, two for the pairwise
/// axioms and three `(x, y, z)` for the triangle, whose check is
/// `d(x, z) <= d(x, y) + d(y, z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub axiom: Axiom,
    pub points: Vec<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Counterexample {
    /// Recomputes the axiom on the stored points.
    pub fn recheck(&self, measure: Measure, epsilon: f64) -> bool {
        evaluate(measure, epsilon, self.axiom, &self.points).is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub measure: Measure,
    pub samples: u64,
    pub dim: usize,
    pub epsilon: f64,
    pub violations: AxiomViolations,
    pub counterexamples: Vec<Counterexample>,
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + AXIOM_TOLERANCE * rhs.abs().max(1.0)
}

/// Returns `Some((lhs, rhs))` when `axiom` fails on `points`.
fn evaluate(measure: Measure, eps: f64, axiom: Axiom, points: &[Vec<f64>]) -> Option<(f64, f64)> {
    let d = |a: &[f64], b: &[f64]| measure.eval(a, b, eps);
    match axiom {
        Axiom::NonNegativity => {
            let v = d(&points[0], &points[1]);
            exceeds(0.0, v).then_some((0.0, v))
        }
        Axiom::Symmetry => {
            let ab = d(&points[0], &points[1]);
            let ba = d(&points[1], &points[0]);
            let gap = (ab - ba).abs();
            (gap > AXIOM_TOLERANCE * ab.abs().max(1.0)).then_some((ab, ba))
        }
        Axiom::IdentityForward => {
            let v = d(&points[0], &points[0]);
            exceeds(v.abs(), 0.0).then_some((v, 0.0))
        }
        Axiom::IdentityReverse => {
            let v = d(&points[0], &points[1]);
            let zero = v.abs() <= AXIOM_TOLERANCE;
            (zero && points[0] != points[1]).then_some((v, 0.0))
        }
        Axiom::Triangle => {
            let (x, y, z) = (&points[0], &points[1], &points[2]);
            let lhs = d(x, z);
            let rhs = d(x, y) + d(y, z);
            exceeds(lhs, rhs).then_some((lhs, rhs))
        }
    }
}

struct Tally {
    measure: Measure,
    epsilon: f64,
    violations: AxiomViolations,
    counterexamples: Vec<Counterexample>,
    /// Seeded cases are always stored, beyond the random-sample cap.
    seeded: bool,
}

impl Tally {
    fn check(&mut self, axiom: Axiom, points: Vec<Vec<f64>>) {
        if let Some((lhs, rhs)) = evaluate(self.measure, self.epsilon, axiom, &points) {
            self.violations.bump(axiom);
            if self.seeded || self.counterexamples.len() < MAX_COUNTEREXAMPLES {
                self.counterexamples.push(Counterexample {
                    axiom,
                    points,
                    lhs,
                    rhs,
                });
            }
        }
    }

    fn check_triple(&mut self, a: &[f64], b: &[f64], c: &[f64]) {
        let (a, b, c) = (a.to_vec(), b.to_vec(), c.to_vec());
        for (p, q) in [(&a, &b), (&b, &c), (&a, &c)] {
            self.check(Axiom::NonNegativity, vec![p.clone(), q.clone()]);
            self.check(Axiom::Symmetry, vec![p.clone(), q.clone()]);
            self.check(Axiom::IdentityReverse, vec![p.clone(), q.clone()]);
        }
        for p in [&a, &b, &c] {
            self.check(Axiom::IdentityForward, vec![p.clone()]);
        }
        // every choice of the intermediate point
        self.check(Axiom::Triangle, vec![a.clone(), b.clone(), c.clone()]);
        self.check(Axiom::Triangle, vec![a.clone(), c.clone(), b.clone()]);
        self.check(Axiom::Triangle, vec![b, a, c]);
    }
}

/// The seeded triple that breaks the triangle inequality for `E`.
pub fn seeded_triangle_case() -> [Vec<f64>; 3] {
    [vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.1, 0.0]]
}

/// Draws `samples` standard-normal triples in `dim` dimensions and tallies
/// axiom violations, then evaluates every seeded triple of the right length.
///
/// Each triple contributes three pairwise checks per pairwise axiom, three
/// identity-forward checks and three triangle checks (one per intermediate
/// point).
pub fn axiom_check(
    measure: Measure,
    samples: u64,
    dim: usize,
    epsilon: f64,
    state: RngState,
    seeded_cases: &[[Vec<f64>; 3]],
) -> Result<(AxiomReport, RngState)> {
    if dim < 2 {
        return Err(domain_err!("axiom check needs dim >= 2, got {dim}"));
    }
    if samples == 0 {
        return Err(domain_err!("axiom check needs at least one sample"));
    }
    if !(epsilon > 0.0) {
        return Err(domain_err!("epsilon must be positive"));
    }
    let mut tally = Tally {
        measure,
        epsilon,
        violations: AxiomViolations::default(),
        counterexamples: Vec::new(),
        seeded: false,
    };
    let mut state = state;
    const CHUNK: u64 = 4096;
    let mut done = 0u64;
    while done < samples {
        let n = CHUNK.min(samples - done);
        let (v, next) = state.draw(DrawKind::StandardNormal, (n as usize) * 3 * dim)?;
        state = next;
        for t in v.chunks_exact(3 * dim) {
            tally.check_triple(&t[..dim], &t[dim..2 * dim], &t[2 * dim..]);
        }
        done += n;
    }
    tally.seeded = true;
    for case in seeded_cases.iter().filter(|c| c.iter().all(|p| p.len() == dim)) {
        tally.check_triple(&case[0], &case[1], &case[2]);
    }
    Ok((
        AxiomReport {
            measure,
            samples,
            dim,
            epsilon,
            violations: tally.violations,
            counterexamples: tally.counterexamples,
        },
        state,
    ))
}

//! Finite state spaces with an adjoined cemetery point.
//!
//! States are dense indices `0..n`; the cemetery is the extra index `n`.
//! The measure `m` gives every state positive mass and the cemetery mass
//! zero, so "almost everywhere" statements reduce to "at every state".

use std::collections::HashSet;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    labels: Vec<String>,
    mass: Vec<f64>,
    phi: Vec<f64>,
}

impl StateSpace {
    /// Builds a space from labels, masses and reference-function values.
    pub fn new(labels: Vec<String>, mass: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidSpace("state space must have at least one state".into()));
        }
        for (len, what) in [(mass.len(), "mass"), (phi.len(), "phi")] {
            if len != n {
                return Err(Error::InvalidSpace(format!(
                    "{what} has {len} entries for {n} states"
                )));
            }
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate label '{label}'")));
            }
        }
        for (i, &w) in mass.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidSpace(format!(
                    "state '{}' has mass {w}; masses must be positive and finite",
                    labels[i]
                )));
            }
        }
        for (i, &p) in phi.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidSpace(format!(
                    "state '{}' has phi {p}; phi must lie in (0, 1]",
                    labels[i]
                )));
            }
        }
        let space = Self { labels, mass, phi };
        let total = space.integrate_values(&space.phi);
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidSpace(format!("integral of phi is {total}")));
        }
        Ok(space)
    }

    /// `n` states labelled `0..n`, each with the same mass, and phi = 1.
    pub fn uniform(n: usize, mass: f64) -> Result<Self> {
        Self::new(
            (0..n).map(|i| i.to_string()).collect(),
            vec![mass; n],
            vec![1.0; n],
        )
    }

    pub fn with_phi(&self, phi: Vec<f64>) -> Result<Self> {
        Self::new(self.labels.clone(), self.mass.clone(), phi)
    }

    pub fn with_mass(&self, mass: Vec<f64>) -> Result<Self> {
        Self::new(self.labels.clone(), mass, self.phi.clone())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of the cemetery point.
    pub fn cemetery(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mass of a point of `E ∪ {Δ}`; the cemetery carries none.
    pub fn mass_at(&self, point: usize) -> f64 {
        self.mass.get(point).copied().unwrap_or(0.0)
    }

    pub fn phi(&self) -> StateFunction {
        StateFunction::from(self.phi.clone())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn integrate_values(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.mass)
            .map(|(v, w)| v * w)
            .collect::<CompensatedSum>()
            .value()
    }

    fn check_dim(&self, f: &StateFunction) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: f.len() });
        }
        Ok(())
    }

    /// `∫ f dm`.
    pub fn integrate(&self, f: &StateFunction) -> Result<f64> {
        self.check_dim(f)?;
        Ok(self.integrate_values(f.values()))
    }

    /// The `L²(m)` inner product.
    pub fn h_inner(&self, f: &StateFunction, g: &StateFunction) -> Result<f64> {
        self.check_dim(f)?;
        self.check_dim(g)?;
        Ok(f.0
            .iter()
            .zip(g.0.iter())
            .zip(&self.mass)
            .map(|((a, b), w)| a * b * w)
            .collect::<CompensatedSum>()
            .value())
    }

    /// Parses a space definition file.
    ///
    /// One record per non-empty line: `label, mass[, phi]`. `#` starts a
    /// comment. Missing phi defaults to 1.
    pub fn parse(text: &str) -> std::result::Result<Self, SpaceParseError> {
        let mut labels = Vec::new();
        let mut mass = Vec::new();
        let mut phi = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(SpaceParseError::new(
                    line_no,
                    format!("expected 'label, mass[, phi]', found {} fields", fields.len()),
                ));
            }
            if fields[0].is_empty() {
                return Err(SpaceParseError::new(line_no, "empty label".into()));
            }
            let parse_num = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map_err(|_| SpaceParseError::new(line_no, format!("{what} '{s}' is not a number")))
            };
            let w = parse_num(fields[1], "mass")?;
            let p = match fields.get(2) {
                Some(s) => parse_num(s, "phi")?,
                None => 1.0,
            };
            if labels.iter().any(|l: &String| l == fields[0]) {
                return Err(SpaceParseError::new(line_no, format!("duplicate label '{}'", fields[0])));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(SpaceParseError::new(
                    line_no,
                    format!("state '{}': mass must be positive, got {w}", fields[0]),
                ));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(SpaceParseError::new(
                    line_no,
                    format!("state '{}': phi must lie in (0, 1], got {p}", fields[0]),
                ));
            }
            labels.push(fields[0].to_string());
            mass.push(w);
            phi.push(p);
        }
        StateSpace::new(labels, mass, phi).map_err(|e| SpaceParseError::new(0, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct SpaceParseError {
    pub line: usize,
    pub message: String,
}

impl SpaceParseError {
    fn new(line: usize, message: String) -> Self {
        Self { line, message }
    }
}

/// A real function on `E`, read as zero at the cemetery.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction(Vec<f64>);

impl StateFunction {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn indicator(n: usize, set: &StateSet) -> Self {
        Self((0..n).map(|i| if set.contains(i) { 1.0 } else { 0.0 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Value at a point of `E ∪ {Δ}`; exactly zero at the cemetery.
    pub fn eval(&self, point: usize) -> f64 {
        self.0.get(point).copied().unwrap_or(0.0)
    }

    /// The function on `E ∪ {Δ}` as a vector of length `n + 1`.
    pub fn extend_to_cemetery(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.push(0.0);
        v
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn min_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl From<Vec<f64>> for StateFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<DVector<f64>> for StateFunction {
    fn from(v: DVector<f64>) -> Self {
        Self(v.iter().copied().collect())
    }
}

impl From<&DVector<f64>> for StateFunction {
    fn from(v: &DVector<f64>) -> Self {
        Self(v.iter().copied().collect())
    }
}

/// A subset of `E`, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    mask: Vec<bool>,
}

impl StateSet {
    pub fn empty(n: usize) -> Self {
        Self { mask: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { mask: vec![true; n] }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!("state index {i} out of range 0..{n}")));
            }
            mask[i] = true;
        }
        Ok(Self { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_predicate(n: usize, pred: impl FnMut(usize) -> bool) -> Self {
        Self { mask: (0..n).map(pred).collect() }
    }

    /// `{x : f(x) > threshold}`.
    pub fn superlevel(f: &StateFunction, threshold: f64) -> Self {
        Self { mask: f.values().iter().map(|&v| v > threshold).collect() }
    }

    /// Size of the ambient space.
    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    /// Membership; the cemetery (and any out-of-range index) is never a member.
    pub fn contains(&self, point: usize) -> bool {
        self.mask.get(point).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect() }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect() }
    }

    pub fn complement(&self) -> Self {
        Self { mask: self.mask.iter().map(|b| !b).collect() }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }
}

impl fmt::Display for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.indices().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", idx.join(" "))
    }
}

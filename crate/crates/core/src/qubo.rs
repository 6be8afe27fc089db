//! Quadratic pseudo-Boolean forms over binary variables.

use std::collections::BTreeMap;

use crate::enumerate::{self, DEFAULT_ENUMERATION_LIMIT};
use crate::error::{Error, Result};

// Coefficients with magnitude below this are treated as cancelled.
const ZERO_TOL: f64 = 1e-12;

/// `constant + Σ linear[i]·x_i + Σ quadratic[(i,j)]·x_i·x_j` with `i < j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticForm {
    num_vars: usize,
    constant: f64,
    linear: BTreeMap<usize, f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
}

impl QuadraticForm {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn linear(&self) -> &BTreeMap<usize, f64> {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn is_empty(&self) -> bool {
        self.constant == 0.0 && self.linear.is_empty() && self.quadratic.is_empty()
    }

    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    pub fn add_linear(&mut self, i: usize, value: f64) {
        assert!(i < self.num_vars, "variable {i} out of range");
        if value == 0.0 {
            return;
        }
        let slot = self.linear.entry(i).or_insert(0.0);
        *slot += value;
        if slot.abs() < ZERO_TOL {
            self.linear.remove(&i);
        }
    }

    /// Adds `value·x_i·x_j`. A self-pair folds into the linear term (`x² = x`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            self.add_linear(i, value);
            return;
        }
        assert!(i < self.num_vars && j < self.num_vars, "pair out of range");
        if value == 0.0 {
            return;
        }
        let key = if i < j { (i, j) } else { (j, i) };
        let slot = self.quadratic.entry(key).or_insert(0.0);
        *slot += value;
        if slot.abs() < ZERO_TOL {
            self.quadratic.remove(&key);
        }
    }

    /// Adds `weight·(offset + Σ coeff·x)²`, expanded with `x² = x`.
    pub fn add_squared_affine(&mut self, weight: f64, offset: f64, terms: &[(usize, f64)]) {
        self.add_constant(weight * offset * offset);
        for (a, &(i, ci)) in terms.iter().enumerate() {
            self.add_linear(i, weight * (ci * ci + 2.0 * offset * ci));
            for &(j, cj) in &terms[a + 1..] {
                self.add_quadratic(i, j, weight * 2.0 * ci * cj);
            }
        }
    }

    /// Merges `other` into `self`, both over the same variables.
    pub fn add_form(&mut self, other: &QuadraticForm) {
        assert_eq!(self.num_vars, other.num_vars, "variable count mismatch");
        self.add_constant(other.constant);
        for (&i, &v) in &other.linear {
            self.add_linear(i, v);
        }
        for (&(i, j), &v) in &other.quadratic {
            self.add_quadratic(i, j, v);
        }
    }

    pub fn scaled(&self, factor: f64) -> QuadraticForm {
        let mut out = QuadraticForm::new(self.num_vars);
        out.add_constant(self.constant * factor);
        for (&i, &v) in &self.linear {
            out.add_linear(i, v * factor);
        }
        for (&(i, j), &v) in &self.quadratic {
            out.add_quadratic(i, j, v * factor);
        }
        out
    }

    pub fn evaluate(&self, bits: &[bool]) -> Result<f64> {
        if bits.len() != self.num_vars {
            return Err(Error::LengthMismatch {
                expected: self.num_vars,
                actual: bits.len(),
            });
        }
        let mut e = self.constant;
        for (&i, &v) in &self.linear {
            if bits[i] {
                e += v;
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if bits[i] && bits[j] {
                e += v;
            }
        }
        Ok(e)
    }

    /// Evaluates on a packed bitstring (variable `n` = bit `n`).
    pub fn evaluate_index(&self, z: u64) -> f64 {
        let bit = |i: usize| (z >> i) & 1 == 1;
        let mut e = self.constant;
        for (&i, &v) in &self.linear {
            if bit(i) {
                e += v;
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if bit(i) && bit(j) {
                e += v;
            }
        }
        e
    }

    /// Per-variable neighbour lists `(other, coefficient)` for local updates.
    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_vars];
        for (&(i, j), &v) in &self.quadratic {
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
        adj
    }

    /// Substitutes fixed values and re-indexes the remaining variables.
    ///
    /// Free variables keep their relative order. The reduced form evaluated on
    /// any completion equals the original form on the combined bitstring.
    pub fn fix(&self, assignments: &[(usize, bool)]) -> Result<FixedForm> {
        let mut fixed: Vec<Option<bool>> = vec![None; self.num_vars];
        for &(i, value) in assignments {
            if i >= self.num_vars {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.num_vars,
                });
            }
            match fixed[i] {
                Some(prev) if prev != value => return Err(Error::ConflictingAssignment(i)),
                _ => fixed[i] = Some(value),
            }
        }
        let free: Vec<usize> = (0..self.num_vars).filter(|&i| fixed[i].is_none()).collect();
        let mut position = vec![usize::MAX; self.num_vars];
        for (new, &old) in free.iter().enumerate() {
            position[old] = new;
        }

        let mut reduced = QuadraticForm::new(free.len());
        reduced.add_constant(self.constant);
        for (&i, &v) in &self.linear {
            match fixed[i] {
                Some(true) => reduced.add_constant(v),
                Some(false) => {}
                None => reduced.add_linear(position[i], v),
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            match (fixed[i], fixed[j]) {
                (Some(false), _) | (_, Some(false)) => {}
                (Some(true), Some(true)) => reduced.add_constant(v),
                (Some(true), None) => reduced.add_linear(position[j], v),
                (None, Some(true)) => reduced.add_linear(position[i], v),
                (None, None) => reduced.add_quadratic(position[i], position[j], v),
            }
        }
        Ok(FixedForm {
            form: reduced,
            free,
            fixed,
        })
    }

    /// Exhaustive minimization; returns every minimizer.
    pub fn brute_force_solve(&self) -> Result<BruteForceSolution> {
        self.brute_force_solve_with_limit(DEFAULT_ENUMERATION_LIMIT)
    }

    pub fn brute_force_solve_with_limit(&self, limit: usize) -> Result<BruteForceSolution> {
        enumerate::check_limit(self.num_vars, limit)?;
        let adj = self.adjacency();
        let lin: Vec<f64> = (0..self.num_vars)
            .map(|i| self.linear.get(&i).copied().unwrap_or(0.0))
            .collect();
        let flip = |z: u64, k: usize| {
            let mut field = lin[k];
            for &(j, v) in &adj[k] {
                if (z >> j) & 1 == 1 {
                    field += v;
                }
            }
            if (z >> k) & 1 == 1 {
                -field
            } else {
                field
            }
        };
        let ext = enumerate::extrema(self.num_vars, |z| self.evaluate_index(z), flip);
        Ok(BruteForceSolution {
            num_vars: self.num_vars,
            ground_set: ext.ground,
            e_min: ext.min,
            e_max: ext.max,
        })
    }
}

/// Result of [`QuadraticForm::fix`].
#[derive(Debug, Clone)]
pub struct FixedForm {
    pub form: QuadraticForm,
    /// Original index of each free variable, in reduced order.
    pub free: Vec<usize>,
    fixed: Vec<Option<bool>>,
}

impl FixedForm {
    /// Rebuilds the full bitstring from an assignment of the free variables.
    pub fn expand(&self, free_bits: &[bool]) -> Result<Vec<bool>> {
        if free_bits.len() != self.free.len() {
            return Err(Error::LengthMismatch {
                expected: self.free.len(),
                actual: free_bits.len(),
            });
        }
        let mut full: Vec<bool> = self.fixed.iter().map(|v| v.unwrap_or(false)).collect();
        for (&orig, &b) in self.free.iter().zip(free_bits) {
            full[orig] = b;
        }
        Ok(full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSolution {
    pub num_vars: usize,
    /// All minimizers, packed with variable `n` at bit `n`, ascending.
    pub ground_set: Vec<u64>,
    pub e_min: f64,
    pub e_max: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_form(n: usize, coeffs: &[i32]) -> QuadraticForm {
        let mut f = QuadraticForm::new(n);
        let mut it = coeffs.iter().cycle();
        f.add_constant(*it.next().unwrap() as f64);
        for i in 0..n {
            f.add_linear(i, *it.next().unwrap() as f64);
            for j in i + 1..n {
                f.add_quadratic(i, j, *it.next().unwrap() as f64 * 0.5);
            }
        }
        f
    }

    #[test]
    fn self_pair_folds_into_linear() {
        let mut f = QuadraticForm::new(2);
        f.add_quadratic(1, 1, 3.0);
        assert!(f.quadratic().is_empty());
        assert_eq!(f.linear().get(&1), Some(&3.0));
    }

    #[test]
    fn cancelled_coefficients_are_dropped() {
        let mut f = QuadraticForm::new(2);
        f.add_quadratic(0, 1, 2.0);
        f.add_quadratic(1, 0, -2.0);
        f.add_linear(0, 1.5);
        f.add_linear(0, -1.5);
        assert!(f.quadratic().is_empty());
        assert!(f.linear().is_empty());
    }

    #[test]
    fn squared_affine_matches_direct_square() {
        let mut f = QuadraticForm::new(3);
        f.add_squared_affine(2.0, -1.0, &[(0, 1.0), (1, 1.0), (2, -1.0)]);
        for z in 0..8u64 {
            let b = |k: u64| ((z >> k) & 1) as f64;
            let v = -1.0 + b(0) + b(1) - b(2);
            assert_eq!(f.evaluate_index(z), 2.0 * v * v);
        }
    }

    #[test]
    fn evaluate_rejects_wrong_length() {
        let f = QuadraticForm::new(3);
        assert!(matches!(
            f.evaluate(&[true]),
            Err(Error::LengthMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn fix_single_linear_to_constant() {
        let mut f = QuadraticForm::new(1);
        f.add_linear(0, 3.0);
        let r = f.fix(&[(0, true)]).unwrap();
        assert_eq!(r.form.num_vars(), 0);
        assert_eq!(r.form.constant(), 3.0);
        assert!(r.form.linear().is_empty());
    }

    #[test]
    fn fix_pair_to_zero_form() {
        let mut f = QuadraticForm::new(2);
        f.add_quadratic(0, 1, 1.0);
        let r = f.fix(&[(0, false)]).unwrap();
        assert_eq!(r.form.num_vars(), 1);
        assert!(r.form.is_empty());
        assert_eq!(r.free, vec![1]);
    }

    #[test]
    fn fix_errors() {
        let f = QuadraticForm::new(2);
        assert!(matches!(
            f.fix(&[(2, true)]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(matches!(
            f.fix(&[(1, true), (1, false)]),
            Err(Error::ConflictingAssignment(1))
        ));
        // repeated identical assignment is fine
        assert!(f.fix(&[(1, true), (1, true)]).is_ok());
    }

    #[test]
    fn fix_eight_variables_exhaustive() {
        let coeffs: Vec<i32> = (0..64).map(|k| (k * 37 % 11) - 5).collect();
        let f = random_form(8, &coeffs);
        let r = f.fix(&[(1, true), (4, false), (6, true)]).unwrap();
        assert_eq!(r.form.num_vars(), 5);
        for z in 0..32u64 {
            let free = crate::enumerate::index_to_bits(z, 5);
            let full = r.expand(&free).unwrap();
            let a = r.form.evaluate(&free).unwrap();
            let b = f.evaluate(&full).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn brute_force_single_variable() {
        let mut f = QuadraticForm::new(1);
        f.add_constant(2.0);
        f.add_linear(0, -2.0);
        let s = f.brute_force_solve().unwrap();
        assert_eq!(s.ground_set, vec![1]);
        assert_eq!(s.e_min, 0.0);
        assert_eq!(s.e_max, 2.0);
    }

    #[test]
    fn brute_force_constant_form_is_fully_degenerate() {
        let mut f = QuadraticForm::new(3);
        f.add_constant(4.0);
        let s = f.brute_force_solve().unwrap();
        assert_eq!(s.ground_set, (0..8).collect::<Vec<_>>());
        assert_eq!(s.e_min, s.e_max);
    }

    #[test]
    fn brute_force_limit() {
        let f = QuadraticForm::new(30);
        assert!(matches!(
            f.brute_force_solve(),
            Err(Error::TooManyVariables { qubits: 30, limit: 26 })
        ));
        let g = QuadraticForm::new(5);
        assert!(g.brute_force_solve_with_limit(4).is_err());
    }

    proptest! {
        #[test]
        fn fix_commutes_with_evaluation(
            coeffs in prop::collection::vec(-6i32..6, 80),
            mask in 0u64..(1 << 10),
            values in 0u64..(1 << 10),
        ) {
            let n = 10;
            let f = random_form(n, &coeffs);
            let assignments: Vec<(usize, bool)> = (0..n)
                .filter(|&i| (mask >> i) & 1 == 1)
                .map(|i| (i, (values >> i) & 1 == 1))
                .collect();
            let r = f.fix(&assignments).unwrap();
            let m = r.form.num_vars();
            for z in 0..(1u64 << m) {
                let free = crate::enumerate::index_to_bits(z, m);
                let full = r.expand(&free).unwrap();
                prop_assert!((r.form.evaluate(&free).unwrap() - f.evaluate(&full).unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn brute_force_matches_scan(coeffs in prop::collection::vec(-6i32..6, 60)) {
            let f = random_form(9, &coeffs);
            let s = f.brute_force_solve().unwrap();
            let values: Vec<f64> = (0..512u64).map(|z| f.evaluate_index(z)).collect();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ground: Vec<u64> = (0..512u64).filter(|&z| (values[z as usize] - min).abs() < 1e-9).collect();
            prop_assert_eq!(s.ground_set, ground);
            prop_assert!((s.e_min - min).abs() < 1e-9);
            prop_assert!((s.e_max - max).abs() < 1e-9);
        }
    }
}

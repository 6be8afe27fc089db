//! Dense statevector simulation of the hardware-efficient and QAOA circuits.
//!
//! Qubit `q` is bit `q` of the amplitude index (qubit 0 least significant).

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enumerate::DEFAULT_ENUMERATION_LIMIT;
use crate::error::{Error, Result};
use crate::ising::IsingHamiltonian;

/// Largest supported register.
pub const MAX_QUBITS: usize = DEFAULT_ENUMERATION_LIMIT;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::TooManyVariables {
                qubits: num_qubits,
                limit: MAX_QUBITS,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// `|+>^N`.
    pub fn uniform(num_qubits: usize) -> Result<Self> {
        let mut s = Self::zero(num_qubits)?;
        let a = Complex64::new((0.5f64).powf(num_qubits as f64 / 2.0), 0.0);
        s.amps.iter_mut().for_each(|x| *x = a);
        Ok(s)
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {} is not a power of two",
                amps.len()
            )));
        }
        Ok(Self { num_qubits: n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.num_qubits, other.num_qubits, "register size mismatch");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies a 2x2 matrix `[[m00, m01], [m10, m11]]` to qubit `q`.
    fn apply_single(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// `R_y(θ) = exp(-iθY/2)`.
    pub fn apply_ry(&mut self, q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | bit] = a0 * s + a1 * c;
            }
        }
    }

    /// Applies the R_y generator `-iY/2` (not unitary).
    pub fn apply_ry_generator(&mut self, q: usize) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = -a1 * 0.5;
                self.amps[i | bit] = a0 * 0.5;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let (c, t) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
    }

    /// `exp(-iβX)` on qubit `q`.
    pub fn apply_x_rotation(&mut self, q: usize, beta: f64) {
        let (s, c) = beta.sin_cos();
        let diag = Complex64::new(c, 0.0);
        let off = Complex64::new(0.0, -s);
        self.apply_single(q, [[diag, off], [off, diag]]);
    }

    /// Multiplies each amplitude by `exp(-iγE(z))`.
    pub fn apply_phase(&mut self, gamma: f64, energies: &[f64]) {
        assert_eq!(energies.len(), self.amps.len());
        for (a, &e) in self.amps.iter_mut().zip(energies) {
            *a *= Complex64::from_polar(1.0, -gamma * e);
        }
    }

    /// `Σ_z |a_z|² E(z)`.
    pub fn expectation(&self, energies: &[f64]) -> Result<f64> {
        if energies.len() != self.amps.len() {
            return Err(Error::LengthMismatch {
                expected: self.amps.len(),
                actual: energies.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(energies)
            .map(|(a, e)| a.norm_sqr() * e)
            .sum())
    }

    /// Total probability of the given basis states.
    pub fn overlap_with(&self, basis_states: &[u64]) -> f64 {
        basis_states
            .iter()
            .map(|&z| self.amps[z as usize].norm_sqr())
            .sum()
    }

    /// Draws `shots` bitstrings from the Born distribution.
    pub fn sample<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Vec<u64> {
        let mut cumulative = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
            cumulative.push(acc);
        }
        let total = acc;
        let last = self.amps.len() - 1;
        (0..shots)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                cumulative.partition_point(|&c| c <= u).min(last) as u64
            })
            .collect()
    }

    /// Lines `index re im`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.amps.iter().enumerate() {
            writeln!(out, "{i} {:?} {:?}", a.re, a.im).unwrap();
        }
        out
    }
}

/// Deterministic generator for one named sub-stream of a run seed.
///
/// ChaCha8 with the 64-bit run seed as key and `stream` as the stream id.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples `shots` bitstrings using the stream-0 generator of `seed`.
pub fn sample(state: &StateVector, shots: usize, seed: u64) -> Vec<u64> {
    state.sample(shots, &mut stream_rng(seed, 0))
}

/// `<ψ|H|ψ>` for a diagonal Hamiltonian.
pub fn exact_expectation(state: &StateVector, h: &IsingHamiltonian) -> Result<f64> {
    if h.num_qubits() != state.num_qubits() {
        return Err(Error::LengthMismatch {
            expected: state.num_qubits(),
            actual: h.num_qubits(),
        });
    }
    state.expectation(&h.diagonal()?)
}

/// Probability mass on the (possibly degenerate) ground set.
pub fn ground_state_overlap(state: &StateVector, ground_set: &[u64]) -> f64 {
    state.overlap_with(ground_set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Entangler {
    /// CNOTs `(i, i+1)` for even `i`, then for odd `i`.
    #[default]
    Brickwork,
    /// CNOTs `(0,1), (1,2), ...` in sequence.
    Chain,
}

impl std::str::FromStr for Entangler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brickwork" => Ok(Entangler::Brickwork),
            "chain" => Ok(Entangler::Chain),
            other => Err(Error::InvalidArgument(format!("unknown entangler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Gate {
    Ry { qubit: usize, param: usize },
    Cnot { control: usize, target: usize },
}

/// An initial `R_y` layer followed by `layers` blocks of CNOTs and `R_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareEfficientAnsatz {
    pub num_qubits: usize,
    pub layers: usize,
    pub entangler: Entangler,
}

impl HardwareEfficientAnsatz {
    pub fn new(num_qubits: usize, layers: usize) -> Self {
        Self {
            num_qubits,
            layers,
            entangler: Entangler::Brickwork,
        }
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    /// `N (p + 1)`; parameter `l·N + q` drives qubit `q` in rotation layer `l`.
    pub fn num_params(&self) -> usize {
        self.num_qubits * (self.layers + 1)
    }

    /// Angles preparing `|+>^N`: zero everywhere except `π/2` in the last layer.
    pub fn plus_state_params(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.num_params()];
        let n = self.num_qubits;
        theta[self.layers * n..].iter_mut().for_each(|t| *t = FRAC_PI_2);
        theta
    }

    fn gates(&self) -> Vec<Gate> {
        let n = self.num_qubits;
        let mut gates = Vec::new();
        let ry_layer = |gates: &mut Vec<Gate>, layer: usize| {
            for q in 0..n {
                gates.push(Gate::Ry {
                    qubit: q,
                    param: layer * n + q,
                });
            }
        };
        ry_layer(&mut gates, 0);
        for layer in 1..=self.layers {
            match self.entangler {
                Entangler::Brickwork => {
                    for start in [0, 1] {
                        for c in (start..n.saturating_sub(1)).step_by(2) {
                            gates.push(Gate::Cnot {
                                control: c,
                                target: c + 1,
                            });
                        }
                    }
                }
                Entangler::Chain => {
                    for c in 0..n.saturating_sub(1) {
                        gates.push(Gate::Cnot {
                            control: c,
                            target: c + 1,
                        });
                    }
                }
            }
            ry_layer(&mut gates, layer);
        }
        gates
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if self.num_qubits == 0 {
            return Err(Error::InvalidArgument("ansatz needs at least one qubit".into()));
        }
        if theta.len() != self.num_params() {
            return Err(Error::ParameterCount {
                expected: self.num_params(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn run(&self, theta: &[f64], derivative: Option<usize>) -> Result<StateVector> {
        self.check(theta)?;
        let mut state = StateVector::zero(self.num_qubits)?;
        for gate in self.gates() {
            match gate {
                Gate::Ry { qubit, param } => {
                    state.apply_ry(qubit, theta[param]);
                    if derivative == Some(param) {
                        state.apply_ry_generator(qubit);
                    }
                }
                Gate::Cnot { control, target } => state.apply_cnot(control, target),
            }
        }
        Ok(state)
    }

    /// `|ψ(θ)> = U(θ)|0...0>`.
    pub fn prepare(&self, theta: &[f64]) -> Result<StateVector> {
        self.run(theta, None)
    }

    /// `∂|ψ(θ)>/∂θ_j`, unnormalized.
    pub fn derivative_state(&self, theta: &[f64], j: usize) -> Result<StateVector> {
        if j >= self.num_params() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.num_params(),
            });
        }
        self.run(theta, Some(j))
    }
}

/// QAOA angles for `p` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct QaoaParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl QaoaParams {
    pub fn layers(&self) -> usize {
        self.beta.len()
    }

    /// Flat layout `[β_1..β_p, γ_1..γ_p]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::ParameterCount {
                expected: flat.len() + 1,
                actual: flat.len(),
            });
        }
        let p = flat.len() / 2;
        Ok(Self {
            beta: flat[..p].to_vec(),
            gamma: flat[p..].to_vec(),
        })
    }
}

/// QAOA state from a precomputed energy table: `|+>^N` followed by
/// `p` rounds of phase separation `exp(-iγE)` then mixer `exp(-iβX)^{⊗N}`.
pub fn prepare_qaoa_state_from_diagonal(
    energies: &[f64],
    params: &QaoaParams,
) -> Result<StateVector> {
    if params.beta.len() != params.gamma.len() {
        return Err(Error::ParameterCount {
            expected: params.beta.len(),
            actual: params.gamma.len(),
        });
    }
    let n = energies.len().trailing_zeros() as usize;
    let mut state = StateVector::uniform(n)?;
    for (&beta, &gamma) in params.beta.iter().zip(&params.gamma) {
        state.apply_phase(gamma, energies);
        for q in 0..n {
            state.apply_x_rotation(q, beta);
        }
    }
    Ok(state)
}

pub fn prepare_qaoa_state(h: &IsingHamiltonian, params: &QaoaParams) -> Result<StateVector> {
    prepare_qaoa_state_from_diagonal(&h.diagonal()?, params)
}

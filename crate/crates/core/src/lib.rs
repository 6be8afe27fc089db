//! Job-shop scheduling encoded as QUBO/Ising problems and solved with
//! simulated variational quantum algorithms (VQE, QAOA, VarQITE, F-VQE).
//!
//! Bit convention: variable `n` is qubit `n` and bit `n` of a basis-state
//! index. Bit value 0 corresponds to Z eigenvalue +1, bit value 1 to -1.

pub mod algorithms;
pub mod cobyla;
pub mod enumerate;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod ising;
pub mod jsp;
pub mod objectives;
pub mod qubo;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use algorithms::{Algorithm, Problem, RunConfig, Trace};
pub use ising::{IsingHamiltonian, Rescale, SpectrumExtrema};
pub use jsp::{JspInstance, Variable, VariableMap};
pub use qubo::QuadraticForm;

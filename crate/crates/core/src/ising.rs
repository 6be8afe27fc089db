//! Diagonal Ising Hamiltonians `h0 + Σ h_n Z_n + Σ J_nm Z_n Z_m`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::enumerate::{self, DEFAULT_ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::qubo::QuadraticForm;

#[derive(Debug, Clone, PartialEq)]
pub struct IsingHamiltonian {
    num_qubits: usize,
    pub h0: f64,
    /// Z coefficient per qubit.
    pub linear: Vec<f64>,
    /// ZZ coefficient per pair, keys `(n, m)` with `n < m`.
    pub quadratic: BTreeMap<(usize, usize), f64>,
}

/// Spin of bit `n` in `z`: +1 for bit 0, -1 for bit 1.
#[inline]
fn spin(z: u64, n: usize) -> f64 {
    if (z >> n) & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

impl IsingHamiltonian {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            h0: 0.0,
            linear: vec![0.0; num_qubits],
            quadratic: BTreeMap::new(),
        }
    }

    /// Substitutes `x = (1 - Z)/2` for every variable.
    pub fn from_qubo(form: &QuadraticForm) -> Self {
        let mut h = Self::new(form.num_vars());
        h.h0 = form.constant();
        for (&i, &a) in form.linear() {
            h.h0 += a / 2.0;
            h.linear[i] -= a / 2.0;
        }
        for (&(i, j), &q) in form.quadratic() {
            let w = q / 4.0;
            h.h0 += w;
            h.linear[i] -= w;
            h.linear[j] -= w;
            *h.quadratic.entry((i, j)).or_insert(0.0) += w;
        }
        h.quadratic.retain(|_, v| *v != 0.0);
        h
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn add_pair(&mut self, n: usize, m: usize, value: f64) {
        assert!(n != m, "self-pair");
        assert!(n < self.num_qubits && m < self.num_qubits);
        let key = if n < m { (n, m) } else { (m, n) };
        *self.quadratic.entry(key).or_insert(0.0) += value;
    }

    /// `<z|H|z>` for a packed bitstring.
    pub fn energy_index(&self, z: u64) -> f64 {
        let mut e = self.h0;
        for (n, &h) in self.linear.iter().enumerate() {
            e += h * spin(z, n);
        }
        for (&(n, m), &j) in &self.quadratic {
            e += j * spin(z, n) * spin(z, m);
        }
        e
    }

    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        if bits.len() != self.num_qubits {
            return Err(Error::LengthMismatch {
                expected: self.num_qubits,
                actual: bits.len(),
            });
        }
        Ok(self.energy_index(enumerate::bits_to_index(bits)))
    }

    fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_qubits];
        for (&(n, m), &j) in &self.quadratic {
            adj[n].push((m, j));
            adj[m].push((n, j));
        }
        adj
    }

    /// Energies of all `2^N` basis states, indexed by bitstring.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        enumerate::check_limit(self.num_qubits, DEFAULT_ENUMERATION_LIMIT)?;
        let adj = self.neighbours();
        let mut table = Vec::with_capacity(1usize << self.num_qubits);
        table.push(self.energy_index(0));
        for (k, neighbours) in adj.iter().enumerate() {
            // States below 2^k have bits >= k clear; set bit k.
            let base = table.len();
            for z in 0..base {
                let mut field = self.linear[k];
                for &(m, j) in neighbours {
                    if m < k {
                        field += j * spin(z as u64, m);
                    } else {
                        field += j;
                    }
                }
                table.push(table[z] - 2.0 * field);
            }
        }
        Ok(table)
    }

    pub fn spectrum_extrema(&self) -> Result<SpectrumExtrema> {
        self.spectrum_extrema_with_limit(DEFAULT_ENUMERATION_LIMIT)
    }

    pub fn spectrum_extrema_with_limit(&self, limit: usize) -> Result<SpectrumExtrema> {
        enumerate::check_limit(self.num_qubits, limit)?;
        let adj = self.neighbours();
        let flip = |z: u64, k: usize| {
            let mut field = self.linear[k];
            for &(m, j) in &adj[k] {
                field += j * spin(z, m);
            }
            -2.0 * spin(z, k) * field
        };
        let ext = enumerate::extrema(self.num_qubits, |z| self.energy_index(z), flip);
        Ok(SpectrumExtrema {
            e_min: ext.min,
            e_max: ext.max,
            ground_set: ext.ground,
        })
    }

    /// Text dump: `h0 v`, `Z n v`, `ZZ n m v`, preceded by a `# qubits N` line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# qubits {}", self.num_qubits).unwrap();
        writeln!(out, "h0 {:?}", self.h0).unwrap();
        for (n, &h) in self.linear.iter().enumerate() {
            if h != 0.0 {
                writeln!(out, "Z {n} {h:?}").unwrap();
            }
        }
        for (&(n, m), &j) in &self.quadratic {
            writeln!(out, "ZZ {n} {m} {j:?}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse(format!("line {line}: {msg}"));
        let mut qubits: Option<usize> = None;
        let mut h0 = 0.0;
        let mut lin: Vec<(usize, f64)> = Vec::new();
        let mut quad: Vec<(usize, usize, f64)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(line, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(line, "bad qubit index"));
            match fields.as_slice() {
                [] => {}
                ["#", "qubits", n] => qubits = Some(idx(n)?),
                [first, ..] if first.starts_with('#') => {}
                ["h0", v] => h0 = num(v)?,
                ["Z", n, v] => lin.push((idx(n)?, num(v)?)),
                ["ZZ", n, m, v] => {
                    let (n, m) = (idx(n)?, idx(m)?);
                    if n == m {
                        return Err(err(line, "self-pair"));
                    }
                    quad.push((n, m, num(v)?));
                }
                _ => return Err(err(line, "unrecognised term")),
            }
        }
        let inferred = lin
            .iter()
            .map(|t| t.0 + 1)
            .chain(quad.iter().map(|t| t.0.max(t.1) + 1))
            .max()
            .unwrap_or(0);
        let n = qubits.unwrap_or(inferred);
        if inferred > n {
            return Err(Error::Parse(format!(
                "qubit index {} exceeds declared count {n}",
                inferred - 1
            )));
        }
        let mut h = Self::new(n);
        h.h0 = h0;
        for (i, v) in lin {
            h.linear[i] += v;
        }
        for (i, j, v) in quad {
            h.add_pair(i, j, v);
        }
        Ok(h)
    }
}

/// Exact spectral extrema and every ground-state bitstring.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumExtrema {
    pub e_min: f64,
    pub e_max: f64,
    /// Ascending packed bitstrings attaining `e_min`.
    pub ground_set: Vec<u64>,
}

/// How mean energies are mapped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rescale {
    /// `(E - E_min) / (E_max - E_min)`.
    #[default]
    MinMax,
    /// `E / E_max`.
    MaxOnly,
}

impl Rescale {
    pub fn name(self) -> &'static str {
        match self {
            Rescale::MinMax => "minmax",
            Rescale::MaxOnly => "max",
        }
    }

    pub fn apply(self, mean_energy: f64, extrema: &SpectrumExtrema) -> Result<f64> {
        match self {
            Rescale::MinMax => scaled_energy(mean_energy, extrema),
            Rescale::MaxOnly => {
                if extrema.e_max == 0.0 {
                    return Err(Error::DegenerateSpectrum(extrema.e_max));
                }
                Ok(mean_energy / extrema.e_max)
            }
        }
    }
}

impl std::str::FromStr for Rescale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Rescale::MinMax),
            "max" => Ok(Rescale::MaxOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown rescale mode `{other}` (expected minmax or max)"
            ))),
        }
    }
}

/// Mean energy mapped affinely so `E_min -> 0` and `E_max -> 1`.
pub fn scaled_energy(mean_energy: f64, extrema: &SpectrumExtrema) -> Result<f64> {
    let span = extrema.e_max - extrema.e_min;
    if span <= 0.0 {
        return Err(Error::DegenerateSpectrum(extrema.e_min));
    }
    Ok((mean_energy - extrema.e_min) / span)
}

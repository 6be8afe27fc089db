//! JSON instance files with optional variable-fixing directives.
//!
//! ```json
//! {
//!   "jobs": 3, "machines": 2, "idle": [0, 2], "due": [2, 3, 4],
//!   "groups": [["a", "a", "b"], [1, 1, 2]],
//!   "cost_early": 1, "cost_late": 2, "cost_switch": 5, "penalty": "auto",
//!   "fix": [{"var": "x", "m": 1, "j": 1, "t": 1, "value": 1}]
//! }
//! ```
//!
//! Instead of `fix`, a `reference` schedule (one row of slot contents per
//! machine, `0` for an idle or dummy slot) together with a `free` list fixes
//! every variable not listed as free to its value in the reference.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::algorithms::Problem;
use crate::error::{Error, Result};
use crate::ising::IsingHamiltonian;
use crate::jsp::{assemble_qubo_with, JspInstance, Variable, VariableMap};
use crate::qubo::{FixedForm, QuadraticForm};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    jobs: usize,
    machines: usize,
    idle: Vec<usize>,
    due: Vec<usize>,
    groups: Vec<Vec<Label>>,
    cost_early: f64,
    cost_late: f64,
    cost_switch: f64,
    #[serde(default)]
    penalty: Option<Penalty>,
    #[serde(default)]
    elide_dummies: bool,
    #[serde(default)]
    fix: Option<Vec<RawFix>>,
    #[serde(default)]
    reference: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    free: Option<Vec<RawVar>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Label {
    Text(String),
    Number(i64),
}

impl Label {
    fn into_string(self) -> String {
        match self {
            Label::Text(s) => s,
            Label::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Penalty {
    Weight(f64),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVar {
    var: String,
    m: usize,
    #[serde(default)]
    j: Option<usize>,
    t: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFix {
    var: String,
    m: usize,
    #[serde(default)]
    j: Option<usize>,
    t: usize,
    value: u8,
}

fn parse_var(var: &str, m: usize, j: Option<usize>, t: usize) -> Result<Variable> {
    match (var, j) {
        ("x", Some(job)) => Ok(Variable::Real {
            machine: m,
            job,
            slot: t,
        }),
        ("x", None) => Err(Error::Parse("fix: x variable needs field `j`".into())),
        ("y", None) => Ok(Variable::Dummy {
            machine: m,
            slot: t,
        }),
        ("y", Some(_)) => Err(Error::Parse("fix: y variable takes no field `j`".into())),
        (other, _) => Err(Error::Parse(format!(
            "fix: field `var` must be \"x\" or \"y\", got \"{other}\""
        ))),
    }
}

/// How variables are pinned before solving.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixing {
    None,
    Explicit(Vec<(Variable, bool)>),
    Reference {
        schedule: Vec<Vec<usize>>,
        free: Vec<Variable>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub name: Option<String>,
    pub description: Option<String>,
    pub instance: JspInstance,
    pub elide_dummies: bool,
    pub fixing: Fixing,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let penalty = match raw.penalty {
            None => None,
            Some(Penalty::Weight(w)) => Some(w),
            Some(Penalty::Keyword(k)) if k == "auto" => None,
            Some(Penalty::Keyword(k)) => {
                return Err(Error::Parse(format!(
                    "field `penalty` must be a number or \"auto\", got \"{k}\""
                )))
            }
        };
        let instance = JspInstance {
            num_jobs: raw.jobs,
            num_machines: raw.machines,
            idle: raw.idle,
            due: raw.due,
            groups: raw
                .groups
                .into_iter()
                .map(|row| row.into_iter().map(Label::into_string).collect())
                .collect(),
            cost_early: raw.cost_early,
            cost_late: raw.cost_late,
            cost_switch: raw.cost_switch,
            penalty,
        };
        instance.validate()?;
        let fixing = match (raw.fix, raw.reference, raw.free) {
            (None, None, None) => Fixing::None,
            (Some(list), None, None) => Fixing::Explicit(
                list.into_iter()
                    .map(|f| {
                        let v = parse_var(&f.var, f.m, f.j, f.t)?;
                        match f.value {
                            0 | 1 => Ok((v, f.value == 1)),
                            other => Err(Error::Parse(format!(
                                "fix {v}: field `value` must be 0 or 1, got {other}"
                            ))),
                        }
                    })
                    .collect::<Result<_>>()?,
            ),
            (None, Some(schedule), free) => Fixing::Reference {
                schedule,
                free: free
                    .unwrap_or_default()
                    .into_iter()
                    .map(|f| parse_var(&f.var, f.m, f.j, f.t))
                    .collect::<Result<_>>()?,
            },
            (Some(_), Some(_), _) => {
                return Err(Error::Parse(
                    "fields `fix` and `reference` are mutually exclusive".into(),
                ))
            }
            (_, None, Some(_)) => {
                return Err(Error::Parse("field `free` requires `reference`".into()))
            }
        };
        Ok(Self {
            name: raw.name,
            description: raw.description,
            instance,
            elide_dummies: raw.elide_dummies,
            fixing,
        })
    }

    /// Position/value pairs over `map` implied by the fixing directives.
    pub fn assignments(&self, map: &VariableMap) -> Result<Vec<(usize, bool)>> {
        let position = |v: Variable| {
            map.index_of(v)
                .ok_or_else(|| Error::UnknownVariable(v.to_string()))
        };
        match &self.fixing {
            Fixing::None => Ok(Vec::new()),
            Fixing::Explicit(list) => list
                .iter()
                .map(|&(v, value)| Ok((position(v)?, value)))
                .collect(),
            Fixing::Reference { schedule, free } => {
                let bits = reference_bits(&self.instance, map, schedule)?;
                let free: BTreeSet<usize> =
                    free.iter().map(|&v| position(v)).collect::<Result<_>>()?;
                Ok(bits
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| !free.contains(i))
                    .collect())
            }
        }
    }
}

/// Full bitstring of a reference schedule; `0` marks a slot without a job.
pub fn reference_bits(
    instance: &JspInstance,
    map: &VariableMap,
    schedule: &[Vec<usize>],
) -> Result<Vec<bool>> {
    if schedule.len() != instance.num_machines {
        return Err(Error::InvalidInstance(format!(
            "reference has {} rows, expected {}",
            schedule.len(),
            instance.num_machines
        )));
    }
    let mut bits = vec![false; map.len()];
    for (mi, row) in schedule.iter().enumerate() {
        let m = mi + 1;
        let horizon = instance.horizon(m)?;
        if row.len() != horizon {
            return Err(Error::InvalidInstance(format!(
                "reference row {m} has {} slots, expected {horizon}",
                row.len()
            )));
        }
        for j in 1..=instance.num_jobs {
            let count = row.iter().filter(|&&c| c == j).count();
            if count != 1 {
                return Err(Error::InvalidInstance(format!(
                    "reference row {m} places job {j} {count} times"
                )));
            }
        }
        for (ti, &content) in row.iter().enumerate() {
            let t = ti + 1;
            if content > instance.num_jobs {
                return Err(Error::InvalidInstance(format!(
                    "reference row {m} slot {t}: no job {content}"
                )));
            }
            let var = if content == 0 {
                if t > instance.idle[mi] {
                    continue;
                }
                Variable::Dummy {
                    machine: m,
                    slot: t,
                }
            } else {
                Variable::Real {
                    machine: m,
                    job: content,
                    slot: t,
                }
            };
            if let Some(i) = map.index_of(var) {
                bits[i] = true;
            }
        }
    }
    Ok(bits)
}

/// A parsed instance with its QUBO assembled and fixing applied.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub file: InstanceFile,
    pub map: VariableMap,
    pub qubo: QuadraticForm,
    pub fixed: FixedForm,
    /// Variables left free, in the order of the reduced QUBO.
    pub free_map: VariableMap,
    /// SHA-256 of the file contents.
    pub fingerprint: String,
}

impl PreparedInstance {
    pub fn from_text(text: &str) -> Result<Self> {
        let file = InstanceFile::parse(text)?;
        let (qubo, map) = assemble_qubo_with(&file.instance, file.elide_dummies);
        let fixed = qubo.fix(&file.assignments(&map)?)?;
        let free_map = map.select(&fixed.free);
        Ok(Self {
            file,
            map,
            qubo,
            fixed,
            free_map,
            fingerprint: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn instance(&self) -> &JspInstance {
        &self.file.instance
    }

    pub fn num_free(&self) -> usize {
        self.fixed.free.len()
    }

    pub fn hamiltonian(&self) -> IsingHamiltonian {
        IsingHamiltonian::from_qubo(&self.fixed.form)
    }

    /// The reduced problem. JSP QUBOs are sums of non-negative costs and
    /// squared penalties, so zero bounds the spectrum from below.
    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem::with_lower_bound(self.hamiltonian(), 0.0)?
            .with_fingerprint(self.fingerprint.clone()))
    }

    /// Full bitstring for a basis state of the reduced problem.
    pub fn expand_index(&self, z: u64) -> Result<Vec<bool>> {
        let free_bits = crate::enumerate::index_to_bits(z, self.num_free());
        self.fixed.expand(&free_bits)
    }
}

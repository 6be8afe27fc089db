//! Job-shop scheduling instances and their QUBO encoding.
//!
//! Indices in [`Variable`] are 1-based (machine, job, slot) to match instance
//! files; positions in a [`VariableMap`] are 0-based and double as qubit ids.
//!
//! Slot semantics per machine `m` with idle budget `e`: slots `1..=J+e`. The
//! dummy variable `y[m][t]` (`t <= e`) marks a dummy job at head slot `t`.
//! Tail slot `t > J` holds a dummy exactly when `y[m][t-J]` is 0.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::qubo::QuadraticForm;

/// A job-shop instance with equal processing times.
#[derive(Debug, Clone, PartialEq)]
pub struct JspInstance {
    pub num_jobs: usize,
    pub num_machines: usize,
    /// Idle budget `e[m]` per machine.
    pub idle: Vec<usize>,
    /// Due slot `d[j]` per job, 1-based.
    pub due: Vec<usize>,
    /// Production group `P[m][j]`, compared by equality only.
    pub groups: Vec<Vec<String>>,
    pub cost_early: f64,
    pub cost_late: f64,
    pub cost_switch: f64,
    /// Explicit penalty weight; `None` selects [`JspInstance::default_penalty`].
    pub penalty: Option<f64>,
}

impl JspInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.num_jobs == 0 {
            return bad("jobs must be positive".into());
        }
        if self.num_machines == 0 {
            return bad("machines must be positive".into());
        }
        if self.idle.len() != self.num_machines {
            return bad(format!(
                "idle has {} entries, expected {}",
                self.idle.len(),
                self.num_machines
            ));
        }
        if self.due.len() != self.num_jobs {
            return bad(format!(
                "due has {} entries, expected {}",
                self.due.len(),
                self.num_jobs
            ));
        }
        let last = self.num_jobs + self.idle[self.num_machines - 1];
        for (j, &d) in self.due.iter().enumerate() {
            if d < 1 || d > last {
                return bad(format!("due[{}] = {d} outside 1..={last}", j + 1));
            }
        }
        if self.groups.len() != self.num_machines
            || self.groups.iter().any(|row| row.len() != self.num_jobs)
        {
            return bad(format!(
                "groups must be {} rows of {} labels",
                self.num_machines, self.num_jobs
            ));
        }
        for (name, v) in [
            ("cost_early", self.cost_early),
            ("cost_late", self.cost_late),
            ("cost_switch", self.cost_switch),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if let Some(p) = self.penalty {
            if !(p.is_finite() && p > 0.0) {
                return bad(format!("penalty must be positive, got {p}"));
            }
        }
        Ok(())
    }

    /// Last slot `T_m = J + e_m` of machine `m` (1-based).
    pub fn horizon(&self, machine: usize) -> Result<usize> {
        if machine < 1 || machine > self.num_machines {
            return Err(Error::MachineOutOfRange {
                machine,
                machines: self.num_machines,
            });
        }
        Ok(self.num_jobs + self.idle[machine - 1])
    }

    fn t(&self, machine: usize) -> usize {
        self.num_jobs + self.idle[machine - 1]
    }

    /// One more than an upper bound on the cost of any feasible schedule.
    pub fn default_penalty(&self) -> f64 {
        let last = self.t(self.num_machines);
        let delivery: f64 = self
            .due
            .iter()
            .map(|&d| {
                (self.cost_early * d as f64).max(self.cost_late * (last - d) as f64)
            })
            .sum();
        let switches: usize = (1..=self.num_machines).map(|m| self.t(m) - 1).sum();
        1.0 + delivery + self.cost_switch * switches as f64
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty.unwrap_or_else(|| self.default_penalty())
    }

    fn same_group(&self, machine: usize, j1: usize, j2: usize) -> bool {
        self.groups[machine - 1][j1 - 1] == self.groups[machine - 1][j2 - 1]
    }
}

/// Variable counts `(N_x, N_y, N)` without dummy elision.
pub fn count_variables(jobs: usize, idle: &[usize]) -> (usize, usize, usize) {
    let nx: usize = idle.iter().map(|&e| jobs * (jobs + e)).sum();
    let ny: usize = idle.iter().sum();
    (nx, ny, nx + ny)
}

/// Worst-case idle budgets `e_m = (m-1)(J-1)`.
pub fn worst_case_idle(jobs: usize, machines: usize) -> Vec<usize> {
    (0..machines).map(|m| m * (jobs.saturating_sub(1))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    /// `x[m][j][t]`: job `j` runs on machine `m` in slot `t`.
    Real { machine: usize, job: usize, slot: usize },
    /// `y[m][t]`: a dummy job occupies head slot `t` of machine `m`.
    Dummy { machine: usize, slot: usize },
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Variable::Real { machine, job, slot } => write!(f, "x[{machine},{job},{slot}]"),
            Variable::Dummy { machine, slot } => write!(f, "y[{machine},{slot}]"),
        }
    }
}

/// Canonical ordering of binary variables: all `x` by `(m, j, t)`, then all
/// `y` by `(m, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    vars: Vec<Variable>,
    index: HashMap<Variable, usize>,
}

impl VariableMap {
    pub fn new(instance: &JspInstance) -> Self {
        Self::with_elision(instance, false)
    }

    /// With `elide` set, `y[m][1]` is dropped for machines with `e_m = 1`
    /// together with the two time constraints it would otherwise enforce.
    pub fn with_elision(instance: &JspInstance, elide: bool) -> Self {
        let jobs = instance.num_jobs;
        let mut vars = Vec::new();
        for m in 1..=instance.num_machines {
            for j in 1..=jobs {
                for t in 1..=instance.t(m) {
                    vars.push(Variable::Real {
                        machine: m,
                        job: j,
                        slot: t,
                    });
                }
            }
        }
        for m in 1..=instance.num_machines {
            let e = instance.idle[m - 1];
            if elide && e == 1 {
                continue;
            }
            for t in 1..=e {
                vars.push(Variable::Dummy { machine: m, slot: t });
            }
        }
        Self::from_vars(vars)
    }

    pub fn from_vars(vars: Vec<Variable>) -> Self {
        let index = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Self { vars, index }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn get(&self, position: usize) -> Option<Variable> {
        self.vars.get(position).copied()
    }

    pub fn index_of(&self, var: Variable) -> Option<usize> {
        self.index.get(&var).copied()
    }

    fn x(&self, machine: usize, job: usize, slot: usize) -> usize {
        self.index[&Variable::Real { machine, job, slot }]
    }

    fn y(&self, machine: usize, slot: usize) -> Option<usize> {
        self.index_of(Variable::Dummy { machine, slot })
    }

    /// Restricts to the given positions (ascending), re-indexing from 0.
    pub fn select(&self, positions: &[usize]) -> VariableMap {
        Self::from_vars(positions.iter().map(|&p| self.vars[p]).collect())
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let nx = self
            .vars
            .iter()
            .filter(|v| matches!(v, Variable::Real { .. }))
            .count();
        (nx, self.vars.len() - nx, self.vars.len())
    }

    fn machine_elided(&self, instance: &JspInstance, machine: usize) -> bool {
        instance.idle[machine - 1] == 1 && self.y(machine, 1).is_none()
    }
}

/// Early/late delivery on the last machine, `Σ_j u_j`.
pub fn delivery_cost(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let mut q = QuadraticForm::new(map.len());
    let m = instance.num_machines;
    for j in 1..=instance.num_jobs {
        let d = instance.due[j - 1];
        for t in 1..=instance.t(m) {
            let c = if t <= d {
                instance.cost_early * (d - t) as f64
            } else {
                instance.cost_late * (t - d) as f64
            };
            q.add_linear(map.x(m, j, t), c);
        }
    }
    q
}

/// Production-group switches between consecutive slots, `Σ_m s_m`.
pub fn production_cost(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let mut q = QuadraticForm::new(map.len());
    for m in 1..=instance.num_machines {
        for j1 in 1..=instance.num_jobs {
            for j2 in 1..=instance.num_jobs {
                if instance.same_group(m, j1, j2) {
                    continue;
                }
                for t in 1..instance.t(m) {
                    q.add_quadratic(map.x(m, j1, t), map.x(m, j2, t + 1), instance.cost_switch);
                }
            }
        }
    }
    q
}

/// Each job occupies exactly one slot per machine.
pub fn job_assignment_penalty(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let p = instance.penalty_weight();
    let mut q = QuadraticForm::new(map.len());
    for m in 1..=instance.num_machines {
        for j in 1..=instance.num_jobs {
            let terms: Vec<(usize, f64)> =
                (1..=instance.t(m)).map(|t| (map.x(m, j, t), 1.0)).collect();
            q.add_squared_affine(p, -1.0, &terms);
        }
    }
    q
}

/// Occupancy `ℓ[m][t] - 1` of one slot as `(offset, terms)`, or `None` when the
/// constraint is dropped by dummy elision.
fn slot_occupancy(
    instance: &JspInstance,
    map: &VariableMap,
    m: usize,
    t: usize,
) -> Option<(f64, Vec<(usize, f64)>)> {
    let jobs = instance.num_jobs;
    let e = instance.idle[m - 1];
    if map.machine_elided(instance, m) && (t == 1 || t == jobs + 1) {
        return None;
    }
    let mut offset = -1.0;
    let mut terms: Vec<(usize, f64)> = (1..=jobs).map(|j| (map.x(m, j, t), 1.0)).collect();
    if t <= e {
        terms.push((map.y(m, t).expect("dummy variable"), 1.0));
    }
    if t > jobs {
        offset += 1.0;
        terms.push((map.y(m, t - jobs).expect("dummy variable"), -1.0));
    }
    Some((offset, terms))
}

/// Each slot holds exactly one real or dummy job.
pub fn time_assignment_penalty(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let p = instance.penalty_weight();
    let mut q = QuadraticForm::new(map.len());
    for m in 1..=instance.num_machines {
        for t in 1..=instance.t(m) {
            if let Some((offset, terms)) = slot_occupancy(instance, map, m, t) {
                q.add_squared_affine(p, offset, &terms);
            }
        }
    }
    q
}

/// A job may not start on machine `m+1` before its slot on machine `m`.
pub fn process_order_penalty(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let p = instance.penalty_weight();
    let mut q = QuadraticForm::new(map.len());
    for m in 1..instance.num_machines {
        for j in 1..=instance.num_jobs {
            for t in 2..=instance.t(m) {
                for t2 in 1..t.min(instance.t(m + 1) + 1) {
                    q.add_quadratic(map.x(m, j, t), map.x(m + 1, j, t2), p);
                }
            }
        }
    }
    q
}

/// Head dummies must be contiguous from slot 1 (machines 2..=M).
pub fn idle_slot_penalty(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let p = instance.penalty_weight();
    let mut q = QuadraticForm::new(map.len());
    for m in 2..=instance.num_machines {
        let e = instance.idle[m - 1];
        for t in 1..e {
            // (1 - y_t) y_{t+1} = y_{t+1} - y_t y_{t+1}
            let (a, b) = (map.y(m, t), map.y(m, t + 1));
            if let (Some(a), Some(b)) = (a, b) {
                q.add_linear(b, p);
                q.add_quadratic(a, b, -p);
            }
        }
    }
    q
}

/// Schedule cost `c(x)`: delivery plus production.
pub fn schedule_cost(instance: &JspInstance, map: &VariableMap) -> QuadraticForm {
    let mut q = delivery_cost(instance, map);
    q.add_form(&production_cost(instance, map));
    q
}

/// Full QUBO: schedule cost plus all four penalty families.
pub fn assemble_qubo(instance: &JspInstance) -> (QuadraticForm, VariableMap) {
    assemble_qubo_with(instance, false)
}

pub fn assemble_qubo_with(instance: &JspInstance, elide: bool) -> (QuadraticForm, VariableMap) {
    let map = VariableMap::with_elision(instance, elide);
    let mut q = schedule_cost(instance, &map);
    q.add_form(&job_assignment_penalty(instance, &map));
    q.add_form(&time_assignment_penalty(instance, &map));
    q.add_form(&process_order_penalty(instance, &map));
    q.add_form(&idle_slot_penalty(instance, &map));
    (q, map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    JobAssignment,
    TimeAssignment,
    ProcessOrder,
    IdleSlot,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintFamily::JobAssignment => "job-assignment",
            ConstraintFamily::TimeAssignment => "time-assignment",
            ConstraintFamily::ProcessOrder => "process-order",
            ConstraintFamily::IdleSlot => "idle-slot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleCost {
    Feasible(f64),
    Infeasible(ConstraintFamily),
}

impl ScheduleCost {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ScheduleCost::Feasible(_))
    }
}

/// Checks the constraint definitions directly and returns the schedule cost
/// when all hold. The first violated family is reported in the order
/// job, time, order, idle.
pub fn evaluate_schedule_cost(
    instance: &JspInstance,
    map: &VariableMap,
    bits: &[bool],
) -> Result<ScheduleCost> {
    if bits.len() != map.len() {
        return Err(Error::LengthMismatch {
            expected: map.len(),
            actual: bits.len(),
        });
    }
    let jobs = instance.num_jobs;
    let machines = instance.num_machines;
    let x = |m: usize, j: usize, t: usize| bits[map.x(m, j, t)];
    let y = |m: usize, t: usize| map.y(m, t).map(|i| bits[i]);

    for m in 1..=machines {
        for j in 1..=jobs {
            let count = (1..=instance.t(m)).filter(|&t| x(m, j, t)).count();
            if count != 1 {
                return Ok(ScheduleCost::Infeasible(ConstraintFamily::JobAssignment));
            }
        }
    }

    for m in 1..=machines {
        let e = instance.idle[m - 1];
        let elided = map.machine_elided(instance, m);
        for t in 1..=instance.t(m) {
            if elided && (t == 1 || t == jobs + 1) {
                continue;
            }
            let mut occupancy = (1..=jobs).filter(|&j| x(m, j, t)).count() as i64;
            if t <= e && y(m, t) == Some(true) {
                occupancy += 1;
            }
            if t > jobs && y(m, t - jobs) == Some(false) {
                occupancy += 1;
            }
            if occupancy != 1 {
                return Ok(ScheduleCost::Infeasible(ConstraintFamily::TimeAssignment));
            }
        }
    }

    // Job assignment holds, so each (m, j) has exactly one slot.
    let slot_of = |m: usize, j: usize| {
        (1..=instance.t(m))
            .find(|&t| x(m, j, t))
            .expect("job assigned")
    };
    for m in 1..machines {
        for j in 1..=jobs {
            if slot_of(m + 1, j) < slot_of(m, j) {
                return Ok(ScheduleCost::Infeasible(ConstraintFamily::ProcessOrder));
            }
        }
    }

    for m in 2..=machines {
        for t in 1..instance.idle[m - 1] {
            if y(m, t) == Some(false) && y(m, t + 1) == Some(true) {
                return Ok(ScheduleCost::Infeasible(ConstraintFamily::IdleSlot));
            }
        }
    }

    let mut cost = 0.0;
    let last = machines;
    for j in 1..=jobs {
        let t = slot_of(last, j);
        let d = instance.due[j - 1];
        cost += if t <= d {
            instance.cost_early * (d - t) as f64
        } else {
            instance.cost_late * (t - d) as f64
        };
    }
    for m in 1..=machines {
        let mut at_slot = vec![None; instance.t(m) + 2];
        for j in 1..=jobs {
            at_slot[slot_of(m, j)] = Some(j);
        }
        for t in 1..instance.t(m) {
            if let (Some(a), Some(b)) = (at_slot[t], at_slot[t + 1]) {
                if !instance.same_group(m, a, b) {
                    cost += instance.cost_switch;
                }
            }
        }
    }
    Ok(ScheduleCost::Feasible(cost))
}

/// What occupies one slot of a decoded schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotContent {
    Job(usize),
    Dummy,
    Empty,
    /// More than one job or dummy claims the slot.
    Conflict,
}

/// Machine-by-slot table of a bitstring over a full variable map.
pub fn decode_schedule(
    instance: &JspInstance,
    map: &VariableMap,
    bits: &[bool],
) -> Result<Vec<Vec<SlotContent>>> {
    if bits.len() != map.len() {
        return Err(Error::LengthMismatch {
            expected: map.len(),
            actual: bits.len(),
        });
    }
    let jobs = instance.num_jobs;
    let mut table = Vec::with_capacity(instance.num_machines);
    for m in 1..=instance.num_machines {
        let e = instance.idle[m - 1];
        let mut row = Vec::with_capacity(instance.t(m));
        for t in 1..=instance.t(m) {
            let mut found: Vec<SlotContent> = (1..=jobs)
                .filter(|&j| bits[map.x(m, j, t)])
                .map(SlotContent::Job)
                .collect();
            let head = t <= e && map.y(m, t).map(|i| bits[i]) == Some(true);
            let tail = t > jobs && map.y(m, t - jobs).map(|i| bits[i]) == Some(false);
            if head || tail {
                found.push(SlotContent::Dummy);
            }
            row.push(match found.len() {
                0 => SlotContent::Empty,
                1 => found[0],
                _ => SlotContent::Conflict,
            });
        }
        table.push(row);
    }
    Ok(table)
}

/// Renders a decoded table, one machine per line.
pub fn format_schedule(table: &[Vec<SlotContent>]) -> String {
    let mut out = String::new();
    for (m, row) in table.iter().enumerate() {
        out.push_str(&format!("machine {}:", m + 1));
        for cell in row {
            out.push(' ');
            match cell {
                SlotContent::Job(j) => out.push_str(&j.to_string()),
                SlotContent::Dummy => out.push('-'),
                SlotContent::Empty => out.push('.'),
                SlotContent::Conflict => out.push('!'),
            }
        }
        out.push('\n');
    }
    out
}

//! Exact offline optimum over non-migratory schedules.
//!
//! Per machine, a job set is schedulable iff preemptive EDF meets every
//! deadline, so the optimum is a search over job-to-machine assignments
//! with an EDF test at each node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::simulate;
use crate::error::{Error, Result};
use crate::model::{Instance, JobId, MachineId};
use crate::policy::AdmissionPolicy;
use crate::rational::Rational;

/// A single-machine job: release, deadline and processing time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task<T = Rational> {
    pub release: T,
    pub deadline: T,
    pub size: T,
}

impl<T> Task<T> {
    pub fn new(release: T, deadline: T, size: T) -> Self {
        Task { release, deadline, size }
    }
}

trait Time: Clone + Ord + Add<Output = Self> + Sub<Output = Self> {}
impl<T: Clone + Ord + Add<Output = T> + Sub<Output = T>> Time for T {}

/// Runs a preemptive priority schedule (lowest key first among released,
/// unfinished tasks) and reports whether every task meets its deadline.
fn priority_schedule<T: Time, K: Ord>(tasks: &[&Task<T>], key: impl Fn(usize) -> K) -> bool {
    if tasks.is_empty() {
        return true;
    }
    let mut by_release: Vec<usize> = (0..tasks.len()).collect();
    by_release.sort_by(|&a, &b| tasks[a].release.cmp(&tasks[b].release));
    let mut remaining: Vec<T> = tasks.iter().map(|t| t.size.clone()).collect();
    let mut ready: Vec<usize> = Vec::new();
    let mut next = 0;
    let mut now = tasks[by_release[0]].release.clone();
    loop {
        while next < by_release.len() && tasks[by_release[next]].release <= now {
            ready.push(by_release[next]);
            next += 1;
        }
        let Some(pos) = (0..ready.len()).min_by_key(|&k| key(ready[k])) else {
            if next == by_release.len() {
                return true;
            }
            now = tasks[by_release[next]].release.clone();
            continue;
        };
        let job = ready[pos];
        let finish = now.clone() + remaining[job].clone();
        match by_release.get(next).map(|&k| &tasks[k].release) {
            Some(release) if *release < finish => {
                remaining[job] = finish - release.clone();
                now = release.clone();
            }
            _ => {
                if finish > tasks[job].deadline {
                    return false;
                }
                now = finish;
                ready.swap_remove(pos);
            }
        }
    }
}

fn edf<T: Time>(tasks: &[&Task<T>]) -> bool {
    priority_schedule(tasks, |k| (tasks[k].deadline.clone(), k))
}

/// True iff preemptive earliest-deadline-first finishes every task by its
/// deadline, which happens iff any preemptive schedule does.
pub fn edf_feasible(tasks: &[Task]) -> bool {
    let refs: Vec<&Task> = tasks.iter().collect();
    edf(&refs)
}

/// Slow reference checks, kept for cross-validating [`edf_feasible`].
pub mod brute {
    use super::{priority_schedule, Task};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for rest in permutations(n - 1) {
            for slot in 0..=rest.len() {
                let mut p = rest.clone();
                p.insert(slot, n - 1);
                out.push(p);
            }
        }
        out
    }

    /// Tries every fixed priority order; preemption then happens only at
    /// releases. Some order succeeds iff the set is feasible.
    pub fn feasible_by_priorities(tasks: &[Task]) -> bool {
        let refs: Vec<&Task> = tasks.iter().collect();
        permutations(tasks.len()).iter().any(|rank| priority_schedule(&refs, |k| rank[k]))
    }
}

/// Size cap for the exhaustive search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OracleLimit {
    pub jobs: usize,
    pub machines: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        OracleLimit { jobs: 12, machines: 3 }
    }
}

impl OracleLimit {
    pub const ENV_VAR: &'static str = "SCHED_ORACLE_CAP";

    /// The default, with the job cap taken from `SCHED_ORACLE_CAP` if set.
    pub fn from_env() -> Result<Self> {
        let mut limit = OracleLimit::default();
        if let Ok(raw) = std::env::var(Self::ENV_VAR) {
            limit.jobs = raw
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}={raw:?} is not a job count", Self::ENV_VAR)))?;
        }
        Ok(limit)
    }

    pub fn admits(&self, inst: &Instance) -> bool {
        inst.jobs.len() <= self.jobs && inst.machines <= self.machines
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    pub optimum: Rational,
    pub assignment: BTreeMap<JobId, MachineId>,
    pub per_machine: Vec<Vec<JobId>>,
}

impl OracleResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle result serializes")
    }
}

/// Job data for the search, with jobs in decreasing weight order.
struct Table<T> {
    order: Vec<usize>,
    weights: Vec<Rational>,
    suffix: Vec<Rational>,
    tasks: Vec<Vec<Option<Task<T>>>>,
    machines: usize,
}

impl<T: Time + Send + Sync> Table<T> {
    fn feasible(&self, machine: MachineId, mask: u64, memo: &mut HashMap<(MachineId, u64), bool>) -> bool {
        *memo.entry((machine, mask)).or_insert_with(|| {
            let set: Vec<&Task<T>> = (0..self.order.len())
                .filter(|k| mask >> k & 1 == 1)
                .filter_map(|k| self.tasks[k][machine].as_ref())
                .collect();
            edf(&set)
        })
    }

    fn dfs(&self, k: usize, masks: &mut [u64], weight: Rational, best: &mut Best, memo: &mut HashMap<(MachineId, u64), bool>) {
        if weight > best.weight {
            best.weight = weight.clone();
            best.masks = masks.to_vec();
        }
        if k == self.order.len() || &weight + &self.suffix[k] <= best.weight {
            return;
        }
        for machine in 0..self.machines {
            if self.tasks[k][machine].is_none() {
                continue;
            }
            let trial = masks[machine] | 1 << k;
            if self.feasible(machine, trial, memo) {
                let previous = std::mem::replace(&mut masks[machine], trial);
                self.dfs(k + 1, masks, &weight + &self.weights[k], best, memo);
                masks[machine] = previous;
            }
        }
        self.dfs(k + 1, masks, weight, best, memo);
    }

    fn solve(&self) -> Best {
        let empty = Best { weight: Rational::zero(), masks: vec![0; self.machines] };
        if self.order.is_empty() {
            return empty;
        }
        // Branch on the first job: each eligible machine, then "unscheduled".
        let mut first: Vec<Option<MachineId>> =
            (0..self.machines).filter(|&i| self.tasks[0][i].is_some()).map(Some).collect();
        first.push(None);
        let results: Vec<Best> = first
            .par_iter()
            .map(|choice| {
                let mut memo = HashMap::new();
                let mut masks = vec![0; self.machines];
                let mut best = empty.clone();
                let weight = match choice {
                    Some(machine) => {
                        masks[*machine] = 1;
                        self.weights[0].clone()
                    }
                    None => Rational::zero(),
                };
                self.dfs(1, &mut masks, weight, &mut best, &mut memo);
                best
            })
            .collect();
        // Earlier branches win ties so the witness does not depend on scheduling.
        results.into_iter().fold(empty, |acc, b| if b.weight > acc.weight { b } else { acc })
    }
}

#[derive(Clone)]
struct Best {
    weight: Rational,
    masks: Vec<u64>,
}

fn build_table<T>(inst: &Instance, order: &[usize], convert: impl Fn(&Rational) -> T) -> Table<T> {
    let weights: Vec<Rational> = order.iter().map(|&j| inst.jobs[j].weight.clone()).collect();
    let mut suffix = vec![Rational::zero(); order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = &suffix[k + 1] + &weights[k];
    }
    let tasks = order
        .iter()
        .map(|&j| {
            let job = &inst.jobs[j];
            (0..inst.machines)
                .map(|i| {
                    job.size_on(i)
                        .map(|p| Task::new(convert(&job.release), convert(&job.deadline), convert(p)))
                })
                .collect()
        })
        .collect();
    Table { order: order.to_vec(), weights, suffix, tasks, machines: inst.machines }
}

/// Common denominator of all times, if scaling by it keeps every time
/// comfortably inside `i64`.
fn integer_scale(inst: &Instance) -> Option<BigInt> {
    let mut lcm = BigInt::one();
    let times = inst.jobs.iter().flat_map(|j| {
        [&j.release, &j.deadline].into_iter().chain(j.proc.iter().filter_map(|p| p.finite()))
    });
    for t in times.clone() {
        lcm = lcm.lcm(t.denom());
    }
    let bound = BigInt::from(i64::MAX >> 8);
    times
        .into_iter()
        .all(|t| (t.numer() * &lcm / t.denom()) <= bound)
        .then_some(lcm)
}

/// Maximum total weight of jobs that one non-migratory preemptive schedule
/// can finish, with a witness assignment.
pub fn optimal_nonmigratory(inst: &Instance, limit: &OracleLimit) -> Result<OracleResult> {
    let report = inst.validate();
    if !report.is_valid() {
        return Err(Error::InvalidInstance(report));
    }
    if !limit.admits(inst) || inst.jobs.len() > 63 {
        return Err(Error::TooLarge {
            jobs: inst.jobs.len(),
            machines: inst.machines,
            cap_jobs: limit.jobs,
            cap_machines: limit.machines,
        });
    }
    let mut order: Vec<usize> = (0..inst.jobs.len()).collect();
    order.sort_by(|&a, &b| inst.jobs[b].weight.cmp(&inst.jobs[a].weight).then(a.cmp(&b)));

    let best = match integer_scale(inst) {
        Some(lcm) => {
            let scale = |t: &Rational| {
                (t.numer() * &lcm / t.denom()).to_i64().expect("checked bound") as i128
            };
            build_table(inst, &order, scale).solve()
        }
        None => build_table(inst, &order, Rational::clone).solve(),
    };

    let mut assignment = BTreeMap::new();
    let mut per_machine = vec![Vec::new(); inst.machines];
    for (machine, mask) in best.masks.iter().enumerate() {
        for (k, &j) in order.iter().enumerate() {
            if mask >> k & 1 == 1 {
                let id = inst.jobs[j].id;
                assignment.insert(id, machine);
                per_machine[machine].push(id);
            }
        }
        per_machine[machine].sort_unstable();
    }
    Ok(OracleResult { optimum: best.weight, assignment, per_machine })
}

/// Offline optimum over online finished weight.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(into = "String")]
pub enum RatioValue {
    Finite(Rational),
    Unbounded,
}

impl RatioValue {
    /// `optimum / finished`; `0/0` counts as 1.
    pub fn of(optimum: &Rational, finished: &Rational) -> Self {
        if finished.is_zero() {
            if optimum.is_zero() {
                RatioValue::Finite(Rational::one())
            } else {
                RatioValue::Unbounded
            }
        } else {
            RatioValue::Finite(optimum / finished)
        }
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            RatioValue::Finite(r) => Some(r),
            RatioValue::Unbounded => None,
        }
    }
}

impl fmt::Display for RatioValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioValue::Finite(r) => write!(f, "{r}"),
            RatioValue::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl From<RatioValue> for String {
    fn from(value: RatioValue) -> Self {
        value.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RatioReport {
    pub optimum: Rational,
    pub admitted: Rational,
    pub finished: Rational,
    pub ratio: RatioValue,
}

pub fn competitive_ratio(inst: &Instance, policy: &AdmissionPolicy, limit: &OracleLimit) -> Result<RatioReport> {
    let oracle = optimal_nonmigratory(inst, limit)?;
    let outcome = simulate(inst, policy)?;
    Ok(RatioReport {
        ratio: RatioValue::of(&oracle.optimum, &outcome.weights.finished),
        optimum: oracle.optimum,
        admitted: outcome.weights.admitted,
        finished: outcome.weights.finished,
    })
}

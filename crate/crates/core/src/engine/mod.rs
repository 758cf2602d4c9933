//! Event-driven simulation of an admission policy.
//!
//! Time only advances to the next *event*: a release, the running job's
//! completion on some machine, or the moment a waiting job's slack runs out
//! (after which it can no longer meet its virtual deadline and is dropped).
//! All events at one timestamp are handled together, in this order:
//!
//! 1. completions,
//! 2. discards,
//! 3. releases,
//! 4. one call of the admission routine, if anything completed or was
//!    released at this timestamp.
//!
//! Each machine then runs its densest active job (ties: lower id).

mod feasibility;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use feasibility::{
    audit_admissions, check_feasibility, AuditFinding, FeasibilityReport, FeasibilityViolation,
};

use crate::error::{Error, Result};
use crate::model::{clamp_epsilon, Instance, Job, JobId, MachineId};
use crate::policy::{admission_routine, virtual_window, AdmissionPolicy};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub job: JobId,
    pub machine: MachineId,
    pub admitted_at: Rational,
    /// `admitted_at + (1 + ε/2)·p`.
    pub virtual_deadline: Rational,
    /// The job that was running when this one interrupted it.
    pub parent: Option<JobId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub machine: MachineId,
    pub job: JobId,
    pub start: Rational,
    pub end: Rational,
}

impl ScheduleSegment {
    pub fn len(&self) -> Rational {
        &self.end - &self.start
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightTotals {
    pub admitted: Rational,
    pub finished: Rational,
    pub discarded: Rational,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub admissions: Vec<AdmissionRecord>,
    /// Sorted by machine, then start time.
    pub segments: Vec<ScheduleSegment>,
    pub finished: BTreeSet<JobId>,
    pub discarded: BTreeSet<JobId>,
    pub never_admitted: BTreeSet<JobId>,
    pub weights: WeightTotals,
}

impl Outcome {
    pub fn admission(&self, job: JobId) -> Option<&AdmissionRecord> {
        self.admissions.iter().find(|a| a.job == job)
    }

    pub fn segments_of(&self, job: JobId) -> impl Iterator<Item = &ScheduleSegment> {
        self.segments.iter().filter(move |s| s.job == job)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// `machine,job,start,end`, one row per segment.
    pub fn trace_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["machine", "job", "start", "end"])
            .expect("in-memory write");
        for s in &self.segments {
            writer
                .write_record([
                    s.machine.to_string(),
                    s.job.to_string(),
                    s.start.to_string(),
                    s.end.to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Exact `(admitted, finished)` weight sums.
pub fn weight_totals(out: &Outcome) -> (Rational, Rational) {
    (out.weights.admitted.clone(), out.weights.finished.clone())
}

/// Deliberate engine defects, used to prove that the checkers catch them.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    SkipDiscards,
}

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

/// A job admitted to a machine and not yet finished or discarded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveJob {
    /// Position of the job in `Instance::jobs`.
    pub index: usize,
    pub job: JobId,
    pub remaining: Rational,
    pub virtual_deadline: Rational,
    pub density: Rational,
}

impl ActiveJob {
    /// Idle time the job can still afford: `v − now − remaining`.
    pub fn slack(&self, now: &Rational) -> Rational {
        &self.virtual_deadline - now - &self.remaining
    }
}

/// Mutable run state shared by the engine and the admission routine.
#[derive(Debug)]
pub struct SchedulerState<'a> {
    inst: &'a Instance,
    eps: Rational,
    pending: BTreeSet<usize>,
    admitted: Vec<bool>,
    active: Vec<Vec<ActiveJob>>,
    admissions: Vec<AdmissionRecord>,
}

impl<'a> SchedulerState<'a> {
    /// Windows and virtual deadlines use the instance's slack, clamped to one.
    pub fn new(inst: &'a Instance) -> Result<Self> {
        Ok(SchedulerState {
            inst,
            eps: clamp_epsilon(&inst.epsilon)?,
            pending: BTreeSet::new(),
            admitted: vec![false; inst.jobs.len()],
            active: vec![Vec::new(); inst.machines],
            admissions: Vec::new(),
        })
    }

    pub fn machines(&self) -> usize {
        self.inst.machines
    }

    pub fn window_epsilon(&self) -> &Rational {
        &self.eps
    }

    pub fn job_at(&self, index: usize) -> &'a Job {
        &self.inst.jobs[index]
    }

    /// Adds a released job to the pending pool. Admitted jobs never return.
    pub fn release(&mut self, index: usize) {
        if !self.admitted[index] {
            self.pending.insert(index);
        }
    }

    /// Indices of released, not-yet-admitted jobs.
    pub fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        self.pending.iter().copied()
    }

    pub fn active(&self, machine: MachineId) -> &[ActiveJob] {
        &self.active[machine]
    }

    fn running_pos(&self, machine: MachineId) -> Option<usize> {
        self.active[machine]
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.density.cmp(&b.density).then(b.job.cmp(&a.job)))
            .map(|(pos, _)| pos)
    }

    /// Densest active job on `machine` (ties: lower id).
    pub fn running(&self, machine: MachineId) -> Option<&ActiveJob> {
        self.running_pos(machine).map(|pos| &self.active[machine][pos])
    }

    pub fn admissions(&self) -> &[AdmissionRecord] {
        &self.admissions
    }

    pub(crate) fn admit(
        &mut self,
        index: usize,
        machine: MachineId,
        now: &Rational,
        parent: Option<JobId>,
    ) {
        let job = self.job_at(index);
        let size = job.size_on(machine).expect("admitted to an eligible machine");
        let virtual_deadline = now + virtual_window(size, &self.eps);
        debug_assert!(virtual_deadline <= job.deadline);
        self.pending.remove(&index);
        self.admitted[index] = true;
        self.active[machine].push(ActiveJob {
            index,
            job: job.id,
            remaining: size.clone(),
            virtual_deadline: virtual_deadline.clone(),
            density: &job.weight / size,
        });
        self.admissions.push(AdmissionRecord {
            job: job.id,
            machine,
            admitted_at: now.clone(),
            virtual_deadline,
            parent,
        });
    }

    /// Drops every waiting job whose slack is exhausted at `now`.
    fn discard_exhausted(&mut self, now: &Rational, discarded: &mut BTreeSet<JobId>) {
        for machine in 0..self.machines() {
            let running = self.running(machine).map(|a| a.job);
            self.active[machine].retain(|a| {
                let keep = Some(a.job) == running || a.slack(now).is_positive();
                if !keep {
                    discarded.insert(a.job);
                }
                keep
            });
        }
    }

    fn is_idle(&self) -> bool {
        self.active.iter().all(Vec::is_empty)
    }
}

pub fn simulate(inst: &Instance, policy: &AdmissionPolicy) -> Result<Outcome> {
    simulate_with(inst, policy, &SimOptions::default())
}

pub fn simulate_with(
    inst: &Instance,
    policy: &AdmissionPolicy,
    opts: &SimOptions,
) -> Result<Outcome> {
    let report = inst.validate();
    if !report.is_valid() {
        return Err(Error::InvalidInstance(report));
    }
    let skip_discards = opts.fault == Some(Fault::SkipDiscards);
    let mut state = SchedulerState::new(inst)?;

    let mut releases: Vec<usize> = (0..inst.jobs.len()).collect();
    releases.sort_by(|&a, &b| {
        let (ja, jb) = (&inst.jobs[a], &inst.jobs[b]);
        ja.release.cmp(&jb.release).then(ja.id.cmp(&jb.id))
    });
    let mut next_release = 0;

    let mut finished = BTreeSet::new();
    let mut discarded = BTreeSet::new();
    let mut segments = Vec::new();
    let mut open: Vec<Option<(usize, Rational)>> = vec![None; inst.machines];

    let Some(&first) = releases.first() else {
        return Ok(Outcome::default());
    };
    let mut now = inst.jobs[first].release.clone();

    loop {
        let mut trigger = false;

        for machine in 0..inst.machines {
            if let Some(pos) = state.running_pos(machine) {
                if state.active[machine][pos].remaining.is_zero() {
                    let done = state.active[machine].swap_remove(pos);
                    finished.insert(done.job);
                    trigger = true;
                }
            }
        }

        if !skip_discards {
            state.discard_exhausted(&now, &mut discarded);
        }

        while next_release < releases.len() && inst.jobs[releases[next_release]].release <= now {
            state.release(releases[next_release]);
            next_release += 1;
            trigger = true;
        }

        if trigger {
            admission_routine(&mut state, &now, policy);
            // an interrupted job may have had no slack left
            if !skip_discards {
                state.discard_exhausted(&now, &mut discarded);
            }
        }

        for (machine, slot) in open.iter_mut().enumerate() {
            let running = state.running(machine).map(|a| a.index);
            if slot.as_ref().map(|(idx, _)| *idx) == running {
                continue;
            }
            if let Some((idx, start)) = slot.take() {
                if start < now {
                    segments.push(ScheduleSegment {
                        machine,
                        job: inst.jobs[idx].id,
                        start,
                        end: now.clone(),
                    });
                }
            }
            *slot = running.map(|idx| (idx, now.clone()));
        }

        if state.is_idle() && next_release == releases.len() {
            break;
        }

        let mut next_event: Option<Rational> = releases
            .get(next_release)
            .map(|&idx| inst.jobs[idx].release.clone());
        let mut consider = |t: Rational| {
            if t > now && next_event.as_ref().is_none_or(|e| t < *e) {
                next_event = Some(t);
            }
        };
        for machine in 0..inst.machines {
            let running = state.running_pos(machine);
            for (pos, a) in state.active[machine].iter().enumerate() {
                if Some(pos) == running {
                    consider(&now + &a.remaining);
                } else {
                    consider(&a.virtual_deadline - &a.remaining);
                }
            }
        }
        let next_event = next_event.expect("pending work implies a future event");
        let elapsed = &next_event - &now;
        for machine in 0..inst.machines {
            if let Some(pos) = state.running_pos(machine) {
                state.active[machine][pos].remaining -= &elapsed;
            }
        }
        now = next_event;
    }

    segments.sort_by(|a, b| (a.machine, &a.start).cmp(&(b.machine, &b.start)));
    let admissions = state.admissions;
    let admitted_ids: BTreeSet<JobId> = admissions.iter().map(|a| a.job).collect();
    let never_admitted = inst
        .jobs
        .iter()
        .map(|j| j.id)
        .filter(|id| !admitted_ids.contains(id))
        .collect();
    let weight_of = |ids: &mut dyn Iterator<Item = &JobId>| -> Rational {
        ids.map(|id| inst.job(*id).expect("known id").weight.clone())
            .sum()
    };
    let weights = WeightTotals {
        admitted: weight_of(&mut admitted_ids.iter()),
        finished: weight_of(&mut finished.iter()),
        discarded: weight_of(&mut discarded.iter()),
    };
    Ok(Outcome {
        admissions,
        segments,
        finished,
        discarded,
        never_admitted,
        weights,
    })
}

//! Post-hoc verification of an [`Outcome`] against its instance.
//!
//! Nothing here trusts the engine's internal state: every check is rebuilt
//! from the admission records and the schedule segments alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{AdmissionRecord, Outcome, ScheduleSegment};
use crate::model::{clamp_epsilon, Instance, JobId, MachineId};
use crate::policy::{virtual_window, AdmissionPolicy, JobProfile, Rule, Verdict};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeasibilityViolation {
    UnknownJob { job: JobId },
    BadSegment { machine: MachineId, job: JobId },
    MachineOverlap { machine: MachineId, first: JobId, second: JobId, at: Rational },
    Migration { job: JobId, machine: MachineId },
    NotAdmitted { job: JobId },
    BadAdmission { job: JobId, reason: String },
    OutsideWindow { job: JobId },
    PastVirtualDeadline { job: JobId, end: Rational, virtual_deadline: Rational },
    UnderProcessed { job: JobId, processed: Rational, required: Rational },
    OverProcessed { job: JobId, processed: Rational, required: Rational },
    DiscardedButComplete { job: JobId },
    SetMismatch { detail: String },
    WeightMismatch { which: &'static str },
    InactiveRunning { machine: MachineId, job: JobId, at: Rational },
    NotDensest { machine: MachineId, running: JobId, denser: JobId, at: Rational },
    IdleWhileActive { machine: MachineId, job: JobId, at: Rational },
}

impl fmt::Display for FeasibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FeasibilityViolation::*;
        match self {
            UnknownJob { job } => write!(f, "unknown job {job}"),
            BadSegment { machine, job } => write!(f, "bad segment for job {job} on machine {machine}"),
            MachineOverlap { machine, first, second, at } => write!(
                f,
                "machine overlap on machine {machine}: jobs {first} and {second} at {at}"
            ),
            Migration { job, machine } => write!(f, "job {job} migrated to machine {machine}"),
            NotAdmitted { job } => write!(f, "job {job} processed without admission"),
            BadAdmission { job, reason } => write!(f, "bad admission of job {job}: {reason}"),
            OutsideWindow { job } => write!(f, "job {job} processed outside [a_j, d_j]"),
            PastVirtualDeadline { job, end, virtual_deadline } => write!(
                f,
                "job {job} processed until {end}, past its virtual deadline {virtual_deadline}"
            ),
            UnderProcessed { job, processed, required } => write!(
                f,
                "under-processed: finished job {job} got {processed} of {required}"
            ),
            OverProcessed { job, processed, required } => write!(
                f,
                "over-processed: job {job} got {processed} of {required}"
            ),
            DiscardedButComplete { job } => write!(f, "discarded job {job} was fully processed"),
            SetMismatch { detail } => write!(f, "job sets inconsistent: {detail}"),
            WeightMismatch { which } => write!(f, "{which} weight total does not match its set"),
            InactiveRunning { machine, job, at } => write!(
                f,
                "machine {machine} runs inactive job {job} just after {at}"
            ),
            NotDensest { machine, running, denser, at } => write!(
                f,
                "machine {machine} runs job {running} just after {at} although job {denser} is denser and active"
            ),
            IdleWhileActive { machine, job, at } => write!(
                f,
                "machine {machine} idles just after {at} while job {job} is active"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<FeasibilityViolation>,
}

impl FeasibilityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("feasible");
        }
        let lines: Vec<String> = self.violations.iter().map(|v| format!("  - {v}")).collect();
        f.write_str(&lines.join("\n"))
    }
}

/// Time `job` has received strictly before `t`.
fn processed_before(segments: &[&ScheduleSegment], t: &Rational) -> Rational {
    segments
        .iter()
        .filter(|s| s.start < *t)
        .map(|s| s.end.clone().min(t.clone()) - &s.start)
        .sum()
}

struct Reconstruction<'a> {
    records: BTreeMap<JobId, (usize, &'a AdmissionRecord)>,
    by_job: BTreeMap<JobId, Vec<&'a ScheduleSegment>>,
    sizes: BTreeMap<JobId, Rational>,
    densities: BTreeMap<JobId, Rational>,
}

impl<'a> Reconstruction<'a> {
    fn new(out: &'a Outcome, inst: &Instance) -> Self {
        let mut records = BTreeMap::new();
        let mut sizes = BTreeMap::new();
        let mut densities = BTreeMap::new();
        for (order, rec) in out.admissions.iter().enumerate() {
            records.entry(rec.job).or_insert((order, rec));
            if let Some(job) = inst.job(rec.job) {
                if let Some(p) = job.size_on(rec.machine) {
                    densities.insert(rec.job, &job.weight / p);
                    sizes.insert(rec.job, p.clone());
                }
            }
        }
        let mut by_job: BTreeMap<JobId, Vec<&ScheduleSegment>> = BTreeMap::new();
        for s in &out.segments {
            by_job.entry(s.job).or_default().push(s);
        }
        for segs in by_job.values_mut() {
            segs.sort_by(|a, b| a.start.cmp(&b.start));
        }
        Reconstruction {
            records,
            by_job,
            sizes,
            densities,
        }
    }

    fn segments(&self, job: JobId) -> &[&'a ScheduleSegment] {
        self.by_job.get(&job).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Slack of `job` at `t`, or `None` if it is complete by then.
    fn slack_at(&self, job: JobId, t: &Rational) -> Option<Rational> {
        let (_, rec) = self.records.get(&job)?;
        let size = self.sizes.get(&job)?;
        let done = processed_before(self.segments(job), t);
        if done >= *size {
            return None;
        }
        Some(&rec.virtual_deadline - t - (size - &done))
    }
}

/// Verifies a schedule: machine exclusivity, non-migration, windows, full
/// processing of finished jobs, consistent job sets and weights, and that
/// each machine always runs its densest active job.
pub fn check_feasibility(out: &Outcome, inst: &Instance) -> FeasibilityReport {
    use FeasibilityViolation::*;
    let mut v = Vec::new();
    let recon = Reconstruction::new(out, inst);
    let eps = clamp_epsilon(&inst.epsilon).ok();

    let mut seen = BTreeSet::new();
    for rec in &out.admissions {
        if !seen.insert(rec.job) {
            v.push(BadAdmission { job: rec.job, reason: "admitted twice".into() });
            continue;
        }
        let Some(job) = inst.job(rec.job) else {
            v.push(UnknownJob { job: rec.job });
            continue;
        };
        let Some(size) = job.size_on(rec.machine) else {
            v.push(BadAdmission { job: rec.job, reason: "machine not eligible".into() });
            continue;
        };
        if rec.admitted_at < job.release {
            v.push(BadAdmission { job: rec.job, reason: "admitted before release".into() });
        }
        if let Some(eps) = &eps {
            let window = virtual_window(size, eps);
            if &job.deadline - &rec.admitted_at < window {
                v.push(BadAdmission { job: rec.job, reason: "deadline too close at admission".into() });
            }
            if rec.virtual_deadline != &rec.admitted_at + &window {
                v.push(BadAdmission { job: rec.job, reason: "wrong virtual deadline".into() });
            }
        }
    }

    let mut per_machine: BTreeMap<MachineId, Vec<&ScheduleSegment>> = BTreeMap::new();
    for s in &out.segments {
        if s.start >= s.end || s.machine >= inst.machines {
            v.push(BadSegment { machine: s.machine, job: s.job });
            continue;
        }
        per_machine.entry(s.machine).or_default().push(s);
        let Some(job) = inst.job(s.job) else {
            v.push(UnknownJob { job: s.job });
            continue;
        };
        let Some((_, rec)) = recon.records.get(&s.job) else {
            v.push(NotAdmitted { job: s.job });
            continue;
        };
        if rec.machine != s.machine {
            v.push(Migration { job: s.job, machine: s.machine });
        }
        if s.start < rec.admitted_at || s.start < job.release || s.end > job.deadline {
            v.push(OutsideWindow { job: s.job });
        }
        if s.end > rec.virtual_deadline {
            v.push(PastVirtualDeadline {
                job: s.job,
                end: s.end.clone(),
                virtual_deadline: rec.virtual_deadline.clone(),
            });
        }
    }
    for (machine, segs) in per_machine.iter_mut() {
        segs.sort_by(|a, b| a.start.cmp(&b.start));
        for pair in segs.windows(2) {
            if pair[0].end > pair[1].start {
                v.push(MachineOverlap {
                    machine: *machine,
                    first: pair[0].job,
                    second: pair[1].job,
                    at: pair[1].start.clone(),
                });
            }
        }
    }

    let admitted: BTreeSet<JobId> = recon.records.keys().copied().collect();
    if let Some(job) = out.finished.intersection(&out.discarded).next() {
        v.push(SetMismatch { detail: format!("job {job} both finished and discarded") });
    }
    let closed: BTreeSet<JobId> = out.finished.union(&out.discarded).copied().collect();
    if closed != admitted {
        v.push(SetMismatch { detail: "finished ∪ discarded differs from admitted".into() });
    }
    let all: BTreeSet<JobId> = inst.jobs.iter().map(|j| j.id).collect();
    let expected_never: BTreeSet<JobId> = all.difference(&admitted).copied().collect();
    if out.never_admitted != expected_never {
        v.push(SetMismatch { detail: "never-admitted set is wrong".into() });
    }
    let total = |ids: &BTreeSet<JobId>| -> Rational {
        ids.iter().filter_map(|id| inst.job(*id)).map(|j| j.weight.clone()).sum()
    };
    if out.weights.admitted != total(&admitted) {
        v.push(WeightMismatch { which: "admitted" });
    }
    if out.weights.finished != total(&out.finished) {
        v.push(WeightMismatch { which: "finished" });
    }
    if out.weights.discarded != total(&out.discarded) {
        v.push(WeightMismatch { which: "discarded" });
    }

    for job in &admitted {
        let Some(size) = recon.sizes.get(job) else { continue };
        let processed: Rational = recon.segments(*job).iter().map(|s| s.len()).sum();
        if out.finished.contains(job) && processed < *size {
            v.push(UnderProcessed { job: *job, processed, required: size.clone() });
        } else if processed > *size {
            v.push(OverProcessed { job: *job, processed, required: size.clone() });
        } else if out.discarded.contains(job) && processed == *size {
            v.push(DiscardedButComplete { job: *job });
        }
    }

    for machine in 0..inst.machines {
        check_machine_discipline(out, &recon, machine, &mut v);
    }

    FeasibilityReport { violations: v }
}

/// Between consecutive breakpoints nothing but the running job's progress
/// changes, and a waiting job's slack only shrinks, so checking the state
/// just after each breakpoint is exhaustive.
fn check_machine_discipline(
    out: &Outcome,
    recon: &Reconstruction<'_>,
    machine: MachineId,
    v: &mut Vec<FeasibilityViolation>,
) {
    let segs: Vec<&ScheduleSegment> = out.segments.iter().filter(|s| s.machine == machine).collect();
    let recs: Vec<&AdmissionRecord> = out.admissions.iter().filter(|a| a.machine == machine).collect();
    let mut points: BTreeSet<&Rational> = BTreeSet::new();
    for s in &segs {
        points.insert(&s.start);
        points.insert(&s.end);
    }
    for r in &recs {
        points.insert(&r.admitted_at);
    }
    for at in points {
        let running = segs.iter().find(|s| s.start <= *at && *at < s.end).map(|s| s.job);
        let mut active: Vec<(JobId, Rational)> = Vec::new();
        for rec in recs.iter().filter(|r| r.admitted_at <= *at) {
            let Some(slack) = recon.slack_at(rec.job, at) else { continue };
            let is_active = if Some(rec.job) == running {
                !slack.is_negative()
            } else {
                slack.is_positive()
            };
            if is_active {
                let Some(density) = recon.densities.get(&rec.job).cloned() else { continue };
                active.push((rec.job, density));
            } else if Some(rec.job) == running {
                v.push(FeasibilityViolation::InactiveRunning { machine, job: rec.job, at: at.clone() });
            }
        }
        match running {
            Some(job) => {
                let Some((_, rho)) = active.iter().find(|(j, _)| *j == job).cloned() else {
                    continue;
                };
                if let Some((other, _)) = active
                    .iter()
                    .find(|(j, d)| *j != job && (*d > rho || (*d == rho && *j < job)))
                {
                    v.push(FeasibilityViolation::NotDensest {
                        machine,
                        running: job,
                        denser: *other,
                        at: at.clone(),
                    });
                }
            }
            None => {
                if let Some((job, _)) = active.first() {
                    v.push(FeasibilityViolation::IdleWhileActive { machine, job: *job, at: at.clone() });
                }
            }
        }
    }
}

/// A policy-level problem found in the admission trail.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditFinding {
    pub job: JobId,
    pub problem: String,
}

impl fmt::Display for AuditFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job {}: {}", self.job, self.problem)
    }
}

/// Re-derives every admission decision from the trace.
///
/// * An interrupting admission must name the job that was running at that
///   instant, and the policy must admit the job against it by a size-aware
///   rule (not the empty-machine rule).
/// * An admission without a parent must find its machine empty.
/// * The admitted job must start immediately, unless a later admission at
///   the same instant interrupts it in turn.
/// * No job active on the machine at that instant may be denser.
pub fn audit_admissions(
    inst: &Instance,
    out: &Outcome,
    policy: &AdmissionPolicy,
) -> Vec<AuditFinding> {
    let recon = Reconstruction::new(out, inst);
    let mut findings = Vec::new();
    let mut flag = |job: JobId, problem: String| findings.push(AuditFinding { job, problem });

    for (order, rec) in out.admissions.iter().enumerate() {
        let Some(job) = inst.job(rec.job) else { continue };
        let Ok(profile) = JobProfile::of(job, rec.machine) else { continue };
        let at = &rec.admitted_at;

        // Unfinished jobs on this machine at `at`, before this admission. The
        // densest of them is the one running; the others stay active only
        // while their slack is positive.
        let mut present: Vec<(JobId, Rational, &Rational)> = Vec::new();
        for (other_order, other) in out.admissions.iter().enumerate() {
            if other_order >= order || other.machine != rec.machine || other.admitted_at > *at {
                continue;
            }
            let Some(slack) = recon.slack_at(other.job, at) else { continue };
            let Some(density) = recon.densities.get(&other.job) else { continue };
            if !slack.is_negative() {
                present.push((other.job, slack, density));
            }
        }
        let running = present
            .iter()
            .max_by(|a, b| a.2.cmp(b.2).then(b.0.cmp(&a.0)))
            .map(|p| p.0);
        let active_before: Vec<JobId> = present
            .iter()
            .filter(|(job, slack, _)| slack.is_positive() || Some(*job) == running)
            .map(|p| p.0)
            .collect();

        match rec.parent {
            Some(parent) => {
                let Some(&(parent_order, parent_rec)) = recon.records.get(&parent) else {
                    flag(rec.job, format!("parent {parent} was never admitted"));
                    continue;
                };
                if parent_order >= order || parent_rec.machine != rec.machine {
                    flag(rec.job, format!("parent {parent} is not an earlier job on machine {}", rec.machine));
                    continue;
                }
                if running != Some(parent) {
                    flag(rec.job, format!("parent {parent} was not running at {at}"));
                }
                let Some(parent_job) = inst.job(parent) else { continue };
                let Ok(parent_profile) = JobProfile::of(parent_job, rec.machine) else { continue };
                match policy.decide(&profile, Some(&parent_profile)) {
                    Verdict::Admit(Rule::EmptyMachine) | Verdict::Reject => {
                        flag(rec.job, format!("no admission rule fires against parent {parent}"))
                    }
                    Verdict::Admit(_) => {}
                }
            }
            None => {
                if let Some(busy) = active_before.first() {
                    flag(rec.job, format!("admitted as if machine {} were empty, but job {busy} was active", rec.machine));
                }
            }
        }

        let starts_now = recon.segments(rec.job).first().is_some_and(|s| s.start == *at);
        let preempted_now = out.admissions[order + 1..]
            .iter()
            .any(|a| a.machine == rec.machine && a.admitted_at == *at && a.parent == Some(rec.job));
        if !starts_now && !preempted_now {
            flag(rec.job, "did not start processing at admission".into());
        }

        for other in active_before {
            let Some(other_job) = inst.job(other) else { continue };
            let Ok(other_profile) = JobProfile::of(other_job, rec.machine) else { continue };
            if other_profile.density > profile.density {
                flag(rec.job, format!("active job {other} is denser at admission"));
            }
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, simulate_with, Fault, SimOptions, WeightTotals};
    use crate::model::{Job, ProcTime};
    use crate::rational::rat;

    fn one_machine(jobs: &[(i64, i64, i64, i64)]) -> Instance {
        Instance::new(
            1,
            rat(1, 1),
            jobs.iter()
                .enumerate()
                .map(|(k, &(r, d, p, w))| Job {
                    id: k as JobId,
                    release: rat(r, 1),
                    deadline: rat(d, 1),
                    weight: rat(w, 1),
                    proc: vec![ProcTime::Finite(rat(p, 1))],
                })
                .collect(),
        )
    }

    #[test]
    fn engine_output_is_clean() {
        let inst = one_machine(&[(0, 8, 4, 1), (1, 7, 3, 4), (1, 5, 2, 100), (2, 20, 5, 1)]);
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        let out = simulate(&inst, &policy).unwrap();
        let report = check_feasibility(&out, &inst);
        assert!(report.is_clean(), "{report}");
        assert!(audit_admissions(&inst, &out, &policy).is_empty());
    }

    fn seg(job: JobId, start: i64, end: i64) -> ScheduleSegment {
        ScheduleSegment { machine: 0, job, start: rat(start, 1), end: rat(end, 1) }
    }

    fn rec(job: JobId, at: i64, v: Rational) -> AdmissionRecord {
        AdmissionRecord { job, machine: 0, admitted_at: rat(at, 1), virtual_deadline: v, parent: None }
    }

    #[test]
    fn overlapping_segments_are_reported() {
        let inst = one_machine(&[(0, 4, 1, 1), (0, 4, 1, 1)]);
        let out = Outcome {
            admissions: vec![rec(0, 0, rat(3, 2)), rec(1, 0, rat(3, 2))],
            segments: vec![seg(0, 0, 1), seg(1, 0, 1)],
            finished: [0, 1].into(),
            weights: WeightTotals { admitted: rat(2, 1), finished: rat(2, 1), discarded: rat(0, 1) },
            ..Outcome::default()
        };
        let report = check_feasibility(&out, &inst);
        assert!(report.to_string().contains("machine overlap"), "{report}");
    }

    #[test]
    fn short_finished_job_is_reported() {
        let inst = one_machine(&[(0, 4, 2, 1)]);
        let out = Outcome {
            admissions: vec![rec(0, 0, rat(3, 1))],
            segments: vec![seg(0, 0, 1)],
            finished: [0].into(),
            weights: WeightTotals { admitted: rat(1, 1), finished: rat(1, 1), discarded: rat(0, 1) },
            ..Outcome::default()
        };
        let report = check_feasibility(&out, &inst);
        assert!(report.to_string().contains("under-processed"), "{report}");
    }

    #[test]
    fn skipping_discards_is_caught() {
        // Job 1 interrupts job 0 by the comparable-size rule; with discards
        // disabled job 0 later resumes past its slack.
        let inst = one_machine(&[(0, 8, 4, 1), (1, 7, 3, 4)]);
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        let opts = SimOptions { fault: Some(Fault::SkipDiscards) };
        let out = simulate_with(&inst, &policy, &opts).unwrap();
        let report = check_feasibility(&out, &inst);
        assert!(!report.is_clean());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, FeasibilityViolation::InactiveRunning { job: 0, .. })));
    }

    #[test]
    fn audit_rederives_the_verdict() {
        // Single-threshold(1/2) lets job 1 interrupt job 0; the two-threshold
        // rule would not (comparable size, weight ratio below 4).
        let inst = one_machine(&[(0, 8, 4, 1), (1, 7, 3, 3)]);
        let lenient = AdmissionPolicy::single_threshold(rat(1, 2)).unwrap();
        let mut out = simulate(&inst, &lenient).unwrap();
        assert_eq!(out.admissions[1].parent, Some(0));
        assert!(audit_admissions(&inst, &out, &lenient).is_empty());
        let strict = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        assert!(!audit_admissions(&inst, &out, &strict).is_empty());
        out.admissions[1].parent = None;
        assert!(!audit_admissions(&inst, &out, &lenient).is_empty());
    }
}

//! Jobs, instances and the slack assumption.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::Rational;

pub type JobId = u32;
pub type MachineId = usize;

/// Processing time of a job on one machine. `Infinite` marks an
/// ineligible machine.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum ProcTime {
    Finite(Rational),
    Infinite,
}

impl ProcTime {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ProcTime::Finite(p) => Some(p),
            ProcTime::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ProcTime::Finite(_))
    }
}

impl From<Rational> for ProcTime {
    fn from(p: Rational) -> Self {
        ProcTime::Finite(p)
    }
}

impl fmt::Display for ProcTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcTime::Finite(p) => p.fmt(f),
            ProcTime::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ProcTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct ProcTimeVisitor;

impl Visitor<'_> for ProcTimeVisitor {
    type Value = ProcTime;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a positive rational or \"inf\"")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ProcTime, E> {
        if v.trim() == "inf" {
            return Ok(ProcTime::Infinite);
        }
        v.parse().map(ProcTime::Finite).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ProcTime, E> {
        Ok(ProcTime::Finite(Rational::from_integer(v)))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ProcTime, E> {
        i64::try_from(v)
            .map(|v| ProcTime::Finite(Rational::from_integer(v)))
            .map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for ProcTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ProcTimeVisitor)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub id: JobId,
    #[serde(rename = "r")]
    pub release: Rational,
    #[serde(rename = "d")]
    pub deadline: Rational,
    #[serde(rename = "w")]
    pub weight: Rational,
    /// One entry per machine.
    #[serde(rename = "p")]
    pub proc: Vec<ProcTime>,
}

impl Job {
    /// Processing time on `machine`, or `None` if ineligible or out of range.
    pub fn size_on(&self, machine: MachineId) -> Option<&Rational> {
        self.proc.get(machine).and_then(ProcTime::finite)
    }

    pub fn eligible_machines(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.proc
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_finite())
            .map(|(i, _)| i)
    }
}

/// Weight per unit of processing time of `job` on `machine`.
pub fn density(job: &Job, machine: MachineId) -> Result<Rational> {
    match job.size_on(machine) {
        Some(p) => Ok(&job.weight / p),
        None => Err(Error::NotEligible {
            job: job.id,
            machine,
        }),
    }
}

/// Caps the slack parameter at one; larger slack gives no further benefit to
/// the admission thresholds.
pub fn clamp_epsilon(epsilon: &Rational) -> Result<Rational> {
    if !epsilon.is_positive() {
        return Err(Error::BadSlack(epsilon.to_string()));
    }
    Ok(epsilon.clone().min(Rational::one()))
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub machines: usize,
    /// Slack as given; policies clamp their own copy.
    pub epsilon: Rational,
    pub jobs: Vec<Job>,
}

impl Instance {
    pub fn new(machines: usize, epsilon: Rational, jobs: Vec<Job>) -> Self {
        Instance {
            machines,
            epsilon,
            jobs,
        }
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.jobs.iter().find(|j| j.id == id)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_instance(self)
    }

    /// Returns the instance unchanged if it validates.
    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidInstance(report))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Canonical single-line JSON. Parsing the output and emitting again
    /// reproduces the same bytes.
    pub fn to_json(&self) -> String {
        let mut out = format!(
            "{{ \"machines\": {}, \"epsilon\": \"{}\", \"jobs\": [",
            self.machines, self.epsilon
        );
        for (k, job) in self.jobs.iter().enumerate() {
            out.push_str(if k == 0 { " " } else { ", " });
            let proc: Vec<String> = job.proc.iter().map(|p| format!("\"{p}\"")).collect();
            out.push_str(&format!(
                "{{ \"id\": {}, \"r\": \"{}\", \"d\": \"{}\", \"w\": \"{}\", \"p\": [{}] }}",
                job.id,
                job.release,
                job.deadline,
                job.weight,
                proc.join(", ")
            ));
        }
        out.push_str(if self.jobs.is_empty() { "] }" } else { " ] }" });
        out
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    NonPositiveMachines,
    NonPositiveEpsilon,
    DuplicateId { job: JobId },
    ProcLengthMismatch { job: JobId, expected: usize, found: usize },
    NegativeRelease { job: JobId },
    DeadlineNotAfterRelease { job: JobId },
    NonPositiveWeight { job: JobId },
    NonPositiveProcTime { job: JobId, machine: MachineId },
    NoEligibleMachine { job: JobId },
    Slack { job: JobId, machine: MachineId, window: Rational, required: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveMachines => f.write_str("machine count must be positive"),
            Violation::NonPositiveEpsilon => f.write_str("epsilon must be positive"),
            Violation::DuplicateId { job } => write!(f, "job {job}: duplicate id"),
            Violation::ProcLengthMismatch {
                job,
                expected,
                found,
            } => write!(
                f,
                "job {job}: proc length mismatch ({found} entries for {expected} machines)"
            ),
            Violation::NegativeRelease { job } => write!(f, "job {job}: negative release"),
            Violation::DeadlineNotAfterRelease { job } => {
                write!(f, "job {job}: deadline not after release")
            }
            Violation::NonPositiveWeight { job } => write!(f, "job {job}: non-positive weight"),
            Violation::NonPositiveProcTime { job, machine } => {
                write!(f, "job {job}, machine {machine}: non-positive processing time")
            }
            Violation::NoEligibleMachine { job } => write!(f, "job {job}: no eligible machine"),
            Violation::Slack {
                job,
                machine,
                window,
                required,
            } => write!(
                f,
                "job {job}, machine {machine}: slack violation (window {window} < {required})"
            ),
        }
    }
}

/// Every violation found in an instance; empty means valid.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    if inst.machines == 0 {
        violations.push(Violation::NonPositiveMachines);
    }
    let eps_ok = inst.epsilon.is_positive();
    if !eps_ok {
        violations.push(Violation::NonPositiveEpsilon);
    }
    let stretch = Rational::one() + &inst.epsilon;
    let mut seen = BTreeSet::new();
    for job in &inst.jobs {
        let id = job.id;
        if !seen.insert(id) {
            violations.push(Violation::DuplicateId { job: id });
        }
        if job.proc.len() != inst.machines {
            violations.push(Violation::ProcLengthMismatch {
                job: id,
                expected: inst.machines,
                found: job.proc.len(),
            });
        }
        if job.release.is_negative() {
            violations.push(Violation::NegativeRelease { job: id });
        }
        if job.deadline <= job.release {
            violations.push(Violation::DeadlineNotAfterRelease { job: id });
        }
        if !job.weight.is_positive() {
            violations.push(Violation::NonPositiveWeight { job: id });
        }
        if !job.proc.iter().any(ProcTime::is_finite) {
            violations.push(Violation::NoEligibleMachine { job: id });
        }
        let window = &job.deadline - &job.release;
        for (machine, p) in job.proc.iter().enumerate() {
            let Some(p) = p.finite() else { continue };
            if !p.is_positive() {
                violations.push(Violation::NonPositiveProcTime { job: id, machine });
                continue;
            }
            if !eps_ok {
                continue;
            }
            let required = &stretch * p;
            if window < required {
                violations.push(Violation::Slack {
                    job: id,
                    machine,
                    window: window.clone(),
                    required,
                });
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use proptest::prelude::*;

    fn job(id: JobId, r: Rational, d: Rational, w: Rational, proc: Vec<ProcTime>) -> Job {
        Job {
            id,
            release: r,
            deadline: d,
            weight: w,
            proc,
        }
    }

    fn fin(n: i64, d: i64) -> ProcTime {
        ProcTime::Finite(rat(n, d))
    }

    #[test]
    fn density_is_the_exact_quotient() {
        let j = job(0, rat(0, 1), rat(9, 1), rat(3, 1), vec![fin(2, 1)]);
        assert_eq!(density(&j, 0).unwrap(), rat(3, 2));
        let j = job(0, rat(0, 1), rat(9, 1), rat(1, 1), vec![fin(1, 1)]);
        assert_eq!(density(&j, 0).unwrap(), rat(1, 1));
    }

    #[test]
    fn density_on_ineligible_machine_fails() {
        let j = job(4, rat(0, 1), rat(9, 1), rat(5, 1), vec![ProcTime::Infinite]);
        assert!(matches!(
            density(&j, 0),
            Err(Error::NotEligible { job: 4, machine: 0 })
        ));
        assert!(matches!(density(&j, 3), Err(Error::NotEligible { .. })));
    }

    #[test]
    fn slack_boundary_is_accepted() {
        let inst = Instance::new(
            1,
            rat(1, 2),
            vec![job(0, rat(0, 1), rat(3, 2), rat(1, 1), vec![fin(1, 1)])],
        );
        assert!(inst.validate().is_valid());
    }

    #[test]
    fn slack_shortfall_is_reported_per_machine() {
        let inst = Instance::new(
            1,
            rat(1, 2),
            vec![job(0, rat(0, 1), rat(5, 4), rat(1, 1), vec![fin(1, 1)])],
        );
        let report = inst.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::Slack { job: 0, machine: 0, .. }
        ));
        assert!(report.to_string().contains("job 0, machine 0"));
    }

    #[test]
    fn job_without_eligible_machine_is_reported() {
        let inst = Instance::new(
            2,
            rat(1, 2),
            vec![job(
                0,
                rat(0, 1),
                rat(5, 1),
                rat(1, 1),
                vec![ProcTime::Infinite, ProcTime::Infinite],
            )],
        );
        assert_eq!(
            inst.validate().violations,
            vec![Violation::NoEligibleMachine { job: 0 }]
        );
    }

    #[test]
    fn collects_every_structural_violation() {
        let inst = Instance::new(
            2,
            rat(1, 1),
            vec![
                job(0, rat(0, 1), rat(5, 1), rat(0, 1), vec![fin(1, 1)]),
                job(0, rat(2, 1), rat(1, 1), rat(1, 1), vec![fin(0, 1), ProcTime::Infinite]),
            ],
        );
        let kinds: Vec<_> = inst.validate().violations;
        assert!(kinds.contains(&Violation::NonPositiveWeight { job: 0 }));
        assert!(kinds.contains(&Violation::DuplicateId { job: 0 }));
        assert!(kinds.contains(&Violation::DeadlineNotAfterRelease { job: 0 }));
        assert!(kinds.contains(&Violation::NonPositiveProcTime { job: 0, machine: 0 }));
        assert!(kinds.contains(&Violation::ProcLengthMismatch {
            job: 0,
            expected: 2,
            found: 1
        }));
    }

    #[test]
    fn clamp_epsilon_caps_at_one() {
        assert_eq!(clamp_epsilon(&rat(2, 1)).unwrap(), rat(1, 1));
        assert_eq!(clamp_epsilon(&rat(1, 2)).unwrap(), rat(1, 2));
        assert!(matches!(clamp_epsilon(&rat(0, 1)), Err(Error::BadSlack(_))));
        assert!(matches!(clamp_epsilon(&rat(-1, 3)), Err(Error::BadSlack(_))));
    }

    #[test]
    fn canonical_json_is_bit_exact() {
        let text = r#"{ "machines": 2, "epsilon": "1/2", "jobs": [ { "id": 0, "r": "0", "d": "3/2", "w": "1", "p": ["1", "inf"] } ] }"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.jobs[0].proc[1], ProcTime::Infinite);
        assert_eq!(inst.to_json(), text);
    }

    #[test]
    fn json_errors_carry_line_numbers() {
        let err = Instance::from_json("{\n \"machines\": 1,\n \"epsilon\": \"x\" }").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn empty_instance_round_trips() {
        let inst = Instance::new(1, rat(1, 1), vec![]);
        let text = inst.to_json();
        assert_eq!(text, r#"{ "machines": 1, "epsilon": "1", "jobs": [] }"#);
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
    }

    proptest! {
        #[test]
        fn density_is_monotone(w in 1i64..100, p in 1i64..100, dw in 1i64..50, dp in 1i64..50) {
            let mk = |w: i64, p: i64| job(0, rat(0, 1), rat(1000, 1), rat(w, 1), vec![fin(p, 1)]);
            let base = density(&mk(w, p), 0).unwrap();
            prop_assert!(density(&mk(w + dw, p), 0).unwrap() > base);
            prop_assert!(density(&mk(w, p + dp), 0).unwrap() < base);
        }
    }
}

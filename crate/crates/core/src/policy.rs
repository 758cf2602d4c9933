//! Admission policies.
//!
//! A policy only answers one question: given the best pending candidate for
//! a machine and the job that machine is currently running, should the
//! candidate be admitted? Everything stateful lives in the engine.
//!
//! Two policies are provided:
//!
//! * [`AdmissionPolicy::TwoThreshold`] compares sizes first and then applies
//!   one of three rules. A much smaller candidate must be denser by a factor
//!   `8/ε`; a candidate of comparable size (in `(ε/2·p, p]`) must carry four
//!   times the weight; a larger candidate must be four times as dense.
//! * [`AdmissionPolicy::SingleThreshold`] ignores sizes and admits whenever the
//!   candidate is denser by a factor `1/γ`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::SchedulerState;
use crate::error::{Error, Result};
use crate::model::{clamp_epsilon, Job, JobId, MachineId};
use crate::rational::Rational;

/// Size, density and weight of a job on one particular machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobProfile {
    pub size: Rational,
    pub density: Rational,
    pub weight: Rational,
}

impl JobProfile {
    pub fn new(size: Rational, weight: Rational) -> Self {
        let density = &weight / &size;
        JobProfile {
            size,
            density,
            weight,
        }
    }

    pub fn of(job: &Job, machine: MachineId) -> Result<Self> {
        let size = job.size_on(machine).ok_or(Error::NotEligible {
            job: job.id,
            machine,
        })?;
        Ok(JobProfile::new(size.clone(), job.weight.clone()))
    }
}

/// Which admission rule fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Nothing active on the machine.
    EmptyMachine,
    /// `p* ≤ ε/2·p` and `ρ* ≥ 8/ε·ρ`.
    SmallDense,
    /// `ε/2·p < p* ≤ p` and `w* ≥ 4w`.
    ComparableHeavy,
    /// `p* > p` and `ρ* ≥ 4ρ`.
    LargeDense,
    /// Single threshold: `ρ* ≥ ρ/γ`.
    DensityRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Admit(Rule),
    Reject,
}

impl Verdict {
    pub fn is_admit(&self) -> bool {
        matches!(self, Verdict::Admit(_))
    }
}

/// The three-branch rule. `eps` must already be clamped to `(0, 1]`.
pub fn two_threshold_decide(
    candidate: &JobProfile,
    running: Option<&JobProfile>,
    eps: &Rational,
) -> Verdict {
    let Some(running) = running else {
        return Verdict::Admit(Rule::EmptyMachine);
    };
    let half_eps_size = eps * &running.size / Rational::from_integer(2);
    let four = Rational::from_integer(4);
    let eight_over_eps = Rational::from_integer(8) / eps;

    if candidate.size <= half_eps_size {
        if candidate.density >= &eight_over_eps * &running.density {
            return Verdict::Admit(Rule::SmallDense);
        }
    } else if candidate.size <= running.size {
        if candidate.weight >= &four * &running.weight {
            return Verdict::Admit(Rule::ComparableHeavy);
        }
    } else if candidate.density >= &four * &running.density {
        return Verdict::Admit(Rule::LargeDense);
    }
    Verdict::Reject
}

/// Pure density-ratio rule with threshold `gamma ∈ (0, 1]`.
pub fn single_threshold_decide(
    candidate: &JobProfile,
    running: Option<&JobProfile>,
    gamma: &Rational,
) -> Verdict {
    match running {
        None => Verdict::Admit(Rule::EmptyMachine),
        // ρ* ≥ ρ/γ  ⇔  γ·ρ* ≥ ρ
        Some(running) if gamma * &candidate.density >= running.density => {
            Verdict::Admit(Rule::DensityRatio)
        }
        Some(_) => Verdict::Reject,
    }
}

/// A configured admission policy. Immutable; all run state is in the engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdmissionPolicy {
    TwoThreshold { epsilon: Rational },
    SingleThreshold { gamma: Rational },
}

impl AdmissionPolicy {
    /// Clamps `epsilon` to at most one.
    pub fn two_threshold(epsilon: &Rational) -> Result<Self> {
        Ok(AdmissionPolicy::TwoThreshold {
            epsilon: clamp_epsilon(epsilon)?,
        })
    }

    pub fn single_threshold(gamma: Rational) -> Result<Self> {
        if !gamma.is_positive() || gamma > Rational::one() {
            return Err(Error::BadPolicy(format!("single-threshold:{gamma}")));
        }
        Ok(AdmissionPolicy::SingleThreshold { gamma })
    }

    pub fn decide(&self, candidate: &JobProfile, running: Option<&JobProfile>) -> Verdict {
        match self {
            AdmissionPolicy::TwoThreshold { epsilon } => {
                two_threshold_decide(candidate, running, epsilon)
            }
            AdmissionPolicy::SingleThreshold { gamma } => {
                single_threshold_decide(candidate, running, gamma)
            }
        }
    }

    pub fn spec(&self) -> PolicySpec {
        match self {
            AdmissionPolicy::TwoThreshold { .. } => PolicySpec::TwoThreshold,
            AdmissionPolicy::SingleThreshold { gamma } => {
                PolicySpec::SingleThreshold(Some(gamma.clone()))
            }
        }
    }
}

/// Textual policy selector: `two-threshold` or `single-threshold:<gamma>`.
///
/// A bare `single-threshold` leaves γ open; sweeps fill it in per row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicySpec {
    TwoThreshold,
    SingleThreshold(Option<Rational>),
}

impl PolicySpec {
    /// Builds the policy for an instance with slack `epsilon`. `gamma` fills
    /// an open single-threshold γ.
    pub fn build(&self, epsilon: &Rational, gamma: Option<&Rational>) -> Result<AdmissionPolicy> {
        match self {
            PolicySpec::TwoThreshold => AdmissionPolicy::two_threshold(epsilon),
            PolicySpec::SingleThreshold(Some(g)) => AdmissionPolicy::single_threshold(g.clone()),
            PolicySpec::SingleThreshold(None) => match gamma {
                Some(g) => AdmissionPolicy::single_threshold(g.clone()),
                None => Err(Error::BadPolicy("single-threshold".into())),
            },
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "two-threshold" {
            return Ok(PolicySpec::TwoThreshold);
        }
        if s == "single-threshold" {
            return Ok(PolicySpec::SingleThreshold(None));
        }
        let gamma = s
            .strip_prefix("single-threshold:")
            .ok_or_else(|| Error::BadPolicy(s.to_owned()))?;
        let gamma: Rational = gamma.parse().map_err(|_| Error::BadPolicy(s.to_owned()))?;
        if !gamma.is_positive() || gamma > Rational::one() {
            return Err(Error::BadPolicy(s.to_owned()));
        }
        Ok(PolicySpec::SingleThreshold(Some(gamma)))
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::TwoThreshold => f.write_str("two-threshold"),
            PolicySpec::SingleThreshold(None) => f.write_str("single-threshold"),
            PolicySpec::SingleThreshold(Some(g)) => write!(f, "single-threshold:{g}"),
        }
    }
}

impl fmt::Display for AdmissionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.spec().fmt(f)
    }
}

/// Whether `job` may still be admitted to `machine` at `now`: it has been
/// released and its deadline leaves room for `(1 + ε/2)·p`.
pub fn eligible_now(
    job: &Job,
    machine: MachineId,
    now: &Rational,
    eps: &Rational,
) -> Result<bool> {
    let p = job.size_on(machine).ok_or(Error::NotEligible {
        job: job.id,
        machine,
    })?;
    Ok(job.release <= *now && &job.deadline - now >= virtual_window(p, eps))
}

/// `(1 + ε/2)·p`, the time budget an admitted job gets.
pub fn virtual_window(size: &Rational, eps: &Rational) -> Rational {
    (Rational::one() + eps / Rational::from_integer(2)) * size
}

/// Outcome of considering one candidate on one machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Admit {
        job: JobId,
        machine: MachineId,
        parent: Option<JobId>,
        rule: Rule,
    },
    Reject {
        job: JobId,
        machine: MachineId,
    },
}

/// Runs one invocation of the admission routine at time `now`.
///
/// Machines are visited in index order. On each machine the eligible pending
/// jobs are tried in decreasing density (ties: lower id), each against the
/// machine's current running job, until none is left unconsidered. An
/// admitted job becomes the running job immediately and leaves the pending
/// pool for every machine. "Considered" marks do not outlive the call.
pub fn admission_routine(
    state: &mut SchedulerState<'_>,
    now: &Rational,
    policy: &AdmissionPolicy,
) -> Vec<Decision> {
    let mut decisions = Vec::new();
    let eps = state.window_epsilon().clone();
    for machine in 0..state.machines() {
        let mut considered = BTreeSet::new();
        loop {
            let best = state
                .pending()
                .filter(|idx| !considered.contains(idx))
                .filter_map(|idx| {
                    let job = state.job_at(idx);
                    match eligible_now(job, machine, now, &eps) {
                        Ok(true) => Some((idx, JobProfile::of(job, machine).ok()?)),
                        _ => None,
                    }
                })
                .max_by(|(ia, a), (ib, b)| {
                    a.density.cmp(&b.density).then_with(|| {
                        // lower id wins ties, so it must compare greater
                        state.job_at(*ib).id.cmp(&state.job_at(*ia).id)
                    })
                });
            let Some((idx, candidate)) = best else { break };
            considered.insert(idx);

            let running = state.running(machine).map(|a| {
                let job = state.job_at(a.index);
                (job.id, JobProfile::of(job, machine).expect("active job is eligible"))
            });
            let job_id = state.job_at(idx).id;
            match policy.decide(&candidate, running.as_ref().map(|(_, p)| p)) {
                Verdict::Admit(rule) => {
                    let parent = running.as_ref().map(|(id, _)| *id);
                    if let Some((_, prev)) = &running {
                        debug_assert!(
                            candidate.density.cmp(&prev.density) != Ordering::Less,
                            "admitted job must dominate the job it interrupts"
                        );
                    }
                    state.admit(idx, machine, now, parent);
                    decisions.push(Decision::Admit {
                        job: job_id,
                        machine,
                        parent,
                        rule,
                    });
                }
                Verdict::Reject => decisions.push(Decision::Reject {
                    job: job_id,
                    machine,
                }),
            }
        }
    }
    decisions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, ProcTime};
    use crate::rational::rat;
    use proptest::prelude::*;

    fn prof(p: Rational, w: Rational) -> JobProfile {
        JobProfile::new(p, w)
    }

    fn unit_running() -> JobProfile {
        prof(rat(1, 1), rat(1, 1))
    }

    fn job(id: JobId, r: Rational, d: Rational, w: Rational, proc: Vec<Rational>) -> Job {
        Job {
            id,
            release: r,
            deadline: d,
            weight: w,
            proc: proc.into_iter().map(ProcTime::Finite).collect(),
        }
    }

    #[test]
    fn eligible_now_window_boundaries() {
        let j = job(0, rat(0, 1), rat(3, 2), rat(1, 1), vec![rat(1, 1)]);
        let eps = rat(1, 1);
        assert!(eligible_now(&j, 0, &rat(0, 1), &eps).unwrap());
        assert!(!eligible_now(&j, 0, &rat(1, 100), &eps).unwrap());
        let later = job(1, rat(1, 1), rat(9, 1), rat(1, 1), vec![rat(1, 1)]);
        assert!(!eligible_now(&later, 0, &rat(1, 2), &eps).unwrap());
        let ineligible = Job {
            proc: vec![ProcTime::Infinite],
            ..j
        };
        assert!(eligible_now(&ineligible, 0, &rat(0, 1), &eps).is_err());
    }

    #[test]
    fn small_branch_admits_at_boundary() {
        // p* = ε/2·p and ρ* = 8/ε·ρ exactly
        let cand = prof(rat(1, 2), rat(4, 1));
        assert_eq!(cand.density, rat(8, 1));
        assert_eq!(
            two_threshold_decide(&cand, Some(&unit_running()), &rat(1, 1)),
            Verdict::Admit(Rule::SmallDense)
        );
        let short = prof(rat(1, 2), rat(399, 100));
        assert_eq!(
            two_threshold_decide(&short, Some(&unit_running()), &rat(1, 1)),
            Verdict::Reject
        );
    }

    #[test]
    fn middle_branch_compares_weights() {
        let cand = prof(rat(4, 5), rat(4, 1));
        assert_eq!(
            two_threshold_decide(&cand, Some(&unit_running()), &rat(1, 1)),
            Verdict::Admit(Rule::ComparableHeavy)
        );
        // same size as the running job still counts as comparable
        let equal = prof(rat(1, 1), rat(4, 1));
        assert_eq!(
            two_threshold_decide(&equal, Some(&unit_running()), &rat(1, 1)),
            Verdict::Admit(Rule::ComparableHeavy)
        );
    }

    #[test]
    fn large_branch_needs_factor_four_density() {
        let cand = prof(rat(2, 1), rat(39, 5));
        assert_eq!(cand.density, rat(39, 10));
        assert_eq!(
            two_threshold_decide(&cand, Some(&unit_running()), &rat(1, 1)),
            Verdict::Reject
        );
        let enough = prof(rat(2, 1), rat(8, 1));
        assert_eq!(
            two_threshold_decide(&enough, Some(&unit_running()), &rat(1, 1)),
            Verdict::Admit(Rule::LargeDense)
        );
    }

    #[test]
    fn empty_machine_always_admits() {
        let cand = prof(rat(7, 3), rat(1, 1000));
        assert_eq!(
            two_threshold_decide(&cand, None, &rat(1, 4)),
            Verdict::Admit(Rule::EmptyMachine)
        );
        assert_eq!(
            single_threshold_decide(&cand, None, &rat(1, 4)),
            Verdict::Admit(Rule::EmptyMachine)
        );
    }

    #[test]
    fn single_threshold_ratio() {
        let gamma = rat(1, 2);
        assert!(single_threshold_decide(&prof(rat(1, 1), rat(2, 1)), Some(&unit_running()), &gamma).is_admit());
        assert_eq!(
            single_threshold_decide(&prof(rat(1, 1), rat(3, 2)), Some(&unit_running()), &gamma),
            Verdict::Reject
        );
    }

    #[test]
    fn policy_spec_grammar() {
        assert_eq!("two-threshold".parse::<PolicySpec>().unwrap(), PolicySpec::TwoThreshold);
        assert_eq!(
            "single-threshold:1/3".parse::<PolicySpec>().unwrap(),
            PolicySpec::SingleThreshold(Some(rat(1, 3)))
        );
        assert!("single-threshold:3/2".parse::<PolicySpec>().is_err());
        assert!("single-threshold:0".parse::<PolicySpec>().is_err());
        assert!("greedy".parse::<PolicySpec>().is_err());
        let spec = PolicySpec::SingleThreshold(Some(rat(1, 3)));
        assert_eq!(spec.to_string().parse::<PolicySpec>().unwrap(), spec);
    }

    #[test]
    fn two_threshold_policy_clamps_epsilon() {
        let policy = AdmissionPolicy::two_threshold(&rat(5, 2)).unwrap();
        assert_eq!(policy, AdmissionPolicy::TwoThreshold { epsilon: rat(1, 1) });
    }

    fn routine_on(inst: &Instance, policy: &AdmissionPolicy) -> Vec<Decision> {
        let mut state = SchedulerState::new(inst).unwrap();
        for idx in 0..inst.jobs.len() {
            state.release(idx);
        }
        admission_routine(&mut state, &rat(0, 1), policy)
    }

    #[test]
    fn routine_admits_densest_then_rejects_the_rest() {
        let inst = Instance::new(
            1,
            rat(1, 1),
            vec![
                job(0, rat(0, 1), rat(10, 1), rat(3, 1), vec![rat(1, 1)]),
                job(1, rat(0, 1), rat(10, 1), rat(5, 1), vec![rat(1, 1)]),
            ],
        );
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        assert_eq!(
            routine_on(&inst, &policy),
            vec![
                Decision::Admit { job: 1, machine: 0, parent: None, rule: Rule::EmptyMachine },
                Decision::Reject { job: 0, machine: 0 },
            ]
        );
    }

    #[test]
    fn routine_visits_machines_in_index_order() {
        let inst = Instance::new(
            2,
            rat(1, 1),
            vec![job(0, rat(0, 1), rat(10, 1), rat(1, 1), vec![rat(1, 1), rat(1, 1)])],
        );
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        assert_eq!(
            routine_on(&inst, &policy),
            vec![Decision::Admit { job: 0, machine: 0, parent: None, rule: Rule::EmptyMachine }]
        );
    }

    #[test]
    fn considered_marks_are_per_machine() {
        // Job 1 is densest on machine 0 and takes it. Job 0 is rejected there
        // against job 1, then admitted to the empty machine 1 in the same call.
        let inst = Instance::new(
            2,
            rat(1, 1),
            vec![
                job(0, rat(0, 1), rat(10, 1), rat(1, 1), vec![rat(1, 1), rat(1, 1)]),
                job(1, rat(0, 1), rat(10, 1), rat(2, 1), vec![rat(1, 1), rat(1, 1)]),
            ],
        );
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        assert_eq!(
            routine_on(&inst, &policy),
            vec![
                Decision::Admit { job: 1, machine: 0, parent: None, rule: Rule::EmptyMachine },
                Decision::Reject { job: 0, machine: 0 },
                Decision::Admit { job: 0, machine: 1, parent: None, rule: Rule::EmptyMachine },
            ]
        );
    }

    #[test]
    fn density_ties_go_to_lower_id() {
        let inst = Instance::new(
            1,
            rat(1, 1),
            vec![
                job(3, rat(0, 1), rat(10, 1), rat(2, 1), vec![rat(1, 1)]),
                job(1, rat(0, 1), rat(10, 1), rat(2, 1), vec![rat(1, 1)]),
            ],
        );
        let policy = AdmissionPolicy::two_threshold(&inst.epsilon).unwrap();
        let decisions = routine_on(&inst, &policy);
        assert!(matches!(decisions[0], Decision::Admit { job: 1, .. }));
    }

    fn pos() -> impl Strategy<Value = Rational> {
        (1i64..200, 1i64..50).prop_map(|(n, d)| rat(n, d))
    }

    fn eps() -> impl Strategy<Value = Rational> {
        (1i64..=16).prop_map(|k| rat(k, 16))
    }

    proptest! {
        #[test]
        fn observation_smooth_transition(eps in eps(), pj in pos(), u in 1i64..=100, wj in pos(), wk in pos()) {
            // p_k drawn inside (ε/2·p_j, p_j]
            let half = &eps / rat(2, 1);
            let pk = &pj * (&half + (rat(1, 1) - &half) * rat(u, 100));
            let rho_j = &wj / &pj;
            let rho_k = &wk / &pk;
            if wk >= rat(4, 1) * &wj {
                prop_assert!(rho_k >= rat(4, 1) * &rho_j);
            } else {
                prop_assert!(rho_k < rat(8, 1) / &eps * &rho_j);
            }
        }

        #[test]
        fn observation_larger_dense_is_heavy(pj in pos(), extra in pos(), wj in pos(), boost in pos()) {
            let pk = &pj + &extra;
            let rho_j = &wj / &pj;
            let rho_k = rat(4, 1) * &rho_j + boost - rat(1, 50);
            prop_assume!(rho_k >= rat(4, 1) * &rho_j);
            prop_assert!(&rho_k * &pk >= rat(4, 1) * &wj);
        }

        #[test]
        fn policies_agree_on_empty_machines(p in pos(), w in pos(), eps in eps(), gamma in eps()) {
            let cand = prof(p, w);
            prop_assert_eq!(
                two_threshold_decide(&cand, None, &eps),
                single_threshold_decide(&cand, None, &gamma)
            );
        }

        #[test]
        fn interrupting_admission_never_lowers_density(
            eps in eps(), pc in pos(), wc in pos(), pr in pos(), wr in pos()
        ) {
            let cand = prof(pc, wc);
            let run = prof(pr, wr);
            if two_threshold_decide(&cand, Some(&run), &eps).is_admit() {
                prop_assert!(cand.density > run.density);
            }
        }
    }
}

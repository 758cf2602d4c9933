//! Experiment drivers: ratio sweeps over parameter grids and the invariant
//! suite behind `slacksched check`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{audit_admissions, check_feasibility, simulate_with, Fault, Outcome, SimOptions};
use crate::error::{Error, Result};
use crate::generators::{default_delta, gen_example1, gen_example2, gen_random, RandomSpec};
use crate::model::{clamp_epsilon, Instance};
use crate::oracle::{
    brute, edf_feasible, optimal_nonmigratory, OracleLimit, OracleResult, RatioValue, Task,
};
use crate::policy::{AdmissionPolicy, PolicySpec};
use crate::rational::Rational;

/// `768/ε + 386`: the explicit competitive bound of the two-threshold rule.
pub fn competitive_bound(eps: &Rational) -> Rational {
    Rational::from_integer(768) / eps + Rational::from_integer(386)
}

/// γ for a sweep: a constant, or a multiple of ε (`"eps"`, `"2eps"`, `"1/2eps"`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GammaSpec {
    Fixed(Rational),
    TimesEpsilon(Rational),
}

impl GammaSpec {
    pub fn at(&self, eps: &Rational) -> Rational {
        match self {
            GammaSpec::Fixed(g) => g.clone(),
            GammaSpec::TimesEpsilon(c) => c * eps,
        }
    }
}

impl FromStr for GammaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| t.parse::<Rational>().map_err(|e| Error::Parse(format!("gamma {s:?}: {e}")));
        match s.strip_suffix("eps") {
            Some("") => Ok(GammaSpec::TimesEpsilon(Rational::one())),
            Some(factor) => Ok(GammaSpec::TimesEpsilon(parse(factor.trim_end_matches('*'))?)),
            None => Ok(GammaSpec::Fixed(parse(s)?)),
        }
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSpec::Fixed(g) => write!(f, "{g}"),
            GammaSpec::TimesEpsilon(c) if c.is_integer() && *c == Rational::one() => f.write_str("eps"),
            GammaSpec::TimesEpsilon(c) => write!(f, "{c}eps"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Family {
    Example1 { n: usize },
    Example2,
    /// Seed and ε are overwritten per grid point.
    Random(RandomSpec),
}

impl Family {
    fn name(&self) -> &'static str {
        match self {
            Family::Example1 { .. } => "example1",
            Family::Example2 => "example2",
            Family::Random(_) => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSpec {
    pub family: Family,
    pub epsilons: Vec<Rational>,
    pub gamma: GammaSpec,
    /// Defaults to [`default_delta`] at each grid point.
    pub delta: Option<Rational>,
    pub policies: Vec<PolicySpec>,
    pub seeds: Vec<u64>,
    pub limit: OracleLimit,
}

/// One CSV row of a sweep. Rationals are `num/den` strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub epsilon: Rational,
    pub gamma: Rational,
    pub delta: Option<Rational>,
    pub seed: u64,
    pub n: usize,
    pub policy: String,
    pub admitted: Rational,
    pub finished: Rational,
    /// `too-large` when the instance exceeds the oracle cap.
    pub optimum: String,
    pub ratio: String,
    /// finished / admitted; empty when nothing was admitted.
    pub margin: Option<Rational>,
}

const TOO_LARGE: &str = "too-large";

fn in_unit_interval(x: &Rational) -> bool {
    x.is_positive() && *x <= Rational::one()
}

fn sweep_point(spec: &SweepSpec, eps: &Rational, seed: u64) -> Result<Vec<SweepRow>> {
    let gamma = spec.gamma.at(eps);
    let delta = match &spec.family {
        Family::Random(_) => None,
        _ => Some(spec.delta.clone().unwrap_or_else(|| default_delta(eps, &gamma))),
    };
    let inst = match (&spec.family, &delta) {
        (Family::Example1 { n }, Some(d)) => gen_example1(eps, &gamma, d, *n)?,
        (Family::Example2, Some(d)) => gen_example2(eps, &gamma, d)?,
        (Family::Random(base), _) => gen_random(&RandomSpec { seed, epsilon: eps.clone(), ..base.clone() })?,
        _ => unreachable!("examples always carry delta"),
    };
    let oracle = match optimal_nonmigratory(&inst, &spec.limit) {
        Ok(res) => Some(res),
        Err(Error::TooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut rows = Vec::with_capacity(spec.policies.len());
    for policy_spec in &spec.policies {
        let policy = policy_spec.build(eps, Some(&gamma))?;
        let out = simulate_with(&inst, &policy, &SimOptions::default())?;
        let w = &out.weights;
        let (optimum, ratio) = match &oracle {
            Some(res) => (res.optimum.to_string(), RatioValue::of(&res.optimum, &w.finished).to_string()),
            None => (TOO_LARGE.to_owned(), TOO_LARGE.to_owned()),
        };
        rows.push(SweepRow {
            family: spec.family.name().to_owned(),
            epsilon: eps.clone(),
            gamma: gamma.clone(),
            delta: delta.clone(),
            seed,
            n: inst.jobs.len(),
            policy: policy.to_string(),
            admitted: w.admitted.clone(),
            finished: w.finished.clone(),
            optimum,
            ratio,
            margin: (!w.admitted.is_zero()).then(|| &w.finished / &w.admitted),
        });
    }
    Ok(rows)
}

/// Runs every (ε, seed) grid point in parallel. Points whose γ falls outside
/// `(0, 1]` are skipped. Rows come back sorted by (ε, γ, seed, policy).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let points: Vec<(&Rational, u64)> = spec
        .epsilons
        .iter()
        .filter(|eps| in_unit_interval(&spec.gamma.at(eps)))
        .flat_map(|eps| spec.seeds.iter().map(move |&seed| (eps, seed)))
        .collect();
    let chunks: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|(eps, seed)| sweep_point(spec, eps, *seed))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (&a.epsilon, &a.gamma, a.seed, &a.policy).cmp(&(&b.epsilon, &b.gamma, b.seed, &b.policy))
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer
            .write_record([
                "family", "epsilon", "gamma", "delta", "seed", "n", "policy", "admitted", "finished",
                "optimum", "ratio", "margin",
            ])
            .expect("in-memory write");
    }
    for row in rows {
        writer.serialize(row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

/// Settings for [`run_checks`].
#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Number of random instances; zero runs the example families only.
    pub seeds: u64,
    pub first_seed: u64,
    pub max_jobs: usize,
    pub limit: OracleLimit,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { seeds: 200, first_seed: 0, max_jobs: 10, limit: OracleLimit::default(), fault: None }
    }
}

pub const INVARIANTS: [&str; 10] = [
    "instances-validate",
    "schedule-feasibility",
    "admission-fidelity",
    "half-of-admitted-finishes",
    "oracle-dominates-online",
    "oracle-witness-feasible",
    "competitive-bound",
    "byte-round-trip",
    "example1-cascade",
    "edf-matches-priority-search",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckFailure {
    pub case: String,
    pub seed: Option<u64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantResult {
    pub name: &'static str,
    pub checked: usize,
    pub failure: Option<CheckFailure>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub cases: usize,
    pub results: Vec<InvariantResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.failure.is_none())
    }

    pub fn result(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} cases", self.cases)?;
        for r in &self.results {
            match &r.failure {
                None => writeln!(f, "PASS {} ({} checks)", r.name, r.checked)?,
                Some(fail) => {
                    let seed = fail.seed.map(|s| format!(" [seed {s}]")).unwrap_or_default();
                    writeln!(f, "FAIL {}: {}{seed}: {}", r.name, fail.case, fail.detail)?
                }
            }
        }
        Ok(())
    }
}

struct Case {
    label: String,
    seed: Option<u64>,
    inst: Result<Instance>,
    gamma: Rational,
    /// Example 1 chain length, for the cascade check.
    chain: Option<usize>,
}

fn example_cases() -> Vec<Case> {
    let eps_grid = [Rational::one(), Rational::new(1, 2), Rational::new(1, 4), Rational::new(1, 8)];
    let mut cases = Vec::new();
    for eps in &eps_grid {
        for factor in [2, 4] {
            let gamma = eps * &Rational::from_integer(factor);
            if !in_unit_interval(&gamma) {
                continue;
            }
            let delta = default_delta(eps, &gamma);
            for n in 1..=8 {
                cases.push(Case {
                    label: format!("example1 eps={eps} gamma={gamma} n={n}"),
                    seed: None,
                    inst: gen_example1(eps, &gamma, &delta, n),
                    gamma: gamma.clone(),
                    chain: Some(n),
                });
            }
        }
        for factor in [1, 2, 4] {
            let gamma = eps * &Rational::from_integer(factor);
            if !in_unit_interval(&gamma) {
                continue;
            }
            cases.push(Case {
                label: format!("example2 eps={eps} gamma={gamma}"),
                seed: None,
                inst: gen_example2(eps, &gamma, &default_delta(eps, &gamma)),
                gamma,
                chain: None,
            });
        }
    }
    cases
}

/// The random instance `run_checks` uses for `seed`.
pub fn check_instance(seed: u64, max_jobs: usize) -> Result<Instance> {
    let eps = [Rational::new(1, 4), Rational::new(1, 2), Rational::one()][(seed % 3) as usize].clone();
    gen_random(&RandomSpec {
        seed,
        jobs: 1 + (seed as usize / 3) % max_jobs.max(1),
        machines: 1 + (seed as usize / 7) % 3,
        epsilon: eps,
        ..RandomSpec::default()
    })
}

type Verdicts = Vec<(usize, std::result::Result<(), String>)>;

fn slot(name: &str) -> usize {
    INVARIANTS.iter().position(|n| *n == name).expect("known invariant")
}

fn ensure(cond: bool, detail: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(detail())
    }
}

fn check_case(case: &Case, config: &CheckConfig) -> Verdicts {
    let mut v: Verdicts = Vec::new();
    let mut record = |name: &str, res| v.push((slot(name), res));
    let inst = match &case.inst {
        Ok(inst) => inst,
        Err(e) => {
            record("instances-validate", Err(e.to_string()));
            return v;
        }
    };
    let report = inst.validate();
    record("instances-validate", ensure(report.is_valid(), || report.to_string()));
    if !report.is_valid() {
        return v;
    }
    let opts = SimOptions { fault: config.fault };
    let eps = clamp_epsilon(&inst.epsilon).expect("validated");
    let policies = [
        AdmissionPolicy::two_threshold(&inst.epsilon).expect("validated"),
        AdmissionPolicy::single_threshold(case.gamma.clone()).expect("gamma in range"),
    ];
    let oracle: Option<OracleResult> = optimal_nonmigratory(inst, &config.limit).ok();

    let text = inst.to_json();
    let reparsed = Instance::from_json(&text).map(|i| i.to_json());
    record("byte-round-trip", ensure(reparsed.ok().as_deref() == Some(text.as_str()), || "instance JSON changed".into()));

    if let Some(res) = &oracle {
        let ok = res.per_machine.iter().enumerate().all(|(machine, ids)| {
            let tasks: Vec<Task> = ids
                .iter()
                .filter_map(|&id| inst.job(id))
                .filter_map(|j| Some(Task::new(j.release.clone(), j.deadline.clone(), j.size_on(machine)?.clone())))
                .collect();
            tasks.len() == ids.len() && edf_feasible(&tasks)
        });
        record("oracle-witness-feasible", ensure(ok, || "a witness machine set misses a deadline".into()));
    }

    for (k, policy) in policies.iter().enumerate() {
        let out: Outcome = match simulate_with(inst, policy, &opts) {
            Ok(out) => out,
            Err(e) => {
                record("schedule-feasibility", Err(format!("{policy}: {e}")));
                continue;
            }
        };
        let feas = check_feasibility(&out, inst);
        record("schedule-feasibility", ensure(feas.is_clean(), || format!("{policy}:\n{feas}")));
        let audit = audit_admissions(inst, &out, policy);
        record(
            "admission-fidelity",
            ensure(audit.is_empty(), || {
                let lines: Vec<String> = audit.iter().map(|a| a.to_string()).collect();
                format!("{policy}: {}", lines.join("; "))
            }),
        );
        let reparsed = Outcome::from_json(&out.to_json()).map(|o| o.to_json());
        record("byte-round-trip", ensure(reparsed.ok().as_deref() == Some(out.to_json().as_str()), || "outcome JSON changed".into()));
        let w = &out.weights;
        if k == 0 {
            let twice = &w.finished + &w.finished;
            record(
                "half-of-admitted-finishes",
                ensure(twice >= w.admitted, || format!("finished {} < half of admitted {}", w.finished, w.admitted)),
            );
        }
        if let Some(res) = &oracle {
            record(
                "oracle-dominates-online",
                ensure(res.optimum >= w.finished, || format!("{policy}: optimum {} < finished {}", res.optimum, w.finished)),
            );
            if k == 0 {
                let bound = competitive_bound(&eps);
                let ratio = RatioValue::of(&res.optimum, &w.finished);
                let ok = ratio.finite().is_some_and(|r| *r <= bound);
                record("competitive-bound", ensure(ok, || format!("ratio {ratio} exceeds {bound}")));
            }
        }
        if k == 1 {
            if let Some(n) = case.chain {
                record("example1-cascade", example1_cascade(inst, &out, n));
            }
        }
    }

    // Up to four jobs, on their first eligible machine, make a small EDF test.
    let tasks: Vec<Task> = inst
        .jobs
        .iter()
        .take(4)
        .filter_map(|j| {
            let p = j.proc.iter().find_map(|p| p.finite())?;
            Some(Task::new(j.release.clone(), j.deadline.clone(), p.clone()))
        })
        .collect();
    let edf = edf_feasible(&tasks);
    record(
        "edf-matches-priority-search",
        ensure(edf == brute::feasible_by_priorities(&tasks), || format!("EDF says {edf}")),
    );
    v
}

/// Every job interrupts its predecessor on arrival and only the last finishes.
pub fn example1_cascade(inst: &Instance, out: &Outcome, n: usize) -> std::result::Result<(), String> {
    for job in inst.jobs.iter().skip(1) {
        let Some(rec) = out.admission(job.id) else {
            return Err(format!("job {} was never admitted", job.id));
        };
        if rec.admitted_at != job.release || rec.parent != Some(job.id - 1) {
            return Err(format!("job {} did not interrupt job {} on arrival", job.id, job.id - 1));
        }
    }
    let last = n as u32;
    if out.finished.iter().copied().ne([last]) {
        return Err(format!("finished set is {:?}, expected only job {last}", out.finished));
    }
    Ok(())
}

/// Runs the invariant suite over `config.seeds` random instances and both
/// example families. Failures carry the first case that broke each invariant.
pub fn run_checks(config: &CheckConfig) -> CheckReport {
    let mut cases = example_cases();
    for seed in config.first_seed..config.first_seed.saturating_add(config.seeds) {
        cases.push(Case {
            label: format!("random seed {seed}"),
            seed: Some(seed),
            inst: check_instance(seed, config.max_jobs),
            gamma: Rational::new(1, 2),
            chain: None,
        });
    }
    let verdicts: Vec<Verdicts> = cases.par_iter().map(|c| check_case(c, config)).collect();
    let mut results: Vec<InvariantResult> =
        INVARIANTS.iter().map(|&name| InvariantResult { name, checked: 0, failure: None }).collect();
    for (case, list) in cases.iter().zip(verdicts) {
        for (k, res) in list {
            let r = &mut results[k];
            r.checked += 1;
            if let (Err(detail), None) = (res, &r.failure) {
                r.failure = Some(CheckFailure { case: case.label.clone(), seed: case.seed, detail });
            }
        }
    }
    CheckReport { cases: cases.len(), results }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn example2_sweep(policies: &[&str]) -> SweepSpec {
        SweepSpec {
            family: Family::Example2,
            epsilons: vec![rat(1, 1), rat(1, 2), rat(1, 4), rat(1, 8)],
            gamma: "eps".parse().unwrap(),
            delta: None,
            policies: policies.iter().map(|p| p.parse().unwrap()).collect(),
            seeds: vec![0],
            limit: OracleLimit::default(),
        }
    }

    #[test]
    fn gamma_grammar() {
        assert_eq!("eps".parse::<GammaSpec>().unwrap(), GammaSpec::TimesEpsilon(rat(1, 1)));
        assert_eq!("2eps".parse::<GammaSpec>().unwrap().at(&rat(1, 4)), rat(1, 2));
        assert_eq!("1/3".parse::<GammaSpec>().unwrap(), GammaSpec::Fixed(rat(1, 3)));
        assert!("xeps".parse::<GammaSpec>().is_err());
        assert_eq!("4eps".parse::<GammaSpec>().unwrap().to_string(), "4eps");
    }

    #[test]
    fn single_point_gives_one_row_per_policy() {
        let mut spec = example2_sweep(&["two-threshold", "single-threshold"]);
        spec.epsilons.truncate(1);
        assert_eq!(run_sweep(&spec).unwrap().len(), 2);
    }

    #[test]
    fn sweep_bytes_are_stable() {
        let spec = example2_sweep(&["two-threshold", "single-threshold"]);
        let a = sweep_csv(&run_sweep(&spec).unwrap());
        assert_eq!(a, sweep_csv(&run_sweep(&spec).unwrap()));
        assert!(a.starts_with("family,epsilon,gamma,delta,seed,n,policy,admitted,finished,optimum,ratio,margin\n"));
    }

    #[test]
    fn rows_are_sorted_and_gamma_filtered() {
        let mut spec = example2_sweep(&["two-threshold"]);
        spec.gamma = "2eps".parse().unwrap();
        let rows = run_sweep(&spec).unwrap();
        let eps: Vec<Rational> = rows.iter().map(|r| r.epsilon.clone()).collect();
        assert_eq!(eps, vec![rat(1, 8), rat(1, 4), rat(1, 2)]);
    }

    #[test]
    fn oversized_points_are_marked() {
        let spec = SweepSpec {
            family: Family::Random(RandomSpec { jobs: 5, ..RandomSpec::default() }),
            epsilons: vec![rat(1, 2)],
            gamma: GammaSpec::Fixed(rat(1, 2)),
            delta: None,
            policies: vec![PolicySpec::TwoThreshold],
            seeds: vec![1, 2],
            limit: OracleLimit { jobs: 4, machines: 3 },
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.ratio == TOO_LARGE && r.delta.is_none()));
    }

    #[test]
    fn default_suite_passes() {
        let report = run_checks(&CheckConfig { seeds: 60, ..CheckConfig::default() });
        assert!(report.passed(), "{report}");
        assert!(report.result("example1-cascade").unwrap().checked > 0);
    }

    #[test]
    fn examples_only_suite_runs() {
        let report = run_checks(&CheckConfig { seeds: 0, ..CheckConfig::default() });
        assert!(report.passed(), "{report}");
        assert!(report.results.iter().all(|r| r.checked > 0), "{report}");
    }

    #[test]
    fn skipped_discards_fail_feasibility() {
        let report = run_checks(&CheckConfig { seeds: 60, fault: Some(Fault::SkipDiscards), ..CheckConfig::default() });
        let feas = report.result("schedule-feasibility").unwrap();
        assert!(feas.failure.is_some(), "{report}");
        assert!(!report.passed());
    }
}

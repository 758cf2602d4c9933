use std::collections::BTreeSet;

use slacksched::generators::{default_delta, gen_example1, gen_example2};
use slacksched::harness::{run_sweep, Family, GammaSpec, SweepSpec};
use slacksched::oracle::{competitive_ratio, optimal_nonmigratory, OracleLimit, RatioValue};
use slacksched::{rat, simulate, AdmissionPolicy, PolicySpec, Rational};

#[test]
fn chain_leaves_only_the_last_job() {
    for (eps, gamma) in [(rat(1, 2), rat(1, 1)), (rat(1, 4), rat(1, 2)), (rat(1, 8), rat(1, 2))] {
        let delta = default_delta(&eps, &gamma);
        for n in 1..=6usize {
            let inst = gen_example1(&eps, &gamma, &delta, n).unwrap();
            let out = simulate(&inst, &AdmissionPolicy::single_threshold(gamma.clone()).unwrap()).unwrap();
            assert_eq!(out.finished, BTreeSet::from([n as u32]));
            // w_n = ρ_n·p_n = ((1+δ)(ε+δ)/γ)^n
            let per_step = (rat(1, 1) + &delta) * (&eps + &delta) / &gamma;
            assert_eq!(out.weights.finished, per_step.pow(n as i32));
            let optimum = optimal_nonmigratory(&inst, &OracleLimit::default()).unwrap().optimum;
            assert!(optimum >= rat(1, 1));
        }
    }
}

#[test]
fn two_threshold_keeps_the_chain_head_when_gamma_is_large() {
    // Each newcomer is about ε times shorter, inside the comparable band,
    // and lighter than the job it would replace.
    let (eps, gamma) = (rat(1, 4), rat(1, 2));
    let inst = gen_example1(&eps, &gamma, &default_delta(&eps, &gamma), 5).unwrap();
    let out = simulate(&inst, &AdmissionPolicy::two_threshold(&eps).unwrap()).unwrap();
    assert!(out.finished.contains(&0));
    assert_eq!(out.admissions.iter().filter(|a| a.parent.is_some()).count(), 0);
}

#[test]
fn heavy_short_job_is_admitted_by_the_single_threshold() {
    // ρ₂/ρ₁ = ε/(εγ − δ) exceeds 1/γ, so the threshold test passes and
    // the heavy job displaces the long one.
    let inst = gen_example2(&rat(1, 2), &rat(1, 2), &rat(1, 100)).unwrap();
    let policy = AdmissionPolicy::single_threshold(rat(1, 2)).unwrap();
    let out = simulate(&inst, &policy).unwrap();
    assert_eq!(out.admission(1).unwrap().parent, Some(0));
    assert_eq!(out.finished, BTreeSet::from([1]));
    assert_eq!(out.weights.finished, rat(25, 6));
    let report = competitive_ratio(&inst, &policy, &OracleLimit::default()).unwrap();
    assert_eq!(report.ratio, RatioValue::Finite(rat(1, 1)));
}

#[test]
fn two_threshold_rejects_the_heavy_job_of_equal_size() {
    // Equal sizes fall in the comparable band, and 25/6 < 4·2.
    let inst = gen_example2(&rat(1, 2), &rat(1, 2), &rat(1, 100)).unwrap();
    let policy = AdmissionPolicy::two_threshold(&rat(1, 2)).unwrap();
    let report = competitive_ratio(&inst, &policy, &OracleLimit::default()).unwrap();
    assert_eq!(report.finished, rat(2, 1));
    assert_eq!(report.optimum, rat(25, 6));
    assert_eq!(report.ratio, RatioValue::Finite(rat(25, 12)));
}

#[test]
fn example2_sweep_rows() {
    let spec = SweepSpec {
        family: Family::Example2,
        epsilons: vec![rat(1, 1), rat(1, 2), rat(1, 4), rat(1, 8)],
        gamma: GammaSpec::TimesEpsilon(rat(1, 1)),
        delta: None,
        policies: vec![PolicySpec::TwoThreshold, PolicySpec::SingleThreshold(None)],
        seeds: vec![0],
        limit: OracleLimit::default(),
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row.delta.as_ref(), Some(&(&row.epsilon * &row.gamma / rat(100, 1))));
        // Two-threshold rows must keep at least half of what they admit.
        if row.policy == "two-threshold" {
            assert!(row.margin.as_ref().is_none_or(|m| *m >= rat(1, 2)));
        }
    }
    let single: Vec<&str> = rows.iter().filter(|r| r.policy.starts_with("single")).map(|r| r.ratio.as_str()).collect();
    assert_eq!(single, ["1", "1", "1", "1"]);
    // For ε ≤ 1/4 the short job is more than 4 times denser and longer, so
    // the large-job rule admits it.
    let two: Vec<Rational> = rows
        .iter()
        .filter(|r| r.policy == "two-threshold")
        .map(|r| r.ratio.parse().unwrap())
        .collect();
    assert_eq!(two[0], rat(1, 1));
    assert_eq!(two[1], rat(1, 1));
}

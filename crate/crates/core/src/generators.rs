//! Instance generators: the two adversarial families and seeded random
//! instances with slack built in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Job, JobId, ProcTime};
use crate::rational::Rational;

fn unit_interval(name: &str, value: &Rational) -> Result<()> {
    if !value.is_positive() || *value > Rational::one() {
        return Err(Error::BadSpec(format!("{name} must lie in (0, 1], got {value}")));
    }
    Ok(())
}

/// `min(ε, γ, εγ) / 100`.
pub fn default_delta(eps: &Rational, gamma: &Rational) -> Rational {
    let product = eps * gamma;
    let smallest = eps.clone().min(gamma.clone()).min(product);
    smallest / Rational::from_integer(100)
}

/// A chain of `n + 1` tight jobs on one machine, each released while its
/// predecessor runs and slightly denser than `1/γ` times it.
pub fn gen_example1(eps: &Rational, gamma: &Rational, delta: &Rational, n: usize) -> Result<Instance> {
    unit_interval("epsilon", eps)?;
    unit_interval("gamma", gamma)?;
    if !delta.is_positive() || *delta >= Rational::one() {
        return Err(Error::BadSpec(format!("delta must lie in (0, 1), got {delta}")));
    }
    let one = Rational::one();
    let shrink = eps + delta;
    let boost = (&one + delta) / gamma;
    let mut release = Rational::zero();
    let mut size = Rational::one();
    let mut density = Rational::one();
    let mut jobs = Vec::with_capacity(n + 1);
    for id in 0..=n {
        if id > 0 {
            release = release + (&one - delta) * &size;
            size = &size * &shrink;
            density = &density * &boost;
        }
        jobs.push(Job {
            id: id as JobId,
            release: release.clone(),
            deadline: &release + (&one + eps) * &size,
            weight: &density * &size,
            proc: vec![ProcTime::Finite(size.clone())],
        });
    }
    Ok(Instance::new(1, eps.clone(), jobs))
}

/// Two overlapping tight jobs: a long one of density 1 and, just after it, a
/// short heavy one of weight `1/(εγ − δ)`.
pub fn gen_example2(eps: &Rational, gamma: &Rational, delta: &Rational) -> Result<Instance> {
    unit_interval("epsilon", eps)?;
    unit_interval("gamma", gamma)?;
    if !delta.is_positive() {
        return Err(Error::BadSpec(format!("delta must be positive, got {delta}")));
    }
    let gap = eps * gamma - delta;
    if !gap.is_positive() {
        return Err(Error::BadSpec(format!(
            "delta must be below epsilon*gamma = {}, got {delta}",
            eps * gamma
        )));
    }
    let one = Rational::one();
    let stretch = &one + eps;
    let long = Rational::from_integer(2);
    let short = eps.recip().expect("epsilon is positive");
    let jobs = vec![
        Job {
            id: 0,
            release: Rational::zero(),
            deadline: &stretch * &long,
            weight: long.clone(),
            proc: vec![ProcTime::Finite(long.clone())],
        },
        Job {
            id: 1,
            release: delta.clone(),
            deadline: delta + &stretch * &short,
            weight: gap.recip().expect("gap is positive"),
            proc: vec![ProcTime::Finite(short)],
        },
    ];
    Ok(Instance::new(1, eps.clone(), jobs))
}

/// Closed interval `[lo, hi]` sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub lo: Rational,
    pub hi: Rational,
}

impl Range {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        Range { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, steps: u32) -> Rational {
        if self.lo == self.hi || steps == 0 {
            return self.lo.clone();
        }
        let k = rng.random_range(0..=steps);
        let step = (&self.hi - &self.lo) / Rational::from_integer(i64::from(steps));
        &self.lo + step * Rational::from_integer(i64::from(k))
    }
}

/// Parameters of [`gen_random`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub seed: u64,
    pub jobs: usize,
    pub machines: usize,
    pub epsilon: Rational,
    pub size: Range,
    pub weight: Range,
    pub stretch: Range,
    /// Releases are drawn from `[0, horizon]`.
    pub horizon: Rational,
    /// Grid points per range; keeps denominators small.
    pub granularity: u32,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            seed: 0,
            jobs: 8,
            machines: 2,
            epsilon: Rational::new(1, 2),
            size: Range::new(Rational::one(), Rational::from_integer(4)),
            weight: Range::new(Rational::one(), Rational::from_integer(10)),
            stretch: Range::new(Rational::one(), Rational::from_integer(2)),
            horizon: Rational::from_integer(10),
            granularity: 4,
        }
    }
}

impl RandomSpec {
    fn check(&self) -> Result<()> {
        if self.machines == 0 {
            return Err(Error::BadSpec("at least one machine is required".into()));
        }
        if !self.epsilon.is_positive() {
            return Err(Error::BadSpec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (name, range) in [("size", &self.size), ("weight", &self.weight), ("stretch", &self.stretch)] {
            if range.lo > range.hi {
                return Err(Error::BadSpec(format!("{name} range is empty")));
            }
        }
        if !self.size.lo.is_positive() || !self.weight.lo.is_positive() {
            return Err(Error::BadSpec("sizes and weights must be positive".into()));
        }
        if self.stretch.lo < Rational::one() {
            return Err(Error::BadSpec("stretch must be at least 1".into()));
        }
        if self.horizon.is_negative() {
            return Err(Error::BadSpec("horizon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Seeded random instance. Every eligible machine gets at least the
/// required slack because the window is sized off the largest eligible
/// processing time.
pub fn gen_random(spec: &RandomSpec) -> Result<Instance> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let steps = spec.granularity;
    let horizon = Range::new(Rational::zero(), spec.horizon.clone());
    let one = Rational::one();
    let mut jobs = Vec::with_capacity(spec.jobs);
    for id in 0..spec.jobs {
        let mut proc: Vec<ProcTime> = (0..spec.machines)
            .map(|_| {
                let size = spec.size.sample(&mut rng, steps);
                if rng.random_bool(0.5) {
                    ProcTime::Finite(size)
                } else {
                    ProcTime::Infinite
                }
            })
            .collect();
        if proc.iter().all(|p| !p.is_finite()) {
            let forced = rng.random_range(0..spec.machines);
            proc[forced] = ProcTime::Finite(spec.size.sample(&mut rng, steps));
        }
        let longest = proc.iter().filter_map(ProcTime::finite).max().cloned().expect("one eligible machine");
        let release = horizon.sample(&mut rng, steps);
        let stretch = spec.stretch.sample(&mut rng, steps);
        let weight = spec.weight.sample(&mut rng, steps);
        jobs.push(Job {
            id: id as JobId,
            deadline: &release + (&one + &spec.epsilon) * longest * stretch,
            release,
            weight,
            proc,
        });
    }
    Ok(Instance::new(spec.machines, spec.epsilon.clone(), jobs))
}

/// Any generator, as a value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenSpec {
    Example1 { epsilon: Rational, gamma: Rational, delta: Rational, n: usize },
    Example2 { epsilon: Rational, gamma: Rational, delta: Rational },
    Random(RandomSpec),
}

impl GenSpec {
    pub fn generate(&self) -> Result<Instance> {
        match self {
            GenSpec::Example1 { epsilon, gamma, delta, n } => gen_example1(epsilon, gamma, delta, *n),
            GenSpec::Example2 { epsilon, gamma, delta } => gen_example2(epsilon, gamma, delta),
            GenSpec::Random(spec) => gen_random(spec),
        }
    }
}

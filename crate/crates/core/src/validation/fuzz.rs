//! Property fuzzing: seeded sampling from [`Domain`]s and greedy shrinking of
//! failing samples. The evaluation itself is abstracted behind
//! [`PropertyRunner`] so the search can be exercised without a worker.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::{Domain, Value};

pub type Bindings = BTreeMap<String, Value>;

/// Upper bound on property evaluations spent shrinking one counterexample.
pub const MAX_SHRINK_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Holds,
    /// The property evaluated false or raised; `observed` describes how.
    Fails { observed: String },
    ReturnType { value: String },
    Timeout,
    Died(String),
}

pub trait PropertyRunner {
    fn check(&mut self, bindings: &Bindings, deadline: Instant) -> Verdict;
}

impl<F: FnMut(&Bindings) -> Verdict> PropertyRunner for F {
    fn check(&mut self, bindings: &Bindings, _deadline: Instant) -> Verdict {
        self(bindings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub bindings: Bindings,
    pub property_text: String,
    pub observed: String,
}

impl Counterexample {
    /// `n=7, xs=[1, 2]`
    pub fn render_bindings(&self) -> String {
        render_bindings(&self.bindings)
    }
}

pub fn render_bindings(bindings: &Bindings) -> String {
    bindings
        .iter()
        .map(|(k, v)| format!("{k}={}", v.to_python()))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuzzOutcome {
    Passed { samples: u32 },
    Failed {
        counterexample: Counterexample,
        sample_index: u32,
        shrink_steps: usize,
    },
    ReturnType { value: String, bindings: Bindings },
    Timeout { last: Option<Bindings> },
    Died { message: String, bindings: Bindings },
}

/// Per-property RNG stream: the same seed gives different streams to
/// different properties, and the stream is prefix-stable in `samples`.
pub fn property_rng(seed: u64, property_text: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(property_text.as_bytes());
    let mut salt = [0u8; 8];
    salt.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(salt))
}

pub fn draw(domains: &BTreeMap<String, Domain>, rng: &mut impl Rng) -> Bindings {
    domains.iter().map(|(k, d)| (k.clone(), sample(d, rng))).collect()
}

pub fn fuzz(
    runner: &mut dyn PropertyRunner,
    property_text: &str,
    domains: &BTreeMap<String, Domain>,
    samples: u32,
    seed: u64,
    deadline: Instant,
) -> FuzzOutcome {
    let mut rng = property_rng(seed, property_text);
    let mut last = None;
    for index in 0..samples {
        if Instant::now() >= deadline {
            return FuzzOutcome::Timeout { last };
        }
        let bindings = draw(domains, &mut rng);
        match runner.check(&bindings, deadline) {
            Verdict::Holds => {}
            Verdict::Fails { observed } => {
                let (counterexample, shrink_steps) =
                    shrink(runner, property_text, domains, bindings, observed, deadline);
                return FuzzOutcome::Failed {
                    counterexample,
                    sample_index: index,
                    shrink_steps,
                };
            }
            Verdict::ReturnType { value } => return FuzzOutcome::ReturnType { value, bindings },
            Verdict::Timeout => return FuzzOutcome::Timeout { last: Some(bindings) },
            Verdict::Died(message) => return FuzzOutcome::Died { message, bindings },
        }
        last = Some(bindings);
    }
    FuzzOutcome::Passed { samples }
}

/// Greedy per-variable descent. Only candidates that still fail are kept,
/// so the result always reproduces.
pub fn shrink(
    runner: &mut dyn PropertyRunner,
    property_text: &str,
    domains: &BTreeMap<String, Domain>,
    failing: Bindings,
    observed: String,
    deadline: Instant,
) -> (Counterexample, usize) {
    let mut current = failing;
    let mut observed = observed;
    let mut steps = 0;
    'outer: loop {
        let mut improved = false;
        for (var, domain) in domains {
            loop {
                let Some(value) = current.get(var) else { break };
                let mut accepted = false;
                for candidate in shrink_candidates(domain, value) {
                    if steps >= MAX_SHRINK_STEPS || Instant::now() >= deadline {
                        break 'outer;
                    }
                    steps += 1;
                    let mut trial = current.clone();
                    trial.insert(var.clone(), candidate);
                    match runner.check(&trial, deadline) {
                        Verdict::Fails { observed: o } => {
                            current = trial;
                            observed = o;
                            accepted = true;
                            break;
                        }
                        Verdict::Holds | Verdict::ReturnType { .. } => {}
                        Verdict::Timeout | Verdict::Died(_) => break 'outer,
                    }
                }
                if !accepted {
                    break;
                }
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let cx = Counterexample {
        bindings: current,
        property_text: property_text.to_string(),
        observed,
    };
    (cx, steps)
}

pub fn sample(domain: &Domain, rng: &mut impl Rng) -> Value {
    match domain {
        Domain::IntRange { lo, hi } => {
            if rng.gen_ratio(1, 10) {
                let edges = [*lo, *hi, 0.clamp(*lo, *hi), 1.clamp(*lo, *hi), (-1).clamp(*lo, *hi)];
                Value::Int(edges[rng.gen_range(0..edges.len())])
            } else {
                Value::Int(rng.gen_range(*lo..=*hi))
            }
        }
        Domain::FloatRange { lo, hi } => {
            if rng.gen_ratio(1, 10) {
                let edges = [*lo, *hi, 0.0f64.clamp(*lo, *hi)];
                Value::Float(edges[rng.gen_range(0..edges.len())])
            } else if lo == hi {
                Value::Float(*lo)
            } else {
                Value::Float(rng.gen_range(*lo..=*hi))
            }
        }
        Domain::Bool => Value::Bool(rng.gen_bool(0.5)),
        Domain::Text { max_len } => {
            let len = rng.gen_range(0..=*max_len);
            let s = (0..len).map(|_| rng.gen_range(0x20u8..=0x7e) as char).collect();
            Value::Text(s)
        }
        Domain::ListOf {
            element,
            min_len,
            max_len,
        } => {
            let len = rng.gen_range(*min_len..=*max_len);
            Value::List((0..len).map(|_| sample(element, rng)).collect())
        }
        Domain::OneOf { values } => values[rng.gen_range(0..values.len())].clone(),
    }
}

/// Simpler neighbours of `value`, most aggressive first. Every candidate is
/// inside `domain` and strictly simpler, which guarantees termination.
pub fn shrink_candidates(domain: &Domain, value: &Value) -> Vec<Value> {
    let mut out: Vec<Value> = match (domain, value) {
        (Domain::IntRange { lo, hi }, Value::Int(v)) => {
            let target = 0.clamp(*lo, *hi);
            halving_path(*v, target).into_iter().map(Value::Int).collect()
        }
        (Domain::FloatRange { lo, hi }, Value::Float(v)) => {
            let target = 0.0f64.clamp(*lo, *hi);
            let mut c = Vec::new();
            if *v != target {
                c.push(target);
                let t = v.trunc();
                if t != *v && (*lo..=*hi).contains(&t) && (t - target).abs() < (v - target).abs() {
                    c.push(t);
                }
                let mut gap = (v - target) / 2.0;
                for _ in 0..8 {
                    let cand = v - gap;
                    if cand != *v && cand != target {
                        c.push(cand);
                    }
                    gap /= 2.0;
                }
            }
            c.into_iter().map(Value::Float).collect()
        }
        (Domain::Bool, Value::Bool(true)) => vec![Value::Bool(false)],
        (Domain::Text { .. }, Value::Text(s)) => {
            let chars: Vec<char> = s.chars().collect();
            removals(&chars, 0)
                .into_iter()
                .map(|cs| Value::Text(cs.into_iter().collect()))
                .collect()
        }
        (
            Domain::ListOf {
                element, min_len, ..
            },
            Value::List(items),
        ) => {
            let mut c: Vec<Value> = removals(items, *min_len).into_iter().map(Value::List).collect();
            for (i, item) in items.iter().enumerate() {
                for smaller in shrink_candidates(element, item) {
                    let mut next = items.clone();
                    next[i] = smaller;
                    c.push(Value::List(next));
                }
            }
            c
        }
        (Domain::OneOf { values }, v) => match values.iter().position(|x| x == v) {
            Some(i) => values[..i].to_vec(),
            None => vec![],
        },
        _ => vec![],
    };
    out.retain(|c| c != value && domain.contains(c));
    out
}

/// `target`, then points closing half of the remaining gap each time.
fn halving_path(v: i64, target: i64) -> Vec<i64> {
    let mut out = Vec::new();
    if v == target {
        return out;
    }
    out.push(target);
    let mut gap = (v as i128 - target as i128) / 2;
    while gap != 0 {
        let cand = (v as i128 - gap) as i64;
        if !out.contains(&cand) {
            out.push(cand);
        }
        gap /= 2;
    }
    out
}

/// Halves first, then single elements; never below `min_len`.
fn removals<T: Clone>(items: &[T], min_len: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let mut out = Vec::new();
    if n <= min_len {
        return out;
    }
    if n >= 2 {
        let half = n / 2;
        for (a, b) in [(0, half), (half, n)] {
            if n - (b - a) >= min_len {
                let mut v = items[..a].to_vec();
                v.extend_from_slice(&items[b..]);
                out.push(v);
            }
        }
    }
    for i in 0..n {
        let mut v = items.to_vec();
        v.remove(i);
        out.push(v);
    }
    out
}

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use pythoness_core::backends::{ScriptEntry, ScriptedBackend};
use pythoness_core::bench::{Mode, Problem};
use pythoness_core::spec::FunctionSpec;

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn response(name: &str) -> String {
    std::fs::read_to_string(repo().join("fixtures/responses").join(format!("{name}.md"))).unwrap()
}

pub fn scripted(names: &[&str]) -> Arc<ScriptedBackend> {
    let entries = names.iter().map(|n| ScriptEntry::any(response(n))).collect();
    Arc::new(ScriptedBackend::new("scripted", entries).unwrap())
}

pub fn problem(name: &str) -> Problem {
    Problem::load(&repo().join("corpus").join(name)).unwrap()
}

pub fn max_inc_spec() -> FunctionSpec {
    problem("maxIncSubarrays").spec(Mode::FullSpec).unwrap()
}

/// Brute force over every (start, k) pair.
pub fn max_inc_oracle(nums: &[i64]) -> i64 {
    let inc = |xs: &[i64]| xs.windows(2).all(|w| w[0] < w[1]);
    let mut best = 0;
    for k in 1..=nums.len() / 2 {
        for s in 0..=nums.len() - 2 * k {
            if inc(&nums[s..s + k]) && inc(&nums[s + k..s + 2 * k]) {
                best = best.max(k as i64);
            }
        }
    }
    best
}

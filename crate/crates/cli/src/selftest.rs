//! Randomized self-test: oracle agreement, construction and monotonicity,
//! and Choi/Kraus round trips.

use serde_json::{json, Value};
use statemorph_core::decide::{Decision, Verdict};
use statemorph_core::stateset::StateSet;

use crate::io::state_set_json;
use crate::suites::{self, instance_rng, Agreement, Failure, SuiteCount, Tally};

/// Construction tolerance on `‖T(ρ_i) − σ_i‖₁`.
pub const CONSTRUCTION_TOL: f64 = 1e-6;
/// Random state pairs probed per constructed channel.
pub const PROBE_PAIRS: usize = 10;
/// Allowed fidelity drop from numerical error.
pub const MONOTONICITY_TOL: f64 = 1e-7;
pub const ROUND_TRIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub seed: u64,
    pub instances: usize,
    pub suites: Vec<SuiteCount>,
    pub first_failure: Option<Failure>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failed == 0)
    }

    pub fn to_json(&self) -> Value {
        let suites: Vec<Value> = self
            .suites
            .iter()
            .map(|s| {
                json!({
                    "name": s.name,
                    "checked": s.checked,
                    "agreed": s.agreed,
                    "skipped": s.skipped,
                    "failed": s.failed,
                })
            })
            .collect();
        let failure = self.first_failure.as_ref().map(|f| {
            json!({
                "suite": f.suite,
                "index": f.index,
                "detail": f.detail,
                "sources": state_set_json(&f.sources),
                "targets": state_set_json(&f.targets),
            })
        });
        json!({
            "seed": self.seed,
            "instances": self.instances,
            "passed": self.passed(),
            "suites": suites,
            "first_failure": failure,
        })
    }
}

type Case = fn(&StateSet, &StateSet) -> Result<(Agreement, Decision), String>;

fn pure_pair(a: &StateSet, b: &StateSet) -> Result<(Agreement, Decision), String> {
    suites::pure_pair_case(a, b, 1e-9)
}

pub fn run_selftest(seed: u64, instances: usize) -> SelftestReport {
    let oracle_suites: [(&'static str, u64, fn(&mut rand_chacha::ChaCha8Rng) -> (StateSet, StateSet), Case); 3] = [
        ("pure-oracle", 1, |r| suites::pure_instance(r), suites::pure_oracle_case),
        ("pure-pair", 2, |r| suites::pure_pair_instance(r), pure_pair),
        ("qubit-pair", 3, |r| suites::qubit_instance(r), suites::qubit_case),
    ];
    let mut tallies = Vec::new();
    let mut construction = Tally::new("construction");
    for (name, stream, generate, case) in oracle_suites {
        let mut tally = Tally::new(name);
        for i in 0..instances {
            let mut rng = instance_rng(seed, stream, i as u64);
            let (a, b) = generate(&mut rng);
            let outcome = case(&a, &b);
            if let Ok((_, d)) = &outcome {
                if d.verdict == Verdict::Feasible {
                    let probes = suites::probe_pairs(a.dim(), PROBE_PAIRS, &mut rng);
                    let built = suites::construct(d, &a, &b, CONSTRUCTION_TOL, &probes).and_then(|c| {
                        if c.passed(MONOTONICITY_TOL) {
                            Ok(Agreement::Agree)
                        } else if d.is_boundary() {
                            Ok(Agreement::Skipped)
                        } else {
                            Err(format!(
                                "{name}: construction error {:.3e}, completeness {:.3e}, fidelity drop {:.3e}",
                                c.report.max_error(),
                                c.report.completeness_residual,
                                c.fidelity_drop
                            ))
                        }
                    });
                    let built = match built {
                        Err(_) if d.is_boundary() => Ok(Agreement::Skipped),
                        other => other,
                    };
                    construction.record(built, i, &a, &b);
                }
            }
            tally.record(outcome.map(|(ag, _)| ag), i, &a, &b);
        }
        tallies.push(tally);
    }
    tallies.push(construction);

    let mut round_trip = Tally::new("round-trip");
    for i in 0..instances {
        let mut rng = instance_rng(seed, 4, i as u64);
        let (a, _) = suites::pure_pair_instance(&mut rng);
        let d_out = 2 + i % 3;
        let ch = suites::random_channel(a.dim(), d_out, 1 + i % 3, &mut rng);
        let outcome = suites::round_trip_error(&ch).and_then(|e| {
            if e <= ROUND_TRIP_TOL {
                Ok(Agreement::Agree)
            } else {
                Err(format!("Choi round trip error {e:.3e}"))
            }
        });
        let b = suites::image(&ch, &a);
        round_trip.record(outcome, i, &a, &b);
    }
    tallies.push(round_trip);

    let first_failure = tallies.iter().find_map(|t| t.first_failure.clone());
    SelftestReport {
        seed,
        instances,
        suites: tallies.into_iter().map(|t| t.count).collect(),
        first_failure,
    }
}

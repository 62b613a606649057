//! Full-scale Monte Carlo coverage with the exact bootstrap: 101×101 fields,
//! 100 datasets, B = 100. Hours of CPU and about 2 GB per Cholesky factor;
//! run with `cargo test -p stou-cli --release --test full_scale -- --ignored`.

use stou_core::bootstrap::{coverage_experiment, ExperimentSetup, McSettings};
use stou_core::sim::MemoryBudget;
use stou_core::{Lattice, ParamName, StouParams};

// Reference coverages (%) at lambda = 1, 2, 4.
const REFERENCE: [(ParamName, [f64; 3]); 6] = [
    (ParamName::Lambda, [63.0, 78.0, 91.0]),
    (ParamName::C, [94.0, 96.0, 94.0]),
    (ParamName::MuSeed, [62.0, 78.0, 90.0]),
    (ParamName::Tau, [62.0, 78.0, 84.0]),
    (ParamName::Mu, [86.0, 91.0, 89.0]),
    (ParamName::Sigma2, [65.0, 78.0, 87.0]),
];

#[test]
#[ignore = "hours of runtime at full scale"]
fn exact_bootstrap_coverage_matches_reference_within_10pp() {
    let mut misses = Vec::new();
    for (k, lambda) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let setup = ExperimentSetup {
            truth: StouParams::from_natural(lambda, 1.0, 0.2, 0.01).unwrap(),
            lattice: Lattice::square(101, 0.05).unwrap(),
            n_datasets: 100,
            master_seed: 2016 + k as u64,
            budget: MemoryBudget::default(),
        };
        let settings = McSettings { replicates: 100, ..McSettings::default() };
        let exp = coverage_experiment(&setup, &settings).unwrap();
        for (p, reference) in REFERENCE {
            let got = 100.0 * exp.report.entry(p).unwrap().rate();
            println!("lambda={lambda} {}: {got:.1}% (reference {})", p.as_str(), reference[k]);
            if (got - reference[k]).abs() > 10.0 {
                misses.push(format!("lambda={lambda} {}: {got:.1} vs {}", p.as_str(), reference[k]));
            }
        }
    }
    assert!(misses.is_empty(), "outside ±10 pp: {misses:?}");
}

use tvvar::montecarlo::{run_bounds_experiment, ExperimentSpec, VarianceKind};
use tvvar::partial::BoundsMethod;

fn main() {
    for seed in [780u64, 9004, 11, 12, 13, 14] {
        let mut spec = ExperimentSpec::<f64>::new(VarianceKind::Break, 200, 500, seed);
        spec.bounds = vec![BoundsMethod::Standard];
        let t = run_bounds_experiment(&spec).unwrap();
        println!(
            "seed {seed}: PAM_S lag3..5 = {:.1} {:.1} {:.1}",
            t.get("PAM_S", 3).unwrap(),
            t.get("PAM_S", 4).unwrap(),
            t.get("PAM_S", 5).unwrap()
        );
    }
}

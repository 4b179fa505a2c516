//! A small static-vs-dynamic camera benchmark on sampled demonstrations.

use fsg::articulation::SelectionConfig;
use fsg::bench::{run_scenario, sample_scenario, BenchSummary, CameraKind, SampleRanges};
use fsg::graph::JointType;
use fsg::tracking::{SphereModel, TrackConfig};

fn main() {
    let sphere = SphereModel::standard();
    let ranges = SampleRanges::default();
    for camera in [CameraKind::Static, CameraKind::Dynamic] {
        let mut outcomes = Vec::new();
        let mut failures = 0;
        for seed in 0..10 {
            let joint = if seed % 2 == 0 { JointType::Prismatic } else { JointType::Revolute };
            let cfg = sample_scenario(seed, joint, camera, &ranges, &sphere);
            match run_scenario(&cfg, &sphere, &TrackConfig::default(), &SelectionConfig::default()) {
                Ok(o) => outcomes.push(o),
                Err(e) => {
                    eprintln!("seed {seed}: {e}");
                    failures += 1;
                }
            }
        }
        let s = BenchSummary::new(&outcomes, failures);
        println!(
            "{camera:?}: accuracy {:.0}%, median T_err {:.2} mm, θ_err {:.3}°, d_err {} mm",
            s.type_accuracy * 100.0,
            s.median_t_err * 1e3,
            s.median_theta_err,
            s.median_d_err.map_or("-".into(), |d| format!("{:.2}", d * 1e3))
        );
    }
}

//! Fitting prismatic and revolute models to tip positions and choosing one.

use fsg::articulation::{fit_prismatic, fit_revolute, select_joint};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.002).unwrap();
    let mut jitter = |p: Vector3<f64>| p + Vector3::from_fn(|_, _| noise.sample(&mut rng));

    // drawer: 35 cm straight pull
    let drawer: Vec<_> = (0..40)
        .map(|i| jitter(Vector3::new(0.2, 0.1, 0.6) + Vector3::new(-1.0, 0.2, 0.0).normalize() * 0.35 * i as f64 / 39.0))
        .collect();
    // door: 90° about a vertical hinge, 45 cm radius
    let door: Vec<_> = (0..40)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 39.0;
            jitter(Vector3::new(0.45 * a.cos(), 0.45 * a.sin(), 1.0))
        })
        .collect();

    for (name, pts) in [("drawer", &drawer), ("door", &door)] {
        let p = fit_prismatic(pts).unwrap();
        let r = fit_revolute(pts).unwrap();
        let v = select_joint(pts).unwrap();
        println!("{name}:");
        println!("  prismatic rmse {:.4} m, direction {:.3?}", p.residual_rmse, p.direction.as_slice());
        println!(
            "  revolute  rmse {:.4} m, radius {:.3} m, sweep {:.1}°, axis {:.3?}",
            r.residual_rmse,
            r.radius,
            r.sweep.to_degrees(),
            r.direction.as_slice()
        );
        println!(
            "  verdict {} (scores {:.1} vs {:.1}){}",
            v.joint_type,
            v.prismatic_score,
            v.revolute_score.unwrap_or(f64::NAN),
            if v.low_confidence { ", low confidence" } else { "" }
        );
    }
}

//! Rigid transforms, pinhole projection and rotation unwrapping.

use fsg::geometry::{backproject, look_at, project, unwrap_rotations, CameraIntrinsics, Pose};
use nalgebra::{UnitQuaternion, Vector3};

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let cam = look_at(Vector3::new(-1.0, 0.0, 1.2), Vector3::new(0.0, 0.0, 0.8), Vector3::z());
    let p = Vector3::new(0.05, 0.1, 0.85);

    let (px, z) = project(&p, &cam, &k).unwrap();
    let back = backproject(&px, z, &cam, &k).unwrap();
    println!("point {p:?} -> pixel ({:.2}, {:.2}) at depth {z:.3} m", px.x, px.y);
    println!("round-trip error {:.2e} m", (back - p).norm());

    let a = Pose::new(Vector3::new(0.1, 0.0, 0.0), UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4));
    let b = Pose::from_translation(0.0, 0.2, 0.0);
    let ab = a.compose(&b);
    println!("a∘b = {:?}", ab.to_array());
    println!("a∘a⁻¹ translation {:.2e}", a.compose(&a.inverse()).position.norm());

    // a hinge swinging past ±π: raw rotation vectors jump, unwrapped ones do not
    let quats: Vec<_> = (0..8)
        .map(|i| UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 2.6 + 0.2 * i as f64))
        .collect();
    let unwrapped = unwrap_rotations(&quats).unwrap();
    for (q, r) in quats.iter().zip(&unwrapped.0) {
        println!("raw z {:+.3}  unwrapped z {:+.3}", q.scaled_axis().z, r.z);
    }
}

//! Registering demonstrations into a graph: one lands on a visually detected
//! handle, one discovers a part the detector missed.

use fsg::articulation::select_joint;
use fsg::geometry::Pose;
use fsg::graph::{Provenance, SceneGraph};
use fsg::refine::{register_demonstration, RefineConfig};
use nalgebra::Vector3;

fn pull(start: Vector3<f64>, dir: Vector3<f64>) -> Vec<Pose> {
    (0..30)
        .map(|i| Pose::new(start + dir * (0.01 * i as f64), Default::default()))
        .collect()
}

fn main() {
    let mut g = SceneGraph::new(4);
    let cabinet = g
        .add_object_node("cabinet", vec![Vector3::new(0.0, 0.0, 0.4), Vector3::new(0.0, 0.6, 0.4)], None)
        .unwrap();
    g.add_element_node(cabinet, "handle", vec![Vector3::new(-0.03, 0.0, 0.6)], None, Provenance::Visual)
        .unwrap();

    let cfg = RefineConfig::default();
    for (name, traj) in [
        ("drawer at the handle", pull(Vector3::new(-0.04, 0.01, 0.6), -Vector3::x())),
        ("unseen drawer below", pull(Vector3::new(-0.03, 0.5, 0.2), -Vector3::x())),
        ("handle again", pull(Vector3::new(-0.04, 0.01, 0.6), -Vector3::x())),
    ] {
        let pos: Vec<_> = traj.iter().map(|p| p.position).collect();
        let verdict = select_joint(&pos).unwrap();
        let r = register_demonstration(&mut g, &traj, &verdict, &cfg).unwrap();
        println!("{name}: {:?} (nearest element {:.3} m away)", r.kind, r.distance);
    }
    for e in g.elements() {
        println!(
            "element {} '{}' provenance {:?} axis {:?}",
            e.id,
            e.label,
            e.provenance,
            e.articulation.map(|a| a.joint_type)
        );
    }
    println!("{} nodes", g.num_nodes());
}

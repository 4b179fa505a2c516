//! Lifting 2D element masks into 3D and clustering them into element nodes.

use fsg::bench::scene::cabinet_scene;
use fsg::lifting::{build_object_nodes, lift_masks, ClusterParams, ElementMask, InstanceSegment, LiftParams};
use fsg::graph::{Provenance, SceneGraph};

fn main() {
    let scene = cabinet_scene(0);
    let segments: Vec<_> = scene
        .objects
        .iter()
        .map(|o| InstanceSegment { instance_id: o.instance_id, label: o.label.clone(), points: o.points.clone() })
        .collect();
    let mut g = SceneGraph::new(8);
    let (node_of, dropped) = build_object_nodes(&mut g, &segments, &ClusterParams::OBJECT).unwrap();
    for o in g.objects() {
        println!("object {} '{}' keeps {} points after denoising", o.id, o.label, o.points.len());
    }
    println!("instances dropped as noise: {dropped:?}");

    let masks: Vec<ElementMask> = scene
        .masks
        .iter()
        .map(|m| ElementMask {
            frame_id: m.frame_id,
            object_id: m.object_id,
            label: m.label.clone(),
            mask: m.mask.clone(),
            detection_score: m.score,
        })
        .collect();
    let (lifted, report) = lift_masks(&masks, &scene.frames, &LiftParams::default());
    println!("{} masks -> {report:?}", masks.len());
    for el in lifted {
        let c = el.points.iter().sum::<nalgebra::Vector3<f64>>() / el.points.len() as f64;
        let id = g
            .add_element_node(node_of[&el.object_id], el.label.clone(), el.points, None, Provenance::Visual)
            .unwrap();
        println!(
            "element {id} '{}' at [{:.3}, {:.3}, {:.3}] from frames {:?}",
            el.label, c.x, c.y, c.z, el.frame_ids
        );
    }
    for (i, e) in scene.elements.iter().enumerate() {
        let c = e.points.iter().sum::<nalgebra::Vector3<f64>>() / e.points.len() as f64;
        println!("truth {i}: '{}' at [{:.3}, {:.3}, {:.3}]", e.label, c.x, c.y, c.z);
    }
}

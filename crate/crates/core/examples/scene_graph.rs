//! Building a small graph by hand, querying it, and the canonical JSON form.

use fsg::graph::{Provenance, SceneGraph};
use nalgebra::Vector3;

fn main() {
    let mut g = SceneGraph::new(3);
    let fridge = g
        .add_object_node("fridge", vec![Vector3::new(1.0, 0.0, 0.9)], Some(vec![1.0, 0.1, 0.0]))
        .unwrap();
    let sink = g
        .add_object_node("sink", vec![Vector3::new(-1.0, 0.5, 0.8)], Some(vec![0.0, 1.0, 0.1]))
        .unwrap();
    g.add_element_node(
        fridge,
        "door handle",
        vec![Vector3::new(0.7, 0.2, 1.1)],
        Some(vec![0.6, 0.0, 0.8]),
        Provenance::Visual,
    )
    .unwrap();
    g.add_element_node(sink, "faucet knob", vec![Vector3::new(-1.0, 0.6, 1.0)], None, Provenance::Visual)
        .unwrap();
    g.validate().unwrap();

    println!("{} nodes, {} edges", g.num_nodes(), g.edges().len());
    for hit in g.query(&[1.0, 0.0, 0.5], 3).unwrap() {
        let n = g.node(hit.id).unwrap();
        println!("{:>2} {:<8} {:<12} {:.4}", hit.id, n.kind(), n.label(), hit.score);
    }

    let bytes = g.to_json();
    let again = SceneGraph::from_json(&bytes).unwrap();
    println!("canonical JSON: {} bytes, stable: {}", bytes.len(), again.to_json() == bytes);
}

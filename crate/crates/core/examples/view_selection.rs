//! Scoring how much of each object every frame sees and picking the best views.

use fsg::bench::scene::cabinet_scene;
use fsg::views::{aggregate_features, frame_contribution, select_top_k, DEFAULT_DEPTH_TOL};

fn main() {
    let scene = cabinet_scene(0);
    for obj in &scene.objects {
        let scores: Vec<_> = scene
            .frames
            .iter()
            .map(|f| frame_contribution(obj.instance_id, &obj.clean_points, f, DEFAULT_DEPTH_TOL))
            .collect();
        let line: Vec<String> = scores.iter().map(|s| format!("{:.2}", s.score)).collect();
        let top = select_top_k(&scores, 3);
        println!("{:<8} per-frame visibility [{}] -> top 3 frames {top:?}", obj.label, line.join(" "));

        let (feats, weights): (Vec<_>, Vec<_>) = scene
            .object_embeddings
            .iter()
            .filter(|e| e.object_id == obj.instance_id && top.contains(&e.frame_id))
            .map(|e| {
                let s = scores.iter().find(|s| s.frame_id == e.frame_id).unwrap().score;
                (e.embedding.clone(), s)
            })
            .unzip();
        let f = aggregate_features(&feats, &weights).unwrap();
        let cos: f64 = f.iter().zip(&obj.feature).map(|(a, b)| a * b).sum();
        println!("         aggregated feature agrees with the true one: cos = {cos:.4}");
    }
}

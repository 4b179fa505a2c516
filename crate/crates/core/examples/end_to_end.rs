//! The whole pipeline on files: write a synthetic room dataset, build the
//! graph, track both demonstrations, refine, query and export.

use fsg::bench::scene::cabinet_scene;
use fsg::pipeline::{self, demo_output_paths, PipelineConfig};
use fsg::tracking::SphereModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let manifest = pipeline::write_scene_dataset(root, &cabinet_scene(0), &SphereModel::standard())?;
    let cfg = PipelineConfig::default();
    let graph = root.join("scene_graph.json");

    print!("{}", pipeline::cmd_init(&manifest, &cfg, &graph)?.text);
    let mut demos = Vec::new();
    for id in ["drawer", "lid"] {
        print!("{}", pipeline::cmd_track(&manifest, id, &cfg, root)?.text);
        demos.push(demo_output_paths(root, id));
    }
    print!("{}", pipeline::cmd_refine(&graph, &demos, &cfg, &graph)?.text);

    let query = root.join("handle_query.json");
    std::fs::write(&query, "[0, 0, 1, 0, 0, 0, 0, 0]")?;
    print!("{}", pipeline::cmd_query(&graph, &query, 3)?.text);
    print!("{}", pipeline::cmd_export(&graph, &root.join("export"))?.text);
    Ok(())
}

//! Generate a synthetic procedural world, sample planning instances, and
//! round-trip everything through the on-disk formats.

use procplan::pkg::build_graph;
use procplan::synth::{
    dataset_corpus, generate_world, read_dataset, read_world, sample_instances, split,
    write_dataset, write_world,
};

fn main() -> procplan::Result<()> {
    // 12 actions, 3 tasks, 16-dim embeddings; branching 1.5 means each
    // task graph is a chain with some extra edges.
    let world = generate_world(12, 3, 16, 1.5, 0.3, 7)?;
    println!(
        "world: {} actions, {} tasks, {} start contexts",
        world.n_actions(),
        world.n_tasks,
        world.n_contexts()
    );

    let dataset = sample_instances(&world, 20, 4, 9)?;
    println!("sampled {} instances of horizon 4", dataset.len());
    for inst in &dataset[..3] {
        println!(
            "  task {} plan {:?} (start context {})",
            inst.task, inst.actions, inst.start_ctx
        );
    }

    let (train, test) = split(&dataset, 0.8, 1)?;
    println!("split: {} train / {} test", train.len(), test.len());

    let graph = build_graph(&dataset_corpus(&world, &train)?, 0.5)?;
    println!("graph from training plans: {} edges", graph.edge_count());

    let dir = std::env::temp_dir().join("procplan-synth-example");
    std::fs::create_dir_all(&dir)?;
    let world_path = dir.join("world.json");
    let data_path = dir.join("train.ldjson");
    write_world(&world_path, &world)?;
    write_dataset(&data_path, &train)?;
    // Reloads are bit-exact, down to the embedding floats.
    let world2 = read_world(&world_path)?;
    assert_eq!(world2.prototypes, world.prototypes);
    assert_eq!(world2.task_chains, world.task_chains);
    assert_eq!(read_dataset(&data_path)?, train);
    println!("round-tripped through {}", dir.display());
    Ok(())
}

//! Merge a small hand-built primitive graph under each stopping rule.

use taskmap::ib::{Node, PrimitiveSummary};
use taskmap::{agglomerate, MergeGraph, StoppingRule, Vec3};

fn primitive(id: u64, x: f64, dist: [f64; 3]) -> PrimitiveSummary {
    PrimitiveSummary {
        id,
        gaussian_ids: (id * 10..id * 10 + 4).collect(),
        task_dist: dist.to_vec(),
        aabb_min: Vec3::new(x, 0.0, 0.0),
        aabb_max: Vec3::new(x + 1.2, 1.0, 1.0),
    }
}

fn main() -> taskmap::Result<()> {
    // A chain along x: two mug-like pieces, a borderline one, two plant pieces.
    // Distributions are over (mug, plant, null).
    let primitives = [
        primitive(0, 0.0, [0.80, 0.05, 0.15]),
        primitive(1, 1.0, [0.78, 0.06, 0.16]),
        primitive(2, 2.0, [0.40, 0.40, 0.20]),
        primitive(3, 3.0, [0.05, 0.82, 0.13]),
        primitive(4, 4.0, [0.04, 0.85, 0.11]),
    ];
    let graph = MergeGraph::build(&primitives);
    println!("edges {:?}, I(C;Y) = {:.4} nats", graph.edges(), graph.information());

    for stop in [
        StoppingRule::MaxCost(1e-3),
        StoppingRule::MaxCost(0.1),
        StoppingRule::RetainFraction(0.7),
        StoppingRule::Exhaustive,
    ] {
        let run = agglomerate(graph.clone(), stop);
        println!("\n{stop:?}");
        for m in &run.merges {
            println!("  merge {} <- {} cost {:.5}", m.keeper, m.absorbed, m.cost);
        }
        for c in run.clusters() {
            let dist: Vec<String> = c.task_dist.iter().map(|p| format!("{p:.3}")).collect();
            println!("  object {} primitives {:?} p(y|c) [{}]", c.id, c.primitive_ids, dist.join(", "));
        }
        println!(
            "  information kept {:.4} of {:.4}",
            run.graph.information(),
            run.initial_information
        );
    }

    // Graphs can also be assembled from explicit nodes and edges.
    let node = |mass: f64, p: f64| Node {
        prior_mass: mass,
        task_dist: vec![p, 1.0 - p],
        primitive_ids: vec![],
        gaussian_ids: vec![],
    };
    let explicit = MergeGraph::from_parts(vec![node(0.5, 0.9), node(0.3, 0.85), node(0.2, 0.1)], [(0, 1), (1, 2)])?;
    let run = agglomerate(explicit, StoppingRule::Exhaustive);
    println!("\nexplicit graph merges: {:?}", run.merges);
    Ok(())
}

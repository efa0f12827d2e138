//! Agglomerative Information Bottleneck over the primitive proximity graph.
//!
//! Nodes carry a prior mass p(x̃) and a task distribution p(y | x̃). Only nodes
//! joined by an edge may merge. The cost of merging i and j is
//!
//! ```text
//! d_ij = (p_i + p_j) * JS_pi(p(y|i), p(y|j)),   pi_i = p_i / (p_i + p_j)
//! ```
//!
//! which equals the exact loss of I(X̃; Y) caused by the merge. Edges are
//! processed greedily from a lazily invalidated min-heap.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::types::{ObjectCluster, Vec3};

/// Identical-distribution tolerance used by the pre-merge pass.
pub const IDENTICAL_TOLERANCE: f64 = 1e-9;

/// When agglomeration stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Stop once the cheapest remaining merge costs more than this many nats.
    MaxCost(f64),
    /// Stop before the cumulative information loss would exceed
    /// `(1 - fraction) * I(X; Y)`.
    RetainFraction(f64),
    /// Merge until no edges remain.
    Exhaustive,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule::MaxCost(1e-3)
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::MaxCost(d) if !(d >= 0.0) => Err(Error::InvalidParameter(
                "stop delta must be non-negative".into(),
            )),
            StoppingRule::RetainFraction(r) if !(0.0..=1.0).contains(&r) => Err(
                Error::InvalidParameter("retain fraction must lie in [0, 1]".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Clustering input: one primitive with its distribution and centroid bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSummary {
    pub id: u64,
    pub gaussian_ids: Vec<u64>,
    pub task_dist: Vec<f64>,
    pub aabb_min: Vec3,
    pub aabb_max: Vec3,
}

impl PrimitiveSummary {
    /// Strict interval overlap on all three axes.
    pub fn overlaps(&self, other: &Self) -> bool {
        (0..3).all(|k| self.aabb_min[k] < other.aabb_max[k] && other.aabb_min[k] < self.aabb_max[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub prior_mass: f64,
    pub task_dist: Vec<f64>,
    pub primitive_ids: Vec<u64>,
    pub gaussian_ids: Vec<u64>,
}

/// Proximity graph of clusters. Node ids are dense indices; a node that has
/// been absorbed by a merge becomes `None`.
#[derive(Debug, Clone)]
pub struct MergeGraph {
    nodes: Vec<Option<Node>>,
    adjacency: Vec<BTreeSet<usize>>,
}

/// Kullback–Leibler divergence in nats with 0 log 0 = 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Prior-weighted Jensen–Shannon divergence in nats.
pub fn weighted_js(p: &[f64], q: &[f64], w_p: f64, w_q: f64) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| w_p * a + w_q * b).collect();
    (w_p * kl_divergence(p, &m) + w_q * kl_divergence(q, &m)).max(0.0)
}

/// Information lost by merging two clusters.
pub fn merge_cost(a: &Node, b: &Node) -> f64 {
    merge_cost_raw(a.prior_mass, &a.task_dist, b.prior_mass, &b.task_dist)
}

pub fn merge_cost_raw(mass_a: f64, dist_a: &[f64], mass_b: f64, dist_b: &[f64]) -> f64 {
    let total = mass_a + mass_b;
    if total <= 0.0 {
        return 0.0;
    }
    total * weighted_js(dist_a, dist_b, mass_a / total, mass_b / total)
}

/// I(X̃; Y) = Σ p(x̃) KL(p(y|x̃) ‖ p(y)) over the given clusters.
pub fn mutual_information<'a>(clusters: impl IntoIterator<Item = (f64, &'a [f64])> + Clone) -> f64 {
    let mut marginal: Vec<f64> = Vec::new();
    for (mass, dist) in clusters.clone() {
        if marginal.is_empty() {
            marginal = vec![0.0; dist.len()];
        }
        for (m, d) in marginal.iter_mut().zip(dist) {
            *m += mass * d;
        }
    }
    clusters
        .into_iter()
        .map(|(mass, dist)| mass * kl_divergence(dist, &marginal))
        .sum()
}

fn merged_node(a: Node, b: Node) -> Node {
    let total = a.prior_mass + b.prior_mass;
    let (wa, wb) = (a.prior_mass / total, b.prior_mass / total);
    let task_dist = a
        .task_dist
        .iter()
        .zip(&b.task_dist)
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    let mut primitive_ids = a.primitive_ids;
    primitive_ids.extend(b.primitive_ids);
    let mut gaussian_ids = a.gaussian_ids;
    gaussian_ids.extend(b.gaussian_ids);
    Node {
        prior_mass: total,
        task_dist,
        primitive_ids,
        gaussian_ids,
    }
}

impl MergeGraph {
    /// Builds a graph from explicit nodes and undirected edges.
    pub fn from_parts(nodes: Vec<Node>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = nodes.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range")));
            }
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
        Ok(Self {
            nodes: nodes.into_iter().map(Some).collect(),
            adjacency,
        })
    }

    /// One node per primitive with uniform mass, edges between primitives
    /// whose centroid boxes overlap, then a pre-merge of connected primitives
    /// whose distributions are identical.
    pub fn build(primitives: &[PrimitiveSummary]) -> Self {
        let n = primitives.len();
        let mass = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        let nodes = primitives
            .iter()
            .map(|p| Node {
                prior_mass: mass,
                task_dist: p.task_dist.clone(),
                primitive_ids: vec![p.id],
                gaussian_ids: p.gaussian_ids.clone(),
            })
            .collect();
        let edges = overlap_edges(primitives);
        let mut graph = Self::from_parts(nodes, edges).expect("edges are in range");
        graph.premerge_identical();
        graph
    }

    fn premerge_identical(&mut self) {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for a in 0..n {
            for &b in &self.adjacency[a] {
                if b <= a {
                    continue;
                }
                let (na, nb) = (self.nodes[a].as_ref().unwrap(), self.nodes[b].as_ref().unwrap());
                let identical = na
                    .task_dist
                    .iter()
                    .zip(&nb.task_dist)
                    .all(|(x, y)| (x - y).abs() <= IDENTICAL_TOLERANCE);
                if identical {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        let (lo, hi) = (ra.min(rb), ra.max(rb));
                        parent[hi] = lo;
                    }
                }
            }
        }
        for i in 0..n {
            let root = find(&mut parent, i);
            if root != i {
                self.absorb(root, i);
            }
        }
    }

    /// Merges `absorbed` into `keeper` and rewires its edges.
    fn absorb(&mut self, keeper: usize, absorbed: usize) {
        let a = self.nodes[keeper].take().expect("live keeper");
        let b = self.nodes[absorbed].take().expect("live absorbed node");
        self.nodes[keeper] = Some(merged_node(a, b));
        let neighbours = std::mem::take(&mut self.adjacency[absorbed]);
        for k in neighbours {
            self.adjacency[k].remove(&absorbed);
            if k != keeper {
                self.adjacency[k].insert(keeper);
                self.adjacency[keeper].insert(k);
            }
        }
        self.adjacency[keeper].remove(&absorbed);
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id).and_then(Option::as_ref)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = (usize, &Node)> + Clone {
        self.nodes.iter().enumerate().filter_map(|(i, n)| n.as_ref().map(|n| (i, n)))
    }

    pub fn node_count(&self) -> usize {
        self.live_nodes().count()
    }

    /// Live edges as `(low, high)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.live_nodes().map(|(_, n)| n.prior_mass).sum()
    }

    pub fn information(&self) -> f64 {
        mutual_information(self.live_nodes().map(|(_, n)| (n.prior_mass, n.task_dist.as_slice())))
    }

    pub fn edge_cost(&self, a: usize, b: usize) -> Option<f64> {
        Some(merge_cost(self.node(a)?, self.node(b)?))
    }
}

/// Sweep along x, then the full strict-overlap test.
fn overlap_edges(primitives: &[PrimitiveSummary]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..primitives.len()).collect();
    order.sort_by(|&a, &b| {
        primitives[a].aabb_min.x.total_cmp(&primitives[b].aabb_min.x).then(a.cmp(&b))
    });
    let mut edges = Vec::new();
    for (pos, &a) in order.iter().enumerate() {
        let max_x = primitives[a].aabb_max.x;
        for &b in &order[pos + 1..] {
            if primitives[b].aabb_min.x >= max_x {
                break;
            }
            if primitives[a].overlaps(&primitives[b]) {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// One greedy merge step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    /// Surviving node (the lower id).
    pub keeper: usize,
    pub absorbed: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Agglomeration {
    pub merges: Vec<MergeRecord>,
    pub initial_information: f64,
    pub graph: MergeGraph,
}

impl Agglomeration {
    /// Surviving nodes as clusters, ordered by node id. Cluster ids are the
    /// node ids. Member lists are sorted.
    pub fn clusters(&self) -> Vec<ObjectCluster> {
        self.graph
            .live_nodes()
            .map(|(id, node)| {
                let mut primitive_ids = node.primitive_ids.clone();
                primitive_ids.sort_unstable();
                let mut gaussian_ids = node.gaussian_ids.clone();
                gaussian_ids.sort_unstable();
                ObjectCluster {
                    id: id as u64,
                    primitive_ids,
                    gaussian_ids,
                    task_dist: node.task_dist.clone(),
                    prior_mass: node.prior_mass,
                    obb: None,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    a: usize,
    b: usize,
    version_a: u32,
    version_b: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Reversed so that BinaryHeap pops the cheapest, then lowest (a, b).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedily merges the cheapest edge until the stopping rule fires or no
/// edges remain. Ties go to the lowest `(min id, max id)` pair; the merged
/// node keeps the lower id.
pub fn agglomerate(graph: MergeGraph, stop: StoppingRule) -> Agglomeration {
    agglomerate_observed(graph, stop, |_, _| {})
}

/// [`agglomerate`] with a callback invoked after every merge with the updated
/// graph.
pub fn agglomerate_observed(
    mut graph: MergeGraph,
    stop: StoppingRule,
    mut observer: impl FnMut(&MergeGraph, &MergeRecord),
) -> Agglomeration {
    let initial_information = graph.information();
    let budget = match stop {
        StoppingRule::RetainFraction(rho) => (1.0 - rho) * initial_information,
        _ => f64::INFINITY,
    };
    let mut versions = vec![0u32; graph.nodes.len()];
    let mut heap = BinaryHeap::new();
    for (a, b) in graph.edges() {
        let cost = graph.edge_cost(a, b).expect("live edge");
        heap.push(HeapEntry {
            cost,
            a,
            b,
            version_a: 0,
            version_b: 0,
        });
    }
    let mut merges = Vec::new();
    let mut lost = 0.0;
    while let Some(entry) = heap.pop() {
        let stale = graph.node(entry.a).is_none()
            || graph.node(entry.b).is_none()
            || versions[entry.a] != entry.version_a
            || versions[entry.b] != entry.version_b;
        if stale {
            continue;
        }
        let halt = match stop {
            StoppingRule::MaxCost(delta) => entry.cost > delta,
            StoppingRule::RetainFraction(_) => lost + entry.cost > budget,
            StoppingRule::Exhaustive => false,
        };
        if halt {
            break;
        }
        graph.absorb(entry.a, entry.b);
        versions[entry.a] += 1;
        let record = MergeRecord {
            keeper: entry.a,
            absorbed: entry.b,
            cost: entry.cost,
        };
        observer(&graph, &record);
        merges.push(record);
        lost += entry.cost;
        let keeper = entry.a;
        let neighbours: Vec<usize> = graph.adjacency[keeper].iter().copied().collect();
        for k in neighbours {
            let (a, b) = (keeper.min(k), keeper.max(k));
            heap.push(HeapEntry {
                cost: graph.edge_cost(a, b).expect("live edge"),
                a,
                b,
                version_a: versions[a],
                version_b: versions[b],
            });
        }
    }
    Agglomeration {
        merges,
        initial_information,
        graph,
    }
}

/// Keeps clusters whose best real-task probability exceeds `threshold`.
pub fn prune_irrelevant(clusters: Vec<ObjectCluster>, threshold: f64) -> Vec<ObjectCluster> {
    clusters
        .into_iter()
        .filter(|c| c.max_task_probability() > threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn node(mass: f64, dist: &[f64], id: u64) -> Node {
        Node {
            prior_mass: mass,
            task_dist: dist.to_vec(),
            primitive_ids: vec![id],
            gaussian_ids: vec![],
        }
    }

    fn summary(id: u64, lo: [f64; 3], hi: [f64; 3], dist: &[f64]) -> PrimitiveSummary {
        PrimitiveSummary {
            id,
            gaussian_ids: vec![id],
            task_dist: dist.to_vec(),
            aabb_min: Vec3::from(lo),
            aabb_max: Vec3::from(hi),
        }
    }

    #[test]
    fn merge_cost_examples() {
        let a = node(0.5, &[1.0, 0.0], 0);
        let b = node(0.5, &[0.0, 1.0], 1);
        assert_relative_eq!(merge_cost(&a, &b), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(merge_cost(&a, &a.clone()), 0.0);
        let half = merge_cost_raw(0.25, &[1.0, 0.0], 0.25, &[0.0, 1.0]);
        assert_relative_eq!(half, 0.5 * std::f64::consts::LN_2, epsilon = 1e-15);
        let c = node(0.3, &[0.2, 0.5, 0.3], 2);
        let d = node(0.1, &[0.6, 0.1, 0.3], 3);
        assert_eq!(merge_cost(&c, &d), merge_cost(&d, &c));
    }

    #[test]
    fn disjoint_boxes_have_no_edge() {
        let p = [
            summary(0, [0.0; 3], [1.0; 3], &[0.3, 0.7]),
            summary(1, [2.0; 3], [3.0; 3], &[0.6, 0.4]),
        ];
        assert!(MergeGraph::build(&p).edges().is_empty());
    }

    #[test]
    fn touching_faces_are_not_overlap() {
        let p = [
            summary(0, [0.0; 3], [1.0; 3], &[0.3, 0.7]),
            summary(1, [1.0, 0.0, 0.0], [2.0, 1.0, 1.0], &[0.6, 0.4]),
        ];
        assert!(MergeGraph::build(&p).edges().is_empty());
    }

    #[test]
    fn identical_connected_primitives_premerge() {
        let p = [
            summary(0, [0.0; 3], [1.0; 3], &[0.05, 0.95]),
            summary(1, [0.5; 3], [1.5; 3], &[0.05, 0.95]),
        ];
        let g = MergeGraph::build(&p);
        assert_eq!(g.node_count(), 1);
        let n = g.node(0).unwrap();
        assert_relative_eq!(n.prior_mass, 1.0);
        assert_eq!(n.primitive_ids, vec![0, 1]);
    }

    #[test]
    fn collinear_chain_edges() {
        let p = [
            summary(0, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], &[0.1, 0.9]),
            summary(1, [0.8, 0.0, 0.0], [1.8, 1.0, 1.0], &[0.5, 0.5]),
            summary(2, [1.6, 0.0, 0.0], [2.6, 1.0, 1.0], &[0.9, 0.1]),
        ];
        assert_eq!(MergeGraph::build(&p).edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn two_identical_nodes_merge_at_zero_cost() {
        let g = MergeGraph::from_parts(vec![node(0.5, &[0.3, 0.7], 0), node(0.5, &[0.3, 0.7], 1)], [(0, 1)]).unwrap();
        let result = agglomerate(g, StoppingRule::default());
        assert_eq!(result.merges.len(), 1);
        assert_eq!(result.merges[0].cost, 0.0);
        assert_eq!(result.clusters().len(), 1);
    }

    #[test]
    fn chain_splits_into_two_clusters() {
        let nodes = vec![
            node(0.25, &[1.0, 0.0], 1),
            node(0.25, &[1.0, 0.0], 2),
            node(0.25, &[0.0, 1.0], 3),
            node(0.25, &[0.0, 1.0], 4),
        ];
        let g = MergeGraph::from_parts(nodes, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let result = agglomerate(g, StoppingRule::MaxCost(0.1));
        let clusters = result.clusters();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].primitive_ids, vec![1, 2]);
        assert_eq!(clusters[1].primitive_ids, vec![3, 4]);
    }

    #[test]
    fn retain_fraction_stops_before_budget() {
        let nodes = vec![node(0.5, &[1.0, 0.0], 0), node(0.5, &[0.0, 1.0], 1)];
        let g = MergeGraph::from_parts(nodes, [(0, 1)]).unwrap();
        let kept = agglomerate(g.clone(), StoppingRule::RetainFraction(0.9));
        assert_eq!(kept.clusters().len(), 2);
        let all = agglomerate(g, StoppingRule::RetainFraction(0.0));
        assert_eq!(all.clusters().len(), 1);
    }

    #[test]
    fn information_drop_equals_cost() {
        let nodes = vec![
            node(0.2, &[0.7, 0.2, 0.1], 0),
            node(0.3, &[0.1, 0.6, 0.3], 1),
            node(0.5, &[0.3, 0.3, 0.4], 2),
        ];
        let g = MergeGraph::from_parts(nodes, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut info = g.information();
        let result = agglomerate_observed(g, StoppingRule::Exhaustive, |graph, m| {
            let after = graph.information();
            assert_relative_eq!(info - after, m.cost, epsilon = 1e-12);
            info = after;
        });
        assert_eq!(result.merges.len(), 2);
        assert_relative_eq!(result.graph.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prune_examples() {
        let c = |dist: &[f64]| ObjectCluster {
            id: 0,
            primitive_ids: vec![],
            gaussian_ids: vec![],
            task_dist: dist.to_vec(),
            prior_mass: 1.0,
            obb: None,
        };
        assert!(prune_irrelevant(vec![c(&[0.05, 0.05, 0.90])], 0.1).is_empty());
        assert_eq!(prune_irrelevant(vec![c(&[0.4, 0.1, 0.5])], 0.1).len(), 1);
        assert_eq!(prune_irrelevant(vec![c(&[1e-6, 1e-6, 1.0 - 2e-6])], 0.0).len(), 1);
    }
}

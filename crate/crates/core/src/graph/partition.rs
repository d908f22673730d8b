use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, GraphError};

/// How many replacement centers a single client may draw before giving up
/// on finding an ego-network with at least one edge.
pub const MAX_CENTER_RETRIES: usize = 32;

/// One client's data: the subgraph induced by all nodes within `hops` of
/// `center`, plus the mapping back to global node ids.
#[derive(Debug, Clone)]
pub struct EgoNetwork {
    pub center: usize,
    pub graph: Graph,
    /// `global_ids[local] = global`, ascending.
    pub global_ids: Vec<usize>,
}

/// Induced k-hop ball around `center`.
pub fn ego_network(g: &Graph, center: usize, hops: usize) -> EgoNetwork {
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let mut queue = VecDeque::new();
    dist[center] = 0;
    queue.push_back(center);
    let mut members = vec![center];
    while let Some(v) = queue.pop_front() {
        if dist[v] == hops {
            continue;
        }
        for &w in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                members.push(w);
                queue.push_back(w);
            }
        }
    }
    members.sort_unstable();
    EgoNetwork {
        center,
        graph: g.induced_subgraph(&members),
        global_ids: members,
    }
}

/// Samples `k_clients` distinct centers uniformly (seeded) and returns their
/// `hops`-hop ego-networks. Clients may share nodes.
///
/// A center whose ego-network has no edges is replaced by the next unused
/// node in the seeded order, at most [`MAX_CENTER_RETRIES`] times per client.
pub fn partition_ego_networks(
    g: &Graph,
    k_clients: usize,
    hops: usize,
    seed: u64,
) -> Result<Vec<EgoNetwork>, GraphError> {
    if k_clients == 0 || hops == 0 {
        return Err(GraphError::InvalidConfig(
            "k_clients and hops must both be at least 1".into(),
        ));
    }
    let n = g.num_nodes();
    if k_clients > n {
        return Err(GraphError::InsufficientNodes {
            requested: k_clients,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut candidates = order.into_iter();

    let mut clients = Vec::with_capacity(k_clients);
    for _ in 0..k_clients {
        let mut attempts = 0;
        let ego = loop {
            let Some(center) = candidates.next() else {
                return Err(GraphError::InsufficientNodes {
                    requested: k_clients,
                    available: clients.len(),
                });
            };
            attempts += 1;
            let ego = ego_network(g, center, hops);
            if ego.graph.num_edges() > 0 {
                break ego;
            }
            if attempts > MAX_CENTER_RETRIES {
                return Err(GraphError::EmptyClient { center, attempts });
            }
        };
        clients.push(ego);
    }
    Ok(clients)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::bare;
    use super::*;
    use crate::graph::{generate_sbm, LabelRule, SbmConfig};

    /// Hop distances by repeated edge relaxation, independent of the BFS.
    fn relaxation_distances(g: &Graph, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; g.num_nodes()];
        dist[src] = 0;
        loop {
            let mut changed = false;
            for &(u, v) in g.edges() {
                for (a, b) in [(u, v), (v, u)] {
                    if dist[a] != usize::MAX && dist[a] + 1 < dist[b] {
                        dist[b] = dist[a] + 1;
                        changed = true;
                    }
                }
            }
            if !changed {
                return dist;
            }
        }
    }

    #[test]
    fn star_center_one_hop_is_whole_star() {
        let g = bare(&[0, 1, 0, 1, 0, 1], &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)], 1);
        let ego = ego_network(&g, 0, 1);
        assert_eq!(ego.global_ids, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(ego.graph.edges(), g.edges());
        // the only possible center for a single client on a star still
        // yields a non-empty network
        let clients = partition_ego_networks(&g, 1, 1, 3).unwrap();
        assert_eq!(clients.len(), 1);
        assert!(clients[0].graph.num_edges() >= 1);
    }

    #[test]
    fn path_end_one_hop() {
        let g = bare(&[0, 1, 0, 1], &[(0, 1), (1, 2), (2, 3)], 1);
        let ego = ego_network(&g, 0, 1);
        assert_eq!(ego.global_ids, vec![0, 1]);
        assert_eq!(ego.graph.edges(), &[(0, 1)]);
    }

    #[test]
    fn too_many_clients() {
        let g = bare(&[0, 1], &[(0, 1)], 1);
        assert!(matches!(
            partition_ego_networks(&g, 3, 1, 0),
            Err(GraphError::InsufficientNodes { requested: 3, .. })
        ));
    }

    #[test]
    fn edgeless_balls_exhaust_retries() {
        let g = bare(&[0; 100], &[], 1);
        let err = partition_ego_networks(&g, 1, 2, 11).unwrap_err();
        assert!(matches!(
            err,
            GraphError::EmptyClient { attempts, .. } if attempts == MAX_CENTER_RETRIES + 1
        ));
    }

    #[test]
    fn sbm_partition_matches_independent_distances() {
        let cfg = SbmConfig {
            nodes_per_group: (50, 50),
            p_intra: 0.06,
            p_inter: 0.01,
            feature_means: (vec![0.0; 2], vec![1.0; 2]),
            feature_stds: (vec![1.0; 2], vec![1.0; 2]),
            label_rule: LabelRule::GroupWithFlip { flip: 0.1 },
            seed: 5,
        };
        let g = generate_sbm(&cfg).unwrap();
        let clients = partition_ego_networks(&g, 5, 2, 7).unwrap();
        assert_eq!(clients.len(), 5);
        let mut centers: Vec<_> = clients.iter().map(|c| c.center).collect();
        centers.sort_unstable();
        centers.dedup();
        assert_eq!(centers.len(), 5);
        for c in &clients {
            let dist = relaxation_distances(&g, c.center);
            let expected: Vec<usize> = (0..g.num_nodes()).filter(|&v| dist[v] <= 2).collect();
            assert_eq!(c.global_ids, expected);
            assert!(c.global_ids.contains(&c.center));
            // induced edges only
            for &(u, v) in c.graph.edges() {
                let (gu, gv) = (c.global_ids[u], c.global_ids[v]);
                assert!(g.neighbors(gu).contains(&gv));
            }
            let induced = g
                .edges()
                .iter()
                .filter(|(u, v)| dist[*u] <= 2 && dist[*v] <= 2)
                .count();
            assert_eq!(c.graph.num_edges(), induced);
        }
        let again = partition_ego_networks(&g, 5, 2, 7).unwrap();
        for (a, b) in clients.iter().zip(&again) {
            assert_eq!(a.global_ids, b.global_ids);
            assert_eq!(a.graph, b.graph);
        }
    }
}

use std::collections::HashMap;

use super::{FaceId, Mesh};

/// Edge-sharing neighbors of every face, each list sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceAdjacency {
    neighbors: Vec<Vec<FaceId>>,
    non_manifold_edges: usize,
}

impl FaceAdjacency {
    pub fn from_lists(neighbors: Vec<Vec<FaceId>>) -> Self {
        Self {
            neighbors,
            non_manifold_edges: 0,
        }
    }

    pub fn neighbors(&self, face: usize) -> &[FaceId] {
        &self.neighbors[face]
    }

    pub fn face_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of edges shared by more than two faces.
    pub fn non_manifold_edges(&self) -> usize {
        self.non_manifold_edges
    }

    pub fn iter(&self) -> impl Iterator<Item = &[FaceId]> {
        self.neighbors.iter().map(Vec::as_slice)
    }
}

pub fn build_adjacency(mesh: &Mesh) -> FaceAdjacency {
    let mut edges: HashMap<(u32, u32), Vec<FaceId>> = HashMap::new();
    for (f, tri) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edges
                .entry((a.min(b), a.max(b)))
                .or_default()
                .push(f as FaceId);
        }
    }

    let mut neighbors = vec![Vec::new(); mesh.face_count()];
    let mut non_manifold_edges = 0;
    for incident in edges.values() {
        if incident.len() > 2 {
            non_manifold_edges += 1;
        }
        for &a in incident {
            for &b in incident {
                if a != b {
                    neighbors[a as usize].push(b);
                }
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    if non_manifold_edges > 0 {
        log::warn!("mesh has {non_manifold_edges} non-manifold edges");
    }
    FaceAdjacency {
        neighbors,
        non_manifold_edges,
    }
}

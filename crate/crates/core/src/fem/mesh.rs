use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Boundary classification of a mesh node.
///
/// Corner nodes belong to two sides geometrically; the stored marker favours
/// `Left`/`Right` over `Top`/`Bottom`. Code that needs exact side membership
/// uses [`BoundaryTag::contains`] on coordinates instead of the marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Interior,
    Left,
    Right,
    Top,
    Bottom,
}

impl BoundaryTag {
    pub const SIDES: [BoundaryTag; 4] = [
        BoundaryTag::Left,
        BoundaryTag::Right,
        BoundaryTag::Top,
        BoundaryTag::Bottom,
    ];

    /// Whether `p` lies on this side of the unit square (exact comparison).
    pub fn contains(self, p: [f64; 2]) -> bool {
        match self {
            BoundaryTag::Interior => p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0,
            BoundaryTag::Left => p[0] == 0.0,
            BoundaryTag::Right => p[0] == 1.0,
            BoundaryTag::Bottom => p[1] == 0.0,
            BoundaryTag::Top => p[1] == 1.0,
        }
    }

    fn classify(p: [f64; 2]) -> Self {
        for tag in Self::SIDES {
            if tag.contains(p) {
                return tag;
            }
        }
        BoundaryTag::Interior
    }
}

/// Triangulation of the unit square with P1 nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    markers: Vec<BoundaryTag>,
}

impl Mesh {
    /// Builds a mesh from raw parts, checking connectivity, orientation and
    /// marker consistency.
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        markers: Vec<BoundaryTag>,
    ) -> Result<Self> {
        let mesh = Mesh {
            nodes,
            elements,
            markers,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        if self.markers.len() != self.nodes.len() {
            return Err(Error::invalid(format!(
                "{} markers for {} nodes",
                self.markers.len(),
                self.nodes.len()
            )));
        }
        for (e, tri) in self.elements.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::invalid(format!("element {e} references a missing node")));
            }
            if self.signed_area(e) <= 0.0 {
                return Err(Error::invalid(format!("element {e} has non-positive area")));
            }
        }
        for (i, (&p, &tag)) in self.nodes.iter().zip(&self.markers).enumerate() {
            let ok = match tag {
                BoundaryTag::Interior => true,
                side => side.contains(p),
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "node {i} at {p:?} is tagged {tag:?} but does not lie on that side"
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn markers(&self) -> &[BoundaryTag] {
        &self.markers
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn signed_area(&self, element: usize) -> f64 {
        let [a, b, c] = self.elements[element].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Nodes lying geometrically on `side` (corners belong to both sides).
    pub fn side_nodes(&self, side: BoundaryTag) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| side.contains(self.nodes[i]))
            .collect()
    }

    /// Element edges whose endpoints both lie on `side`.
    pub fn side_edges(&self, side: BoundaryTag) -> Vec<[usize; 2]> {
        let mut edges = Vec::new();
        for tri in &self.elements {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                if side.contains(self.nodes[i]) && side.contains(self.nodes[j]) {
                    edges.push([i, j]);
                }
            }
        }
        edges
    }

    /// SHA-256 over the node coordinates and connectivity, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.nodes.len() as u64).to_le_bytes());
        for p in &self.nodes {
            hasher.update(p[0].to_le_bytes());
            hasher.update(p[1].to_le_bytes());
        }
        hasher.update((self.elements.len() as u64).to_le_bytes());
        for tri in &self.elements {
            for &i in tri {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Mesh = serde_json::from_str(s)?;
        raw.validate()?;
        Ok(raw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Structured triangulation of `[0,1]^2` with `n` cells per side, each cell
/// split along its lower-left to upper-right diagonal.
///
/// Node `(i, j)` (column `i`, row `j`) has index `j * (n + 1) + i`.
pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 subdivisions, got {n}")));
    }
    let side = n + 1;
    let coord = |i: usize| if i == n { 1.0 } else { i as f64 / n as f64 };
    let mut nodes = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            nodes.push([coord(i), coord(j)]);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * side + i;
            let b = a + 1;
            let c = b + side;
            let d = a + side;
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    let markers = nodes.iter().map(|&p| BoundaryTag::classify(p)).collect();
    Mesh::from_parts(nodes, elements, markers)
}

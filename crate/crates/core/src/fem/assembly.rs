use super::mesh::{BoundaryTag, Mesh};
use super::sparse::CsrMatrix;
use crate::{Error, Result};

/// Dirichlet heads and Neumann fluxes on sides of the unit square.
///
/// Sides without an entry carry a homogeneous Neumann (no-flow) condition.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<(BoundaryTag, f64)>,
    /// Outward normal flux `q_N` per side.
    pub neumann_flux: Vec<(BoundaryTag, f64)>,
}

impl BoundaryConditions {
    /// Fixed heads on the left and right sides, no flow through top and bottom.
    pub fn left_right(h_left: f64, h_right: f64) -> Self {
        BoundaryConditions {
            dirichlet: vec![(BoundaryTag::Left, h_left), (BoundaryTag::Right, h_right)],
            neumann_flux: vec![(BoundaryTag::Top, 0.0), (BoundaryTag::Bottom, 0.0)],
        }
    }

    /// The same head on every side.
    pub fn all_dirichlet(h: f64) -> Self {
        BoundaryConditions {
            dirichlet: BoundaryTag::SIDES.iter().map(|&s| (s, h)).collect(),
            neumann_flux: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (tag, _) in self.dirichlet.iter().chain(&self.neumann_flux) {
            if *tag == BoundaryTag::Interior {
                return Err(Error::invalid("boundary condition on interior tag"));
            }
        }
        for (d, _) in &self.dirichlet {
            if self.neumann_flux.iter().any(|(n, _)| n == d) {
                return Err(Error::invalid(format!(
                    "side {d:?} carries both Dirichlet and Neumann conditions"
                )));
            }
        }
        if self.dirichlet.is_empty() {
            return Err(Error::SingularSystem);
        }
        Ok(())
    }

    /// Prescribed head per node; earlier Dirichlet entries win at corners.
    pub fn dirichlet_nodes(&self, mesh: &Mesh) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (i, &p) in mesh.nodes().iter().enumerate() {
            if let Some(&(_, h)) = self.dirichlet.iter().find(|(tag, _)| tag.contains(p)) {
                out.push((i, h));
            }
        }
        out
    }
}

/// Linear system after symmetric Dirichlet elimination.
///
/// Dirichlet rows and columns are replaced by identity rows with the
/// prescribed value on the right-hand side.
#[derive(Clone, Debug)]
pub struct FemSystem {
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub dirichlet: Vec<(usize, f64)>,
}

/// Precomputed element geometry and CSR slot map for repeated assembly on a
/// fixed mesh.
#[derive(Clone, Debug)]
pub struct StiffnessAssembler {
    pattern: CsrMatrix,
    elements: Vec<[usize; 3]>,
    areas: Vec<f64>,
    // area * grad(phi_a) . grad(phi_b), row-major 3x3 per element
    grad_products: Vec<[f64; 9]>,
    slots: Vec<[usize; 9]>,
}

impl StiffnessAssembler {
    pub fn new(mesh: &Mesh) -> Self {
        let mut pairs = Vec::with_capacity(9 * mesh.element_count());
        for tri in mesh.elements() {
            for &a in tri {
                for &b in tri {
                    pairs.push((a, b));
                }
            }
        }
        let pattern = CsrMatrix::from_pattern(mesh.node_count(), pairs);
        let mut areas = Vec::with_capacity(mesh.element_count());
        let mut grad_products = Vec::with_capacity(mesh.element_count());
        let mut slots = Vec::with_capacity(mesh.element_count());
        for (e, tri) in mesh.elements().iter().enumerate() {
            let area = mesh.signed_area(e);
            let grads = shape_gradients(tri.map(|i| mesh.nodes()[i]), area);
            let mut g = [0.0; 9];
            let mut s = [0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    g[3 * a + b] = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                    s[3 * a + b] = pattern
                        .slot(tri[a], tri[b])
                        .expect("pattern built from the same elements");
                }
            }
            areas.push(area);
            grad_products.push(g);
            slots.push(s);
        }
        StiffnessAssembler {
            pattern,
            elements: mesh.elements().to_vec(),
            areas,
            grad_products,
            slots,
        }
    }

    pub fn node_count(&self) -> usize {
        self.pattern.dim()
    }

    /// Stiffness matrix before boundary conditions are applied.
    pub fn stiffness(&self, transmissivity: &[f64]) -> Result<CsrMatrix> {
        check_transmissivity(transmissivity, self.node_count())?;
        let mut a = self.pattern.clone();
        let values = a.values_mut();
        for ((tri, g), s) in self.elements.iter().zip(&self.grad_products).zip(&self.slots) {
            let t_mean = element_mean_transmissivity(tri, transmissivity);
            for k in 0..9 {
                values[s[k]] += t_mean * g[k];
            }
        }
        Ok(a)
    }

    /// `int phi_i g dx` for a piecewise-linear source given by nodal values.
    pub fn source_load(&self, source: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.node_count()];
        for (tri, &area) in self.elements.iter().zip(&self.areas) {
            let gs = tri.map(|i| source[i]);
            let sum = gs[0] + gs[1] + gs[2];
            for a in 0..3 {
                // P1 mass matrix: area/12 * [2 1 1; 1 2 1; 1 1 2]
                b[tri[a]] += area / 12.0 * (sum + gs[a]);
            }
        }
        b
    }
}

/// Average of `T` over a triangle by the three-point edge-midpoint rule,
/// which is exact for the piecewise-linear interpolant.
fn element_mean_transmissivity(tri: &[usize; 3], t: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..3 {
        acc += 0.5 * (t[tri[k]] + t[tri[(k + 1) % 3]]);
    }
    acc / 3.0
}

fn shape_gradients(p: [[f64; 2]; 3], area: f64) -> [[f64; 2]; 3] {
    let inv = 1.0 / (2.0 * area);
    [
        [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
        [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
        [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
    ]
}

fn check_transmissivity(t: &[f64], n: usize) -> Result<()> {
    if t.len() != n {
        return Err(Error::invalid(format!(
            "transmissivity has length {}, mesh has {n} nodes",
            t.len()
        )));
    }
    if let Some((node, &value)) = t.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::InvalidTransmissivity { node, value });
    }
    Ok(())
}

/// Neumann contribution `-int_{Gamma_N} phi_i q_N ds` for constant flux per side.
pub(crate) fn neumann_load(mesh: &Mesh, bc: &BoundaryConditions) -> Vec<f64> {
    let mut b = vec![0.0; mesh.node_count()];
    for &(side, q) in &bc.neumann_flux {
        if q == 0.0 {
            continue;
        }
        for [i, j] in mesh.side_edges(side) {
            let (pi, pj) = (mesh.nodes()[i], mesh.nodes()[j]);
            let len = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2)).sqrt();
            b[i] -= 0.5 * q * len;
            b[j] -= 0.5 * q * len;
        }
    }
    b
}

/// Replaces Dirichlet rows/columns by identity and moves the known values to
/// the right-hand side, keeping the matrix symmetric.
pub(crate) fn eliminate_dirichlet(a: &mut CsrMatrix, b: &mut [f64], dirichlet: &[(usize, f64)]) {
    let n = a.dim();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(i, h) in dirichlet {
        fixed[i] = Some(h);
    }
    for i in 0..n {
        let range = a.row_range(i);
        match fixed[i] {
            Some(h) => {
                for k in range {
                    let j = a.col_at(k);
                    a.values_mut()[k] = if i == j { 1.0 } else { 0.0 };
                }
                b[i] = h;
            }
            None => {
                for k in range {
                    if let Some(h) = fixed[a.col_at(k)] {
                        b[i] -= a.values()[k] * h;
                        a.values_mut()[k] = 0.0;
                    }
                }
            }
        }
    }
}

/// Assembles `A h = b` for nodal transmissivity `t`, nodal source `g` and the
/// given boundary conditions, with Dirichlet nodes eliminated symmetrically.
pub fn assemble(
    mesh: &Mesh,
    transmissivity: &[f64],
    bc: &BoundaryConditions,
    source: &[f64],
) -> Result<FemSystem> {
    bc.validate()?;
    if source.len() != mesh.node_count() {
        return Err(Error::invalid("source length does not match node count"));
    }
    let assembler = StiffnessAssembler::new(mesh);
    let mut stiffness = assembler.stiffness(transmissivity)?;
    let mut load = assembler.source_load(source);
    for (bi, ni) in load.iter_mut().zip(neumann_load(mesh, bc)) {
        *bi += ni;
    }
    let dirichlet = bc.dirichlet_nodes(mesh);
    if dirichlet.is_empty() {
        return Err(Error::SingularSystem);
    }
    eliminate_dirichlet(&mut stiffness, &mut load, &dirichlet);
    Ok(FemSystem {
        stiffness,
        load,
        dirichlet,
    })
}

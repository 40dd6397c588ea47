//! P1 finite elements for steady confined groundwater flow
//! `-div(T grad h) = g` on the unit square.

mod assembly;
mod mesh;
pub mod sparse;

use std::io::Write;
use std::path::Path;

pub use assembly::{assemble, BoundaryConditions, FemSystem, StiffnessAssembler};
pub use mesh::{build_unit_square_mesh, BoundaryTag, Mesh};

use crate::{Error, Result};

/// Relative residual target for the head solve.
pub const SOLVER_TOLERANCE: f64 = 1e-10;
/// CG iteration budget as a multiple of the system size.
pub const SOLVER_ITERATION_FACTOR: usize = 10;

/// Nodal hydraulic head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadField {
    pub values: Vec<f64>,
}

impl HeadField {
    /// One value per line, node order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let values = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad head value {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HeadField { values })
    }
}

/// Solves an assembled system with Jacobi-preconditioned CG.
pub fn solve_head(system: &FemSystem) -> Result<HeadField> {
    if system.dirichlet.is_empty() {
        return Err(Error::SingularSystem);
    }
    let n = system.stiffness.dim();
    let mut x0 = vec![0.0; n];
    for &(i, h) in &system.dirichlet {
        x0[i] = h;
    }
    let sol = sparse::pcg(
        &system.stiffness,
        &system.load,
        x0,
        SOLVER_TOLERANCE,
        SOLVER_ITERATION_FACTOR * n,
    )?;
    let mut values = sol.x;
    // identity rows keep these untouched during CG; restate them regardless
    for &(i, h) in &system.dirichlet {
        values[i] = h;
    }
    Ok(HeadField { values })
}

/// Precomputed P1 interpolation weights at a fixed set of points.
#[derive(Clone, Debug)]
pub struct ObservationOperator {
    weights: Vec<[(usize, f64); 3]>,
}

impl ObservationOperator {
    /// Locates each point in the first element (in mesh order) whose
    /// barycentric coordinates are all non-negative up to round-off.
    pub fn new(mesh: &Mesh, points: &[[f64; 2]]) -> Result<Self> {
        const EPS: f64 = 1e-12;
        let mut weights = Vec::with_capacity(points.len());
        for &p in points {
            if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
                return Err(Error::OutOfDomain { x: p[0], y: p[1] });
            }
            let found = mesh.elements().iter().enumerate().find_map(|(e, tri)| {
                let lam = barycentric(mesh, e, p);
                (lam.iter().all(|&l| l >= -EPS)).then(|| {
                    [(tri[0], lam[0]), (tri[1], lam[1]), (tri[2], lam[2])]
                })
            });
            weights.push(found.ok_or(Error::OutOfDomain { x: p[0], y: p[1] })?);
        }
        Ok(ObservationOperator { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn apply(&self, nodal: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(i, l)| l * nodal[i]).sum())
            .collect()
    }
}

fn barycentric(mesh: &Mesh, element: usize, p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = mesh.elements()[element].map(|i| mesh.nodes()[i]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    // exact at vertices so nodal observations reproduce nodal values bit-for-bit
    let snap = |l: f64| if l.abs() < 1e-14 { 0.0 } else if (l - 1.0).abs() < 1e-14 { 1.0 } else { l };
    let (l1, l2) = (snap(l1), snap(l2));
    [snap(1.0 - l1 - l2), l1, l2]
}

/// Evaluates the P1 interpolant of `head` at each point.
pub fn observe(head: &HeadField, mesh: &Mesh, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    Ok(ObservationOperator::new(mesh, points)?.apply(&head.values))
}

/// Regular `count x count` grid with the given spacing, first point at
/// `(origin, origin)`, ordered with `x1` varying fastest.
pub fn observation_grid(count: usize, origin: f64, spacing: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(count * count);
    for j in 0..count {
        for i in 0..count {
            pts.push([origin + spacing * i as f64, origin + spacing * j as f64]);
        }
    }
    pts
}

/// Reusable head solver for a fixed mesh, boundary conditions and source.
#[derive(Clone, Debug)]
pub struct DarcySolver {
    mesh: Mesh,
    assembler: StiffnessAssembler,
    base_load: Vec<f64>,
    dirichlet: Vec<(usize, f64)>,
}

impl DarcySolver {
    pub fn new(mesh: Mesh, bc: &BoundaryConditions, source: &[f64]) -> Result<Self> {
        bc.validate()?;
        if source.len() != mesh.node_count() {
            return Err(Error::invalid("source length does not match node count"));
        }
        let assembler = StiffnessAssembler::new(&mesh);
        let mut base_load = assembler.source_load(source);
        for (b, n) in base_load.iter_mut().zip(assembly::neumann_load(&mesh, bc)) {
            *b += n;
        }
        let dirichlet = bc.dirichlet_nodes(&mesh);
        if dirichlet.is_empty() {
            return Err(Error::SingularSystem);
        }
        Ok(DarcySolver {
            mesh,
            assembler,
            base_load,
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn system(&self, transmissivity: &[f64]) -> Result<FemSystem> {
        let mut stiffness = self.assembler.stiffness(transmissivity)?;
        let mut load = self.base_load.clone();
        assembly::eliminate_dirichlet(&mut stiffness, &mut load, &self.dirichlet);
        Ok(FemSystem {
            stiffness,
            load,
            dirichlet: self.dirichlet.clone(),
        })
    }

    pub fn solve(&self, transmissivity: &[f64]) -> Result<HeadField> {
        solve_head(&self.system(transmissivity)?)
    }
}

//! Linear-triangle FEM assembly, conducting/nonconducting DoF partitioning,
//! and block extraction.
//!
//! The reduced system keeps only free (non-Dirichlet) nodes, numbered in
//! ascending node order. [`DofPartition`] then splits the free DoFs into the
//! conducting set `c` (nodes touching at least one conductor element) and the
//! nonconducting set `n`, giving
//!
//! ```text
//! [ M_cc 0 ] d/dt [a_c]   [ K_cc(a_c) K_cn ] [a_c]   [  0   ]
//! [ 0    0 ]      [a_n] + [ K_cnᵀ     K_nn ] [a_n] = [ j_sn ]
//! ```

use serde::{Deserialize, Serialize};

use crate::linalg::CsrMatrix;
use crate::materials::MaterialTable;
use crate::mesh::{Mesh2D, RegionKind};
use crate::{Error, Result};

/// Gradient coefficients of the three linear shape functions and the area.
///
/// `∇φ_i = (b_i, c_i) / (2 area)`.
pub fn shape_gradients(p: &[[f64; 2]; 3]) -> Result<([f64; 3], [f64; 3], f64)> {
    let area = crate::mesh::signed_area(p);
    if !(area > 0.0) {
        return Err(Error::MeshInvariant(format!("degenerate or clockwise triangle {p:?}")));
    }
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    Ok((b, c, area))
}

/// Stiffness of a unit-reluctivity element, `(b_i b_j + c_i c_j) / (4 area)`.
pub fn geometric_stiffness(p: &[[f64; 2]; 3]) -> Result<[[f64; 3]; 3]> {
    let (b, c, area) = shape_gradients(p)?;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    Ok(k)
}

pub fn element_stiffness(p: &[[f64; 2]; 3], nu: f64) -> Result<[[f64; 3]; 3]> {
    let mut k = geometric_stiffness(p)?;
    k.iter_mut().flatten().for_each(|v| *v *= nu);
    Ok(k)
}

/// Consistent mass `kappa * area / 12 * [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass(p: &[[f64; 2]; 3], kappa: f64) -> Result<[[f64; 3]; 3]> {
    let (_, _, area) = shape_gradients(p)?;
    if !(kappa >= 0.0) {
        return Err(Error::Material(format!("conductivity must be nonnegative, got {kappa}")));
    }
    let s = kappa * area / 12.0;
    let mut m = [[s; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 2.0 * s;
    }
    Ok(m)
}

/// Squared flux density `|B|² = |∇A_z|²` per element from nodal values.
///
/// `a` is the full nodal vector with Dirichlet zeros included.
pub fn compute_b2(mesh: &Mesh2D, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "compute_b2 nodal vector",
            expected: mesh.num_nodes(),
            found: a.len(),
        });
    }
    (0..mesh.num_elements())
        .map(|e| element_b2(mesh, e, |node| a[node]))
        .collect()
}

fn element_b2(mesh: &Mesh2D, e: usize, value: impl Fn(usize) -> f64) -> Result<f64> {
    let (b, c, area) = shape_gradients(&mesh.element_coords(e))?;
    let tri = mesh.elements()[e];
    let mut gx = 0.0;
    let mut gy = 0.0;
    for k in 0..3 {
        let v = value(tri[k]);
        gx += b[k] * v;
        gy += c[k] * v;
    }
    let s = 1.0 / (2.0 * area);
    // B = (∂A/∂y, -∂A/∂x)
    Ok((gx * s).powi(2) + (gy * s).powi(2))
}

/// Numbering of free (non-Dirichlet) nodes in ascending node order.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeDofs {
    free_of_node: Vec<Option<usize>>,
    node_of_free: Vec<usize>,
}

impl FreeDofs {
    pub fn new(mesh: &Mesh2D) -> Self {
        let mut free_of_node = vec![None; mesh.num_nodes()];
        let mut node_of_free = Vec::new();
        for (node, slot) in free_of_node.iter_mut().enumerate() {
            if !mesh.is_boundary(node) {
                *slot = Some(node_of_free.len());
                node_of_free.push(node);
            }
        }
        Self {
            free_of_node,
            node_of_free,
        }
    }

    pub fn len(&self) -> usize {
        self.node_of_free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of_free.is_empty()
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_of_node[node]
    }

    pub fn node(&self, free: usize) -> usize {
        self.node_of_free[free]
    }

    /// Full nodal vector from a free-DoF vector, zeros on Dirichlet nodes.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.free_of_node.len()];
        for (f, &node) in self.node_of_free.iter().enumerate() {
            full[node] = x[f];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.node_of_free.iter().map(|&n| full[n]).collect()
    }
}

/// Assembles `(M, K)` on the free DoFs.
///
/// `K` uses the reluctivity at each element's `B²` from the full nodal vector
/// `a`, or `B² = 0` everywhere when `a` is `None`.
pub fn assemble(mesh: &Mesh2D, materials: &MaterialTable, a: Option<&[f64]>) -> Result<(CsrMatrix, CsrMatrix)> {
    let b2 = match a {
        Some(a) => compute_b2(mesh, a)?,
        None => vec![0.0; mesh.num_elements()],
    };
    let dofs = FreeDofs::new(mesh);
    assemble_mapped(mesh, materials, &b2, dofs.len(), |node| dofs.free_index(node))
}

/// Assembly without Dirichlet elimination: one row per mesh node.
pub fn assemble_unreduced(mesh: &Mesh2D, materials: &MaterialTable, b2: &[f64]) -> Result<(CsrMatrix, CsrMatrix)> {
    assemble_mapped(mesh, materials, b2, mesh.num_nodes(), Some)
}

fn assemble_mapped<F>(
    mesh: &Mesh2D,
    materials: &MaterialTable,
    b2: &[f64],
    n: usize,
    map: F,
) -> Result<(CsrMatrix, CsrMatrix)>
where
    F: Fn(usize) -> Option<usize>,
{
    if b2.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch {
            context: "per-element B^2",
            expected: mesh.num_elements(),
            found: b2.len(),
        });
    }
    let mut m_trip = Vec::new();
    let mut k_trip = Vec::with_capacity(9 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let mat = materials.lookup(&mesh.regions()[e])?;
        let coords = mesh.element_coords(e);
        let ke = element_stiffness(&coords, mat.nu(b2[e])?)?;
        let me = if mat.conductivity > 0.0 {
            Some(element_mass(&coords, mat.conductivity)?)
        } else {
            None
        };
        let dofs = mesh.elements()[e].map(&map);
        for (a, ra) in dofs.iter().enumerate() {
            let Some(i) = *ra else { continue };
            for (b, rb) in dofs.iter().enumerate() {
                let Some(j) = *rb else { continue };
                k_trip.push((i, j, ke[a][b]));
                if let Some(me) = &me {
                    m_trip.push((i, j, me[a][b]));
                }
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n, n, &m_trip)?,
        CsrMatrix::from_triplets(n, n, &k_trip)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Conducting,
    Nonconducting,
}

/// Split of the free DoFs into conducting and nonconducting sets.
///
/// Both sets keep ascending free-DoF order. `perm` lists the conducting
/// DoFs first.
#[derive(Debug, Clone, PartialEq)]
pub struct DofPartition {
    pub free: FreeDofs,
    pub perm: Vec<usize>,
    pub n_c: usize,
    pub n_n: usize,
    /// Block and position within the block of each free DoF.
    location: Vec<(Block, usize)>,
}

pub fn partition(mesh: &Mesh2D) -> DofPartition {
    let free = FreeDofs::new(mesh);
    let mut touches_conductor = vec![false; mesh.num_nodes()];
    for (tri, tag) in mesh.elements().iter().zip(mesh.regions()) {
        if tag.is_conductor() {
            for &node in tri {
                touches_conductor[node] = true;
            }
        }
    }
    let mut conducting = Vec::new();
    let mut nonconducting = Vec::new();
    let mut location = Vec::with_capacity(free.len());
    for f in 0..free.len() {
        if touches_conductor[free.node(f)] {
            location.push((Block::Conducting, conducting.len()));
            conducting.push(f);
        } else {
            location.push((Block::Nonconducting, nonconducting.len()));
            nonconducting.push(f);
        }
    }
    let n_c = conducting.len();
    let n_n = nonconducting.len();
    conducting.extend(nonconducting);
    DofPartition {
        free,
        perm: conducting,
        n_c,
        n_n,
        location,
    }
}

impl DofPartition {
    pub fn location(&self, free: usize) -> (Block, usize) {
        self.location[free]
    }

    /// Block location of a mesh node, `None` for Dirichlet nodes.
    pub fn node_location(&self, node: usize) -> Option<(Block, usize)> {
        self.free.free_index(node).map(|f| self.location[f])
    }

    pub fn conducting(&self) -> &[usize] {
        &self.perm[..self.n_c]
    }

    pub fn nonconducting(&self) -> &[usize] {
        &self.perm[self.n_c..]
    }

    /// Full nodal vector from block vectors.
    pub fn expand(&self, a_c: &[f64], a_n: &[f64]) -> Vec<f64> {
        let mut free = vec![0.0; self.free.len()];
        for (k, &f) in self.conducting().iter().enumerate() {
            free[f] = a_c[k];
        }
        for (k, &f) in self.nonconducting().iter().enumerate() {
            free[f] = a_n[k];
        }
        self.free.expand(&free)
    }

    /// Splits a free-DoF vector into `(a_c, a_n)`.
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.conducting().iter().map(|&f| x[f]).collect(),
            self.nonconducting().iter().map(|&f| x[f]).collect(),
        )
    }
}

/// Blocks of the partitioned system. `K_nc = K_cnᵀ` is not stored.
#[derive(Debug, Clone)]
pub struct SystemBlocks {
    pub m_cc: CsrMatrix,
    pub k_cc: CsrMatrix,
    pub k_cn: CsrMatrix,
    pub k_nn: CsrMatrix,
    /// `B²` per element at which `K` was assembled.
    pub element_b2: Vec<f64>,
}

/// Slices free-DoF matrices `M`, `K` into the blocks of the partitioned system.
pub fn extract_blocks(m: &CsrMatrix, k: &CsrMatrix, p: &DofPartition, element_b2: Vec<f64>) -> Result<SystemBlocks> {
    let n = p.free.len();
    for mat in [m, k] {
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "extract_blocks matrix size",
                expected: n,
                found: mat.nrows(),
            });
        }
    }
    let mut m_cc = Vec::new();
    for i in 0..n {
        let (bi, li) = p.location(i);
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (bj, lj) = p.location(j);
            match (bi, bj) {
                (Block::Conducting, Block::Conducting) => m_cc.push((li, lj, v)),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "mass matrix has an entry at nonconducting DoF pair ({i}, {j})"
                    )))
                }
            }
        }
    }
    let (mut k_cc, mut k_cn, mut k_nn) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let (bi, li) = p.location(i);
        let (cols, vals) = k.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (bj, lj) = p.location(j);
            match (bi, bj) {
                (Block::Conducting, Block::Conducting) => k_cc.push((li, lj, v)),
                (Block::Conducting, Block::Nonconducting) => k_cn.push((li, lj, v)),
                (Block::Nonconducting, Block::Nonconducting) => k_nn.push((li, lj, v)),
                // K_nc is the transpose of K_cn
                (Block::Nonconducting, Block::Conducting) => {}
            }
        }
    }
    Ok(SystemBlocks {
        m_cc: CsrMatrix::from_triplets(p.n_c, p.n_c, &m_cc)?,
        k_cc: CsrMatrix::from_triplets(p.n_c, p.n_c, &k_cc)?,
        k_cn: CsrMatrix::from_triplets(p.n_c, p.n_n, &k_cn)?,
        k_nn: CsrMatrix::from_triplets(p.n_n, p.n_n, &k_nn)?,
        element_b2,
    })
}

/// Assembles the full system at the nodal state `a` and extracts its blocks.
pub fn assemble_blocks(mesh: &Mesh2D, materials: &MaterialTable, p: &DofPartition, a: Option<&[f64]>) -> Result<SystemBlocks> {
    let b2 = match a {
        Some(a) => compute_b2(mesh, a)?,
        None => vec![0.0; mesh.num_elements()],
    };
    let (m, k) = assemble_mapped(mesh, materials, &b2, p.free.len(), |node| p.free.free_index(node))?;
    extract_blocks(&m, &k, p, b2)
}

/// Rebuilds `K_cc(a_c)` alone.
///
/// Only elements touching a conducting DoF contribute; their unit-reluctivity
/// matrices and target slots are cached. Contributions are summed in element
/// order, so the result is bitwise identical to slicing a full assembly.
#[derive(Debug, Clone)]
pub struct KccAssembler {
    n_c: usize,
    elements: Vec<KccElement>,
    pattern: CsrMatrix,
}

#[derive(Debug, Clone)]
struct KccElement {
    element: usize,
    geometry: [[f64; 3]; 3],
    area: f64,
    grad_b: [f64; 3],
    grad_c: [f64; 3],
    /// Position in `a_c` of each corner (None for n or Dirichlet nodes).
    local: [Option<usize>; 3],
    /// Value slot in the pattern for each local pair.
    slots: [[Option<usize>; 3]; 3],
}

impl KccAssembler {
    pub fn new(mesh: &Mesh2D, p: &DofPartition) -> Result<Self> {
        let mut elements = Vec::new();
        let mut trip = Vec::new();
        for e in 0..mesh.num_elements() {
            let local = mesh.elements()[e].map(|node| match p.node_location(node) {
                Some((Block::Conducting, k)) => Some(k),
                _ => None,
            });
            if local.iter().all(Option::is_none) {
                continue;
            }
            let coords = mesh.element_coords(e);
            let (grad_b, grad_c, area) = shape_gradients(&coords)?;
            for a in local.iter().flatten() {
                for b in local.iter().flatten() {
                    trip.push((*a, *b, 1.0));
                }
            }
            elements.push(KccElement {
                element: e,
                geometry: geometric_stiffness(&coords)?,
                area,
                grad_b,
                grad_c,
                local,
                slots: [[None; 3]; 3],
            });
        }
        let pattern = CsrMatrix::from_triplets(p.n_c, p.n_c, &trip)?;
        for el in &mut elements {
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (el.local[a], el.local[b]) {
                        let (cols, _) = pattern.row(i);
                        let k = cols.binary_search(&j).expect("pattern covers element pairs");
                        el.slots[a][b] = Some(pattern.row_offsets()[i] + k);
                    }
                }
            }
        }
        Ok(Self {
            n_c: p.n_c,
            elements,
            pattern,
        })
    }

    /// `K_cc` at the conducting state `a_c`, and `B²` of every element that
    /// touches a conducting DoF (other entries of the returned vector are 0).
    ///
    /// Conductor elements have all free corners in the conducting set, so
    /// `a_c` determines their `B²` completely. Other contributing elements are
    /// linear and their reluctivity does not depend on the state.
    pub fn assemble(&self, mesh: &Mesh2D, materials: &MaterialTable, a_c: &[f64]) -> Result<(CsrMatrix, Vec<f64>)> {
        if a_c.len() != self.n_c {
            return Err(Error::DimensionMismatch {
                context: "KccAssembler state",
                expected: self.n_c,
                found: a_c.len(),
            });
        }
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut b2_all = vec![0.0; mesh.num_elements()];
        for el in &self.elements {
            let tag = &mesh.regions()[el.element];
            let mat = materials.lookup(tag)?;
            let b2 = if matches!(tag.kind, RegionKind::Conductor(_)) {
                let (mut gx, mut gy) = (0.0, 0.0);
                for k in 0..3 {
                    let v = el.local[k].map_or(0.0, |i| a_c[i]);
                    gx += el.grad_b[k] * v;
                    gy += el.grad_c[k] * v;
                }
                let s = 1.0 / (2.0 * el.area);
                (gx * s).powi(2) + (gy * s).powi(2)
            } else {
                0.0
            };
            b2_all[el.element] = b2;
            let nu = mat.nu(b2)?;
            for a in 0..3 {
                for b in 0..3 {
                    if let Some(slot) = el.slots[a][b] {
                        values[slot] += el.geometry[a][b] * nu;
                    }
                }
            }
        }
        let mut trip = Vec::with_capacity(values.len());
        for i in 0..self.n_c {
            let (cols, _) = self.pattern.row(i);
            let base = self.pattern.row_offsets()[i];
            for (k, &j) in cols.iter().enumerate() {
                trip.push((i, j, values[base + k]));
            }
        }
        Ok((CsrMatrix::from_triplets(self.n_c, self.n_c, &trip)?, b2_all))
    }
}

/// Excitation of one coil region: `I(t) = i_max (1 - exp(-t / tau))`,
/// spread uniformly over the coil cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub coil: u32,
    pub turns: f64,
    /// Peak current in A.
    pub i_max: f64,
    /// Ramp time constant in s.
    pub tau: f64,
    /// +1 for current out of the plane, -1 into it.
    #[serde(default = "default_direction")]
    pub direction: f64,
}

fn default_direction() -> f64 {
    1.0
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("coil:{} needs tau > 0", self.coil)));
        }
        if !self.turns.is_finite() || !self.i_max.is_finite() || !self.direction.is_finite() {
            return Err(Error::InvalidArgument(format!("coil:{} has non-finite parameters", self.coil)));
        }
        Ok(())
    }

    /// Total signed ampere-turns at time `t`.
    pub fn ampere_turns(&self, t: f64) -> f64 {
        let ramp = if t <= 0.0 { 0.0 } else { -(-t / self.tau).exp_m1() };
        self.direction * self.turns * self.i_max * ramp
    }
}

/// Nodal load `∫ J_z φ_i` of all sources on the full (unreduced) node set.
pub fn source_load_full(mesh: &Mesh2D, sources: &[SourceSpec], t: f64) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.num_nodes()];
    for src in sources {
        src.validate()?;
        let coil_elems: Vec<usize> = (0..mesh.num_elements())
            .filter(|&e| mesh.regions()[e].kind == RegionKind::Coil(src.coil))
            .collect();
        let area: f64 = coil_elems.iter().map(|&e| mesh.element_area(e)).sum();
        if coil_elems.is_empty() || !(area > 0.0) {
            return Err(Error::InvalidArgument(format!("coil:{} has no elements in the mesh", src.coil)));
        }
        let density = src.ampere_turns(t) / area;
        for &e in &coil_elems {
            let share = density * mesh.element_area(e) / 3.0;
            for &node in &mesh.elements()[e] {
                load[node] += share;
            }
        }
    }
    Ok(load)
}

/// Source vector `j_s,n` restricted to the nonconducting DoFs.
///
/// Fails if a coil touches a conducting DoF, since the conducting rows of
/// the system carry no source.
pub fn assemble_source(mesh: &Mesh2D, sources: &[SourceSpec], t: f64, p: &DofPartition) -> Result<Vec<f64>> {
    let full = source_load_full(mesh, sources, t)?;
    let mut j = vec![0.0; p.n_n];
    for (node, &v) in full.iter().enumerate() {
        match p.node_location(node) {
            Some((Block::Nonconducting, k)) => j[k] = v,
            Some((Block::Conducting, _)) if v != 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "coil touches conducting node {node}; coils must be separated from conductors"
                )))
            }
            _ => {}
        }
    }
    Ok(j)
}

/// Checks that no coil element shares a node with a conducting DoF.
pub fn check_sources(mesh: &Mesh2D, sources: &[SourceSpec], p: &DofPartition) -> Result<()> {
    for src in sources {
        for (e, tri) in mesh.elements().iter().enumerate() {
            if mesh.regions()[e].kind != RegionKind::Coil(src.coil) {
                continue;
            }
            if let Some(&node) = tri
                .iter()
                .find(|&&node| matches!(p.node_location(node), Some((Block::Conducting, _))))
            {
                return Err(Error::InvalidArgument(format!(
                    "coil:{} element {e} touches conducting node {node}",
                    src.coil
                )));
            }
        }
    }
    // also exercises the area and tau checks
    source_load_full(mesh, sources, 1.0).map(|_| ())
}

/// Area-weighted mean of `|B|` over the elements carrying probe overlay `probe`.
pub fn probe_average_b(mesh: &Mesh2D, b2: &[f64], probe: u32) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, tag) in mesh.regions().iter().enumerate() {
        if tag.probe == Some(probe) {
            let area = mesh.element_area(e);
            num += area * b2[e].sqrt();
            den += area;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument(format!("probe:{probe} has no elements")));
    }
    Ok(num / den)
}

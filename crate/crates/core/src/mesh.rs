//! Triangular meshes with material region tags.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Material kind of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionKind {
    Conductor(u32),
    Air,
    /// Source coil. Always nonconducting.
    Coil(u32),
}

/// Region tag of an element: a material kind plus an optional probe overlay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionTag {
    pub kind: RegionKind,
    pub probe: Option<u32>,
}

impl RegionTag {
    pub const AIR: RegionTag = RegionTag {
        kind: RegionKind::Air,
        probe: None,
    };

    pub fn conductor(id: u32) -> Self {
        Self {
            kind: RegionKind::Conductor(id),
            probe: None,
        }
    }

    pub fn coil(id: u32) -> Self {
        Self {
            kind: RegionKind::Coil(id),
            probe: None,
        }
    }

    pub fn with_probe(mut self, id: u32) -> Self {
        self.probe = Some(id);
        self
    }

    pub fn is_conductor(&self) -> bool {
        matches!(self.kind, RegionKind::Conductor(_))
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RegionKind::Conductor(id) => write!(f, "conductor:{id}")?,
            RegionKind::Air => write!(f, "air")?,
            RegionKind::Coil(id) => write!(f, "coil:{id}")?,
        }
        if let Some(p) = self.probe {
            write!(f, "+probe:{p}")?;
        }
        Ok(())
    }
}

impl FromStr for RegionTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (base, probe) = match s.split_once('+') {
            Some((base, overlay)) => {
                let id = overlay
                    .strip_prefix("probe:")
                    .ok_or_else(|| format!("unknown region overlay '{overlay}'"))?;
                let id: u32 = id
                    .parse()
                    .map_err(|_| format!("invalid probe id in '{s}'"))?;
                (base, Some(id))
            }
            None => (s, None),
        };
        let parse_id = |id: &str| -> std::result::Result<u32, String> {
            id.parse().map_err(|_| format!("invalid region id in '{s}'"))
        };
        let kind = if base == "air" {
            RegionKind::Air
        } else if let Some(id) = base.strip_prefix("conductor:") {
            RegionKind::Conductor(parse_id(id)?)
        } else if let Some(id) = base.strip_prefix("coil:") {
            RegionKind::Coil(parse_id(id)?)
        } else {
            return Err(format!("unknown region tag '{s}'"));
        };
        Ok(RegionTag { kind, probe })
    }
}

impl Serialize for RegionTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// On-disk layout of a mesh file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    regions: Vec<RegionTag>,
    boundary: Vec<usize>,
}

/// A 2D triangulation. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    regions: Vec<RegionTag>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl Mesh2D {
    /// Builds a mesh from raw arrays and validates every invariant.
    ///
    /// Elements must be counterclockwise with three distinct in-range node
    /// indices; the boundary list holds the nodes carrying `a = 0`.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        regions: Vec<RegionTag>,
        boundary: Vec<usize>,
    ) -> Result<Self> {
        if regions.len() != elements.len() {
            return Err(Error::MeshInvariant(format!(
                "{} region tags for {} elements",
                regions.len(),
                elements.len()
            )));
        }
        let n = nodes.len();
        for (e, tri) in elements.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::MeshInvariant(format!(
                    "element {e} references node {bad}, but the mesh has {n} nodes"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshInvariant(format!(
                    "element {e} repeats a node: {tri:?}"
                )));
            }
            let area = signed_area(&[nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]]);
            if !(area > 0.0) {
                return Err(Error::MeshInvariant(format!(
                    "element {e} has nonpositive signed area {area:e} (clockwise or degenerate)"
                )));
            }
        }
        for (i, p) in nodes.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::MeshInvariant(format!("node {i} has non-finite coordinates")));
            }
        }
        let mut is_boundary = vec![false; n];
        let mut sorted = BTreeSet::new();
        for &b in &boundary {
            if b >= n {
                return Err(Error::MeshInvariant(format!(
                    "boundary node {b} out of range ({n} nodes)"
                )));
            }
            is_boundary[b] = true;
            sorted.insert(b);
        }
        Ok(Self {
            nodes,
            elements,
            regions,
            boundary: sorted.into_iter().collect(),
            is_boundary,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn regions(&self) -> &[RegionTag] {
        &self.regions
    }

    /// Sorted Dirichlet node indices.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Corner coordinates of element `e`.
    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [i, j, k] = self.elements[e];
        [self.nodes[i], self.nodes[j], self.nodes[k]]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        signed_area(&self.element_coords(e))
    }

    /// Shortest element edge.
    pub fn min_edge_length(&self) -> f64 {
        let mut h = f64::INFINITY;
        for tri in &self.elements {
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let p = self.nodes[tri[a]];
                let q = self.nodes[tri[b]];
                h = h.min((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Copy of the mesh with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {s}")));
        }
        let nodes = self.nodes.iter().map(|p| [p[0] * s, p[1] * s]).collect();
        Self::new(nodes, self.elements.clone(), self.regions.clone(), self.boundary.clone())
    }

    /// Loads a mesh file and validates it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::MeshParse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(file.nodes, file.elements, file.regions, file.boundary)
    }

    /// Writes the mesh in the JSON mesh format, one entity per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = fs::File::create(path)?;
        out.write_all(self.to_json_string().as_bytes())?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        fn list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
            let body: Vec<String> = items.iter().map(|x| format!("    {}", f(x))).collect();
            if body.is_empty() {
                "[]".to_string()
            } else {
                format!("[\n{}\n  ]", body.join(",\n"))
            }
        }
        // `{:?}` on f64 prints the shortest representation that round-trips.
        let nodes = list(&self.nodes, |p| format!("[{:?}, {:?}]", p[0], p[1]));
        let elements = list(&self.elements, |t| format!("[{}, {}, {}]", t[0], t[1], t[2]));
        let regions = list(&self.regions, |r| format!("\"{r}\""));
        let boundary: Vec<String> = self.boundary.iter().map(|b| b.to_string()).collect();
        format!(
            "{{\n  \"nodes\": {nodes},\n  \"elements\": {elements},\n  \"regions\": {regions},\n  \"boundary\": [{}]\n}}\n",
            boundary.join(", ")
        )
    }
}

/// Signed area of a triangle; positive for counterclockwise ordering.
pub fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Structured triangulation of `[0, width] x [0, height]`.
///
/// Each of the `nx * ny` cells is split along its lower-left to upper-right
/// diagonal. Element regions come from `region_fn` evaluated at the element
/// centroid. All nodes on the outer rectangle are Dirichlet nodes.
pub fn generate_rect_mesh<F>(width: f64, height: f64, nx: usize, ny: usize, region_fn: F) -> Result<Mesh2D>
where
    F: Fn([f64; 2]) -> RegionTag,
{
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mesh dimensions must be positive, got {width} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let stride = nx + 1;
    let mut nodes = Vec::with_capacity(stride * (ny + 1));
    let mut boundary = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let x = width * i as f64 / nx as f64;
            let y = height * j as f64 / ny as f64;
            if i == 0 || j == 0 || i == nx || j == ny {
                boundary.push(nodes.len());
            }
            nodes.push([x, y]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    let mut regions = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n00 = j * stride + i;
            let n10 = n00 + 1;
            let n01 = n00 + stride;
            let n11 = n01 + 1;
            for tri in [[n00, n10, n11], [n00, n11, n01]] {
                let c = centroid(&[nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]]);
                elements.push(tri);
                regions.push(region_fn(c));
            }
        }
    }
    Mesh2D::new(nodes, elements, regions, boundary)
}

pub fn centroid(p: &[[f64; 2]; 3]) -> [f64; 2] {
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_air(_: [f64; 2]) -> RegionTag {
        RegionTag::AIR
    }

    #[test]
    fn single_cell() {
        let m = generate_rect_mesh(1.0, 1.0, 1, 1, all_air).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.boundary(), &[0, 1, 2, 3]);
        assert_eq!(m.min_edge_length(), 1.0);
    }

    #[test]
    fn two_by_two_counts() {
        let m = generate_rect_mesh(1.0, 1.0, 2, 2, all_air).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elements(), 8);
        // only the center node is free
        assert_eq!(m.boundary().len(), 8);
        assert!(!m.is_boundary(4));
    }

    #[test]
    fn centroid_tagging() {
        let m = generate_rect_mesh(2.0, 1.0, 4, 2, |c| {
            if c[0] < 0.5 {
                RegionTag::conductor(0)
            } else {
                RegionTag::AIR
            }
        })
        .unwrap();
        let tagged = m.regions().iter().filter(|r| r.is_conductor()).count();
        assert_eq!(tagged, 4);
        assert_eq!(m.min_edge_length(), 0.5);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(generate_rect_mesh(0.0, 1.0, 1, 1, all_air).is_err());
        assert!(generate_rect_mesh(1.0, -1.0, 1, 1, all_air).is_err());
        assert!(generate_rect_mesh(1.0, 1.0, 0, 1, all_air).is_err());
        assert!(generate_rect_mesh(1.0, 1.0, 1, 0, all_air).is_err());
    }

    #[test]
    fn areas_sum_to_domain() {
        let m = generate_rect_mesh(0.3, 0.7, 7, 5, all_air).unwrap();
        let total: f64 = (0..m.num_elements()).map(|e| m.element_area(e)).sum();
        assert!((total - 0.21).abs() <= 1e-12 * 0.21);
    }

    #[test]
    fn refinement_halves_h() {
        let a = generate_rect_mesh(2.0, 1.0, 4, 3, all_air).unwrap();
        let b = generate_rect_mesh(2.0, 1.0, 8, 6, all_air).unwrap();
        assert!((a.min_edge_length() - 2.0 * b.min_edge_length()).abs() < 1e-15);
    }

    #[test]
    fn scaling_scales_h() {
        let a = generate_rect_mesh(2.0, 1.0, 4, 3, all_air).unwrap();
        let b = a.scaled(3.0).unwrap();
        assert!((b.min_edge_length() - 3.0 * a.min_edge_length()).abs() < 1e-14);
    }

    #[test]
    fn boundary_is_outer_rectangle() {
        let m = generate_rect_mesh(1.0, 2.0, 3, 4, all_air).unwrap();
        for (i, p) in m.nodes().iter().enumerate() {
            let on_edge = p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 2.0;
            assert_eq!(m.is_boundary(i), on_edge, "node {i} at {p:?}");
        }
    }

    #[test]
    fn region_tag_strings() {
        for s in ["air", "conductor:3", "coil:0", "air+probe:1", "conductor:2+probe:0"] {
            let t: RegionTag = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!("steel".parse::<RegionTag>().is_err());
        assert!("coil:x".parse::<RegionTag>().is_err());
        assert!("air+sensor:1".parse::<RegionTag>().is_err());
    }

    #[test]
    fn rejects_clockwise_element() {
        let err = Mesh2D::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 2, 1]],
            vec![RegionTag::AIR],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("element 0"), "{err}");
    }

    #[test]
    fn rejects_repeated_node() {
        let err = Mesh2D::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 1]],
            vec![RegionTag::AIR],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MeshInvariant(_)));
    }
}

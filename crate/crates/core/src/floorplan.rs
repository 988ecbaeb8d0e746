//! Floorplans: venue polygons plus a corridor walk-graph.
//!
//! File format (JSON, `schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "polygons": [{"id": "P1", "floor": 0, "vertices": [{"x": 0, "y": 0}, ...]}],
//!   "walk_graph": {
//!     "nodes": [{"point": {"x": 2, "y": 2}, "floor": 0}],
//!     "edges": [{"a": 0, "b": 1, "length": 4.0}]
//!   },
//!   "labels": {"P1": "venue-id"},
//!   "ground_truth": {"P1": "venue-id"}
//! }
//! ```
//!
//! Edge `length` is optional and defaults to the straight-line distance
//! between its nodes; shorter lengths are raised to it, so walking distance
//! never undercuts Euclidean distance.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rstar::{PointDistance, RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segment_distance, Location, Point};
use crate::VenueId;

pub const FLOORPLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub id: String,
    #[serde(default)]
    pub floor: i32,
    pub vertices: Vec<Point>,
}

impl Polygon {
    fn edges(&self) -> impl Iterator<Item = (&Point, &Point)> {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        if self.boundary_distance(p) <= 1e-9 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn centroid(&self) -> Point {
        // Area-weighted centroid; falls back to the vertex mean when degenerate.
        let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            a += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        if a.abs() < 1e-12 {
            return Point::mean(&self.vertices).unwrap_or_default();
        }
        Point::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let e: Vec<(&Point, &Point)> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(e[i].0, e[i].1, e[j].0, e[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: &Point, b: &Point, c: &Point| segment_distance(c, a, b) <= 1e-12;
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkNode {
    pub point: Point,
    #[serde(default)]
    pub floor: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkEdge {
    pub a: usize,
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WalkGraph {
    pub nodes: Vec<WalkNode>,
    pub edges: Vec<WalkEdge>,
}

#[derive(Serialize, Deserialize)]
struct FloorplanFile {
    schema_version: u32,
    polygons: Vec<Polygon>,
    walk_graph: WalkGraph,
    #[serde(default)]
    labels: BTreeMap<String, VenueId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    ground_truth: BTreeMap<String, VenueId>,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
struct IndexedNode {
    idx: usize,
    at: [f64; 2],
}

impl RTreeObject for IndexedNode {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        AABB::from_point(self.at)
    }
}

impl PointDistance for IndexedNode {
    fn distance_2(&self, p: &[f64; 2]) -> f64 {
        let (dx, dy) = (self.at[0] - p[0], self.at[1] - p[1]);
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone)]
pub struct Floorplan {
    pub polygons: Vec<Polygon>,
    walk_graph: WalkGraph,
    /// Polygon id -> venue id.
    pub labels: BTreeMap<String, VenueId>,
    pub ground_truth: BTreeMap<String, VenueId>,
    graph: UnGraph<usize, f64>,
    node_index: BTreeMap<i32, RTree<IndexedNode>>,
}

impl PartialEq for Floorplan {
    fn eq(&self, other: &Self) -> bool {
        self.polygons == other.polygons
            && self.walk_graph == other.walk_graph
            && self.labels == other.labels
            && self.ground_truth == other.ground_truth
    }
}

impl Floorplan {
    pub fn new(polygons: Vec<Polygon>, walk_graph: WalkGraph) -> Result<Self> {
        for p in &polygons {
            if !p.is_simple() {
                return Err(Error::invalid(format!("polygon {} is not simple", p.id)));
            }
        }
        let mut graph = UnGraph::with_capacity(walk_graph.nodes.len(), walk_graph.edges.len());
        for i in 0..walk_graph.nodes.len() {
            graph.add_node(i);
        }
        let mut wg = walk_graph;
        for e in &mut wg.edges {
            let (Some(a), Some(b)) = (wg.nodes.get(e.a), wg.nodes.get(e.b)) else {
                return Err(Error::invalid(format!(
                    "edge {}-{} references a missing node",
                    e.a, e.b
                )));
            };
            let euclid = a.point.distance(&b.point);
            let len = e.length.unwrap_or(euclid).max(euclid);
            if !len.is_finite() {
                return Err(Error::invalid("edge length is not finite"));
            }
            graph.add_edge(NodeIndex::new(e.a), NodeIndex::new(e.b), len);
        }
        let mut node_index: BTreeMap<i32, Vec<IndexedNode>> = BTreeMap::new();
        for (i, n) in wg.nodes.iter().enumerate() {
            node_index.entry(n.floor).or_default().push(IndexedNode {
                idx: i,
                at: [n.point.x, n.point.y],
            });
        }
        let plan = Floorplan {
            polygons,
            walk_graph: wg,
            labels: BTreeMap::new(),
            ground_truth: BTreeMap::new(),
            graph,
            node_index: node_index.into_iter().map(|(f, v)| (f, RTree::bulk_load(v))).collect(),
        };
        plan.check_connected()?;
        Ok(plan)
    }

    fn check_connected(&self) -> Result<()> {
        let mut comp = petgraph::unionfind::UnionFind::<usize>::new(self.walk_graph.nodes.len());
        for e in &self.walk_graph.edges {
            comp.union(e.a, e.b);
        }
        let mut first: HashMap<i32, usize> = HashMap::new();
        for (i, n) in self.walk_graph.nodes.iter().enumerate() {
            let root = *first.entry(n.floor).or_insert(i);
            if !comp.equiv(root, i) {
                return Err(Error::invalid(format!(
                    "walk graph on floor {} is disconnected",
                    n.floor
                )));
            }
        }
        Ok(())
    }

    pub fn walk_graph(&self) -> &WalkGraph {
        &self.walk_graph
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn polygon(&self, id: &str) -> Option<&Polygon> {
        self.polygons.iter().find(|p| p.id == id)
    }

    /// Nearest walk-graph node on `floor` and its distance.
    pub fn nearest_node(&self, at: &Location) -> Option<(usize, f64)> {
        self.node_index
            .get(&at.floor)?
            .nearest_neighbor_iter_with_distance_2(&[at.point.x, at.point.y])
            .next()
            .map(|(n, d2)| (n.idx, d2.sqrt()))
    }

    /// Shortest walking distances from `from`, reused across targets.
    /// Origins farther than `snap_radius` from every node fall back to
    /// straight-line distance.
    pub fn distance_field(&self, from: &Location, snap_radius: f64) -> DistanceField<'_> {
        let origin = self
            .nearest_node(from)
            .filter(|(_, d)| *d <= snap_radius)
            .map(|(idx, offset)| {
                let dist = dijkstra(&self.graph, NodeIndex::new(idx), None, |e| *e.weight())
                    .into_iter()
                    .collect();
                (offset, dist)
            });
        DistanceField {
            plan: self,
            from: *from,
            origin,
        }
    }

    /// Walking distance between two locations.
    pub fn walking_distance(&self, a: &Location, b: &Location, snap_radius: f64) -> f64 {
        self.distance_field(a, snap_radius).distance_to(b)
    }

    /// Polygons containing `p` on `floor`.
    pub fn containing(&self, p: &Location) -> impl Iterator<Item = &Polygon> + '_ {
        let p = *p;
        self.polygons
            .iter()
            .filter(move |poly| poly.floor == p.floor && poly.contains(&p.point))
    }

    /// Polygon containing `p`, else the one with the nearest boundary.
    pub fn locate(&self, p: &Location) -> Option<&Polygon> {
        if let Some(poly) = self.containing(p).next() {
            return Some(poly);
        }
        let same_floor = self.polygons.iter().any(|poly| poly.floor == p.floor);
        self.polygons
            .iter()
            .filter(|poly| !same_floor || poly.floor == p.floor)
            .map(|poly| (poly.boundary_distance(&p.point), poly))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, poly)| poly)
    }

    fn to_file(&self) -> FloorplanFile {
        FloorplanFile {
            schema_version: FLOORPLAN_SCHEMA_VERSION,
            polygons: self.polygons.clone(),
            walk_graph: self.walk_graph.clone(),
            labels: self.labels.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("floorplan serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| Error::parse("floorplan", &e))?;
        if header.schema_version != FLOORPLAN_SCHEMA_VERSION {
            return Err(Error::Version {
                what: "floorplan",
                found: header.schema_version,
                expected: FLOORPLAN_SCHEMA_VERSION,
            });
        }
        let f: FloorplanFile = serde_json::from_str(text).map_err(|e| Error::parse("floorplan", &e))?;
        let mut plan = Floorplan::new(f.polygons, f.walk_graph)?;
        plan.labels = f.labels;
        plan.ground_truth = f.ground_truth;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub struct DistanceField<'a> {
    plan: &'a Floorplan,
    from: Location,
    origin: Option<(f64, HashMap<NodeIndex, f64>)>,
}

impl DistanceField<'_> {
    /// Whether distances are measured along the walk-graph.
    pub fn on_graph(&self) -> bool {
        self.origin.is_some()
    }

    /// Snap offset + graph distance + target snap offset; Euclidean when the
    /// origin is off-graph, infinite when the target is unreachable.
    pub fn distance_to(&self, to: &Location) -> f64 {
        let Some((offset, dist)) = &self.origin else {
            return self.from.point.distance(&to.point);
        };
        match self.plan.nearest_node(to) {
            Some((idx, to_offset)) => match dist.get(&NodeIndex::new(idx)) {
                Some(d) => offset + d + to_offset,
                None => f64::INFINITY,
            },
            None => f64::INFINITY,
        }
    }
}

mod common;

use common::{record, Xs};
use lbsn_core::config::Config;
use lbsn_core::floorplan::{Floorplan, Polygon, WalkEdge, WalkGraph, WalkNode};
use lbsn_core::geometry::{segment_distance, Location, Point};
use lbsn_core::labeling::label_floorplan;
use lbsn_core::pipeline::filter_by_location;
use lbsn_core::store::MockLbsnSource;
use lbsn_core::{VenueId, VenueStore};
use proptest::prelude::*;

/// Winding number of a closed polygon around `p`, boundary counted inside.
fn winding_inside(poly: &[Point], p: &Point) -> bool {
    let n = poly.len();
    if (0..n).any(|i| segment_distance(p, &poly[i], &poly[(i + 1) % n]) <= 1e-9) {
        return true;
    }
    let mut wn = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && cross > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && cross < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

fn test_polygons() -> Vec<Vec<Point>> {
    let pts = |v: &[(f64, f64)]| v.iter().map(|(x, y)| Point::new(*x, *y)).collect::<Vec<_>>();
    vec![
        pts(&[(0.0, 0.0), (10.0, 0.0), (10.0, 6.0), (0.0, 6.0)]),
        // L-shape.
        pts(&[(0.0, 0.0), (8.0, 0.0), (8.0, 3.0), (3.0, 3.0), (3.0, 8.0), (0.0, 8.0)]),
        // Comb with notches, clockwise.
        pts(&[
            (0.0, 0.0),
            (0.0, 5.0),
            (2.0, 5.0),
            (2.0, 2.0),
            (4.0, 2.0),
            (4.0, 5.0),
            (6.0, 5.0),
            (6.0, 0.0),
        ]),
        // Star-like concave polygon.
        pts(&[
            (5.0, 0.0),
            (6.5, 3.5),
            (10.0, 4.0),
            (7.0, 6.5),
            (8.0, 10.0),
            (5.0, 8.0),
            (2.0, 10.0),
            (3.0, 6.5),
            (0.0, 4.0),
            (3.5, 3.5),
        ]),
        pts(&[(0.0, 0.0), (4.0, 1.0), (1.0, 4.0)]),
    ]
}

#[test]
fn point_in_polygon_matches_winding_number() {
    let mut rng = Xs(0x9019);
    for (k, verts) in test_polygons().into_iter().enumerate() {
        let poly = Polygon {
            id: format!("P{k}"),
            floor: 0,
            vertices: verts.clone(),
        };
        assert!(poly.is_simple());
        for i in 0..2000 {
            let p = if i % 10 == 0 {
                // Points on edges and vertices.
                let j = rng.below(verts.len());
                let (a, b) = (verts[j], verts[(j + 1) % verts.len()]);
                let t = [0.0, 0.5, 1.0][rng.below(3)];
                Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
            } else {
                Point::new(rng.unit() * 12.0 - 1.0, rng.unit() * 12.0 - 1.0)
            };
            assert_eq!(poly.contains(&p), winding_inside(&verts, &p), "polygon {k} point {p:?}");
        }
    }
}

fn random_graph(rng: &mut Xs, n: usize) -> WalkGraph {
    let nodes: Vec<WalkNode> = (0..n)
        .map(|_| WalkNode {
            point: Point::new(rng.unit() * 50.0, rng.unit() * 50.0),
            floor: 0,
        })
        .collect();
    let mut edges: Vec<WalkEdge> = (1..n)
        .map(|i| WalkEdge {
            a: rng.below(i),
            b: i,
            length: None,
        })
        .collect();
    for _ in 0..n {
        let (a, b) = (rng.below(n), rng.below(n));
        if a != b {
            let extra = if rng.below(2) == 0 {
                Some(rng.unit() * 80.0)
            } else {
                None
            };
            edges.push(WalkEdge { a, b, length: extra });
        }
    }
    WalkGraph { nodes, edges }
}

/// All-pairs shortest paths by Floyd-Warshall, edges clamped to their
/// straight-line length.
fn floyd(g: &WalkGraph) -> Vec<Vec<f64>> {
    let n = g.nodes.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &g.edges {
        let eu = g.nodes[e.a].point.distance(&g.nodes[e.b].point);
        let w = e.length.unwrap_or(eu).max(eu);
        d[e.a][e.b] = d[e.a][e.b].min(w);
        d[e.b][e.a] = d[e.b][e.a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[test]
fn walking_distance_matches_floyd_warshall() {
    let mut rng = Xs(0xf10d);
    for _ in 0..30 {
        let n = 2 + rng.below(25);
        let g = random_graph(&mut rng, n);
        let d = floyd(&g);
        let plan = Floorplan::new(vec![], g.clone()).unwrap();
        for i in 0..n {
            let at = |k: usize| Location {
                point: g.nodes[k].point,
                floor: 0,
            };
            let field = plan.distance_field(&at(i), 1e-6);
            for j in 0..n {
                // Coincident nodes may snap to either; skip those.
                let snapped = plan.nearest_node(&at(j)).unwrap().0;
                if snapped != j || plan.nearest_node(&at(i)).unwrap().0 != i {
                    continue;
                }
                assert!((field.distance_to(&at(j)) - d[i][j]).abs() < 1e-9);
                assert!(field.distance_to(&at(j)) >= g.nodes[i].point.distance(&g.nodes[j].point) - 1e-9);
            }
        }
    }
}

fn corridor() -> Floorplan {
    // A - B - C with unit edges along the x axis.
    let nodes = (0..3)
        .map(|i| WalkNode {
            point: Point::new(i as f64, 0.0),
            floor: 0,
        })
        .collect();
    let edges = vec![
        WalkEdge {
            a: 0,
            b: 1,
            length: None,
        },
        WalkEdge {
            a: 1,
            b: 2,
            length: None,
        },
    ];
    Floorplan::new(vec![], WalkGraph { nodes, edges }).unwrap()
}

#[test]
fn location_filter_on_corridor() {
    let plan = corridor();
    let mut store = VenueStore::new("m");
    for (id, x) in [("va", 0.0), ("vb", 1.0), ("vc", 2.0)] {
        store.upsert_venue(record(id, x, 0.5)).unwrap();
    }
    let obs = common::observation("u", &["a"], 0.0, 0.0);
    let got = filter_by_location(&obs, &store, Some(&plan), 2, 5.0);
    let ids: Vec<&str> = got.iter().map(|(v, _)| v.as_str()).collect();
    assert_eq!(ids, ["va", "vb"]);
    assert_eq!(got[0].1, 0.5);
    assert_eq!(got[1].1, 1.5);
    assert_eq!(filter_by_location(&obs, &store, Some(&plan), 10, 5.0).len(), 3);
}

#[test]
fn walls_make_walking_distance_longer() {
    // Two rooms side by side, but the corridor detours around a wall.
    let nodes = vec![
        WalkNode {
            point: Point::new(0.0, 0.0),
            floor: 0,
        },
        WalkNode {
            point: Point::new(0.0, 10.0),
            floor: 0,
        },
        WalkNode {
            point: Point::new(3.0, 10.0),
            floor: 0,
        },
        WalkNode {
            point: Point::new(3.0, 0.0),
            floor: 0,
        },
        WalkNode {
            point: Point::new(8.0, 0.0),
            floor: 0,
        },
    ];
    let edges = vec![
        WalkEdge {
            a: 0,
            b: 1,
            length: None,
        },
        WalkEdge {
            a: 1,
            b: 2,
            length: None,
        },
        WalkEdge {
            a: 2,
            b: 3,
            length: None,
        },
        WalkEdge {
            a: 0,
            b: 4,
            length: Some(8.0),
        },
    ];
    let plan = Floorplan::new(vec![], WalkGraph { nodes, edges }).unwrap();
    let mut store = VenueStore::new("m");
    store.upsert_venue(record("behind-wall", 3.0, 0.0)).unwrap();
    store.upsert_venue(record("down-corridor", 8.0, 0.0)).unwrap();
    let obs = common::observation("u", &["a"], 0.0, 0.0);
    let got = filter_by_location(&obs, &store, Some(&plan), 2, 5.0);
    assert_eq!(got[0].0, VenueId::new("down-corridor"));
    assert_eq!(got[1].1, 23.0);
    // Without a floorplan the wall is invisible.
    let flat = filter_by_location(&obs, &store, None, 2, 5.0);
    assert_eq!(flat[0].0, VenueId::new("behind-wall"));
}

#[test]
fn location_filter_agrees_with_linear_scan() {
    let mut rng = Xs(0x1fe);
    let g = random_graph(&mut rng, 40);
    let plan = Floorplan::new(vec![], g).unwrap();
    let mut store = VenueStore::new("m");
    for i in 0..120 {
        store
            .upsert_venue(record(&format!("v{i:03}"), rng.unit() * 50.0, rng.unit() * 50.0))
            .unwrap();
    }
    let cfg = Config::default();
    for _ in 0..40 {
        let obs = common::observation("u", &["a"], rng.unit() * 50.0, rng.unit() * 50.0);
        let field = plan.distance_field(&obs.location, cfg.pipeline.snap_radius_m);
        let mut all: Vec<(VenueId, f64)> = store
            .venues()
            .map(|v| (v.id.clone(), field.distance_to(&v.location())))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(10);
        assert_eq!(
            filter_by_location(&obs, &store, Some(&plan), 10, cfg.pipeline.snap_radius_m),
            all
        );
    }
}

#[test]
fn corridor_checkin_labels_nearest_room() {
    let room = |id: &str, x0: f64| Polygon {
        id: id.into(),
        floor: 0,
        vertices: vec![
            Point::new(x0, 0.0),
            Point::new(x0 + 4.0, 0.0),
            Point::new(x0 + 4.0, 4.0),
            Point::new(x0, 4.0),
        ],
    };
    let mut plan = Floorplan::new(vec![room("P", 0.0), room("Q", 10.0)], WalkGraph::default()).unwrap();
    let v = VenueId::new("v");
    let mut rng = Xs(0x1abe1);
    for _ in 0..1000 {
        let p = Location::new(4.0 + rng.unit() * 6.0, rng.unit() * 4.0, 0);
        let expected = if p.point.x - 4.0 <= 10.0 - p.point.x { "P" } else { "Q" };
        let got = label_floorplan(&v, &p, &mut plan).unwrap();
        if (p.point.x - 7.0).abs() > 1e-9 {
            assert_eq!(got, expected);
        }
    }
}

proptest! {
    #[test]
    fn nearest_venues_match_linear_scan(seed in any::<u64>(), n in 0usize..=20, qx in -10.0f64..110.0, qy in -10.0f64..110.0) {
        let mut rng = Xs(seed | 1);
        let mut store = VenueStore::new("m");
        for i in 0..200 {
            // Coarse grid positions create distance ties.
            let (x, y) = ((rng.below(21) * 5) as f64, (rng.below(21) * 5) as f64);
            store.upsert_venue(record(&format!("v{i:03}"), x, y)).unwrap();
        }
        let q = Point::new(qx, qy);
        let got: Vec<(VenueId, f64)> = store.nearest_venues(q, n).into_iter().map(|(r, d)| (r.id.clone(), d)).collect();
        let mut all: Vec<(VenueId, f64)> = store.venues().map(|r| (r.id.clone(), r.location().point.distance(&q))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(n);
        prop_assert_eq!(got.len(), all.len());
        for (g, a) in got.iter().zip(&all) {
            prop_assert_eq!(&g.0, &a.0);
            prop_assert!((g.1 - a.1).abs() < 1e-9);
        }
    }
}

#[test]
fn fetch_nearby_sorts_and_limits() {
    let src = MockLbsnSource {
        catalog: vec![
            record("far", 50.0, 0.0),
            record("b", 3.0, 0.0),
            record("a", 1.0, 0.0),
            record("c", 0.0, 2.0),
        ],
        coverage_ratio: 1.0,
    };
    let ids = |v: Vec<lbsn_core::VenueRecord>| v.into_iter().map(|r| r.id.as_str().to_string()).collect::<Vec<_>>();
    assert_eq!(ids(src.fetch_nearby(Point::new(0.0, 0.0), 10.0, 10)), ["a", "c", "b"]);
    assert_eq!(ids(src.fetch_nearby(Point::new(0.0, 0.0), 10.0, 1)), ["a"]);
    assert!(MockLbsnSource::default()
        .fetch_nearby(Point::new(0.0, 0.0), 10.0, 10)
        .is_empty());
}

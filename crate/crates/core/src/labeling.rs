//! Semantic floorplan labeling from correct check-in locations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::floorplan::Floorplan;
use crate::geometry::{Location, Point};
use crate::VenueId;

/// Mean of the locations of correct check-ins.
pub fn estimate_venue_location(correct_bind_locations: &[Point]) -> Result<Point> {
    Point::mean(correct_bind_locations).ok_or(Error::NoCorrectCheckIns)
}

/// Tags the polygon enclosing `location` (or, outside every polygon, the
/// polygon with the nearest boundary) with `venue`. Any earlier label of the
/// venue is dropped first. Returns the labeled polygon id.
pub fn label_floorplan(venue: &VenueId, location: &Location, plan: &mut Floorplan) -> Result<String> {
    let id = plan.locate(location).ok_or(Error::EmptyFloorplan)?.id.clone();
    plan.labels.retain(|_, v| v != venue);
    plan.labels.insert(id.clone(), venue.clone());
    Ok(id)
}

/// Fraction of ground-truth venues whose label sits on their true polygon.
pub fn labeling_accuracy(plan: &Floorplan, ground_truth: &BTreeMap<String, VenueId>) -> f64 {
    if ground_truth.is_empty() {
        return 0.0;
    }
    let hits = ground_truth
        .iter()
        .filter(|(poly, venue)| plan.labels.get(*poly) == Some(venue))
        .count();
    hits as f64 / ground_truth.len() as f64
}

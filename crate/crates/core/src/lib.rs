//! Indoor venue inference for location-based social networks.
//!
//! Check-ins carry a multi-modal sensor snapshot. Venues accumulate
//! fingerprints from accepted check-ins; new check-ins are matched against
//! nearby venues by a panel of per-modality rankers whose lists are fused
//! and whose weights adapt to user feedback. Supporting modules detect fake
//! check-ins, label floorplans, and name venues missing from the external
//! venue database.

pub mod config;
pub mod coverage;
pub mod error;
pub mod fingerprint;
pub mod floorplan;
pub mod geometry;
pub mod image_index;
pub mod integrity;
pub mod labeling;
pub mod observation;
pub mod pipeline;
pub mod similarity;
pub mod store;

pub use config::Config;
pub use error::{Error, Result};
pub use floorplan::Floorplan;
pub use geometry::{Location, Point};
pub use observation::CheckInObservation;
pub use pipeline::{infer_venue, RankedList, Ranker, RankerWeights};
pub use store::{VenueId, VenueRecord, VenueStore};

//! Venue database: records, spatial index, image index and persistence.
//!
//! A store holds the venues of one mall. It is single-writer: every mutation
//! goes through `&mut self` so the derived indices stay consistent, while
//! concurrent readers can share `&VenueStore`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rstar::{PointDistance, RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::VenueFingerprint;
use crate::geometry::{Location, Point};
use crate::image_index::InvertedIndex;
use crate::integrity::LoggedBind;
use crate::similarity::{familiarity, SimilarityScore};

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VenueId(String);

impl VenueId {
    pub fn new(id: impl Into<String>) -> Self {
        VenueId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VenueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryGroup {
    FoodRestaurants,
    ClothingFashion,
    EntertainmentArts,
    Others,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcategory {
    Restaurant,
    Cafe,
    DessertShop,
    IceCreamShop,
    Bakery,
    ClothingStore,
    AccessoriesStore,
    ShoeStore,
    CosmeticStore,
    JewelryStore,
    Cinema,
    Theater,
    Gym,
    GamingRoom,
    PoolHall,
    BookStore,
    Bar,
    Salon,
    HighTechOutlet,
    GroceryStore,
    DepartmentStore,
    Supermarket,
}

impl Subcategory {
    pub const ALL: [Subcategory; 22] = {
        use Subcategory::*;
        [
            Restaurant,
            Cafe,
            DessertShop,
            IceCreamShop,
            Bakery,
            ClothingStore,
            AccessoriesStore,
            ShoeStore,
            CosmeticStore,
            JewelryStore,
            Cinema,
            Theater,
            Gym,
            GamingRoom,
            PoolHall,
            BookStore,
            Bar,
            Salon,
            HighTechOutlet,
            GroceryStore,
            DepartmentStore,
            Supermarket,
        ]
    };

    pub fn group(self) -> CategoryGroup {
        use Subcategory::*;
        match self {
            Restaurant | Cafe | DessertShop | IceCreamShop | Bakery => CategoryGroup::FoodRestaurants,
            ClothingStore | AccessoriesStore | ShoeStore | CosmeticStore | JewelryStore => {
                CategoryGroup::ClothingFashion
            }
            Cinema | Theater | Gym | GamingRoom | PoolHall => CategoryGroup::EntertainmentArts,
            BookStore | Bar | Salon | HighTechOutlet | GroceryStore | DepartmentStore | Supermarket => {
                CategoryGroup::Others
            }
        }
    }

    pub fn in_group(group: CategoryGroup) -> impl Iterator<Item = Subcategory> {
        Self::ALL.into_iter().filter(move |s| s.group() == group)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VenueRecord {
    pub id: VenueId,
    /// Canonical name first, aliases after.
    pub names: Vec<String>,
    pub brand: Option<String>,
    /// `None` only for unnamed stubs awaiting manual naming.
    pub category: Option<Subcategory>,
    pub mall_id: String,
    /// Location reported by the external LBSN; may be inaccurate.
    pub claimed_location: Location,
    /// Location estimated from correct check-ins.
    pub estimated_location: Option<Location>,
    pub fingerprint: VenueFingerprint,
    #[serde(default)]
    pub tips: Vec<String>,
    /// Visterm multisets, one per image.
    #[serde(default)]
    pub image_corpus: Vec<BTreeMap<String, u32>>,
    #[serde(default)]
    pub checkin_log: Vec<LoggedBind>,
    /// Created by the coverage extender without a predicted name.
    #[serde(default)]
    pub stub: bool,
}

impl VenueRecord {
    pub fn canonical_name(&self) -> &str {
        self.names.first().map(String::as_str).unwrap_or("")
    }

    /// Estimated location once known, the claimed one otherwise.
    pub fn location(&self) -> Location {
        self.estimated_location.unwrap_or(self.claimed_location)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() || self.names.iter().any(|n| n.trim().is_empty()) {
            return Err(Error::invalid(format!("venue {} has an empty name", self.id)));
        }
        if !self.claimed_location.point.is_finite() {
            return Err(Error::invalid(format!("venue {} location not finite", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct IndexedVenue {
    id: VenueId,
    at: [f64; 2],
}

impl RTreeObject for IndexedVenue {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        AABB::from_point(self.at)
    }
}

impl PointDistance for IndexedVenue {
    fn distance_2(&self, p: &[f64; 2]) -> f64 {
        let (dx, dy) = (self.at[0] - p[0], self.at[1] - p[1]);
        dx * dx + dy * dy
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    schema_version: u32,
    mall_id: String,
    next_id: u64,
    venues: Vec<VenueRecord>,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
}

#[derive(Debug, Clone)]
pub struct VenueStore {
    mall_id: String,
    venues: BTreeMap<VenueId, VenueRecord>,
    next_id: u64,
    spatial: RTree<IndexedVenue>,
    images: InvertedIndex,
    brands: BTreeMap<String, BTreeSet<VenueId>>,
}

impl PartialEq for VenueStore {
    fn eq(&self, other: &Self) -> bool {
        self.mall_id == other.mall_id && self.next_id == other.next_id && self.venues == other.venues
    }
}

fn brand_key(b: &str) -> String {
    b.trim().to_lowercase()
}

impl VenueStore {
    pub fn new(mall_id: impl Into<String>) -> Self {
        VenueStore {
            mall_id: mall_id.into(),
            venues: BTreeMap::new(),
            next_id: 0,
            spatial: RTree::new(),
            images: InvertedIndex::new(),
            brands: BTreeMap::new(),
        }
    }

    pub fn mall_id(&self) -> &str {
        &self.mall_id
    }

    pub fn len(&self) -> usize {
        self.venues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.venues.is_empty()
    }

    /// Fresh id not yet used by this store.
    pub fn allocate_id(&mut self) -> VenueId {
        loop {
            let id = VenueId(format!("{}-v{:05}", self.mall_id, self.next_id));
            self.next_id += 1;
            if !self.venues.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn upsert_venue(&mut self, record: VenueRecord) -> Result<()> {
        record.validate()?;
        self.unindex(&record.id);
        self.index(&record);
        self.venues.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn get_venue(&self, id: &VenueId) -> Result<&VenueRecord> {
        self.venues.get(id).ok_or_else(|| Error::NotFound(id.clone()))
    }

    pub fn contains(&self, id: &VenueId) -> bool {
        self.venues.contains_key(id)
    }

    /// Applies `f` to a record and refreshes the indices.
    pub fn update_venue<T>(&mut self, id: &VenueId, f: impl FnOnce(&mut VenueRecord) -> T) -> Result<T> {
        let mut rec = self.venues.remove(id).ok_or_else(|| Error::NotFound(id.clone()))?;
        self.unindex_record(&rec);
        let out = f(&mut rec);
        let valid = rec.validate();
        self.index(&rec);
        self.venues.insert(rec.id.clone(), rec);
        valid.map(|_| out)
    }

    pub fn remove_venue(&mut self, id: &VenueId) -> Result<VenueRecord> {
        let rec = self.venues.remove(id).ok_or_else(|| Error::NotFound(id.clone()))?;
        self.unindex_record(&rec);
        Ok(rec)
    }

    pub fn venues(&self) -> impl Iterator<Item = &VenueRecord> {
        self.venues.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &VenueId> {
        self.venues.keys()
    }

    pub fn image_index(&self) -> &InvertedIndex {
        &self.images
    }

    /// Venues of the given brand, case-insensitive.
    pub fn brand_members(&self, brand: &str) -> impl Iterator<Item = &VenueId> {
        self.brands.get(&brand_key(brand)).into_iter().flatten()
    }

    fn index(&mut self, rec: &VenueRecord) {
        let p = rec.location().point;
        self.spatial.insert(IndexedVenue {
            id: rec.id.clone(),
            at: [p.x, p.y],
        });
        self.images.set_venue_images(&rec.id, &rec.image_corpus);
        if let Some(b) = &rec.brand {
            self.brands.entry(brand_key(b)).or_default().insert(rec.id.clone());
        }
    }

    fn unindex(&mut self, id: &VenueId) {
        if let Some(old) = self.venues.get(id).cloned() {
            self.unindex_record(&old);
        }
    }

    fn unindex_record(&mut self, rec: &VenueRecord) {
        let p = rec.location().point;
        self.spatial.remove(&IndexedVenue {
            id: rec.id.clone(),
            at: [p.x, p.y],
        });
        self.images.remove_venue(&rec.id);
        if let Some(b) = &rec.brand {
            let key = brand_key(b);
            if let Some(set) = self.brands.get_mut(&key) {
                set.remove(&rec.id);
                if set.is_empty() {
                    self.brands.remove(&key);
                }
            }
        }
    }

    /// Venues in ascending Euclidean distance from `point`, lazily.
    pub fn nearest_iter(&self, point: Point) -> impl Iterator<Item = (&VenueId, f64)> + '_ {
        self.spatial
            .nearest_neighbor_iter_with_distance_2(&[point.x, point.y])
            .map(|(v, d2)| (&v.id, d2.sqrt()))
    }

    /// The `n` venues nearest to `point`, ordered by distance then id.
    pub fn nearest_venues(&self, point: Point, n: usize) -> Vec<(&VenueRecord, f64)> {
        if n == 0 {
            return Vec::new();
        }
        let mut out: Vec<(&VenueId, f64)> = Vec::new();
        for (id, d) in self.nearest_iter(point) {
            // Keep going past n only while distances tie with the n-th.
            if out.len() >= n && d > out[n - 1].1 {
                break;
            }
            out.push((id, d));
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        out.truncate(n);
        out.into_iter().map(|(id, d)| (&self.venues[id], d)).collect()
    }

    /// Familiarity of `user` with `venue`: their check-ins there plus
    /// `brand_weight` times their check-ins at same-brand venues.
    pub fn familiarity_score(&self, user: &str, venue: &VenueId, brand_weight: f64) -> Result<SimilarityScore> {
        let rec = self.get_venue(venue)?;
        let count = |r: &VenueRecord| r.fingerprint.familiarity_counts.get(user).copied().unwrap_or(0);
        let siblings: u32 = match &rec.brand {
            Some(b) => self
                .brand_members(b)
                .filter(|id| *id != venue)
                .map(|id| count(&self.venues[id]))
                .sum(),
            None => 0,
        };
        Ok(familiarity(count(rec), siblings, brand_weight))
    }

    pub fn to_json(&self) -> String {
        let file = StoreFile {
            schema_version: STORE_SCHEMA_VERSION,
            mall_id: self.mall_id.clone(),
            next_id: self.next_id,
            venues: self.venues.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| Error::parse("venue store", &e))?;
        if header.schema_version != STORE_SCHEMA_VERSION {
            return Err(Error::Version {
                what: "venue store",
                found: header.schema_version,
                expected: STORE_SCHEMA_VERSION,
            });
        }
        let file: StoreFile = serde_json::from_str(text).map_err(|e| Error::parse("venue store", &e))?;
        let mut store = VenueStore::new(file.mall_id);
        for rec in file.venues {
            store.upsert_venue(rec)?;
        }
        store.next_id = file.next_id;
        Ok(store)
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

/// File-backed stand-in for an external LBSN venue catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MockLbsnSource {
    pub catalog: Vec<VenueRecord>,
    /// Fraction of real venues the catalog covers.
    pub coverage_ratio: f64,
}

impl MockLbsnSource {
    /// Up to `limit` catalog venues whose claimed location lies within
    /// `radius` of `location`, nearest first.
    pub fn fetch_nearby(&self, location: Point, radius: f64, limit: usize) -> Vec<VenueRecord> {
        let mut hits: Vec<(f64, &VenueRecord)> = self
            .catalog
            .iter()
            .map(|v| (v.claimed_location.point.distance(&location), v))
            .filter(|(d, _)| *d <= radius)
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        hits.into_iter().take(limit).map(|(_, v)| v.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FingerprintConfig;

    pub(crate) fn record(id: &str, x: f64, y: f64) -> VenueRecord {
        VenueRecord {
            id: VenueId::new(id),
            names: vec![format!("Venue {id}")],
            brand: None,
            category: Some(Subcategory::Cafe),
            mall_id: "m".into(),
            claimed_location: Location::new(x, y, 0),
            estimated_location: None,
            fingerprint: VenueFingerprint::empty(&FingerprintConfig::default()),
            tips: vec![],
            image_corpus: vec![],
            checkin_log: vec![],
            stub: false,
        }
    }

    #[test]
    fn upsert_get_roundtrip() {
        let mut s = VenueStore::new("m");
        let r = record("a", 1.0, 1.0);
        s.upsert_venue(r.clone()).unwrap();
        assert_eq!(s.get_venue(&VenueId::new("a")).unwrap(), &r);
        assert!(matches!(s.get_venue(&VenueId::new("zz")), Err(Error::NotFound(_))));
    }

    #[test]
    fn empty_names_rejected() {
        let mut r = record("a", 0.0, 0.0);
        r.names.clear();
        assert!(VenueStore::new("m").upsert_venue(r).is_err());
    }

    #[test]
    fn estimated_location_moves_spatial_entry() {
        let mut s = VenueStore::new("m");
        s.upsert_venue(record("a", 0.0, 0.0)).unwrap();
        s.upsert_venue(record("b", 10.0, 0.0)).unwrap();
        s.update_venue(&VenueId::new("a"), |r| {
            r.estimated_location = Some(Location::new(20.0, 0.0, 0))
        })
        .unwrap();
        let near = s.nearest_venues(Point::new(9.0, 0.0), 1);
        assert_eq!(near[0].0.id.as_str(), "b");
        let near = s.nearest_venues(Point::new(19.0, 0.0), 1);
        assert_eq!(near[0].0.id.as_str(), "a");
    }

    #[test]
    fn fetch_nearby_sorted_and_limited() {
        let src = MockLbsnSource {
            catalog: vec![
                record("a", 5.0, 0.0),
                record("b", 1.0, 0.0),
                record("c", 3.0, 0.0),
                record("far", 100.0, 0.0),
            ],
            coverage_ratio: 1.0,
        };
        let ids = |v: Vec<VenueRecord>| v.into_iter().map(|r| r.id.0).collect::<Vec<_>>();
        assert_eq!(ids(src.fetch_nearby(Point::new(0.0, 0.0), 10.0, 10)), ["b", "c", "a"]);
        assert_eq!(ids(src.fetch_nearby(Point::new(0.0, 0.0), 10.0, 1)), ["b"]);
        assert!(MockLbsnSource::default()
            .fetch_nearby(Point::new(0.0, 0.0), 10.0, 5)
            .is_empty());
    }

    #[test]
    fn familiarity_counts_brand_siblings() {
        let mut s = VenueStore::new("m");
        let mut a = record("a", 0.0, 0.0);
        a.brand = Some("Zara".into());
        let mut b = record("b", 5.0, 0.0);
        b.brand = Some("zara".into());
        b.fingerprint.familiarity_counts.insert("u".into(), 4);
        let mut c = record("c", 9.0, 0.0);
        c.fingerprint.familiarity_counts.insert("u".into(), 3);
        s.upsert_venue(a).unwrap();
        s.upsert_venue(b).unwrap();
        s.upsert_venue(c).unwrap();
        assert_eq!(s.familiarity_score("u", &VenueId::new("a"), 0.5).unwrap().value, 2.0);
        assert_eq!(s.familiarity_score("u", &VenueId::new("c"), 0.5).unwrap().value, 3.0);
        assert_eq!(
            s.familiarity_score("nobody", &VenueId::new("c"), 0.5).unwrap().value,
            0.0
        );
    }

    #[test]
    fn persistence_errors() {
        let mut s = VenueStore::new("m");
        s.upsert_venue(record("a", 0.0, 0.0)).unwrap();
        let text = s.to_json();
        assert_eq!(VenueStore::from_json(&text).unwrap(), s);
        let cut = &text[..text.len() / 2];
        assert!(matches!(VenueStore::from_json(cut), Err(Error::Parse { .. })));
        let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(matches!(
            VenueStore::from_json(&bumped),
            Err(Error::Version { found: 9, .. })
        ));
    }
}

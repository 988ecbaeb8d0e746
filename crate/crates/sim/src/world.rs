//! Synthetic malls: grid layout, access points, per-venue sensing
//! distributions, and the mock LBSN catalog built from them.

use std::collections::BTreeMap;
use std::path::Path;

use lbsn_core::config::FingerprintConfig;
use lbsn_core::fingerprint::{
    build_color_fingerprint, build_magnetic_signature, build_sound_fingerprint, ocr_terms, strongest_ssid, Hsl,
    MobilityObservation, SoundSample, TextFeatures, VenueFingerprint, VisitPeriod, WifiReading, WifiScan,
};
use lbsn_core::fingerprint::{Activity, ColorLightFingerprint};
use lbsn_core::floorplan::{Polygon, WalkEdge, WalkGraph, WalkNode};
use lbsn_core::similarity::edit_distance;
use lbsn_core::store::{CategoryGroup, MockLbsnSource, Subcategory};
use lbsn_core::{CheckInObservation, Floorplan, Location, Point, VenueId, VenueRecord, VenueStore};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{subcategories, LayoutConfig, NoiseModel, RadioConfig, SimConfig};
use crate::error::{SimError, SimResult};

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

/// First and last opening hour.
pub const OPEN_HOURS: (u8, u8) = (10, 21);
const HOURS: usize = (OPEN_HOURS.1 - OPEN_HOURS.0 + 1) as usize;
const MAGNETIC_SAMPLES: usize = 64;
const SOUND_SAMPLES: usize = 400;
const PIXELS_PER_CHECKIN: usize = 48;
const VISTERMS_PER_CHECKIN: usize = 8;
const IMAGES_PER_VENUE: usize = 3;
const VISTERMS_PER_IMAGE: usize = 10;
const REGULARS_PER_VENUE: usize = 2;

/// Independent random stream for one purpose under one seed.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

pub(crate) mod streams {
    pub const LAYOUT: u64 = 1;
    pub const SURVEY: u64 = 2;
    pub const CATALOG: u64 = 3;
    pub const TRACE: u64 = 4;
    pub const EXPERIMENT: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Distance from `p` to the nearest point of the rectangle.
    pub fn distance(&self, p: &Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }

    pub fn sample(&self, margin: f64, rng: &mut impl Rng) -> Point {
        let m = margin.min((self.x1 - self.x0) / 2.0).min((self.y1 - self.y0) / 2.0);
        Point::new(
            rng.random_range(self.x0 + m..=self.x1 - m),
            rng.random_range(self.y0 + m..=self.y1 - m),
        )
    }

    pub fn polygon(&self, id: String) -> Polygon {
        Polygon {
            id,
            floor: 0,
            vertices: vec![
                Point::new(self.x0, self.y0),
                Point::new(self.x1, self.y0),
                Point::new(self.x1, self.y1),
                Point::new(self.x0, self.y1),
            ],
        }
    }
}

/// Geometry of the venue grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub layout: LayoutConfig,
}

impl Grid {
    fn pitch(&self) -> f64 {
        self.layout.corridor_width_m + 2.0 * self.layout.venue_depth_m
    }

    pub fn corridor_count(&self) -> usize {
        self.layout.rows / 2 + 1
    }

    pub fn corridor_center_y(&self, k: usize) -> f64 {
        k as f64 * self.pitch() + self.layout.corridor_width_m / 2.0
    }

    /// Slot rectangle and the corridor its door opens onto.
    pub fn slot(&self, row: usize, col: usize) -> (Rect, usize) {
        let l = &self.layout;
        let b = row / 2;
        let base = b as f64 * self.pitch() + l.corridor_width_m;
        let (y0, door) = if row.is_multiple_of(2) {
            (base, b)
        } else {
            (base + l.venue_depth_m, b + 1)
        };
        let x0 = col as f64 * l.venue_width_m;
        (
            Rect {
                x0,
                y0,
                x1: x0 + l.venue_width_m,
                y1: y0 + l.venue_depth_m,
            },
            door,
        )
    }

    pub fn width(&self) -> f64 {
        self.layout.columns as f64 * self.layout.venue_width_m
    }

    /// Block of back-to-back rows whose span holds height `y`, if any.
    fn block_near(&self, y: f64) -> usize {
        ((y - self.layout.corridor_width_m) / self.pitch()).floor().max(0.0) as usize
    }

    /// Wall lines running along the rows strictly between `lo` and `hi`,
    /// counting at most `cap`.
    fn wall_lines_between(&self, lo: f64, hi: f64, cap: u32) -> u32 {
        let mut count = 0;
        let mut row = 2 * self.block_near(lo).saturating_sub(1);
        let mut last = f64::NEG_INFINITY;
        while row < self.layout.rows && count < cap {
            let (r, _) = self.slot(row, 0);
            if r.y0 >= hi {
                break;
            }
            for y in [r.y0, r.y1] {
                if y != last && y > lo && y < hi {
                    count += 1;
                }
                last = y;
            }
            row += 1;
        }
        count.min(cap)
    }

    fn row_band(&self, p: &Point) -> Option<usize> {
        let b = self.block_near(p.y);
        (2 * b.saturating_sub(1)..(2 * b + 4).min(self.layout.rows)).find(|&r| {
            let (rect, _) = self.slot(r, 0);
            p.y > rect.y0 && p.y < rect.y1
        })
    }

    fn column(&self, p: &Point) -> i64 {
        (p.x / self.layout.venue_width_m).floor() as i64
    }

    /// Walls between two points: wall lines crossed along the rows plus,
    /// when either point is inside a row band, partition walls crossed
    /// between columns. Capped at 4.
    pub fn walls_between(&self, a: &Point, b: &Point) -> u32 {
        let (lo, hi) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
        let in_block = |p: &Point| p.x > 0.0 && p.x < self.width();
        let mut walls = 0u32;
        if in_block(a) || in_block(b) {
            walls += self.wall_lines_between(lo, hi, 4);
        }
        if self.row_band(a).is_some() || self.row_band(b).is_some() {
            let cols = self.layout.columns as i64 - 1;
            let (ca, cb) = (self.column(a).clamp(0, cols), self.column(b).clamp(0, cols));
            walls += ca.abs_diff(cb) as u32;
        }
        walls.min(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub mac: String,
    /// Empty for hidden networks.
    pub ssid: String,
    pub position: Point,
    /// Index of the hosting venue; `None` for corridor access points.
    pub venue: Option<usize>,
}

/// Sensing distributions shared by all branches of a brand (or owned by a
/// single unbranded venue).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalProfile {
    pub category: Subcategory,
    /// Visit weights for each opening hour.
    pub hour_weights: Vec<f64>,
    pub activity_weights: [f64; 3],
    pub duration_weights: Vec<f64>,
    /// Mean and concentration of the Beta amplitude distribution.
    pub loudness: (f64, f64),
    pub palette: Vec<(Hsl, f64)>,
    pub ocr_words: Vec<String>,
    pub visterms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VenueTruth {
    pub id: VenueId,
    pub name: String,
    pub brand: Option<String>,
    pub profile: LogicalProfile,
    pub polygon: String,
    pub rect: Rect,
    /// Walk-graph node the venue's door opens onto.
    pub door_corridor: usize,
    /// SSID broadcast by the venue's named access point, as corrupted.
    pub ssid: Option<String>,
    pub magnetic: [(f64, f64); 3],
    pub regulars: Vec<usize>,
    /// Present in the LBSN catalog.
    pub covered: bool,
}

impl VenueTruth {
    pub fn center(&self) -> Point {
        self.rect.center()
    }

    pub fn location(&self) -> Location {
        Location {
            point: self.center(),
            floor: 0,
        }
    }

    pub fn group(&self) -> CategoryGroup {
        self.profile.category.group()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub mall_id: String,
    pub grid: Grid,
    pub venues: Vec<VenueTruth>,
    pub aps: Vec<AccessPoint>,
    /// Every brand name in the world, sorted.
    pub brands: Vec<String>,
    pub users: Vec<String>,
    /// Per-user RSS offset of their phone, dB.
    pub device_offsets: Vec<f64>,
}

impl GroundTruth {
    pub fn index_of(&self, id: &VenueId) -> Option<usize> {
        self.venues.binary_search_by(|v| v.id.cmp(id)).ok()
    }

    pub fn venue(&self, id: &VenueId) -> Option<&VenueTruth> {
        self.index_of(id).map(|i| &self.venues[i])
    }

    /// Venue whose rectangle contains `p`.
    pub fn venue_at(&self, p: &Point) -> Option<usize> {
        self.venues.iter().position(|v| v.rect.contains(p))
    }

    /// Venues whose centers lie within `radius` of venue `i`, by index.
    pub fn neighbors(&self, i: usize, radius: f64) -> Vec<usize> {
        let c = self.venues[i].center();
        (0..self.venues.len())
            .filter(|&j| j != i && self.venues[j].center().distance(&c) <= radius)
            .collect()
    }

    /// Access points whose noiseless RSS reaches the sensitivity somewhere
    /// in venue `i` for a device with offset `offset_db`.
    pub fn audible_aps(&self, i: usize, radio: &RadioConfig, offset_db: f64) -> Vec<&str> {
        let v = &self.venues[i];
        let inside = v.center();
        self.aps
            .iter()
            .filter(|ap| {
                let d = v.rect.distance(&ap.position);
                let walls = self.grid.walls_between(&inside, &ap.position);
                // Readings are rounded to whole dB.
                path_loss_rss(radio, d, walls) + offset_db >= radio.sensitivity_dbm - 0.5
            })
            .map(|ap| ap.mac.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> SimResult<Self> {
        let t: GroundTruth = serde_json::from_str(text).map_err(|e| SimError::parse("ground truth", e))?;
        if t.schema_version != TRUTH_SCHEMA_VERSION {
            return Err(SimError::parse(
                "ground truth",
                format!("unsupported schema version {}", t.schema_version),
            ));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> SimResult<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| SimError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> SimResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean RSS before noise at horizontal distance `d` through `walls` walls.
pub fn path_loss_rss(radio: &RadioConfig, d: f64, walls: u32) -> f64 {
    let d = d.hypot(radio.ap_height_m).max(1.0);
    radio.tx_power_dbm - 10.0 * radio.path_loss_exponent * d.log10() - radio.wall_loss_db * walls as f64
}

/// A generated mall.
#[derive(Debug, Clone)]
pub struct Mall {
    pub truth: GroundTruth,
    pub floorplan: Floorplan,
    /// Surveyed records of every venue, covered or not.
    pub records: Vec<VenueRecord>,
    pub catalog: MockLbsnSource,
}

impl Mall {
    /// Store initialized from the catalog.
    pub fn store(&self) -> SimResult<VenueStore> {
        store_of(&self.truth.mall_id, &self.catalog.catalog)
    }

    /// Store holding every venue.
    pub fn full_store(&self) -> SimResult<VenueStore> {
        store_of(&self.truth.mall_id, &self.records)
    }
}

fn store_of(mall_id: &str, records: &[VenueRecord]) -> SimResult<VenueStore> {
    let mut s = VenueStore::new(mall_id);
    for r in records {
        s.upsert_venue(r.clone())?;
    }
    Ok(s)
}

const SYLLABLES: [&str; 32] = [
    "ka", "lo", "mi", "ran", "tes", "vo", "zu", "bel", "cor", "dan", "fi", "gor", "hul", "ja", "ki", "lum", "mor",
    "nev", "pa", "qui", "ros", "sil", "tam", "ur", "vex", "wim", "yar", "zen", "bri", "clo", "dre", "fla",
];

/// `n` capitalized names, pairwise at least `min_edit` edits apart and
/// free of stoplisted substrings.
/// Whether `edit_distance(a, b) >= k`, stopping as soon as every cell of
/// a row reaches `k`. Short ASCII strings avoid allocation.
fn edits_at_least(a: &str, b: &str, k: usize) -> bool {
    const MAX: usize = 48;
    if a.len().abs_diff(b.len()) >= k {
        return true;
    }
    if !a.is_ascii() || !b.is_ascii() || b.len() >= MAX {
        return edit_distance(a, b) >= k;
    }
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut prev = [0usize; MAX];
    let mut cur = [0usize; MAX];
    for (j, p) in prev.iter_mut().enumerate().take(b.len() + 1) {
        *p = j;
    }
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(!ca.eq_ignore_ascii_case(cb));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min >= k {
            return true;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] >= k
}

pub fn generate_names(n: usize, min_edit: usize, stoplist: &[String], rng: &mut impl Rng) -> SimResult<Vec<String>> {
    let mut names: Vec<String> = Vec::with_capacity(n);
    let mut syllables = 3;
    let mut failures = 0;
    while names.len() < n {
        let raw: String = (0..syllables)
            .map(|_| *SYLLABLES.choose(rng).expect("nonempty"))
            .collect();
        let name = capitalize(&raw);
        let ok = !lbsn_core::fingerprint::is_stoplisted(&name, stoplist)
            && names.iter().all(|m| edits_at_least(m, &name, min_edit));
        if ok {
            names.push(name);
            failures = 0;
        } else {
            failures += 1;
            if failures > 2_000 {
                syllables += 1;
                failures = 0;
                if syllables > 8 {
                    return Err(SimError::Config(format!("cannot draw {n} distinct names")));
                }
            }
        }
    }
    Ok(names)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Applies `edits` random single-character edits (substitution, insertion
/// or deletion) to `s`.
pub fn corrupt(s: &str, edits: u32, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    for _ in 0..edits {
        let letter = |rng: &mut dyn rand::RngCore| (b'a' + rng.random_range(0..26u8)) as char;
        match rng.random_range(0..3) {
            0 if !chars.is_empty() => {
                let i = rng.random_range(0..chars.len());
                let mut c = letter(rng);
                while c.eq_ignore_ascii_case(&chars[i]) {
                    c = letter(rng);
                }
                chars[i] = c;
            }
            1 if chars.len() > 1 => {
                let i = rng.random_range(0..chars.len());
                chars.remove(i);
            }
            _ => {
                let i = rng.random_range(0..=chars.len());
                chars.insert(i, letter(rng));
            }
        }
    }
    chars.into_iter().collect()
}

fn category_words(s: Subcategory) -> &'static [&'static str] {
    use Subcategory::*;
    match s {
        Restaurant => &["grill", "menu", "dinner", "kitchen"],
        Cafe => &["coffee", "espresso", "latte", "roastery"],
        DessertShop => &["cakes", "waffles", "sweets", "crepes"],
        IceCreamShop => &["gelato", "scoops", "cones", "sundae"],
        Bakery => &["bread", "pastry", "croissant", "oven"],
        ClothingStore => &["fashion", "denim", "collection", "sale"],
        AccessoriesStore => &["bags", "belts", "scarves", "watches"],
        ShoeStore => &["shoes", "sneakers", "boots", "sandals"],
        CosmeticStore => &["beauty", "makeup", "fragrance", "skincare"],
        JewelryStore => &["gold", "diamonds", "rings", "silver"],
        Cinema => &["tickets", "screens", "popcorn", "premiere"],
        Theater => &["stage", "tickets", "play", "seats"],
        Gym => &["fitness", "training", "cardio", "weights"],
        GamingRoom => &["arcade", "games", "console", "tokens"],
        PoolHall => &["billiards", "cue", "tables", "snooker"],
        BookStore => &["books", "novels", "stationery", "magazines"],
        Bar => &["drinks", "cocktails", "lounge", "happy"],
        Salon => &["hair", "nails", "styling", "spa"],
        HighTechOutlet => &["phones", "laptops", "gadgets", "electronics"],
        GroceryStore => &["grocery", "fresh", "produce", "market"],
        DepartmentStore => &["home", "departments", "brands", "floors"],
        Supermarket => &["supermarket", "aisles", "deals", "checkout"],
    }
}

struct GroupTraits {
    hours: [f64; HOURS],
    activity: [f64; 3],
    duration: &'static [f64],
    loudness: f64,
    hue: f64,
}

fn group_traits(g: CategoryGroup) -> GroupTraits {
    match g {
        CategoryGroup::FoodRestaurants => GroupTraits {
            hours: [0.3, 0.6, 1.5, 2.0, 1.2, 0.5, 0.5, 0.8, 1.5, 2.0, 1.6, 0.8],
            activity: [0.75, 0.2, 0.05],
            duration: &[0.1, 0.45, 0.3, 0.15],
            loudness: 0.55,
            hue: 0.05,
        },
        CategoryGroup::ClothingFashion => GroupTraits {
            hours: [0.6, 0.8, 1.0, 1.0, 1.0, 1.1, 1.2, 1.3, 1.3, 1.2, 1.0, 0.8],
            activity: [0.1, 0.6, 0.3],
            duration: &[0.55, 0.35, 0.1],
            loudness: 0.3,
            hue: 0.6,
        },
        CategoryGroup::EntertainmentArts => GroupTraits {
            hours: [0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.5, 2.0, 2.5, 2.5, 2.0],
            activity: [0.6, 0.25, 0.15],
            duration: &[0.05, 0.15, 0.25, 0.3, 0.25],
            loudness: 0.7,
            hue: 0.8,
        },
        CategoryGroup::Others => GroupTraits {
            hours: [1.0, 1.1, 1.1, 1.0, 0.9, 1.0, 1.1, 1.2, 1.2, 1.0, 0.8, 0.6],
            activity: [0.2, 0.4, 0.4],
            duration: &[0.5, 0.35, 0.15],
            loudness: 0.4,
            hue: 0.3,
        },
    }
}

fn jitter_weights(ws: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    ws.iter().map(|w| w * rng.random_range(0.5..1.5)).collect()
}

fn make_profile(category: Subcategory, name: &str, tag: usize, rng: &mut impl Rng) -> LogicalProfile {
    let t = group_traits(category.group());
    let activity = jitter_weights(&t.activity, rng);
    let mut palette = Vec::new();
    for share in [0.5, 0.3, 0.2] {
        let hue = (t.hue + rng.random_range(-0.2..0.2)).rem_euclid(1.0);
        palette.push(([hue, rng.random_range(0.15..0.95), rng.random_range(0.15..0.85)], share));
    }
    let mut words = vec![name.to_lowercase()];
    words.extend(category_words(category).iter().map(|w| w.to_string()));
    LogicalProfile {
        category,
        hour_weights: jitter_weights(&t.hours, rng),
        activity_weights: [activity[0], activity[1], activity[2]],
        duration_weights: jitter_weights(t.duration, rng),
        loudness: ((t.loudness + rng.random_range(-0.2..0.2)).clamp(0.05, 0.95), 40.0),
        palette,
        ocr_words: words,
        visterms: (0..12).map(|j| format!("b{tag}t{j}")).collect(),
    }
}

fn group_visterms(g: CategoryGroup) -> Vec<String> {
    (0..6).map(|j| format!("g{}t{j}", g as u8)).collect()
}

fn weighted_index(ws: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = ws.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in ws.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    ws.len() - 1
}

/// Builds the mall for `cfg`: layout, venues, access points, survey
/// fingerprints and the catalog with its coverage gaps.
pub fn generate_mall(cfg: &SimConfig) -> SimResult<Mall> {
    cfg.validate()?;
    let l = &cfg.layout;
    let n = cfg.venue_count;
    if n > l.rows * l.columns {
        return Err(SimError::Layout(format!(
            "{n} venues do not fit a {}x{} grid",
            l.rows, l.columns
        )));
    }
    let mut rng = stream(cfg.seed, streams::LAYOUT);
    let grid = Grid { layout: l.clone() };
    let fp_cfg = &cfg.engine.fingerprint;

    // Categories by apportioned counts, shuffled over the slots.
    let mut cats: Vec<Subcategory> = Vec::with_capacity(n);
    for (g, count) in cfg.category_mix.apportion(n) {
        let subs = subcategories(g);
        for _ in 0..count {
            cats.push(*subs.choose(&mut rng).expect("nonempty group"));
        }
    }
    cats.shuffle(&mut rng);

    let names = generate_names(2 * n, 4, &fp_cfg.ssid_stoplist, &mut rng)?;
    let mut name_pool = names.into_iter();

    // Brands: a branded venue joins an existing brand of its subcategory
    // with probability 0.2, otherwise founds one.
    let branded = (cfg.brand_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut brand_of: Vec<Option<usize>> = vec![None; n];
    let mut brands: Vec<(String, LogicalProfile)> = Vec::new();
    for &i in order.iter().take(branded) {
        let same: Vec<usize> = (0..brands.len()).filter(|&b| brands[b].1.category == cats[i]).collect();
        let b = if !same.is_empty() && rng.random_bool(0.2) {
            *same.choose(&mut rng).expect("nonempty")
        } else {
            let name = name_pool.next().expect("enough names");
            let profile = make_profile(cats[i], &name, brands.len(), &mut rng);
            brands.push((name, profile));
            brands.len() - 1
        };
        brand_of[i] = Some(b);
    }
    // A few extra brands only known from the brand list.
    for _ in 0..(n / 10).max(1) {
        let name = name_pool.next().expect("enough names");
        let cat = *cats.choose(&mut rng).expect("nonempty");
        let profile = make_profile(cat, &name, brands.len(), &mut rng);
        brands.push((name, profile));
    }

    let mut uncovered: Vec<usize> = (0..n).collect();
    uncovered.shuffle(&mut rng);
    uncovered.truncate((cfg.coverage_gap * n as f64).round() as usize);

    let users: Vec<String> = (0..cfg.user_count).map(|u| format!("u{u:03}")).collect();
    let offset = Normal::new(0.0, cfg.radio.device_offset_db).expect("valid std");
    let device_offsets: Vec<f64> = users.iter().map(|_| round1(offset.sample(&mut rng))).collect();

    let mut venues = Vec::with_capacity(n);
    let mut aps = Vec::new();
    let mut polygons = Vec::new();
    let mut mac = 0usize;
    let mut next_mac = || {
        mac += 1;
        format!(
            "02:00:{:02x}:{:02x}:{:02x}:{:02x}",
            (mac >> 24) & 0xff,
            (mac >> 16) & 0xff,
            (mac >> 8) & 0xff,
            mac & 0xff
        )
    };
    for i in 0..n {
        let (row, col) = (i / l.columns, i % l.columns);
        let (rect, door) = grid.slot(row, col);
        let (name, brand, profile) = match brand_of[i] {
            Some(b) => (brands[b].0.clone(), Some(brands[b].0.clone()), brands[b].1.clone()),
            None => {
                let name = name_pool.next().expect("enough names");
                let profile = make_profile(cats[i], &name, brands.len() + i, &mut rng);
                (name, None, profile)
            }
        };
        let named = rng.random_bool(cfg.radio.named_ssid_fraction);
        let ssid = named.then(|| {
            let k = rng.random_range(0..=cfg.noise.ssid_corruption_edits);
            corrupt(&name, k, &mut rng)
        });
        for a in 0..cfg.radio.aps_per_venue {
            aps.push(AccessPoint {
                mac: next_mac(),
                ssid: if a == 0 {
                    ssid.clone().unwrap_or_default()
                } else {
                    String::new()
                },
                position: rect.sample(2.0, &mut rng),
                venue: Some(i),
            });
        }
        let magnetic = [(); 3].map(|_| (rng.random_range(0.5..6.0), rng.random_range(1.0..12.0)));
        let regulars = (0..REGULARS_PER_VENUE)
            .map(|_| rng.random_range(0..cfg.user_count))
            .collect();
        let polygon = format!("p{row:02}-{col:02}");
        polygons.push(rect.polygon(polygon.clone()));
        venues.push(VenueTruth {
            id: VenueId::new(format!("{}-t{i:04}", cfg.mall_id)),
            name,
            brand,
            profile,
            polygon,
            rect,
            door_corridor: door,
            ssid,
            magnetic,
            regulars,
            covered: !uncovered.contains(&i),
        });
    }
    let providers = ["linksys", "netgear", "tp-link", "vodafone"];
    for k in 0..grid.corridor_count() {
        let y = grid.corridor_center_y(k);
        let spacing = cfg.radio.corridor_ap_spacing_m;
        let mut x = spacing / 2.0;
        while x < grid.width() {
            aps.push(AccessPoint {
                mac: next_mac(),
                ssid: format!("{}-{}", providers[aps.len() % providers.len()], aps.len()),
                position: Point::new(x, y),
                venue: None,
            });
            x += spacing;
        }
    }
    let mut brand_names: Vec<String> = brands.into_iter().map(|(b, _)| b).collect();
    brand_names.sort();

    let truth = GroundTruth {
        schema_version: TRUTH_SCHEMA_VERSION,
        mall_id: cfg.mall_id.clone(),
        grid: grid.clone(),
        venues,
        aps,
        brands: brand_names,
        users,
        device_offsets,
    };
    let mut floorplan = Floorplan::new(polygons, walk_graph(&truth))?;
    floorplan.ground_truth = truth.venues.iter().map(|v| (v.polygon.clone(), v.id.clone())).collect();

    let records = survey(&truth, cfg)?;
    let catalog = MockLbsnSource {
        catalog: records
            .iter()
            .zip(&truth.venues)
            .filter(|(_, v)| v.covered)
            .map(|(r, _)| r.clone())
            .collect(),
        coverage_ratio: 1.0 - uncovered.len() as f64 / n as f64,
    };
    Ok(Mall {
        truth,
        floorplan,
        records,
        catalog,
    })
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Corridor center lines with a node at each door, side corridors joining
/// the ends, and one node per venue linked to its door.
fn walk_graph(truth: &GroundTruth) -> WalkGraph {
    let grid = &truth.grid;
    let l = &grid.layout;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let cw = l.corridor_width_m;
    // corridor k: left end, doors 0..columns, right end
    let per = l.columns + 2;
    for k in 0..grid.corridor_count() {
        let y = grid.corridor_center_y(k);
        nodes.push(WalkNode {
            point: Point::new(-cw / 2.0, y),
            floor: 0,
        });
        for c in 0..l.columns {
            nodes.push(WalkNode {
                point: Point::new((c as f64 + 0.5) * l.venue_width_m, y),
                floor: 0,
            });
        }
        nodes.push(WalkNode {
            point: Point::new(grid.width() + cw / 2.0, y),
            floor: 0,
        });
        let base = k * per;
        for j in 0..per - 1 {
            edges.push(WalkEdge {
                a: base + j,
                b: base + j + 1,
                length: None,
            });
        }
        if k > 0 {
            let prev = (k - 1) * per;
            edges.push(WalkEdge {
                a: prev,
                b: base,
                length: None,
            });
            edges.push(WalkEdge {
                a: prev + per - 1,
                b: base + per - 1,
                length: None,
            });
        }
    }
    for (i, v) in truth.venues.iter().enumerate() {
        let col = i % l.columns;
        let door = v.door_corridor * per + 1 + col;
        nodes.push(WalkNode {
            point: v.center(),
            floor: 0,
        });
        edges.push(WalkEdge {
            a: door,
            b: nodes.len() - 1,
            length: None,
        });
    }
    WalkGraph { nodes, edges }
}

/// One user's stay at a venue.
#[derive(Debug, Clone, Copy)]
pub struct Visit {
    pub venue: usize,
    pub user: usize,
    pub position: Point,
    pub hour: u8,
    pub timestamp: f64,
}

impl Visit {
    pub fn draw(truth: &GroundTruth, venue: usize, user: usize, rng: &mut impl Rng) -> Visit {
        let v = &truth.venues[venue];
        let hour = OPEN_HOURS.0 + weighted_index(&v.profile.hour_weights, rng) as u8;
        let day = rng.random_range(0..28u32) as f64;
        Visit {
            venue,
            user,
            position: visit_position(&v.rect, truth.grid.layout.visit_spread_m, rng),
            hour,
            timestamp: day * 86_400.0 + hour as f64 * 3_600.0 + rng.random_range(0.0..3_300.0f64).floor(),
        }
    }
}

/// Where a visitor stands: normally spread around the venue center and
/// kept half a meter inside the walls, or uniform when `spread` is 0.
fn visit_position(rect: &Rect, spread: f64, rng: &mut impl Rng) -> Point {
    let c = rect.center();
    if spread <= 0.0 {
        return c;
    }
    let n = Normal::new(0.0, spread).expect("valid std");
    let clamp = |v: f64, lo: f64, hi: f64| v.clamp(lo + 0.5, hi - 0.5);
    Point::new(
        clamp(c.x + n.sample(rng), rect.x0, rect.x1),
        clamp(c.y + n.sample(rng), rect.y0, rect.y1),
    )
}

/// Senses a visit: WiFi scans, mobility, sound, color, magnetic and text
/// features, and the localized position.
pub fn sense(
    truth: &GroundTruth,
    radio: &RadioConfig,
    noise: &NoiseModel,
    fp_cfg: &FingerprintConfig,
    visit: &Visit,
    rng: &mut impl Rng,
) -> SimResult<CheckInObservation> {
    let v = &truth.venues[visit.venue];
    let p = &v.profile;
    let jitter = Normal::new(0.0, noise.rss_jitter_db).expect("valid std");
    let offset = truth.device_offsets.get(visit.user).copied().unwrap_or(0.0);
    // Mean RSS per access point, skipping those too weak to ever be heard.
    // Walls only attenuate, so the wall-free loss screens most of them.
    let floor = radio.sensitivity_dbm - 4.0 * noise.rss_jitter_db;
    let audible: Vec<(&AccessPoint, f64)> = truth
        .aps
        .iter()
        .filter_map(|ap| {
            let d = ap.position.distance(&visit.position);
            if path_loss_rss(radio, d, 0) + offset < floor {
                return None;
            }
            let walls = truth.grid.walls_between(&visit.position, &ap.position);
            let mean = path_loss_rss(radio, d, walls) + offset;
            (mean >= floor).then_some((ap, mean))
        })
        .collect();
    let mut scans = Vec::with_capacity(radio.scans_per_checkin);
    for s in 0..radio.scans_per_checkin {
        let mut readings = Vec::new();
        for &(ap, mean) in &audible {
            let rss = (mean + jitter.sample(rng)).round();
            let dropped = noise.ap_dropout > 0.0 && rng.random_bool(noise.ap_dropout);
            if rss >= radio.sensitivity_dbm && !dropped {
                readings.push(WifiReading {
                    mac: ap.mac.clone(),
                    ssid: ap.ssid.clone(),
                    rss: rss.min(0.0),
                });
            }
        }
        readings.sort_by(|a, b| a.mac.cmp(&b.mac));
        scans.push(WifiScan {
            readings,
            timestamp: visit.timestamp + 10.0 * s as f64,
        });
    }
    if scans.iter().all(|s| s.readings.is_empty()) {
        // A phone always hears something in a mall; keep the strongest AP.
        let ap = truth
            .aps
            .iter()
            .min_by(|a, b| {
                a.position
                    .distance(&visit.position)
                    .total_cmp(&b.position.distance(&visit.position))
            })
            .expect("mall has access points");
        scans[0].readings.push(WifiReading {
            mac: ap.mac.clone(),
            ssid: ap.ssid.clone(),
            rss: radio.sensitivity_dbm,
        });
    }

    let mobility = MobilityObservation {
        visit_period: VisitPeriod::from_hour(visit.hour as f64, &fp_cfg.period_starts),
        activity: Activity::ALL[weighted_index(&p.activity_weights, rng)],
        duration_bucket: weighted_index(&p.duration_weights, rng) as u32,
    };

    let (mean, conc) = p.loudness;
    let beta = Beta::new(mean * conc, (1.0 - mean) * conc).expect("valid beta");
    let amps: Vec<f64> = (0..SOUND_SAMPLES).map(|_| beta.sample(rng)).collect();
    let sound = SoundSample::new(visit.hour, build_sound_fingerprint(&amps)?)?;

    let spread = Normal::new(0.0, 0.04).expect("valid std");
    let shares: Vec<f64> = p.palette.iter().map(|(_, s)| *s).collect();
    let pixels: Vec<Hsl> = (0..PIXELS_PER_CHECKIN)
        .map(|_| {
            let (c, _) = p.palette[weighted_index(&shares, rng)];
            c.map(|x| round3((x + spread.sample(rng)).clamp(0.0, 1.0)))
        })
        .collect();
    let color: ColorLightFingerprint =
        build_color_fingerprint(&pixels, fp_cfg.color_k, fp_cfg.kmeans_seed, fp_cfg.kmeans_max_iter)?;

    let field_noise = Normal::new(0.0, 0.3).expect("valid std");
    let readings: Vec<[f64; 3]> = (0..MAGNETIC_SAMPLES)
        .map(|t| {
            let phase = t as f64 / MAGNETIC_SAMPLES as f64 * std::f64::consts::TAU;
            [0, 1, 2].map(|k| {
                let (amp, freq) = v.magnetic[k];
                let base = [22.0, 4.0, -41.0][k];
                base + amp * (freq * phase).sin() + field_noise.sample(rng)
            })
        })
        .collect();
    let magnetic = build_magnetic_signature(&readings)?;

    let mut words: Vec<&str> = Vec::new();
    if rng.random_bool(0.7) {
        words.push(&p.ocr_words[0]);
    }
    for w in &p.ocr_words[1..] {
        if rng.random_bool(0.35) {
            words.push(w);
        }
    }
    let group_terms = group_visterms(p.category.group());
    let mut visterms = BTreeMap::new();
    for _ in 0..VISTERMS_PER_CHECKIN {
        let t = if rng.random_bool(0.6) {
            p.visterms.choose(rng).expect("nonempty")
        } else {
            group_terms.choose(rng).expect("nonempty")
        };
        *visterms.entry(t.clone()).or_insert(0) += 1;
    }
    let text = TextFeatures {
        ssid_strongest: strongest_ssid(&scans, &fp_cfg.ssid_stoplist),
        ocr_terms: ocr_terms(words, &fp_cfg.stop_words),
        visterms,
    };

    let loc = if noise.location_error_m > 0.0 {
        let e = Normal::new(0.0, noise.location_error_m).expect("valid std");
        Point::new(visit.position.x + e.sample(rng), visit.position.y + e.sample(rng))
    } else {
        visit.position
    };
    Ok(CheckInObservation {
        user: truth.users[visit.user].clone(),
        wifi_scans: scans,
        mobility,
        sound: Some(sound),
        color: Some(color),
        color_pixels: pixels,
        magnetic: Some(magnetic),
        text,
        location: Location {
            point: Point::new(round3(loc.x), round3(loc.y)),
            floor: 0,
        },
        timestamp: visit.timestamp,
    })
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// A user for a check-in claimed at `venue`: one of its regulars half the
/// time, anyone otherwise.
pub fn pick_user(truth: &GroundTruth, venue: usize, rng: &mut impl Rng) -> usize {
    let v = &truth.venues[venue];
    if !v.regulars.is_empty() && rng.random_bool(0.5) {
        *v.regulars.choose(rng).expect("nonempty")
    } else {
        rng.random_range(0..truth.users.len())
    }
}

/// Survey fingerprints and catalog metadata for every venue.
fn survey(truth: &GroundTruth, cfg: &SimConfig) -> SimResult<Vec<VenueRecord>> {
    let fp_cfg = &cfg.engine.fingerprint;
    let mut rng = stream(cfg.seed, streams::SURVEY);
    let mut cat_rng = stream(cfg.seed, streams::CATALOG);
    let claimed = Normal::new(0.0, cfg.claimed_location_error_m).expect("valid std");
    let mut out = Vec::with_capacity(truth.venues.len());
    for (i, v) in truth.venues.iter().enumerate() {
        let mut fp = VenueFingerprint::empty(fp_cfg);
        for _ in 0..cfg.survey_visits {
            let user = pick_user(truth, i, &mut rng);
            let visit = Visit::draw(truth, i, user, &mut rng);
            let obs = sense(truth, &cfg.radio, &cfg.noise, fp_cfg, &visit, &mut rng)?;
            fp.merge_in_place(&obs, fp_cfg)?;
        }
        let c = v.center();
        let words = &v.profile.ocr_words;
        let tips = vec![
            format!(
                "Great {} at {}",
                words[1 + cat_rng.random_range(0..words.len() - 1)],
                v.name
            ),
            format!("Try the {}", words[1 + cat_rng.random_range(0..words.len() - 1)]),
        ];
        let group_terms = group_visterms(v.group());
        let image_corpus = (0..IMAGES_PER_VENUE)
            .map(|_| {
                let mut img = BTreeMap::new();
                for _ in 0..VISTERMS_PER_IMAGE {
                    let t = if cat_rng.random_bool(0.6) {
                        v.profile.visterms.choose(&mut cat_rng).expect("nonempty")
                    } else {
                        group_terms.choose(&mut cat_rng).expect("nonempty")
                    };
                    *img.entry(t.clone()).or_insert(0) += 1;
                }
                img
            })
            .collect();
        out.push(VenueRecord {
            id: v.id.clone(),
            names: vec![v.name.clone()],
            brand: v.brand.clone(),
            category: Some(v.profile.category),
            mall_id: truth.mall_id.clone(),
            claimed_location: Location {
                point: Point::new(
                    round3(c.x + claimed.sample(&mut cat_rng)),
                    round3(c.y + claimed.sample(&mut cat_rng)),
                ),
                floor: 0,
            },
            estimated_location: None,
            fingerprint: fp,
            tips,
            image_corpus,
            checkin_log: Vec::new(),
            stub: false,
        });
    }
    Ok(out)
}

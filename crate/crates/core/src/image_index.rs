//! Inverted index from visterm tokens to the venue images containing them.

use std::collections::{BTreeMap, BTreeSet};

use crate::VenueId;

type ImageKey = (VenueId, u32);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, BTreeSet<ImageKey>>,
    images: BTreeMap<VenueId, Vec<BTreeSet<String>>>,
    n_images: usize,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build<'a, I>(corpus: I) -> Self
    where
        I: IntoIterator<Item = (&'a VenueId, &'a [BTreeMap<String, u32>])>,
    {
        let mut index = Self::new();
        for (venue, images) in corpus {
            index.set_venue_images(venue, images);
        }
        index
    }

    /// Replaces every image of `venue`.
    pub fn set_venue_images(&mut self, venue: &VenueId, images: &[BTreeMap<String, u32>]) {
        self.remove_venue(venue);
        if images.is_empty() {
            return;
        }
        let mut terms_per_image = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let terms: BTreeSet<String> = img.iter().filter(|(_, &c)| c > 0).map(|(t, _)| t.clone()).collect();
            for t in &terms {
                self.postings
                    .entry(t.clone())
                    .or_default()
                    .insert((venue.clone(), i as u32));
            }
            terms_per_image.push(terms);
        }
        self.n_images += images.len();
        self.images.insert(venue.clone(), terms_per_image);
    }

    pub fn remove_venue(&mut self, venue: &VenueId) {
        let Some(old) = self.images.remove(venue) else {
            return;
        };
        self.n_images -= old.len();
        for (i, terms) in old.iter().enumerate() {
            for t in terms {
                if let Some(p) = self.postings.get_mut(t) {
                    p.remove(&(venue.clone(), i as u32));
                    if p.is_empty() {
                        self.postings.remove(t);
                    }
                }
            }
        }
    }

    pub fn image_count(&self) -> usize {
        self.n_images
    }

    /// Number of images containing `term`.
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeSet::len)
    }

    /// `ln(N / df)`; `None` for terms absent from the corpus.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = self.document_frequency(term);
        (df > 0).then(|| (self.n_images as f64 / df as f64).ln())
    }

    /// Whether any image of `venue` contains `term`.
    pub fn venue_contains(&self, venue: &VenueId, term: &str) -> bool {
        self.images
            .get(venue)
            .is_some_and(|imgs| imgs.iter().any(|t| t.contains(term)))
    }

    pub fn has_images(&self, venue: &VenueId) -> bool {
        self.images.contains_key(venue)
    }
}

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::mix_seed;

/// Per-field embedding table. Rows are stored contiguously in registration
/// order; `index` maps a categorical id to its row.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "RawTable", into = "RawTable")]
pub struct EmbeddingTable {
    field_name: String,
    field_index: usize,
    dim: usize,
    init_scale: f64,
    ids: Vec<u32>,
    data: Vec<f64>,
    index: HashMap<u32, usize>,
}

impl EmbeddingTable {
    pub fn new(field_name: impl Into<String>, field_index: usize, dim: usize, init_scale: f64) -> Self {
        Self {
            field_name: field_name.into(),
            field_index,
            dim,
            init_scale,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn contains(&self, id: u32) -> bool {
        self.index.contains_key(&id)
    }

    #[inline]
    pub fn row_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        self.row_index(id).map(|r| self.row_at(r))
    }

    #[inline]
    pub fn row_at(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    #[inline]
    pub fn row_at_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Flat row-major storage, `len() * dim()` values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The row a fresh id receives. Depends only on `(seed, field, id)`.
    pub fn fresh_row(&self, seed: u64, id: u32) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, self.field_index as u64, id as u64]));
        (0..self.dim)
            .map(|_| {
                if self.init_scale > 0.0 {
                    rng.gen_range(-self.init_scale..=self.init_scale)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Registers `id` with its seeded fresh row. Returns false (and leaves the
    /// row alone) when the id is already present.
    pub fn register(&mut self, seed: u64, id: u32) -> bool {
        if self.contains(id) {
            return false;
        }
        let row = self.fresh_row(seed, id);
        self.push_row(id, &row);
        true
    }

    pub(crate) fn push_row(&mut self, id: u32, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.index.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(row);
    }

    /// Bitwise equality of the full table, including row order.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.field_name == other.field_name
            && self.field_index == other.field_index
            && self.dim == other.dim
            && self.init_scale.to_bits() == other.init_scale.to_bits()
            && self.ids == other.ids
            && bits_eq(&self.data, &other.data)
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.bits_eq(other)
    }
}

pub(crate) fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    field_name: String,
    field_index: usize,
    dim: usize,
    init_scale: f64,
    ids: Vec<u32>,
    data: Vec<f64>,
}

impl From<RawTable> for EmbeddingTable {
    fn from(raw: RawTable) -> Self {
        let index = raw.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        Self {
            field_name: raw.field_name,
            field_index: raw.field_index,
            dim: raw.dim,
            init_scale: raw.init_scale,
            ids: raw.ids,
            data: raw.data,
            index,
        }
    }
}

impl From<EmbeddingTable> for RawTable {
    fn from(t: EmbeddingTable) -> Self {
        Self {
            field_name: t.field_name,
            field_index: t.field_index,
            dim: t.dim,
            init_scale: t.init_scale,
            ids: t.ids,
            data: t.data,
        }
    }
}

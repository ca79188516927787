//! Categorical feature layout of a click sample `x = (u, v, c)`.

use serde::{Deserialize, Serialize};

use crate::error::{ColfError, Result};
use crate::stream::ClickSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    User,
    Item,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub dim: usize,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, kind: FieldKind, dim: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            dim,
        }
    }
}

/// Where a field reads its id from inside a [`ClickSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSlot {
    User,
    Item,
    Context(usize),
}

impl FieldSlot {
    #[inline]
    pub fn id(self, sample: &ClickSample) -> u32 {
        match self {
            FieldSlot::User => sample.user_id,
            FieldSlot::Item => sample.item_id,
            FieldSlot::Context(k) => sample.context_ids[k],
        }
    }
}

/// Ordered list of categorical fields. Exactly one user field and one item
/// field; any number of context fields, read in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldSpec>", into = "Vec<FieldSpec>")]
pub struct FeatureSchema {
    fields: Vec<FieldSpec>,
}

impl FeatureSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let users = fields.iter().filter(|f| f.kind == FieldKind::User).count();
        let items = fields.iter().filter(|f| f.kind == FieldKind::Item).count();
        if users != 1 || items != 1 {
            return Err(ColfError::InvalidConfig(format!(
                "schema needs exactly one user and one item field (got {users} user, {items} item)"
            )));
        }
        if let Some(f) = fields.iter().find(|f| f.dim == 0) {
            return Err(ColfError::InvalidConfig(format!(
                "field '{}' has zero embedding dim",
                f.name
            )));
        }
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(ColfError::InvalidConfig(format!(
                    "duplicate field name '{}'",
                    f.name
                )));
            }
        }
        Ok(Self { fields })
    }

    /// `user`, `item` and `n_context` context fields `ctx_1..`, all of width `dim`.
    pub fn ctr(n_context: usize, dim: usize) -> Result<Self> {
        let mut fields = vec![
            FieldSpec::new("user", FieldKind::User, dim),
            FieldSpec::new("item", FieldKind::Item, dim),
        ];
        for k in 0..n_context {
            fields.push(FieldSpec::new(format!("ctx_{}", k + 1), FieldKind::Context, dim));
        }
        Self::new(fields)
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn n_context(&self) -> usize {
        self.fields
            .iter()
            .filter(|f| f.kind == FieldKind::Context)
            .count()
    }

    /// Width of the concatenated embedding vector.
    pub fn input_width(&self) -> usize {
        self.fields.iter().map(|f| f.dim).sum()
    }

    pub fn slots(&self) -> Vec<FieldSlot> {
        let mut ctx = 0;
        self.fields
            .iter()
            .map(|f| match f.kind {
                FieldKind::User => FieldSlot::User,
                FieldKind::Item => FieldSlot::Item,
                FieldKind::Context => {
                    ctx += 1;
                    FieldSlot::Context(ctx - 1)
                }
            })
            .collect()
    }

    /// Checks that `sample` carries one id per context field.
    pub fn check_sample(&self, sample: &ClickSample) -> Result<()> {
        if sample.context_ids.len() != self.n_context() {
            return Err(ColfError::InvalidInput(format!(
                "sample has {} context ids, schema expects {}",
                sample.context_ids.len(),
                self.n_context()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<FieldSpec>> for FeatureSchema {
    type Error = ColfError;

    fn try_from(fields: Vec<FieldSpec>) -> Result<Self> {
        Self::new(fields)
    }
}

impl From<FeatureSchema> for Vec<FieldSpec> {
    fn from(schema: FeatureSchema) -> Self {
        schema.fields
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_one_user_and_one_item() {
        let err = FeatureSchema::new(vec![FieldSpec::new("u", FieldKind::User, 4)]).unwrap_err();
        assert!(matches!(err, ColfError::InvalidConfig(_)));
        let err = FeatureSchema::new(vec![
            FieldSpec::new("u", FieldKind::User, 4),
            FieldSpec::new("u2", FieldKind::User, 4),
            FieldSpec::new("i", FieldKind::Item, 4),
        ])
        .unwrap_err();
        assert!(matches!(err, ColfError::InvalidConfig(_)));
    }

    #[test]
    fn slots_follow_declaration_order() {
        let schema = FeatureSchema::new(vec![
            FieldSpec::new("ctx_a", FieldKind::Context, 2),
            FieldSpec::new("item", FieldKind::Item, 3),
            FieldSpec::new("ctx_b", FieldKind::Context, 2),
            FieldSpec::new("user", FieldKind::User, 3),
        ])
        .unwrap();
        assert_eq!(
            schema.slots(),
            vec![
                FieldSlot::Context(0),
                FieldSlot::Item,
                FieldSlot::Context(1),
                FieldSlot::User
            ]
        );
        assert_eq!(schema.input_width(), 10);
    }
}

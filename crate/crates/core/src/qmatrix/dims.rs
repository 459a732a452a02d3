//! Labelled tensor-factor structure of a Hilbert space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of labelled tensor factors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Party>", into = "Vec<Party>")]
pub struct SubsystemDims {
    parties: Vec<Party>,
}

impl TryFrom<Vec<Party>> for SubsystemDims {
    type Error = Error;

    fn try_from(parties: Vec<Party>) -> Result<Self> {
        if parties.is_empty() {
            return Err(Error::BadParameter("at least one party is required".into()));
        }
        for (i, p) in parties.iter().enumerate() {
            if p.dim == 0 {
                return Err(Error::BadParameter(format!("party `{}` has dimension 0", p.label)));
            }
            if p.label.is_empty() {
                return Err(Error::BadParameter("party labels must be non-empty".into()));
            }
            if parties[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::BadParameter(format!("duplicate party label `{}`", p.label)));
            }
        }
        Ok(Self { parties })
    }
}

impl From<SubsystemDims> for Vec<Party> {
    fn from(d: SubsystemDims) -> Self {
        d.parties
    }
}

impl SubsystemDims {
    pub fn new<S: Into<String>>(parties: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        parties
            .into_iter()
            .map(|(label, dim)| Party {
                label: label.into(),
                dim,
            })
            .collect::<Vec<_>>()
            .try_into()
    }

    /// A single party of the given dimension.
    pub fn single(label: &str, dim: usize) -> Result<Self> {
        Self::new([(label, dim)])
    }

    /// Two parties `A`, `B`.
    pub fn bipartite(da: usize, db: usize) -> Self {
        Self::new([("A", da), ("B", db)]).expect("valid bipartite dims")
    }

    /// `k` parties with default labels `A`, `B`, `C`, ...
    pub fn uniform(dims: &[usize]) -> Result<Self> {
        Self::new(dims.iter().enumerate().map(|(i, &d)| (default_label(i), d)))
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn len(&self) -> usize {
        self.parties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parties.is_empty()
    }

    pub fn total(&self) -> usize {
        self.parties.iter().map(|p| p.dim).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.parties.iter().map(|p| p.dim).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.parties.iter().map(|p| p.label.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.parties
            .iter()
            .position(|p| p.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.parties[self.index_of(label)?].dim)
    }

    /// Indices of `labels`, validated and in the order given.
    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let i = self.index_of(l.as_ref())?;
            if out.contains(&i) {
                return Err(Error::BadPartition(format!("label `{}` repeated", l.as_ref())));
            }
            out.push(i);
        }
        Ok(out)
    }

    /// Sub-structure made of the given party indices, in original order.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        Self {
            parties: idx.iter().map(|&i| self.parties[i].clone()).collect(),
        }
    }

    /// Concatenation; clashing labels on the right get primes appended.
    pub fn concat(&self, other: &Self) -> Self {
        let mut parties = self.parties.clone();
        for p in &other.parties {
            let mut label = p.label.clone();
            while parties.iter().any(|q| q.label == label) {
                label.push('\'');
            }
            parties.push(Party { label, dim: p.dim });
        }
        Self { parties }
    }

    /// Every label with `suffix` appended.
    pub fn with_suffix(&self, suffix: &str) -> Self {
        Self {
            parties: self
                .parties
                .iter()
                .map(|p| Party {
                    label: format!("{}{}", p.label, suffix),
                    dim: p.dim,
                })
                .collect(),
        }
    }

    /// Same dimensions with fresh labels.
    pub fn relabel<S: Into<String>>(&self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.parties.len() {
            return Err(Error::DimMismatch(format!(
                "{} labels for {} parties",
                labels.len(),
                self.parties.len()
            )));
        }
        Self::new(labels.into_iter().zip(self.dims()))
    }
}

pub(crate) fn default_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("P{i}")
    }
}

/// A split of a subset of parties into two nonempty groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl Bipartition {
    pub fn new<S: Into<String>>(
        left: impl IntoIterator<Item = S>,
        right: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            left: left.into_iter().map(Into::into).collect(),
            right: right.into_iter().map(Into::into).collect(),
        }
    }

    /// `A:B` for a bipartite structure with those labels.
    pub fn ab() -> Self {
        Self::new(["A"], ["B"])
    }

    /// First party against everything else.
    pub fn first_vs_rest(dims: &SubsystemDims) -> Self {
        let labels = dims.labels();
        Self::new(labels[..1].to_vec(), labels[1..].to_vec())
    }

    /// Checks that the cut partitions exactly the labels of `dims` and
    /// returns the party indices of the right-hand side.
    pub fn validate(&self, dims: &SubsystemDims) -> Result<Vec<usize>> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::BadPartition("both sides of a cut must be nonempty".into()));
        }
        let mut all: Vec<&str> = self.left.iter().chain(&self.right).map(String::as_str).collect();
        let right = dims.indices_of(&self.right)?;
        dims.indices_of(&self.left)?;
        all.sort_unstable();
        all.dedup();
        if all.len() != self.left.len() + self.right.len() {
            return Err(Error::BadPartition("a label appears on both sides".into()));
        }
        if all.len() != dims.len() {
            return Err(Error::BadPartition(format!(
                "cut covers {} of {} parties",
                all.len(),
                dims.len()
            )));
        }
        Ok(right)
    }
}

impl std::fmt::Display for Bipartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.left.join(""), self.right.join(""))
    }
}

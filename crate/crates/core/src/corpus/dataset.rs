use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mainstream group of a listener.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    Medium,
    High,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Low, Group::Medium, Group::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Low => "low",
            Group::Medium => "medium",
            Group::High => "high",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Group> {
        Group::ALL.get(i).copied()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Group::Low),
            "medium" | "med" => Ok(Group::Medium),
            "high" => Ok(Group::High),
            other => Err(Error::validation(format!(
                "unknown group label {other:?} (expected low, medium or high)"
            ))),
        }
    }
}

/// Compressed sparse rows of positive integer counts. Column indices within a
/// row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCounts {
    num_rows: usize,
    num_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<u32>,
}

impl SparseCounts {
    /// Builds from per-row `(column, count)` lists. Each list is sorted here;
    /// duplicate columns within a row are rejected.
    pub fn from_rows(num_cols: usize, rows: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        let num_rows = rows.len();
        let mut indptr = Vec::with_capacity(num_rows + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (k, &(c, v)) in row.iter().enumerate() {
                if c as usize >= num_cols {
                    return Err(Error::validation(format!(
                        "row {r}: column {c} out of range ({num_cols} columns)"
                    )));
                }
                if k > 0 && row[k - 1].0 == c {
                    return Err(Error::validation(format!("row {r}: duplicate column {c}")));
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(SparseCounts {
            num_rows,
            num_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices of row `r`.
    pub fn row_indices(&self, r: usize) -> &[u32] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    /// Counts of row `r`, aligned with [`row_indices`](Self::row_indices).
    pub fn row_values(&self, r: usize) -> &[u32] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: u32) -> u32 {
        let idx = self.row_indices(r);
        match idx.binary_search(&c) {
            Ok(k) => self.row_values(r)[k],
            Err(_) => 0,
        }
    }

    /// Number of non-zero entries in every column.
    pub fn column_nnz(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.num_cols];
        for &c in &self.indices {
            out[c as usize] += 1;
        }
        out
    }

    /// Total of the stored counts per column.
    pub fn column_sums(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.num_cols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            out[c as usize] += v as u64;
        }
        out
    }

    pub fn transpose(&self) -> SparseCounts {
        let counts = self.column_nnz();
        let mut indptr = Vec::with_capacity(self.num_cols + 1);
        indptr.push(0);
        for c in &counts {
            indptr.push(indptr.last().unwrap() + c);
        }
        let mut next = indptr[..self.num_cols].to_vec();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0u32; self.nnz()];
        // Rows are visited in ascending order, so each transposed row stays sorted.
        for r in 0..self.num_rows {
            for (&c, &v) in self.row_indices(r).iter().zip(self.row_values(r)) {
                let slot = next[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        SparseCounts {
            num_rows: self.num_cols,
            num_cols: self.num_rows,
            indptr,
            indices,
            values,
        }
    }
}

/// User × artist play counts with identifier maps and optional mainstream labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    users: Vec<String>,
    artists: Vec<String>,
    counts: SparseCounts,
    groups: Option<Vec<Group>>,
}

impl InteractionDataset {
    /// Validates and assembles a dataset.
    ///
    /// Rejects duplicate identifiers, shape mismatches, stored zero counts and
    /// users without any interaction.
    pub fn new(
        users: Vec<String>,
        artists: Vec<String>,
        counts: SparseCounts,
        groups: Option<Vec<Group>>,
    ) -> Result<Self> {
        let ds = InteractionDataset {
            users,
            artists,
            counts,
            groups,
        };
        ds.validate(true)?;
        Ok(ds)
    }

    /// Builds from `(user, artist, count)` index triplets; duplicate pairs are summed.
    pub fn from_triplets(
        users: Vec<String>,
        artists: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, u32)>,
        groups: Option<Vec<Group>>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); users.len()];
        for (u, a, c) in triplets {
            let row = rows
                .get_mut(u)
                .ok_or_else(|| Error::validation(format!("user index {u} out of range")))?;
            row.push((a as u32, c));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(a, _)| a);
            let mut merged: Vec<(u32, u32)> = Vec::with_capacity(row.len());
            for &(a, c) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == a => {
                        last.1 = last.1.checked_add(c).ok_or_else(|| {
                            Error::validation(format!("count overflow for artist index {a}"))
                        })?;
                    }
                    _ => merged.push((a, c)),
                }
            }
            *row = merged;
        }
        let counts = SparseCounts::from_rows(artists.len(), rows)?;
        Self::new(users, artists, counts, groups)
    }

    /// Same users and artists, different counts (used for the training half of a split).
    /// Empty rows are allowed here.
    pub(crate) fn with_counts(&self, counts: SparseCounts) -> Result<Self> {
        let ds = InteractionDataset {
            users: self.users.clone(),
            artists: self.artists.clone(),
            counts,
            groups: self.groups.clone(),
        };
        ds.validate(false)?;
        Ok(ds)
    }

    fn validate(&self, require_nonempty_rows: bool) -> Result<()> {
        if self.counts.num_rows() != self.users.len() || self.counts.num_cols() != self.artists.len()
        {
            return Err(Error::validation(format!(
                "count matrix is {}x{} but there are {} users and {} artists",
                self.counts.num_rows(),
                self.counts.num_cols(),
                self.users.len(),
                self.artists.len()
            )));
        }
        check_unique(&self.users, "user")?;
        check_unique(&self.artists, "artist")?;
        if let Some(g) = &self.groups {
            if g.len() != self.users.len() {
                return Err(Error::validation(format!(
                    "{} group labels for {} users",
                    g.len(),
                    self.users.len()
                )));
            }
        }
        for u in 0..self.num_users() {
            if self.counts.row_values(u).contains(&0) {
                return Err(Error::validation(format!(
                    "user {} has a stored zero count",
                    self.users[u]
                )));
            }
            if require_nonempty_rows && self.counts.row_len(u) == 0 {
                return Err(Error::validation(format!(
                    "user {} has no interactions",
                    self.users[u]
                )));
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_artists(&self) -> usize {
        self.artists.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.counts.nnz()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn artists(&self) -> &[String] {
        &self.artists
    }

    pub fn counts(&self) -> &SparseCounts {
        &self.counts
    }

    pub fn groups(&self) -> Option<&[Group]> {
        self.groups.as_deref()
    }

    pub fn set_groups(&mut self, groups: Vec<Group>) -> Result<()> {
        if groups.len() != self.num_users() {
            return Err(Error::validation(format!(
                "{} group labels for {} users",
                groups.len(),
                self.num_users()
            )));
        }
        self.groups = Some(groups);
        Ok(())
    }

    /// Sorted artist indices in the profile of `user`.
    pub fn profile(&self, user: usize) -> &[u32] {
        self.counts.row_indices(user)
    }

    pub fn profile_counts(&self, user: usize) -> &[u32] {
        self.counts.row_values(user)
    }

    /// Compares listening content by identifier: same users in the same order,
    /// same group labels and the same `(user, artist, count)` records. Artist
    /// index order and artists nobody listened to are ignored since neither
    /// survives a write/ingest cycle.
    pub fn same_interactions(&self, other: &InteractionDataset) -> bool {
        if self.users != other.users || self.groups != other.groups {
            return false;
        }
        (0..self.num_users()).all(|u| {
            fn named(ds: &InteractionDataset, u: usize) -> Vec<(&str, u32)> {
                let mut v: Vec<(&str, u32)> = ds
                    .profile(u)
                    .iter()
                    .zip(ds.profile_counts(u))
                    .map(|(&a, &c)| (ds.artists[a as usize].as_str(), c))
                    .collect();
                v.sort_unstable();
                v
            }
            named(self, u) == named(other, u)
        })
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == id)
    }

    pub fn artist_index(&self, id: &str) -> Option<usize> {
        self.artists.iter().position(|a| a == id)
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate {what} identifier {id:?}")));
        }
    }
    Ok(())
}

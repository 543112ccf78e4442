//! User populations: MovieLens-100K parsing, synthetic generation and expert
//! selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{UserId, UserProfile};
use crate::vector::PreferenceVector;

/// Number of genre flags at the end of every MovieLens-100K `u.item` row.
pub const MOVIELENS_GENRES: usize = 19;
const ITEM_FIELDS: usize = 5 + MOVIELENS_GENRES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopulationSource {
    MovieLens,
    Synthetic,
}

/// A set of users sharing one vector dimension, ordered by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPopulation")]
pub struct Population {
    users: Vec<UserProfile>,
    dim: usize,
    source: PopulationSource,
}

#[derive(Deserialize)]
struct RawPopulation {
    users: Vec<UserProfile>,
    dim: usize,
    source: PopulationSource,
}

impl TryFrom<RawPopulation> for Population {
    type Error = Error;

    fn try_from(raw: RawPopulation) -> Result<Self> {
        let pop = Population::new(raw.users, raw.source)?;
        if pop.dim != raw.dim {
            return Err(Error::DimensionMismatch {
                expected: raw.dim,
                found: pop.dim,
            });
        }
        Ok(pop)
    }
}

impl Population {
    pub fn new(mut users: Vec<UserProfile>, source: PopulationSource) -> Result<Self> {
        let dim = users
            .first()
            .map(|u| u.prefs.dim())
            .ok_or_else(|| Error::Empty("population has no users".into()))?;
        if let Some(u) = users.iter().find(|u| u.prefs.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: u.prefs.dim(),
            });
        }
        users.sort_by_key(|u| u.user_id);
        if let Some(w) = users.windows(2).find(|w| w[0].user_id == w[1].user_id) {
            return Err(Error::InvalidConfig(format!(
                "duplicate user_id {}",
                w[0].user_id
            )));
        }
        Ok(Self { users, dim, source })
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> PopulationSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        self.users.iter().map(|u| u.user_id).collect()
    }

    /// Position of `user_id` in [`Population::users`].
    pub fn index_of(&self, user_id: UserId) -> Option<usize> {
        self.users.binary_search_by_key(&user_id, |u| u.user_id).ok()
    }

    pub fn get(&self, user_id: UserId) -> Option<&UserProfile> {
        self.index_of(user_id).map(|i| &self.users[i])
    }

    /// True when ids are exactly `0..len`.
    pub fn has_contiguous_ids(&self) -> bool {
        self.users.iter().enumerate().all(|(i, u)| u.user_id == i)
    }

    /// Keeps the users for which `keep` returns true, preserving their ids.
    /// Returns `None` if nobody is kept.
    pub fn restrict(&self, mut keep: impl FnMut(UserId) -> bool) -> Option<Population> {
        let users: Vec<_> = self
            .users
            .iter()
            .filter(|u| keep(u.user_id))
            .cloned()
            .collect();
        if users.is_empty() {
            return None;
        }
        Some(Population {
            users,
            dim: self.dim,
            source: self.source,
        })
    }

    /// Draws `n` distinct users uniformly and relabels them `0..n` in
    /// ascending order of their original id.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Population> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot sample {n} users from a population of {}",
                self.len()
            )));
        }
        let mut picked = rand::seq::index::sample(rng, self.len(), n).into_vec();
        picked.sort_unstable();
        let users = picked
            .into_iter()
            .enumerate()
            .map(|(new_id, i)| UserProfile {
                user_id: new_id,
                prefs: self.users[i].prefs.clone(),
            })
            .collect();
        Ok(Population {
            users,
            dim: self.dim,
            source: self.source,
        })
    }
}

/// Parses MovieLens-100K `u.data` and `u.item` files into genre preference
/// vectors.
///
/// A user's component for genre g is the rating mass on movies tagged g
/// divided by the user's total rating mass. Users are relabelled `0..n` in
/// ascending order of their raw id.
pub fn parse_movielens(ratings_file: &Path, items_file: &Path) -> Result<Population> {
    let items_raw = std::fs::read(items_file).map_err(|e| Error::io(items_file, e))?;
    let ratings_raw = std::fs::read(ratings_file).map_err(|e| Error::io(ratings_file, e))?;
    let genres = parse_items(&items_raw, items_file)?;
    parse_ratings(&ratings_raw, ratings_file, &genres)
}

fn parse_items(raw: &[u8], path: &Path) -> Result<HashMap<u64, [bool; MOVIELENS_GENRES]>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut items = HashMap::new();
    // u.item is Latin-1 encoded; titles are not used, so lossy decoding is fine.
    for (idx, line) in raw.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line = String::from_utf8_lossy(line);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != ITEM_FIELDS {
            return Err(parse_err(
                line_no,
                format!(
                    "expected {MOVIELENS_GENRES} genre flags ({ITEM_FIELDS} fields), found {} fields",
                    fields.len()
                ),
            ));
        }
        let id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid item id {:?}", fields[0])))?;
        let mut flags = [false; MOVIELENS_GENRES];
        for (g, field) in fields[5..].iter().enumerate() {
            flags[g] = match field.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(parse_err(
                        line_no,
                        format!("genre flag {g} must be 0 or 1, found {other:?}"),
                    ))
                }
            };
        }
        if items.insert(id, flags).is_some() {
            return Err(parse_err(line_no, format!("duplicate item id {id}")));
        }
    }
    if items.is_empty() {
        return Err(Error::Empty(format!("{}: no items", path.display())));
    }
    Ok(items)
}

fn parse_ratings(
    raw: &[u8],
    path: &Path,
    genres: &HashMap<u64, [bool; MOVIELENS_GENRES]>,
) -> Result<Population> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    // raw user id -> (per-genre rating mass, total rating mass)
    let mut mass: BTreeMap<u64, ([f64; MOVIELENS_GENRES], f64)> = BTreeMap::new();
    for (idx, line) in raw.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line = String::from_utf8_lossy(line);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!(
                    "expected 4 tab-separated fields (user, item, rating, timestamp), found {}: {line:?}",
                    fields.len()
                ),
            ));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid user id {:?}", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite() && *r >= 0.0)
            .ok_or_else(|| parse_err(line_no, format!("invalid rating {:?}", fields[2])))?;
        let flags = genres
            .get(&item)
            .ok_or_else(|| parse_err(line_no, format!("item {item} not present in item file")))?;
        let entry = mass.entry(user).or_insert(([0.0; MOVIELENS_GENRES], 0.0));
        for (g, &tagged) in flags.iter().enumerate() {
            if tagged {
                entry.0[g] += rating;
            }
        }
        entry.1 += rating;
    }

    let users: Vec<UserProfile> = mass
        .into_values()
        .filter(|(_, total)| *total > 0.0)
        .enumerate()
        .map(|(user_id, (genre_mass, total))| UserProfile {
            user_id,
            prefs: PreferenceVector::from_finite(genre_mass.iter().map(|m| m / total).collect()),
        })
        .collect();
    if users.is_empty() {
        return Err(Error::Empty(format!("{}: no ratings", path.display())));
    }
    Population::new(users, PopulationSource::MovieLens)
}

/// Generates `n_users` users with components drawn uniformly from [0, 1).
pub fn generate_synthetic(n_users: usize, dim: usize, rng: &mut RngStream) -> Result<Population> {
    if n_users == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic population needs n_users >= 1 and dim >= 1".into(),
        ));
    }
    let users = (0..n_users)
        .map(|user_id| UserProfile {
            user_id,
            prefs: PreferenceVector::from_finite((0..dim).map(|_| rng.random::<f64>()).collect()),
        })
        .collect();
    Population::new(users, PopulationSource::Synthetic)
}

/// Picks one user uniformly and returns a copy of their vector. The user
/// stays in the population.
pub fn select_expert(pop: &Population, rng: &mut RngStream) -> Result<PreferenceVector> {
    if pop.is_empty() {
        return Err(Error::Empty("cannot select an expert from an empty population".into()));
    }
    let i = rng.random_range(0..pop.len());
    Ok(pop.users[i].prefs.clone())
}

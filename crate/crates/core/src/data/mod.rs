//! Users, items, groups and their interactions, remapped to dense indices.

mod io;
mod split;
mod synthetic;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use io::{load_group_items, load_groups, load_user_item, GroupTable, InteractionTable};
pub use split::{sample_negatives, split_leave_one_out, Split, TestCase};
pub(crate) use split::sample_complement;
pub use synthetic::{generate_synthetic, PlantedTruth, SyntheticData, SyntheticParams};

use crate::error::{MgamError, Result};

/// A labeled (group, item) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub group: usize,
    pub item: usize,
    pub label: u8,
}

impl Instance {
    pub fn positive(group: usize, item: usize) -> Self {
        Instance {
            group,
            item,
            label: 1,
        }
    }

    pub fn negative(group: usize, item: usize) -> Self {
        Instance {
            group,
            item,
            label: 0,
        }
    }
}

/// Bidirectional map between external ids and contiguous internal indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Builds a map whose index order follows [`id_order`].
    pub fn from_ids<I: IntoIterator<Item = String>>(ids: I) -> Self {
        let mut ids: Vec<String> = ids.into_iter().collect();
        ids.sort_by(|a, b| id_order(a, b));
        ids.dedup();
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        IdMap { ids, index }
    }

    /// Ids `"0"`, `"1"`, ... for generated data.
    pub fn sequential(n: usize) -> Self {
        Self::from_ids((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }
}

/// Numeric ids sort numerically and before non-numeric ids, which sort lexically.
pub fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    /// Sorted item indices per user.
    pub user_items: Vec<Vec<usize>>,
    /// Sorted member indices per group.
    pub groups: Vec<Vec<usize>>,
    /// Sorted positive item indices per group.
    pub group_pos: Vec<Vec<usize>>,
    pub users: IdMap,
    pub items: IdMap,
    pub group_ids: IdMap,
}

impl Dataset {
    /// Remaps external-id tables to a dataset. Users that appear only as group
    /// members are registered with empty histories.
    pub fn from_tables(
        user_items: &InteractionTable,
        groups: &GroupTable,
        group_items: &InteractionTable,
    ) -> Result<Self> {
        let users = IdMap::from_ids(
            user_items
                .pairs
                .iter()
                .map(|p| p.0.clone())
                .chain(groups.groups.iter().flat_map(|g| g.1.iter().cloned())),
        );
        let items = IdMap::from_ids(
            user_items
                .pairs
                .iter()
                .chain(&group_items.pairs)
                .map(|p| p.1.clone()),
        );
        let group_ids = IdMap::from_ids(groups.groups.iter().map(|g| g.0.clone()));

        let mut user_hist = vec![Vec::new(); users.len()];
        for (u, i, _) in &user_items.pairs {
            user_hist[users.index_of(u).expect("registered")].push(items.index_of(i).expect("registered"));
        }
        let mut members = vec![Vec::new(); group_ids.len()];
        for (g, ms, _) in &groups.groups {
            let gi = group_ids.index_of(g).expect("registered");
            members[gi].extend(ms.iter().map(|m| users.index_of(m).expect("registered")));
        }
        let mut group_pos = vec![Vec::new(); group_ids.len()];
        for (g, i, line) in &group_items.pairs {
            let Some(gi) = group_ids.index_of(g) else {
                return Err(MgamError::Load {
                    path: group_items.source.clone(),
                    line: *line,
                    msg: format!("unknown group id `{g}`"),
                });
            };
            group_pos[gi].push(items.index_of(i).expect("registered"));
        }
        Self::from_indexed(user_hist, members, group_pos, users, items, group_ids)
    }

    /// Builds a dataset from index-based lists; sorts and deduplicates them.
    pub fn from_indexed(
        mut user_items: Vec<Vec<usize>>,
        mut groups: Vec<Vec<usize>>,
        mut group_pos: Vec<Vec<usize>>,
        users: IdMap,
        items: IdMap,
        group_ids: IdMap,
    ) -> Result<Self> {
        for list in user_items
            .iter_mut()
            .chain(groups.iter_mut())
            .chain(group_pos.iter_mut())
        {
            list.sort_unstable();
            list.dedup();
        }
        let ds = Dataset {
            n_users: users.len(),
            n_items: items.len(),
            n_groups: group_ids.len(),
            user_items,
            groups,
            group_pos,
            users,
            items,
            group_ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MgamError::usage(msg));
        if self.user_items.len() != self.n_users
            || self.groups.len() != self.n_groups
            || self.group_pos.len() != self.n_groups
        {
            return bad("dataset table lengths disagree with entity counts".into());
        }
        for (g, members) in self.groups.iter().enumerate() {
            if members.is_empty() {
                return bad(format!("group {} has no members", self.group_ids.id(g)));
            }
            if members.iter().any(|&u| u >= self.n_users) {
                return bad(format!("group {} has an out-of-range member", g));
            }
        }
        if self
            .user_items
            .iter()
            .chain(&self.group_pos)
            .flatten()
            .any(|&i| i >= self.n_items)
        {
            return bad("item index out of range".into());
        }
        Ok(())
    }

    /// All group-item positives as label-1 instances.
    pub fn positive_instances(&self) -> Vec<Instance> {
        self.group_pos
            .iter()
            .enumerate()
            .flat_map(|(g, items)| items.iter().map(move |&i| Instance::positive(g, i)))
            .collect()
    }

    pub fn is_group_positive(&self, group: usize, item: usize) -> bool {
        self.group_pos[group].binary_search(&item).is_ok()
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Self> {
        let ui = load_user_item(&dir.join(io::USER_ITEM_FILE))?;
        let groups = load_groups(&dir.join(io::GROUPS_FILE))?;
        let gi = load_group_items(&dir.join(io::GROUP_ITEMS_FILE))?;
        Self::from_tables(&ui, &groups, &gi)
    }

    pub fn write_dir(&self, dir: &std::path::Path) -> Result<()> {
        io::write_dataset(self, dir)
    }
}

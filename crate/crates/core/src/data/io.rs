use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{MgamError, Result};

use super::Dataset;

pub(crate) const USER_ITEM_FILE: &str = "user_item.tsv";
pub(crate) const GROUPS_FILE: &str = "groups.tsv";
pub(crate) const GROUP_ITEMS_FILE: &str = "group_items.tsv";

/// Deduplicated `(entity_id, item_id)` pairs with the line each was first seen on.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    pub source: PathBuf,
    pub pairs: Vec<(String, String, usize)>,
}

impl InteractionTable {
    pub fn n_entities(&self) -> usize {
        let mut ids: Vec<&str> = self.pairs.iter().map(|p| p.0.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn n_items(&self) -> usize {
        let mut ids: Vec<&str> = self.pairs.iter().map(|p| p.1.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTable {
    pub source: PathBuf,
    /// `(group_id, deduplicated member ids, line)`.
    pub groups: Vec<(String, Vec<String>, usize)>,
}

/// Non-comment lines with their 1-based numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| MgamError::LoadFile {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect())
}

fn load_err(path: &Path, line: usize, msg: impl Into<String>) -> MgamError {
    MgamError::Load {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn load_pairs(path: &Path) -> Result<InteractionTable> {
    let lines = content_lines(path)?;
    if lines.is_empty() {
        return Err(MgamError::LoadFile {
            path: path.to_path_buf(),
            msg: "file has no records".into(),
        });
    }
    let mut pairs = Vec::with_capacity(lines.len());
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        // An optional third column (timestamp) is accepted and dropped.
        if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
            return Err(load_err(path, n, format!("expected `id<TAB>item_id`, got `{line}`")));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string(), n));
    }
    // Keep the first occurrence of each pair.
    pairs.sort_by(|a, b| (&a.0, &a.1, a.2).cmp(&(&b.0, &b.1, b.2)));
    pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    pairs.sort_by_key(|p| p.2);
    Ok(InteractionTable {
        source: path.to_path_buf(),
        pairs,
    })
}

/// Reads `user_id<TAB>item_id` lines.
pub fn load_user_item(path: &Path) -> Result<InteractionTable> {
    load_pairs(path)
}

/// Reads `group_id<TAB>item_id` lines (group positives).
pub fn load_group_items(path: &Path) -> Result<InteractionTable> {
    load_pairs(path)
}

/// Reads `group_id<TAB>u1,u2,...` lines.
pub fn load_groups(path: &Path) -> Result<GroupTable> {
    let lines = content_lines(path)?;
    if lines.is_empty() {
        return Err(MgamError::LoadFile {
            path: path.to_path_buf(),
            msg: "file has no records".into(),
        });
    }
    let mut groups: Vec<(String, Vec<String>, usize)> = Vec::with_capacity(lines.len());
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 || fields[0].is_empty() {
            return Err(load_err(path, n, format!("expected `group_id<TAB>members`, got `{line}`")));
        }
        if fields[1].is_empty() {
            return Err(load_err(path, n, format!("group `{}` has no members", fields[0])));
        }
        let mut members = Vec::new();
        for m in fields[1].split(',').map(str::trim) {
            if m.is_empty() {
                return Err(load_err(path, n, "empty member id"));
            }
            members.push(m.to_string());
        }
        members.sort();
        members.dedup();
        if groups.iter().any(|g| g.0 == fields[0]) {
            return Err(load_err(path, n, format!("duplicate group id `{}`", fields[0])));
        }
        groups.push((fields[0].to_string(), members, n));
    }
    Ok(GroupTable {
        source: path.to_path_buf(),
        groups,
    })
}

pub(crate) fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut ui = String::new();
    for (u, items) in ds.user_items.iter().enumerate() {
        for &i in items {
            ui.push_str(&format!("{}\t{}\n", ds.users.id(u), ds.items.id(i)));
        }
    }
    let mut gs = String::new();
    let mut gi = String::new();
    for g in 0..ds.n_groups {
        let members: Vec<&str> = ds.groups[g].iter().map(|&u| ds.users.id(u)).collect();
        gs.push_str(&format!("{}\t{}\n", ds.group_ids.id(g), members.join(",")));
        for &i in &ds.group_pos[g] {
            gi.push_str(&format!("{}\t{}\n", ds.group_ids.id(g), ds.items.id(i)));
        }
    }
    fs::write(dir.join(USER_ITEM_FILE), ui)?;
    fs::write(dir.join(GROUPS_FILE), gs)?;
    fs::write(dir.join(GROUP_ITEMS_FILE), gi)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn user_item_counts() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_user_item(&write(dir.path(), "a.tsv", "7\t5\n9\t5\n")).unwrap();
        assert_eq!((t.n_entities(), t.n_items(), t.len()), (2, 1, 2));
        let t = load_user_item(&write(dir.path(), "b.tsv", "7\t5\n7\t5\n")).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn wrong_delimiter_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_user_item(&write(dir.path(), "a.tsv", "7,5\n")).unwrap_err();
        match err {
            MgamError::Load { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_user_item(&write(dir.path(), "a.tsv", "# header\n1\t2\t1699999\n\n1\t3\n")).unwrap();
        assert_eq!(t.len(), 2);
        let err = load_user_item(&write(dir.path(), "b.tsv", "# only\n")).unwrap_err();
        assert!(matches!(err, MgamError::LoadFile { .. }));
    }

    #[test]
    fn group_lines() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_groups(&write(dir.path(), "g.tsv", "g1\t7,9\n")).unwrap();
        assert_eq!(t.groups[0].1.len(), 2);
        let t = load_groups(&write(dir.path(), "g2.tsv", "g1\t7,7\n")).unwrap();
        assert_eq!(t.groups[0].1.len(), 1);
        assert!(load_groups(&write(dir.path(), "g3.tsv", "g1\t\n")).is_err());
        assert!(load_groups(&write(dir.path(), "g4.tsv", "g1 7 9\n")).is_err());
    }
}

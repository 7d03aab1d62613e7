//! Tab-separated interaction and group files.
//!
//! Interactions: `user_id \t artist_id \t count`, one record per line, optional
//! header, `#` comments. Groups: `user_id \t low|medium|high`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::dataset::{Group, InteractionDataset};
use crate::{Error, Result};

pub fn read_interactions(path: &Path, group_path: Option<&Path>) -> Result<InteractionDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut ds = parse_interactions(reader, &path.display().to_string())?;
    if let Some(gp) = group_path {
        let groups = read_groups(gp, &ds)?;
        ds.set_groups(groups)?;
    }
    Ok(ds)
}

pub fn parse_interactions<R: BufRead>(reader: R, source_name: &str) -> Result<InteractionDataset> {
    let mut users: Vec<String> = Vec::new();
    let mut artists: Vec<String> = Vec::new();
    let mut user_ix: HashMap<String, usize> = HashMap::new();
    let mut artist_ix: HashMap<String, usize> = HashMap::new();
    let mut triplets: Vec<(usize, usize, u32)> = Vec::new();
    let mut first_record = true;

    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let count_field = fields[2].trim();
        if first_record {
            first_record = false;
            if !count_field.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+') {
                continue; // header
            }
        }
        let count: i64 = count_field
            .parse()
            .map_err(|_| parse_err(lineno, format!("count {count_field:?} is not an integer")))?;
        if count < 1 {
            return Err(Error::validation(format!(
                "{source_name}:{lineno}: count must be >= 1, got {count}"
            )));
        }
        let count = u32::try_from(count).map_err(|_| {
            Error::validation(format!("{source_name}:{lineno}: count {count} too large"))
        })?;
        let (user, artist) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || artist.is_empty() {
            return Err(parse_err(lineno, "empty identifier".into()));
        }
        let u = *user_ix.entry(user.to_string()).or_insert_with(|| {
            users.push(user.to_string());
            users.len() - 1
        });
        let a = *artist_ix.entry(artist.to_string()).or_insert_with(|| {
            artists.push(artist.to_string());
            artists.len() - 1
        });
        triplets.push((u, a, count));
    }
    if users.is_empty() {
        return Err(Error::validation(format!("{source_name}: no interaction records")));
    }
    InteractionDataset::from_triplets(users, artists, triplets, None)
}

pub fn read_groups(path: &Path, dataset: &InteractionDataset) -> Result<Vec<Group>> {
    let reader = BufReader::new(File::open(path)?);
    parse_groups(reader, &path.display().to_string(), dataset)
}

/// Parses a group file. Every dataset user must be labelled exactly once.
pub fn parse_groups<R: BufRead>(
    reader: R,
    source_name: &str,
    dataset: &InteractionDataset,
) -> Result<Vec<Group>> {
    let index: HashMap<&str, usize> = dataset
        .users()
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let mut out: Vec<Option<Group>> = vec![None; dataset.num_users()];
    let mut first_record = true;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: lineno,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let label = fields[1].parse::<Group>();
        if first_record {
            first_record = false;
            if label.is_err() && !index.contains_key(fields[0].trim()) {
                continue; // header
            }
        }
        let group = label.map_err(|e| Error::validation(format!("{source_name}:{lineno}: {e}")))?;
        let user = fields[0].trim();
        let &u = index.get(user).ok_or_else(|| {
            Error::validation(format!("{source_name}:{lineno}: unknown user {user:?}"))
        })?;
        match out[u] {
            Some(prev) if prev != group => {
                return Err(Error::validation(format!(
                    "{source_name}:{lineno}: user {user:?} labelled both {prev} and {group}"
                )))
            }
            _ => out[u] = Some(group),
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(u, g)| {
            g.ok_or_else(|| {
                Error::validation(format!(
                    "{source_name}: user {:?} has no group label",
                    dataset.users()[u]
                ))
            })
        })
        .collect()
}

pub fn write_interactions(dataset: &InteractionDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "user_id\tartist_id\tcount")?;
    for u in 0..dataset.num_users() {
        let user = &dataset.users()[u];
        for (&a, &c) in dataset.profile(u).iter().zip(dataset.profile_counts(u)) {
            writeln!(w, "{user}\t{}\t{c}", dataset.artists()[a as usize])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_groups(dataset: &InteractionDataset, path: &Path) -> Result<()> {
    let groups = dataset
        .groups()
        .ok_or_else(|| Error::validation("dataset has no group labels"))?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "user_id\tgroup")?;
    for (user, g) in dataset.users().iter().zip(groups) {
        writeln!(w, "{user}\t{g}")?;
    }
    w.flush()?;
    Ok(())
}

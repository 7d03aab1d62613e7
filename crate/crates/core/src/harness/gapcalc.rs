//! ΔGAP of recommendations recorded from simulated users on streaming services.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::report::align;
use crate::corpus::Group;
use crate::metrics::stable_sum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    ProfileSeed,
    Recommended,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SimulatedUserRecord {
    pub service: String,
    pub user: String,
    pub group: Group,
    pub role: Role,
    pub artist: String,
    /// Service popularity on a 0–100 scale.
    pub spotify_popularity: Option<f64>,
    /// Fraction of corpus users who listened to the artist.
    pub lfm_phi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Spotify,
    Lfm,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::Spotify, Measure::Lfm];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Spotify => "spotify",
            Measure::Lfm => "lfm",
        }
    }

    fn value(self, r: &SimulatedUserRecord) -> Option<f64> {
        match self {
            Measure::Spotify => r.spotify_popularity,
            Measure::Lfm => r.lfm_phi,
        }
    }
}

/// Parses and validates records. Row numbers in errors count the header as row 1.
pub fn parse_records<R: Read>(reader: R, source_name: &str) -> Result<Vec<SimulatedUserRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = [
        "service",
        "user",
        "group",
        "role",
        "artist",
        "spotify_popularity",
        "lfm_phi",
    ];
    let header = rdr.headers().map_err(|e| parse_err(source_name, 1, e))?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<SimulatedUserRecord>().enumerate() {
        let line = i + 2;
        let r = row.map_err(|e| parse_err(source_name, line, e))?;
        if r.spotify_popularity.is_none() && r.lfm_phi.is_none() {
            return Err(Error::validation(format!(
                "{source_name}: row {line}: record has neither spotify_popularity nor lfm_phi"
            )));
        }
        if r.spotify_popularity.is_some_and(|v| !(0.0..=100.0).contains(&v)) {
            return Err(Error::validation(format!(
                "{source_name}: row {line}: spotify_popularity outside [0, 100]"
            )));
        }
        if r.lfm_phi.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::validation(format!(
                "{source_name}: row {line}: lfm_phi outside [0, 1]"
            )));
        }
        records.push(r);
    }
    check_users(&records, source_name)?;
    Ok(records)
}

fn parse_err(source_name: &str, line: usize, e: csv::Error) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: e.to_string(),
    }
}

fn check_users(records: &[SimulatedUserRecord], source_name: &str) -> Result<()> {
    let mut seen: HashMap<(&str, &str), (Group, bool, bool)> = HashMap::new();
    for r in records {
        let e = seen
            .entry((&r.service, &r.user))
            .or_insert((r.group, false, false));
        if e.0 != r.group {
            return Err(Error::validation(format!(
                "{source_name}: user {} on {} has conflicting groups",
                r.user, r.service
            )));
        }
        match r.role {
            Role::ProfileSeed => e.1 = true,
            Role::Recommended => e.2 = true,
        }
    }
    let mut missing: Vec<_> = seen
        .iter()
        .filter(|(_, (_, s, rec))| !(*s && *rec))
        .map(|((svc, u), _)| format!("{svc}/{u}"))
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::validation(format!(
            "{source_name}: users without both profile-seed and recommended records: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<SimulatedUserRecord>> {
    let f = std::fs::File::open(path)?;
    parse_records(f, &path.display().to_string())
}

/// One-tailed Welch test of `mean(b) > mean(a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_one_tailed: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = stable_sum(x) / n;
    let dev: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    (m, stable_sum(&dev) / (n - 1.0))
}

/// `None` when either sample has fewer than two values or both variances are zero.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (mb - ma) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest {
        t,
        df,
        p_one_tailed: dist.sf(t),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapCalcRow {
    pub service: String,
    /// `None` for the row pooling all users of the service.
    pub group: Option<Group>,
    pub measure: Measure,
    pub users: usize,
    pub gap_p: f64,
    pub gap_r: f64,
    pub delta_gap: Option<f64>,
    /// Artist-level comparison of recommended against profile-seed popularity.
    pub test: Option<WelchTest>,
}

impl GapCalcRow {
    pub fn group_label(&self) -> &'static str {
        self.group.map_or("overall", Group::as_str)
    }
}

/// Rows per service (first-appearance order) × {overall, low, medium, high} × measure.
/// Cells where no user has values for both roles are omitted.
pub fn gapcalc(records: &[SimulatedUserRecord]) -> Vec<GapCalcRow> {
    let mut services: Vec<&str> = Vec::new();
    for r in records {
        if !services.contains(&r.service.as_str()) {
            services.push(&r.service);
        }
    }
    let mut rows = Vec::new();
    for svc in services {
        let of_service: Vec<&SimulatedUserRecord> =
            records.iter().filter(|r| r.service == svc).collect();
        let groups = std::iter::once(None).chain(Group::ALL.into_iter().map(Some));
        for group in groups {
            let cell: Vec<&SimulatedUserRecord> = of_service
                .iter()
                .copied()
                .filter(|r| group.is_none_or(|g| r.group == g))
                .collect();
            for measure in Measure::ALL {
                if let Some(row) = cell_row(svc, group, measure, &cell) {
                    rows.push(row);
                }
            }
        }
    }
    rows
}

fn cell_row(
    service: &str,
    group: Option<Group>,
    measure: Measure,
    cell: &[&SimulatedUserRecord],
) -> Option<GapCalcRow> {
    let mut users: Vec<&str> = Vec::new();
    for r in cell {
        if !users.contains(&r.user.as_str()) {
            users.push(&r.user);
        }
    }
    let (mut user_p, mut user_r) = (Vec::new(), Vec::new());
    let (mut all_p, mut all_r) = (Vec::new(), Vec::new());
    for u in users {
        let vals = |role: Role| -> Vec<f64> {
            cell.iter()
                .filter(|r| r.user == u && r.role == role)
                .filter_map(|r| measure.value(r))
                .collect()
        };
        let (p, r) = (vals(Role::ProfileSeed), vals(Role::Recommended));
        if p.is_empty() || r.is_empty() {
            continue;
        }
        user_p.push(stable_sum(&p) / p.len() as f64);
        user_r.push(stable_sum(&r) / r.len() as f64);
        all_p.extend(p);
        all_r.extend(r);
    }
    if user_p.is_empty() {
        return None;
    }
    let gap_p = stable_sum(&user_p) / user_p.len() as f64;
    let gap_r = stable_sum(&user_r) / user_r.len() as f64;
    Some(GapCalcRow {
        service: service.to_string(),
        group,
        measure,
        users: user_p.len(),
        gap_p,
        gap_r,
        delta_gap: (gap_p > 0.0).then(|| (gap_r - gap_p) / gap_p),
        test: welch_greater(&all_p, &all_r),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

/// Service name as a key segment: lowercase, non-alphanumerics become `_`.
fn key(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn render_gapcalc_table(rows: &[GapCalcRow]) -> String {
    let mut table = vec![[
        "service", "group", "measure", "users", "gap_p", "gap_r", "delta_gap", "t", "df", "p_1tail",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for r in rows {
        table.push(vec![
            r.service.clone(),
            r.group_label().to_string(),
            r.measure.as_str().to_string(),
            r.users.to_string(),
            format!("{:.6}", r.gap_p),
            format!("{:.6}", r.gap_r),
            opt(r.delta_gap),
            opt(r.test.map(|t| t.t)),
            opt(r.test.map(|t| t.df)),
            opt(r.test.map(|t| t.p_one_tailed)),
        ]);
    }
    let mut out = String::from("# Welch two-sample t-test, one-tailed (recommended > profile), artist-level values\n\n");
    out.push_str(&align(&table));
    out
}

/// `metric.service.group.measure=value` lines.
pub fn render_gapcalc_kv(rows: &[GapCalcRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let suffix = format!("{}.{}.{}", key(&r.service), r.group_label(), r.measure.as_str());
        let fields = [
            ("users", Some(r.users as f64)),
            ("gap_p", Some(r.gap_p)),
            ("gap_r", Some(r.gap_r)),
            ("delta_gap", r.delta_gap),
            ("t", r.test.map(|t| t.t)),
            ("df", r.test.map(|t| t.df)),
            ("p_one_tailed", r.test.map(|t| t.p_one_tailed)),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                let _ = writeln!(out, "{name}.{suffix}={v:.6}");
            }
        }
    }
    out
}

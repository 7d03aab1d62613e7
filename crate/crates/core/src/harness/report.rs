use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::PopularityScope;
use super::experiment::{ExperimentReport, GroupSummary, TuneResult, GROUP_LABELS};
use crate::Result;

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

/// Aligned plain-text table with a provenance header.
pub fn render_table(report: &ExperimentReport) -> String {
    let p = &report.provenance;
    let mut out = String::new();
    let scope = match p.scope {
        PopularityScope::Full => "full",
        PopularityScope::TrainOnly => "train-only",
    };
    let _ = writeln!(out, "# popbias {}", p.version);
    let _ = writeln!(out, "# config_sha256 {}", p.config_hash);
    let _ = writeln!(
        out,
        "# seed {}  split_seed {}  tune_seed {}  synthetic_seed {}",
        p.seed,
        p.split_seed,
        p.tune_seed,
        p.synthetic_seed.map_or("-".to_string(), |s| s.to_string())
    );
    let _ = writeln!(
        out,
        "# users {}  artists {}  pairs {}  masked {}  top_n {}  ap_k {}  popularity_scope {}",
        p.num_users, p.num_artists, p.num_pairs, p.num_masked, p.top_n, p.ap_k, scope
    );
    out.push('\n');

    let header = [
        "model", "group", "users", "skipped", "auc", "stderr", "gap_p", "gap_r", "delta_gap",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for m in &report.models {
        for (label, g) in GROUP_LABELS.iter().zip(&m.groups) {
            rows.push(vec![
                m.name.clone(),
                label.to_string(),
                g.users.to_string(),
                g.skipped.to_string(),
                fmt_opt(g.auc_mean),
                fmt_opt(g.auc_stderr),
                fmt_opt(g.gap_p),
                fmt_opt(g.gap_r),
                fmt_opt(g.delta_gap),
            ]);
        }
    }
    out.push_str(&align(&rows));

    let tuned: Vec<(&str, &TuneResult)> = report
        .models
        .iter()
        .filter_map(|m| Some((m.name.as_str(), m.tuning.as_ref()?)))
        .collect();
    if !tuned.is_empty() {
        out.push('\n');
        out.push_str(&render_tuning(&tuned));
    }
    out
}

/// Grid-search log; the selected point is marked with `*`.
pub fn render_tuning(entries: &[(&str, &TuneResult)]) -> String {
    let mut out = String::from("# tuning (mean AP@K on an inner split; * = selected)\n");
    for (name, t) in entries {
        for (i, pt) in t.points.iter().enumerate() {
            let mark = if i == t.best { "*" } else { " " };
            let score = match &pt.outcome {
                Ok(v) => format!("{v:.6}"),
                Err(e) => format!("failed: {e}"),
            };
            let _ = writeln!(out, "{mark} {name} {} {score}", inline_table(&pt.params));
        }
    }
    out
}

fn inline_table(t: &toml::Table) -> String {
    let parts: Vec<String> = t.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Left-aligned columns separated by two spaces.
pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// `metric.model.group=value` lines, six decimals, undefined values omitted.
pub fn render_kv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for m in &report.models {
        for (label, g) in GROUP_LABELS.iter().zip(&m.groups) {
            for (metric, value) in kv_fields(g) {
                if let Some(v) = value {
                    let _ = writeln!(out, "{metric}.{}.{label}={v:.6}", m.name);
                }
            }
        }
    }
    out
}

fn kv_fields(g: &GroupSummary) -> [(&'static str, Option<f64>); 7] {
    [
        ("users", Some(g.users as f64)),
        ("skipped", Some(g.skipped as f64)),
        ("auc", g.auc_mean),
        ("auc_stderr", g.auc_stderr),
        ("gap_p", g.gap_p),
        ("gap_r", g.gap_r),
        ("delta_gap", g.delta_gap),
    ]
}

/// Writes all `(name, contents)` pairs into `dir` via temporary files; on any
/// failure nothing from this call is left behind.
pub fn write_atomically(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut temps = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        for (name, body) in files {
            let tmp = dir.join(format!(".{name}.tmp"));
            temps.push(tmp.clone());
            fs::write(&tmp, body)?;
        }
        let mut done = Vec::new();
        for ((name, _), tmp) in files.iter().zip(&temps) {
            let dest = dir.join(name);
            if let Err(e) = fs::rename(tmp, &dest) {
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(e.into());
            }
            done.push(dest);
        }
        Ok(done)
    })();
    if result.is_err() {
        for t in &temps {
            let _ = fs::remove_file(t);
        }
    }
    result
}

pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    write_atomically(
        dir,
        &[
            ("report.txt", render_table(report)),
            ("report.kv", render_kv(report)),
        ],
    )
}

mod common;

use std::fs;

use popbias::harness::{
    gapcalc, parse_records, render_gapcalc_kv, run_experiment, write_report, ExperimentConfig,
    Measure,
};

#[test]
fn popularity_dominates_gap_r_on_twenty_datasets() {
    for case in 0..20 {
        let r = run_experiment(&common::dominance_dataset(case)).unwrap();
        assert_eq!(common::dominance_violation(&r), None, "dataset {case}");
    }
}

#[test]
fn reports_are_internally_consistent() {
    let cfg = common::synthetic_config(&common::light_models(), 150, 300, 8, "");
    let r = run_experiment(&cfg).unwrap();
    for m in &r.models {
        let [all, low, med, high] = &m.groups;
        assert_eq!(all.users, low.users + med.users + high.users);
        for g in &m.groups {
            let (p, rr, d) = (g.gap_p.unwrap(), g.gap_r.unwrap(), g.delta_gap.unwrap());
            assert!((d - (rr - p) / p).abs() <= 1e-12);
        }
        let n = |g: &popbias::harness::GroupSummary| (g.users - g.skipped) as f64;
        let weighted = [low, med, high]
            .iter()
            .map(|g| n(g) * g.auc_mean.unwrap())
            .sum::<f64>()
            / [low, med, high].iter().map(|g| n(g)).sum::<f64>();
        assert!((weighted - all.auc_mean.unwrap()).abs() <= 1e-12, "{}", m.name);
    }
}

#[test]
fn popularity_and_random_bracket_zero() {
    let models = common::model_block("popularity", "") + &common::model_block("random", "");
    let r = run_experiment(&common::synthetic_config(&models, 300, 800, 2, "")).unwrap();
    assert!(common::group(&r, "popularity", 0).delta_gap.unwrap() > 0.0);
    assert!(common::group(&r, "random", 0).delta_gap.unwrap() < 0.0);
}

#[test]
fn random_baseline_sits_at_one_half() {
    common::check_random_baseline().unwrap();
}

#[test]
fn perfect_oracle_reaches_one() {
    common::check_perfect_oracle().unwrap();
}

#[test]
fn report_files_repeat_byte_for_byte() {
    let cfg = common::synthetic_config(&common::light_models(), 120, 200, 3, "");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_report(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_report(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    for f in ["report.kv", "report.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let kv = fs::read_to_string(a.path().join("report.kv")).unwrap();
    for line in kv.lines() {
        let (key, value) = line.split_once('=').unwrap();
        assert_eq!(key.split('.').count(), 3, "{line}");
        assert_eq!(value.split_once('.').unwrap().1.len(), 6, "{line}");
    }
}

#[test]
fn seed_changes_the_report() {
    let cfg = common::synthetic_config(&common::model_block("random", ""), 120, 200, 3, "");
    let other = cfg.clone().with_seed(4);
    let a = popbias::harness::render_kv(&run_experiment(&cfg).unwrap());
    let b = popbias::harness::render_kv(&run_experiment(&other).unwrap());
    assert_ne!(a, b);
}

#[test]
fn file_based_run_uses_supplied_groups() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::default_synthetic();
    popbias::corpus::write_interactions(&ds, &dir.path().join("x.tsv")).unwrap();
    // everyone labelled high
    let mut groups = String::from("user_id\tgroup\n");
    for u in ds.users() {
        groups.push_str(&format!("{u}\thigh\n"));
    }
    fs::write(dir.path().join("g.tsv"), groups).unwrap();
    let text = "[data]\ninteractions = \"x.tsv\"\ngroups = \"g.tsv\"\n[[models]]\nkind = \"popularity\"\n";
    let cfg = ExperimentConfig::parse(text, dir.path()).unwrap();
    let r = run_experiment(&cfg).unwrap();
    let g = &r.models[0].groups;
    assert_eq!(g[3].users, ds.num_users());
    assert_eq!(g[1].users + g[2].users, 0);

    let derived = format!("{text}[evaluation]\ngroups = \"derived\"\n");
    let r = run_experiment(&ExperimentConfig::parse(&derived, dir.path()).unwrap()).unwrap();
    assert!(r.models[0].groups[1..].iter().all(|g| g.users > 0));
}

#[test]
fn gapcalc_fixtures_hold() {
    common::check_gapcalc().unwrap();
}

#[test]
fn gapcalc_delta_is_scale_invariant() {
    let base = common::near_significance_fixture();
    let scaled: String = base
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                return format!("{line}\n");
            }
            let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
            let v: f64 = f[5].parse().unwrap();
            // stays inside the 0-100 range
            f[5] = format!("{}", v / 100.0);
            format!("{}\n", f.join(","))
        })
        .collect();
    let a = gapcalc(&parse_records(base.as_bytes(), "a").unwrap());
    let b = gapcalc(&parse_records(scaled.as_bytes(), "b").unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.gap_p - 100.0 * y.gap_p).abs() < 1e-9);
        assert!((x.delta_gap.unwrap() - y.delta_gap.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn gapcalc_reports_both_measures_side_by_side() {
    let text = format!(
        "{}svc,u1,low,profile-seed,a,50,0.2\nsvc,u1,low,recommended,b,70,0.1\n",
        common::RECORD_HEADER
    );
    let rows = gapcalc(&parse_records(text.as_bytes(), "t").unwrap());
    let overall: Vec<_> = rows.iter().filter(|r| r.group.is_none()).collect();
    assert_eq!(overall.len(), 2);
    assert_eq!(overall[0].measure, Measure::Spotify);
    assert!(overall[0].delta_gap.unwrap() > 0.0);
    assert!(overall[1].delta_gap.unwrap() < 0.0);
    let kv = render_gapcalc_kv(&rows);
    assert!(kv.contains("delta_gap.svc.overall.spotify=0.400000\n"), "{kv}");
    assert!(kv.contains("delta_gap.svc.overall.lfm=-0.500000\n"), "{kv}");
}

#[test]
fn optional_real_data_checks() {
    match common::check_real_data() {
        None => eprintln!("skipped: {} not set", common::REAL_DATA_ENV),
        Some(r) => {
            r.unwrap();
        }
    }
}

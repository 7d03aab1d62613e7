use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use popbias::corpus::{
    generate_synthetic, long_tail_stats, read_interactions, split_mask, write_groups,
    write_interactions, InteractionDataset, SyntheticConfig,
};
use popbias::harness::{
    emit_tail_plot_data, gapcalc, load_dataset, read_records, render_gapcalc_kv,
    render_gapcalc_table, render_table, render_tuning, run_experiment_with, tune_models,
    write_atomically, write_report, ExperimentConfig,
};
use popbias::{par, Error, Result};

#[derive(Parser)]
#[command(name = "popbias", version, about = "Popularity-bias experiments for implicit-feedback recommenders")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read an interaction file and report corpus statistics.
    Ingest {
        interactions: PathBuf,
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Generate a synthetic long-tail corpus.
    Synth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        artists: Option<usize>,
        #[arg(long)]
        exponent: Option<f64>,
    },
    /// Mask a fraction of every profile for evaluation.
    Split {
        interactions: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
    /// Grid-search hyperparameters for every model with a grid.
    Tune,
    /// Full experiment: split, tune, fit, evaluate, report.
    Run,
    /// ΔGAP and t-tests for recorded simulated-user recommendations.
    Gapcalc { records: PathBuf },
    /// Popularity-by-rank and coverage series for a corpus.
    Tailplot { interactions: Option<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::validation("this command needs --config"))?;
    let cfg = ExperimentConfig::from_file(path).map_err(|e| e.in_stage("config"))?;
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn out_dir(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn summary(ds: &InteractionDataset) -> String {
    let stats = long_tail_stats(ds, None);
    format!(
        "users\t{}\nartists\t{}\npairs\t{}\ncoverage_at_0.05\t{:.6}\n",
        stats.num_users,
        stats.num_artists,
        stats.num_pairs,
        stats.coverage_at(0.05)
    )
}

fn execute(cli: Cli) -> Result<()> {
    par::configure_threads(cli.threads)?;
    match &cli.command {
        Command::Ingest {
            interactions,
            groups,
        } => {
            let ds = read_interactions(interactions, groups.as_deref())?;
            let text = summary(&ds);
            print!("{text}");
            if let Some(dir) = &cli.out {
                write_dataset(&ds, dir)?;
                write_atomically(dir, &[("stats.tsv", text)])?;
            }
        }
        Command::Synth {
            users,
            artists,
            exponent,
        } => {
            let mut cfg = match &cli.config {
                Some(_) => load_config(&cli)?
                    .data
                    .synthetic
                    .ok_or_else(|| Error::validation("config has no [data.synthetic] section"))?,
                None => SyntheticConfig::default(),
            };
            if let Some(u) = users {
                cfg.num_users = *u;
            }
            if let Some(a) = artists {
                cfg.num_artists = *a;
            }
            if let Some(s) = exponent {
                cfg.zipf_exponent = *s;
            }
            let ds = generate_synthetic(&cfg, cli.seed.unwrap_or(0))?;
            write_dataset(&ds, &out_dir(&cli, None))?;
            print!("{}", summary(&ds));
        }
        Command::Split {
            interactions,
            fraction,
        } => {
            let ds = read_interactions(interactions, None)?;
            let split = split_mask(&ds, *fraction, cli.seed.unwrap_or(0))?;
            let dir = out_dir(&cli, None);
            let mut masked = String::from("user\tartist\n");
            for (u, items) in split.masked.iter().enumerate() {
                for &a in items {
                    masked.push_str(&format!("{}\t{}\n", ds.users()[u], ds.artists()[a as usize]));
                }
            }
            write_atomically(&dir, &[("masked.tsv", masked)])?;
            write_interactions(&split.train, &dir.join("train.tsv"))?;
            let stats = long_tail_stats(&ds, Some(&split));
            println!(
                "masked\t{}\ntrainable_artists\t{}",
                split.num_masked(),
                stats.trainable_artists.unwrap_or(0)
            );
        }
        Command::Tune => {
            let cfg = load_config(&cli)?;
            let results = tune_models(&cfg)?;
            let entries: Vec<(&str, _)> = results.iter().map(|(n, t)| (n.as_str(), t)).collect();
            let text = render_tuning(&entries);
            write_atomically(&out_dir(&cli, Some(&cfg)), &[("tuning.txt", text.clone())])?;
            print!("{text}");
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            let dir = out_dir(&cli, Some(&cfg));
            let mut saved: Vec<PathBuf> = Vec::new();
            let result = run_experiment_with(&cfg, |name, model| {
                if cfg.evaluation.save_models {
                    let models = dir.join("models");
                    fs::create_dir_all(&models)?;
                    let path = models.join(format!("{name}.pbm"));
                    saved.push(path.clone());
                    model.save(&path)?;
                }
                Ok(())
            })
            .and_then(|report| {
                write_report(&report, &dir).map_err(|e| e.in_stage("report"))?;
                Ok(report)
            });
            match result {
                Ok(report) => print!("{}", render_table(&report)),
                Err(e) => {
                    for p in &saved {
                        let _ = fs::remove_file(p);
                    }
                    return Err(e);
                }
            }
        }
        Command::Gapcalc { records } => {
            let recs = read_records(records)?;
            let rows = gapcalc(&recs);
            let table = render_gapcalc_table(&rows);
            write_atomically(
                &out_dir(&cli, None),
                &[("gapcalc.txt", table.clone()), ("gapcalc.kv", render_gapcalc_kv(&rows))],
            )?;
            print!("{table}");
        }
        Command::Tailplot { interactions } => {
            let (ds, cfg) = match interactions {
                Some(p) => (read_interactions(p, None)?, None),
                None => {
                    let cfg = load_config(&cli)?;
                    (load_dataset(&cfg)?.0, Some(cfg))
                }
            };
            let plot = emit_tail_plot_data(&ds)?;
            write_atomically(
                &out_dir(&cli, cfg.as_ref()),
                &[
                    ("popularity_rank.tsv", plot.rank_tsv()),
                    ("coverage.tsv", plot.coverage_tsv()?),
                ],
            )?;
            print!("{}", plot.coverage_tsv()?);
        }
    }
    Ok(())
}

fn write_dataset(ds: &InteractionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_interactions(ds, &dir.join("interactions.tsv"))?;
    if ds.groups().is_some() {
        write_groups(ds, &dir.join("groups.tsv"))?;
    }
    Ok(())
}

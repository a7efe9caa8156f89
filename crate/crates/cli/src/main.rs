use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use lcsettle::adversary::build_canonical_fork;
use lcsettle::exactprob::{prob_nonneg_margin, prob_settlement_violation, Init};
use lcsettle::fork::to_dot;
use lcsettle::game::{
    monte_carlo_insecurity, run_game, trial_string, CanonicalAdversary, Distribution,
};
use lcsettle::gfbounds::{azuma_bound, azuma_forkable_bound, convergence_radius, GfSeries, default_order};
use lcsettle::margin::{relative_margin, rho};
use lcsettle::stats::linear_fit;
use lcsettle::verify::{verify_recursion, VerifyError, VerifyOptions};
use lcsettle::CharString;

mod grid;
mod output;

use output::{render, Cell, Format, Header, Row};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("{0}")]
    Validation(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Mismatch(_) => 3,
            _ => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "lcsettle", version, about = "Settlement probabilities, bounds and games for longest-chain protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Significant digits for real numbers.
    #[arg(long, global = true, default_value_t = 3, value_parser = clap::value_parser!(u16).range(1..=17))]
    precision: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Gf,
    Azuma,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact Pr[μ_x(y) ≥ 0] over an (alpha, k) grid.
    ExactTable {
        #[arg(long, default_value = "0.05:0.05:0.40")]
        alphas: String,
        #[arg(long, default_value = "50:50:1000")]
        ks: String,
        /// `stationary` or `finite:M` for a prefix of M i.i.d. slots.
        #[arg(long, default_value = "stationary")]
        init: String,
    },
    /// log10 of the exact probabilities per alpha, with a line fit.
    LogplotData {
        #[arg(long, default_value = "0.05:0.05:0.40")]
        alphas: String,
        #[arg(long, default_value = "50:50:1000")]
        ks: String,
    },
    /// Generating-function or Azuma upper bounds.
    Bound {
        #[arg(long, value_enum, default_value_t = Method::Gf)]
        method: Method,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k: String,
    },
    /// Monte Carlo estimate of the canonical adversary's win rate.
    Simulate {
        #[arg(long)]
        alpha: f64,
        #[arg(long = "T", alias = "horizon")]
        horizon: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Directory for JSON transcripts of the first games.
        #[arg(long)]
        emit_transcripts: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_transcripts: u64,
    },
    /// Reach and relative margin of a string at every split.
    Margin {
        #[arg(long)]
        w: String,
    },
    /// The canonical fork of a string.
    Canonical {
        #[arg(long)]
        w: String,
        #[arg(long, value_enum, default_value_t = CanonicalView::Witnesses)]
        view: CanonicalView,
    },
    /// Recursions against brute-force fork enumeration.
    VerifyRecursion {
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        /// Replace the margin recursion by a faulty one.
        #[arg(long)]
        inject_fault: bool,
        /// Skip the canonical-fork checks.
        #[arg(long)]
        no_canonical: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CanonicalView {
    Witnesses,
    Vertices,
    Dot,
    Json,
}

fn check_alphas(alphas: &[f64]) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::BadGrid("no alphas".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 0.5)) {
        return Err(CliError::BadGrid(format!("alpha {a} outside (0, 1/2)")));
    }
    Ok(())
}

fn parse_init(s: &str) -> Result<Init, CliError> {
    match s.split_once(':') {
        None if s == "stationary" => Ok(Init::Stationary),
        Some(("finite", m)) => m.parse().map(Init::Finite).map_err(|_| invalid(format!("bad init {s:?}"))),
        _ => Err(invalid(format!("init must be `stationary` or `finite:M`, got {s:?}"))),
    }
}

/// Exact values sorted by alpha, then k.
fn exact_grid(alphas: &[f64], ks: &[usize], init: Init) -> Result<Vec<(f64, usize, f64)>, CliError> {
    check_alphas(alphas)?;
    if ks.is_empty() {
        return Err(CliError::BadGrid("no ks".into()));
    }
    let mut cells: Vec<(f64, usize)> = alphas.iter().flat_map(|&a| ks.iter().map(move |&k| (a, k))).collect();
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    cells
        .par_iter()
        .map(|&(a, k)| {
            let pmf = init.pmf(a, k).map_err(invalid)?;
            Ok((a, k, prob_nonneg_margin(k, a, &pmf).map_err(invalid)?))
        })
        .collect()
}

fn parse_string(w: &str) -> Result<CharString, CliError> {
    w.parse().map_err(invalid)
}

struct Output {
    parameters: serde_json::Value,
    rows: Vec<Row>,
}

fn run(cmd: &Command, common: &Common) -> Result<Output, CliError> {
    match cmd {
        Command::ExactTable { alphas, ks, init } => {
            let alphas = grid::parse_floats(alphas, 0.05)?;
            let ks = grid::parse_counts(ks, 50)?;
            let init_v = parse_init(init)?;
            let rows = exact_grid(&alphas, &ks, init_v)?
                .into_iter()
                .map(|(a, k, p)| {
                    vec![("alpha", Cell::Param(a)), ("k", k.into()), ("init", init.as_str().into()), ("p", Cell::Real(p))]
                })
                .collect();
            Ok(Output { parameters: json!({"alphas": alphas, "ks": ks, "init": init}), rows })
        }
        Command::LogplotData { alphas, ks } => {
            let alphas = grid::parse_floats(alphas, 0.05)?;
            let ks = grid::parse_counts(ks, 50)?;
            let cells = exact_grid(&alphas, &ks, Init::Stationary)?;
            let mut rows = Vec::new();
            for chunk in cells.chunk_by(|x, y| x.0 == y.0) {
                let xs: Vec<f64> = chunk.iter().map(|c| c.1 as f64).collect();
                let ys: Vec<f64> = chunk.iter().map(|c| c.2.log10()).collect();
                let fit = linear_fit(&xs, &ys);
                for c in chunk {
                    rows.push(vec![
                        ("alpha", Cell::Param(c.0)),
                        ("k", c.1.into()),
                        ("log10_p", Cell::Real(c.2.log10())),
                        ("fit_slope", fit.map_or(Cell::Text(String::new()), |f| Cell::Real(f.slope))),
                        ("fit_r2", fit.map_or(Cell::Text(String::new()), |f| Cell::Real(f.r_squared))),
                    ]);
                }
            }
            Ok(Output { parameters: json!({"alphas": alphas, "ks": ks}), rows })
        }
        Command::Bound { method, eps, k } => {
            let ks = grid::parse_counts(k, 50)?;
            if !(*eps > 0.0 && *eps < 1.0) {
                return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
            }
            let kmax = ks.iter().copied().max().ok_or_else(|| CliError::BadGrid("no ks".into()))?;
            let rows = match method {
                Method::Gf => {
                    let g = GfSeries::new(*eps, default_order(kmax, *eps)).map_err(invalid)?;
                    let radius = convergence_radius(*eps);
                    ks.iter()
                        .map(|&k| {
                            vec![
                                ("eps", Cell::Param(*eps)),
                                ("k", k.into()),
                                ("forkable_bound", Cell::Real(g.forkable_tail(k))),
                                ("relative_bound", Cell::Real(g.relative_tail(k))),
                                ("radius", Cell::Real(radius)),
                            ]
                        })
                        .collect()
                }
                Method::Azuma => ks
                    .iter()
                    .map(|&k| {
                        vec![
                            ("eps", Cell::Param(*eps)),
                            ("k", k.into()),
                            ("azuma_bound", Cell::Real(azuma_bound(k, *eps))),
                            ("azuma_forkable_bound", Cell::Real(azuma_forkable_bound(k, *eps))),
                        ]
                    })
                    .collect(),
            };
            let method = format!("{method:?}").to_lowercase();
            Ok(Output { parameters: json!({"method": method, "eps": eps, "ks": ks}), rows })
        }
        Command::Simulate { alpha, horizon, s, k, trials, emit_transcripts, max_transcripts } => {
            let dist = Distribution::Bernoulli { alpha: *alpha };
            let est = monte_carlo_insecurity(&dist, *horizon, *s, *k, *trials, common.seed).map_err(invalid)?;
            if let Some(dir) = emit_transcripts {
                std::fs::create_dir_all(dir)?;
                for i in 0..(*max_transcripts).min(*trials) {
                    let w = trial_string(&dist, *horizon, common.seed, i).map_err(invalid)?;
                    let tr = run_game(&w, &mut CanonicalAdversary::new(), *s, *k).map_err(invalid)?;
                    std::fs::write(dir.join(format!("trial_{i:06}.json")), tr.to_json())?;
                }
            }
            let mut row = vec![
                ("alpha", Cell::Param(*alpha)),
                ("T", (*horizon).into()),
                ("s", (*s).into()),
                ("k", (*k).into()),
                ("trials", Cell::Int(*trials as i64)),
                ("wins", Cell::Int(est.wins as i64)),
                ("estimate", Cell::Real(est.estimate)),
                ("ci95_low", Cell::Real(est.ci95.0)),
                ("ci95_high", Cell::Real(est.ci95.1)),
            ];
            if *alpha <= 0.5 {
                let exact = prob_settlement_violation(*alpha, *horizon, *s, *k).map_err(invalid)?;
                row.push(("exact", Cell::Real(exact)));
            }
            Ok(Output {
                parameters: json!({"alpha": alpha, "T": horizon, "s": s, "k": k, "trials": trials}),
                rows: vec![row],
            })
        }
        Command::Margin { w } => {
            let ws = parse_string(w)?;
            let rows = (0..=ws.len())
                .map(|m| {
                    let (x, y) = ws.split_at(m);
                    vec![
                        ("split", m.into()),
                        ("x", x.to_string().into()),
                        ("y", y.to_string().into()),
                        ("rho_x", rho(&x).into()),
                        ("rho_w", rho(&ws).into()),
                        ("mu_x_y", relative_margin(&x, &y).into()),
                    ]
                })
                .collect();
            Ok(Output { parameters: json!({"w": ws.to_string()}), rows })
        }
        Command::Canonical { w, view } => {
            let ws = parse_string(w)?;
            let result = build_canonical_fork(&ws);
            let fork = &result.fork;
            let reach = fork.reaches(&ws);
            let rows = match view {
                CanonicalView::Witnesses => result
                    .witnesses
                    .iter()
                    .map(|(&m, pair)| {
                        let (a, b) = pair.map_or((Cell::from(""), Cell::from("")), |(a, b)| (a.0.into(), b.0.into()));
                        let margin = pair.map_or(Cell::from(""), |(a, b)| reach[a.0].min(reach[b.0]).into());
                        vec![("split", m.into()), ("tau_rho", a), ("tau", b), ("margin", margin)]
                    })
                    .collect(),
                CanonicalView::Vertices => fork
                    .vertices()
                    .iter()
                    .map(|v| {
                        vec![
                            ("id", v.id.into()),
                            ("label", v.label.into()),
                            ("parent", v.parent.map_or(Cell::from(""), Cell::from)),
                            ("depth", fork.depth(v.id).into()),
                            ("honest", ws.is_honest(v.label).into()),
                            ("reach", reach[v.id].into()),
                        ]
                    })
                    .collect(),
                CanonicalView::Dot => vec![vec![("dot", to_dot(fork, &ws).into())]],
                CanonicalView::Json => vec![vec![("fork", fork.to_json().into())]],
            };
            Ok(Output { parameters: json!({"w": ws.to_string(), "view": format!("{view:?}").to_lowercase()}), rows })
        }
        Command::VerifyRecursion { max_len, inject_fault, no_canonical } => {
            let opts = VerifyOptions { max_len: *max_len, corrupt_recursion: *inject_fault, check_canonical: !no_canonical };
            let summary = verify_recursion(opts).map_err(|e| match e {
                VerifyError::TooLong(_) => invalid(e),
                VerifyError::MismatchFound { .. } => CliError::Mismatch(e.to_string()),
            })?;
            Ok(Output {
                parameters: json!({"max_len": max_len, "inject_fault": inject_fault, "canonical": !no_canonical}),
                rows: vec![vec![
                    ("max_len", summary.max_len.into()),
                    ("strings", summary.strings.into()),
                    ("checks", summary.checks.into()),
                    ("mismatches", 0usize.into()),
                ]],
            })
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::ExactTable { .. } => "exact-table",
        Command::LogplotData { .. } => "logplot-data",
        Command::Bound { .. } => "bound",
        Command::Simulate { .. } => "simulate",
        Command::Margin { .. } => "margin",
        Command::Canonical { .. } => "canonical",
        Command::VerifyRecursion { .. } => "verify-recursion",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command, &cli.common) {
        Ok(out) => {
            // DOT and raw JSON views read best unwrapped in CSV mode.
            if let (Format::Csv, Command::Canonical { view: CanonicalView::Dot | CanonicalView::Json, .. }) =
                (cli.common.format, &cli.command)
            {
                if let Some(Cell::Text(t)) = out.rows.first().map(|r| r[0].1.clone()) {
                    println!("{t}");
                    return ExitCode::SUCCESS;
                }
            }
            let header = Header {
                command: command_name(&cli.command).into(),
                version: env!("CARGO_PKG_VERSION"),
                seed: cli.common.seed,
                parameters: out.parameters,
            };
            print!("{}", render(cli.common.format, cli.common.precision as usize, &header, &out.rows));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

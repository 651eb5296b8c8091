//! Command-line entry points: run a preset or configuration, certify a
//! cutoff, exercise the boundary chart, and sweep configurations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemotaxis_core::cutoff::{
    boundary_chart, build_cutoff, cutoff_for_point, verify_cutoff, PlateauSpec, Region, Side, Symmetry,
};
use chemotaxis_core::io::save_snapshot;
use chemotaxis_core::scenario::{self, exit, load_config, preset, run_scenario, RunConfig, PRESETS};
use chemotaxis_core::{Error, Grid};

#[derive(Parser)]
#[command(name = "chemotaxis", version, about = "Chemotaxis with heterogeneous logistic damping")]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset by name or a configuration file.
    Run {
        target: String,
        /// Output directory for artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated snapshot times, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Build a disc-in-disc (or point) cutoff and print its certificate.
    VerifyCutoff {
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        lx: f64,
        #[arg(long, default_value_t = 1.0)]
        ly: f64,
        /// Disc center `x,y`; defaults to the domain center.
        #[arg(long, value_delimiter = ',')]
        center: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.15)]
        k_radius: f64,
        #[arg(long, default_value_t = 0.4)]
        v_radius: f64,
        #[arg(long, default_value_t = 0.25)]
        eta: f64,
        /// Reflect across all four walls.
        #[arg(long)]
        walls: bool,
        /// Build the cutoff for this point from the μ of `--mu-from` instead.
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<f64>>,
        /// Preset or configuration providing μ and the grid for `--point`.
        #[arg(long)]
        mu_from: Option<String>,
        #[arg(long)]
        mu0: Option<f64>,
        /// Write φ as a snapshot here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the boundary chart for `linear[:s]`, `sine:a` (x + a sin x) or `cubic:a` (x + a x³).
    ChartDemo {
        f_spec: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Run several presets or configurations concurrently.
    Sweep {
        targets: Vec<String>,
        /// Each run writes to `<out>/<name>`.
        #[arg(long)]
        out: PathBuf,
    },
    /// List preset names.
    Presets,
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Snapshot(_) | Error::Json(_) => exit::IO,
        Error::NonConvergence { .. } | Error::StateDiverged { .. } => exit::NUMERICAL,
        _ => exit::CONFIG,
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    error_code(e)
}

/// A preset name or an existing configuration file.
fn resolve_target(target: &str) -> std::result::Result<RunConfig, i32> {
    if let Some(cfg) = preset(target) {
        return Ok(cfg);
    }
    let path = Path::new(target);
    if !path.is_file() {
        eprintln!(
            "error: {target:?} is neither a preset ({}) nor a configuration file",
            PRESETS.join(", ")
        );
        return Err(exit::USAGE);
    }
    load_config(path).map_err(|e| fail(&e))
}

fn summarize(o: &scenario::ScenarioOutcome) {
    let r = &o.report;
    let b = &r.blowup;
    println!("scenario        {}", r.name);
    println!("verdict         {:?} ({:?})", b.verdict, b.status);
    println!("final time      {:.6e} of {}", b.final_time, b.t_end);
    println!("steps           {}", r.steps);
    println!("max u           {:.6e} (cap {:.3e})", o.state.u.max(), b.u_cap);
    println!("mass            {:.6e} -> {:.6e}", r.initial_mass, r.final_mass);
    if let Some(t) = b.t_max_estimate {
        println!("t_max estimate  {t:.6e} (heuristic)");
    }
    if let (Some(ov), Some(loc)) = (b.mu_overlap, b.localized) {
        println!(
            "blow-up set     {} cells, mu_overlap {ov:.4}, localized {loc}",
            b.blowup_cells.len()
        );
    }
    for lb in &r.local_bounds {
        println!(
            "{:<15} sup {:.4e} threshold {:.4e} bounded {}",
            lb.label, lb.check.sup, lb.check.threshold, lb.check.bounded
        );
    }
    for m in &r.local_lp {
        println!("{:<15} max {:.4e} running-median ratio {:.3}", m.label, m.max, m.median_ratio);
    }
    for f in &r.expectation_failures {
        println!("MISMATCH        {f}");
    }
    println!("exit code       {}", r.exit_code);
}

fn cmd_run(target: &str, out: Option<PathBuf>, snapshots: Option<Vec<f64>>, quiet: bool) -> i32 {
    let mut cfg = match resolve_target(target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(s) = snapshots {
        cfg.snapshots = s;
    }
    match run_scenario(&cfg, out.as_deref()) {
        Ok(o) => {
            if !quiet {
                summarize(&o);
            }
            o.exit_code()
        }
        Err(e) => fail(&e),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_cutoff(
    n: usize,
    lx: f64,
    ly: f64,
    center: Option<Vec<f64>>,
    k_radius: f64,
    v_radius: f64,
    eta: f64,
    walls: bool,
    point: Option<Vec<f64>>,
    mu_from: Option<String>,
    mu0: Option<f64>,
    out: Option<PathBuf>,
) -> i32 {
    let built = match (point, mu_from) {
        (Some(p), Some(src)) => {
            if p.len() != 2 {
                eprintln!("error: --point takes x,y");
                return exit::USAGE;
            }
            let cfg = match resolve_target(&src) {
                Ok(c) => c,
                Err(code) => return code,
            };
            cfg.build_grid()
                .and_then(|g| scenario::build_coefficient(&cfg.mu, &g))
                .and_then(|mu| cutoff_for_point((p[0], p[1]), &mu, mu0, eta))
        }
        (Some(_), None) | (None, Some(_)) => {
            eprintln!("error: --point and --mu-from go together");
            return exit::USAGE;
        }
        (None, None) => {
            let (cx, cy) = match center.as_deref() {
                Some([x, y]) => (*x, *y),
                Some(_) => {
                    eprintln!("error: --center takes x,y");
                    return exit::USAGE;
                }
                None => (0.5 * lx, 0.5 * ly),
            };
            let spec = PlateauSpec {
                k: Region::Disc { cx, cy, r: k_radius },
                v: Region::Disc { cx, cy, r: v_radius },
                delta: None,
                symmetry: if walls { Symmetry::DomainWalls } else { Symmetry::None },
            };
            Grid::new(lx, ly, n, n).and_then(|g| build_cutoff(&spec, &g, eta))
        }
    };
    let c = match built {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let report = verify_cutoff(&c);
    println!("{report}");
    if let Some(path) = out {
        if let Err(e) = save_snapshot(&path, &c.phi, 0.0) {
            return fail(&e);
        }
    }
    if report.all_passed() {
        0
    } else {
        1
    }
}

type Graph = (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>);

fn parse_f_spec(spec: &str) -> Option<Graph> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a.trim().parse::<f64>().ok()?)),
        None => (spec, None),
    };
    Some(match kind {
        "linear" => {
            let s = arg.unwrap_or(1.0);
            (Box::new(move |x| s * x), Box::new(move |_| s))
        }
        "sine" => {
            let a = arg.unwrap_or(0.2);
            (Box::new(move |x: f64| x + a * x.sin()), Box::new(move |x: f64| 1.0 + a * x.cos()))
        }
        "cubic" => {
            let a = arg.unwrap_or(0.1);
            (Box::new(move |x: f64| x + a * x * x * x), Box::new(move |x: f64| 1.0 + 3.0 * a * x * x))
        }
        _ => return None,
    })
}

fn cmd_chart_demo(f_spec: &str, x0: f64, samples: usize) -> i32 {
    let Some((f, fp)) = parse_f_spec(f_spec) else {
        eprintln!("error: unknown boundary {f_spec:?}; use linear[:s], sine:a or cubic:a");
        return exit::USAGE;
    };
    let y0 = f(x0);
    let chart = match boundary_chart(f, fp, x0, y0) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    println!("boundary {f_spec}, base ({x0}, {y0:.6}), half-width {:.6}", chart.delta);
    println!("{:>12} {:>14} {:>14} {:>12} {:>12}", "x", "Phi1(x,f(x))", "d_nu Phi1", "d_nu Phi2", "err");
    let samples = samples.max(2);
    let mut worst1: f64 = 0.0;
    let mut worst2: f64 = 0.0;
    let mut sides_ok = true;
    for k in 0..samples {
        let x = x0 - 0.95 * chart.delta + 1.9 * chart.delta * k as f64 / (samples - 1) as f64;
        let y = chart.boundary(x);
        let (Ok((p1, _)), Ok((d1, d2))) = (chart.map(x, y), chart.normal_derivative(x)) else {
            eprintln!("error: sample x = {x} left the chart");
            return exit::NUMERICAL;
        };
        let s = chart.slope(x);
        let err2 = (d2 + (1.0 + s * s).sqrt()).abs();
        worst1 = worst1.max(d1.abs());
        worst2 = worst2.max(err2);
        for (dy, want) in [(0.1, Side::Inside), (-0.1, Side::Outside), (0.0, Side::Boundary)] {
            if chart.classify(x, y + dy).ok() != Some(want) {
                sides_ok = false;
            }
        }
        if k % (samples / 10).max(1) == 0 {
            println!("{x:>12.6} {p1:>14.6e} {d1:>14.3e} {d2:>12.6} {err2:>12.3e}");
        }
    }
    let pass = worst1 <= 1e-6 && worst2 <= 1e-5 && sides_ok;
    println!("max |d_nu Phi1| = {worst1:.3e}, max |d_nu Phi2 + sqrt(1+f'^2)| = {worst2:.3e}");
    println!("side classification {}", if sides_ok { "ok" } else { "MISMATCH" });
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if pass {
        0
    } else {
        1
    }
}

fn cmd_sweep(targets: &[String], out: &Path, quiet: bool) -> i32 {
    if targets.is_empty() {
        eprintln!("error: sweep needs at least one preset or configuration");
        return exit::USAGE;
    }
    let mut configs = Vec::new();
    for t in targets {
        match resolve_target(t) {
            Ok(c) => configs.push(c),
            Err(code) => return code,
        }
    }
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort();
    names.dedup();
    if names.len() != configs.len() {
        eprintln!("error: sweep targets must have distinct names");
        return exit::USAGE;
    }
    let codes: Vec<(String, i32)> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| {
                let dir = out.join(&cfg.name);
                s.spawn(move || match run_scenario(cfg, Some(&dir)) {
                    Ok(o) => o.exit_code(),
                    Err(e) => fail(&e),
                })
            })
            .collect();
        configs
            .iter()
            .zip(handles)
            .map(|(c, h)| (c.name.clone(), h.join().unwrap_or(exit::NUMERICAL)))
            .collect()
    });
    if !quiet {
        for (name, code) in &codes {
            println!("{name:<24} exit {code}");
        }
    }
    codes
        .iter()
        .map(|&(_, c)| c)
        .find(|&c| c != exit::BOUNDED && c != exit::BLOWUP_EXPECTED)
        .unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match cli.command {
        Command::Run { target, out, snapshots } => cmd_run(&target, out, snapshots, cli.quiet),
        Command::VerifyCutoff {
            n,
            lx,
            ly,
            center,
            k_radius,
            v_radius,
            eta,
            walls,
            point,
            mu_from,
            mu0,
            out,
        } => cmd_verify_cutoff(n, lx, ly, center, k_radius, v_radius, eta, walls, point, mu_from, mu0, out),
        Command::ChartDemo { f_spec, x0, samples } => cmd_chart_demo(&f_spec, x0, samples),
        Command::Sweep { targets, out } => cmd_sweep(&targets, &out, cli.quiet),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            0
        }
    };
    ExitCode::from(code as u8)
}

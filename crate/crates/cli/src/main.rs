use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use beamsparse::allsp::initial_selection;
use beamsparse::aullsp::initial_user_selections;
use beamsparse::cost::measured_vs_model;
use beamsparse::experiment::{
    emit, emit_convergence, load_channel, run_complexity_probe, run_convergence, run_sweeps, write_file,
};
use beamsparse::oracle::{exhaustive_beam_search, exhaustive_user_beam_search};
use beamsparse::scenario::{Algorithm, ChannelSource, Scenario};
use beamsparse::{
    allsp_solve, aullsp_solve, cost_model, synth_channel, ChannelParams, CostReport, PrecodingError, Result,
    SelectionRule, SolverOptions, SystemConfig,
};

#[derive(Parser)]
#[command(name = "beamsparse", version, about = "Sparse angle-domain WMMSE precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration WSR traces at the first SNR point and K_s of the scenario.
    Converge(Common),
    /// Matched-seed sweep over SNR and K_s with gaps against dense WMMSE.
    Sweep(Common),
    /// Signal weighting cost: analytic model and instrumented counts.
    Cost {
        #[command(flatten)]
        common: Common,
        /// Long coherence period (240 slots) instead of the 10-slot grid.
        #[arg(long)]
        long_period: bool,
        /// Random symbol vectors pushed through both apply paths.
        #[arg(long, default_value_t = 100)]
        symbols: usize,
    },
    /// Exhaustive support enumeration on a small instance.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Analytic X-update multiply counts versus M.
    Complexity {
        /// Array sizes to probe.
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128, 256])]
        ms: Vec<usize>,
        /// Users, each with `--n` antennas and streams.
        #[arg(long, default_value_t = 2)]
        users: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Penalized,
    Plain,
    Guarded,
}

impl From<Rule> for SelectionRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Penalized => SelectionRule::Penalized,
            Rule::Plain => SelectionRule::PlainGradient,
            Rule::Guarded => SelectionRule::Guarded,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trials use `seed .. seed + trials`.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<Algorithm>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Antenna-domain channel file used instead of synthesis.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    /// Start from the M = 128 defaults instead of the desk-scale ones.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    k_s: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    rule: Option<Rule>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = match (&self.config, self.full_scale) {
            (Some(path), _) => Scenario::load(path)?,
            (None, true) => Scenario::full_scale(),
            (None, false) => Scenario::desk(),
        };
        if let Some(seed) = self.seed {
            sc.cfg.seed = seed;
        }
        if !self.algo.is_empty() {
            sc.algorithms = self.algo.clone();
        }
        if let Some(out) = &self.out {
            sc.out_dir = out.clone();
        }
        if let Some(path) = &self.channel_file {
            sc.channel = ChannelSource::File(path.clone());
        }
        if !self.snr.is_empty() {
            sc.snr_db = self.snr.clone();
        }
        if !self.k_s.is_empty() {
            sc.k_s = self.k_s.clone();
            sc.cfg.k_s = sc.k_s[0];
        }
        if let Some(t) = self.trials {
            sc.trials = t;
        }
        if let Some(r) = self.rule {
            sc.rule = r.into();
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn options(sc: &Scenario) -> SolverOptions {
    SolverOptions {
        max_iter: sc.max_iter,
        tol: sc.tol,
        rule: sc.rule,
        freeze_selection: false,
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn converge(common: &Common) -> Result<()> {
    let sc = common.scenario()?;
    let traces = run_convergence(&sc)?;
    println!("scenario {}  snr {} dB  K_s {}", sc.hash(), sc.snr_points()[0], sc.k_s[0]);
    println!("{:<8} {:>14} {:>12}", "algo", "final_wsr", "iters_1e-3");
    for t in &traces {
        let iters = t.iters_to_tol.map_or("-".to_string(), |i| i.to_string());
        println!("{:<8} {:>14.6} {:>12}", t.algo.name(), t.final_wsr_bits, iters);
    }
    print_paths(&emit_convergence(&sc, &traces, &sc.out_dir)?);
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let sc = common.scenario()?;
    let summary = run_sweeps(&sc)?;
    println!("scenario {}  {} trials", summary.scenario_hash, sc.trials);
    println!("{:<8} {:>8} {:>5} {:>12} {:>9} {:>8}", "algo", "snr_db", "k_s", "median_wsr", "gap_%", "iters");
    for c in &summary.medians {
        let iters = c.iters_to_tol.map_or("-".to_string(), |i| format!("{i:.1}"));
        println!(
            "{:<8} {:>8} {:>5} {:>12.4} {:>9.3} {:>8}",
            c.algo.name(),
            c.snr_db,
            c.k_s,
            c.wsr_bits,
            100.0 * c.gap_vs_wmmse,
            iters
        );
    }
    print_paths(&emit(&summary, &sc.out_dir)?);
    Ok(())
}

fn print_model(r: &CostReport) {
    let (num, den) = r.reduction_ratio();
    println!(
        "{:>5} {:>4} {:>5} {:>8} {:>10} {:>10} {:>12} {:>12} {:>9.3}% ({num}/{den}){}",
        r.m,
        r.d,
        r.k_s,
        r.n_sym,
        r.dense_per_symbol,
        r.sparse_per_symbol,
        r.dense_total,
        r.sparse_total,
        100.0 * r.reduction_fraction,
        if r.log2_rounded { "  log2 rounded up" } else { "" }
    );
}

fn cost(common: &Common, long_period: bool, symbols: usize) -> Result<()> {
    let mut sc = common.scenario()?;
    if long_period {
        sc.grid = beamsparse::ResourceGrid::long_period();
    }
    let (m, d) = (sc.cfg.m as u64, sc.cfg.d() as u64);
    println!("model");
    println!(
        "{:>5} {:>4} {:>5} {:>8} {:>10} {:>10} {:>12} {:>12} {:>10}",
        "M", "D", "K_s", "n_sym", "dense/sym", "sparse/sym", "dense_total", "sparse_total", "reduction"
    );
    let mut reports = Vec::new();
    for &k_s in &sc.k_s {
        let r = cost_model(m, d, k_s as u64, &sc.grid);
        print_model(&r);
        reports.push(r);
    }

    println!();
    println!("measured ({symbols} symbols, seed {}, snr {} dB)", sc.cfg.seed, sc.snr_points()[0]);
    println!(
        "{:<8} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "algo", "K_s", "dense/sym", "angle/sym", "fft/sym", "model", "mismatch"
    );
    let opts = options(&sc);
    for &k_s in &sc.k_s {
        let cfg = sc.cell_config(0, sc.snr_points()[0], k_s);
        let ch = load_channel(&sc, &cfg)?;
        for algo in [Algorithm::Allsp, Algorithm::Aullsp] {
            let sol = match algo {
                Algorithm::Allsp => allsp_solve(&cfg, &ch, &initial_selection(&ch, k_s)?, &opts)?.0,
                _ => aullsp_solve(&cfg, &ch, &initial_user_selections(&ch, k_s)?, &opts)?.0,
            };
            let r = measured_vs_model(&sol, &sc.grid, symbols, cfg.seed)?;
            let meas = r.measured_multiplies.as_ref().expect("measured counts attached");
            println!(
                "{:<8} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10.2e}",
                algo.name(),
                k_s,
                meas.dense_per_symbol,
                meas.angle_per_symbol,
                meas.transform_per_symbol,
                r.sparse_per_symbol,
                meas.max_relative_mismatch
            );
            reports.push(r);
        }
    }
    let json = format!(
        "[{}]",
        reports.iter().map(|r| r.to_json()).collect::<Result<Vec<_>>>()?.join(",\n")
    );
    print_paths(&[write_file(&sc.out_dir, &format!("cost_{}.json", sc.hash()), &json)?]);
    Ok(())
}

fn oracle(common: &Common) -> Result<()> {
    let algo = match common.algo.as_slice() {
        [] => Algorithm::Allsp,
        [a @ (Algorithm::Allsp | Algorithm::Aullsp)] => *a,
        _ => {
            return Err(PrecodingError::InvalidConfig(
                "oracle takes a single algorithm: allsp or aullsp".into(),
            ))
        }
    };
    let seed = common.seed.unwrap_or(0);
    let (cfg, ch) = if common.config.is_some() || common.channel_file.is_some() {
        let sc = common.scenario()?;
        let cfg = sc.cell_config(0, sc.snr_points()[0], sc.k_s[0]);
        let ch = load_channel(&sc, &cfg)?;
        (cfg, ch)
    } else {
        let (m, k_s) = if algo == Algorithm::Allsp { (6, 3) } else { (5, 2) };
        let snr = common.snr.first().copied().unwrap_or(10.0);
        let cfg = SystemConfig::uniform(m, 2, 1, 1, k_s).with_seed(seed).with_snr_db(snr);
        let ch = synth_channel(&cfg, &ChannelParams::default())?;
        (cfg, ch)
    };
    let opts = SolverOptions {
        max_iter: beamsparse::oracle::ORACLE_MAX_ITER,
        tol: beamsparse::oracle::ORACLE_TOL,
        rule: common.rule.map_or(SelectionRule::Penalized, Into::into),
        freeze_selection: false,
    };
    let result = if algo == Algorithm::Allsp {
        let best = exhaustive_beam_search(&cfg, &ch)?;
        let (sol, _) = allsp_solve(&cfg, &ch, &initial_selection(&ch, cfg.k_s)?, &opts)?;
        best.with_ratio(sol.wsr_bits)
    } else {
        let best = exhaustive_user_beam_search(&cfg, &ch)?;
        let (sol, _) = aullsp_solve(&cfg, &ch, &initial_user_selections(&ch, cfg.k_s)?, &opts)?;
        best.with_ratio(sol.wsr_bits)
    };
    println!(
        "{algo}: M={} K_s={} seed={}  {} candidates",
        cfg.m,
        cfg.k_s,
        cfg.seed,
        result.per_support.len()
    );
    println!("best support {}  wsr {:.6}", result.best.label(), result.best_wsr());
    println!("algorithm / best = {:.4}", result.ratio.unwrap_or(0.0));
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let name = format!("oracle_{algo}_m{}_ks{}_seed{}.csv", cfg.m, cfg.k_s, cfg.seed);
    print_paths(&[write_file(&out, &name, &result.to_csv())?]);
    Ok(())
}

fn complexity(ms: &[usize], users: usize, n: usize, out: &std::path::Path) -> Result<()> {
    if ms.len() < 2 || users == 0 || n == 0 {
        return Err(PrecodingError::InvalidConfig("need two or more sizes and nonzero users/n".into()));
    }
    let dims = vec![n; users];
    let rep = run_complexity_probe(ms, &dims, &dims, 1);
    println!("{:<8} {:>6} {:>5} {:>6} {:>16} {:>16}", "algo", "M", "N", "K_s", "dominant", "total");
    for r in &rep.rows {
        println!(
            "{:<8} {:>6} {:>5} {:>6} {:>16} {:>16}",
            r.algo.name(),
            r.m,
            r.n,
            r.k_s,
            r.dominant_mults,
            r.total_mults
        );
    }
    println!();
    for s in &rep.slopes {
        println!("{:<8} slope {:.3}  (all terms {:.3})", s.algo.name(), s.dominant_slope, s.total_slope);
    }
    print_paths(&[write_file(out, "complexity.csv", &rep.to_csv()?)?]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Converge(c) => converge(c),
        Command::Sweep(c) => sweep(c),
        Command::Cost {
            common,
            long_period,
            symbols,
        } => cost(common, *long_period, *symbols),
        Command::Oracle { common } => oracle(common),
        Command::Complexity { ms, users, n, out } => complexity(ms, *users, *n, out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

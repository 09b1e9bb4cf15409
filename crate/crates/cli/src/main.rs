use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use peprec::channels::{
    gen_rayleigh, gen_saleh_valenzuela, load_dataset, sample_rng, save_dataset, SvParams,
};
use peprec::equivariance::{check_pe, PermKind};
use peprec::harness::{
    ablate_gformer, evaluate, sweep_generalize, train, write_rows, AblateConfig, EvalOptions, Policy, SweepConfig,
    TrainConfig,
};
use peprec::models::{load_model, Arch, Model, ModelSpec};
use peprec::precoding::WmmseOptions;
use peprec::{Error, Result};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "peprec", version, about = "Permutation-equivariant learned precoding")]
struct Cli {
    /// Seed for every random draw; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit with status 1 when the command's gate check fails.
    #[arg(long, global = true)]
    gate: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a channel dataset file and its JSON sidecar.
    GenData(GenData),
    /// Train a model from a JSON config.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a classical policy against WMMSE.
    Eval(EvalArgs),
    /// Size-generalization sweep from a JSON config.
    Sweep(SweepArgs),
    /// Graph-transformer variant ablation from a JSON config.
    Ablate(AblateArgs),
    /// Permutation-equivariance check on random or trained weights.
    PeCheck(PeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Channel {
    Rayleigh,
    Sv,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "rayleigh")]
    channel: Channel,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 5)]
    rays: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the epoch cap.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gate: best held-out SE ratio must reach this value.
    #[arg(long)]
    min_ratio: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Wmmse,
    Zf,
    Mrt,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "policy")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<Baseline>,
    #[arg(long)]
    data: PathBuf,
    /// RF chains for hybrid models; defaults to the checkpoint's maximum.
    #[arg(long)]
    nrf: Option<usize>,
    /// Write `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_ratio: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gate: largest drop of the SE ratio below the first test dimension.
    #[arg(long)]
    max_drop: Option<f64>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gate: 2D-Gformer minus the variant without U^K, at every SNR.
    #[arg(long, default_value_t = 0.10)]
    min_gap: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Perm {
    User,
    Antenna,
    Rf,
    Joint,
}

#[derive(Args)]
struct PeArgs {
    #[arg(long, required_unless_present = "checkpoint")]
    arch: Option<Arch>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    nrf: usize,
    #[arg(long, value_enum, default_value = "joint")]
    perm: Perm,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Hidden widths of the random model, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,32,32")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long)]
    positional_encoding: bool,
}

fn read_config<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json<S: serde::Serialize>(value: &S) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn gen_data(cli: &Cli, a: &GenData) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let ds = match a.channel {
        Channel::Rayleigh => gen_rayleigh::<f64>(a.n, a.k, a.count, a.snr_db, seed)?,
        Channel::Sv => gen_saleh_valenzuela::<f64>(a.n, a.k, &SvParams::new(a.clusters, a.rays), a.count, a.snr_db, seed)?,
    };
    save_dataset(&ds, &a.out)?;
    eprintln!("wrote {} samples ({}x{}) to {}", ds.len(), a.n, a.k, a.out.display());
    Ok(true)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<bool> {
    let mut cfg: TrainConfig = read_config(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.options.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.options.epochs = e;
    }
    if let Some(o) = &a.out {
        cfg.checkpoint = Some(o.clone());
    }
    let out = train(&cfg)?;
    for r in &out.history {
        let v = r.valid_ratio.map(|v| format!(" valid_ratio {v:.4}")).unwrap_or_default();
        eprintln!("epoch {:4} loss {:.5}{v} ({:.1}s)", r.epoch, r.train_loss, r.seconds);
    }
    let best = out.history.iter().find(|r| r.epoch == out.best_epoch);
    let ratio = best.and_then(|r| r.valid_ratio);
    print_json(&serde_json::json!({
        "arch": cfg.spec.arch,
        "params": out.model.num_params(),
        "n_train": out.n_train,
        "best_epoch": out.best_epoch,
        "best_valid_ratio": ratio,
        "stop": out.stop,
        "seconds": out.seconds,
        "checkpoint": cfg.checkpoint,
    }))?;
    Ok(match a.min_ratio {
        Some(m) => ratio.is_some_and(|r| r >= m),
        None => true,
    })
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<bool> {
    let data = load_dataset::<f64>(&a.data)?;
    let opts = EvalOptions {
        floor_seed: cli.seed.unwrap_or(0),
        ..EvalOptions::default()
    };
    let wm = WmmseOptions::default();
    let model: Option<Model<f64>> = a.checkpoint.as_deref().map(load_model).transpose()?;
    let (policy, n_rf) = match (&model, a.policy) {
        (Some(m), _) => (Policy::Model(m), a.nrf.unwrap_or(m.spec().n_rf)),
        (None, Some(Baseline::Wmmse)) => (Policy::Wmmse(&wm), 0),
        (None, Some(Baseline::Zf)) => (Policy::ZeroForcing, 0),
        (None, Some(Baseline::Mrt)) => (Policy::Mrt, 0),
        (None, None) => return Err(Error::Config("give --checkpoint or --policy".into())),
    };
    let e = evaluate(policy, &data, n_rf, 0, &opts)?;
    if let Some(out) = &a.out {
        write_rows(std::slice::from_ref(&e.row), out)?;
    }
    print_json(&serde_json::json!({
        "row": e.row,
        "mean_se": e.mean_se(),
        "mean_floor_se": e.mean_floor_se(),
    }))?;
    Ok(a.min_ratio.is_none_or(|m| e.row.se_ratio_mean >= m))
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<bool> {
    let mut cfg: SweepConfig = read_config(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.options.seed = s;
    }
    let out = sweep_generalize(&cfg)?;
    if let Some(o) = &a.out {
        write_rows(&out.rows, o)?;
    }
    print_json(&out.rows)?;
    let first = out.rows[0].se_ratio_mean;
    let drop = out.rows.iter().map(|r| first - r.se_ratio_mean).fold(0.0, f64::max);
    eprintln!("largest drop below the first test dimension: {drop:.4}");
    Ok(a.max_drop.is_none_or(|m| drop <= m))
}

fn ablate_cmd(cli: &Cli, a: &AblateArgs) -> Result<bool> {
    let mut cfg: AblateConfig = read_config(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.options.seed = s;
    }
    let cells = ablate_gformer(&cfg)?;
    let rows: Vec<_> = cells.iter().map(|c| c.row.clone()).collect();
    if let Some(o) = &a.out {
        write_rows(&rows, o)?;
    }
    print_json(&cells)?;
    let ratio = |arch: Arch, snr: f64| {
        rows.iter()
            .find(|r| r.arch == arch.id() && r.snr_db == snr)
            .map(|r| r.se_ratio_mean)
    };
    let mut ok = true;
    for &snr in &cfg.snrs_db {
        if let (Some(full), Some(wo)) = (ratio(Arch::Gformer2d, snr), ratio(Arch::Gformer2dWoUk, snr)) {
            let gap = full - wo;
            eprintln!("{snr} dB: 2D-Gformer {full:.4}, without U^K {wo:.4}, gap {gap:.4}");
            ok &= gap >= a.min_gap;
        }
    }
    Ok(ok)
}

fn pe_cmd(cli: &Cli, a: &PeArgs) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let model = match (&a.checkpoint, a.arch) {
        (Some(p), _) => load_model::<f64>(p)?,
        (None, Some(arch)) => {
            let mut spec = ModelSpec::with_hidden(arch, &a.hidden, a.heads, a.n, a.k, a.nrf);
            spec.positional_encoding = a.positional_encoding;
            if arch == Arch::ModelGnn {
                spec.widths.iter_mut().for_each(|w| *w += *w % 2);
            }
            Model::new(spec, seed)?
        }
        (None, None) => return Err(Error::Config("give --arch or --checkpoint".into())),
    };
    let kind = match a.perm {
        Perm::User => PermKind::User,
        Perm::Antenna => PermKind::Antenna,
        Perm::Rf => PermKind::Rf,
        Perm::Joint => PermKind::Joint,
    };
    let h = gen_rayleigh::<f64>(a.n, a.k, 1, 10.0, seed)?.samples.remove(0).h;
    let mut rng = sample_rng(seed, 1);
    let report = check_pe(&model, &h, a.nrf, kind, a.trials, a.tol, &mut rng)?;
    print_json(&serde_json::json!({
        "arch": model.arch(),
        "kind": report.kind,
        "trials": report.trials,
        "max_deviation": report.max_deviation,
        "tol": report.tol,
        "pass": report.pass,
    }))?;
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::GenData(a) => gen_data(&cli, a),
        Cmd::Train(a) => train_cmd(&cli, a),
        Cmd::Eval(a) => eval_cmd(&cli, a),
        Cmd::Sweep(a) => sweep_cmd(&cli, a),
        Cmd::Ablate(a) => ablate_cmd(&cli, a),
        Cmd::PeCheck(a) => pe_cmd(&cli, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.gate => {
            eprintln!("gate failed");
            ExitCode::FAILURE
        }
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

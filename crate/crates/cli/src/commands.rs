//! One function per subcommand. Each writes its artifacts plus a resolved
//! `config.toml` into the output directory and returns what it computed.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;

use log::info;
use spiking_nsm::aunn::run_aunn;
use spiking_nsm::bench::{
    instance_rng, run_bench, sample_accepted, summarize, BenchParams, BenchRow, BenchSolver,
    BoxStats,
};
use spiking_nsm::data::{
    gen_ring_manifold, gen_stroke_digits, load_idx, ring_angles, sample_patches, to_samples,
    zca_whiten,
};
use spiking_nsm::learning::{initial_state, solve_all, train};
use spiking_nsm::oracle::OracleResult;
use spiking_nsm::persist::{encode_state, read_state, write_train_log};
use spiking_nsm::render::{render_feature_grid, GrayImage};
use spiking_nsm::snn::{run_snn, write_raster_csv};
use spiking_nsm::tuning::{analyze_tuning, TuningReport};
use spiking_nsm::{relative_error, Dataset, OutputRates, SolverConfig, SynapticState, TrainLog};

use crate::config::{DatasetKind, Experiment, RunConfig};
use crate::error::{CliError, CliResult};

pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_TIMING_CSV: &str = "bench_timing.csv";
pub const BENCH_SUMMARY_CSV: &str = "bench_summary.csv";
pub const STATE_FILE: &str = "state.snsm";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const FEATURES_PGM: &str = "features.pgm";
pub const TUNING_CSV: &str = "tuning.csv";
pub const TUNING_SUMMARY_CSV: &str = "tuning_summary.csv";
pub const COVERAGE_CSV: &str = "coverage.csv";
pub const ORACLE_CSV: &str = "oracle.csv";
pub const RASTER_CSV: &str = "raster.csv";
pub const CONFIG_COPY: &str = "config.toml";

fn prepare_out(cfg: &RunConfig, out: &Path) -> CliResult<RunConfig> {
    // `out` is left out of the copy so reruns elsewhere stay byte-identical
    let mut resolved = cfg.resolved()?;
    resolved.out = None;
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    write_text(&out.join(CONFIG_COPY), &resolved.to_toml())?;
    Ok(resolved)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<(usize, BenchSolver, BoxStats)>,
}

fn bench_params(cfg: &RunConfig) -> CliResult<BenchParams> {
    let snn = cfg.solver_config()?;
    let ks = cfg.ks.clone().expect("resolved");
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Config("`ks` must list sizes >= 1".into()));
    }
    let aunn_dtau = cfg.aunn_dtau.expect("resolved");
    let aunn = if aunn_dtau > 0.0 {
        Some(SolverConfig { dtau: aunn_dtau, ..snn })
    } else {
        None
    };
    Ok(BenchParams {
        ks,
        instances: cfg.instances.expect("resolved"),
        seed: cfg.seed(),
        snn,
        aunn,
        oracle: SolverConfig::default(),
        include_control: cfg.control.expect("resolved"),
        max_retries: cfg.max_retries.expect("resolved"),
    })
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("k,instance,solver,relative_error\n");
    for r in rows {
        writeln!(s, "{},{},{},{:?}", r.k, r.instance, r.solver.name(), r.relative_error).unwrap();
    }
    s
}

pub fn bench_summary_csv(summary: &[(usize, BenchSolver, BoxStats)]) -> String {
    let mut s = String::from("k,solver,count,min,q25,median,q75,max\n");
    for (k, solver, b) in summary {
        writeln!(
            s,
            "{k},{},{},{:?},{:?},{:?},{:?},{:?}",
            solver.name(),
            b.count,
            b.min,
            b.q25,
            b.median,
            b.q75,
            b.max
        )
        .unwrap();
    }
    s
}

/// Runs the random-instance benchmark. Runtimes go to their own file so the
/// error table stays reproducible byte for byte.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> CliResult<BenchOutcome> {
    cfg.require(Experiment::Bench, "bench")?;
    let cfg = prepare_out(cfg, out)?;
    let params = bench_params(&cfg)?;
    let rows = run_bench(&params)?;
    let summary = summarize(&rows);
    write_text(&out.join(BENCH_CSV), &bench_csv(&rows))?;
    write_text(&out.join(BENCH_SUMMARY_CSV), &bench_summary_csv(&summary))?;
    let mut timing = String::from("k,instance,solver,runtime_secs\n");
    for r in &rows {
        writeln!(timing, "{},{},{},{:?}", r.k, r.instance, r.solver.name(), r.runtime_secs).unwrap();
    }
    write_text(&out.join(BENCH_TIMING_CSV), &timing)?;
    for (k, solver, b) in &summary {
        info!("k = {k:>3} {:<6} median {:.3e}", solver.name(), b.median);
    }
    Ok(BenchOutcome { rows, summary })
}

/// Builds the training dataset the config describes.
pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let cfg = cfg.resolved()?;
    let seed = cfg.seed();
    match cfg.experiment()? {
        Experiment::Bench => Err(CliError::Config("bench configs have no dataset".into())),
        Experiment::Manifold => Ok(gen_ring_manifold(
            cfg.ring_t.expect("resolved"),
            cfg.ring_n.expect("resolved"),
            cfg.ring_width.expect("resolved"),
            seed,
        )?),
        Experiment::Features => {
            let mut images = match cfg.dataset.expect("checked at parse") {
                DatasetKind::Idx => load_idx(cfg.idx_path.as_ref().expect("checked at parse"))?,
                DatasetKind::Stroke => gen_stroke_digits(cfg.images.expect("checked at parse"), seed),
            };
            if let Some(limit) = cfg.images {
                images = images.truncated(limit);
            }
            let scale = cfg.scale.expect("resolved");
            let mut data = match (cfg.patch, cfg.patches) {
                (Some(patch), Some(count)) => {
                    let raw = sample_patches(&images, patch, count, seed)?;
                    Dataset::new(raw.as_matrix() * scale)?
                }
                _ => to_samples(&images, scale)?,
            };
            if let Some(eps) = cfg.whiten_eps {
                data = zca_whiten(&data, eps)?;
            }
            Ok(data)
        }
    }
}

pub struct TrainOutcome {
    pub state: SynapticState,
    pub log: TrainLog,
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<TrainOutcome> {
    if cfg.experiment()? == Experiment::Bench {
        return Err(CliError::Config("`train` needs experiment `features` or `manifold`".into()));
    }
    let cfg = prepare_out(cfg, out)?;
    let hyper = cfg.hyperparams()?;
    let schedule = cfg.schedule()?;
    let opts = cfg.train_options()?;
    let solver_cfg = cfg.solver_config()?;
    let data = load_dataset(&cfg)?;
    let init = initial_state(cfg.k()?, data.dim(), cfg.weight_init()?, cfg.seed())?;
    info!(
        "training k = {} on {} samples of dimension {} for {} steps",
        init.k(),
        data.len(),
        data.dim(),
        opts.steps
    );
    let (state, log) = train(&data, &hyper, &schedule, cfg.solver()?, init, &opts, &solver_cfg)?;
    write_bytes(&out.join(STATE_FILE), &encode_state(&state))?;
    let mut csv = Vec::new();
    write_train_log(&log, &mut csv)?;
    write_bytes(&out.join(TRAIN_LOG_CSV), &csv)?;
    if let (Some(first), Some(last)) = (log.checkpoints.first(), log.checkpoints.last()) {
        info!("probe cost {:.6} -> {:.6}", first.nsm_cost, last.nsm_cost);
    }
    Ok(TrainOutcome { state, log })
}

pub fn load_state(path: &Path) -> CliResult<SynapticState> {
    Ok(read_state(File::open(path).map_err(CliError::io(path))?)?)
}

/// Tile shape of one feature: declared `tile_rows` x `tile_cols`, otherwise
/// square when the input dimension is a perfect square.
pub fn tile_shape(cfg: &RunConfig, n: usize) -> CliResult<(usize, usize)> {
    match (cfg.tile_rows, cfg.tile_cols) {
        (Some(r), Some(c)) => Ok((r, c)),
        (None, None) => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side == n {
                Ok((side, side))
            } else {
                Err(CliError::Config(format!(
                    "input dimension {n} is not square; set `tile_rows` and `tile_cols`"
                )))
            }
        }
        _ => Err(CliError::Config("`tile_rows` and `tile_cols` go together".into())),
    }
}

pub fn cmd_features(cfg: &RunConfig, state: &Path, out: &Path) -> CliResult<GrayImage> {
    let cfg = prepare_out(cfg, out)?;
    let st = load_state(state)?;
    let (rows, cols) = tile_shape(&cfg, st.n())?;
    let image = render_feature_grid(&st.w, rows, cols, cfg.grid_cols)?;
    write_bytes(&out.join(FEATURES_PGM), &image.to_pgm())?;
    Ok(image)
}

pub struct TuningOutcome {
    pub angles: Vec<f64>,
    pub responses: Vec<OutputRates>,
    pub report: TuningReport,
}

/// Runs the frozen network on every ring sample and summarizes each unit's
/// tuning curve.
pub fn cmd_tuning(cfg: &RunConfig, state: &Path, out: &Path) -> CliResult<TuningOutcome> {
    cfg.require(Experiment::Manifold, "tuning")?;
    let cfg = prepare_out(cfg, out)?;
    let st = load_state(state)?;
    let data = load_dataset(&cfg)?;
    let angles = ring_angles(data.len());
    let responses = solve_all(cfg.solver()?, &st, &cfg.hyperparams()?, &data, &cfg.solver_config()?)?;
    let report = analyze_tuning(&angles, &responses)?;

    let mut table = String::from("angle,unit,y_tilde\n");
    for (angle, y) in angles.iter().zip(&responses) {
        for (unit, v) in y.as_array().iter().enumerate() {
            writeln!(table, "{angle:?},{unit},{v:?}").unwrap();
        }
    }
    write_text(&out.join(TUNING_CSV), &table)?;

    let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut summary = String::from("unit,active,peak_angle,circular_variance\n");
    for u in &report.units {
        writeln!(
            summary,
            "{},{},{},{}",
            u.unit,
            u.active,
            opt(u.peak_angle),
            opt(u.circular_variance)
        )
        .unwrap();
    }
    write_text(&out.join(TUNING_SUMMARY_CSV), &summary)?;

    let mut coverage = String::from("angle,covered,active_units\n");
    for ((angle, y), covered) in angles.iter().zip(&responses).zip(&report.covered) {
        let active = y.as_array().iter().filter(|v| **v > 0.0).count();
        writeln!(coverage, "{angle:?},{covered},{active}").unwrap();
    }
    write_text(&out.join(COVERAGE_CSV), &coverage)?;
    info!(
        "all angles covered: {}; localized fraction {:.3}",
        report.all_angles_covered(),
        report.localized_fraction(0.5)
    );
    Ok(TuningOutcome {
        angles,
        responses,
        report,
    })
}

pub struct OracleOutcome {
    pub oracle: OracleResult,
    pub snn: OutputRates,
    pub aunn: OutputRates,
}

/// Solves one benchmark instance with every solver and dumps the spike raster.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> CliResult<OracleOutcome> {
    cfg.require(Experiment::Bench, "oracle")?;
    let cfg = prepare_out(cfg, out)?;
    let params = bench_params(&cfg)?;
    let k = cfg.oracle_k.expect("resolved");
    if k == 0 {
        return Err(CliError::Config("`oracle_k` must be at least 1".into()));
    }
    let mut rng = instance_rng(params.seed, k, cfg.oracle_instance.expect("resolved"));
    let (inst, oracle) = sample_accepted(&mut rng, k, &params.oracle, params.max_retries)?;
    let x = inst.x.view();
    let snn = run_snn(&inst.state, &inst.hyper, x, &params.snn)?;
    let aunn_cfg = SolverConfig {
        h_sample_every: 0,
        ..params.aunn.unwrap_or(params.snn)
    };
    let aunn = run_aunn(&inst.state, &inst.hyper, x, &aunn_cfg)?.y;

    let mut table = String::from("unit,oracle,snn,aunn\n");
    for i in 0..k {
        writeln!(
            table,
            "{i},{:?},{:?},{:?}",
            oracle.y.as_array()[i],
            snn.y_tilde.as_array()[i],
            aunn.as_array()[i]
        )
        .unwrap();
    }
    write_text(&out.join(ORACLE_CSV), &table)?;
    let mut raster = Vec::new();
    write_raster_csv(&snn.record, &mut raster)?;
    write_bytes(&out.join(RASTER_CSV), &raster)?;
    info!(
        "kkt residual {:.2e}; relative error snn {:.3e}, aunn {:.3e}; {} spikes",
        oracle.kkt_residual,
        relative_error(&snn.y_tilde, &oracle.y)?,
        relative_error(&aunn, &oracle.y)?,
        snn.record.total_spikes()
    );
    Ok(OracleOutcome {
        oracle,
        snn: snn.y_tilde,
        aunn,
    })
}

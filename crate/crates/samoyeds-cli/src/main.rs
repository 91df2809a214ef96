//! Command-line harness: prune/encode weights, verify invariants, run
//! desk-scale benchmarks on model-shaped and synthetic cases, and print
//! traffic/memory reports.

mod io;
mod presets;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use samoyeds::{
    decode_weight, dense_tiled, deserialize, encode_weight, memory_footprint,
    prune_to_format, serialize, simulate_memory_traffic, spmm_reference, spmm_tiled,
    validate_weight, DenseMatrix, Epilogue, Error as FmtError, PruneReport, SamoyedsWeight,
    SelectedInput, SparseFormatConfig, TileConfig, TrafficScheme,
};

#[derive(Parser)]
#[command(name = "samoyeds", version, about = "Dual-side structured sparse weight tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune (unless --assume-pruned) and encode a dense matrix file.
    Encode(EncodeArgs),
    /// Decode a serialized weight back to a dense matrix file.
    Decode(DecodeArgs),
    /// Verify invariants of a weight file, or of random draws.
    Check(CheckArgs),
    /// Time the engine on preset or synthetic cases; emit CSV rows.
    Bench(BenchArgs),
    /// Closed-form storage cost of a preset or shape.
    Memreport(MemreportArgs),
    /// Closed-form memory traffic per loading scheme.
    Traffic(TrafficArgs),
}

#[derive(Args, Clone, Copy)]
struct ConfigArgs {
    /// Retained sub-rows per block.
    #[arg(long, default_value_t = 1)]
    n: u16,
    /// Sub-rows per block.
    #[arg(long, default_value_t = 2)]
    m: u16,
    /// Sub-row length in elements.
    #[arg(long, default_value_t = 16)]
    v: u16,
}

impl ConfigArgs {
    fn build(&self) -> Result<SparseFormatConfig> {
        Ok(SparseFormatConfig::new(self.n, self.m, self.v)?)
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Dense matrix file (CSV of floats, or raw f32 with shape header).
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output path; defaults to the input with extension `.smy`.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Input already conforms to the pattern; encode without pruning.
    #[arg(long)]
    assume_pruned: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// Serialized weight file.
    weight: PathBuf,
    /// Output matrix file.
    #[arg(short, long)]
    output: PathBuf,
    /// Output format: `csv` or `raw`; default by output extension.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    /// Weight file to verify.
    weight: Option<PathBuf>,
    /// Instead of a file, verify this many random (shape, config) draws.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SAMOYEDS_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Model preset (qwen2, deepseek, minicpm, openmoe-34b, mixtral-8x7b,
    /// mixtral-8x22b).
    #[arg(long)]
    preset: Option<String>,
    /// Synthetic sweep `LO..HI`: m = k = n doubling from LO to HI.
    #[arg(long)]
    sweep: Option<String>,
    /// Single case `m,k,n`.
    #[arg(long)]
    case: Option<String>,
    #[command(flatten)]
    config: BenchConfigArgs,
    /// Tile sizes `m_b,n_b,k_b,m_w,n_w`.
    #[arg(long)]
    tile: Option<String>,
    /// Pipeline depth.
    #[arg(long, default_value_t = 2)]
    pipe: usize,
    #[arg(long, env = "SAMOYEDS_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed repeats per case (after one warmup run).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Fraction of activation columns selected.
    #[arg(long, default_value_t = 1.0)]
    selection: f64,
    /// Token count (the n dimension) for preset cases.
    #[arg(long, default_value_t = 4096)]
    tokens: usize,
    /// Also write rows to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Sweep dimension cap.
    #[arg(long, default_value_t = 4096)]
    max_dim: usize,
    /// Reference path for the speedup column: `pattern` (same engine on an
    /// n==m encoding) or `dense` (dense tiled GEMM, no 4-group pruning).
    #[arg(long, default_value = "pattern")]
    baseline: String,
}

#[derive(Args, Clone, Copy)]
struct BenchConfigArgs {
    #[arg(long, default_value_t = 1)]
    n: u16,
    #[arg(long, default_value_t = 2)]
    m: u16,
    /// Sub-row length; the tiled engine needs v divisible by k_b (>= 32).
    #[arg(long, default_value_t = 32)]
    v: u16,
}

#[derive(Args)]
struct MemreportArgs {
    /// Model preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Single matrix shape `rows,cols`.
    #[arg(long)]
    shape: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrafficArgs {
    /// Problem shape `m,k,n`.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 1.0)]
    selection: f64,
    #[command(flatten)]
    config: ConfigArgs,
    /// Scheme name or `all`.
    #[arg(long, default_value = "all")]
    scheme: String,
    #[arg(long)]
    tile: Option<String>,
    #[arg(long, default_value_t = 2)]
    pipe: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// Shape errors exit 2 (divisibility refusals); everything else exits 1.
fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<FmtError>() {
        Some(FmtError::Shape(_)) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Check(args) => cmd_check(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Memreport(args) => cmd_memreport(args),
        Command::Traffic(args) => cmd_traffic(args),
    }
}

fn print_report(r: &PruneReport) {
    println!(
        "prune: kept_subrows={} zeroed_elements={} achieved_sparsity={:.4}",
        r.kept_subrows, r.zeroed_elements, r.achieved_sparsity
    );
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let cfg = args.config.build()?;
    let dense = io::read_matrix(&args.input)?;
    let (conforming, report) = if args.assume_pruned {
        let total = dense.rows * dense.cols;
        let nnz = dense.count_nonzeros();
        let report = PruneReport {
            kept_subrows: dense.rows / cfg.m as usize * cfg.n as usize
                * (dense.cols / cfg.v as usize),
            zeroed_elements: 0,
            achieved_sparsity: if total == 0 { 0.0 } else { 1.0 - nnz as f64 / total as f64 },
        };
        (dense, report)
    } else {
        let (pruned, report) = prune_to_format(&dense, &cfg)?;
        (pruned, report)
    };
    let sw = encode_weight(&conforming, &cfg)?;
    let bytes = serialize(&sw);
    let out = args
        .output
        .unwrap_or_else(|| args.input.with_extension("smy"));
    fs::write(&out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    print_report(&report);
    println!(
        "wrote {} ({} bytes, {}x{} at {})",
        out.display(),
        bytes.len(),
        sw.rows,
        sw.cols,
        cfg
    );
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let bytes = fs::read(&args.weight).with_context(|| format!("reading {}", args.weight.display()))?;
    let sw = deserialize(&bytes)?;
    let dense = decode_weight(&sw)?;
    let format = match args.format.as_deref() {
        Some(f) => f.to_string(),
        None => match args.output.extension().and_then(|e| e.to_str()) {
            Some("csv") => "csv".into(),
            _ => "raw".into(),
        },
    };
    match format.as_str() {
        "csv" => io::write_matrix_csv(&args.output, &dense)?,
        "raw" => io::write_matrix_raw(&args.output, &dense)?,
        other => bail!("unknown output format '{other}' (csv|raw)"),
    }
    println!(
        "decoded {}x{} at {} -> {}",
        sw.rows,
        sw.cols,
        sw.config,
        args.output.display()
    );
    Ok(())
}

fn install_pool<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building thread pool")?
            .install(f),
        None => f(),
    }
}

fn cmd_check(args: CheckArgs) -> Result<()> {
    install_pool(args.threads, || match (&args.weight, args.random) {
        (Some(path), None) => check_file(path, args.seed),
        (None, Some(draws)) => check_random(draws, args.seed),
        _ => bail!("pass a weight file or --random N"),
    })
}

fn check_file(path: &Path, seed: u64) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sw = deserialize(&bytes).map_err(|e| anyhow!("stage deserialize: {e}"))?;
    println!("deserialize: ok ({}x{} at {})", sw.rows, sw.cols, sw.config);

    let violations = validate_weight(&sw);
    if let Some(v) = violations.first() {
        bail!("stage validate: {v}");
    }
    println!("validate: ok");

    let dense = decode_weight(&sw).map_err(|e| anyhow!("stage roundtrip: decode failed: {e}"))?;
    let re = encode_weight(&dense, &sw.config)
        .map_err(|e| anyhow!("stage roundtrip: re-encode failed: {e}"))?;
    if re != sw {
        bail!("stage roundtrip: encode(decode(w)) differs from the file");
    }
    println!("roundtrip: ok");

    if serialize(&sw) != bytes {
        bail!("stage serialize-roundtrip: re-serialized bytes differ");
    }
    println!("serialize-roundtrip: ok");

    check_spmm(&sw, seed)?;
    println!("all checks passed");
    Ok(())
}

/// Oracle equivalence on a random seeded input: tiled engine against the
/// reference path, and reference against an f64-accumulating GEMM.
fn check_spmm(sw: &SamoyedsWeight, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = 24usize;
    let token_rows = random_matrix(&mut rng, tokens, sw.cols);
    let sel: Vec<usize> = (0..tokens).step_by(2).collect();
    let x = SelectedInput::from_token_rows(&token_rows, &sel)?;

    let reference = spmm_reference(sw, &x)?;
    let dense = decode_weight(sw)?;
    let mut oracle = DenseMatrix::zeros(sw.rows, sel.len());
    for i in 0..sw.rows {
        for (j, _) in sel.iter().enumerate() {
            let col = x.column(j);
            let mut sum = 0.0f64;
            for k in 0..sw.cols {
                sum += dense.get(i, k) as f64 * col[k] as f64;
            }
            oracle.set(i, j, sum as f32);
        }
    }
    let err = reference.rel_frobenius_error(&oracle);
    if err > 1e-5 {
        bail!("stage spmm-oracle: reference vs f64 oracle rel error {err:.3e}");
    }

    if sw.config.v % 32 == 0 {
        let tc = tile_for(&sw.config)?;
        let tiled = spmm_tiled(sw, &x, &tc, &Epilogue::None)?;
        let err = tiled.rel_frobenius_error(&reference);
        if err > 1e-5 {
            bail!("stage spmm-oracle: tiled vs reference rel error {err:.3e}");
        }
        println!("spmm-oracle: ok (rel error {err:.3e})");
    } else {
        println!("spmm-oracle: ok (reference path; v={} has no legal k_b)", sw.config.v);
    }
    Ok(())
}

/// A tile config valid for this format (m tiles must cover whole blocks).
fn tile_for(cfg: &SparseFormatConfig) -> Result<TileConfig> {
    let m = cfg.m as usize;
    let m_w = 32usize.max(m.next_multiple_of(16));
    let m_b = 128usize.max(m_w);
    let tc = TileConfig::new(m_b, 64, 32, m_w, 32, 2)?;
    tc.validate_for(cfg)?;
    Ok(tc)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::from_vec(rows, cols, values).unwrap()
}

fn check_random(draws: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<SparseFormatConfig> = SparseFormatConfig::PRESETS
        .into_iter()
        .chain([
            SparseFormatConfig::new(2, 4, 8).unwrap(),
            SparseFormatConfig::new(2, 2, 4).unwrap(),
        ])
        .collect();
    for i in 0..draws {
        let cfg = configs[rng.random_range(0..configs.len())];
        let rows = cfg.m as usize * rng.random_range(1..=6);
        let cols = cfg.v as usize * rng.random_range(1..=6);
        let w = random_matrix(&mut rng, rows, cols);
        let (pruned, _) = prune_to_format(&w, &cfg)
            .map_err(|e| anyhow!("draw {i} ({cfg} {rows}x{cols}): prune failed: {e}"))?;
        let sw = encode_weight(&pruned, &cfg)
            .map_err(|e| anyhow!("draw {i} ({cfg} {rows}x{cols}): encode failed: {e}"))?;
        if let Some(v) = validate_weight(&sw).first() {
            bail!("draw {i} ({cfg} {rows}x{cols}): validate: {v}");
        }
        let back = decode_weight(&sw)?;
        if back != pruned {
            bail!("draw {i} ({cfg} {rows}x{cols}): decode(encode(w)) != w");
        }
        let re = deserialize(&serialize(&sw))?;
        if re != sw {
            bail!("draw {i} ({cfg} {rows}x{cols}): serialization roundtrip differs");
        }
        if cfg.v % 32 == 0 && i % 5 == 0 {
            check_spmm(&sw, seed.wrapping_add(i as u64))
                .map_err(|e| anyhow!("draw {i} ({cfg} {rows}x{cols}): {e}"))?;
        }
    }
    println!("{draws} random draws: all pass");
    Ok(())
}

struct BenchCase {
    id: String,
    m: usize,
    k: usize,
    n: usize,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = SparseFormatConfig::new(args.config.n, args.config.m, args.config.v)?;
    let tc = match &args.tile {
        Some(spec) => parse_tile(spec, args.pipe)?,
        None => TileConfig::new(128, 64, 32, 32, 32, args.pipe)?,
    };
    tc.validate_for(&cfg)?;

    let mut cases: Vec<BenchCase> = Vec::new();
    if let Some(name) = &args.preset {
        let p = presets::find(name)
            .ok_or_else(|| anyhow!("unknown preset '{name}' (have: {})", presets::names().join(", ")))?;
        cases.push(BenchCase {
            id: format!("preset:{}:gate", p.name),
            m: p.intermediate,
            k: p.hidden,
            n: args.tokens,
        });
        cases.push(BenchCase {
            id: format!("preset:{}:down", p.name),
            m: p.hidden,
            k: p.intermediate,
            n: args.tokens,
        });
    }
    if let Some(spec) = &args.sweep {
        let (lo, hi) = parse_range(spec)?;
        let mut s = lo;
        while s <= hi.min(args.max_dim) {
            cases.push(BenchCase { id: format!("sweep:{s}"), m: s, k: s, n: s });
            s *= 2;
        }
        if hi > args.max_dim {
            eprintln!(
                "note: sweep capped at --max-dim {} (requested {hi})",
                args.max_dim
            );
        }
    }
    if let Some(spec) = &args.case {
        let (m, k, n) = parse_triple(spec)?;
        cases.push(BenchCase { id: format!("case:{m}x{k}x{n}"), m, k, n });
    }
    if cases.is_empty() {
        bail!("pass --preset, --sweep, or --case");
    }

    // Working-set refusal: dense operands plus encodings, in f32.
    const BUDGET_BYTES: u64 = 2 << 30;
    for c in &cases {
        let floats = (c.m * c.k) as u64 * 2 + (c.k * c.n) as u64 + (c.m * c.n) as u64;
        if floats * 4 > BUDGET_BYTES {
            bail!(
                "case {} exceeds memory budget ({} MB > {} MB); reduce sizes",
                c.id,
                floats * 4 >> 20,
                BUDGET_BYTES >> 20
            );
        }
    }

    let threads = args.threads;
    let used_threads = threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let tile_desc = format!(
        "mb{}-nb{}-kb{}-mw{}-nw{}-p{}",
        tc.m_b, tc.n_b, tc.k_b, tc.m_w, tc.n_w, tc.num_pipe
    );
    let header = "case_id,m,k,n,config,tile,threads,median_ms,gflops,bytes_moved,speedup_vs_dense";
    let mut lines = vec![header.to_string()];

    install_pool(threads, || {
        for (ci, case) in cases.iter().enumerate() {
            let row = run_bench_case(case, &cfg, &tc, &args, args.seed.wrapping_add(ci as u64))?;
            let line = format!(
                "{},{},{},{},{}:{}:{},{},{},{:.3},{:.3},{},{:.3}",
                case.id,
                case.m,
                case.k,
                case.n,
                cfg.n,
                cfg.m,
                cfg.v,
                tile_desc,
                used_threads,
                row.median_ms,
                row.gflops,
                row.bytes_moved,
                row.speedup
            );
            lines.push(line);
        }
        Ok(())
    })?;

    let body = lines.join("\n");
    println!("{body}");
    if let Some(path) = &args.csv {
        fs::write(path, format!("{body}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

struct BenchRow {
    median_ms: f64,
    gflops: f64,
    bytes_moved: u64,
    speedup: f64,
}

fn run_bench_case(
    case: &BenchCase,
    cfg: &SparseFormatConfig,
    tc: &TileConfig,
    args: &BenchArgs,
    seed: u64,
) -> Result<BenchRow> {
    if case.m % cfg.m as usize != 0 || case.k % cfg.v as usize != 0 {
        bail!(
            "case {}: shape not divisible by (m={}, v={})",
            case.id,
            cfg.m,
            cfg.v
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = random_matrix(&mut rng, case.m, case.k);
    let (pruned, _) = prune_to_format(&raw, cfg)?;
    let weight = encode_weight(&pruned, cfg)?;

    let token_rows = random_matrix(&mut rng, case.n, case.k);
    let f = args.selection.clamp(0.0, 1.0);
    let step = if f <= 0.0 { case.n } else { (1.0 / f).round().max(1.0) as usize };
    let sel: Vec<usize> = (0..case.n).step_by(step.max(1)).collect();
    let x = SelectedInput::from_token_rows(&token_rows, &sel)?;
    let sel_fraction = sel.len() as f64 / case.n as f64;

    let median_ms = time_median(args.repeats, || {
        spmm_tiled(&weight, &x, tc, &Epilogue::None).map(|_| ())
    })?;

    let baseline_ms = match args.baseline.as_str() {
        // Same engine, every sub-row retained (n == m).
        "pattern" => {
            let dense_cfg = SparseFormatConfig::new(cfg.m, cfg.m, cfg.v)?;
            let (pat, _) = prune_to_format(&raw, &dense_cfg)?;
            let dense_weight = encode_weight(&pat, &dense_cfg)?;
            time_median(args.repeats, || {
                spmm_tiled(&dense_weight, &x, tc, &Epilogue::None).map(|_| ())
            })?
        }
        // Dense tiled GEMM: all sub-rows, no 4-group pruning.
        "dense" => time_median(args.repeats, || {
            dense_tiled(&raw, &x, tc, &Epilogue::None).map(|_| ())
        })?,
        other => bail!("unknown baseline '{other}' (pattern|dense)"),
    };

    let flops = 2.0
        * case.m as f64
        * case.k as f64
        * case.n as f64
        * cfg.subrow_density()
        * 0.5
        * sel_fraction;
    let traffic = simulate_memory_traffic(
        (case.m, case.k, case.n),
        cfg,
        sel_fraction,
        tc,
        TrafficScheme::Samoyeds,
    );
    Ok(BenchRow {
        median_ms,
        gflops: flops / (median_ms / 1e3) / 1e9,
        bytes_moved: traffic.total_bytes(),
        speedup: baseline_ms / median_ms,
    })
}

/// One warmup run, then the median of `repeats` wall times (milliseconds).
fn time_median(repeats: usize, mut f: impl FnMut() -> samoyeds::Result<()>) -> Result<f64> {
    f()?;
    let mut times: Vec<f64> = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn cmd_memreport(args: MemreportArgs) -> Result<()> {
    let cfg = args.config.build()?;
    let print_line = |label: &str, rows: usize, cols: usize| {
        let r = memory_footprint(rows, cols, &cfg);
        println!(
            "{label:<12} {rows:>6}x{cols:<6} dense={:>12} data={:>12} indices={:>10} metadata={:>10} total={:>12} ratio={:.4}",
            r.dense_bytes,
            r.data_bytes,
            r.indices_bytes,
            r.metadata_bytes,
            r.total_bytes(),
            r.ratio
        );
        r
    };
    match (&args.preset, &args.shape) {
        (Some(name), None) => {
            let p = presets::find(name)
                .ok_or_else(|| anyhow!("unknown preset '{name}' (have: {})", presets::names().join(", ")))?;
            println!(
                "{} ({} experts, hidden {}, intermediate {}) at {cfg}:",
                p.name, p.experts, p.hidden, p.intermediate
            );
            let gate = print_line("gate_proj", p.intermediate, p.hidden);
            let up = print_line("up_proj", p.intermediate, p.hidden);
            let down = print_line("down_proj", p.hidden, p.intermediate);
            let dense = gate.dense_bytes + up.dense_bytes + down.dense_bytes;
            let total = gate.total_bytes() + up.total_bytes() + down.total_bytes();
            println!(
                "per expert:  dense={dense} samoyeds={total} ratio={:.4}",
                total as f64 / dense as f64
            );
            println!(
                "model total ({} experts): dense={} samoyeds={} ratio={:.4}",
                p.experts,
                dense * p.experts as u64,
                total * p.experts as u64,
                total as f64 / dense as f64
            );
        }
        (None, Some(spec)) => {
            let (rows, cols) = parse_pair(spec)?;
            println!("matrix {rows}x{cols} at {cfg}:");
            print_line("matrix", rows, cols);
        }
        _ => bail!("pass --preset or --shape"),
    }
    Ok(())
}

fn cmd_traffic(args: TrafficArgs) -> Result<()> {
    let cfg = args.config.build()?;
    let (m, k, n) = parse_triple(&args.shape)?;
    let tc = match &args.tile {
        Some(spec) => parse_tile(spec, args.pipe)?,
        None => TileConfig::default(),
    };
    let schemes: Vec<TrafficScheme> = if args.scheme == "all" {
        TrafficScheme::ALL.to_vec()
    } else {
        vec![args.scheme.parse()?]
    };
    println!(
        "traffic for {m}x{k}x{n}, selection {:.4}, sub-row density {:.4}:",
        args.selection,
        cfg.subrow_density()
    );
    println!(
        "{:<16} {:>14} {:>14} {:>14} {:>13} {:>9}",
        "scheme", "bytes_a", "bytes_b", "total", "transactions", "coalesced"
    );
    for scheme in schemes {
        let r = simulate_memory_traffic((m, k, n), &cfg, args.selection, &tc, scheme);
        println!(
            "{:<16} {:>14} {:>14} {:>14} {:>13} {:>9.3}",
            scheme.name(),
            r.bytes_loaded_a,
            r.bytes_loaded_b,
            r.total_bytes(),
            r.transactions,
            r.coalesced_fraction
        );
    }
    Ok(())
}

fn parse_tile(spec: &str, pipe: usize) -> Result<TileConfig> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse::<usize>().context("tile sizes must be integers"))
        .collect::<Result<_>>()?;
    if parts.len() != 5 {
        bail!("--tile needs 5 values: m_b,n_b,k_b,m_w,n_w");
    }
    Ok(TileConfig::new(parts[0], parts[1], parts[2], parts[3], parts[4], pipe)?)
}

fn parse_triple(spec: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse::<usize>().context("dimensions must be integers"))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        bail!("expected three comma-separated dimensions");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_pair(spec: &str) -> Result<(usize, usize)> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse::<usize>().context("dimensions must be integers"))
        .collect::<Result<_>>()?;
    if parts.len() != 2 {
        bail!("expected two comma-separated dimensions");
    }
    Ok((parts[0], parts[1]))
}

fn parse_range(spec: &str) -> Result<(usize, usize)> {
    let (lo, hi) = spec
        .split_once("..")
        .ok_or_else(|| anyhow!("sweep range must look like 256..2048"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

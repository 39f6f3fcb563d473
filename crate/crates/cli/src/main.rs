//! `eulercs`: construct, verify and benchmark Euler-square sensing matrices.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use eulercs_core::construct::{
    build_binary_matrix, build_extended, build_for_row_size, build_ternary, MatrixProvenance, SensingMatrix,
};
use eulercs_core::euler::{euler_square, validate_euler_square};
use eulercs_core::experiments::{
    run_patch_reconstruction, run_phase_transition, run_sweep, Family, MatrixSource, PhaseConfig, ReconConfig,
    ReportBody, SweepConfig,
};
use eulercs_core::imaging::{extract_features, max_levels, retrieve, score_retrieval, FeatureDb, Image, LabelledImage};
use eulercs_core::props::coherence;
use eulercs_core::recovery::{snr, solve, Solver};
use eulercs_core::Error;

use manifest::{with_suffix, RunManifest};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "eulercs", version, about = "Deterministic compressed-sensing matrices from Euler squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sensing matrix and write it to a file.
    Gen(GenArgs),
    /// Check a matrix file and print its coherence report.
    Verify(VerifyArgs),
    /// Run an experiment harness.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Recover a sparse vector from measurements.
    Recover(RecoverArgs),
    /// Compressed-domain image retrieval.
    #[command(subcommand)]
    Cbir(CbirCommand),
}

fn parse_list<T: std::str::FromStr>(s: &str, len: usize) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = s
        .split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != len {
        return Err(format!("expected {len} comma-separated values"));
    }
    Ok(v)
}

fn pair(s: &str) -> Result<(usize, usize), String> {
    parse_list::<usize>(s, 2).map(|v| (v[0], v[1]))
}

fn triple(s: &str) -> Result<(u64, u32, u32), String> {
    let v = parse_list::<u64>(s, 3)?;
    Ok((v[0], v[1] as u32, v[2] as u32))
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Selector {
    /// Euler index n,k.
    #[arg(long, value_parser = pair, value_name = "N,K")]
    index: Option<(usize, usize)>,
    /// Exact row count m.
    #[arg(long, value_name = "M")]
    rows: Option<usize>,
    /// Column-extended matrix of order n.
    #[arg(long, value_name = "N")]
    extend: Option<usize>,
    /// Ternary expansion p,i,j.
    #[arg(long, value_parser = triple, value_name = "P,I,J")]
    ternary: Option<(u64, u32, u32)>,
}

impl Selector {
    fn build(&self) -> eulercs_core::Result<SensingMatrix> {
        if let Some((n, k)) = self.index {
            build_binary_matrix(&euler_square(n, k)?)
        } else if let Some(m) = self.rows {
            build_for_row_size(m)
        } else if let Some(n) = self.extend {
            Ok(build_extended(n)?.0)
        } else if let Some((p, i, j)) = self.ternary {
            build_ternary(p, i, j)
        } else {
            unreachable!("clap enforces one selector")
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Esm,
    Csv,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    selector: Selector,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "esm")]
    format: MatrixFormat,
}

#[derive(Args)]
struct VerifyArgs {
    /// Matrix file in ESM format.
    file: PathBuf,
    /// Also write the report here (stdout always gets it).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Success rate against sparsity.
    Sweep(SweepArgs),
    /// Largest recoverable sparsity per row count.
    Phase(PhaseArgs),
    /// Patch-wise image reconstruction.
    Recon(ReconArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SweepSource {
    #[arg(long, value_parser = pair, value_name = "N,K")]
    index: Option<(usize, usize)>,
    #[arg(long, value_name = "M")]
    rows: Option<usize>,
    /// Gaussian matrix m,M drawn from --seed.
    #[arg(long, value_parser = pair, value_name = "M,COLS")]
    gaussian: Option<(usize, usize)>,
    /// Bernoulli matrix m,M drawn from --seed.
    #[arg(long, value_parser = pair, value_name = "M,COLS")]
    bernoulli: Option<(usize, usize)>,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Success threshold in dB.
    #[arg(long, default_value_t = 100.0)]
    threshold: f64,
    #[arg(long, default_value = "omp")]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SweepSource,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long)]
    kmax: usize,
    #[arg(long, default_value_t = 1)]
    kstep: usize,
    #[command(flatten)]
    trials: TrialArgs,
    /// Output prefix: writes PREFIX.json and PREFIX.csv.
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct PhaseArgs {
    /// Column count M.
    #[arg(long = "M", value_name = "M")]
    cols: usize,
    #[arg(long, value_delimiter = ',', required = true, value_name = "M1,M2,...")]
    rows: Vec<usize>,
    #[arg(long, default_value = "euler")]
    family: Family,
    /// Required success fraction.
    #[arg(long, default_value_t = 0.9)]
    fraction: f64,
    #[command(flatten)]
    trials: TrialArgs,
    #[arg(long, default_value = "phase")]
    out: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    /// 8-bit PGM image.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 32)]
    patch: usize,
    /// Haar depth; defaults to full depth.
    #[arg(long)]
    levels: Option<u32>,
    /// Comma-separated matrix families to compare.
    #[arg(long, value_delimiter = ',', default_value = "euler")]
    family: Vec<Family>,
    #[arg(long, default_value = "omp")]
    solver: Solver,
    /// OMP atom budget per patch.
    #[arg(long)]
    atoms: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "recon")]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    /// Matrix file in ESM format.
    #[arg(long)]
    matrix: PathBuf,
    /// Measurement vector, whitespace or comma separated.
    #[arg(long)]
    measurements: PathBuf,
    /// Sparsity (OMP atom budget).
    #[arg(long)]
    sparsity: usize,
    #[arg(long, default_value = "omp")]
    solver: Solver,
    /// Reference signal for an SNR score.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Estimate output, one value per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CbirCommand {
    /// Build a feature database from a TSV list of id, class, path.
    Index(IndexArgs),
    /// Rank database images against one query image.
    Query(QueryArgs),
    /// Score retrieval for a TSV list of labelled query images.
    Score(ScoreArgs),
}

#[derive(Args)]
struct MatrixChoice {
    /// Euler index n,k of the compression matrix (n must equal the patch size).
    #[arg(long, value_parser = pair, value_name = "N,K")]
    index: Option<(usize, usize)>,
    /// Compression matrix in ESM format.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    list: PathBuf,
    #[command(flatten)]
    matrix: MatrixChoice,
    #[arg(long, default_value_t = 32)]
    patch: usize,
    #[arg(long)]
    levels: Option<u32>,
    /// Output prefix: writes PREFIX.tsv and PREFIX.bin.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Needed only when the database matrix cannot be rebuilt from its descriptor.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidPrime(_)
            | Error::FieldTooLarge { .. }
            | Error::DegreeTooLarge { .. }
            | Error::InvalidOrder(_)
            | Error::IndexNotConstructible { .. }
            | Error::IndexTooSmall { .. }
            | Error::UnsupportedRowSize { .. }
            | Error::NothingToExtend(_)
            | Error::HadamardUnavailable(_) => EXIT_INFEASIBLE,
            Error::InvalidInput(_)
            | Error::ShapeError(_)
            | Error::InvalidSparsity { .. }
            | Error::PatchSizeError(_)
            | Error::PatchGridError { .. } => EXIT_USAGE,
            _ => EXIT_VERIFY,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::from(Error::from(e))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, msg: msg.into() }
}

type CliResult = Result<(), Failure>;

fn read_to_string(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", path.display()))))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", path.display()))))
}

fn finish(m: RunManifest, primary: &Path) -> CliResult {
    let path = m.finish(primary)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn read_matrix(path: &Path) -> Result<SensingMatrix, Failure> {
    SensingMatrix::from_esm(&read_to_string(path)?).map_err(|e| Failure {
        code: EXIT_VERIFY,
        msg: format!("{}: {e}", path.display()),
    })
}

fn cmd_gen(args: GenArgs) -> CliResult {
    let mut manifest = RunManifest::start("gen", None);
    let matrix = args.selector.build()?;
    let text = match args.format {
        MatrixFormat::Esm => matrix.to_esm(),
        MatrixFormat::Csv => matrix.to_csv(),
    };
    write(&args.out, text)?;
    manifest.output(&args.out);
    eprintln!("{}x{} {} matrix ({}) -> {}", matrix.rows(), matrix.cols(), matrix.alphabet(), matrix.provenance(), args.out.display());
    finish(manifest, &args.out)
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let mut manifest = RunManifest::start("verify", None);
    manifest.input(&args.file);
    let matrix = read_matrix(&args.file)?;
    let report = coherence(&matrix)?;
    let mut problems = matrix.invariant_violations();

    let provenance = matrix.provenance().clone();
    let mut text = report.to_key_value();
    text.push_str(&format!("provenance={provenance}\n"));
    if provenance != MatrixProvenance::Unknown {
        match provenance.rebuild() {
            Ok(expected) if expected.to_esm() == matrix.to_esm() => text.push_str("rebuild=match\n"),
            Ok(_) => problems.push(format!("matrix differs from the construction it names ({provenance})")),
            Err(e) => problems.push(format!("provenance {provenance} cannot be rebuilt: {e}")),
        }
        if let MatrixProvenance::Euler { n, k } = provenance {
            let square = euler_square(n, k)?;
            let v = validate_euler_square(&square);
            text.push_str(&format!("square_valid={}\n", v.is_valid()));
            if !v.is_valid() {
                problems.push(format!("Euler square ({n},{k}) fails validation: {:?}", v.violation));
            }
        }
    }
    if let (Some(k), Some(o)) = (matrix.column_weight(), report.max_overlap) {
        if provenance.euler_index().is_some() && o as usize > 1 && matches!(matrix.alphabet(), eulercs_core::Alphabet::Binary) {
            problems.push(format!("column overlap {o} exceeds 1 for weight {k}"));
        }
    }
    text.push_str(&format!("status={}\n", if problems.is_empty() { "ok" } else { "fail" }));
    print!("{text}");
    if let Some(path) = &args.report {
        write(path, &text)?;
        manifest.output(path);
        finish(manifest, path)?;
    }
    if problems.is_empty() {
        eprintln!("{}: ok (μ = {}, {} column pairs checked)", args.file.display(), report.coherence, report.cols * (report.cols - 1) / 2);
        Ok(())
    } else {
        Err(Failure { code: EXIT_VERIFY, msg: problems.join("\n") })
    }
}

fn write_report(prefix: &Path, json: &str, csv: &str, mut manifest: RunManifest) -> CliResult {
    let (jp, cp) = (with_suffix(prefix, ".json"), with_suffix(prefix, ".csv"));
    write(&jp, json)?;
    write(&cp, csv)?;
    manifest.output(&jp);
    manifest.output(&cp);
    eprintln!("report: {} {}", jp.display(), cp.display());
    finish(manifest, prefix)
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let t = &args.trials;
    let manifest = RunManifest::start("bench sweep", Some(t.seed));
    let s = &args.source;
    let source = if let Some((n, k)) = s.index {
        MatrixSource::Euler { n, k }
    } else if let Some(m) = s.rows {
        MatrixSource::RowSize { m }
    } else if let Some((rows, cols)) = s.gaussian {
        MatrixSource::Gaussian { rows, cols, seed: t.seed }
    } else if let Some((rows, cols)) = s.bernoulli {
        MatrixSource::Bernoulli { rows, cols, seed: t.seed }
    } else {
        unreachable!("clap enforces one source")
    };
    if args.kstep == 0 || args.kmin == 0 || args.kmin > args.kmax {
        return Err(usage("sparsity range needs 1 <= kmin <= kmax and kstep >= 1"));
    }
    let cfg = SweepConfig {
        source,
        sparsities: (args.kmin..=args.kmax).step_by(args.kstep).collect(),
        trials: t.trials,
        threshold_db: t.threshold,
        solver: t.solver,
        seed: t.seed,
    };
    let report = run_sweep(&cfg)?;
    if let ReportBody::Sweep { levels } = &report.body {
        for l in levels {
            eprintln!("k'={:>4}  {:>6.2}%  ({}/{})", l.sparsity, l.percent, l.successes, l.trials);
        }
    }
    write_report(&args.out, &report.to_json(), &report.to_csv(), manifest)
}

fn cmd_phase(args: PhaseArgs) -> CliResult {
    let t = &args.trials;
    let manifest = RunManifest::start("bench phase", Some(t.seed));
    if args.rows.is_empty() {
        return Err(usage("--rows needs at least one row size"));
    }
    let cfg = PhaseConfig {
        cols: args.cols,
        rows: args.rows.clone(),
        family: args.family,
        success_fraction: args.fraction,
        trials: t.trials,
        threshold_db: t.threshold,
        solver: t.solver,
        seed: t.seed,
    };
    let report = run_phase_transition(&cfg)?;
    if let ReportBody::PhaseTransition { points } = &report.body {
        for p in points {
            eprintln!("m={:>4}  m/M={:.4}  k={:>4}  k/M={:.4}", p.rows, p.delta, p.largest_k, p.rho);
        }
    }
    write_report(&args.out, &report.to_json(), &report.to_csv(), manifest)
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Euler => "euler",
        Family::Gaussian => "gaussian",
        Family::Bernoulli => "bernoulli",
    }
}

fn cmd_recon(args: ReconArgs) -> CliResult {
    let mut manifest = RunManifest::start("bench recon", Some(args.seed));
    manifest.input(&args.image);
    let image = Image::read_pgm(&args.image)?;
    let levels = match args.levels {
        Some(l) => l,
        None => max_levels(args.patch)?,
    };
    let cols = args.patch * args.patch;
    let mut csv = String::from("family,rows,cols,downsampling_factor,snr_db\n");
    for &family in &args.family {
        let source = match family {
            Family::Euler => {
                if args.rows % args.patch != 0 {
                    return Err(Failure {
                        code: EXIT_INFEASIBLE,
                        msg: format!(
                            "an Euler matrix with {cols} columns has index ({0}, k) and {0}k rows; {1} is not a multiple of {0}",
                            args.patch, args.rows
                        ),
                    });
                }
                MatrixSource::Euler { n: args.patch, k: args.rows / args.patch }
            }
            Family::Gaussian => MatrixSource::Gaussian { rows: args.rows, cols, seed: args.seed },
            Family::Bernoulli => MatrixSource::Bernoulli { rows: args.rows, cols, seed: args.seed },
        };
        let cfg = ReconConfig { source, patch: args.patch, levels, solver: args.solver, max_atoms: args.atoms };
        let (out, report) = run_patch_reconstruction(&image, &cfg)?;
        let ReportBody::PatchReconstruction { result } = &report.body else { unreachable!() };
        let name = family_name(family);
        eprintln!("{name}: {}x{} factor {:.3} SNR {:.2} dB", result.rows, result.cols, result.downsampling_factor, result.snr_db);
        csv.push_str(&format!("{name},{},{},{},{}\n", result.rows, result.cols, result.downsampling_factor, result.snr_db));
        let (pgm, json) = (with_suffix(&args.out, &format!(".{name}.pgm")), with_suffix(&args.out, &format!(".{name}.json")));
        out.write_pgm(&pgm)?;
        write(&json, report.to_json())?;
        manifest.output(&pgm);
        manifest.output(&json);
    }
    let cp = with_suffix(&args.out, ".csv");
    write(&cp, csv)?;
    manifest.output(&cp);
    finish(manifest, &args.out)
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Failure> {
    read_to_string(path)?
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Failure::from(Error::ParseError { line: 0, msg: format!("{}: {t:?}: {e}", path.display()) })))
        .collect()
}

#[derive(Serialize)]
struct RecoverSummary {
    /// 1-based.
    support: Vec<usize>,
    residual_norm: f64,
    iterations: usize,
    rank_deficient: bool,
    snr_db: Option<f64>,
}

fn cmd_recover(args: RecoverArgs) -> CliResult {
    let mut manifest = RunManifest::start("recover", None);
    manifest.input(&args.matrix);
    manifest.input(&args.measurements);
    let matrix = read_matrix(&args.matrix)?;
    let y = read_vector(&args.measurements)?;
    let phi = matrix.to_dense();
    let res = solve(args.solver, &phi, &y, args.sparsity)?;
    let snr_db = match &args.reference {
        Some(p) => {
            manifest.input(p);
            Some(snr(&read_vector(p)?, &res.estimate)?)
        }
        None => None,
    };
    let lines: String = res.estimate.iter().map(|v| format!("{v:e}\n")).collect();
    write(&args.out, lines)?;
    manifest.output(&args.out);
    let mut support: Vec<usize> = res.support.iter().map(|i| i + 1).collect();
    support.sort_unstable();
    let summary = RecoverSummary {
        support,
        residual_norm: res.residual_norm,
        iterations: res.iterations,
        rank_deficient: res.rank_deficient,
        snr_db,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    finish(manifest, &args.out)
}

/// Descriptor stored in the database: the construction, or a content hash
/// for matrices of unknown origin.
fn descriptor(matrix: &SensingMatrix) -> String {
    match matrix.provenance() {
        MatrixProvenance::Unknown => {
            let digest = eulercs_core::imaging::matrix_hash(&matrix.to_esm());
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            format!("sha256:{hex}")
        }
        p => p.to_string(),
    }
}

fn db_matrix(db: &FeatureDb, file: Option<&Path>) -> Result<SensingMatrix, Failure> {
    if let Some(path) = file {
        let m = read_matrix(path)?;
        if descriptor(&m) != db.matrix {
            return Err(Failure { code: EXIT_VERIFY, msg: format!("{} is not the matrix the database was built with", path.display()) });
        }
        return Ok(m);
    }
    let prov: MatrixProvenance = db
        .matrix
        .parse()
        .map_err(|_| usage(format!("database matrix {:?} cannot be rebuilt; pass --matrix", db.matrix)))?;
    Ok(prov.rebuild()?)
}

/// Lines of `id<TAB>class<TAB>path`; relative paths resolve against the list's directory.
fn read_list(path: &Path) -> Result<Vec<(String, String, PathBuf)>, Failure> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Failure::from(Error::ParseError { line: i + 1, msg: format!("{}: expected id, class, path", path.display()) }));
        }
        out.push((parts[0].to_string(), parts[1].to_string(), base.join(parts[2])));
    }
    Ok(out)
}

fn cmd_index(args: IndexArgs) -> CliResult {
    let mut manifest = RunManifest::start("cbir index", None);
    manifest.input(&args.list);
    let matrix = match (&args.matrix.index, &args.matrix.matrix) {
        (Some((n, k)), None) => build_binary_matrix(&euler_square(*n, *k)?)?,
        (None, Some(p)) => {
            manifest.input(p);
            read_matrix(p)?
        }
        _ => return Err(usage("pass exactly one of --index or --matrix")),
    };
    let levels = match args.levels {
        Some(l) => l,
        None => max_levels(args.patch)?,
    };
    let images = read_list(&args.list)?
        .into_iter()
        .map(|(id, label, path)| {
            let image = Image::read_pgm(&path)?;
            Ok(LabelledImage { id, label, path: path.display().to_string(), image })
        })
        .collect::<eulercs_core::Result<Vec<_>>>()?;
    let db = FeatureDb::build(&matrix, &descriptor(&matrix), args.patch, levels, &images)?;
    db.save(&args.out)?;
    manifest.output(&with_suffix(&args.out, ".tsv"));
    manifest.output(&with_suffix(&args.out, ".bin"));
    eprintln!("indexed {} images, feature length {}", db.entries.len(), db.feature_len());
    finish(manifest, &args.out)
}

fn cmd_query(args: QueryArgs) -> CliResult {
    let mut manifest = RunManifest::start("cbir query", None);
    manifest.input(&args.db);
    manifest.input(&args.image);
    let db = FeatureDb::load(&args.db)?;
    let matrix = db_matrix(&db, args.matrix.as_deref())?;
    let q = extract_features(&Image::read_pgm(&args.image)?, &matrix, db.patch, db.levels)?;
    let hits = retrieve(&q, &db, args.top)?;
    let mut text = String::from("rank\tid\tclass\tsimilarity\tdegenerate\n");
    for (i, h) in hits.iter().enumerate() {
        text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", i + 1, h.id, h.label, h.similarity, h.degenerate));
    }
    print!("{text}");
    if let Some(out) = &args.out {
        write(out, &text)?;
        manifest.output(out);
        finish(manifest, out)?;
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> CliResult {
    let mut manifest = RunManifest::start("cbir score", None);
    manifest.input(&args.db);
    manifest.input(&args.queries);
    let db = FeatureDb::load(&args.db)?;
    let matrix = db_matrix(&db, args.matrix.as_deref())?;
    let mut runs = Vec::new();
    for (_, label, path) in read_list(&args.queries)? {
        let q = extract_features(&Image::read_pgm(&path)?, &matrix, db.patch, db.levels)?;
        let ids = retrieve(&q, &db, args.top)?.into_iter().map(|h| h.id).collect();
        runs.push((label, ids));
    }
    let metrics = score_retrieval(&runs, &db.labels(), args.top)?;
    for (class, s) in &metrics.per_class {
        eprintln!("{class}: precision {:.3} recall {:.3} over {} queries", s.precision, s.recall, s.queries);
    }
    let mut json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    json.push('\n');
    write(&args.out, json)?;
    manifest.output(&args.out);
    finish(manifest, &args.out)
}

fn configure_threads() -> CliResult {
    if let Ok(v) = std::env::var("ES_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("ES_THREADS={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(BenchCommand::Sweep(a)) => cmd_sweep(a),
        Command::Bench(BenchCommand::Phase(a)) => cmd_phase(a),
        Command::Bench(BenchCommand::Recon(a)) => cmd_recon(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Cbir(CbirCommand::Index(a)) => cmd_index(a),
        Command::Cbir(CbirCommand::Query(a)) => cmd_query(a),
        Command::Cbir(CbirCommand::Score(a)) => cmd_score(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

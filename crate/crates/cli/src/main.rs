use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tkpsvd::io::{
    load_decomposition, load_image, read_sigmas_text, read_tensor, save_decomposition, save_image, write_sparse_pattern,
    write_tensor,
};
use tkpsvd::metrics::{compression_rate, psnr};
use tkpsvd::structure::{
    analyze_preservation, compose_factored, factor_maps, generate, map_for_kind, StructureKind,
};
use tkpsvd::tkpsvd::{block_average, coarse_dims, relative_error, tkpsvd};
use tkpsvd::{Backend, Error, FactorGrid};

const GRID_HELP: &str = "Factor grid 'n1xn2x..,m1xm2x..,..'. Factors are listed i = 1..d from left to right, \
while the product is formed in reverse: A = A(d) ⊗ ... ⊗ A(2) ⊗ A(1). The first group is \
therefore the rightmost (finest) factor and the last group the leftmost (coarsest) one.";

#[derive(Parser)]
#[command(name = "tkp", version, about = "Tensor Kronecker product SVD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor file (.tenb binary or .ten text) into a .tkp file.
    Decompose {
        input: PathBuf,
        #[arg(long, help = GRID_HELP)]
        grid: String,
        #[command(flatten)]
        solver: Solver,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Rebuild a tensor from the leading terms of a .tkp file.
    Reconstruct {
        input: PathBuf,
        /// Number of leading terms (default: all).
        #[arg(long)]
        terms: Option<usize>,
        /// Keep only this many leftmost factors, giving a coarser tensor.
        #[arg(long)]
        levels: Option<usize>,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Check every factor of a .tkp file against a structure.
    Analyze {
        input: PathBuf,
        /// symmetric, persymmetric, centrosymmetric, toeplitz or hankel.
        #[arg(long)]
        kind: String,
        /// Residual tolerance for a factor to count as structured.
        #[arg(long, default_value = "1e-10")]
        tol: f64,
    },
    /// Write a seeded random structured tensor.
    Generate {
        #[arg(long)]
        kind: String,
        /// Tensor dimensions, e.g. 12x12x12.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Multiresolution compression of a PGM/PPM image.
    ImageDemo {
        input: PathBuf,
        /// Number of 2x2x1 refinement factors below the base factor. Ignored
        /// when --grid is given.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, help = GRID_HELP)]
        grid: Option<String>,
        /// Comma-separated term counts.
        #[arg(long, default_value = "1,5,20")]
        terms: String,
        #[command(flatten)]
        solver: Solver,
        #[arg(short = 'o', long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// Relative error against the number of kept terms, from a weight list
    /// (text, one value per line) or a .tkp file.
    ErrorCurve { input: PathBuf },
    /// Write the sparse pattern (1-based 'row col' lines) of a structure map.
    ExportPerm {
        #[arg(long)]
        kind: String,
        /// Tensor dimensions, e.g. 3x3x3.
        #[arg(long, conflicts_with = "grid")]
        dims: Option<String>,
        /// Build the map from per-factor maps of this grid instead.
        #[arg(long, help = GRID_HELP)]
        grid: Option<String>,
        /// Output file (default: stdout).
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Solver {
    /// Polyadic backend: ttr1 or hosvd.
    #[arg(long, default_value = "ttr1")]
    backend: String,
    /// Relative truncation tolerance of the backend.
    #[arg(long, default_value = "1e-12")]
    tol: f64,
}

impl Solver {
    fn backend(&self) -> Result<Backend, Failure> {
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Failure::Usage(format!("--tol must be a finite non-negative number, got {}", self.tol)));
        }
        self.backend.parse().map_err(Failure::from)
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteInput | Error::SizeOverflow(_) => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>, Failure> {
    s.split('x')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("bad dimension '{p}' in '{s}'")))
        })
        .collect()
}

fn parse_terms(s: &str) -> Result<Vec<usize>, Failure> {
    let terms = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&r| r > 0)
                .ok_or_else(|| Failure::Usage(format!("bad term count '{p}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(terms)
}

fn parse_grid(s: &str) -> Result<FactorGrid, Failure> {
    FactorGrid::parse(s).map_err(Failure::from)
}

fn parse_kind(s: &str) -> Result<StructureKind, Failure> {
    StructureKind::parse(s).map_err(Failure::from)
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn decompose(input: &Path, grid: &str, solver: &Solver, out: &Path) -> Result<(), Failure> {
    let grid = parse_grid(grid)?;
    let backend = solver.backend()?;
    let a = read_tensor(input)?;
    let res = tkpsvd(&a, &grid, backend, solver.tol)?;
    let full = res.reconstruct(res.term_count())?;
    let norm = a.frobenius_norm();
    let residual = if norm > 0.0 { a.sub(&full)?.frobenius_norm() / norm } else { 0.0 };
    let predicted = res.relative_error(res.term_count())?;
    if !residual.is_finite() || (residual - predicted).abs() > 1e-8 {
        return Err(Failure::Numerical(format!(
            "reconstruction residual {residual:e} disagrees with the weight tail {predicted:e}"
        )));
    }
    save_decomposition(&res, out)?;
    let head: Vec<String> = res.sigmas.iter().take(5).map(|&s| sci(s)).collect();
    println!("grid      {}", res.grid);
    println!("backend   {backend}");
    println!("terms     {}", res.term_count());
    println!("norm      {}", sci(norm));
    println!("sigma     {}", head.join(" "));
    println!("residual  {residual:.3e}");
    Ok(())
}

fn reconstruct(input: &Path, terms: Option<usize>, levels: Option<usize>, out: &Path) -> Result<(), Failure> {
    let res = load_decomposition(input)?;
    let r = terms.unwrap_or(res.term_count());
    let t = match levels {
        Some(l) => res.reconstruct_coarse(l, r)?,
        None => res.reconstruct(r)?,
    };
    write_tensor(&t, out)?;
    println!("wrote {} ({} of {} terms)", t.shape(), r, res.term_count());
    Ok(())
}

fn analyze(input: &Path, kind: &str, tol: f64) -> Result<(), Failure> {
    let kind = parse_kind(kind)?;
    let res = load_decomposition(input)?;
    let maps = factor_maps(&kind, &res.grid)?;
    let summary = analyze_preservation(&res, &maps, tol)?;
    let d = res.grid.degree();
    let header: Vec<String> = (1..=d).map(|i| format!("f{i}")).collect();
    println!("{kind} check of {} terms, grid {}", summary.len(), res.grid);
    println!("{:>5}  {:>13}  {}  skew  multiplet", "term", "sigma", header.join(" "));
    let mut odd = 0;
    let mut unstructured = 0;
    for (j, s) in summary.iter().enumerate() {
        let signs: Vec<String> = s
            .reports
            .iter()
            .map(|r| {
                let mark = match (r.holds(tol), r.sign > 0) {
                    (false, _) => "?",
                    (true, true) => "+",
                    (true, false) => "-",
                };
                format!("{mark:>2}")
            })
            .collect();
        if s.all_structured {
            odd += usize::from(s.skew_count % 2 == 1);
        } else {
            unstructured += 1;
        }
        println!(
            "{:>5}  {:>13}  {}  {:>4}  {}",
            j + 1,
            sci(s.sigma),
            signs.join(" "),
            s.skew_count,
            if s.in_multiplet { "yes" } else { "" }
        );
    }
    let exempt = summary.iter().filter(|s| s.in_multiplet).count();
    let inconsistent = summary.iter().filter(|s| !s.consistent()).count();
    println!("multiplet terms      {exempt}");
    println!("unstructured terms   {unstructured}");
    println!("odd skew count       {odd}");
    println!(
        "even-skew verdict    {}",
        if inconsistent == 0 { "holds".to_string() } else { format!("violated by {inconsistent} terms outside multiplets") }
    );
    Ok(())
}

fn generate_cmd(kind: &str, dims: &str, seed: u64, out: &Path) -> Result<(), Failure> {
    let kind = parse_kind(kind)?;
    let dims = parse_dims(dims)?;
    let t = generate(&kind, &dims, seed)?;
    write_tensor(&t, out)?;
    println!("wrote {kind} tensor {} (seed {seed})", t.shape());
    Ok(())
}

const MODE_NAMES: [&str; 3] = ["height", "width", "channels"];

/// The default grid: `levels` factors of 2x2x1 under one base factor.
fn image_grid(dims: &[usize], levels: usize) -> Result<FactorGrid, Failure> {
    let scale = 1usize
        .checked_shl(levels as u32)
        .filter(|&s| s > 0 && levels < usize::BITS as usize)
        .ok_or_else(|| Failure::Usage(format!("--levels {levels} is too large")))?;
    for (r, &n) in dims.iter().take(2).enumerate() {
        if n % scale != 0 {
            return Err(Failure::Usage(format!(
                "image {} {n} is not divisible by {scale} = 2^{levels} as required by --levels {levels}",
                MODE_NAMES[r]
            )));
        }
    }
    let mut rows = vec![vec![2, 2, 1]; levels];
    rows.push(vec![dims[0] / scale, dims[1] / scale, dims[2]]);
    Ok(FactorGrid::new(rows)?)
}

fn check_image_grid(dims: &[usize], grid: &FactorGrid) -> Result<(), Failure> {
    if grid.order() != 3 {
        return Err(Failure::Usage(format!(
            "image grids need 3 dimensions per factor (height x width x channels), got {}",
            grid.order()
        )));
    }
    let target = grid.target_dims();
    for r in 0..3 {
        if target[r] != dims[r] {
            let parts: Vec<String> = grid.rows().iter().map(|row| row[r].to_string()).collect();
            return Err(Failure::Usage(format!(
                "image {} {} does not factor per the grid: {} = {}",
                MODE_NAMES[r],
                dims[r],
                parts.join("*"),
                target[r]
            )));
        }
    }
    Ok(())
}

fn image_demo(
    input: &Path,
    levels: usize,
    grid: Option<&str>,
    terms: &str,
    solver: &Solver,
    prefix: &Path,
) -> Result<(), Failure> {
    let img = load_image(input)?;
    let terms = parse_terms(terms)?;
    let backend = solver.backend()?;
    let grid = match grid {
        Some(g) => {
            let grid = parse_grid(g)?;
            check_image_grid(img.dims(), &grid)?;
            grid
        }
        None => image_grid(img.dims(), levels)?,
    };
    let res = tkpsvd(&img, &grid, backend, solver.tol)?;
    if res.term_count() == 0 {
        return Err(Failure::Usage("image is entirely zero".into()));
    }
    let mut terms: Vec<usize> = terms.into_iter().map(|r| r.min(res.term_count())).collect();
    terms.dedup();
    let ext = if img.dims()[2] == 1 { "pgm" } else { "ppm" };
    println!("grid {} , {} terms", grid, res.term_count());
    println!("{:>6}  {:>14}  {:>5}  {:>10}  {:>12}", "kept", "size", "terms", "psnr_db", "compression");
    for kept in 1..=grid.degree() {
        let reference = block_average(&img, &grid, kept)?;
        let size: Vec<String> = coarse_dims(&grid, kept).iter().map(|n| n.to_string()).collect();
        for &r in &terms {
            let approx = res.reconstruct_coarse(kept, r)?;
            let db = psnr(&reference, &approx)?;
            let rate = compression_rate(&grid, kept, r)?;
            let name = format!("{}_k{kept}_r{r}.{ext}", prefix.display());
            save_image(&approx, Path::new(&name))?;
            let db = if db.is_finite() { format!("{db:.4}") } else { "inf".to_string() };
            println!("{kept:>6}  {:>14}  {r:>5}  {db:>10}  {rate:>12.4}", size.join("x"));
        }
    }
    Ok(())
}

fn error_curve(input: &Path) -> Result<(), Failure> {
    let sigmas = if input.extension().is_some_and(|e| e == "tkp") {
        load_decomposition(input)?.sigmas
    } else {
        read_sigmas_text(fs::File::open(input)?)?
    };
    if sigmas.iter().any(|s| !s.is_finite()) {
        return Err(Failure::Numerical("weight list contains non-finite values".into()));
    }
    let out = io::stdout();
    let mut out = BufWriter::new(out.lock());
    writeln!(out, "# r relative_error")?;
    for r in 0..=sigmas.len() {
        writeln!(out, "{r} {:.6e}", relative_error(&sigmas, r)?)?;
    }
    out.flush()?;
    Ok(())
}

fn export_perm(kind: &str, dims: Option<&str>, grid: Option<&str>, out: Option<&Path>) -> Result<(), Failure> {
    let kind = parse_kind(kind)?;
    let map = match (dims, grid) {
        (Some(d), None) => map_for_kind(&kind, &parse_dims(d)?)?,
        (None, Some(g)) => {
            let grid = parse_grid(g)?;
            compose_factored(&factor_maps(&kind, &grid)?, &grid)?
        }
        _ => return Err(Failure::Usage("give exactly one of --dims or --grid".into())),
    };
    match out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write_sparse_pattern(&map, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_sparse_pattern(&map, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Decompose { input, grid, solver, out } => decompose(&input, &grid, &solver, &out),
        Command::Reconstruct { input, terms, levels, out } => reconstruct(&input, terms, levels, &out),
        Command::Analyze { input, kind, tol } => analyze(&input, &kind, tol),
        Command::Generate { kind, dims, seed, out } => generate_cmd(&kind, &dims, seed, &out),
        Command::ImageDemo { input, levels, grid, terms, solver, out_prefix } => {
            image_demo(&input, levels, grid.as_deref(), &terms, &solver, &out_prefix)
        }
        Command::ErrorCurve { input } => error_curve(&input),
        Command::ExportPerm { kind, dims, grid, out } => {
            export_perm(&kind, dims.as_deref(), grid.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

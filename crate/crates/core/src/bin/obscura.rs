//! Command-line driver. Exit codes: 0 success, 1 configuration or usage
//! error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use obscura::config::RunConfig;
use obscura::dct::{
    decode_image, encode_image, p3_split, read_container, scramble, write_container, Container, SecretPart,
    SharingMethod,
};
use obscura::harness::{run_matrix, AttackReport, Method};
use obscura::ksame::k_same_images;
use obscura::raster::{load_png, save_png};
use obscura::{Error, Image};

#[derive(Parser)]
#[command(name = "obscura", version, about = "Obscure faces and measure what the obscuration leaks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Obscure one PNG, or every PNG in a folder. P3 and scramble also write
    /// `<output>.coef` (public coefficients) and `<output>.secret`.
    Obscure {
        /// clear, gaussian, median, pixelation, k-same, p3 or scramble; `name:setting` also works
        #[arg(long)]
        method: String,
        /// Kernel or block size of the filter methods
        #[arg(long)]
        size: Option<usize>,
        /// P3 magnitude threshold
        #[arg(long)]
        threshold: Option<i32>,
        /// Group size for k-same
        #[arg(long)]
        k: Option<usize>,
        /// Scramble key
        #[arg(long)]
        seed: Option<u64>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Rebuild an image from its public part and secret container.
    Restore {
        /// Public PNG written by `obscure`; its coefficients are read from `<public>.coef`
        public: PathBuf,
        secret: PathBuf,
        output: PathBuf,
        /// Use this scramble key instead of the one in the secret container
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an attack matrix described by a TOML config.
    Attack {
        config: PathBuf,
        /// Overrides `output_dir` from the config
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print a saved report as a table.
    Report { report: PathBuf },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn method_from_flags(
    method: &str,
    size: Option<usize>,
    threshold: Option<i32>,
    k: Option<usize>,
) -> Result<Method, Failure> {
    if method.contains(':') {
        return Ok(method.parse()?);
    }
    let key = match method {
        "gaussian" | "median" | "pixelation" => {
            let size = size.ok_or_else(|| Failure::Usage(format!("--method {method} needs --size")))?;
            format!("{method}:{size}")
        }
        "p3" => threshold.map_or("p3".into(), |t| format!("p3:{t}")),
        "k-same" | "ksame" => k.map_or("k-same".into(), |k| format!("k-same:{k}")),
        other => other.to_string(),
    };
    Ok(key.parse()?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| runtime(e.into()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

fn write_shared(img: &Image, method: Method, seed: Option<u64>, output: &Path) -> Result<(), Failure> {
    let coeffs = encode_image(img).map_err(runtime)?;
    let pair = match method {
        Method::P3 { threshold } => p3_split(&coeffs, threshold)?,
        Method::Scramble => {
            let seed = seed.ok_or_else(|| Failure::Usage("scramble needs --seed".into()))?;
            scramble(&coeffs, seed)
        }
        _ => unreachable!("only coefficient-domain methods have a secret"),
    };
    save_png(&pair.render_public().map_err(runtime)?, output).map_err(runtime)?;
    std::fs::write(with_suffix(output, ".coef"), write_container(&Container::public_only(&pair))?)
        .map_err(|e| runtime(e.into()))?;
    std::fs::write(with_suffix(output, ".secret"), write_container(&Container::secret_only(&pair))?)
        .map_err(|e| runtime(e.into()))?;
    Ok(())
}

fn cmd_obscure(method: Method, seed: Option<u64>, input: &Path, output: &Path) -> Result<(), Failure> {
    if matches!(method, Method::Scramble) && seed.is_none() {
        return Err(Failure::Usage("scramble needs --seed".into()));
    }
    let (inputs, outputs): (Vec<PathBuf>, Vec<PathBuf>) = if input.is_dir() {
        std::fs::create_dir_all(output).map_err(|e| runtime(e.into()))?;
        png_files(input)?.into_iter().map(|p| (output.join(p.file_name().unwrap()), p)).map(|(o, i)| (i, o)).unzip()
    } else {
        (vec![input.to_path_buf()], vec![output.to_path_buf()])
    };
    let images: Vec<Image> = inputs.iter().map(load_png).collect::<Result<_, _>>().map_err(runtime)?;

    if let Method::KSame { k } = method {
        let refs: Vec<&Image> = images.iter().collect();
        let obscured = k_same_images(&refs, k)?;
        for (img, out) in obscured.iter().zip(&outputs) {
            save_png(img, out).map_err(runtime)?;
        }
        return Ok(());
    }
    for (img, out) in images.iter().zip(&outputs) {
        match method {
            Method::P3 { .. } | Method::Scramble => write_shared(img, method, seed, out)?,
            _ => save_png(&method.apply(img, seed.unwrap_or(0))?, out).map_err(runtime)?,
        }
        info!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_restore(public: &Path, secret: &Path, output: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let read = |p: &Path| -> Result<Container, Failure> {
        let bytes = std::fs::read(p).map_err(|e| runtime(e.into()))?;
        read_container(&bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
    };
    let public = read(&with_suffix(public, ".coef"))?;
    let secret = read(secret)?;
    let mut pair = Container::join(public, secret).map_err(runtime)?;
    if let Some(seed) = seed {
        if pair.method != SharingMethod::Scramble {
            return Err(Failure::Usage("--seed only applies to scrambled images".into()));
        }
        pair.secret = SecretPart::Seed(seed);
    }
    let restored = decode_image(&pair.restore().map_err(runtime)?).map_err(runtime)?;
    save_png(&restored, output).map_err(runtime)
}

fn cmd_attack(config: &Path, output_dir: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir
        .or(cfg.output_dir.clone())
        .ok_or_else(|| Failure::Usage("no output directory: set output_dir or pass --output-dir".into()))?;
    let ds = cfg.dataset.load().map_err(runtime)?;
    info!("{} images of {} identities", ds.len(), ds.identities.len());
    let (report, timings) =
        run_matrix(&ds, &cfg.dataset.label(), &cfg.spec, &cfg.harness, cfg.seed).map_err(runtime)?;
    report.write(&dir).map_err(runtime)?;
    std::fs::write(dir.join("timings.tsv"), timings.to_tsv()).map_err(|e| runtime(e.into()))?;
    print!("{}", report.render_table());
    let failed = report.failures().count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} rows failed", report.rows.len())));
    }
    Ok(())
}

fn cmd_report(path: &Path) -> Result<(), Failure> {
    let report = match AttackReport::read(path) {
        Err(Error::Io(e)) => return Err(Failure::Runtime(format!("{}: {e}", path.display()))),
        other => other?,
    };
    print!("{}", report.render_table());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Obscure { method, size, threshold, k, seed, input, output } => {
            method_from_flags(&method, size, threshold, k).and_then(|m| cmd_obscure(m, seed, &input, &output))
        }
        Command::Restore { public, secret, output, seed } => cmd_restore(&public, &secret, &output, seed),
        Command::Attack { config, output_dir } => cmd_attack(&config, output_dir),
        Command::Report { report } => cmd_report(&report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use derain_core::imagebuf::{load_image, load_mask, save_image, save_mask};
use derain_core::metrics::{evaluate, format_table, StageTimings};
use derain_core::model::{read_params_csv, rerain_image, write_params_csv};
use derain_core::pipeline::{run, PipelineConfig, PipelineResult};
use derain_core::synth::{synthesize, textured_background, StreakSpec};
use derain_core::Error;

/// Single-image rain streak removal.
#[derive(Debug, Parser)]
#[command(name = "derain", version)]
struct Cli {
    /// Worker threads for the parallel stages (0 = all cores).
    #[arg(long, global = true, env = "DERAIN_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove rain streaks from an image.
    Derain {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Write the detected rain mask (rain = black).
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Write the trained (alpha, beta) per rain pixel and channel as CSV.
        #[arg(long)]
        params_out: Option<PathBuf>,
        /// Write intermediate products (candidate mask, background estimates).
        #[arg(long)]
        debug_dir: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the rain mask only.
    Detect {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render synthetic rain over a clean background.
    Synth {
        background: PathBuf,
        #[arg(long)]
        rainy_out: PathBuf,
        #[arg(long)]
        gt_out: PathBuf,
        #[arg(long)]
        mask_out: PathBuf,
        #[arg(long, default_value_t = 30)]
        count: usize,
        /// Degrees from vertical, in [-45, 45].
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        angle: f64,
        #[arg(long, default_value_t = 18)]
        length: usize,
        #[arg(long, default_value_t = 1)]
        width: usize,
        #[arg(long, default_value_t = 0.2)]
        intensity: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Re-apply a trained model to a derained image.
    Rerain {
        derained: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score rainy and derained images against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        rainy: PathBuf,
        #[arg(long)]
        derained: PathBuf,
        /// JSON report path.
        #[arg(short, long)]
        report: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Time the pipeline on a seeded synthetic image.
    Bench {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    detect_window: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    approx_window: Option<usize>,
    #[arg(long)]
    max_growth: Option<usize>,
    #[arg(long)]
    fit_window: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha_floor: Option<f64>,
    #[arg(long)]
    min_samples: Option<usize>,
}

impl ConfigArgs {
    fn apply_flags(&self, cfg: &mut PipelineConfig) {
        let d = &mut cfg.detect;
        d.mu = self.mu.unwrap_or(d.mu);
        d.epsilon = self.epsilon.unwrap_or(d.epsilon);
        d.window_side = self.detect_window.unwrap_or(d.window_side);
        let a = &mut cfg.approx;
        a.sigma = self.sigma.unwrap_or(a.sigma);
        a.window_side = self.approx_window.unwrap_or(a.window_side);
        a.max_growth = self.max_growth.unwrap_or(a.max_growth);
        let m = &mut cfg.model;
        m.window_side = self.fit_window.unwrap_or(m.window_side);
        m.lambda = self.lambda.unwrap_or(m.lambda);
        m.alpha_floor = self.alpha_floor.unwrap_or(m.alpha_floor);
        m.min_samples = self.min_samples.unwrap_or(m.min_samples);
    }

    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        // flags alone must be valid before the file is touched
        let mut flags_only = PipelineConfig::default();
        self.apply_flags(&mut flags_only);
        flags_only.validate()?;

        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            cfg.merge_kv(&text)?;
        }
        self.apply_flags(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::Image { .. }
        | Error::UnsupportedFormat { .. }
        | Error::EmptyImage { .. } => 1,
        _ => 2,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn print_config(cfg: &PipelineConfig) {
    for (k, v) in cfg.to_map() {
        println!("config {k}={v}");
    }
}

fn print_summary(res: &PipelineResult) {
    let t = res.timings;
    let c = res.counters;
    println!("detection_s={:.3}", t.detect);
    println!("approximation_s={:.3}", t.approx);
    println!("optimization_s={:.3}", t.fit);
    println!("total_s={:.3}", t.total());
    println!(
        "candidates={} revised_away={} rain={} approx_fallbacks={} fallbacks={}",
        c.candidates, c.revised_away, c.rain, c.approx_fallbacks, c.fallbacks
    );
}

fn cmd_derain(
    input: &Path,
    output: &Path,
    mask_out: Option<&Path>,
    params_out: Option<&Path>,
    debug_dir: Option<&Path>,
    config: &ConfigArgs,
) -> Result<(), Error> {
    let mut cfg = config.resolve()?;
    cfg.emit_debug = debug_dir.is_some();
    let img = load_image(input)?;
    let res = run(&img, &cfg)?;
    save_image(&res.derained, output)?;
    if let Some(path) = mask_out {
        save_mask(&res.mask, path)?;
    }
    if let Some(path) = params_out {
        write_params_csv(&res.params_map, create(path)?)?;
    }
    if let Some(dir) = debug_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        if let Some(cand) = &res.candidates {
            save_mask(cand, dir.join("candidates.png"))?;
        }
        save_mask(&res.mask, dir.join("mask.png"))?;
        if let Some(est) = &res.estimates {
            save_image(&est.overlay(&img)?, dir.join("estimates.png"))?;
        }
        std::fs::write(dir.join("config.txt"), cfg.to_kv()).map_err(|e| Error::Io {
            path: dir.join("config.txt"),
            source: e,
        })?;
    }
    print_config(&cfg);
    print_summary(&res);
    Ok(())
}

fn cmd_detect(input: &Path, output: &Path, config: &ConfigArgs) -> Result<(), Error> {
    let cfg = config.resolve()?;
    let img = load_image(input)?;
    let det = derain_core::detect::detect(&img, &cfg.detect)?;
    save_mask(&det.revised, output)?;
    println!(
        "candidates={} revised_away={} rain={}",
        det.candidates.count(),
        det.candidates.count() - det.revised.count(),
        det.revised.count()
    );
    Ok(())
}

fn cmd_synth(
    background: &Path,
    rainy_out: &Path,
    gt_out: &Path,
    mask_out: &Path,
    spec: StreakSpec,
) -> Result<(), Error> {
    spec.validate()?;
    let bg = load_image(background)?;
    let scene = synthesize(&bg, &spec)?;
    save_image(&scene.rainy, rainy_out)?;
    save_image(&scene.ground_truth, gt_out)?;
    save_mask(&scene.mask, mask_out)?;
    println!("rain_pixels={}", scene.mask.count());
    Ok(())
}

fn cmd_rerain(derained: &Path, mask: &Path, params: &Path, output: &Path) -> Result<(), Error> {
    let img = load_image(derained)?;
    let mask = load_mask(mask)?;
    let file = File::open(params).map_err(|e| Error::Io {
        path: params.to_path_buf(),
        source: e,
    })?;
    let map = read_params_csv(std::io::BufReader::new(file), img.width(), img.height())?;
    let out = rerain_image(&img, &mask, &map)?;
    save_image(&out, output)
}

fn cmd_eval(
    gt: &Path,
    rainy: &Path,
    derained: &Path,
    report: Option<&Path>,
    id: Option<String>,
) -> Result<(), Error> {
    let id = id.unwrap_or_else(|| {
        rainy
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let (gt, rainy, derained) = (load_image(gt)?, load_image(rainy)?, load_image(derained)?);
    let rep = evaluate(id, &gt, &rainy, &derained, None)?;
    print!("{}", format_table(std::slice::from_ref(&rep)));
    if let Some(path) = report {
        std::fs::write(path, rep.to_json() + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn cmd_bench(size: usize, repetitions: usize, seed: u64, config: &ConfigArgs) -> Result<(), Error> {
    let cfg = config.resolve()?;
    if size == 0 || repetitions == 0 {
        return Err(Error::InvalidParameter(
            "size and repetitions must be positive".into(),
        ));
    }
    let bg = textured_background(size, size, seed)?;
    let spec = StreakSpec {
        count: size * size / 1600,
        seed,
        ..Default::default()
    };
    let scene = synthesize(&bg, &spec)?;
    let mut samples: Vec<(StageTimings, f64)> = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let res = run(&scene.rainy, &cfg)?;
        samples.push((res.timings, start.elapsed().as_secs_f64()));
    }
    let n = samples.len() as f64;
    let stat = |f: &dyn Fn(&(StageTimings, f64)) -> f64| {
        let mean = samples.iter().map(f).sum::<f64>() / n;
        let min = samples.iter().map(f).fold(f64::INFINITY, f64::min);
        (mean, min)
    };
    print_config(&cfg);
    println!(
        "image={size}x{size} repetitions={repetitions} rain_pixels={}",
        scene.mask.count()
    );
    for (label, (mean, min)) in [
        ("detection", stat(&|s| s.0.detect)),
        ("approximation", stat(&|s| s.0.approx)),
        ("optimization", stat(&|s| s.0.fit)),
        ("total", stat(&|s| s.1)),
    ] {
        println!("{label}: mean_s={mean:.4} min_s={min:.4}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("could not size thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Derain {
            input,
            output,
            mask_out,
            params_out,
            debug_dir,
            config,
        } => cmd_derain(
            &input,
            &output,
            mask_out.as_deref(),
            params_out.as_deref(),
            debug_dir.as_deref(),
            &config,
        ),
        Command::Detect {
            input,
            output,
            config,
        } => cmd_detect(&input, &output, &config),
        Command::Synth {
            background,
            rainy_out,
            gt_out,
            mask_out,
            count,
            angle,
            length,
            width,
            intensity,
            seed,
        } => cmd_synth(
            &background,
            &rainy_out,
            &gt_out,
            &mask_out,
            StreakSpec {
                count,
                angle,
                length,
                width,
                intensity,
                seed,
            },
        ),
        Command::Rerain {
            derained,
            mask,
            params,
            output,
        } => cmd_rerain(&derained, &mask, &params, &output),
        Command::Eval {
            gt,
            rainy,
            derained,
            report,
            id,
        } => cmd_eval(&gt, &rainy, &derained, report.as_deref(), id),
        Command::Bench {
            size,
            repetitions,
            seed,
            config,
        } => cmd_bench(size, repetitions, seed, &config),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("derain: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

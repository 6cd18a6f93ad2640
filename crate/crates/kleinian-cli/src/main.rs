//! Command-line front end: orbit counting, growth-exponent fits,
//! verification sweeps for the Haar/Casimir/spectral machinery, and SVG
//! rendering of circle packings.
//!
//! Exit codes: 0 on success, 1 when a checked invariant fails, 2 on
//! configuration errors.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kleinian::haar::{casimir_sweep, dmatrix_det_sweep, factorization_sweep, ResidualSweep};
use kleinian::lie::LieBasis;
use kleinian::numerics::fmt_f64;
use kleinian::orbit::{self, GroupSpec, PackingCount};
use kleinian::spectral::{self, kernel_k, kernel_l, KernelConstants, SpectralParameter};

#[derive(Parser)]
#[command(
    name = "kleinian",
    version,
    about = "Sphere-packing orbit counting and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EnumArgs {
    /// Group config file (JSON)
    #[arg(long)]
    group: PathBuf,
    /// Maximum word length explored
    #[arg(long, default_value_t = 400)]
    max_depth: usize,
    /// Worker count (overrides KLEINIAN_THREADS)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate bends below T and write a bends CSV with an N(T) table.
    Count {
        #[command(flatten)]
        en: EnumArgs,
        #[arg(long = "T")]
        t: f64,
        /// Also report the smoothed count sandwich at this width
        #[arg(long)]
        epsilon: Option<f64>,
        /// Output CSV path
        #[arg(long, default_value = "bends.csv")]
        out: PathBuf,
    },
    /// Fit the growth exponent on [Tlow, Thigh].
    Fit {
        #[command(flatten)]
        en: EnumArgs,
        #[arg(long = "Tlow")]
        t_low: f64,
        #[arg(long = "Thigh")]
        t_high: f64,
        #[arg(long, default_value_t = 32)]
        points: usize,
    },
    /// Verify the Haar factorization and the d-matrix determinant law.
    VerifyHaar {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Residual CSV path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the restricted Casimir operator against the full sum.
    VerifyCasimir {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify kernel identities, growth bounds, the bend ODE, and the
    /// smooth-cutoff L2 scaling at the given width.
    VerifySpectral {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-2)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the circles of a planar packing with bend < T as SVG.
    Render {
        #[command(flatten)]
        en: EnumArgs,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value = "packing.svg")]
        out: PathBuf,
    },
}

fn threads_from(en: &EnumArgs) -> usize {
    en.threads
        .or_else(|| {
            std::env::var("KLEINIAN_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1)
}

fn load(en: &EnumArgs) -> Result<GroupSpec, ExitCode> {
    orbit::load_group(&en.group).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(2)
    })
}

fn write_bends_csv(path: &PathBuf, pc: &PackingCount, t: f64) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "bend")?;
    for b in &pc.bends {
        writeln!(f, "{}", fmt_f64(*b))?;
    }
    writeln!(f)?;
    writeln!(f, "# summary")?;
    writeln!(f, "# horizon,{}", fmt_f64(pc.horizon))?;
    writeln!(f, "# words_explored,{}", pc.words_explored)?;
    writeln!(f, "# complete,{}", pc.complete)?;
    let mut t_mark = 10.0;
    while t_mark <= t {
        writeln!(
            f,
            "# N({}),{}",
            t_mark,
            pc.count(t_mark).map_err(std::io::Error::other)?
        )?;
        t_mark *= 10.0;
    }
    Ok(())
}

fn report(sweep: &ResidualSweep, out: Option<&PathBuf>) -> Result<bool, ExitCode> {
    println!("{}", sweep.summary());
    if let Some(path) = out {
        let mut f = File::create(path).map_err(|e| {
            eprintln!("cannot write {}: {e}", path.display());
            ExitCode::from(2)
        })?;
        sweep.write_csv(&mut f).map_err(|e| {
            eprintln!("cannot write {}: {e}", path.display());
            ExitCode::from(2)
        })?;
    }
    Ok(sweep.passed())
}

/// Kernel identity + growth-bound + bend-ODE + cutoff sweeps.
fn spectral_sweeps(seed: u64, sigma: f64) -> Vec<ResidualSweep> {
    let kc = KernelConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweeps = Vec::new();

    // K_1 = 1, L_1 = 0 and the interpolation identity on the standard grid.
    let mut rows = Vec::new();
    for n in [1u32, 2, 3, 4] {
        let nf = n as f64;
        for i in 0..12 {
            let s = nf / 2.0 + 0.01 + (nf - nf / 2.0 - 0.01) * i as f64 / 11.0;
            let p = SpectralParameter::real(n, s).unwrap();
            let k1 = (kernel_k(1.0, &p, &kc).unwrap() - 1.0).abs();
            let l1 = kernel_l(1.0, &p, &kc).unwrap().abs();
            rows.push((vec![nf, s, 1.0], k1.max(l1) * 1e2)); // against 1e-12 via shared 1e-10 scale
            for &t in &[1.0, 10.0, 1e3, 1e6] {
                let alpha: f64 = rng.random_range(-2.0..2.0);
                let beta: f64 = rng.random_range(-2.0..2.0);
                let k = kernel_k(t, &p, &kc).unwrap();
                let l = kernel_l(t, &p, &kc).unwrap();
                let lhs = alpha * t.powf(s) + beta * t.powf(nf - s);
                let rhs =
                    k * (alpha + beta) + l * (alpha * kc.b.powf(s) + beta * kc.b.powf(nf - s));
                let scale = lhs.abs().max(t.powf(s));
                rows.push((vec![nf, s, t], (lhs - rhs).abs() / scale));
            }
        }
    }
    sweeps.push(ResidualSweep {
        name: "kernel interpolation identity".into(),
        columns: vec!["n".into(), "s".into(), "T".into()],
        rows,
        threshold: 1e-10,
    });

    // Growth bounds with a single constant per mode over T in [1, 1e6].
    let mut rows = Vec::new();
    for n in [1u32, 2, 3, 4] {
        let nf = n as f64;
        let c_real = 160.0;
        for i in 0..10 {
            let s = nf / 2.0 + 0.01 + (nf / 2.0 - 0.01) * i as f64 / 9.0;
            let p = SpectralParameter::real(n, s).unwrap();
            let mut t = 1.0;
            while t <= 1e6 {
                let k = kernel_k(t, &p, &kc).unwrap().abs();
                let l = kernel_l(t, &p, &kc).unwrap().abs();
                rows.push((vec![nf, s, t], k.max(l) / (c_real * t.powf(s))));
                t *= 3.7;
            }
        }
        for &tt in &[0.3f64, 0.7, 1.3, 2.9] {
            let p = SpectralParameter::critical(n, tt);
            let c_crit = 1.0 / (tt * kc.b.ln()).sin().abs() + 1.0;
            let mut t = 1.0;
            while t <= 1e6 {
                let k = kernel_k(t, &p, &kc).unwrap().abs();
                let l = kernel_l(t, &p, &kc).unwrap().abs();
                let bound = c_crit * t.powf(nf / 2.0) * (1.0 + t.ln());
                rows.push((vec![nf, tt, t], k.max(l) / bound));
                t *= 3.7;
            }
        }
    }
    sweeps.push(ResidualSweep {
        name: "kernel growth bounds".into(),
        columns: vec!["n".into(), "s_or_t".into(), "T".into()],
        rows,
        threshold: 1.0,
    });

    // Bend ODE: homogeneous solutions and the variation-of-parameters output.
    let mut rows = Vec::new();
    for _ in 0..10 {
        let n = rng.random_range(1u32..=4) as f64;
        let s = rng.random_range(n / 2.0 + 0.05..n);
        let (f1, f2) = spectral::homogeneous_solutions(s, n);
        for i in 0..100 {
            let y = 1.0 + i as f64 / 99.0;
            let r1 = spectral::ode_residual(&f1, &|_| 0.0, s, n, y).abs();
            let r2 = spectral::ode_residual(&f2, &|_| 0.0, s, n, y).abs();
            rows.push((vec![n, s, y], r1.max(r2)));
        }
    }
    sweeps.push(ResidualSweep {
        name: "bend ODE homogeneous solutions".into(),
        columns: vec!["n".into(), "s".into(), "y".into()],
        rows,
        threshold: 1e-9,
    });

    let h = |t: f64| (-t).exp();
    let (s, n, t_big) = (1.3, 2.0, 8.0);
    let fp = |y: f64| spectral::variation_of_parameters(&h, s, n, t_big, y).unwrap();
    let rows = (0..100)
        .map(|i| {
            let y = 0.5 + 7.0 * i as f64 / 99.0;
            (
                vec![n, s, y],
                spectral::ode_residual(&fp, &h, s, n, y).abs(),
            )
        })
        .collect();
    sweeps.push(ResidualSweep {
        name: "variation of parameters".into(),
        columns: vec!["n".into(), "s".into(), "y".into()],
        rows,
        threshold: 1e-6,
    });

    // Smooth-cutoff L2 distance under dy/y^2 scales linearly in the width:
    // the ratio dist2(sigma) / dist2(sigma/10) should be close to 10.
    let dist2 = |s: f64| {
        kleinian::numerics::adaptive_simpson(
            &|y: f64| {
                let d = spectral::smooth_cutoff(y, 1.0, s);
                d * d / (y * y)
            },
            1.0,
            1.0 + s,
            1e-12,
            50,
        )
        .unwrap()
    };
    let ratio = dist2(sigma) / dist2(sigma / 10.0);
    sweeps.push(ResidualSweep {
        name: format!("cutoff L2 scaling at sigma = {sigma}"),
        columns: vec!["sigma".into(), "ratio".into()],
        rows: vec![(vec![sigma, ratio], (ratio - 10.0).abs())],
        threshold: 1.5,
    });
    sweeps
}

fn render_svg(
    out: &PathBuf,
    spec: &GroupSpec,
    vectors: &[nalgebra::DVector<f64>],
) -> std::io::Result<()> {
    // Bounds from the circles themselves (the outer circle dominates for
    // bounded packings).
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let circles: Vec<(f64, f64, f64)> = vectors
        .iter()
        .filter(|v| v[0].abs() > 1e-12)
        .map(|v| {
            let b = v[0];
            (v[1] / b, v[2] / b, 1.0 / b.abs())
        })
        .collect();
    for &(cx, cy, r) in &circles {
        lo[0] = lo[0].min(cx - r);
        lo[1] = lo[1].min(cy - r);
        hi[0] = hi[0].max(cx + r);
        hi[1] = hi[1].max(cy + r);
    }
    let pad = 0.02 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
    let (x0, y0) = (lo[0] - pad, lo[1] - pad);
    let (wd, ht) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
    let mut f = File::create(out)?;
    writeln!(
        f,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0:.6} {y0:.6} {wd:.6} {ht:.6}\">"
    )?;
    let stroke = 0.003 * wd.max(ht);
    let unsign = |v: f64| if v == 0.0 { 0.0 } else { v };
    for &(cx, cy, r) in &circles {
        let (cx, cy) = (unsign(cx), unsign(cy));
        writeln!(
            f,
            "  <circle cx=\"{cx:.6}\" cy=\"{cy:.6}\" r=\"{r:.6}\" fill=\"none\" stroke=\"black\" stroke-width=\"{stroke:.6}\"/>"
        )?;
    }
    let _ = spec;
    writeln!(f, "</svg>")
}

fn run() -> Result<bool, ExitCode> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Count {
            en,
            t,
            epsilon,
            out,
        } => {
            let spec = load(&en)?;
            let pc =
                orbit::orbit_enumerate(&spec, t, en.max_depth, threads_from(&en)).map_err(|e| {
                    eprintln!("enumeration error: {e}");
                    ExitCode::from(2)
                })?;
            write_bends_csv(&out, &pc, t).map_err(|e| {
                eprintln!("cannot write {}: {e}", out.display());
                ExitCode::from(2)
            })?;
            println!(
                "{} spheres with bend < {t} (horizon {}, {} words explored, complete: {})",
                pc.bends.len(),
                pc.horizon,
                pc.words_explored,
                pc.complete
            );
            let mut t_mark = 10.0;
            while t_mark <= t {
                println!("  N({t_mark:>12}) = {}", pc.count(t_mark).unwrap());
                t_mark *= 10.0;
            }
            if let Some(eps) = epsilon {
                // Smoothed sandwich around a sample point inside the horizon.
                let c = kleinian::orbit::SANDWICH_C;
                let ts = 0.9 * t / (1.0 + c * eps);
                let lo = pc.smoothed_count(ts * (1.0 - c * eps), eps);
                let hi = pc.smoothed_count(ts * (1.0 + c * eps), eps);
                match (pc.count(ts), lo, hi) {
                    (Ok(sharp), Ok(lo), Ok(hi)) => println!(
                        "smoothed sandwich at T = {ts:.3}, eps = {eps}: {:.3} <= {sharp} <= {:.3}",
                        lo.value, hi.value
                    ),
                    _ => eprintln!("smoothed count unavailable at eps = {eps}"),
                }
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Fit {
            en,
            t_low,
            t_high,
            points,
        } => {
            let spec = load(&en)?;
            let pc = orbit::orbit_enumerate(&spec, t_high, en.max_depth, threads_from(&en))
                .map_err(|e| {
                    eprintln!("enumeration error: {e}");
                    ExitCode::from(2)
                })?;
            let fit = pc.fit_delta(t_low, t_high, points).map_err(|e| {
                eprintln!("fit error: {e}");
                ExitCode::from(2)
            })?;
            println!(
                "N(T) ~ c T^delta on [{t_low}, {t_high}]: slope {:.6}, intercept {:.6}, r^2 {:.8}{}",
                fit.slope,
                fit.intercept,
                fit.r_squared,
                if fit.degenerate { " (degenerate)" } else { "" }
            );
            Ok(true)
        }
        Command::VerifyHaar {
            n,
            samples,
            seed,
            out,
        } => {
            let basis = LieBasis::build(n).map_err(|e| {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            })?;
            let fac = factorization_sweep(&basis, samples, seed).map_err(|e| {
                eprintln!("sweep error: {e}");
                ExitCode::from(2)
            })?;
            let ok1 = report(&fac, out.as_ref())?;
            let det = dmatrix_det_sweep(2, 6, samples.min(1000), seed);
            let ok2 = report(&det, None)?;
            Ok(ok1 && ok2)
        }
        Command::VerifyCasimir {
            n,
            samples,
            seed,
            out,
        } => {
            let basis = LieBasis::build(n).map_err(|e| {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            })?;
            let sweep = casimir_sweep(&basis, samples, seed).map_err(|e| {
                eprintln!("sweep error: {e}");
                ExitCode::from(2)
            })?;
            report(&sweep, out.as_ref())
        }
        Command::VerifySpectral { seed, sigma, out } => {
            let mut ok = true;
            for (i, sweep) in spectral_sweeps(seed, sigma).iter().enumerate() {
                let path = out.as_ref().map(|p| {
                    let mut p = p.clone();
                    let stem = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "spectral".into());
                    p.set_file_name(format!("{stem}-{i}.csv"));
                    p
                });
                ok &= report(sweep, path.as_ref())?;
            }
            Ok(ok)
        }
        Command::Render { en, t, out } => {
            let spec = load(&en)?;
            if spec.n != 2 {
                eprintln!("config error: rendering is implemented for n = 2 only");
                return Err(ExitCode::from(2));
            }
            let (pc, vectors) =
                orbit::orbit_enumerate_collecting(&spec, t, en.max_depth, threads_from(&en))
                    .map_err(|e| {
                        eprintln!("enumeration error: {e}");
                        ExitCode::from(2)
                    })?;
            render_svg(&out, &spec, &vectors).map_err(|e| {
                eprintln!("cannot write {}: {e}", out.display());
                ExitCode::from(2)
            })?;
            println!("rendered {} circles to {}", pc.bends.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(code) => code,
    }
}

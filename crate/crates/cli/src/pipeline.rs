//! The full analysis: over-complete extraction, reduction per α, direct
//! reference extractions, optional brute force, and the output files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use emreduce_core::diagram::{self, DiagramOptions, DirectEntry, TraceEntry};
use emreduce_core::io::fmt_real;
use emreduce_core::reduction::{brute_force_subsets, evaluate, subset_mask};
use emreduce_core::{
    extract, reduce_full, EndmemberSet, Error, ExtractionConfig, QualityPoint, ReductionConfig, ReductionTrace,
    Result, SpectralImage, KAPPA_CAP,
};

use crate::config::PipelineConfig;
use crate::files;

pub struct RunTrace {
    pub alpha: f64,
    pub run_index: usize,
    pub seed: u64,
    pub trace: ReductionTrace,
}

pub struct DirectSet {
    pub run_index: usize,
    pub seed: u64,
    pub set: EndmemberSet,
    pub quality: QualityPoint,
}

pub struct BruteForceResult {
    pub k: usize,
    /// The over-complete set of the first run.
    pub set: EndmemberSet,
    pub subsets: Vec<(u64, QualityPoint)>,
}

pub struct PipelineOutcome {
    pub bands: usize,
    pub pixels: usize,
    pub traces: Vec<RunTrace>,
    pub direct: Vec<DirectSet>,
    pub brute_force: Option<BruteForceResult>,
    pub timings: Vec<(String, Duration)>,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn traces_for(&self, alpha: f64) -> impl Iterator<Item = &RunTrace> {
        self.traces.iter().filter(move |t| t.alpha == alpha)
    }
}

fn timed<T>(timings: &mut Vec<(String, Duration)>, what: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push((what, start.elapsed()));
    Ok(out)
}

/// Run the analysis and write every output file under `config.out`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let image = files::load_image(&config.dataset, config.format)?;
    let mut outcome = analyse(config, &image)?;
    write_outputs(config, &mut outcome)?;
    Ok(outcome)
}

/// The computational part of the pipeline, without file output.
pub fn analyse(config: &PipelineConfig, image: &SpectralImage) -> Result<PipelineOutcome> {
    let mut timings = Vec::new();
    let mut traces = Vec::new();
    let mut direct = Vec::new();
    let mut first_over = None;
    for run in 0..config.runs {
        let seed = config.seed.wrapping_add(run as u64);
        let over = timed(&mut timings, format!("extract m={} run {run}", config.m_over), || {
            extract(config.algo, image, &ExtractionConfig::new(config.m_over, seed))
        })?;
        let reference = if config.m_ref == config.m_over {
            over.clone()
        } else {
            timed(&mut timings, format!("extract m={} run {run}", config.m_ref), || {
                extract(config.algo, image, &ExtractionConfig::new(config.m_ref, seed))
            })?
        };
        for set in [&reference, &over] {
            let quality = evaluate(set, image, &config.solver)?;
            direct.push(DirectSet {
                run_index: run,
                seed,
                set: set.clone(),
                quality,
            });
        }
        for &alpha in &config.alphas {
            let reduction = ReductionConfig {
                alpha,
                solver: config.solver,
                ..ReductionConfig::default()
            };
            let trace = timed(&mut timings, format!("reduce alpha={} run {run}", fmt_real(alpha)), || {
                reduce_full(&over, image, &reduction)
            })?;
            traces.push(RunTrace {
                alpha,
                run_index: run,
                seed,
                trace,
            });
        }
        if first_over.is_none() {
            first_over = Some(over);
        }
    }
    let brute_force = match (config.brute_force, &first_over) {
        (Some(b), Some(over)) => {
            let subsets = timed(&mut timings, format!("brute force k={}", b.k), || {
                brute_force_subsets(over, image, b.k, &config.solver, b.cap, b.force)
            })?;
            Some(BruteForceResult {
                k: b.k,
                set: over.clone(),
                subsets,
            })
        }
        _ => None,
    };
    Ok(PipelineOutcome {
        bands: image.bands(),
        pixels: image.pixels(),
        traces,
        direct,
        brute_force,
        timings,
        files: Vec::new(),
    })
}

pub fn trace_file_name(alpha: f64) -> String {
    format!("trace_alpha{}.csv", fmt_real(alpha))
}

pub fn build_diagram(config: &PipelineConfig, outcome: &PipelineOutcome) -> Result<diagram::DiagramSpec> {
    let traces: Vec<TraceEntry> = outcome
        .traces
        .iter()
        .map(|t| TraceEntry {
            trace: &t.trace,
            run_index: Some(t.run_index),
        })
        .collect();
    let direct: Vec<DirectEntry> = outcome
        .direct
        .iter()
        .map(|d| DirectEntry {
            set: &d.set,
            quality: d.quality,
            run_index: Some(d.run_index),
        })
        .collect();
    let brute = outcome.brute_force.as_ref().map(|b| b.subsets.as_slice()).unwrap_or(&[]);
    let options = DiagramOptions {
        crop: config.crop,
        kappa_log_scale: config.kappa_log_scale,
        ..DiagramOptions::default()
    };
    diagram::build_diagram(&traces, &direct, brute, options)
}

fn write_outputs(config: &PipelineConfig, outcome: &mut PipelineOutcome) -> Result<()> {
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    for &alpha in &config.alphas {
        let path = out.join(trace_file_name(alpha));
        let csv = files::trace_csv(outcome.traces_for(alpha).map(|t| (t.run_index, t.seed, &t.trace)));
        files::write(&path, &csv)?;
        written.push(path);
    }
    if let Some(b) = &outcome.brute_force {
        let path = out.join("bruteforce.csv");
        files::write(&path, &files::brute_csv(&b.set, &b.subsets))?;
        written.push(path);
    }
    let spec = build_diagram(config, outcome)?;
    let csv_path = out.join("diagram.csv");
    diagram::export_csv(&spec, &csv_path)?;
    let svg_path = out.join("diagram.svg");
    diagram::export_svg(&spec, &svg_path)?;
    written.push(csv_path);
    written.push(svg_path);
    let report_path = out.join("report.txt");
    written.push(report_path.clone());
    outcome.files = written;
    files::write(&report_path, &report(config, outcome))
}

fn fmt_kappa(kappa: f64) -> String {
    if kappa >= KAPPA_CAP {
        "inf".into()
    } else {
        format!("{kappa:.6e}")
    }
}

/// Plain-text summary: configuration, direct sets, per-level quality of
/// every trace with unmixing counts, brute-force ranking and runtimes.
pub fn report(config: &PipelineConfig, outcome: &PipelineOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "emreduce pipeline report");
    let _ = writeln!(s, "dataset: {}", config.dataset.display());
    if let Some(info) = config.info {
        let _ = writeln!(
            s,
            "registry: {} ({}x{}, {} bands), m_ref {}, HySime estimate {} (reference only)",
            info.name, info.width, info.height, info.bands, info.m_ref, info.hysime
        );
    }
    let _ = writeln!(s, "image: {} pixels, {} bands", outcome.pixels, outcome.bands);
    let _ = writeln!(
        s,
        "algorithm: {}, runs: {}, seeds: {}..={}",
        config.algo,
        config.runs,
        config.seed,
        config.seed.wrapping_add(config.runs as u64 - 1)
    );
    let _ = writeln!(s, "m_ref: {}, m_over: {}", config.m_ref, config.m_over);
    let alphas: Vec<String> = config.alphas.iter().map(|&a| fmt_real(a)).collect();
    let _ = writeln!(s, "alphas: {}", alphas.join(", "));
    let _ = writeln!(
        s,
        "solver: {}, tolerance {}",
        config.solver.mode,
        fmt_real(config.solver.tolerance)
    );

    let _ = writeln!(s, "\n[direct extraction]");
    let _ = writeln!(s, "{:>4} {:>8} {:>5} {:>14} {:>14}", "run", "seed", "size", "kappa", "rmse");
    for d in &outcome.direct {
        let _ = writeln!(
            s,
            "{:>4} {:>8} {:>5} {:>14} {:>14.6e}",
            d.run_index,
            d.seed,
            d.quality.set_size,
            fmt_kappa(d.quality.kappa),
            d.quality.rmse
        );
    }

    let mut total = 0;
    for t in &outcome.traces {
        let _ = writeln!(
            s,
            "\n[reduction alpha={} run={} seed={}]",
            fmt_real(t.alpha),
            t.run_index,
            t.seed
        );
        let _ = writeln!(
            s,
            "{:>5} {:>14} {:>14} {:>16} {:>12} {:>10}",
            "size", "kappa", "rmse", "removed", "score", "unmixings"
        );
        let q = t.trace.initial_quality;
        let _ = writeln!(
            s,
            "{:>5} {:>14} {:>14.6e} {:>16} {:>12} {:>10}",
            q.set_size,
            fmt_kappa(q.kappa),
            q.rmse,
            "-",
            "-",
            1
        );
        for step in &t.trace.steps {
            let _ = writeln!(
                s,
                "{:>5} {:>14} {:>14.6e} {:>16} {:>12.4e} {:>10}",
                step.after.set_size,
                fmt_kappa(step.after.kappa),
                step.after.rmse,
                step.removed.name(),
                step.score,
                step.unmixings
            );
        }
        let _ = writeln!(s, "total unmixings: {}", t.trace.total_unmixings());
        total += t.trace.total_unmixings();
    }
    let _ = writeln!(s, "\nunmixings over all traces: {total}");

    if let Some(b) = &outcome.brute_force {
        let _ = writeln!(s, "\n[brute force k={}]", b.k);
        let _ = writeln!(s, "subsets: {}", b.subsets.len());
        if let Some((mask, best)) = b.subsets.iter().min_by(|x, y| x.1.rmse.total_cmp(&y.1.rmse)) {
            let _ = writeln!(
                s,
                "lowest rmse: {mask:#x} kappa {} rmse {:.6e}",
                fmt_kappa(best.kappa),
                best.rmse
            );
        }
        for t in outcome.traces.iter().filter(|t| t.run_index == 0) {
            let Some(set) = t.trace.set_of_size(b.k) else { continue };
            let Some(mask) = subset_mask(&t.trace.initial, &set) else { continue };
            let Some((_, q)) = b.subsets.iter().find(|(m, _)| *m == mask) else { continue };
            let rank = 1 + b.subsets.iter().filter(|(_, o)| o.rmse < q.rmse).count();
            let _ = writeln!(
                s,
                "greedy alpha={}: {mask:#x} kappa {} rmse {:.6e}, rmse rank {rank} of {}",
                fmt_real(t.alpha),
                fmt_kappa(q.kappa),
                q.rmse,
                b.subsets.len()
            );
        }
    }

    let _ = writeln!(s, "\n[runtimes]");
    for (what, d) in &outcome.timings {
        let _ = writeln!(s, "{what}: {:.3} s", d.as_secs_f64());
    }
    let _ = writeln!(s, "\n[files]");
    for f in &outcome.files {
        let _ = writeln!(s, "{}", f.display());
    }
    s
}

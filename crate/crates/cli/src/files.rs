//! Image loading and the CSV formats written by the command-line tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use emreduce_core::diagram::{DiagramPoint, PointSource};
use emreduce_core::io::{self, fmt_real};
use emreduce_core::reduction::mask_columns;
use emreduce_core::{EndmemberSet, Error, QualityPoint, ReductionTrace, Result, SpectralImage, KAPPA_CAP};

pub const TRACE_HEADER: &str = "alpha,run_index,seed,set_size,kappa,rmse,removed,score,unmixings";
pub const BRUTE_HEADER: &str = "mask,members,set_size,kappa,rmse";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Envi,
    Csv,
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "envi" | "hdr" => Ok(ImageFormat::Envi),
            "csv" => Ok(ImageFormat::Csv),
            other => Err(Error::Unsupported {
                what: "image format",
                value: other.to_string(),
            }),
        }
    }
}

impl ImageFormat {
    /// Guess from the extension: `.csv` is CSV, anything else ENVI.
    pub fn detect(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ImageFormat::Csv,
            _ => ImageFormat::Envi,
        }
    }
}

/// Load an image. For ENVI, `path` may name the header or the data file.
pub fn load_image(path: &Path, format: Option<ImageFormat>) -> Result<SpectralImage> {
    match format.unwrap_or_else(|| ImageFormat::detect(path)) {
        ImageFormat::Csv => io::load_csv_image(path),
        ImageFormat::Envi => {
            let is_header = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr"));
            let (header, data) = if is_header {
                let data = io::find_envi_data(path).ok_or_else(|| {
                    Error::EmptyInput(format!("no data file found next to {}", path.display()))
                })?;
                (path.to_path_buf(), data)
            } else {
                (path.with_extension("hdr"), path.to_path_buf())
            };
            io::load_envi(&header, &data)
        }
    }
}

fn fmt_kappa(kappa: f64) -> String {
    if kappa >= KAPPA_CAP {
        "inf".into()
    } else {
        fmt_real(kappa)
    }
}

fn sanitize(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Append the rows of one trace: the initial set, then one row per step.
pub fn push_trace_rows(out: &mut String, trace: &ReductionTrace, run_index: usize, seed: u64) {
    let alpha = fmt_real(trace.alpha);
    let q = trace.initial_quality;
    let _ = writeln!(
        out,
        "{alpha},{run_index},{seed},{},{},{},,,1",
        q.set_size,
        fmt_kappa(q.kappa),
        fmt_real(q.rmse)
    );
    for step in &trace.steps {
        let _ = writeln!(
            out,
            "{alpha},{run_index},{seed},{},{},{},{},{},{}",
            step.after.set_size,
            fmt_kappa(step.after.kappa),
            fmt_real(step.after.rmse),
            sanitize(step.removed.name()),
            fmt_real(step.score),
            step.unmixings
        );
    }
}

/// A trace CSV for runs sharing one α.
pub fn trace_csv<'a>(traces: impl IntoIterator<Item = (usize, u64, &'a ReductionTrace)>) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for (run, seed, trace) in traces {
        push_trace_rows(&mut out, trace, run, seed);
    }
    out
}

pub fn brute_csv(set: &EndmemberSet, subsets: &[(u64, QualityPoint)]) -> String {
    let mut out = format!("{BRUTE_HEADER}\n");
    for (mask, q) in subsets {
        let names: Vec<String> = mask_columns(*mask)
            .into_iter()
            .map(|c| sanitize(set.members()[c].name()))
            .collect();
        let _ = writeln!(
            out,
            "{mask:#x},{},{},{},{}",
            names.join(";"),
            q.set_size,
            fmt_kappa(q.kappa),
            fmt_real(q.rmse)
        );
    }
    out
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read diagram points from a diagram, trace or brute-force CSV, chosen by
/// the header line. Trace points are labelled `<file stem>_m<size>`.
pub fn load_points(path: &Path) -> Result<Vec<DiagramPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header = text.lines().next().unwrap_or("").trim();
    if header == emreduce_core::diagram::CSV_HEADER {
        return emreduce_core::diagram::parse_csv(&text, path);
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let expected = match header {
        TRACE_HEADER => 9,
        BRUTE_HEADER => 5,
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "unrecognised header".into(),
            })
        }
    };
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != expected {
            return Err(err(format!("{} fields, expected {expected}", f.len())));
        }
        let real = |s: &str| -> Result<f64> {
            if s == "inf" {
                return Ok(KAPPA_CAP);
            }
            s.parse().map_err(|_| err(format!("not a number: {s:?}")))
        };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| err(format!("not an integer: {s:?}"))) };
        let point = if expected == 9 {
            let quality = QualityPoint {
                set_size: int(f[3])?,
                kappa: real(f[4])?,
                rmse: real(f[5])?,
            };
            DiagramPoint::new(
                quality,
                format!("{stem}_m{}", quality.set_size),
                PointSource::Trace,
                Some(real(f[0])?),
                Some(int(f[1])?),
            )?
        } else {
            let quality = QualityPoint {
                set_size: int(f[2])?,
                kappa: real(f[3])?,
                rmse: real(f[4])?,
            };
            DiagramPoint::new(quality, format!("subset_{}", f[0]), PointSource::Bruteforce, None, None)?
        };
        points.push(point);
    }
    Ok(points)
}

//! File formats: ENVI cubes, CSV images, endmember sets and abundance maps.
//!
//! All CSV output uses `.` as decimal separator and `\n` line ends. Reals
//! are written in their shortest round-trip form, so save → load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{AbundanceMap, EndmemberSet, Provenance, SpectralImage, UnmixMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnviDataType {
    Float32,
    Float64,
    UInt16,
}

impl EnviDataType {
    pub fn code(self) -> u32 {
        match self {
            EnviDataType::Float32 => 4,
            EnviDataType::Float64 => 5,
            EnviDataType::UInt16 => 12,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            4 => Ok(EnviDataType::Float32),
            5 => Ok(EnviDataType::Float64),
            12 => Ok(EnviDataType::UInt16),
            other => Err(Error::Unsupported {
                what: "ENVI data type",
                value: other.to_string(),
            }),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            EnviDataType::Float32 => 4,
            EnviDataType::Float64 => 8,
            EnviDataType::UInt16 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(Error::Unsupported {
                what: "ENVI interleave",
                value: other.to_string(),
            }),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }

    /// Element offset of `(band, line, sample)` in the raw stream.
    fn offset(self, band: usize, line: usize, sample: usize, h: &EnviHeader) -> usize {
        match self {
            Interleave::Bsq => (band * h.lines + line) * h.samples + sample,
            Interleave::Bil => (line * h.bands + band) * h.samples + sample,
            Interleave::Bip => (line * h.samples + sample) * h.bands + band,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub data_type: EnviDataType,
    pub interleave: Interleave,
    /// `true` for big-endian (`byte order = 1`).
    pub big_endian: bool,
    pub header_offset: u64,
    pub reflectance_scale: Option<f64>,
    pub wavelength: Option<Vec<f64>>,
}

impl EnviHeader {
    pub fn data_bytes(&self) -> u64 {
        (self.samples * self.lines * self.bands * self.data_type.bytes()) as u64
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().unwrap_or("").trim_start_matches('\u{feff}');
        if !first.trim_start().starts_with("ENVI") {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header does not start with ENVI".into(),
            });
        }
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut pending: Option<(String, String)> = None;
        for raw in lines {
            if let Some((key, mut value)) = pending.take() {
                value.push(' ');
                value.push_str(raw.trim());
                if raw.contains('}') {
                    entries.push((key, value));
                } else {
                    pending = Some((key, value));
                }
                continue;
            }
            let Some((key, value)) = raw.split_once('=') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if value.starts_with('{') && !value.contains('}') {
                pending = Some((key, value));
            } else {
                entries.push((key, value));
            }
        }
        if let Some(entry) = pending {
            entries.push(entry);
        }
        let get = |key: &str| {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        let require = |key: &str| {
            get(key).ok_or_else(|| Error::MissingKey {
                path: path.to_path_buf(),
                key: key.to_string(),
            })
        };
        let number = |key: &str, value: &str| -> Result<u64> {
            value.trim().parse::<u64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("`{key}` is not a non-negative integer: {value}"),
            })
        };
        let positive = |key: &str| -> Result<usize> {
            let v = number(key, require(key)?)?;
            if v == 0 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("`{key}` must be positive"),
                });
            }
            Ok(v as usize)
        };

        let samples = positive("samples")?;
        let lines = positive("lines")?;
        let bands = positive("bands")?;
        let data_type = EnviDataType::from_code(number("data type", require("data type")?)? as u32)?;
        let interleave = Interleave::parse(require("interleave")?)?;
        let big_endian = match get("byte order").map(|v| number("byte order", v)).transpose()? {
            None | Some(0) => false,
            Some(1) => true,
            Some(other) => {
                return Err(Error::Unsupported {
                    what: "ENVI byte order",
                    value: other.to_string(),
                })
            }
        };
        let header_offset = get("header offset")
            .map(|v| number("header offset", v))
            .transpose()?
            .unwrap_or(0);
        let reflectance_scale = match get("reflectance scale factor") {
            None => None,
            Some(v) => {
                let s: f64 = v.trim().parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("bad reflectance scale factor: {v}"),
                })?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: 0,
                        message: format!("reflectance scale factor must be positive: {v}"),
                    });
                }
                Some(s)
            }
        };
        let wavelength = match get("wavelength") {
            None => None,
            Some(v) => {
                let inner = v.trim().trim_start_matches('{').trim_end_matches('}');
                let values: std::result::Result<Vec<f64>, _> = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect();
                // Wavelength lists are informative only; ignore malformed ones.
                values.ok().filter(|w| w.len() == bands)
            }
        };
        Ok(Self {
            samples,
            lines,
            bands,
            data_type,
            interleave,
            big_endian,
            header_offset,
            reflectance_scale,
            wavelength,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::from("ENVI\n");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "lines = {}", self.lines);
        let _ = writeln!(s, "bands = {}", self.bands);
        let _ = writeln!(s, "header offset = {}", self.header_offset);
        let _ = writeln!(s, "data type = {}", self.data_type.code());
        let _ = writeln!(s, "interleave = {}", self.interleave.as_str());
        let _ = writeln!(s, "byte order = {}", u8::from(self.big_endian));
        if let Some(scale) = self.reflectance_scale {
            let _ = writeln!(s, "reflectance scale factor = {}", fmt_real(scale));
        }
        if let Some(w) = &self.wavelength {
            let list: Vec<String> = w.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(s, "wavelength = {{{}}}", list.join(", "));
        }
        s
    }
}

pub fn read_envi_header(header_path: &Path) -> Result<EnviHeader> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    EnviHeader::parse(&text, header_path)
}

/// Load an ENVI cube. Pixels are ordered row-major over `(line, sample)`.
pub fn load_envi(header_path: &Path, data_path: &Path) -> Result<SpectralImage> {
    let header = read_envi_header(header_path)?;
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let expected = header.header_offset + header.data_bytes();
    if (bytes.len() as u64) < expected {
        return Err(Error::SizeMismatch {
            path: data_path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let raw = &bytes[header.header_offset as usize..expected as usize];
    let width = header.data_type.bytes();
    let read = |index: usize| -> f64 {
        let chunk = &raw[index * width..(index + 1) * width];
        match (header.data_type, header.big_endian) {
            (EnviDataType::Float32, false) => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            (EnviDataType::Float32, true) => f32::from_be_bytes(chunk.try_into().unwrap()) as f64,
            (EnviDataType::Float64, false) => f64::from_le_bytes(chunk.try_into().unwrap()),
            (EnviDataType::Float64, true) => f64::from_be_bytes(chunk.try_into().unwrap()),
            (EnviDataType::UInt16, false) => u16::from_le_bytes(chunk.try_into().unwrap()) as f64,
            (EnviDataType::UInt16, true) => u16::from_be_bytes(chunk.try_into().unwrap()) as f64,
        }
    };
    let pixels = header.samples * header.lines;
    let mut data = DMatrix::zeros(header.bands, pixels);
    let scale = header.reflectance_scale.unwrap_or(1.0);
    for line in 0..header.lines {
        for sample in 0..header.samples {
            let pixel = line * header.samples + sample;
            for band in 0..header.bands {
                let v = read(header.interleave.offset(band, line, sample, &header));
                data[(band, pixel)] = if header.reflectance_scale.is_some() { v / scale } else { v };
            }
        }
    }
    let mut image = SpectralImage::new(data)?.with_shape(header.samples, header.lines)?;
    if let Some(w) = header.wavelength {
        image = image.with_band_centers(w)?;
    }
    Ok(image)
}

/// Find the binary file that belongs to an ENVI header: the header path
/// without extension, or with `.img`, `.raw`, `.dat` or `.bin`.
pub fn find_envi_data(header_path: &Path) -> Option<PathBuf> {
    let stem = header_path.with_extension("");
    if stem != header_path && stem.is_file() {
        return Some(stem);
    }
    ["img", "raw", "dat", "bin"]
        .iter()
        .map(|ext| header_path.with_extension(ext))
        .find(|p| p.is_file())
}

/// Write an image as little-endian float64 ENVI. Images without a shape are
/// written as one line of `p` samples.
pub fn save_envi(image: &SpectralImage, header_path: &Path, data_path: &Path, interleave: Interleave) -> Result<()> {
    let (samples, lines) = match (image.width(), image.height()) {
        (Some(w), Some(h)) => (w, h),
        _ => (image.pixels(), 1),
    };
    let header = EnviHeader {
        samples,
        lines,
        bands: image.bands(),
        data_type: EnviDataType::Float64,
        interleave,
        big_endian: false,
        header_offset: 0,
        reflectance_scale: None,
        wavelength: image.band_centers().map(<[f64]>::to_vec),
    };
    let total = samples * lines * header.bands;
    let mut values = vec![0.0f64; total];
    for line in 0..lines {
        for sample in 0..samples {
            let pixel = line * samples + sample;
            for band in 0..header.bands {
                values[interleave.offset(band, line, sample, &header)] = image.data()[(band, pixel)];
            }
        }
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(header_path, header.render()).map_err(|e| Error::io(header_path, e))?;
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))?;
    Ok(())
}

/// Load a CSV image: one pixel per row, one band per column.
pub fn load_csv_image(path: &Path) -> Result<SpectralImage> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_numeric_rows(&text, path)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no pixels", path.display())));
    }
    let n = rows[0].1.len();
    let mut data = DMatrix::zeros(n, rows.len());
    for (j, (_, row)) in rows.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            data[(b, j)] = *v;
        }
    }
    SpectralImage::new(data)
}

pub fn save_csv_image(image: &SpectralImage, path: &Path) -> Result<()> {
    let mut out = String::new();
    for col in image.data().column_iter() {
        push_row(&mut out, col.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Save an endmember set: a header of member names, then one row per band.
///
/// Pixel members are written as `name@pixel<index>`, synthetic members as
/// `name@synthetic`; any other header token loads as a file member.
pub fn save_endmembers(set: &EndmemberSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    let names: Vec<String> = set.members().iter().map(encode_member).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in set.spectra().row_iter() {
        push_row(&mut out, row.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_endmembers(path: &Path) -> Result<EndmemberSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::EmptyInput(format!("{} is empty", path.display())));
    };
    let members: Vec<Provenance> = header.split(',').map(|t| decode_member(t.trim())).collect();
    let rest: String = lines.map(|(_, l)| format!("{l}\n")).collect();
    let rows = parse_numeric_rows(&rest, path)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no bands", path.display())));
    }
    if let Some((line, row)) = rows.iter().find(|(_, r)| r.len() != members.len()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line + 1,
            message: format!("{} values for {} members", row.len(), members.len()),
        });
    }
    let n = rows.len();
    let m = members.len();
    let spectra = DMatrix::from_fn(n, m, |b, j| rows[b].1[j]);
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EndmemberSet::new(spectra, members, label)
}

fn encode_member(p: &Provenance) -> String {
    match p {
        Provenance::Pixel { index, name } => format!("{name}@pixel{index}"),
        Provenance::Synthetic { name } => format!("{name}@synthetic"),
        Provenance::File { name } => name.clone(),
    }
}

fn decode_member(token: &str) -> Provenance {
    if let Some((name, tail)) = token.rsplit_once('@') {
        if tail == "synthetic" {
            return Provenance::Synthetic { name: name.into() };
        }
        if let Some(index) = tail.strip_prefix("pixel").and_then(|d| d.parse().ok()) {
            return Provenance::Pixel {
                index,
                name: name.into(),
            };
        }
    }
    Provenance::File { name: token.into() }
}

/// Save abundances: `#` comment lines with mode and tolerance, then one
/// row per pixel with `m` columns.
pub fn save_abundances(map: &AbundanceMap, path: &Path) -> Result<()> {
    if map.pixels() == 0 || map.endmembers() == 0 {
        return Err(Error::EmptyInput("abundance map is empty".into()));
    }
    map.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "# mode={}", map.mode());
    let _ = writeln!(out, "# solver_tolerance={}", fmt_real(map.solver_tolerance()));
    for col in map.values().column_iter() {
        push_row(&mut out, col.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_abundances(path: &Path) -> Result<AbundanceMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mode = None;
    let mut tolerance = None;
    for line in text.lines().filter(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("mode=") {
            mode = Some(v.parse::<UnmixMode>()?);
        } else if let Some(v) = body.strip_prefix("solver_tolerance=") {
            tolerance = Some(v.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("bad solver tolerance {v}"),
            })?);
        }
    }
    let data: String = text
        .lines()
        .map(|l| if l.starts_with('#') { "\n".to_string() } else { format!("{l}\n") })
        .collect();
    let rows = parse_numeric_rows(&data, path)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no pixels", path.display())));
    }
    let m = rows[0].1.len();
    let values = DMatrix::from_fn(m, rows.len(), |i, j| rows[j].1[i]);
    AbundanceMap::new(
        values,
        mode.unwrap_or(UnmixMode::FullyConstrained),
        tolerance.unwrap_or(crate::unmixing::DEFAULT_TOLERANCE),
    )
}

/// Parse comma-separated numeric rows, skipping blank lines. Returns the
/// zero-based line number with each row. All rows must have the same length.
fn parse_numeric_rows(text: &str, path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for token in line.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("not a number: {:?}", token.trim()),
            })?;
            row.push(v);
        }
        if let Some((_, first)) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("ragged row: {} values, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push((i, row));
    }
    Ok(rows)
}

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_real(v));
    }
    out.push('\n');
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

//! File formats: tensors (`.ten` text, `.tenb` binary), decompositions
//! (`.tkp`), binary PGM/PPM images and permutation sparsity patterns.
//! Byte layouts are documented in `FORMATS.md`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pd::Backend;
use crate::perm::PermutationMap;
use crate::tensor::{DenseTensor, Shape};
use crate::tkpsvd::{FactorGrid, TkpsvdResult};

const TENSOR_MAGIC: &[u8; 4] = b"TEN1";
const DECOMP_MAGIC: &[u8; 4] = b"TKP1";

/// Upper bound on any count read from a file before allocating.
const MAX_ELEMENTS: u64 = 1 << 34;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct ByteReader<R> {
    inner: R,
}

impl<R: Read> ByteReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => format_err("file is truncated"),
                _ => Error::Io(e),
            })?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_ELEMENTS {
            return Err(format_err(format!("{what} {n} is implausibly large")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; n * 8];
        self.inner.read_exact(&mut raw).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => format_err("file is truncated"),
            _ => Error::Io(e),
        })?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut rest = [0u8; 1];
        match self.inner.read(&mut rest)? {
            0 => Ok(()),
            _ => Err(format_err("trailing bytes after payload")),
        }
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_dims<R: Read>(r: &mut ByteReader<R>) -> Result<Vec<usize>> {
    let k = r.count("order")?;
    if k == 0 || k > 64 {
        return Err(format_err(format!("unsupported order {k}")));
    }
    (0..k).map(|_| r.count("dimension")).collect()
}

pub fn write_tensor_binary(t: &DenseTensor, w: &mut impl Write) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.order() as u64).to_le_bytes())?;
    for &n in t.dims() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    write_f64s(w, t.data())
}

pub fn read_tensor_binary(r: impl Read) -> Result<DenseTensor> {
    let mut r = ByteReader { inner: r };
    if &r.bytes::<4>()? != TENSOR_MAGIC {
        return Err(format_err("missing TEN1 magic"));
    }
    let shape = Shape::new(&read_dims(&mut r)?)?;
    let data = r.f64s(shape.numel())?;
    r.expect_end()?;
    DenseTensor::from_shape(shape, data)
}

/// Values are written with 17 significant digits, one per line.
pub fn write_tensor_text(t: &DenseTensor, w: &mut impl Write) -> Result<()> {
    writeln!(w, "TEN1")?;
    writeln!(w, "{}", t.order())?;
    let dims: Vec<String> = t.dims().iter().map(|n| n.to_string()).collect();
    writeln!(w, "{}", dims.join(" "))?;
    for v in t.data() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_tensor_text(r: impl Read) -> Result<DenseTensor> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some("TEN1") {
        return Err(format_err("missing TEN1 magic"));
    }
    let mut next_usize = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| format_err(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|_| format_err(format!("bad {what}")))
    };
    let k = next_usize("order")?;
    if k == 0 || k > 64 {
        return Err(format_err(format!("unsupported order {k}")));
    }
    let dims = (0..k).map(|_| next_usize("dimension")).collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(&dims)?;
    let data = tokens
        .map(|s| s.parse::<f64>().map_err(|_| format_err(format!("bad value '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if data.len() != shape.numel() {
        return Err(format_err(format!(
            "expected {} values for shape {shape}, found {}",
            shape.numel(),
            data.len()
        )));
    }
    DenseTensor::from_shape(shape, data)
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Reads `.ten` as text and everything else as binary.
pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let file = fs::File::open(path)?;
    if has_extension(path, "ten") {
        read_tensor_text(file)
    } else {
        read_tensor_binary(BufReader::new(file))
    }
}

/// Writes `.ten` as text and everything else as binary.
pub fn write_tensor(t: &DenseTensor, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if has_extension(path, "ten") {
        write_tensor_text(t, &mut w)?;
    } else {
        write_tensor_binary(t, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decomposition(res: &TkpsvdResult, w: &mut impl Write) -> Result<()> {
    let grid = &res.grid;
    w.write_all(DECOMP_MAGIC)?;
    w.write_all(&(grid.degree() as u64).to_le_bytes())?;
    w.write_all(&(grid.order() as u64).to_le_bytes())?;
    for row in grid.rows() {
        for &n in row {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
    }
    w.write_all(&[res.backend.tag()])?;
    w.write_all(&(res.term_count() as u64).to_le_bytes())?;
    w.write_all(&res.source_norm.to_le_bytes())?;
    write_f64s(w, &res.sigmas)?;
    for per in &res.factors {
        for f in per {
            write_f64s(w, f.data())?;
        }
    }
    Ok(())
}

pub fn read_decomposition(r: impl Read) -> Result<TkpsvdResult> {
    let mut r = ByteReader { inner: r };
    if &r.bytes::<4>()? != DECOMP_MAGIC {
        return Err(format_err("missing TKP1 magic"));
    }
    let d = r.count("degree")?;
    let k = r.count("order")?;
    if d == 0 || k == 0 || d > 64 || k > 64 {
        return Err(format_err(format!("unsupported degree {d} / order {k}")));
    }
    let rows = (0..d)
        .map(|_| (0..k).map(|_| r.count("dimension")).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let grid = FactorGrid::new(rows)?;
    let backend = Backend::from_tag(r.bytes::<1>()?[0])?;
    let terms = r.count("term count")?;
    let source_norm = f64::from_le_bytes(r.bytes()?);
    let sigmas = r.f64s(terms)?;
    let mut factors = Vec::with_capacity(terms);
    for _ in 0..terms {
        let per = (0..d)
            .map(|i| DenseTensor::new(grid.factor_dims(i), r.f64s(grid.factor_numel(i))?))
            .collect::<Result<Vec<_>>>()?;
        factors.push(per);
    }
    r.expect_end()?;
    Ok(TkpsvdResult::from_parts(grid, backend, sigmas, factors, source_norm))
}

pub fn save_decomposition(res: &TkpsvdResult, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_decomposition(res, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_decomposition(path: &Path) -> Result<TkpsvdResult> {
    read_decomposition(BufReader::new(fs::File::open(path)?))
}

/// Whitespace-separated weights, `#` starts a comment.
pub fn read_sigmas_text(r: impl Read) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split_whitespace() {
            out.push(tok.parse::<f64>().map_err(|_| format_err(format!("bad weight '{tok}'")))?);
        }
    }
    Ok(out)
}

/// One `row col` pair (1-based) per line.
pub fn write_sparse_pattern(p: &PermutationMap, w: &mut impl Write) -> Result<()> {
    for (row, col) in p.sparse_pattern() {
        writeln!(w, "{row} {col}")?;
    }
    Ok(())
}

/// Height x width x channels tensor with channels 1 (PGM) or 3 (PPM).
pub fn read_pnm(r: impl Read) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    BufReader::new(r).read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated image header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format_err(format!("unsupported image magic '{other}' (want P5 or P6)"))),
    };
    let mut number = |what: &str| -> Result<usize> {
        token()?
            .parse::<usize>()
            .map_err(|_| format_err(format!("bad image {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(format!("only 8-bit images are supported, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = width * height * channels;
    if bytes.len() < start + need {
        return Err(format_err("image raster is truncated"));
    }
    let raster = &bytes[start..start + need];
    let scale = 255.0 / maxval as f64;
    DenseTensor::from_fn(&[height, width, channels], |ix| {
        raster[(ix[0] * width + ix[1]) * channels + ix[2]] as f64 * scale
    })
}

/// Clamps to `[0, 255]` and rounds half to even.
pub fn write_pnm(img: &DenseTensor, w: &mut impl Write) -> Result<()> {
    if img.order() != 3 || !matches!(img.dims()[2], 1 | 3) {
        return Err(Error::ShapeMismatch(format!(
            "images are height x width x (1 or 3), got {}",
            img.shape()
        )));
    }
    let (height, width, channels) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    let magic = if channels == 1 { "P5" } else { "P6" };
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    let mut raster = Vec::with_capacity(height * width * channels);
    for row in 0..height {
        for col in 0..width {
            for c in 0..channels {
                let v = img.data()[row + height * (col + width * c)];
                raster.push(quantize(v));
            }
        }
    }
    w.write_all(&raster)?;
    Ok(())
}

pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round_ties_even() as u8
}

pub fn load_image(path: &Path) -> Result<DenseTensor> {
    read_pnm(fs::File::open(path)?)
}

pub fn save_image(img: &DenseTensor, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_pnm(img, &mut w)?;
    w.flush()?;
    Ok(())
}

//! Versioned plain-text tensor files.
//!
//! ```text
//! format=1
//! D=6
//! H=4
//! A=4
//! G=23
//! seed=42
//! gru.w_z 4 6
//! 0.0132 -0.071 ...
//! ```
//!
//! Header lines are followed by one section per tensor: `name rows cols`,
//! then the values row by row, one matrix row per line, each value printed
//! with Rust's shortest round-trip formatting. Writing a file that was read
//! from disk reproduces it byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::lstm::BiLstmParams;
use super::model::{ModelDims, ModelParams};
use super::ParamSet;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn write_tensors<P: ParamSet>(params: &P, w: &mut impl Write) -> Result<()> {
    for (name, t) in params.tensors() {
        writeln!(w, "{name} {} {}", t.rows(), t.cols())?;
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    peeked: Option<String>,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Lines { inner: r.lines(), peeked: None }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        if let Some(l) = self.peeked.take() {
            return Ok(Some(l));
        }
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn push_back(&mut self, line: String) {
        self.peeked = Some(line);
    }

    fn header_value(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?.ok_or_else(|| Error::ModelFormat(format!("missing `{key}=` header")))?;
        match line.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok(v.trim().to_string()),
            _ => Err(Error::ModelFormat(format!("expected `{key}=` header, found {line:?}"))),
        }
    }

    fn header_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.header_value(key)?;
        v.parse().map_err(|_| Error::ModelFormat(format!("`{key}={v}` is not a nonnegative integer")))
    }

    fn check_version(&mut self) -> Result<()> {
        let v = self.header_value("format")?;
        if v != MODEL_FORMAT_VERSION.to_string() {
            return Err(Error::VersionMismatch(v));
        }
        Ok(())
    }
}

fn read_tensors<P: ParamSet, R: BufRead>(lines: &mut Lines<R>, params: &mut P) -> Result<()> {
    let layout: Vec<(&'static str, usize, usize)> =
        params.tensors().iter().map(|(n, t)| (*n, t.rows(), t.cols())).collect();
    for ((name, rows, cols), tensor) in layout.into_iter().zip(params.tensors_mut()) {
        let header = lines.next_line()?.ok_or_else(|| Error::ModelFormat(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let shape = (fields.get(1).and_then(|s| s.parse().ok()), fields.get(2).and_then(|s| s.parse().ok()));
        if fields.len() != 3 || fields[0] != name || shape != (Some(rows), Some(cols)) {
            return Err(Error::ModelFormat(format!("expected section `{name} {rows} {cols}`, found {header:?}")));
        }
        let expected = rows * cols;
        let mut values = Vec::with_capacity(expected);
        while values.len() < expected {
            let Some(line) = lines.next_line()? else { break };
            let parsed: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            match parsed {
                Ok(vs) => values.extend(vs),
                Err(_) => {
                    lines.push_back(line);
                    break;
                }
            }
        }
        if values.len() != expected {
            return Err(Error::TruncatedTensor { name: name.to_string(), expected, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat(format!("non-finite value in {name}")));
        }
        tensor.as_mut_slice().copy_from_slice(&values);
    }
    if let Some(extra) = lines.next_line()? {
        return Err(Error::ModelFormat(format!("unexpected trailing line {extra:?}")));
    }
    Ok(())
}

pub fn write_model(m: &ModelParams, mut w: impl Write) -> Result<()> {
    let d = m.dims();
    writeln!(w, "format={MODEL_FORMAT_VERSION}")?;
    writeln!(w, "D={}", d.input_dim)?;
    writeln!(w, "H={}", d.hidden_dim)?;
    writeln!(w, "A={}", d.attention_dim)?;
    writeln!(w, "G={}", d.genre_dim)?;
    writeln!(w, "seed={}", m.rng_seed)?;
    write_tensors(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(r: impl BufRead) -> Result<ModelParams> {
    let mut lines = Lines::new(r);
    lines.check_version()?;
    let dims = ModelDims {
        input_dim: lines.header_usize("D")?,
        hidden_dim: lines.header_usize("H")?,
        attention_dim: lines.header_usize("A")?,
        genre_dim: lines.header_usize("G")?,
    };
    let seed = lines.header_value("seed")?;
    let mut m = ModelParams::zeros(dims);
    m.rng_seed = seed.parse().map_err(|_| Error::ModelFormat(format!("bad seed {seed:?}")))?;
    read_tensors(&mut lines, &mut m)?;
    Ok(m)
}

pub fn save_model(m: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    write_model(m, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn write_bilstm(p: &BiLstmParams, mut w: impl Write) -> Result<()> {
    writeln!(w, "format={MODEL_FORMAT_VERSION}")?;
    writeln!(w, "kind=bilstm")?;
    writeln!(w, "D={}", p.input_dim())?;
    writeln!(w, "H={}", p.hidden_dim())?;
    write_tensors(p, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_bilstm(r: impl BufRead) -> Result<BiLstmParams> {
    let mut lines = Lines::new(r);
    lines.check_version()?;
    let kind = lines.header_value("kind")?;
    if kind != "bilstm" {
        return Err(Error::ModelFormat(format!("expected kind=bilstm, found {kind:?}")));
    }
    let d = lines.header_usize("D")?;
    let h = lines.header_usize("H")?;
    let mut p = BiLstmParams::zeros(d, h);
    read_tensors(&mut lines, &mut p)?;
    Ok(p)
}

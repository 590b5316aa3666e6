//! Versioned binary container for a fitted model.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `EPPROBIT` | 8 bytes |
//! | version | u32 |
//! | engine (0 dense, 1 low-rank) | u8 |
//! | converged | u8 |
//! | n, p | u64, u64 |
//! | ν² | f64 |
//! | sweeps run, skipped updates | u64, u64 |
//! | fit seconds | f64 |
//! | trace length `t`, then `t` values | u64, f64 × t |
//! | ξ | f64 × p |
//! | k, m | f64 × n each |
//! | dense: Σ column-major | f64 × p² |
//! | low-rank: V then Xᵀ, column-major `p × n` | f64 × 2pn |

use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use probit_ep::{Covariance, Engine, Fit, FitDiagnostics, GaussianPosterior};

use crate::error::{CliError, CliResult};
use crate::format::fmt_sig;

pub const MAGIC: &[u8; 8] = b"EPPROBIT";
pub const VERSION: u32 = 1;

/// Refuse to allocate more than this many floats while reading.
const MAX_FLOATS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub engine: Engine,
    pub n: usize,
    pub diagnostics: FitDiagnostics,
    pub k: DVector<f64>,
    pub m: DVector<f64>,
    pub posterior: GaussianPosterior,
}

impl ModelArtifact {
    pub fn from_fit(fit: &Fit) -> Self {
        Self {
            engine: fit.engine,
            n: fit.sites.k.len(),
            diagnostics: fit.diagnostics.clone(),
            k: fit.sites.k.clone(),
            m: fit.sites.m.clone(),
            posterior: fit.posterior.clone(),
        }
    }

    pub fn p(&self) -> usize {
        self.posterior.p()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let p = self.p();
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u8(match self.engine {
            Engine::Dense => 0,
            Engine::LowRank => 1,
        })?;
        w.write_u8(u8::from(self.diagnostics.converged))?;
        w.write_u64::<LE>(self.n as u64)?;
        w.write_u64::<LE>(p as u64)?;
        w.write_f64::<LE>(self.posterior.prior_variance)?;
        w.write_u64::<LE>(self.diagnostics.sweeps_run as u64)?;
        w.write_u64::<LE>(self.diagnostics.skipped_updates as u64)?;
        w.write_f64::<LE>(self.diagnostics.elapsed_seconds)?;
        w.write_u64::<LE>(self.diagnostics.max_delta_trace.len() as u64)?;
        write_floats(&mut w, &self.diagnostics.max_delta_trace)?;
        write_floats(&mut w, self.posterior.xi.as_slice())?;
        write_floats(&mut w, self.k.as_slice())?;
        write_floats(&mut w, self.m.as_slice())?;
        match &self.posterior.covariance {
            Covariance::Dense(sigma) => write_floats(&mut w, sigma.as_slice())?,
            Covariance::Factored { v, xt, .. } => {
                write_floats(&mut w, v.as_slice())?;
                write_floats(&mut w, xt.as_slice())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, String> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err("not a model artifact (bad magic)".into());
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != VERSION {
            return Err(format!("unsupported artifact version {version} (expected {VERSION})"));
        }
        let engine = match r.read_u8().map_err(truncated)? {
            0 => Engine::Dense,
            1 => Engine::LowRank,
            t => return Err(format!("unknown engine tag {t}")),
        };
        let converged = match r.read_u8().map_err(truncated)? {
            0 => false,
            1 => true,
            t => return Err(format!("bad converged flag {t}")),
        };
        let n = read_len(&mut r)?;
        let p = read_len(&mut r)?;
        if p == 0 {
            return Err("artifact has p = 0".into());
        }
        let prior_variance = r.read_f64::<LE>().map_err(truncated)?;
        if !(prior_variance.is_finite() && prior_variance > 0.0) {
            return Err(format!("bad prior variance {prior_variance}"));
        }
        let sweeps_run = read_len(&mut r)?;
        let skipped_updates = read_len(&mut r)?;
        let elapsed_seconds = r.read_f64::<LE>().map_err(truncated)?;
        let trace_len = read_len(&mut r)?;
        let max_delta_trace = read_floats(&mut r, trace_len)?;
        let xi = DVector::from_vec(read_floats(&mut r, p)?);
        let k = DVector::from_vec(read_floats(&mut r, n)?);
        let m = DVector::from_vec(read_floats(&mut r, n)?);
        let covariance = match engine {
            Engine::Dense => Covariance::Dense(DMatrix::from_vec(p, p, read_floats(&mut r, p * p)?)),
            Engine::LowRank => {
                let v = DMatrix::from_vec(p, n, read_floats(&mut r, p * n)?);
                let xt = DMatrix::from_vec(p, n, read_floats(&mut r, p * n)?);
                Covariance::Factored { v, k: k.clone(), xt }
            }
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
        if !rest.is_empty() {
            return Err(format!("{} trailing bytes after artifact", rest.len()));
        }
        Ok(Self {
            engine,
            n,
            diagnostics: FitDiagnostics {
                sweeps_run,
                converged,
                max_delta_trace,
                skipped_updates,
                elapsed_seconds,
            },
            k,
            m,
            posterior: GaussianPosterior {
                xi,
                prior_variance,
                covariance,
            },
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        self.write_to(io::BufWriter::new(file))
            .map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        Self::read_from(io::BufReader::new(file)).map_err(|message| CliError::Artifact {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Plain-text dump of every field, one `name: values` line per field, for
    /// debugging.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| fmt_sig(*x)).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let d = &self.diagnostics;
        let _ = writeln!(out, "format: EPPROBIT v{VERSION}");
        let _ = writeln!(out, "engine: {}", self.engine.name());
        let _ = writeln!(out, "converged: {}", d.converged);
        let _ = writeln!(out, "n: {}", self.n);
        let _ = writeln!(out, "p: {}", self.p());
        let _ = writeln!(out, "prior_variance: {}", fmt_sig(self.posterior.prior_variance));
        let _ = writeln!(out, "sweeps_run: {}", d.sweeps_run);
        let _ = writeln!(out, "skipped_updates: {}", d.skipped_updates);
        let _ = writeln!(out, "elapsed_seconds: {}", fmt_sig(d.elapsed_seconds));
        let _ = writeln!(out, "max_delta_trace: {}", join(&d.max_delta_trace));
        let _ = writeln!(out, "xi: {}", join(self.posterior.xi.as_slice()));
        let _ = writeln!(out, "k: {}", join(self.k.as_slice()));
        let _ = writeln!(out, "m: {}", join(self.m.as_slice()));
        match &self.posterior.covariance {
            Covariance::Dense(sigma) => {
                for (i, row) in sigma.row_iter().enumerate() {
                    let row: Vec<f64> = row.iter().copied().collect();
                    let _ = writeln!(out, "sigma[{i}]: {}", join(&row));
                }
            }
            Covariance::Factored { v, xt, .. } => {
                for (j, col) in v.column_iter().enumerate() {
                    let _ = writeln!(out, "v[{j}]: {}", join(col.as_slice()));
                }
                for (j, col) in xt.column_iter().enumerate() {
                    let _ = writeln!(out, "x[{j}]: {}", join(col.as_slice()));
                }
            }
        }
        out
    }
}

fn truncated(e: io::Error) -> String {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        "artifact is truncated".into()
    } else {
        e.to_string()
    }
}

fn read_len<R: Read>(r: &mut R) -> Result<usize, String> {
    let v = r.read_u64::<LE>().map_err(truncated)?;
    if v > MAX_FLOATS {
        return Err(format!("implausible size field {v}"));
    }
    Ok(v as usize)
}

fn write_floats<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for &v in values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_floats<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>, String> {
    if len as u64 > MAX_FLOATS {
        return Err(format!("implausible array length {len}"));
    }
    let mut out = vec![0.0; len];
    r.read_f64_into::<LE>(&mut out).map_err(truncated)?;
    Ok(out)
}

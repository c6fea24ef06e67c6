//! Command-line front end: scene files in, images, reports and run
//! manifests out.
//!
//! Exit codes: 0 success or convergence, 2 input error, 3 no convergence
//! within the iteration budget, 4 numerical failure or gradient mismatch.

use std::path::{Path, PathBuf};

use difftrace::prelude::*;
use serde::Serialize;

pub mod alloc;
pub mod bench;
pub mod commands;
pub mod experiments;
pub mod manifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] difftrace::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit(&self) -> Exit {
        match self {
            CliError::Core(difftrace::Error::NanInForward { .. } | difftrace::Error::NanGradient(_)) => Exit::Numerical,
            _ => Exit::Input,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok,
    Input,
    NotConverged,
    Numerical,
}

impl Exit {
    pub fn code(self) -> u8 {
        match self {
            Exit::Ok => 0,
            Exit::Input => 2,
            Exit::NotConverged => 3,
            Exit::Numerical => 4,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// 8-bit RGB PNG with the same quantization as the PPM writer.
pub fn write_png<R: Real>(image: &Image<R>, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| CliError::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&image.quantize()).map_err(png_err)?;
    w.finish().map_err(png_err)
}

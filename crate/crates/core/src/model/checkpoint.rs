//! Binary checkpoint: the magic `WEAM0001`, one UTF-8 header line with the
//! model configuration and tensor layout, then every tensor row-major as
//! little-endian `f32`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WEAM0001";

fn shape_string(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn header(config: &ModelConfig, params: &ModelParams) -> String {
    let layout = params
        .tensors()
        .iter()
        .map(|(name, t)| format!("{name}:{}", shape_string(t.shape())))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "vocab_size={} hidden={} layers={} heads={} ff_mult={} m_max={} init_std={} identity_heads={} seed={} tensors={layout}",
        config.vocab_size,
        config.hidden,
        config.layers,
        config.heads,
        config.ff_mult,
        config.m_max,
        config.init_std,
        config.identity_heads,
        config.seed,
    )
}

pub fn write_checkpoint<W: Write>(
    mut writer: W,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<()> {
    writer.write_all(CHECKPOINT_MAGIC)?;
    writeln!(writer, "{}", header(config, params))?;
    for (_, tensor) in params.tensors() {
        for &v in tensor.iter() {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut reader: R) -> Result<(ModelConfig, ModelParams)> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|_| bad("file too short for magic bytes".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let line = String::from_utf8(line).map_err(|_| bad("header is not UTF-8".into()))?;
    let fields: HashMap<&str, &str> = line
        .trim_end()
        .split(' ')
        .filter_map(|kv| kv.split_once('='))
        .collect();
    fn field<T: std::str::FromStr>(fields: &HashMap<&str, &str>, key: &str) -> Result<T> {
        fields
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("missing or invalid header field {key:?}")))
    }
    let config = ModelConfig {
        vocab_size: field(&fields, "vocab_size")?,
        hidden: field(&fields, "hidden")?,
        layers: field(&fields, "layers")?,
        heads: field(&fields, "heads")?,
        ff_mult: field(&fields, "ff_mult")?,
        m_max: field(&fields, "m_max")?,
        init_std: field(&fields, "init_std")?,
        identity_heads: field(&fields, "identity_heads")?,
        seed: field(&fields, "seed")?,
    };
    config.validate().map_err(|e| bad(e.to_string()))?;

    let mut params = ModelParams::init(&config).zeros_like();
    let expected = header(&config, &params);
    if expected.trim_end() != line.trim_end() {
        return Err(bad("tensor layout does not match the configuration".into()));
    }
    let mut buf = [0u8; 4];
    for (name, mut tensor) in params.tensors_mut() {
        for v in tensor.iter_mut() {
            reader
                .read_exact(&mut buf)
                .map_err(|_| bad(format!("truncated data in tensor {name}")))?;
            let x = f32::from_le_bytes(buf);
            if !x.is_finite() {
                return Err(bad(format!("non-finite value in tensor {name}")));
            }
            *v = x as f64;
        }
    }
    if reader.read(&mut buf)? != 0 {
        return Err(bad("trailing bytes after the last tensor".into()));
    }
    Ok((config, params))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), config, params)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

//! File formats: tspc-v1 point clouds, taylorseg-ckpt-v1 checkpoints, and
//! plain key=value config text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::optim::ParamRegistry;
use crate::tensor::Tensor;

use super::synth::Dataset;

/// Serialize a point cloud as tspc-v1 text. Missing labels are written as 0.
pub fn cloud_to_string(cloud: &PointCloud<f64>) -> String {
    let n = cloud.len();
    let mut out = String::with_capacity(n * 64);
    let _ = writeln!(out, "tspc-v1 {n}");
    for i in 0..n {
        let label = cloud.labels.as_ref().map(|l| l[i]).unwrap_or(0);
        let _ = writeln!(
            out,
            "{:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {label}",
            cloud.coords.at(i, 0),
            cloud.coords.at(i, 1),
            cloud.coords.at(i, 2),
            cloud.colors.at(i, 0),
            cloud.colors.at(i, 1),
            cloud.colors.at(i, 2),
        );
    }
    out
}

pub fn cloud_from_string(text: &str) -> Result<PointCloud<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("empty tspc file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("tspc-v1") {
        return Err(Error::Data("line 1: missing 'tspc-v1' magic".into()));
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data("line 1: bad point count".into()))?;
    if parts.next().is_some() {
        return Err(Error::Data("line 1: trailing tokens in header".into()));
    }

    let mut coords = Vec::with_capacity(n * 3);
    let mut colors = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    let mut count = 0usize;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(Error::Data(format!(
                "line {lineno}: expected 7 fields, found {}",
                fields.len()
            )));
        }
        let mut vals = [0.0f64; 6];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = fields[j].parse().map_err(|_| {
                Error::Data(format!("line {lineno}: bad number '{}'", fields[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {lineno}: non-finite value")));
            }
        }
        let label: u32 = fields[6]
            .parse()
            .map_err(|_| Error::Data(format!("line {lineno}: bad label '{}'", fields[6])))?;
        coords.extend_from_slice(&vals[..3]);
        colors.extend_from_slice(&vals[3..]);
        labels.push(label);
        count += 1;
    }
    if count != n {
        return Err(Error::Data(format!(
            "header declares {n} points but body has {count}"
        )));
    }
    PointCloud::new(
        Tensor::new(vec![n, 3], coords)?,
        Tensor::new(vec![n, 3], colors)?,
        Some(labels),
    )
}

pub fn write_cloud(path: &Path, cloud: &PointCloud<f64>) -> Result<()> {
    fs::write(path, cloud_to_string(cloud))?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud<f64>> {
    let text = fs::read_to_string(path)?;
    cloud_from_string(&text)
}

/// Write every scene as `scene_NNNN.tspc` inside `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, scene) in dataset.scenes.iter().enumerate() {
        write_cloud(&dir.join(format!("scene_{i:04}.tspc")), scene)?;
    }
    Ok(())
}

/// Read all `*.tspc` files in `dir`, sorted by file name.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "tspc").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "no .tspc scenes found in {}",
            dir.display()
        )));
    }
    let scenes = paths
        .iter()
        .map(|p| read_cloud(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { scenes })
}

/// SHA-256 hex digest of arbitrary config text, stored in checkpoints so a
/// checkpoint cannot silently be loaded under a different configuration.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("{:x}", h.finalize())
}

/// Serialize a parameter registry as taylorseg-ckpt-v1 text.
pub fn checkpoint_to_string(hash: &str, params: &ParamRegistry<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "taylorseg-ckpt-v1");
    let _ = writeln!(out, "config {hash}");
    let _ = writeln!(out, "params {}", params.len());
    for (name, t) in params.iter() {
        let _ = writeln!(out, "param {name} {} {}", t.rows(), t.cols());
        for r in 0..t.rows() {
            let row: Vec<String> = (0..t.cols()).map(|c| format!("{:.8e}", t.at(r, c))).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn checkpoint_from_string(text: &str) -> Result<(String, ParamRegistry<f64>)> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Data(format!("checkpoint truncated: expected {what}")))
    };
    let (_, magic) = next("magic")?;
    if magic.trim() != "taylorseg-ckpt-v1" {
        return Err(Error::Data("line 1: missing 'taylorseg-ckpt-v1' magic".into()));
    }
    let (_, cfg_line) = next("config line")?;
    let hash = cfg_line
        .strip_prefix("config ")
        .ok_or_else(|| Error::Data("line 2: expected 'config <hash>'".into()))?
        .trim()
        .to_string();
    let (_, count_line) = next("params line")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Data("line 3: expected 'params <count>'".into()))?;

    let mut params = ParamRegistry::new();
    for _ in 0..count {
        let (lineno, header) = next("param header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "param" {
            return Err(Error::Data(format!(
                "line {lineno}: expected 'param <name> <rows> <cols>'"
            )));
        }
        let name = parts[1];
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| Error::Data(format!("line {lineno}: bad row count")))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| Error::Data(format!("line {lineno}: bad col count")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = next("value row")?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != cols {
                return Err(Error::Data(format!(
                    "line {ln}: expected {cols} values, found {}",
                    vals.len()
                )));
            }
            for v in vals {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Data(format!("line {ln}: bad value '{v}'")))?;
                if !x.is_finite() {
                    return Err(Error::Data(format!("line {ln}: non-finite value")));
                }
                data.push(x);
            }
        }
        params.insert(name, Tensor::new(vec![rows, cols], data)?);
    }
    Ok((hash, params))
}

pub fn write_checkpoint(path: &Path, hash: &str, params: &ParamRegistry<f64>) -> Result<()> {
    fs::write(path, checkpoint_to_string(hash, params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(String, ParamRegistry<f64>)> {
    let text = fs::read_to_string(path)?;
    checkpoint_from_string(&text)
}

/// Parse plain key=value text. Blank lines and `#` comments are skipped.
pub fn parse_kv_str(text: &str) -> Result<IndexMap<String, String>> {
    let mut out = IndexMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_kv_file(path: &Path) -> Result<IndexMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_kv_str(&text)
}

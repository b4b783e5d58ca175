//! Plain-text parameter container.
//!
//! ```text
//! iqn-rnn-checkpoint 1
//! dtype f32
//! meta <key> <value to end of line>
//! param <name> <dim>x<dim>...
//! <space separated values, one line>
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is lossless at the stored precision. Rank-0 shapes are written as
//! `scalar`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::autodiff::{Element, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &str = "iqn-rnn-checkpoint 1";

/// Metadata stored alongside the parameters.
pub type Metadata = BTreeMap<String, String>;

pub fn write_checkpoint<T: Element, W: Write>(store: &ParamStore<T>, meta: &Metadata, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "dtype {}", T::DTYPE)?;
    for (k, v) in meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::Checkpoint(format!("unencodable metadata key `{k}`")));
        }
        writeln!(out, "meta {k} {v}")?;
    }
    for (_, name, t) in store.iter() {
        let dims = if t.shape().is_empty() {
            "scalar".to_string()
        } else {
            t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x")
        };
        writeln!(out, "param {name} {dims}")?;
        let mut first = true;
        for v in t.data() {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Parsed checkpoint: named tensors in file order plus metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub dtype: String,
    pub meta: Metadata,
    pub params: Vec<(String, Vec<usize>, Vec<T>)>,
}

pub fn read_checkpoint<T: Element, R: BufRead>(input: R) -> Result<Checkpoint<T>> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::Checkpoint(format!("bad header `{magic}`")));
    }
    let (_, dtype_line) = next("dtype")?;
    let dtype = dtype_line
        .strip_prefix("dtype ")
        .ok_or_else(|| Error::Checkpoint("missing dtype line".into()))?
        .trim()
        .to_string();
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {dtype}, requested {}",
            T::DTYPE
        )));
    }
    let mut meta = Metadata::new();
    let mut params = Vec::new();
    loop {
        let (lineno, line) = next("`param` or `end`")?;
        if line.trim() == "end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.insert(k.to_string(), v.to_string());
            continue;
        }
        let Some(rest) = line.strip_prefix("param ") else {
            return Err(Error::Checkpoint(format!("line {lineno}: unexpected `{line}`")));
        };
        let mut parts = rest.split_whitespace();
        let (Some(name), Some(dims), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Checkpoint(format!("line {lineno}: malformed param line")));
        };
        let shape: Vec<usize> = if dims == "scalar" {
            Vec::new()
        } else {
            dims.split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("line {lineno}: bad shape `{dims}`")))?
        };
        let (vline_no, values_line) = next("values")?;
        let values: Vec<T> = values_line
            .split_whitespace()
            .map(|v| v.parse::<T>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Checkpoint(format!("line {vline_no}: unparsable value")))?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Checkpoint(format!(
                "line {vline_no}: `{name}` has {} values for shape {shape:?}",
                values.len()
            )));
        }
        params.push((name.to_string(), shape, values));
    }
    Ok(Checkpoint { dtype, meta, params })
}

impl<T: Element> Checkpoint<T> {
    /// Copies values into an already-registered store, matching by name.
    ///
    /// Every store parameter must be present with an identical shape.
    pub fn restore_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, shape, values) in &self.params {
            let id = store
                .id_of(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            let t = store.get_mut(id);
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {shape:?}, model expects {:?}",
                    t.shape()
                )));
            }
            t.assign(values)?;
        }
        Ok(())
    }
}

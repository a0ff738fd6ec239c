//! Instance files.
//!
//! Routing instances are JSON objects
//! `{capacity, velocity, depot: [x, y], customers: [{x, y, demand, arrival}], online}`
//! and scheduling instances `{m, c, setup: [[..]], jobs: [{class, p, w, arrival}]}`.
//! The two are told apart by their `customers` / `jobs` key.
//!
//! # Liao-style text files (`liao-v1`)
//!
//! Whitespace-separated integers; `#` starts a comment running to the end
//! of the line. In order:
//!
//! ```text
//! n m c                 jobs, machines, classes
//! p_1 .. p_n            processing times
//! w_1 .. w_n            weights
//! k_1 .. k_n            classes, 1-based
//! s_11 .. s_1c          setup matrix, c rows of c entries;
//! ..                    s_ab is paid when class b follows class a
//! s_c1 .. s_cc
//! ```
//!
//! Every job is released at time 0. Trailing tokens are an error.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cvrp::{CvrpEnv, CvrpInstance};
use crate::error::{Error, Result};
use crate::pmsp::{Job, PmspEnv, PmspInstance};

pub const LIAO_FORMAT: &str = "liao-v1";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Instance {
    Cvrp(CvrpInstance),
    Pmsp(PmspInstance),
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inst = if value.get("customers").is_some() {
            Instance::Cvrp(serde_json::from_value(value)?)
        } else if value.get("jobs").is_some() {
            Instance::Pmsp(serde_json::from_value(value)?)
        } else {
            return Err(Error::Parse("instance has neither `customers` nor `jobs`".into()));
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Cvrp(i) => i.validate(),
            Instance::Pmsp(i) => i.validate(),
        }
    }

    pub fn problem(&self) -> &'static str {
        match self {
            Instance::Cvrp(_) => "cvrp",
            Instance::Pmsp(_) => "pmsp",
        }
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn cvrp_env(&self) -> Result<CvrpEnv> {
        match self {
            Instance::Cvrp(i) => CvrpEnv::new(i.clone()),
            Instance::Pmsp(_) => Err(Error::InvalidArgument("expected a routing instance".into())),
        }
    }

    pub fn pmsp_env(&self) -> Result<PmspEnv> {
        match self {
            Instance::Pmsp(i) => PmspEnv::new(i.clone()),
            Instance::Cvrp(_) => Err(Error::InvalidArgument("expected a scheduling instance".into())),
        }
    }
}

/// Parses a `liao-v1` text file (see the module docs).
pub fn parse_liao(text: &str, format: &str) -> Result<PmspInstance> {
    if format != LIAO_FORMAT {
        return Err(Error::Parse(format!("unsupported format {format:?}, expected {LIAO_FORMAT:?}")));
    }
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .enumerate();
    let mut next = |what: &str| -> Result<u64> {
        let (i, tok) = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("file ends before {what}")))?;
        tok.parse()
            .map_err(|_| Error::Parse(format!("token {} ({tok:?}) is not a nonnegative integer: {what}", i + 1)))
    };
    let n = next("job count")? as usize;
    let m = next("machine count")? as usize;
    let c = next("class count")? as usize;
    let as_u32 = |v: u64| u32::try_from(v).map_err(|_| Error::Parse(format!("{v} is out of range")));
    let mut p = Vec::with_capacity(n);
    for j in 0..n {
        p.push(as_u32(next(&format!("processing time of job {}", j + 1))?)?);
    }
    let mut w = Vec::with_capacity(n);
    for j in 0..n {
        w.push(as_u32(next(&format!("weight of job {}", j + 1))?)?);
    }
    let mut class = Vec::with_capacity(n);
    for j in 0..n {
        class.push(next(&format!("class of job {}", j + 1))? as usize);
    }
    let mut setup = vec![vec![0; c]; c];
    for (a, row) in setup.iter_mut().enumerate() {
        for (b, s) in row.iter_mut().enumerate() {
            *s = as_u32(next(&format!("setup {} -> {}", a + 1, b + 1))?)?;
        }
    }
    if let Some((i, tok)) = tokens.next() {
        return Err(Error::Parse(format!("unexpected trailing token {} ({tok:?})", i + 1)));
    }
    let inst = PmspInstance {
        m,
        c,
        setup,
        jobs: (0..n)
            .map(|j| Job {
                class: class[j],
                p: p[j],
                w: w[j],
                arrival: 0.0,
            })
            .collect(),
        arrivals: None,
    };
    inst.validate()?;
    Ok(inst)
}

//! Self-describing model container.
//!
//! A short text header (`magic`, `format_version`, `kind`, blank line) is
//! followed by binary sections, each a 4-byte tag, a little-endian `u64`
//! payload length and the payload. Floats are stored as their IEEE bits so
//! a round trip is exact.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::boosting::{EnergyModel, InitialModel, Stage};
use crate::data::{FeatureKind, FeatureSpec, Schema};
use crate::def::{DefEnsemble, DensityLeaf, DensityTree};
use crate::error::{Error, Result};
use crate::tree::{CategorySet, EnergyTree, Node, SplitRule, Tree};

pub const MAGIC: &str = "NRGBOOST-MODEL";
pub const FORMAT_VERSION: u32 = 1;

const TAG_SCHEMA: &[u8; 4] = b"SCHM";
const TAG_INITIAL: &[u8; 4] = b"INIT";
const TAG_STAGES: &[u8; 4] = b"STGS";
const TAG_DEF: &[u8; 4] = b"DEFT";
const TAG_CONFIG: &[u8; 4] = b"CONF";
const TAG_SEED: &[u8; 4] = b"SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Nrgboost(EnergyModel),
    Def(DefEnsemble),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Nrgboost(_) => "nrgboost",
            SavedModel::Def(_) => "def",
        }
    }

    pub fn schema(&self) -> &Schema {
        match self {
            SavedModel::Nrgboost(m) => &m.schema,
            SavedModel::Def(e) => &e.schema,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SavedModel,
    /// Training configuration as TOML.
    pub config: Option<String>,
    pub seed: Option<u64>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LE>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.write_u64::<LE>(v.to_bits()).unwrap();
}

fn get_str(r: &mut Cursor<&[u8]>) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| fmt_err("invalid UTF-8 string"))
}

fn get_f64(r: &mut Cursor<&[u8]>) -> Result<f64> {
    Ok(f64::from_bits(r.read_u64::<LE>()?))
}

fn encode_schema(s: &Schema) -> Vec<u8> {
    let mut out = Vec::new();
    out.write_u32::<LE>(s.features.len() as u32).unwrap();
    for f in &s.features {
        put_str(&mut out, &f.name);
        out.write_u8(match f.kind {
            FeatureKind::OrderedNumeric => 0,
            FeatureKind::Categorical => 1,
        })
        .unwrap();
        out.write_u32::<LE>(f.cardinality as u32).unwrap();
        out.write_u32::<LE>(f.bin_edges.len() as u32).unwrap();
        for &e in &f.bin_edges {
            put_f64(&mut out, e);
        }
        out.write_u32::<LE>(f.categories.len() as u32).unwrap();
        for c in &f.categories {
            put_str(&mut out, c);
        }
        put_f64(&mut out, f.lower);
        put_f64(&mut out, f.upper);
    }
    match s.target_index {
        Some(t) => {
            out.write_u8(1).unwrap();
            out.write_u32::<LE>(t as u32).unwrap();
        }
        None => out.write_u8(0).unwrap(),
    }
    out.write_u32::<LE>(s.dropped.len() as u32).unwrap();
    for d in &s.dropped {
        put_str(&mut out, d);
    }
    out
}

fn decode_schema(buf: &[u8]) -> Result<Schema> {
    let mut r = Cursor::new(buf);
    let n = r.read_u32::<LE>()?;
    let mut features = Vec::new();
    for _ in 0..n {
        let name = get_str(&mut r)?;
        let kind = match r.read_u8()? {
            0 => FeatureKind::OrderedNumeric,
            1 => FeatureKind::Categorical,
            k => return Err(fmt_err(format!("unknown feature kind {k}"))),
        };
        let cardinality = r.read_u32::<LE>()? as usize;
        let n_edges = r.read_u32::<LE>()?;
        let bin_edges = (0..n_edges)
            .map(|_| get_f64(&mut r))
            .collect::<Result<_>>()?;
        let n_cats = r.read_u32::<LE>()?;
        let categories = (0..n_cats)
            .map(|_| get_str(&mut r))
            .collect::<Result<_>>()?;
        let lower = get_f64(&mut r)?;
        let upper = get_f64(&mut r)?;
        features.push(FeatureSpec {
            name,
            kind,
            cardinality,
            bin_edges,
            categories,
            lower,
            upper,
        });
    }
    let target_index = match r.read_u8()? {
        0 => None,
        _ => Some(r.read_u32::<LE>()? as usize),
    };
    let n_dropped = r.read_u32::<LE>()?;
    let dropped = (0..n_dropped)
        .map(|_| get_str(&mut r))
        .collect::<Result<_>>()?;
    let schema = Schema {
        features,
        target_index,
        dropped,
    };
    schema.validate()?;
    Ok(schema)
}

fn encode_tree<L>(out: &mut Vec<u8>, tree: &Tree<L>, mut leaf: impl FnMut(&mut Vec<u8>, &L)) {
    out.write_u32::<LE>(tree.num_nodes() as u32).unwrap();
    for n in tree.nodes() {
        match n {
            Node::Leaf(l) => {
                out.write_u8(0).unwrap();
                leaf(out, l);
            }
            Node::Split {
                feature,
                rule,
                left,
                right,
            } => {
                match rule {
                    SplitRule::Threshold(t) => {
                        out.write_u8(1).unwrap();
                        out.write_u32::<LE>(*feature as u32).unwrap();
                        out.write_u16::<LE>(*t).unwrap();
                    }
                    SplitRule::Categories(s) => {
                        out.write_u8(2).unwrap();
                        out.write_u32::<LE>(*feature as u32).unwrap();
                        for w in s.words() {
                            out.write_u64::<LE>(w).unwrap();
                        }
                    }
                }
                out.write_u32::<LE>(*left as u32).unwrap();
                out.write_u32::<LE>(*right as u32).unwrap();
            }
        }
    }
}

fn decode_tree<L>(
    r: &mut Cursor<&[u8]>,
    n_features: usize,
    mut leaf: impl FnMut(&mut Cursor<&[u8]>) -> Result<L>,
) -> Result<Tree<L>> {
    let n = r.read_u32::<LE>()?;
    let mut nodes = Vec::new();
    for _ in 0..n {
        let tag = r.read_u8()?;
        if tag == 0 {
            nodes.push(Node::Leaf(leaf(r)?));
            continue;
        }
        let feature = r.read_u32::<LE>()? as usize;
        if feature >= n_features {
            return Err(fmt_err(format!("split on unknown feature {feature}")));
        }
        let rule = match tag {
            1 => SplitRule::Threshold(r.read_u16::<LE>()?),
            2 => {
                let mut w = [0u64; 4];
                for x in &mut w {
                    *x = r.read_u64::<LE>()?;
                }
                SplitRule::Categories(CategorySet::from_words(w))
            }
            _ => return Err(fmt_err(format!("unknown node tag {tag}"))),
        };
        let left = r.read_u32::<LE>()? as usize;
        let right = r.read_u32::<LE>()? as usize;
        nodes.push(Node::Split {
            feature,
            rule,
            left,
            right,
        });
    }
    Tree::from_nodes(nodes).map_err(|e| fmt_err(e.to_string()))
}

fn encode_initial(m: &InitialModel) -> Vec<u8> {
    let mut out = Vec::new();
    put_f64(&mut out, m.uniform_mix());
    out.write_u32::<LE>(m.marginals().len() as u32).unwrap();
    for v in m.marginals() {
        out.write_u32::<LE>(v.len() as u32).unwrap();
        for &p in v {
            put_f64(&mut out, p);
        }
    }
    out
}

fn decode_initial(buf: &[u8]) -> Result<InitialModel> {
    let mut r = Cursor::new(buf);
    let mix = get_f64(&mut r)?;
    let n = r.read_u32::<LE>()?;
    let mut marginals = Vec::new();
    for _ in 0..n {
        let k = r.read_u32::<LE>()?;
        marginals.push(
            (0..k)
                .map(|_| get_f64(&mut r))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    InitialModel::new(marginals, mix)
}

fn encode_stages(stages: &[Stage]) -> Vec<u8> {
    let mut out = Vec::new();
    out.write_u32::<LE>(stages.len() as u32).unwrap();
    for s in stages {
        put_f64(&mut out, s.step);
        encode_tree(&mut out, &s.tree, |o, &w| put_f64(o, w));
    }
    out
}

fn decode_stages(buf: &[u8], n_features: usize) -> Result<Vec<Stage>> {
    let mut r = Cursor::new(buf);
    let n = r.read_u32::<LE>()?;
    let mut stages = Vec::new();
    for _ in 0..n {
        let step = get_f64(&mut r)?;
        let tree: EnergyTree = decode_tree(&mut r, n_features, get_f64)?;
        stages.push(Stage { tree, step });
    }
    Ok(stages)
}

fn encode_def(trees: &[DensityTree]) -> Vec<u8> {
    let mut out = Vec::new();
    out.write_u32::<LE>(trees.len() as u32).unwrap();
    for t in trees {
        encode_tree(&mut out, t, |o, l| {
            put_f64(o, l.p);
            put_f64(o, l.volume);
        });
    }
    out
}

fn decode_def(buf: &[u8], n_features: usize) -> Result<Vec<DensityTree>> {
    let mut r = Cursor::new(buf);
    let n = r.read_u32::<LE>()?;
    (0..n)
        .map(|_| {
            decode_tree(&mut r, n_features, |r| {
                Ok(DensityLeaf {
                    p: get_f64(r)?,
                    volume: get_f64(r)?,
                })
            })
        })
        .collect()
}

fn put_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.write_u64::<LE>(payload.len() as u64).unwrap();
    out.extend_from_slice(payload);
}

impl ModelFile {
    pub fn new(model: SavedModel) -> Self {
        Self {
            model,
            config: None,
            seed: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write!(
            out,
            "{MAGIC}\nformat_version {FORMAT_VERSION}\nkind {}\n\n",
            self.model.kind()
        )
        .unwrap();
        put_section(&mut out, TAG_SCHEMA, &encode_schema(self.model.schema()));
        match &self.model {
            SavedModel::Nrgboost(m) => {
                put_section(&mut out, TAG_INITIAL, &encode_initial(&m.initial));
                put_section(&mut out, TAG_STAGES, &encode_stages(&m.stages));
            }
            SavedModel::Def(e) => put_section(&mut out, TAG_DEF, &encode_def(e.trees())),
        }
        if let Some(c) = &self.config {
            put_section(&mut out, TAG_CONFIG, c.as_bytes());
        }
        if let Some(s) = self.seed {
            put_section(&mut out, TAG_SEED, &s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header_end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| fmt_err("missing header"))?;
        let header =
            std::str::from_utf8(&bytes[..header_end]).map_err(|_| fmt_err("bad header"))?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(fmt_err("not a model file"));
        }
        let mut version = None;
        let mut kind = None;
        for line in lines {
            match line.split_once(' ') {
                Some(("format_version", v)) => version = v.parse::<u32>().ok(),
                Some(("kind", k)) => kind = Some(k.to_string()),
                _ => return Err(fmt_err(format!("unexpected header line `{line}`"))),
            }
        }
        if version != Some(FORMAT_VERSION) {
            return Err(fmt_err(format!("unsupported format version {version:?}")));
        }
        let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
        let mut rest = &bytes[header_end + 2..];
        while !rest.is_empty() {
            if rest.len() < 12 {
                return Err(fmt_err("truncated section header"));
            }
            let tag: [u8; 4] = rest[..4].try_into().unwrap();
            let len = u64::from_le_bytes(rest[4..12].try_into().unwrap()) as usize;
            if rest.len() < 12 + len {
                return Err(fmt_err("truncated section"));
            }
            sections.push((tag, &rest[12..12 + len]));
            rest = &rest[12 + len..];
        }
        let find = |tag: &[u8; 4]| sections.iter().find(|(t, _)| t == tag).map(|(_, p)| *p);
        let need = |tag: &[u8; 4]| {
            find(tag)
                .ok_or_else(|| fmt_err(format!("missing section {}", String::from_utf8_lossy(tag))))
        };
        let schema = decode_schema(need(TAG_SCHEMA)?)?;
        let d = schema.n_features();
        let model = match kind.as_deref() {
            Some("nrgboost") => {
                let initial = decode_initial(need(TAG_INITIAL)?)?;
                if initial.n_features() != d {
                    return Err(fmt_err("initial model does not match schema"));
                }
                let stages = decode_stages(need(TAG_STAGES)?, d)?;
                SavedModel::Nrgboost(EnergyModel::with_stages(schema, initial, stages))
            }
            Some("def") => {
                let trees = decode_def(need(TAG_DEF)?, d)?;
                SavedModel::Def(DefEnsemble::new(schema, trees)?)
            }
            other => return Err(fmt_err(format!("unknown model kind {other:?}"))),
        };
        let config = find(TAG_CONFIG)
            .map(|c| String::from_utf8(c.to_vec()).map_err(|_| fmt_err("config is not UTF-8")))
            .transpose()?;
        let seed = find(TAG_SEED)
            .map(|s| {
                s.try_into()
                    .map(u64::from_le_bytes)
                    .map_err(|_| fmt_err("bad seed section"))
            })
            .transpose()?;
        Ok(Self {
            model,
            config,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

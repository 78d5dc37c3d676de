//! Binary model container.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64 and
//! matrices are row-major.
//!
//! ```text
//! magic        b"HTEM"
//! version      u32
//! header       mode u8, partition u8, d u32, trees u32, seed u64, rng algorithm u32
//! meta         u64 length + UTF-8 JSON {"config": .., "meta": ..}
//! standardizer d × f64 means, d × f64 stds, u8 flag [, f64 mean, f64 std]
//! members      trees × member block
//! checksum     SHA-256 of every preceding byte
//! ```
//!
//! A member block is `u32 candidate`, then the partition payload
//! (tag 0: rotation, scales, translation, h̲₀, h̄₀, u64 cell count, keys as
//! i64; tag 1: rotation, u64 min_leaf, u64 node count, nodes in preorder as
//! `0 u64 cell` or `1 u32 dim f64 threshold`), then the local model payload
//! (tag 0: u64 count, values, f64 fallback, clip; tag 1: f64 λ₂, clip,
//! u64 n_train, f64 fallback, u64 cell count, cells as `0 f64 mean` or
//! `1 u64 n_j f64 γ support alpha`). A clip field is a u8 flag and an
//! optional f64.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Mode, PartitionKind, TrainConfig};
use crate::data::Standardizer;
use crate::ensemble::{EnsembleModel, Member, ModelMeta};
use crate::error::{HteError, Result};
use crate::local_models::{CellModel, ConstantModel, KernelCell, KernelCellModel};
use crate::partition::{AdaptiveTree, GridPartition, Partition, TreeNode};
use crate::rng::RNG_ALGORITHM_ID;
use crate::transform::HistogramTransform;

pub const MAGIC: &[u8; 4] = b"HTEM";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaBlock {
    config: TrainConfig,
    meta: ModelMeta,
}

fn mode_tag(m: Mode) -> u8 {
    match m {
        Mode::Nht => 0,
        Mode::Kht => 1,
    }
}

fn partition_tag(p: PartitionKind) -> u8 {
    match p {
        PartitionKind::Grid => 0,
        PartitionKind::Adaptive => 1,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.buf.write_u32::<LE>(v as u32).expect("vec write");
    }
    fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LE>(v).expect("vec write");
    }
    fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LE>(v).expect("vec write");
    }
    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
    fn matrix(&mut self, m: &Array2<f64>) {
        // `iter` walks in logical row-major order regardless of memory layout.
        self.f64s(m.iter().copied());
    }
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &EnsembleModel) -> Result<Vec<u8>> {
    let d = model.dim();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u8(mode_tag(model.config.mode));
    w.u8(partition_tag(model.config.partition));
    w.u32(d);
    w.u32(model.members.len());
    w.u64(model.config.seed);
    w.u32(RNG_ALGORITHM_ID as usize);

    let meta = serde_json::to_vec(&MetaBlock {
        config: model.config.clone(),
        meta: model.meta.clone(),
    })
    .map_err(|e| HteError::Format(e.to_string()))?;
    w.u64(meta.len() as u64);
    w.buf.extend_from_slice(&meta);

    let st = &model.standardizer;
    w.f64s(st.mean.iter().copied());
    w.f64s(st.std.iter().copied());
    match st.target {
        Some((m, s)) => {
            w.u8(1);
            w.f64(m);
            w.f64(s);
        }
        None => w.u8(0),
    }

    for member in &model.members {
        w.u32(member.candidate);
        write_partition(&mut w, &member.partition);
        write_model(&mut w, &member.model);
    }

    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);
    Ok(w.buf)
}

fn write_partition(w: &mut Writer, p: &Partition) {
    match p {
        Partition::Grid(g) => {
            w.u8(0);
            let h = g.transform();
            w.matrix(h.rotation());
            w.f64s(h.scales().iter().copied());
            w.f64s(h.translation().iter().copied());
            w.f64(h.h_lower());
            w.f64(h.h_upper());
            w.u64(g.n_cells() as u64);
            for key in g.keys() {
                for &k in key {
                    w.buf.write_i64::<LE>(k).expect("vec write");
                }
            }
        }
        Partition::Adaptive(t) => {
            w.u8(1);
            w.matrix(t.rotation());
            w.u64(t.min_leaf() as u64);
            w.u64(t.nodes().len() as u64);
            // Stored nodes are already in preorder.
            for node in t.nodes() {
                match *node {
                    TreeNode::Leaf { cell } => {
                        w.u8(0);
                        w.u64(cell as u64);
                    }
                    TreeNode::Split { dim, threshold, .. } => {
                        w.u8(1);
                        w.u32(dim);
                        w.f64(threshold);
                    }
                }
            }
        }
    }
}

fn write_model(w: &mut Writer, m: &CellModel) {
    match m {
        CellModel::Constant(c) => {
            w.u8(0);
            w.u64(c.values.len() as u64);
            w.f64s(c.values.iter().copied());
            w.f64(c.fallback);
            w.opt_f64(c.clip);
        }
        CellModel::Kernel(k) => {
            w.u8(1);
            w.f64(k.lambda2);
            w.opt_f64(k.clip);
            w.u64(k.n_train as u64);
            w.f64(k.fallback);
            w.u64(k.cells.len() as u64);
            for cell in &k.cells {
                match cell {
                    KernelCell::Mean(v) => {
                        w.u8(0);
                        w.f64(*v);
                    }
                    KernelCell::Kernel {
                        support,
                        alpha,
                        gamma,
                    } => {
                        w.u8(1);
                        w.u64(alpha.len() as u64);
                        w.f64(*gamma);
                        w.matrix(support);
                        w.f64s(alpha.iter().copied());
                    }
                }
            }
        }
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

fn truncated(e: std::io::Error) -> HteError {
    HteError::Format(format!("truncated model: {e}"))
}

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(truncated)
    }
    fn u32(&mut self) -> Result<usize> {
        self.cur
            .read_u32::<LE>()
            .map(|v| v as usize)
            .map_err(truncated)
    }
    fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(truncated)
    }
    /// Reads a length and checks it against the bytes left.
    fn len(&mut self, unit_bytes: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = self.cur.get_ref().len() as u64 - self.cur.position();
        if n.saturating_mul(unit_bytes.max(1) as u64) > left {
            return Err(HteError::Format(format!(
                "length {n} exceeds remaining data"
            )));
        }
        Ok(n as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(truncated)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn opt_f64(&mut self) -> Result<Option<f64>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.f64()?)),
            t => Err(HteError::Format(format!("bad option tag {t}"))),
        }
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = self.f64s(rows * cols)?;
        Array2::from_shape_vec((rows, cols), v).map_err(|e| HteError::Format(e.to_string()))
    }
}

/// Parses and verifies a serialized model.
pub fn from_bytes(bytes: &[u8]) -> Result<EnsembleModel> {
    if bytes.len() < MAGIC.len() + CHECKSUM_LEN || &bytes[..4] != MAGIC {
        return Err(HteError::Format(
            "not a histogram transform ensemble model".into(),
        ));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(HteError::Format("checksum mismatch".into()));
    }
    let mut r = Reader {
        cur: Cursor::new(&body[4..]),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(HteError::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let mode = r.u8()?;
    let partition = r.u8()?;
    let d = r.u32()?;
    let trees = r.u32()?;
    let seed = r.u64()?;
    let rng_id = r.u32()?;
    if rng_id != RNG_ALGORITHM_ID as usize {
        return Err(HteError::Format(format!("unknown rng algorithm {rng_id}")));
    }
    let meta_len = r.len(1)?;
    let mut meta_bytes = vec![0u8; meta_len];
    r.cur.read_exact(&mut meta_bytes).map_err(truncated)?;
    let MetaBlock { config, meta } = serde_json::from_slice(&meta_bytes)
        .map_err(|e| HteError::Format(format!("bad metadata: {e}")))?;
    if mode != mode_tag(config.mode)
        || partition != partition_tag(config.partition)
        || seed != config.seed
    {
        return Err(HteError::Format(
            "header disagrees with embedded config".into(),
        ));
    }

    let mean = r.f64s(d)?;
    let std = r.f64s(d)?;
    let target = match r.u8()? {
        0 => None,
        1 => Some((r.f64()?, r.f64()?)),
        t => return Err(HteError::Format(format!("bad target flag {t}"))),
    };
    let standardizer = Standardizer { mean, std, target };

    let members = (0..trees)
        .map(|_| {
            let candidate = r.u32()?;
            let partition = read_partition(&mut r, d)?;
            let model = read_model(&mut r, d)?;
            Ok(Member {
                partition,
                model,
                candidate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if (r.cur.position() as usize) != body.len() - 4 {
        return Err(HteError::Format("trailing bytes after last member".into()));
    }
    Ok(EnsembleModel {
        config,
        meta,
        standardizer,
        members,
    })
}

fn read_partition(r: &mut Reader<'_>, d: usize) -> Result<Partition> {
    match r.u8()? {
        0 => {
            let rotation = r.matrix(d, d)?;
            let scales = r.f64s(d)?;
            let translation = r.f64s(d)?;
            let h_lower = r.f64()?;
            let h_upper = r.f64()?;
            let transform =
                HistogramTransform::from_parts(rotation, scales, translation, h_lower, h_upper)?;
            let n_cells = r.len(8 * d)?;
            let keys = (0..n_cells)
                .map(|_| {
                    (0..d)
                        .map(|_| r.cur.read_i64::<LE>().map_err(truncated))
                        .collect()
                })
                .collect::<Result<Vec<Vec<i64>>>>()?;
            Ok(Partition::Grid(GridPartition::from_parts(transform, keys)?))
        }
        1 => {
            let rotation = r.matrix(d, d)?;
            let min_leaf = r.u64()? as usize;
            let n_nodes = r.len(9)?;
            let mut flat = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                flat.push(match r.u8()? {
                    0 => FlatNode::Leaf(r.u64()? as usize),
                    1 => FlatNode::Split(r.u32()?, r.f64()?),
                    t => return Err(HteError::Format(format!("bad node tag {t}"))),
                });
            }
            let nodes = relink_preorder(&flat)?;
            Ok(Partition::Adaptive(AdaptiveTree::from_parts(
                rotation, nodes, min_leaf,
            )?))
        }
        t => Err(HteError::Format(format!("bad partition tag {t}"))),
    }
}

enum FlatNode {
    Leaf(usize),
    Split(usize, f64),
}

/// Recovers child links from a preorder listing.
fn relink_preorder(flat: &[FlatNode]) -> Result<Vec<TreeNode>> {
    fn walk(flat: &[FlatNode], at: usize, out: &mut Vec<TreeNode>) -> Result<usize> {
        let node = flat
            .get(at)
            .ok_or_else(|| HteError::Format("tree listing ends early".into()))?;
        match *node {
            FlatNode::Leaf(cell) => {
                out[at] = TreeNode::Leaf { cell };
                Ok(at + 1)
            }
            FlatNode::Split(dim, threshold) => {
                let left = at + 1;
                let right = walk(flat, left, out)?;
                let end = walk(flat, right, out)?;
                out[at] = TreeNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                };
                Ok(end)
            }
        }
    }
    let mut out = vec![TreeNode::Leaf { cell: 0 }; flat.len()];
    let end = walk(flat, 0, &mut out)?;
    if end != flat.len() {
        return Err(HteError::Format("extra nodes after tree".into()));
    }
    Ok(out)
}

fn read_model(r: &mut Reader<'_>, d: usize) -> Result<CellModel> {
    match r.u8()? {
        0 => {
            let n = r.len(8)?;
            let values = r.f64s(n)?;
            let fallback = r.f64()?;
            let clip = r.opt_f64()?;
            Ok(CellModel::Constant(ConstantModel {
                values,
                fallback,
                clip,
            }))
        }
        1 => {
            let lambda2 = r.f64()?;
            let clip = r.opt_f64()?;
            let n_train = r.u64()? as usize;
            let fallback = r.f64()?;
            let n_cells = r.len(9)?;
            let cells = (0..n_cells)
                .map(|_| match r.u8()? {
                    0 => Ok(KernelCell::Mean(r.f64()?)),
                    1 => {
                        let n_j = r.len(8 * (d + 1))?;
                        let gamma = r.f64()?;
                        let support = r.matrix(n_j, d)?;
                        let alpha = r.f64s(n_j)?;
                        Ok(KernelCell::Kernel {
                            support,
                            alpha,
                            gamma,
                        })
                    }
                    t => Err(HteError::Format(format!("bad kernel cell tag {t}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CellModel::Kernel(KernelCellModel {
                cells,
                lambda2,
                clip,
                n_train,
                fallback,
            }))
        }
        t => Err(HteError::Format(format!("bad model tag {t}"))),
    }
}

pub fn save(model: &EnsembleModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EnsembleModel> {
    from_bytes(&fs::read(path)?)
}

//! Binary model files: an 8-byte magic, a version, the training metadata,
//! then a little-endian body for the model family.

use ndarray::{Array1, Array2};

use crate::forest::{Forest, Node, Tree};
use crate::mlp::{Mlp, Network};
use crate::svm::{Machine, Svm};
use crate::{ClassifierKind, LearnError, ModelBody, Result, TrainedModel};

const MAGIC: &[u8; 8] = b"RTASMODL";
const VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: impl ExactSizeIterator<Item = f64>) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(x);
        }
    }
    fn f32s(&mut self, v: impl ExactSizeIterator<Item = f32>) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn bad(msg: impl Into<String>) -> LearnError {
    LearnError::Format(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(item_bytes) > self.buf.len() - self.pos {
            return Err(bad(format!("length {n} at byte {} exceeds file", self.pos - 8)));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len(4)?;
        (0..n)
            .map(|_| Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap())))
            .collect()
    }
    fn matrix(&mut self) -> Result<Array2<f32>> {
        let (r, c) = (self.u32()? as usize, self.u32()? as usize);
        let v = self.f32s()?;
        Array2::from_shape_vec((r, c), v).map_err(|_| bad("matrix shape does not match data"))
    }
}

pub(crate) fn encode(m: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u8(m.kind.tag());
    w.u64(m.seed);
    w.u64(m.n_features as u64);
    w.u64(m.iterations);
    w.f64(m.final_loss);
    match &m.body {
        ModelBody::Mlp(net) => {
            w.f64s(net.mean.iter().copied());
            w.f64s(net.scale.iter().copied());
            let nn = net.network();
            for l in 0..3 {
                w.u32(nn.w[l].nrows() as u32);
                w.u32(nn.w[l].ncols() as u32);
                w.f32s(nn.w[l].iter().copied());
                w.f32s(nn.b[l].iter().copied());
            }
        }
        ModelBody::Svm(s) => {
            w.f64(s.gamma);
            w.u64(s.n_features as u64);
            w.f64s(s.sv.iter().copied());
            w.u64(s.machines.len() as u64);
            for mach in &s.machines {
                w.u8(mach.class);
                w.f64(mach.rho);
                w.u64(mach.coef.len() as u64);
                for &(slot, a) in &mach.coef {
                    w.u32(slot);
                    w.f64(a);
                }
            }
        }
        ModelBody::Forest(f) => {
            w.u64(f.trees.len() as u64);
            for t in &f.trees {
                w.u64(t.nodes.len() as u64);
                for n in &t.nodes {
                    match *n {
                        Node::Leaf(c) => {
                            w.u8(0);
                            w.u8(c);
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(1);
                            w.u32(feature);
                            w.f64(threshold);
                            w.u32(left);
                            w.u32(right);
                        }
                    }
                }
            }
        }
    }
    w.0
}

pub(crate) fn decode(buf: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8).ok() != Some(&MAGIC[..]) {
        return Err(bad("not a model file (bad magic at byte 0)"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    let kind = ClassifierKind::from_tag(tag).ok_or_else(|| bad(format!("unknown kind tag {tag}")))?;
    let seed = r.u64()?;
    let n_features = r.u64()? as usize;
    let iterations = r.u64()?;
    let final_loss = r.f64()?;
    let body = match kind {
        ClassifierKind::Mlp500x100 | ClassifierKind::MlpNHalf => {
            let mean = r.f64s()?;
            let scale = r.f64s()?;
            let mut ws = Vec::new();
            let mut bs = Vec::new();
            for _ in 0..3 {
                ws.push(r.matrix()?);
                bs.push(Array1::from(r.f32s()?));
            }
            let chain_ok = mean.len() == n_features
                && scale.len() == n_features
                && ws[0].nrows() == n_features
                && ws[1].nrows() == ws[0].ncols()
                && ws[2].nrows() == ws[1].ncols()
                && (0..3).all(|l| bs[l].len() == ws[l].ncols());
            if !chain_ok {
                return Err(bad("layer shapes do not chain"));
            }
            ModelBody::Mlp(Mlp {
                mean,
                scale,
                net: Network {
                    w: ws.try_into().unwrap(),
                    b: bs.try_into().unwrap(),
                },
            })
        }
        ClassifierKind::SvmRbf => {
            let gamma = r.f64()?;
            let nf = r.u64()? as usize;
            let sv = r.f64s()?;
            if nf != n_features || (nf > 0 && sv.len() % nf != 0) {
                return Err(bad("support vector table has the wrong width"));
            }
            let n_sv = if nf == 0 { 0 } else { sv.len() / nf };
            let count = r.len(17)?;
            let mut machines = Vec::with_capacity(count);
            for _ in 0..count {
                let class = r.u8()?;
                let rho = r.f64()?;
                let k = r.len(12)?;
                let coef = (0..k)
                    .map(|_| {
                        let slot = r.u32()?;
                        if slot as usize >= n_sv {
                            return Err(bad(format!("support vector slot {slot} out of range")));
                        }
                        Ok((slot, r.f64()?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                machines.push(Machine { class, coef, rho });
            }
            if machines.is_empty() {
                return Err(bad("svm without machines"));
            }
            ModelBody::Svm(Svm {
                gamma,
                n_features: nf,
                sv,
                machines,
            })
        }
        ClassifierKind::RandomForest => {
            let count = r.len(8)?;
            let mut trees = Vec::with_capacity(count);
            for _ in 0..count {
                let len = r.len(2)?;
                let mut nodes = Vec::with_capacity(len);
                for _ in 0..len {
                    nodes.push(match r.u8()? {
                        0 => Node::Leaf(r.u8()?),
                        1 => Node::Split {
                            feature: r.u32()?,
                            threshold: r.f64()?,
                            left: r.u32()?,
                            right: r.u32()?,
                        },
                        t => return Err(bad(format!("unknown node tag {t}"))),
                    });
                }
                let ok = !nodes.is_empty()
                    && nodes.iter().enumerate().all(|(i, n)| match *n {
                        Node::Leaf(_) => true,
                        Node::Split {
                            feature,
                            left,
                            right,
                            ..
                        } => {
                            // Children follow their parent, so traversal terminates.
                            (feature as usize) < n_features
                                && (i + 1..len).contains(&(left as usize))
                                && (i + 1..len).contains(&(right as usize))
                        }
                    });
                if !ok {
                    return Err(bad("tree references out of range"));
                }
                trees.push(Tree { nodes });
            }
            if trees.is_empty() {
                return Err(bad("forest without trees"));
            }
            ModelBody::Forest(Forest { trees })
        }
    };
    if r.pos != buf.len() {
        return Err(bad(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(TrainedModel {
        kind,
        seed,
        n_features,
        iterations,
        final_loss,
        body,
    })
}

//! Graph Q-network: embedding, shared message-passing core, linear decoders.
//!
//! Edge outputs are the Q-values of the edge actions; the first global output
//! is the Q-value of noop. A batch of graphs is processed as one disjoint
//! union, with every aggregation being a mean over the relevant rows.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{self, StateGraph};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub node_in: usize,
    pub edge_in: usize,
    pub global_in: usize,
    pub hidden: usize,
    pub message_passes: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dueling: bool,
    pub global_out: usize,
    /// Self-attention heads on top of the node update; 0 disables it.
    #[serde(default)]
    pub attention_heads: usize,
}

impl QNetConfig {
    pub fn cvrp() -> Self {
        QNetConfig {
            node_in: graph::CVRP_NODE_WIDTH,
            edge_in: graph::CVRP_EDGE_WIDTH,
            global_in: graph::GLOBAL_WIDTH,
            hidden: 256,
            message_passes: 2,
            encoder_layers: 3,
            decoder_layers: 1,
            dueling: true,
            global_out: 2,
            attention_heads: 0,
        }
    }

    pub fn pmsp(classes: usize) -> Self {
        QNetConfig {
            node_in: graph::pmsp_node_width(classes),
            edge_in: graph::PMSP_EDGE_WIDTH,
            global_in: graph::GLOBAL_WIDTH,
            hidden: 32,
            message_passes: 4,
            encoder_layers: 3,
            decoder_layers: 1,
            dueling: false,
            global_out: 1,
            attention_heads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.node_in,
            self.edge_in,
            self.global_in,
            self.hidden,
            self.encoder_layers,
            self.decoder_layers,
            self.global_out,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.attention_heads > 0 && self.hidden % self.attention_heads != 0 {
            return Err(Error::Config("hidden size must be divisible by the head count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<Linear>,
    /// Layer norm gain and bias applied to the output.
    norm: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    norm: (usize, usize),
}

#[derive(Debug, Clone)]
struct Layout {
    embed_e: Mlp,
    embed_v: Mlp,
    embed_w: Mlp,
    core_e: Mlp,
    core_v: Mlp,
    core_w: Mlp,
    attention: Option<Attention>,
    dec_e: Mlp,
    dec_w: Mlp,
    dec_value: Option<Mlp>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

struct Builder {
    infos: Vec<TensorInfo>,
}

impl Builder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.infos.push(TensorInfo { name, rows, cols });
        self.infos.len() - 1
    }

    fn linear(&mut self, name: &str, input: usize, output: usize) -> Linear {
        Linear {
            w: self.tensor(format!("{name}.w"), input, output),
            b: self.tensor(format!("{name}.b"), 1, output),
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> (usize, usize) {
        (
            self.tensor(format!("{name}.gain"), 1, width),
            self.tensor(format!("{name}.bias"), 1, width),
        )
    }

    fn mlp(&mut self, name: &str, dims: &[usize], norm: bool) -> Mlp {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| self.linear(&format!("{name}.{i}"), d[0], d[1]))
            .collect();
        let out = *dims.last().expect("at least one layer");
        Mlp {
            layers,
            norm: norm.then(|| self.norm(&format!("{name}.ln"), out)),
        }
    }
}

fn layout(c: &QNetConfig) -> (Layout, Vec<TensorInfo>) {
    let h = c.hidden;
    let mut b = Builder { infos: Vec::new() };
    let mut core = vec![3 * h];
    core.extend(std::iter::repeat_n(h, c.encoder_layers));
    let dec = vec![h; c.decoder_layers];
    let dec_out = |out: usize| {
        let mut d = dec.clone();
        d.push(out);
        d
    };
    let l = Layout {
        embed_e: b.mlp("embed.edge", &[c.edge_in, h], true),
        embed_v: b.mlp("embed.node", &[c.node_in, h], true),
        embed_w: b.mlp("embed.global", &[c.global_in, h], true),
        core_e: b.mlp("core.edge", &core, true),
        core_v: b.mlp("core.node", &core, true),
        core_w: b.mlp("core.global", &core, true),
        attention: (c.attention_heads > 0).then(|| Attention {
            q: b.linear("attn.q", h, h),
            k: b.linear("attn.k", h, h),
            v: b.linear("attn.v", h, h),
            o: b.linear("attn.o", h, h),
            norm: b.norm("attn.ln", h),
        }),
        dec_e: b.mlp("decode.edge", &dec_out(1), false),
        dec_w: b.mlp("decode.global", &dec_out(c.global_out), false),
        dec_value: c.dueling.then(|| b.mlp("decode.value", &dec_out(1), false)),
    };
    (l, b.infos)
}

#[derive(Debug, Clone)]
pub struct QNet {
    config: QNetConfig,
    layout: Layout,
    infos: Vec<TensorInfo>,
    params: Vec<Mat>,
}

/// Flattened disjoint union of a batch of graphs.
struct Batch {
    nodes: Mat,
    edges: Mat,
    globals: Mat,
    num_graphs: usize,
    /// Row pairs (src, dst) per edge for endpoint means.
    endpoint_rows: Arc<Vec<usize>>,
    endpoint_segs: Arc<Vec<usize>>,
    incident_rows: Arc<Vec<usize>>,
    incident_segs: Arc<Vec<usize>>,
    edge_graph: Arc<Vec<usize>>,
    node_graph: Arc<Vec<usize>>,
    edge_rows: Arc<Vec<usize>>,
    node_rows: Arc<Vec<usize>>,
    /// Output row of every action, per graph.
    action_rows: Vec<Vec<usize>>,
    /// Output rows of unmasked actions and their graph ids.
    open_rows: Arc<Vec<usize>>,
    open_segs: Arc<Vec<usize>>,
    /// Graph id of every output row.
    out_graph: Arc<Vec<usize>>,
}

fn to_mat(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
    Mat::from_shape_vec((rows, cols), data).expect("shape matches data")
}

impl Batch {
    fn new(config: &QNetConfig, graphs: &[&StateGraph]) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut globals = Vec::new();
        let mut endpoint_rows = Vec::new();
        let mut endpoint_segs = Vec::new();
        let mut incident_rows = Vec::new();
        let mut incident_segs = Vec::new();
        let mut edge_graph = Vec::new();
        let mut node_graph = Vec::new();
        let total_edges: usize = graphs.iter().map(|g| g.num_edges()).sum();
        let mut action_rows = Vec::with_capacity(graphs.len());
        let mut open_rows = Vec::new();
        let mut open_segs = Vec::new();
        let (mut v0, mut e0) = (0, 0);
        for (gi, g) in graphs.iter().enumerate() {
            if g.node_width != config.node_in || g.edge_width != config.edge_in || g.global.len() != config.global_in {
                return Err(Error::Config(format!(
                    "graph widths ({}, {}, {}) do not match network inputs ({}, {}, {})",
                    g.node_width,
                    g.edge_width,
                    g.global.len(),
                    config.node_in,
                    config.edge_in,
                    config.global_in
                )));
            }
            if g.num_edges() > 0 && g.edge_features.len() != g.num_edges() * config.edge_in {
                return Err(Error::Config("edge feature count does not match edge list".into()));
            }
            nodes.extend(g.scaled_nodes());
            edges.extend(g.scaled_edges());
            globals.extend_from_slice(&g.global);
            node_graph.extend(std::iter::repeat_n(gi, g.num_nodes));
            let mut rows = Vec::with_capacity(g.num_edges() + 1);
            for (k, &(s, t)) in g.edges.iter().enumerate() {
                let e = e0 + k;
                endpoint_rows.extend([v0 + s, v0 + t]);
                endpoint_segs.extend([e, e]);
                incident_rows.extend([e, e]);
                incident_segs.extend([v0 + s, v0 + t]);
                edge_graph.push(gi);
                rows.push(e);
            }
            rows.push(total_edges + gi);
            for (k, &r) in rows.iter().enumerate() {
                if g.mask[k] {
                    open_rows.push(r);
                    open_segs.push(gi);
                }
            }
            action_rows.push(rows);
            v0 += g.num_nodes;
            e0 += g.num_edges();
        }
        let mut out_graph = edge_graph.clone();
        out_graph.extend(0..graphs.len());
        Ok(Batch {
            nodes: to_mat(v0, config.node_in, nodes),
            edges: to_mat(e0, config.edge_in, edges),
            globals: to_mat(graphs.len(), config.global_in, globals),
            num_graphs: graphs.len(),
            endpoint_rows: Arc::new(endpoint_rows),
            endpoint_segs: Arc::new(endpoint_segs),
            incident_rows: Arc::new(incident_rows),
            incident_segs: Arc::new(incident_segs),
            edge_rows: Arc::new((0..e0).collect()),
            node_rows: Arc::new((0..v0).collect()),
            edge_graph: Arc::new(edge_graph),
            node_graph: Arc::new(node_graph),
            action_rows,
            open_rows: Arc::new(open_rows),
            open_segs: Arc::new(open_segs),
            out_graph: Arc::new(out_graph),
        })
    }
}

/// Result of one forward pass, kept for a single backward pass.
pub struct ForwardCache<'a> {
    tape: Tape<'a>,
    out: Var,
    action_rows: Vec<Vec<usize>>,
    q: Vec<Vec<f64>>,
    consumed: bool,
}

impl<'a> ForwardCache<'a> {
    /// Q-values per graph, aligned with each graph's action map.
    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn into_q(self) -> Vec<Vec<f64>> {
        self.q
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// loss gradients with respect to the Q-values returned by the forward.
    pub fn backward(&mut self, q_grads: &[Vec<f64>]) -> Result<Vec<Mat>> {
        if self.consumed {
            return Err(Error::CacheReused);
        }
        if q_grads.len() != self.action_rows.len()
            || q_grads.iter().zip(&self.action_rows).any(|(g, r)| g.len() != r.len())
        {
            return Err(Error::InvalidArgument("gradient shape differs from the forward output".into()));
        }
        self.consumed = true;
        let mut seed = Mat::zeros(self.tape.value(self.out).raw_dim());
        for (grads, rows) in q_grads.iter().zip(&self.action_rows) {
            for (&g, &r) in grads.iter().zip(rows) {
                seed[[r, 0]] += g;
            }
        }
        Ok(self.tape.backward(self.out, seed))
    }
}

impl QNet {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`, norms at identity.
    pub fn new(config: QNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, infos) = layout(&config);
        let mut rng = rng::stream(seed, streams::INIT);
        let params = infos
            .iter()
            .enumerate()
            .map(|(i, info)| {
                if info.name.ends_with(".gain") {
                    Mat::ones((info.rows, info.cols))
                } else if info.name.ends_with(".bias") {
                    Mat::zeros((info.rows, info.cols))
                } else {
                    // A bias directly follows its weight matrix.
                    let fan_in = if info.name.ends_with(".b") { infos[i - 1].rows } else { info.rows };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Mat::from_shape_fn((info.rows, info.cols), |_| rng.random_range(-bound..bound))
                }
            })
            .collect();
        Ok(QNet {
            config,
            layout,
            infos,
            params,
        })
    }

    pub fn config(&self) -> &QNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Mat> {
        self.infos.iter().position(|i| i.name == name).map(|i| &self.params[i])
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.infos.iter().map(|i| i.name.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn forward<'a>(&'a self, graphs: &[&StateGraph]) -> Result<ForwardCache<'a>> {
        let batch = Batch::new(&self.config, graphs)?;
        let mut t = Tape::new(&self.params);
        let l = &self.layout;
        let x_e = t.constant(batch.edges.clone());
        let x_v = t.constant(batch.nodes.clone());
        let x_w = t.constant(batch.globals.clone());
        let mut e = self.mlp(&mut t, &l.embed_e, x_e, None);
        let mut v = self.mlp(&mut t, &l.embed_v, x_v, None);
        let mut w = self.mlp(&mut t, &l.embed_w, x_w, None);
        let b = &batch;
        for _ in 0..self.config.message_passes {
            let ends = t.segment_mean(v, b.endpoint_rows.clone(), b.endpoint_segs.clone(), b.edge_rows.len());
            let w_e = t.gather(w, b.edge_graph.clone());
            let input = t.concat_cols(&[e, ends, w_e]);
            e = self.mlp(&mut t, &l.core_e, input, Some(e));

            let inc = t.segment_mean(e, b.incident_rows.clone(), b.incident_segs.clone(), b.node_rows.len());
            let w_v = t.gather(w, b.node_graph.clone());
            let input = t.concat_cols(&[v, inc, w_v]);
            v = self.mlp(&mut t, &l.core_v, input, Some(v));
            if let Some(att) = &l.attention {
                v = self.attention(&mut t, att, v, b.node_graph.clone());
            }

            let e_mean = t.segment_mean(e, b.edge_rows.clone(), b.edge_graph.clone(), b.num_graphs);
            let v_mean = t.segment_mean(v, b.node_rows.clone(), b.node_graph.clone(), b.num_graphs);
            let input = t.concat_cols(&[w, e_mean, v_mean]);
            w = self.mlp(&mut t, &l.core_w, input, Some(w));
        }
        let q_e = self.mlp(&mut t, &l.dec_e, e, None);
        let g = self.mlp(&mut t, &l.dec_w, w, None);
        let noop = t.slice_cols(g, 0, 1);
        let mut out = t.concat_rows(&[q_e, noop]);
        if let Some(dec_value) = &l.dec_value {
            let value = self.mlp(&mut t, dec_value, w, None);
            let mean_adv = t.segment_mean(out, b.open_rows.clone(), b.open_segs.clone(), b.num_graphs);
            let shift = t.sub(value, mean_adv);
            let shift = t.gather(shift, b.out_graph.clone());
            out = t.add(out, shift);
        }
        let values = t.value(out);
        let q = batch
            .action_rows
            .iter()
            .map(|rows| rows.iter().map(|&r| values[[r, 0]]).collect())
            .collect();
        Ok(ForwardCache {
            tape: t,
            out,
            action_rows: batch.action_rows,
            q,
            consumed: false,
        })
    }

    /// Q-values of one graph, aligned with its action map.
    pub fn q_values(&self, graph: &StateGraph) -> Result<Vec<f64>> {
        Ok(self.forward(&[graph])?.into_q().pop().expect("one graph"))
    }

    /// Linear layers with leaky-ReLU between them; an optional residual is
    /// added before the output norm.
    fn mlp(&self, t: &mut Tape<'_>, mlp: &Mlp, input: Var, residual: Option<Var>) -> Var {
        let mut x = input;
        let n = mlp.layers.len();
        for (i, lin) in mlp.layers.iter().enumerate() {
            x = linear(t, *lin, x);
            if i + 1 < n || mlp.norm.is_some() {
                x = t.leaky_relu(x);
            }
        }
        if let Some(r) = residual {
            x = t.add(r, x);
        }
        if let Some((gain, bias)) = mlp.norm {
            let gain = t.param(gain);
            let bias = t.param(bias);
            x = t.layer_norm(x, gain, bias);
        }
        x
    }

    fn attention(&self, t: &mut Tape<'_>, att: &Attention, v: Var, groups: Arc<Vec<usize>>) -> Var {
        let heads = self.config.attention_heads;
        let dh = self.config.hidden / heads;
        let q = linear(t, att.q, v);
        let k = linear(t, att.k, v);
        let val = linear(t, att.v, v);
        let mut outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (lo, hi) = (hd * dh, (hd + 1) * dh);
            let qh = t.slice_cols(q, lo, hi);
            let kh = t.slice_cols(k, lo, hi);
            let vh = t.slice_cols(val, lo, hi);
            let scores = t.matmul_nt(qh, kh);
            let scores = t.scale(scores, 1.0 / (dh as f64).sqrt());
            let p = t.group_softmax(scores, groups.clone());
            outs.push(t.matmul(p, vh));
        }
        let cat = t.concat_cols(&outs);
        let o = linear(t, att.o, cat);
        let sum = t.add(v, o);
        let gain = t.param(att.norm.0);
        let bias = t.param(att.norm.1);
        t.layer_norm(sum, gain, bias)
    }

    const MAGIC: &'static [u8; 8] = b"CSQNET\0\0";
    const VERSION: u32 = 1;

    /// Binary checkpoint: 8-byte magic, `u32` version, `u32` header length,
    /// JSON header (config and tensor shapes), then every parameter as
    /// little-endian `f64`, row-major, in header order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            config: self.config,
            tensors: self.infos.clone(),
        })?;
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for p in &self.params {
            for v in p.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Parse("not a Q-network checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != Self::VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut net = QNet::new(header.config, 0)?;
        if net.infos != header.tensors {
            return Err(Error::Parse("checkpoint tensor layout does not match its config".into()));
        }
        let mut buf = [0u8; 8];
        for p in net.params.iter_mut() {
            for v in p.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        if net.params.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Parse("checkpoint contains non-finite values".into()));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: QNetConfig,
    tensors: Vec<TensorInfo>,
}

fn linear(t: &mut Tape<'_>, lin: Linear, x: Var) -> Var {
    let w = t.param(lin.w);
    let b = t.param(lin.b);
    let y = t.matmul(x, w);
    t.add_row(y, b)
}

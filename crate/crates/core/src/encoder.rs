//! Distance-graph message passing over the generation context (pocket
//! atoms plus the ligand atoms placed so far).
//!
//! Layer update for atom `k`:
//!
//! ```text
//! h_k' = h_k + sum_{u in N(k)} gate_u * h_u ⊙ MLP_l(rbf(d_uk))
//! ```
//!
//! `MLP_l` is `W2 · tanh(W1 · x + b1) + b2`. With B-factor gating on,
//! `gate_u = 1 + g_l * w_u` for protein neighbours (`w_u` the normalized
//! B-factor); otherwise no gate is applied at all.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{Atom, Pocket};
use crate::error::{Error, Result};
use crate::geometry::{rbf_expand, RbfBank, Vec3};
use crate::params::ParamSet;

pub const DEFAULT_GRAPH_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Protein,
    Ligand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextAtom {
    pub element: usize,
    pub origin: Origin,
    pub position: Vec3,
    /// Normalized B-factor in [0, 1]; zero for ligand atoms.
    pub bweight: f64,
}

/// Pocket atoms first, then placed ligand atoms in placement order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    pub atoms: Vec<ContextAtom>,
}

impl Context {
    /// `bweights` are the normalized pocket B-factors (see
    /// [`crate::pdb::normalize_bfactors`]).
    pub fn new(pocket: &Pocket, bweights: &[f64], placed: &[Atom]) -> Result<Self> {
        if bweights.len() != pocket.len() {
            return Err(Error::Size {
                expected: pocket.len(),
                found: bweights.len(),
            });
        }
        let mut atoms: Vec<ContextAtom> = pocket
            .atoms
            .iter()
            .zip(bweights)
            .map(|(a, &w)| ContextAtom {
                element: a.element,
                origin: Origin::Protein,
                position: a.position,
                bweight: w,
            })
            .collect();
        atoms.extend(placed.iter().map(|a| ContextAtom {
            element: a.element,
            origin: Origin::Ligand,
            position: a.position,
            bweight: 0.0,
        }));
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Undirected radius graph; each edge `(u, k)` with `u < k` is stored once
/// and used in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGraph {
    pub node_kinds: Vec<(usize, Origin)>,
    pub positions: Vec<Vec3>,
    pub edges: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl ContextGraph {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Neighbour lists in both directions.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(u, k) in &self.edges {
            out[u].push(k);
            out[k].push(u);
        }
        out
    }
}

pub fn build_graph(context: &Context, cutoff: f64) -> ContextGraph {
    let positions: Vec<Vec3> = context.atoms.iter().map(|a| a.position).collect();
    let mut edges = Vec::new();
    let mut distances = Vec::new();
    for u in 0..positions.len() {
        for k in (u + 1)..positions.len() {
            let d = (positions[u] - positions[k]).norm();
            if d <= cutoff {
                edges.push((u, k));
                distances.push(d);
            }
        }
    }
    ContextGraph {
        node_kinds: context
            .atoms
            .iter()
            .map(|a| (a.element, a.origin))
            .collect(),
        positions,
        edges,
        distances,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding width H.
    pub width: usize,
    /// Hidden width of each edge MLP.
    pub hidden: usize,
    pub layers: usize,
    pub rbf: RbfBank,
    pub cutoff: f64,
    pub bfactor_gating: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            width: 32,
            hidden: 64,
            layers: 3,
            rbf: RbfBank::default(),
            cutoff: DEFAULT_GRAPH_CUTOFF,
            bfactor_gating: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerOffsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    gate: usize,
}

/// Per-atom embeddings, row-major `n x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub width: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn zeros(n: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.width..(k + 1) * self.width]
    }
}

/// A context reduced to what the encoder reads: table rows, gates and
/// RBF features per edge. Building it once lets training reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedContext {
    pub table_rows: Vec<usize>,
    pub protein: Vec<bool>,
    pub bweights: Vec<f64>,
    pub graph: ContextGraph,
    /// Row-major `edges x rbf`.
    pub rbf: Vec<f64>,
}

impl PreparedContext {
    pub fn len(&self) -> usize {
        self.table_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table_rows.is_empty()
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTape {
    /// h before each layer, plus the final output (`layers + 1` entries).
    hs: Vec<Embeddings>,
    /// tanh activations per layer, `edges x hidden`.
    acts: Vec<Vec<f64>>,
    /// Edge messages per layer, `edges x width`.
    msgs: Vec<Vec<f64>>,
}

impl EncoderTape {
    pub fn output(&self) -> &Embeddings {
        self.hs.last().expect("tape has at least the input")
    }
}

/// Parameter layout of the encoder inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    vocab_size: usize,
    table: usize,
    layers: Vec<LayerOffsets>,
}

impl Encoder {
    /// Registers `enc.*` sections in `params`.
    pub fn register(
        params: &mut ParamSet,
        config: EncoderConfig,
        vocab_size: usize,
    ) -> Result<Self> {
        if config.layers < 1 || config.width < 1 || config.hidden < 1 {
            return Err(Error::Config(
                "encoder needs at least one layer and non-zero widths".into(),
            ));
        }
        if config.cutoff.is_nan() || config.cutoff <= 0.0 {
            return Err(Error::Config("graph cutoff must be positive".into()));
        }
        let (h, hid, r) = (config.width, config.hidden, config.rbf.len());
        let table = params.add("enc.table", &[vocab_size * 2, h]);
        let layers = (0..config.layers)
            .map(|l| LayerOffsets {
                w1: params.add(format!("enc.layer{l}.w1"), &[hid, r]),
                b1: params.add(format!("enc.layer{l}.b1"), &[hid]),
                w2: params.add(format!("enc.layer{l}.w2"), &[h, hid]),
                b2: params.add(format!("enc.layer{l}.b2"), &[h]),
                gate: params.add(format!("enc.layer{l}.gate"), &[1]),
            })
            .collect();
        Ok(Self {
            config,
            vocab_size,
            table,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    /// Table and first MLP layers uniform in [-scale, scale]; output
    /// layers and gates zero.
    pub fn init<R: Rng + ?Sized>(&self, values: &mut [f64], rng: &mut R, scale: f64) {
        let (h, hid, r) = (self.config.width, self.config.hidden, self.config.rbf.len());
        let mut fill = |offset: usize, len: usize, rng: &mut R| {
            for v in &mut values[offset..offset + len] {
                *v = rng.random_range(-scale..=scale);
            }
        };
        fill(self.table, self.vocab_size * 2 * h, rng);
        for lo in &self.layers {
            fill(lo.w1, hid * r, rng);
            fill(lo.b1, hid, rng);
        }
        for lo in &self.layers {
            values[lo.w2..lo.w2 + h * hid].fill(0.0);
            values[lo.b2..lo.b2 + h].fill(0.0);
            values[lo.gate] = 0.0;
        }
    }

    pub fn gate_index(&self, layer: usize) -> usize {
        self.layers[layer].gate
    }

    /// Offsets of every output-layer weight and bias (`w2`, `b2`).
    pub fn output_layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let (h, hid) = (self.config.width, self.config.hidden);
        self.layers
            .iter()
            .flat_map(|lo| [lo.w2..lo.w2 + h * hid, lo.b2..lo.b2 + h])
            .collect()
    }

    pub fn prepare(&self, context: &Context) -> Result<PreparedContext> {
        if context.is_empty() {
            return Err(Error::Input("context has no atoms".into()));
        }
        let mut table_rows = Vec::with_capacity(context.len());
        for a in &context.atoms {
            if a.element >= self.vocab_size {
                return Err(Error::Vocabulary(format!(
                    "element index {} outside vocabulary of {}",
                    a.element, self.vocab_size
                )));
            }
            let origin = match a.origin {
                Origin::Protein => 0,
                Origin::Ligand => 1,
            };
            table_rows.push(a.element * 2 + origin);
        }
        let graph = build_graph(context, self.config.cutoff);
        let rbf = graph
            .distances
            .iter()
            .flat_map(|&d| rbf_expand(d, &self.config.rbf))
            .collect();
        Ok(PreparedContext {
            table_rows,
            protein: context
                .atoms
                .iter()
                .map(|a| a.origin == Origin::Protein)
                .collect(),
            bweights: context.atoms.iter().map(|a| a.bweight).collect(),
            graph,
            rbf,
        })
    }

    pub fn initial_embeddings(&self, values: &[f64], prep: &PreparedContext) -> Embeddings {
        let h = self.config.width;
        let mut out = Embeddings::zeros(prep.len(), h);
        for (k, &row) in prep.table_rows.iter().enumerate() {
            let src = &values[self.table + row * h..self.table + (row + 1) * h];
            out.row_mut(k).copy_from_slice(src);
        }
        out
    }

    fn gate(&self, values: &[f64], layer: usize, prep: &PreparedContext, u: usize) -> Option<f64> {
        if self.config.bfactor_gating && prep.protein[u] {
            Some(1.0 + values[self.layers[layer].gate] * prep.bweights[u])
        } else {
            None
        }
    }

    /// Edge MLP of `layer` on one RBF feature row; writes activations and
    /// message.
    fn edge_mlp(
        &self,
        values: &[f64],
        layer: usize,
        rbf: &[f64],
        act: &mut [f64],
        msg: &mut [f64],
    ) {
        let lo = self.layers[layer];
        let (h, hid, r) = (self.config.width, self.config.hidden, self.config.rbf.len());
        for (j, a) in act.iter_mut().enumerate() {
            let w = &values[lo.w1 + j * r..lo.w1 + (j + 1) * r];
            let pre = values[lo.b1 + j] + w.iter().zip(rbf).map(|(w, x)| w * x).sum::<f64>();
            *a = pre.tanh();
        }
        for (d, m) in msg.iter_mut().enumerate() {
            let w = &values[lo.w2 + d * hid..lo.w2 + (d + 1) * hid];
            *m = values[lo.b2 + d] + w.iter().zip(act.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
        debug_assert_eq!(msg.len(), h);
    }

    fn layer_forward(
        &self,
        values: &[f64],
        layer: usize,
        h: &Embeddings,
        prep: &PreparedContext,
        mut tape: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
    ) -> Embeddings {
        let (width, hid, r) = (self.config.width, self.config.hidden, self.config.rbf.len());
        let mut out = h.clone();
        let mut act = vec![0.0; hid];
        let mut msg = vec![0.0; width];
        for (e, &(u, k)) in prep.graph.edges.iter().enumerate() {
            self.edge_mlp(
                values,
                layer,
                &prep.rbf[e * r..(e + 1) * r],
                &mut act,
                &mut msg,
            );
            for (src, dst) in [(u, k), (k, u)] {
                let gate = self.gate(values, layer, prep, src);
                let hs = h.row(src);
                let row = out.row_mut(dst);
                match gate {
                    None => {
                        for d in 0..width {
                            row[d] += hs[d] * msg[d];
                        }
                    }
                    Some(g) => {
                        for d in 0..width {
                            row[d] += hs[d] * msg[d] * g;
                        }
                    }
                }
            }
            if let Some((acts, msgs)) = tape.as_mut() {
                acts.extend_from_slice(&act);
                msgs.extend_from_slice(&msg);
            }
        }
        out
    }

    /// One message-passing update.
    pub fn message_layer(
        &self,
        values: &[f64],
        layer: usize,
        h: &Embeddings,
        prep: &PreparedContext,
    ) -> Result<Embeddings> {
        if layer >= self.layers.len() {
            return Err(Error::Index {
                index: layer,
                len: self.layers.len(),
            });
        }
        if h.width != self.config.width {
            return Err(Error::Shape {
                expected: self.config.width,
                found: h.width,
            });
        }
        if h.len() != prep.len() {
            return Err(Error::Size {
                expected: prep.len(),
                found: h.len(),
            });
        }
        Ok(self.layer_forward(values, layer, h, prep, None))
    }

    pub fn forward(&self, values: &[f64], prep: &PreparedContext) -> Embeddings {
        let mut h = self.initial_embeddings(values, prep);
        for l in 0..self.layers.len() {
            h = self.layer_forward(values, l, &h, prep, None);
        }
        h
    }

    pub fn forward_with_tape(&self, values: &[f64], prep: &PreparedContext) -> EncoderTape {
        let mut hs = vec![self.initial_embeddings(values, prep)];
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut msgs = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let mut a = Vec::new();
            let mut m = Vec::new();
            let next =
                self.layer_forward(values, l, hs.last().unwrap(), prep, Some((&mut a, &mut m)));
            hs.push(next);
            acts.push(a);
            msgs.push(m);
        }
        EncoderTape { hs, acts, msgs }
    }

    /// Accumulates `d loss / d params` into `grad` given `d_out`, the loss
    /// gradient with respect to the final embeddings.
    pub fn backward(
        &self,
        values: &[f64],
        prep: &PreparedContext,
        tape: &EncoderTape,
        d_out: &Embeddings,
        grad: &mut [f64],
    ) {
        let (width, hid, r) = (self.config.width, self.config.hidden, self.config.rbf.len());
        let mut g = d_out.clone();
        let mut dmsg = vec![0.0; width];
        let mut dpre = vec![0.0; hid];
        for l in (0..self.layers.len()).rev() {
            let lo = self.layers[l];
            let h_prev = &tape.hs[l];
            let mut g_prev = g.clone();
            for (e, &(u, k)) in prep.graph.edges.iter().enumerate() {
                let msg = &tape.msgs[l][e * width..(e + 1) * width];
                let act = &tape.acts[l][e * hid..(e + 1) * hid];
                dmsg.fill(0.0);
                for (src, dst) in [(u, k), (k, u)] {
                    let gate = self.gate(values, l, prep, src).unwrap_or(1.0);
                    let hs = h_prev.row(src);
                    let gd = g.row(dst);
                    let mut dgate = 0.0;
                    {
                        let gp = g_prev.row_mut(src);
                        for d in 0..width {
                            dmsg[d] += gate * gd[d] * hs[d];
                            gp[d] += gate * gd[d] * msg[d];
                            dgate += gd[d] * hs[d] * msg[d];
                        }
                    }
                    if self.config.bfactor_gating && prep.protein[src] {
                        grad[lo.gate] += dgate * prep.bweights[src];
                    }
                }
                // output layer
                for d in 0..width {
                    grad[lo.b2 + d] += dmsg[d];
                    let row = &mut grad[lo.w2 + d * hid..lo.w2 + (d + 1) * hid];
                    for (gw, a) in row.iter_mut().zip(act) {
                        *gw += dmsg[d] * a;
                    }
                }
                for j in 0..hid {
                    let mut da = 0.0;
                    for d in 0..width {
                        da += values[lo.w2 + d * hid + j] * dmsg[d];
                    }
                    dpre[j] = da * (1.0 - act[j] * act[j]);
                }
                let rbf = &prep.rbf[e * r..(e + 1) * r];
                for j in 0..hid {
                    grad[lo.b1 + j] += dpre[j];
                    let row = &mut grad[lo.w1 + j * r..lo.w1 + (j + 1) * r];
                    for (gw, x) in row.iter_mut().zip(rbf) {
                        *gw += dpre[j] * x;
                    }
                }
            }
            g = g_prev;
        }
        for (k, &row) in prep.table_rows.iter().enumerate() {
            let dst = &mut grad[self.table + row * width..self.table + (row + 1) * width];
            for (gv, d) in dst.iter_mut().zip(g.row(k)) {
                *gv += d;
            }
        }
    }
}

/// Encodes a context end to end.
pub fn encode_context(encoder: &Encoder, values: &[f64], context: &Context) -> Result<Embeddings> {
    let prep = encoder.prepare(context)?;
    Ok(encoder.forward(values, &prep))
}

/// `[h_focal ‖ mean_k h_k]`, width `2H`.
pub fn aggregate_readout(embeddings: &Embeddings, focal: usize) -> Result<Vec<f64>> {
    let n = embeddings.len();
    if focal >= n {
        return Err(Error::Index {
            index: focal,
            len: n,
        });
    }
    let w = embeddings.width;
    let mut out = Vec::with_capacity(2 * w);
    out.extend_from_slice(embeddings.row(focal));
    let mut mean = vec![0.0; w];
    for k in 0..n {
        for (m, v) in mean.iter_mut().zip(embeddings.row(k)) {
            *m += v;
        }
    }
    out.extend(mean.into_iter().map(|m| m / n as f64));
    Ok(out)
}

/// Gradient of [`aggregate_readout`] with respect to the embeddings.
pub fn readout_backward(n: usize, width: usize, focal: usize, d_cond: &[f64]) -> Embeddings {
    let mut d = Embeddings::zeros(n, width);
    for k in 0..n {
        let row = d.row_mut(k);
        for (r, g) in row.iter_mut().zip(&d_cond[width..2 * width]) {
            *r = g / n as f64;
        }
    }
    for (r, g) in d.row_mut(focal).iter_mut().zip(&d_cond[..width]) {
        *r += g;
    }
    d
}

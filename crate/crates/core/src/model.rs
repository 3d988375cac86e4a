//! The full conditional model: one shared context encoder feeding a type
//! flow (width = vocabulary size) and a 3-D coordinate-offset flow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::Vocabulary;
use crate::encoder::{
    aggregate_readout, readout_backward, Encoder, EncoderConfig, PreparedContext,
};
use crate::error::{Error, Result};
use crate::flow::FlowStack;
use crate::geometry::RbfBank;
use crate::params::{Checkpoint, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub type_flow_layers: usize,
    pub coord_flow_layers: usize,
    /// Half-width of the uniform initializer.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            type_flow_layers: 6,
            coord_flow_layers: 6,
            init_scale: 0.1,
        }
    }
}

/// Layout of all parameters plus the vocabulary the type flow decodes to.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    encoder: Encoder,
    type_flow: FlowStack,
    coord_flow: FlowStack,
}

/// One supervised factor of the autoregressive likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTarget<'a> {
    pub context: &'a PreparedContext,
    pub focal: usize,
    pub element: usize,
    pub type_target: &'a [f64],
    pub offset: [f64; 3],
}

impl Model {
    /// Builds the layout and a zero-filled parameter set.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<(Self, ParamSet)> {
        let mut params = ParamSet::new();
        let v = vocab.len();
        let encoder = Encoder::register(&mut params, config.encoder.clone(), v)?;
        let h = config.encoder.width;
        let type_flow =
            FlowStack::register(&mut params, "type_flow", v, 2 * h, config.type_flow_layers)?;
        let coord_flow = FlowStack::register(
            &mut params,
            "coord_flow",
            3,
            2 * h + v,
            config.coord_flow_layers,
        )?;
        Ok((
            Self {
                config,
                vocab,
                encoder,
                type_flow,
                coord_flow,
            },
            params,
        ))
    }

    /// Layout plus seeded initial parameters.
    pub fn initialized(
        config: ModelConfig,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<(Self, ParamSet)> {
        let (model, mut params) = Self::new(config, vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = model.config.init_scale;
        model.encoder.init(params.values_mut(), &mut rng, scale);
        model.type_flow.init(params.values_mut(), &mut rng, scale);
        model.coord_flow.init(params.values_mut(), &mut rng, scale);
        Ok((model, params))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn type_flow(&self) -> &FlowStack {
        &self.type_flow
    }

    pub fn coord_flow(&self) -> &FlowStack {
        &self.coord_flow
    }

    /// Readout `[h_focal ‖ mean h]` of the encoded context.
    pub fn condition(
        &self,
        values: &[f64],
        context: &PreparedContext,
        focal: usize,
    ) -> Result<Vec<f64>> {
        let emb = self.encoder.forward(values, context);
        aggregate_readout(&emb, focal)
    }

    /// Conditioning for the coordinate flow: readout plus one-hot type.
    pub fn coord_condition(&self, readout: &[f64], element: usize) -> Vec<f64> {
        let mut c = readout.to_vec();
        c.extend((0..self.vocab.len()).map(|i| if i == element { 1.0 } else { 0.0 }));
        c
    }

    /// `log p(type) + log p(offset)` for one step.
    pub fn step_log_prob(&self, values: &[f64], step: &StepTarget<'_>) -> Result<f64> {
        let cond = self.condition(values, step.context, step.focal)?;
        let lt = self.type_flow.log_prob(values, step.type_target, &cond)?;
        let cc = self.coord_condition(&cond, step.element);
        let lc = self.coord_flow.log_prob(values, &step.offset, &cc)?;
        Ok(lt + lc)
    }

    /// Same as [`Self::step_log_prob`] and adds `weight * d logp / d params`
    /// into `grad`.
    pub fn step_log_prob_grad(
        &self,
        values: &[f64],
        step: &StepTarget<'_>,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let h = self.config.encoder.width;
        let v = self.vocab.len();
        let tape = self.encoder.forward_with_tape(values, step.context);
        let cond = aggregate_readout(tape.output(), step.focal)?;
        let mut d_cond = vec![0.0; 2 * h];
        let lt = self.type_flow.log_prob_backward(
            values,
            step.type_target,
            &cond,
            weight,
            grad,
            &mut d_cond,
        )?;
        let cc = self.coord_condition(&cond, step.element);
        let mut d_cc = vec![0.0; 2 * h + v];
        let lc = self.coord_flow.log_prob_backward(
            values,
            &step.offset,
            &cc,
            weight,
            grad,
            &mut d_cc,
        )?;
        for (a, b) in d_cond.iter_mut().zip(&d_cc[..2 * h]) {
            *a += b;
        }
        let d_emb = readout_backward(step.context.len(), h, step.focal, &d_cond);
        self.encoder
            .backward(values, step.context, &tape, &d_emb, grad);
        Ok(lt + lc)
    }

    pub fn to_checkpoint(&self, params: &ParamSet) -> Checkpoint {
        let e = &self.config.encoder;
        let mut meta = vec![
            ("width".to_string(), e.width.to_string()),
            ("hidden".into(), e.hidden.to_string()),
            ("layers".into(), e.layers.to_string()),
            ("graph_cutoff".into(), format!("{:?}", e.cutoff)),
            ("bfactor_gating".into(), e.bfactor_gating.to_string()),
            ("rbf_width".into(), format!("{:?}", e.rbf.width())),
            (
                "rbf_centers".into(),
                e.rbf
                    .centers()
                    .iter()
                    .map(|c| format!("{c:?}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            (
                "type_flow_layers".into(),
                self.config.type_flow_layers.to_string(),
            ),
            (
                "coord_flow_layers".into(),
                self.config.coord_flow_layers.to_string(),
            ),
            ("init_scale".into(), format!("{:?}", self.config.init_scale)),
        ];
        for el in self.vocab.elements() {
            meta.push((
                "element".into(),
                format!("{} {:?} {}", el.symbol, el.covalent_radius, el.max_valence),
            ));
        }
        Checkpoint {
            meta,
            params: params.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ParamSet)> {
        fn get<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
            ck.meta(key)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks `{key}`")))?
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint has malformed `{key}`")))
        }
        let centers = ck
            .meta("rbf_centers")
            .ok_or_else(|| Error::Config("checkpoint lacks `rbf_centers`".into()))?
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config("bad RBF center".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let config = ModelConfig {
            encoder: EncoderConfig {
                width: get(ck, "width")?,
                hidden: get(ck, "hidden")?,
                layers: get(ck, "layers")?,
                rbf: RbfBank::new(centers, get(ck, "rbf_width")?)?,
                cutoff: get(ck, "graph_cutoff")?,
                bfactor_gating: get(ck, "bfactor_gating")?,
            },
            type_flow_layers: get(ck, "type_flow_layers")?,
            coord_flow_layers: get(ck, "coord_flow_layers")?,
            init_scale: get(ck, "init_scale")?,
        };
        let table: String = ck.meta_all("element").map(|l| format!("{l}\n")).collect();
        let vocab = Vocabulary::parse(&table)?;
        let (model, mut params) = Self::new(config, vocab)?;
        if params.sections() != ck.params.sections() {
            return Err(Error::Config(
                "checkpoint sections do not match the model layout".into(),
            ));
        }
        params.set_values(ck.params.values().to_vec())?;
        Ok((model, params))
    }
}

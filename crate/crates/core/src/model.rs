//! GRU growth forecaster.
//!
//! Static categories are embedded and concatenated; each monthly step of
//! numeric features is projected, joined with its mask and fed through a GRU.
//! The final hidden state and the static embedding go through two dense layers
//! producing a mean and a log-variance per horizon step.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, embed_backward, embed_lookup, gru_cell, gru_cell_backward, init, linear,
    linear_backward, relu, relu_backward, GruStep, ParamSet, Partition, Tensor, GRU_PARAMS,
};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Numeric features per step: weight, age, distance, credibility.
    pub d_n: usize,
    /// Mask width per step.
    pub d_m: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub horizon: usize,
    pub category_cardinalities: Vec<usize>,
    pub category_names: Vec<String>,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_n: 4,
            d_m: 1,
            d_e: 16,
            d_h: 64,
            horizon: 3,
            category_cardinalities: vec![2, 9, 4, 10],
            category_names: ["sex", "breed", "state", "nrm_region"]
                .map(String::from)
                .to_vec(),
            head_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("d_n", self.d_n),
            ("d_m", self.d_m),
            ("d_e", self.d_e),
            ("d_h", self.d_h),
            ("horizon", self.horizon),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(format!("model.{field}"), "must be >= 1"));
            }
        }
        if self.category_cardinalities.is_empty() {
            return Err(Error::config(
                "model.category_cardinalities",
                "at least one categorical feature is required",
            ));
        }
        if let Some(i) = self.category_cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::config(
                format!("model.category_cardinalities[{i}]"),
                "must be >= 1",
            ));
        }
        if self.category_names.len() != self.category_cardinalities.len() {
            return Err(Error::config(
                "model.category_names",
                "must name every categorical feature",
            ));
        }
        Ok(())
    }

    pub fn num_categories(&self) -> usize {
        self.category_cardinalities.len()
    }
}

/// One training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// `T × d_n` numeric features.
    pub x: Tensor,
    /// `T × d_m` observation mask.
    pub m: Tensor,
    pub c: Vec<usize>,
    /// `H` targets in normalized units.
    pub y: Vec<f64>,
    /// The same targets in kg, taken from the trajectory rather than
    /// recovered from `y`, so evaluation never depends on a float round trip.
    pub y_kg: Vec<f64>,
    pub farm_id: u32,
    pub animal_id: u64,
}

impl Instance {
    pub fn steps(&self) -> usize {
        self.x.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Vec<f64>,
    /// Clamped to `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    pub log_var: Vec<f64>,
}

/// Index ranges of each block inside the model's [`ParamSet`].
#[derive(Debug, Clone)]
struct Layout {
    embed: Range<usize>,
    numeric: Range<usize>,
    gru: Range<usize>,
    head: Range<usize>,
}

pub const HEAD_PARAMS: [&str; 4] = ["head.w1", "head.b1", "head.w2", "head.b2"];

#[derive(Debug, Clone)]
pub struct GrowthModel {
    config: ModelConfig,
    layout: Layout,
}

/// Saved activations of one forward pass.
struct Trace {
    static_emb: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
    fused: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl GrowthModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let l = config.num_categories();
        let layout = Layout {
            embed: 0..l,
            numeric: l..l + 2,
            gru: l + 2..l + 2 + GRU_PARAMS.len(),
            head: l + 2 + GRU_PARAMS.len()..l + 6 + GRU_PARAMS.len(),
        };
        Ok(Self { config, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Fresh parameters: fan-in scaled uniform weights, zero biases, small embeddings.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> ParamSet {
        let c = &self.config;
        let mut ps = ParamSet::new();
        let mut push = |name: String, t: Tensor, tag| {
            ps.push(name, t, tag).expect("generated names are unique");
        };
        for (name, &card) in c.category_names.iter().zip(&c.category_cardinalities) {
            push(format!("embed.{name}"), init::embedding(rng, card, c.d_e), Partition::Body);
        }
        push("numeric.weight".into(), init::weight(rng, c.d_e, c.d_n), Partition::Body);
        push("numeric.bias".into(), init::bias(c.d_e), Partition::Body);
        let d_in = c.d_e + c.d_m;
        for (i, suffix) in GRU_PARAMS.iter().enumerate() {
            let t = match i % 3 {
                0 => init::weight(rng, c.d_h, d_in),
                1 => init::weight(rng, c.d_h, c.d_h),
                _ => init::bias(c.d_h),
            };
            push(format!("gru.{suffix}"), t, Partition::Body);
        }
        let fused = c.d_h + c.num_categories() * c.d_e;
        push(HEAD_PARAMS[0].into(), init::weight(rng, c.head_hidden, fused), Partition::Head);
        push(HEAD_PARAMS[1].into(), init::bias(c.head_hidden), Partition::Head);
        push(HEAD_PARAMS[2].into(), init::weight(rng, 2 * c.horizon, c.head_hidden), Partition::Head);
        push(HEAD_PARAMS[3].into(), init::bias(2 * c.horizon), Partition::Head);
        ps
    }

    /// Same structure as [`init_params`](Self::init_params) with every value zero.
    pub fn zero_params(&self) -> ParamSet {
        let mut ps = self.init_params(&mut crate::rng::stream_rng(0, crate::rng::Stream::Init, &[]));
        for p in ps.params_mut() {
            p.value.fill(0.0);
        }
        ps
    }

    /// Rebuilds a parameter set from checkpoint records, tagging `head.*` as HEAD.
    pub fn params_from_records(&self, records: Vec<(String, Tensor)>) -> Result<ParamSet> {
        let mut ps = ParamSet::new();
        for (name, t) in records {
            let tag = if HEAD_PARAMS.contains(&name.as_str()) {
                Partition::Head
            } else {
                Partition::Body
            };
            ps.push(name, t, tag)?;
        }
        self.zero_params().check_same_structure(&ps)?;
        Ok(ps)
    }

    /// Rebuilds the `tag` partition (e.g. a PFL body or head) from checkpoint
    /// records. The records must hold exactly that partition's parameters.
    pub fn partition_from_records(&self, records: Vec<(String, Tensor)>, tag: Partition) -> Result<ParamSet> {
        let mut ps = ParamSet::new();
        for (name, t) in records {
            ps.push(name, t, tag)?;
        }
        self.zero_params().subset(tag).check_same_structure(&ps)?;
        Ok(ps)
    }

    /// Concatenated embeddings of the static categories, `L·d_e` long.
    pub fn embed_static(&self, params: &ParamSet, c: &[usize]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if c.len() != cfg.num_categories() {
            return Err(Error::Shape {
                op: "embed_static",
                left: vec![cfg.num_categories()],
                right: vec![c.len()],
            });
        }
        let tables = &params.params()[self.layout.embed.clone()];
        let mut out = Vec::with_capacity(c.len() * cfg.d_e);
        for ((table, &idx), name) in tables.iter().zip(c).zip(&cfg.category_names) {
            out.extend(embed_lookup(table, idx, name)?);
        }
        Ok(out)
    }

    /// Final GRU hidden state over the sequence, starting from zero.
    pub fn encode_sequence(&self, params: &ParamSet, x: &Tensor, m: &Tensor) -> Result<Vec<f64>> {
        let (_, steps) = self.run_gru(params, x, m)?;
        Ok(steps
            .last()
            .map(|s| s.h.clone())
            .expect("run_gru rejects empty sequences"))
    }

    fn run_gru(&self, params: &ParamSet, x: &Tensor, m: &Tensor) -> Result<(Vec<Vec<f64>>, Vec<GruStep>)> {
        let cfg = &self.config;
        if x.cols() != cfg.d_n || x.rank() != 2 {
            return Err(Error::Shape {
                op: "encode_sequence x",
                left: x.shape().to_vec(),
                right: vec![x.rows(), cfg.d_n],
            });
        }
        if m.rank() != 2 || m.cols() != cfg.d_m || m.rows() != x.rows() {
            return Err(Error::Shape {
                op: "encode_sequence mask",
                left: m.shape().to_vec(),
                right: vec![x.rows(), cfg.d_m],
            });
        }
        let p = params.params();
        let w_n = &p[self.layout.numeric.start];
        let b_n = &p[self.layout.numeric.start + 1];
        let gru = &p[self.layout.gru.clone()];
        let mut h = vec![0.0; cfg.d_h];
        let mut inputs = Vec::with_capacity(x.rows());
        let mut steps = Vec::with_capacity(x.rows());
        for t in 0..x.rows() {
            let xt = x.row(t);
            let mut z = linear(xt, w_n, b_n)?;
            z.extend_from_slice(m.row(t));
            let step = gru_cell(&z, &h, gru)?;
            h.clone_from(&step.h);
            inputs.push(xt.to_vec());
            steps.push(step);
        }
        if steps.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok((inputs, steps))
    }

    fn forward(&self, params: &ParamSet, inst: &Instance) -> Result<Trace> {
        let static_emb = self.embed_static(params, &inst.c)?;
        let (inputs, steps) = self.run_gru(params, &inst.x, &inst.m)?;
        let h_last = &steps.last().expect("non-empty").h;
        let (fused, _) = nn::concat(&[h_last, &static_emb])?;
        let p = params.params();
        let hd = self.layout.head.start;
        let hidden_pre = linear(&fused, &p[hd], &p[hd + 1])?;
        let hidden = relu(&hidden_pre);
        let out = linear(&hidden, &p[hd + 2], &p[hd + 3])?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction head output".into()));
        }
        Ok(Trace {
            static_emb,
            inputs,
            steps,
            fused,
            hidden_pre,
            hidden,
            out,
        })
    }

    fn split_output(&self, out: &[f64]) -> Prediction {
        let h = self.config.horizon;
        Prediction {
            mu: out[..h].to_vec(),
            log_var: out[h..]
                .iter()
                .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
                .collect(),
        }
    }

    pub fn predict(&self, params: &ParamSet, inst: &Instance) -> Result<Prediction> {
        self.check_target(inst)?;
        let trace = self.forward(params, inst)?;
        Ok(self.split_output(&trace.out))
    }

    pub fn loss(&self, params: &ParamSet, inst: &Instance) -> Result<f64> {
        let pred = self.predict(params, inst)?;
        nll_loss(&pred, &inst.y)
    }

    fn check_target(&self, inst: &Instance) -> Result<()> {
        if inst.y.len() != self.config.horizon {
            return Err(Error::Shape {
                op: "target",
                left: vec![self.config.horizon],
                right: vec![inst.y.len()],
            });
        }
        Ok(())
    }

    /// NLL of one instance; accumulates its gradient into `params`.
    pub fn loss_and_grad(&self, params: &mut ParamSet, inst: &Instance) -> Result<f64> {
        self.check_target(inst)?;
        let trace = self.forward(params, inst)?;
        let pred = self.split_output(&trace.out);
        let (loss, d_mu, d_lv) = nll_loss_grad(&pred, &inst.y)?;
        let h = self.config.horizon;

        let mut d_out = d_mu;
        for (i, g) in d_lv.into_iter().enumerate() {
            let raw = trace.out[h + i];
            // clamp passes gradient only strictly inside the bounds
            d_out.push(if raw > LOG_VAR_MIN && raw < LOG_VAR_MAX { g } else { 0.0 });
        }

        let layout = &self.layout;
        let p = params.params_mut();
        let hd = layout.head.start;
        let d_hidden = {
            let (w2, b2) = pair_mut(p, hd + 2, hd + 3);
            linear_backward(&trace.hidden, w2, b2, &d_out)?
        };
        let d_hidden_pre = relu_backward(&trace.hidden_pre, &d_hidden);
        let d_fused = {
            let (w1, b1) = pair_mut(p, hd, hd + 1);
            linear_backward(&trace.fused, w1, b1, &d_hidden_pre)?
        };
        let d_h = self.config.d_h;
        let (d_h_last, d_static) = d_fused.split_at(d_h);

        let d_e = self.config.d_e;
        for (l, &idx) in inst.c.iter().enumerate() {
            embed_backward(&mut p[layout.embed.start + l], idx, &d_static[l * d_e..(l + 1) * d_e]);
        }
        debug_assert_eq!(trace.static_emb.len(), d_static.len());

        let mut d_h_t = d_h_last.to_vec();
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let (d_z, d_prev) = gru_cell_backward(step, &d_h_t, &mut p[layout.gru.clone()]);
            let (w_n, b_n) = pair_mut(p, layout.numeric.start, layout.numeric.start + 1);
            // mask part of z carries no parameters
            linear_backward(&trace.inputs[t], w_n, b_n, &d_z[..d_e])?;
            d_h_t = d_prev;
        }
        Ok(loss)
    }
}

fn pair_mut<T>(s: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert!(a < b);
    let (lo, hi) = s.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Gaussian negative log-likelihood averaged over the horizon:
/// `1/(2H) Σ [log σ² + (y − μ)²/σ²]`.
pub fn nll_loss(pred: &Prediction, y: &[f64]) -> Result<f64> {
    nll_loss_grad(pred, y).map(|(l, _, _)| l)
}

/// Loss plus its gradient with respect to `mu` and `log_var`.
pub fn nll_loss_grad(pred: &Prediction, y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let h = y.len();
    if pred.mu.len() != h || pred.log_var.len() != h {
        return Err(Error::Shape {
            op: "nll_loss",
            left: vec![pred.mu.len(), pred.log_var.len()],
            right: vec![h],
        });
    }
    let scale = 1.0 / (2.0 * h as f64);
    let mut loss = 0.0;
    let mut d_mu = Vec::with_capacity(h);
    let mut d_lv = Vec::with_capacity(h);
    for i in 0..h {
        let lv = pred.log_var[i];
        let inv_var = (-lv).exp();
        let r = y[i] - pred.mu[i];
        loss += lv + r * r * inv_var;
        d_mu.push(-2.0 * scale * r * inv_var);
        d_lv.push(scale * (1.0 - r * r * inv_var));
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("nll loss".into()));
    }
    Ok((loss, d_mu, d_lv))
}

/// One draw per horizon step from `N(μ_h, σ_h²)`.
pub fn sample_forecast<R: Rng>(pred: &Prediction, rng: &mut R) -> Vec<f64> {
    pred.mu
        .iter()
        .zip(&pred.log_var)
        .map(|(&mu, &lv)| {
            let z: f64 = StandardNormal.sample(rng);
            mu + (0.5 * lv).exp() * z
        })
        .collect()
}

pub fn point_forecast(pred: &Prediction) -> Vec<f64> {
    pred.mu.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn small_config() -> ModelConfig {
        ModelConfig {
            d_e: 2,
            d_h: 3,
            head_hidden: 4,
            category_cardinalities: vec![3, 2],
            category_names: vec!["sex".into(), "breed".into()],
            ..ModelConfig::default()
        }
    }

    fn instance(t: usize, cfg: &ModelConfig) -> Instance {
        let x = (0..t * cfg.d_n).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = (0..t).map(|i| (i % 2) as f64).collect();
        Instance {
            x: Tensor::matrix(t, cfg.d_n, x).unwrap(),
            m: Tensor::matrix(t, 1, m).unwrap(),
            c: vec![1; cfg.num_categories()],
            y: vec![0.3; cfg.horizon],
            y_kg: vec![300.0; cfg.horizon],
            farm_id: 0,
            animal_id: 0,
        }
    }

    #[test]
    fn embed_static_concatenates_rows() {
        let cfg = ModelConfig {
            d_e: 2,
            category_cardinalities: vec![2, 2],
            category_names: vec!["a".into(), "b".into()],
            ..small_config()
        };
        let model = GrowthModel::new(cfg).unwrap();
        let mut ps = model.zero_params();
        ps.get_mut("embed.a").unwrap().value.row_mut(1).copy_from_slice(&[1.0, 2.0]);
        ps.get_mut("embed.b").unwrap().value.row_mut(0).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(model.embed_static(&ps, &[1, 0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn embed_static_default_width() {
        let model = GrowthModel::new(ModelConfig::default()).unwrap();
        let ps = model.init_params(&mut stream_rng(1, Stream::Init, &[]));
        let e = model.embed_static(&ps, &[0, 0, 0, 0]).unwrap();
        assert_eq!(e.len(), 64);
        assert_eq!(e, model.embed_static(&ps, &[0, 0, 0, 0]).unwrap());
    }

    #[test]
    fn embed_static_out_of_range_names_feature() {
        let model = GrowthModel::new(small_config()).unwrap();
        let ps = model.zero_params();
        match model.embed_static(&ps, &[0, 2]) {
            Err(Error::Index { feature, .. }) => assert_eq!(feature, "breed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_params_predict_unit_gaussian() {
        let cfg = small_config();
        let model = GrowthModel::new(cfg.clone()).unwrap();
        let ps = model.zero_params();
        let inst = instance(5, &cfg);
        assert_eq!(model.encode_sequence(&ps, &inst.x, &inst.m).unwrap(), vec![0.0; 3]);
        let pred = model.predict(&ps, &inst).unwrap();
        assert_eq!(pred.mu, vec![0.0; 3]);
        assert_eq!(pred.log_var, vec![0.0; 3]);
    }

    #[test]
    fn empty_sequence_rejected() {
        let cfg = small_config();
        let model = GrowthModel::new(cfg).unwrap();
        let ps = model.zero_params();
        let x = Tensor::zeros(&[1, 4]);
        let m = Tensor::zeros(&[1, 1]);
        // a zero-row tensor cannot be built, so exercise the mismatch path instead
        let bad_m = Tensor::zeros(&[2, 1]);
        assert!(model.encode_sequence(&ps, &x, &bad_m).is_err());
        assert!(model.encode_sequence(&ps, &x, &m).is_ok());
    }

    #[test]
    fn log_var_is_clamped() {
        let cfg = small_config();
        let model = GrowthModel::new(cfg.clone()).unwrap();
        let mut ps = model.zero_params();
        ps.get_mut("head.b2").unwrap().value.data_mut().copy_from_slice(&[0.0, 0.0, 0.0, 50.0, -50.0, 3.0]);
        let pred = model.predict(&ps, &instance(2, &cfg)).unwrap();
        assert_eq!(pred.log_var, vec![10.0, -10.0, 3.0]);
    }

    #[test]
    fn nll_identities() {
        let p = Prediction { mu: vec![1.0, 2.0], log_var: vec![0.0, 0.0] };
        assert_eq!(nll_loss(&p, &[1.0, 2.0]).unwrap(), 0.0);
        let p = Prediction { mu: vec![0.0], log_var: vec![0.0] };
        assert_eq!(nll_loss(&p, &[1.0]).unwrap(), 0.5);
        let p = Prediction { mu: vec![0.0, 0.0], log_var: vec![0.0, 4f64.ln()] };
        let want = (2.0 + 4f64.ln()) / 4.0;
        assert!((nll_loss(&p, &[1.0, 2.0]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient_zero_at_target() {
        let p = Prediction { mu: vec![0.4, -1.0], log_var: vec![-2.0, 1.5] };
        let (_, d_mu, _) = nll_loss_grad(&p, &[0.4, -1.0]).unwrap();
        assert!(d_mu.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn point_forecast_ignores_variance() {
        let a = Prediction { mu: vec![1.0, 2.0, 3.0], log_var: vec![0.0; 3] };
        let b = Prediction { mu: vec![1.0, 2.0, 3.0], log_var: vec![5.0; 3] };
        assert_eq!(point_forecast(&a), vec![1.0, 2.0, 3.0]);
        assert_eq!(point_forecast(&a), point_forecast(&b));
    }

    #[test]
    fn sample_forecast_tiny_variance_and_seeded() {
        let p = Prediction { mu: vec![0.5, -2.0], log_var: vec![LOG_VAR_MIN; 2] };
        let mut rng = stream_rng(3, Stream::Forecast, &[]);
        for _ in 0..1000 {
            let s = sample_forecast(&p, &mut rng);
            for (v, m) in s.iter().zip(&p.mu) {
                assert!((v - m).abs() < 5.0 * (-5f64).exp());
            }
        }
        let a = sample_forecast(&p, &mut stream_rng(4, Stream::Forecast, &[]));
        let b = sample_forecast(&p, &mut stream_rng(4, Stream::Forecast, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn sequence_order_matters() {
        let cfg = small_config();
        let model = GrowthModel::new(cfg.clone()).unwrap();
        let ps = model.init_params(&mut stream_rng(5, Stream::Init, &[]));
        let inst = instance(6, &cfg);
        let mut rev = inst.clone();
        for t in 0..6 {
            rev.x.row_mut(t).copy_from_slice(inst.x.row(5 - t));
            rev.m.row_mut(t).copy_from_slice(inst.m.row(5 - t));
        }
        assert_ne!(model.predict(&ps, &inst).unwrap(), model.predict(&ps, &rev).unwrap());
    }
}

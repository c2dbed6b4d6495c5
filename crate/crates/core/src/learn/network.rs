//! Permutation-invariant pose policy: a shared per-camera embedding,
//! mean-pooled, feeding a two-layer tanh trunk with policy and value heads.
//! Forward and backward passes are written out by hand.

use rand::Rng;

use crate::controllers::{PoseMessage, SwitchLabel};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, PITCH_LIMIT_DEG};
use crate::shell::rng::RngStream;

/// Raw per-camera tuple: x, y, z, sin yaw, cos yaw, pitch, label.
pub const TUPLE_DIM: usize = 7;
pub const EMBED_DIM: usize = 16;
/// Self tuple followed by the pooled embedding.
pub const FEATURE_DIM: usize = TUPLE_DIM + EMBED_DIM;
pub const HIDDEN_DIM: usize = 64;
pub const ACTIONS: usize = 11;

const INIT_STREAM: u64 = 0x1417;

/// A named row-major array; rank 2 for weights, rank 1 for biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

/// All trainable parameters, in a fixed declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub embed_w: ParamArray,
    pub embed_b: ParamArray,
    pub w1: ParamArray,
    pub b1: ParamArray,
    pub w2: ParamArray,
    pub b2: ParamArray,
    pub policy_w: ParamArray,
    pub policy_b: ParamArray,
    pub value_w: ParamArray,
    pub value_b: ParamArray,
}

impl PolicyParams {
    pub const NAMES: [&'static str; 10] = [
        "W_e", "b_e", "W_1", "b_1", "W_2", "b_2", "W_p", "b_p", "W_v", "b_v",
    ];

    pub fn expected_shapes() -> [Vec<usize>; 10] {
        [
            vec![EMBED_DIM, TUPLE_DIM],
            vec![EMBED_DIM],
            vec![HIDDEN_DIM, FEATURE_DIM],
            vec![HIDDEN_DIM],
            vec![HIDDEN_DIM, HIDDEN_DIM],
            vec![HIDDEN_DIM],
            vec![ACTIONS, HIDDEN_DIM],
            vec![ACTIONS],
            vec![1, HIDDEN_DIM],
            vec![1],
        ]
    }

    pub fn zeros() -> Self {
        let s = Self::expected_shapes();
        Self {
            embed_w: ParamArray::zeros(&s[0]),
            embed_b: ParamArray::zeros(&s[1]),
            w1: ParamArray::zeros(&s[2]),
            b1: ParamArray::zeros(&s[3]),
            w2: ParamArray::zeros(&s[4]),
            b2: ParamArray::zeros(&s[5]),
            policy_w: ParamArray::zeros(&s[6]),
            policy_b: ParamArray::zeros(&s[7]),
            value_w: ParamArray::zeros(&s[8]),
            value_b: ParamArray::zeros(&s[9]),
        }
    }

    pub fn arrays(&self) -> [&ParamArray; 10] {
        [
            &self.embed_w,
            &self.embed_b,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.policy_w,
            &self.policy_b,
            &self.value_w,
            &self.value_b,
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut ParamArray; 10] {
        [
            &mut self.embed_w,
            &mut self.embed_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.policy_w,
            &mut self.policy_b,
            &mut self.value_w,
            &mut self.value_b,
        ]
    }

    /// Assembles parameters from arrays in declared order, checking shapes.
    pub fn from_arrays(arrays: Vec<ParamArray>) -> Result<Self> {
        let mut p = Self::zeros();
        if arrays.len() != 10 {
            return Err(Error::Contract(format!(
                "expected 10 arrays, got {}",
                arrays.len()
            )));
        }
        for ((slot, a), name) in p.arrays_mut().into_iter().zip(arrays).zip(Self::NAMES) {
            if a.shape != slot.shape || a.data.len() != slot.data.len() {
                return Err(Error::Contract(format!(
                    "{name}: shape {:?}, expected {:?}",
                    a.shape, slot.shape
                )));
            }
            *slot = a;
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for ((a, shape), name) in self
            .arrays()
            .into_iter()
            .zip(Self::expected_shapes())
            .zip(Self::NAMES)
        {
            if a.shape != shape || a.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Contract(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    a.shape
                )));
            }
            if a.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("{name}: non-finite entry")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.arrays().iter().map(|a| a.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrays()
            .into_iter()
            .flat_map(|a| a.data.iter().copied())
    }

    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, s) in dst.data.iter_mut().zip(&src.data) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.arrays_mut() {
            a.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean_abs(&self) -> f64 {
        self.iter().map(f64::abs).sum::<f64>() / self.len() as f64
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64) -> PolicyParams {
    let mut rng = RngStream::new(seed, INIT_STREAM);
    let mut p = PolicyParams::zeros();
    for a in p.arrays_mut() {
        if a.shape.len() == 2 {
            let bound = (6.0 / (a.shape[0] + a.shape[1]) as f64).sqrt();
            a.data
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-bound..=bound));
        }
    }
    p
}

/// Raw, normalized tuple describing one camera.
pub fn camera_tuple(pose: &CameraPose, label: SwitchLabel, arena_half: f64) -> [f64; TUPLE_DIM] {
    let yaw = pose.yaw_deg.to_radians();
    [
        pose.position.x / arena_half,
        pose.position.y / arena_half,
        pose.position.z / 3.0,
        yaw.sin(),
        yaw.cos(),
        pose.pitch_deg / PITCH_LIMIT_DEG,
        label.g() as f64,
    ]
}

/// What the pose policy of camera `self_index` sees: every camera's tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseObservation {
    pub self_index: usize,
    pub tuples: Vec<[f64; TUPLE_DIM]>,
}

impl PoseObservation {
    pub fn from_messages(
        self_index: usize,
        messages: &[PoseMessage],
        arena_half: f64,
    ) -> Result<Self> {
        let mut tuples = vec![None; messages.len()];
        for m in messages {
            let slot = tuples.get_mut(m.index).ok_or_else(|| {
                Error::Contract(format!("message index {} out of range", m.index))
            })?;
            *slot = Some(camera_tuple(&m.pose, m.label, arena_half));
        }
        let tuples = tuples
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Contract("messages do not cover every camera".into()))?;
        if self_index >= tuples.len() {
            return Err(Error::Contract(format!(
                "self index {self_index} out of range"
            )));
        }
        Ok(Self { self_index, tuples })
    }
}

fn affine(w: &ParamArray, b: &ParamArray, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = b.data[r] + w.row(r).iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

fn embed(params: &PolicyParams, tuple: &[f64; TUPLE_DIM]) -> [f64; EMBED_DIM] {
    let mut e = [0.0; EMBED_DIM];
    affine(&params.embed_w, &params.embed_b, tuple, &mut e);
    e.iter_mut().for_each(|v| *v = v.tanh());
    e
}

/// The 23-element input to the trunk, plus the per-camera embeddings that
/// produced its pooled half.
fn features_with_embeddings(
    params: &PolicyParams,
    obs: &PoseObservation,
) -> ([f64; FEATURE_DIM], Vec<[f64; EMBED_DIM]>) {
    let embeddings: Vec<_> = obs.tuples.iter().map(|t| embed(params, t)).collect();
    let mut f = [0.0; FEATURE_DIM];
    f[..TUPLE_DIM].copy_from_slice(&obs.tuples[obs.self_index]);
    let n = embeddings.len() as f64;
    for e in &embeddings {
        for (slot, v) in f[TUPLE_DIM..].iter_mut().zip(e) {
            *slot += v;
        }
    }
    f[TUPLE_DIM..].iter_mut().for_each(|v| *v /= n);
    (f, embeddings)
}

pub fn build_features(params: &PolicyParams, obs: &PoseObservation) -> [f64; FEATURE_DIM] {
    features_with_embeddings(params, obs).0
}

/// Intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub tuples: Vec<[f64; TUPLE_DIM]>,
    pub embeddings: Vec<[f64; EMBED_DIM]>,
    pub features: [f64; FEATURE_DIM],
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub log_probs: [f64; ACTIONS],
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: [f64; ACTIONS],
    pub value: f64,
    pub cache: ForwardCache,
}

impl Forward {
    pub fn probs(&self) -> [f64; ACTIONS] {
        self.cache.log_probs.map(f64::exp)
    }

    pub fn entropy(&self) -> f64 {
        -self
            .cache
            .log_probs
            .iter()
            .map(|&lp| if lp.is_finite() { lp.exp() * lp } else { 0.0 })
            .sum::<f64>()
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.map(|z| z - lse)
}

pub fn forward(params: &PolicyParams, obs: &PoseObservation) -> Result<Forward> {
    if obs.tuples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite observation".into()));
    }
    let (features, embeddings) = features_with_embeddings(params, obs);

    let mut h1 = vec![0.0; HIDDEN_DIM];
    affine(&params.w1, &params.b1, &features, &mut h1);
    h1.iter_mut().for_each(|v| *v = v.tanh());

    let mut h2 = vec![0.0; HIDDEN_DIM];
    affine(&params.w2, &params.b2, &h1, &mut h2);
    h2.iter_mut().for_each(|v| *v = v.tanh());

    let mut logits = [0.0; ACTIONS];
    affine(&params.policy_w, &params.policy_b, &h2, &mut logits);
    let mut value = [0.0; 1];
    affine(&params.value_w, &params.value_b, &h2, &mut value);

    Ok(Forward {
        logits,
        value: value[0],
        cache: ForwardCache {
            tuples: obs.tuples.clone(),
            embeddings,
            features,
            h1,
            h2,
            log_probs: log_softmax(&logits),
            value: value[0],
        },
    })
}

fn outer_add(grad: &mut ParamArray, delta: &[f64], input: &[f64]) {
    let cols = grad.cols();
    for (r, d) in delta.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        for (g, x) in grad.data[r * cols..(r + 1) * cols].iter_mut().zip(input) {
            *g += d * x;
        }
    }
}

fn transpose_mul(w: &ParamArray, delta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (r, d) in delta.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(w.row(r)) {
            *o += a * d;
        }
    }
}

/// Gradient of the actor-critic loss for one sample,
///
/// `L = -log pi(a) * advantage + value_coeff * (V - target)^2 - entropy_coeff * H(pi)`,
///
/// with `advantage` held constant.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    params: &PolicyParams,
    cache: &ForwardCache,
    action: usize,
    advantage: f64,
    return_target: f64,
    entropy_coeff: f64,
    value_coeff: f64,
) -> Result<PolicyParams> {
    if cache.h1.len() != HIDDEN_DIM
        || cache.h2.len() != HIDDEN_DIM
        || cache.embeddings.len() != cache.tuples.len()
        || cache.tuples.is_empty()
    {
        return Err(Error::Contract(
            "forward cache does not match parameters".into(),
        ));
    }
    if action >= ACTIONS {
        return Err(Error::Contract(format!("action {action} out of range")));
    }
    let mut g = PolicyParams::zeros();

    let lp = &cache.log_probs;
    let entropy: f64 = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
    let mut d_logits = [0.0; ACTIONS];
    for k in 0..ACTIONS {
        let p = lp[k].exp();
        let onehot = if k == action { 1.0 } else { 0.0 };
        d_logits[k] = advantage * (p - onehot) + entropy_coeff * p * (lp[k] + entropy);
    }
    let d_value = 2.0 * value_coeff * (cache.value - return_target);

    outer_add(&mut g.policy_w, &d_logits, &cache.h2);
    g.policy_b.data.copy_from_slice(&d_logits);
    outer_add(&mut g.value_w, &[d_value], &cache.h2);
    g.value_b.data[0] = d_value;

    let mut d_h2 = vec![0.0; HIDDEN_DIM];
    transpose_mul(&params.policy_w, &d_logits, &mut d_h2);
    for (d, w) in d_h2.iter_mut().zip(params.value_w.row(0)) {
        *d += w * d_value;
    }
    let d_pre2: Vec<f64> = d_h2
        .iter()
        .zip(&cache.h2)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    outer_add(&mut g.w2, &d_pre2, &cache.h1);
    g.b2.data.copy_from_slice(&d_pre2);

    let mut d_h1 = vec![0.0; HIDDEN_DIM];
    transpose_mul(&params.w2, &d_pre2, &mut d_h1);
    let d_pre1: Vec<f64> = d_h1
        .iter()
        .zip(&cache.h1)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    outer_add(&mut g.w1, &d_pre1, &cache.features);
    g.b1.data.copy_from_slice(&d_pre1);

    let mut d_features = [0.0; FEATURE_DIM];
    transpose_mul(&params.w1, &d_pre1, &mut d_features);
    let n = cache.tuples.len() as f64;
    let d_mean = &d_features[TUPLE_DIM..];
    for (tuple, e) in cache.tuples.iter().zip(&cache.embeddings) {
        let d_pre_e: Vec<f64> = d_mean
            .iter()
            .zip(e)
            .map(|(d, v)| d / n * (1.0 - v * v))
            .collect();
        outer_add(&mut g.embed_w, &d_pre_e, tuple);
        for (b, d) in g.embed_b.data.iter_mut().zip(&d_pre_e) {
            *b += d;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> PoseObservation {
        let tuples = (0..n)
            .map(|_| {
                let yaw: f64 = rng.gen_range(-3.0..3.0);
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.6..1.0),
                    yaw.sin(),
                    yaw.cos(),
                    rng.gen_range(-1.0..1.0),
                    if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        PoseObservation {
            self_index: rng.gen_range(0..n),
            tuples,
        }
    }

    #[test]
    fn zero_params_give_uniform_policy() {
        let p = PolicyParams::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = forward(&p, &random_obs(&mut rng, 4)).unwrap();
        assert_eq!(f.logits, [0.0; ACTIONS]);
        assert_eq!(f.value, 0.0);
        for q in f.probs() {
            assert!((q - 1.0 / 11.0).abs() < 1e-15);
        }
        assert!((f.entropy() - (11f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = init_params(5);
        assert_eq!(a, init_params(5));
        assert_ne!(a, init_params(6));
        let bound = (6.0f64 / 87.0).sqrt();
        assert!(a.w1.data.iter().all(|v| v.abs() <= bound));
        for b in [&a.embed_b, &a.b1, &a.b2, &a.policy_b, &a.value_b] {
            assert!(b.data.iter().all(|&v| v == 0.0));
        }
        a.validate().unwrap();
        assert_eq!(
            a.len(),
            16 * 7 + 16 + 64 * 23 + 64 + 64 * 64 + 64 + 11 * 64 + 11 + 64 + 1
        );
    }

    #[test]
    fn log_softmax_survives_huge_logits() {
        let mut z = [0.0; ACTIONS];
        z[0] = 700.0;
        z[1] = -700.0;
        z[2] = 699.0;
        let lp = log_softmax(&z);
        assert!(lp.iter().all(|v| v.is_finite()));
        let s: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn features_are_pooled_and_invariant() {
        let params = init_params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs = random_obs(&mut rng, 5);
        let base = build_features(&params, &obs);

        let mut permuted = obs.clone();
        permuted.tuples.swap(1, 3);
        permuted.tuples.swap(0, 4);
        // Keep `self` pointing at the same tuple.
        permuted.self_index = match obs.self_index {
            1 => 3,
            3 => 1,
            0 => 4,
            4 => 0,
            k => k,
        };
        let other = build_features(&params, &permuted);
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() < 1e-14);
        }

        let same = PoseObservation {
            self_index: 0,
            tuples: vec![obs.tuples[0]; 3],
        };
        let f = build_features(&params, &same);
        let single = embed(&params, &obs.tuples[0]);
        for (a, b) in f[TUPLE_DIM..].iter().zip(&single) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn yaw_wrap_gives_identical_tuples() {
        let p = Point3::new(1.0, 2.0, 2.5);
        let a = camera_tuple(
            &CameraPose {
                position: p,
                pitch_deg: 3.0,
                yaw_deg: 180.0,
                zoom: 1.0,
            },
            SwitchLabel::Vision,
            10.0,
        );
        let b = camera_tuple(
            &CameraPose {
                position: p,
                pitch_deg: 3.0,
                yaw_deg: -180.0,
                zoom: 1.0,
            },
            SwitchLabel::Vision,
            10.0,
        );
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_loss_gives_zero_gradient() {
        let params = init_params(9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = forward(&params, &random_obs(&mut rng, 4)).unwrap();
        let g = backward(&params, &f.cache, 3, 0.0, f.value, 0.0, 0.5).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn policy_gradient_is_linear_in_advantage() {
        let params = init_params(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = forward(&params, &random_obs(&mut rng, 3)).unwrap();
        let g1 = backward(&params, &f.cache, 2, 0.7, f.value, 0.0, 0.5).unwrap();
        let g2 = backward(&params, &f.cache, 2, 1.4, f.value, 0.0, 0.5).unwrap();
        for (a, b) in g1.policy_w.data.iter().zip(&g2.policy_w.data) {
            assert!((2.0 * a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn backward_rejects_bad_inputs() {
        let params = init_params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = forward(&params, &random_obs(&mut rng, 3)).unwrap();
        assert!(backward(&params, &f.cache, 11, 1.0, 0.0, 0.0, 0.5).is_err());
        let mut cache = f.cache.clone();
        cache.h1.pop();
        assert!(backward(&params, &cache, 0, 1.0, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn forward_rejects_non_finite() {
        let params = init_params(1);
        let obs = PoseObservation {
            self_index: 0,
            tuples: vec![[f64::NAN; TUPLE_DIM]; 2],
        };
        assert!(matches!(forward(&params, &obs), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut arrays: Vec<ParamArray> = PolicyParams::zeros()
            .arrays()
            .into_iter()
            .cloned()
            .collect();
        arrays[2] = ParamArray::zeros(&[64, 22]);
        assert!(PolicyParams::from_arrays(arrays).is_err());
    }
}

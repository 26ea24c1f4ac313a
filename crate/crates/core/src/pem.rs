//! Perception error model: fitting from matched detection logs and error
//! injection into ground-truth objects.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky_in_place, cholesky_solve, norm_inf, DenseMatrix};
use crate::prelude::*;
use crate::rng::{key_hash, substream};
use crate::world::{normalize_angle, AgentState, OrientedBox, Vec2};

pub const PEM_SCHEMA_VERSION: u32 = 1;
pub const SALIENT_NAMES: [&str; 3] = ["range", "azimuth", "occlusion"];

/// Logistic coefficients are capped at this magnitude under separation.
pub const COEFFICIENT_CAP: f64 = 30.0;
const MAX_IRLS: usize = 100;
const STEP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PemError {
    #[error("gate must be positive, got {0}")]
    Gate(f64),
    #[error("no ground-truth objects in the log")]
    NoSamples,
    #[error("degenerate design: salient variable {0} has no variation")]
    Degenerate(&'static str),
    #[error("duplicate ground-truth id {id} in frame {frame}")]
    DuplicateId { frame: u64, id: String },
    #[error("non-finite value in frame {0}")]
    NonFinite(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SalientVars {
    pub range: f64,
    pub azimuth: f64,
    pub occlusion: f64,
}

impl SalientVars {
    pub fn as_array(&self) -> [f64; 3] {
        [self.range, self.azimuth, self.occlusion]
    }
}

/// An object as seen by downstream modules, ground truth or perceived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub id: String,
    pub state: AgentState,
    pub half_length: f64,
    pub half_width: f64,
    #[serde(default)]
    pub salient: SalientVars,
}

impl ObjectObservation {
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox {
            center: self.state.position(),
            heading: self.state.heading,
            half_length: self.half_length,
            half_width: self.half_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLogFrame {
    pub frame: u64,
    pub ground_truth: Vec<ObjectObservation>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMatches {
    /// `(ground-truth index, detection index, distance)`.
    pub matches: Vec<(usize, usize, f64)>,
    pub misses: Vec<usize>,
    pub ghosts: Vec<usize>,
}

/// Greedy assignment by ascending center distance within `gate`.
pub fn match_frames(frame: &DetectionLogFrame, gate: f64) -> Result<FrameMatches, PemError> {
    if !(gate > 0.0) {
        return Err(PemError::Gate(gate));
    }
    let mut pairs = Vec::new();
    for (i, g) in frame.ground_truth.iter().enumerate() {
        for (j, d) in frame.detections.iter().enumerate() {
            let dist = (g.state.position() - Vec2::new(d.x, d.y)).norm();
            if dist <= gate {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; frame.ground_truth.len()];
    let mut det_used = vec![false; frame.detections.len()];
    let mut out = FrameMatches::default();
    for (dist, i, j) in pairs {
        if !gt_used[i] && !det_used[j] {
            gt_used[i] = true;
            det_used[j] = true;
            out.matches.push((i, j, dist));
        }
    }
    out.misses = (0..gt_used.len()).filter(|&i| !gt_used[i]).collect();
    out.ghosts = (0..det_used.len()).filter(|&j| !det_used[j]).collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemParams {
    pub schema_version: u32,
    /// Miss probability is `logistic(intercept + weights . [range, azimuth, occlusion])`.
    pub intercept: f64,
    pub weights: [f64; 3],
    pub sigma0: f64,
    pub sigma1: f64,
    pub samples: usize,
    /// For `[intercept, range, azimuth, occlusion]`; absent under separation.
    pub standard_errors: Option<[f64; 4]>,
    /// For `[sigma0, sigma1]`; absent with fewer than three matches.
    #[serde(default)]
    pub sigma_standard_errors: Option<[f64; 2]>,
    #[serde(default)]
    pub separated: bool,
    #[serde(default)]
    pub sigma_clamped: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl PemParams {
    /// Logistic miss model with constant position noise.
    pub fn new(intercept: f64, weights: [f64; 3], sigma0: f64, sigma1: f64) -> Self {
        Self {
            schema_version: PEM_SCHEMA_VERSION,
            intercept,
            weights,
            sigma0,
            sigma1,
            samples: 0,
            standard_errors: None,
            sigma_standard_errors: None,
            separated: false,
            sigma_clamped: false,
            iterations: 0,
        }
    }

    pub fn miss_probability(&self, v: &SalientVars) -> f64 {
        let x = v.as_array();
        let z = self.intercept + (0..3).map(|i| self.weights[i] * x[i]).sum::<f64>();
        logistic(z)
    }

    pub fn sigma(&self, range: f64) -> f64 {
        self.sigma0 + self.sigma1 * range
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Expected magnitude of a 2-D isotropic Gaussian error is `sigma * sqrt(pi/2)`.
const RAYLEIGH_MEAN: f64 = 1.253_314_137_315_500_3;

/// Fits the miss model by IRLS and the noise model by least squares.
pub fn fit_pem(frames: &[DetectionLogFrame], gate: f64) -> Result<PemParams, PemError> {
    let mut x: Vec<[f64; 4]> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut errs: Vec<(f64, f64)> = Vec::new();
    for f in frames {
        let mut ids = BTreeSet::new();
        for g in &f.ground_truth {
            if !ids.insert(g.id.as_str()) {
                return Err(PemError::DuplicateId {
                    frame: f.frame,
                    id: g.id.clone(),
                });
            }
            if !g.state.is_finite() || !g.salient.as_array().iter().all(|v| v.is_finite()) {
                return Err(PemError::NonFinite(f.frame));
            }
        }
        let m = match_frames(f, gate)?;
        let mut missed = vec![true; f.ground_truth.len()];
        for &(i, j, _) in &m.matches {
            missed[i] = false;
            let g = &f.ground_truth[i];
            let d = &f.detections[j];
            errs.push((g.salient.range, (g.state.position() - Vec2::new(d.x, d.y)).norm()));
        }
        for (g, miss) in f.ground_truth.iter().zip(missed) {
            let s = g.salient.as_array();
            x.push([1.0, s[0], s[1], s[2]]);
            y.push(if miss { 1.0 } else { 0.0 });
        }
    }
    if x.is_empty() {
        return Err(PemError::NoSamples);
    }
    for (c, name) in SALIENT_NAMES.iter().enumerate() {
        let first = x[0][c + 1];
        if x.iter().all(|r| r[c + 1] == first) {
            return Err(PemError::Degenerate(name));
        }
    }
    let mut p = PemParams::new(0.0, [0.0; 3], 0.0, 0.0);
    p.samples = x.len();
    fit_logistic(&x, &y, &mut p)?;
    fit_noise(&errs, &mut p);
    Ok(p)
}

fn information(x: &[[f64; 4]], beta: &[f64; 4], y: &[f64]) -> (DenseMatrix, [f64; 4]) {
    let mut h = DenseMatrix::zeros(4, 4);
    let mut g = [0.0; 4];
    for (r, yi) in x.iter().zip(y) {
        let z: f64 = (0..4).map(|i| r[i] * beta[i]).sum();
        let mu = logistic(z);
        let w = mu * (1.0 - mu);
        for i in 0..4 {
            g[i] += r[i] * (yi - mu);
            for j in 0..4 {
                h.data[i * 4 + j] += w * r[i] * r[j];
            }
        }
    }
    (h, g)
}

fn fit_logistic(x: &[[f64; 4]], y: &[f64], p: &mut PemParams) -> Result<(), PemError> {
    let misses: f64 = y.iter().sum();
    if misses == 0.0 || misses == y.len() as f64 {
        p.separated = true;
        p.intercept = if misses == 0.0 { -COEFFICIENT_CAP } else { COEFFICIENT_CAP };
        return Ok(());
    }
    let mut beta = [0.0; 4];
    for it in 1..=MAX_IRLS {
        p.iterations = it;
        let (mut h, g) = information(x, &beta, y);
        if !cholesky_in_place(&mut h) {
            return Err(PemError::Degenerate(collinear_name(x)));
        }
        let step = cholesky_solve(&h, &g);
        for i in 0..4 {
            beta[i] += step[i];
        }
        if beta.iter().any(|b| b.abs() > COEFFICIENT_CAP || !b.is_finite()) {
            for b in &mut beta {
                *b = if b.is_finite() { b.clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP) } else { 0.0 };
            }
            p.separated = true;
            break;
        }
        if norm_inf(&step) < STEP_TOL {
            break;
        }
    }
    p.intercept = beta[0];
    p.weights = [beta[1], beta[2], beta[3]];
    if !p.separated {
        let (mut h, _) = information(x, &beta, y);
        if cholesky_in_place(&mut h) {
            let mut se = [0.0; 4];
            for (j, s) in se.iter_mut().enumerate() {
                let mut e = [0.0; 4];
                e[j] = 1.0;
                *s = libm::sqrt(cholesky_solve(&h, &e)[j]);
            }
            p.standard_errors = Some(se);
        }
    }
    Ok(())
}

/// Salient variable whose column is closest to a combination of the others.
fn collinear_name(x: &[[f64; 4]]) -> &'static str {
    let mut gram = DenseMatrix::zeros(4, 4);
    for r in x {
        for i in 0..4 {
            for j in 0..4 {
                gram.data[i * 4 + j] += r[i] * r[j];
            }
        }
    }
    for k in 2..=4 {
        let mut sub = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                sub.data[i * k + j] = gram[(i, j)];
            }
        }
        if !cholesky_in_place(&mut sub) || sub[(k - 1, k - 1)] < 1e-9 * libm::sqrt(gram[(k - 1, k - 1)]).max(1.0) {
            return SALIENT_NAMES[k - 2];
        }
    }
    SALIENT_NAMES[2]
}

fn fit_noise(errs: &[(f64, f64)], p: &mut PemParams) {
    let n = errs.len() as f64;
    if errs.is_empty() {
        return;
    }
    let mr = errs.iter().map(|e| e.0).sum::<f64>() / n;
    let me = errs.iter().map(|e| e.1).sum::<f64>() / n;
    let sxx: f64 = errs.iter().map(|e| (e.0 - mr) * (e.0 - mr)).sum();
    let sxy: f64 = errs.iter().map(|e| (e.0 - mr) * (e.1 - me)).sum();
    let (mut a, mut b) = (me, 0.0);
    if errs.len() >= 2 && sxx > 0.0 {
        b = sxy / sxx;
        a = me - b * mr;
        if errs.len() >= 3 {
            let rss: f64 = errs.iter().map(|e| (e.1 - a - b * e.0) * (e.1 - a - b * e.0)).sum();
            let s2 = rss / (n - 2.0);
            let se_b = libm::sqrt(s2 / sxx);
            let se_a = libm::sqrt(s2 * (1.0 / n + mr * mr / sxx));
            p.sigma_standard_errors = Some([se_a / RAYLEIGH_MEAN, se_b / RAYLEIGH_MEAN]);
        }
    }
    p.sigma0 = a / RAYLEIGH_MEAN;
    p.sigma1 = b / RAYLEIGH_MEAN;
    if p.sigma0 < 0.0 {
        p.sigma0 = 0.0;
        p.sigma_clamped = true;
    }
    if p.sigma1 < 0.0 {
        p.sigma1 = 0.0;
        p.sigma_clamped = true;
    }
}

/// Drops or perturbs one object; `None` when it is missed.
pub fn perceive_object(obj: &ObjectObservation, params: &PemParams, rng: &mut impl Rng) -> Option<ObjectObservation> {
    let u: f64 = rng.random();
    if u < params.miss_probability(&obj.salient) {
        return None;
    }
    let mut out = obj.clone();
    let sigma = params.sigma(obj.salient.range).max(0.0);
    if sigma > 0.0 {
        let nd = Normal::new(0.0, sigma).expect("finite sigma");
        out.state.x += nd.sample(rng);
        out.state.y += nd.sample(rng);
    }
    Some(out)
}

/// Applies the error model to every object with a shared generator.
pub fn apply_pem(objects: &[ObjectObservation], params: &PemParams, rng: &mut impl Rng) -> Vec<ObjectObservation> {
    objects.iter().filter_map(|o| perceive_object(o, params, rng)).collect()
}

/// Applies the error model with a substream per `(seed, step, object id)`.
pub fn apply_pem_seeded(objects: &[ObjectObservation], params: &PemParams, seed: u64, step: u64) -> Vec<ObjectObservation> {
    objects
        .iter()
        .filter_map(|o| perceive_object(o, params, &mut substream(seed, step, key_hash(&o.id))))
        .collect()
}

/// Angular interval `[lo, hi]` of a box seen from `eye`, relative to `axis`.
fn angular_span(eye: Vec2, b: &OrientedBox, axis: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in b.corners() {
        let a = normalize_angle((c - eye).angle() - axis);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    (lo, hi)
}

/// Range, ego-frame azimuth and the fraction of the target's angular extent
/// hidden behind nearer boxes.
pub fn salient_vars(ego: &AgentState, target: &OrientedBox, others: &[OrientedBox]) -> SalientVars {
    let eye = ego.position();
    let rel = target.center - eye;
    let range = rel.norm();
    let bearing = rel.angle();
    let azimuth = normalize_angle(bearing - ego.heading);
    let (lo, hi) = angular_span(eye, target, bearing);
    let width = hi - lo;
    let mut covered: Vec<(f64, f64)> = Vec::new();
    for o in others {
        let r = (o.center - eye).norm();
        if r >= range || (o.center - target.center).norm() < 1e-12 {
            continue;
        }
        let (a, b) = angular_span(eye, o, bearing);
        let (a, b) = (a.max(lo), b.min(hi));
        if b > a {
            covered.push((a, b));
        }
    }
    covered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in covered {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    let occlusion = if width > 1e-12 { (total / width).clamp(0.0, 1.0) } else { 0.0 };
    SalientVars {
        range,
        azimuth,
        occlusion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn obj(id: &str, x: f64, y: f64, range: f64) -> ObjectObservation {
        ObjectObservation {
            id: id.into(),
            state: AgentState {
                x,
                y,
                ..Default::default()
            },
            half_length: 2.0,
            half_width: 1.0,
            salient: SalientVars {
                range,
                azimuth: 0.0,
                occlusion: 0.0,
            },
        }
    }

    fn det(o: &ObjectObservation) -> Detection {
        Detection {
            x: o.state.x,
            y: o.state.y,
            heading: 0.0,
            half_length: 2.0,
            half_width: 1.0,
        }
    }

    #[test]
    fn matching_edge_cases() {
        let gt = vec![obj("a", 0.0, 0.0, 1.0), obj("b", 10.0, 0.0, 2.0)];
        let f = DetectionLogFrame {
            frame: 0,
            detections: gt.iter().map(det).collect(),
            ground_truth: gt.clone(),
        };
        let m = match_frames(&f, 2.0).unwrap();
        assert_eq!(m.matches.len(), 2);
        assert!(m.misses.is_empty() && m.ghosts.is_empty());
        let empty = DetectionLogFrame {
            detections: vec![],
            ..f.clone()
        };
        assert_eq!(match_frames(&empty, 2.0).unwrap().misses, [0, 1]);
        assert_eq!(match_frames(&f, 0.0), Err(PemError::Gate(0.0)));
    }

    #[test]
    fn extreme_intercepts() {
        let objs: Vec<_> = (0..20).map(|i| obj(&format!("o{i}"), i as f64, 0.0, i as f64)).collect();
        let keep = PemParams::new(-30.0, [0.0; 3], 0.0, 0.0);
        assert_eq!(apply_pem(&objs, &keep, &mut seeded(1)), objs);
        let drop = PemParams::new(30.0, [0.0; 3], 0.0, 0.0);
        assert!(apply_pem(&objs, &drop, &mut seeded(1)).is_empty());
    }

    #[test]
    fn all_detected_is_separated() {
        let frames: Vec<_> = (0..10)
            .map(|i| {
                let mut o = obj("a", i as f64, 0.0, i as f64);
                o.salient.azimuth = 0.1 * i as f64;
                o.salient.occlusion = 0.05 * i as f64;
                DetectionLogFrame {
                    frame: i,
                    detections: vec![det(&o)],
                    ground_truth: vec![o],
                }
            })
            .collect();
        let p = fit_pem(&frames, 1.0).unwrap();
        assert!(p.separated);
        assert!(p.miss_probability(&SalientVars::default()) < 1e-12);
        assert_eq!((p.sigma0, p.sigma1), (0.0, 0.0));
    }

    #[test]
    fn constant_variable_is_named() {
        let frames: Vec<_> = (0..10)
            .map(|i| DetectionLogFrame {
                frame: i,
                detections: vec![],
                ground_truth: vec![obj("a", 0.0, 0.0, i as f64)],
            })
            .collect();
        assert_eq!(fit_pem(&frames, 1.0), Err(PemError::Degenerate("azimuth")));
    }

    #[test]
    fn occlusion_of_box_behind_another() {
        let ego = AgentState::default();
        let b = |x: f64| OrientedBox {
            center: Vec2::new(x, 0.0),
            heading: 0.0,
            half_length: 2.0,
            half_width: 1.0,
        };
        let far = b(40.0);
        let v = salient_vars(&ego, &far, &[b(20.0), far]);
        assert!((v.range - 40.0).abs() < 1e-12);
        assert_eq!(v.occlusion, 1.0);
        assert_eq!(salient_vars(&ego, &b(20.0), &[far]).occlusion, 0.0);
    }
}

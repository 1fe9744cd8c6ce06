//! Independent reference implementations used by the property tests and the
//! acceptance suite. Everything here works on plain `bool` vectors and
//! textbook formulas, never on the library's packed representation.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use syhd_core::hdcore::{Hypervector, ItemMemory, Quantizer};
use syhd_core::nnfe::{Activation, ActivationKind, Architecture, MlpModel};

pub type Bits = Vec<bool>;

pub fn gaussian<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

/// A small labeled problem with an item memory fitted to it.
pub struct Instance {
    pub mem: ItemMemory,
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// Random sizes with `n ≤ max_n` samples and `d^h ≤ max_dim`.
pub fn random_instance(seed: u64, max_n: usize, max_dim: usize) -> Instance {
    let mut r = rng(seed);
    let dim = r.random_range(4..=max_dim);
    let features = r.random_range(1..8);
    let q = r.random_range(2..=dim.min(8));
    let classes = r.random_range(1..5);
    let n = r.random_range(1..=max_n);
    let x = Array2::from_shape_fn((n, features), |_| r.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| r.random_range(1..=classes)).collect();
    let mem = ItemMemory::generate(Quantizer::fit(x.view(), q).unwrap(), dim, seed).unwrap();
    Instance { mem, x, labels, classes }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bit `k` of the vector is bit `k` of `v`.
pub fn bits_of(v: u64, dim: usize) -> Bits {
    (0..dim).map(|k| v >> k & 1 == 1).collect()
}

pub fn to_bits(hv: &Hypervector) -> Bits {
    (0..hv.dim()).map(|k| hv.bit(k)).collect()
}

pub fn to_hv(bits: &[bool]) -> Hypervector {
    Hypervector::from_bits(bits).unwrap()
}

pub fn xor(a: &[bool], b: &[bool]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x != y).collect()
}

/// Bit set iff strictly more than half of the inputs have it set.
pub fn majority(vs: &[Bits]) -> Bits {
    let n = vs.len();
    (0..vs[0].len()).map(|k| 2 * vs.iter().filter(|v| v[k]).count() > n).collect()
}

pub fn hamming(a: &[bool], b: &[bool]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// Encoding straight from the definition: bundle over features of
/// `S_j xor Q[level_j]`.
pub fn literal_encode(mem: &ItemMemory, x: &[f64]) -> Bits {
    let levels = mem.quantizer().quantize(x).unwrap();
    let bound: Vec<Bits> = levels
        .levels()
        .iter()
        .enumerate()
        .map(|(j, &l)| xor(&to_bits(&mem.feature_seeds()[j]), &to_bits(&mem.level_table()[l as usize - 1])))
        .collect();
    majority(&bound)
}

/// One-shot training by the literal recipe: encode every sample, group by
/// class, bundle each group. Empty classes map to `None`.
pub fn literal_centroids(
    mem: &ItemMemory,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: usize,
) -> Vec<Option<Bits>> {
    let mut groups: Vec<Vec<Bits>> = vec![Vec::new(); classes];
    for (row, &y) in x.rows().into_iter().zip(labels) {
        groups[y - 1].push(literal_encode(mem, &row.to_vec()));
    }
    groups.into_iter().map(|g| (!g.is_empty()).then(|| majority(&g))).collect()
}

/// Nearest non-empty centroid, ties to the smaller label.
pub fn literal_predict(centroids: &[Option<Bits>], query: &[bool]) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for (k, c) in centroids.iter().enumerate() {
        if let Some(c) = c {
            let d = hamming(c, query);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, k + 1));
            }
        }
    }
    best.unwrap().1
}

pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// For each layer: which units are active (ReLU: z > 0) or inside the
/// clip window (PACT: 0 < z < alpha) on every sample.
fn activation_regions(model: &MlpModel, x: ArrayView2<'_, f64>) -> Vec<Vec<u8>> {
    let pre = model.pre_activations(x).unwrap();
    model
        .layers()
        .iter()
        .zip(pre)
        .map(|(layer, z)| {
            z.iter()
                .map(|&v| match layer.activation {
                    Activation::Relu => u8::from(v > 0.0),
                    Activation::Pact { alpha } => {
                        if v <= 0.0 {
                            0
                        } else if v < alpha {
                            1
                        } else {
                            2
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Central differences against `loss_and_gradient` for every parameter.
/// A parameter whose ±h probes land in different activation regions sits
/// on a kink where the loss is not differentiable; it is counted and
/// skipped.
pub fn gradient_check(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    l2: f64,
    h: f64,
    floor: f64,
) -> GradReport {
    let (_, analytic) = model.loss_and_gradient(x, labels, l2).unwrap();
    let params = model.parameters();
    let mut probe = model.clone();
    let mut report = GradReport { max_rel_err: 0.0, checked: 0, skipped_kinks: 0 };
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_parameters(&p).unwrap();
        let plus = probe.loss(x, labels, l2).unwrap();
        let plus_regions = activation_regions(&probe, x);
        p[i] = params[i] - h;
        probe.set_parameters(&p).unwrap();
        let minus = probe.loss(x, labels, l2).unwrap();
        if activation_regions(&probe, x) != plus_regions {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        report.max_rel_err = report.max_rel_err.max(relative_error(analytic[i], numeric, floor));
        report.checked += 1;
    }
    report
}

/// A random small network (1–3 hidden layers, last one PACT, random biases
/// and PACT bounds small enough to clip some units) with a random batch.
pub fn random_toy_network(seed: u64) -> (MlpModel, Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let input_dim = r.random_range(2..6);
    let depth = r.random_range(1..4);
    let mut hidden = Vec::new();
    for i in 0..depth {
        let kind = if i + 1 == depth || r.random_bool(0.3) { ActivationKind::Pact } else { ActivationKind::Relu };
        hidden.push((r.random_range(2..7), kind));
    }
    let classes = r.random_range(2..5);
    let arch = Architecture { input_dim, hidden, classes };
    let mut model = MlpModel::init(&arch, seed).unwrap();

    let mut params = model.parameters();
    let mut offset = 0;
    let mut d_in = input_dim;
    for &(d_out, kind) in &arch.hidden {
        offset += d_out * d_in;
        for b in &mut params[offset..offset + d_out] {
            *b = r.random_range(-0.5..0.5);
        }
        offset += d_out;
        if kind == ActivationKind::Pact {
            params[offset] = r.random_range(0.3..1.5);
            offset += 1;
        }
        d_in = d_out;
    }
    model.set_parameters(&params).unwrap();

    let n = r.random_range(4..11);
    let x = Array2::from_shape_fn((n, input_dim), |_| r.random_range(-2.0..2.0));
    let labels = (0..n).map(|_| r.random_range(1..=classes)).collect();
    (model, x, labels)
}

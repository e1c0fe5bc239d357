use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::ZeroShotError;
use crate::search_space::{
    expand_detailed, BlockSpan, LayerDescriptor, LayerType, SearchSpace, SpaceError, SubNetwork,
};

pub const BN_EPS: f64 = 1e-5;

/// Exponent window for power-of-two weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftRange {
    pub p_min: i32,
    pub p_max: i32,
}

impl Default for ShiftRange {
    fn default() -> Self {
        ShiftRange { p_min: -6, p_max: 1 }
    }
}

/// Weight `sign * 2^exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftWeight {
    pub sign: i8,
    pub exp: i32,
}

impl ShiftWeight {
    pub fn value(&self) -> f64 {
        self.sign as f64 * 2f64.powi(self.exp)
    }
}

/// Sign and rounded log2 magnitude, clamped to the window. Zero maps to the
/// most attenuating value `+2^p_min`.
pub fn quantize_shift(w: f64, range: ShiftRange) -> ShiftWeight {
    if w == 0.0 || !w.is_finite() {
        return ShiftWeight {
            sign: 1,
            exp: range.p_min,
        };
    }
    let sign = if w < 0.0 { -1 } else { 1 };
    let p = w.abs().log2().round() as i32;
    ShiftWeight {
        sign,
        exp: p.clamp(range.p_min, range.p_max),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Real(Vec<f64>),
    Shift(Vec<ShiftWeight>),
}

/// Layer with weights laid out as `[out][in / groups][k][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLayer {
    pub desc: LayerDescriptor,
    pub weights: Weights,
}

impl NetLayer {
    pub fn weight_len(desc: &LayerDescriptor) -> usize {
        (desc.out_channels * (desc.in_channels / desc.groups) * desc.kernel * desc.kernel) as usize
    }

    pub fn fan_in(desc: &LayerDescriptor) -> usize {
        ((desc.in_channels / desc.groups) * desc.kernel * desc.kernel) as usize
    }

    /// Raw layer output before normalization.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor, ZeroShotError> {
        let d = &self.desc;
        let expected = [x.batch(), d.in_channels as usize, d.in_h as usize, d.in_w as usize];
        if x.shape != expected {
            return Err(ZeroShotError::ShapeMismatch {
                expected: expected.to_vec(),
                found: x.shape.to_vec(),
            });
        }
        Ok(match (&self.weights, d.op_type) {
            (Weights::Real(w), LayerType::Adder) => run(d, x, &AdderK(w)),
            (Weights::Real(w), _) => run(d, x, &MulK(w)),
            (Weights::Shift(w), _) => {
                let table: Vec<f64> = w.iter().map(|s| s.value()).collect();
                run(d, x, &ShiftK(&table))
            }
        })
    }
}

trait Mac {
    type W: Copy;
    fn weight(&self, i: usize) -> Self::W;
    fn mac(acc: f64, x: f64, w: Self::W) -> f64;
}

struct MulK<'a>(&'a [f64]);
/// Signed powers of two.
struct ShiftK<'a>(&'a [f64]);
struct AdderK<'a>(&'a [f64]);

impl Mac for MulK<'_> {
    type W = f64;
    fn weight(&self, i: usize) -> f64 {
        self.0[i]
    }
    #[inline(always)]
    fn mac(acc: f64, x: f64, w: f64) -> f64 {
        acc + x * w
    }
}

impl Mac for ShiftK<'_> {
    type W = f64;
    fn weight(&self, i: usize) -> f64 {
        self.0[i]
    }
    // scaling by +-2^p is exact and sign-symmetric, so this is the shifted
    // input with its sign applied, bit for bit
    #[inline(always)]
    fn mac(acc: f64, x: f64, w: f64) -> f64 {
        acc + x * w
    }
}

impl Mac for AdderK<'_> {
    type W = f64;
    fn weight(&self, i: usize) -> f64 {
        self.0[i]
    }
    #[inline(always)]
    fn mac(acc: f64, x: f64, w: f64) -> f64 {
        acc - (x - w).abs()
    }
}

/// Dense pointwise layer computed pixel by pixel over channels-last copies,
/// so the inner loop runs across output channels. Each output still
/// accumulates in input-channel order.
fn run_pointwise<K: Mac>(d: &LayerDescriptor, x: &Tensor, k: &K) -> Tensor {
    let n = x.batch();
    let (cin, cout) = (d.in_channels as usize, d.out_channels as usize);
    let p = x.plane();
    // weights as [in][out]
    let wt: Vec<K::W> = (0..cin * cout).map(|i| k.weight((i % cout) * cin + i / cout)).collect();
    let mut out = Tensor::zeros([n, cout, d.out_h as usize, d.out_w as usize]);
    let mut xin = vec![0.0; cin];
    let mut acc = vec![0.0; cout];
    for b in 0..n {
        let xb = &x.data[b * cin * p..(b + 1) * cin * p];
        let ob = &mut out.data[b * cout * p..(b + 1) * cout * p];
        for px in 0..p {
            for (ci, v) in xin.iter_mut().enumerate() {
                *v = xb[ci * p + px];
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (ci, xv) in xin.iter().enumerate() {
                let wrow = &wt[ci * cout..(ci + 1) * cout];
                for (a, w) in acc.iter_mut().zip(wrow) {
                    *a = K::mac(*a, *xv, *w);
                }
            }
            for (co, a) in acc.iter().enumerate() {
                ob[co * p + px] = *a;
            }
        }
    }
    out
}

/// Same-padded grouped sliding-window kernel. Every output element
/// accumulates in (input channel, kernel row, kernel col) order; padded
/// positions contribute with x = 0.
fn run<K: Mac>(d: &LayerDescriptor, x: &Tensor, k: &K) -> Tensor {
    if d.kernel == 1 && d.stride == 1 && d.groups == 1 {
        return run_pointwise(d, x, k);
    }
    let n = x.batch();
    let (cin, ih, iw) = (d.in_channels as usize, d.in_h as usize, d.in_w as usize);
    let (cout, oh, ow) = (d.out_channels as usize, d.out_h as usize, d.out_w as usize);
    let g = d.groups as usize;
    let (cin_pg, cout_pg) = (cin / g, cout / g);
    let ks = d.kernel as usize;
    let s = d.stride as usize;
    let pad_t = (((oh - 1) * s + ks).saturating_sub(ih) / 2) as isize;
    let pad_l = (((ow - 1) * s + ks).saturating_sub(iw) / 2) as isize;
    let mut out = Tensor::zeros([n, cout, oh, ow]);
    let (ip, op) = (ih * iw, oh * ow);
    let direct = ks == 1 && s == 1;
    for b in 0..n {
        for co in 0..cout {
            let grp = co / cout_pg;
            let o0 = (b * cout + co) * op;
            let plane_out = &mut out.data[o0..o0 + op];
            for cil in 0..cin_pg {
                let ci = grp * cin_pg + cil;
                let i0 = (b * cin + ci) * ip;
                let plane_in = &x.data[i0..i0 + ip];
                if direct {
                    let w = k.weight(co * cin_pg + cil);
                    for (o, xv) in plane_out.iter_mut().zip(plane_in) {
                        *o = K::mac(*o, *xv, w);
                    }
                    continue;
                }
                for kh in 0..ks {
                    for kw in 0..ks {
                        let w = k.weight(((co * cin_pg + cil) * ks + kh) * ks + kw);
                        // output cols whose input col lies inside the image
                        let lo = ((pad_l - kw as isize).max(0) as usize).div_ceil(s).min(ow);
                        let hi = (((iw as isize - 1 + pad_l - kw as isize).max(-1) + 1) as usize)
                            .div_ceil(s)
                            .clamp(lo, ow);
                        for oy in 0..oh {
                            let iy = (oy * s + kh) as isize - pad_t;
                            let row = &mut plane_out[oy * ow..(oy + 1) * ow];
                            if iy < 0 || iy >= ih as isize {
                                for o in row.iter_mut() {
                                    *o = K::mac(*o, 0.0, w);
                                }
                                continue;
                            }
                            let in_row = &plane_in[iy as usize * iw..(iy as usize + 1) * iw];
                            let (left, rest) = row.split_at_mut(lo);
                            let (mid, right) = rest.split_at_mut(hi - lo);
                            for o in left.iter_mut().chain(right.iter_mut()) {
                                *o = K::mac(*o, 0.0, w);
                            }
                            if mid.is_empty() {
                                continue;
                            }
                            let x0 = (lo * s + kw) as isize - pad_l;
                            let src = &in_row[x0 as usize..];
                            if s == 1 {
                                for (o, xv) in mid.iter_mut().zip(src) {
                                    *o = K::mac(*o, *xv, w);
                                }
                            } else {
                                for (o, xv) in mid.iter_mut().zip(src.iter().step_by(s)) {
                                    *o = K::mac(*o, *xv, w);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-sample, per-channel spread recorded by one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRecord {
    pub layer: usize,
    pub channels: usize,
    /// `batch x channels`, row-major: mean over the plane of (x - batch mean)^2.
    pub sample_var: Vec<f64>,
}

/// Normalizes in place with batch statistics (no affine) and returns the
/// per-sample spread around the batch mean of every channel.
pub fn batch_norm(x: &mut Tensor) -> Vec<f64> {
    let [n, c, _, _] = x.shape;
    let p = x.plane();
    let mut sample_var = vec![0.0; n * c];
    for ch in 0..c {
        let mut mean = 0.0;
        for b in 0..n {
            let o = (b * c + ch) * p;
            mean += x.data[o..o + p].iter().sum::<f64>();
        }
        mean /= (n * p) as f64;
        let mut var = 0.0;
        for b in 0..n {
            let o = (b * c + ch) * p;
            let sv: f64 = x.data[o..o + p].iter().map(|v| (v - mean) * (v - mean)).sum();
            sample_var[b * c + ch] = sv / p as f64;
            var += sv;
        }
        var /= (n * p) as f64;
        let inv = 1.0 / (var + BN_EPS).sqrt();
        for b in 0..n {
            let o = (b * c + ch) * p;
            for v in &mut x.data[o..o + p] {
                *v = (*v - mean) * inv;
            }
        }
    }
    sample_var
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub output: Tensor,
    pub bn: Vec<BnRecord>,
}

/// Randomly initialized hybrid network.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridNet {
    pub layers: Vec<NetLayer>,
    pub blocks: Vec<BlockSpan>,
    /// Layers before this index form the feature extractor.
    pub feature_len: usize,
}

impl HybridNet {
    /// He-normal weights; shift layers quantize their draws.
    pub fn random(
        descs: &[LayerDescriptor],
        blocks: Vec<BlockSpan>,
        feature_len: usize,
        seed: u64,
        range: ShiftRange,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = descs
            .iter()
            .map(|d| {
                let std = (2.0 / NetLayer::fan_in(d) as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                let raw: Vec<f64> = (0..NetLayer::weight_len(d)).map(|_| dist.sample(&mut rng)).collect();
                let weights = match d.op_type {
                    LayerType::Shift => {
                        Weights::Shift(raw.iter().map(|w| quantize_shift(*w, range)).collect())
                    }
                    _ => Weights::Real(raw),
                };
                NetLayer { desc: *d, weights }
            })
            .collect();
        HybridNet {
            layers,
            blocks,
            feature_len,
        }
    }

    /// Plain chain of layers without skips or head.
    pub fn chain(layers: Vec<NetLayer>) -> Self {
        let feature_len = layers.len();
        HybridNet {
            layers,
            blocks: Vec::new(),
            feature_len,
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let d = &self.layers[0].desc;
        [d.in_channels as usize, d.in_h as usize, d.in_w as usize]
    }

    /// Whole network including the pooled head.
    pub fn forward(&self, x: &Tensor) -> Result<ForwardOutput, ZeroShotError> {
        self.run_layers(x, self.layers.len())
    }

    /// Feature extractor only.
    pub fn forward_features(&self, x: &Tensor) -> Result<ForwardOutput, ZeroShotError> {
        self.run_layers(x, self.feature_len)
    }

    fn run_layers(&self, x: &Tensor, end: usize) -> Result<ForwardOutput, ZeroShotError> {
        let mut cur = x.clone();
        let mut bn = Vec::new();
        let mut skip: Option<(usize, Tensor)> = None;
        for (i, layer) in self.layers[..end].iter().enumerate() {
            if i == self.feature_len && (cur.shape[2] != 1 || cur.shape[3] != 1) {
                cur = cur.global_avg_pool();
            }
            if let Some(b) = self.blocks.iter().find(|b| b.start == i && b.residual > 0) {
                skip = Some((b.start + b.len - 1, cur.clone()));
            }
            let mut y = layer.apply(&cur)?;
            if i + 1 < end {
                let sample_var = batch_norm(&mut y);
                bn.push(BnRecord {
                    layer: i,
                    channels: y.channels(),
                    sample_var,
                });
                for v in &mut y.data {
                    *v = v.max(0.0);
                }
            }
            if matches!(&skip, Some((last, _)) if *last == i) {
                let (_, s) = skip.take().expect("checked");
                for (a, b) in y.data.iter_mut().zip(&s.data) {
                    *a += b;
                }
            }
            cur = y;
        }
        Ok(ForwardOutput { output: cur, bn })
    }
}

/// Expands the genome and draws weights deterministically from `seed`.
pub fn instantiate(net: &SubNetwork, space: &SearchSpace, seed: u64) -> Result<HybridNet, SpaceError> {
    instantiate_with(net, space, seed, ShiftRange::default())
}

pub fn instantiate_with(
    net: &SubNetwork,
    space: &SearchSpace,
    seed: u64,
    range: ShiftRange,
) -> Result<HybridNet, SpaceError> {
    let ex = expand_detailed(space, net)?;
    Ok(HybridNet::random(&ex.layers, ex.blocks, ex.feature_len, seed, range))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pw(t: LayerType, cin: u32, cout: u32) -> LayerDescriptor {
        LayerDescriptor::new(t, cin, cout, 1, 1, 1, 1, 1)
    }

    #[test]
    fn quantize_fixtures() {
        let r = ShiftRange::default();
        assert_eq!(quantize_shift(2.0, r), ShiftWeight { sign: 1, exp: 1 });
        assert_eq!(quantize_shift(-0.75, r), ShiftWeight { sign: -1, exp: 0 });
        assert_eq!(quantize_shift(0.3, r), ShiftWeight { sign: 1, exp: -2 });
        assert_eq!(quantize_shift(0.3, r).value(), 0.25);
        assert_eq!(quantize_shift(0.0, r), ShiftWeight { sign: 1, exp: -6 });
        assert_eq!(quantize_shift(100.0, r).exp, 1);
        assert_eq!(quantize_shift(1e-9, r).exp, -6);
    }

    #[test]
    fn adder_by_hand() {
        let layer = NetLayer {
            desc: pw(LayerType::Adder, 2, 1),
            weights: Weights::Real(vec![2.0, 1.0]),
        };
        let x = Tensor::from_vec([1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(layer.apply(&x).unwrap().data, vec![-3.0]);
    }

    #[test]
    fn unit_shift_equals_all_ones_conv() {
        let d = LayerDescriptor::new(LayerType::Shift, 3, 4, 3, 1, 1, 5, 5);
        let n = NetLayer::weight_len(&d);
        let shift = NetLayer {
            desc: d,
            weights: Weights::Shift(vec![ShiftWeight { sign: 1, exp: 0 }; n]),
        };
        let conv = NetLayer {
            desc: LayerDescriptor { op_type: LayerType::Conv, ..d },
            weights: Weights::Real(vec![1.0; n]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn([2, 3, 5, 5], &mut rng);
        assert_eq!(shift.apply(&x).unwrap(), conv.apply(&x).unwrap());
    }

    #[test]
    fn identity_conv_passes_input() {
        let net = HybridNet::chain(vec![NetLayer {
            desc: LayerDescriptor::new(LayerType::Conv, 1, 1, 1, 1, 1, 4, 4),
            weights: Weights::Real(vec![1.0]),
        }]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::randn([2, 1, 4, 4], &mut rng);
        let out = net.forward(&x).unwrap();
        assert_eq!(out.output, x);
        assert!(out.bn.is_empty());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layer = NetLayer {
            desc: pw(LayerType::Conv, 2, 1),
            weights: Weights::Real(vec![1.0, 1.0]),
        };
        let x = Tensor::zeros([1, 3, 1, 1]);
        assert!(matches!(layer.apply(&x), Err(ZeroShotError::ShapeMismatch { .. })));
    }

    #[test]
    fn same_padding_3x3_stride_2() {
        // 4x4 input, stride 2 -> 2x2 output, padding total 1 (0 top, 1 bottom)
        let d = LayerDescriptor::new(LayerType::Conv, 1, 1, 3, 2, 1, 4, 4);
        let layer = NetLayer {
            desc: d,
            weights: Weights::Real(vec![1.0; 9]),
        };
        let x = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let y = layer.apply(&x).unwrap();
        // window rows 0..3 cols 0..3 at (0,0): sum of 0,1,2,4,5,6,8,9,10
        assert_eq!(y.data[0], 45.0);
        // (1,1): rows 2..4 (row 4 padded), cols 2..4 (col 4 padded): 10+11+14+15
        assert_eq!(y.data[3], 50.0);
    }

    #[test]
    fn instantiate_is_deterministic() {
        let s = crate::search_space::default_space();
        let g = crate::search_space::smallest_genome(&s);
        let a = instantiate(&g, &s, 5).unwrap();
        let b = instantiate(&g, &s, 5).unwrap();
        assert_eq!(a, b);
        for l in &a.layers {
            if let Weights::Shift(w) = &l.weights {
                assert!(w.iter().all(|s| (-6..=1).contains(&s.exp) && s.sign.abs() == 1));
            }
        }
    }
}

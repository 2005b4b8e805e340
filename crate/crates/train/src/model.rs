//! Reduced reference vector field `v_θ(graph, x, t)`.
//!
//! Message passing over the fully connected atom graph. Pair messages see both
//! endpoint states, a radial basis of the pair distance and (with
//! `use_pair_bias`) bond-type and hop-count one-hots. The output is
//!
//! ```text
//! v_i = 1/(N-1) Σ_{j≠i} r(m_ij) (x_i - x_j) + c(m_ij) (x_i × x_j)
//! ```
//!
//! with `m_ij` the last layer's messages and `r`, `c` linear heads. The cross
//! product term lets the field tell mirror images apart, so the net is
//! rotation equivariant but not reflection equivariant. Both heads start at
//! zero, so an untrained net outputs the zero field.
//!
//! Parameters are a single flat vector; [`Layout`] gives the offsets.

use avgflow_core::random::stream_rng;
use avgflow_core::Coords;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::features::{GraphFeatures, ATOM_TYPES, DEGREE_BINS, PAIR_STATIC_WIDTH};

const RBF_COUNT: usize = 8;
const RBF_SPACING: f64 = 0.6;
const MAX_TIME_FREQ: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_width: usize,
    pub n_layers: usize,
    /// Number of sinusoidal time features; must be even.
    pub time_embed_width: usize,
    pub pe_width: usize,
    pub use_pair_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            n_layers: 3,
            time_embed_width: 16,
            pe_width: 8,
            use_pair_bias: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0
            || self.n_layers == 0
            || self.time_embed_width == 0
            || self.pe_width == 0
        {
            return Err(TrainError::Invalid(format!(
                "model widths and layer count must be positive: {self:?}"
            )));
        }
        if self.time_embed_width % 2 != 0 {
            return Err(TrainError::Invalid(
                "time_embed_width must be even".into(),
            ));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        ATOM_TYPES + DEGREE_BINS + self.pe_width + self.time_embed_width
    }

    pub fn edge_width(&self) -> usize {
        RBF_COUNT + 1 + if self.use_pair_bias { PAIR_STATIC_WIDTH } else { 0 }
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

/// Offsets of every tensor inside the flat parameter vector.
///
/// Order: input projection (weight `H x D`, bias `H`); per layer the pair
/// weights `Wa`, `Wb` (`H x H`), edge weight `We` (`H x E`) and bias; for every
/// layer but the last the node update `Wh1`, `Wh2` (`H x H`) and bias; finally
/// the radial head (`H` + 1) and chiral head (`H` + 1). Weights are row-major.
#[derive(Clone, Debug)]
pub struct Layout {
    pub in_w: usize,
    pub in_b: usize,
    pub layers: Vec<LayerLayout>,
    pub radial_w: usize,
    pub radial_b: usize,
    pub chiral_w: usize,
    pub chiral_b: usize,
    pub total: usize,
}

#[derive(Clone, Debug)]
pub struct LayerLayout {
    pub wa: usize,
    pub wb: usize,
    pub we: usize,
    pub be: usize,
    /// `(wh1, wh2, bh)`; absent on the last layer.
    pub update: Option<(usize, usize, usize)>,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let h = c.hidden_width;
        let mut at = 0;
        let mut take = |len: usize| {
            let o = at;
            at += len;
            o
        };
        let in_w = take(h * c.input_width());
        let in_b = take(h);
        let layers = (0..c.n_layers)
            .map(|l| LayerLayout {
                wa: take(h * h),
                wb: take(h * h),
                we: take(h * c.edge_width()),
                be: take(h),
                update: (l + 1 < c.n_layers).then(|| (take(h * h), take(h * h), take(h))),
            })
            .collect();
        let radial_w = take(h);
        let radial_b = take(1);
        let chiral_w = take(h);
        let chiral_b = take(1);
        Self {
            in_w,
            in_b,
            layers,
            radial_w,
            radial_b,
            chiral_w,
            chiral_b,
            total: at,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldNet {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// Activations kept by [`VectorFieldNet::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    n: usize,
    x: Vec<[f64; 3]>,
    input: Vec<f64>,
    z0: Vec<f64>,
    edge: Vec<f64>,
    /// Node states entering each layer.
    h: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    msg: Vec<Vec<f64>>,
    agg: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// `y += W x` for row-major `W` of shape `rows x x.len()`.
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *yr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy`.
#[inline]
fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in dx.iter_mut().zip(row) {
            *o += d * a;
        }
    }
}

/// `gW += dy xᵀ`.
#[inline]
fn outer_acc(gw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[r * cols..(r + 1) * cols];
        for (o, a) in row.iter_mut().zip(x) {
            *o += d * a;
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Sinusoidal embedding `[sin(ω_k t), cos(ω_k t)]` with `ω_k` log-spaced in `[1, 100]`.
pub fn time_embedding(t: f64, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = Vec::with_capacity(width);
    for k in 0..half {
        let frac = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
        let w = (frac * MAX_TIME_FREQ.ln()).exp();
        out.push((w * t).sin());
        out.push((w * t).cos());
    }
    out
}

impl VectorFieldNet {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: vec![0.0; config.param_count()],
            config,
        })
    }

    /// Uniform `±sqrt(3 / fan_in)` weights from the `init` stream, zero biases
    /// and zero output heads.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let layout = Layout::new(&config);
        let mut rng = stream_rng(seed, "init");
        let h = config.hidden_width;
        let mut fill = |params: &mut [f64], offset: usize, len: usize, fan_in: usize| {
            let a = (3.0 / fan_in as f64).sqrt();
            for p in &mut params[offset..offset + len] {
                *p = rng.random_range(-a..a);
            }
        };
        fill(&mut net.params, layout.in_w, h * config.input_width(), config.input_width());
        for l in &layout.layers {
            // The pair pre-activation sums three linear maps.
            fill(&mut net.params, l.wa, h * h, 3 * h);
            fill(&mut net.params, l.wb, h * h, 3 * h);
            fill(&mut net.params, l.we, h * config.edge_width(), 3 * config.edge_width());
            if let Some((wh1, wh2, _)) = l.update {
                fill(&mut net.params, wh1, h * h, 2 * h);
                fill(&mut net.params, wh2, h * h, 2 * h);
            }
        }
        Ok(net)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn forward(&self, feats: &GraphFeatures, x: &Coords<f64>, t: f64) -> Result<Coords<f64>> {
        self.forward_cached(feats, x, t).map(|(v, _)| v)
    }

    pub fn forward_cached(
        &self,
        feats: &GraphFeatures,
        x: &Coords<f64>,
        t: f64,
    ) -> Result<(Coords<f64>, Cache)> {
        let c = &self.config;
        let n = feats.n_atoms;
        if x.len() != n {
            return Err(TrainError::Invalid(format!(
                "coordinates have {} atoms, graph has {n}",
                x.len()
            )));
        }
        if feats.pe_width != c.pe_width {
            return Err(TrainError::Invalid(format!(
                "features built with pe_width {}, model expects {}",
                feats.pe_width, c.pe_width
            )));
        }
        if self.params.len() != c.param_count() {
            return Err(TrainError::Invalid(format!(
                "{} parameters for a config that needs {}",
                self.params.len(),
                c.param_count()
            )));
        }
        let p = &self.params;
        let lay = self.layout();
        let hw = c.hidden_width;
        let dw = c.input_width();
        let ew = c.edge_width();
        let inv = 1.0 / (n.max(2) - 1) as f64;

        let temb = time_embedding(t, c.time_embed_width);
        let mut input = Vec::with_capacity(n * dw);
        for i in 0..n {
            input.extend_from_slice(feats.node_row(i));
            input.extend_from_slice(&temb);
        }
        let mut z0 = vec![0.0; n * hw];
        for i in 0..n {
            let zi = &mut z0[i * hw..(i + 1) * hw];
            zi.copy_from_slice(&p[lay.in_b..lay.in_b + hw]);
            matvec_acc(&p[lay.in_w..lay.in_w + hw * dw], &input[i * dw..(i + 1) * dw], zi);
        }
        let mut h: Vec<f64> = z0.iter().map(|&z| silu(z)).collect();
        check_finite(&h, 0)?;

        let rows = x.rows().to_vec();
        let mut edge = vec![0.0; n * n * ew];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let e = &mut edge[(i * n + j) * ew..(i * n + j + 1) * ew];
                let d = [
                    rows[i][0] - rows[j][0],
                    rows[i][1] - rows[j][1],
                    rows[i][2] - rows[j][2],
                ];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                for (k, ek) in e.iter_mut().take(RBF_COUNT).enumerate() {
                    let u = (r - RBF_SPACING * k as f64) / RBF_SPACING;
                    *ek = (-u * u).exp();
                }
                e[RBF_COUNT] = r / (RBF_SPACING * RBF_COUNT as f64);
                if c.use_pair_bias {
                    e[RBF_COUNT + 1..].copy_from_slice(feats.pair_row(i, j));
                }
            }
        }

        let mut cache_h = Vec::with_capacity(c.n_layers);
        let mut cache_pre = Vec::with_capacity(c.n_layers);
        let mut cache_msg = Vec::with_capacity(c.n_layers);
        let mut cache_agg = Vec::with_capacity(c.n_layers);
        let mut cache_q = Vec::with_capacity(c.n_layers);
        for (li, l) in lay.layers.iter().enumerate() {
            let mut a = vec![0.0; n * hw];
            let mut b = vec![0.0; n * hw];
            for i in 0..n {
                let hi = &h[i * hw..(i + 1) * hw];
                matvec_acc(&p[l.wa..l.wa + hw * hw], hi, &mut a[i * hw..(i + 1) * hw]);
                matvec_acc(&p[l.wb..l.wb + hw * hw], hi, &mut b[i * hw..(i + 1) * hw]);
            }
            let mut pre = vec![0.0; n * n * hw];
            let mut msg = vec![0.0; n * n * hw];
            let mut agg = vec![0.0; n * hw];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let k = i * n + j;
                    let pk = &mut pre[k * hw..(k + 1) * hw];
                    pk.copy_from_slice(&p[l.be..l.be + hw]);
                    matvec_acc(&p[l.we..l.we + hw * ew], &edge[k * ew..(k + 1) * ew], pk);
                    let mk = &mut msg[k * hw..(k + 1) * hw];
                    let ag = &mut agg[i * hw..(i + 1) * hw];
                    for u in 0..hw {
                        let z = pk[u] + a[i * hw + u] + b[j * hw + u];
                        pk[u] = z;
                        mk[u] = silu(z);
                        ag[u] += inv * mk[u];
                    }
                }
            }
            check_finite(&msg, li + 1)?;
            let mut q = Vec::new();
            let h_in = h.clone();
            if let Some((wh1, wh2, bh)) = l.update {
                q = vec![0.0; n * hw];
                for i in 0..n {
                    let qi = &mut q[i * hw..(i + 1) * hw];
                    qi.copy_from_slice(&p[bh..bh + hw]);
                    matvec_acc(&p[wh1..wh1 + hw * hw], &h_in[i * hw..(i + 1) * hw], qi);
                    matvec_acc(&p[wh2..wh2 + hw * hw], &agg[i * hw..(i + 1) * hw], qi);
                }
                for (hv, &qv) in h.iter_mut().zip(&q) {
                    *hv += silu(qv);
                }
                check_finite(&h, li + 1)?;
            }
            cache_h.push(h_in);
            cache_pre.push(pre);
            cache_msg.push(msg);
            cache_agg.push(agg);
            cache_q.push(q);
        }

        let msg = cache_msg.last().expect("at least one layer");
        let wr = &p[lay.radial_w..lay.radial_w + hw];
        let wc = &p[lay.chiral_w..lay.chiral_w + hw];
        let (br, bc) = (p[lay.radial_b], p[lay.chiral_b]);
        let mut out = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mk = &msg[(i * n + j) * hw..(i * n + j + 1) * hw];
                let r = br + wr.iter().zip(mk).map(|(a, b)| a * b).sum::<f64>();
                let cc = bc + wc.iter().zip(mk).map(|(a, b)| a * b).sum::<f64>();
                let xc = cross(rows[i], rows[j]);
                for d in 0..3 {
                    out[i][d] += inv * (r * (rows[i][d] - rows[j][d]) + cc * xc[d]);
                }
            }
        }
        let v = Coords::new(out);
        if !v.is_finite() {
            return Err(TrainError::NonFiniteActivation {
                layer: c.n_layers + 1,
            });
        }
        let cache = Cache {
            n,
            x: rows,
            input,
            z0,
            edge,
            h: cache_h,
            pre: cache_pre,
            msg: cache_msg,
            agg: cache_agg,
            q: cache_q,
        };
        Ok((v, cache))
    }

    /// Accumulates `∂L/∂θ` into `grad` given `dv = ∂L/∂v` for the cached forward pass.
    pub fn backward(&self, cache: &Cache, dv: &Coords<f64>, grad: &mut [f64]) {
        let c = &self.config;
        let p = &self.params;
        let lay = self.layout();
        let n = cache.n;
        let hw = c.hidden_width;
        let dw = c.input_width();
        let ew = c.edge_width();
        let inv = 1.0 / (n.max(2) - 1) as f64;
        let x = &cache.x;
        let g = dv.rows();

        // Output heads.
        let msg = cache.msg.last().expect("at least one layer");
        let wr = &p[lay.radial_w..lay.radial_w + hw];
        let wc = &p[lay.chiral_w..lay.chiral_w + hw];
        let mut dmsg = vec![0.0; n * n * hw];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                let xc = cross(x[i], x[j]);
                let mut dr = 0.0;
                let mut dc = 0.0;
                for d in 0..3 {
                    dr += g[i][d] * (x[i][d] - x[j][d]);
                    dc += g[i][d] * xc[d];
                }
                dr *= inv;
                dc *= inv;
                let mk = &msg[k * hw..(k + 1) * hw];
                grad[lay.radial_b] += dr;
                grad[lay.chiral_b] += dc;
                let dm = &mut dmsg[k * hw..(k + 1) * hw];
                for u in 0..hw {
                    grad[lay.radial_w + u] += dr * mk[u];
                    grad[lay.chiral_w + u] += dc * mk[u];
                    dm[u] = dr * wr[u] + dc * wc[u];
                }
            }
        }

        let mut dh_out = vec![0.0; n * hw];
        for (li, l) in lay.layers.iter().enumerate().rev() {
            let h_in = &cache.h[li];
            let mut dh = vec![0.0; n * hw];
            if let Some((wh1, wh2, bh)) = l.update {
                let q = &cache.q[li];
                let agg = &cache.agg[li];
                let mut dagg = vec![0.0; n * hw];
                for i in 0..n {
                    let s = i * hw..(i + 1) * hw;
                    let dq: Vec<f64> = dh_out[s.clone()]
                        .iter()
                        .zip(&q[s.clone()])
                        .map(|(d, &z)| d * silu_grad(z))
                        .collect();
                    outer_acc(&mut grad[wh1..wh1 + hw * hw], &dq, &h_in[s.clone()]);
                    outer_acc(&mut grad[wh2..wh2 + hw * hw], &dq, &agg[s.clone()]);
                    for (gb, d) in grad[bh..bh + hw].iter_mut().zip(&dq) {
                        *gb += d;
                    }
                    for (o, d) in dh[s.clone()].iter_mut().zip(&dh_out[s.clone()]) {
                        *o += d;
                    }
                    matvec_t_acc(&p[wh1..wh1 + hw * hw], &dq, &mut dh[s.clone()]);
                    matvec_t_acc(&p[wh2..wh2 + hw * hw], &dq, &mut dagg[s]);
                }
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let k = i * n + j;
                        for u in 0..hw {
                            dmsg[k * hw + u] = inv * dagg[i * hw + u];
                        }
                    }
                }
            }
            let pre = &cache.pre[li];
            let mut da = vec![0.0; n * hw];
            let mut db = vec![0.0; n * hw];
            let mut dpre = vec![0.0; hw];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let k = i * n + j;
                    for u in 0..hw {
                        dpre[u] = dmsg[k * hw + u] * silu_grad(pre[k * hw + u]);
                        da[i * hw + u] += dpre[u];
                        db[j * hw + u] += dpre[u];
                        grad[l.be + u] += dpre[u];
                    }
                    outer_acc(&mut grad[l.we..l.we + hw * ew], &dpre, &cache.edge[k * ew..(k + 1) * ew]);
                }
            }
            for i in 0..n {
                let s = i * hw..(i + 1) * hw;
                outer_acc(&mut grad[l.wa..l.wa + hw * hw], &da[s.clone()], &h_in[s.clone()]);
                outer_acc(&mut grad[l.wb..l.wb + hw * hw], &db[s.clone()], &h_in[s.clone()]);
                matvec_t_acc(&p[l.wa..l.wa + hw * hw], &da[s.clone()], &mut dh[s.clone()]);
                matvec_t_acc(&p[l.wb..l.wb + hw * hw], &db[s.clone()], &mut dh[s]);
            }
            dh_out = dh;
        }

        for i in 0..n {
            let s = i * hw..(i + 1) * hw;
            let dz: Vec<f64> = dh_out[s.clone()]
                .iter()
                .zip(&cache.z0[s])
                .map(|(d, &z)| d * silu_grad(z))
                .collect();
            outer_acc(&mut grad[lay.in_w..lay.in_w + hw * dw], &dz, &cache.input[i * dw..(i + 1) * dw]);
            for (gb, d) in grad[lay.in_b..lay.in_b + hw].iter_mut().zip(&dz) {
                *gb += d;
            }
        }
    }
}

fn check_finite(v: &[f64], layer: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TrainError::NonFiniteActivation { layer })
    }
}

use std::ops::Range;

use super::layout::{Layout, EMPTY_OBS_CODE};
use super::real::{gemm, Mat, Real};
use super::DenoiserConfig;
use crate::corpus::{Finding, FindingVector, Slot, TokenId};
use crate::diffusion::Distributions;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Bidirectional transformer over `[condition prefix] ++ canvas`.
///
/// The first `prefix_len` positions carry the finding vector: position `k < 6`
/// sums the observation, severity and laterality embeddings of slot `k`, the
/// remaining prefix positions use an empty code. Attention is unrestricted in
/// both directions. Outputs cover canvas positions only.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<S: Real = f32> {
    config: DenoiserConfig,
    layout: Layout,
    params: Vec<S>,
}

/// `[observation, severity, laterality]` embedding rows per prefix position.
pub fn condition_codes(condition: &FindingVector, prefix_len: usize) -> Vec<[usize; 3]> {
    (0..prefix_len)
        .map(|p| match Slot::ALL.get(p).map(|&s| condition.get(s)) {
            None => [EMPTY_OBS_CODE, 0, 0],
            Some(Finding::Normal) => [0, 0, 0],
            Some(Finding::Abnormal {
                observation,
                severity,
                laterality,
            }) => [
                1 + observation.index(),
                severity.map_or(0, |s| 1 + s as usize),
                laterality.map_or(0, |l| 1 + l as usize),
            ],
        })
        .collect()
}

pub(crate) struct NormCache<S> {
    out: Vec<S>,
    mean: Vec<S>,
    rstd: Vec<S>,
}

pub(crate) struct LayerCache<S> {
    x_in: Vec<S>,
    ln1: NormCache<S>,
    qkv: Vec<S>,
    att: Vec<S>,
    att_y: Vec<S>,
    x_mid: Vec<S>,
    ln2: NormCache<S>,
    fc_pre: Vec<S>,
    fc_act: Vec<S>,
}

/// Activations kept for the backward pass.
pub(crate) struct Cache<S> {
    n: usize,
    tokens: Vec<TokenId>,
    codes: Vec<[usize; 3]>,
    layers: Vec<LayerCache<S>>,
    x_final: Vec<S>,
    lnf: NormCache<S>,
    /// `canvas x vocab` logits.
    pub logits: Vec<S>,
}

fn layer_norm<S: Real>(x: &[S], w: &[S], b: &[S], d: usize) -> NormCache<S> {
    let n = x.len() / d;
    let mut out = vec![S::ZERO; x.len()];
    let mut mean = Vec::with_capacity(n);
    let mut rstd = Vec::with_capacity(n);
    let inv_d = S::from_f64(1.0 / d as f64);
    let eps = S::from_f64(LN_EPS);
    for (row, o) in x.chunks(d).zip(out.chunks_mut(d)) {
        let m = row.iter().copied().sum::<S>() * inv_d;
        let var = row.iter().map(|&v| (v - m) * (v - m)).sum::<S>() * inv_d;
        let r = S::ONE / (var + eps).sqrt();
        for j in 0..d {
            o[j] = (row[j] - m) * r * w[j] + b[j];
        }
        mean.push(m);
        rstd.push(r);
    }
    NormCache { out, mean, rstd }
}

/// Accumulates into `dx`, `dw`, `db`.
fn layer_norm_backward<S: Real>(
    dout: &[S],
    x: &[S],
    cache: &NormCache<S>,
    w: &[S],
    dx: &mut [S],
    dw: &mut [S],
    db: &mut [S],
    d: usize,
) {
    let inv_d = S::from_f64(1.0 / d as f64);
    let mut dnorm = vec![S::ZERO; d];
    let mut norm = vec![S::ZERO; d];
    for (i, (go, xi)) in dout.chunks(d).zip(x.chunks(d)).enumerate() {
        let (m, r) = (cache.mean[i], cache.rstd[i]);
        let mut mean_dn = S::ZERO;
        let mut mean_dn_n = S::ZERO;
        for j in 0..d {
            norm[j] = (xi[j] - m) * r;
            dnorm[j] = go[j] * w[j];
            mean_dn += dnorm[j];
            mean_dn_n += dnorm[j] * norm[j];
            dw[j] += go[j] * norm[j];
            db[j] += go[j];
        }
        mean_dn *= inv_d;
        mean_dn_n *= inv_d;
        let dxi = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            dxi[j] += r * (dnorm[j] - mean_dn - norm[j] * mean_dn_n);
        }
    }
}

fn add_bias<S: Real>(x: &mut [S], b: &[S]) {
    for row in x.chunks_mut(b.len()) {
        for (v, &bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}

fn col_sum_into<S: Real>(x: &[S], width: usize, out: &mut [S]) {
    for row in x.chunks(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn gelu<S: Real>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    half * x * (S::ONE + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<S: Real>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let th = (c * (x + k * x * x * x)).tanh();
    half * (S::ONE + th) + half * x * (S::ONE - th * th) * c * (S::ONE + S::from_f64(3.0) * k * x * x)
}

fn split2<'a, S>(g: &'a mut [S], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [S], &'a mut [S]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

impl<S: Real> Denoiser<S> {
    pub fn from_params(config: DenoiserConfig, params: Vec<S>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.size() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                layout.size(),
                params.len()
            )));
        }
        Ok(Denoiser {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[S]> {
        self.layout.get(name).map(|t| &self.params[t.range.clone()])
    }

    pub fn cast<T: Real>(&self) -> Denoiser<T> {
        Denoiser {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| T::from_f64(p.into())).collect(),
        }
    }

    fn p(&self, r: &Range<usize>) -> &[S] {
        &self.params[r.clone()]
    }

    fn check_input(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Contract("empty input sequence".into()));
        }
        if tokens.len() > self.config.max_canvas() {
            return Err(Error::Contract(format!(
                "sequence length {} exceeds limit {}",
                tokens.len(),
                self.config.max_canvas()
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Contract(format!("token id {t} outside vocabulary")));
        }
        Ok(())
    }

    /// Per-position distributions over the vocabulary for every canvas position.
    pub fn forward(&self, tokens: &[TokenId], condition: &FindingVector) -> Result<Distributions> {
        let cache = self.forward_cached(tokens, condition)?;
        Ok(Distributions::softmax(self.config.vocab_size, &cache.logits))
    }

    pub(crate) fn forward_cached(&self, tokens: &[TokenId], condition: &FindingVector) -> Result<Cache<S>> {
        self.check_input(tokens)?;
        let c = &self.config;
        let (d, f, v, heads, dh) = (c.d_model, c.hidden(), c.vocab_size, c.heads, c.head_dim());
        let np = c.prefix_len;
        let canvas = tokens.len();
        let n = np + canvas;
        let lay = &self.layout;
        let codes = condition_codes(condition, np);

        let mut x = vec![S::ZERO; n * d];
        let (pos, tok) = (self.p(&lay.pos_emb), self.p(&lay.tok_emb));
        let (co, cs, cl) = (self.p(&lay.cond_obs), self.p(&lay.cond_sev), self.p(&lay.cond_lat));
        for (i, row) in x.chunks_mut(d).enumerate() {
            let pe = &pos[i * d..(i + 1) * d];
            if i < np {
                let [o, s, l] = codes[i];
                for j in 0..d {
                    row[j] = pe[j] + co[o * d + j] + cs[s * d + j] + cl[l * d + j];
                }
            } else {
                let t = tokens[i - np] as usize;
                for j in 0..d {
                    row[j] = pe[j] + tok[t * d + j];
                }
            }
        }

        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        let mut layers = Vec::with_capacity(c.layers);
        for ll in &lay.layers {
            let ln1 = layer_norm(&x, self.p(&ll.ln1_w), self.p(&ll.ln1_b), d);
            let mut qkv = vec![S::ZERO; n * 3 * d];
            gemm(n, d, 3 * d, Mat::new(&ln1.out, d), Mat::new(self.p(&ll.qkv_w), 3 * d), S::ZERO, &mut qkv, 3 * d);
            add_bias(&mut qkv, self.p(&ll.qkv_b));

            let mut att = vec![S::ZERO; heads * n * n];
            let mut att_y = vec![S::ZERO; n * d];
            for h in 0..heads {
                let a = &mut att[h * n * n..(h + 1) * n * n];
                let q = Mat::new(&qkv[h * dh..], 3 * d);
                let k = Mat::new(&qkv[d + h * dh..], 3 * d);
                gemm(n, dh, n, q, k.t(), S::ZERO, a, n);
                for row in a.chunks_mut(n) {
                    let mut max = row[0] * scale;
                    for v in row.iter_mut() {
                        *v *= scale;
                        if *v > max {
                            max = *v;
                        }
                    }
                    let mut sum = S::ZERO;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    let inv = S::ONE / sum;
                    for v in row.iter_mut() {
                        *v *= inv;
                    }
                }
                let vv = Mat::new(&qkv[2 * d + h * dh..], 3 * d);
                gemm(n, n, dh, Mat::new(a, n), vv, S::ZERO, &mut att_y[h * dh..], d);
            }

            let mut x_mid = x.clone();
            gemm(n, d, d, Mat::new(&att_y, d), Mat::new(self.p(&ll.out_w), d), S::ONE, &mut x_mid, d);
            add_bias(&mut x_mid, self.p(&ll.out_b));

            let ln2 = layer_norm(&x_mid, self.p(&ll.ln2_w), self.p(&ll.ln2_b), d);
            let mut fc_pre = vec![S::ZERO; n * f];
            gemm(n, d, f, Mat::new(&ln2.out, d), Mat::new(self.p(&ll.fc_w), f), S::ZERO, &mut fc_pre, f);
            add_bias(&mut fc_pre, self.p(&ll.fc_b));
            let fc_act: Vec<S> = fc_pre.iter().map(|&u| gelu(u)).collect();

            let mut x_out = x_mid.clone();
            gemm(n, f, d, Mat::new(&fc_act, f), Mat::new(self.p(&ll.proj_w), d), S::ONE, &mut x_out, d);
            add_bias(&mut x_out, self.p(&ll.proj_b));

            layers.push(LayerCache {
                x_in: std::mem::replace(&mut x, x_out),
                ln1,
                qkv,
                att,
                att_y,
                x_mid,
                ln2,
                fc_pre,
                fc_act,
            });
        }

        let lnf = layer_norm(&x, self.p(&lay.lnf_w), self.p(&lay.lnf_b), d);
        let mut logits = vec![S::ZERO; canvas * v];
        gemm(canvas, d, v, Mat::new(&lnf.out[np * d..], d), Mat::new(self.p(&lay.head_w), v), S::ZERO, &mut logits, v);
        add_bias(&mut logits, self.p(&lay.head_b));

        Ok(Cache {
            n,
            tokens: tokens.to_vec(),
            codes,
            layers,
            x_final: x,
            lnf,
            logits,
        })
    }

    /// Accumulates parameter gradients for `dlogits` (`canvas x vocab`) into `grads`.
    pub(crate) fn backward(&self, cache: &Cache<S>, dlogits: &[S], grads: &mut [S]) {
        let c = &self.config;
        let (d, f, v, heads, dh) = (c.d_model, c.hidden(), c.vocab_size, c.heads, c.head_dim());
        let np = c.prefix_len;
        let n = cache.n;
        let canvas = n - np;
        let lay = &self.layout;
        assert_eq!(dlogits.len(), canvas * v);
        assert_eq!(grads.len(), self.params.len());

        gemm(d, canvas, v, Mat::new(&cache.lnf.out[np * d..], d).t(), Mat::new(dlogits, v), S::ONE, &mut grads[lay.head_w.clone()], v);
        col_sum_into(dlogits, v, &mut grads[lay.head_b.clone()]);
        let mut dln = vec![S::ZERO; n * d];
        gemm(canvas, v, d, Mat::new(dlogits, v), Mat::new(self.p(&lay.head_w), v).t(), S::ZERO, &mut dln[np * d..], d);

        let mut dx = vec![S::ZERO; n * d];
        {
            let (dw, db) = split2(grads, &lay.lnf_w, &lay.lnf_b);
            layer_norm_backward(&dln, &cache.x_final, &cache.lnf, self.p(&lay.lnf_w), &mut dx, dw, db, d);
        }

        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        let mut datt = vec![S::ZERO; n * n];
        for (ll, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP
            gemm(f, n, d, Mat::new(&lc.fc_act, f).t(), Mat::new(&dx, d), S::ONE, &mut grads[ll.proj_w.clone()], d);
            col_sum_into(&dx, d, &mut grads[ll.proj_b.clone()]);
            let mut dfc = vec![S::ZERO; n * f];
            gemm(n, d, f, Mat::new(&dx, d), Mat::new(self.p(&ll.proj_w), d).t(), S::ZERO, &mut dfc, f);
            for (g, &u) in dfc.iter_mut().zip(&lc.fc_pre) {
                *g *= gelu_grad(u);
            }
            gemm(d, n, f, Mat::new(&lc.ln2.out, d).t(), Mat::new(&dfc, f), S::ONE, &mut grads[ll.fc_w.clone()], f);
            col_sum_into(&dfc, f, &mut grads[ll.fc_b.clone()]);
            gemm(n, f, d, Mat::new(&dfc, f), Mat::new(self.p(&ll.fc_w), f).t(), S::ZERO, &mut dln, d);
            let mut dx_mid = dx.clone();
            {
                let (dw, db) = split2(grads, &ll.ln2_w, &ll.ln2_b);
                layer_norm_backward(&dln, &lc.x_mid, &lc.ln2, self.p(&ll.ln2_w), &mut dx_mid, dw, db, d);
            }

            // attention
            gemm(d, n, d, Mat::new(&lc.att_y, d).t(), Mat::new(&dx_mid, d), S::ONE, &mut grads[ll.out_w.clone()], d);
            col_sum_into(&dx_mid, d, &mut grads[ll.out_b.clone()]);
            let mut datt_y = vec![S::ZERO; n * d];
            gemm(n, d, d, Mat::new(&dx_mid, d), Mat::new(self.p(&ll.out_w), d).t(), S::ZERO, &mut datt_y, d);

            let mut dqkv = vec![S::ZERO; n * 3 * d];
            for h in 0..heads {
                let a = &lc.att[h * n * n..(h + 1) * n * n];
                let dy = Mat::new(&datt_y[h * dh..], d);
                let q = Mat::new(&lc.qkv[h * dh..], 3 * d);
                let k = Mat::new(&lc.qkv[d + h * dh..], 3 * d);
                let vv = Mat::new(&lc.qkv[2 * d + h * dh..], 3 * d);
                gemm(n, dh, n, dy, vv.t(), S::ZERO, &mut datt, n);
                gemm(n, n, dh, Mat::new(a, n).t(), dy, S::ZERO, &mut dqkv[2 * d + h * dh..], 3 * d);
                for (ar, gr) in a.chunks(n).zip(datt.chunks_mut(n)) {
                    let dot: S = ar.iter().zip(gr.iter()).map(|(&p, &g)| p * g).sum();
                    for (g, &p) in gr.iter_mut().zip(ar) {
                        *g = p * (*g - dot) * scale;
                    }
                }
                gemm(n, n, dh, Mat::new(&datt, n), k, S::ZERO, &mut dqkv[h * dh..], 3 * d);
                gemm(n, n, dh, Mat::new(&datt, n).t(), q, S::ZERO, &mut dqkv[d + h * dh..], 3 * d);
            }
            gemm(d, n, 3 * d, Mat::new(&lc.ln1.out, d).t(), Mat::new(&dqkv, 3 * d), S::ONE, &mut grads[ll.qkv_w.clone()], 3 * d);
            col_sum_into(&dqkv, 3 * d, &mut grads[ll.qkv_b.clone()]);
            gemm(n, 3 * d, d, Mat::new(&dqkv, 3 * d), Mat::new(self.p(&ll.qkv_w), 3 * d).t(), S::ZERO, &mut dln, d);
            {
                let (dw, db) = split2(grads, &ll.ln1_w, &ll.ln1_b);
                layer_norm_backward(&dln, &lc.x_in, &lc.ln1, self.p(&ll.ln1_w), &mut dx_mid, dw, db, d);
            }
            dx = dx_mid;
        }

        for (i, row) in dx.chunks(d).enumerate() {
            let add = |g: &mut [S], r: &Range<usize>, idx: usize| {
                for (gv, &x) in g[r.start + idx * d..r.start + (idx + 1) * d].iter_mut().zip(row) {
                    *gv += x;
                }
            };
            add(grads, &lay.pos_emb, i);
            if i < np {
                let [o, s, l] = cache.codes[i];
                add(grads, &lay.cond_obs, o);
                add(grads, &lay.cond_sev, s);
                add(grads, &lay.cond_lat, l);
            } else {
                add(grads, &lay.tok_emb, cache.tokens[i - np] as usize);
            }
        }
    }
}

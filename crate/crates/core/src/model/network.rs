use super::params::{AttnIdx, ModelParams};
use super::CHANNELS;
use crate::corpus::ClipSample;
use crate::error::{invalid, Result};
use crate::flow::{ofm_clip, FlowEstimator};
use crate::nn::{
    add_into, attention_backward, attention_forward, conv_backward, conv_forward, gelu, gelu_backward,
    layernorm_backward, layernorm_forward, linear_backward, linear_forward, sigmoid, AttnCache, AttnGrads, AttnWeights,
    ConvCache, ConvShape, LnCache, Real,
};

/// One clip as the network sees it: `F` raw frames for the spatio-temporal
/// branch and the `F` matching motion-guided frames, both channel-planar.
#[derive(Clone, Copy, Debug)]
pub struct ClipInput<'a, T> {
    pub raw: &'a [T],
    pub motion: &'a [T],
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutput<T = f32> {
    pub st_feature: Vec<T>,
    pub mg_feature: Vec<T>,
    pub logit: T,
}

impl<T: Real> BranchOutput<T> {
    pub fn probability(&self) -> T {
        sigmoid(self.logit)
    }
}

struct BlockCache<T> {
    ln_t: LnCache<T>,
    attn_t: AttnCache<T>,
    ln_s: LnCache<T>,
    attn_s: AttnCache<T>,
    ln_f: LnCache<T>,
    h_f: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
}

struct StCache<T> {
    patches: Vec<T>,
    n_patch: usize,
    blocks: Vec<BlockCache<T>>,
    ln_out: LnCache<T>,
}

struct MgCache<T> {
    convs: Vec<(ConvCache<T>, Vec<T>, ConvShape)>,
    feat: Vec<T>,
    normed: Vec<T>,
    u: Vec<T>,
    h: Vec<T>,
}

pub struct ForwardCache<T> {
    st: Option<StCache<T>>,
    mg: Option<MgCache<T>>,
    st_feature: Vec<T>,
    mg_feature: Vec<T>,
}

impl<T> ForwardCache<T> {
    /// Softmax rows of every attention layer, temporal then spatial per block.
    pub fn attention_probs(&self) -> Vec<&[T]> {
        self.st.iter().flat_map(|s| s.blocks.iter().flat_map(|b| [b.attn_t.probs(), b.attn_s.probs()])).collect()
    }
}

fn attn_weights<T: Real>(p: &ModelParams<T>, i: AttnIdx) -> AttnWeights<'_, T> {
    AttnWeights {
        wq: p.t(i.wq),
        bq: p.t(i.bq),
        wk: p.t(i.wk),
        bk: p.t(i.bk),
        wv: p.t(i.wv),
        bv: p.t(i.bv),
        wo: p.t(i.wo),
        bo: p.t(i.bo),
    }
}

fn add_attn_grads<T: Real>(g: &mut ModelParams<T>, i: AttnIdx, a: &AttnGrads<T>) {
    add_into(g.t_mut(i.wq), &a.wq);
    add_into(g.t_mut(i.bq), &a.bq);
    add_into(g.t_mut(i.wk), &a.wk);
    add_into(g.t_mut(i.bk), &a.bk);
    add_into(g.t_mut(i.wv), &a.wv);
    add_into(g.t_mut(i.bv), &a.bv);
    add_into(g.t_mut(i.wo), &a.wo);
    add_into(g.t_mut(i.bo), &a.bo);
}

impl<T: Real> ModelParams<T> {
    /// Two distinct tensors mutably at once.
    fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [T], &mut [T]) {
        assert_ne!(i, j);
        if i < j {
            let (a, b) = self.tensors.split_at_mut(j);
            (&mut a[i].data, &mut b[0].data)
        } else {
            let (a, b) = self.tensors.split_at_mut(i);
            (&mut b[0].data, &mut a[j].data)
        }
    }
}

fn check_frames<T>(p: &ModelParams<T>, frames: &[T], h: usize, w: usize, what: &str) -> Result<()> {
    let cfg = &p.config;
    if h == 0 || w == 0 || h % cfg.patch != 0 || w % cfg.patch != 0 {
        return invalid(format!("{what}: frame {h}x{w} not divisible by patch {}", cfg.patch));
    }
    let per = CHANNELS * h * w;
    if frames.len() != cfg.frames * per {
        return invalid(format!(
            "{what}: expected {} frames of {}x{}x{}, got {} samples",
            cfg.frames,
            CHANNELS,
            h,
            w,
            frames.len()
        ));
    }
    if (h / cfg.patch) * (w / cfg.patch) > cfg.patches() {
        return invalid(format!("{what}: frame {h}x{w} exceeds configured resolution {}", cfg.resolution));
    }
    Ok(())
}

/// Fixed input standardisation applied to raw and motion-guided frames.
/// Uncentred `[0, 1]` pixels make every smooth patch embed to nearly the
/// same direction, which layer normalisation then maps to the same token.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

fn standardize<T: Real>(x: &[T]) -> Vec<T> {
    let (m, s) = (T::lit(INPUT_MEAN), T::lit(1.0 / INPUT_STD));
    x.iter().map(|&v| (v - m) * s).collect()
}

/// `(F·P) × (C·p·p)` patch matrix; patch vectors are `(c, dy, dx)` ordered.
fn extract_patches<T: Real>(raw: &[T], frames: usize, h: usize, w: usize, p: usize) -> Vec<T> {
    let (gh, gw) = (h / p, w / p);
    let pl = CHANNELS * p * p;
    let mut out = vec![T::zero(); frames * gh * gw * pl];
    for f in 0..frames {
        for gy in 0..gh {
            for gx in 0..gw {
                let row = &mut out[((f * gh + gy) * gw + gx) * pl..][..pl];
                for c in 0..CHANNELS {
                    for dy in 0..p {
                        let src = ((f * CHANNELS + c) * h + gy * p + dy) * w + gx * p;
                        row[(c * p + dy) * p..][..p].copy_from_slice(&raw[src..src + p]);
                    }
                }
            }
        }
    }
    out
}

/// Linear patch projection without positional embeddings, `F × P × D`.
pub fn patch_tokens<T: Real>(p: &ModelParams<T>, raw: &[T], h: usize, w: usize) -> Result<Vec<T>> {
    check_frames(p, raw, h, w, "patchify")?;
    let cfg = &p.config;
    let patches = extract_patches(&standardize(raw), cfg.frames, h, w, cfg.patch);
    let n = patches.len() / (CHANNELS * cfg.patch * cfg.patch);
    Ok(linear_forward(
        &patches,
        n,
        p.t(p.layout.patch.0),
        p.t(p.layout.patch.1),
        CHANNELS * cfg.patch * cfg.patch,
        cfg.embed_dim,
    ))
}

/// Patch tokens plus spatial and temporal positional embeddings, `F × P × D`.
pub fn patchify<T: Real>(p: &ModelParams<T>, raw: &[T], h: usize, w: usize) -> Result<Vec<T>> {
    let mut z = patch_tokens(p, raw, h, w)?;
    add_positions(p, &mut z);
    Ok(z)
}

fn add_positions<T: Real>(p: &ModelParams<T>, z: &mut [T]) {
    let d = p.config.embed_dim;
    let np = z.len() / d / p.config.frames;
    let (ps, pt) = (p.t(p.layout.pos_spatial), p.t(p.layout.pos_temporal));
    for (row, tok) in z.chunks_exact_mut(d).enumerate() {
        let (f, i) = (row / np, row % np);
        for j in 0..d {
            tok[j] += ps[i * d + j] + pt[f * d + j];
        }
    }
}

fn st_forward<T: Real>(p: &ModelParams<T>, raw: &[T], h: usize, w: usize) -> (Vec<T>, StCache<T>) {
    let cfg = &p.config;
    let l = &p.layout;
    let (d, f, heads) = (cfg.embed_dim, cfg.frames, cfg.heads);
    let patches = extract_patches(&standardize(raw), f, h, w, cfg.patch);
    let np = (h / cfg.patch) * (w / cfg.patch);
    let n = f * np;
    let mut z = linear_forward(&patches, n, p.t(l.patch.0), p.t(l.patch.1), CHANNELS * cfg.patch * cfg.patch, d);
    add_positions(p, &mut z);
    z.extend_from_slice(p.t(l.cls));
    let inv_f = T::lit(1.0 / f as f64);

    let mut blocks = Vec::with_capacity(l.blocks.len());
    for blk in &l.blocks {
        // temporal attention over frames at each patch position
        let mut xt = vec![T::zero(); n * d];
        for fi in 0..f {
            for pi in 0..np {
                xt[(pi * f + fi) * d..][..d].copy_from_slice(&z[(fi * np + pi) * d..][..d]);
            }
        }
        let (hn, ln_t) = layernorm_forward(&xt, d, p.t(blk.ln_t.0), p.t(blk.ln_t.1));
        let (a, attn_t) = attention_forward(hn, np, f, d, heads, attn_weights(p, blk.attn_t));
        for fi in 0..f {
            for pi in 0..np {
                add_into(&mut z[(fi * np + pi) * d..][..d], &a[(pi * f + fi) * d..][..d]);
            }
        }

        // spatial attention within each frame, class token replicated per frame
        let len = np + 1;
        let mut seq = vec![T::zero(); f * len * d];
        for fi in 0..f {
            seq[fi * len * d..][..d].copy_from_slice(&z[n * d..]);
            seq[(fi * len + 1) * d..][..np * d].copy_from_slice(&z[fi * np * d..][..np * d]);
        }
        let (hn, ln_s) = layernorm_forward(&seq, d, p.t(blk.ln_s.0), p.t(blk.ln_s.1));
        let (a, attn_s) = attention_forward(hn, f, len, d, heads, attn_weights(p, blk.attn_s));
        let mut cls_delta = vec![T::zero(); d];
        for fi in 0..f {
            add_into(&mut z[fi * np * d..][..np * d], &a[(fi * len + 1) * d..][..np * d]);
            add_into(&mut cls_delta, &a[fi * len * d..][..d]);
        }
        for (c, v) in z[n * d..].iter_mut().zip(&cls_delta) {
            *c += *v * inv_f;
        }

        // feed-forward on every token including the class token
        let (h_f, ln_f) = layernorm_forward(&z, d, p.t(blk.ln_f.0), p.t(blk.ln_f.1));
        let u = linear_forward(&h_f, n + 1, p.t(blk.ff1.0), p.t(blk.ff1.1), d, 4 * d);
        let g = gelu(&u);
        let y = linear_forward(&g, n + 1, p.t(blk.ff2.0), p.t(blk.ff2.1), 4 * d, d);
        add_into(&mut z, &y);
        blocks.push(BlockCache { ln_t, attn_t, ln_s, attn_s, ln_f, h_f, u, g });
    }
    let (st, ln_out) = layernorm_forward(&z[n * d..], d, p.t(l.ln_out.0), p.t(l.ln_out.1));
    (st, StCache { patches, n_patch: np, blocks, ln_out })
}

fn st_backward<T: Real>(p: &ModelParams<T>, c: &StCache<T>, dst: &[T], g: &mut ModelParams<T>) {
    let cfg = &p.config;
    let l = &p.layout;
    let (d, f, heads, np) = (cfg.embed_dim, cfg.frames, cfg.heads, c.n_patch);
    let n = f * np;
    let inv_f = T::lit(1.0 / f as f64);
    let mut dz = vec![T::zero(); (n + 1) * d];
    {
        let (dg, db) = g.pair_mut(l.ln_out.0, l.ln_out.1);
        let dcls = layernorm_backward(dst, &c.ln_out, d, p.t(l.ln_out.0), dg, db);
        dz[n * d..].copy_from_slice(&dcls);
    }

    for (blk, bc) in l.blocks.iter().zip(&c.blocks).rev() {
        // feed-forward
        let dgel = {
            let (dw, db) = g.pair_mut(blk.ff2.0, blk.ff2.1);
            linear_backward(&bc.g, &dz, n + 1, p.t(blk.ff2.0), 4 * d, d, dw, db, true).expect("dx")
        };
        let du = gelu_backward(&bc.u, &dgel);
        let dh = {
            let (dw, db) = g.pair_mut(blk.ff1.0, blk.ff1.1);
            linear_backward(&bc.h_f, &du, n + 1, p.t(blk.ff1.0), d, 4 * d, dw, db, true).expect("dx")
        };
        let dx = {
            let (dg, db) = g.pair_mut(blk.ln_f.0, blk.ln_f.1);
            layernorm_backward(&dh, &bc.ln_f, d, p.t(blk.ln_f.0), dg, db)
        };
        add_into(&mut dz, &dx);

        // spatial attention
        let len = np + 1;
        let mut da = vec![T::zero(); f * len * d];
        for fi in 0..f {
            for (o, &v) in da[fi * len * d..][..d].iter_mut().zip(&dz[n * d..]) {
                *o = v * inv_f;
            }
            da[(fi * len + 1) * d..][..np * d].copy_from_slice(&dz[fi * np * d..][..np * d]);
        }
        let (dh, ag) = attention_backward(&da, &bc.attn_s, f, len, d, heads, attn_weights(p, blk.attn_s));
        add_attn_grads(g, blk.attn_s, &ag);
        let dseq = {
            let (dg, db) = g.pair_mut(blk.ln_s.0, blk.ln_s.1);
            layernorm_backward(&dh, &bc.ln_s, d, p.t(blk.ln_s.0), dg, db)
        };
        for fi in 0..f {
            add_into(&mut dz[fi * np * d..][..np * d], &dseq[(fi * len + 1) * d..][..np * d]);
            let (head, tail) = dz.split_at_mut(n * d);
            let _ = head;
            add_into(tail, &dseq[fi * len * d..][..d]);
        }

        // temporal attention
        let mut da = vec![T::zero(); n * d];
        for fi in 0..f {
            for pi in 0..np {
                da[(pi * f + fi) * d..][..d].copy_from_slice(&dz[(fi * np + pi) * d..][..d]);
            }
        }
        let (dh, ag) = attention_backward(&da, &bc.attn_t, np, f, d, heads, attn_weights(p, blk.attn_t));
        add_attn_grads(g, blk.attn_t, &ag);
        let dxt = {
            let (dg, db) = g.pair_mut(blk.ln_t.0, blk.ln_t.1);
            layernorm_backward(&dh, &bc.ln_t, d, p.t(blk.ln_t.0), dg, db)
        };
        for fi in 0..f {
            for pi in 0..np {
                add_into(&mut dz[(fi * np + pi) * d..][..d], &dxt[(pi * f + fi) * d..][..d]);
            }
        }
    }

    add_into(g.t_mut(l.cls), &dz[n * d..]);
    let dtok = &dz[..n * d];
    {
        let pos_s = g.t_mut(l.pos_spatial);
        for (row, t) in dtok.chunks_exact(d).enumerate() {
            add_into(&mut pos_s[(row % np) * d..][..d], t);
        }
    }
    {
        let pos_t = g.t_mut(l.pos_temporal);
        for (row, t) in dtok.chunks_exact(d).enumerate() {
            add_into(&mut pos_t[(row / np) * d..][..d], t);
        }
    }
    let pl = CHANNELS * cfg.patch * cfg.patch;
    let (dw, db) = g.pair_mut(l.patch.0, l.patch.1);
    linear_backward(&c.patches, dtok, n, p.t(l.patch.0), pl, d, dw, db, false);
}

fn to_channel_last<T: Real>(planar: &[T], frames: usize, hw: usize) -> Vec<T> {
    let mut x = vec![T::zero(); planar.len()];
    for f in 0..frames {
        for c in 0..CHANNELS {
            let src = &planar[(f * CHANNELS + c) * hw..][..hw];
            for (i, &v) in src.iter().enumerate() {
                x[(f * hw + i) * CHANNELS + c] = v;
            }
        }
    }
    x
}

/// Convolution stack and global pooling; returns per-frame vectors
/// concatenated (`F × D`).
fn mg_backbone<T: Real>(
    p: &ModelParams<T>,
    motion: &[T],
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<(ConvCache<T>, Vec<T>, ConvShape)>) {
    let cfg = &p.config;
    let f = cfg.frames;
    let mut x = to_channel_last(&standardize(motion), f, h * w);
    let (mut hh, mut ww, mut cin) = (h, w, CHANNELS);
    let mut caches = Vec::with_capacity(p.layout.convs.len());
    for (&(wi, bi), &cout) in p.layout.convs.iter().zip(&cfg.mg_channels) {
        let shape = ConvShape { images: f, height: hh, width: ww, cin, cout };
        let (z, cc) = conv_forward(&x, &shape, p.t(wi), p.t(bi));
        x = gelu(&z);
        caches.push((cc, z, shape));
        (hh, ww) = shape.out_hw();
        cin = cout;
    }
    let hw = hh * ww;
    let inv = T::lit(1.0 / hw as f64);
    let mut feat = vec![T::zero(); f * cin];
    for fi in 0..f {
        let out = &mut feat[fi * cin..][..cin];
        for pix in x[fi * hw * cin..][..hw * cin].chunks_exact(cin) {
            add_into(out, pix);
        }
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
    (feat, caches)
}

fn mg_forward<T: Real>(p: &ModelParams<T>, motion: &[T], h: usize, w: usize) -> (Vec<T>, MgCache<T>) {
    let cfg = &p.config;
    let l = &p.layout;
    let (feat, convs) = mg_backbone(p, motion, h, w);
    let (scale, offset) = (p.t(l.mg_norm.0), p.t(l.mg_norm.1));
    let normed: Vec<T> = feat
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = i % cfg.embed_dim;
            v * scale[ch] + offset[ch]
        })
        .collect();
    let u = linear_forward(&normed, 1, p.t(l.mg_fc1.0), p.t(l.mg_fc1.1), cfg.frames * cfg.embed_dim, cfg.mlp_hidden);
    let hid = gelu(&u);
    let out = linear_forward(&hid, 1, p.t(l.mg_fc2.0), p.t(l.mg_fc2.1), cfg.mlp_hidden, cfg.embed_dim);
    (out, MgCache { convs, feat, normed, u, h: hid })
}

fn mg_backward<T: Real>(p: &ModelParams<T>, c: &MgCache<T>, dmg: &[T], g: &mut ModelParams<T>) {
    let cfg = &p.config;
    let l = &p.layout;
    let (d, f) = (cfg.embed_dim, cfg.frames);
    let dh = {
        let (dw, db) = g.pair_mut(l.mg_fc2.0, l.mg_fc2.1);
        linear_backward(&c.h, dmg, 1, p.t(l.mg_fc2.0), cfg.mlp_hidden, d, dw, db, true).expect("dx")
    };
    let du = gelu_backward(&c.u, &dh);
    let dnormed = {
        let (dw, db) = g.pair_mut(l.mg_fc1.0, l.mg_fc1.1);
        linear_backward(&c.normed, &du, 1, p.t(l.mg_fc1.0), f * d, cfg.mlp_hidden, dw, db, true).expect("dx")
    };
    let scale = p.t(l.mg_norm.0);
    let mut dfeat = vec![T::zero(); f * d];
    {
        let (dg, db) = g.pair_mut(l.mg_norm.0, l.mg_norm.1);
        for (i, (&dn, &v)) in dnormed.iter().zip(&c.feat).enumerate() {
            let ch = i % d;
            dg[ch] += dn * v;
            db[ch] += dn;
            dfeat[i] = dn * scale[ch];
        }
    }
    let last = c.convs.last().expect("at least one conv").2;
    let (oh, ow) = last.out_hw();
    let hw = oh * ow;
    let inv = T::lit(1.0 / hw as f64);
    let mut da = vec![T::zero(); f * hw * d];
    for fi in 0..f {
        for pix in 0..hw {
            for ch in 0..d {
                da[(fi * hw + pix) * d + ch] = dfeat[fi * d + ch] * inv;
            }
        }
    }
    for (i, ((cc, z, shape), &(wi, bi))) in c.convs.iter().zip(&l.convs).enumerate().rev() {
        let dz = gelu_backward(z, &da);
        let (dw, db) = g.pair_mut(wi, bi);
        match conv_backward(&dz, cc, shape, p.t(wi), dw, db, i > 0) {
            Some(dx) => da = dx,
            None => break,
        }
    }
}

/// Per-frame pooled backbone vectors of the motion-guided branch, before
/// the concatenation MLP.
pub fn mg_frame_features<T: Real>(p: &ModelParams<T>, motion: &[T], h: usize, w: usize) -> Result<Vec<Vec<T>>> {
    check_frames(p, motion, h, w, "motion frames")?;
    let (feat, _) = mg_backbone(p, motion, h, w);
    Ok(feat.chunks_exact(p.config.embed_dim).map(<[T]>::to_vec).collect())
}

/// Data-dependent init of the per-channel affine applied to pooled
/// motion features: afterwards each channel has zero mean and unit
/// variance over `frames` (per-frame vectors from
/// [`mg_frame_features`]). Pooled responses of a random conv stack differ
/// between inputs by a tiny fraction of their common offset, which leaves
/// the concat MLP on a long flat stretch without this.
pub fn calibrate_pool_norm(p: &mut ModelParams<f32>, frames: &[Vec<f32>]) -> Result<()> {
    let d = p.config.embed_dim;
    if frames.is_empty() || frames.iter().any(|v| v.len() != d) {
        return invalid(format!("calibration needs non-empty {d}-vectors"));
    }
    let n = frames.len() as f64;
    let (si, oi) = p.layout.mg_norm;
    for ch in 0..d {
        let mean = frames.iter().map(|v| v[ch] as f64).sum::<f64>() / n;
        let var = frames.iter().map(|v| (v[ch] as f64 - mean).powi(2)).sum::<f64>() / n;
        let s = 1.0 / (var.sqrt() + 1e-6);
        p.tensors[si].data[ch] = s as f32;
        p.tensors[oi].data[ch] = (-mean * s) as f32;
    }
    Ok(())
}

pub fn forward<T: Real>(p: &ModelParams<T>, input: &ClipInput<'_, T>) -> Result<(BranchOutput<T>, ForwardCache<T>)> {
    let (h, w) = (input.height, input.width);
    let d = p.config.embed_dim;
    let mode = p.config.branches;
    check_frames(p, input.raw, h, w, "raw frames")?;
    check_frames(p, input.motion, h, w, "motion frames")?;
    let (st_feature, st) = if mode.uses_st() {
        let (f, c) = st_forward(p, input.raw, h, w);
        (f, Some(c))
    } else {
        (vec![T::zero(); d], None)
    };
    let (mg_feature, mg) = if mode.uses_mg() {
        let (f, c) = mg_forward(p, input.motion, h, w);
        (f, Some(c))
    } else {
        (vec![T::zero(); d], None)
    };
    let fw = p.t(p.layout.fuse.0);
    let logit = p.t(p.layout.fuse.1)[0]
        + fw[..d].iter().zip(&st_feature).map(|(&a, &b)| a * b).sum::<T>()
        + fw[d..].iter().zip(&mg_feature).map(|(&a, &b)| a * b).sum::<T>();
    let out = BranchOutput { st_feature: st_feature.clone(), mg_feature: mg_feature.clone(), logit };
    Ok((out, ForwardCache { st, mg, st_feature, mg_feature }))
}

/// Parameter gradients for an upstream gradient `dlogit` on the logit.
pub fn backward<T: Real>(p: &ModelParams<T>, cache: &ForwardCache<T>, dlogit: T) -> ModelParams<T> {
    let d = p.config.embed_dim;
    let mut g = p.zeros_like();
    let l = &p.layout;
    {
        let fw = g.t_mut(l.fuse.0);
        for j in 0..d {
            fw[j] = dlogit * cache.st_feature[j];
            fw[d + j] = dlogit * cache.mg_feature[j];
        }
    }
    g.t_mut(l.fuse.1)[0] = dlogit;
    let fw = p.t(l.fuse.0);
    if let Some(st) = &cache.st {
        let dst: Vec<T> = fw[..d].iter().map(|&w| w * dlogit).collect();
        st_backward(p, st, &dst, &mut g);
    }
    if let Some(mg) = &cache.mg {
        let dmg: Vec<T> = fw[d..].iter().map(|&w| w * dlogit).collect();
        mg_backward(p, mg, &dmg, &mut g);
    }
    g
}

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_with_logit<T: Real>(logit: T, target: T) -> T {
    logit.max(T::zero()) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Loss, logit and parameter gradients for one labelled clip.
pub fn loss_and_grad<T: Real>(
    p: &ModelParams<T>,
    input: &ClipInput<'_, T>,
    target: T,
) -> Result<(T, T, ModelParams<T>)> {
    let (out, cache) = forward(p, input)?;
    let loss = bce_with_logit(out.logit, target);
    let grads = backward(p, &cache, sigmoid(out.logit) - target);
    Ok((loss, out.logit, grads))
}

/// Full pipeline on an `F + 1` frame clip: raw frames `0..F` feed the
/// spatio-temporal branch, optical flow modulation of all `F + 1` frames
/// feeds the motion-guided branch.
pub fn forward_clip(
    p: &ModelParams<f32>,
    clip: &ClipSample,
    estimator: &dyn FlowEstimator,
) -> Result<BranchOutput<f32>> {
    let f = p.config.frames;
    let motion = ofm_clip(clip, f, estimator)?;
    let raw = &clip.frames.data[..f * clip.frames.frame_len()];
    let input = ClipInput { raw, motion: &motion.data, height: clip.frames.height, width: clip.frames.width };
    forward(p, &input).map(|(o, _)| o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    #[test]
    fn bce_values() {
        assert!((bce_with_logit(0.0f64, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logit(0.0f64, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let v = bce_with_logit(20.0f64, 1.0);
        assert!((v - 2.061_153_6e-9).abs() < 1e-15, "{v}");
        assert!(bce_with_logit(1000.0f32, 0.0).is_finite());
    }

    #[test]
    fn patch_extraction_order() {
        let cfg = ModelConfig {
            frames: 1,
            patch: 2,
            embed_dim: 4,
            heads: 1,
            mg_channels: vec![4],
            resolution: 4,
            ..ModelConfig::default()
        };
        let p = init_params(&cfg, 0).unwrap();
        let _ = p;
        let raw: Vec<f64> = (0..3 * 16).map(|i| i as f64).collect();
        let patches = extract_patches(&raw, 1, 4, 4, 2);
        // patch (0,1), channel 0: rows 0..2, cols 2..4
        assert_eq!(&patches[12..16], &[2.0, 3.0, 6.0, 7.0]);
        // patch (1,0), channel 2
        assert_eq!(&patches[2 * 12 + 8..3 * 12], &[32.0 + 8.0, 41.0, 44.0, 45.0]);
    }
}

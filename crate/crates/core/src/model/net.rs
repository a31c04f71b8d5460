//! Forward and backward passes.
//!
//! A batch is a set of windows over one [`CellTable`]. Each distinct cell
//! feature vector goes through the dimension-reduction MLP once per batch
//! (and, for the fine branch, through the per-cell layer once), no matter
//! how many windows or positions reference it.

use std::collections::HashMap;

use super::{Model, ModelConfig, ModelKind};
use crate::features::WindowTensor;

/// Interned cell feature vectors; equal vectors (bitwise) share one id.
#[derive(Debug, Clone)]
pub struct CellTable {
    dim: usize,
    data: Vec<f64>,
    index: HashMap<Vec<u64>, u32>,
}

impl CellTable {
    pub fn new(dim: usize) -> Self {
        CellTable {
            dim,
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let o = id as usize * self.dim;
        &self.data[o..o + self.dim]
    }

    pub fn intern(&mut self, v: &[f64]) -> u32 {
        assert_eq!(v.len(), self.dim, "cell vector has the wrong dimension");
        let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.len() as u32;
        self.data.extend_from_slice(v);
        self.index.insert(key, id);
        id
    }

    /// Row-major cell ids of a window tensor.
    pub fn intern_tensor(&mut self, t: &WindowTensor) -> Vec<u32> {
        t.data.chunks_exact(t.dim).map(|c| self.intern(c)).collect()
    }
}

#[derive(Debug, Clone)]
struct Stage {
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    input: Vec<f64>,
    /// Post-ReLU activations, `h x w x c_out`.
    act: Vec<f64>,
    /// Flat index into `act` of each pooled maximum.
    argmax: Vec<u32>,
}

#[derive(Debug, Clone)]
struct CoarseCache {
    stages: Vec<Stage>,
    flat: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    locals: Vec<u32>,
    windows: Vec<Vec<u32>>,
    x: Vec<f64>,
    hidden: Vec<f64>,
    reduced: Vec<f64>,
    coarse: Vec<CoarseCache>,
    norms: Vec<f64>,
    out: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.out
    }

    /// ReLU masks and pooling choices; equal patterns mean the network is
    /// the same smooth function in a neighbourhood of both evaluations.
    pub fn pattern(&self) -> Vec<u32> {
        let mut p: Vec<u32> = self.hidden.iter().map(|&h| (h > 0.0) as u32).collect();
        for c in &self.coarse {
            for s in &c.stages {
                p.extend(s.act.iter().map(|&a| (a > 0.0) as u32));
                p.extend_from_slice(&s.argmax);
            }
        }
        p
    }
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    conv: Vec<(usize, usize)>,
    fc_w: usize,
    fc_b: usize,
    fine_w: usize,
    fine_b: usize,
}

pub(crate) struct Net<'a> {
    cfg: &'a ModelConfig,
    kind: ModelKind,
    p: &'a [f64],
    off: Offsets,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = W x + b`, `W` stored `[out, in]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        *y = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
    }
}

/// Accumulates `dW += dy x^T`, `db += dy` and (optionally) `dx += W^T dy`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        row.iter_mut().zip(x).for_each(|(d, xv)| *d += g * xv);
        if let Some(dx) = dx.as_deref_mut() {
            let wr = &w[o * n_in..(o + 1) * n_in];
            dx.iter_mut().zip(wr).for_each(|(d, wv)| *d += g * wv);
        }
    }
}

/// Unit vector and the norm it was divided by. A zero vector stays zero.
pub(crate) fn normalize(z: Vec<f64>) -> (Vec<f64>, f64) {
    let n = dot(&z, &z).sqrt();
    if n == 0.0 {
        return (z, 0.0);
    }
    (z.into_iter().map(|v| v / n).collect(), n)
}

fn normalize_backward(y: &[f64], n: f64, dy: &[f64]) -> Vec<f64> {
    if n == 0.0 {
        return vec![0.0; y.len()];
    }
    let yd = dot(y, dy);
    y.iter().zip(dy).map(|(yv, g)| (g - yv * yd) / n).collect()
}

impl<'a> Net<'a> {
    pub(crate) fn new(model: &'a Model) -> Self {
        let find = |name: &str| {
            model
                .specs()
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.offset)
                .unwrap_or(usize::MAX)
        };
        let conv = (0..model.config.conv_channels.len())
            .map(|i| (find(&format!("conv{i}.w")), find(&format!("conv{i}.b"))))
            .collect();
        Net {
            cfg: &model.config,
            kind: model.kind,
            p: &model.params,
            off: Offsets {
                w1: find("reduce.w1"),
                b1: find("reduce.b1"),
                w2: find("reduce.w2"),
                b2: find("reduce.b2"),
                conv,
                fc_w: find("fc.w"),
                fc_b: find("fc.b"),
                fine_w: find("fine.w"),
                fine_b: find("fine.b"),
            },
        }
    }

    fn slice(&self, off: usize, len: usize) -> &'a [f64] {
        &self.p[off..off + len]
    }

    fn reduce(&self, x: &[f64], hidden: &mut [f64], reduced: &mut [f64]) {
        let c = self.cfg;
        affine(
            self.slice(self.off.w1, c.d_hidden * c.d_cell),
            self.slice(self.off.b1, c.d_hidden),
            x,
            hidden,
        );
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        affine(
            self.slice(self.off.w2, c.d_reduce * c.d_hidden),
            self.slice(self.off.b2, c.d_reduce),
            hidden,
            reduced,
        );
    }

    fn fine_code(&self, reduced: &[f64], code: &mut [f64]) {
        let c = self.cfg;
        affine(
            self.slice(self.off.fine_w, c.d_fine_per_cell * c.d_reduce),
            self.slice(self.off.fine_b, c.d_fine_per_cell),
            reduced,
            code,
        );
    }

    /// Fine-branch code of one cell feature vector.
    pub(crate) fn cell_code(&self, x: &[f64]) -> Vec<f64> {
        let c = self.cfg;
        let mut hidden = vec![0.0; c.d_hidden];
        let mut reduced = vec![0.0; c.d_reduce];
        let mut code = vec![0.0; c.d_fine_per_cell];
        self.reduce(x, &mut hidden, &mut reduced);
        self.fine_code(&reduced, &mut code);
        code
    }

    fn conv_forward(&self, i: usize, input: Vec<f64>, h: usize, w: usize, c_in: usize) -> Stage {
        let k = self.cfg.kernel;
        let pad = (k / 2) as isize;
        let c_out = self.cfg.conv_channels[i];
        let (wo, bo) = self.off.conv[i];
        let wt = self.slice(wo, k * k * c_out * c_in);
        let bias = self.slice(bo, c_out);
        let mut act = vec![0.0; h * w * c_out];
        for r in 0..h {
            for c in 0..w {
                let y = &mut act[(r * w + c) * c_out..(r * w + c + 1) * c_out];
                y.copy_from_slice(bias);
                for dr in 0..k {
                    let rr = r as isize + dr as isize - pad;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in 0..k {
                        let cc = c as isize + dc as isize - pad;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        let px = (rr as usize * w + cc as usize) * c_in;
                        let xs = &input[px..px + c_in];
                        let block = &wt[(dr * k + dc) * c_out * c_in..(dr * k + dc + 1) * c_out * c_in];
                        for (o, yv) in y.iter_mut().enumerate() {
                            *yv += dot(&block[o * c_in..(o + 1) * c_in], xs);
                        }
                    }
                }
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
        let mut argmax = vec![0u32; ph * pw * c_out];
        for pr in 0..ph {
            for pc in 0..pw {
                for o in 0..c_out {
                    let mut best = usize::MAX;
                    for r in 2 * pr..(2 * pr + 2).min(h) {
                        for c in 2 * pc..(2 * pc + 2).min(w) {
                            let idx = (r * w + c) * c_out + o;
                            if best == usize::MAX || act[idx] > act[best] {
                                best = idx;
                            }
                        }
                    }
                    argmax[(pr * pw + pc) * c_out + o] = best as u32;
                }
            }
        }
        Stage {
            h,
            w,
            c_in,
            c_out,
            input,
            act,
            argmax,
        }
    }

    fn coarse_forward(&self, grid: Vec<f64>) -> (Vec<f64>, CoarseCache) {
        let c = self.cfg;
        let (mut h, mut w, mut ch) = (c.n_r, c.n_c, c.d_reduce);
        let mut stages = Vec::with_capacity(c.conv_channels.len());
        let mut x = grid;
        for i in 0..c.conv_channels.len() {
            let st = self.conv_forward(i, x, h, w, ch);
            x = st.argmax.iter().map(|&a| st.act[a as usize]).collect();
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            ch = st.c_out;
            stages.push(st);
        }
        let flat = x;
        let mut z = vec![0.0; c.d_coarse];
        affine(
            self.slice(self.off.fc_w, c.d_coarse * flat.len()),
            self.slice(self.off.fc_b, c.d_coarse),
            &flat,
            &mut z,
        );
        (z, CoarseCache { stages, flat })
    }

    pub(crate) fn forward(&self, table: &CellTable, windows: &[&[u32]]) -> ForwardCache {
        let c = self.cfg;
        let cells = c.n_r * c.n_c;
        let mut local_of: HashMap<u32, u32> = HashMap::new();
        let mut locals = Vec::new();
        let local_windows: Vec<Vec<u32>> = windows
            .iter()
            .map(|ids| {
                assert_eq!(ids.len(), cells, "window has the wrong number of cells");
                ids.iter()
                    .map(|&id| {
                        *local_of.entry(id).or_insert_with(|| {
                            locals.push(id);
                            (locals.len() - 1) as u32
                        })
                    })
                    .collect()
            })
            .collect();

        let n = locals.len();
        let mut x = Vec::with_capacity(n * c.d_cell);
        for &id in &locals {
            x.extend_from_slice(table.row(id));
        }
        let mut hidden = vec![0.0; n * c.d_hidden];
        let mut reduced = vec![0.0; n * c.d_reduce];
        for l in 0..n {
            self.reduce(
                &x[l * c.d_cell..(l + 1) * c.d_cell],
                &mut hidden[l * c.d_hidden..(l + 1) * c.d_hidden],
                &mut reduced[l * c.d_reduce..(l + 1) * c.d_reduce],
            );
        }

        let mut coarse = Vec::new();
        let mut out = Vec::with_capacity(windows.len());
        let mut norms = Vec::with_capacity(windows.len());
        match self.kind {
            ModelKind::Fine => {
                let dpc = c.d_fine_per_cell;
                let mut codes = vec![0.0; n * dpc];
                for l in 0..n {
                    self.fine_code(
                        &reduced[l * c.d_reduce..(l + 1) * c.d_reduce],
                        &mut codes[l * dpc..(l + 1) * dpc],
                    );
                }
                for lw in &local_windows {
                    let mut z = Vec::with_capacity(cells * dpc);
                    for &l in lw {
                        z.extend_from_slice(&codes[l as usize * dpc..(l as usize + 1) * dpc]);
                    }
                    let (y, nz) = normalize(z);
                    out.push(y);
                    norms.push(nz);
                }
            }
            ModelKind::Coarse => {
                for lw in &local_windows {
                    let mut grid = Vec::with_capacity(cells * c.d_reduce);
                    for &l in lw {
                        grid.extend_from_slice(&reduced[l as usize * c.d_reduce..(l as usize + 1) * c.d_reduce]);
                    }
                    let (z, cache) = self.coarse_forward(grid);
                    let (y, nz) = normalize(z);
                    out.push(y);
                    norms.push(nz);
                    coarse.push(cache);
                }
            }
        }
        ForwardCache {
            locals,
            windows: local_windows,
            x,
            hidden,
            reduced,
            coarse,
            norms,
            out,
        }
    }

    fn conv_backward(&self, i: usize, st: &Stage, d_pooled: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let k = self.cfg.kernel;
        let pad = (k / 2) as isize;
        let (h, w, c_in, c_out) = (st.h, st.w, st.c_in, st.c_out);
        let mut d_act = vec![0.0; h * w * c_out];
        for (g, &a) in d_pooled.iter().zip(&st.argmax) {
            d_act[a as usize] += g;
        }
        for (d, &a) in d_act.iter_mut().zip(&st.act) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let (wo, bo) = self.off.conv[i];
        let wt = self.slice(wo, k * k * c_out * c_in);
        let mut dx = vec![0.0; h * w * c_in];
        let (dw_all, db_all) = {
            let (lo, hi) = grad.split_at_mut(bo);
            (&mut lo[wo..wo + k * k * c_out * c_in], &mut hi[..c_out])
        };
        for r in 0..h {
            for c in 0..w {
                let dy = &d_act[(r * w + c) * c_out..(r * w + c + 1) * c_out];
                if dy.iter().all(|&g| g == 0.0) {
                    continue;
                }
                db_all.iter_mut().zip(dy).for_each(|(d, g)| *d += g);
                for dr in 0..k {
                    let rr = r as isize + dr as isize - pad;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in 0..k {
                        let cc = c as isize + dc as isize - pad;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        let px = (rr as usize * w + cc as usize) * c_in;
                        let xs = &st.input[px..px + c_in];
                        let boff = (dr * k + dc) * c_out * c_in;
                        for (o, &g) in dy.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            let wrow = &wt[boff + o * c_in..boff + (o + 1) * c_in];
                            let dwrow = &mut dw_all[boff + o * c_in..boff + (o + 1) * c_in];
                            dwrow.iter_mut().zip(xs).for_each(|(d, xv)| *d += g * xv);
                            dx[px..px + c_in].iter_mut().zip(wrow).for_each(|(d, wv)| *d += g * wv);
                        }
                    }
                }
            }
        }
        dx
    }

    /// Adds `d(sum_w <d_out[w], out[w]>)/d(params)` into `grad`.
    /// Windows whose `d_out` is all zero are skipped.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: &[Vec<f64>], grad: &mut [f64]) {
        let c = self.cfg;
        let n = cache.locals.len();
        let mut d_reduced = vec![0.0; n * c.d_reduce];
        match self.kind {
            ModelKind::Fine => {
                let dpc = c.d_fine_per_cell;
                let mut d_codes = vec![0.0; n * dpc];
                for (wi, dy) in d_out.iter().enumerate() {
                    if dy.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    let dz = normalize_backward(&cache.out[wi], cache.norms[wi], dy);
                    for (pos, &l) in cache.windows[wi].iter().enumerate() {
                        let l = l as usize;
                        d_codes[l * dpc..(l + 1) * dpc]
                            .iter_mut()
                            .zip(&dz[pos * dpc..(pos + 1) * dpc])
                            .for_each(|(d, g)| *d += g);
                    }
                }
                let fw = self.slice(self.off.fine_w, dpc * c.d_reduce);
                for l in 0..n {
                    let dcode = &d_codes[l * dpc..(l + 1) * dpc];
                    if dcode.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    let (lo, hi) = grad.split_at_mut(self.off.fine_b);
                    affine_backward(
                        fw,
                        &cache.reduced[l * c.d_reduce..(l + 1) * c.d_reduce],
                        dcode,
                        &mut lo[self.off.fine_w..self.off.fine_w + dpc * c.d_reduce],
                        &mut hi[..dpc],
                        Some(&mut d_reduced[l * c.d_reduce..(l + 1) * c.d_reduce]),
                    );
                }
            }
            ModelKind::Coarse => {
                for (wi, dy) in d_out.iter().enumerate() {
                    if dy.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    let dz = normalize_backward(&cache.out[wi], cache.norms[wi], dy);
                    let cc = &cache.coarse[wi];
                    let mut d_flat = vec![0.0; cc.flat.len()];
                    {
                        let (lo, hi) = grad.split_at_mut(self.off.fc_b);
                        affine_backward(
                            self.slice(self.off.fc_w, c.d_coarse * cc.flat.len()),
                            &cc.flat,
                            &dz,
                            &mut lo[self.off.fc_w..self.off.fc_w + c.d_coarse * cc.flat.len()],
                            &mut hi[..c.d_coarse],
                            Some(&mut d_flat),
                        );
                    }
                    let mut d = d_flat;
                    for (i, st) in cc.stages.iter().enumerate().rev() {
                        d = self.conv_backward(i, st, &d, grad);
                    }
                    for (pos, &l) in cache.windows[wi].iter().enumerate() {
                        let l = l as usize;
                        d_reduced[l * c.d_reduce..(l + 1) * c.d_reduce]
                            .iter_mut()
                            .zip(&d[pos * c.d_reduce..(pos + 1) * c.d_reduce])
                            .for_each(|(a, g)| *a += g);
                    }
                }
            }
        }

        let w2 = self.slice(self.off.w2, c.d_reduce * c.d_hidden);
        let w1 = self.slice(self.off.w1, c.d_hidden * c.d_cell);
        let mut d_hidden = vec![0.0; c.d_hidden];
        for l in 0..n {
            let dr = &d_reduced[l * c.d_reduce..(l + 1) * c.d_reduce];
            if dr.iter().all(|&g| g == 0.0) {
                continue;
            }
            let hid = &cache.hidden[l * c.d_hidden..(l + 1) * c.d_hidden];
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            {
                let (lo, hi) = grad.split_at_mut(self.off.b2);
                affine_backward(
                    w2,
                    hid,
                    dr,
                    &mut lo[self.off.w2..self.off.w2 + c.d_reduce * c.d_hidden],
                    &mut hi[..c.d_reduce],
                    Some(&mut d_hidden),
                );
            }
            for (d, &hv) in d_hidden.iter_mut().zip(hid) {
                if hv <= 0.0 {
                    *d = 0.0;
                }
            }
            let (lo, hi) = grad.split_at_mut(self.off.b1);
            affine_backward(
                w1,
                &cache.x[l * c.d_cell..(l + 1) * c.d_cell],
                &d_hidden,
                &mut lo[self.off.w1..self.off.w1 + c.d_hidden * c.d_cell],
                &mut hi[..c.d_hidden],
                None,
            );
        }
    }
}

impl Model {
    /// Forward pass over a batch of windows, keeping the backward cache.
    pub fn forward(&self, table: &CellTable, windows: &[&[u32]]) -> (Vec<Vec<f64>>, ForwardCache) {
        let cache = Net::new(self).forward(table, windows);
        (cache.out.clone(), cache)
    }

    /// Accumulates parameter gradients of `sum_w <d_out[w], phi(w)>`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[Vec<f64>], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer has the wrong length");
        Net::new(self).backward(cache, d_out, grad);
    }
}

//! Brute-force reference pruner for small grids.
//!
//! Deliberately naive: quotas are handed out one unit at a time by scanning
//! for the best remainder, and a token is kept iff fewer than `quota` tokens
//! of its region outrank it.

#![allow(dead_code)]

#[derive(Debug, Clone)]
pub struct Instance {
    /// Sub-image count S; the thumbnail is always present.
    pub sub_images: usize,
    pub n: usize,
    /// Region scores for the S sub-images.
    pub a: Vec<f32>,
    pub b: Vec<f32>,
    pub c: Vec<f32>,
    pub alpha: f32,
    pub ratio: f64,
}

impl Instance {
    pub fn regions(&self) -> usize {
        self.sub_images + 1
    }

    pub fn total(&self) -> usize {
        self.regions() * self.n
    }
}

pub fn budget(total: usize, ratio: f64) -> usize {
    let k = ((1.0 - ratio) * total as f64 + 1e-9).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(total)
    }
}

pub fn softmax(a: &[f32]) -> Vec<f64> {
    let m = a.iter().map(|&x| x as f64).fold(f64::MIN, f64::max);
    let e: Vec<f64> = a.iter().map(|&x| (x as f64 - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Hamilton apportionment of `amount` over `open`, one leftover unit at a time.
fn hamilton(w: &[f64], open: &[bool], amount: usize) -> Vec<usize> {
    let r = w.len();
    let mut out = vec![0; r];
    let idx: Vec<usize> = (0..r).filter(|&i| open[i]).collect();
    if idx.is_empty() || amount == 0 {
        return out;
    }
    let mut z = 0.0f64;
    for &i in &idx {
        z += w[i];
    }
    let mut frac = vec![f64::NAN; r];
    let mut given = 0;
    for &i in &idx {
        let t = amount as f64 * w[i] / z;
        out[i] = t.floor() as usize;
        frac[i] = t - t.floor();
        given += out[i];
    }
    let mut bumped = vec![false; r];
    for _ in given..amount {
        let mut best: Option<usize> = None;
        for &i in &idx {
            if bumped[i] {
                continue;
            }
            best = match best {
                Some(j) if frac[j] >= frac[i] => Some(j),
                _ => Some(i),
            };
        }
        let j = best.expect("more leftover units than open slots");
        bumped[j] = true;
        out[j] += 1;
    }
    out
}

pub fn quotas(a_full: &[f32], k: usize, cap: usize) -> Vec<usize> {
    let w = softmax(a_full);
    let r = w.len();
    let mut q = hamilton(&w, &vec![true; r], k);
    loop {
        let excess: usize = q.iter().filter(|&&v| v > cap).map(|&v| v - cap).sum();
        if excess == 0 {
            return q;
        }
        for v in q.iter_mut() {
            if *v > cap {
                *v = cap;
            }
        }
        let open: Vec<bool> = q.iter().map(|&v| v < cap).collect();
        let extra = hamilton(&w, &open, excess);
        for i in 0..r {
            q[i] += extra[i];
        }
    }
}

pub fn minmax(x: &[f32]) -> Vec<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in x {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if lo == hi {
        return vec![0.5; x.len()];
    }
    let span = hi as f64 - lo as f64;
    x.iter()
        .map(|&v| {
            let y = ((v as f64 - lo as f64) / span) as f32;
            y.clamp(0.0, 1.0)
        })
        .collect()
}

/// Kept global indices, ascending, plus the per-region quotas.
pub fn prune(inst: &Instance) -> (Vec<usize>, Vec<usize>) {
    let n = inst.n;
    let mut a_full = inst.a.clone();
    a_full.push(1.0);
    let q = quotas(&a_full, budget(inst.total(), inst.ratio), n);

    let bn = minmax(&inst.b);
    let cn = minmax(&inst.c);
    let s: Vec<f32> = (0..inst.total())
        .map(|j| inst.alpha * cn[j] + (1.0 - inst.alpha) * bn[j])
        .collect();

    let mut kept = Vec::new();
    for (region, &quota) in q.iter().enumerate() {
        let base = region * n;
        for j in base..base + n {
            let above = (base..base + n)
                .filter(|&k| s[k] > s[j] || (s[k] == s[j] && k < j))
                .count();
            if above < quota {
                kept.push(j);
            }
        }
    }
    (kept, q)
}

//! Gauss-Legendre rules and the box integrator used by the Galerkin entries.
//!
//! Every entry reduces to `int w(R) f(R) dR` over an axis-aligned box where
//! each component of `R` is either fixed, uniform on an interval or carries a
//! tent weight `(h - |R_k - c|)_+`. Intervals are split at tent apexes and at
//! zero, so weights are polynomial on every sub-box and a possible kernel
//! singularity sits at a sub-box corner, where a Duffy map takes over.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub(crate) struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Distribution of one displacement component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Span {
    Fixed(f64),
    Uniform(f64, f64),
    Tent { center: f64, half: f64 },
}

impl Span {
    fn weight(&self, x: f64) -> f64 {
        match *self {
            Span::Fixed(_) | Span::Uniform(..) => 1.0,
            Span::Tent { center, half } => (half - (x - center).abs()).max(0.0),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi, mid) = match *self {
            Span::Fixed(_) => return Vec::new(),
            Span::Uniform(a, b) => (a, b, None),
            Span::Tent { center, half } => (center - half, center + half, Some(center)),
        };
        let mut pts = vec![snap(lo), snap(hi)];
        if let Some(c) = mid {
            pts.push(snap(c));
        }
        if lo < 0.0 && hi > 0.0 {
            pts.push(0.0);
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < SNAP);
        pts
    }
}

const SNAP: f64 = 1e-12;

fn snap(v: f64) -> f64 {
    if v.abs() < SNAP {
        0.0
    } else {
        v
    }
}

/// Which part of the kernel an integration node is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    /// Whole kernel.
    Full,
    /// Static `1/(4 pi R)` part (singular nodes only).
    Static,
    /// `g - 1/(4 pi R)` (regular nodes inside singular sub-boxes).
    Smooth,
}

/// How sub-boxes with the origin at a corner are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Singular {
    /// Duffy map applied to the whole kernel.
    DuffyFull,
    /// Static part through the Duffy map, remainder by plain Gauss.
    Subtract,
}

/// Integrates over the product of `spans`, calling `f(point, weight, part)`
/// at every node. Sub-boxes without the origin use the tensor Gauss rule.
pub(crate) fn integrate<F>(spans: &[Span; 3], rule: &GaussRule, singular: Singular, f: &mut F)
where
    F: FnMut([f64; 3], f64, Part),
{
    let mut base = [0.0; 3];
    let mut free = Vec::with_capacity(3);
    let mut cuts = Vec::with_capacity(3);
    let mut origin_plane = true;
    for (k, s) in spans.iter().enumerate() {
        match *s {
            Span::Fixed(v) => {
                base[k] = snap(v);
                if base[k] != 0.0 {
                    origin_plane = false;
                }
            }
            _ => {
                free.push(k);
                cuts.push(s.breakpoints());
            }
        }
    }
    let d = free.len();
    let counts: Vec<usize> = cuts.iter().map(|c| c.len().saturating_sub(1)).collect();
    if counts.iter().any(|&c| c == 0) {
        return;
    }
    let total: usize = counts.iter().product();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for cell in 0..total {
        let mut rem = cell;
        for a in 0..d {
            let idx = rem % counts[a];
            rem /= counts[a];
            lo[a] = cuts[a][idx];
            hi[a] = cuts[a][idx + 1];
        }
        let corner = origin_plane && (0..d).all(|a| lo[a] == 0.0 || hi[a] == 0.0);
        let weighted = |x: [f64; 3]| -> f64 { free.iter().map(|&k| spans[k].weight(x[k])).product() };
        if corner {
            let part = match singular {
                Singular::DuffyFull => Part::Full,
                Singular::Subtract => Part::Static,
            };
            duffy_box(d, &free, base, &lo, &hi, rule, &mut |x, w| f(x, w * weighted(x), part));
            if singular == Singular::Subtract {
                gauss_box(d, &free, base, &lo, &hi, rule, &mut |x, w| f(x, w * weighted(x), Part::Smooth));
            }
        } else {
            gauss_box(d, &free, base, &lo, &hi, rule, &mut |x, w| f(x, w * weighted(x), Part::Full));
        }
    }
}

fn gauss_box<G>(d: usize, free: &[usize], base: [f64; 3], lo: &[f64; 3], hi: &[f64; 3], rule: &GaussRule, g: &mut G)
where
    G: FnMut([f64; 3], f64),
{
    let n = rule.len();
    let total = n.pow(d as u32);
    let mut vol = 1.0;
    for a in 0..d {
        vol *= hi[a] - lo[a];
    }
    for idx in 0..total {
        let mut rem = idx;
        let mut x = base;
        let mut w = vol;
        for a in 0..d {
            let i = rem % n;
            rem /= n;
            x[free[a]] = lo[a] + (hi[a] - lo[a]) * rule.nodes[i];
            w *= rule.weights[i];
        }
        g(x, w);
    }
}

/// Duffy map of a box whose corner at the origin is singular: the unit cube
/// is split into `d` pyramids `u_p = max`, each collapsed onto its apex with
/// Jacobian `t^(d-1)`.
fn duffy_box<G>(d: usize, free: &[usize], base: [f64; 3], lo: &[f64; 3], hi: &[f64; 3], rule: &GaussRule, g: &mut G)
where
    G: FnMut([f64; 3], f64),
{
    let n = rule.len();
    let mut span = [0.0; 3];
    let mut jac = 1.0;
    for a in 0..d {
        // corner at 0, run towards the far end
        span[a] = if lo[a] == 0.0 { hi[a] } else { lo[a] };
        jac *= span[a].abs();
    }
    let inner = n.pow(d as u32 - 1);
    for p in 0..d {
        for it in 0..n {
            let t = rule.nodes[it];
            let wt = rule.weights[it] * t.powi(d as i32 - 1) * jac;
            for idx in 0..inner {
                let mut rem = idx;
                let mut x = base;
                let mut w = wt;
                for a in 0..d {
                    let u = if a == p {
                        t
                    } else {
                        let i = rem % n;
                        rem /= n;
                        w *= rule.weights[i];
                        t * rule.nodes[i]
                    };
                    x[free[a]] = span[a] * u;
                }
                g(x, w);
            }
        }
    }
}

//! Eigendecomposition of real symmetric arrowhead matrices
//!
//! ```text
//!     [ α   zᵀ ]
//!     [ z   D  ]      D = diag(d₁..d_n)
//! ```
//!
//! Zero couplings and (numerically) coincident poles are deflated first; the
//! remaining eigenvalues are the roots of the secular function
//! f(μ) = μ − α − Σ z_j²/(μ − d_j), one in each gap between sorted poles plus two
//! exterior ones. Each root is stored as an offset from its nearest pole, which
//! keeps μ − d_j accurate when roots crowd against a pole. For small problems the
//! couplings are recomputed from the computed roots (Löwner) so the eigenvectors
//! are numerically orthogonal; for very large problems the secular sums use a
//! blocked far-field expansion.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Solver tuning.
#[derive(Debug, Clone, Copy)]
pub struct ArrowheadOptions {
    /// Recompute couplings from the roots when at most this many poles remain.
    pub lowner_max: usize,
    /// Use the far-field expansion when more than this many poles remain.
    pub far_field_min: usize,
    /// Poles per far-field block.
    pub block_size: usize,
}

impl Default for ArrowheadOptions {
    fn default() -> Self {
        Self { lowner_max: 20_000, far_field_min: 8192, block_size: 2048 }
    }
}

const EXPANSION_TERMS: usize = 35;
const FAR_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Root {
    /// Index of the origin pole, or `None` when there are no poles.
    origin: Option<usize>,
    offset: f64,
}

/// Sparse combination of original basis vectors.
type Members = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct ArrowheadEigen {
    n: usize,
    alpha: f64,
    poles: Vec<f64>,
    zhat: Vec<f64>,
    members: Vec<Members>,
    roots: Vec<Root>,
    /// Squared central components of the root eigenvectors.
    weights: Vec<f64>,
    deflated: Vec<(f64, Members)>,
}

struct Block {
    start: usize,
    end: usize,
    center: f64,
    radius: f64,
    moments: [f64; EXPANSION_TERMS],
}

struct Secular<'a> {
    d: &'a [f64],
    z2: &'a [f64],
    blocks: Option<Vec<Block>>,
}

impl<'a> Secular<'a> {
    fn new(d: &'a [f64], z2: &'a [f64], opts: &ArrowheadOptions) -> Self {
        let blocks = (d.len() > opts.far_field_min).then(|| {
            let bs = opts.block_size.max(1);
            (0..d.len())
                .step_by(bs)
                .map(|start| {
                    let end = (start + bs).min(d.len());
                    let center = 0.5 * (d[start] + d[end - 1]);
                    let radius = (0.5 * (d[end - 1] - d[start])).max(f64::MIN_POSITIVE);
                    let mut moments = [0.0; EXPANSION_TERMS];
                    for j in start..end {
                        let y = (d[j] - center) / radius;
                        let mut p = z2[j];
                        for m in moments.iter_mut() {
                            *m += p;
                            p *= y;
                        }
                    }
                    Block { start, end, center, radius, moments }
                })
                .collect()
        });
        Self { d, z2, blocks }
    }

    fn direct(&self, o: usize, x: f64, range: std::ops::Range<usize>, acc: &mut (f64, f64)) {
        let d_o = self.d[o];
        for j in range {
            if j == o {
                continue;
            }
            let t = (d_o - self.d[j]) + x;
            let q = self.z2[j] / t;
            acc.0 += q;
            acc.1 += q / t;
        }
    }

    /// (Σ_{j≠o} z_j²/(μ−d_j), Σ_{j≠o} z_j²/(μ−d_j)²) at μ = d_o + x.
    fn sums(&self, o: usize, x: f64) -> (f64, f64) {
        let mut acc = (0.0, 0.0);
        match &self.blocks {
            None => self.direct(o, x, 0..self.d.len(), &mut acc),
            Some(blocks) => {
                for b in blocks {
                    let u = (self.d[o] - b.center) + x;
                    if (b.start..b.end).contains(&o) || u.abs() <= FAR_RATIO * b.radius {
                        self.direct(o, x, b.start..b.end, &mut acc);
                    } else {
                        let q = b.radius / u;
                        let (mut s1, mut s2) = (0.0, 0.0);
                        for k in (0..EXPANSION_TERMS).rev() {
                            s1 = s1 * q + b.moments[k];
                            s2 = s2 * q + (k as f64 + 1.0) * b.moments[k];
                        }
                        acc.0 += s1 / u;
                        acc.1 += s2 / (u * u);
                    }
                }
            }
        }
        acc
    }
}

/// Solve the arrowhead eigenproblem with default options.
pub fn solve(alpha: f64, d: &[f64], z: &[f64]) -> Result<ArrowheadEigen> {
    solve_with(alpha, d, z, &ArrowheadOptions::default())
}

pub fn solve_with(alpha: f64, d: &[f64], z: &[f64], opts: &ArrowheadOptions) -> Result<ArrowheadEigen> {
    if d.len() != z.len() {
        return Err(invalid(format!("{} poles but {} couplings", d.len(), z.len())));
    }
    if !alpha.is_finite() || d.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(invalid("arrowhead entries must be finite"));
    }
    let n = d.len();
    let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = d.iter().fold(alpha.abs().max(znorm), |m, v| m.max(v.abs()));
    let tol = 8.0 * f64::EPSILON * scale;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));

    let mut poles: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut members: Vec<Members> = Vec::new();
    let mut deflated: Vec<(f64, Members)> = Vec::new();
    for &i in &order {
        if z[i].abs() <= tol {
            deflated.push((d[i], vec![(i, 1.0)]));
            continue;
        }
        if let (Some(dl), Some(zl), Some(ml)) = (poles.last_mut(), zs.last_mut(), members.last_mut()) {
            let r = zl.hypot(z[i]);
            let (c, s) = (*zl / r, z[i] / r);
            if ((d[i] - *dl) * c * s).abs() <= tol {
                let mut w: Members = ml.iter().map(|&(j, a)| (j, -s * a)).collect();
                w.push((i, c));
                deflated.push((s * s * *dl + c * c * d[i], w));
                *dl = c * c * *dl + s * s * d[i];
                *zl = r;
                ml.iter_mut().for_each(|m| m.1 *= c);
                ml.push((i, s));
                continue;
            }
        }
        poles.push(d[i]);
        zs.push(z[i]);
        members.push(vec![(i, 1.0)]);
    }

    let k = poles.len();
    if k == 0 {
        return Ok(ArrowheadEigen {
            n,
            alpha,
            poles,
            zhat: zs,
            members,
            roots: vec![Root { origin: None, offset: alpha }],
            weights: vec![1.0],
            deflated,
        });
    }

    let z2: Vec<f64> = zs.iter().map(|v| v * v).collect();
    let sec = Secular::new(&poles, &z2, opts);
    let znorm_eff = z2.iter().sum::<f64>().sqrt();
    let roots: Vec<Root> = (0..=k).into_par_iter().map(|m| find_root(&sec, alpha, m, znorm_eff)).collect();

    let zhat = if k <= opts.lowner_max { lowner(&poles, &zs, &roots) } else { zs };
    let zhat2: Vec<f64> = zhat.iter().map(|v| v * v).collect();
    let weights: Vec<f64> = if k <= opts.lowner_max {
        let sec_hat = Secular::new(&poles, &zhat2, opts);
        roots.par_iter().map(|r| weight(&sec_hat, r)).collect()
    } else {
        roots.par_iter().map(|r| weight(&sec, r)).collect()
    };

    Ok(ArrowheadEigen { n, alpha, poles, zhat, members, roots, weights, deflated })
}

fn weight(sec: &Secular, r: &Root) -> f64 {
    let o = r.origin.expect("root with poles has an origin");
    let (_, s2) = sec.sums(o, r.offset);
    1.0 / (1.0 + s2 + sec.z2[o] / (r.offset * r.offset))
}

/// F(x) = x·f(d_o + x) = x(d_o − α + x − S₁) − z_o² and F'(x).
fn eval_f(sec: &Secular, c: f64, o: usize, x: f64) -> (f64, f64) {
    let (s1, s2) = sec.sums(o, x);
    let f = x * (c + x - s1) - sec.z2[o];
    let fp = c + 2.0 * x - s1 + x * s2;
    (f, fp)
}

/// Root `m` of the secular function: m = 0 is left of all poles, m = k right of all.
fn find_root(sec: &Secular, alpha: f64, m: usize, znorm: f64) -> Root {
    let d = sec.d;
    let k = d.len();
    let margin = 1.0 + 1e-10;
    // (origin, direction, bracket length)
    let (o, sigma, h) = if m == 0 {
        let lb = d[0].min(alpha) - znorm * margin - f64::MIN_POSITIVE;
        (0, -1.0, d[0] - lb)
    } else if m == k {
        let ub = d[k - 1].max(alpha) + znorm * margin + f64::MIN_POSITIVE;
        (k - 1, 1.0, ub - d[k - 1])
    } else {
        let (i, j) = (m - 1, m);
        let half = 0.5 * (d[j] - d[i]);
        if eval_f(sec, d[i] - alpha, i, half).0 > 0.0 {
            (i, 1.0, half)
        } else if eval_f(sec, d[j] - alpha, j, -half).0 >= 0.0 {
            (j, -1.0, half)
        } else {
            return Root { origin: Some(i), offset: half };
        }
    };
    let c = d[o] - alpha;

    let (s1, _) = sec.sums(o, 0.0);
    let b = c - s1;
    let z2 = sec.z2[o];
    let disc = (b * b + 4.0 * z2).sqrt();
    let guess = if sigma > 0.0 {
        if b > 0.0 {
            2.0 * z2 / (b + disc)
        } else {
            0.5 * (disc - b)
        }
    } else if b < 0.0 {
        2.0 * z2 / (disc - b)
    } else {
        0.5 * (disc + b)
    };

    let (mut lo, mut hi) = (0.0f64, h);
    let mut t = if guess > 0.0 && guess < h { guess } else { 0.5 * h };
    for _ in 0..200 {
        let (f, fp) = eval_f(sec, c, o, sigma * t);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - f / (sigma * fp);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - t).abs() <= 4.0 * f64::EPSILON * next || hi - lo <= 4.0 * f64::EPSILON * hi;
        t = next;
        if done {
            break;
        }
    }
    Root { origin: Some(o), offset: sigma * t }
}

/// Couplings that make the computed roots exact eigenvalues of a nearby arrowhead.
fn lowner(d: &[f64], z: &[f64], roots: &[Root]) -> Vec<f64> {
    let k = d.len();
    // d_i − μ_m evaluated through the root's origin.
    let diff = |i: usize, m: usize| {
        let r = &roots[m];
        let o = r.origin.unwrap();
        (d[i] - d[o]) - r.offset
    };
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mut p = diff(i, 0) * -diff(i, k);
            for j in 0..i {
                p *= diff(i, j + 1) / (d[i] - d[j]);
            }
            for j in i + 1..k {
                p *= -diff(i, j) / (d[j] - d[i]);
            }
            p.max(0.0).sqrt().copysign(z[i])
        })
        .collect()
}

impl ArrowheadEigen {
    /// Matrix dimension n + 1.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Eigenpairs with nonzero central component (secular roots).
    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn deflated_count(&self) -> usize {
        self.deflated.len()
    }

    fn root_value(&self, m: usize) -> f64 {
        let r = &self.roots[m];
        match r.origin {
            Some(o) => self.poles[o] + r.offset,
            None => r.offset,
        }
    }

    /// Eigenvalues of the secular roots in increasing order.
    pub fn root_values(&self) -> Vec<f64> {
        (0..self.roots.len()).map(|m| self.root_value(m)).collect()
    }

    /// |v₀|² for each secular root; these sum to one.
    pub fn central_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Eigenvalue of eigenpair `i`: roots first, then deflated pairs.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        if i < self.roots.len() {
            self.root_value(i)
        } else {
            self.deflated[i - self.roots.len()].0
        }
    }

    /// All eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.dim()).map(|i| self.eigenvalue(i)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Coefficients of the root eigenvector on each nondeflated pole, divided by v₀.
    fn pole_ratios(&self, m: usize) -> impl Iterator<Item = f64> + '_ {
        let r = self.roots[m];
        let o = r.origin;
        self.poles.iter().zip(&self.zhat).map(move |(&di, &zi)| {
            let o = o.unwrap();
            zi / ((self.poles[o] - di) + r.offset)
        })
    }

    /// Dense eigenvector of eigenpair `i` in the basis (central, 1..n).
    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        if i < self.roots.len() {
            let v0 = self.weights[i].sqrt();
            v[0] = v0;
            if self.roots[i].origin.is_some() {
                for (ratio, mem) in self.pole_ratios(i).zip(&self.members) {
                    for &(j, a) in mem {
                        v[1 + j] += v0 * ratio * a;
                    }
                }
            }
        } else {
            for &(j, a) in &self.deflated[i - self.roots.len()].1 {
                v[1 + j] = a;
            }
        }
        v
    }

    /// Overlap ⟨v_m|ψ⟩ of every secular-root eigenvector with a state in the
    /// basis (central, 1..n); deflated eigenvectors have no central weight and
    /// are not needed for the central amplitude.
    pub fn project_roots(&self, psi: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        use num_complex::Complex64;
        let psi_hat: Vec<Complex64> =
            self.members.iter().map(|mem| mem.iter().map(|&(j, a)| psi[1 + j] * a).sum()).collect();
        (0..self.roots.len())
            .into_par_iter()
            .map(|m| {
                let v0 = self.weights[m].sqrt();
                let mut acc = psi[0];
                if self.roots[m].origin.is_some() {
                    for (ratio, ph) in self.pole_ratios(m).zip(&psi_hat) {
                        acc += ph * ratio;
                    }
                }
                acc * v0
            })
            .collect()
    }
}

//! Method of Moving Asymptotes (Svanberg): the convex separable subproblem
//! and its primal–dual interior-point solver.
//!
//! Problem form:
//!
//! ```text
//! min  f0(x) + a0 z + Σ (c_i y_i + ½ d_i y_i²)
//! s.t. f_i(x) − a_i z − y_i ≤ 0,  xmin ≤ x ≤ xmax,  y ≥ 0, z ≥ 0
//! ```

use alloc::vec;
use alloc::vec::Vec;

/// Asymptote and move-limit constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaParams {
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub move_limit: f64,
    pub albefa: f64,
    pub raa0: f64,
    pub epsimin: f64,
    pub a0: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        MmaParams {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            move_limit: 0.5,
            albefa: 0.1,
            raa0: 1e-5,
            epsimin: 1e-7,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

/// Optimizer memory between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct MmaState {
    pub n: usize,
    pub m: usize,
    pub iter: usize,
    pub xold1: Vec<f64>,
    pub xold2: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub params: MmaParams,
}

/// The separable approximation built at one iterate.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub alfa: Vec<f64>,
    pub beta: Vec<f64>,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    /// `m × n`, row-major.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    /// Constant terms, so that approximations match the functions at `xval`.
    pub r0: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl Subproblem {
    /// Approximate objective `Σ p0/(U−x) + q0/(x−L) + r0`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.r0
            + x.iter()
                .enumerate()
                .map(|(j, &xj)| self.p0[j] / (self.upp[j] - xj) + self.q0[j] / (xj - self.low[j]))
                .sum::<f64>()
    }

    /// Approximate constraint `i` (the `−b_i` form: `≤ 0` when feasible).
    pub fn constraint(&self, i: usize, x: &[f64]) -> f64 {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(j, &xj)| self.p[i * n + j] / (self.upp[j] - xj) + self.q[i * n + j] / (xj - self.low[j]))
            .sum::<f64>()
            - self.b[i]
    }
}

/// Result of one update.
#[derive(Debug, Clone)]
pub struct MmaStep {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
    pub lam: Vec<f64>,
    pub sub: Subproblem,
}

impl MmaState {
    pub fn new(n: usize, m: usize, x0: &[f64], params: MmaParams) -> Self {
        MmaState {
            n,
            m,
            iter: 0,
            xold1: x0.to_vec(),
            xold2: x0.to_vec(),
            low: vec![0.0; n],
            upp: vec![1.0; n],
            params,
        }
    }

    /// One MMA iteration. `dfdx` is `m × n` row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        xval: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        f0val: f64,
        df0dx: &[f64],
        fval: &[f64],
        dfdx: &[f64],
    ) -> MmaStep {
        self.iter += 1;
        let sub = self.build(xval, xmin, xmax, f0val, df0dx, fval, dfdx);
        let (x, y, z, lam) = subsolv(&sub, self.params.epsimin);
        self.xold2 = core::mem::replace(&mut self.xold1, xval.to_vec());
        self.low.clone_from(&sub.low);
        self.upp.clone_from(&sub.upp);
        MmaStep { x, y, z, lam, sub }
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        xval: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        f0val: f64,
        df0dx: &[f64],
        fval: &[f64],
        dfdx: &[f64],
    ) -> Subproblem {
        let (n, m) = (self.n, self.m);
        let pr = &self.params;
        let mut low = vec![0.0; n];
        let mut upp = vec![0.0; n];
        for j in 0..n {
            let span = xmax[j] - xmin[j];
            if self.iter <= 2 {
                low[j] = xval[j] - pr.asyinit * span;
                upp[j] = xval[j] + pr.asyinit * span;
            } else {
                let zzz = (xval[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let f = if zzz > 0.0 {
                    pr.asyincr
                } else if zzz < 0.0 {
                    pr.asydecr
                } else {
                    1.0
                };
                low[j] = xval[j] - f * (self.xold1[j] - self.low[j]);
                upp[j] = xval[j] + f * (self.upp[j] - self.xold1[j]);
                low[j] = low[j].max(xval[j] - 10.0 * span).min(xval[j] - 0.01 * span);
                upp[j] = upp[j].min(xval[j] + 10.0 * span).max(xval[j] + 0.01 * span);
            }
        }
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p = vec![0.0; m * n];
        let mut q = vec![0.0; m * n];
        let mut b: Vec<f64> = fval.iter().map(|f| -f).collect();
        let mut r0 = f0val;
        for j in 0..n {
            let span = xmax[j] - xmin[j];
            alfa[j] = (low[j] + pr.albefa * (xval[j] - low[j])).max(xval[j] - pr.move_limit * span).max(xmin[j]);
            beta[j] = (upp[j] - pr.albefa * (upp[j] - xval[j])).min(xval[j] + pr.move_limit * span).min(xmax[j]);
            let xmamiinv = 1.0 / span.max(1e-5);
            let ux1 = upp[j] - xval[j];
            let xl1 = xval[j] - low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let (pp, qq) = (df0dx[j].max(0.0), (-df0dx[j]).max(0.0));
            let pq = 0.001 * (pp + qq) + pr.raa0 * xmamiinv;
            p0[j] = (pp + pq) * ux2;
            q0[j] = (qq + pq) * xl2;
            r0 -= p0[j] / ux1 + q0[j] / xl1;
            for i in 0..m {
                let g = dfdx[i * n + j];
                let (pp, qq) = (g.max(0.0), (-g).max(0.0));
                let pq = 0.001 * (pp + qq) + pr.raa0 * xmamiinv;
                p[i * n + j] = (pp + pq) * ux2;
                q[i * n + j] = (qq + pq) * xl2;
                b[i] += p[i * n + j] / ux1 + q[i * n + j] / xl1;
            }
        }
        Subproblem {
            low,
            upp,
            alfa,
            beta,
            p0,
            q0,
            p,
            q,
            b,
            r0,
            a0: pr.a0,
            a: vec![0.0; m],
            c: vec![pr.c; m],
            d: vec![pr.d; m],
        }
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

fn residual(sp: &Subproblem, it: &Iterate, epsi: f64) -> Vec<f64> {
    let n = it.x.len();
    let m = it.y.len();
    let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
    let (plam, qlam, gvec) = lam_terms(sp, it);
    for j in 0..n {
        let ux1 = sp.upp[j] - it.x[j];
        let xl1 = it.x[j] - sp.low[j];
        r.push(plam[j] / (ux1 * ux1) - qlam[j] / (xl1 * xl1) - it.xsi[j] + it.eta[j]);
    }
    for i in 0..m {
        r.push(sp.c[i] + sp.d[i] * it.y[i] - it.mu[i] - it.lam[i]);
    }
    r.push(sp.a0 - it.zet - sp.a.iter().zip(&it.lam).map(|(a, l)| a * l).sum::<f64>());
    for i in 0..m {
        r.push(gvec[i] - sp.a[i] * it.z - it.y[i] + it.s[i] - sp.b[i]);
    }
    for j in 0..n {
        r.push(it.xsi[j] * (it.x[j] - sp.alfa[j]) - epsi);
    }
    for j in 0..n {
        r.push(it.eta[j] * (sp.beta[j] - it.x[j]) - epsi);
    }
    for i in 0..m {
        r.push(it.mu[i] * it.y[i] - epsi);
    }
    r.push(it.zet * it.z - epsi);
    for i in 0..m {
        r.push(it.lam[i] * it.s[i] - epsi);
    }
    r
}

fn lam_terms(sp: &Subproblem, it: &Iterate) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = it.x.len();
    let m = it.y.len();
    let mut plam = sp.p0.clone();
    let mut qlam = sp.q0.clone();
    let mut gvec = vec![0.0; m];
    for i in 0..m {
        for j in 0..n {
            let (pij, qij) = (sp.p[i * n + j], sp.q[i * n + j]);
            plam[j] += pij * it.lam[i];
            qlam[j] += qij * it.lam[i];
            gvec[i] += pij / (sp.upp[j] - it.x[j]) + qij / (it.x[j] - sp.low[j]);
        }
    }
    (plam, qlam, gvec)
}

fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Primal–dual Newton solve of the subproblem; returns `(x, y, z, λ)`.
pub fn subsolv(sp: &Subproblem, epsimin: f64) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>) {
    let n = sp.alfa.len();
    let m = sp.b.len();
    let x: Vec<f64> = (0..n).map(|j| 0.5 * (sp.alfa[j] + sp.beta[j])).collect();
    let mut it = Iterate {
        xsi: (0..n).map(|j| (1.0 / (x[j] - sp.alfa[j])).max(1.0)).collect(),
        eta: (0..n).map(|j| (1.0 / (sp.beta[j] - x[j])).max(1.0)).collect(),
        x,
        y: vec![1.0; m],
        z: 1.0,
        lam: vec![1.0; m],
        mu: sp.c.iter().map(|c| (0.5 * c).max(1.0)).collect(),
        zet: 1.0,
        s: vec![1.0; m],
    };
    let mut epsi = 1.0;
    while epsi > epsimin {
        let mut res = residual(sp, &it, epsi);
        let mut resnorm = norm2(&res);
        let mut resmax = max_abs(&res);
        let mut ittt = 0;
        while resmax > 0.9 * epsi && ittt < 200 {
            ittt += 1;
            let (dx, dy, dz, dlam, dxsi, deta, dmu, dzet, ds) = newton_direction(sp, &it, epsi);
            // step to the boundary of the positive orthant, damped
            let mut stm: f64 = 1.0;
            let ratio = |v: f64, dv: f64| -1.01 * dv / v;
            for i in 0..m {
                stm = stm.max(ratio(it.y[i], dy[i])).max(ratio(it.lam[i], dlam[i])).max(ratio(it.mu[i], dmu[i])).max(ratio(it.s[i], ds[i]));
            }
            stm = stm.max(ratio(it.z, dz)).max(ratio(it.zet, dzet));
            for j in 0..n {
                stm = stm
                    .max(ratio(it.xsi[j], dxsi[j]))
                    .max(ratio(it.eta[j], deta[j]))
                    .max(-1.01 * dx[j] / (it.x[j] - sp.alfa[j]))
                    .max(1.01 * dx[j] / (sp.beta[j] - it.x[j]));
            }
            let mut steg = 1.0 / stm;
            let old = it.clone();
            let mut itto = 0;
            let mut resnew = 2.0 * resnorm;
            while resnew > resnorm && itto < 50 {
                itto += 1;
                let ax = |a: &[f64], d: &[f64]| -> Vec<f64> { a.iter().zip(d).map(|(a, d)| a + steg * d).collect() };
                it = Iterate {
                    x: ax(&old.x, &dx),
                    y: ax(&old.y, &dy),
                    z: old.z + steg * dz,
                    lam: ax(&old.lam, &dlam),
                    xsi: ax(&old.xsi, &dxsi),
                    eta: ax(&old.eta, &deta),
                    mu: ax(&old.mu, &dmu),
                    zet: old.zet + steg * dzet,
                    s: ax(&old.s, &ds),
                };
                res = residual(sp, &it, epsi);
                resnew = norm2(&res);
                steg *= 0.5;
            }
            resnorm = resnew;
            resmax = max_abs(&res);
        }
        epsi *= 0.1;
    }
    (it.x, it.y, it.z, it.lam)
}

#[allow(clippy::type_complexity)]
fn newton_direction(
    sp: &Subproblem,
    it: &Iterate,
    epsi: f64,
) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, Vec<f64>) {
    let n = it.x.len();
    let m = it.y.len();
    let (plam, qlam, gvec) = lam_terms(sp, it);
    let mut gg = vec![0.0; m * n];
    let mut delx = vec![0.0; n];
    let mut diagx = vec![0.0; n];
    for j in 0..n {
        let ux1 = sp.upp[j] - it.x[j];
        let xl1 = it.x[j] - sp.low[j];
        let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
        for i in 0..m {
            gg[i * n + j] = sp.p[i * n + j] / ux2 - sp.q[i * n + j] / xl2;
        }
        let xa = it.x[j] - sp.alfa[j];
        let bx = sp.beta[j] - it.x[j];
        delx[j] = plam[j] / ux2 - qlam[j] / xl2 - epsi / xa + epsi / bx;
        diagx[j] = 2.0 * (plam[j] / (ux2 * ux1) + qlam[j] / (xl2 * xl1)) + it.xsi[j] / xa + it.eta[j] / bx;
    }
    let dely: Vec<f64> = (0..m).map(|i| sp.c[i] + sp.d[i] * it.y[i] - it.lam[i] - epsi / it.y[i]).collect();
    let delz = sp.a0 - sp.a.iter().zip(&it.lam).map(|(a, l)| a * l).sum::<f64>() - epsi / it.z;
    let dellam: Vec<f64> = (0..m).map(|i| gvec[i] - sp.a[i] * it.z - it.y[i] - sp.b[i] + epsi / it.lam[i]).collect();
    let diagy: Vec<f64> = (0..m).map(|i| sp.d[i] + it.mu[i] / it.y[i]).collect();
    let diaglamyi: Vec<f64> = (0..m).map(|i| it.s[i] / it.lam[i] + 1.0 / diagy[i]).collect();
    let (dx, dz, dlam);
    if m < n {
        // (m+1) system in (dλ, dz)
        let k = m + 1;
        let mut aa = vec![0.0; k * k];
        let mut bb = vec![0.0; k];
        for i in 0..m {
            bb[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i * n + j] * delx[j] / diagx[j]).sum::<f64>();
            for l in 0..m {
                aa[i * k + l] = (0..n).map(|j| gg[i * n + j] * gg[l * n + j] / diagx[j]).sum::<f64>();
            }
            aa[i * k + i] += diaglamyi[i];
            aa[i * k + m] = sp.a[i];
            aa[m * k + i] = sp.a[i];
        }
        aa[m * k + m] = -it.zet / it.z;
        bb[m] = delz;
        let sol = dense_solve(&mut aa, &mut bb, k);
        dlam = sol[..m].to_vec();
        dz = sol[m];
        dx = (0..n)
            .map(|j| -delx[j] / diagx[j] - (0..m).map(|i| gg[i * n + j] * dlam[i]).sum::<f64>() / diagx[j])
            .collect::<Vec<f64>>();
    } else {
        // (n+1) system in (dx, dz)
        let k = n + 1;
        let blam: Vec<f64> = (0..m).map(|i| dellam[i] + dely[i] / diagy[i]).collect();
        let mut aa = vec![0.0; k * k];
        let mut bb = vec![0.0; k];
        for j in 0..n {
            for l in 0..n {
                aa[j * k + l] = (0..m).map(|i| gg[i * n + j] * gg[i * n + l] / diaglamyi[i]).sum::<f64>();
            }
            aa[j * k + j] += diagx[j];
            let axz = -(0..m).map(|i| gg[i * n + j] * sp.a[i] / diaglamyi[i]).sum::<f64>();
            aa[j * k + n] = axz;
            aa[n * k + j] = axz;
            bb[j] = -(delx[j] + (0..m).map(|i| gg[i * n + j] * blam[i] / diaglamyi[i]).sum::<f64>());
        }
        aa[n * k + n] = it.zet / it.z + (0..m).map(|i| sp.a[i] * sp.a[i] / diaglamyi[i]).sum::<f64>();
        bb[n] = -(delz - (0..m).map(|i| sp.a[i] * blam[i] / diaglamyi[i]).sum::<f64>());
        let sol = dense_solve(&mut aa, &mut bb, k);
        dx = sol[..n].to_vec();
        dz = sol[n];
        dlam = (0..m)
            .map(|i| {
                let gdx: f64 = (0..n).map(|j| gg[i * n + j] * dx[j]).sum();
                gdx / diaglamyi[i] - dz * sp.a[i] / diaglamyi[i] + blam[i] / diaglamyi[i]
            })
            .collect::<Vec<f64>>();
    }
    let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
    let dxsi: Vec<f64> = (0..n)
        .map(|j| {
            let xa = it.x[j] - sp.alfa[j];
            -it.xsi[j] + epsi / xa - it.xsi[j] * dx[j] / xa
        })
        .collect();
    let deta: Vec<f64> = (0..n)
        .map(|j| {
            let bx = sp.beta[j] - it.x[j];
            -it.eta[j] + epsi / bx + it.eta[j] * dx[j] / bx
        })
        .collect();
    let dmu: Vec<f64> = (0..m).map(|i| -it.mu[i] + epsi / it.y[i] - it.mu[i] * dy[i] / it.y[i]).collect();
    let dzet = -it.zet + epsi / it.z - it.zet * dz / it.z;
    let ds: Vec<f64> = (0..m).map(|i| -it.s[i] + epsi / it.lam[i] - it.s[i] * dlam[i] / it.lam[i]).collect();
    (dx, dy, dz, dlam, dxsi, deta, dmu, dzet, ds)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn dense_solve(a: &mut [f64], b: &mut [f64], k: usize) -> Vec<f64> {
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i * k + c].abs().total_cmp(&a[j * k + c].abs())).unwrap_or(c);
        if piv != c {
            for l in 0..k {
                a.swap(c * k + l, piv * k + l);
            }
            b.swap(c, piv);
        }
        let d = a[c * k + c];
        for i in c + 1..k {
            let f = a[i * k + c] / d;
            if f != 0.0 {
                for l in c..k {
                    a[i * k + l] -= f * a[c * k + l];
                }
                b[i] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|l| a[c * k + l] * x[l]).sum();
        x[c] = (b[c] - s) / a[c * k + c];
    }
    x
}

//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector.
//!
//! Standard form: minimize `cᵀx` s.t. `G x + s = h`, `s ∈ K`, with `K` a
//! product of non-negative orthants and second-order cones. The normal
//! equations `Gᵀ W⁻² G` are assembled per cone; for a second-order cone the
//! contribution is `η⁻²(2 uuᵀ − Gᵀ J G)` with `u = Gᵀ J w̄`, so `Gᵀ J G` is
//! computed once per program and every iteration costs `O(n²)` per cone.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{ConeKind, ConicProgram, SolveResult, SolveStatus, SolverOptions};

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Lin,
    Soc,
}

struct Cone {
    kind: Kind,
    start: usize,
    dim: usize,
    /// Global indices of the columns this cone touches.
    cols: Vec<usize>,
    /// Rows of `G` in compressed sparse row form over local column indices.
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
    /// Runs of consecutive global columns within each row, as
    /// `(first global column, offset into val, length)`; rows index via `run_ptr`.
    runs: Vec<(usize, usize, usize)>,
    run_ptr: Vec<usize>,
    /// Non-zeros of `Gᵀ J G` over local columns for second-order cones.
    gjg: Vec<(usize, usize, f64)>,
}

impl Cone {
    fn build_runs(&mut self) {
        self.runs.clear();
        self.run_ptr = vec![0];
        for r in 0..self.dim {
            let (a, b) = (self.ptr[r], self.ptr[r + 1]);
            let mut k = a;
            while k < b {
                let first = self.cols[self.idx[k]];
                let mut len = 1;
                while k + len < b && self.cols[self.idx[k + len]] == first + len {
                    len += 1;
                }
                self.runs.push((first, k, len));
                k += len;
            }
            self.run_ptr.push(self.runs.len());
        }
    }

    fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }
}

/// Equilibrated data: `G̃ = E G D`, `h̃ = E h`, `c̃ = D c`, with `E`
/// constant over each cone so that cone membership is preserved.
const EQUILIBRATION_PASSES: usize = 10;
/// Linear rows with more non-zeros than this go through the dense rank-one path.
const DENSE_ROW: usize = 32;

fn cone_gjg(cone: &Cone) -> Vec<(usize, usize, f64)> {
    let width = cone.cols.len();
    let mut data = vec![0.0; width * width];
    for r in 0..cone.dim {
        let sign = if r == 0 { 1.0 } else { -1.0 };
        let (ri, rv) = cone.row(r);
        for (&a, &va) in ri.iter().zip(rv) {
            for (&b, &vb) in ri.iter().zip(rv) {
                data[a * width + b] += sign * va * vb;
            }
        }
    }
    let mut out = Vec::new();
    for a in 0..width {
        for b in 0..width {
            let g = data[a * width + b];
            if g != 0.0 {
                out.push((a, b, g));
            }
        }
    }
    out
}

struct StandardForm {
    n: usize,
    m: usize,
    c: DVector<f64>,
    h: DVector<f64>,
    cones: Vec<Cone>,
    degree: usize,
    /// Diagonal of `D`.
    col_scale: DVector<f64>,
    /// Diagonal of `E`, expanded to rows.
    row_scale: DVector<f64>,
    /// Norms of the unscaled `h` and `c`.
    h_norm: f64,
    c_norm: f64,
}

impl StandardForm {
    fn from_program(p: &ConicProgram) -> Self {
        let n = p.n_vars;
        let mut cones = Vec::with_capacity(p.blocks.len());
        let mut h = Vec::new();
        let mut start = 0;
        let mut degree = 0;
        for block in &p.blocks {
            let width = block.cols.len();
            let dense_row = |r: usize| &block.coeffs[r * width..(r + 1) * width];
            // y = M x + offset ∈ K  ⇔  s = h − G x with G = −M, h = offset.
            let mut rows: Vec<Vec<f64>> = (0..block.rows).map(|r| dense_row(r).iter().map(|v| -v).collect()).collect();
            let mut off = block.offset.clone();
            if block.kind == ConeKind::RotatedSecondOrder {
                // (u, v, z) ↦ ((u+v)/√2, z, (u−v)/√2).
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let u = rows[0].clone();
                let v = rows[1].clone();
                let (ou, ov) = (off[0], off[1]);
                let mut re_rows = Vec::with_capacity(block.rows);
                let mut re_off = Vec::with_capacity(block.rows);
                re_rows.push(u.iter().zip(&v).map(|(a, b)| (a + b) * r).collect());
                re_off.push((ou + ov) * r);
                for k in 2..block.rows {
                    re_rows.push(std::mem::take(&mut rows[k]));
                    re_off.push(off[k]);
                }
                re_rows.push(u.iter().zip(&v).map(|(a, b)| (a - b) * r).collect());
                re_off.push((ou - ov) * r);
                rows = re_rows;
                off = re_off;
            }
            let kind = match block.kind {
                ConeKind::Nonneg => Kind::Lin,
                _ => Kind::Soc,
            };
            let mut ptr = vec![0];
            let mut idx = Vec::new();
            let mut val = Vec::new();
            for row in &rows {
                for (k, &a) in row.iter().enumerate() {
                    if a != 0.0 {
                        idx.push(k);
                        val.push(a);
                    }
                }
                ptr.push(idx.len());
            }
            let mut cone = Cone {
                kind,
                start,
                dim: block.rows,
                runs: Vec::new(),
                run_ptr: Vec::new(),
                cols: block.cols.clone(),
                ptr,
                idx,
                val,
                gjg: Vec::new(),
            };
            cone.build_runs();
            degree += if kind == Kind::Lin { block.rows } else { 1 };
            h.extend(off);
            cones.push(cone);
            start += block.rows;
        }
        let c = DVector::from_iterator(n, p.objective.iter().map(|v| -v));
        let h = DVector::from_vec(h);
        let mut sf = Self {
            n,
            m: start,
            h_norm: h.norm(),
            c_norm: c.norm(),
            c,
            h,
            cones,
            degree,
            col_scale: DVector::from_element(n, 1.0),
            row_scale: DVector::from_element(start, 1.0),
        };
        sf.equilibrate(EQUILIBRATION_PASSES);
        for cone in &mut sf.cones {
            if cone.kind == Kind::Soc {
                cone.gjg = cone_gjg(cone);
            }
        }
        sf
    }

    /// Ruiz-style scaling towards unit infinity norms of columns and cone blocks.
    fn equilibrate(&mut self, passes: usize) {
        for _ in 0..passes {
            let mut col_max = vec![0.0f64; self.n];
            for cone in &self.cones {
                for (&k, &a) in cone.idx.iter().zip(&cone.val) {
                    let j = cone.cols[k];
                    col_max[j] = col_max[j].max(a.abs());
                }
            }
            let d: Vec<f64> = col_max.iter().map(|&m| if m > 0.0 { 1.0 / m.sqrt() } else { 1.0 }).collect();
            for cone in &mut self.cones {
                let block_max = cone.val.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                let e = if block_max > 0.0 { 1.0 / block_max.sqrt() } else { 1.0 };
                for (k, a) in cone.idx.iter().zip(cone.val.iter_mut()) {
                    *a *= e * d[cone.cols[*k]];
                }
                for r in cone.start..cone.start + cone.dim {
                    self.h[r] *= e;
                    self.row_scale[r] *= e;
                }
            }
            for j in 0..self.n {
                self.c[j] *= d[j];
                self.col_scale[j] *= d[j];
            }
        }
    }

    /// Unscaled `‖E⁻¹ v‖` for a vector in constraint space.
    fn row_norm(&self, v: &DVector<f64>) -> f64 {
        v.iter().zip(self.row_scale.iter()).map(|(a, e)| (a / e).powi(2)).sum::<f64>().sqrt()
    }

    /// Unscaled `‖D⁻¹ v‖` for a vector in variable space.
    fn col_norm(&self, v: &DVector<f64>) -> f64 {
        v.iter().zip(self.col_scale.iter()).map(|(a, d)| (a / d).powi(2)).sum::<f64>().sqrt()
    }

    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        let xs = x.as_slice();
        let o = out.as_mut_slice();
        for cone in &self.cones {
            for r in 0..cone.dim {
                let mut acc = 0.0;
                for &(g, v, len) in &cone.runs[cone.run_ptr[r]..cone.run_ptr[r + 1]] {
                    acc += dot(&cone.val[v..v + len], &xs[g..g + len]);
                }
                o[cone.start + r] = acc;
            }
        }
        out
    }

    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        let o = out.as_mut_slice();
        for cone in &self.cones {
            for r in 0..cone.dim {
                let zr = z[cone.start + r];
                if zr == 0.0 {
                    continue;
                }
                for &(g, v, len) in &cone.runs[cone.run_ptr[r]..cone.run_ptr[r + 1]] {
                    for (out, &a) in o[g..g + len].iter_mut().zip(&cone.val[v..v + len]) {
                        *out += a * zr;
                    }
                }
            }
        }
        out
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.m);
        for cone in &self.cones {
            match cone.kind {
                Kind::Lin => e.rows_mut(cone.start, cone.dim).fill(1.0),
                Kind::Soc => e[cone.start] = 1.0,
            }
        }
        e
    }
}

enum Scale {
    /// `w = √(s/z)`.
    Lin(Vec<f64>),
    /// `W = η W̄(w̄)`, `w̄ᵀ J w̄ = 1`.
    Soc { eta: f64, w: Vec<f64> },
}

#[derive(Clone, Copy)]
enum Apply {
    W,
    WInv,
    W2,
    WInv2,
}

fn soc_det(v: &[f64]) -> f64 {
    let tail = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    (v[0] - tail) * (v[0] + tail)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums let the compiler vectorize.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Scale {
    fn new(kind: Kind, s: &[f64], z: &[f64]) -> Self {
        match kind {
            Kind::Lin => Scale::Lin(s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect()),
            Kind::Soc => {
                let sres = soc_det(s).max(f64::MIN_POSITIVE);
                let zres = soc_det(z).max(f64::MIN_POSITIVE);
                let (sn, zn) = (sres.sqrt(), zres.sqrt());
                let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut w = vec![0.0; s.len()];
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for k in 1..s.len() {
                    w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
                }
                // Renormalize to w̄ᵀ J w̄ = 1 against rounding.
                let wres = soc_det(&w);
                if wres > 0.0 {
                    let r = wres.sqrt();
                    w.iter_mut().for_each(|v| *v /= r);
                }
                Scale::Soc { eta: (sres / zres).powf(0.25), w }
            }
        }
    }

    fn apply(&self, mode: Apply, v: &[f64], out: &mut [f64]) {
        match self {
            Scale::Lin(w) => {
                for k in 0..v.len() {
                    out[k] = match mode {
                        Apply::W => w[k] * v[k],
                        Apply::WInv => v[k] / w[k],
                        Apply::W2 => w[k] * w[k] * v[k],
                        Apply::WInv2 => v[k] / (w[k] * w[k]),
                    };
                }
            }
            Scale::Soc { eta, w } => {
                let w0 = w[0];
                let w1v1 = dot(&w[1..], &v[1..]);
                match mode {
                    Apply::W | Apply::WInv => {
                        let (sign, scale) = match mode {
                            Apply::W => (1.0, *eta),
                            _ => (-1.0, 1.0 / eta),
                        };
                        out[0] = scale * (w0 * v[0] + sign * w1v1);
                        let coef = sign * v[0] + w1v1 / (1.0 + w0);
                        for k in 1..v.len() {
                            out[k] = scale * (v[k] + coef * w[k]);
                        }
                    }
                    Apply::W2 => {
                        let e2 = eta * eta;
                        let wv = w0 * v[0] + w1v1;
                        out[0] = e2 * (2.0 * w0 * wv - v[0]);
                        for k in 1..v.len() {
                            out[k] = e2 * (2.0 * w[k] * wv + v[k]);
                        }
                    }
                    Apply::WInv2 => {
                        let e2 = 1.0 / (eta * eta);
                        // J w̄ = (w0, −w1).
                        let jwv = w0 * v[0] - w1v1;
                        out[0] = e2 * (2.0 * w0 * jwv - v[0]);
                        for k in 1..v.len() {
                            out[k] = e2 * (-2.0 * w[k] * jwv + v[k]);
                        }
                    }
                }
            }
        }
    }
}

struct Scaling {
    blocks: Vec<Scale>,
}

impl Scaling {
    fn apply(&self, sf: &StandardForm, mode: Apply, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (cone, sc) in sf.cones.iter().zip(&self.blocks) {
            let r = cone.start..cone.start + cone.dim;
            sc.apply(mode, &v.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
        }
        out
    }
}

/// Jordan product `u ∘ v`.
fn jordan(sf: &StandardForm, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for cone in &sf.cones {
        let (a, b) = (cone.start, cone.start + cone.dim);
        let (us, vs) = (&u.as_slice()[a..b], &v.as_slice()[a..b]);
        match cone.kind {
            Kind::Lin => {
                for k in 0..cone.dim {
                    out[a + k] = us[k] * vs[k];
                }
            }
            Kind::Soc => {
                out[a] = dot(us, vs);
                for k in 1..cone.dim {
                    out[a + k] = us[0] * vs[k] + vs[0] * us[k];
                }
            }
        }
    }
    out
}

/// Solves `u ∘ x = v` for `x`.
fn jordan_div(sf: &StandardForm, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for cone in &sf.cones {
        let (a, b) = (cone.start, cone.start + cone.dim);
        let (us, vs) = (&u.as_slice()[a..b], &v.as_slice()[a..b]);
        match cone.kind {
            Kind::Lin => {
                for k in 0..cone.dim {
                    out[a + k] = vs[k] / us[k];
                }
            }
            Kind::Soc => {
                let rho = soc_det(us);
                let x0 = (us[0] * vs[0] - dot(&us[1..], &vs[1..])) / rho;
                out[a] = x0;
                for k in 1..cone.dim {
                    out[a + k] = (vs[k] - x0 * us[k]) / us[0];
                }
            }
        }
    }
    out
}

/// Largest `α ≥ 0` keeping `x + α d` in the cone (may be `∞`).
fn max_step(sf: &StandardForm, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for cone in &sf.cones {
        let (a, b) = (cone.start, cone.start + cone.dim);
        let (xs, ds) = (&x.as_slice()[a..b], &d.as_slice()[a..b]);
        match cone.kind {
            Kind::Lin => {
                for k in 0..cone.dim {
                    if ds[k] < 0.0 {
                        alpha = alpha.min(-xs[k] / ds[k]);
                    }
                }
            }
            Kind::Soc => alpha = alpha.min(soc_step(xs, ds)),
        }
    }
    alpha
}

fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    // (x0 + α d0)² − ‖x1 + α d1‖² = a α² + 2 b α + c, with c > 0.
    let a = soc_det(d);
    let b = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let c = soc_det(x).max(0.0);
    let mut alpha = f64::INFINITY;
    if d[0] < 0.0 {
        alpha = -x[0] / d[0];
    }
    let disc = b * b - a * c;
    if a == 0.0 {
        if b < 0.0 {
            alpha = alpha.min(-c / (2.0 * b));
        }
        return alpha;
    }
    if disc < 0.0 {
        return alpha;
    }
    let q = -(b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    for r in roots {
        if r > 0.0 {
            alpha = alpha.min(r);
        }
    }
    alpha
}

struct Kkt<'a> {
    sf: &'a StandardForm,
    scaling: &'a Scaling,
    chol: Cholesky<f64, nalgebra::Dyn>,
    refine_steps: usize,
}

impl<'a> Kkt<'a> {
    fn factor(sf: &'a StandardForm, scaling: &'a Scaling, refine_steps: usize) -> Option<Self> {
        let n = sf.n;
        let mut mat = DMatrix::<f64>::zeros(n, n);
        // Dense rank-one terms are collected as columns of `U` and added as `U Uᵀ`.
        let mut rank_one: Vec<f64> = Vec::new();
        {
            let data = mat.as_mut_slice();
            for (cone, sc) in sf.cones.iter().zip(&scaling.blocks) {
                match sc {
                    Scale::Lin(w) => {
                        for (r, wr) in w.iter().enumerate() {
                            let (ri, rv) = cone.row(r);
                            if ri.len() > DENSE_ROW {
                                let start = rank_one.len();
                                rank_one.resize(start + n, 0.0);
                                for (&a, &va) in ri.iter().zip(rv) {
                                    rank_one[start + cone.cols[a]] = va / wr;
                                }
                                continue;
                            }
                            let d = 1.0 / (wr * wr);
                            for (&a, &va) in ri.iter().zip(rv) {
                                let col = cone.cols[a] * n;
                                for (&b, &vb) in ri.iter().zip(rv) {
                                    data[col + cone.cols[b]] += d * va * vb;
                                }
                            }
                        }
                    }
                    Scale::Soc { eta, w } => {
                        // u = Gᵀ J w̄; contribution η⁻²(2uuᵀ − GᵀJG).
                        let start = rank_one.len();
                        rank_one.resize(start + n, 0.0);
                        let u = &mut rank_one[start..];
                        let f = std::f64::consts::SQRT_2 / eta;
                        for r in 0..cone.dim {
                            let jw = f * if r == 0 { w[0] } else { -w[r] };
                            let (ri, rv) = cone.row(r);
                            for (&k, &a) in ri.iter().zip(rv) {
                                u[cone.cols[k]] += a * jw;
                            }
                        }
                        let inv = 1.0 / (eta * eta);
                        for &(a, b, g) in &cone.gjg {
                            data[cone.cols[a] * n + cone.cols[b]] -= inv * g;
                        }
                    }
                }
            }
        }
        if !rank_one.is_empty() {
            let u = DMatrix::from_vec(n, rank_one.len() / n, rank_one);
            mat.gemm(1.0, &u, &u.transpose(), 1.0);
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(mat[(i, i)].abs())).max(1.0);
        let mut reg = 1e-14 * max_diag;
        for _ in 0..8 {
            let mut trial = mat.clone();
            for i in 0..n {
                trial[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Some(Self { sf, scaling, chol, refine_steps });
            }
            reg *= 100.0;
        }
        None
    }

    fn solve_normal(&self, bx: &DVector<f64>, bz: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let t = self.scaling.apply(self.sf, Apply::WInv2, bz);
        let dx = self.chol.solve(&(bx + self.sf.gt_mul(&t)));
        let dz = self.scaling.apply(self.sf, Apply::WInv2, &(self.sf.g_mul(&dx) - bz));
        (dx, dz)
    }

    /// Solves `[0 Gᵀ; G −W²] [x; z] = [bx; bz]` with iterative refinement.
    fn solve(&self, bx: &DVector<f64>, bz: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dz) = self.solve_normal(bx, bz);
        let scale = bx.amax().max(bz.amax()).max(1e-300);
        let mut prev = f64::INFINITY;
        for _ in 0..self.refine_steps {
            let ex = bx - self.sf.gt_mul(&dz);
            let ez = bz - (self.sf.g_mul(&dx) - self.scaling.apply(self.sf, Apply::W2, &dz));
            let err = ex.amax().max(ez.amax());
            if err <= 1e-15 * scale || err > 0.5 * prev {
                break;
            }
            prev = err;
            let (cx, cz) = self.solve_normal(&ex, &ez);
            dx += cx;
            dz += cz;
        }
        (dx, dz)
    }
}

struct Direction {
    dx: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

#[derive(Clone)]
struct Residuals {
    rx: DVector<f64>,
    rz: DVector<f64>,
    rt: f64,
    pres: f64,
    dres: f64,
    gap: f64,
    rel_gap: f64,
}

fn residuals(sf: &StandardForm, it: &Iterate) -> Residuals {
    let rx = sf.gt_mul(&it.z) + &sf.c * it.tau;
    let rz = sf.g_mul(&it.x) + &it.s - &sf.h * it.tau;
    let cx = sf.c.dot(&it.x);
    let hz = sf.h.dot(&it.z);
    let rt = it.kappa + cx + hz;
    let pres = sf.row_norm(&rz) / it.tau / sf.h_norm.max(1.0);
    let dres = sf.col_norm(&rx) / it.tau / sf.c_norm.max(1.0);
    let pcost = cx / it.tau;
    let dcost = -hz / it.tau;
    let gap = it.s.dot(&it.z) / (it.tau * it.tau);
    let rel_gap = gap / pcost.abs().min(dcost.abs()).max(1.0);
    Residuals { rx, rz, rt, pres, dres, gap, rel_gap }
}

fn result(
    p: &ConicProgram,
    sf: &StandardForm,
    it: &Iterate,
    r: &Residuals,
    status: SolveStatus,
    iterations: usize,
) -> SolveResult {
    let x: Vec<f64> = it.x.iter().zip(sf.col_scale.iter()).map(|(v, d)| v * d / it.tau).collect();
    SolveResult {
        status,
        objective: p.objective_value(&x),
        x,
        primal_residual: r.pres,
        dual_residual: r.dres,
        gap: r.gap,
        rel_gap: r.rel_gap,
        iterations,
    }
}

fn is_loose_optimal(r: &Residuals, opts: &SolverOptions) -> bool {
    r.pres <= opts.feas_tol_loose && r.dres <= opts.dual_tol_loose && r.rel_gap <= opts.rel_gap_tol_loose
}

/// Distance from the target tolerances; below 1 means converged.
fn merit(r: &Residuals, opts: &SolverOptions) -> f64 {
    let m = (r.pres / opts.feas_tol).max(r.dres / opts.feas_tol).max(r.rel_gap / opts.rel_gap_tol);
    if m.is_nan() {
        f64::INFINITY
    } else {
        m
    }
}

fn cones_interior(sf: &StandardForm, it: &Iterate) -> bool {
    let inside = |v: &DVector<f64>| {
        sf.cones.iter().all(|c| {
            let b = &v.as_slice()[c.start..c.start + c.dim];
            match c.kind {
                Kind::Lin => b.iter().all(|&a| a > 0.0),
                Kind::Soc => b[0] > 0.0 && soc_det(b) > 0.0,
            }
        })
    };
    it.tau > 0.0
        && it.kappa >= 0.0
        && it.x.iter().all(|v| v.is_finite())
        && inside(&it.s)
        && inside(&it.z)
}

/// Solves `p`. Deterministic given `(p, opts)`.
///
/// When the target tolerances cannot be reached the best iterate seen is
/// returned, flagged optimal only if it meets the contract tolerances.
pub fn solve(p: &ConicProgram, opts: &SolverOptions) -> SolveResult {
    let sf = StandardForm::from_program(p);
    let e = sf.identity();
    let mut it = Iterate { x: DVector::zeros(sf.n), s: e.clone(), z: e.clone(), tau: 1.0, kappa: 1.0 };
    let nu = (sf.degree + 1) as f64;
    let mut best: Option<(Iterate, Residuals, f64, usize)> = None;
    let mut stalled = 0;

    let finish = |best: Option<(Iterate, Residuals, f64, usize)>, fallback: SolveStatus| -> SolveResult {
        let (it, r, _, iter) = best.expect("at least one iterate evaluated");
        let status = if is_loose_optimal(&r, opts) { SolveStatus::Optimal } else { fallback };
        result(p, &sf, &it, &r, status, iter)
    };

    for iter in 0..=opts.max_iters {
        let r = residuals(&sf, &it);
        log::trace!(
            "ipm {iter}: pres {:.2e} dres {:.2e} gap {:.2e} rel {:.2e} tau {:.2e} kappa {:.2e}",
            r.pres, r.dres, r.gap, r.rel_gap, it.tau, it.kappa
        );
        let m = merit(&r, opts);
        if m <= 1.0 {
            return result(p, &sf, &it, &r, SolveStatus::Optimal, iter);
        }
        // Gᵀz and Gx + s are recovered from the residuals.
        let hz = sf.h.dot(&it.z);
        if hz < 0.0 && sf.col_norm(&(&r.rx - &sf.c * it.tau)) / -hz <= opts.feas_tol {
            return result(p, &sf, &it, &r, SolveStatus::Infeasible, iter);
        }
        let cx = sf.c.dot(&it.x);
        if cx < 0.0 && sf.row_norm(&(&r.rz + &sf.h * it.tau)) / -cx <= opts.feas_tol {
            return result(p, &sf, &it, &r, SolveStatus::Unbounded, iter);
        }
        let best_m = best.as_ref().map_or(f64::INFINITY, |b| b.2);
        let best_loose = best.as_ref().is_some_and(|b| is_loose_optimal(&b.1, opts));
        let loose = is_loose_optimal(&r, opts);
        if (loose && !best_loose) || (loose == best_loose && m < best_m) {
            best = Some((it.clone(), r.clone(), m, iter));
        } else if m > 1e3 * best_m && best_loose {
            // Round-off has taken over; the best iterate is as good as it gets.
            return finish(best, SolveStatus::NumericalFailure);
        }
        if iter == opts.max_iters {
            return finish(best, SolveStatus::MaxIters);
        }
        if stalled >= 3 {
            return finish(best, SolveStatus::NumericalFailure);
        }

        let scaling = Scaling {
            blocks: sf
                .cones
                .iter()
                .map(|c| {
                    let rg = c.start..c.start + c.dim;
                    Scale::new(c.kind, &it.s.as_slice()[rg.clone()], &it.z.as_slice()[rg])
                })
                .collect(),
        };
        let lambda = scaling.apply(&sf, Apply::W, &it.z);
        let Some(kkt) = Kkt::factor(&sf, &scaling, opts.refine_steps) else {
            return finish(best, SolveStatus::NumericalFailure);
        };
        let (x1, z1) = kkt.solve(&(-&sf.c), &sf.h);
        let denom = sf.c.dot(&x1) + sf.h.dot(&z1) - it.kappa / it.tau;

        let direction = |eta: f64, ds_target: &DVector<f64>, dk: f64| -> Direction {
            let wl = scaling.apply(&sf, Apply::W, &jordan_div(&sf, &lambda, ds_target));
            let bx = &r.rx * -eta;
            let bz = &r.rz * -eta - &wl;
            let (x2, z2) = kkt.solve(&bx, &bz);
            let dtau = (-eta * r.rt - sf.c.dot(&x2) - sf.h.dot(&z2) - dk / it.tau) / denom;
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            let ds = &wl - scaling.apply(&sf, Apply::W2, &dz);
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            Direction { dx, dz, ds, dtau, dkappa }
        };
        let step_len = |d: &Direction| -> f64 {
            let mut a = max_step(&sf, &it.s, &d.ds).min(max_step(&sf, &it.z, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-it.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-it.kappa / d.dkappa);
            }
            a
        };

        let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / nu;
        let ll = jordan(&sf, &lambda, &lambda);
        let aff = direction(1.0, &(-&ll), -it.tau * it.kappa);
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        let corr = jordan(
            &sf,
            &scaling.apply(&sf, Apply::WInv, &aff.ds),
            &scaling.apply(&sf, Apply::W, &aff.dz),
        );
        let ds_target = -&ll - corr + &e * (sigma * mu);
        let dk = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let d = direction(1.0 - sigma, &ds_target, dk);
        let alpha = (opts.step_fraction * step_len(&d)).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            return finish(best, SolveStatus::NumericalFailure);
        }
        stalled = if alpha < 1e-8 { stalled + 1 } else { 0 };

        let next = Iterate {
            x: &it.x + &d.dx * alpha,
            s: &it.s + &d.ds * alpha,
            z: &it.z + &d.dz * alpha,
            tau: it.tau + d.dtau * alpha,
            kappa: it.kappa + d.dkappa * alpha,
        };
        if !cones_interior(&sf, &next) {
            return finish(best, SolveStatus::NumericalFailure);
        }
        it = next;
    }
    unreachable!("loop returns at max_iters")
}

//! Fundamental domain of a genus-one surface.
//!
//! Pipeline: two loops crossing once → integer closed 1-forms → harmonic
//! representatives via a cotangent Poisson solve → conjugate forms → cut the
//! mesh along both loops and integrate `α + i⋆α` over the resulting disk.
//!
//! 1-forms are stored as one value per unordered edge, oriented from the
//! smaller to the larger vertex index; antisymmetry is therefore exact.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use log::warn;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SimplicialSurface, Vec3};
use crate::obj;
use crate::sparse::SparseLaplacian;

/// Two directed vertex cycles generating the first homology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopBasis {
    pub gamma1: Vec<usize>,
    pub gamma2: Vec<usize>,
}

impl LoopBasis {
    /// Validate the loops against `surface`: closed edge cycles, simple,
    /// crossing each other, and independent in homology.
    pub fn new(surface: &SimplicialSurface, gamma1: Vec<usize>, gamma2: Vec<usize>) -> Result<Self> {
        for (k, g) in [&gamma1, &gamma2].into_iter().enumerate() {
            check_cycle(surface, g, k + 1)?;
        }
        let set1: HashSet<usize> = gamma1.iter().copied().collect();
        let shared = gamma2.iter().filter(|v| set1.contains(v)).count();
        if shared == 0 {
            return Err(Error::Independence("loops share no vertex".into()));
        }
        if shared > 1 {
            warn!("loops share {shared} vertices; the cut may fail to be a disk");
        }
        let basis = LoopBasis { gamma1, gamma2 };
        let det = basis.intersection_determinant(surface)?;
        if det == 0 {
            return Err(Error::Independence(
                "integer period matrix of the loop forms is singular".into(),
            ));
        }
        Ok(basis)
    }

    pub fn read_json(path: impl AsRef<Path>, surface: &SimplicialSurface) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: LoopBasis = serde_json::from_str(&text)?;
        LoopBasis::new(surface, raw.gamma1, raw.gamma2)
    }

    pub fn loops(&self) -> [&[usize]; 2] {
        [&self.gamma1, &self.gamma2]
    }

    /// Determinant of `[∮_{γ_m} η_l]`, an integer for the loop forms.
    pub fn intersection_determinant(&self, surface: &SimplicialSurface) -> Result<i64> {
        let p = self.eta_periods(surface)?;
        Ok((p[0][0] * p[1][1] - p[0][1] * p[1][0]).round() as i64)
    }

    /// `p[l][m] = ∮_{γ_m} η_l`.
    pub fn eta_periods(&self, surface: &SimplicialSurface) -> Result<[[f64; 2]; 2]> {
        let eta = [
            closed_one_form(surface, &self.gamma1)?,
            closed_one_form(surface, &self.gamma2)?,
        ];
        let mut p = [[0.0; 2]; 2];
        for l in 0..2 {
            for (m, g) in self.loops().into_iter().enumerate() {
                p[l][m] = eta[l].period(surface, g);
            }
        }
        Ok(p)
    }
}

fn check_cycle(surface: &SimplicialSurface, g: &[usize], which: usize) -> Result<()> {
    if g.len() < 3 {
        return Err(Error::InvalidLoop(format!("loop {which} has fewer than 3 vertices")));
    }
    let mut seen = HashSet::new();
    for &v in g {
        if v >= surface.vertex_count() {
            return Err(Error::IndexOutOfRange { index: v, count: surface.vertex_count() });
        }
        if !seen.insert(v) {
            return Err(Error::NotSimple(which));
        }
    }
    for k in 0..g.len() {
        let (a, b) = (g[k], g[(k + 1) % g.len()]);
        if surface.edge_id(a, b).is_none() {
            return Err(Error::InvalidLoop(format!(
                "loop {which}: consecutive vertices {a} and {b} are not joined by an edge"
            )));
        }
    }
    Ok(())
}

/// A real 1-form: one value per edge `[i, j]`, `i < j`, read as `ω(i → j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub values: Vec<f64>,
}

impl OneForm {
    pub fn zeros(surface: &SimplicialSurface) -> Self {
        OneForm { values: vec![0.0; surface.edge_count()] }
    }

    /// `ω(i → j)`; zero if `i` and `j` are not adjacent.
    pub fn value(&self, surface: &SimplicialSurface, i: usize, j: usize) -> f64 {
        match surface.edge_id(i, j) {
            Some(e) if i < j => self.values[e],
            Some(e) => -self.values[e],
            None => 0.0,
        }
    }

    /// Sum of `ω` along a closed vertex cycle.
    pub fn period(&self, surface: &SimplicialSurface, cycle: &[usize]) -> f64 {
        (0..cycle.len())
            .map(|k| self.value(surface, cycle[k], cycle[(k + 1) % cycle.len()]))
            .sum()
    }

    /// Sum of `ω` around the boundary of face `face`.
    pub fn face_sum(&self, surface: &SimplicialSurface, face: usize) -> f64 {
        let t = surface.faces()[face];
        self.value(surface, t[0], t[1]) + self.value(surface, t[1], t[2]) + self.value(surface, t[2], t[0])
    }

    pub fn max_face_sum(&self, surface: &SimplicialSurface) -> f64 {
        (0..surface.face_count())
            .map(|f| self.face_sum(surface, f).abs())
            .fold(0.0, f64::max)
    }

    pub fn add_scaled(&self, other: &OneForm, s: f64) -> OneForm {
        OneForm {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
        }
    }
}

/// Integer closed 1-form dual to the loop `gamma`: `+1` on edges leaving a
/// loop vertex into its left-hand fan, `−1` on the reversed edges.
pub fn closed_one_form(surface: &SimplicialSurface, gamma: &[usize]) -> Result<OneForm> {
    let n = gamma.len();
    if n < 3 {
        return Err(Error::InvalidLoop("loop has fewer than 3 vertices".into()));
    }
    let mut form = OneForm::zeros(surface);
    for k in 0..n {
        let v = gamma[k];
        let pred = gamma[(k + n - 1) % n];
        let succ = gamma[(k + 1) % n];
        let ring = surface.one_ring_from(v, succ);
        let end = ring.iter().position(|&u| u == pred).ok_or_else(|| {
            Error::InvalidLoop(format!("vertex {v}: loop neighbors {pred}, {succ} not in its ring"))
        })?;
        for &j in &ring[1..end] {
            let e = surface.edge_id(v, j).expect("ring neighbor is adjacent");
            // sigma(v, j) = 1 contributes +1 to eta(v -> j).
            form.values[e] += if v < j { 1.0 } else { -1.0 };
        }
    }
    Ok(form)
}

/// Result of harmonizing a closed form.
#[derive(Clone, Debug)]
pub struct HarmonicForm {
    pub omega: OneForm,
    pub h: Vec<f64>,
    /// Max-norm of the per-vertex equation residual.
    pub residual: f64,
}

/// Solve `Σ_j w_ij (η(i→j) + h_j − h_i) = 0` with `h(v_0) = 0` and return
/// `ω = η + dh`.
pub fn harmonize(surface: &SimplicialSurface, eta: &OneForm) -> Result<HarmonicForm> {
    let w = surface.cotangent_weights();
    harmonize_with(surface, eta, &w, &SparseLaplacian::from_edge_weights(surface, &w))
}

fn harmonize_with(
    surface: &SimplicialSurface,
    eta: &OneForm,
    w: &[f64],
    lap: &SparseLaplacian,
) -> Result<HarmonicForm> {
    let n = surface.vertex_count();
    let mut rhs = vec![0.0; n];
    for (e, &[i, j]) in surface.edges().iter().enumerate() {
        let flux = w[e] * eta.values[e];
        rhs[i] += flux;
        rhs[j] -= flux;
    }
    let h = lap.grounded(0)?.solve(&rhs)?;
    let mut omega = eta.clone();
    for (e, &[i, j]) in surface.edges().iter().enumerate() {
        omega.values[e] += h[j] - h[i];
    }
    let residual = divergence(surface, &omega, w).iter().fold(0.0, |m, r| f64::max(m, r.abs()));
    Ok(HarmonicForm { omega, h, residual })
}

/// `Σ_j w_ij ω(i → j)` at every vertex.
pub fn divergence(surface: &SimplicialSurface, omega: &OneForm, w: &[f64]) -> Vec<f64> {
    let mut div = vec![0.0; surface.vertex_count()];
    for (e, &[i, j]) in surface.edges().iter().enumerate() {
        let flux = w[e] * omega.values[e];
        div[i] += flux;
        div[j] -= flux;
    }
    div
}

/// `ω + i⋆ω`.
#[derive(Clone, Debug)]
pub struct ComplexForm {
    pub re: OneForm,
    pub im: OneForm,
}

impl ComplexForm {
    pub fn period(&self, surface: &SimplicialSurface, cycle: &[usize]) -> [f64; 2] {
        [self.re.period(surface, cycle), self.im.period(surface, cycle)]
    }
}

/// `⟨α, β⟩ = Σ_faces |τ| ∇α·∇β`, written with cotangent edge weights.
fn l2_inner(w: &[f64], a: &OneForm, b: &OneForm) -> f64 {
    w.iter().zip(a.values.iter().zip(&b.values)).map(|(w, (x, y))| w * x * y).sum()
}

/// `∫ α ∧ β`, exact for per-face linear forms.
fn wedge(surface: &SimplicialSurface, a: &OneForm, b: &OneForm) -> f64 {
    surface
        .faces()
        .iter()
        .map(|t| {
            let (ab_a, ac_a) = (a.value(surface, t[0], t[1]), a.value(surface, t[0], t[2]));
            let (ab_b, ac_b) = (b.value(surface, t[0], t[1]), b.value(surface, t[0], t[2]));
            0.5 * (ab_a * ac_b - ac_a * ab_b)
        })
        .sum()
}

/// Conjugates of two harmonic forms spanning the harmonic space.
///
/// Within each face `⋆ω` is `ω` rotated a quarter turn about the outward
/// normal. That per-face field is not a consistent edge form, so it is
/// L²-projected back onto `span{ω_1, ω_2}`. Since `⟨Jω_k, ω_l⟩ = ∫ ω_k ∧ ω_l`
/// the projection only needs the Gram matrix and the wedge products, and the
/// result is exactly closed.
pub fn hodge_star(surface: &SimplicialSurface, omega: [&OneForm; 2]) -> Result<[OneForm; 2]> {
    let w = surface.cotangent_weights();
    let g = Matrix2::from_fn(|l, k| l2_inner(&w, omega[l], omega[k]));
    // m[(l, k)] = <J omega_k, omega_l> = wedge(omega_k, omega_l)
    let m = Matrix2::from_fn(|l, k| wedge(surface, omega[k], omega[l]));
    let c = g
        .lu()
        .solve(&m)
        .ok_or_else(|| Error::Independence("harmonic forms are linearly dependent".into()))?;
    let star = |k: usize| scaled_sum(omega[0], omega[1], c[(0, k)], c[(1, k)]);
    Ok([star(0), star(1)])
}

/// `ζ_l = ω_l + i⋆ω_l` for both harmonic basis forms.
pub fn holomorphic_forms(surface: &SimplicialSurface, omega: [&OneForm; 2]) -> Result<[ComplexForm; 2]> {
    let [s1, s2] = hodge_star(surface, omega)?;
    Ok([
        ComplexForm { re: omega[0].clone(), im: s1 },
        ComplexForm { re: omega[1].clone(), im: s2 },
    ])
}

/// Numbers describing how well the domain computation went.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainDiagnostics {
    /// Max-norm Poisson residual for each loop form.
    pub poisson_residual: [f64; 2],
    /// Largest weight magnitude, the scale of the residual.
    pub weight_scale: f64,
    /// Largest face-boundary sum of the conjugate forms.
    pub star_closedness: f64,
    /// `[[Re ∮γ1 ζ, Re ∮γ2 ζ], [Im ∮γ1 ζ, Im ∮γ2 ζ]]` before normalization.
    pub period_matrix: [[f64; 2]; 2],
    pub period_condition: f64,
    /// Real coefficients `(c1, c2)` of the integrated combination.
    pub coefficients: [f64; 2],
    pub cut_euler: i64,
    pub flipped_faces: usize,
}

/// The mesh cut open into a disk and laid out in the plane.
#[derive(Clone, Debug)]
pub struct FundamentalDomain {
    /// Planar position of every cut vertex.
    pub coords: Vec<[f64; 2]>,
    /// Original vertex of every cut vertex.
    pub correspondence: Vec<usize>,
    /// Faces of the cut mesh, in the order of the original faces.
    pub faces: Vec<[usize; 3]>,
    pub w1: [f64; 2],
    pub w2: [f64; 2],
    pub diagnostics: DomainDiagnostics,
}

#[derive(Serialize)]
struct DomainSidecar<'a> {
    w1: [f64; 2],
    w2: [f64; 2],
    correspondence: &'a [usize],
}

impl FundamentalDomain {
    /// Write the layout as an OBJ with `z = 0` and a JSON sidecar.
    pub fn write(&self, obj_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let v: Vec<Vec3> = self.coords.iter().map(|c| Vec3::new(c[0], c[1], 0.0)).collect();
        obj::write_obj(obj_path, &v, &self.faces, None)?;
        let side = DomainSidecar { w1: self.w1, w2: self.w2, correspondence: &self.correspondence };
        let path = json_path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(path, e))
    }

    /// Signed area of each cut face in the plane.
    pub fn signed_areas(&self) -> Vec<f64> {
        self.faces
            .iter()
            .map(|t| {
                let [a, b, c] = [self.coords[t[0]], self.coords[t[1]], self.coords[t[2]]];
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            })
            .collect()
    }

    /// Largest distance from a copy-to-copy offset to the nearest of
    /// `±w1, ±w2, ±w1 ± w2`.
    pub fn identification_error(&self) -> f64 {
        let mut first: Vec<Option<usize>> = vec![None; self.correspondence.iter().max().map_or(0, |m| m + 1)];
        let lattice: Vec<[f64; 2]> = [(1, 0), (0, 1), (1, 1), (1, -1), (0, 0)]
            .iter()
            .flat_map(|&(a, b)| {
                let a = a as f64;
                let b = b as f64;
                let v = [a * self.w1[0] + b * self.w2[0], a * self.w1[1] + b * self.w2[1]];
                [v, [-v[0], -v[1]]]
            })
            .collect();
        let mut worst: f64 = 0.0;
        for (cv, &v) in self.correspondence.iter().enumerate() {
            match first[v] {
                None => first[v] = Some(cv),
                Some(c0) => {
                    let d = [self.coords[cv][0] - self.coords[c0][0], self.coords[cv][1] - self.coords[c0][1]];
                    let best = lattice
                        .iter()
                        .map(|l| (d[0] - l[0]).hypot(d[1] - l[1]))
                        .fold(f64::INFINITY, f64::min);
                    worst = worst.max(best);
                }
            }
        }
        worst
    }
}

/// Split every vertex into the face sectors separated by cut edges.
/// Returns, for each face, the cut-vertex id of each corner, plus the
/// original vertex of every cut vertex.
fn cut_mesh(surface: &SimplicialSurface, cut: &HashSet<usize>) -> (Vec<[usize; 3]>, Vec<usize>) {
    let mut corner_ids = vec![[usize::MAX; 3]; surface.face_count()];
    let mut correspondence = Vec::new();
    for v in 0..surface.vertex_count() {
        let ring = surface.one_ring(v);
        let d = ring.len();
        let is_cut = |k: usize| cut.contains(&surface.edge_id(v, ring[k % d]).expect("ring edge"));
        let start = (0..d).find(|&k| is_cut(k)).unwrap_or(0);
        let mut id = correspondence.len();
        correspondence.push(v);
        for step in 0..d {
            let k = start + step;
            if step > 0 && is_cut(k) {
                id = correspondence.len();
                correspondence.push(v);
            }
            let (face, corner) = surface.halfedge_face(v, ring[k % d]).expect("ring face");
            corner_ids[face][corner] = id;
        }
    }
    (corner_ids, correspondence)
}

/// Cut along both loops and integrate the real combination of `ζ_1, ζ_2`
/// whose `γ_1` period is `1`.
pub fn cut_and_integrate(
    surface: &SimplicialSurface,
    loops: &LoopBasis,
    zeta: [&ComplexForm; 2],
) -> Result<FundamentalDomain> {
    let mut cut = HashSet::new();
    for g in loops.loops() {
        for k in 0..g.len() {
            cut.insert(surface.edge_id(g[k], g[(k + 1) % g.len()]).expect("validated loop"));
        }
    }
    let (faces, correspondence) = cut_mesh(surface, &cut);
    let cut_euler = correspondence.len() as i64 - (surface.edge_count() + cut.len()) as i64
        + surface.face_count() as i64;
    if cut_euler != 1 {
        return Err(Error::CutNotDisk { euler: cut_euler });
    }

    // Periods: p[k] = (Re, Im) of ∮ ζ_k over γ1 and γ2.
    let [g1, g2] = loops.loops();
    let p1 = [zeta[0].period(surface, g1), zeta[1].period(surface, g1)];
    let p2 = [zeta[0].period(surface, g2), zeta[1].period(surface, g2)];
    // Solve a1 ζ1 + a2 ζ2 having γ1-period exactly 1 + 0i.
    let a = Matrix2::new(p1[0][0], p1[1][0], p1[0][1], p1[1][1]);
    let det = a.determinant();
    let scale = a.abs().max();
    if !(det.abs() > 1e-12 * scale * scale) {
        return Err(Error::SingularPeriods { det });
    }
    let coef = a.lu().solve(&Vector2::new(1.0, 0.0)).ok_or(Error::SingularPeriods { det })?;
    let combine = |p: [[f64; 2]; 2]| -> [f64; 2] {
        [coef[0] * p[0][0] + coef[1] * p[1][0], coef[0] * p[0][1] + coef[1] * p[1][1]]
    };
    let w1 = combine(p1);
    let mut w2 = combine(p2);
    let lattice = Matrix2::new(w1[0], w2[0], w1[1], w2[1]);
    let ldet = lattice.determinant();
    if !(ldet.abs() > 1e-12) {
        return Err(Error::SingularPeriods { det: ldet });
    }
    if w2[1] < 0.0 {
        w2 = [-w2[0], -w2[1]];
    }
    let sv = lattice.singular_values();
    let period_condition = sv.max() / sv.min();

    let alpha = scaled_sum(&zeta[0].re, &zeta[1].re, coef[0], coef[1]);
    let beta = scaled_sum(&zeta[0].im, &zeta[1].im, coef[0], coef[1]);

    // Breadth-first integration over the cut mesh's vertex graph.
    let nc = correspondence.len();
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); nc];
    for (fi, t) in surface.faces().iter().enumerate() {
        for c in 0..3 {
            let (i, j) = (c, (c + 1) % 3);
            adj[faces[fi][i]].push((faces[fi][j], t[i], t[j]));
            adj[faces[fi][j]].push((faces[fi][i], t[j], t[i]));
        }
    }
    let mut coords = vec![[f64::NAN; 2]; nc];
    let mut queue = VecDeque::new();
    coords[0] = [0.0, 0.0];
    queue.push_back(0);
    while let Some(cv) = queue.pop_front() {
        for &(nb, a_orig, b_orig) in &adj[cv] {
            if coords[nb][0].is_nan() {
                coords[nb] = [
                    coords[cv][0] + alpha.value(surface, a_orig, b_orig),
                    coords[cv][1] + beta.value(surface, a_orig, b_orig),
                ];
                queue.push_back(nb);
            }
        }
    }
    if coords.iter().any(|c| c[0].is_nan()) {
        return Err(Error::CutNotDisk { euler: cut_euler });
    }

    let mut domain = FundamentalDomain {
        coords,
        correspondence,
        faces,
        w1,
        w2,
        diagnostics: DomainDiagnostics {
            poisson_residual: [0.0; 2],
            weight_scale: 0.0,
            star_closedness: zeta[0].im.max_face_sum(surface).max(zeta[1].im.max_face_sum(surface)),
            period_matrix: [[w1[0], w2[0]], [w1[1], w2[1]]],
            period_condition,
            coefficients: [coef[0], coef[1]],
            cut_euler,
            flipped_faces: 0,
        },
    };
    domain.diagnostics.flipped_faces = domain.signed_areas().iter().filter(|a| **a <= 0.0).count();
    if domain.diagnostics.flipped_faces > 0 {
        warn!("{} faces are flipped in the fundamental domain", domain.diagnostics.flipped_faces);
    }
    Ok(domain)
}

fn scaled_sum(a: &OneForm, b: &OneForm, ca: f64, cb: f64) -> OneForm {
    OneForm { values: a.values.iter().zip(&b.values).map(|(x, y)| ca * x + cb * y).collect() }
}

/// The full pipeline from loops to a planar fundamental domain.
pub fn fundamental_domain(surface: &SimplicialSurface, loops: &LoopBasis) -> Result<FundamentalDomain> {
    let w = surface.cotangent_weights();
    let lap = SparseLaplacian::from_edge_weights(surface, &w);
    let mut harmonic = Vec::with_capacity(2);
    for g in loops.loops() {
        let eta = closed_one_form(surface, g)?;
        harmonic.push(harmonize_with(surface, &eta, &w, &lap)?);
    }
    let zeta = holomorphic_forms(surface, [&harmonic[0].omega, &harmonic[1].omega])?;
    let mut domain = cut_and_integrate(surface, loops, [&zeta[0], &zeta[1]])?;
    domain.diagnostics.poisson_residual = [harmonic[0].residual, harmonic[1].residual];
    domain.diagnostics.weight_scale = w.iter().fold(0.0, |m, x| f64::max(m, x.abs()));
    Ok(domain)
}

/// Loops for surfaces that come without them.
///
/// `γ_1` is the shortest cycle closed by a non-tree, non-cotree edge of a
/// breadth-first tree–cotree decomposition. `γ_2` leaves a vertex `x` of
/// `γ_1` into its left fan, travels around the handle without touching
/// `γ_1`, and returns to `x` from its right fan, so the two cross exactly once.
pub fn fallback_loops(surface: &SimplicialSurface) -> Result<LoopBasis> {
    let generators = tree_cotree_cycles(surface);
    if generators.len() != 2 {
        return Err(Error::InvalidLoop(format!(
            "expected 2 homology generators, found {}",
            generators.len()
        )));
    }
    let gamma1 = generators.into_iter().min_by_key(|c| c.len()).expect("two cycles");
    let gamma2 = crossing_loop(surface, &gamma1)?;
    warn!("no loops supplied; using tree-cotree loops (the loop class shapes the fundamental domain)");
    LoopBasis::new(surface, gamma1, gamma2)
}

fn tree_cotree_cycles(surface: &SimplicialSurface) -> Vec<Vec<usize>> {
    let n = surface.vertex_count();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut in_tree = vec![false; surface.edge_count()];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &[a, b] in surface.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut queue = VecDeque::from([0usize]);
    parent[0] = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if parent[u] == usize::MAX {
                parent[u] = v;
                depth[u] = depth[v] + 1;
                in_tree[surface.edge_id(u, v).unwrap()] = true;
                queue.push_back(u);
            }
        }
    }

    // Dual spanning tree over faces through edges not in the primal tree.
    let m = surface.face_count();
    let mut edge_faces = vec![Vec::with_capacity(2); surface.edge_count()];
    for (f, fe) in surface.face_edges().iter().enumerate() {
        for &e in fe {
            edge_faces[e].push(f);
        }
    }
    let mut seen = vec![false; m];
    let mut in_cotree = vec![false; surface.edge_count()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(f) = queue.pop_front() {
        for &e in &surface.face_edges()[f] {
            if in_tree[e] {
                continue;
            }
            for &g in &edge_faces[e] {
                if !seen[g] {
                    seen[g] = true;
                    in_cotree[e] = true;
                    queue.push_back(g);
                }
            }
        }
    }

    let path_up = |mut v: usize, stop: usize| {
        let mut p = vec![v];
        while v != stop {
            v = parent[v];
            p.push(v);
        }
        p
    };
    let mut cycles = Vec::new();
    for (e, &[a, b]) in surface.edges().iter().enumerate() {
        if in_tree[e] || in_cotree[e] {
            continue;
        }
        // Lowest common ancestor of a and b.
        let (mut x, mut y) = (a, b);
        while depth[x] > depth[y] {
            x = parent[x];
        }
        while depth[y] > depth[x] {
            y = parent[y];
        }
        while x != y {
            x = parent[x];
            y = parent[y];
        }
        let mut cycle = path_up(a, x);
        let mut back = path_up(b, x);
        back.pop();
        back.reverse();
        cycle.extend(back);
        // cycle runs a -> ... -> lca -> ... -> b, and the edge b -> a closes it.
        cycles.push(cycle);
    }
    cycles
}

/// A loop through one vertex `x` of `gamma` that crosses it there and nowhere else.
fn crossing_loop(surface: &SimplicialSurface, gamma: &[usize]) -> Result<Vec<usize>> {
    let n = gamma.len();
    let on_gamma: HashSet<usize> = gamma.iter().copied().collect();
    let mut best: Option<Vec<usize>> = None;
    for k in 0..n {
        let x = gamma[k];
        let pred = gamma[(k + n - 1) % n];
        let succ = gamma[(k + 1) % n];
        let ring = surface.one_ring_from(x, succ);
        let Some(end) = ring.iter().position(|&u| u == pred) else { continue };
        let left: Vec<usize> = ring[1..end].iter().copied().filter(|v| !on_gamma.contains(v)).collect();
        let right: HashSet<usize> = ring[end + 1..].iter().copied().filter(|v| !on_gamma.contains(v)).collect();
        if left.is_empty() || right.is_empty() {
            continue;
        }
        if let Some(path) = bfs_path(surface, &left, &right, &on_gamma) {
            let mut cycle = vec![x];
            cycle.extend(path);
            if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
                best = Some(cycle);
            }
        }
    }
    best.ok_or_else(|| Error::InvalidLoop("could not build a loop crossing the first generator".into()))
}

/// Shortest vertex path from any of `sources` to any of `targets`, avoiding `blocked`.
fn bfs_path(
    surface: &SimplicialSurface,
    sources: &[usize],
    targets: &HashSet<usize>,
    blocked: &HashSet<usize>,
) -> Option<Vec<usize>> {
    let n = surface.vertex_count();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        prev[s] = s;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        if targets.contains(&v) && !sources.contains(&v) {
            let mut path = vec![v];
            let mut cur = v;
            while prev[cur] != cur {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for u in surface.one_ring(v) {
            if prev[u] == usize::MAX && !blocked.contains(&u) {
                prev[u] = v;
                queue.push_back(u);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::torus_grid_loops;
    use crate::torus::TorusShape;

    fn grid(n: usize) -> SimplicialSurface {
        SimplicialSurface::torus_grid(&TorusShape::default(), n, n).unwrap().0
    }

    fn standard_loops(s: &SimplicialSurface, n: usize) -> LoopBasis {
        let (g1, g2) = torus_grid_loops(n, n);
        LoopBasis::new(s, g1, g2).unwrap()
    }

    #[test]
    fn loop_forms_are_closed_integer_forms() {
        let s = grid(16);
        let loops = standard_loops(&s, 16);
        for g in loops.loops() {
            let eta = closed_one_form(&s, g).unwrap();
            assert!(eta.values.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
            assert_eq!(eta.max_face_sum(&s), 0.0);
        }
        // Edge far from both loops.
        let eta1 = closed_one_form(&s, &loops.gamma1).unwrap();
        assert_eq!(eta1.value(&s, 8 * 16 + 8, 8 * 16 + 9), 0.0);
        let p = loops.eta_periods(&s).unwrap();
        assert_eq!(p[0][1].abs(), 1.0);
        assert_eq!(p[1][0].abs(), 1.0);
        assert_eq!(loops.intersection_determinant(&s).unwrap().abs(), 1);
    }

    #[test]
    fn identical_loops_are_dependent() {
        let s = grid(8);
        let (g1, _) = torus_grid_loops(8, 8);
        assert!(matches!(LoopBasis::new(&s, g1.clone(), g1), Err(Error::Independence(_))));
    }

    #[test]
    fn repeated_vertex_is_not_simple() {
        let s = grid(8);
        let (g1, g2) = torus_grid_loops(8, 8);
        let mut bad = g1.clone();
        bad.extend([7, 6, 5]);
        bad.extend(&g1);
        assert!(matches!(LoopBasis::new(&s, bad, g2), Err(Error::NotSimple(1))));
    }

    #[test]
    fn zero_form_harmonizes_to_zero() {
        let s = grid(8);
        let h = harmonize(&s, &OneForm::zeros(&s)).unwrap();
        assert!(h.h.iter().all(|v| v.abs() < 1e-14));
        assert!(h.omega.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn harmonization_preserves_periods() {
        let s = grid(16);
        let loops = standard_loops(&s, 16);
        let w = s.cotangent_weights();
        let scale = w.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        for g in loops.loops() {
            let eta = closed_one_form(&s, g).unwrap();
            let h = harmonize(&s, &eta).unwrap();
            assert!(h.residual < 1e-10 * scale, "residual {}", h.residual);
            for c in loops.loops() {
                assert!((eta.period(&s, c) - h.omega.period(&s, c)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn conjugate_forms_are_closed_and_periods_nonsingular() {
        let s = grid(12);
        let loops = standard_loops(&s, 12);
        let om: Vec<OneForm> = loops
            .loops()
            .iter()
            .map(|g| harmonize(&s, &closed_one_form(&s, g).unwrap()).unwrap().omega)
            .collect();
        let zeta = holomorphic_forms(&s, [&om[0], &om[1]]).unwrap();
        assert_eq!(zeta[0].re, om[0]);
        assert!(zeta[0].im.max_face_sum(&s) < 1e-8);
        assert!(zeta[1].im.max_face_sum(&s) < 1e-8);
        let p: Vec<[f64; 2]> = [&zeta[0], &zeta[1]]
            .iter()
            .flat_map(|z| loops.loops().map(|g| z.period(&s, g)))
            .collect();
        // Complex 2x2 determinant of [[P1(γ1), P1(γ2)], [P2(γ1), P2(γ2)]].
        let mul = |a: [f64; 2], b: [f64; 2]| [a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]];
        let d1 = mul(p[0], p[3]);
        let d2 = mul(p[1], p[2]);
        assert!((d1[0] - d2[0]).hypot(d1[1] - d2[1]) > 1e-6);
    }

    #[test]
    fn flat_grid_domain_is_a_rectangle() {
        let s = SimplicialSurface::flat_torus_grid(16, 16, 1.0, 0.5).unwrap();
        let loops = standard_loops(&s, 16);
        let d = fundamental_domain(&s, &loops).unwrap();
        assert_eq!(d.diagnostics.cut_euler, 1);
        assert!((d.w1[0] - 1.0).abs() < 1e-12 && d.w1[1].abs() < 1e-12);
        assert!(d.w2[0].abs() < 1e-6, "{:?}", d.w2);
        assert!((d.w2[1] - 0.5).abs() < 1e-6, "{:?}", d.w2);
        assert_eq!(d.diagnostics.flipped_faces, 0);
        assert!(d.identification_error() < 1e-8);
    }

    #[test]
    fn revolution_grid_domain() {
        let s = grid(16);
        let d = fundamental_domain(&s, &standard_loops(&s, 16)).unwrap();
        assert_eq!(d.diagnostics.flipped_faces, 0);
        assert!(d.identification_error() < 1e-8);
        assert!(d.w2[1] > 0.0);
        // Path independence: every cut face closes up.
        for t in &d.faces {
            let [a, b, c] = [d.coords[t[0]], d.coords[t[1]], d.coords[t[2]]];
            assert!(a.iter().chain(&b).chain(&c).all(|x| x.is_finite()));
        }
    }

    #[test]
    fn fallback_loops_form_a_unimodular_basis() {
        for n in [6, 9, 16] {
            let s = grid(n);
            let loops = fallback_loops(&s).unwrap();
            assert_eq!(loops.intersection_determinant(&s).unwrap().abs(), 1);
            let d = fundamental_domain(&s, &loops).unwrap();
            assert_eq!(d.diagnostics.cut_euler, 1);
            assert!(d.identification_error() < 1e-8);
        }
    }
}

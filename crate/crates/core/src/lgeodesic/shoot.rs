//! Multi-start shooting for the L-distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{audit, build_geodesic, direct, integrate_path, validate_times, LGeodesic};
use crate::error::{LabError, Result};
use crate::geometry::{check_point, ChartPoint, MetricModel};
use crate::linalg::{Mat, Vect};

#[derive(Clone, Debug, PartialEq)]
pub struct ShootConfig {
    /// RK4 steps over `[s_1, s_2]`.
    pub ode_steps: usize,
    /// Random perturbations of the Riemannian guess.
    pub random_starts: usize,
    /// When false only the warm start (or the unscaled Riemannian guess) is
    /// tried, and the full start set is used only if it fails.
    pub multi_start: bool,
    pub fd_step: f64,
    /// Convergence at endpoint error `<= tol (1 + rho)`.
    pub tol: f64,
    pub max_iter: usize,
    pub q_tie_tol: f64,
    pub z_sep_tol: f64,
    /// Fall back to direct path minimization when every shot fails.
    pub fallback: bool,
    pub direct_nodes: usize,
    /// Compute the half-step residual of the returned geodesic.
    pub residual: bool,
    pub seed: u64,
    pub warm_start: Option<Vect>,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            ode_steps: 1000,
            random_starts: 4,
            multi_start: true,
            fd_step: 1e-5,
            tol: 1e-8,
            max_iter: 60,
            q_tie_tol: 1e-4,
            z_sep_tol: 1e-2,
            fallback: true,
            direct_nodes: 200,
            residual: true,
            seed: 0x5eed,
            warm_start: None,
        }
    }
}

impl ShootConfig {
    /// Cheaper settings for Monte Carlo inner loops: fewer RK4 steps, a single
    /// start unless it fails, no residual check.
    pub fn fast() -> Self {
        Self { ode_steps: 80, multi_start: false, residual: false, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub z: Vect,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QResult {
    pub value: f64,
    pub geodesic: LGeodesic,
    /// Distinct converged L-geodesics, sorted by length.
    pub candidates: Vec<Candidate>,
    pub multiplicity_flag: bool,
    /// The minimizer came from the direct path optimizer.
    pub used_fallback: bool,
}

impl QResult {
    pub fn z(&self) -> &Vect {
        &self.geodesic.initial_z
    }
}

struct Shooter<'a> {
    model: &'a dyn MetricModel,
    x: Vect,
    y: Vect,
    s1: f64,
    s2: f64,
    basis: Mat,
    d: usize,
    steps: usize,
}

impl Shooter<'_> {
    fn z_of(&self, c: &Vect) -> Vect {
        self.basis * c
    }

    fn coeffs(&self, z: &Vect) -> Vect {
        let mut c = self.basis.transpose() * z;
        for i in self.d..c.len() {
            c[i] = 0.0;
        }
        c
    }

    fn endpoint_residual(&self, c: &Vect) -> Option<Vect> {
        integrate_path(self.model, &self.x, self.s1, &self.z_of(c), self.s2, self.steps, false)
            .ok()
            .map(|p| p.end() - self.y)
    }

    /// Levenberg-Marquardt on the endpoint map with a central-difference
    /// Jacobian. Returns the final coefficients and residual norm.
    fn solve(&self, start: Vect, tol: f64, fd_step: f64, max_iter: usize) -> (Vect, f64) {
        let mut c = start;
        let Some(mut r) = self.endpoint_residual(&c) else { return (c, f64::INFINITY) };
        let mut f = r.norm_squared();
        let mut mu = 1e-3;
        // after meeting `tol`, keep polishing while it pays
        let polish = 1e-13;
        for _ in 0..max_iter {
            if f.sqrt() <= polish {
                break;
            }
            let mut jac = Mat::zeros();
            for j in 0..self.d {
                let mut cp = c;
                let mut cm = c;
                cp[j] += fd_step;
                cm[j] -= fd_step;
                match (self.endpoint_residual(&cp), self.endpoint_residual(&cm)) {
                    (Some(a), Some(b)) => jac.set_column(j, &((a - b) / (2.0 * fd_step))),
                    _ => return (c, if f.sqrt() <= tol { f.sqrt() } else { f64::INFINITY }),
                }
            }
            let jtj = jac.transpose() * jac;
            let grad = jac.transpose() * r;
            let scale = (0..self.d).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-12);
            let mut accepted = false;
            for _ in 0..12 {
                let mut a = jtj;
                for i in 0..self.d {
                    a[(i, i)] += mu * scale;
                }
                for i in self.d..4 {
                    a[(i, i)] = 1.0;
                }
                let Some(step) = a.cholesky().map(|ch| ch.solve(&(-grad))) else {
                    mu *= 10.0;
                    continue;
                };
                let trial = c + step;
                if let Some(rt) = self.endpoint_residual(&trial) {
                    let ft = rt.norm_squared();
                    if ft < f {
                        c = trial;
                        r = rt;
                        f = ft;
                        mu = (mu * 0.2).max(1e-12);
                        accepted = true;
                        break;
                    }
                }
                mu *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        (c, f.sqrt())
    }
}

/// `Q(x, tau1; y, tau2)`: minimum L-length over converged shots.
pub fn q_distance(model: &dyn MetricModel, x: &ChartPoint, tau1: f64, y: &ChartPoint, tau2: f64, cfg: &ShootConfig) -> Result<QResult> {
    validate_times(model, tau1, tau2)?;
    check_point(model, x)?;
    check_point(model, y)?;
    let steps = { let n = cfg.ode_steps.max(2); n + n % 2 };
    let shooter = Shooter {
        model,
        x: x.coords,
        y: y.coords,
        s1: tau1.sqrt(),
        s2: tau2.sqrt(),
        basis: model.tangent_basis(&x.coords),
        d: model.dim(),
        steps,
    };
    let rho = model.distance(tau1, &x.coords, &y.coords);
    let tol = cfg.tol * (1.0 + rho);
    let ds = shooter.s2 - shooter.s1;
    let log = model.log_map(tau1, &x.coords, &y.coords) / (2.0 * ds);

    let primary: Vec<Vect> = match cfg.warm_start {
        Some(z) => vec![shooter.coeffs(&z)],
        None => vec![shooter.coeffs(&log)],
    };
    let mut converged: Vec<Vect> = Vec::new();
    let mut best_residual = f64::INFINITY;
    let mut run = |starts: &[Vect], converged: &mut Vec<Vect>| {
        for s in starts {
            let (c, res) = shooter.solve(*s, tol, cfg.fd_step, cfg.max_iter);
            best_residual = best_residual.min(res);
            if res <= tol {
                converged.push(c);
            }
        }
    };
    run(&primary, &mut converged);
    if !cfg.multi_start && cfg.warm_start.is_some() {
        // a warm start can carry the branch past the cut locus onto a
        // non-minimizing geodesic (turning back, or winding around); those
        // leave x away from the Riemannian guess in direction or speed
        let g1 = model.metric(tau1, &x.coords);
        let suspicious = converged.iter().all(|c| {
            let z = shooter.z_of(c);
            let (zz, ll, zl) = (z.dot(&(g1 * z)), log.dot(&(g1 * log)), z.dot(&(g1 * log)));
            let ratio = (zz / ll).sqrt();
            zl < 0.5 * (zz * ll).sqrt() || !(0.5..=2.0).contains(&ratio)
        });
        if suspicious && log.norm() > 0.0 {
            run(&[shooter.coeffs(&log)], &mut converged);
        }
    }
    if cfg.multi_start || converged.is_empty() {
        let l = shooter.coeffs(&log);
        let mut starts = vec![l * 0.5, l, l * 2.0, Vect::zeros()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let spread = 0.5 * (1.0 + l.norm());
        for _ in 0..cfg.random_starts {
            let mut xi = Vect::zeros();
            for i in 0..shooter.d {
                xi[i] = StandardNormal.sample(&mut rng);
            }
            starts.push(l + xi * spread);
        }
        starts.retain(|s| !primary.contains(s));
        starts.dedup();
        run(&starts, &mut converged);
    }

    let mut used_fallback = false;
    if converged.is_empty() && cfg.fallback {
        // the direct optimizer finds the basin; shooting then polishes it
        let dp = direct::direct_path(model, &x.coords, shooter.s1, &y.coords, shooter.s2, cfg.direct_nodes, None)?;
        let (c, res) = shooter.solve(shooter.coeffs(&dp.initial_z()), tol, cfg.fd_step, cfg.max_iter);
        best_residual = best_residual.min(res);
        if res <= tol {
            converged.push(c);
            used_fallback = true;
        }
    }
    if converged.is_empty() {
        return Err(LabError::ShootingFailed { best_residual });
    }

    let mut cands: Vec<Candidate> = Vec::new();
    for c in &converged {
        let z = shooter.z_of(c);
        let geo = build_geodesic(model, &x.coords, shooter.s1, &z, shooter.s2, steps, false)?;
        cands.push(Candidate { z, length: geo.length });
    }
    cands.sort_by(|a, b| a.length.total_cmp(&b.length));
    let g1 = model.metric(tau1, &x.coords);
    let znorm = |v: &Vect| v.dot(&(g1 * v)).max(0.0).sqrt();
    let mut distinct: Vec<Candidate> = Vec::new();
    for c in cands {
        if distinct.iter().all(|k| znorm(&(k.z - c.z)) >= cfg.z_sep_tol) {
            distinct.push(c);
        }
    }
    let best = distinct[0];
    let tie = cfg.q_tie_tol * (1.0 + best.length.abs());
    let multiplicity_flag = distinct.iter().skip(1).any(|c| c.length - best.length <= tie);
    let geodesic = build_geodesic(model, &x.coords, shooter.s1, &best.z, shooter.s2, steps, cfg.residual)?;
    let value = geodesic.length;
    audit::record(model, tau1, &x.coords, &y.coords, tau2, value);
    Ok(QResult { value, geodesic, candidates: distinct, multiplicity_flag, used_fallback })
}

//! Explicit gradient flow with step halving and epsilon continuation.

use std::io::Write;
use std::sync::Arc;

use crate::error::SolveError;
use crate::field::{
    initial_field, DomainMask, EnergyFunctional, EnergyParts, InitMode, TensorField,
};
use crate::tensor::{project_sigma, Potential, SymTensor3};

/// Smallest step before the flow is declared stalled.
pub const MIN_DT: f64 = 1e-12;

pub const DEFAULT_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub eps: f64,
    /// Initial step; `None` uses [`default_dt`].
    pub dt: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub sigma_projection: bool,
    /// Strictly decreasing epsilon list for [`continuation_sweep`].
    pub continuation: Vec<f64>,
    pub potential: Potential,
    /// Number of accepted steps in the convergence window.
    pub window: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            eps: 0.25,
            dt: None,
            max_iters: 500_000,
            rel_tol: 1e-4,
            sigma_projection: false,
            continuation: Vec::new(),
            potential: Potential::Standard,
            window: DEFAULT_WINDOW,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return bad(format!(
                "rel_tol must lie in (0, 1e-2], got {}",
                self.rel_tol
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self
            .continuation
            .iter()
            .any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return bad("continuation values must be positive".into());
        }
        if self.continuation.windows(2).any(|w| w[1] >= w[0]) {
            return bad("continuation list must be strictly decreasing".into());
        }
        if let Potential::Beta(b) = self.potential {
            if !b.is_finite() {
                return bad(format!("beta must be finite, got {b}"));
            }
        }
        Ok(())
    }

    fn functional(&self, eps: f64) -> EnergyFunctional {
        EnergyFunctional::with_potential(eps, self.potential)
    }
}

/// `0.2 h^2 eps^2 / (eps^2 + h^2)`.
pub fn default_dt(h: f64, eps: f64) -> f64 {
    0.2 * h * h * eps * eps / (eps * eps + h * h)
}

/// One accepted step of the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub eps: f64,
    pub dt: f64,
    pub energy: f64,
    pub potential_mass: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub field: TensorField,
    pub energy_trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub final_eps: f64,
    pub energy: EnergyParts,
    /// Max-norm of the energy gradient at the returned field.
    pub gradient_max: f64,
}

/// Outcome of a single explicit step attempt.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub field: TensorField,
    pub accepted: bool,
    pub energy: EnergyParts,
    pub gradient: Vec<SymTensor3>,
    /// Step to use next: unchanged if accepted, halved otherwise.
    pub dt: f64,
}

fn max_norm(g: &[SymTensor3]) -> f64 {
    g.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
}

fn attempt(
    field: &TensorField,
    gradient: &[SymTensor3],
    current: f64,
    func: &EnergyFunctional,
    dt: f64,
    sigma_projection: bool,
) -> Result<StepOutcome, SolveError> {
    let mut trial = field.descend(gradient, dt);
    if sigma_projection {
        trial = trial.map_interior(|u| project_sigma(&u));
    }
    let (energy, grad) = func.evaluate(&trial);
    let e = energy.total();
    if e.is_finite() && e <= current {
        return Ok(StepOutcome {
            field: trial,
            accepted: true,
            energy,
            gradient: grad,
            dt,
        });
    }
    let half = 0.5 * dt;
    if half < MIN_DT {
        return Err(SolveError::StalledStep(half));
    }
    Ok(StepOutcome {
        field: field.clone(),
        accepted: false,
        energy: func.parts(field),
        gradient: gradient.to_vec(),
        dt: half,
    })
}

/// Single step `u <- u - dt G` on interior cells. Rejected (and `dt`
/// halved) if the energy would increase.
pub fn step(
    field: &TensorField,
    func: &EnergyFunctional,
    dt: f64,
) -> Result<StepOutcome, SolveError> {
    let (energy, grad) = func.evaluate(field);
    if !energy.total().is_finite() {
        return Err(SolveError::NonFinite(0));
    }
    attempt(field, &grad, energy.total(), func, dt, false)
}

/// Solves from the chosen initial field.
pub fn solve(
    mask: &Arc<DomainMask>,
    config: &SolveConfig,
    init: &InitMode,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    let field = initial_field(mask, init)?;
    solve_from(field, config)
}

/// Runs the flow at `config.eps` starting from `field`.
pub fn solve_from(field: TensorField, config: &SolveConfig) -> Result<SolveResult, SolveError> {
    config.validate()?;
    let eps = config.eps;
    let func = config.functional(eps);
    let dt0 = config.dt.unwrap_or_else(|| default_dt(field.grid().h, eps));
    let mut field = if config.sigma_projection {
        field.map_interior(|u| project_sigma(&u))
    } else {
        field
    };
    let (mut energy, mut grad) = func.evaluate(&field);
    if !energy.total().is_finite() {
        return Err(SolveError::NonFinite(0));
    }
    let mut dt = dt0;
    let mut time = 0.0;
    let mut history: Vec<(f64, f64)> = vec![(0.0, energy.total())];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        if max_norm(&grad) == 0.0 {
            converged = true;
            break;
        }
        let out = loop {
            match attempt(
                &field,
                &grad,
                energy.total(),
                &func,
                dt,
                config.sigma_projection,
            ) {
                Ok(out) if out.accepted => break out,
                Ok(out) => dt = out.dt,
                Err(SolveError::StalledStep(d)) => {
                    let probe = field.descend(&grad, dt);
                    if !func.value(&probe).is_finite() {
                        return Err(SolveError::NonFinite(iterations + 1));
                    }
                    return Err(SolveError::StalledStep(d));
                }
                Err(e) => return Err(e),
            }
        };
        iterations += 1;
        time += dt;
        field = out.field;
        energy = out.energy;
        grad = out.gradient;
        trace.push(TraceRow {
            iter: iterations,
            eps,
            dt,
            energy: energy.total(),
            potential_mass: energy.potential_mass,
        });
        history.push((time, energy.total()));
        let k = history.len() - 1;
        if k >= config.window {
            let (t_old, e_old) = history[k - config.window];
            let e_now = energy.total();
            let rate = (e_old - e_now) / ((time - t_old) * e_now.max(1.0));
            if rate < config.rel_tol {
                converged = true;
                break;
            }
        }
        // Recover from earlier halvings.
        dt = (2.0 * dt).min(dt0);
    }
    let gradient_max = max_norm(&grad);
    Ok(SolveResult {
        field,
        energy_trace: trace,
        iterations,
        converged,
        final_eps: eps,
        energy,
        gradient_max,
    })
}

/// Solves along `config.continuation`, warm-starting each epsilon from the
/// previous result. An empty list solves at `config.eps` alone.
pub fn continuation_sweep(
    mask: &Arc<DomainMask>,
    config: &SolveConfig,
    init: &InitMode,
) -> Result<Vec<SolveResult>, SolveError> {
    config.validate()?;
    let eps_list = if config.continuation.is_empty() {
        vec![config.eps]
    } else {
        config.continuation.clone()
    };
    let mut field = initial_field(mask, init)?;
    let mut results: Vec<SolveResult> = Vec::with_capacity(eps_list.len());
    for eps in eps_list {
        let cfg = SolveConfig {
            eps,
            ..config.clone()
        };
        let res = solve_from(field, &cfg)?;
        field = res.field.clone();
        results.push(res);
    }
    Ok(results)
}

pub const TRACE_HEADER: &str = "iter,eps,dt,energy,potential_mass";

pub fn write_trace(rows: &[TraceRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iter, r.eps, r.dt, r.energy, r.potential_mass
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{apply_boundary, make_disk_domain, BoundaryData};
    use crate::tensor::{eigen_sym3, geodesic_gamma0};

    fn k1_mask(n: usize) -> Arc<DomainMask> {
        let mask = make_disk_domain(n, 1.0).unwrap();
        Arc::new(apply_boundary(&mask, &BoundaryData::default()).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::default().validate().is_ok());
        for cfg in [
            SolveConfig {
                eps: 0.0,
                ..Default::default()
            },
            SolveConfig {
                dt: Some(-1.0),
                ..Default::default()
            },
            SolveConfig {
                rel_tol: 0.1,
                ..Default::default()
            },
            SolveConfig {
                continuation: vec![0.1, 0.2],
                ..Default::default()
            },
            SolveConfig {
                max_iters: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(SolveError::InvalidConfig(_))));
        }
    }

    #[test]
    fn step_at_minimum_and_from_melt() {
        let p = geodesic_gamma0(1.0);
        let mask = Arc::new(make_disk_domain(24, 1.0).unwrap().with_boundary_fn(|_| p));
        let f = TensorField::from_fn(mask, |_| p).unwrap();
        let func = EnergyFunctional::new(0.2);
        let out = step(&f, &func, 1e-4).unwrap();
        assert!(out.accepted);
        assert_eq!(out.field, f);

        let mask = k1_mask(32);
        let f = initial_field(&mask, &InitMode::RadialMelt).unwrap();
        let e0 = func.value(&f);
        let dt = default_dt(mask.grid().h, 0.2);
        let out = step(&f, &func, dt).unwrap();
        assert!(out.accepted);
        assert!(out.energy.total() < e0);
        let r = out.field.get(mask.grid().index(20, 13));
        assert!((r.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mask = k1_mask(32);
        let f = initial_field(
            &mask,
            &InitMode::Random {
                seed: 2,
                amplitude: 0.3,
            },
        )
        .unwrap();
        let func = EnergyFunctional::new(0.2);
        let out = step(&f, &func, 10.0).unwrap();
        assert!(!out.accepted);
        assert_eq!(out.dt, 5.0);
        assert_eq!(out.field, f);
    }

    #[test]
    fn constant_boundary_relaxes_to_constant() {
        let p = geodesic_gamma0(0.7);
        let mask = Arc::new(make_disk_domain(24, 1.0).unwrap().with_boundary_fn(|_| p));
        let cfg = SolveConfig {
            eps: 0.3,
            rel_tol: 1e-6,
            ..Default::default()
        };
        let res = solve(&mask, &cfg, &InitMode::RadialMelt).unwrap();
        assert!(res.converged);
        assert!(res.energy.total() < 1e-4, "{}", res.energy.total());
    }

    #[test]
    fn k1_disk_converges_inside_sigma() {
        let mask = k1_mask(96);
        let cfg = SolveConfig {
            eps: 0.25,
            ..Default::default()
        };
        let res = solve(&mask, &cfg, &InitMode::RadialMelt).unwrap();
        assert!(res.converged);
        assert!(res
            .energy_trace
            .windows(2)
            .all(|w| w[1].energy <= w[0].energy));
        let (min_eig, max_eig, max_norm) = res.field.spectral_extremes();
        assert!(min_eig >= -1e-6, "{min_eig}");
        assert!(max_eig <= 1.0 + 1e-6);
        assert!(max_norm <= 1.0 + 1e-6);
        let again = solve(&mask, &cfg, &InitMode::RadialMelt).unwrap();
        assert_eq!(again.field, res.field);
        assert_eq!(again.energy_trace, res.energy_trace);
    }

    #[test]
    fn sweep_warm_start_and_growth() {
        let mask = k1_mask(48);
        let cfg = SolveConfig {
            continuation: vec![0.25, 0.125],
            ..Default::default()
        };
        let sweep = continuation_sweep(&mask, &cfg, &InitMode::RadialMelt).unwrap();
        assert_eq!(sweep.len(), 2);
        assert!(sweep[1].energy.total() > sweep[0].energy.total());
        let cold = solve(
            &mask,
            &SolveConfig {
                eps: 0.125,
                ..cfg.clone()
            },
            &InitMode::RadialMelt,
        )
        .unwrap();
        assert!(
            sweep[1].iterations < cold.iterations,
            "{} vs {}",
            sweep[1].iterations,
            cold.iterations
        );

        let single = continuation_sweep(
            &mask,
            &SolveConfig {
                continuation: vec![0.25],
                ..Default::default()
            },
            &InitMode::RadialMelt,
        )
        .unwrap();
        let direct = solve(&mask, &SolveConfig::default(), &InitMode::RadialMelt).unwrap();
        assert_eq!(single[0].field, direct.field);
    }

    #[test]
    fn beta_potentials_stay_in_sigma() {
        let mask = k1_mask(48);
        for beta in [3.0, 6.0] {
            let cfg = SolveConfig {
                eps: 0.2,
                potential: Potential::Beta(beta),
                ..Default::default()
            };
            let res = solve(
                &mask,
                &cfg,
                &InitMode::Random {
                    seed: 4,
                    amplitude: 0.05,
                },
            )
            .unwrap();
            for (idx, u) in res.field.values().iter().enumerate() {
                if mask.is_active(idx) {
                    let v = eigen_sym3(u).values;
                    assert!(v[2] >= -1e-6 && v[0] <= 1.0 + 1e-6, "beta {beta}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn max_iters_one_gives_one_row() {
        let mask = k1_mask(24);
        let cfg = SolveConfig {
            max_iters: 1,
            ..Default::default()
        };
        let res = solve(&mask, &cfg, &InitMode::RadialMelt).unwrap();
        assert!(!res.converged);
        assert_eq!(res.energy_trace.len(), 1);
        let mut buf = Vec::new();
        write_trace(&res.energy_trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(TRACE_HEADER));
    }
}

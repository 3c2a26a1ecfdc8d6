//! The subcommands. Each one validates every section it reads before it
//! computes anything, then writes its artifacts and returns a short report.

use affine_hjm::acceptance::{self, AcceptanceConfig, CriterionResult};
use affine_hjm::longterm::extrapolate;
use affine_hjm::pathsim::grid_index;
use affine_hjm::{
    evolve_forward, laplace_transform, long_term_profile, solve_riccati, uniform_grid, validate, yield_direct,
    AdmissibleParams, Classification, CurveDriver, EnsembleEstimate, MeasureChange, PsdMatrix, Scheme,
    Simulator, SymMatrix, ValidationCheck,
};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::output::{upper_triangle_names, OutputDir};

/// Lines for the terminal.
pub type Report = Vec<String>;

fn admissible(cfg: &LoadedConfig) -> CliResult<AdmissibleParams> {
    let params = cfg.params()?;
    validate(&params).into_result()?;
    cfg.config.measure_change.validate(params.dim())?;
    Ok(params)
}

#[derive(Serialize)]
struct SectionStatus {
    section: &'static str,
    ok: bool,
    detail: String,
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    passed: bool,
    checks: &'a [ValidationCheck],
    sections: Vec<SectionStatus>,
}

fn section<T>(section: &'static str, result: CliResult<T>) -> SectionStatus {
    match result {
        Ok(_) => SectionStatus {
            section,
            ok: true,
            detail: "ok".into(),
        },
        Err(e) => SectionStatus {
            section,
            ok: false,
            detail: e.to_string(),
        },
    }
}

/// Checks the parameter set and every optional section present in the
/// configuration. Writes `validation.json` even when something fails.
pub fn run_validate(cfg: &LoadedConfig, out: &OutputDir) -> CliResult<Report> {
    let params = cfg.params()?;
    let d = params.dim();
    let report = validate(&params);
    let mut sections = vec![
        section("mc_settings.x0", cfg.x0(d)),
        section("measure_change", cfg.config.measure_change.validate(d).map_err(CliError::from)),
    ];
    if cfg.config.vol.is_some() {
        sections.push(section("vol", cfg.vol(d)));
    }
    if cfg.config.initial_curve.is_some() {
        sections.push(section("initial_curve", cfg.initial_curve()));
    }
    let passed = report.passed() && sections.iter().all(|s| s.ok);
    out.write_json(
        "validation.json",
        &ValidationOutput {
            passed,
            checks: &report.checks,
            sections,
        },
    )?;
    let mut lines: Report = report
        .checks
        .iter()
        .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    if !passed {
        let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
        let mut msg = failed.join(", ");
        if msg.is_empty() {
            msg = "a configuration section is invalid, see validation.json".into();
        }
        for l in &lines {
            eprintln!("{l}");
        }
        return Err(CliError::Validation(msg));
    }
    lines.push("all checks passed".into());
    Ok(lines)
}

#[derive(Serialize)]
struct SimulateSummary {
    scheme: Scheme,
    n_paths: usize,
    t_end: f64,
    dt: f64,
    n_steps: usize,
    x0: SymMatrix,
    /// Entrywise mean of `X_T`, upper triangle row-major.
    mean_terminal: Vec<EnsembleEstimate>,
    trace_terminal: EnsembleEstimate,
    min_eigenvalue_terminal: f64,
    jumps_per_path: EnsembleEstimate,
    jumps_per_ray: Vec<usize>,
}

struct PathDigest {
    terminal: SymMatrix,
    jumps: usize,
    per_ray: Vec<usize>,
    states: Option<Vec<SymMatrix>>,
}

pub fn run_simulate(cfg: &LoadedConfig, out: &OutputDir) -> CliResult<Report> {
    let params = admissible(cfg)?;
    let d = params.dim();
    let mcs = &cfg.config.mc_settings;
    let x0 = cfg.x0(d)?;
    let grid = uniform_grid(mcs.t_end, mcs.dt)?;
    let sim = Simulator::new(&params, &x0, &grid, mcs.seed, mcs.scheme)?;
    let n_rays = params.jumps.len();
    let dump = cfg.config.simulate.dump_paths.min(mcs.n_paths);
    let digests = sim.map(mcs.n_paths, |p| {
        let mut per_ray = vec![0; n_rays];
        for j in &p.jumps {
            per_ray[j.ray] += 1;
        }
        PathDigest {
            terminal: p.states[p.states.len() - 1].clone(),
            jumps: p.jumps.len(),
            per_ray,
            states: ((p.seed.path_index as usize) < dump).then(|| p.states.clone()),
        }
    })?;

    let n_entries = d * (d + 1) / 2;
    let mut columns = vec![Vec::with_capacity(digests.len()); n_entries];
    for dg in &digests {
        for (c, v) in columns.iter_mut().zip(dg.terminal.upper_triangle()) {
            c.push(v);
        }
    }
    let mean_terminal = columns
        .iter()
        .map(|c| EnsembleEstimate::from_samples(c))
        .collect::<affine_hjm::Result<Vec<_>>>()?;
    let traces: Vec<f64> = digests.iter().map(|dg| dg.terminal.trace()).collect();
    let min_eig = digests
        .iter()
        .map(|dg| dg.terminal.min_eigenvalue())
        .collect::<affine_hjm::Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let counts: Vec<f64> = digests.iter().map(|dg| dg.jumps as f64).collect();
    let mut per_ray = vec![0; n_rays];
    for dg in &digests {
        for (acc, c) in per_ray.iter_mut().zip(&dg.per_ray) {
            *acc += c;
        }
    }
    let summary = SimulateSummary {
        scheme: mcs.scheme,
        n_paths: mcs.n_paths,
        t_end: grid[grid.len() - 1],
        dt: mcs.dt,
        n_steps: grid.len() - 1,
        x0: x0.as_sym().clone(),
        mean_terminal,
        trace_terminal: EnsembleEstimate::from_samples(&traces)?,
        min_eigenvalue_terminal: min_eig,
        jumps_per_path: EnsembleEstimate::from_samples(&counts)?,
        jumps_per_ray: per_ray,
    };
    out.write_json("simulate_summary.json", &summary)?;

    let mut lines = vec![
        format!(
            "simulated {} paths, {} steps, scheme {:?}",
            summary.n_paths, summary.n_steps, summary.scheme
        ),
        format!(
            "E[Tr X_T] = {:.6} +/- {:.6}; smallest terminal eigenvalue {:.3e}",
            summary.trace_terminal.value, summary.trace_terminal.std_error, summary.min_eigenvalue_terminal
        ),
    ];
    if dump > 0 {
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend(upper_triangle_names("x", d));
        let mut sink = out.csv("simulate_paths.csv", &header)?;
        let mut row = Vec::with_capacity(1 + n_entries);
        for (i, dg) in digests.iter().enumerate().take(dump) {
            for (t, x) in grid.iter().zip(dg.states.iter().flatten()) {
                row.clear();
                row.push(*t);
                row.extend(x.upper_triangle());
                sink.write_keyed_row(i, &row)?;
            }
        }
        sink.finish()?;
        lines.push(format!("wrote {dump} paths to simulate_paths.csv"));
    }
    Ok(lines)
}

#[derive(Serialize)]
struct RiccatiSummary {
    u: SymMatrix,
    t_end: f64,
    dt: f64,
    n_steps: usize,
    phi_end: f64,
    psi_end: SymMatrix,
    x0: SymMatrix,
    /// `E[exp(-Tr[u X_T])]` from `x0`.
    laplace_transform: f64,
}

pub fn run_riccati(cfg: &LoadedConfig, out: &OutputDir) -> CliResult<Report> {
    let params = admissible(cfg)?;
    let d = params.dim();
    let rs = &cfg.config.riccati;
    let u = match &rs.u {
        Some(u) => {
            u.check_dim(d)?;
            PsdMatrix::new(u.clone())?
        }
        None => PsdMatrix::identity(d),
    };
    let x0 = cfg.x0(d)?;
    let sol = solve_riccati(&params, &u, rs.t_end, rs.dt)?;

    let mut header = vec!["t".to_string(), "phi".to_string()];
    header.extend(upper_triangle_names("psi", d));
    let mut sink = out.csv("riccati.csv", &header)?;
    let mut row = Vec::with_capacity(header.len());
    for ((t, phi), psi) in sol.t_grid.iter().zip(&sol.phi).zip(&sol.psi) {
        row.clear();
        row.push(*t);
        row.push(*phi);
        row.extend(psi.upper_triangle());
        sink.write_row(&row)?;
    }
    sink.finish()?;

    let t_end = sol.t_end();
    let summary = RiccatiSummary {
        u: u.as_sym().clone(),
        t_end,
        dt: rs.dt,
        n_steps: sol.len() - 1,
        phi_end: sol.phi[sol.len() - 1],
        psi_end: sol.psi[sol.len() - 1].clone(),
        x0: x0.as_sym().clone(),
        laplace_transform: laplace_transform(&sol, &x0, t_end)?,
    };
    out.write_json("riccati_summary.json", &summary)?;
    Ok(vec![
        format!("solved on {} steps up to t = {t_end}", summary.n_steps),
        format!(
            "phi(t_end) = {:.10}; E[exp(-Tr[u X_t])] from x0 = {:.10}",
            summary.phi_end, summary.laplace_transform
        ),
    ])
}

#[derive(Serialize)]
struct BondCheck {
    maturity: f64,
    p0: f64,
    discounted_bond: EnsembleEstimate,
    z: f64,
}

#[derive(Serialize)]
struct CurveSlice {
    t: f64,
    short_rate: EnsembleEstimate,
    bond_checks: Vec<BondCheck>,
}

#[derive(Serialize)]
struct CurveSummary {
    n_paths: usize,
    dt: f64,
    maturities: Vec<f64>,
    slices: Vec<CurveSlice>,
    /// Largest `|z|` of the discounted-bond martingale checks.
    max_abs_z: f64,
}

/// One path: `(t, T, f, P, Y)` rows, short rates per observation time and
/// discounted bonds per (observation, maturity).
struct CurveRows {
    rows: Vec<[f64; 5]>,
    short_rates: Vec<f64>,
    discounted: Vec<Vec<f64>>,
}

fn maturity_grid(cfg: &LoadedConfig) -> CliResult<Vec<f64>> {
    let cs = &cfg.config.curve;
    match &cs.maturities {
        Some(m) => Ok(m.clone()),
        None => Ok(uniform_grid(cs.max_maturity, cs.maturity_step)?),
    }
}

pub fn run_curve(cfg: &LoadedConfig, out: &OutputDir) -> CliResult<Report> {
    let params = admissible(cfg)?;
    let d = params.dim();
    let vol = cfg.vol(d)?;
    let curve = cfg.initial_curve()?;
    let mc = &cfg.config.measure_change;
    let mcs = &cfg.config.mc_settings;
    let cs = &cfg.config.curve;
    let x0 = cfg.x0(d)?;
    let maturities = maturity_grid(cfg)?;
    let grid = uniform_grid(mcs.t_end, mcs.dt)?;
    let t_obs: Vec<f64> = cs
        .t_obs
        .iter()
        .map(|t| grid_index(&grid, *t).map(|k| grid[k]))
        .collect::<affine_hjm::Result<_>>()?;
    let sim = Simulator::new(&params, &x0, &grid, mcs.seed, mcs.scheme)?;

    let per_path = sim.map(cs.n_paths, |p| -> CliResult<CurveRows> {
        let surface = evolve_forward(&params, vol, mc, &curve, p, &t_obs, &maturities)?;
        let driver = surface.driver();
        let mut rows = Vec::new();
        let mut short_rates = Vec::with_capacity(t_obs.len());
        let mut discounted = Vec::with_capacity(t_obs.len());
        for &t in &t_obs {
            let k = driver.index_of(t)?;
            short_rates.push(driver.forward(k, t));
            let mut disc = Vec::new();
            for &m in maturities.iter().filter(|m| **m >= t) {
                let f = surface.forward(t, m)?;
                let (p_tm, y) = if m > t {
                    (affine_hjm::bond_price(&surface, t, m)?, yield_direct(&surface, t, m)?)
                } else {
                    (1.0, f)
                };
                rows.push([t, m, f, p_tm, y]);
                disc.push(driver.discounted_bond(k, m)?);
            }
            discounted.push(disc);
        }
        Ok(CurveRows {
            rows,
            short_rates,
            discounted,
        })
    })?;
    let per_path = per_path.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut sink = out.csv(
        "curve.csv",
        &["path", "t", "T", "f", "P", "Y"].map(String::from),
    )?;
    for (i, pr) in per_path.iter().enumerate() {
        for row in &pr.rows {
            sink.write_keyed_row(i, row)?;
        }
    }
    sink.finish()?;

    let mut slices = Vec::with_capacity(t_obs.len());
    let mut max_abs_z: f64 = 0.0;
    for (j, &t) in t_obs.iter().enumerate() {
        let rates: Vec<f64> = per_path.iter().map(|pr| pr.short_rates[j]).collect();
        let mut bond_checks = Vec::new();
        for (col, &m) in maturities.iter().filter(|m| **m >= t).enumerate() {
            let samples: Vec<f64> = per_path.iter().map(|pr| pr.discounted[j][col]).collect();
            let est = EnsembleEstimate::from_samples(&samples)?;
            let p0 = (-curve.integral(0.0, m)).exp();
            let z = est.z_against(p0);
            max_abs_z = max_abs_z.max(z.abs());
            bond_checks.push(BondCheck {
                maturity: m,
                p0,
                discounted_bond: est,
                z,
            });
        }
        slices.push(CurveSlice {
            t,
            short_rate: EnsembleEstimate::from_samples(&rates)?,
            bond_checks,
        });
    }
    let summary = CurveSummary {
        n_paths: cs.n_paths,
        dt: mcs.dt,
        maturities,
        slices,
        max_abs_z,
    };
    out.write_json("curve_summary.json", &summary)?;
    let mut lines = vec![format!(
        "forward curves of {} paths at t in {:?} on {} maturities",
        cs.n_paths,
        t_obs,
        summary.maturities.len()
    )];
    for s in &summary.slices {
        lines.push(format!(
            "t = {}: mean short rate {:.6} +/- {:.6}",
            s.t, s.short_rate.value, s.short_rate.std_error
        ));
    }
    lines.push(format!("largest |z| of E[P(t,T)/beta_t] against P(0,T): {max_abs_z:.2}"));
    Ok(lines)
}

#[derive(Serialize)]
struct LadderFit {
    path: usize,
    t: f64,
    ell_t: f64,
    extrapolated: f64,
    residual: f64,
    abs_gap: f64,
}

#[derive(Serialize)]
struct LongtermPath {
    path: usize,
    ell: Vec<f64>,
    mu_inf: Vec<SymMatrix>,
    sigma_inf: Vec<SymMatrix>,
}

#[derive(Serialize)]
struct Diagnostics {
    monotonicity_violations: usize,
    ladder: Vec<f64>,
    ladder_fits: Vec<LadderFit>,
    max_ladder_gap: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct LongtermOutput {
    classification: Classification,
    ell0: f64,
    t_grid: Vec<f64>,
    paths: Vec<LongtermPath>,
    diagnostics: Diagnostics,
}

struct LongtermRows {
    path: LongtermPath,
    ladder_rows: Vec<[f64; 3]>,
    fits: Vec<LadderFit>,
    violations: usize,
}

pub fn run_longterm(cfg: &LoadedConfig, out: &OutputDir) -> CliResult<Report> {
    let params = admissible(cfg)?;
    let d = params.dim();
    let vol = cfg.vol(d)?;
    let mc: &MeasureChange = &cfg.config.measure_change;
    let mcs = &cfg.config.mc_settings;
    let ls = &cfg.config.longterm;
    let x0 = cfg.x0(d)?;
    let mut warnings = Vec::new();
    let curve = cfg.initial_curve()?;
    let ell0 = match ls.ell0 {
        Some(v) => v,
        None => {
            let (v, warning) = curve.long_term_level();
            warnings.extend(warning);
            v
        }
    };
    if ls.ladder.is_empty() || ls.ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Config("longterm.ladder must be non-empty and strictly increasing".into()));
    }
    let grid = uniform_grid(mcs.t_end, mcs.dt)?;
    let t_idx: Vec<usize> = ls
        .t_obs
        .iter()
        .map(|t| grid_index(&grid, *t))
        .collect::<affine_hjm::Result<_>>()?;
    if let Some(&t) = ls.t_obs.iter().find(|t| **t >= ls.ladder[0]) {
        return Err(CliError::Config(format!(
            "longterm.t_obs = {t} is not below the first ladder maturity {}",
            ls.ladder[0]
        )));
    }
    let with_ladder = mcs.scheme == Scheme::EulerProject;
    if !with_ladder {
        warnings.push("yield ladders need Brownian increments and are skipped for the exact scheme".into());
    }
    let sim = Simulator::new(&params, &x0, &grid, mcs.seed, mcs.scheme)?;

    let per_path = sim.map(ls.n_paths, |p| -> CliResult<(Classification, LongtermRows)> {
        let profile = long_term_profile(&params, vol, mc, &p.t_grid, &p.states, ell0)?;
        let violations = profile.ell.windows(2).filter(|w| w[1] < w[0]).count();
        let path = p.seed.path_index as usize;
        let mut ladder_rows = Vec::new();
        let mut fits = Vec::new();
        if with_ladder {
            let driver = CurveDriver::new(&params, vol, mc, &curve, p)?;
            for &k in &t_idx {
                let t = grid[k];
                let ys = ls
                    .ladder
                    .iter()
                    .map(|&m| Ok(driver.yield_terms(k, m)?.total))
                    .collect::<affine_hjm::Result<Vec<_>>>()?;
                for (&m, &y) in ls.ladder.iter().zip(&ys) {
                    ladder_rows.push([t, m, y]);
                }
                let tau: Vec<f64> = ls.ladder.iter().map(|m| m - t).collect();
                let fit = extrapolate(&tau, &ys)?;
                let ell_t = profile.ell[k];
                fits.push(LadderFit {
                    path,
                    t,
                    ell_t,
                    extrapolated: fit.value,
                    residual: fit.residual,
                    abs_gap: (fit.value - ell_t).abs(),
                });
            }
        }
        Ok((
            profile.classification,
            LongtermRows {
                path: LongtermPath {
                    path,
                    ell: profile.ell,
                    mu_inf: profile.mu_inf,
                    sigma_inf: profile.sigma_inf,
                },
                ladder_rows,
                fits,
                violations,
            },
        ))
    })?;
    let per_path = per_path.into_iter().collect::<CliResult<Vec<_>>>()?;
    let classification = match per_path.first() {
        Some((c, _)) => c.clone(),
        None => affine_hjm::classify_decay(vol, 0.0, &affine_hjm::longterm::CLASSIFY_LADDER)?,
    };
    warnings.extend(classification.warning.clone());

    let mut sink = out.csv("longterm_ladder.csv", &["path", "t", "T", "Y"].map(String::from))?;
    for (_, rows) in &per_path {
        for r in &rows.ladder_rows {
            sink.write_keyed_row(rows.path.path, r)?;
        }
    }
    sink.finish()?;

    let violations = per_path.iter().map(|(_, r)| r.violations).sum();
    let mut paths = Vec::with_capacity(per_path.len());
    let mut fits = Vec::new();
    for (_, rows) in per_path {
        paths.push(rows.path);
        fits.extend(rows.fits);
    }
    let max_gap = fits.iter().map(|f| f.abs_gap).fold(0.0, f64::max);
    let output = LongtermOutput {
        classification,
        ell0,
        t_grid: grid,
        paths,
        diagnostics: Diagnostics {
            monotonicity_violations: violations,
            ladder: ls.ladder.clone(),
            ladder_fits: fits,
            max_ladder_gap: max_gap,
            warnings,
        },
    };
    out.write_json("longterm.json", &output)?;
    let mut lines = vec![
        format!("volatility class: {:?}", output.classification.class),
        format!(
            "ell_0 = {ell0}; {} paths; {violations} monotonicity violations",
            output.paths.len()
        ),
    ];
    if with_ladder {
        lines.push(format!("largest |extrapolated Y - ell_t| over the ladders: {max_gap:.3e}"));
    }
    for w in &output.diagnostics.warnings {
        lines.push(format!("warning: {w}"));
    }
    Ok(lines)
}

#[derive(Serialize)]
struct AcceptanceOutput<'a> {
    config: AcceptanceConfig,
    passed: bool,
    results: &'a [CriterionResult],
}

/// Runs the acceptance suite, or the criteria listed in `only`, printing a
/// line per criterion as it finishes.
pub fn run_accept(cfg: &LoadedConfig, out: &OutputDir, only: &[u8]) -> CliResult<Report> {
    let acfg = cfg.config.accept;
    let report = |r: &CriterionResult| println!("{r}");
    let results = if only.is_empty() {
        acceptance::run_all_with(&acfg, report)
    } else {
        let mut ids = only.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&id| {
                let r = acceptance::run(id, &acfg)?;
                report(&r);
                Ok(r)
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    out.write_json(
        "acceptance.json",
        &AcceptanceOutput {
            config: acfg,
            passed: failed.is_empty(),
            results: &results,
        },
    )?;
    if !failed.is_empty() {
        return Err(CliError::AcceptanceFailed(failed));
    }
    Ok(vec![format!("{} of {} criteria passed", results.len(), results.len())])
}

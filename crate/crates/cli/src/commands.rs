use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rfsurf::disorder::{resample_at, Distribution, Purpose, SeedSpec};
use rfsurf::elliptic::{green_column, height_variance_exact, membrane_height_variance, MembraneStencil};
use rfsurf::experiments::{
    efron_stein_linear, efron_stein_mc, fit_exponent, gaussian_gradient_average, scaling_row, DisorderLaw,
    FitModel, Observable, ScalingTable, SweepConfig,
};
use rfsurf::groundstate::{default_band, integer_energy, solve_integer_ground_state_chain, solve_real_ground_state};
use rfsurf::io::{write_field_binary, write_field_csv, FieldHeader};
use rfsurf::ivgff::{
    enumerate_connected_sets, exact_enumerate, metropolis_sample, IvSpec, MetropolisConfig, PeierlsReport,
};
use rfsurf::langevin::{default_burn_in, default_dt, sample_observables, simulate_coupled};
use rfsurf::parabolic::{
    check_nash_aronson, evolve_heat_kernel, max_stable_dt, ConstantEnvironment, Environment, RandomEnvironment,
};
use rfsurf::potentials::Potential;
use rfsurf::selftest::run_selftest;
use rfsurf::{Error, Field, Lattice};
use serde_json::json;

use crate::output::{to_json, write_file, Sink};
use crate::{
    BoxArgs, Cli, CliError, Command, DisorderArgs, EfronSteinArgs, Estimator, FieldFormat, FitArg, GreenArgs,
    GroundStateArgs, HeatKernelArgs, IvArgs, IvMode, LangevinArgs, MembraneArgs, ScalingArgs, SetsArgs, Stencil,
};

type Res = Result<(), CliError>;

pub fn run(cli: &Cli) -> Res {
    let sink = Sink::new(cli.out.clone());
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Green(a) => green(a, &sink),
        Command::GroundState(a) => ground_state(a, seed, &sink),
        Command::Langevin(a) => langevin(a, seed, &sink),
        Command::HeatKernel(a) => heat_kernel(a, seed, &sink),
        Command::Ivgff(c) => match &c.mode {
            None => ivgff(&c.args, seed, false, &sink),
            Some(IvMode::Peierls(a)) => ivgff(a, seed, true, &sink),
            Some(IvMode::Sets(a)) => sets(a, seed, &sink),
        },
        Command::Membrane(a) => membrane(a, &sink),
        Command::Scaling(a) => scaling(a, seed, &sink),
        Command::EfronStein(a) => efron_stein(a, seed, &sink),
        Command::Selftest => selftest(&sink),
    };
    sink.finish(if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn lattice(b: &BoxArgs) -> Result<Lattice, CliError> {
    Ok(Lattice::build_box(b.d, b.l)?)
}

/// A site given on the command line, or the origin.
fn site(field: &str, given: &Option<Vec<i32>>, d: usize) -> Result<Vec<i32>, CliError> {
    match given {
        None => Ok(vec![0; d]),
        Some(s) if s.len() == d => Ok(s.clone()),
        Some(s) => Err(CliError::config(field, format!("expected {d} coordinates, got {}", s.len()))),
    }
}

fn disorder_law(a: &DisorderArgs) -> Result<DisorderLaw, CliError> {
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(CliError::config("lambda", "must be finite and nonnegative"));
    }
    Ok(a.distribution.parse()?)
}

fn potential(s: &str) -> Result<Potential, CliError> {
    Ok(s.parse()?)
}

fn stencil(s: Stencil) -> MembraneStencil {
    match s {
        Stencil::Variational => MembraneStencil::Variational,
        Stencil::Clamped => MembraneStencil::Clamped,
    }
}

fn green(a: &GreenArgs, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let x = site("x", &a.x, lat.dim())?;
    let y = site("y", &a.y, lat.dim())?;
    let col = green_column(&lat, &y, 1e-12)?;
    let xi = lat.interior_index(&x).ok_or_else(|| Error::NotInterior(x.clone()))?;
    sink.json(&json!({
        "d": lat.dim(),
        "L": lat.side(),
        "x": x,
        "y": y,
        "green": col.get(xi),
        "height_variance": height_variance_exact(&lat, &x, 1e-12)?,
        "gradient_average": gaussian_gradient_average(&lat, DisorderLaw::Iid(Distribution::StandardGaussian)),
    }))
}

fn store_field(path: &Path, format: FieldFormat, header: &FieldHeader, field: &Field) -> Res {
    let file = BufWriter::new(File::create(path)?);
    match format {
        FieldFormat::Bin => write_field_binary(file, header, field)?,
        FieldFormat::Csv => write_field_csv(file, header, field)?,
    }
    Ok(())
}

fn ground_state(a: &GroundStateArgs, seed: u64, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let law = disorder_law(&a.disorder)?;
    let pot = potential(&a.potential)?;
    let lambda = a.disorder.lambda;
    let eta = law.sample(&lat, SeedSpec::new(seed));
    let o = lat.origin();
    let (surface, breakdown, extra) = if a.integer {
        let band = match a.band {
            Some(k) => k,
            None => default_band(&lat, &eta, lambda)?,
        };
        let gs = solve_integer_ground_state_chain(&lat, &eta, lambda, band)?;
        let e = integer_energy(&lat, &eta, lambda, &gs.field);
        (gs.field.to_real(), e, json!({"band": gs.band, "touches_band": gs.touches_band}))
    } else {
        if a.band.is_some() {
            return Err(CliError::config("band", "only used with --integer"));
        }
        let (v, e) = solve_real_ground_state(&lat, &pot, &eta, lambda, 1e-10)?;
        (v, e, json!({}))
    };
    let header = FieldHeader::new(&lat, law.to_string(), seed);
    if let Some(p) = &a.field_out {
        store_field(p, a.field_format, &header, &surface)?;
    }
    if let Some(p) = &a.disorder_out {
        store_field(p, a.field_format, &header, &eta)?;
    }
    sink.json(&json!({
        "d": lat.dim(),
        "L": lat.side(),
        "lambda": lambda,
        "potential": if a.integer { "integer".to_string() } else { pot.to_string() },
        "disorder": law.to_string(),
        "seed": seed,
        "energy": breakdown,
        "height_at_origin": surface.get(o),
        "max_abs_height": surface.max_abs(),
        "grad_sq_avg": surface.gradient_sq_sum(&lat) / lat.n_sites() as f64,
        "integer": extra,
    }))
}

fn langevin(a: &LangevinArgs, seed: u64, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let law = disorder_law(&a.disorder)?;
    let pot = potential(&a.potential)?;
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(CliError::config("beta", "must be positive and finite"));
    }
    if a.t_max.is_nan() || a.t_max <= 0.0 {
        return Err(CliError::config("t_max", "must be positive"));
    }
    let dt = a.dt.unwrap_or_else(|| default_dt(&lat, &pot, a.beta));
    let lambda = a.disorder.lambda;
    let spec = SeedSpec::new(seed);
    let eta = law.sample(&lat, spec);
    if a.coupled {
        if a.beta != 1.0 {
            return Err(CliError::config("beta", "coupled chains run at β = 1"));
        }
        let x = site("resample_site", &a.resample_site, lat.dim())?;
        let dist = match law {
            DisorderLaw::Iid(d) => d,
            DisorderLaw::OneDependent => {
                return Err(CliError::config("distribution", "single-site resampling needs i.i.d. disorder"))
            }
        };
        let eta_bar = resample_at(&lat, &eta, &x, dist, spec.with_purpose(Purpose::Resample))?;
        let run = simulate_coupled(&lat, &pot, &eta, &eta_bar, lambda, dt, a.t_max, a.every, spec)?;
        let o = lat.origin();
        let xi = lat.interior_index(&x).ok_or_else(|| Error::NotInterior(x.clone()))?;
        return sink.json(&json!({
            "dt": dt,
            "resample_site": x,
            "eta": eta.get(xi),
            "eta_bar": eta_bar.get(xi),
            "times": run.difference.times,
            "w_origin": run.difference.states.iter().map(|w| w.get(o)).collect::<Vec<_>>(),
            "w_resampled_site": run.difference.states.iter().map(|w| w.get(xi)).collect::<Vec<_>>(),
            "max_update_defect": run.max_update_defect,
            "environment_elliptic": run.environment.is_elliptic(),
        }));
    }
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(&lat));
    let o = lat.origin();
    let volume = lat.n_sites() as f64;
    let edges = lat.edges();
    let estimates = sample_observables(
        &lat,
        &pot,
        &eta,
        lambda,
        a.beta,
        dt,
        burn_in,
        a.t_max,
        a.every,
        spec,
        &["phi0", "phi0_sq", "grad_sq_avg"],
        |phi, out| {
            out[0] = phi[o];
            out[1] = phi[o] * phi[o];
            out[2] = edges.iter().map(|e| (phi[e.head] - phi[e.tail]).powi(2)).sum::<f64>() / volume;
        },
    )?;
    sink.json(&json!({
        "dt": dt,
        "burn_in": burn_in,
        "duration": a.t_max,
        "estimates": estimates,
    }))
}

fn heat_kernel(a: &HeatKernelArgs, seed: u64, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    if !(a.c_minus > 0.0 && a.c_plus >= a.c_minus && a.c_plus.is_finite()) {
        return Err(CliError::config("c_plus", "need 0 < c_minus ≤ c_plus < ∞"));
    }
    if a.period.is_nan() || a.period <= 0.0 {
        return Err(CliError::config("period", "must be positive"));
    }
    let y = site("source", &a.source, lat.dim())?;
    let dt = a.dt.unwrap_or_else(|| max_stable_dt(&lat, a.c_plus));
    let random = RandomEnvironment {
        c_minus: a.c_minus,
        c_plus: a.c_plus,
        period: a.period,
        seed: SeedSpec::new(seed),
    };
    let constant = ConstantEnvironment(a.c_minus);
    let env: &dyn Environment = if a.c_plus > a.c_minus { &random } else { &constant };
    let frames = evolve_heat_kernel(&lat, env, 0.0, &y, a.t_max, dt, a.every)?;
    let yi = lat.interior_index(&y).ok_or_else(|| Error::NotInterior(y.clone()))?;
    let bounds = check_nash_aronson(&lat, &frames, a.c_minus)?;
    sink.json(&json!({
        "dt": dt,
        "source": y,
        "frames": frames.iter().map(|f| json!({"t": f.t, "mass": f.mass(), "at_source": f.values.get(yi)})).collect::<Vec<_>>(),
        "nash_aronson": bounds,
    }))
}

fn iv_spec<'a>(a: &IvArgs, lat: &'a Lattice, eta: &'a Field) -> Result<IvSpec<'a>, CliError> {
    Ok(match a.band {
        Some(k) => IvSpec::new(lat, eta, a.beta, a.disorder.lambda, k)?,
        None => IvSpec::with_default_band(lat, eta, a.beta, a.disorder.lambda)?,
    })
}

fn ivgff(a: &IvArgs, seed: u64, peierls: bool, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let law = disorder_law(&a.disorder)?;
    let v = site("site", &a.site, lat.dim())?;
    let vi = lat.interior_index(&v).ok_or_else(|| Error::NotInterior(v.clone()))?;
    let eta = law.sample(&lat, SeedSpec::new(seed));
    let spec = iv_spec(a, &lat, &eta)?;
    if a.exact {
        let ex = exact_enumerate(&spec)?;
        let mut out = json!({
            "band": spec.band,
            "n_states": ex.n_states,
            "log_z": ex.log_z,
            "phi": ex.mean.get(vi),
            "phi_sq": ex.second_moment.get(vi),
            "zero": ex.zero_prob.get(vi),
            "grad_sq_avg": ex.grad_sq_avg,
            "log_exp_moment": ex.log_exp_moment,
            "moment_constant": ex.moment_constant,
            "band_mass": ex.band_mass,
        });
        if peierls {
            out["peierls"] = serde_json::to_value(PeierlsReport::from_exact(&ex, vi)).expect("plain data");
        }
        return sink.json(&out);
    }
    let mut cfg = MetropolisConfig::new(&lat, a.sweeps);
    if let Some(b) = a.burn_in {
        cfg.burn_in = b;
    }
    cfg.site = vi;
    let run = metropolis_sample(&spec, &cfg, SeedSpec::new(seed))?;
    let mut out = json!({
        "band": spec.band,
        "sweeps": a.sweeps,
        "burn_in": cfg.burn_in,
        "acceptance": run.acceptance,
        "band_fraction": run.band_fraction,
        "estimates": run.estimates,
    });
    if peierls {
        out["peierls"] = serde_json::to_value(PeierlsReport::from_run(&run)).expect("plain data");
    }
    sink.json(&out)?;
    run.check_band()?;
    Ok(())
}

fn sets(a: &SetsArgs, seed: u64, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let law = disorder_law(&a.disorder)?;
    let v = site("site", &a.site, lat.dim())?;
    let eta = law.sample(&lat, SeedSpec::new(seed));
    let found = enumerate_connected_sets(&lat, &v, a.max_sites, a.nmax, &eta, a.disorder.lambda)?;
    let mut buf = Vec::new();
    found.write_csv(&mut buf)?;
    sink.text(&String::from_utf8(buf).expect("csv is UTF-8"))?;
    eprintln!(
        "{} sets kept, {} violate λ|Ση| ≤ |∂Λ|",
        found.records.len(),
        found.event_violations
    );
    Ok(())
}

fn membrane(a: &MembraneArgs, sink: &Sink) -> Res {
    let mut rows = Vec::new();
    for &l in &a.l {
        let lat = Lattice::build_box(a.d, l)?;
        let var = membrane_height_variance(&lat, &vec![0; a.d], 1e-12, stencil(a.stencil))?;
        rows.push(json!({"d": a.d, "L": l, "variance": a.lambda * a.lambda * var}));
    }
    sink.json(&rows)
}

fn parse_beta(s: &str) -> Result<Option<f64>, CliError> {
    if s == "inf" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(Some(b)),
        _ => Err(CliError::config("beta", format!("expected a positive number or `inf`, got `{s}`"))),
    }
}

fn sweep_config(a: &ScalingArgs, seed: u64) -> Result<SweepConfig, CliError> {
    let observable: Observable = a.observable.parse()?;
    let mut c = SweepConfig::new(observable, a.d);
    c.lambda = a.disorder.lambda;
    c.disorder = disorder_law(&a.disorder)?;
    c.beta = parse_beta(&a.beta)?;
    c.potential = potential(&a.potential)?;
    c.exact = a.exact;
    c.n_realizations = a.n;
    c.seed = seed;
    c.stencil = stencil(a.stencil);
    c.sweeps = a.sweeps;
    Ok(c)
}

/// Rows already in `table` must come from the same configuration.
fn check_resumable(table: &ScalingTable, c: &SweepConfig) -> Res {
    for r in &table.rows {
        let same = r.d == c.dim
            && r.observable == c.observable.tag()
            && r.lambda == c.lambda
            && r.beta == c.beta
            && r.seed == c.seed
            && r.n == if c.exact { 0 } else { c.n_realizations };
        if !same {
            return Err(CliError::config(
                "checkpoint",
                format!("row for L={} was written by a different configuration", r.l),
            ));
        }
    }
    Ok(())
}

fn scaling(a: &ScalingArgs, seed: u64, sink: &Sink) -> Res {
    let c = sweep_config(a, seed)?;
    if a.l.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config("L", "side lengths must be strictly increasing"));
    }
    let mut table = match &a.checkpoint {
        Some(p) if p.exists() => {
            let t = ScalingTable::read_csv(File::open(p)?)?;
            check_resumable(&t, &c)?;
            t
        }
        _ => ScalingTable::default(),
    };
    let todo: Vec<usize> = a.l.iter().copied().filter(|l| !table.rows.iter().any(|r| r.l == *l)).collect();
    let mut failures = Vec::new();
    if let Some(p) = &a.checkpoint {
        // one side at a time so that every finished side is saved
        for l in todo {
            match scaling_row(&c, l) {
                Ok(row) => {
                    table.push(row);
                    write_file(p, table.to_csv_string()?.as_bytes())?;
                }
                Err(e @ Error::InvalidConfig { .. }) => return Err(e.into()),
                Err(e) => failures.push((l, e)),
            }
        }
    } else {
        let out = rfsurf::experiments::scaling_sweep(&c, &todo)?;
        failures = out.failures;
        for row in out.table.rows {
            table.push(row);
        }
    }
    table.rows.retain(|r| a.l.contains(&r.l));
    sink.text(&table.to_csv_string()?)?;

    let model = match a.fit {
        FitArg::Power => FitModel::Power,
        FitArg::LogLinear => FitModel::LogLinear,
        FitArg::Constant => FitModel::Constant,
    };
    if table.rows.len() >= 4 {
        let fit = to_json(&fit_exponent(&table, model)?)?;
        match (&a.fit_out, sink.is_file()) {
            (Some(p), _) => write_file(p, fit.as_bytes())?,
            (None, true) => print!("{fit}"),
            (None, false) => eprint!("{fit}"),
        }
    } else {
        eprintln!("fit skipped: {} rows, need at least 4", table.rows.len());
    }
    if !failures.is_empty() {
        let msg: Vec<String> = failures.iter().map(|(l, e)| format!("L={l}: {e}")).collect();
        return Err(CliError::Failed(format!("rows failed: {}", msg.join("; "))));
    }
    Ok(())
}

fn efron_stein(a: &EfronSteinArgs, seed: u64, sink: &Sink) -> Res {
    let lat = lattice(&a.lattice)?;
    let x = site("site", &a.site, lat.dim())?;
    let report = match a.estimator {
        Estimator::Linear => efron_stein_linear(&lat, &x)?,
        Estimator::GroundState => {
            let dist = match disorder_law(&a.disorder)? {
                DisorderLaw::Iid(d) => d,
                DisorderLaw::OneDependent => {
                    return Err(CliError::config("distribution", "Efron–Stein needs independent coordinates"))
                }
            };
            let pot = potential(&a.potential)?;
            let xi = lat.interior_index(&x).ok_or_else(|| Error::NotInterior(x.clone()))?;
            let lambda = a.disorder.lambda;
            efron_stein_mc(&lat, dist, a.n_outer, a.n_sites, SeedSpec::new(seed), |eta| {
                let (v, _) = solve_real_ground_state(&lat, &pot, eta, lambda, 1e-10)?;
                Ok(v.get(xi))
            })?
        }
    };
    sink.json(&json!({
        "site": x,
        "bound": report.bound,
        "variance": report.variance,
        "holds_3sigma": report.holds(3.0),
    }))
}

fn selftest(sink: &Sink) -> Res {
    let cases = run_selftest();
    let mut text = String::new();
    for c in &cases {
        text.push_str(&format!("{} {}: {}\n", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail));
    }
    sink.text(&text)?;
    let failed = cases.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} selftest checks failed")));
    }
    Ok(())
}

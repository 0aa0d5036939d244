use std::path::Path;

use envlang::envelope::{admissibility_constants, fb_gamma_max, EnvelopeKind};
use envlang::exec::Execution;
use envlang::experiments::truncgauss;
use envlang::experiments::{
    fig1_curves, tomography_experiment, truncated_gaussian_experiment, TomographyConfig, TruncGaussConfig,
};
use envlang::model::ProxSettings;
use envlang::sampler::{step_rule, ChainOutput};
use envlang::theory::{eula_contraction, fb_wasserstein_bound, IntegralMethod, DEFAULT_BOUND_NODES, DEFAULT_BOUND_SAMPLES};

use crate::config::{BoundMethod, Config, Experiment};
use crate::output::{float, opt_float, pgm16, prepare_dir, write_atomic, Table};
use crate::CliError;

fn core(e: envlang::Error) -> CliError {
    match e {
        envlang::Error::Configuration(_) => CliError::InvalidParameter(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn file_stem(method: &str) -> String {
    method.to_ascii_lowercase()
}

fn prox_settings(cfg: &Config, dim: usize) -> Option<ProxSettings> {
    match (cfg.tolerances.prox_tol, cfg.tolerances.prox_max_iter) {
        (None, None) => None,
        (tol, max_iter) => {
            let d = ProxSettings::for_dim(dim);
            Some(ProxSettings {
                tol: tol.unwrap_or(d.tol),
                max_iter: max_iter.unwrap_or(d.max_iter),
            })
        }
    }
}

pub fn run(cfg: &Config, execution: Execution) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    prepare_dir(&cfg.out)?;
    match exp {
        Experiment::TruncGauss => run_truncgauss(cfg, execution),
        Experiment::Tomography => run_tomography(cfg, execution),
    }
}

fn write_chains(dir: &Path, method: &str, chains: &[ChainOutput], samples: bool) -> Result<(), CliError> {
    let stem = file_stem(method);
    if samples {
        let recorded = &chains[0].recorded;
        let mut header = vec!["chain".to_string(), "sample".to_string()];
        header.extend(recorded.iter().map(|c| format!("x{}", c + 1)));
        let mut t = Table::new(&header);
        for (ci, out) in chains.iter().enumerate() {
            for i in 0..out.sample_count {
                let mut row = vec![ci.to_string(), i.to_string()];
                row.extend(out.sample(i).iter().map(|&v| float(v)));
                t.push(row);
            }
        }
        t.write(dir, &format!("samples_{stem}.csv"))?;
    }
    if chains.iter().any(|c| !c.diagnostics.is_empty()) {
        let mut t = Table::new(&["chain", "iteration", "gamma", "step", "envelope_value", "step_norm", "inexactness"]);
        for (ci, out) in chains.iter().enumerate() {
            for d in &out.diagnostics {
                t.push(vec![
                    ci.to_string(),
                    d.iteration.to_string(),
                    float(d.gamma),
                    float(d.step),
                    float(d.envelope_value),
                    float(d.step_norm),
                    float(d.inexactness),
                ]);
            }
        }
        t.write(dir, &format!("diagnostics_{stem}.csv"))?;
    }
    Ok(())
}

fn run_truncgauss(cfg: &Config, execution: Execution) -> Result<(), CliError> {
    let s = cfg.truncgauss.as_ref().expect("validated");
    let mut tc = TruncGaussConfig::new(s.dim, s.n_iter, cfg.seed);
    tc.gamma = s.gamma;
    tc.h = s.h;
    tc.burn_in_frac = s.burn_in;
    tc.n_chains = s.chains;
    tc.gibbs_sweeps = s.gibbs_sweeps;
    tc.safe_steps = cfg.safe_steps;
    tc.keep_chains = s.write_samples || s.diagnostics_stride > 0;
    tc.diagnostics_stride = s.diagnostics_stride;
    tc.execution = execution;
    log::info!("truncated Gaussian, d = {}, {} iterations x {} chains", s.dim, s.n_iter, s.chains);
    let report = truncated_gaussian_experiment(&tc).map_err(core)?;

    let k = s.dim.min(3);
    let mut header = vec!["method".to_string(), "chain".to_string()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    let mut boxplot = Table::new(&header);
    let mut summary = Table::new(&["method", "coordinate", "mean", "standard_error", "samples_per_chain"]);
    for m in &report.methods {
        for (c, means) in m.chain_means.iter().enumerate() {
            let mut row = vec![m.method.clone(), c.to_string()];
            row.extend(means.iter().map(|&v| float(v)));
            boxplot.push(row);
        }
        for j in 0..k {
            summary.push(vec![
                m.method.clone(),
                format!("x{}", j + 1),
                float(m.mean[j]),
                float(m.standard_error[j]),
                m.samples_per_chain.to_string(),
            ]);
        }
    }
    if let Some(q) = &report.quadrature {
        for (name, mom) in [("quadrature", &q.truth), ("quadrature-MY", &q.my), ("quadrature-FB", &q.fb)] {
            for j in 0..k {
                summary.push(vec![name.to_string(), format!("x{}", j + 1), float(mom.mean[j]), String::new(), String::new()]);
            }
        }
    }
    boxplot.write(&cfg.out, &format!("boxplot_d{}.csv", s.dim))?;
    summary.write(&cfg.out, &format!("summary_d{}.csv", s.dim))?;
    for (method, chains) in &report.chains {
        write_chains(&cfg.out, method, chains, s.write_samples)?;
    }

    println!("truncated Gaussian d = {}  gamma = {}  h = {}  seed = {}", s.dim, s.gamma, s.h, cfg.seed);
    println!("{:<14} {:>5} {:>12} {:>12}", "method", "coord", "mean", "std.err");
    for m in &report.methods {
        for j in 0..k {
            println!("{:<14} {:>5} {:>12.6} {:>12.2e}", m.method, format!("x{}", j + 1), m.mean[j], m.standard_error[j]);
        }
    }
    if let Some(q) = &report.quadrature {
        for j in 0..k {
            println!("{:<14} {:>5} {:>12.6}", "quadrature", format!("x{}", j + 1), q.truth.mean[j]);
        }
    }

    if s.dim == 2 {
        let f = cfg.fig1.clone().unwrap_or_default();
        log::info!("mean/variance curves over {} values of gamma", f.gammas.len());
        let curves = fig1_curves(&f.gammas, f.nodes, execution).map_err(core)?;
        let mut mean = Table::new(&["gamma", "truth", "myula", "fbula", "refinement_change"]);
        let mut var = Table::new(&["gamma", "truth", "myula", "fbula", "refinement_change"]);
        for r in &curves.rows {
            mean.push(vec![
                float(r.gamma),
                float(curves.truth_mean),
                float(r.my_mean),
                opt_float(r.fb_mean),
                float(r.refinement_change),
            ]);
            var.push(vec![
                float(r.gamma),
                float(curves.truth_var),
                float(r.my_var),
                opt_float(r.fb_var),
                float(r.refinement_change),
            ]);
        }
        mean.write(&cfg.out, "fig1_mean.csv")?;
        var.write(&cfg.out, "fig1_var.csv")?;
        println!("x1 curves: truth mean {:.6}, variance {:.6}", curves.truth_mean, curves.truth_var);
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

fn run_tomography(cfg: &Config, execution: Execution) -> Result<(), CliError> {
    let s = cfg.tomography.as_ref().expect("validated");
    if cfg.safe_steps {
        log::warn!("safe steps do not apply to the tomography experiment; using h = 1/(L_f + 1/gamma)");
    }
    let mut tc = TomographyConfig::new(s.size, s.n_iter, cfg.seed);
    tc.sigma = s.sigma;
    tc.beta = s.beta;
    tc.mask_fraction = s.mask_fraction;
    tc.burn_in_frac = s.burn_in;
    tc.mse_stride = s.mse_stride;
    tc.trace_stride = s.trace_stride;
    tc.prox = prox_settings(cfg, s.size * s.size);
    tc.execution = execution;
    log::info!("tomography {}x{}, {} iterations", s.size, s.size, s.n_iter);
    let report = tomography_experiment(&tc).map_err(core)?;
    let my = report.arm(EnvelopeKind::MoreauYosida).expect("MY arm");
    let fb = report.arm(EnvelopeKind::ForwardBackward).expect("FB arm");

    let paired = |a: &[(usize, f64)], b: &[(usize, f64)]| -> Table {
        let mut t = Table::new(&["iteration", "myula", "fbula"]);
        for (p, q) in a.iter().zip(b) {
            debug_assert_eq!(p.0, q.0);
            t.push(vec![p.0.to_string(), float(p.1), float(q.1)]);
        }
        t
    };
    paired(&my.log_density, &fb.log_density).write(&cfg.out, "tomo_logpi.csv")?;
    paired(&my.mse, &fb.mse).write(&cfg.out, "tomo_mse.csv")?;
    let mut summary = Table::new(&["method", "final_mse", "inexact_steps", "max_inexactness", "gamma", "h", "kept_fraction"]);
    for arm in [my, fb] {
        summary.push(vec![
            arm.kind.sampler_name().to_string(),
            float(arm.final_mse),
            arm.inexact_steps.to_string(),
            float(arm.max_inexactness),
            float(report.gamma),
            float(report.h),
            float(report.setup.kept_fraction()),
        ]);
        if arm.inexact_steps > 0 {
            log::warn!(
                "{}: {} prox steps stopped above tolerance (worst certificate {:e})",
                arm.kind.sampler_name(),
                arm.inexact_steps,
                arm.max_inexactness
            );
        }
    }
    summary.write(&cfg.out, "tomo_summary.csv")?;
    let n = report.setup.size;
    write_atomic(&cfg.out, "tomo_truth.pgm", &pgm16(&report.setup.truth, n))?;
    write_atomic(&cfg.out, "tomo_posterior_mean_myula.pgm", &pgm16(&my.posterior_mean, n))?;
    write_atomic(&cfg.out, "tomo_posterior_mean_fbula.pgm", &pgm16(&fb.posterior_mean, n))?;

    println!(
        "tomography {n}x{n}  sigma = {}  beta = {}  gamma = {:e}  h = {:e}  seed = {}",
        s.sigma, s.beta, report.gamma, report.h, cfg.seed
    );
    println!("{:<8} {:>14} {:>14}", "method", "final MSE", "inexact steps");
    for arm in [my, fb] {
        println!("{:<8} {:>14.6e} {:>14}", arm.kind.sampler_name(), arm.final_mse, arm.inexact_steps);
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

pub fn theory(cfg: &Config) -> Result<(), CliError> {
    let s = cfg.theory_section()?;
    prepare_dir(&cfg.out)?;
    let target = truncgauss::target(s.dim).map_err(core)?;
    let gmax = fb_gamma_max(&target);
    let method = match s.method {
        BoundMethod::Auto => IntegralMethod::Auto,
        BoundMethod::Quadrature => IntegralMethod::Quadrature {
            nodes_per_axis: s.nodes.unwrap_or(DEFAULT_BOUND_NODES),
        },
        BoundMethod::MonteCarlo => IntegralMethod::MonteCarlo {
            samples: s.samples.unwrap_or(DEFAULT_BOUND_SAMPLES),
            seed: cfg.seed,
        },
    };
    let mut t = Table::new(&[
        "gamma", "valid", "c1", "c2", "c3", "c4", "i1", "i2_gamma", "i2_shifted", "bound", "standard_error", "method",
        "lambda", "mu", "rho", "h", "h_max", "c5", "c6", "ln_c7", "alpha",
    ]);
    println!("forward-backward bounds, truncated Gaussian d = {}  (gamma limit {gmax})", s.dim);
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "gamma", "W1 bound", "C1", "C3", "h_max", "ln C7", "alpha"
    );
    let mut invalid = 0;
    for &gamma in &s.gammas {
        if gamma >= gmax {
            invalid += 1;
            log::warn!("gamma = {gamma} is not below the forward-backward limit {gmax}; row marked invalid");
            println!("{gamma:>8} invalid (gamma >= {gmax})");
            let mut row = vec![float(gamma), "false".to_string()];
            row.resize(21, String::new());
            t.push(row);
            continue;
        }
        let r = fb_wasserstein_bound(&target, gamma, method).map_err(core)?;
        let constants = admissibility_constants(EnvelopeKind::ForwardBackward, gamma, &target).map_err(core)?;
        let h_max = step_rule(&constants, cfg.tolerances.c0);
        let h = if cfg.safe_steps { h_max } else { s.h };
        let contraction = eula_contraction(&constants, h, 2.0 * r.total, s.dim, cfg.tolerances.c0);
        let mut row = vec![
            float(gamma),
            "true".to_string(),
            float(r.c1),
            float(r.c2),
            float(r.c3),
            float(r.c4),
            float(r.i1),
            float(r.i2_gamma),
            float(r.i2_shifted),
            float(r.total),
            opt_float(r.standard_error),
            r.method.to_string(),
            float(constants.lambda),
            float(constants.mu),
            float(constants.rho),
            float(h),
            float(h_max),
        ];
        match &contraction {
            Ok(c) => {
                row.extend([float(c.c_radius), float(c.c_q), float(c.ln_c_contraction), float(c.alpha)]);
                println!(
                    "{gamma:>8} {:>12.5e} {:>12.5e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                    r.total, r.c1, r.c3, h_max, c.ln_c_contraction, c.alpha
                );
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 4));
                log::warn!("gamma = {gamma}: contraction constants unavailable at h = {h}: {e}");
                println!("{gamma:>8} {:>12.5e} {:>12.5e} {:>12.4e} {:>12.4e}  (h = {h} too large)", r.total, r.c1, r.c3, h_max);
            }
        }
        t.push(row);
    }
    t.write(&cfg.out, "theory_bounds.csv")?;
    if invalid > 0 {
        log::warn!("{invalid} gamma value(s) marked invalid");
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

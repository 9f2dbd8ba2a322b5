use crate::error::{CliError, Result};
use crate::{Command, InitKind, ModelArgs, OptimizeArgs, Scheme};
use qefsynth::cascade::{core_matrix_statespace, CascadeOptions};
use qefsynth::freq::{check_spectral_condition, mean_square_rate, qef_rate, FreqSample};
use qefsynth::linalg::{lambda_min_hermitian, ln_det_general, ln_det_hpd, max_abs, norm2, spectral_abscissa};
use qefsynth::model::{mat_json, params_json, Model, ModelConfig};
use qefsynth::quadrature::QuadOptions;
use qefsynth::synthesis::{
    admissibility_margin, cqlqg_init, descend, descend_continuation, weighted_cqlqg_iterate, DescentOptions,
    DescentState, InitOptions, Objective, StopReason, WeightedOptions,
};
use qefsynth::system::{is_hurwitz, pr_residual, ClosedLoop, ControllerParams};
use qefsynth::variational::{controller_gradients, core_matrix_freq, core_matrix_lqg, cost_and_core, stationarity_residual};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

struct Loaded {
    cfg: ModelConfig,
    model: Model<f64>,
    cl: ClosedLoop<f64>,
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let path = args.model.display().to_string();
    let text = fs::read_to_string(&args.model).map_err(|e| CliError::Read { path, message: e.to_string() })?;
    let cfg = ModelConfig::from_json(&text)?;
    let model = cfg.build::<f64>()?;
    let cl = model.closed_loop(&model.init)?;
    Ok(Loaded { cfg, model, cl })
}

fn theta_of(args: &ModelArgs, model: &Model<f64>) -> Result<Option<f64>> {
    match args.theta.or(model.theta) {
        Some(t) if !(t.is_finite() && t > 0.0) => Err(CliError::Usage(format!("theta must be positive, got {t}"))),
        t => Ok(t),
    }
}

fn require_theta(args: &ModelArgs, model: &Model<f64>) -> Result<f64> {
    theta_of(args, model)?
        .ok_or_else(|| CliError::Usage("theta is required: pass --theta or set \"theta\" in the model".into()))
}

fn quad(args: &ModelArgs) -> QuadOptions {
    QuadOptions::with_tol(args.quad_tol)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Write { path: path.display().to_string(), message: e.to_string() })
}

pub fn run(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Validate(args) => validate(args),
        Command::Analyze { model, mean_square, csv } => analyze(model, *mean_square, csv.as_deref()),
        Command::Grad { model, mean_square } => grad(model, *mean_square),
        Command::Crosscheck { model, order, series_order, tol } => crosscheck(model, *order, *series_order, *tol),
        Command::Optimize(args) => optimize(args),
    }
}

fn dims(cl: &ClosedLoop<f64>) -> Value {
    json!({ "n": cl.n(), "nu": cl.nu(), "m1": cl.m1(), "m2": cl.m2(), "p1": cl.p1(), "p2": cl.p2(), "r": cl.r() })
}

fn validate(args: &ModelArgs) -> Result<Value> {
    let Loaded { model, cl, .. } = load(args)?;
    let theta = theta_of(args, &model)?;
    let sys = &cl.sys;
    let pr = pr_residual(sys);
    let abscissa = spectral_abscissa(&sys.a)?;
    let mut report = json!({
        "status": "ok",
        "command": "validate",
        "dims": dims(&cl),
        "pr_residual": pr,
        "hurwitz": is_hurwitz(&sys.a),
        "spectral_abscissa": abscissa,
        "theta": theta,
    });
    if let Some(th) = theta {
        if is_hurwitz(&sys.a) {
            let sc = check_spectral_condition(sys, th)?;
            report["spectral_condition"] = json!({ "admissible": sc.admissible, "margin": sc.margin, "lambda": sc.lambda });
        }
    }
    admissibility_margin(&cl, theta)?;
    Ok(report)
}

fn analyze(args: &ModelArgs, mean_square: bool, csv: Option<&Path>) -> Result<Value> {
    let Loaded { model, cl, .. } = load(args)?;
    let sys = &cl.sys;
    if mean_square {
        admissibility_margin(&cl, None)?;
        return Ok(json!({ "status": "ok", "command": "analyze", "upsilon_star": mean_square_rate(sys)? }));
    }
    if args.theta == Some(0.0) {
        return Err(CliError::Usage("analyze requires theta > 0; use --mean-square for the mean-square rate".into()));
    }
    let theta = require_theta(args, &model)?;
    let margin = admissibility_margin(&cl, Some(theta))?;
    let rep = qef_rate(sys, theta, quad(args))?;
    if let Some(path) = csv {
        let mut rows: Vec<(f64, f64)> = rep.grid.nodes.iter().zip(&rep.grid.weights).flat_map(|(&l, &w)| [(-l, w), (l, w)]).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = String::from("lambda,ln_det_delta,re_ln_det_d,lambda_min_delta,trace_phi,norm_psi,weight\n");
        for (l, w) in rows {
            let s = FreqSample::new(sys, l)?;
            let delta = s.delta(theta);
            let ld = ln_det_hpd(&delta).unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{l:.17e},{ld:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{w:.17e}",
                ln_det_general(&s.d_theta(theta)).re,
                lambda_min_hermitian(&delta),
                s.phi.trace().re,
                norm2(&s.psi),
            );
        }
        write_file(path, &out)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "analyze",
        "theta": theta,
        "upsilon": rep.value,
        "upsilon_d": rep.value_d,
        "route_gap": (rep.value - rep.value_d).abs(),
        "quadrature_error": rep.error,
        "nodes": rep.nodes,
        "converged": rep.converged,
        "spectral_margin": margin,
        "upsilon_star": mean_square_rate(sys)?,
        "csv": csv.map(|p| p.display().to_string()),
    }))
}

fn grad(args: &ModelArgs, mean_square: bool) -> Result<Value> {
    let Loaded { model, cl, .. } = load(args)?;
    let (theta, cost, core, scale) = if mean_square {
        admissibility_margin(&cl, None)?;
        (None, mean_square_rate(&cl.sys)?, core_matrix_lqg(&cl.sys)?, 1.0)
    } else {
        let theta = require_theta(args, &model)?;
        admissibility_margin(&cl, Some(theta))?;
        let cc = cost_and_core(&cl.sys, theta, quad(args))?;
        (Some(theta), cc.cost, cc.core, theta)
    };
    let g = controller_gradients(&cl, &core, scale);
    Ok(json!({
        "status": "ok",
        "command": "grad",
        "theta": theta,
        "cost": cost,
        "chi": { "A": mat_json(&core.d_a()), "B": mat_json(&core.d_b()), "C": mat_json(&core.d_c()) },
        "dR2": mat_json(&g.d_r2),
        "dM2": mat_json(&g.d_m2),
        "dL2": mat_json(&g.d_l2),
        "residual": stationarity_residual(&g),
    }))
}

fn crosscheck(args: &ModelArgs, order: Option<usize>, series_order: Option<usize>, tol: f64) -> Result<Value> {
    let Loaded { model, cl, .. } = load(args)?;
    let theta = require_theta(args, &model)?;
    admissibility_margin(&cl, Some(theta))?;
    let fr = core_matrix_freq(&cl.sys, theta, quad(args))?;
    let opts = CascadeOptions { order, series_order, ..Default::default() };
    let ss = core_matrix_statespace(&cl.sys, theta, &opts)?;
    let scale = 1.0 + fr.chi.norm();
    let blocks = [
        ("A", fr.d_a(), ss.core.d_a()),
        ("B", fr.d_b(), ss.core.d_b()),
        ("C", fr.d_c(), ss.core.d_c()),
    ];
    let mut out = serde_json::Map::new();
    let mut pass = true;
    for (name, f, s) in blocks {
        let delta = &f - &s;
        let scaled = delta.norm() / scale;
        pass &= scaled <= tol;
        out.insert(
            name.into(),
            json!({
                "freq_norm": f.norm(),
                "statespace_norm": s.norm(),
                "max_abs_delta": max_abs(&delta),
                "scaled_delta": scaled,
            }),
        );
    }
    Ok(json!({
        "status": "ok",
        "command": "crosscheck",
        "theta": theta,
        "order": ss.order,
        "series_order": series_order.unwrap_or(ss.order),
        "are_residual": ss.are_residual,
        "tolerance": tol,
        "blocks": out,
        "pass": pass,
    }))
}

fn state_line(stage: &str, theta: Option<f64>, s: &DescentState<f64>) -> Value {
    json!({
        "stage": stage,
        "theta": theta,
        "iteration": s.iteration,
        "cost": s.cost,
        "residual": s.residual(),
        "step": s.step,
        "margin": s.margin,
        "params": params_json(&s.params),
    })
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Stationary => "stationary",
        StopReason::MaxIterations => "max_iterations",
    }
}

fn optimize(args: &OptimizeArgs) -> Result<Value> {
    let Loaded { cfg, model, cl } = load(&args.model)?;
    let theta = require_theta(&args.model, &model)?;
    let descent = DescentOptions {
        max_iters: args.max_iters,
        tol_stat: args.tol_stat,
        rel_tol: args.rel_tol,
        ..Default::default()
    };
    let mut lines: Vec<Value> = Vec::new();
    let mut summary = serde_json::Map::new();
    let start: ControllerParams<f64> = match args.init {
        InitKind::Model => model.init.clone(),
        InitKind::Cqlqg => {
            let init = cqlqg_init(&cl, Some(&model.init), &InitOptions { seed: args.seed, ..Default::default() }, &descent)?;
            lines.extend(init.trace.states.iter().map(|s| state_line("cqlqg", None, s)));
            summary.insert("cqlqg_iterations".into(), json!(init.trace.iterations()));
            summary.insert("seed_draws".into(), json!(init.draws));
            init.params().clone()
        }
    };
    let finish: ControllerParams<f64> = match args.scheme {
        Scheme::Descent if args.continuation => {
            let stages = descend_continuation(&cl, &start, theta, QuadOptions::with_tol(args.model.quad_tol), &descent)?;
            for st in &stages {
                lines.extend(st.trace.states.iter().map(|s| state_line("risk", Some(st.theta), s)));
            }
            let last = &stages.last().expect("four stages").trace;
            summary.insert("iterations".into(), json!(stages.iter().map(|s| s.trace.iterations()).sum::<usize>()));
            summary.insert("stop".into(), json!(stop_name(last.stop)));
            last.params().clone()
        }
        Scheme::Descent => {
            let objective = Objective::risk(&cl.with_params(start.clone())?, theta, quad(&args.model))?;
            let tr = descend(&cl, &start, &objective, &descent)?;
            lines.extend(tr.states.iter().map(|s| state_line("risk", Some(theta), s)));
            summary.insert("iterations".into(), json!(tr.iterations()));
            summary.insert("stop".into(), json!(stop_name(tr.stop)));
            summary.insert("initial_residual".into(), json!(tr.states[0].residual()));
            tr.params().clone()
        }
        Scheme::Weighted => {
            let opts = WeightedOptions { descent, quad: quad(&args.model), ..Default::default() };
            let run = weighted_cqlqg_iterate(&cl, &start, theta, args.outer, &opts)?;
            for (k, p) in run.params.iter().enumerate().skip(1) {
                lines.push(json!({
                    "stage": "weighted",
                    "theta": theta,
                    "outer": k,
                    "inner_iterations": run.inner_iterations[k - 1],
                    "step_norm": run.step_norms[k - 1],
                    "params": params_json(p),
                }));
            }
            summary.insert("outer_steps".into(), json!(run.params.len() - 1));
            summary.insert("converged".into(), json!(run.converged));
            summary.insert("risk_residual".into(), json!(run.risk_residual));
            run.last().clone()
        }
    };
    let end = cl.with_params(finish.clone())?;
    let margin = admissibility_margin(&end, Some(theta))?;
    let final_rate = qef_rate(&end.sys, theta, quad(&args.model))?.value;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Write { path: args.out.display().to_string(), message: e.to_string() })?;
    let trace_path = args.out.join("trace.jsonl");
    let model_path = args.out.join("model.json");
    let mut trace = String::new();
    for l in &lines {
        trace.push_str(&serde_json::to_string(l).expect("trace serialization"));
        trace.push('\n');
    }
    write_file(&trace_path, &trace)?;
    let mut out_cfg = cfg.with_controller(&finish);
    out_cfg.theta = Some(theta);
    write_file(&model_path, &(out_cfg.to_json() + "\n"))?;

    summary.insert("status".into(), json!("ok"));
    summary.insert("command".into(), json!("optimize"));
    summary.insert("theta".into(), json!(theta));
    summary.insert("upsilon".into(), json!(final_rate));
    summary.insert("spectral_margin".into(), json!(margin));
    summary.insert("params".into(), params_json(&finish));
    summary.insert("trace".into(), json!(trace_path.display().to_string()));
    summary.insert("model".into(), json!(model_path.display().to_string()));
    Ok(Value::Object(summary))
}

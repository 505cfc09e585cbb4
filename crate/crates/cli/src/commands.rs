use std::fmt::Write as _;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use valence_core::assessment::{build_report, AssessError, Episode, Trajectory, TrajectoryOutcome};
use valence_core::model::Scenario;
use valence_core::protocol::{
    compare_protocols, evaluate_protocol, parse_protocol, validate_protocol, Protocol, ProtocolError,
    ProtocolEvaluation,
};
use valence_core::scenario::{parse_scenario, shipped_scenarios};
use valence_core::solver::{pmovi, read_front, write_front, SolutionFront, SolveConfig, SolverError};

use crate::output::{named, num, vector, Failure, Output};
use crate::{AssessArgs, PlayArgs, ProtocolCommand, ServeArgs, SolveArgs, SolverFlags};

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::domain("io", format!("cannot write {}: {e}", path.display())))
}

/// A scenario file, or a shipped scenario when no such file exists.
fn load_scenario(out: &Output, arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        return shipped_scenarios().remove(arg).ok_or_else(|| {
            let names: Vec<&str> = shipped_scenarios().into_keys().collect();
            Failure::Usage(format!(
                "{arg}: no such file or shipped scenario ({})",
                names.join(", ")
            ))
        });
    }
    match parse_scenario(&read(path)?) {
        Ok(parsed) => {
            for w in &parsed.warnings {
                out.warn(arg, w);
            }
            Ok(parsed.value)
        }
        Err(diagnostics) => Err(Failure::Diagnostics {
            source: arg.to_string(),
            diagnostics,
        }),
    }
}

fn load_protocol(out: &Output, path: &Path, scenario: &Scenario) -> Result<Protocol, Failure> {
    let source = path.display().to_string();
    let parsed = parse_protocol(&read(path)?, scenario).map_err(|diagnostics| Failure::Diagnostics {
        source: source.clone(),
        diagnostics,
    })?;
    let (errors, warnings): (Vec<_>, Vec<_>) = validate_protocol(scenario, &parsed.value)
        .into_iter()
        .partition(|d| d.is_error());
    for w in parsed.warnings.iter().chain(&warnings) {
        out.warn(&source, w);
    }
    if errors.is_empty() {
        Ok(parsed.value)
    } else {
        Err(Failure::Diagnostics {
            source,
            diagnostics: errors,
        })
    }
}

fn solve_config(flags: &SolverFlags, scenario: &Scenario) -> Result<SolveConfig, Failure> {
    let mut config = SolveConfig::for_scenario(scenario);
    config.gamma = flags.gamma;
    config.horizon = if flags.converge { None } else { Some(flags.horizon) };
    if let Some(m) = flags.max_vectors {
        config.max_vectors = m;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn solver_failure(e: SolverError) -> Failure {
    Failure::domain("solver", e.to_string())
}

fn describe_config(config: &SolveConfig) -> String {
    let horizon = config
        .horizon
        .map_or("until converged".to_string(), |h| format!("horizon {h}"));
    let cap = match config.max_vectors {
        0 => String::new(),
        m => format!(", at most {m} vectors per state"),
    };
    format!("gamma {}, {horizon}{cap}", num(config.gamma))
}

pub fn validate(out: &Output, arg: &str) -> Outcome {
    let scenario = load_scenario(out, arg)?;
    out.emit(
        || {
            format!(
                "OK: {} variables, {} states, {} actions, {} values\n",
                scenario.variables().len(),
                scenario.state_count(),
                scenario.actions().len(),
                scenario.values().len()
            )
        },
        || {
            json!({
                "ok": true,
                "scenario": scenario.name(),
                "hash": scenario.content_hash(),
                "variables": scenario.variables().len(),
                "states": scenario.state_count(),
                "actions": scenario.actions().len(),
                "values": scenario.values().len(),
                "stochastic": scenario.is_stochastic(),
            })
        },
    );
    Ok(())
}

pub fn solve(out: &Output, args: &SolveArgs) -> Outcome {
    let scenario = load_scenario(out, &args.scenario)?;
    let config = solve_config(&args.solver, &scenario)?;
    let solution = pmovi(&scenario, &config).map_err(solver_failure)?;
    if let Some(path) = &args.output {
        write(path, &write_front(&solution, &scenario))?;
    }
    let front = solution.initial_front();
    let names = scenario.value_names();
    let maxima = front.maxima().map(|m| m.to_vec()).unwrap_or_default();
    if solution.approximate() {
        out.note(
            "approximate",
            "the vector cap was reached; the front is an approximation (raise --max-vectors, 0 for exact)",
        );
    }
    out.emit(
        || {
            let mut s = format!(
                "{}: {} states, {}, {} sweeps\n",
                scenario.name(),
                scenario.state_count(),
                describe_config(&config),
                solution.sweeps()
            );
            let _ = writeln!(
                s,
                "front at the initial state ({} vectors, {}):",
                front.len(),
                names.join(" / ")
            );
            for v in front.iter() {
                let _ = writeln!(s, "  {}", vector(v));
            }
            let _ = writeln!(s, "maxima: {}", named(&names, &maxima));
            if let Some(path) = &args.output {
                let _ = writeln!(s, "wrote {}", path.display());
            }
            s
        },
        || {
            json!({
                "scenario": scenario.name(),
                "scenario_hash": scenario.content_hash(),
                "values": names,
                "config": config,
                "sweeps": solution.sweeps(),
                "converged": solution.converged(),
                "approximate": solution.approximate(),
                "residual": solution.residual(),
                "front": front.vectors(),
                "value_maxima": maxima,
                "output": args.output,
            })
        },
    );
    if config.horizon.is_none() && !solution.converged() {
        return Err(Failure::domain(
            "not-converged",
            format!(
                "no convergence within {} sweeps (residual {})",
                config.max_sweeps,
                solution.residual()
            ),
        ));
    }
    Ok(())
}

fn script_actions(args: &PlayArgs) -> Result<Option<Vec<String>>, Failure> {
    if let Some(actions) = &args.actions {
        return Ok(Some(actions.iter().map(|a| a.trim().to_string()).collect()));
    }
    let Some(path) = &args.script else {
        return Ok(None);
    };
    let lines = read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    Ok(Some(lines))
}

pub fn play(out: &Output, args: &PlayArgs) -> Outcome {
    let scenario = Arc::new(load_scenario(out, &args.scenario)?);
    if !(args.gamma > 0.0 && args.gamma <= 1.0) {
        return Err(Failure::Usage("gamma must lie in (0, 1]".into()));
    }
    let mut episode = Episode::new(scenario.clone(), args.seed, args.gamma, Some(args.horizon));
    match script_actions(args)? {
        Some(actions) => {
            for (i, action) in actions.iter().enumerate() {
                if episode.is_finished() {
                    return Err(Failure::domain(
                        "episode-finished",
                        format!(
                            "step {i}: `{action}` comes after the episode ended ({})",
                            outcome(&episode)
                        ),
                    ));
                }
                episode
                    .apply(action)
                    .map_err(|e| Failure::domain("illegal-action", format!("step {i}: {e}")))?;
            }
            episode.abandon();
        }
        None => interactive(&mut episode, args.reveal, out.json())?,
    }

    let trajectory = episode.trajectory();
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-seed{}.traj.jsonl", scenario.name(), args.seed)));
    write(&path, &trajectory.to_jsonl(&scenario))?;
    let cumulative = valence_core::assessment::score_trajectory(&scenario, &trajectory, args.gamma)
        .map_err(|e| Failure::domain("integrity", e.to_string()))?
        .cumulative;
    let names = scenario.value_names();
    out.emit(
        || {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "outcome {} after {} steps",
                trajectory.outcome,
                trajectory.steps.len()
            );
            let _ = writeln!(
                s,
                "cumulative {}  ({})",
                vector(&cumulative),
                named(&names, &cumulative)
            );
            let _ = writeln!(s, "wrote {}", path.display());
            s
        },
        || {
            json!({
                "scenario": scenario.name(),
                "seed": args.seed,
                "outcome": trajectory.outcome,
                "steps": trajectory.steps.len(),
                "actions": trajectory.actions(),
                "values": names,
                "cumulative": cumulative,
                "output": path,
            })
        },
    );
    Ok(())
}

fn outcome(episode: &Episode) -> TrajectoryOutcome {
    episode.outcome().unwrap_or(TrajectoryOutcome::Truncated)
}

/// Prompts go to stderr in JSON mode so stdout stays one document.
fn interactive(episode: &mut Episode, reveal: bool, json: bool) -> Outcome {
    let scenario = episode.scenario().clone();
    let names = scenario.value_names();
    let mut prompt: Box<dyn std::io::Write> = if json {
        Box::new(std::io::stderr())
    } else {
        Box::new(std::io::stdout())
    };
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    while !episode.is_finished() {
        let available: Vec<String> = episode.available_actions().iter().map(|a| a.to_string()).collect();
        let _ = writeln!(
            prompt,
            "\nstep {}: {}",
            episode.steps().len(),
            scenario.format_state(episode.state())
        );
        for (i, a) in available.iter().enumerate() {
            let _ = writeln!(prompt, "  {}) {a}", i + 1);
        }
        let _ = write!(prompt, "action (number or name, q to stop)> ");
        let _ = prompt.flush();
        let Some(line) = lines.next() else {
            episode.abandon();
            break;
        };
        let line = line.map_err(|e| Failure::Usage(format!("cannot read stdin: {e}")))?;
        let choice = line.trim();
        if choice.is_empty() {
            continue;
        }
        if choice.eq_ignore_ascii_case("q") {
            episode.abandon();
            break;
        }
        let action = match choice.parse::<usize>() {
            Ok(n) if (1..=available.len()).contains(&n) => available[n - 1].clone(),
            Ok(_) => {
                let _ = writeln!(prompt, "no action numbered {choice}");
                continue;
            }
            Err(_) => choice.to_string(),
        };
        match episode.apply(&action) {
            Ok(step) => {
                if reveal {
                    let _ = writeln!(prompt, "  alignment {}", named(&names, &step.alignment));
                }
            }
            Err(e) => {
                let _ = writeln!(prompt, "  {e}");
            }
        }
    }
    let _ = writeln!(prompt, "\nepisode over: {}", outcome(episode));
    Ok(())
}

fn default_report_path(trajectory: &Path) -> PathBuf {
    let name = trajectory
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".traj.jsonl")
        .or_else(|| name.strip_suffix(".jsonl"))
        .unwrap_or(&name);
    trajectory.with_file_name(format!("{stem}.report.json"))
}

pub fn assess(out: &Output, args: &AssessArgs) -> Outcome {
    let scenario = load_scenario(out, &args.scenario)?;
    let trajectory = Trajectory::from_jsonl(&read(&args.trajectory)?, &scenario)
        .map_err(|e| Failure::domain("integrity", format!("{}: {e}", args.trajectory.display())))?;
    let weights = args
        .weights
        .as_deref()
        .map(valence_service::parse_weights)
        .transpose()
        .map_err(Failure::Usage)?;
    let solution: SolutionFront = match &args.front {
        Some(path) => read_front(&read(path)?, &scenario)
            .map_err(|e| Failure::domain("front", format!("{}: {e}", path.display())))?,
        None => {
            let mut config = SolveConfig::for_scenario(&scenario);
            config.gamma = trajectory.gamma;
            config.horizon = trajectory.horizon.or(config.horizon);
            pmovi(&scenario, &config).map_err(solver_failure)?
        }
    };
    let report = build_report(&scenario, &trajectory, &solution, weights.as_deref()).map_err(|e| match e {
        AssessError::BadWeights { .. } => Failure::Usage(e.to_string()),
        AssessError::Integrity(_) => Failure::domain("integrity", e.to_string()),
        _ => Failure::domain("assessment", e.to_string()),
    })?;
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| default_report_path(&args.trajectory));
    let body = report.to_json();
    write(&path, &body)?;
    if out.json() {
        print!("{body}");
    } else {
        print!("{}", report.render_text());
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn protocol_failure(e: ProtocolError) -> Failure {
    match e {
        ProtocolError::Invalid { name, diagnostics } => Failure::Diagnostics {
            source: name,
            diagnostics,
        },
        other => Failure::domain("protocol", other.to_string()),
    }
}

fn render_evaluation(s: &mut String, e: &ProtocolEvaluation) {
    let stance = match e.stance {
        valence_core::protocol::Stance::Permissive => "permissive",
        valence_core::protocol::Stance::Restrictive => "restrictive",
    };
    let _ = writeln!(s, "protocol {} ({stance})", e.protocol);
    let _ = writeln!(
        s,
        "  front: {} vectors (unrestricted {})",
        e.front.len(),
        e.unrestricted_front.len()
    );
    for v in &e.front {
        let _ = writeln!(s, "    {}", vector(v));
    }
    let _ = writeln!(
        s,
        "  hypervolume {} (unrestricted {}) against {}",
        num(e.hypervolume),
        num(e.unrestricted_hypervolume),
        vector(&e.reference)
    );
    let _ = writeln!(s, "  maxima: {}", named(&e.values, &e.value_maxima));
    let relation = if e.relation.identical {
        "identical to the unrestricted front".to_string()
    } else {
        let lost: Vec<String> = e.relation.lost.iter().map(vector).collect();
        format!("loses {}", lost.join(", "))
    };
    let _ = writeln!(s, "  {relation}");
    let _ = writeln!(s, "  transitions removed {}, added {}", e.removed.count, e.added.count);
}

pub fn protocol(out: &Output, command: &ProtocolCommand) -> Outcome {
    match command {
        ProtocolCommand::Eval {
            scenario,
            protocol,
            solver,
        } => {
            let scenario = load_scenario(out, scenario)?;
            let protocol = load_protocol(out, protocol, &scenario)?;
            let config = solve_config(solver, &scenario)?;
            let evaluation = evaluate_protocol(&scenario, &protocol, &config, None).map_err(protocol_failure)?;
            out.emit(
                || {
                    let mut s = format!("{}: {}\n", scenario.name(), describe_config(&config));
                    render_evaluation(&mut s, &evaluation);
                    s
                },
                || serde_json::to_value(&evaluation).expect("evaluations serialise"),
            );
        }
        ProtocolCommand::Compare { scenario, a, b, solver } => {
            let scenario = load_scenario(out, scenario)?;
            let a = load_protocol(out, a, &scenario)?;
            let b = load_protocol(out, b, &scenario)?;
            let config = solve_config(solver, &scenario)?;
            let cmp = compare_protocols(&scenario, &a, &b, &config, None).map_err(protocol_failure)?;
            out.emit(
                || {
                    let mut s = format!("{}: {}\n", scenario.name(), describe_config(&config));
                    render_evaluation(&mut s, &cmp.a);
                    render_evaluation(&mut s, &cmp.b);
                    let verdict = |x: &str, y: &str, covers: bool, dominated: usize| {
                        format!(
                            "{x} {} {y}; {dominated} of {x}'s vectors are dominated by {y}'s\n",
                            if covers { "covers" } else { "does not cover" }
                        )
                    };
                    s.push_str(&verdict(
                        &cmp.a.protocol,
                        &cmp.b.protocol,
                        cmp.a_covers_b,
                        cmp.a_dominated_by_b.len(),
                    ));
                    s.push_str(&verdict(
                        &cmp.b.protocol,
                        &cmp.a.protocol,
                        cmp.b_covers_a,
                        cmp.b_dominated_by_a.len(),
                    ));
                    s
                },
                || serde_json::to_value(&cmp).expect("comparisons serialise"),
            );
        }
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Outcome {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::domain("runtime", e.to_string()))?;
    let config = valence_service::ServeConfig {
        port: args.port,
        data_dir: args.data_dir.clone(),
    };
    runtime
        .block_on(valence_service::serve(config))
        .map_err(|e| Failure::domain("serve", e.to_string()))
}

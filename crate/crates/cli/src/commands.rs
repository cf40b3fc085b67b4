use std::fs;
use std::io::Write;
use std::path::Path;

use bellforge_core::experiment_analysis::{
    audit_all, default_records, parse_records, render_reports_kv, render_reports_text,
    render_table_kv, render_table_text, reproduce_table, AnalysisConfig, ExperimentRecord,
};
use bellforge_core::hvdz_model::{
    j_dz_lower_bound, j_from_tables, j_prime_from_tables, lhv_feasibility, mu_tables_unchecked,
    q_from_s, q_required, s_dz, sample_trials, Displacements, HvdzConfig, Marginals,
};
use bellforge_core::kv;
use bellforge_core::quantum_model::{
    concurrence, j_from_counts, optimize_chsh, optimize_j, CountsQuad, DetectionModel,
    EntangledState, ObservedProbabilities, OptimizerConfig, RChoice, SettingPair, SettingsQuad,
    StateVariant,
};
use bellforge_core::trial_simulator::{
    coincidence_analysis, read_streams, run, spacelike_check, write_streams, SetupConfig,
};

use crate::args::{
    AnalyzeArgs, AngleArgs, AuditArgs, DetectionArgs, Format, HvdzArgs, OptimizeArgs,
    OptimizerArgs, PredictArgs, RecordArgs, SetupArgs, SimulateArgs, TableArgs,
};
use crate::output::{render, render_with, Block};
use crate::{CliError, CliResult};

/// What a subcommand prints and the status it exits with.
pub struct Outcome {
    pub stdout: String,
    pub code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, code: 0 }
    }
}

const PAIR_KEYS: [&str; 4] = ["ab", "ab_prime", "a_prime_b", "a_prime_b_prime"];

fn manifest(command: &str, seed: Option<u64>) -> Block {
    let mut b = Block::new("run");
    b.text("command", command);
    match seed {
        Some(s) => b.text("seed", s),
        None => b.text("seed", "none"),
    };
    b
}

fn detection(d: &DetectionArgs) -> CliResult<DetectionModel> {
    Ok(DetectionModel::new(
        d.eta,
        d.eta_b.unwrap_or(d.eta),
        d.background,
        d.background_b.unwrap_or(d.background),
    )?)
}

fn optimizer(o: &OptimizerArgs) -> OptimizerConfig {
    OptimizerConfig {
        angle_points: o.angle_points,
        r_points: o.r_points,
        random_starts: o.random_starts,
        ..OptimizerConfig::default()
    }
    .with_seed(o.seed)
}

fn push_angles(b: &mut Block, s: &SettingsQuad, degrees: bool) {
    let unit = |x: f64| if degrees { x.to_degrees() } else { x };
    b.text("angle_unit", if degrees { "deg" } else { "rad" });
    b.num("a", unit(s.a))
        .num("a_prime", unit(s.a_prime))
        .num("b", unit(s.b))
        .num("b_prime", unit(s.b_prime));
}

fn given_angles(a: &AngleArgs) -> CliResult<SettingsQuad> {
    let (Some(x), Some(xp), Some(y), Some(yp)) = (a.a, a.a_prime, a.b, a.b_prime) else {
        return Err(CliError::Usage(
            "give all of --a, --a-prime, --b, --b-prime or use --optimize".into(),
        ));
    };
    Ok(if a.degrees {
        SettingsQuad::from_degrees(x, xp, y, yp)?
    } else {
        SettingsQuad::new(x, xp, y, yp)?
    })
}

pub fn predict(args: &PredictArgs, format: Format) -> CliResult<Outcome> {
    let variant = StateVariant::from(args.state);
    let det = detection(&args.detection)?;
    let state = EntangledState::new(variant, args.r)?;
    let settings = if args.optimize {
        let cfg = optimizer(&args.optimizer);
        let r = RChoice::Fixed(args.r);
        if args.chsh {
            optimize_chsh(variant, r, &det, &cfg)?.settings
        } else {
            optimize_j(variant, r, &det, &cfg)?.settings
        }
    } else {
        given_angles(&args.angles)?
    };
    let obs = ObservedProbabilities::compute(&state, &settings, &det);

    let mut b = Block::new("predict");
    b.text("state", variant)
        .num("r", state.r())
        .num("concurrence", concurrence(&state))
        .text("optimized", args.optimize);
    push_angles(&mut b, &settings, args.angles.degrees);
    b.num("eta_a", det.eta_a)
        .num("eta_b", det.eta_b)
        .num("background_a", det.beta_a)
        .num("background_b", det.beta_b)
        .num("p_a", obs.singles_a[0])
        .num("p_a_prime", obs.singles_a[1])
        .num("p_b", obs.singles_b[0])
        .num("p_b_prime", obs.singles_b[1]);
    for pair in SettingPair::ALL {
        b.num(
            format!("c_{}", PAIR_KEYS[pair.index()]),
            obs.coincidence[pair.index()],
        );
    }
    b.num("j", obs.j());
    if args.chsh {
        for pair in SettingPair::ALL {
            b.num(
                format!("e_{}", PAIR_KEYS[pair.index()]),
                obs.correlator(pair),
            );
        }
        b.num("s", obs.chsh());
    }
    Ok(Outcome::ok(render(
        &[manifest("predict", Some(args.optimizer.seed)), b],
        format,
    )))
}

pub fn optimize(args: &OptimizeArgs, format: Format) -> CliResult<Outcome> {
    let variant = StateVariant::from(args.state);
    let det = detection(&args.detection)?;
    let cfg = optimizer(&args.optimizer);
    let r = args.r.map_or(RChoice::Free, RChoice::Fixed);
    let best = if args.chsh {
        optimize_chsh(variant, r, &det, &cfg)?
    } else {
        optimize_j(variant, r, &det, &cfg)?
    };
    let mut b = Block::new("optimize");
    b.text("objective", if args.chsh { "s" } else { "j" })
        .text("state", variant)
        .text("r_search", if args.r.is_some() { "fixed" } else { "free" })
        .num("r", best.state.r())
        .num("eta_a", det.eta_a)
        .num("eta_b", det.eta_b)
        .num("background_a", det.beta_a)
        .num("background_b", det.beta_b);
    push_angles(&mut b, &best.settings, args.degrees);
    b.num("value", best.value)
        .num("grid_value", best.grid_value);
    Ok(Outcome::ok(render(
        &[manifest("optimize", Some(args.optimizer.seed)), b],
        format,
    )))
}

pub fn hvdz(args: &HvdzArgs, format: Format) -> CliResult<Outcome> {
    let mut b = Block::new("hvdz");
    if let Some(s) = args.q_from_s {
        b.text("mode", "q_from_s")
            .num("s", s)
            .num("q", q_from_s(s)?);
        return Ok(Outcome::ok(render(
            &[manifest("hvdz", args.seed), b],
            format,
        )));
    }
    let p_a = args.p_a.expect("clap requires --p-a");
    if let Some(j) = args.q_required {
        let q = q_required(j, p_a, args.p_b)?;
        b.text("mode", "q_required")
            .text(
                "model",
                if args.p_b.is_some() {
                    "exact"
                } else {
                    "default"
                },
            )
            .num("j", j)
            .num("p_a", p_a);
        if let Some(p_b) = args.p_b {
            b.num("p_b", p_b);
        }
        b.num("q", q).num("epsilon", q - 0.5);
        return Ok(Outcome::ok(render(
            &[manifest("hvdz", args.seed), b],
            format,
        )));
    }

    let q = args.q.expect("clap requires one mode");
    let p_b = args.p_b.unwrap_or(p_a);
    let marginals = Marginals::new(p_a, p_b)?;
    let displacements = Displacements::maximal_with(p_a, p_b, args.d24.unwrap_or(p_a));
    let raw = mu_tables_unchecked(&displacements, &marginals);
    let feas = lhv_feasibility(&raw, &marginals);
    let cfg = HvdzConfig::new(marginals, displacements, q)?;
    let tables = cfg.tables()?;
    let j_prime = j_prime_from_tables(&tables, &marginals);
    b.text("mode", "evaluate")
        .num("q", q)
        .num("epsilon", cfg.epsilon())
        .num("p_a", p_a)
        .num("p_b", p_b)
        .num("j_prime", j_prime)
        .num("j", j_from_tables(q, &tables, &marginals))
        .num("j_lower_bound", j_dz_lower_bound(q, p_a)?)
        .num("s_max", s_dz(cfg.epsilon()));
    for (mu, f) in feas.per_mu.iter().enumerate() {
        b.text(format!("lhv_feasible_mu{}", mu + 1), f.is_some());
    }
    if let Some(n) = args.trials {
        let seed = args.seed.expect("clap requires --seed");
        let counts = sample_trials(&cfg, &tables, n, 0.0, seed, 1)?;
        let est = j_from_counts(&counts)?;
        b.int("trials", n)
            .num("j_estimate", est.j)
            .num("j_std_error", est.std_error);
    }
    Ok(Outcome::ok(render(
        &[manifest("hvdz", args.seed), b],
        format,
    )))
}

fn load_records(args: &RecordArgs) -> CliResult<(Vec<ExperimentRecord>, String)> {
    match &args.records {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok((parse_records(&text)?, p.display().to_string()))
        }
        None => Ok((default_records()?, "built-in".into())),
    }
}

fn analysis_config(seed: u64) -> AnalysisConfig {
    AnalysisConfig {
        optimizer: OptimizerConfig::default().with_seed(seed),
        ..AnalysisConfig::default()
    }
}

pub fn audit(args: &AuditArgs, format: Format) -> CliResult<Outcome> {
    let (mut records, source) = load_records(&args.records)?;
    if !args.name.is_empty() {
        if let Some(missing) = args
            .name
            .iter()
            .find(|n| !records.iter().any(|r| &r.name == *n))
        {
            return Err(CliError::Usage(format!(
                "no record named `{missing}` in {source}"
            )));
        }
        records.retain(|r| args.name.contains(&r.name));
    }
    let reports = audit_all(&records, &analysis_config(args.records.seed))?;
    let mut m = manifest("audit", Some(args.records.seed));
    m.text("records", &source);
    let mut text = render_reports_text(&reports);
    text.push('\n');
    for r in &reports {
        text.push_str(&format!(
            "{}: detection: {}, locality: {}\n",
            r.name, r.detection.verdict, r.locality.verdict
        ));
    }
    let code = if reports.iter().all(|r| r.evaluable()) {
        0
    } else {
        2
    };
    Ok(Outcome {
        stdout: render_with(&[m], format, text, render_reports_kv(&reports)),
        code,
    })
}

pub fn table(args: &TableArgs, format: Format) -> CliResult<Outcome> {
    let (records, source) = load_records(&args.records)?;
    let checks = reproduce_table(&records, &analysis_config(args.records.seed))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    let mut m = manifest("table", Some(args.records.seed));
    m.text("records", &source)
        .int("cells", checks.len() as u64)
        .int("failed", failed as u64);
    Ok(Outcome {
        stdout: render_with(
            &[m],
            format,
            render_table_text(&checks),
            render_table_kv(&checks),
        ),
        code: if failed == 0 { 0 } else { 3 },
    })
}

fn load_setup(args: &SetupArgs) -> CliResult<SetupConfig> {
    let path = &args.config;
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let doc = kv::parse(&text)?;
    let section = doc.section(&args.section).ok_or_else(|| {
        CliError::Usage(format!(
            "{} has no [{}] section",
            path.display(),
            args.section
        ))
    })?;
    Ok(SetupConfig::from_section(section)?)
}

fn push_counts(b: &mut Block, c: &CountsQuad) {
    for pair in SettingPair::ALL {
        let p = c.get(pair);
        let k = PAIR_KEYS[pair.index()];
        b.int(format!("trials_{k}"), p.n_trials)
            .int(format!("coincidences_{k}"), p.n_cc)
            .int(format!("singles_a_{k}"), p.n_sa)
            .int(format!("singles_b_{k}"), p.n_sb);
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    let file =
        fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn simulate(args: &SimulateArgs, format: Format) -> CliResult<Outcome> {
    let cfg = load_setup(&args.setup)?;
    let streams = run(&cfg, args.pulses, args.seed)?;
    let mut m = manifest("simulate", Some(args.seed));
    m.text("config", args.setup.config.display())
        .int("pulses", args.pulses);
    let mut b = Block::new("truth");
    push_counts(&mut b, &streams.truth);
    b.int("events_a", streams.a.len() as u64)
        .int("events_b", streams.b.len() as u64);
    match &args.output {
        Some(path) => {
            write_file(path, |w| Ok(write_streams(w, &streams)?))?;
            m.text("output", path.display());
            Ok(Outcome::ok(render(&[m, b], format)))
        }
        None => {
            let mut csv = Vec::new();
            write_streams(&mut csv, &streams)?;
            m.text("output", "stdout");
            eprint!("{}", render(&[m, b], format));
            Ok(Outcome::ok(
                String::from_utf8(csv).expect("csv output is utf-8"),
            ))
        }
    }
}

pub fn analyze(args: &AnalyzeArgs, format: Format) -> CliResult<Outcome> {
    let cfg = load_setup(&args.setup)?;
    let mut m = manifest("analyze", None);
    m.text("config", args.setup.config.display());
    let mut blocks = vec![m];
    if args.timing {
        let rep = spacelike_check(&cfg);
        let mut b = Block::new("timing");
        b.text("pass", rep.pass)
            .num("latency_margin_ns", rep.latency_margin_ns)
            .int("pulses_per_hold", rep.pulses_per_hold)
            .text("selected_pass", rep.selected_pass);
        for p in &rep.pulses {
            let flags = [
                ("ready", p.setting_ready),
                ("free", p.free_choice),
                ("local", p.local),
            ]
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(n, _)| *n)
            .collect::<Vec<_>>();
            let status = if flags.is_empty() {
                "pass".to_string()
            } else {
                format!("fail:{}", flags.join("+"))
            };
            b.text(
                format!("pulse_{}", p.index),
                format!("{status} @ {:.3} ns", p.arrival_ns),
            );
        }
        blocks.push(b);
    }
    if let Some(path) = &args.input {
        let file =
            fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let streams = read_streams(std::io::BufReader::new(file))?;
        let res = coincidence_analysis(&streams, &cfg, args.policy.into())?;
        let d = res.diagnostics;
        let mut b = Block::new("analysis");
        b.text("input", path.display())
            .text("policy", format!("{:?}", args.policy).to_lowercase())
            .int("pulses", d.n_pulses);
        push_counts(&mut b, &res.counts);
        b.int("detections_a", d.detections_a)
            .int("detections_b", d.detections_b)
            .int("out_of_window_a", d.out_of_window_a)
            .int("out_of_window_b", d.out_of_window_b)
            .int("accidental_offset", d.accidental_offset)
            .int("accidental_coincidences", d.accidental_coincidences)
            .num("accidental_rate", d.accidental_rate())
            .num("singles_product", d.singles_product);
        match j_from_counts(&res.counts) {
            Ok(est) => {
                b.num("j", est.j).num("j_std_error", est.std_error);
            }
            Err(e) => {
                b.text("j", format!("unavailable ({e})"));
            }
        }
        blocks.push(b);
    }
    Ok(Outcome::ok(render(&blocks, format)))
}

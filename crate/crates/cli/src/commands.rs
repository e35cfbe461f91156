use std::path::{Path, PathBuf};
use std::sync::Arc;

use dalab::equilibrium::{certify, solve_case, CaseTag, Certification, MarketSpec, RoleCertificate, ScaleProfile, ScanOptions};
use dalab::markets::{evaluate_policy, train_pda, train_singleshot, PolicyEvaluation, SingleShotCase};
use dalab::neural::DdpgAgent;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::formats::*;
use crate::output::{artifact_name, fmt_float, write_csv, write_json, Table};
use crate::tournament::{default_opponents, run_tournament, TournamentReport};

/// Resolved run settings: flags first, then the config document, then defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub config: ExperimentConfig,
}

impl Settings {
    pub const DEFAULT_SEED: u64 = 1;

    pub fn new(config: ExperimentConfig, seed: Option<u64>, jobs: Option<usize>, out: Option<PathBuf>) -> CliResult<Self> {
        let jobs = jobs.or(config.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        Ok(Settings {
            seed: seed.or(config.seed).unwrap_or(Self::DEFAULT_SEED),
            jobs,
            out: out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            config,
        })
    }

    fn spec(&self, flag: Option<MarketSpec>) -> CliResult<MarketSpec> {
        let spec = flag.or(self.config.spec).unwrap_or_else(MarketSpec::unit);
        spec.validate()?;
        Ok(spec)
    }

    fn case_str<'a>(&'a self, flag: Option<&'a str>) -> Option<&'a str> {
        flag.or(self.config.case.as_deref())
    }

    fn checkpoint(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| self.config.checkpoint.clone())
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

pub fn parse_cases(s: &str) -> CliResult<Vec<CaseTag>> {
    if s.trim() == "all" {
        return Ok(CaseTag::ALL.to_vec());
    }
    s.split(',').map(|c| c.parse::<CaseTag>().map_err(CliError::from)).collect()
}

pub fn parse_alphas(s: &str) -> CliResult<[f64; 4]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| CliError::config(format!("bad scale factor {p:?}: {e}"))))
        .collect::<CliResult<_>>()?;
    v.try_into().map_err(|v: Vec<f64>| CliError::config(format!("need four scale factors, got {}", v.len())))
}

fn load_agent(path: &Path) -> CliResult<DdpgAgent> {
    if !path.is_file() {
        return Err(CliError::io(path, "checkpoint not found"));
    }
    Ok(DdpgAgent::load(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Alphas {
    pub alpha_b1: f64,
    pub alpha_b2: f64,
    pub alpha_s1: f64,
    pub alpha_s2: f64,
}

impl From<&ScaleProfile> for Alphas {
    fn from(p: &ScaleProfile) -> Self {
        Alphas { alpha_b1: p.alpha_b1, alpha_b2: p.alpha_b2, alpha_s1: p.alpha_s1, alpha_s2: p.alpha_s2 }
    }
}

/// Contents of a `solution_*.json` file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionFile {
    pub case: CaseTag,
    pub spec: MarketSpec,
    pub alphas: Alphas,
    pub residuals: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    pub ordering_violation: Option<String>,
}

pub fn cmd_solve(s: &Settings, case: Option<&str>, spec: Option<MarketSpec>) -> CliResult<Outcome> {
    let spec = s.spec(spec)?;
    let cases = parse_cases(s.case_str(case).unwrap_or("all"))?;
    let mut out = Outcome::default();
    let mut failed = Vec::new();
    for tag in cases {
        let sol = solve_case(tag, &spec)?;
        let file = SolutionFile {
            case: tag,
            spec,
            alphas: Alphas::from(&sol.profile),
            residuals: sol.residuals.clone(),
            iterations: sol.iterations,
            converged: sol.converged,
            ordering_violation: sol.ordering_violation.clone(),
        };
        out.files.push(write_json(&s.out, &artifact_name("solution", &tag.to_string(), s.seed, "json"), &file)?);
        let a = sol.profile.alphas();
        let mut line = format!(
            "{tag}: alpha_b = ({}, {}), alpha_s = ({}, {}), max residual {:.1e}",
            fmt_float(a[0]),
            fmt_float(a[1]),
            fmt_float(a[2]),
            fmt_float(a[3]),
            sol.max_residual()
        );
        if let Some(v) = &sol.ordering_violation {
            line.push_str(&format!(" [ordering violated: {v}]"));
        }
        out.lines.push(line);
        if !sol.converged {
            failed.push(tag.to_string());
        }
    }
    if !failed.is_empty() {
        return Err(CliError::Numerical(format!("no convergence for {}", failed.join(", "))));
    }
    Ok(out)
}

fn cert_rows(t: &mut Table, c: &Certification) {
    let row = |r: &RoleCertificate| {
        vec![
            c.case.to_string(),
            r.role.to_string(),
            fmt_float(r.reference.mean),
            fmt_float(r.reference.std_error),
            fmt_float(r.scan.best_alphas[0]),
            fmt_float(r.scan.best_alphas[1]),
            fmt_float(r.scan.best.mean),
            fmt_float(r.gain),
            fmt_float(r.gain_in_std_errors),
            r.certified.to_string(),
        ]
    };
    t.push(row(&c.buyer));
    t.push(row(&c.seller));
}

pub struct VerifyArgs<'a> {
    pub case: Option<&'a str>,
    pub spec: Option<MarketSpec>,
    pub samples: Option<u64>,
    pub step: Option<f64>,
    pub alphas: Option<&'a str>,
}

pub fn cmd_verify(s: &Settings, args: VerifyArgs<'_>) -> CliResult<(Outcome, Vec<Certification>)> {
    let spec = s.spec(args.spec)?;
    let v = &s.config.verify;
    let cases = parse_cases(s.case_str(args.case).unwrap_or("all"))?;
    let samples = args.samples.unwrap_or(v.samples);
    if samples == 0 {
        return Err(CliError::config("verify needs at least one sample"));
    }
    let profile_override = match args.alphas {
        Some(a) => Some(parse_alphas(a)?),
        None => v.profile,
    };
    if profile_override.is_some() && cases.len() != 1 {
        return Err(CliError::config("a fixed profile needs exactly one case"));
    }
    let opts = ScanOptions {
        step: args.step.unwrap_or(v.step),
        samples,
        seed: s.seed,
        buyer_max: v.buyer_max,
        seller_max: v.seller_max,
        tied: true,
        jobs: s.jobs,
    };
    let mut out = Outcome::default();
    let mut certs = Vec::new();
    let mut table = Table::new(&VERIFY_COLUMNS);
    for tag in &cases {
        let profile = match profile_override {
            Some([b1, b2, s1, s2]) => ScaleProfile::new(*tag, b1, b2, s1, s2)?,
            None => solve_case(*tag, &spec)?.profile,
        };
        let cert = certify(&profile, &spec, &opts, v.threshold)?;
        for r in [&cert.buyer, &cert.seller] {
            out.lines.push(format!(
                "{tag} {}: best ({}, {}) gains {} std errors -> {}",
                r.role,
                fmt_float(r.scan.best_alphas[0]),
                fmt_float(r.scan.best_alphas[1]),
                fmt_float(r.gain_in_std_errors),
                if r.certified { "certified" } else { "profitable deviation" }
            ));
        }
        cert_rows(&mut table, &cert);
        out.files.push(write_json(&s.out, &artifact_name("verify", &tag.to_string(), s.seed, "json"), &cert)?);
        certs.push(cert);
    }
    let tag = if cases.len() == 1 { cases[0].to_string() } else { "all".to_string() };
    out.files.push(write_csv(&s.out, &artifact_name("verify", &tag, s.seed, "csv"), &table)?);
    Ok((out, certs))
}

fn singleshot_case(s: &Settings, flag: Option<&str>) -> CliResult<SingleShotCase> {
    Ok(s.case_str(flag).unwrap_or("1").parse::<SingleShotCase>()?)
}

fn evaluation_table(e: &PolicyEvaluation) -> Table {
    let mut t = Table::new(&EVALUATION_COLUMNS);
    let rel = e.relative_error();
    let mut row = vec![e.case.to_string(), e.states.to_string()];
    for i in 0..2 {
        row.extend([fmt_float(e.mean[i]), fmt_float(e.std[i]), fmt_float(e.theory[i]), fmt_float(rel[i])]);
    }
    t.push(row);
    t
}

fn evaluation_line(e: &PolicyEvaluation) -> String {
    let rel = e.relative_error();
    format!(
        "{}: alpha_b1 {} +- {} (theory {}, {:.1}% off), alpha_b2 {} +- {} (theory {}, {:.1}% off)",
        e.case,
        fmt_float(e.mean[0]),
        fmt_float(e.std[0]),
        fmt_float(e.theory[0]),
        100.0 * rel[0],
        fmt_float(e.mean[1]),
        fmt_float(e.std[1]),
        fmt_float(e.theory[1]),
        100.0 * rel[1]
    )
}

pub fn cmd_train_singleshot(s: &Settings, case: Option<&str>, episodes: Option<usize>) -> CliResult<Outcome> {
    let case = singleshot_case(s, case)?;
    let mut cfg = s.config.singleshot.clone();
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    let run = train_singleshot(case, &cfg, s.seed)?;
    let tag = case.to_string();
    let mut out = Outcome::default();
    out.files.push(write_json(&s.out, &artifact_name("checkpoint", &tag, s.seed, "json"), &run.agent)?);

    let mut curve = Table::new(&CURVE_COLUMNS);
    for r in &run.curve {
        curve.push(vec![
            r.episode.to_string(),
            fmt_float(r.theta),
            fmt_float(r.theta_s),
            fmt_float(r.a1),
            fmt_float(r.a2),
            fmt_float(r.reward),
        ]);
    }
    out.files.push(write_csv(&s.out, &artifact_name("curve", &tag, s.seed, "csv"), &curve)?);

    let mut updates = Table::new(&UPDATE_COLUMNS);
    for u in &run.updates {
        updates.push(vec![u.step.to_string(), fmt_float(u.critic_loss), fmt_float(u.actor_objective)]);
    }
    out.files.push(write_csv(&s.out, &artifact_name("updates", &tag, s.seed, "csv"), &updates)?);
    out.files.push(write_csv(&s.out, &artifact_name("evaluation", &tag, s.seed, "csv"), &evaluation_table(&run.evaluation))?);
    out.lines.push(format!("trained {} episodes, {} updates", cfg.episodes, run.updates.len()));
    out.lines.push(evaluation_line(&run.evaluation));
    Ok(out)
}

pub fn cmd_evaluate(
    s: &Settings,
    case: Option<&str>,
    checkpoint: Option<&Path>,
    states: Option<usize>,
) -> CliResult<(Outcome, PolicyEvaluation)> {
    let case = singleshot_case(s, case)?;
    let path = s.checkpoint(checkpoint).ok_or_else(|| CliError::config("evaluate needs --checkpoint"))?;
    let agent = load_agent(&path)?;
    let states = states.unwrap_or(s.config.evaluate.states);
    if states == 0 {
        return Err(CliError::config("evaluation needs at least one state"));
    }
    let eval = evaluate_policy(&agent, case, states, s.seed)?;
    let mut out = Outcome::default();
    out.files.push(write_csv(&s.out, &artifact_name("evaluation", &case.to_string(), s.seed, "csv"), &evaluation_table(&eval))?);
    out.lines.push(evaluation_line(&eval));
    Ok((out, eval))
}

pub fn cmd_train_pda(s: &Settings, updates: Option<usize>) -> CliResult<(Outcome, DdpgAgent)> {
    let mut cfg = s.config.pda.clone();
    if let Some(n) = updates {
        cfg.updates = n;
    }
    let run = train_pda(&cfg, s.seed)?;
    let mut out = Outcome::default();
    out.files.push(write_json(&s.out, &artifact_name("checkpoint", "pda", s.seed, "json"), &run.agent)?);

    let mut t = Table::new(&TRANSITION_COLUMNS);
    for tr in &run.transitions {
        t.push(vec![
            tr.game_id.to_string(),
            tr.slot.to_string(),
            tr.proximity.to_string(),
            tr.q.to_string(),
            fmt_float(tr.theta),
            fmt_float(tr.action[0]),
            fmt_float(tr.action.get(1).copied().unwrap_or(tr.action[0])),
            fmt_float(tr.cp),
            tr.cq.to_string(),
            fmt_float(tr.reward),
            tr.done.to_string(),
        ]);
    }
    out.files.push(write_csv(&s.out, &artifact_name("transitions", "pda", s.seed, "csv"), &t)?);

    let mut u = Table::new(&UPDATE_COLUMNS);
    for (i, st) in run.updates.iter().enumerate() {
        u.push(vec![(i + 1).to_string(), fmt_float(st.critic_loss), fmt_float(st.actor_objective)]);
    }
    out.files.push(write_csv(&s.out, &artifact_name("updates", "pda", s.seed, "csv"), &u)?);
    out.lines.push(format!("collected {} transitions, ran {} updates", run.transitions.len(), run.updates.len()));
    Ok((out, run.agent))
}

pub fn cmd_tournament(s: &Settings, checkpoint: Option<&Path>, games: Option<u32>) -> CliResult<(Outcome, TournamentReport)> {
    let mut out = Outcome::default();
    let agent = match s.checkpoint(checkpoint) {
        Some(path) => load_agent(&path)?,
        None => {
            let (trained, agent) = cmd_train_pda(s, None)?;
            out.files.extend(trained.files);
            out.lines.extend(trained.lines);
            agent
        }
    };
    let mut cfg = s.config.tournament.clone();
    if let Some(g) = games {
        cfg.two_player_games = g;
        cfg.five_player_games = g;
    }
    let market = &s.config.pda.market;
    let opponents = match &cfg.opponents {
        Some(o) => o.clone(),
        None => default_opponents(market)?,
    };
    let report = run_tournament(Arc::new(agent), market, &opponents, &cfg, s.seed, s.jobs)?;
    out.files.push(write_csv(&s.out, &artifact_name("tournament", "pda", s.seed, "csv"), &report.table())?);
    out.files.push(write_json(&s.out, &artifact_name("tournament", "pda", s.seed, "json"), &report)?);
    for set in &report.sets {
        for b in &set.brokers {
            out.lines.push(format!(
                "{} {}: avg unit price {} (ratio {}), ddpg lower in {}/{}",
                set.set,
                b.broker,
                b.mean_avg_unit_clearing_price.map(fmt_float).unwrap_or_else(|| "-".into()),
                b.normalized_ratio.map(fmt_float).unwrap_or_else(|| "-".into()),
                b.reference_lower,
                set.games
            ));
        }
    }
    Ok((out, report))
}

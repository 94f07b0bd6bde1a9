//! One function per subcommand. Each returns a [`Report`]: a JSON document
//! plus named CSV tables.

use std::sync::Arc;

use lyap_core::linalg::Vector;
use lyap_core::model::{parse_generator_spec, CoefficientSequence, MatrixSequence};
use lyap_core::sinln::sin_ln_scan;
use lyap_core::spectrum::{checkpoint_stride, spectrum_estimate, TailRule};
use lyap_core::splitness::{splitness_report, FssRecord};
use lyap_core::synth::{build_plan, execute_plan, instability_experiment, openness_experiment, SynthesisConstants};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Scenario, SCHEMA_VERSION};
use crate::CliError;

pub struct Table {
    /// File name suffix, e.g. `spectrum` or `angles`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

pub struct Report {
    pub command: &'static str,
    pub json: Value,
    /// The first table is the primary one, printed on stdout in CSV mode.
    pub tables: Vec<Table>,
}

fn document(command: &str, params: &impl Serialize, result: Value) -> Result<Value, CliError> {
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "parameters": serde_json::to_value(params).map_err(|e| CliError::Io(e.to_string()))?,
        "result": result,
    }))
}

fn to_value(v: &impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fss(sc: &Scenario) -> Result<FssRecord, CliError> {
    Ok(FssRecord::propagate(&sc.sequence, sc.params.initial_vectors(), sc.params.horizon)?)
}

fn shared(sc: &Scenario) -> Arc<dyn MatrixSequence> {
    Arc::new(sc.sequence.clone())
}

pub fn spectrum(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.params;
    let est = spectrum_estimate(&sc.sequence, p.horizon, &p.scan.rule)?;
    let mut table = Table::new("spectrum", &["exponent", "multiplicity", "realizing_count"]);
    let mut at = 0;
    let mut groups = Vec::new();
    for g in &est.groups {
        let mut idx: Vec<usize> = est.realizing[at..at + g.multiplicity].iter().flatten().copied().collect();
        idx.sort_unstable();
        idx.dedup();
        at += g.multiplicity;
        table.push([g.value.to_string(), g.multiplicity.to_string(), idx.len().to_string()]);
        groups.push(json!({"exponent": g.value, "multiplicity": g.multiplicity, "realizing_count": idx.len()}));
    }
    let mut trace = Table::new("trace", &["n"]);
    trace.header.extend((1..=p.dimension).map(|j| format!("f{j}")));
    for c in &est.trace {
        trace.push(std::iter::once(c.n.to_string()).chain(c.values.iter().map(|v| v.to_string())));
    }
    let result = json!({
        "exponents": est.exponents,
        "groups": groups,
        "horizon": est.horizon,
        "checkpoint_stride": est.checkpoint_stride,
    });
    Ok(Report { command: "spectrum", json: document("spectrum", p, result)?, tables: vec![table, trace] })
}

pub fn splitness(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.params;
    let fss = fss(sc)?;
    let rep = splitness_report(&fss, &p.scan, p.horizon)?;
    let mut table =
        Table::new("verdicts", &["solution", "exponent", "principal_index", "gamma", "rho_hat", "verdict"]);
    for v in &rep.verdicts {
        table.push([
            (v.solution + 1).to_string(),
            v.exponent.to_string(),
            fmt_opt(v.principal_index),
            fmt_opt(v.gamma),
            v.rho_hat.to_string(),
            to_value(&v.verdict)?.as_str().unwrap_or_default().to_string(),
        ]);
    }
    let mut angles = Table::new("angles", &["n"]);
    angles.header.extend((1..=p.dimension).map(|i| format!("phi{i}")));
    let stride = checkpoint_stride(p.horizon);
    for n in (1..=p.horizon).filter(|n| n.is_multiple_of(stride) || *n == 1) {
        angles.push(std::iter::once(n.to_string()).chain((0..p.dimension).map(|i| fss.angle(i, n).to_string())));
    }
    let mut warnings = fss.warnings();
    warnings.extend(rep.warnings.iter().cloned());
    warnings.dedup();
    let mut result = to_value(&rep)?;
    result["warnings"] = to_value(&warnings)?;
    result["angle_stride"] = json!(stride);
    Ok(Report { command: "splitness", json: document("splitness", p, result)?, tables: vec![table, angles] })
}

pub fn perturb(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.params;
    let xi = &p.perturb.as_ref().ok_or_else(|| CliError::Config("perturb needs a [perturb] block with xi".into()))?.xi;
    let fss = fss(sc)?;
    let rep = splitness_report(&fss, &p.scan, p.horizon)?;
    let constants = SynthesisConstants::from_report(&rep, p.r).map_err(lyap_core::Error::from)?;
    let plan = build_plan(&fss, xi, &constants, p.horizon, &p.scan.rule).map_err(lyap_core::Error::from)?;
    let out = execute_plan(shared(sc), &fss, &plan).map_err(lyap_core::Error::from)?;
    let mut table = Table::new(
        "outcome",
        &["solution", "xi", "original_exponent", "perturbed_exponent", "achieved_shift", "gamma_set_size"],
    );
    for i in 0..p.dimension {
        table.push([
            (i + 1).to_string(),
            xi[i].to_string(),
            out.original_exponents[i].to_string(),
            out.perturbed_exponents[i].to_string(),
            out.achieved_shifts[i].to_string(),
            plan.gamma_set_sizes[i].to_string(),
        ]);
    }
    let result = json!({
        "splitness": {"splitted": rep.splitted, "rho_min": rep.rho_min(), "gamma_min": rep.gamma_min()},
        "constants": constants,
        "plan": plan,
        "outcome": out,
        "warnings": fss.warnings(),
    });
    Ok(Report { command: "perturb", json: document("perturb", p, result)?, tables: vec![table] })
}

pub fn assign(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.params;
    let block = p.assign.as_ref().ok_or_else(|| CliError::Config("assign needs an [assign] block".into()))?;
    let fss = fss(sc)?;
    let rep = openness_experiment(shared(sc), &fss, &block.target, block.epsilon, &p.experiment_options())
        .map_err(lyap_core::Error::from)?;
    let mut table = Table::new("assign", &["rank", "spectrum", "target", "assigned"]);
    for k in 0..p.dimension {
        table.push([
            (k + 1).to_string(),
            rep.spectrum[k].to_string(),
            rep.target[k].to_string(),
            rep.assigned[k].to_string(),
        ]);
    }
    Ok(Report { command: "assign", json: document("assign", p, to_value(&rep)?)?, tables: vec![table] })
}

pub fn instability(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.params;
    let block =
        p.instability.as_ref().ok_or_else(|| CliError::Config("instability needs an [instability] block".into()))?;
    let fss = fss(sc)?;
    let rep = instability_experiment(shared(sc), &fss, &block.epsilon, &p.experiment_options())
        .map_err(lyap_core::Error::from)?;
    let mut table = Table::new(
        "instability",
        &["epsilon", "epsilon_used", "clamped", "distance", "alpha", "sup_deviation", "certified_bound", "success"],
    );
    for r in &rep.rows {
        table.push([
            r.epsilon.to_string(),
            r.epsilon_used.to_string(),
            r.clamped.to_string(),
            r.distance.to_string(),
            rep.alpha.to_string(),
            r.sup_deviation.to_string(),
            r.certified_bound.to_string(),
            r.success.to_string(),
        ]);
    }
    Ok(Report { command: "instability", json: document("instability", p, to_value(&rep)?)?, tables: vec![table] })
}

#[derive(Serialize)]
struct SinLnParams {
    schema_version: u32,
    max_n: u64,
}

pub fn sinln(max_n: u64) -> Result<Report, CliError> {
    let r = sin_ln_scan(max_n).map_err(CliError::Config)?;
    let mut table = Table::new("sinln", &["max_n", "max", "argmax", "min", "argmin"]);
    table.push([r.max_n.to_string(), r.max.to_string(), r.argmax.to_string(), r.min.to_string(), r.argmin.to_string()]);
    let params = SinLnParams { schema_version: SCHEMA_VERSION, max_n };
    Ok(Report { command: "sinln", json: document("sinln", &params, to_value(&r)?)?, tables: vec![table] })
}

const EX2: &str = "diag(exp(n*sin(ln(n)) - (n+1)*sin(ln(n+1))), exp(2*((n+1)*sin(ln(n+1)) - n*sin(ln(n)))))";

/// Fast built-in checks on the two worked examples.
pub fn selftest() -> Result<(Report, bool), CliError> {
    let mut table = Table::new("selftest", &["check", "status", "detail"]);
    let mut all = true;
    let mut record = |name: &str, ok: bool, detail: String| {
        all &= ok;
        table.push([name.to_string(), if ok { "PASS" } else { "FAIL" }.to_string(), detail]);
    };

    let primer3 = CoefficientSequence::diagonal(&[1.0, 2.0])?;
    let est = spectrum_estimate(&primer3, 10_000, &TailRule::default())?;
    let err = (est.exponents[0]).abs().max((est.exponents[1] - 2f64.ln()).abs());
    record("primer3 spectrum", err <= 1e-3, format!("{:?}", est.exponents));

    let ex2 = parse_generator_spec(EX2)?;
    let init = vec![Vector::from_column_slice(&[1.0, 1.0]), Vector::from_column_slice(&[0.0, 1.0])];
    let fss = FssRecord::propagate(&ex2, init, 2_000)?;
    let worst = (1..=2_000)
        .map(|n| {
            let t = -6.0 * n as f64 * (n as f64).ln().sin();
            let l = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            (fss.angle(0, n).cos() - (-0.5 * l).exp()).abs()
        })
        .fold(0.0, f64::max);
    record("ex2 angle formula", worst <= 1e-9, format!("{worst:e}"));

    let s = sin_ln_scan(10_000).map_err(CliError::Config)?;
    record("sin ln n peak", s.max >= 1.0 - 1e-7, format!("{} at {}", s.max, s.argmax));

    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| json!({"check": r[0], "status": r[1], "detail": r[2]}))
        .collect();
    let params = json!({"schema_version": SCHEMA_VERSION});
    let json = document("selftest", &params, json!({ "checks": rows, "passed": all }))?;
    Ok((Report { command: "selftest", json, tables: vec![table] }, all))
}

pub fn run(command: &str, sc: &Scenario) -> Result<Report, CliError> {
    match command {
        "spectrum" => spectrum(sc),
        "splitness" => splitness(sc),
        "perturb" => perturb(sc),
        "assign" => assign(sc),
        "instability" => instability(sc),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

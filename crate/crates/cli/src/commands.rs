//! Subcommand arguments and their execution.

use std::f64::consts::TAU;
use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use pskqkd::info::iab_total;
use pskqkd::keyrate::{keyrate_checked, keyrate_direct, psa_boundary, KeyRateResult};
use pskqkd::montecarlo::{simulate as run_simulation, Postselection, SimulationConfig};
use pskqkd::optimize::{find_crossing, scan_brackets, sweep_eta, AmplitudeSearch};
use pskqkd::{ProtocolParams, QuadratureGrid, RateMode, Reconciliation};

use crate::output::{emit, json_report, opt_sig9, sig9, CsvTable};
use crate::CliError;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    /// Gauss–Legendre radial nodes.
    #[arg(long)]
    pub radial_nodes: Option<usize>,
    /// Angular nodes per sector.
    #[arg(long)]
    pub angular_nodes: Option<usize>,
    /// Truncation radius (default: √η·a + 6).
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Tolerated rate change under grid doubling, in bits.
    #[arg(long)]
    pub convergence_target: Option<f64>,
}

impl GridArgs {
    fn resolve(&mut self) -> Result<QuadratureGrid, CliError> {
        let d = QuadratureGrid::default();
        let radial = *self.radial_nodes.get_or_insert(d.radial_nodes);
        let angular = *self.angular_nodes.get_or_insert(d.angular_nodes);
        let target = *self.convergence_target.get_or_insert(d.convergence_target);
        let grid = QuadratureGrid {
            radial_nodes: radial,
            angular_nodes: angular,
            r_max: self.r_max,
            convergence_target: target,
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SearchArgs {
    /// Lower end of the amplitude search.
    #[arg(long)]
    pub a_min: Option<f64>,
    /// Upper end of the amplitude search.
    #[arg(long)]
    pub a_max: Option<f64>,
    /// Coarse amplitude step.
    #[arg(long)]
    pub a_step: Option<f64>,
    /// Golden-section amplitude tolerance.
    #[arg(long)]
    pub a_tol: Option<f64>,
}

impl SearchArgs {
    fn resolve(&mut self) -> Result<AmplitudeSearch, CliError> {
        let d = AmplitudeSearch::default();
        let search = AmplitudeSearch {
            lo: *self.a_min.get_or_insert(d.lo),
            hi: *self.a_max.get_or_insert(d.hi),
            step: *self.a_step.get_or_insert(d.step),
            tolerance: *self.a_tol.get_or_insert(d.tolerance),
            ..d
        };
        search.validate()?;
        Ok(search)
    }
}

fn required<T: Copy>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

fn parse_reconciliation(s: &str) -> Result<Reconciliation, CliError> {
    s.parse().map_err(|e: pskqkd::Error| CliError::usage(e.to_string()))
}

fn parse_switch(s: &str) -> Result<bool, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        other => Err(CliError::usage(format!("expected on or off, got '{other}'"))),
    }
}

fn switch_name(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

/// `start:stop:step`, inclusive of `stop` up to round-off.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("range '{s}' is not start:stop:step"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// `lo:hi`.
fn parse_interval(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::usage(format!("interval '{s}' is not lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

/// `2-3` or `2:3`.
fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("pair '{s}' is not N-M"));
    let (a, b) = s.split_once(['-', ':']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

// ---------------------------------------------------------------- keyrate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct KeyrateArgs {
    #[arg(long)]
    pub letters: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub transmittance: Option<f64>,
    /// direct or reverse.
    #[arg(long)]
    pub reconciliation: Option<String>,
    /// on or off.
    #[arg(long)]
    pub postselection: Option<String>,
    /// Also evaluate on a doubled grid and report the change.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub check: Option<bool>,
    /// Write the postselection border (CSV) to this file.
    #[arg(long)]
    pub boundary_out: Option<std::path::PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

pub fn keyrate(mut args: KeyrateArgs, out: Option<&Path>) -> Result<(), CliError> {
    let params = ProtocolParams::new(
        required(args.letters, "letters")?,
        required(args.amplitude, "amplitude")?,
        required(args.transmittance, "transmittance")?,
    )?;
    let reconciliation = parse_reconciliation(args.reconciliation.get_or_insert_with(|| "direct".into()))?;
    let postselect = parse_switch(args.postselection.get_or_insert_with(|| "on".into()))?;
    let check = *args.check.get_or_insert(false);
    let grid = args.grid.resolve()?;
    let mode = RateMode::new(reconciliation, postselect);
    let result: KeyRateResult = if check {
        keyrate_checked(&params, &grid, mode)?
    } else {
        pskqkd::keyrate(&params, &grid, mode)?
    };

    let eve_label = match reconciliation {
        Reconciliation::Direct => "I_AE",
        Reconciliation::Reverse => "mean I_BE",
    };
    let d = &result.diagnostics;
    println!("rate              {}", sig9(result.rate));
    println!("I_AB              {}", sig9(result.iab));
    println!("{eve_label:<18}{}", sig9(result.eve_information));
    println!("accepted fraction {}", sig9(result.accepted_fraction));
    if let Some(neg) = result.negative_samples {
        println!("negative samples  {neg}");
    }
    println!(
        "grid              {} x {}, r_max {}, normalization {}",
        d.radial_nodes,
        d.angular_nodes,
        sig9(d.r_max),
        sig9(d.normalization)
    );
    if let Some(delta) = d.achieved_delta {
        println!("refinement delta  {} (target {})", sig9(delta), sig9(d.convergence_target));
    }

    if let Some(path) = args.boundary_out.clone() {
        let table = boundary_table(&params, &[params.transmittance], &grid)?;
        emit(Some(&path), &table.render("psa", &args)?)?;
    }
    if let Some(path) = out {
        emit(Some(path), &json_report("keyrate", &args, &result)?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Alphabet sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub letters: Option<Vec<usize>>,
    /// Transmittances as start:stop:step.
    #[arg(long)]
    pub eta_range: Option<String>,
    /// direct and/or reverse, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub reconciliation: Option<Vec<String>>,
    /// on and/or off, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub postselection: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
}

pub const SWEEP_HEADER: [&str; 11] = [
    "eta",
    "letters",
    "mode",
    "postselection",
    "a_opt",
    "rate",
    "accepted_fraction",
    "raw_rate",
    "secondary_a",
    "secondary_rate",
    "status",
];

pub fn sweep(mut args: SweepArgs, out: Option<&Path>) -> Result<(), CliError> {
    let letters = args.letters.clone().ok_or_else(|| CliError::usage("missing --letters"))?;
    if letters.is_empty() {
        return Err(CliError::usage("--letters is empty"));
    }
    let range = args.eta_range.clone().ok_or_else(|| CliError::usage("missing --eta-range"))?;
    let etas = parse_range(&range)?;
    if etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(CliError::usage("transmittances must lie in [0, 1]"));
    }
    let recs = args
        .reconciliation
        .get_or_insert_with(|| vec!["direct".into()])
        .iter()
        .map(|s| parse_reconciliation(s))
        .collect::<Result<Vec<_>, _>>()?;
    let posts = args
        .postselection
        .get_or_insert_with(|| vec!["on".into()])
        .iter()
        .map(|s| parse_switch(s))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = args.grid.resolve()?;
    let search = args.search.resolve()?;
    for &n in &letters {
        ProtocolParams::new(n, 0.0, 0.5)?;
    }

    let mut table = CsvTable::new(&SWEEP_HEADER);
    let mut failures = 0usize;
    for &rec in &recs {
        for &post in &posts {
            let mode = RateMode::new(rec, post);
            for &n in &letters {
                for (eta, point) in etas.iter().zip(sweep_eta(n, mode, &etas, &grid, &search)) {
                    let lead = vec![sig9(*eta), n.to_string(), rec.to_string(), switch_name(post).into()];
                    let tail = match point {
                        Ok(p) => vec![
                            opt_sig9(p.optimal_amplitude),
                            sig9(p.rate),
                            sig9(p.accepted_fraction),
                            sig9(p.raw_rate),
                            opt_sig9(p.secondary_maximum.map(|s| s.0)),
                            opt_sig9(p.secondary_maximum.map(|s| s.1)),
                            "ok".into(),
                        ],
                        Err(e) => {
                            failures += 1;
                            let mut blank = vec![String::new(); 6];
                            blank.push(format!("error: {e}"));
                            blank
                        }
                    };
                    table.push(lead.into_iter().chain(tail).collect());
                }
            }
        }
    }
    emit(out, &table.render("sweep", &args)?)?;
    if failures > 0 {
        return Err(CliError::partial(format!("{failures} sweep points failed")));
    }
    Ok(())
}

// ---------------------------------------------------------------- crossings

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CrossingsArgs {
    /// Alphabet pairs such as 2-3,4-64.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<String>>,
    /// Consecutive pairs from N to M, as N:M.
    #[arg(long)]
    pub consecutive: Option<String>,
    /// Explicit bisection bracket lo:hi; otherwise brackets come from a scan.
    #[arg(long)]
    pub bracket: Option<String>,
    /// Scan grid start:stop:step for locating sign changes.
    #[arg(long)]
    pub scan: Option<String>,
    #[arg(long)]
    pub reconciliation: Option<String>,
    #[arg(long)]
    pub postselection: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
}

pub const CROSSINGS_HEADER: [&str; 9] = [
    "n_low",
    "n_high",
    "eta_star",
    "bracket_lo",
    "bracket_hi",
    "width",
    "delta_at_star",
    "evaluations",
    "status",
];

pub fn crossings(mut args: CrossingsArgs, out: Option<&Path>) -> Result<(), CliError> {
    let mut pairs = Vec::new();
    for p in args.pairs.iter().flatten() {
        pairs.push(parse_pair(p)?);
    }
    if let Some(c) = &args.consecutive {
        let (lo, hi) = parse_pair(c)?;
        pairs.extend((lo..hi).map(|n| (n, n + 1)));
    }
    if pairs.is_empty() {
        return Err(CliError::usage("give --pairs or --consecutive"));
    }
    let rec = parse_reconciliation(args.reconciliation.get_or_insert_with(|| "direct".into()))?;
    let post = parse_switch(args.postselection.get_or_insert_with(|| "on".into()))?;
    let mode = RateMode::new(rec, post);
    let bracket = args.bracket.as_deref().map(parse_interval).transpose()?;
    let scan = parse_range(args.scan.get_or_insert_with(|| "0.3:0.95:0.05".into()))?;
    let grid = args.grid.resolve()?;
    let search = args.search.resolve()?;
    for &(a, b) in &pairs {
        ProtocolParams::new(a, 0.0, 0.5)?;
        ProtocolParams::new(b, 0.0, 0.5)?;
    }

    let mut table = CsvTable::new(&CROSSINGS_HEADER);
    let mut unresolved = 0usize;
    for &(lo_n, hi_n) in &pairs {
        let brackets = match bracket {
            Some(b) => vec![b],
            None => scan_brackets(lo_n, hi_n, mode, &scan, &grid, &search)?.0,
        };
        let blank_row = |status: String| {
            let mut row = vec![lo_n.to_string(), hi_n.to_string()];
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.push(status);
            row
        };
        if brackets.is_empty() {
            unresolved += 1;
            table.push(blank_row("unbracketed".into()));
            continue;
        }
        for b in brackets {
            match find_crossing(lo_n, hi_n, mode, b, &grid, &search) {
                Ok(c) => table.push(vec![
                    lo_n.to_string(),
                    hi_n.to_string(),
                    sig9(c.eta_star),
                    sig9(c.bracket.0),
                    sig9(c.bracket.1),
                    sig9(c.width),
                    sig9(c.delta_at_star),
                    c.evaluations.to_string(),
                    "ok".into(),
                ]),
                Err(pskqkd::Error::Bracket { .. }) => {
                    unresolved += 1;
                    table.push(blank_row("unbracketed".into()));
                }
                Err(e) => {
                    unresolved += 1;
                    table.push(blank_row(format!("error: {e}")));
                }
            }
        }
    }
    emit(out, &table.render("crossings", &args)?)?;
    if unresolved > 0 {
        return Err(CliError::partial(format!("{unresolved} pairs without a crossing")));
    }
    Ok(())
}

// ---------------------------------------------------------------- psa

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PsaArgs {
    #[arg(long)]
    pub letters: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Transmittances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eta_list: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

pub const PSA_HEADER: [&str; 5] = ["eta", "sector", "theta", "r_star", "empty"];

fn boundary_table(params: &ProtocolParams, etas: &[f64], grid: &QuadratureGrid) -> Result<CsvTable, CliError> {
    let mut table = CsvTable::new(&PSA_HEADER);
    let width = TAU / params.letters as f64;
    for &eta in etas {
        let boundary = psa_boundary(&params.with_transmittance(eta), grid)?;
        for sector in 0..params.letters {
            for (theta, r) in boundary.angles.iter().zip(&boundary.radii) {
                table.push(vec![
                    sig9(eta),
                    sector.to_string(),
                    sig9(theta + sector as f64 * width),
                    opt_sig9(*r),
                    u8::from(r.is_none()).to_string(),
                ]);
            }
        }
    }
    Ok(table)
}

pub fn psa(mut args: PsaArgs, out: Option<&Path>) -> Result<(), CliError> {
    let etas = args.eta_list.clone().ok_or_else(|| CliError::usage("missing --eta-list"))?;
    let first = *etas.first().ok_or_else(|| CliError::usage("--eta-list is empty"))?;
    let params = ProtocolParams::new(
        required(args.letters, "letters")?,
        required(args.amplitude, "amplitude")?,
        first,
    )?;
    for &eta in &etas {
        params.with_transmittance(eta).validate()?;
    }
    let grid = args.grid.resolve()?;
    let table = boundary_table(&params, &etas, &grid)?;
    emit(out, &table.render("psa", &args)?)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    pub letters: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub transmittance: Option<f64>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// on applies the direct-reconciliation postselection mask.
    #[arg(long)]
    pub postselection: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

fn z_score(estimate: f64, reference: f64, stderr: f64) -> Option<f64> {
    (stderr > 0.0).then(|| (estimate - reference) / stderr)
}

pub fn simulate(mut args: SimulateArgs, out: Option<&Path>) -> Result<(), CliError> {
    let params = ProtocolParams::new(
        required(args.letters, "letters")?,
        required(args.amplitude, "amplitude")?,
        required(args.transmittance, "transmittance")?,
    )?;
    let samples = *args.samples.get_or_insert(1_000_000);
    let seed = *args.seed.get_or_insert(0);
    let post = parse_switch(args.postselection.get_or_insert_with(|| "off".into()))?;
    let grid = args.grid.resolve()?;
    let report = run_simulation(&SimulationConfig {
        params,
        samples,
        seed,
        postselection: if post { Postselection::DirectPsa } else { Postselection::Off },
    })?;

    let iab = iab_total(&params, &grid)?.value;
    let accepted_quadrature = if post {
        Some(keyrate_direct(&params, &grid, true)?.accepted_fraction)
    } else {
        None
    };
    let comparison = json!({
        "iab_total": iab,
        "sampled_iab": report.sampled_iab,
        "sampled_iab_z": z_score(report.sampled_iab, iab, report.sampled_iab_stderr),
        "sampled_iab_relative_error": if iab > 0.0 { Some((report.sampled_iab - iab).abs() / iab) } else { None },
        "empirical_iab": report.empirical_iab,
        "accepted_empirical_iab": report.accepted_empirical_iab,
        "empirical_iab_below_iab_total": report.empirical_iab <= iab + 3.0 * report.sampled_iab_stderr,
        "accepted_fraction_quadrature": accepted_quadrature,
        "accepted_fraction_z": accepted_quadrature
            .and_then(|q| z_score(report.accepted_fraction, q, report.accepted_stderr)),
    });
    let bytes = json_report("simulate", &args, &json!({ "report": report, "comparison": comparison }))?;
    emit(out, &bytes)
}

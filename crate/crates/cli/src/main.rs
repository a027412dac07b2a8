use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use harvest_core::harvester::{calibrate, open_circuit_vpp, HarvesterParams};
use harvest_core::kinematics::{
    acceleration_from_displacement, displacement_from_acceleration, mil_std_check, velocity_from_acceleration,
    Acceleration, ComplianceBand, Convention, Displacement, Frequency,
};
use harvest_core::scenario::file::{
    harvester_params_to_toml, parse_harvester_params, parse_observations, read_curve_csv, read_scenario,
    scenario_to_toml, write_curve_csv,
};
use harvest_core::scenario::{builtin_scenario, compare, run, sweep, BuiltinId, ParamPath, Scenario};
use harvest_core::{sig4, Error};

const EXIT_NON_COMPLIANT: u8 = 2;
const EXIT_OUT_OF_RANGE: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "harvest", version, about = "Vibration energy harvester simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its charge curve.
    Simulate(SimulateArgs),
    /// Run a scenario once per value of one parameter.
    Sweep(SweepArgs),
    /// Check a displacement against the shipboard vibration limits.
    Comply(ComplyArgs),
    /// Convert between acceleration, displacement and velocity.
    Convert(ConvertArgs),
    /// Fit harvester gain and saturation to measured voltages.
    Calibrate(CalibrateArgs),
    /// List the built-in scenarios or print one as a scenario file.
    Scenarios(ScenariosArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in scenario (A or B).
    #[arg(long, value_parser = parse_builtin)]
    builtin: Option<BuiltinId>,
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    ConstantCurrent,
    ConstantPower,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    /// Charge curve CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the scenario's charging law.
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Reference curve CSV to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Also write the printed summary block to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Parameter path, e.g. profile.frequency_hz.
    #[arg(long)]
    axis: String,
    /// Comma-separated values, or start:step:stop.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Pp,
    Amp,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Pp => Convention::PeakToPeak,
            ConventionArg::Amp => Convention::Amplitude,
        }
    }
}

#[derive(Args)]
struct ComplyArgs {
    /// Hz
    #[arg(long)]
    freq: f64,
    /// Displacement, mm.
    #[arg(long)]
    disp: f64,
    #[arg(long, value_enum, default_value = "pp")]
    convention: ConventionArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Accel,
    Disp,
    Vel,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Magnitude {
    /// Acceleration with unit suffix: `0.52g` or `5.1ms2`.
    #[arg(long, value_parser = parse_accel)]
    accel: Option<f64>,
    /// Displacement, mm.
    #[arg(long)]
    disp: Option<f64>,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    magnitude: Magnitude,
    /// Hz
    #[arg(long)]
    freq: f64,
    #[arg(long, value_enum)]
    to: Target,
    /// Convention of the input and the printed value.
    #[arg(long, value_enum, default_value = "pp")]
    convention: ConventionArg,
}

#[derive(Args)]
struct CalibrateArgs {
    /// File of `[[observation]]` tables.
    #[arg(long)]
    observations: PathBuf,
    /// Starting `[harvester]` parameters; the built-in harvester if omitted.
    #[arg(long)]
    initial: Option<PathBuf>,
    /// Fitted `[harvester]` parameters.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenariosArgs {
    /// Print this built-in scenario as a scenario file.
    #[arg(long, value_parser = parse_builtin)]
    dump: Option<BuiltinId>,
}

fn parse_builtin(s: &str) -> Result<BuiltinId, String> {
    BuiltinId::parse(s).ok_or_else(|| format!("unknown built-in scenario `{s}` (expected A or B)"))
}

/// Acceleration in m/s² from a suffixed value.
fn parse_accel(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (number, scale) = if let Some(n) = s.strip_suffix("ms2").or_else(|| s.strip_suffix("m/s2")) {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix('g') {
        (n, harvest_core::kinematics::STANDARD_GRAVITY)
    } else {
        return Err(format!("`{s}` needs a unit suffix: g or ms2"));
    };
    let v: f64 = number.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v * scale)
}

/// A failure the user caused by the way the command was invoked.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Comply(a) => comply(a),
        Command::Convert(a) => convert(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Scenarios(a) => scenarios(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_source(source: &Source, model: Option<Model>) -> anyhow::Result<Scenario> {
    let s = match (&source.builtin, &source.scenario) {
        (Some(id), _) => builtin_scenario(*id),
        (None, Some(path)) => read_scenario(path).with_context(|| format!("reading {}", path.display()))?,
        (None, None) => unreachable!("clap requires one source"),
    };
    Ok(match model {
        Some(Model::ConstantCurrent) => s.with_constant_current(),
        Some(Model::ConstantPower) => s.with_constant_power(),
        None => s,
    })
}

/// Writes via a sibling temporary file so a failure never leaves a partial
/// file at `path`.
fn write_atomically(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let written = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(e).with_context(|| format!("writing {}", path.display()));
    }
    Ok(())
}

fn minutes(t: Option<f64>) -> String {
    match t {
        Some(t) => format!("{} min", sig4(t / 60.0)),
        None => "not reached".into(),
    }
}

fn simulate(a: SimulateArgs) -> anyhow::Result<ExitCode> {
    let s = load_source(&a.source, a.model)?;
    let curve = run(&s)?;
    let sum = &curve.summary;

    let mut block = String::new();
    let mut line = |k: &str, v: String| writeln!(block, "{k}: {v}").expect("string write");
    line("scenario", s.name.clone());
    line("model", s.power_stage.charging.name().to_string());
    line(
        "piezo_output",
        format!(
            "{} Vpp{}",
            sig4(sum.piezo_vpp),
            if sum.piezo_clipped { " (clipped)" } else { "" }
        ),
    );
    if s.load.supercap().is_some() {
        line("half_level", format!("{} V", sig4(sum.half_level)));
        line("t_half", minutes(sum.t_half_capacity));
        line("full_level", format!("{} V", sig4(sum.full_level)));
        line("t_full", minutes(sum.t_full));
    }
    line("final_v", format!("{} V", sig4(sum.final_v)));
    line("avg_current", format!("{} uA", sig4(sum.avg_current * 1e6)));
    line("output_power", format!("{} mW", sig4(sum.output_power * 1e3)));

    if let Some(path) = &a.reference {
        let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        let reference = read_curve_csv(std::io::BufReader::new(file), sum.half_level, sum.full_level)
            .with_context(|| format!("reading {}", path.display()))?;
        let m = compare(&curve, &reference)?;
        let secs = |d: Option<f64>| d.map_or("n/a".to_string(), |d| format!("{} s", sig4(d)));
        line("rmse", format!("{} V", sig4(m.rmse_v)));
        line("dt_half", secs(m.dt_half));
        line("dt_full", secs(m.dt_full));
        line("overlap_points", m.overlap_points.to_string());
    }

    // Outputs are produced only once everything above succeeded.
    if let Some(path) = &a.out {
        let mut csv = Vec::new();
        write_curve_csv(&curve, &mut csv)?;
        write_atomically(path, &csv)?;
    }
    if let Some(path) = &a.summary {
        write_atomically(path, block.as_bytes())?;
    }
    print!("{block}");
    Ok(ExitCode::SUCCESS)
}

fn parse_values(spec: &str) -> anyhow::Result<Vec<f64>> {
    let number = |s: &str| -> anyhow::Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| usage(format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(usage(format!("`{s}` is not finite")));
        }
        Ok(v)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[..] {
        [start, step, stop] => {
            let (start, step, stop) = (number(start)?, number(step)?, number(stop)?);
            if step <= 0.0 || stop < start {
                return Err(usage("range needs start <= stop and a positive step"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(usage("range has more than 100000 values"));
            }
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [_] => spec.split(',').filter(|p| !p.trim().is_empty()).map(number).collect(),
        _ => Err(usage(format!("`{spec}` is neither a list nor start:step:stop"))),
    }
}

fn run_sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let axis: ParamPath = a.axis.parse().map_err(|e: Error| usage(e.to_string()))?;
    let values = parse_values(&a.values)?;
    if values.is_empty() {
        return Err(usage("no sweep values given"));
    }
    let s = load_source(&a.source, a.model)?;
    let rows = sweep(&s, axis, &values)?;

    let secs = |t: Option<f64>| t.map_or(String::new(), |t| t.to_string());
    let mut csv = String::from("value,t_half_s,t_full_s,final_v_V,avg_current_A,output_power_W,piezo_vpp_V\n");
    let mut table = format!(
        "{axis:>24}  {:>10}  {:>10}  {:>8}  {:>10}  {:>10}\n",
        "t_half", "t_full", "final_v", "power", "piezo"
    );
    for r in &rows {
        let m = &r.summary;
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.value,
            secs(m.t_half_capacity),
            secs(m.t_full),
            m.final_v,
            m.avg_current,
            m.output_power,
            m.piezo_vpp
        )?;
        let min = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{} min", sig4(t / 60.0)));
        writeln!(
            table,
            "{:>24}  {:>10}  {:>10}  {:>8}  {:>10}  {:>10}",
            sig4(r.value),
            min(m.t_half_capacity),
            min(m.t_full),
            format!("{} V", sig4(m.final_v)),
            format!("{} mW", sig4(m.output_power * 1e3)),
            format!("{} Vpp", sig4(m.piezo_vpp)),
        )?;
    }
    if let Some(path) = &a.out {
        write_atomically(path, csv.as_bytes())?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn comply(a: ComplyArgs) -> anyhow::Result<ExitCode> {
    let f = Frequency::new(a.freq).map_err(|e| usage(e.to_string()))?;
    let d = Displacement::from_mm(a.disp, a.convention.into()).map_err(|e| usage(e.to_string()))?;
    let v = mil_std_check(f, d);
    println!("frequency: {} Hz", sig4(f.hertz()));
    println!("band: {}", v.band.label());
    match v.limit_single_amplitude {
        Some(limit) => println!("limit: {} mm amp", sig4(limit * 1e3)),
        None => println!("limit: none"),
    }
    println!("displacement: {} mm amp", sig4(v.single_amplitude * 1e3));
    let (verdict, code) = if v.band == ComplianceBand::OutOfRange {
        ("out of range", ExitCode::from(EXIT_OUT_OF_RANGE))
    } else if v.compliant {
        ("compliant", ExitCode::SUCCESS)
    } else {
        ("non-compliant", ExitCode::from(EXIT_NON_COMPLIANT))
    };
    println!("verdict: {verdict}");
    Ok(code)
}

fn convert(a: ConvertArgs) -> anyhow::Result<ExitCode> {
    let conv: Convention = a.convention.into();
    let f = Frequency::new(a.freq).map_err(|e| usage(e.to_string()))?;
    let accel = match (a.magnitude.accel, a.magnitude.disp) {
        (Some(ms2), None) => Acceleration::new(ms2, conv).map_err(|e| usage(e.to_string()))?,
        (None, Some(mm)) => {
            let d = Displacement::from_mm(mm, conv).map_err(|e| usage(e.to_string()))?;
            acceleration_from_displacement(d, f)
        }
        _ => bail!(usage("give exactly one of --accel, --disp")),
    };
    let suffix = conv.suffix();
    match a.to {
        Target::Accel => {
            let a = accel.to_convention(conv);
            println!("{} m/s^2 {suffix} ({} g {suffix})", sig4(a.value()), sig4(a.in_g()));
        }
        Target::Disp => {
            let d = displacement_from_acceleration(accel, f).to_convention(conv);
            println!("{} mm {suffix}", sig4(d.mm()));
        }
        Target::Vel => {
            let v = velocity_from_acceleration(accel, f).to_convention(conv);
            println!("{} m/s {suffix}", sig4(v.value()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_calibrate(a: CalibrateArgs) -> anyhow::Result<ExitCode> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let observations =
        parse_observations(&read(&a.observations)?).with_context(|| format!("reading {}", a.observations.display()))?;
    if observations.is_empty() {
        return Err(usage(format!(
            "{} holds no [[observation]] tables",
            a.observations.display()
        )));
    }
    let initial = match &a.initial {
        Some(p) => parse_harvester_params(&read(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => HarvesterParams::ppa2011_tuned(),
    };
    let report = match calibrate(&initial, &observations) {
        Ok(r) => r,
        Err(Error::Calibration { best_residual, .. }) => {
            bail!(
                "calibration did not converge; best max relative residual {}%",
                sig4(best_residual * 100.0)
            )
        }
        Err(e) => return Err(e.into()),
    };

    let p = &report.params;
    println!("mode: {}", report.mode);
    println!("gain_v_per_m: {} V/m", sig4(p.gain_v));
    println!("v_sat: {} V", sig4(p.v_sat));
    println!("iterations: {}", report.iterations);
    for (i, (o, r)) in observations.iter().zip(&report.residuals).enumerate() {
        let model = open_circuit_vpp(p, &o.profile)?.vpp;
        println!(
            "observation {}: {} Hz, {} mm pp, measured {} Vpp, model {} Vpp, residual {}%",
            i + 1,
            sig4(o.profile.frequency.hertz()),
            sig4(o.profile.displacement().to_convention(Convention::PeakToPeak).mm()),
            sig4(o.measured_vpp),
            sig4(model),
            sig4(r * 100.0)
        );
    }
    println!("max_residual: {}%", sig4(report.max_relative_residual * 100.0));
    if let Some(path) = &a.out {
        write_atomically(path, harvester_params_to_toml(p).as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn scenarios(a: ScenariosArgs) -> anyhow::Result<ExitCode> {
    match a.dump {
        Some(id) => print!("{}", scenario_to_toml(&builtin_scenario(id))),
        None => {
            for id in BuiltinId::ALL {
                let s = builtin_scenario(id);
                let r = id.reference();
                println!(
                    "{}: {} Hz, {} mm pp base displacement, {} kohm stable load, {} F supercapacitor",
                    id.name(),
                    sig4(r.frequency_hz),
                    sig4(r.displacement_pp_mm),
                    sig4(r.stable_load_ohms / 1e3),
                    s.load.supercap().map_or(0.0, |c| c.capacitance),
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

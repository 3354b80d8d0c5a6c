use std::fs;
use std::path::{Path, PathBuf};

use branchquant::asymptotics::{self, spread};
use branchquant::dump::{Dump, NetworkDump, QuantizerDump};
use branchquant::landscape::{holder_estimate, sink_samples};
use branchquant::measures::MeasureDocument;
use branchquant::render::{loglog_svg, network_svg, quantizer_svg};
use branchquant::{
    basin_stats, delone_report, density_compare, energy_equidistribution, inner_outer_ball_check, quantizer_landscapes,
    scaling_fit, solve_bot, solve_quantization, sweep, AxisBox, DiscreteMeasure, Quantizer, ScalingReport,
};
use serde::Serialize;

use crate::config::{hash_hex, RunConfig};
use crate::error::{CliError, CliResult};

/// Writes `contents` to `dir/name`, creating `dir`.
fn write(dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(CliError::io(&path))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(dir, name, text.as_bytes())
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write(dir, name, &bytes)
}

fn read_measure(path: &Path) -> CliResult<DiscreteMeasure> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let doc: MeasureDocument =
        serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(DiscreteMeasure::from_document(&doc)?)
}

/// Single-decimal rendering of a cost: shortest round-trip form, always with a point.
pub fn format_cost(c: f64) -> String {
    format!("{c:?}")
}

pub fn solve_bot_cmd(config: &RunConfig, sources: &Path, sinks: &Path, out: &Path) -> CliResult<String> {
    let mu = read_measure(sources)?;
    let nu = read_measure(sinks)?;
    let cfg = config.seeded();
    let net = solve_bot(&mu, &nu, cfg.alpha, &cfg.solver.solver)?;
    let salt = serde_json::to_string(&(cfg.alpha, &cfg.solver.solver, mu.to_document(), nu.to_document())).expect("serializable");
    let dir = out.join(hash_hex(&[b"solve-bot", salt.as_bytes()]));
    write_json(&dir, "network.json", &NetworkDump::from_network(&net))?;
    write(&dir, "network.svg", network_svg(&net).as_bytes())?;
    Ok(format!("{}\n", format_cost(net.cost())))
}

#[derive(Serialize)]
struct BasinCsvRow {
    #[serde(rename = "N")]
    n: usize,
    site: usize,
    mass: f64,
    diameter: f64,
    mass_density: f64,
    cost: f64,
    scaled_cost: f64,
}

fn basin_rows(n: usize, q: &Quantizer) -> Vec<BasinCsvRow> {
    basin_stats(q)
        .into_iter()
        .map(|b| BasinCsvRow {
            n,
            site: b.site,
            mass: b.mass,
            diameter: b.diameter,
            mass_density: b.mass_density,
            cost: b.cost,
            scaled_cost: b.scaled_cost,
        })
        .collect()
}

fn write_quantizer(dir: &Path, n: usize, q: &Quantizer, svg: bool) -> CliResult<()> {
    write_json(dir, &format!("quantizer_N{n}.json"), &QuantizerDump::from_quantizer(q))?;
    if svg {
        write(dir, &format!("quantizer_N{n}.svg"), quantizer_svg(q).as_bytes())?;
    }
    Ok(())
}

pub fn quantize_cmd(config: &RunConfig, n: Option<usize>, out: &Path) -> CliResult<String> {
    config.validate()?;
    let cfg = config.seeded();
    let n = n.unwrap_or(*cfg.n_list.last().expect("validated"));
    let nu = cfg.measure.discretize()?;
    let q = solve_quantization(&nu, n, cfg.alpha, &cfg.solver)?;
    let dir = out.join(cfg.run_id(&format!("quantize:{n}")));
    write_quantizer(&dir, n, &q, true)?;
    write_csv(&dir, &format!("basins_N{n}.csv"), &basin_rows(n, &q))?;
    Ok(format!("{}\n", format_cost(q.total_cost())))
}

#[derive(Serialize)]
struct ScalingRow {
    #[serde(rename = "N")]
    n: usize,
    cost: f64,
    log_n: f64,
    log_cost: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    alpha: f64,
    dimension: usize,
    planted: bool,
    scaling: &'a ScalingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    delone_spreads: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    holder_spread: Option<f64>,
}

fn write_scaling(dir: &Path, report: &ScalingReport, plots: bool) -> CliResult<()> {
    let rows: Vec<ScalingRow> = report
        .points
        .iter()
        .map(|&(n, c)| ScalingRow { n, cost: c, log_n: (n as f64).ln(), log_cost: c.ln() })
        .collect();
    write_csv(dir, "scaling.csv", &rows)?;
    if plots {
        write(dir, "scaling.svg", loglog_svg(report).as_bytes())?;
    }
    Ok(())
}

fn headline(report: &ScalingReport) -> String {
    format!("slope {}\nc_estimate {}\n", report.fitted_slope, report.c_estimate)
}

#[derive(Serialize)]
struct EnergyRow {
    #[serde(rename = "N")]
    n: usize,
    region: &'static str,
    energy: f64,
}

#[derive(Serialize)]
struct HolderRow {
    #[serde(rename = "N")]
    n: usize,
    beta: f64,
    c_emp: f64,
    pair_count: usize,
}

#[derive(Serialize)]
struct LandscapeRow {
    sink: usize,
    x: f64,
    y: f64,
    z_coord: f64,
    mass: f64,
    site: usize,
    z: f64,
}

#[derive(Serialize)]
struct BallCsvRow {
    #[serde(rename = "N")]
    n: usize,
    site: usize,
    r_in_scaled: f64,
    r_out_scaled: f64,
    interior: bool,
}

/// Runs the sweep and every enabled report. With `planted = Some(slope)` the
/// solver is skipped and costs `N^slope` are injected.
pub fn sweep_cmd(config: &RunConfig, planted: Option<f64>, out: &Path) -> CliResult<String> {
    config.validate()?;
    let cfg = config.seeded();
    let toggles = &cfg.reports;
    let run_id = cfg.run_id(if planted.is_some() { "sweep:planted" } else { "sweep" });
    let dir = out.join(&run_id);
    if let Some(slope) = planted {
        if cfg.n_list.len() < 3 {
            return Err(branchquant::Error::InsufficientData(cfg.n_list.len()).into());
        }
        let pts: Vec<(usize, f64)> = cfg.n_list.iter().map(|&n| (n, (n as f64).powf(slope))).collect();
        let report = scaling_fit(&pts, cfg.alpha, cfg.dimension)?;
        write_scaling(&dir, &report, toggles.plots)?;
        let summary =
            Summary { run_id: &run_id, alpha: cfg.alpha, dimension: cfg.dimension, planted: true, scaling: &report, delone_spreads: None, holder_spread: None };
        write_json(&dir, "summary.json", &summary)?;
        return Ok(headline(&report));
    }
    let nu = cfg.measure.discretize()?;
    let qs = sweep(&nu, cfg.alpha, &cfg.n_list, &cfg.solver)?;
    for (&n, q) in cfg.n_list.iter().zip(&qs) {
        write_quantizer(&dir, n, q, toggles.plots)?;
    }
    let pts: Vec<(usize, f64)> = cfg.n_list.iter().zip(&qs).map(|(&n, q)| (n, q.total_cost())).collect();
    let report = if pts.len() >= 3 { Some(scaling_fit(&pts, cfg.alpha, cfg.dimension)?) } else { None };
    let mut delone_spreads = None;
    let mut holder_spread = None;
    if toggles.delone {
        let d = delone_report(&qs, &nu);
        write_csv(&dir, "delone.csv", &d.rows)?;
        delone_spreads = Some(d.spreads());
    }
    if toggles.density {
        let d = density_compare(&qs, Some(&cfg.measure), cfg.alpha)?;
        write_csv(&dir, "density.csv", &d.rows)?;
    }
    if toggles.basins {
        let rows: Vec<BasinCsvRow> = cfg.n_list.iter().zip(&qs).flat_map(|(&n, q)| basin_rows(n, q)).collect();
        write_csv(&dir, "basins.csv", &rows)?;
    }
    if toggles.balls {
        let rows: Vec<BallCsvRow> = cfg
            .n_list
            .iter()
            .zip(&qs)
            .flat_map(|(&n, q)| {
                inner_outer_ball_check(q).into_iter().map(move |b| BallCsvRow {
                    n,
                    site: b.site,
                    r_in_scaled: b.r_in_scaled,
                    r_out_scaled: b.r_out_scaled,
                    interior: b.interior,
                })
            })
            .collect();
        write_csv(&dir, "balls.csv", &rows)?;
    }
    if toggles.energy || toggles.landscape {
        let region = &cfg.measure.region;
        let mid = (region.lo[0] + region.hi[0]) / 2.0;
        let mut left = region.clone();
        left.hi[0] = mid;
        let mut right = region.clone();
        right.lo[0] = mid;
        let regions: [(&'static str, AxisBox); 3] = [("whole", region.clone()), ("left", left), ("right", right)];
        let boxes: Vec<AxisBox> = regions.iter().map(|r| r.1.clone()).collect();
        let beta = asymptotics::beta(cfg.alpha, cfg.dimension);
        let mut energy = Vec::new();
        let mut holder = Vec::new();
        for (&n, q) in cfg.n_list.iter().zip(&qs) {
            let fields = quantizer_landscapes(q)?;
            for ((name, _), e) in regions.iter().zip(energy_equidistribution(q, &fields, &boxes)) {
                energy.push(EnergyRow { n, region: name, energy: e });
            }
            if toggles.landscape {
                let h = holder_estimate(&sink_samples(&fields), beta, cfg.seed)?;
                holder.push(HolderRow { n, beta, c_emp: h.c_emp, pair_count: h.pair_count });
                let mut rows: Vec<LandscapeRow> = fields
                    .iter()
                    .enumerate()
                    .flat_map(|(i, f)| {
                        f.sinks().iter().map(move |s| LandscapeRow {
                            sink: s.label.unwrap_or(usize::MAX),
                            x: s.x.0[0],
                            y: s.x.0[1],
                            z_coord: s.x.0[2],
                            mass: s.mass,
                            site: i,
                            z: s.z,
                        })
                    })
                    .collect();
                rows.sort_by_key(|r| r.sink);
                write_csv(&dir, &format!("landscape_N{n}.csv"), &rows)?;
            }
        }
        if toggles.energy {
            write_csv(&dir, "energy.csv", &energy)?;
        }
        if toggles.landscape {
            holder_spread = Some(spread(holder.iter().map(|h| h.c_emp)));
            write_csv(&dir, "holder.csv", &holder)?;
        }
    }
    match report {
        Some(report) if toggles.scaling => {
            write_scaling(&dir, &report, toggles.plots)?;
            let summary = Summary {
                run_id: &run_id,
                alpha: cfg.alpha,
                dimension: cfg.dimension,
                planted: false,
                scaling: &report,
                delone_spreads,
                holder_spread,
            };
            write_json(&dir, "summary.json", &summary)?;
            Ok(headline(&report))
        }
        Some(report) => Ok(headline(&report)),
        None => Ok(pts.iter().map(|(n, c)| format!("N {n} cost {}\n", format_cost(*c))).collect()),
    }
}

/// Re-renders the SVG of a network or quantizer dump.
pub fn render_cmd(dump: &Path, output: Option<&Path>) -> CliResult<String> {
    let (kind, svg) = match load_dump(dump)? {
        Dump::Network(d) => ("network", network_svg(&d.to_network()?)),
        Dump::Quantizer(d) => ("quantizer", quantizer_svg(&d.to_quantizer()?)),
    };
    let target = output.map(Path::to_path_buf).unwrap_or_else(|| dump.with_extension("svg"));
    fs::write(&target, svg).map_err(CliError::io(&target))?;
    Ok(format!("rendered {kind} {}\n", target.display()))
}

fn load_dump(path: &Path) -> CliResult<Dump> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    Dump::parse(&text).map_err(|message| CliError::Parse { path: path.to_path_buf(), message })
}

/// Parses each dump and checks it against the structure it describes.
pub fn validate_cmd(dumps: &[PathBuf]) -> CliResult<String> {
    let mut out = String::new();
    for path in dumps {
        let kind = match load_dump(path)? {
            Dump::Network(d) => d.to_network().map(|_| "network"),
            Dump::Quantizer(d) => d.to_quantizer().map(|_| "quantizer"),
        }
        .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
        out.push_str(&format!("ok {kind} {}\n", path.display()));
    }
    Ok(out)
}

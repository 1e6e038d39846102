//! Scenario execution. Every scenario returns its artifacts in memory; the
//! runner writes them once everything has succeeded.

use dvrf_core::analytics::{
    equivalence_report, path_to_chord, summarize_eta_rows, update_energy, EquivalenceCheck, EtaSweepRow,
};
use dvrf_core::editor::{edit_dvrf, flowedit_baseline, EditConfig, EditRecord, FlowEditConfig};
use dvrf_core::integrate::{ddib_translate, reconstruction_error, Direction, ReconMode, TimeGrid};
use dvrf_core::latent::distance;
use dvrf_core::schedules::{T_MAX, T_MIN};
use dvrf_core::tasks::{sample_prompt, TranslationTask};
use dvrf_core::{CondGmmField, Latent, Prompt, Schedule, VelocityModel};
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::error::{LabError, LabResult};
use crate::table::{coord_columns, fmt_all, fmt_f64, Table};

/// A CSV table, optionally plotted.
pub struct Artifact {
    pub name: String,
    pub table: Table,
    pub plots: Vec<PlotSpec>,
}

pub struct PlotSpec {
    pub name: String,
    pub x: String,
    pub y: String,
    pub group: Option<String>,
}

fn plot(name: &str, x: &str, y: &str, group: Option<&str>) -> PlotSpec {
    PlotSpec {
        name: name.into(),
        x: x.into(),
        y: y.into(),
        group: group.map(Into::into),
    }
}

/// Everything a finished scenario produced.
pub struct Output {
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

pub fn execute(cfg: &ExperimentConfig) -> LabResult<Output> {
    let built = cfg.field.build()?;
    match &cfg.scenario {
        Scenario::Edit(p) => edit(&built, p, cfg.seed),
        Scenario::Flowedit(p) => flowedit(&built, p, cfg.seed),
        Scenario::Ddib(p) => ddib(&built, p, cfg.seed),
        Scenario::ReconError(p) => recon(&built, p, cfg.seed),
        Scenario::EtaSweep(p) => eta_sweep(&built, p, cfg.seed),
        Scenario::Equivalence(p) => equivalence(&built, p, cfg.seed),
        Scenario::SchedulerAblation(p) => ablation(&built, p, cfg.seed),
        Scenario::ShiftAblation(p) => ablation(&built, p, cfg.seed),
        Scenario::OptimizerAblation(p) => ablation(&built, p, cfg.seed),
    }
}

fn source_latent(field: &CondGmmField, prompt: Prompt, spec: &SourceSpec, seed: u64) -> LabResult<Latent> {
    match spec {
        SourceSpec::Sample => Ok(sample_prompt(field, prompt, seed, 1)?.remove(0)),
        SourceSpec::Point(p) => {
            if p.len() != field.dim() {
                return Err(LabError::Schema(format!(
                    "field `source.point` has {} coordinates, the field has {}",
                    p.len(),
                    field.dim()
                )));
            }
            Ok(Latent::from(p.as_slice()))
        }
    }
}

fn translation(built: &BuiltField, scenario: &str) -> LabResult<TranslationTask> {
    built
        .translation
        .clone()
        .ok_or_else(|| LabError::Schema(format!("field `field.kind`: scenario `{scenario}` needs a translation field")))
}

fn resolve_seeds(seeds: &Seeds, run_seed: u64) -> LabResult<Vec<u64>> {
    let v = seeds.resolve(run_seed);
    if v.is_empty() {
        return Err(LabError::Schema("field `params.seeds` must name at least one seed".into()));
    }
    Ok(v)
}

fn s_r_or_nan(rec: &EditRecord) -> f64 {
    path_to_chord(&rec.iterates).map(|r| r.s_r).unwrap_or(f64::NAN)
}

fn record_table(rec: &EditRecord) -> Table {
    let dim = rec.iterates[0].dim();
    let mut header: Vec<String> = ["step", "t", "lr", "grad_norm", "vdiff_sq"].iter().map(|s| s.to_string()).collect();
    header.extend(coord_columns("x", dim));
    let mut t = Table::new(header);
    for (k, s) in rec.steps.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(s.t), fmt_f64(s.lr), fmt_f64(s.grad_norm), fmt_f64(s.vdiff_sq)];
        row.extend(fmt_all(&rec.iterates[k + 1]));
        t.push(row);
    }
    t
}

fn latent_table(x: &[f64]) -> Table {
    let mut t = Table::new(coord_columns("x", x.len()));
    t.push(fmt_all(x));
    t
}

fn record_output(built: &BuiltField, name: &str, rec: EditRecord, x0: &Latent, p_src: Prompt, p_tgt: Prompt) -> Output {
    let fin = rec.final_latent();
    let mut summary = json!({
        "S_R": s_r_or_nan(&rec),
        "update_energy": update_energy(&rec),
        "distance_to_source": distance(fin, x0),
        "velocity_evals": rec.velocity_evals,
    });
    if let Some(task) = &built.translation {
        if p_src == TranslationTask::SOURCE && p_tgt == TranslationTask::TARGET {
            summary["distance_to_ideal"] = json!(distance(fin, &task.ideal_target(x0)));
        }
    }
    Output {
        artifacts: vec![
            Artifact {
                name: format!("{name}.csv"),
                table: record_table(&rec),
                plots: vec![plot(&format!("{name}_grad_norm.svg"), "step", "grad_norm", None)],
            },
            Artifact {
                name: "final.csv".into(),
                table: latent_table(fin),
                plots: vec![],
            },
        ],
        summary,
    }
}

fn edit(built: &BuiltField, p: &EditParams, seed: u64) -> LabResult<Output> {
    let x0 = source_latent(&built.field, p.p_src, &p.source, seed)?;
    let cfg = EditConfig { seed, ..p.edit.clone() };
    let rec = edit_dvrf(&built.field, &cfg, &x0, p.p_src, p.p_tgt)?;
    Ok(record_output(built, "edit", rec, &x0, p.p_src, p.p_tgt))
}

fn flowedit(built: &BuiltField, p: &FlowEditParams, seed: u64) -> LabResult<Output> {
    if p.n_steps == 0 {
        return Err(LabError::Schema("field `params.n_steps` must be >= 1".into()));
    }
    let x0 = source_latent(&built.field, p.p_src, &p.source, seed)?;
    let grid = if p.n_steps == 1 {
        TimeGrid::single(p.t_hi)?
    } else {
        TimeGrid::uniform(p.n_steps - 1, p.t_lo, p.t_hi, Direction::Reverse)?
    };
    let fe = FlowEditConfig {
        grid,
        batch: p.batch,
        w_src: p.w_src,
        w_tgt: p.w_tgt,
        seed,
    };
    let rec = flowedit_baseline(&built.field, &fe, &x0, p.p_src, p.p_tgt)?;
    Ok(record_output(built, "flowedit", rec, &x0, p.p_src, p.p_tgt))
}

fn ddib(built: &BuiltField, p: &DdibParams, seed: u64) -> LabResult<Output> {
    if p.samples == 0 {
        return Err(LabError::Schema("field `params.samples` must be >= 1".into()));
    }
    let grid = TimeGrid::uniform(p.n_steps, T_MIN, T_MAX, Direction::Forward)?;
    let xs = sample_prompt(&built.field, p.p_src, seed, p.samples)?;
    let d = built.field.dim();
    let results: Vec<(Latent, Latent)> = xs
        .par_iter()
        .map(|x| {
            let out = ddib_translate(&built.field, x, p.p_src, p.p_tgt, &grid, (p.w_src, p.w_tgt))?;
            let back = ddib_translate(&built.field, &out, p.p_tgt, p.p_src, &grid, (p.w_tgt, p.w_src))?;
            Ok((out, back))
        })
        .collect::<LabResult<_>>()?;
    let mut header = vec!["sample".to_string()];
    header.extend(coord_columns("in", d));
    header.extend(coord_columns("out", d));
    header.extend(coord_columns("back", d));
    header.push("cycle_rel_error".into());
    let mut t = Table::new(header);
    let mut mean_cycle = 0.0;
    for (i, (x, (out, back))) in xs.iter().zip(&results).enumerate() {
        let rel = distance(back, x) / x.norm().max(1e-12);
        mean_cycle += rel / xs.len() as f64;
        let mut row = vec![i.to_string()];
        row.extend(fmt_all(x));
        row.extend(fmt_all(out));
        row.extend(fmt_all(back));
        row.push(fmt_f64(rel));
        t.push(row);
    }
    Ok(Output {
        artifacts: vec![Artifact {
            name: "ddib.csv".into(),
            table: t,
            plots: vec![],
        }],
        summary: json!({ "mean_cycle_rel_error": mean_cycle }),
    })
}

fn recon(built: &BuiltField, p: &ReconParams, seed: u64) -> LabResult<Output> {
    if p.samples == 0 || p.modes.is_empty() || p.n_steps.is_empty() {
        return Err(LabError::Schema("fields `params.samples`, `params.modes`, `params.n_steps` must be non-empty".into()));
    }
    let xs = sample_prompt(&built.field, p.prompt, seed, p.samples)?;
    let mut artifacts = Vec::new();
    let mut summary = serde_json::Map::new();
    for &mode in &p.modes {
        let field = match (mode, built.field.schedule()) {
            (ReconMode::Ddim, Schedule::RectifiedFlow) => built.field.with_schedule(Schedule::vp_default()),
            _ => built.field.clone(),
        };
        let label = match mode {
            ReconMode::RfEuler => "rf_euler",
            ReconMode::Ddim => "ddim",
        };
        for &n in &p.n_steps {
            let grid = TimeGrid::uniform(n, T_MIN, T_MAX, Direction::Forward)?;
            let curves: Vec<Vec<(f64, f64)>> = xs
                .par_iter()
                .map(|x| reconstruction_error(&field, x, p.prompt, &grid, mode, p.w))
                .collect::<Result<_, _>>()?;
            let mut t = Table::new(["step", "t", "error"]);
            let mut total = 0.0;
            for (i, &(ti, _)) in curves[0].iter().enumerate() {
                let e = curves.iter().map(|c| c[i].1).sum::<f64>() / curves.len() as f64;
                total += e;
                t.push(vec![i.to_string(), fmt_f64(ti), fmt_f64(e)]);
            }
            summary.insert(format!("{label}_n{n}_mean_error"), json!(total / curves[0].len() as f64));
            let name = format!("recon_{label}_n{n}");
            artifacts.push(Artifact {
                name: format!("{name}.csv"),
                table: t,
                plots: vec![plot(&format!("{name}.svg"), "t", "error", None)],
            });
        }
    }
    Ok(Output {
        artifacts,
        summary: serde_json::Value::Object(summary),
    })
}

fn eta_sweep(built: &BuiltField, p: &EtaSweepParams, seed: u64) -> LabResult<Output> {
    let task = translation(built, "eta_sweep")?;
    if p.etas.is_empty() {
        return Err(LabError::Schema("field `params.etas` must be non-empty".into()));
    }
    let seeds = resolve_seeds(&p.seeds, seed)?;
    let cells: Vec<(f64, u64)> = p.etas.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect();
    let rows: Vec<EtaSweepRow> = cells
        .par_iter()
        .map(|&(eta, s)| dvrf_core::analytics::eta_sweep_cell(&task, &p.edit, eta, s))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(["eta", "seed", "S_R", "update_energy"]);
    for r in &rows {
        t.push(vec![fmt_f64(r.eta), r.seed.to_string(), fmt_f64(r.s_r), fmt_f64(r.update_energy)]);
    }
    let means = summarize_eta_rows(&rows);
    let mut m = Table::new(["eta", "mean_S_R", "mean_update_energy"]);
    for r in &means {
        m.push(vec![fmt_f64(r.eta), fmt_f64(r.mean_s_r), fmt_f64(r.mean_update_energy)]);
    }
    let summary = json!(means
        .iter()
        .map(|r| json!({"eta": r.eta, "mean_S_R": r.mean_s_r, "mean_update_energy": r.mean_update_energy}))
        .collect::<Vec<_>>());
    Ok(Output {
        artifacts: vec![
            Artifact {
                name: "etasweep.csv".into(),
                table: t,
                plots: vec![plot("etasweep_by_seed.svg", "seed", "S_R", Some("eta"))],
            },
            Artifact {
                name: "etasweep_mean.csv".into(),
                table: m,
                plots: vec![
                    plot("etasweep_S_R.svg", "eta", "mean_S_R", None),
                    plot("etasweep_update_energy.svg", "eta", "mean_update_energy", None),
                ],
            },
        ],
        summary,
    })
}

fn equivalence(built: &BuiltField, p: &EquivalenceParams, seed: u64) -> LabResult<Output> {
    if p.n_steps < 2 {
        return Err(LabError::Schema("field `params.n_steps` must be >= 2".into()));
    }
    let f = &built.field;
    let dds = equivalence_report(
        f,
        p.p_src,
        p.p_tgt,
        &EquivalenceCheck::DdsDvrf {
            probes: p.probes,
            seed,
            w_src: p.w_src,
            w_tgt: p.w_tgt,
        },
    )?;
    let grid = TimeGrid::uniform(p.n_steps - 1, T_MIN, T_MAX, Direction::Reverse)?;
    let seeds = resolve_seeds(&p.seeds, seed)?;
    let fe_rows: Vec<(u64, f64, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let flowedit = FlowEditConfig {
                grid: grid.clone(),
                batch: p.batch,
                w_src: p.w_src,
                w_tgt: p.w_tgt,
                seed: s,
            };
            let x0_src = sample_prompt(f, p.p_src, s, 1)?.remove(0);
            let run = |lr_scale| {
                let check = EquivalenceCheck::FloweditDvrf {
                    flowedit: flowedit.clone(),
                    x0_src: x0_src.clone(),
                    lr_scale,
                };
                equivalence_report(f, p.p_src, p.p_tgt, &check).map(|r| r.max_deviation)
            };
            Ok((s, run(1.0)?, run(p.control_lr_scale)?))
        })
        .collect::<LabResult<_>>()?;
    let mut t = Table::new(["check", "seed", "max_deviation"]);
    t.push(vec!["dds_dvrf".into(), seed.to_string(), fmt_f64(dds.max_deviation)]);
    for &(s, dev, _) in &fe_rows {
        t.push(vec!["flowedit_dvrf".into(), s.to_string(), fmt_f64(dev)]);
    }
    for &(s, _, ctl) in &fe_rows {
        t.push(vec!["flowedit_control".into(), s.to_string(), fmt_f64(ctl)]);
    }
    let fe_max = fe_rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let ctl_min = fe_rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Ok(Output {
        artifacts: vec![Artifact {
            name: "equivalence.csv".into(),
            table: t,
            plots: vec![],
        }],
        summary: json!({
            "dds_dvrf_max_deviation": dds.max_deviation,
            "flowedit_dvrf_max_deviation": fe_max,
            "flowedit_control_min_deviation": ctl_min,
        }),
    })
}

fn ablation<V: AblationVariant + Sync>(built: &BuiltField, p: &AblationParams<V>, seed: u64) -> LabResult<Output> {
    let task = translation(built, "ablation")?;
    if p.variants.is_empty() {
        return Err(LabError::Schema("field `params.variants` must be non-empty".into()));
    }
    let seeds = resolve_seeds(&p.seeds, seed)?;
    let cells: Vec<(usize, u64)> = (0..p.variants.len()).flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let rows: Vec<[f64; 4]> = cells
        .par_iter()
        .map(|&(v, s)| {
            let cfg = EditConfig { seed: s, ..p.variants[v].apply(&p.edit) };
            let x0 = task.source_sample(s);
            let rec = edit_dvrf(&task.field, &cfg, &x0, TranslationTask::SOURCE, TranslationTask::TARGET)?;
            let fin = rec.final_latent();
            Ok([distance(fin, &x0), distance(fin, &task.ideal_target(&x0)), s_r_or_nan(&rec), update_energy(&rec)])
        })
        .collect::<LabResult<_>>()?;
    let cols = ["dist_src", "dist_ideal", "S_R", "update_energy"];
    let mut t = Table::new(["variant", "seed"].into_iter().chain(cols));
    let mut m = Table::new(std::iter::once("variant".to_string()).chain(cols.iter().map(|c| format!("mean_{c}"))));
    let mut summary = Vec::new();
    for (v, variant) in p.variants.iter().enumerate() {
        let label = variant.label();
        let mut mean = [0.0; 4];
        for (&(cv, s), r) in cells.iter().zip(&rows) {
            if cv != v {
                continue;
            }
            let mut row = vec![label.clone(), s.to_string()];
            row.extend(fmt_all(r));
            t.push(row);
            for i in 0..4 {
                mean[i] += r[i] / seeds.len() as f64;
            }
        }
        let mut row = vec![label.clone()];
        row.extend(fmt_all(&mean));
        m.push(row);
        summary.push(json!({
            "variant": label,
            "mean_dist_src": mean[0],
            "mean_dist_ideal": mean[1],
            "mean_S_R": mean[2],
            "mean_update_energy": mean[3],
        }));
    }
    Ok(Output {
        artifacts: vec![
            Artifact {
                name: "ablation.csv".into(),
                table: t,
                plots: vec![],
            },
            Artifact {
                name: "ablation_mean.csv".into(),
                table: m,
                plots: vec![],
            },
        ],
        summary: json!(summary),
    })
}

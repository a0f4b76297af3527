//! The five experiments. Each is a pure function of the configuration: seeds
//! run in parallel and results are merged in seed order, so reruns write
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use instadep::env::{run_episode_from, run_episodes, MeanStd, RandomPolicy};
use instadep::envs::FamilyTag;
use instadep::planning::{planner_policy_maps, train_loop, PolicyMap, TabularPolicy, TrainResult};
use instadep::theory::theory_report;
use instadep::{Dataset, Environment, Grid, ModelMode, Provenance, RngStream};

use crate::config::{ExperimentConfig, ExperimentKind, SweepAxis};

const MODES: [ModelMode; 2] = [ModelMode::Instantaneous, ModelMode::Lagged];

/// Run the configured experiment and return the files written.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    match cfg.experiment {
        ExperimentKind::VisualRegion => run_visual_region(cfg),
        ExperimentKind::RewardFamilies => run_reward_families(cfg),
        ExperimentKind::ModelCompare => run_model_compare(cfg),
        ExperimentKind::Sweep => run_sweep(cfg),
        ExperimentKind::TheoryReport => run_theory_report(cfg),
    }
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn seed_stream(seed: u64) -> RngStream {
    RngStream::new(seed).split("train")
}

/// `n` random-policy transitions, the fixed dataset likelihoods are scored on.
pub fn likelihood_dataset(env: &dyn Environment, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = RngStream::new(seed).split("likelihood-data");
    let policy = RandomPolicy { n_actions: env.n_actions() };
    let mut ds = Dataset::with_capacity(Provenance::Environment, n);
    let mut err = None;
    while ds.len() < n && err.is_none() {
        let start = env.reset(&mut rng);
        run_episode_from(env, &policy, start, 1.0, &mut rng, |rec| {
            if ds.len() < n && err.is_none() {
                err = ds.push(rec.clone()).err();
            }
        });
    }
    match err {
        Some(e) => Err(e.into()),
        None => Ok(ds),
    }
}

/// Train both model modes on the same streams.
fn train_pair(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    seed: u64,
    eval: Option<&Dataset>,
) -> Result<[TrainResult; 2]> {
    let spec = cfg.model.spec()?;
    let q_grid = cfg.q_grid.as_ref().expect("validated").build()?;
    let run = |mode| train_loop(env, &cfg.train, &spec, mode, &q_grid, eval, &seed_stream(seed));
    Ok([run(MODES[0])?, run(MODES[1])?])
}

fn final_return(r: &TrainResult) -> f64 {
    r.curve.last().expect("at least one epoch").mean_return
}

// ---------------------------------------------------------------------------
// visual_region

#[derive(Debug, Clone, Serialize)]
pub struct RegionSeed {
    pub seed: u64,
    pub true_map: PolicyMap,
    pub lagged_map: PolicyMap,
    /// `(i, j)` cells where the two maps disagree.
    pub differences: Vec<(usize, usize)>,
    pub clamped: usize,
    /// Per mode: return, final distance to the origin and episode length.
    pub metrics: [[MeanStd; 3]; 2],
}

fn tabular(map: &PolicyMap, grid: &Grid) -> instadep::Result<TabularPolicy> {
    TabularPolicy::new(map.cells.iter().flatten().copied().collect(), grid.clone())
}

pub fn visual_region_seeds(cfg: &ExperimentConfig) -> Result<Vec<RegionSeed>> {
    let env_cfg = cfg.env.as_ref().expect("validated");
    let region = cfg.region.clone().unwrap_or_default();
    let window = region.window.build()?;
    let env = env_cfg.build(None)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let maps = planner_policy_maps(&env_cfg.driving, &window, region.n_mc, &RngStream::new(seed))?;
            let eval = RngStream::new(seed).split("eval");
            let metrics = [&maps.true_map, &maps.lagged_map].map(|m| -> Result<[MeanStd; 3]> {
                let eps = run_episodes(&env, &tabular(m, &window)?, region.eval_episodes, env.discount(), &eval);
                let ret: Vec<f64> = eps.iter().map(|e| e.discounted_return).collect();
                let dist: Vec<f64> = eps.iter().map(|e| e.final_state.norm()).collect();
                let len: Vec<f64> = eps.iter().map(|e| e.length as f64).collect();
                Ok([MeanStd::of(&ret), MeanStd::of(&dist), MeanStd::of(&len)])
            });
            let [t, l] = metrics;
            Ok(RegionSeed {
                seed,
                differences: maps.true_map.differences(&maps.lagged_map),
                true_map: maps.true_map,
                lagged_map: maps.lagged_map,
                clamped: maps.report.clamped,
                metrics: [t?, l?],
            })
        })
        .collect()
}

fn run_visual_region(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    let mut written = vec![];
    let params = &cfg.env.as_ref().expect("validated").driving;
    let bounds = instadep::planning::driving_region(params)?;
    let seeds = visual_region_seeds(cfg)?;
    for s in &seeds {
        for (name, map) in [("true", &s.true_map), ("lagged", &s.lagged_map)] {
            let mut buf = vec![];
            map.write_csv(&mut buf)?;
            write(dir, &format!("policy_{name}_seed{}.csv", s.seed), &String::from_utf8(buf)?, &mut written)?;
        }
    }
    let region = json!({
        "lower": bounds.lower,
        "upper": bounds.upper,
        "coordinate": "p/dt + 2v",
        "seeds": seeds.iter().map(|s| json!({
            "seed": s.seed,
            "differing_cells": s.differences.len(),
            "clamped": s.clamped,
        })).collect::<Vec<_>>(),
    });
    write(dir, "region.json", &to_json(&region)?, &mut written)?;

    let mut csv = String::from("mode,seed,return,final_distance,episode_length\n");
    for (m, mode) in MODES.iter().enumerate() {
        for s in &seeds {
            let [r, d, l] = &s.metrics[m];
            writeln!(csv, "{},{},{},{},{}", mode.name(), s.seed, r.mean, d.mean, l.mean)?;
        }
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let stat = |k: usize| {
                let v: Vec<f64> = seeds.iter().map(|s| s.metrics[m][k].mean).collect();
                let ms = MeanStd::of(&v);
                if pick == 0 { ms.mean } else { ms.std }
            };
            writeln!(csv, "{},{},{},{},{}", mode.name(), label, stat(0), stat(1), stat(2))?;
        }
    }
    write(dir, "metrics.csv", &csv, &mut written)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// reward_families

#[derive(Debug, Clone, Serialize)]
pub struct FamilyRun {
    pub family: FamilyTag,
    pub seed: u64,
    pub ins: f64,
    pub lag: f64,
}

impl FamilyRun {
    pub fn gap(&self) -> f64 {
        self.ins - self.lag
    }
}

/// Final mean returns of both modes for every family and seed, families in
/// `FamilyTag::ALL` order and seeds in configuration order.
pub fn reward_family_runs(cfg: &ExperimentConfig) -> Result<Vec<FamilyRun>> {
    let env_cfg = cfg.env.as_ref().expect("validated");
    let jobs: Vec<(FamilyTag, u64)> =
        FamilyTag::ALL.iter().flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s))).collect();
    jobs.par_iter()
        .map(|&(family, seed)| {
            let env = env_cfg.build(Some(family))?;
            let [ins, lag] = train_pair(cfg, &env, seed, None)?;
            Ok(FamilyRun { family, seed, ins: final_return(&ins), lag: final_return(&lag) })
        })
        .collect()
}

/// Per family: mean INS−LAG gap over seeds.
pub fn family_gaps(runs: &[FamilyRun]) -> Vec<(FamilyTag, MeanStd)> {
    FamilyTag::ALL
        .iter()
        .map(|&f| {
            let gaps: Vec<f64> = runs.iter().filter(|r| r.family == f).map(FamilyRun::gap).collect();
            (f, MeanStd::of(&gaps))
        })
        .collect()
}

fn run_reward_families(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![];
    let runs = reward_family_runs(cfg)?;
    let mut per_seed = String::from("family,seed,ins_return,lag_return,gap\n");
    for r in &runs {
        writeln!(per_seed, "{},{},{},{},{}", r.family.name(), r.seed, r.ins, r.lag, r.gap())?;
    }
    write(&cfg.output_dir, "family_returns.csv", &per_seed, &mut written)?;

    let mut gaps = String::from("family,ins_mean,ins_std,lag_mean,lag_std,gap_mean,gap_std\n");
    for (family, gap) in family_gaps(&runs) {
        let of = |f: fn(&FamilyRun) -> f64| {
            MeanStd::of(&runs.iter().filter(|r| r.family == family).map(f).collect::<Vec<_>>())
        };
        let (i, l) = (of(|r| r.ins), of(|r| r.lag));
        writeln!(gaps, "{},{},{},{},{},{},{}", family.name(), i.mean, i.std, l.mean, l.std, gap.mean, gap.std)?;
    }
    write(&cfg.output_dir, "family_gaps.csv", &gaps, &mut written)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// model_compare

#[derive(Debug, Clone)]
pub struct CompareSeed {
    pub seed: u64,
    /// Instantaneous, then lagged.
    pub results: [TrainResult; 2],
}

pub fn model_compare_seeds(cfg: &ExperimentConfig) -> Result<Vec<CompareSeed>> {
    let env = cfg.env.as_ref().expect("validated").build(None)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let eval = likelihood_dataset(&env, cfg.eval.likelihood_samples, seed)?;
            Ok(CompareSeed { seed, results: train_pair(cfg, &env, seed, Some(&eval))? })
        })
        .collect()
}

fn run_model_compare(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![];
    let seeds = model_compare_seeds(cfg)?;
    let dim = cfg.env.as_ref().expect("validated").state_dim();

    let mut curves = String::from("mode,seed,epoch,mean_return,std_return,epsilon\n");
    let mut like = String::from("mode,seed,epoch,likelihood");
    for i in 0..dim {
        write!(like, ",marginal_{i}")?;
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            write!(like, ",corr_{i}_{j}")?;
        }
    }
    like.push('\n');
    for (m, mode) in MODES.iter().enumerate() {
        for s in &seeds {
            for e in &s.results[m].curve {
                writeln!(curves, "{},{},{},{},{},{}", mode.name(), s.seed, e.epoch, e.mean_return, e.std_return, e.epsilon)?;
                write!(like, "{},{},{},{}", mode.name(), s.seed, e.epoch, e.likelihood.unwrap_or(f64::NAN))?;
                for v in e.marginal_likelihood.iter().flatten() {
                    write!(like, ",{v}")?;
                }
                for i in 0..dim {
                    for j in (i + 1)..dim {
                        write!(like, ",{}", e.corr[i][j])?;
                    }
                }
                like.push('\n');
            }
        }
    }
    write(&cfg.output_dir, "curves.csv", &curves, &mut written)?;
    write(&cfg.output_dir, "likelihood.csv", &like, &mut written)?;

    let summary: Vec<_> = seeds
        .iter()
        .map(|s| {
            let last = |m: usize| s.results[m].curve.last().expect("at least one epoch");
            json!({
                "seed": s.seed,
                "instantaneous": { "return": last(0).mean_return, "likelihood": last(0).likelihood,
                                   "marginal_likelihood": last(0).marginal_likelihood, "corr": last(0).corr },
                "lagged": { "return": last(1).mean_return, "likelihood": last(1).likelihood,
                            "marginal_likelihood": last(1).marginal_likelihood },
            })
        })
        .collect();
    write(&cfg.output_dir, "summary.json", &to_json(&summary)?, &mut written)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub ins: MeanStd,
    pub lag: MeanStd,
}

impl SweepRow {
    /// `(INS − LAG) / LAG` on the seed-mean returns.
    pub fn advantage(&self) -> f64 {
        (self.ins.mean - self.lag.mean) / self.lag.mean
    }
}

pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let jobs: Vec<(f64, u64)> =
        sweep.values.iter().flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let finals: Vec<[f64; 2]> = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let c = cfg.with_axis_value(sweep.axis, value);
            let env = c.env.as_ref().expect("validated").build(None)?;
            let [i, l] = train_pair(&c, &env, seed, None)?;
            Ok([final_return(&i), final_return(&l)])
        })
        .collect::<Result<_>>()?;
    let k = cfg.seeds.len();
    Ok(sweep
        .values
        .iter()
        .zip(finals.chunks(k))
        .map(|(&value, chunk)| SweepRow {
            value,
            ins: MeanStd::of(&chunk.iter().map(|r| r[0]).collect::<Vec<_>>()),
            lag: MeanStd::of(&chunk.iter().map(|r| r[1]).collect::<Vec<_>>()),
        })
        .collect())
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![];
    let axis: SweepAxis = cfg.sweep.as_ref().expect("validated").axis;
    let mut csv = format!("{},ins_mean,ins_std,lag_mean,lag_std,advantage\n", axis.name());
    for r in sweep_rows(cfg)? {
        writeln!(csv, "{},{},{},{},{},{}", r.value, r.ins.mean, r.ins.std, r.lag.mean, r.lag.std, r.advantage())?;
    }
    write(&cfg.output_dir, "sweep.csv", &csv, &mut written)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// theory_report

fn run_theory_report(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![];
    let reports = cfg
        .seeds
        .par_iter()
        .map(|&seed| theory_report(seed, cfg.theory.n_mc))
        .collect::<instadep::Result<Vec<_>>>()?;
    for r in &reports {
        write(&cfg.output_dir, &format!("theory_report_seed{}.json", r.seed), &to_json(r)?, &mut written)?;
    }
    Ok(written)
}

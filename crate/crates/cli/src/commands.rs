//! Experiment definitions: settings, validation and execution.

use std::collections::BTreeMap;

use bfl_core::analysis::laplace::{
    analytic_mean_xi, asymptotic_mean_xi, compute_jn_prime0, laplace_xi,
};
use bfl_core::analysis::{
    fit_power_law, front_position_limits, ks_two_sample, pair_merge_probability,
    theoretical_timescale, QuadratureSpec,
};
use bfl_core::coalescent::{BlockCountingChain, LambdaMeasure};
use bfl_core::genealogy::{estimate_cN, pair_coalescence_time, sample_geometric, simulate_ancestral_process};
use bfl_core::model::{sample_zeta, sample_zeta_via_zn, FrontSimulator, FrontState, ModelParams};
use bfl_core::ou::{bou_run, BOUConfig};
use bfl_core::stats::{mean_and_se, Running};
use bfl_core::RngStream;
use rayon::prelude::*;

use crate::config::{config_error, Settings};
use crate::output::Table;
use crate::plot::{Chart, Series, Style};

/// Settings accepted by every experiment.
pub const COMMON_KEYS: [(&str, &str); 5] = [
    ("seed", "master seed; replica streams derive from it"),
    ("replicas", "number of independent replicas"),
    ("threads", "worker threads (default: BFL_THREADS or all cores)"),
    ("out-dir", "output directory"),
    ("plot", "also write an SVG chart per CSV"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Front,
    XiCheck,
    Genealogy,
    Scaling,
    CoalescentRef,
    Analytic,
    Bou,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Front,
        Experiment::XiCheck,
        Experiment::Genealogy,
        Experiment::Scaling,
        Experiment::CoalescentRef,
        Experiment::Analytic,
        Experiment::Bou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Front => "front",
            Experiment::XiCheck => "xi-check",
            Experiment::Genealogy => "genealogy",
            Experiment::Scaling => "scaling",
            Experiment::CoalescentRef => "coalescent-ref",
            Experiment::Analytic => "analytic",
            Experiment::Bou => "bou",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn about(self) -> &'static str {
        match self {
            Experiment::Front => "simulate fronts of the exponential model",
            Experiment::XiCheck => "compare Monte Carlo increments with the exact mean and the gamma identity",
            Experiment::Genealogy => "pair coalescence times or ancestral block counts",
            Experiment::Scaling => "mean pair coalescence time across population sizes",
            Experiment::CoalescentRef => "block-counting paths of the limiting coalescent",
            Experiment::Analytic => "closed-form and quadrature quantities",
            Experiment::Bou => "average MRCA age in branching OU particles with selection",
        }
    }

    /// Command-specific settings with help text.
    pub fn own_keys(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::Front => &[
                ("N", "population size"),
                ("a", "pulling parameter"),
                ("steps", "generations per replica"),
            ],
            Experiment::XiCheck => &[
                ("N", "population size"),
                ("N-list", "comma-separated population sizes (overrides N)"),
                ("a", "pulling parameter in [0, 1)"),
            ],
            Experiment::Genealogy => &[
                ("N", "population size"),
                ("a", "pulling parameter"),
                ("method", "pair | blocks"),
                ("sample", "sample size for blocks"),
                ("steps", "generations traced back for blocks"),
            ],
            Experiment::Scaling => &[
                ("a", "pulling parameter"),
                ("N-list", "comma-separated population sizes"),
                ("method", "geometric | direct"),
            ],
            Experiment::CoalescentRef => &[
                ("a", "pulling parameter selecting the limit coalescent"),
                ("measure", "kingman | bolthausen-sznitman | beta (overrides a)"),
                ("alpha", "first Beta parameter"),
                ("beta", "second Beta parameter"),
                ("sample", "initial number of blocks"),
                ("horizon", "coalescent time horizon"),
            ],
            Experiment::Analytic => &[
                ("N", "population size"),
                ("N-list", "comma-separated population sizes (overrides N)"),
                ("a", "pulling parameter"),
            ],
            Experiment::Bou => &[
                ("N-list", "comma-separated population sizes"),
                ("gamma-list", "comma-separated pulling parameters"),
                ("horizon", "simulated time per run (default 2000 + 20 N)"),
                ("pair-samples", "MRCA pairs sampled per run"),
                ("snapshots", "sampling instants over the second half"),
            ],
        }
    }

    pub fn known_keys(self) -> Vec<&'static str> {
        COMMON_KEYS
            .iter()
            .chain(self.own_keys())
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn defaults(self) -> BTreeMap<String, String> {
        let own: &[(&str, &str)] = match self {
            Experiment::Front => &[("N", "1000"), ("a", "0.5"), ("steps", "500"), ("replicas", "100")],
            Experiment::XiCheck => &[("N", "100"), ("a", "0.5"), ("replicas", "100000")],
            Experiment::Genealogy => &[
                ("N", "256"),
                ("a", "0.75"),
                ("method", "pair"),
                ("sample", "8"),
                ("steps", "200"),
                ("replicas", "1000"),
            ],
            Experiment::Scaling => &[
                ("a", "0.6667"),
                ("N-list", "64,128,256,512,1024,2048,4096"),
                ("method", "geometric"),
                ("replicas", "20000"),
            ],
            Experiment::CoalescentRef => &[
                ("a", "0.75"),
                ("sample", "8"),
                ("horizon", "5"),
                ("replicas", "1000"),
            ],
            Experiment::Analytic => &[("N", "100"), ("a", "0.5"), ("replicas", "1")],
            Experiment::Bou => &[
                ("N-list", "10,20,50,100,200,500,1000"),
                ("gamma-list", "2"),
                ("pair-samples", "2000"),
                ("snapshots", "200"),
                ("replicas", "1"),
            ],
        };
        let mut out: BTreeMap<String, String> = [("seed", "1"), ("out-dir", "out")]
            .iter()
            .chain(own)
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        out.entry("plot".into()).or_insert_with(|| "false".into());
        out
    }
}

/// Validated experiment parameters.
#[derive(Clone, Debug)]
pub enum Job {
    Front {
        params: ModelParams,
        steps: usize,
    },
    XiCheck {
        params: Vec<ModelParams>,
    },
    GenealogyPairs {
        params: ModelParams,
    },
    GenealogyBlocks {
        params: ModelParams,
        sample: usize,
        steps: usize,
    },
    Scaling {
        a: f64,
        sizes: Vec<usize>,
        direct: bool,
    },
    CoalescentRef {
        measure: LambdaMeasure,
        sample: usize,
        horizon: f64,
    },
    Analytic {
        sizes: Vec<usize>,
        a: f64,
    },
    Bou {
        runs: Vec<BOUConfig>,
    },
}

fn positive(settings: &Settings, key: &str) -> anyhow::Result<usize> {
    let v: usize = settings.get(key)?;
    if v == 0 {
        return Err(config_error(format!("`{key}` must be >= 1")));
    }
    Ok(v)
}

fn sizes(settings: &Settings) -> anyhow::Result<Vec<usize>> {
    if settings.raw("N-list").is_some() {
        Ok(settings.get_list("N-list")?)
    } else {
        Ok(vec![settings.get("N")?])
    }
}

fn model_params(n: usize, a: f64) -> anyhow::Result<ModelParams> {
    Ok(ModelParams::new(n, a)?)
}

/// Checks every precondition before any simulation starts.
pub fn prepare(exp: Experiment, s: &Settings) -> anyhow::Result<Job> {
    positive(s, "replicas")?;
    s.get::<u64>("seed")?;
    s.flag("plot")?;
    Ok(match exp {
        Experiment::Front => Job::Front {
            params: model_params(s.get("N")?, s.get("a")?)?,
            steps: positive(s, "steps")?,
        },
        Experiment::XiCheck => {
            let a: f64 = s.get("a")?;
            if !(0.0..1.0).contains(&a) {
                return Err(config_error(format!("xi-check needs 0 <= a < 1, got {a}")));
            }
            Job::XiCheck {
                params: sizes(s)?
                    .into_iter()
                    .map(|n| model_params(n, a))
                    .collect::<anyhow::Result<_>>()?,
            }
        }
        Experiment::Genealogy => {
            let params = model_params(s.get("N")?, s.get("a")?)?;
            match s.get::<String>("method")?.as_str() {
                "pair" => {
                    if params.n() < 2 {
                        return Err(config_error("pair coalescence needs N >= 2"));
                    }
                    Job::GenealogyPairs { params }
                }
                "blocks" => {
                    let sample = positive(s, "sample")?;
                    if sample > params.n() {
                        return Err(config_error(format!("sample {sample} exceeds N = {}", params.n())));
                    }
                    Job::GenealogyBlocks {
                        params,
                        sample,
                        steps: positive(s, "steps")?,
                    }
                }
                m => return Err(config_error(format!("unknown genealogy method `{m}` (pair | blocks)"))),
            }
        }
        Experiment::Scaling => {
            let a: f64 = s.get("a")?;
            let sizes: Vec<usize> = s.get_list("N-list")?;
            for &n in &sizes {
                model_params(n, a)?;
                if n < 2 {
                    return Err(config_error("scaling needs every N >= 2"));
                }
            }
            let direct = match s.get::<String>("method")?.as_str() {
                "geometric" => false,
                "direct" => true,
                m => return Err(config_error(format!("unknown scaling method `{m}` (geometric | direct)"))),
            };
            Job::Scaling { a, sizes, direct }
        }
        Experiment::CoalescentRef => {
            let measure = match s.raw("measure") {
                None => LambdaMeasure::from_pulling(s.get("a")?)?,
                Some("kingman") => LambdaMeasure::Kingman,
                Some("bolthausen-sznitman") => LambdaMeasure::bolthausen_sznitman(),
                Some("beta") => LambdaMeasure::beta(s.get("alpha")?, s.get("beta")?)?,
                Some(m) => return Err(config_error(format!("unknown measure `{m}`"))),
            };
            let horizon: f64 = s.get("horizon")?;
            if !(horizon > 0.0) || !horizon.is_finite() {
                return Err(config_error(format!("`horizon` must be finite and > 0, got {horizon}")));
            }
            Job::CoalescentRef {
                measure,
                sample: positive(s, "sample")?,
                horizon,
            }
        }
        Experiment::Analytic => {
            let a: f64 = s.get("a")?;
            let sizes = sizes(s)?;
            for &n in &sizes {
                model_params(n, a)?;
            }
            Job::Analytic { sizes, a }
        }
        Experiment::Bou => {
            let pair_samples = positive(s, "pair-samples")?;
            let snapshots = positive(s, "snapshots")?;
            let horizon: Option<f64> = s.get_opt("horizon")?;
            let mut runs = Vec::new();
            for gamma in s.get_list::<f64>("gamma-list")? {
                for n in s.get_list::<usize>("N-list")? {
                    let h = horizon.unwrap_or(2000.0 + 20.0 * n as f64);
                    runs.push(BOUConfig::new(n, gamma, h, pair_samples)?.with_snapshots(snapshots)?);
                }
            }
            Job::Bou { runs }
        }
    })
}

pub struct Runtime {
    pub seed: u64,
    pub replicas: usize,
    pub pool: rayon::ThreadPool,
}

impl Runtime {
    /// Maps `f` over stream indices in parallel; results keep index order,
    /// so outputs do not depend on the thread count.
    fn par_map<T, F>(&self, indices: Vec<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut RngStream) -> T + Sync,
    {
        let seed = self.seed;
        self.pool.install(|| {
            indices
                .into_par_iter()
                .map(|i| f(i, &mut RngStream::new(seed, i)))
                .collect()
        })
    }

    fn try_par_map<T, F>(&self, indices: Vec<u64>, f: F) -> anyhow::Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, &mut RngStream) -> bfl_core::Result<T> + Sync,
    {
        Ok(self.par_map(indices, f).into_iter().collect::<bfl_core::Result<Vec<T>>>()?)
    }
}

pub struct Report {
    pub outputs: Vec<(Table, Option<Chart>)>,
    pub summary: Vec<String>,
}

/// Stream index for replica `r` of item `item`.
fn stream_id(item: usize, r: usize) -> u64 {
    ((item as u64) << 40) | r as u64
}

pub fn run(job: &Job, rt: &Runtime) -> anyhow::Result<Report> {
    match job {
        Job::Front { params, steps } => run_front(params, *steps, rt),
        Job::XiCheck { params } => run_xi_check(params, rt),
        Job::GenealogyPairs { params } => run_pairs(params, rt),
        Job::GenealogyBlocks { params, sample, steps } => run_blocks(params, *sample, *steps, rt),
        Job::Scaling { a, sizes, direct } => run_scaling(*a, sizes, *direct, rt),
        Job::CoalescentRef { measure, sample, horizon } => run_reference(measure, *sample, *horizon, rt),
        Job::Analytic { sizes, a } => run_analytic(sizes, *a),
        Job::Bou { runs } => run_bou(runs, rt),
    }
}

fn run_front(params: &ModelParams, steps: usize, rt: &Runtime) -> anyhow::Result<Report> {
    let p = *params;
    let runs = rt.par_map((0..rt.replicas as u64).collect(), |_, rng| {
        let mut sim = FrontSimulator::new(p).track_parents(false);
        let mut state = FrontState::at_origin(&p);
        (0..steps).map(|_| sim.step(&mut state, rng)).collect::<Vec<_>>()
    });
    let mut table = Table::new("front.csv", &["replica", "step", "x_eq", "max", "min", "zeta"]);
    let mut mean_max = vec![Running::default(); steps];
    let mut mean_min = vec![Running::default(); steps];
    for (r, records) in runs.iter().enumerate() {
        for (k, rec) in records.iter().enumerate() {
            table.push(vec![
                r.into(),
                rec.generation.into(),
                rec.x_eq.into(),
                rec.max.into(),
                rec.min.into(),
                rec.zeta.into(),
            ]);
            mean_max[k].push(rec.max);
            mean_min[k].push(rec.min);
        }
    }
    let series = |label: &str, acc: &[Running]| {
        Series::new(
            label,
            acc.iter().enumerate().map(|(k, r)| ((k + 1) as f64, r.mean())).collect(),
            Style::Line,
        )
    };
    let chart = Chart {
        title: format!("Front, N={} a={}", p.n(), p.a()),
        x_label: "generation".into(),
        y_label: "position (replica mean)".into(),
        series: vec![series("max", &mean_max), series("min", &mean_min)],
        ..Chart::default()
    };
    let last = steps - 1;
    let mut summary = vec![format!(
        "final generation: mean max {:.6} (se {:.3e}), mean min {:.6} (se {:.3e})",
        mean_max[last].mean(),
        mean_max[last].standard_error(),
        mean_min[last].mean(),
        mean_min[last].standard_error()
    )];
    if let Ok((mx, mn)) = front_position_limits(p.a()) {
        summary.push(format!(
            "large-N limits: max - log N -> {mx:.6}, min -> {mn:.6} (max - log N here {:.6})",
            mean_max[last].mean() - (p.n() as f64).ln()
        ));
    }
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary,
    })
}

fn run_xi_check(params: &[ModelParams], rt: &Runtime) -> anyhow::Result<Report> {
    let mut table = Table::new(
        "xi_check.csv",
        &["N", "a", "mc_mean", "se", "exact_mean", "asymptotic_mean", "ks_statistic", "ks_p_value"],
    );
    let mut summary = Vec::new();
    let (mut mc, mut exact) = (Vec::new(), Vec::new());
    for (item, &p) in params.iter().enumerate() {
        let draws = rt.par_map((0..rt.replicas).map(|r| stream_id(item, r)).collect(), |_, rng| {
            (sample_zeta(&p, rng), sample_zeta_via_zn(&p, rng))
        });
        let (direct, via): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
        let (m, se) = mean_and_se(&direct);
        let e = analytic_mean_xi(p.n(), p.a())?;
        let asym = asymptotic_mean_xi(p.n(), p.a())?;
        let (d, pv) = match ks_two_sample(&direct, &via) {
            Ok(ks) => (ks.statistic, ks.p_value),
            Err(_) => (f64::NAN, f64::NAN),
        };
        table.push(vec![
            p.n().into(),
            p.a().into(),
            m.into(),
            se.into(),
            e.into(),
            asym.into(),
            d.into(),
            pv.into(),
        ]);
        summary.push(format!(
            "N={} a={}: mean {m:.6} ± {se:.2e} vs exact {e:.6} ({:+.2} se); KS p = {pv:.4}",
            p.n(),
            p.a(),
            if se > 0.0 { (m - e) / se } else { 0.0 }
        ));
        mc.push((p.n() as f64, m));
        exact.push((p.n() as f64, e));
    }
    let chart = Chart {
        title: "Mean increment of the equivalent position".into(),
        x_label: "N".into(),
        y_label: "E[increment]".into(),
        log_x: true,
        series: vec![
            Series::new("Monte Carlo", mc, Style::Markers),
            Series::new("exact", exact, Style::Line),
        ],
        ..Chart::default()
    };
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary,
    })
}

fn run_pairs(params: &ModelParams, rt: &Runtime) -> anyhow::Result<Report> {
    let p = *params;
    let times = rt.try_par_map((0..rt.replicas as u64).collect(), |_, rng| pair_coalescence_time(&p, rng))?;
    let mut table = Table::new("genealogy.csv", &["replica", "pair_time"]);
    for (r, &t) in times.iter().enumerate() {
        table.push(vec![r.into(), t.into()]);
    }
    let xs: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let (m, se) = mean_and_se(&xs);
    let c = pair_merge_probability(p.n(), p.a())?;
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let survival: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, 1.0 - k as f64 / sorted.len() as f64))
        .collect();
    let geometric: Vec<(f64, f64)> = survival.iter().map(|&(t, _)| (t, (1.0 - c).powf(t - 1.0))).collect();
    let chart = Chart {
        title: format!("Pair coalescence, N={} a={}", p.n(), p.a()),
        x_label: "generations".into(),
        y_label: "P(T >= t)".into(),
        log_y: true,
        series: vec![
            Series::new("empirical", survival, Style::Line),
            Series::new("geometric(c_N)", geometric, Style::Line),
        ],
        ..Chart::default()
    };
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary: vec![format!("mean pair time {m:.4} ± {se:.4}; 1/c_N = {:.4}", 1.0 / c)],
    })
}

fn run_blocks(params: &ModelParams, sample: usize, steps: usize, rt: &Runtime) -> anyhow::Result<Report> {
    let p = *params;
    let paths = rt.try_par_map((0..rt.replicas as u64).collect(), |_, rng| {
        simulate_ancestral_process(&p, sample, steps, rng)
    })?;
    let mut table = Table::new("genealogy.csv", &["replica", "step", "block_count"]);
    let mut mean = vec![Running::default(); steps + 1];
    for (r, path) in paths.iter().enumerate() {
        table.push(vec![r.into(), 0usize.into(), sample.into()]);
        mean[0].push(sample as f64);
        for (k, part) in path.iter().enumerate() {
            table.push(vec![r.into(), (k + 1).into(), part.num_blocks().into()]);
            mean[k + 1].push(part.num_blocks() as f64);
        }
    }
    let chart = Chart {
        title: format!("Ancestral blocks, N={} a={} n={sample}", p.n(), p.a()),
        x_label: "generations back".into(),
        y_label: "mean block count".into(),
        series: vec![Series::new(
            "model",
            mean.iter().enumerate().map(|(k, r)| (k as f64, r.mean())).collect(),
            Style::Line,
        )],
        ..Chart::default()
    };
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary: vec![format!("mean block count after {steps} generations: {:.4}", mean[steps].mean())],
    })
}

/// Exponent of the coalescence timescale as a power of N.
fn theory_exponent(a: f64) -> f64 {
    if a <= 0.5 {
        1.0
    } else if a < 1.0 {
        (1.0 - a) / a
    } else {
        0.0
    }
}

fn run_scaling(a: f64, sizes: &[usize], direct: bool, rt: &Runtime) -> anyhow::Result<Report> {
    let mut table = Table::new("scaling.csv", &["N", "mean_pair_time", "se", "c_N_hat"]);
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for (item, &n) in sizes.iter().enumerate() {
        let p = ModelParams::new(n, a)?;
        let c = pair_merge_probability(n, a)?;
        let ids: Vec<u64> = (0..rt.replicas).map(|r| stream_id(item, r)).collect();
        let times = rt.try_par_map(ids, |_, rng| {
            if direct {
                pair_coalescence_time(&p, rng)
            } else {
                sample_geometric(c, rng)
            }
        })?;
        let xs: Vec<f64> = times.iter().map(|&t| t as f64).collect();
        let (m, se) = mean_and_se(&xs);
        let mut rng = RngStream::new(rt.seed, stream_id(item, 0)).substream(1);
        let (c_hat, _) = estimate_cN(&p, rt.replicas.max(2), &mut rng)?;
        table.push(vec![n.into(), m.into(), se.into(), c_hat.into()]);
        points.push((n as f64, m));
    }
    let mut chart = Chart {
        title: format!("Pair coalescence time, a={a}"),
        x_label: "N".into(),
        y_label: "mean pair time (generations)".into(),
        log_x: true,
        log_y: true,
        series: vec![Series::new("Monte Carlo", points.clone(), Style::LineMarkers)],
        ..Chart::default()
    };
    if points.len() >= 3 {
        let fit = fit_power_law(&points)?;
        summary.push(format!(
            "fitted exponent ≈ {:.3} (R² {:.4}); timescale exponent {:.3}",
            fit.slope,
            fit.r_squared,
            theory_exponent(a)
        ));
        let line = points
            .iter()
            .map(|&(n, _)| (n, (fit.intercept + fit.slope * n.ln()).exp()))
            .collect();
        chart.series.push(Series::new("power-law fit", line, Style::Line));
    }
    if a > 0.0 {
        let scales: Vec<String> = sizes
            .iter()
            .filter_map(|&n| theoretical_timescale(n, a).ok().map(|s| format!("{n}:{s:.4}")))
            .collect();
        summary.push(format!("timescale by N: {}", scales.join(" ")));
    }
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary,
    })
}

fn run_reference(measure: &LambdaMeasure, sample: usize, horizon: f64, rt: &Runtime) -> anyhow::Result<Report> {
    let chain = BlockCountingChain::new(measure, sample)?;
    let paths = rt.try_par_map((0..rt.replicas as u64).collect(), |_, rng| {
        chain.simulate(sample, horizon, rng)
    })?;
    let mut table = Table::new("ref.csv", &["replica", "time", "block_count"]);
    for (r, path) in paths.iter().enumerate() {
        for &(t, b) in &path.events {
            table.push(vec![r.into(), t.into(), b.into()]);
        }
    }
    let grid: Vec<f64> = (0..=100).map(|k| horizon * k as f64 / 100.0).collect();
    let empirical = grid
        .iter()
        .map(|&t| {
            let m = paths.iter().map(|p| p.block_count_at(t) as f64).sum::<f64>() / paths.len() as f64;
            (t, m)
        })
        .collect();
    let exact = grid
        .iter()
        .map(|&t| {
            chain
                .distribution_at(sample, t)
                .map(|law| (t, bfl_core::coalescent::distribution_mean(&law)))
        })
        .collect::<bfl_core::Result<Vec<_>>>()?;
    let chart = Chart {
        title: format!("{measure:?}"),
        x_label: "coalescent time".into(),
        y_label: "mean block count".into(),
        series: vec![
            Series::new("simulated", empirical, Style::Line),
            Series::new("exact", exact, Style::Line),
        ],
        ..Chart::default()
    };
    let absorbed = paths.iter().filter(|p| p.final_count() == 1).count();
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary: vec![format!(
            "{measure:?}: {absorbed}/{} paths reached one block by t = {horizon}",
            paths.len()
        )],
    })
}

fn run_analytic(sizes: &[usize], a: f64) -> anyhow::Result<Report> {
    let spec = QuadratureSpec::default();
    let mut table = Table::new("analytic.csv", &["name", "N", "a", "value"]);
    let mut by_name: BTreeMap<&'static str, Vec<(f64, f64)>> = BTreeMap::new();
    for &n in sizes {
        let mut rows: Vec<(&'static str, f64)> = Vec::new();
        if a < 1.0 {
            rows.push(("mean_xi", analytic_mean_xi(n, a)?));
            rows.push(("asymptotic_mean_xi", asymptotic_mean_xi(n, a)?));
            rows.push(("jn_prime0", compute_jn_prime0(n, a, &spec)?));
            rows.push(("laplace_xi_at_1", laplace_xi(1.0, n, a)?));
            let (mx, mn) = front_position_limits(a)?;
            rows.push(("front_max_minus_logN_limit", mx));
            rows.push(("front_min_limit", mn));
        }
        rows.push(("pair_merge_probability", pair_merge_probability(n, a)?));
        if n >= 2 && a > 0.0 {
            rows.push(("timescale", theoretical_timescale(n, a)?));
        }
        for (name, v) in rows {
            table.push(vec![name.into(), n.into(), a.into(), v.into()]);
            by_name.entry(name).or_default().push((n as f64, v));
        }
    }
    let chart = Chart {
        title: format!("Analytic quantities, a={a}"),
        x_label: "N".into(),
        y_label: "value".into(),
        log_x: true,
        series: by_name
            .into_iter()
            .filter(|(name, _)| !name.starts_with("timescale") && !name.starts_with("front"))
            .map(|(name, pts)| Series::new(name, pts, Style::LineMarkers))
            .collect(),
        ..Chart::default()
    };
    let summary = vec![format!("{} rows", table.rows.len())];
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary,
    })
}

fn run_bou(runs: &[BOUConfig], rt: &Runtime) -> anyhow::Result<Report> {
    let ids: Vec<u64> = (0..runs.len())
        .flat_map(|item| (0..rt.replicas).map(move |r| stream_id(item, r)))
        .collect();
    let results = rt.try_par_map(ids, |id, rng| bou_run(&runs[(id >> 40) as usize], rng))?;
    let mut table = Table::new("bou.csv", &["gamma", "N", "avg_mrca_age", "se", "censored_fraction"]);
    let mut summary = Vec::new();
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (cfg, chunk) in runs.iter().zip(results.chunks(rt.replicas)) {
        let (avg, se) = if chunk.len() == 1 {
            (chunk[0].avg_mrca_age, chunk[0].standard_error)
        } else {
            let ages: Vec<f64> = chunk.iter().map(|r| r.avg_mrca_age).collect();
            mean_and_se(&ages)
        };
        let censored = chunk.iter().map(|r| r.censored_fraction).sum::<f64>() / chunk.len() as f64;
        table.push(vec![
            cfg.gamma_pull.into(),
            cfg.n.into(),
            avg.into(),
            se.into(),
            censored.into(),
        ]);
        if chunk.iter().any(|r| r.burn_in_warning) {
            summary.push(format!(
                "warning: gamma={} N={}: horizon {} too short to burn in",
                cfg.gamma_pull, cfg.n, cfg.horizon
            ));
        }
        curves
            .entry(format!("gamma={}", cfg.gamma_pull))
            .or_default()
            .push((cfg.n as f64, avg));
    }
    for (label, pts) in &curves {
        if pts.len() >= 3 {
            if let Ok(fit) = fit_power_law(pts) {
                summary.push(format!("{label}: log-log slope {:.3}", fit.slope));
            }
        }
    }
    let chart = Chart {
        title: "Average MRCA age of two random individuals".into(),
        x_label: "N".into(),
        y_label: "average MRCA age".into(),
        log_x: true,
        log_y: true,
        series: curves
            .into_iter()
            .map(|(label, pts)| Series::new(label, pts, Style::LineMarkers))
            .collect(),
        ..Chart::default()
    };
    Ok(Report {
        outputs: vec![(table, Some(chart))],
        summary,
    })
}

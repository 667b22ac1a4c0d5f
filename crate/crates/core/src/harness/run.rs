//! The benchmark sweep: tasks × cells × replicates, scored against HMC.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::cache::{self, HmcManifest};
use super::config::{Algorithm, Cell, ChainInit, CoverageTarget, ExperimentConfig};
use super::report::*;
use crate::datasets::{generate, write_bundle, ReplicateBundle, TaskId};
use crate::error::{Error, Result};
use crate::metrics::{
    ksd, mds_embed, median_heuristic, mmd, predictive_band, q2, DiscrepancyMatrix, KernelSpec, MdsEmbedding,
    PosteriorScore,
};
use crate::model::{mlp, prior_draw, train_map, MlpArchitecture, ParamVector, PosteriorSpec, Target};
use crate::par;
use crate::rng::{child_rng, label_hash, split_seed};
use crate::samplers::{
    deep_ensemble, hmc_run, mc_dropout_sample, run_sgmcmc, swag_fit, swag_sample, tune_step_size, DropoutConfig,
    Dynamics, HmcConfig, PsgldParams, SampleSet, SamplerConfig, SghmcParams, SwagConfig, Variant,
};

/// Seed-coordinate tags for streams that are not algorithm cells.
const DATA_STREAM: &str = "data";
const MAP_STREAM: &str = "map";
const HMC_STREAM: &str = "hmc";
const LENGTHSCALE_STREAM: &str = "lengthscale";

/// Seed of the run `(task, stream, hyper_index, replicate)`.
///
/// Every random stream of the benchmark is derived here, so results do not
/// depend on how runs are scheduled across workers.
pub fn run_seed(master: u64, task: TaskId, stream: &str, hyper_index: usize, replicate: usize) -> u64 {
    split_seed(
        master,
        &[task.index(), label_hash(stream), hyper_index as u64, replicate as u64],
    )
}

/// The replicate datasets of `task` under `config`.
pub fn task_bundle(config: &ExperimentConfig, task: TaskId) -> Result<ReplicateBundle> {
    generate(
        &config.task_spec(task),
        config.n_replicates,
        run_seed(config.seed, task, DATA_STREAM, 0, 0),
    )
}

/// Everything a benchmark run produces, in deterministic order.
#[derive(Clone, Debug)]
pub struct BenchmarkOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub curves: Vec<CurveRow>,
    pub ccp: Vec<CcpRow>,
    pub hmc: Vec<HmcSummaryRow>,
    pub timings: Vec<TimingRow>,
    /// Per task: IMQ lengthscale used for KSD.
    pub lengthscales: Vec<(TaskId, f64)>,
    pub matrices: Vec<(TaskId, Space, DiscrepancyMatrix)>,
    pub embeddings: Vec<(TaskId, Space, MdsEmbedding)>,
}

struct TaskContext<'a> {
    config: &'a ExperimentConfig,
    task: TaskId,
    arch: MlpArchitecture,
    bundle: ReplicateBundle,
    cells: Vec<Cell>,
    /// Scoring targets on the test inputs.
    targets: Vec<f64>,
    cache_dir: PathBuf,
}

struct Reference {
    weights: Vec<ParamVector>,
    functions: Vec<Vec<f64>>,
    summary: HmcSummaryRow,
}

/// One cell on one replicate.
struct RunOutcome {
    row: ResultRow,
    coverage: Option<RunCoverage>,
    seconds: f64,
    /// Samples kept for lengthscale and matrix computations.
    kept: Option<(Vec<ParamVector>, Vec<Vec<f64>>)>,
}

struct ReplicateOutcome {
    runs: Vec<RunOutcome>,
    reference: Reference,
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::EnsembleCollapse { .. })
}

fn evenly_spaced<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    (0..max).map(|i| items[i * items.len() / max].clone()).collect()
}

impl TaskContext<'_> {
    fn posterior(&self, replicate: usize) -> Result<PosteriorSpec> {
        PosteriorSpec::new(
            self.arch.clone(),
            self.bundle.training_sets[replicate].clone(),
            self.bundle.task.noise_sigma,
        )
    }

    fn functions(&self, weights: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
        par::map_slice(weights, |w| mlp::predict_many(&self.arch, w, self.bundle.test_inputs()))
            .into_iter()
            .collect()
    }

    fn seed(&self, stream: &str, hyper_index: usize, replicate: usize) -> u64 {
        run_seed(self.config.seed, self.task, stream, hyper_index, replicate)
    }

    fn reference(&self, posterior: &PosteriorSpec, map: &ParamVector, replicate: usize) -> Result<Reference> {
        let h = &self.config.hmc;
        let seed = self.seed(HMC_STREAM, 0, replicate);
        let key = label_hash(&format!(
            "{:016x}|{:?}|{}|{}|{}",
            posterior.fingerprint(),
            self.arch.layer_sizes(),
            serde_json::to_string(h)?,
            seed,
            serde_json::to_string(&map.0)?,
        ));
        let task = self.task.as_str();
        let (weights, step_size, acceptance_rate) = match cache::load(&self.cache_dir, task, replicate, key)? {
            Some(hit) => (hit.samples, hit.manifest.step_size, hit.manifest.acceptance_rate),
            None => {
                let mut cfg = HmcConfig {
                    step_size: h.initial_step_size,
                    leapfrog_steps: h.leapfrog_steps,
                    iterations: h.iterations,
                    burn_in: h.burn_in,
                    n_chains: h.n_chains,
                    seed,
                    acceptance_floor: 0.8,
                };
                let (eps, _) = tune_step_size(posterior, map, &cfg, &h.tuning)?;
                cfg.step_size = eps;
                let run = hmc_run(posterior, &cfg, &vec![map.clone(); h.n_chains])?;
                let manifest = HmcManifest {
                    key,
                    task: task.to_string(),
                    replicate,
                    seed,
                    n_samples: run.samples.len(),
                    dim: posterior.dim(),
                    step_size: eps,
                    leapfrog_steps: h.leapfrog_steps,
                    acceptance_rate: run.acceptance_rate,
                    chain_acceptance: run.chain_acceptance.clone(),
                    data_file: String::new(),
                };
                cache::store(&self.cache_dir, manifest, &run.samples.samples)?;
                (run.samples.samples, eps, run.acceptance_rate)
            }
        };
        let functions = self.functions(&weights)?;
        Ok(Reference {
            summary: HmcSummaryRow {
                task: self.task,
                replicate,
                step_size,
                leapfrog_steps: h.leapfrog_steps,
                acceptance_rate,
                n_samples: weights.len(),
            },
            weights,
            functions,
        })
    }

    fn sample(&self, cell: &Cell, posterior: &PosteriorSpec, map: &ParamVector, seed: u64) -> Result<SampleSet> {
        let c = self.config;
        let s = &c.sgmcmc;
        let sgmcmc = |dynamics: Dynamics, variant: Variant| {
            let cfg = SamplerConfig {
                step_size: cell.step_size,
                iterations: s.iterations,
                burn_in: c.burn_in(),
                variant,
                dynamics,
                batch_size: s.batch_size,
                thin_target: Some(s.thin_target),
                store_stride: s.store_stride,
                seed,
            };
            let anchored = matches!(variant, Variant::ControlVariate | Variant::Svrg { .. });
            let init = match s.init {
                ChainInit::Prior if !anchored => prior_draw(posterior.dim(), &mut child_rng(seed, &[3])),
                _ => map.clone(),
            };
            run_sgmcmc(posterior, &cfg, &init, Some(map))
        };
        let langevin = Dynamics::Langevin;
        let hamiltonian = Dynamics::Hamiltonian(SghmcParams::default());
        let cycles = cell.cycles.unwrap_or(1);
        let svrg = Variant::Svrg { period: s.svrg_period };
        match cell.algorithm {
            Algorithm::Sgld => sgmcmc(langevin, Variant::Plain),
            Algorithm::SgldCv => sgmcmc(langevin, Variant::ControlVariate),
            Algorithm::SgldSvrg => sgmcmc(langevin, svrg),
            Algorithm::Csgld => sgmcmc(langevin, Variant::Cyclical { cycles }),
            Algorithm::Sghmc => sgmcmc(hamiltonian, Variant::Plain),
            Algorithm::SghmcCv => sgmcmc(hamiltonian, Variant::ControlVariate),
            Algorithm::SghmcSvrg => sgmcmc(hamiltonian, svrg),
            Algorithm::Csghmc => sgmcmc(hamiltonian, Variant::Cyclical { cycles }),
            Algorithm::Psgld => sgmcmc(langevin, Variant::Preconditioned(PsgldParams::default())),
            Algorithm::Swag => {
                let cfg = SwagConfig {
                    step_size: cell.step_size,
                    iterations: c.swag.iterations,
                    rank: c.swag.rank,
                    batch_size: s.batch_size,
                    loss_scale: c.swag.loss_scale,
                    seed,
                };
                let model = swag_fit(posterior, map, &cfg)?;
                Ok(swag_sample(&model, c.swag.n_samples, split_seed(seed, &[1]))?
                    .with_hyper("step_size", cell.step_size))
            }
            Algorithm::DeepEnsemble => {
                let opt = c.ensemble.opt.with_lr(cell.step_size);
                Ok(deep_ensemble(posterior, c.ensemble.members, &opt, seed)?.samples)
            }
            Algorithm::McDropout => mc_dropout_sample(
                posterior,
                &DropoutConfig {
                    rate: cell.dropout_rate.unwrap_or(0.0),
                    n_samples: c.dropout.n_samples,
                    opt: c.dropout.opt.with_lr(cell.step_size),
                    seed,
                },
            ),
        }
    }

    fn run_cell(
        &self,
        cell: &Cell,
        replicate: usize,
        posterior: &PosteriorSpec,
        map: &ParamVector,
        reference: &Reference,
        lengthscale: Option<f64>,
        keep: bool,
    ) -> Result<RunOutcome> {
        let c = self.config;
        let start = Instant::now();
        let seed = self.seed(cell.algorithm.as_str(), cell.hyper_index, replicate);
        let key = CellKey::new(self.task, cell);
        let mut row = ResultRow {
            task: key.task,
            algorithm: key.algorithm,
            label: key.label,
            hyper_index: key.hyper_index,
            step_size: key.step_size,
            cycles: key.cycles,
            dropout_rate: key.dropout_rate,
            replicate,
            status: Status::Diverged,
            n_samples: 0,
            q2: None,
            picp: None,
            mmd_weight: None,
            mmd_function: None,
            ksd: None,
        };
        let diverged = |row: ResultRow, why: &str| {
            log::warn!("{} {} replicate {replicate}: {why}", row.task, row.label);
            Ok(RunOutcome {
                row,
                coverage: None,
                seconds: start.elapsed().as_secs_f64(),
                kept: None,
            })
        };
        let set = match self.sample(cell, posterior, map, seed) {
            Ok(set) => set,
            Err(e) if is_divergence(&e) => return diverged(row, &e.to_string()),
            Err(e) => return Err(e),
        };
        row.n_samples = set.len();
        if set.samples.iter().any(|w| !w.is_finite()) {
            return diverged(row, "non-finite sample");
        }
        let functions = self.functions(&set.samples)?;
        if functions.iter().flatten().any(|v| !v.is_finite()) {
            return diverged(row, "non-finite prediction");
        }
        let (sigma, n_noise) = match c.coverage_target {
            CoverageTarget::Latent => (0.0, 0),
            CoverageTarget::Observed => (self.bundle.task.noise_sigma, c.noise_draws),
        };
        let band = predictive_band(&functions, sigma, &c.levels, n_noise, split_seed(seed, &[2]))?;
        let hits: Vec<Vec<bool>> = (0..c.levels.len()).map(|l| band.contains(l, &self.targets)).collect();
        let primary = band.level_index(c.primary_level).expect("validated level");
        row.status = Status::Ok;
        row.picp = Some(hits[primary].iter().filter(|&&h| h).count() as f64 / self.targets.len() as f64);
        row.q2 = Some(q2(&band.mean, &self.targets)?);
        row.mmd_weight = Some(mmd(&set.samples, &reference.weights)?);
        row.mmd_function = Some(mmd(&functions, &reference.functions)?);
        if let Some(l) = lengthscale {
            row.ksd = self.ksd(&set.samples, posterior, l, &row.label, replicate);
        }
        let kept = keep.then_some((set.samples, functions));
        Ok(RunOutcome {
            row,
            coverage: Some(RunCoverage { replicate, hits }),
            seconds: start.elapsed().as_secs_f64(),
            kept,
        })
    }

    /// KSD of one sample set; a sample with a non-finite score leaves the
    /// value empty instead of failing the cell.
    fn ksd(
        &self,
        samples: &[ParamVector],
        posterior: &PosteriorSpec,
        l: f64,
        label: &str,
        replicate: usize,
    ) -> Option<f64> {
        match ksd(samples, &PosteriorScore(posterior), &KernelSpec::imq(l)) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{} {label} replicate {replicate}: KSD unavailable ({e})", self.task);
                None
            }
        }
    }

    fn run_replicate(&self, replicate: usize, lengthscale: Option<f64>, keep: bool) -> Result<ReplicateOutcome> {
        let posterior = self.posterior(replicate)?;
        let map_opt = self.config.map.with_seed(self.seed(MAP_STREAM, 0, replicate));
        let map = train_map(&posterior, &map_opt)?;
        let reference = self.reference(&posterior, &map, replicate)?;
        log::info!(
            "{} replicate {replicate}: HMC acceptance {:.3} at step {:.3e}",
            self.task,
            reference.summary.acceptance_rate,
            reference.summary.step_size
        );
        let runs = self
            .cells
            .iter()
            .map(|cell| self.run_cell(cell, replicate, &posterior, &map, &reference, lengthscale, keep))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplicateOutcome { runs, reference })
    }
}

/// Runs the whole sweep. Datasets and the HMC cache go under `out_dir`;
/// tables are returned for [`write_outputs`].
///
/// Replicate 0 runs first and keeps its samples: they fix the per-task IMQ
/// lengthscale (median heuristic over all methods) and feed the pairwise
/// discrepancy matrices. The remaining replicates run in parallel.
pub fn run_benchmark(config: &ExperimentConfig, out_dir: &Path) -> Result<BenchmarkOutput> {
    config.validate()?;
    par::with_workers(config.workers, || run_all(config, out_dir))
}

fn run_all(config: &ExperimentConfig, out_dir: &Path) -> Result<BenchmarkOutput> {
    let mut out = BenchmarkOutput {
        rows: Vec::new(),
        aggregates: Vec::new(),
        curves: Vec::new(),
        ccp: Vec::new(),
        hmc: Vec::new(),
        timings: Vec::new(),
        lengthscales: Vec::new(),
        matrices: Vec::new(),
        embeddings: Vec::new(),
    };
    let cells: Vec<Cell> = config.algorithms.iter().flat_map(|g| g.cells()).collect();
    for &task in &config.tasks {
        let bundle = task_bundle(config, task)?;
        write_bundle(&bundle, &out_dir.join("datasets"))?;
        let targets = match config.coverage_target {
            CoverageTarget::Latent => bundle.latent_test.clone(),
            CoverageTarget::Observed => bundle.test_targets().to_vec(),
        };
        let ctx = TaskContext {
            config,
            task,
            arch: config.architecture(task)?,
            bundle,
            cells: cells.clone(),
            targets,
            cache_dir: out_dir.join("hmc_cache"),
        };
        log::info!("{task}: {} cells × {} replicates", cells.len(), config.n_replicates);

        let mut first = ctx.run_replicate(0, None, true)?;
        let kept: Vec<Option<(Vec<ParamVector>, Vec<Vec<f64>>)>> =
            first.runs.iter_mut().map(|r| r.kept.take()).collect();
        let mut pooled: Vec<ParamVector> = evenly_spaced(&first.reference.weights, config.matrix_points);
        for (w, _) in kept.iter().flatten() {
            pooled.extend(evenly_spaced(w, config.matrix_points));
        }
        let lengthscale = median_heuristic(
            &pooled,
            config.lengthscale_subsample,
            run_seed(config.seed, task, LENGTHSCALE_STREAM, 0, 0),
        )?;
        drop(pooled);
        out.lengthscales.push((task, lengthscale));
        let posterior0 = ctx.posterior(0)?;
        for (run, k) in first.runs.iter_mut().zip(&kept) {
            if let Some((w, _)) = k {
                run.row.ksd = ctx.ksd(w, &posterior0, lengthscale, &run.row.label, 0);
            }
        }
        let (matrices, embeddings) = similarity(&ctx, &first.reference, &kept)?;
        drop(kept);
        out.matrices.extend(matrices.into_iter().map(|(s, m)| (task, s, m)));
        out.embeddings.extend(embeddings.into_iter().map(|(s, e)| (task, s, e)));

        let rest = par::map_range(config.n_replicates - 1, |i| {
            ctx.run_replicate(i + 1, Some(lengthscale), false)
        });
        let mut replicates = vec![first];
        for r in rest {
            replicates.push(r?);
        }
        collect_task(&ctx, replicates, &mut out)?;
    }
    Ok(out)
}

/// Pairwise MMD between HMC and every ok cell of replicate 0, in weight and
/// function space, and their embeddings.
#[allow(clippy::type_complexity)]
fn similarity(
    ctx: &TaskContext<'_>,
    reference: &Reference,
    kept: &[Option<(Vec<ParamVector>, Vec<Vec<f64>>)>],
) -> Result<(Vec<(Space, DiscrepancyMatrix)>, Vec<(Space, MdsEmbedding)>)> {
    let m = ctx.config.matrix_points;
    let mut labels = vec![HMC_STREAM.to_string()];
    let mut weights = vec![evenly_spaced(&reference.weights, m)];
    let mut functions = vec![evenly_spaced(&reference.functions, m)];
    for (cell, k) in ctx.cells.iter().zip(kept) {
        if let Some((w, f)) = k {
            labels.push(cell.label());
            weights.push(evenly_spaced(w, m));
            functions.push(evenly_spaced(f, m));
        }
    }
    let weight = DiscrepancyMatrix::from_fn(labels.clone(), |i, j| {
        mmd(&weights[i], &weights[j]).expect("non-empty sample sets")
    })?;
    let function = DiscrepancyMatrix::from_fn(labels, |i, j| {
        mmd(&functions[i], &functions[j]).expect("non-empty sample sets")
    })?;
    let mut embeddings = Vec::new();
    let mut matrices = Vec::new();
    for (space, matrix) in [(Space::Weight, weight), (Space::Function, function)] {
        if matrix.len() >= 2 {
            embeddings.push((space, mds_embed(&matrix, ctx.config.mds_dim)?));
        }
        matrices.push((space, matrix));
    }
    Ok((matrices, embeddings))
}

fn collect_task(ctx: &TaskContext<'_>, replicates: Vec<ReplicateOutcome>, out: &mut BenchmarkOutput) -> Result<()> {
    let c = ctx.config;
    let mut by_cell: BTreeMap<usize, Vec<RunOutcome>> = BTreeMap::new();
    for rep in replicates {
        out.hmc.push(rep.reference.summary);
        for (i, run) in rep.runs.into_iter().enumerate() {
            by_cell.entry(i).or_default().push(run);
        }
    }
    for (i, runs) in by_cell {
        let key = CellKey::new(ctx.task, &ctx.cells[i]);
        let coverage: Vec<RunCoverage> = runs.iter().filter_map(|r| r.coverage.clone()).collect();
        let rows: Vec<&ResultRow> = runs.iter().map(|r| &r.row).collect();
        let (agg, report) = aggregate_cell(&key, &rows, &coverage, &c.levels, c.primary_level)?;
        out.aggregates.push(agg);
        out.curves.extend(coverage_curve(&key, &coverage, &c.levels));
        if let Some(report) = report {
            let xs = ctx.bundle.test_inputs();
            out.ccp.extend(report.ccp.iter().enumerate().map(|(t, &ccp)| CcpRow {
                task: ctx.task,
                label: key.label.clone(),
                test_index: t,
                x: xs[t],
                level: c.primary_level,
                ccp,
            }));
        }
        for run in runs {
            out.timings.push(TimingRow {
                task: ctx.task,
                label: run.row.label.clone(),
                replicate: run.row.replicate,
                seconds: run.seconds,
            });
            out.rows.push(run.row);
        }
    }
    Ok(())
}

/// Writes every table of `output` under `dir`:
/// `results.csv`, `aggregates.csv`, `hmc_summary.csv`, `timings.csv`,
/// `lengthscales.csv`, and per task `coverage_curves_<task>.csv`,
/// `ccp_<task>.csv`, `mmd_matrix_<task>.csv` and `mds_<task>.csv`.
pub fn write_outputs(output: &BenchmarkOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &output.rows)?;
    write_csv(&dir.join("aggregates.csv"), &output.aggregates)?;
    write_csv(&dir.join("hmc_summary.csv"), &output.hmc)?;
    write_csv(&dir.join("timings.csv"), &output.timings)?;
    #[derive(serde::Serialize)]
    struct Lengthscale {
        task: TaskId,
        lengthscale: f64,
    }
    let ls: Vec<Lengthscale> = output
        .lengthscales
        .iter()
        .map(|&(task, lengthscale)| Lengthscale { task, lengthscale })
        .collect();
    write_csv(&dir.join("lengthscales.csv"), &ls)?;
    let mut tasks: Vec<TaskId> = output.rows.iter().map(|r| r.task).collect();
    tasks.dedup();
    for task in tasks {
        let curves: Vec<&CurveRow> = output.curves.iter().filter(|r| r.task == task).collect();
        write_csv(&dir.join(format!("coverage_curves_{task}.csv")), &curves)?;
        let ccp: Vec<&CcpRow> = output.ccp.iter().filter(|r| r.task == task).collect();
        write_csv(&dir.join(format!("ccp_{task}.csv")), &ccp)?;
        let entries: Vec<MatrixEntry> = output
            .matrices
            .iter()
            .filter(|(t, _, _)| *t == task)
            .flat_map(|(_, space, m)| matrix_entries(*space, m))
            .collect();
        write_csv(&dir.join(format!("mmd_matrix_{task}.csv")), &entries)?;
        let embedded: Vec<(Space, DiscrepancyMatrix, MdsEmbedding)> = output
            .embeddings
            .iter()
            .filter(|(t, _, _)| *t == task)
            .filter_map(|(_, space, e)| {
                output
                    .matrices
                    .iter()
                    .find(|(t, s, _)| *t == task && s == space)
                    .map(|(_, _, m)| (*space, m.clone(), e.clone()))
            })
            .collect();
        write_mds(&dir.join(format!("mds_{task}.csv")), &embedded)?;
    }
    Ok(())
}

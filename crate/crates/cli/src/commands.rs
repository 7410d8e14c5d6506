use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fairstream::exec::Execution;
use fairstream::fairpca::{self, FairPcaModel, FnpmConfig, ModelConfig, UnfairRank, DEFAULT_G_THRESHOLD};
use fairstream::linalg::{dot, sin_distance, DenseMatrix};
use fairstream::metrics::{
    fairness_spectral_norm, mmd_squared, pafo_probe, suboptimality, Bandwidth, EvalReport, Kernel, MmdEstimator,
    ProbeConfig, ProbeGridPoint,
};
use fairstream::oracle;
use fairstream::stream::{center_in_place, CenteredStream, CsvWriter, SampleStream, SyntheticSpec};
use fairstream::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::input::{check_same_file, data_mean, finish_data, load_data, open_data, schema_from};
use crate::manifest::{read_small, write_manifest, write_text, InputDigest, ManifestInput, RunClock};
use crate::{CompareArgs, EvalArgs, FitArgs, KernelArg, Metric, OracleArgs, ProbeArgs, SynthArgs};

const DEFAULT_BLOCK: usize = 1000;
const DEFAULT_ITERS: usize = 5;

fn execution(parallel: bool) -> Execution {
    if parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn load_spec(path: &Path) -> Result<(SyntheticSpec, InputDigest)> {
    let (text, digest) = read_small("spec", path)?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok((spec, digest))
}

fn load_model(role: &str, path: &Path) -> Result<(FairPcaModel, InputDigest)> {
    let (text, digest) = read_small(role, path)?;
    Ok((FairPcaModel::from_json(&text)?, digest))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let clock = RunClock::start();
    let (spec, digest) = load_spec(&a.spec)?;
    let mut stream = spec.stream()?;
    let file = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut writer = CsvWriter::new(BufWriter::new(file), 1, spec.dim).map_err(|e| Error::io(&a.out, e))?;
    for _ in 0..a.n {
        writer.write(&stream.draw()).map_err(|e| Error::io(&a.out, e))?;
    }
    let out = writer.finish().map_err(|e| Error::io(&a.out, e))?;
    out.into_inner().map_err(|e| Error::io(&a.out, e.into_error()))?;
    write_manifest(
        &a.out,
        &clock,
        ManifestInput {
            subcommand: "synth",
            config: json!({ "n": a.n, "spec": spec }),
            inputs: vec![digest],
            outputs: vec![a.out.clone()],
            seeds: json!({ "rotation_seed": spec.rotation_seed, "sample_seed": spec.sample_seed }),
        },
    )?;
    Ok(())
}

/// Keys accepted by `--config`; every one is optional and a flag wins.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    m: Option<UnfairRank>,
    b: Option<usize>,
    #[serde(rename = "B")]
    big_b: Option<usize>,
    #[serde(rename = "T")]
    t: Option<usize>,
    #[serde(rename = "Tau")]
    tau: Option<usize>,
    g_threshold: Option<f64>,
    degenerate_threshold: Option<f64>,
    #[serde(alias = "rng_seed")]
    seed: Option<u64>,
    multi_schema: Option<Vec<usize>>,
    center: Option<bool>,
    parallel: Option<bool>,
    vanilla: Option<bool>,
}

fn read_config(path: Option<&PathBuf>) -> Result<(ConfigFile, Option<InputDigest>)> {
    match path {
        None => Ok((ConfigFile::default(), None)),
        Some(p) => {
            let (text, digest) = read_small("config", p)?;
            let cfg = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
            Ok((cfg, Some(digest)))
        }
    }
}

fn required_k(flag: Option<usize>, file: Option<usize>) -> Result<usize> {
    flag.or(file)
        .ok_or_else(|| Error::InvalidConfig("k is required (--k or \"k\" in --config)".into()))
}

/// Flags and their provenance after merging with `--config`.
#[derive(Serialize)]
struct FitPlan {
    fnpm: FnpmConfig,
    multi_schema: Option<Vec<usize>>,
    center: bool,
    parallel: bool,
}

fn fit_plan(a: &FitArgs, file: ConfigFile) -> Result<FitPlan> {
    let parallel = a.parallel || file.parallel.unwrap_or(false);
    let mut fnpm = FnpmConfig::new(
        required_k(a.k, file.k)?,
        0,
        a.block_b.or(file.b).unwrap_or(DEFAULT_BLOCK),
        a.block_big_b.or(file.big_b).unwrap_or(DEFAULT_BLOCK),
        a.iters_t.or(file.t).unwrap_or(DEFAULT_ITERS),
        a.iters_tau.or(file.tau).unwrap_or(DEFAULT_ITERS),
    )
    .with_seed(a.seed.or(file.seed).unwrap_or(0))
    .with_execution(execution(parallel));
    fnpm.m = a.m.clone().or(file.m).unwrap_or_default();
    if let Some(g) = a.g_threshold.or(file.g_threshold) {
        fnpm.g_threshold = g;
    }
    if let Some(t) = a.degenerate_threshold.or(file.degenerate_threshold) {
        fnpm.degenerate_threshold = t;
    }
    fnpm.validate()?;
    let multi_schema = a.multi_schema.clone().or(file.multi_schema);
    if multi_schema.is_none() {
        fnpm.m.single()?;
    }
    Ok(FitPlan {
        fnpm,
        multi_schema,
        center: a.center || file.center.unwrap_or(false),
        parallel,
    })
}

fn check_budget(plan: &FitPlan, dim: usize, schema: &fairstream::stream::AttributeSchema) -> Result<()> {
    match &plan.multi_schema {
        Some(_) => plan.fnpm.check_multi_dim(dim, schema),
        None => plan.fnpm.check_binary_dim(dim),
    }
}

pub fn fit(a: FitArgs) -> Result<()> {
    let clock = RunClock::start();
    let (file, config_digest) = read_config(a.config.as_ref())?;
    let plan = fit_plan(&a, file)?;
    let schema = schema_from(plan.multi_schema.as_deref())?;
    let multi = plan.multi_schema.is_some();
    let mut inputs: Vec<InputDigest> = config_digest.into_iter().collect();
    let mut seeds = json!({ "rng_seed": plan.fnpm.rng_seed });

    let model = match (&a.data, &a.spec) {
        (Some(path), _) => {
            // Opening reads only the header, so the budget is checked
            // before any sample is consumed.
            let probe = open_data(path, schema.clone())?;
            check_budget(&plan, probe.dim(), &schema)?;
            drop(probe);
            if plan.center {
                let (mean, first) = data_mean(path, schema.clone())?;
                let mut stream = open_data(path, schema)?;
                let model = fairpca::fit(&mut CenteredStream::new(&mut stream, mean)?, &plan.fnpm, multi)?;
                let second = finish_data("data", path, stream)?;
                check_same_file(&first, &second)?;
                inputs.push(second);
                model
            } else {
                let mut stream = open_data(path, schema)?;
                let model = fairpca::fit(&mut stream, &plan.fnpm, multi)?;
                inputs.push(finish_data("data", path, stream)?);
                model
            }
        }
        (None, Some(path)) => {
            if plan.center {
                return Err(Error::InvalidConfig(
                    "--center needs a finite --data file; synthetic streams already have zero mean".into(),
                ));
            }
            if multi {
                return Err(Error::InvalidConfig("synthetic specs have a single binary attribute".into()));
            }
            let (spec, digest) = load_spec(path)?;
            inputs.push(digest);
            seeds["sample_seed"] = json!(spec.sample_seed);
            seeds["rotation_seed"] = json!(spec.rotation_seed);
            check_budget(&plan, spec.dim, &schema)?;
            fairpca::fit(&mut spec.stream()?, &plan.fnpm, false)?
        }
        (None, None) => unreachable!("clap requires --data or --spec"),
    };
    model.save(&a.out)?;
    write_manifest(
        &a.out,
        &clock,
        ManifestInput {
            subcommand: "fit",
            config: serde_json::to_value(&plan)?,
            inputs,
            outputs: vec![a.out.clone()],
            seeds,
        },
    )?;
    Ok(())
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let clock = RunClock::start();
    let (file, config_digest) = read_config(a.config.as_ref())?;
    let k = required_k(a.k, file.k)?;
    let m = a.m.clone().or(file.m).unwrap_or_default();
    let g_threshold = a.g_threshold.or(file.g_threshold).unwrap_or(DEFAULT_G_THRESHOLD);
    let multi_schema = a.multi_schema.clone().or(file.multi_schema);
    let center = a.center || file.center.unwrap_or(false);
    let vanilla = a.vanilla || file.vanilla.unwrap_or(false);
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if vanilla && multi_schema.is_some() {
        return Err(Error::InvalidConfig("--vanilla ignores attributes; drop --multi-schema".into()));
    }
    let schema = schema_from(multi_schema.as_deref())?;
    let ranks = m.per_attribute(schema.attribute_count())?;

    let (mut data, digest) = load_data(&a.data, schema.clone())?;
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, available: 0 });
    }
    if center {
        center_in_place(&mut data)?;
    }
    let mut model = if multi_schema.is_some() {
        oracle::offline_model_multi(&data, &schema, &ranks, k, g_threshold)?
    } else {
        let stats = oracle::offline_statistics(&data)?;
        if vanilla {
            oracle::vanilla_model(&stats, k)?
        } else {
            oracle::offline_model(&stats, ranks[0], k, g_threshold)?
        }
    };
    if let ModelConfig::Offline(c) = &mut model.config {
        c.centered = center;
    }
    model.save(&a.out)?;
    let mut inputs: Vec<InputDigest> = config_digest.into_iter().collect();
    inputs.push(digest);
    write_manifest(
        &a.out,
        &clock,
        ManifestInput {
            subcommand: "oracle",
            config: json!({
                "k": k, "m": m, "g_threshold": g_threshold, "multi_schema": multi_schema,
                "center": center, "vanilla": vanilla,
            }),
            inputs,
            outputs: vec![a.out.clone()],
            seeds: json!({}),
        },
    )?;
    Ok(())
}

/// What a single pass over the evaluation data collects.
struct EvalPass {
    n: u64,
    captured: f64,
    total: f64,
    /// Projected rows of group 0 and of everyone else, row-major.
    projected: [Vec<f64>; 2],
    sigma: Option<DenseMatrix>,
}

fn eval_pass<S: SampleStream>(stream: &mut S, model: &FairPcaModel, want_sigma: bool) -> Result<EvalPass> {
    let d = model.dim();
    if stream.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "model has dimension {d}, data has {}",
            stream.dim()
        )));
    }
    let mut pass = EvalPass {
        n: 0,
        captured: 0.0,
        total: 0.0,
        projected: [Vec::new(), Vec::new()],
        sigma: want_sigma.then(|| DenseMatrix::zeros(d, d)),
    };
    while let Some(s) = stream.next_sample()? {
        let y = model.transform(&s.features)?;
        pass.captured += dot(&y, &y);
        pass.total += dot(&s.features, &s.features);
        pass.projected[usize::from(s.attributes[0] != 0)].extend_from_slice(&y);
        if let Some(sigma) = &mut pass.sigma {
            let data = sigma.as_mut_slice();
            for (i, xi) in s.features.iter().enumerate() {
                fairstream::linalg::axpy(*xi, &s.features, &mut data[i * d..(i + 1) * d]);
            }
        }
        pass.n += 1;
    }
    if pass.n == 0 {
        return Err(Error::InsufficientData { needed: 1, available: 0 });
    }
    if let Some(sigma) = &mut pass.sigma {
        sigma.scale(1.0 / pass.n as f64);
    }
    Ok(pass)
}

fn rows(flat: Vec<f64>, k: usize) -> Result<DenseMatrix> {
    if flat.is_empty() {
        Ok(DenseMatrix::zeros(0, k))
    } else {
        DenseMatrix::from_row_major(flat.len() / k, k, flat)
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let clock = RunClock::start();
    let (model, model_digest) = load_model("model", &a.model)?;
    let against = a.against.as_ref().map(|p| load_model("against", p)).transpose()?;
    let metrics = a.metrics.clone().unwrap_or_else(|| {
        let mut m = vec![Metric::Var, Metric::Fairnorm, Metric::Mmd];
        if against.is_some() {
            m.push(Metric::Subopt);
        }
        m
    });
    let want = |m: Metric| metrics.contains(&m);
    if want(Metric::Subopt) && against.is_none() {
        return Err(Error::InvalidConfig("subopt needs a reference model (--against)".into()));
    }
    if let Some((r, _)) = &against {
        if r.dim() != model.dim() || r.k() != model.k() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{}, reference is {}x{}",
                model.dim(),
                model.k(),
                r.dim(),
                r.k()
            )));
        }
    }
    let kernel = match (a.kernel, a.bandwidth) {
        (KernelArg::Linear, _) => Kernel::Linear,
        (KernelArg::Rbf, Some(s)) => Kernel::Rbf {
            bandwidth: Bandwidth::Fixed(s),
        },
        (KernelArg::Rbf, None) => Kernel::default(),
    };
    let estimator = if a.unbiased {
        MmdEstimator::Unbiased
    } else {
        MmdEstimator::Biased
    };
    let schema = schema_from(a.multi_schema.as_deref())?;
    let want_sigma = want(Metric::Subopt);

    let mut inputs = vec![model_digest];
    inputs.extend(against.as_ref().map(|(_, d)| d.clone()));
    let pass = if a.center {
        let (mean, first) = data_mean(&a.data, schema.clone())?;
        let mut stream = open_data(&a.data, schema)?;
        let pass = eval_pass(&mut CenteredStream::new(&mut stream, mean)?, &model, want_sigma)?;
        let second = finish_data("data", &a.data, stream)?;
        check_same_file(&first, &second)?;
        inputs.push(second);
        pass
    } else {
        let mut stream = open_data(&a.data, schema)?;
        let pass = eval_pass(&mut stream, &model, want_sigma)?;
        inputs.push(finish_data("data", &a.data, stream)?);
        pass
    };

    let mut report = EvalReport::default();
    if want(Metric::Var) {
        report.explained_variance = Some(pass.captured / pass.n as f64);
        report.explained_variance_pct = Some(if pass.total > 0.0 { 100.0 * pass.captured / pass.total } else { 0.0 });
    }
    if want(Metric::Fairnorm) {
        let u = against.as_ref().map(|(r, _)| &r.unfair.basis).unwrap_or(&model.unfair.basis);
        report.fairness_norm = Some(fairness_spectral_norm(u, &model.loading)?);
    }
    let EvalPass { projected, sigma, .. } = pass;
    if want(Metric::Mmd) {
        let [p0, p1] = projected;
        let (g0, g1) = (rows(p0, model.k())?, rows(p1, model.k())?);
        report.mmd_squared = Some(mmd_squared(&g0, &g1, kernel, estimator, execution(a.parallel))?);
    }
    if let Some((r, _)) = &against {
        if let Some(sigma) = &sigma {
            report.suboptimality = Some(suboptimality(&model.loading, &r.loading, sigma)?);
        }
        report.sin_to_oracle = Some(sin_distance(&r.loading, &model.loading)?);
    }

    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(out) => {
            write_text(out, &text)?;
            write_manifest(
                out,
                &clock,
                ManifestInput {
                    subcommand: "eval",
                    config: json!({
                        "metrics": metrics.iter().map(|m| format!("{m:?}").to_lowercase()).collect::<Vec<_>>(),
                        "kernel": kernel, "estimator": estimator, "center": a.center,
                        "multi_schema": a.multi_schema,
                    }),
                    inputs,
                    outputs: vec![out.clone()],
                    seeds: json!({}),
                },
            )?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    sin_distance: f64,
    /// `‖U_aᵀ V_b‖₂`
    fairness_a_on_b: f64,
    /// `‖U_bᵀ V_a‖₂`
    fairness_b_on_a: f64,
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let clock = RunClock::start();
    let (ma, da) = load_model("model_a", &a.model_a)?;
    let (mb, db) = load_model("model_b", &a.model_b)?;
    if ma.dim() != mb.dim() || ma.k() != mb.k() {
        return Err(Error::DimensionMismatch(format!(
            "models are {}x{} and {}x{}",
            ma.dim(),
            ma.k(),
            mb.dim(),
            mb.k()
        )));
    }
    let c = Comparison {
        sin_distance: sin_distance(&ma.loading, &mb.loading)?,
        fairness_a_on_b: fairness_spectral_norm(&ma.unfair.basis, &mb.loading)?,
        fairness_b_on_a: fairness_spectral_norm(&mb.unfair.basis, &ma.loading)?,
    };
    let text = serde_json::to_string_pretty(&c)?;
    println!("{text}");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
        write_manifest(
            out,
            &clock,
            ManifestInput {
                subcommand: "compare",
                config: json!({}),
                inputs: vec![da, db],
                outputs: vec![out.clone()],
                seeds: json!({}),
            },
        )?;
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let clock = RunClock::start();
    let (spec, spec_digest) = load_spec(&a.spec)?;
    let (grid_text, grid_digest) = read_small("grid", &a.grid_file)?;
    let grid: Vec<ProbeGridPoint> = serde_json::from_str(&grid_text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", a.grid_file.display())))?;
    let mut cfg = ProbeConfig::new(a.k, a.m, a.eps_o, a.eps_f, a.trials, a.seed).with_execution(execution(a.parallel));
    if let Some(g) = a.g_threshold {
        cfg.g_threshold = g;
    }
    let result = pafo_probe(&spec, &grid, &cfg)?;
    let json_out = with_suffix(&a.out, ".json");
    let csv_out = with_suffix(&a.out, ".csv");
    write_text(&json_out, &result.to_json()?)?;
    let csv = result.to_csv();
    write_text(&csv_out, csv.trim_end_matches('\n'))?;
    write_manifest(
        &json_out,
        &clock,
        ManifestInput {
            subcommand: "probe",
            config: serde_json::to_value(&cfg)?,
            inputs: vec![spec_digest, grid_digest],
            outputs: vec![json_out.clone(), csv_out],
            seeds: json!({ "base_seed": a.seed }),
        },
    )?;
    Ok(())
}

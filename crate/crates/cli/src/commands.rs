use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mixflow::distributions::{MixtureSpec, ReferenceDensity};
use mixflow::exec::Execution;
use mixflow::lais::{
    dm_lais, lais_sweep, sweep_slope, tqmc_lais, LaisConfig, LaisMethod, LaisRecord, Sweep,
    LAIS_CSV_HEADER,
};
use mixflow::pointsets::{
    fmt_f64, mc_points, smolyak_grid, uniform_to_normal, Halton, Provenance, SparseGridLevel,
    WeightedPointSet,
};
use mixflow::quadrature::{
    convergence_study_with, summarize, write_record_csv, write_record_json_line,
    write_records_header, ReferenceCache, StudyConfig,
};
use mixflow::transport::{componentwise_transport, transport_set_traced, transport_set_with};

use crate::config::{
    self, ConvergeConfig, Generator, GeneratorConfig, LaisCmdConfig, PointsSource, PointsetConfig,
    TransportCmdConfig, TransportMethod,
};
use crate::error::{CliError, CliResult};

/// Settings shared by every subcommand, from the global flags.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reproducible: bool,
    pub exec: Execution,
}

impl RunContext {
    fn out_dir(&self, from_config: &Option<PathBuf>) -> CliResult<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| from_config.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        Ok(dir)
    }

    fn create(&self, path: &Path) -> CliResult<BufWriter<File>> {
        let f = File::create(path).map_err(|e| CliError::io(path.display(), e))?;
        log::info!("writing {}", path.display());
        Ok(BufWriter::new(f))
    }

    /// Leading comment lines for a CSV; the timestamp line is dropped under `--reproducible`.
    fn csv_comments(&self, mut lines: Vec<String>) -> Vec<String> {
        if !self.reproducible {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            lines.insert(0, format!("generated_unix_time {now}"));
        }
        lines
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path.display(), e)
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    comments.iter().try_for_each(|c| writeln!(out, "# {c}"))
}

fn write_json(ctx: &RunContext, path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut f = ctx.create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(mixflow::Error::from)?;
    writeln!(f, "{text}")
        .and_then(|_| f.flush())
        .map_err(io_err(path))
}

fn require(v: Option<usize>, what: &str, generator: &str) -> CliResult<usize> {
    v.ok_or_else(|| CliError::Config(format!("generator `{generator}` needs `{what}`")))
}

/// Builds the point set described by `g` together with its metadata comments.
fn generate(
    g: &GeneratorConfig,
    default_dim: Option<usize>,
    default_normal: bool,
    seed: Option<u64>,
) -> CliResult<(WeightedPointSet, Vec<String>)> {
    let dim = match (g.dim, default_dim) {
        (Some(d), Some(m)) if d != m => {
            return Err(CliError::Config(format!(
                "point dimension {d} does not match the mixture dimension {m}"
            )))
        }
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => return Err(CliError::Config("point generator needs `dim`".into())),
    };
    let mut comments = Vec::new();
    let set = match g.generator {
        Generator::Halton => {
            let n = require(g.n, "n", "halton")?;
            let mut h = Halton::new(dim, g.skip, g.leap)?;
            comments.push("generator halton".into());
            comments.push(format!("skip {} leap {}", g.skip, g.leap));
            if let Some(s) = g.scramble_seed.map(|s| seed.unwrap_or(s)) {
                h = h.scrambled(s);
                comments.push(format!("seed {s}"));
            }
            let mut points = h.points(n);
            if g.normal.unwrap_or(default_normal) {
                points = uniform_to_normal(&points)?;
                comments.push("map normal".into());
            }
            WeightedPointSet::uniform(dim, points, Provenance::QmcHalton)?
        }
        Generator::SparseGrid => {
            let level = require(g.level, "level", "sparse-grid")?;
            comments.push("generator sparse-grid".into());
            comments.push(format!("level {level}"));
            smolyak_grid(SparseGridLevel::gauss_hermite(level, dim))?
        }
        Generator::Mc => {
            let n = require(g.n, "n", "mc")?;
            let s = seed.unwrap_or(g.seed);
            comments.push("generator mc".into());
            comments.push(format!("seed {s}"));
            mc_points(dim, n, &mut ChaCha8Rng::seed_from_u64(s))
        }
    };
    comments.push(format!("dim {dim} n {}", set.len()));
    Ok((set, comments))
}

fn write_points(
    ctx: &RunContext,
    path: &Path,
    set: &WeightedPointSet,
    comments: Vec<String>,
) -> CliResult<()> {
    let mut f = ctx.create(path)?;
    set.write_csv(&mut f, &ctx.csv_comments(comments))
        .and_then(|_| f.flush())
        .map_err(io_err(path))
}

pub fn cmd_pointset(config_path: &Path, ctx: &RunContext) -> CliResult<()> {
    let cfg: PointsetConfig = config::load(config_path, config::POINTSET_SCHEMA)?;
    let (set, comments) = generate(&cfg.points, None, false, ctx.seed)?;
    let dir = ctx.out_dir(&cfg.output)?;
    write_points(ctx, &dir.join("points.csv"), &set, comments)
}

pub fn cmd_transport(config_path: &Path, ctx: &RunContext) -> CliResult<()> {
    let cfg: TransportCmdConfig = config::load(config_path, config::TRANSPORT_SCHEMA)?;
    cfg.transport.validate()?;
    let spec = cfg.mixture.build()?;
    let gaussian = matches!(spec.reference(), ReferenceDensity::StandardNormal { .. });
    let (input, mut comments) = match &cfg.points {
        PointsSource::File(p) => {
            let f = File::open(p).map_err(io_err(p))?;
            let set = WeightedPointSet::read_csv(BufReader::new(f), Provenance::Mc)?;
            if set.dim() != spec.dim() {
                return Err(CliError::Config(format!(
                    "input points have dimension {}, the mixture has {}",
                    set.dim(),
                    spec.dim()
                )));
            }
            (set, vec![format!("input {}", p.display())])
        }
        PointsSource::Generate(g) => generate(g, Some(spec.dim()), gaussian, ctx.seed)?,
    };
    let dir = ctx.out_dir(&cfg.output)?;
    comments.push(format!("mixture {}", cfg.mixture.id(&spec)));
    let out = match cfg.method {
        TransportMethod::Componentwise => {
            comments.push("transport componentwise".into());
            componentwise_transport(&spec, &input)?
        }
        TransportMethod::Ode if cfg.trajectory => {
            comments.push(format!("transport ode {}", cfg.transport.scheme));
            let (out, steps) = transport_set_traced(&spec, &cfg.transport, &input, ctx.exec)?;
            let path = dir.join("trajectory.csv");
            let mut f = ctx.create(&path)?;
            let header: Vec<String> = (1..=spec.dim()).map(|i| format!("x{i}")).collect();
            write_comments(&mut f, &ctx.csv_comments(Vec::new()))
                .and_then(|_| writeln!(f, "n,t,{}", header.join(",")))
                .map_err(io_err(&path))?;
            for s in &steps {
                let xs: Vec<String> = s.x.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(f, "{},{},{}", s.index, fmt_f64(s.t), xs.join(","))
                    .map_err(io_err(&path))?;
            }
            f.flush().map_err(io_err(&path))?;
            out
        }
        TransportMethod::Ode => {
            comments.push(format!("transport ode {}", cfg.transport.scheme));
            transport_set_with(&spec, &cfg.transport, &input, ctx.exec)?
        }
    };
    write_points(ctx, &dir.join("transported.csv"), &out, comments)
}

pub fn cmd_converge(config_path: &Path, ctx: &RunContext) -> CliResult<()> {
    let cfg: ConvergeConfig = config::load(config_path, config::CONVERGE_SCHEMA)?;
    if cfg.mixtures.is_empty() {
        return Err(CliError::Config("`mixtures` must not be empty".into()));
    }
    let specs = cfg
        .mixtures
        .iter()
        .map(|m| m.build().map(|s| (m.id(&s), s)))
        .collect::<CliResult<Vec<(String, MixtureSpec)>>>()?;
    let seeds = ctx
        .seed
        .map(|s| vec![s])
        .unwrap_or_else(|| cfg.seeds.clone());
    let dir = ctx.out_dir(&cfg.output)?;
    let mut cache = match &cfg.reference_cache {
        Some(p) => ReferenceCache::open(dir.join(p))?,
        None => ReferenceCache::in_memory(),
    };
    let csv_path = dir.join("records.csv");
    let jsonl_path = dir.join("records.jsonl");
    let mut csv = ctx.create(&csv_path)?;
    let mut jsonl = ctx.create(&jsonl_path)?;
    write_comments(&mut csv, &ctx.csv_comments(Vec::new()))
        .and_then(|_| write_records_header(&mut csv))
        .map_err(io_err(&csv_path))?;
    let timing = !ctx.reproducible;
    let mut summaries = Vec::new();
    let mut failure = None;
    for (id, spec) in &specs {
        let mut study = StudyConfig::new(
            cfg.methods.clone(),
            cfg.integrands.clone(),
            cfg.n_grid.clone(),
            seeds.clone(),
        );
        study.transport = cfg.transport.clone();
        study.halton = cfg.halton.clone();
        study.reference = cfg.reference.clone();
        study.mixture_id = id.clone();
        let mut records = Vec::new();
        let result = convergence_study_with(spec, &study, &mut cache, ctx.exec, &mut |r| {
            write_record_csv(&mut csv, r, timing).and_then(|_| csv.flush())?;
            write_record_json_line(&mut jsonl, r, timing)?;
            jsonl.flush()?;
            records.push(r.clone());
            Ok(())
        });
        summaries.push(json!({ "mixture": id, "dim": spec.dim(), "components": spec.num_components(), "rates": summarize(&records) }));
        if let Err(e) = result {
            failure = Some(e);
            break;
        }
    }
    cache.save()?;
    write_json(
        ctx,
        &dir.join("summary.json"),
        &json!({ "summaries": summaries }),
    )?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn write_lais_csv(
    ctx: &RunContext,
    path: &Path,
    comment: String,
    rows: &[LaisRecord],
) -> CliResult<()> {
    let mut f = ctx.create(path)?;
    write_comments(&mut f, &ctx.csv_comments(vec![comment]))
        .and_then(|_| writeln!(f, "{LAIS_CSV_HEADER}"))
        .map_err(io_err(path))?;
    for r in rows {
        writeln!(f, "{}", r.csv_row()).map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

fn slopes(rows: &[LaisRecord]) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for m in LaisMethod::ALL {
        let v = match sweep_slope(rows, m) {
            Ok(s) => json!({ "slope": s }),
            Err(e) => json!({ "slope": null, "note": e.to_string() }),
        };
        out.insert(m.name().into(), v);
    }
    serde_json::Value::Object(out)
}

pub fn cmd_lais(config_path: &Path, ctx: &RunContext) -> CliResult<()> {
    let cfg: LaisCmdConfig = config::load(config_path, config::LAIS_SCHEMA)?;
    let target = cfg.target.build()?;
    let mut base: LaisConfig = cfg.lais.clone();
    if let Some(s) = ctx.seed {
        base.seed = s;
    }
    base.validate()?;
    let seeds = ctx
        .seed
        .map(|s| vec![s])
        .unwrap_or_else(|| cfg.seeds.clone());
    if seeds.is_empty() {
        return Err(CliError::Config("`seeds` must not be empty".into()));
    }
    let truth = match &cfg.true_mean {
        Some(m) => m.clone(),
        None => {
            target
                .moments()
                .map_err(|_| CliError::Config("`true_mean` is required for this target".into()))?
                .mean
        }
    };
    let dir = ctx.out_dir(&cfg.output)?;
    let id = cfg.target.id(&target);

    let dm = dm_lais(&target, &base, |z| z.to_vec())?;
    let tq = tqmc_lais(&target, &base, |z| z.to_vec())?;
    let mut summary = json!({
        "target": id,
        "true_mean": truth,
        "results": { "dm-lais": dm, "tqmc-lais": tq },
    });

    if let Some(sw) = &cfg.m_sweep {
        let c = LaisConfig {
            chains: sw.chains,
            steps: sw.steps,
            ..base.clone()
        };
        let rows = lais_sweep(&target, &c, Sweep::Samples, &sw.values, &seeds, &truth)?;
        write_lais_csv(
            ctx,
            &dir.join("lais_m_sweep.csv"),
            format!("sweep M target {id}"),
            &rows,
        )?;
        summary["m_sweep"] = slopes(&rows);
    }
    if let Some(sw) = &cfg.t_sweep {
        let c = LaisConfig {
            chains: sw.chains,
            samples_per_component: sw.samples_per_component,
            ..base.clone()
        };
        let rows = lais_sweep(&target, &c, Sweep::Steps, &sw.values, &seeds, &truth)?;
        write_lais_csv(
            ctx,
            &dir.join("lais_t_sweep.csv"),
            format!("sweep T target {id}"),
            &rows,
        )?;
        summary["t_sweep"] = slopes(&rows);
    }
    write_json(ctx, &dir.join("lais.json"), &summary)
}

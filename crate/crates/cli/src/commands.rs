use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use simsr::baselines::{
    center_spacing, embedded, train_vae, MlsBaseline, MlsBasis, MlsConfig, Method, RbfBaseline, VaeConfig,
};
use simsr::datagen::{generate, perturb_dynamics, perturb_force, write_dataset, Dynamics, GenConfig, LoadedManifest};
use simsr::eval::{aggregate, bench as time_runs, export_heatmap, per_vertex_error, ErrorStats};
use simsr::geodesy::{precompute as build_table, NeighborhoodTable};
use simsr::mesh::{embed_surface, load_surface, read_frames, write_frames, DisplacementFrame, FrameSet, LatticeMesh, SurfaceMesh, Vec3};
use simsr::network::{displacement_scale, loss_log_csv, train as fit, ModelConfig, Variant};
use simsr::{Geometry32, Model32};

use crate::{BaselineArgs, BasisArg, BenchArgs, DatagenArgs, EvalArgs, InferArgs, ModelArgs, Perturbation, PrecomputeArgs, Split, TrainArgs};

const MODEL_FILE: &str = "model.ssck";
const CONFIG_FILE: &str = "model.cfg";

/// A dataset directory with its meshes and frames loaded.
struct Data {
    manifest: LoadedManifest,
    surface: SurfaceMesh,
    lattice: LatticeMesh,
    frames: FrameSet,
}

impl Data {
    fn open(path: &Path) -> Result<Self> {
        let manifest = LoadedManifest::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
        Ok(Data {
            surface: manifest.surface()?,
            lattice: manifest.lattice()?,
            frames: manifest.frames()?,
            manifest,
        })
    }

    fn table(&self) -> Result<NeighborhoodTable> {
        let path = self.manifest.table_path();
        NeighborhoodTable::read(&path)
            .with_context(|| format!("reading {} (run `simsr precompute` first)", path.display()))
    }

    fn select(&self, ids: &[u32]) -> Result<Vec<&DisplacementFrame>> {
        ids.iter()
            .map(|&id| {
                self.frames
                    .get(id)
                    .with_context(|| format!("frame {id} listed in the manifest is missing"))
            })
            .collect()
    }

    fn split(&self, split: Split) -> Result<Vec<&DisplacementFrame>> {
        let m = &self.manifest.manifest;
        match split {
            Split::Train => self.select(&m.train_frames),
            Split::Test => self.select(&m.test_frames),
            Split::All => Ok(self.frames.frames.iter().collect()),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn model_config(args: &ModelArgs, variant: Option<Variant>) -> Result<ModelConfig> {
    let mut c = match &args.config {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.lr {
        c.lr = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.k_interp {
        c.k_interp = v;
    }
    if let Some(v) = args.k_graph {
        c.k_graph = v;
    }
    if let Some(v) = args.beta_max {
        c.beta_max = v;
    }
    if let Some(v) = variant {
        c.variant = v;
    }
    c.validate()?;
    Ok(c)
}

fn result(pairs: &[(&str, String)]) {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("RESULT {}", body.join(" "));
}

fn predictions(frames: &[&DisplacementFrame], preds: Vec<Vec<Vec3>>) -> Vec<DisplacementFrame> {
    frames
        .iter()
        .zip(preds)
        .map(|(f, p)| DisplacementFrame {
            frame_id: f.frame_id,
            params: f.params.clone(),
            lr_disp: f.lr_disp.clone(),
            hr_disp: Some(p),
        })
        .collect()
}

fn score(preds: &[DisplacementFrame], targets: &[&DisplacementFrame]) -> Result<ErrorStats> {
    let mut rows = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        let (pv, tv) = match (&p.hr_disp, &t.hr_disp) {
            (Some(a), Some(b)) => (a, b),
            _ => bail!("frame {} has no surface displacements", t.frame_id),
        };
        rows.push((t.frame_id, per_vertex_error(pv, tv)?.1));
    }
    Ok(aggregate(&rows)?)
}

fn stats_pairs(s: &ErrorStats) -> Vec<(&'static str, String)> {
    vec![
        ("mean", format!("{:?}", s.mean)),
        ("median", format!("{:?}", s.median)),
        ("std", format!("{:?}", s.std)),
        ("max", format!("{:?}", s.max)),
        ("min", format!("{:?}", s.min)),
        ("frames", s.frames.len().to_string()),
    ]
}

pub fn datagen(a: DatagenArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => GenConfig::load(p)?,
        None => GenConfig::default(),
    };
    let d = generate(&config, a.seed)?;
    let m = write_dataset(&d, &a.out)?;
    result(&[
        ("lattice_vertices", d.lattice.vertex_count().to_string()),
        ("surface_vertices", d.surface.vertex_count().to_string()),
        ("frames", d.frames.frames.len().to_string()),
        ("train", m.train_frames.len().to_string()),
        ("test", m.test_frames.len().to_string()),
        ("manifest", a.out.join(simsr::datagen::MANIFEST_FILE).display().to_string()),
    ]);
    Ok(())
}

pub fn precompute(a: PrecomputeArgs) -> Result<()> {
    let manifest = LoadedManifest::open(&a.data)?;
    let surface = manifest.surface()?;
    let lattice = manifest.lattice()?;
    let start = Instant::now();
    let table = build_table(&surface, &lattice, a.k)?;
    let seconds = start.elapsed().as_secs_f64();
    let out = a.out.unwrap_or_else(|| manifest.table_path());
    table.write(&out)?;
    result(&[
        ("k", table.k().to_string()),
        ("surface_vertices", table.len().to_string()),
        ("seconds", format!("{seconds:.3}")),
        ("table", out.display().to_string()),
    ]);
    Ok(())
}

fn train_model(data: &Data, config: &ModelConfig, checkpoints: Option<&Path>) -> Result<(Model32, Geometry32, Vec<simsr::network::EpochLog>)> {
    let table = data.table()?;
    let train = data.split(Split::Train)?;
    let geo = Geometry32::new(config, &data.surface, &data.lattice, &table)?;
    let model = Model32::new(config.clone(), data.surface.vertex_count(), displacement_scale(&train))?;
    let (model, log) = fit(model, &geo, train, checkpoints)?;
    Ok((model, geo, log))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let variant = a.variant.as_deref().map(str::parse::<Variant>).transpose()?;
    let config = model_config(&a.model, variant)?;
    let data = Data::open(&a.data)?;
    ensure_dir(&a.out)?;
    let ckpt = a.out.join("checkpoints");
    if config.checkpoint_every > 0 {
        ensure_dir(&ckpt)?;
    }
    let start = Instant::now();
    let (model, _, log) = train_model(&data, &config, (config.checkpoint_every > 0).then_some(ckpt.as_path()))?;
    let seconds = start.elapsed().as_secs_f64();
    model.save(a.out.join(MODEL_FILE))?;
    write_text(&a.out.join(CONFIG_FILE), &config.to_text())?;
    write_text(&a.out.join("loss.csv"), &loss_log_csv(&log))?;
    let last = log.last().map_or(f64::NAN, |e| e.total);
    result(&[
        ("variant", config.variant.to_string()),
        ("epochs", log.len().to_string()),
        ("final_loss", format!("{last:?}")),
        ("seconds", format!("{seconds:.3}")),
        ("model", a.out.join(MODEL_FILE).display().to_string()),
    ]);
    Ok(())
}

fn load_model(data: &Data, dir: &Path) -> Result<(Model32, Geometry32)> {
    let config = ModelConfig::load(dir.join(CONFIG_FILE))?;
    let table = data.table()?;
    let geo = Geometry32::new(&config, &data.surface, &data.lattice, &table)?;
    let model = Model32::load(config, data.surface.vertex_count(), dir.join(MODEL_FILE))
        .with_context(|| format!("loading model from {}", dir.display()))?;
    Ok((model, geo))
}

fn perturbed(data: &Data, frames: &[&DisplacementFrame], a: &InferArgs) -> Result<Vec<DisplacementFrame>> {
    let owned: Vec<DisplacementFrame> = frames.iter().map(|&f| f.clone()).collect();
    Ok(match a.perturb {
        Perturbation::None => owned,
        Perturbation::Dynamics => perturb_dynamics(
            &owned,
            &data.lattice,
            Dynamics {
                amplitude: a.magnitude,
                period: a.period,
                ..Dynamics::default()
            },
        )?,
        Perturbation::Force => {
            let site = match &a.site {
                Some(s) => [s[0], s[1], s[2]],
                None => {
                    let b = data.lattice.bounds();
                    [0.5 * (b.min[0] + b.max[0]), 0.5 * (b.min[1] + b.max[1]), 0.5 * (b.min[2] + b.max[2])]
                }
            };
            let dir = [a.direction[0], a.direction[1], a.direction[2]];
            owned
                .iter()
                .map(|f| perturb_force(f, &data.lattice, site, a.magnitude, dir, a.radius))
                .collect::<simsr::Result<_>>()?
        }
    })
}

pub fn infer(a: InferArgs) -> Result<()> {
    let data = Data::open(&a.data)?;
    let (model, geo) = load_model(&data, &a.model)?;
    let frames = perturbed(&data, &data.split(a.frames)?, &a)?;
    let weights = model.interpolation_weights(&geo)?;
    let preds: Vec<Vec<Vec3>> = frames
        .par_iter()
        .map(|f| model.predict_with(&geo, &weights, &f.lr_disp))
        .collect::<simsr::Result<_>>()?;
    let finite = preds.iter().flatten().flatten().all(|v| v.is_finite());
    let max_abs = preds.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let refs: Vec<&DisplacementFrame> = frames.iter().collect();
    let out = predictions(&refs, preds);
    let count = out.len();
    write_frames(&FrameSet::new(data.lattice.vertex_count(), data.surface.vertex_count(), out)?, &a.out)?;
    result(&[
        ("frames", count.to_string()),
        ("finite", finite.to_string()),
        ("max_abs", format!("{max_abs:?}")),
        ("out", a.out.display().to_string()),
    ]);
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_frames(&a.pred)?;
    let target = read_frames(&a.target)?;
    let targets: Vec<&DisplacementFrame> = pred
        .frames
        .iter()
        .map(|p| {
            target
                .get(p.frame_id)
                .with_context(|| format!("target has no frame {}", p.frame_id))
        })
        .collect::<Result<_>>()?;
    let stats = score(&pred.frames, &targets)?;
    if let Some(csv) = &a.csv {
        write_text(csv, &stats.frame_csv(&a.method))?;
    }
    if let Some(ply) = &a.heatmap {
        let path = a.surface.as_ref().context("--heatmap needs --surface")?;
        let surface = load_surface(path)?;
        let id = a.heatmap_frame.unwrap_or(pred.frames[0].frame_id);
        let (p, t) = match (pred.get(id), target.get(id)) {
            (Some(p), Some(t)) => (p, t),
            _ => bail!("frame {id} is not in both containers"),
        };
        let rest = surface.vertices();
        let pos = |d: &Vec<Vec3>| -> Vec<Vec3> {
            d.iter()
                .zip(rest)
                .map(|(d, x)| [x[0] + d[0], x[1] + d[1], x[2] + d[2]])
                .collect()
        };
        let (e, _) = per_vertex_error(
            &pos(p.hr_disp.as_ref().context("prediction has no surface rows")?),
            &pos(t.hr_disp.as_ref().context("target has no surface rows")?),
        )?;
        export_heatmap(&surface, &e, ply)?;
    }
    let mut pairs = vec![("method", a.method.clone())];
    pairs.extend(stats_pairs(&stats));
    result(&pairs);
    Ok(())
}

pub fn baseline(a: BaselineArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let data = Data::open(&a.data)?;
    let test = data.split(Split::Test)?;
    ensure_dir(&a.out)?;
    let start = Instant::now();
    let mut extra: Vec<(&str, String)> = Vec::new();
    let preds: Vec<Vec<Vec3>> = match method {
        Method::Embedded => {
            let w = embed_surface(&data.surface, &data.lattice)?;
            test.iter().map(|f| embedded(&w, &f.lr_disp)).collect::<simsr::Result<_>>()?
        }
        Method::Rbf => {
            let rbf = RbfBaseline::new(&data.surface, &data.lattice, a.sigma)?;
            extra.push(("sigma", format!("{:?}", rbf.model().sigma())));
            extra.push(("condition", format!("{:e}", rbf.model().condition())));
            test.par_iter().map(|f| rbf.reconstruct(&f.lr_disp)).collect::<simsr::Result<_>>()?
        }
        Method::Mls => {
            let sigma = match a.sigma {
                Some(s) => s,
                None => center_spacing(&data.surface, &data.lattice)?,
            };
            let config = MlsConfig {
                degree: a.mls_degree,
                sigma,
                basis: match a.mls_basis {
                    BasisArg::Univariate => MlsBasis::Univariate,
                    BasisArg::Trivariate => MlsBasis::Trivariate,
                },
            };
            let mls = MlsBaseline::new(&data.surface, &data.lattice, &data.table()?, config)?;
            extra.push(("sigma", format!("{sigma:?}")));
            extra.push(("regularized", mls.regularized().to_string()));
            test.par_iter().map(|f| mls.reconstruct(&f.lr_disp)).collect::<simsr::Result<_>>()?
        }
        Method::Bvae => {
            let mut config = VaeConfig::default();
            if let Some(v) = a.model.epochs {
                config.epochs = v;
            }
            if let Some(v) = a.model.lr {
                config.lr = v;
            }
            if let Some(v) = a.model.seed {
                config.seed = v;
            }
            let train = data.split(Split::Train)?;
            let (vae, _) = train_vae::<f32>(config, data.lattice.vertex_count(), data.surface.vertex_count(), train)?;
            vae.save(a.out.join("bvae.ssck"))?;
            test.par_iter().map(|f| vae.infer(&f.lr_disp)).collect::<simsr::Result<_>>()?
        }
        Method::NoFe | Method::NoCu => {
            let config = model_config(&a.model, method.variant())?;
            let (model, geo, _) = train_model(&data, &config, None)?;
            let dir = a.out.join(method.to_string());
            ensure_dir(&dir)?;
            model.save(dir.join(MODEL_FILE))?;
            write_text(&dir.join(CONFIG_FILE), &config.to_text())?;
            let w = model.interpolation_weights(&geo)?;
            test.par_iter().map(|f| model.predict_with(&geo, &w, &f.lr_disp)).collect::<simsr::Result<_>>()?
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let out = predictions(&test, preds);
    let stats = score(&out, &test)?;
    let name = method.to_string();
    let pred_path: PathBuf = a.out.join(format!("pred_{name}.ssrf"));
    write_frames(&FrameSet::new(data.lattice.vertex_count(), data.surface.vertex_count(), out)?, &pred_path)?;
    write_text(&a.out.join(format!("frames_{name}.csv")), &stats.frame_csv(&name))?;
    write_text(
        &a.out.join(format!("stats_{name}.csv")),
        &format!("{}{}", ErrorStats::SUMMARY_HEADER, stats.summary_row(&name)),
    )?;
    let mut pairs = vec![("method", name)];
    pairs.extend(stats_pairs(&stats));
    pairs.extend(extra);
    pairs.push(("seconds", format!("{seconds:.3}")));
    result(&pairs);
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    if a.runs < simsr::eval::MIN_BENCH_RUNS {
        eprintln!(
            "note: {} runs is below the recommended {}",
            a.runs,
            simsr::eval::MIN_BENCH_RUNS
        );
    }
    let end_start = Instant::now();
    let data = Data::open(&a.data)?;
    let (model, geo) = load_model(&data, &a.model)?;
    let frames = data.split(Split::Test)?;
    let Some(first) = frames.first() else {
        bail!("dataset has no test frames");
    };
    model.predict(&geo, &first.lr_disp)?;
    let end_to_end = end_start.elapsed().as_secs_f64();

    let cached = if a.cached_weights {
        Some(model.interpolation_weights(&geo)?)
    } else {
        None
    };
    let mut next = 0usize;
    let report = time_runs(a.warmup, a.runs, || {
        let f = frames[next % frames.len()];
        next += 1;
        match &cached {
            Some(w) => model.predict_with(&geo, w, &f.lr_disp).map(|_| ()),
            None => model.predict(&geo, &f.lr_disp).map(|_| ()),
        }
    })?;
    result(&[
        ("runs", report.runs.to_string()),
        ("per_frame_ms", format!("{:.4}", report.mean_seconds * 1e3)),
        ("std_ms", format!("{:.4}", report.std_seconds * 1e3)),
        ("fps", format!("{:.3}", report.fps())),
        ("end_to_end_ms", format!("{:.4}", end_to_end * 1e3)),
        ("k_interp", model.config().k_interp.to_string()),
        ("cached_weights", a.cached_weights.to_string()),
    ]);
    Ok(())
}

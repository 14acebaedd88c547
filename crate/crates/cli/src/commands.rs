use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use spectok::accounting::{count_flops, count_params};
use spectok::imageio::{list_images, read_image, synthetic_images};
use spectok::model::checkpoint;
use spectok::probes::export::{write_ppm, write_similarity_csv};
use spectok::probes::{ln_separation_demo, pca_rgb, similarity_table};
use spectok::training::{grad_check_model, train_toy, GradCheckOptions, ToyTask, TrainOptions};
use spectok::{Error, Model, ModelConfig, Tensor};

use crate::config::RunConfig;

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

pub enum Outcome {
    Done,
    CheckFailed(String),
    Failed(Error),
}

impl From<Result<(), Error>> for Outcome {
    fn from(r: Result<(), Error>) -> Self {
        match r {
            Ok(()) => Outcome::Done,
            Err(e) => Outcome::Failed(e),
        }
    }
}

impl Outcome {
    pub fn report(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::CheckFailed(msg) => {
                eprintln!("check failed: {msg}");
                EXIT_CHECK_FAILED
            }
            Outcome::Failed(e) => {
                eprintln!("error: {e}");
                match e {
                    Error::Io { .. } | Error::Format { .. } => EXIT_IO,
                    Error::Diverged { .. } => EXIT_DIVERGED,
                    Error::Config(_) | Error::Tensor(_) | Error::Contract(_) => EXIT_CONFIG,
                }
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    let f = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, Error> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn count(cfg: &RunConfig) -> Outcome {
    let run = || -> Result<(), Error> {
        let dir = output_dir(cfg)?;
        let params = count_params(&cfg.model);
        let image_size = cfg.count.image_size.unwrap_or(cfg.model.image_size);
        let flops = count_flops(&cfg.model, image_size);
        let base = count_flops(
            &ModelConfig {
                spec: Default::default(),
                ..cfg.model.clone()
            },
            image_size,
        );
        let p = dir.join("params.csv");
        params.write_csv(create(&p)?).map_err(io_at(&p))?;
        let f = dir.join("flops.csv");
        flops.write_csv(&base, create(&f)?).map_err(io_at(&f))?;
        println!("params_baseline {}", params.baseline_total);
        println!("params_specialized {}", params.specialized_total);
        println!("params_delta_percent {:.4}", params.delta_percent());
        println!("flops_baseline {}", base.total);
        println!("flops_specialized {}", flops.total);
        Ok(())
    };
    run().into()
}

fn load_model(cfg: &RunConfig, checkpoint_path: Option<&PathBuf>) -> Result<Model, Error> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    if let Some(path) = checkpoint_path {
        checkpoint::load_into(model.params_mut(), path)?;
    }
    Ok(model)
}

/// Reads every image in `dir`, reporting all unreadable or mis-shaped
/// files at once.
fn read_image_dir(dir: &Path, model: &ModelConfig) -> Result<Vec<Tensor>, Error> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::Format {
            what: "image directory",
            detail: format!("{} holds no .spti files", dir.display()),
        });
    }
    let want = [model.in_chans, model.image_size, model.image_size];
    let mut images = Vec::with_capacity(paths.len());
    let mut bad = Vec::new();
    for p in &paths {
        match read_image(p) {
            Ok(t) if t.shape() == want => images.push(t),
            Ok(t) => bad.push(format!(
                "{}: shape {:?}, expected {want:?}",
                p.display(),
                t.shape()
            )),
            Err(e) => bad.push(format!("{}: {e}", p.display())),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Format {
            what: "image directory",
            detail: bad.join("; "),
        });
    }
    Ok(images)
}

pub fn probe(cfg: &RunConfig) -> Outcome {
    let run = || -> Result<(), Error> {
        let model = load_model(cfg, cfg.probe.checkpoint.as_ref())?;
        let images = if cfg.probe.source == "synthetic" {
            synthetic_images(&cfg.model, cfg.probe.num_images, cfg.seed)
        } else {
            read_image_dir(Path::new(&cfg.probe.source), &cfg.model)?
        };
        let dir = output_dir(cfg)?;
        let grid = cfg.model.grid();
        let mut traces = Vec::with_capacity(images.len());
        for (i, image) in images.iter().enumerate() {
            let out = model.forward(image)?;
            let rgb = pca_rgb(&out.patch_out, (grid, grid))?;
            let p = dir.join(format!("pca_{i}.ppm"));
            write_ppm(create(&p)?, &rgb).map_err(io_at(&p))?;
            traces.push(out.trace);
        }
        let rows = similarity_table(&traces)?;
        let p = dir.join("similarity.csv");
        write_similarity_csv(create(&p)?, &rows).map_err(io_at(&p))?;
        println!("images {}", images.len());
        println!("rows {}", rows.len());
        Ok(())
    };
    run().into()
}

pub fn train(cfg: &RunConfig) -> Outcome {
    let run = || -> Result<(), Error> {
        let t = &cfg.train;
        let task = ToyTask::with_shape(
            cfg.seed,
            cfg.model.in_chans,
            cfg.model.image_size,
            t.train_size,
            t.eval_size,
        );
        let opts = TrainOptions {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            w_aux: t.w_aux,
            seed: cfg.seed,
            eval_every: t.eval_every,
        };
        let dir = output_dir(cfg)?;
        let out = train_toy(&cfg.model, &task, &opts)?;
        let p = dir.join("loss.csv");
        out.write_curve_csv(create(&p)?).map_err(io_at(&p))?;
        checkpoint::save(out.model.params(), dir.join("model.ckpt"))?;
        if let Some(last) = out.curve.last() {
            println!("final_loss {}", last.loss);
        }
        println!("eval_accuracy {:.4}", out.eval_accuracy);
        Ok(())
    };
    run().into()
}

pub fn gradcheck(cfg: &RunConfig) -> Outcome {
    let g = &cfg.gradcheck;
    let opts = GradCheckOptions {
        eps: g.eps,
        w_aux: g.w_aux,
        batch: g.batch,
        inject_fault: g.inject_fault,
        ..Default::default()
    };
    match grad_check_model(&cfg.model, cfg.seed, &opts) {
        Ok(r) => {
            println!("coordinates {}", r.coordinates);
            println!("max_rel_error {:e}", r.max_rel_error);
            println!("worst_param {}", r.worst_param);
            if r.max_rel_error < g.tolerance {
                Outcome::Done
            } else {
                Outcome::CheckFailed(format!(
                    "max relative error {:e} at {} exceeds {:e}",
                    r.max_rel_error, r.worst_param, g.tolerance
                ))
            }
        }
        Err(e) => Outcome::Failed(e),
    }
}

pub fn ln_demo(cfg: &RunConfig) -> Outcome {
    match ln_separation_demo(cfg.ln_demo.d, cfg.ln_demo.n_patches, cfg.seed) {
        Ok((pre, post)) => {
            println!("pre_sim {pre:.6}");
            println!("post_sim {post:.6}");
            Outcome::Done
        }
        Err(e) => Outcome::Failed(e),
    }
}

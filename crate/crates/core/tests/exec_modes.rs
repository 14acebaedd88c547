use spectok::exec::{self, ExecMode};
use spectok::imageio::synthetic_images;
use spectok::probes::similarity_table;
use spectok::training::{
    grad_check_model, loss_and_grads, train_toy, GradCheckOptions, Sample, ToyTask, TrainOptions,
};
use spectok::{Model, ModelConfig, SpecConfig};

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Everything that fans out, run once in the current mode.
fn run_all() -> (Vec<u64>, Vec<Vec<u64>>, Vec<u64>, u64, Vec<u64>) {
    let c = ModelConfig::tiny().with_spec(SpecConfig::default_best(2));
    let m = Model::new(c.clone(), 7).unwrap();
    let task = ToyTask::new(7, 8, 8);
    let batch: Vec<&Sample> = task.train.iter().collect();
    let (loss, grads) = loss_and_grads(&m, &batch, 0.1).unwrap();
    let grads = grads.entries.iter().map(|(_, g)| bits(g)).collect();

    let traces: Vec<_> = synthetic_images(&c, 3, 1)
        .iter()
        .map(|img| m.forward(img).unwrap().trace)
        .collect();
    let table: Vec<f64> = similarity_table(&traces)
        .unwrap()
        .iter()
        .flat_map(|r| [r.mean, r.std])
        .collect();

    let small = ModelConfig {
        image_size: 4,
        patch_size: 2,
        embed_dim: 8,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        ..ModelConfig::tiny()
    };
    let gc = grad_check_model(&small, 0, &GradCheckOptions::default()).unwrap();

    let opts = TrainOptions {
        steps: 5,
        batch_size: 4,
        ..Default::default()
    };
    let curve = train_toy(&c, &task, &opts).unwrap().losses();
    (
        vec![loss.to_bits()],
        grads,
        bits(&table),
        gc.max_rel_error.to_bits(),
        bits(&curve),
    )
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    exec::set_mode(ExecMode::Parallel);
    let par = run_all();
    exec::set_mode(ExecMode::Sequential);
    assert_eq!(exec::mode(), ExecMode::Sequential);
    let seq = run_all();
    exec::set_mode(ExecMode::Parallel);
    assert_eq!(par, seq);
}

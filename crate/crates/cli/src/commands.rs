use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gdp_core::discrete::train_discrete;
use gdp_core::gaussian::train as train_gaussian;
use gdp_core::io::{
    format_float, load_dataset, read_table, save_dataset, write_atomic, write_csv_rows, CategoryMap, Dataset,
    DatasetSpec, Generator, GeneratorCheckpoint, Kind, RunConfig, Target,
};
use gdp_core::metrics::{accuracy, kappa, mad, rmse};
use gdp_core::predict::{gdp_point, LossKind, PredictionValue, SyntheticSampleSet};
use gdp_core::rng::{derive_seed, seeded};
use gdp_core::simbench::{benchmark_train_config, run_benchmark, simulate as simulate_data, BenchmarkSetup};
use gdp_core::training::Role;
use gdp_core::transfer::{finetune_target, finetune_target_discrete, TransferPlan};
use ndarray::{Array2, Axis};

use crate::{BenchmarkArgs, ConfigArgs, DataArgs, EvalArgs, FinetuneArgs, GenerateArgs, PredictArgs, SimulateArgs, TrainArgs};

fn run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.apply_env_seed()?;
    Ok(match args.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn dataset_spec(args: &DataArgs) -> DatasetSpec {
    DatasetSpec { target_cols: args.target_col.clone(), categorical: args.categorical }
}

fn load(path: &Path, spec: &DatasetSpec) -> Result<Dataset> {
    load_dataset(path, spec).with_context(|| format!("reading {}", path.display()))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut sim = run_config(&a.config)?.sim;
    sim.case = a.case;
    if let Some(n) = a.n {
        sim.n = n;
    }
    if let Some(p) = a.p {
        sim.p = p;
    }
    if let Some(rho) = a.rho {
        sim.rho = rho;
    }
    let data = simulate_data(&sim, &mut seeded(derive_seed(sim.seed, 0)))?;
    let ds = Dataset {
        predictor_names: (1..=sim.p).map(|j| format!("x{j}")).collect(),
        x: data.x.clone(),
        target_names: vec!["y".into()],
        target: Target::Continuous(data.y_matrix()),
    };
    save_dataset(&ds, &a.out)?;
    eprintln!("wrote {} rows to {}", sim.n, a.out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let ds = load(&a.data, &dataset_spec(&a.columns))?;
    let role = if a.source { Role::Source } else { Role::Standalone };
    let (ckpt, report) = match &ds.target {
        Target::Continuous(y) => {
            let (mut gen, report) = train_gaussian(ds.x.view(), y.view(), &cfg.train)?;
            gen.meta_mut().role = role;
            (GeneratorCheckpoint::from_gaussian(&gen), report)
        }
        Target::Categorical { labels, mapping } => {
            let (mut gen, report) = train_discrete(ds.x.view(), labels, Some(mapping.len()), &cfg.train)?;
            gen.meta_mut().role = role;
            (GeneratorCheckpoint::from_discrete(&gen, Some(mapping.classes().to_vec()))?, report)
        }
    };
    ckpt.save(&a.out)?;
    eprintln!(
        "trained {} epochs (best {} with validation loss {:.5}); wrote {}",
        report.epochs_run,
        report.best_epoch,
        report.best_val_loss,
        a.out.display()
    );
    Ok(())
}

pub fn finetune(a: FinetuneArgs) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let source = GeneratorCheckpoint::load(&a.from).with_context(|| format!("reading {}", a.from.display()))?;
    let mut settings = cfg.transfer.clone();
    if a.unfreeze_embedder {
        settings.freeze_embedder = false;
    }
    if a.cold_start {
        settings.warm_start_score_net = false;
    }
    if a.epochs.is_some() {
        settings.target_epochs = a.epochs;
    }
    if a.lr.is_some() {
        settings.target_lr = a.lr;
    }
    let kind = source.kind();
    let source_labels = source.labels().map(<[String]>::to_vec);
    let plan = TransferPlan { source, settings };
    let ckpt = match kind {
        Kind::Gaussian => {
            if a.columns.categorical {
                bail!("the source checkpoint is gaussian but --categorical was given");
            }
            let ds = load(&a.data, &dataset_spec(&a.columns))?;
            let (gen, _) = finetune_target(&plan, ds.x.view(), ds.continuous_target()?.view(), &cfg.train)?;
            GeneratorCheckpoint::from_gaussian(&gen)
        }
        Kind::Discrete => {
            let spec = DatasetSpec { categorical: true, ..dataset_spec(&a.columns) };
            let ds = load(&a.data, &spec)?;
            let Target::Categorical { labels, mapping } = &ds.target else { unreachable!("categorical spec") };
            let source_map = CategoryMap::from_classes(source_labels.clone().unwrap_or_default());
            let remapped = labels
                .iter()
                .map(|&l| {
                    let text = mapping.label(l).expect("fitted mapping");
                    match &source_labels {
                        Some(_) => source_map
                            .index(text)
                            .with_context(|| format!("target label `{text}` is unknown to the source generator")),
                        None => text.parse::<usize>().with_context(|| format!("label `{text}` is not a category index")),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let (gen, _) = finetune_target_discrete(&plan, ds.x.view(), &remapped, &cfg.train)?;
            GeneratorCheckpoint::from_discrete(&gen, source_labels)?
        }
    };
    ckpt.save(&a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn condition_matrix(path: &Path, target_col: &str, p: usize) -> Result<Array2<f64>> {
    let table = read_table(path).with_context(|| format!("reading {}", path.display()))?;
    let cols: Vec<usize> = (0..table.header.len()).filter(|&i| table.header[i] != target_col).collect();
    if cols.len() != p {
        bail!("{} has {} predictor columns but the generator expects {p}", path.display(), cols.len());
    }
    Ok(table.numeric_columns(&cols)?)
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let ckpt = GeneratorCheckpoint::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let gen = ckpt.to_generator()?;
    let xs = condition_matrix(&a.conditions, &a.target_col, gen.predictor_dim())?;
    let mut header = vec!["condition_index".to_string(), "sample_index".to_string()];
    let mut rows = Vec::new();
    match &gen {
        Generator::Gaussian(g) => {
            let d = g.response_dim();
            if d == 1 {
                header.push("y".into());
            } else {
                header.extend((1..=d).map(|j| format!("y{j}")));
            }
            for (i, set) in g.sample_many(xs.view(), a.m, a.stride, a.seed)?.iter().enumerate() {
                let vals = set.continuous_values().expect("gaussian samples");
                for (k, row) in vals.rows().into_iter().enumerate() {
                    let mut cells = vec![i.to_string(), k.to_string()];
                    cells.extend(row.iter().map(|&v| format_float(v)));
                    rows.push(cells);
                }
            }
        }
        Generator::Discrete(g) => {
            header.push("y".into());
            let names = ckpt.labels();
            for (i, set) in g.sample_many(xs.view(), a.m, a.seed)?.iter().enumerate() {
                for (k, &l) in set.labels().expect("categorical samples").iter().enumerate() {
                    let text = names.map_or_else(|| l.to_string(), |n| n[l].clone());
                    rows.push(vec![i.to_string(), k.to_string(), text]);
                }
            }
        }
    }
    write_csv_rows(&a.out, &header, &rows)?;
    eprintln!("wrote {} samples for {} conditions to {}", rows.len(), xs.nrows(), a.out.display());
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let table = read_table(&a.samples).with_context(|| format!("reading {}", a.samples.display()))?;
    let cond_col = table.column_index("condition_index")?;
    let value_cols: Vec<usize> =
        (0..table.header.len()).filter(|&i| i != cond_col && table.header[i] != "sample_index").collect();
    if value_cols.is_empty() {
        bail!("{} has no value columns", a.samples.display());
    }
    // group rows by condition in order of first appearance
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (r, row) in table.rows.iter().enumerate() {
        let key = row[cond_col].trim().to_string();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }

    let categorical = matches!(a.loss.kind(), LossKind::ZeroOne);
    if categorical && value_cols.len() != 1 {
        bail!("zero_one needs exactly one label column, found {}", value_cols.len());
    }
    let mapping = categorical.then(|| CategoryMap::fit(table.rows.iter().map(|r| r[value_cols[0]].as_str())));

    let mut header = vec!["condition_index".to_string()];
    header.extend(value_cols.iter().map(|&i| table.header[i].clone()));
    header.push("loss".into());
    let mut out_rows = Vec::with_capacity(order.len());
    let values = if categorical { None } else { Some(table.numeric_columns(&value_cols)?) };
    for key in &order {
        let rows = &groups[key];
        let set = match (&mapping, &values) {
            (Some(map), _) => SyntheticSampleSet::categorical(
                Vec::new(),
                rows.iter().map(|&r| map.index(&table.rows[r][value_cols[0]]).expect("fitted")).collect(),
            )?,
            (None, Some(v)) => SyntheticSampleSet::continuous(Vec::new(), v.select(Axis(0), rows))?,
            (None, None) => unreachable!(),
        };
        let pred = gdp_point(&set, &a.loss)?;
        let mut cells = vec![key.clone()];
        match (&pred.value, &mapping) {
            (PredictionValue::Label(l), Some(map)) => cells.push(map.label(*l).expect("in range").to_string()),
            (PredictionValue::Vector(v), _) => cells.extend(v.iter().map(|&x| format_float(x))),
            _ => bail!("loss {} produced an unexpected prediction type", a.loss),
        }
        cells.push(format_float(pred.loss_value));
        out_rows.push(cells);
    }
    emit(&a.out, &header, &out_rows)
}

fn emit(out: &Option<std::path::PathBuf>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    match out {
        Some(path) => write_csv_rows(path, header, rows)?,
        None => {
            println!("{}", header.join(","));
            for r in rows {
                println!("{}", r.join(","));
            }
        }
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_table(&a.predictions).with_context(|| format!("reading {}", a.predictions.display()))?;
    let truth = read_table(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let (pc, tc) = (pred.column_index(&a.column)?, truth.column_index(&a.column)?);
    if pred.rows.len() != truth.rows.len() {
        bail!("{} predictions but {} observed values", pred.rows.len(), truth.rows.len());
    }
    let metrics: Vec<(&str, f64)> = if a.categorical {
        let map = CategoryMap::fit(pred.rows.iter().map(|r| r[pc].as_str()).chain(truth.rows.iter().map(|r| r[tc].as_str())));
        let p: Vec<usize> = pred.rows.iter().map(|r| map.index(&r[pc]).expect("fitted")).collect();
        let t: Vec<usize> = truth.rows.iter().map(|r| map.index(&r[tc]).expect("fitted")).collect();
        vec![("accuracy", accuracy(&p, &t)?), ("kappa", kappa(&p, &t)?)]
    } else {
        let p = pred.numeric_columns(&[pc])?.into_raw_vec_and_offset().0;
        let t = truth.numeric_columns(&[tc])?.into_raw_vec_and_offset().0;
        vec![("RMSE", rmse(&p, &t)?), ("MAD", mad(&p, &t)?)]
    };
    let header = vec!["metric".to_string(), "value".to_string()];
    let rows: Vec<Vec<String>> = metrics.iter().map(|(m, v)| vec![m.to_string(), format_float(*v)]).collect();
    emit(&a.out, &header, &rows)
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let mut sim = cfg.sim.clone();
    sim.case = a.case;
    if a.full_fidelity {
        sim = sim.full_fidelity();
    }
    if let Some(m) = a.m {
        sim.m = m;
    }
    if a.test_subset.is_some() {
        sim.test_subset = a.test_subset;
    }
    if let Some(s) = a.stride {
        sim.stride = s;
    }
    let train = if a.config.config.is_some() { cfg.train.clone() } else { benchmark_train_config() };
    let (report, _) = run_benchmark(&BenchmarkSetup { sim, train })?;
    print!("{}", report.to_table());
    if let Some(path) = &a.out {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    Ok(())
}

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rough_vol_core::kernel::{
    build_soe_approach_a, build_soe_approach_b_terms, build_soe_approach_b_with, ApproachATuning, SoeApprox,
    SoeBOptions, DENSE_GRID_POINTS,
};
use rough_vol_core::metrics::{wasserstein_1, wasserstein_p};
use rough_vol_core::model::{
    make_curve_abs_bm, make_curve_abs_fbm, make_curve_constant, simulate_paths, ForwardVarianceCurve, RBergomiParams,
    Record, Scheme,
};
use rough_vol_core::neural::{
    grad_check, max_price_error, read_checkpoint, simulate_neural, train, write_checkpoint, write_history_csv,
    AdamState, Checkpoint, GradCheckConfig, Mlp, NeuralNoise, TrainConfig,
};
use rough_vol_core::pricing::{moment_rmse, moment_sums, price_european, smile, write_smile_csv, Payoff, SmilePoint};
use rough_vol_core::rng::derive_seed;
use rough_vol_core::sampler::{write_paths_csv, Driver, VolterraPath};
use rough_vol_core::stats::mean_stderr;

use crate::config::{parse_list, parse_strikes, Config, ConfigError, KNOWN_KEYS};

const INIT_SALT: u64 = 0x696e_6974;
const EVAL_SALT: u64 = 0x6576_616c;
const DEFAULT_LEVEL: f64 = 0.055225;
const ECDF_POINTS: usize = 401;

/// Non-fatal numerical failure reported after all outputs are written.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub struct Run<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub out: PathBuf,
}

impl Run<'_> {
    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.out.join(name);
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn model_params(cfg: &Config) -> Result<RBergomiParams> {
    let p = RBergomiParams {
        s0: cfg.get("s0", 1.0)?,
        eta: cfg.get("eta", 1.9)?,
        hurst: cfg.require("h")?,
        rho: cfg.get("rho", -0.9)?,
        horizon: cfg.get("t_horizon", 1.0)?,
        n_steps: cfg.get("n_steps", 256usize)?,
        rate: cfg.get("rate", 0.0)?,
    };
    p.validate()?;
    Ok(p)
}

fn read_soe(path: &str) -> Result<SoeApprox> {
    let f = fs::File::open(path).with_context(|| format!("opening SOE file {path}"))?;
    Ok(SoeApprox::read_csv(BufReader::new(f))?)
}

/// The SOE used by `scheme = msoe`: a file, an N-term Approach B fit, or an
/// eps-driven Approach B fit, in that order of precedence.
fn configured_soe(cfg: &Config, params: &RBergomiParams) -> Result<SoeApprox> {
    let (h, tau, t) = (params.hurst, params.tau(), params.horizon);
    if let Some(file) = cfg.optional_string("soe_file") {
        return read_soe(&file);
    }
    if cfg.has("eps") && !cfg.has("n_soe") {
        let eps: f64 = cfg.require("eps")?;
        let total_terms = cfg.optional("total_terms")?;
        return Ok(build_soe_approach_b_with(h, eps, tau, t, SoeBOptions { total_terms })?);
    }
    let n: usize = cfg.get("n_soe", 20)?;
    Ok(build_soe_approach_b_terms(h, n, tau, t)?)
}

fn configured_driver(cfg: &Config, params: &RBergomiParams) -> Result<Driver> {
    let scheme = match cfg.string("scheme", "msoe").as_str() {
        "exact" => Scheme::Exact,
        "msoe" => Scheme::Msoe(configured_soe(cfg, params)?),
        other => bail!(ConfigError(format!("key `scheme`: expected exact or msoe, got `{other}`"))),
    };
    Ok(scheme.driver(params)?)
}

fn configured_curve(cfg: &Config, params: &RBergomiParams, seed: u64) -> Result<ForwardVarianceCurve> {
    let (n, tau) = (params.n_steps, params.tau());
    let curve = match cfg.string("curve_kind", "constant").as_str() {
        "constant" => make_curve_constant(cfg.get("curve_scale", DEFAULT_LEVEL)?)?,
        "abs_bm" => make_curve_abs_bm(cfg.get("curve_scale", 2.0)?, n, tau, cfg.get("curve_seed", seed)?)?,
        "abs_fbm" => make_curve_abs_fbm(
            cfg.get("curve_scale", 0.1)?,
            cfg.get("curve_h", 0.07)?,
            n,
            tau,
            cfg.get("curve_seed", seed)?,
        )?,
        other => bail!(ConfigError(format!(
            "key `curve_kind`: expected constant, abs_bm or abs_fbm, got `{other}`"
        ))),
    };
    Ok(curve)
}

/// One entry of a `schemes` list: `exact`, `file`, or an mSOE term count.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SchemeSpec {
    Exact,
    File,
    Msoe(usize),
}

impl SchemeSpec {
    fn label(&self) -> String {
        match self {
            SchemeSpec::Exact => "exact".into(),
            SchemeSpec::File => "file".into(),
            SchemeSpec::Msoe(n) => format!("msoe{n}"),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SchemeSpec::Exact => "exact",
            _ => "msoe",
        }
    }

    fn terms(&self, cfg: &Config) -> Result<Option<usize>> {
        Ok(match self {
            SchemeSpec::Exact => None,
            SchemeSpec::File => Some(read_soe(&cfg.optional_string("soe_file").unwrap_or_default())?.len()),
            SchemeSpec::Msoe(n) => Some(*n),
        })
    }

    fn driver(&self, cfg: &Config, params: &RBergomiParams) -> Result<Driver> {
        let scheme = match self {
            SchemeSpec::Exact => Scheme::Exact,
            SchemeSpec::File => {
                let Some(file) = cfg.optional_string("soe_file") else {
                    bail!(ConfigError("scheme `file` needs key `soe_file`".into()));
                };
                Scheme::Msoe(read_soe(&file)?)
            }
            SchemeSpec::Msoe(n) => {
                Scheme::Msoe(build_soe_approach_b_terms(params.hurst, *n, params.tau(), params.horizon)?)
            }
        };
        Ok(scheme.driver(params)?)
    }
}

fn parse_schemes(s: &str) -> Result<Vec<SchemeSpec>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "exact" => Ok(SchemeSpec::Exact),
            "file" => Ok(SchemeSpec::File),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .map(SchemeSpec::Msoe)
                .ok_or_else(|| ConfigError(format!("key `schemes`: `{t}` is not exact, file or a term count"))),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn kernel_fit(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let h: f64 = cfg.require("h")?;
    let horizon = cfg.get("t_horizon", 1.0)?;
    let tau = cfg.get("tau", 5e-4)?;
    let approach = cfg.string("approach", "b");
    let soe = match approach.as_str() {
        "a" => build_soe_approach_a(h, cfg.get("n_soe", 8usize)?, ApproachATuning::default(), tau, horizon)?,
        "b" => {
            if let Some(n) = cfg.optional::<usize>("n_soe")? {
                build_soe_approach_b_terms(h, n, tau, horizon)?
            } else if let Some(eps) = cfg.optional::<f64>("eps")? {
                let total_terms = cfg.optional("total_terms")?;
                build_soe_approach_b_with(h, eps, tau, horizon, SoeBOptions { total_terms })?
            } else {
                bail!(ConfigError("approach b needs key `eps` or `n_soe`".into()));
            }
        }
        other => bail!(ConfigError(format!("key `approach`: expected a or b, got `{other}`"))),
    };
    let mut f = run.create("soe.csv")?;
    soe.write_csv(&mut f)?;
    f.flush()?;

    let ns: Vec<usize> = parse_list("n_list", &cfg.string("n_list", "4,8,16"))?;
    let mut err = String::from("approach,N,err\n");
    for label in ["a", "b"] {
        for &n in &ns {
            let soe = if label == "a" {
                build_soe_approach_a(h, n, ApproachATuning::default(), tau, horizon)?
            } else {
                build_soe_approach_b_terms(h, n, tau, horizon)?
            };
            writeln!(err, "{label},{n},{:.16e}", soe.l2_error(tau, horizon)?)?;
        }
    }
    run.write("kernel_err.csv", &err)?;
    println!(
        "approach {approach}: {} pairs, uniform error {:.3e}, L2 error {:.3e}",
        soe.len(),
        soe.uniform_error(DENSE_GRID_POINTS),
        soe.l2_error(tau, horizon)?
    );
    Ok(())
}

fn write_curve(run: &Run, name: &str, xi: &[f64], tau: f64) -> Result<()> {
    let mut text = String::from("step,t,xi\n");
    for (i, v) in xi.iter().enumerate() {
        writeln!(text, "{i},{:.16e},{v:.16e}", i as f64 * tau)?;
    }
    run.write(name, &text)
}

pub fn simulate(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let driver = configured_driver(cfg, &params)?;
    let curve = configured_curve(cfg, &params, run.seed)?;
    let m: usize = cfg.get("m_paths", 1000)?;
    let batch = simulate_paths(&params, &curve, &driver, m, run.seed, Record::Full)?;
    let mut f = run.create("paths.csv")?;
    batch.write_csv(&mut f)?;
    f.flush()?;

    let n = params.n_steps;
    let volterra: Vec<VolterraPath> = (0..m as u64)
        .map(|p| {
            let (mut dw, mut iv) = (vec![0.0; n], vec![0.0; n]);
            driver.fill(run.seed, p, &mut dw, &mut iv);
            VolterraPath {
                i_values: iv,
                dw,
                tau: params.tau(),
            }
        })
        .collect();
    let mut f = run.create("volterra.csv")?;
    write_paths_csv(&volterra, &mut f)?;
    f.flush()?;
    write_curve(run, "curve.csv", &curve.grid_values(n, params.tau())?, params.tau())?;

    let (mean, se) = mean_stderr(&batch.terminal);
    run.write("summary.csv", &format!("m,mean_S_T,stderr\n{m},{mean:.16e},{se:.16e}\n"))?;
    println!("simulated {m} paths: mean S_T = {mean:.6} ± {se:.6}");
    Ok(())
}

pub fn smile_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let curve = configured_curve(cfg, &params, run.seed)?;
    let m: usize = cfg.get("m_paths", 100_000)?;
    let ks = parse_strikes(&cfg.string("strikes", "-0.4:0.4:41"))?;
    let mut specs = parse_schemes(&cfg.string("schemes", "exact,2,4,8,32"))?;
    if !specs.contains(&SchemeSpec::Exact) {
        specs.insert(0, SchemeSpec::Exact);
    }

    let mut results: Vec<(SchemeSpec, Vec<SmilePoint>)> = Vec::new();
    let mut failures = Vec::new();
    for spec in &specs {
        let outcome = (|| -> Result<Vec<SmilePoint>> {
            let driver = spec.driver(cfg, &params)?;
            let batch = simulate_paths(&params, &curve, &driver, m, run.seed, Record::Terminal)?;
            let points = smile(&batch.terminal, params.s0, params.rate, params.horizon, &ks)?;
            let mut f = run.create(&format!("smile_{}.csv", spec.label()))?;
            write_smile_csv(&points, &mut f)?;
            f.flush()?;
            Ok(points)
        })();
        match outcome {
            Ok(points) => results.push((*spec, points)),
            Err(e) => {
                eprintln!("scheme {}: {e:#}", spec.label());
                failures.push(spec.label());
            }
        }
    }

    let exact = results.iter().find(|(s, _)| *s == SchemeSpec::Exact).map(|(_, p)| p.clone());
    let mut diff = String::from("scheme,N,k,implied_vol,exact_vol,diff\n");
    if let Some(exact) = &exact {
        for (spec, points) in results.iter().filter(|(s, _)| *s != SchemeSpec::Exact) {
            let n = spec.terms(cfg)?.map(|n| n.to_string()).unwrap_or_default();
            let mut gap: f64 = 0.0;
            for (p, e) in points.iter().zip(exact) {
                let d = p.implied_vol.zip(e.implied_vol).map(|(a, b)| a - b);
                if let Some(d) = d {
                    gap = gap.max(d.abs());
                }
                writeln!(
                    diff,
                    "{},{n},{:.16e},{},{},{}",
                    spec.kind(),
                    p.k,
                    fmt_opt(p.implied_vol),
                    fmt_opt(e.implied_vol),
                    fmt_opt(d)
                )?;
            }
            println!("{}: max |implied vol - exact| = {gap:.3e}", spec.label());
        }
    }
    run.write("smile_diff.csv", &diff)?;
    if !failures.is_empty() {
        bail!(NumericalFailure(format!("smile failed for schemes: {}", failures.join(", "))));
    }
    Ok(())
}

pub fn moments(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let m: usize = cfg.get("m_paths", 100_000)?;
    let specs = parse_schemes(&cfg.string("schemes", "2,4,8,16,32"))?;
    let mut text = String::from("scheme,N,M,rmse1,rmse2\n");
    for spec in &specs {
        let driver = spec.driver(cfg, &params)?;
        let sums = moment_sums(&driver, &params, m, run.seed)?;
        let (r1, r2) = moment_rmse(&sums, params.eta, params.hurst);
        let n = spec.terms(cfg)?.map(|n| n.to_string()).unwrap_or_default();
        writeln!(text, "{},{n},{m},{r1:.16e},{r2:.16e}", spec.kind())?;
        println!("{}: rmse1 {r1:.4e}, rmse2 {r2:.4e}", spec.label());
    }
    run.write("moments.csv", &text)
}

const MANIFEST: &str = "manifest.txt";
const DATA: &str = "data.csv";
/// Keys that define the law of a dataset; training and evaluation must agree.
const LAW_KEYS: &[&str] = &["s0", "eta", "h", "rho", "rate", "t_horizon"];

pub fn gen_data(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let driver = configured_driver(cfg, &params)?;
    let curve = configured_curve(cfg, &params, run.seed)?;
    let m: usize = cfg.get("m_paths", 10_000)?;
    let batch = simulate_paths(&params, &curve, &driver, m, run.seed, Record::Terminal)?;
    let mut f = run.create(DATA)?;
    writeln!(f, "path_id,S_T")?;
    for (p, s) in batch.terminal.iter().enumerate() {
        writeln!(f, "{p},{s:.16e}")?;
    }
    f.flush()?;
    write_curve(run, "curve.csv", &curve.grid_values(params.n_steps, params.tau())?, params.tau())?;
    let mut manifest = String::from("# rough-vol-kit dataset\n");
    writeln!(manifest, "seed = {}", run.seed)?;
    for line in cfg.resolved_text("gen-data").lines().skip(1) {
        if !line.starts_with("out_dir") && !line.starts_with("seed ") {
            writeln!(manifest, "{line}")?;
        }
    }
    run.write(MANIFEST, &manifest)?;
    println!("wrote {m} terminal prices to {}", run.out.join(DATA).display());
    Ok(())
}

/// Loads `data.csv` after checking the manifest against `params`.
fn load_dataset(dir: &Path, params: &RBergomiParams) -> Result<Vec<f64>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = Config::parse(&text, KNOWN_KEYS).map_err(|e| ConfigError(format!("dataset manifest: {}", e.0)))?;
    let own = [params.s0, params.eta, params.hurst, params.rho, params.rate, params.horizon];
    for (key, mine) in LAW_KEYS.iter().zip(own) {
        let theirs: f64 = manifest.require(key).map_err(|e| ConfigError(format!("dataset manifest: {}", e.0)))?;
        if theirs != mine {
            bail!(ConfigError(format!(
                "dataset manifest mismatch: `{key}` is {theirs} in the dataset but {mine} in the config"
            )));
        }
    }
    let expected: usize = manifest.require("m_paths").map_err(|e| ConfigError(format!("dataset manifest: {}", e.0)))?;
    let path = dir.join(DATA);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("path_id,S_T") {
        bail!(rough_vol_core::Error::Parse(format!("{}: bad header", path.display())));
    }
    let data = lines
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| rough_vol_core::Error::Parse(format!("{}: bad row `{l}`", path.display())))
        })
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    if data.len() != expected {
        bail!(ConfigError(format!(
            "dataset manifest mismatch: manifest lists {expected} paths, {} found",
            data.len()
        )));
    }
    Ok(data)
}

fn write_ck(run: &Run, name: &str, ck: &Checkpoint) -> Result<()> {
    let mut f = run.create(name)?;
    write_checkpoint(ck, &mut f)?;
    f.flush()?;
    Ok(())
}

fn load_ck(path: &Path) -> Result<Checkpoint> {
    let f = fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    Ok(read_checkpoint(BufReader::new(f))?)
}

pub fn train_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let data_dir = PathBuf::from(cfg.require::<String>("data_dir")?);
    let data = load_dataset(&data_dir, &params)?;
    let driver = configured_driver(cfg, &params)?;
    let mut tc = TrainConfig::new(params);
    tc.batch_size = cfg.get("batch_size", tc.batch_size)?;
    tc.epochs = cfg.get("epochs", tc.epochs)?;
    tc.max_iterations = cfg.optional("max_iterations")?;
    tc.lr = cfg.get("lr", tc.lr)?;
    tc.lr_decay = cfg.get("lr_decay", tc.lr_decay)?;
    tc.patience = cfg.get("patience", tc.patience)?;
    tc.lr_floor = cfg.get("lr_floor", tc.lr_floor)?;
    tc.train_fraction = cfg.get("train_fraction", tc.train_fraction)?;
    tc.strikes = parse_strikes(&cfg.string("strikes", "-0.4:0.4:41"))?;
    tc.seed = run.seed;

    let init = Mlp::default_network(derive_seed(run.seed, INIT_SALT));
    write_ck(
        run,
        "checkpoint_init.txt",
        &Checkpoint {
            mlp: init.clone(),
            adam: AdamState::new(init.n_params(), tc.lr),
            iteration: 0,
            epoch: 0,
            test_w1: f64::NAN,
        },
    )?;
    let outcome = train(&tc, init.clone(), &driver, &data)?;

    let mut f = run.create("history.csv")?;
    write_history_csv(&outcome.history, &mut f)?;
    f.flush()?;
    let mut text = String::from("epoch,iter,lr,test_w1,max_price_err,price_stderr,min_xi\n");
    for e in &outcome.epochs {
        writeln!(
            text,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.epoch, e.iter, e.lr, e.test_w1, e.max_price_err, e.price_stderr, e.min_xi
        )?;
    }
    run.write("epochs.csv", &text)?;
    let last = outcome.history.last();
    write_ck(
        run,
        "checkpoint_best.txt",
        &Checkpoint {
            mlp: outcome.best.clone(),
            adam: outcome.best_adam.clone(),
            iteration: outcome.best_iter,
            epoch: outcome.best_epoch,
            test_w1: outcome.best_test_w1,
        },
    )?;
    write_ck(
        run,
        "checkpoint_last.txt",
        &Checkpoint {
            mlp: outcome.last.clone(),
            adam: outcome.adam.clone(),
            iteration: last.map_or(0, |r| r.iter),
            epoch: last.map_or(0, |r| r.epoch),
            test_w1: outcome.epochs.last().map_or(f64::NAN, |e| e.test_w1),
        },
    )?;
    let mut text = String::from("t,xi_init,xi_best\n");
    for t in params.grid() {
        writeln!(text, "{t:.16e},{:.16e},{:.16e}", init.forward(t), outcome.best.forward(t))?;
    }
    run.write("xi_curve.csv", &text)?;
    println!(
        "{} iterations; best test W1 {:.4e} at epoch {}",
        outcome.history.len(),
        outcome.best_test_w1,
        outcome.best_epoch
    );
    Ok(())
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

pub fn evaluate(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let data_dir = PathBuf::from(cfg.require::<String>("data_dir")?);
    let train_dir = PathBuf::from(cfg.require::<String>("train_dir")?);
    let data = load_dataset(&data_dir, &params)?;
    let driver = configured_driver(cfg, &params)?;
    let strikes = parse_strikes(&cfg.string("strikes", "-0.4:0.4:41"))?;
    let init = load_ck(&train_dir.join("checkpoint_init.txt"))?.mlp;
    let best = load_ck(&train_dir.join("checkpoint_best.txt"))?.mlp;
    let noise = NeuralNoise::generate(&params, &driver, data.len(), derive_seed(run.seed, EVAL_SALT), 0)?;
    let (gen_init, _) = simulate_neural(&init, &params, &noise)?;
    let (gen_best, _) = simulate_neural(&best, &params, &noise)?;

    let mut summary = String::from("model,w1,w2,max_price_err,price_stderr\n");
    for (name, g) in [("untrained", &gen_init), ("trained", &gen_best)] {
        let (err, se) = max_price_error(g, &data, &params, &strikes)?;
        writeln!(
            summary,
            "{name},{:.16e},{:.16e},{err:.16e},{se:.16e}",
            wasserstein_1(g, &data)?,
            wasserstein_p(g, &data, 2.0)?
        )?;
    }
    run.write("summary.csv", &summary)?;

    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (sd, si, sb) = (sort(&data), sort(&gen_init), sort(&gen_best));
    let lo = sd[0].min(si[0]).min(sb[0]);
    let hi = sd[sd.len() - 1].max(si[si.len() - 1]).max(sb[sb.len() - 1]);
    let mut text = String::from("x,F_data,F_untrained,F_trained\n");
    for i in 0..ECDF_POINTS {
        let x = lo + (hi - lo) * i as f64 / (ECDF_POINTS - 1) as f64;
        writeln!(text, "{x:.16e},{:.16e},{:.16e},{:.16e}", ecdf(&sd, x), ecdf(&si, x), ecdf(&sb, x))?;
    }
    run.write("ecdf.csv", &text)?;

    let mut text = String::from("k,K,data,data_stderr,untrained,trained\n");
    for &k in &strikes {
        let payoff = Payoff::Call(params.s0 * k.exp());
        let (pd, sd) = price_european(&data, payoff, params.rate, params.horizon)?;
        let (pi, _) = price_european(&gen_init, payoff, params.rate, params.horizon)?;
        let (pb, _) = price_european(&gen_best, payoff, params.rate, params.horizon)?;
        writeln!(text, "{k:.16e},{:.16e},{pd:.16e},{sd:.16e},{pi:.16e},{pb:.16e}", params.s0 * k.exp())?;
    }
    run.write("prices.csv", &text)?;

    let history = train_dir.join("history.csv");
    let curve = fs::read_to_string(&history).with_context(|| format!("reading {}", history.display()))?;
    run.write("learning_curve.csv", &curve)?;
    print!("{summary}");
    Ok(())
}

pub fn grad_check_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = model_params(cfg)?;
    let driver = configured_driver(cfg, &params)?;
    let gc = GradCheckConfig {
        paths: cfg.get("grad_paths", 16)?,
        trials: cfg.get("grad_trials", 50)?,
        step: cfg.get("fd_step", 1e-5)?,
        data_level: cfg.get("curve_scale", DEFAULT_LEVEL)?,
        seed: run.seed,
    };
    let tol: f64 = cfg.get("grad_tol", 1e-3)?;
    let mlp = Mlp::default_network(derive_seed(run.seed, INIT_SALT));
    let report = grad_check(&mlp, &params, &driver, &gc)?;
    let mut text = String::from("param,tape,fd,rel_err\n");
    for (k, g, fd, rel) in &report.entries {
        writeln!(text, "{k},{g:.16e},{fd:.16e},{rel:.16e}")?;
    }
    run.write("grad_check.csv", &text)?;
    println!("loss {:.6e}; max relative error {:.3e} over {} parameters", report.loss, report.max_rel_err, gc.trials);
    if !(report.max_rel_err <= tol) {
        bail!(NumericalFailure(format!(
            "gradient check failed: max relative error {:.3e} exceeds {tol:e}",
            report.max_rel_err
        )));
    }
    Ok(())
}

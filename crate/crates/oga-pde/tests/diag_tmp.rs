use oga_pde::config::parse_config_with_overrides;
use oga_pde::problem::preset;
use oga_pde::quadrature::QuadratureGrid;
use oga_pde::solver::run;

#[test]
#[ignore]
fn diag_example1() {
    let name = std::env::var("DIAG_CONFIG").unwrap_or_else(|_| "example1_cneg1".into());
    let text = std::fs::read_to_string(format!(
        "{}/configs/{name}.toml",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let overrides: Vec<String> = std::env::var("DIAG_OVERRIDES")
        .unwrap_or_default()
        .split_whitespace()
        .map(String::from)
        .collect();
    let cfg = parse_config_with_overrides(&text, &overrides).unwrap();
    let problem = preset(cfg.preset_id().unwrap(), cfg.c_or_k()).unwrap();
    let grid = QuadratureGrid::build(problem.domain(), &cfg.cells, cfg.points_per_cell).unwrap();
    let report = match run(&problem, &grid, &cfg.solver_config()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("RUN FAILED: {e}");
            return;
        }
    };
    for it in &report.iterations {
        eprintln!(
            "n={:3} cand={:4} obj={:+.6e} grid_obj={:+.6e} cond={:.3e} quasi={:.2e}",
            it.n,
            it.candidate_index,
            it.objective,
            it.grid_objective,
            it.condition_estimate,
            it.quasi.ratio(),
        );
    }
    for cp in &report.checkpoints {
        eprintln!(
            "checkpoint n={} l2={:.4e} h1={:.4e}",
            cp.n,
            cp.l2_error.unwrap(),
            cp.h1_error.unwrap()
        );
        let m = &cp.model;
        if cp.n == *cfg.checkpoints.last().unwrap() {
            let mut info: Vec<(f64, f64, f64)> = m
                .neurons()
                .iter()
                .zip(m.coefficients())
                .map(|(g, &a)| (g.omega()[0], g.b(), a))
                .collect();
            info.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (w, b, a) in info {
                eprintln!("  w={w:+.0} b={b:+.12e} a={a:+.6e}");
            }
        }
    }
}

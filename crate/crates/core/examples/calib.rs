use std::time::Instant;
use twomem_core::*;

fn run_case(name: &str, n: usize) {
    let lib = verify::analytic_library();
    let case = lib.iter().find(|c| c.name == name).unwrap();
    let problem = case.problem(n).unwrap();
    let dom = problem.domain.clone();
    let cfg = SolverConfig::for_dim(dom.dim());
    let fs = FrameSet::new(dom.dim(), cfg.stencil_width).unwrap();
    let t0 = Instant::now();
    match solve_two_membranes(&problem, &cfg, &fs) {
        Ok(pair) => {
            let (u_exact, v_exact, _, _) = case.fields_on(&dom);
            let eu = pair.u.sup_diff(&u_exact);
            let ev = pair.v.sup_diff(&v_exact);
            let iters: usize = pair.report.eps_trace.iter().map(|s| s.iterations).sum();
            println!(
                "{name} n={n}: err_u={eu:.3e} err_v={ev:.3e} stages={} sweeps={} resF={:.2e} contact={} min_gap={:+.2e} wall={:?}",
                pair.report.eps_trace.len(), iters, pair.report.residual_f,
                pair.report.contact_nodes, pair.report.min_gap, t0.elapsed()
            );
        }
        Err(e) => println!("{name} n={n}: FAILED: {e}"),
    }
}

fn main() {
    for n in [101, 201, 401] {
        run_case("one_d_optimal", n);
    }
    for n in [41, 61] {
        run_case("radial_2d", n);
        run_case("fb_counterexample", n);
    }
}

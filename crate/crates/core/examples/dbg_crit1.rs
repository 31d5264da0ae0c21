use meshless_pricer::assembly::{assemble, SchemeConfig};
use meshless_pricer::models::*;
use meshless_pricer::rbf::Smoothness;
use meshless_pricer::solver::*;
use meshless_pricer::transform::*;
use meshless_pricer::validation::heston_european;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let spec = ModelSpec {
        kind: ModelKind::Sv, r: 0.1, q: 0.0, xi: 5.0, eta: 0.16, theta: 0.9, rho: 0.1,
        jump: None, strike: 10.0, maturity: 0.25, right: OptionRight::Put, style: OptionStyle::European,
    };
    for y0 in [0.0625f64, 0.25] {
        for s in [Smoothness::C2, Smoothness::C4, Smoothness::C6] {
            let mut row = String::new();
            for (nx, nz, m) in [(16usize, 8usize, 8usize), (32, 16, 16), (64, 32, 32), (128, 64, 64)] {
                let t0 = Instant::now();
                let grid = Arc::new(NodeGrid::build(nx, nz, StretchParams::defaults(10.0, y0)).unwrap());
                let sys = assemble(&spec, grid, SchemeConfig::new(s)).unwrap();
                let surf = european_solve(&sys, TimeGrid::new(0.25, m).unwrap()).unwrap();
                let prices = evaluation_prices(10.0, &[0,1,2,3,4]);
                let refs: Vec<f64> = prices.iter().map(|&sp| heston_european(&spec, sp, y0, 0.25).unwrap()).collect();
                let (maxerr, _) = error_metrics(&surf, &prices, &refs, y0).unwrap();
                row += &format!("  ({nx},{nz},{m}): {maxerr:.3e} [{:.2}s]", t0.elapsed().as_secs_f64());
            }
            println!("y0={y0} {s:?}:{row}");
        }
    }
}

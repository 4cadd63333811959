use std::f64::consts::PI;

use enda::forward::{solve_pressure_with, GridSpec, PermeabilityField};

fn max_error(n: usize) -> f64 {
    let g = GridSpec::new(n).unwrap();
    let k = PermeabilityField::constant(g.cells(), 1.0).unwrap();
    let source = |x: f64, y: f64| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
    let p = solve_pressure_with(&k, &g, source).unwrap();
    p.values()
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let [x, y] = g.center(c);
            (v - (PI * x).sin() * (PI * y).sin()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let e: Vec<f64> = [10, 20, 40].iter().map(|n| max_error(*n)).collect();
    let r1 = e[0] / e[1];
    let r2 = e[1] / e[2];
    assert!((3.5..=4.5).contains(&r1), "errors {e:?}");
    assert!((3.5..=4.5).contains(&r2), "errors {e:?}");
}

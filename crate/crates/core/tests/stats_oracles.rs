mod common;

use common::oracles;
use retinode::eval::{anova_oneway, ci95, jarque_bera, levene, pearson};

#[test]
fn fixtures_match_textbook_formulas() {
    let g = oracles::fixture_groups();
    let a = anova_oneway(&g).unwrap();
    let (f, p) = oracles::anova(&g);
    assert!((a.statistic - f).abs() < 1e-6 && (a.p - p).abs() < 1e-4);
    let l = levene(&g).unwrap();
    let (w, p) = oracles::levene(&g);
    assert!((l.statistic - w).abs() < 1e-6 && (l.p - p).abs() < 1e-4);
    let r = oracles::fixture_residuals();
    let j = jarque_bera(&r).unwrap();
    let (jb, p) = oracles::jarque_bera(&r);
    assert!((j.statistic - jb).abs() < 1e-6 && (j.p - p).abs() < 1e-4);
    let i = ci95(&g[0]).unwrap();
    let (lo, hi) = oracles::ci95(&g[0]);
    assert!((i.low - lo).abs() < 1e-6 && (i.high - hi).abs() < 1e-6);
}

#[test]
fn fixtures_match_frozen_reference_values() {
    let g = oracles::fixture_groups();
    let a = anova_oneway(&g).unwrap();
    assert!((a.statistic - 78.34075358966936).abs() < 1e-6);
    assert!((a.p - 1.2962317038932438e-07).abs() < 1e-10);
    let l = levene(&g).unwrap();
    assert!((l.statistic - 8.335072001663582).abs() < 1e-6);
    assert!((l.p - 0.005376606223692661).abs() < 1e-6);
    let j = jarque_bera(&oracles::fixture_residuals()).unwrap();
    assert!((j.statistic - 0.06952044906622684).abs() < 1e-9);
    assert!((j.p - 0.9658369725067223).abs() < 1e-9);
}

#[test]
fn pearson_matches_raw_moment_formula() {
    let x = oracles::normal_sample(3, 1000, 0.0, 1.0);
    let noise = oracles::normal_sample(4, 1000, 0.0, 1.0);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| 0.6 * a + b).collect();
    assert!((pearson(&x, &y).unwrap().rho - oracles::pearson(&x, &y)).abs() < 1e-9);
    // positive affine invariance
    let z: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
    assert!((pearson(&z, &y).unwrap().rho - pearson(&x, &y).unwrap().rho).abs() < 1e-12);
}

#[test]
fn mae_matches_brute_force_sum() {
    let x = oracles::normal_sample(5, 1000, 1.0, 2.0);
    let y = oracles::normal_sample(6, 1000, 0.0, 1.0);
    let mut total = 0.0;
    for i in 0..1000 {
        total += (x[i] - y[i]).abs();
    }
    assert!((retinode::eval::mae(&x, &y).unwrap() - total / 1000.0).abs() < 1e-12);
}

#[test]
fn levene_simulation() {
    let same: Vec<Vec<f64>> = (0..3).map(|k| oracles::normal_sample(100 + k, 30, 0.0, 1.0)).collect();
    assert!(levene(&same).unwrap().p > 0.05);
    let mut scaled = same.clone();
    scaled[2].iter_mut().for_each(|v| *v *= 100.0);
    assert!(levene(&scaled).unwrap().p < 0.01);
}

#[test]
fn jarque_bera_simulation() {
    let x = oracles::normal_sample(9, 500, 0.0, 1.0);
    assert!(jarque_bera(&x).unwrap().p > 0.05);
    // exponential-looking sample is strongly skewed
    let skewed: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    assert!(jarque_bera(&skewed).unwrap().p < 1e-6);
}

#[test]
fn anova_invariances() {
    let g = oracles::fixture_groups();
    let base = anova_oneway(&g).unwrap();
    let shifted: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x + 10.0).collect()).collect();
    let scaled: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x * 7.0).collect()).collect();
    assert!((anova_oneway(&shifted).unwrap().p - base.p).abs() < 1e-9);
    assert!((anova_oneway(&scaled).unwrap().statistic - base.statistic).abs() < 1e-6);
}

#[test]
fn ci_width_scales_with_root_r() {
    let base = [0.1, 0.3, 0.2, 0.4];
    let rep = |k: usize| -> Vec<f64> { base.iter().cycle().take(4 * k).copied().collect() };
    let w = |v: &[f64]| {
        let i = ci95(v).unwrap();
        i.high - i.low
    };
    // for large r the t quantile settles, so width ∝ 1/√r
    let (w1, w4) = (w(&rep(25)), w(&rep(100)));
    assert!((w1 / w4 - 2.0).abs() < 0.05, "{}", w1 / w4);
}

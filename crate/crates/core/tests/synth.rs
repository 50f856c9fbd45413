use retinode::data::{generate_with_truth, SynthConfig};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn default_sparsity_is_about_eighty_percent() {
    let cfg = SynthConfig {
        t: 5000,
        n: 4,
        seed: 2,
        ..SynthConfig::default()
    };
    let syn = generate_with_truth(&cfg).unwrap();
    let zeros = syn.recording.responses().iter().filter(|&&r| r == 0.0).count();
    let frac = zeros as f64 / syn.recording.responses().len() as f64;
    assert!((0.75..=0.85).contains(&frac), "zero fraction {frac}");
}

#[test]
fn response_correlates_with_filter_drive_at_configured_lag() {
    let cfg = SynthConfig {
        t: 4000,
        n: 4,
        seed: 9,
        ..SynthConfig::default()
    };
    let syn = generate_with_truth(&cfg).unwrap();
    let rec = &syn.recording;
    for (c, ch) in syn.channels.iter().enumerate() {
        // Brute-force drive: filter dot product, minus 0.8 of a slow average.
        let raw: Vec<f64> = (0..rec.len())
            .map(|t| rec.frame(t).iter().zip(&ch.filter).map(|(&p, &w)| p as f64 / 255.0 * w).sum())
            .collect();
        let mut slow = raw[0];
        let mut d = Vec::with_capacity(raw.len());
        for &v in &raw {
            d.push(v - 0.8 * slow);
            slow = 0.9 * slow + 0.1 * v;
        }
        let r: Vec<f64> = (0..rec.len()).map(|t| rec.response(t)[c] as f64).collect();
        let span = rec.len() - 30;
        let best = (0..=30usize)
            .map(|lag| (lag, pearson(&r[30..30 + span], &d[30 - lag..30 - lag + span])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(best.0.abs_diff(ch.lag) <= 1, "channel {c}: peak at {} (corr {:.3}), lag {}", best.0, best.1, ch.lag);
    }
}

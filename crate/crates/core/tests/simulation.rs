mod common;

use levyou::matops::{expm, gram_qt};
use levyou::polyspec::{EigenSystem, MultiIndex};
use levyou::simulate::{export_samples, mc_semigroup_apply, sample_transition, SampleMetadata, SamplerConfig};
use levyou::{LevyMeasure, Matrix, OuModel, Vector};

#[test]
fn gaussian_transition_moments() {
    let model = common::kinetic_fp();
    let (t, x) = (0.8, [1.0, -0.5]);
    let n = 200_000;
    let s = sample_transition(&model, &x, t, &SamplerConfig::new(11, n)).unwrap();
    let mean_exact = expm(model.b(), t) * Vector::from_column_slice(&x);
    let qt = gram_qt(model.q(), model.b(), t).unwrap();
    let (mean, cov) = (s.mean(), s.covariance());
    let nf = n as f64;
    for i in 0..2 {
        let se = (qt[(i, i)] / nf).sqrt();
        assert!((mean[i] - mean_exact[i]).abs() < 3.0 * se, "mean {i}");
        for j in 0..2 {
            let sd = ((qt[(i, i)] * qt[(j, j)] + qt[(i, j)].powi(2)) / nf).sqrt();
            assert!((cov[(i, j)] - qt[(i, j)]).abs() < 3.0 * sd, "cov {i}{j}");
        }
    }
}

#[test]
fn eigenfunction_decays_under_monte_carlo() {
    let model = common::cp1d();
    let es = EigenSystem::new(&model, 2).unwrap();
    let h2 = es.eigenfunction(&MultiIndex(vec![2])).unwrap();
    let (t, x) = (0.5, [0.4]);
    let (est, se) = mc_semigroup_apply(&model, t, |y| h2.eval(y), &x, &SamplerConfig::new(5, 200_000)).unwrap();
    let exact = (-2.0 * t).exp() * h2.eval(&x);
    assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} (se {se})");
}

#[test]
fn linear_function_without_jumps() {
    let model = OuModel::new(
        Matrix::from_element(1, 1, 0.6),
        Matrix::from_element(1, 1, -1.3),
        LevyMeasure::Null { dim: 1 },
    )
    .unwrap();
    let (t, x) = (0.7, [2.0]);
    let (est, se) = mc_semigroup_apply(&model, t, |y| y[0], &x, &SamplerConfig::new(9, 100_000)).unwrap();
    assert!((est - (-1.3 * t).exp() * 2.0).abs() < 3.0 * se);
}

#[test]
fn export_writes_csv_and_sidecar() {
    let model = common::cp1d();
    let s = sample_transition(&model, &[0.0], 1.0, &SamplerConfig::new(3, 7)).unwrap();
    let dir = std::env::temp_dir().join(format!("levyou-export-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("samples.csv");
    let meta = SampleMetadata { seed: 3, n: 7, t: 1.0, model_hash: "abc".into() };
    export_samples(&s, &meta, &path).unwrap();
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x1");
    assert_eq!(lines.len(), 8);
    for (line, v) in lines[1..].iter().zip(s.rows()) {
        assert_eq!(line.parse::<f64>().unwrap(), v[0]);
    }
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("samples.csv.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 3);
    assert_eq!(side["N"], 7);
    assert_eq!(side["model_hash"], "abc");
    std::fs::remove_dir_all(&dir).unwrap();
}

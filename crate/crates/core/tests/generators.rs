use wiscon_core::datagen::{
    gen_cad, gen_global, generate, injection_count, load_with_manifest, perturb_inject, read_csv, write_generated,
    CadContextSpec, CadGeneratorSpec, CovarianceRule, CsvSchema, GeneratorSpec, Preset,
};
use wiscon_core::{Context, Dataset, Error};

fn zscore_columns(data: &Dataset, cols: &[usize]) -> Vec<Vec<f64>> {
    let x = data.features();
    let stats: Vec<(f64, f64)> = cols
        .iter()
        .map(|&c| {
            let col = x.column(c);
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    (0..data.n())
        .map(|r| cols.iter().zip(&stats).map(|(&c, &(m, s))| (x[[r, c]] - m) / s).collect())
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn perturbation_swaps_in_distant_behavior() {
    let base: Dataset = gen_global(600, 4, 3, 0.0, 9).unwrap();
    assert_eq!(base.anomaly_count(), Some(0));
    let context = Context::new([0, 1], 4).unwrap();
    let out = perturb_inject(&base, &context, 0.05, 3).unwrap();
    let labels = out.labels().unwrap();
    let injected: Vec<usize> = (0..out.n()).filter(|&r| labels[r] == 1).collect();
    assert_eq!(injected.len(), injection_count(600, 0.05).unwrap());
    assert_eq!(injected.len(), 30);
    assert_eq!(out.true_context(), Some(&context));

    let (x0, x1) = (base.features(), out.features());
    for r in 0..out.n() {
        for c in [0, 1] {
            assert_eq!(x0[[r, c]], x1[[r, c]], "contextual value changed at row {r}");
        }
        if labels[r] == 0 {
            assert_eq!(x0.row(r), x1.row(r));
        }
    }

    let behavioral = [2, 3];
    let z = zscore_columns(&base, &behavioral);
    let mut all_pairs: Vec<f64> = Vec::new();
    for a in (0..600).step_by(7) {
        for b in (3..600).step_by(11) {
            if a != b {
                all_pairs.push(dist(&z[a], &z[b]));
            }
        }
    }
    all_pairs.sort_by(f64::total_cmp);
    let mut ranks = Vec::new();
    for &r in &injected {
        let new_behavior: Vec<f64> = behavioral.iter().map(|&c| x1[[r, c]]).collect();
        let donor = (0..600)
            .find(|&d| behavioral.iter().zip(&new_behavior).all(|(&c, &v)| x0[[d, c]] == v))
            .expect("behavior comes from an existing row");
        assert_ne!(donor, r);
        let moved = dist(&z[r], &z[donor]);
        ranks.push(all_pairs.partition_point(|&p| p < moved) as f64 / all_pairs.len() as f64);
    }
    let mean_rank = ranks.iter().sum::<f64>() / ranks.len() as f64;
    assert!(mean_rank > 0.85, "donors are not distant: mean percentile {mean_rank}");
}

#[test]
fn perturbation_rejects_bad_fractions() {
    let base: Dataset = gen_global(100, 3, 2, 0.0, 1).unwrap();
    let context = Context::new([0], 3).unwrap();
    for f in [-0.1, 0.6, f64::NAN] {
        assert!(matches!(perturb_inject(&base, &context, f, 0), Err(Error::InfeasibleFraction(_))), "{f}");
    }
    let none = perturb_inject(&base, &context, 0.0, 0).unwrap();
    assert_eq!(none.anomaly_count(), Some(0));
}

#[test]
fn cad_anomalies_break_the_mapping() {
    let spec = CadGeneratorSpec {
        n_points: 900,
        d: 4,
        contexts: vec![CadContextSpec {
            contextual: vec![0, 1],
            context_components: 3,
            behavior_components: 3,
            n_anomalies: 30,
        }],
        covariance: CovarianceRule::Euclidean,
        seed: 5,
    };
    let cad = gen_cad::<f64>(&spec).unwrap();
    let m = &cad.metadata;
    let labels = cad.dataset.labels().unwrap();
    assert_eq!(cad.dataset.n(), 930);
    assert_eq!(cad.dataset.anomaly_count(), Some(30));
    for r in 0..cad.dataset.n() {
        let mapped = m.mapping[m.context_component[r]];
        if labels[r] == 1 {
            assert_ne!(m.behavior_component[r], mapped, "row {r}");
        } else {
            assert_eq!(m.behavior_component[r], mapped, "row {r}");
        }
    }
    assert_eq!(cad.dataset.true_context(), Some(&Context::new([0, 1], 4).unwrap()));
}

#[test]
fn presets_have_documented_sizes() {
    for (preset, n, d, anomalies) in [
        (Preset::Synthetic1Small, 5_000, 10, 50),
        (Preset::Synthetic2, 5_100, 10, 100),
        (Preset::Synthetic3, 5_100, 50, 102),
        (Preset::Synthetic4, 5_100, 10, 102),
    ] {
        let g = generate::<f64>(&preset.spec(0)).unwrap();
        assert_eq!((g.dataset.n(), g.dataset.d(), g.dataset.anomaly_count()), (n, d, Some(anomalies)), "{preset:?}");
        assert_eq!(g.manifest.anomaly_indices.len(), anomalies);
    }
}

#[test]
fn generated_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GeneratorSpec::Preset {
        name: Preset::Synthetic2,
        seed: 3,
    };
    let g = generate::<f64>(&spec).unwrap();
    let (csv, manifest) = write_generated(&g, dir.path(), "s2").unwrap();
    assert!(manifest.exists());
    let (back, m) = load_with_manifest::<f64>(&csv, &CsvSchema::default()).unwrap();
    assert_eq!(back.features(), g.dataset.features());
    assert_eq!(back.labels(), g.dataset.labels());
    assert_eq!(back.true_context(), g.dataset.true_context());
    assert_eq!(m.unwrap(), g.manifest);

    let again = generate::<f64>(&spec).unwrap();
    assert_eq!(again.dataset.features(), g.dataset.features());
}

#[test]
fn csv_errors_point_at_the_cell() {
    let text = "a,b,label\n1,2,0\n3,x,1\n";
    match read_csv::<f64, _>(text.as_bytes(), &CsvSchema::default()) {
        Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (1, 1)),
        other => panic!("{other:?}"),
    }
    let text = "a,b,label\n1,2,0\n3,4,2\n";
    assert!(matches!(read_csv::<f64, _>(text.as_bytes(), &CsvSchema::default()), Err(Error::LabelDomain { .. })));
    let unlabeled = read_csv::<f64, _>("a,b\n1,2\n".as_bytes(), &CsvSchema::default()).unwrap();
    assert!(unlabeled.labels().is_none());
    assert!(matches!(read_csv::<f64, _>("a,b\n1,2\n".as_bytes(), &CsvSchema::labeled()), Err(Error::MissingColumn(_))));
}

#[test]
fn spec_parse_errors_carry_position() {
    let err = GeneratorSpec::parse("{\"kind\": \"global\",\n \"n\": 5,\n \"oops\": 1}").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cwall_core::fixtures;
use cwall_core::transform::{anonymize, deidentify, measure_confidentiality, verify_k_anonymity, PseudonymKey};

fn chain(c: &mut Criterion) {
    let od = fixtures::ehr_original();
    let recipe = fixtures::case_study_policy().recipe.unwrap();
    let key = PseudonymKey::new(b"bench".to_vec());
    let dd = deidentify(&od, &recipe, &key).unwrap();
    let ad = anonymize(&dd, &recipe).unwrap();

    c.bench_function("deidentify/200 rows", |b| b.iter(|| deidentify(black_box(&od), &recipe, &key).unwrap()));
    for k in [2, 5] {
        let recipe = cwall_core::TransformRecipe { k, ..recipe.clone() };
        c.bench_function(&format!("anonymize/200 rows k={k}"), |b| {
            b.iter(|| anonymize(black_box(&dd), &recipe).unwrap())
        });
    }
    c.bench_function("alpha/200 rows", |b| b.iter(|| measure_confidentiality(black_box(&dd)).unwrap()));
    c.bench_function("verify_k/200 rows", |b| b.iter(|| verify_k_anonymity(black_box(&ad), 2)));
}

criterion_group!(benches, chain);
criterion_main!(benches);

//! Benchmarks over the family fixture: wire rendering, URL resolution,
//! invariant checking, XMI serialization and a full in-process request.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use metarest_bench::{family_metamodel, fixture_dir, simpsons};
use metarest_core::instance::{resolve_path, Target};
use metarest_core::ocl::{check_instance, collect_invariants};
use metarest_core::repr::to_json;
use metarest_core::router::{parse_request_url, ApiRequest, Method};
use metarest_core::security::{KdfParams, UserStore};
use metarest_core::service::Service;

fn bench_render(c: &mut Criterion) {
    let metamodel = family_metamodel();
    let instance = simpsons(Arc::clone(&metamodel));
    let root = Target::Element(instance.roots[0]);
    c.bench_function("render_root_json", |b| {
        b.iter(|| to_json(&instance, &root, "https://localhost:8443"))
    });
}

fn bench_resolve(c: &mut Criterion) {
    let metamodel = family_metamodel();
    let instance = simpsons(Arc::clone(&metamodel));
    let path = parse_request_url("/rest/Family/Simpsons/parents/Homer", None).unwrap();
    c.bench_function("resolve_element_by_id", |b| {
        b.iter(|| resolve_path(&instance, &path).unwrap())
    });
}

fn bench_validation(c: &mut Criterion) {
    let metamodel = family_metamodel();
    let instance = simpsons(Arc::clone(&metamodel));
    let invariants = collect_invariants(&metamodel).unwrap();
    c.bench_function("check_all_invariants", |b| {
        b.iter(|| check_instance(&instance, &invariants))
    });
}

fn bench_xmi_round_trip(c: &mut Criterion) {
    let metamodel = family_metamodel();
    let instance = simpsons(Arc::clone(&metamodel));
    c.bench_function("xmi_serialize", |b| {
        b.iter(|| metarest_core::instance::save_xmi(&instance))
    });
}

fn bench_request(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let family = dir.path().join("Family");
    std::fs::create_dir(&family).unwrap();
    for name in ["metamodel.json", "Simpsons.xmi"] {
        std::fs::copy(fixture_dir().join(name), family.join(name)).unwrap();
    }
    let mut users = UserStore::new(None);
    users.new_password_params = KdfParams::fast();
    users
        .add_user("root", "rootpw", &["admin".to_string()], vec![1u8; 16])
        .unwrap();
    let service = Service::new(dir.path(), users, "https://localhost:8443", vec![]).unwrap();
    let mut request = ApiRequest::new(Method::Get, "/rest/Family/Simpsons");
    use base64::Engine;
    request.authorization = Some(format!(
        "Basic {}",
        base64::engine::general_purpose::STANDARD.encode("root:rootpw")
    ));
    // Warm the instance cache so the benchmark measures request handling.
    assert_eq!(service.handle(&request).status, 200);
    c.bench_function("get_root_full_request", |b| b.iter(|| service.handle(&request)));
}

criterion_group!(
    benches,
    bench_render,
    bench_resolve,
    bench_validation,
    bench_xmi_round_trip,
    bench_request
);
criterion_main!(benches);

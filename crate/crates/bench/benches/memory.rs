use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dmrag_bench::{rng, store, unit_vector};
use dmrag_core::memory::HashEmbedder;
use std::hint::black_box;

fn ltm_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("ltm_search");
    for &n in &[1_000usize, 10_000, 50_000] {
        let s = store(n, 384, 1);
        let q = unit_vector(&mut rng(2), 384);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("top10", n), &n, |b, _| {
            b.iter(|| s.search(black_box(&q), 10).unwrap().len())
        });
    }
    group.finish();
}

fn embed_hash(c: &mut Criterion) {
    let e = HashEmbedder::default();
    let short = "Flow 42 suggests attack activity; logistic anomaly score 0.9731.";
    let long = r#"{"id":175341,"dur":0.000009,"proto":"udp","service":"dns","state":"INT","spkts":2,"dpkts":0,"sbytes":114,"dbytes":0,"rate":111111.1072,"sttl":254,"dttl":0,"sload":50666664,"dload":0,"sloss":0,"dloss":0,"sinpkt":0.009,"dinpkt":0,"sjit":0,"djit":0,"swin":0,"stcpb":0,"dtcpb":0,"dwin":0,"tcprtt":0,"synack":0,"ackdat":0,"smean":57,"dmean":0,"trans_depth":0,"response_body_len":0,"ct_srv_src":24,"ct_state_ttl":2,"ct_dst_ltm":24,"ct_src_dport_ltm":24,"ct_dst_sport_ltm":24,"ct_dst_src_ltm":24,"is_ftp_login":0,"ct_ftp_cmd":0,"ct_flw_http_mthd":0,"ct_src_ltm":24,"ct_srv_dst":24,"is_sm_ips_ports":0}"#;
    let mut group = c.benchmark_group("embed_hash");
    group.bench_function("summary", |b| b.iter(|| e.embed_text(black_box(short))));
    group.bench_function("flow_json", |b| b.iter(|| e.embed_text(black_box(long))));
    group.finish();
}

criterion_group!(benches, ltm_search, embed_hash);
criterion_main!(benches);

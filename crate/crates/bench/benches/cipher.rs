use cematk_core::present::{
    encrypt_block, encrypt_rounds, key_schedule, KeyRegister, Stage, State64,
};
use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

fn cipher(c: &mut Criterion) {
    let k80 = KeyRegister::from_hex("ACDEFB21F9234375C0E6").unwrap();
    let k128 = KeyRegister::new_128(0x0123_4567_89AB_CDEF_FEDC_BA98_7654_3210);
    let pt = State64(0x0123_4567_89AB_CDEF);

    let mut g = c.benchmark_group("present");
    g.throughput(Throughput::Bytes(8));
    g.bench_function("encrypt_block_80", |b| {
        b.iter(|| encrypt_block(black_box(pt), &k80))
    });
    g.bench_function("encrypt_block_128", |b| {
        b.iter(|| encrypt_block(black_box(pt), &k128))
    });
    g.finish();

    c.bench_function("key_schedule_80", |b| {
        b.iter(|| key_schedule(black_box(&k80)))
    });
    c.bench_function("encrypt_rounds_1_capture_sbox", |b| {
        b.iter(|| encrypt_rounds(black_box(pt), &k80, 1, &[Stage::SboxOutput]).unwrap())
    });
}

criterion_group!(benches, cipher);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lyricsep::autodiff::gradcheck::random_tensor;
use lyricsep::dsp::{istft, stft, AudioClip, SAMPLE_RATE};
use lyricsep::eval::bss_eval_frame;
use lyricsep::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn dsp(c: &mut Criterion) {
    let clip = AudioClip::new(noise(5 * SAMPLE_RATE as usize, 1));
    c.bench_function("stft 5 s", |b| b.iter(|| stft(black_box(&clip)).unwrap()));
    let spec = stft(&clip).unwrap();
    c.bench_function("istft 5 s", |b| b.iter(|| istft(black_box(&spec)).unwrap()));
}

fn conv_lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&[4, 64, 128], &mut rng);
    let w = random_tensor(&[64, 64, 3], &mut rng).with_grad();
    c.bench_function("conv1d fwd+bwd 4x64x128 k3 d9", |b| {
        b.iter(|| {
            let mut g = Graph::train(0);
            let (xv, wv) = (g.input(&x), g.input(&w));
            let y = g.conv1d(xv, wv, 9).unwrap();
            let s = g.sum(y);
            g.backward(s).unwrap();
            black_box(g.grad(wv).map(|d| d[0]))
        })
    });

    let h = 32;
    let x = random_tensor(&[4, 64, 128], &mut rng).with_grad();
    let w_ih = random_tensor(&[4 * h, 64], &mut rng).with_grad();
    let w_hh = random_tensor(&[4 * h, h], &mut rng).with_grad();
    let bias = random_tensor(&[4 * h], &mut rng).with_grad();
    c.bench_function("lstm fwd+bwd 4x64x128 h32", |b| {
        b.iter(|| {
            let mut g = Graph::train(0);
            let v = [&x, &w_ih, &w_hh, &bias].map(|t| g.input(t));
            let y = g.lstm(v[0], v[1], v[2], v[3], false).unwrap();
            let s = g.sum(y);
            g.backward(s).unwrap();
            black_box(g.grad(v[1]).map(|d| d[0]))
        })
    });
}

fn bss(c: &mut Criterion) {
    let n = SAMPLE_RATE as usize;
    let (s, a) = (noise(n, 3), noise(n, 4));
    let est: Vec<f64> = s.iter().zip(&a).map(|(x, y)| x + 0.1 * y).collect();
    c.bench_function("bss_eval_frame 1 s, 512 taps", |b| {
        b.iter(|| bss_eval_frame([black_box(&s), &a], black_box(&est), 512).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dsp, conv_lstm, bss
}
criterion_main!(benches);

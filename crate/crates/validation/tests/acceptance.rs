//! Acceptance suite: one test per criterion, each printing a `PASS`/`FAIL`
//! line with the measured values.

use std::panic::{self, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use farmbench::harness;
use farmbench_core::codec::{envelope, rest};
use farmbench_core::ga::{run_ga, run_ga_observed, GaConfig, LocalEvaluator, MutationScheme};
use farmbench_core::genome::{self, accuracy, sombrero, Phenotype};
use farmbench_core::{Fault, Genome, Method, Protocol, RpcRequest, RpcResponse, SearchDomain, TrialStats};
use farmbench_rpc::RpcClient;
use farmbench_validation::{client, median, remote_runs, serial, server, verdict};

fn echo_stats(rt: &tokio::runtime::Runtime, c: &RpcClient, len: usize, trials: usize) -> TrialStats {
    rt.block_on(harness::run_echo_experiment(c, len, 100, trials))
        .expect("echo experiment")
}

#[test]
fn c01_echo_envelope_slower_than_rest() {
    let _g = serial();
    let rt = farmbench_validation::runtime();
    let (se, sr) = (server(Protocol::Envelope), server(Protocol::Rest));
    let clients = [client(&se), client(&sr)];
    let mut details = Vec::new();
    let mut pass = true;
    for len in [100, 1000] {
        let stats = rt
            .block_on(harness::run_echo_interleaved(&clients, len, 100, 20))
            .expect("echo experiment");
        let (env, rst) = (stats[0], stats[1]);
        let ratio = env.mean / rst.mean;
        pass &= env.mean > rst.mean && ratio >= 1.1;
        details.push(format!(
            "len={len} envelope {:.2} ms, rest {:.2} ms, ratio {ratio:.3}",
            env.mean * 1e3,
            rst.mean * 1e3
        ));
    }
    let detail = format!("{} (need ratio >= 1.1)", details.join("; "));
    verdict(1, "echo protocol ordering", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c02_rest_payload_sensitivity() {
    let _g = serial();
    let rt = farmbench_validation::runtime();
    let s = server(Protocol::Rest);
    let c = client(&s);
    let mut details = Vec::new();
    let mut pass = true;
    for run in 1..=3 {
        let short = echo_stats(&rt, &c, 100, 20);
        let long = echo_stats(&rt, &c, 1000, 20);
        let ok = long.mean >= 0.95 * short.mean;
        pass &= ok;
        details.push(format!(
            "run {run}: len=100 {:.2} ms, len=1000 {:.2} ms",
            short.mean * 1e3,
            long.mean * 1e3
        ));
    }
    let detail = format!("{} (need len1000 >= 0.95 x len100 in every run)", details.join("; "));
    verdict(2, "rest payload sensitivity", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c03_large_config_accuracy() {
    let _g = serial();
    let s = server(Protocol::Rest);
    let cfg = GaConfig::default().with_size(20, 50).with_seed(1);
    let runs = remote_runs(&s, &cfg, 10);
    let accs: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
    let hits = accs.iter().filter(|&&a| a >= 0.999).count();
    let pass = hits >= 8;
    let detail = format!(
        "{hits}/10 seeds reach 0.999 over rest (need >= 8); accuracies {:?}",
        accs.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>()
    );
    verdict(3, "GA accuracy 20 gen / 50 pop", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c04_small_config_accuracy() {
    let _g = serial();
    let s = server(Protocol::Rest);
    let cfg = GaConfig::default().with_size(10, 10).with_seed(1);
    let runs = remote_runs(&s, &cfg, 10);
    let accs: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
    let med = median(&accs);
    let pass = med >= 0.98;
    let detail = format!(
        "median accuracy {med:.6} over 10 seeds (need >= 0.98); accuracies {:?}",
        accs.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>()
    );
    verdict(4, "GA accuracy 10 gen / 10 pop", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c05_ga_rest_faster_than_envelope() {
    let _g = serial();
    let cfg = GaConfig::default().with_size(20, 50).with_seed(1);
    let se = server(Protocol::Envelope);
    let sr = server(Protocol::Rest);
    let env = remote_runs(&se, &cfg, 10);
    let rst = remote_runs(&sr, &cfg, 10);
    let env_r = harness::ga_report(Protocol::Envelope, &cfg, &env).unwrap();
    let rst_r = harness::ga_report(Protocol::Rest, &cfg, &rst).unwrap();
    let pass = rst_r.time_stats.mean < env_r.time_stats.mean;
    let detail = format!(
        "wall time per run: envelope {:.1} ms, rest {:.1} ms, ratio {:.3} (need rest < envelope)",
        env_r.time_stats.mean * 1e3,
        rst_r.time_stats.mean * 1e3,
        env_r.time_stats.mean / rst_r.time_stats.mean
    );
    verdict(5, "GA protocol ordering", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c06_transport_transparency() {
    let _g = serial();
    let se = server(Protocol::Envelope);
    let sr = server(Protocol::Rest);
    let mut mismatches = Vec::new();
    for seed in 1..=5 {
        let cfg = GaConfig::default().with_seed(seed);
        let local = run_ga(&cfg, LocalEvaluator::new(cfg.domain)).unwrap();
        for s in [&sr, &se] {
            let remote = &remote_runs(s, &cfg, 1)[0];
            let same = remote.best.genome == local.best.genome
                && remote.best_accuracy.to_bits() == local.best_accuracy.to_bits()
                && remote.per_generation_best == local.per_generation_best;
            if !same {
                mismatches.push(format!("seed {seed} over {}", s.protocol()));
            }
        }
    }
    let pass = mismatches.is_empty();
    let detail = if pass {
        "seeds 1-5 give bit-identical best genomes for local, rest and envelope".to_string()
    } else {
        format!("differences: {mismatches:?}")
    };
    verdict(6, "transport transparency", pass, &detail);
    assert!(pass, "{detail}");
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const SPECIAL: &[char] = &[
        '<', '>', '&', '"', '\'', ' ', '\t', '\n', '\r', '%', '/', '?', '#', ']', '\u{1}', 'é', '✓', '😀',
    ];
    let len = match rng.gen_range(0..10) {
        0 => 0,
        1..=7 => rng.gen_range(1..40),
        _ => rng.gen_range(40..2000),
    };
    (0..len)
        .map(|_| match rng.gen_range(0..4) {
            0 => SPECIAL[rng.gen_range(0..SPECIAL.len())],
            1 => char::from_u32(rng.gen_range(0x20..0x2FFF)).unwrap_or('x'),
            _ => rng.gen_range(b'0'..=b'z') as char,
        })
        .collect()
}

fn random_request(rng: &mut ChaCha8Rng) -> RpcRequest {
    match rng.gen_range(0..3) {
        0 => RpcRequest::Push(random_string(rng)),
        1 => RpcRequest::Pop,
        _ => RpcRequest::Evaluate(random_string(rng)),
    }
}

fn roundtrip_failures(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut failures = Vec::new();
    for i in 0..n {
        let req = random_request(rng);
        let method = req.method();
        match envelope::parse_envelope_request(&envelope::encode_envelope_request(&req)) {
            Ok(back) if back == req => {}
            other => failures.push(format!("#{i} envelope request {req:?} -> {other:?}")),
        }
        match rest::rest_decode(&rest::rest_encode(&req)) {
            Ok(back) if back == req => {}
            other => failures.push(format!("#{i} rest request {req:?} -> {other:?}")),
        }

        let detail = random_string(rng);
        let resp = match rng.gen_range(0..3) {
            0 => RpcResponse::Result(random_string(rng)),
            1 => RpcResponse::Fault(Fault::client(detail)),
            _ => RpcResponse::Fault(Fault::server(detail)),
        };
        match envelope::parse_envelope_response(&envelope::encode_envelope_response(method, &resp)) {
            // Faults carry no method element, so only results echo it back.
            Ok(p) if p.response == resp && p.method == matches!(resp, RpcResponse::Result(_)).then_some(method) => {}
            other => failures.push(format!("#{i} envelope response {resp:?} -> {other:?}")),
        }
        let (status, body) = rest::encode_rest_response(&resp);
        let back = rest::decode_rest_response(status, body);
        if back != resp {
            failures.push(format!("#{i} rest response {resp:?} -> {back:?}"));
        }
    }
    failures
}

fn mutate(rng: &mut ChaCha8Rng, mut bytes: Vec<u8>) -> Vec<u8> {
    for _ in 0..rng.gen_range(1..6) {
        if bytes.is_empty() {
            bytes.push(rng.gen());
            continue;
        }
        let at = rng.gen_range(0..bytes.len());
        match rng.gen_range(0..5) {
            0 => bytes[at] ^= 1 << rng.gen_range(0..8),
            1 => bytes.truncate(at),
            2 => {
                bytes.remove(at);
            }
            3 => {
                const TOKENS: &[&[u8]] = &[
                    b"<",
                    b">",
                    b"&",
                    b"</",
                    b"<!DOCTYPE x>",
                    b"&#0;",
                    b"<![CDATA[",
                    b"]]>",
                    b"\"",
                    b"xmlns:soap=\"\"",
                ];
                let t = TOKENS[rng.gen_range(0..TOKENS.len())];
                bytes.splice(at..at, t.iter().copied());
            }
            _ => {
                let end = rng.gen_range(at..bytes.len());
                let chunk = bytes[at..=end].to_vec();
                bytes.splice(at..at, chunk);
            }
        }
    }
    bytes
}

#[test]
fn c07_codec_losslessness_and_fuzz() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let failures = roundtrip_failures(&mut rng, 10_000);

    let mut panics = 0;
    let mut unstructured = Vec::new();
    for i in 0..10_000 {
        let input: Vec<u8> = if i % 4 == 0 {
            (0..rng.gen_range(0..300)).map(|_| rng.gen()).collect()
        } else {
            let req = random_request(&mut rng);
            let base = if i % 4 == 1 {
                envelope::encode_envelope_response(req.method(), &RpcResponse::ok(random_string(&mut rng)))
            } else {
                envelope::encode_envelope_request(&req)
            };
            mutate(&mut rng, base)
        };
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            (
                envelope::parse_envelope_request(&input),
                envelope::parse_envelope_response(&input).map(|_| ()),
            )
        }));
        match outcome {
            Err(_) => panics += 1,
            Ok((req, resp)) => {
                for fault in [req.err(), resp.err()].into_iter().flatten() {
                    if !fault.is_client_fault() || fault.detail.is_empty() {
                        unstructured.push(format!("#{i}: {fault:?}"));
                    }
                }
            }
        }
    }
    let pass = failures.is_empty() && panics == 0 && unstructured.is_empty();
    let detail = format!(
        "10000 random request/response pairs: {} roundtrip failures; 10000 fuzz inputs: {panics} panics, {} unstructured faults",
        failures.len(),
        unstructured.len()
    );
    verdict(7, "codec losslessness", pass, &detail);
    assert!(failures.is_empty(), "{:#?}", &failures[..failures.len().min(5)]);
    assert!(
        unstructured.is_empty(),
        "{:#?}",
        &unstructured[..unstructured.len().min(5)]
    );
    assert_eq!(panics, 0);
}

#[test]
fn c08_envelope_is_more_verbose() {
    let _g = serial();
    let mut rows = Vec::new();
    let mut pass = true;
    let mut overheads = Vec::new();
    for len in [0, 1, 10, 100, 1000, 10_000] {
        let req = RpcRequest::Push(harness::echo_payload(len));
        let env = envelope::encode_envelope_request(&req).len();
        let rst = rest::rest_encode(&req).len();
        pass &= env > rst;
        overheads.push((env - len, rst - len));
        rows.push(format!("len={len}: envelope {env} B, rest {rst} B"));
    }
    let fixed = overheads.iter().all(|o| *o == overheads[0]);
    let (env_oh, rest_oh) = overheads[0];
    let detail = format!(
        "{}; fixed overhead envelope {env_oh} B vs rest {rest_oh} B ({} B extra per push, constant across lengths: {fixed})",
        rows.join(", "),
        env_oh - rest_oh
    );
    verdict(8, "verbosity", pass, &detail);
    assert!(pass, "{detail}");
}

/// Written from the formula alone: unsigned 4-bit axis values mapped
/// linearly onto [-10, 10].
fn brute_force_sombrero(nx: u32, ny: u32) -> f64 {
    let x = -10.0 + 20.0 * f64::from(nx) / 15.0;
    let y = -10.0 + 20.0 * f64::from(ny) / 15.0;
    let r = (x * x + y * y).sqrt();
    if r == 0.0 {
        2.0
    } else {
        1.0 + r.sin() / r
    }
}

#[test]
fn c09_oracle_equivalence() {
    let _g = serial();
    let domain = SearchDomain::new(-10.0, 10.0, 4).unwrap();
    let mut worst = 0.0f64;
    for nx in 0..16u32 {
        for ny in 0..16u32 {
            let g = Genome::from_wire(&format!("{nx:04b}{ny:04b}")).unwrap();
            let got = genome::evaluate(&g, &domain).unwrap().value();
            worst = worst.max((got - brute_force_sombrero(nx, ny)).abs());
        }
    }
    let top = sombrero(Phenotype::new(0.0, 0.0));
    let pass = worst <= 1e-12 && top.value() == 2.0 && accuracy(top) == 1.0;
    let detail = format!(
        "256 genomes, max |diff| {worst:e} (need <= 1e-12); sombrero(0,0) = {:?}, accuracy = {:?}",
        top.value(),
        accuracy(top)
    );
    verdict(9, "oracle equivalence", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c10_ga_invariants() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut problems = Vec::new();
    for run in 0..100 {
        let population = rng.gen_range(4..40);
        let bits = rng.gen_range(2..=32);
        let cfg = GaConfig {
            population_size: population,
            generations: rng.gen_range(1..15),
            mutation: if rng.gen_bool(0.5) {
                MutationScheme::EveryOffspring
            } else {
                MutationScheme::PerOffspring
            },
            mutation_rate: rng.gen(),
            crossover_rate: rng.gen(),
            selection_rate: rng.gen_range(0.5..=1.0),
            seed: rng.gen(),
            domain: SearchDomain::new(-10.0, 10.0, bits).unwrap(),
        };
        let mut sizes = Vec::new();
        let a = run_ga_observed(&cfg, LocalEvaluator::new(cfg.domain), |_, pop| sizes.push(pop.len())).unwrap();
        let b = run_ga(&cfg, LocalEvaluator::new(cfg.domain)).unwrap();
        if a.per_generation_best.windows(2).any(|w| w[1] < w[0]) {
            problems.push(format!(
                "run {run}: best accuracy decreased {:?}",
                a.per_generation_best
            ));
        }
        if sizes.len() != cfg.generations || sizes.iter().any(|&n| n != population) {
            problems.push(format!("run {run}: population sizes {sizes:?}"));
        }
        let same = a.best == b.best
            && a.best_accuracy.to_bits() == b.best_accuracy.to_bits()
            && a.per_generation_best == b.per_generation_best
            && a.evaluations == b.evaluations;
        if !same {
            problems.push(format!("run {run}: same seed, different result"));
        }
    }
    let pass = problems.is_empty();
    let detail = if pass {
        "100 randomized runs: monotone best, constant population, seed-reproducible".to_string()
    } else {
        format!("{} problems, first {:?}", problems.len(), problems.first())
    };
    verdict(10, "GA invariants", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn codec_methods_cover_all_rpc_names() {
    // Guards the random generators above: every method is reachable.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let seen: std::collections::HashSet<Method> = (0..100).map(|_| random_request(&mut rng).method()).collect();
    assert_eq!(seen.len(), Method::ALL.len());
}

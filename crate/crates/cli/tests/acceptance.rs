//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mobius_mono::geom::{fit_sphere, orthonormal_frame, ExtendedPoint, Hyperplane, Isometry, Sphere, VecN};
use mobius_mono::mobius::{
    ball_image_reflection, isometric_decomposition, reflect, BallImageBoundary, MobiusMap, Reflection,
};
use mobius_mono::monotonicity::{
    coarea_check, div_w_check, flux_identity_check, i_of_r, j_of_r, monotone_sweep, prescribed_point_bound, q_a,
    s_of_r, surface_gradient_f, surface_gradient_f_fd, volume_identity_residual, weighted_identity_residual, Scenario,
};
use mobius_mono::quadrature::QuadOptions;
use mobius_mono::surfaces::{catenoid, flat_disk};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn rel_vec(a: &VecN, b: &VecN) -> f64 {
    a.dist(b) / a.norm().max(b.norm()).max(1.0)
}

fn fin(p: &ExtendedPoint) -> Result<VecN, String> {
    p.finite().cloned().ok_or_else(|| "unexpected point at infinity".to_string())
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, half: f64) -> VecN {
    VecN::from((0..n).map(|_| rng.gen_range(-half..half)).collect::<Vec<_>>())
}

fn rand_unit(rng: &mut ChaCha8Rng, n: usize) -> VecN {
    loop {
        let v = rand_vec(rng, n, 1.0);
        let len = v.norm();
        if len > 0.1 && len <= 1.0 {
            return v.scale(1.0 / len);
        }
    }
}

fn v3(x: f64, y: f64, z: f64) -> VecN {
    VecN::from([x, y, z])
}

fn plane_frame(u: VecN, v: VecN) -> mobius_mono::geom::Frame {
    orthonormal_frame(&[u, v], 1e-12).expect("independent span")
}

fn disk_scenario() -> Scenario {
    let patch = flat_disk(v3(1.5, 0.0, 0.0), plane_frame(VecN::unit(3, 1), VecN::unit(3, 2)), 0.6).unwrap();
    Scenario::reflection(v3(2.0, 0.0, 0.0), 1.0, patch, 1.5).unwrap()
}

fn catenoid_scenario() -> Scenario {
    Scenario::reflection(v3(0.0, 0.0, 3.0), 2.0, catenoid(1.0, -0.9, 0.9).unwrap(), 1.9).unwrap()
}

fn mirrored_catenoid_scenario() -> Scenario {
    let mirror = Hyperplane::new(VecN::unit(3, 0), 0.0).unwrap();
    let map = MobiusMap::new(vec![
        Reflection::InHyperplane(mirror.clone()),
        Reflection::InSphere(Sphere::new(v3(0.0, 0.0, 3.0), 2.0).unwrap()),
    ])
    .unwrap();
    let patch = catenoid(1.0, -0.9, 0.9).unwrap().transformed(Isometry::mirror(&mirror)).unwrap();
    Scenario::mobius(map, patch, 1.9).unwrap()
}

const CATENOID_RADII: [f64; 5] = [1.80, 1.82, 1.84, 1.86, 1.88];

// --- 1 ---------------------------------------------------------------------

fn random_word(rng: &mut ChaCha8Rng, n: usize) -> Vec<Reflection> {
    let len = rng.gen_range(1..=4);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.7) {
                Reflection::InSphere(Sphere::new(rand_vec(rng, n, 3.0), rng.gen_range(0.5..2.0)).unwrap())
            } else {
                Reflection::InHyperplane(Hyperplane::new(rand_unit(rng, n), rng.gen_range(-2.0..2.0)).unwrap())
            }
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let mut decomposed = [0usize; 2];
    for (slot, n) in [3usize, 4].into_iter().enumerate() {
        for _ in 0..1000 {
            // chord identities, |σ(x)|, involution
            let b = rand_vec(&mut rng, n, 3.0);
            let big_r = rng.gen_range(0.3..2.5);
            let sigma = Reflection::InSphere(Sphere::new(b.clone(), big_r).unwrap());
            let x = rand_vec(&mut rng, n, 4.0);
            let y = rand_vec(&mut rng, n, 4.0);
            let sx = fin(&reflect(&sigma, &x.clone().into()))?;
            let sy = fin(&reflect(&sigma, &y.clone().into()))?;
            let (xb, yb) = (x.dist(&b), y.dist(&b));
            let e1 = rel(sx.dist(&b), big_r * big_r / xb);
            let e2 = rel(sx.dist(&sy), big_r * big_r * x.dist(&y) / (xb * yb));
            let s0 = fin(&reflect(&sigma, &VecN::zeros(n).into()))?;
            let e3 = rel(sx.norm(), b.norm() * x.dist(&s0) / xb);
            let e4 = rel_vec(&fin(&reflect(&sigma, &sx.clone().into()))?, &x);
            let e = e1.max(e2).max(e3).max(e4);
            ensure(e <= tol, || format!("n = {n}: reflection identity error {e:.3e}"))?;
            worst = worst.max(e);

            // decomposition round trip on random words
            let word = random_word(&mut rng, n);
            let map = MobiusMap::new(word).map_err(|e| e.to_string())?;
            let Ok(dec) = isometric_decomposition(&map) else {
                continue;
            };
            decomposed[slot] += 1;
            let pole = fin(&map.inverse().apply(&ExtendedPoint::Infinity))?;
            let e = rel_vec(&pole, &dec.b);
            ensure(e <= tol, || format!("n = {n}: b vs φ⁻¹(∞) error {e:.3e}"))?;
            worst = worst.max(e);
            for _ in 0..8 {
                let z = rand_vec(&mut rng, n, 2.0);
                if z.dist(&dec.b) < 1e-3 * dec.b.norm() {
                    continue;
                }
                let direct = fin(&map.apply(&z.clone().into()))?;
                let factored = fin(&dec.apply(&z.clone().into()))?;
                let e = direct.dist(&factored) / (1.0 + z.norm());
                ensure(e <= tol, || format!("n = {n}: |φ(x) − ψσ(x)| = {e:.3e}·(1+|x|)"))?;
                worst = worst.max(e);
            }
        }
    }
    ensure(decomposed.iter().all(|&d| d >= 500), || format!("too few decomposable words {decomposed:?}"))?;
    Ok(format!(
        "2000 reflection cases + {} random words, worst relative error {worst:.2e}",
        decomposed[0] + decomposed[1]
    ))
}

// --- 2 ---------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 3;
        let b = rand_unit(&mut rng, n).scale(rng.gen_range(0.5..4.0));
        let bn = b.norm();
        let big_r = rng.gen_range(0.2..2.0) * bn;
        let r = rng.gen_range(0.05..0.9) * bn;
        let sigma = Reflection::InSphere(Sphere::new(b.clone(), big_r).unwrap());
        let pts = (0..24)
            .map(|_| fin(&reflect(&sigma, &rand_unit(&mut rng, n).scale(r).into())))
            .collect::<Result<Vec<_>, _>>()?;
        let (fit, _) = fit_sphere(&pts).map_err(|e| e.to_string())?;
        let b2 = bn * bn;
        let center = b.scale((b2 - big_r * big_r - r * r) / (b2 - r * r));
        let radius = big_r * big_r * r / (b2 - r * r).abs();
        let e = (fit.center.dist(&center) / radius.max(center.norm()).max(1.0)).max(rel(fit.radius, radius));
        ensure(e <= 1e-9, || format!("fit vs closed form error {e:.3e}"))?;
        let BallImageBoundary::Sphere(s) = ball_image_reflection(&b, big_r, r) else {
            return Err("expected a sphere image".into());
        };
        let e2 = (s.center.dist(&center) / center.norm().max(1.0)).max(rel(s.radius, radius));
        ensure(e2 <= 1e-9, || format!("library vs closed form error {e2:.3e}"))?;
        worst = worst.max(e).max(e2);
    }
    // r = |b|: σ(S_|b|) is the plane 2|b|² − R² − 2⟨b, x⟩ = 0
    let mut plane_worst: f64 = 0.0;
    for _ in 0..10 {
        let b = rand_unit(&mut rng, 3).scale(rng.gen_range(0.5..3.0));
        let bn = b.norm();
        let big_r = rng.gen_range(0.2..1.5) * bn;
        let sigma = Reflection::InSphere(Sphere::new(b.clone(), big_r).unwrap());
        let BallImageBoundary::Hyperplane(h) = ball_image_reflection(&b, big_r, bn) else {
            return Err("expected a plane image at r = |b|".into());
        };
        for _ in 0..20 {
            let u = rand_unit(&mut rng, 3).scale(bn);
            if u.dist(&b) < 1e-3 * bn {
                continue;
            }
            let x = fin(&reflect(&sigma, &u.into()))?;
            let closed = (2.0 * bn * bn - big_r * big_r - 2.0 * b.dot(&x)) / (2.0 * bn);
            plane_worst = plane_worst.max(closed.abs()).max(h.signed_distance(&x).abs());
        }
    }
    ensure(plane_worst < 1e-10, || format!("plane residual {plane_worst:.3e}"))?;
    Ok(format!("sphere fits worst {worst:.2e}, plane residual {plane_worst:.2e}"))
}

// --- 3 ---------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let scn = disk_scenario();
    let opts = QuadOptions::default();
    let mut worst: f64 = 0.0;
    for r in [0.3, 0.8, 1.4] {
        let j = j_of_r(&scn, r, opts).map_err(|e| e.to_string())?.value;
        let i = i_of_r(&scn, r, opts).map_err(|e| e.to_string())?.value;
        let e = (j - PI / 4.0).abs().max((i - PI / 4.0).abs());
        ensure(e <= 1e-6, || format!("r = {r}: J = {j}, I = {i}"))?;
        worst = worst.max(e);
    }
    // disk radius of Σ ∩ σ(B_1): ball image cut by the plane x₁ = 1.5
    let BallImageBoundary::Sphere(s) = ball_image_reflection(&v3(2.0, 0.0, 0.0), 1.0, 1.0) else {
        return Err("expected a sphere".into());
    };
    let disk_r = (s.radius * s.radius - (s.center[0] - 1.5).powi(2)).sqrt();
    let expect = 1.0 / (2.0 * 3f64.sqrt());
    ensure((disk_r - expect).abs() <= 1e-9, || format!("region radius {disk_r} vs {expect}"))?;
    Ok(format!("|J − π/4|, |I − π/4| ≤ {worst:.2e}; region radius error {:.2e}", (disk_r - expect).abs()))
}

// --- 4 ---------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let scn = catenoid_scenario();
    let opts = QuadOptions { tol: 1e-7, ..QuadOptions::default() };
    let rep = monotone_sweep(&scn, &CATENOID_RADII, 4, opts).map_err(|e| e.to_string())?;
    ensure(rep.pairs.len() == 4, || "expected 4 pairs".into())?;
    let mut worst_ratio: f64 = 0.0;
    for p in &rep.pairs {
        for (tag, o) in [("volume", &p.volume), ("weighted", &p.weighted)] {
            ensure(o.pass, || {
                format!("{tag} [{}, {}]: residual {:.3e} > budget {:.3e}", p.r_lo, p.r_hi, o.residual, o.budget)
            })?;
            let ratio = o.budget / o.lhs.abs();
            ensure(ratio <= 1e-4, || format!("{tag} [{}, {}]: budget/|lhs| = {ratio:.3e}", p.r_lo, p.r_hi))?;
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    ensure(rep.j.windows(2).all(|w| w[0].value < w[1].value), || "J is not increasing".into())?;
    // a wide pair straddling the onset of Σ ∩ φ(B_r)
    let vol = volume_identity_residual(&scn, 1.2, 1.8, opts).map_err(|e| e.to_string())?;
    let wt = weighted_identity_residual(&scn, 1.2, 1.8, 4, opts).map_err(|e| e.to_string())?;
    ensure(vol.pass && wt.pass, || format!("[1.2, 1.8]: volume {vol:?}, weighted {wt:?}"))?;
    Ok(format!("4 pairs within budget, worst budget/|lhs| {worst_ratio:.2e}; [1.2, 1.8] also passes"))
}

// --- 5 ---------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let opts = QuadOptions::default();
    let a = monotone_sweep(&catenoid_scenario(), &CATENOID_RADII, 4, opts).map_err(|e| e.to_string())?;
    let b = monotone_sweep(&mirrored_catenoid_scenario(), &CATENOID_RADII, 4, opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for n in 0..a.radii.len() {
        worst = worst.max(rel(a.j[n].value, b.j[n].value)).max(rel(a.i[n].value, b.i[n].value));
    }
    for (p, q) in a.pairs.iter().zip(&b.pairs) {
        worst = worst
            .max((p.volume.residual - q.volume.residual).abs())
            .max((p.weighted.residual - q.weighted.residual).abs());
    }
    ensure(b.pass, || "mirrored sweep fails its own identities".into())?;
    ensure(worst <= 1e-9, || format!("mirrored vs reflection difference {worst:.3e}"))?;
    Ok(format!("max difference {worst:.2e}"))
}

// --- 6 ---------------------------------------------------------------------

fn machinery(scn: &Scenario, params: &[[f64; 2]], s_flux: f64, s_band: (f64, f64)) -> Result<String, String> {
    let opts = QuadOptions::default();
    let (mut g_worst, mut d_worst): (f64, f64) = (0.0, 0.0);
    for p in params {
        let smp = scn.patch().sample(p).map_err(|e| e.to_string())?;
        let closed = surface_gradient_f(scn, &smp).map_err(|e| e.to_string())?;
        let fd = surface_gradient_f_fd(scn, p, 1e-3).map_err(|e| e.to_string())?;
        let ge = closed.dist(&fd) / closed.norm();
        ensure(ge <= 1e-6, || format!("gradient at {p:?}: rel error {ge:.3e}"))?;
        g_worst = g_worst.max(ge);
        let (c, f) = div_w_check(scn, &smp).map_err(|e| e.to_string())?;
        // identically zero on a flat disk: compare against unit scale
        let de = (c - f).abs() / c.abs().max(1.0);
        ensure(de <= 1e-5, || format!("divW at {p:?}: {c} vs {f}"))?;
        d_worst = d_worst.max(de);
    }
    let flux = flux_identity_check(scn, s_flux, opts).map_err(|e| e.to_string())?;
    ensure(flux.pass, || format!("flux {flux:?}"))?;
    let co = coarea_check(scn, s_band.0, s_band.1, opts).map_err(|e| e.to_string())?;
    ensure(co.pass, || format!("coarea {co:?}"))?;
    Ok(format!(
        "grad {g_worst:.1e}, divW {d_worst:.1e}, flux {:.1e}/{:.1e}, coarea {:.1e}/{:.1e}",
        flux.residual.abs(),
        flux.budget,
        co.residual.abs(),
        co.budget
    ))
}

fn criterion_6() -> Outcome {
    let disk = disk_scenario();
    let d = machinery(
        &disk,
        &[[0.3, 0.2], [-0.4, 0.1], [0.1, -0.5]],
        disk.s_of_r(1.0),
        (disk.s_of_r(0.5), disk.s_of_r(1.4)),
    )?;
    let cat = catenoid_scenario();
    let c = machinery(
        &cat,
        &[[0.3, 0.2], [-2.0, 0.7], [1.1, -0.5], [2.9, 0.0]],
        cat.s_of_r(1.85),
        (cat.s_of_r(1.80), cat.s_of_r(1.88)),
    )?;
    Ok(format!("disk: {d}; catenoid: {c}"))
}

// --- 7 ---------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let a = v3(0.5, 0.0, 0.0);
    let opts = QuadOptions::default();
    let flat = flat_disk(a.clone(), plane_frame(VecN::unit(3, 1), VecN::unit(3, 2)), 1.0).unwrap();
    let eq = prescribed_point_bound(&flat, &a, opts).map_err(|e| e.to_string())?;
    ensure((eq.area - 0.75 * PI).abs() <= 1e-6, || format!("area {} vs 0.75π", eq.area))?;
    ensure(eq.pass, || format!("equality case fails: {eq:?}"))?;
    let mut slacks = Vec::new();
    for (u, v) in [
        (v3(0.3, 1.0, 0.0), VecN::unit(3, 2)),
        (v3(1.0, 1.0, 0.0), v3(0.0, 0.5, 1.0)),
        (v3(0.0, 1.0, 0.0), v3(2.0, 0.0, 1.0)),
    ] {
        let frame = plane_frame(u, v);
        let patch = flat_disk(a.clone(), frame.clone(), 1.6).unwrap();
        let res = prescribed_point_bound(&patch, &a, opts).map_err(|e| e.to_string())?;
        // oracle: the plane meets B₁ in a disk of radius² 1 − dist(0, plane)²
        let offset2 = a.norm_sq() - frame.tangential_norm_sq(&a);
        let expect = PI * (1.0 - offset2);
        ensure((res.area - expect).abs() <= 1e-6, || format!("tilted area {} vs {expect}", res.area))?;
        ensure(res.slack > res.budget, || format!("slack {} not positive beyond budget {}", res.slack, res.budget))?;
        slacks.push(res.slack);
    }
    Ok(format!("equality area error {:.2e}; tilted slacks {slacks:.4?}", (eq.area - 0.75 * PI).abs()))
}

// --- 8 ---------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let a = v3(0.5, 0.0, 0.0);
    let a2 = a.norm_sq();
    let sigma = mobius_mono::mobius::make_sigma_a(&a).map_err(|e| e.to_string())?;
    let dec = isometric_decomposition(&sigma).map_err(|e| e.to_string())?;
    let (bn, big_r) = (dec.b.norm(), dec.radius);
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        let r = 1.9 * i as f64 / 20.0;
        let s = s_of_r(r, bn, big_r);
        let closed = (1.0 - a2) * r * r / (1.0 - r * r * a2);
        worst = worst.max(rel(s, closed));
    }
    ensure(worst <= 1e-12, || format!("s(r) mismatch {worst:.3e}"))?;
    let plane = flat_disk(a.clone(), plane_frame(v3(0.3, 1.0, 0.0), VecN::unit(3, 2)), 1.2).unwrap();
    let scn = Scenario::mobius(sigma, plane, 1.0).map_err(|e| e.to_string())?;
    let opts = QuadOptions::default();
    let mut j_worst: f64 = 0.0;
    for r in [0.3, 0.5, 0.7, 0.9, 1.0] {
        let j = j_of_r(&scn, r, opts).map_err(|e| e.to_string())?;
        let q = q_a(&scn, scn.s_of_r(r), opts).map_err(|e| e.to_string())?;
        let scale = big_r.powi(2);
        let budget = mobius_mono::monotonicity::error_budget(j.value, j.error_estimate, scale * q.error_estimate);
        let d = (j.value - scale * q.value).abs();
        ensure(d <= budget, || format!("r = {r}: J = {} vs R²Q_A = {}", j.value, scale * q.value))?;
        j_worst = j_worst.max(d);
    }
    Ok(format!("s(r) worst rel {worst:.1e}; |J − R²Q_A| ≤ {j_worst:.1e}"))
}

// --- 9 ---------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/catenoid.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut tables = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mobius-mono"))
            .arg("sweep")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || format!("sweep exited with {:?}", status.status.code()))?;
        tables.push(std::fs::read(out.join("sweep.csv")).map_err(|e| e.to_string())?);
    }
    ensure(tables[0] == tables[1], || "CSV tables differ between runs".into())?;
    Ok(format!("{} bytes, identical", tables[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 Möbius algebra suite", criterion_1, Duration::from_secs(5)),
        ("2 ball-image sphere fits", criterion_2, Duration::from_secs(5)),
        ("3 equality case", criterion_3, Duration::from_secs(30)),
        ("4 catenoid identities", criterion_4, Duration::from_secs(300)),
        ("5 Möbius equivariance", criterion_5, Duration::from_secs(300)),
        ("6 proof-machinery oracles", criterion_6, Duration::from_secs(120)),
        ("7 prescribed-point bound", criterion_7, Duration::from_secs(60)),
        ("8 sigma_a correspondence", criterion_8, Duration::from_secs(60)),
        ("9 CSV determinism", criterion_9, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {name} ({elapsed:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name} ({elapsed:.2?}): {msg}");
            }
        }
    }
    println!("acceptance: {} of 9 criteria pass", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

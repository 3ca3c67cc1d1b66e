//! Device-model exactness over random parameter draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rram_sim::device_model::{DeviceParams, SynapseState};

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

pub fn check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_end: f64 = 0.0;
    let mut worst_trip: f64 = 0.0;
    let mut worst_anl: f64 = 0.0;
    for draw in 0..100 {
        let g_min = rng.random_range(0.0..5.0);
        let g_max = g_min + rng.random_range(0.1..10.0);
        let n_max = 2 * rng.random_range(1..=512u32);
        let k = rng.random_range(-2.0..8.0);
        let d = DeviceParams::from_k(g_min, g_max, n_max, k).map_err(|e| e.to_string())?;
        let span = g_max - g_min;
        let n = n_max as f64;
        let p = |x: f64| d.g_potentiation(x).unwrap();
        let dep = |x: f64| d.g_depression(x).unwrap();

        for (got, want) in [(p(0.0), g_min), (p(n), g_max), (dep(0.0), g_min), (dep(n), g_max)] {
            let e = rel(got, want, want.abs().max(span));
            worst_end = worst_end.max(e);
            if e > 1e-12 {
                return Err(format!("draw {draw}: endpoint {got} vs {want}"));
            }
        }

        let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..=1000 {
            let x = n * i as f64 / 1000.0;
            let (a, b) = (p(x), dep(x));
            if !(a > last.0 && b > last.1) {
                return Err(format!("draw {draw}: curves not strictly increasing at n = {x}"));
            }
            last = (a, b);
        }

        for _ in 0..100 {
            let g = rng.random_range(g_min..=g_max);
            for back in [p(d.invert_potentiation(g).unwrap()), dep(d.invert_depression(g).unwrap())] {
                let e = rel(back, g, span);
                worst_trip = worst_trip.max(e);
                if e > 1e-9 {
                    return Err(format!("draw {draw}: inversion round trip {g} -> {back}"));
                }
            }
        }

        let direct = (p(n / 2.0) - dep(n / 2.0)) / span;
        let closed = (n / 2.0) / (n / 2.0 + k.exp());
        let e = (direct - closed).abs();
        worst_anl = worst_anl.max(e.max((d.anl() - closed).abs()));
        if worst_anl > 1e-12 {
            return Err(format!("draw {draw}: ANL direct {direct} vs closed form {closed}"));
        }
    }

    let mut loops = Vec::new();
    for anl in [0.2, 0.4, 0.6, 0.8] {
        let d = DeviceParams::from_anl(0.0, 4.0, 100, anl).map_err(|e| e.to_string())?;
        let start = SynapseState { g: 0.0 };
        let cycled = d.apply_pulses(d.apply_pulses(start, 50), -25).g;
        let direct = d.apply_pulses(start, 25).g;
        // the loop must not close: 50P+25D lands away from 25P
        if (cycled - direct).abs() <= 1e-6 * 4.0 {
            return Err(format!("ANL {anl}: 50P+25D = {cycled} matches 25P = {direct}"));
        }
        loops.push(format!("{anl}: {cycled:.3} vs {direct:.3}"));
    }
    Ok(format!(
        "endpoint err {worst_end:.1e}, round trip {worst_trip:.1e}, ANL {worst_anl:.1e}; 50P+25D vs 25P [{}]",
        loops.join(", ")
    ))
}

//! Trains and evaluates the full pipeline for a few seeds on the default
//! generator settings and prints the headline comparisons.
//!
//! Usage: `cargo run --release -p sacf-core --example seed_sweep -- [seeds...]`

use std::time::Instant;

use sacf_core::experts::{train_expert, AugConfig, ExpertHyper, ExpertKind};
use sacf_core::gate::{train_gate, GateHyper, DEFAULT_TAU};
use sacf_core::pipeline::{evaluate, scenario_analysis, Mode, SacfModel};
use sacf_core::scene::Split;
use sacf_core::synth::{make_dataset, GenConfig};

fn main() -> sacf_core::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![1, 2, 3, 4, 5] } else { seeds };
    for seed in seeds {
        let t0 = Instant::now();
        let cfg = GenConfig { seed, ..Default::default() };
        let ds = make_dataset(&cfg)?;
        let t_gen = t0.elapsed();
        let train = ds.labeled_split(Split::Train);
        let test = ds.labeled_split(Split::Test);
        let hyper = ExpertHyper { seed, ..Default::default() };
        let aug = AugConfig::default();
        let t = Instant::now();
        let aware = train_expert(&train, ExpertKind::Aware, &hyper, &aug)?;
        eprintln!("aware {:.1}s", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let agnostic = train_expert(&train, ExpertKind::Agnostic, &hyper, &aug)?;
        eprintln!("agnostic {:.1}s", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let gate = train_gate(&train, &GateHyper { seed, ..Default::default() })?;
        eprintln!("gate {:.1}s", t.elapsed().as_secs_f64());
        let t_train = t0.elapsed();
        println!("seed {seed}: aware w={:?} b={:.3}", aware.w, aware.b);
        println!("seed {seed}: agnostic w={:?} b={:.3}", agnostic.w, agnostic.b);
        println!("seed {seed}: gate v={:?} c={:.3}", gate.v, gate.c);
        let model = SacfModel { aware, agnostic, gate: Some(gate), tau: DEFAULT_TAU, aug };
        for mode in Mode::ALL {
            let (r, preds) = evaluate(&model, mode, &test)?;
            println!(
                "  {:12} l2={:.4} face={:?} obj={:?} pnf={:?} f1_face={:.4} f1_macro={:.4} routing={:?}",
                mode.as_str(), r.l2_mean, r.l2_face, r.l2_obj, r.l2_pnf, r.face.f1, r.macro_.f1, r.routing
            );
            if mode == Mode::Sacf {
                for row in scenario_analysis(&preds, &test)? {
                    println!("    {:18} n={:5} aware={:?} agnostic={:?}", row.scenario, row.count, row.aware_l2, row.agnostic_l2);
                }
            }
        }
        println!("  gen {:.1}s train {:.1}s total {:.1}s", t_gen.as_secs_f64(), (t_train - t_gen).as_secs_f64(), t0.elapsed().as_secs_f64());
    }
    Ok(())
}

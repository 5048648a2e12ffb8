//! Calibration sweeps for the capture-noise sigma and the default study
//! configuration.
//!
//! ```text
//! cargo run --release -p resect-core --example calibrate -- fre
//! cargo run --release -p resect-core --example calibrate -- study [seeds] [toml overrides, \n for newlines]
//! ```

use resect_core::planning::demo::{demo_fiducials, demo_plan, demo_world_pose};
use resect_core::registration::montecarlo::monte_carlo;
use resect_core::sim::Condition;
use resect_core::study::{run_study_in, StudyConfig, StudyScene};

fn fre_sweep() {
    let plan = demo_plan().unwrap();
    let target = [plan.tumor().centroid()];
    let fiducials = demo_fiducials();
    println!("sigma  fre_rms  fre_mean  fre_avg  tre_mean  tre_max  p(tre>=3.1)");
    for k in 0..=12 {
        let sigma = 1.3 + 0.05 * k as f64;
        let mc = monte_carlo(&fiducials, &demo_world_pose(), &target, sigma, 10_000, 7).unwrap();
        println!(
            "{sigma:.2}   {:.3}    {:.3}     {:.3}    {:.3}     {:.2}     {:.4}",
            mc.mean_fre_rms(),
            mc.mean_fre_mean(),
            0.5 * (mc.mean_fre_rms() + mc.mean_fre_mean()),
            mc.mean_tre(),
            mc.max_tre(),
            mc.tre_exceedance(3.1)
        );
    }
}

fn study_sweep(seeds: u64, overrides: &str) {
    let scene = StudyScene::demo().unwrap();
    let mut cfg = StudyConfig::parse(overrides).unwrap();
    let (mut g_dev, mut u_dev, mut g_time, mut u_time) = (0.0, 0.0, 0.0, 0.0);
    let (mut g_sd, mut u_sd, mut g_tsd, mut u_tsd) = (0.0, 0.0, 0.0, 0.0);
    let (mut dev_ok, mut time_ok) = (0, 0);
    let (mut margin_ok, mut guided_trials) = (0, 0);
    let mut min_margin = f64::INFINITY;
    let (mut g_margin, mut u_margin) = (0.0, 0.0);
    for seed in 0..seeds {
        cfg.study.seed = 1 + seed;
        let r = run_study_in(&cfg, &scene).unwrap();
        let dev = r.analysis.comparison("deviation_mean_mm").unwrap();
        let time = r.analysis.comparison("time_s").unwrap();
        let margin = r.analysis.comparison("margin_min_mm").unwrap();
        g_margin += margin.guided.mean;
        u_margin += margin.unguided.mean;
        g_dev += dev.guided.mean;
        u_dev += dev.unguided.mean;
        g_sd += dev.guided.sd.unwrap();
        u_sd += dev.unguided.sd.unwrap();
        g_time += time.guided.mean;
        u_time += time.unguided.mean;
        g_tsd += time.guided.sd.unwrap();
        u_tsd += time.unguided.sd.unwrap();
        dev_ok += usize::from(dev.test.p_value < 0.001);
        time_ok += usize::from(time.test.p_value < 0.01);
        for t in r.trials.iter().filter(|t| t.condition == Condition::Guided) {
            guided_trials += 1;
            margin_ok += usize::from(t.margin_min >= 9.0);
            min_margin = min_margin.min(t.margin_min);
        }
        println!(
            "seed {:>4}: dev {:.2}/{:.2} time {:.1}/{:.1} p_dev {:.1e} p_time {:.1e}",
            cfg.study.seed,
            dev.guided.mean,
            dev.unguided.mean,
            time.guided.mean,
            time.unguided.mean,
            dev.test.p_value,
            time.test.p_value
        );
    }
    let n = seeds as f64;
    println!(
        "deviation guided {:.3} (sd {:.2}) unguided {:.3} (sd {:.2})",
        g_dev / n,
        g_sd / n,
        u_dev / n,
        u_sd / n
    );
    println!(
        "time guided {:.2} (sd {:.2}) unguided {:.2} (sd {:.2})",
        g_time / n,
        g_tsd / n,
        u_time / n,
        u_tsd / n
    );
    println!("margin guided {:.2} unguided {:.2}", g_margin / n, u_margin / n);
    println!("p_dev<0.001 in {dev_ok}/{seeds}, p_time<0.01 in {time_ok}/{seeds}");
    println!(
        "guided margin >= 9: {margin_ok}/{guided_trials} ({:.3}), min {:.2}",
        margin_ok as f64 / guided_trials as f64,
        min_margin
    );
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("fre") => fre_sweep(),
        Some("study") => study_sweep(
            args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20),
            &args.get(2).map(|s| s.replace("\\n", "\n")).unwrap_or_default(),
        ),
        _ => eprintln!("usage: calibrate fre | study [seeds] [overrides]"),
    }
}

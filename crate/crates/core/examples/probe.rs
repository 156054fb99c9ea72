use hurdle_glrm::experiments::{run_mar_study, MarStudyConfig, MissCase};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let fit_tol: f64 = args.get(1).map_or(1e-6, |s| s.parse().unwrap());
    let sweeps: usize = args.get(2).map_or(500, |s| s.parse().unwrap());
    let seeds: Vec<u64> = (1..=30).collect();
    let mut cfg = MarStudyConfig::with_seeds(seeds);
    cfg.fit_rel_tol = fit_tol;
    cfg.fit_max_sweeps = sweeps;
    let start = Instant::now();
    let out = run_mar_study(&cfg).unwrap();
    println!("fit_tol {fit_tol} sweeps {sweeps} elapsed {:?}", start.elapsed());
    let h = out.average(MissCase::Mar, |o| o.hurdle.imputation_mse);
    let nip = out.average(MissCase::Mar, |o| o.nipals.imputation_mse);
    println!("MAR hurdle {h:.4} vs nipals {nip:.4} (margin {:.4})", nip - h);
    println!(
        "top2 {:.3} top3 {:.3}",
        out.association_hit_rate(MissCase::Mar, &["a2", "a3"], 2),
        out.association_hit_rate(MissCase::Mar, &["a2", "a3"], 3)
    );
    for o in out.case_outcomes(MissCase::Mar) {
        let hit3 = o
            .association
            .iter()
            .take(3)
            .any(|r| r.column == "a2" || r.column == "a3");
        if !hit3 {
            let top: Vec<String> = o
                .association
                .iter()
                .take(4)
                .map(|r| format!("{}:{:.2}", r.column, r.distance))
                .collect();
            println!("  miss seed {} gamma {} top {:?}", o.seed, o.gamma, top);
        }
    }
    println!(
        "auc mcar {:.3} mar {:.3}; le mar {:.3}; mean-imp mcar {:.3} mar {:.3}; off ratio {:.1}",
        out.average(MissCase::Mcar, |o| o.auc),
        out.average(MissCase::Mar, |o| o.auc),
        out.average(MissCase::Mar, |o| o.loss_explained),
        out.average(MissCase::Mcar, |o| o.sample_mean.imputation_mse),
        out.average(MissCase::Mar, |o| o.sample_mean.imputation_mse),
        out.average(MissCase::Mar, |o| o.sample_mean.offset_mse)
            / out.average(MissCase::Mar, |o| o.hurdle.offset_mse)
    );
}

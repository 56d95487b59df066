//! Finite-difference gradient check of a tiny end-to-end model, with and
//! without the fault-injection hook.

use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::models::{Model, ModelConfig};
use dualsep::selftest::tiny_td;
use dualsep::training::pit_neg_snr;
use numcore::{grad_check_params, GradCheckOptions, Rng};

fn main() -> dualsep::Result<()> {
    let model = Model::<f64>::new(ModelConfig::Td(tiny_td(Scheme::Reorganized)), 0)?;
    let mut rng = Rng::new(5);
    let mix: Vec<f64> = (0..100).map(|_| rng.uniform(-0.3, 0.3)).collect();
    let refs: Vec<Vec<f64>> = (0..2).map(|_| (0..100).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
    let opts = GradCheckOptions {
        tol: 1e-3,
        floor: 1e-6,
        max_per_tensor: Some(4),
        ..Default::default()
    };
    for fault in [false, true] {
        numcore::set_fault_injection(fault);
        let report = grad_check_params(
            &model.params,
            |g| {
                let ests = model.separate(g, &mix, PathSelector::Online)?;
                Ok(pit_neg_snr(g, &ests, &refs)?.0)
            },
            &opts,
        )?;
        numcore::set_fault_injection(false);
        println!(
            "fault {fault}: checked {} elements, max relative error {:.2e}, pass {}",
            report.checked, report.max_rel_err, report.pass
        );
    }
    Ok(())
}

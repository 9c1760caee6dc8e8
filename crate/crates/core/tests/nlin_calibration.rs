//! Default NLIN coefficients against a coarse split-step measurement.

use gcs_core::channels::{calibrate_nlin, nlin_variance, FiberLinkParams, NlinParams};
use gcs_core::constellation::{moments, square_qam};

#[test]
fn default_coefficients_match_desk_ssfm_within_20_percent() {
    // 1 km steps and 2048 symbols instead of 100 m and 4096
    let link = FiberLinkParams {
        step_size: 1.0,
        ..FiberLinkParams::reference()
    };
    let (qam16, _) = square_qam::<f64>(16).unwrap();
    let cal = calibrate_nlin(&link, &[qam16.clone()], &[-1.0, 1.0, 3.0], 2048, 7).unwrap();
    let mom = moments(&qam16);
    let np = NlinParams::default();
    for &(p, _, _, measured) in &cal.samples {
        let predicted = nlin_variance(p, &mom, &np);
        let rel = (predicted - measured).abs() / measured;
        println!("P = {p:.3e} W: model {predicted:.4e}, ssfm {measured:.4e}, rel {rel:.3}");
        assert!(rel < 0.2, "P = {p} W: relative deviation {rel}");
    }
}

//! Calibrates a single threshold on one feature column under each objective.

use spectral_guard::detection::{calibrate_threshold, Objective};
use spectral_guard::{FeatureKey, Metric};

fn main() -> spectral_guard::Result<()> {
    let key = FeatureKey::new(3, Metric::Smoothness);
    let values = [0.91, 0.88, 0.95, 0.62, 0.90, 0.71, 0.70, 0.93, 0.58, 0.89, 0.89, 0.66];
    let hallucinated = [false, false, false, true, false, true, false, false, true, false, true, true];

    for objective in [Objective::Youden, Objective::recall_default(), Objective::Auc] {
        let c = calibrate_threshold(key, &values, &hallucinated, None, &objective)?;
        println!(
            "{:<28} {}  value {:.3}  recall {:.3}  precision {:.3}",
            objective.to_string(),
            c.rule,
            c.objective_value,
            c.confusion.recall(),
            c.confusion.precision()
        );
    }
    Ok(())
}

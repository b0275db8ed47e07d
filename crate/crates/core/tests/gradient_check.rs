mod common;

use common::{gradient_errors, toy, toy_batch, toy_loss};
use mgam::model::Ablation;

#[test]
fn every_parameter_matches_finite_differences() {
    let t = toy(2, 7);
    for (name, err) in gradient_errors(&t, Ablation::FULL) {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn ablated_models_match_finite_differences() {
    for (m, module) in [(3, "gpe"), (2, "subpe"), (1, "suppe")] {
        let t = toy(m, 19);
        for (name, err) in gradient_errors(&t, Ablation::without(module).unwrap()) {
            assert!(err < 1e-4, "M={m} w/o {module} {name}: relative error {err:e}");
        }
    }
}

#[test]
fn removed_branches_get_zero_gradient() {
    let t = toy(2, 7);
    let (_, grads) = toy_loss(&t, &t.model, &toy_batch(), Ablation::without("suppe").unwrap());
    for (id, name) in t.model.params.names().iter().enumerate() {
        let zero = grads[id].data().iter().all(|&g| g == 0.0);
        assert_eq!(zero, name.starts_with("suppe.") || name == "group_emb", "{name}");
    }
    let (_, grads) = toy_loss(&t, &t.model, &toy_batch(), Ablation::without("gpe").unwrap());
    for (id, name) in t.model.params.names().iter().enumerate() {
        if name.starts_with("gpe.") {
            assert!(grads[id].data().iter().all(|&g| g == 0.0), "{name}");
        }
    }
}

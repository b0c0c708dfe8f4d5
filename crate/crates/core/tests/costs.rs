use posture_mpc::bundled;
use posture_mpc::costs::*;
use posture_mpc::dynamics::{frame_kinematics, ModelSpec, SimState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn biped() -> ModelSpec {
    bundled::model("biped").unwrap()
}

fn rest(model: &ModelSpec) -> SimState {
    let mut s = SimState::rest(model);
    s.q = model.grounded(&s.q);
    s
}

fn random_state(model: &ModelSpec, rng: &mut impl Rng) -> SimState {
    let mut s = rest(model);
    for v in s.q.iter_mut().skip(2) {
        *v += rng.random_range(-0.3..0.3);
    }
    for v in &mut s.qdot {
        *v = rng.random_range(-1.0..1.0);
    }
    s
}

fn spec_of(kinds: &[TermKind]) -> CostSpec {
    CostSpec {
        name: String::new(),
        terms: kinds
            .iter()
            .map(|k| CostTerm {
                weight: 1.0,
                kind: k.clone(),
            })
            .collect(),
    }
}

#[test]
fn standing_reference_zeroes_posture_terms() {
    let model = biped();
    let s = rest(&model);
    let spec = spec_of(&[TermKind::Height { target: None }, TermKind::Upright, TermKind::JointVelocity])
        .bind(&model)
        .unwrap();
    let v = evaluate_terms(&spec, &model, &s);
    assert!(v.iter().all(|t| t.abs() < 1e-12), "{v:?}");
    // Balance is the com offset from the mean foot position, measured independently.
    let f = |n: &str| frame_kinematics(&model, &s.q, &s.qdot, n).unwrap().position;
    let offset = (f("com").x - 0.5 * (f("foot_left").x + f("foot_right").x)).abs();
    let b = evaluate_terms(&spec_of(&[TermKind::Balance]), &model, &s)[0];
    assert!((b - offset).abs() < 1e-12);
}

#[test]
fn term_formulas_match_frames() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let standing = standing_height(&model);
    for _ in 0..20 {
        let s = random_state(&model, &mut rng);
        let kin = |n: &str| frame_kinematics(&model, &s.q, &s.qdot, n).unwrap();
        let (head, pelvis, l, r, com) = (kin("head"), kin("pelvis"), kin("foot_left"), kin("foot_right"), kin("com"));
        let feet_y = 0.5 * (l.position.y + r.position.y);
        let tilt = |u: nalgebra::Vector2<f64>| 1.0 - u.y;
        let mask_norm = model.posture_mask.iter().map(|&d| s.q[d] * s.q[d]).sum::<f64>().sqrt();
        let want = [
            (head.position.y - feet_y - standing).abs(),
            tilt(pelvis.up) + tilt(head.up) + 0.1 * (tilt(l.up) + tilt(r.up)),
            (com.position.x - 0.5 * (l.position.x + r.position.x)).abs(),
            (com.velocity.x - 0.7).abs(),
            s.qdot.iter().map(|v| v * v).sum::<f64>().sqrt(),
            mask_norm,
        ];
        let spec = spec_of(&[
            TermKind::Height { target: None },
            TermKind::Upright,
            TermKind::Balance,
            TermKind::ForwardVelocity { target: 0.7 },
            TermKind::JointVelocity,
            TermKind::JointPosition { reference: None },
        ]);
        let got = evaluate_terms(&spec, &model, &s);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn clearance_applies_only_in_window() {
    let model = biped();
    let s = rest(&model);
    let term = |start| {
        spec_of(&[TermKind::Clearance {
            step_height: 0.05,
            start,
            window: 0.3,
        }])
    };
    let kin = |n: &str| frame_kinematics(&model, &s.q, &s.qdot, n).unwrap().position;
    let fwd = if kin("foot_left").x >= kin("foot_right").x { kin("foot_left") } else { kin("foot_right") };
    let lift = fwd.y - model.terrain.height(fwd.x);
    let always = evaluate_terms(&term(None), &model, &s)[0];
    assert!((always - (0.05 - lift).max(0.0)).abs() < 1e-12);
    assert_eq!(evaluate_terms(&term(Some(fwd.x + 0.1)), &model, &s)[0], always);
    assert_eq!(evaluate_terms(&term(Some(fwd.x + 0.5)), &model, &s)[0], 0.0);
    assert_eq!(evaluate_terms(&term(Some(fwd.x - 0.1)), &model, &s)[0], 0.0);
}

#[test]
fn bundled_stand_and_walk_weights() {
    let stand = bundled::preset("stand").unwrap();
    assert_eq!(stand.labels(), ["height", "upright", "balance", "forward_velocity", "joint_velocity", "joint_position"]);
    assert_eq!(stand.theta(), vec![100.0, 100.0, 100.0, 10.0, 0.01, 1.0]);
    let walk = bundled::preset("walk").unwrap();
    assert_eq!(walk.labels(), ["height", "upright", "balance", "forward_velocity", "joint_position"]);
    assert_eq!(walk.theta(), vec![100.0, 100.0, 100.0, 10.0, 5.0]);
    assert!(matches!(walk.terms[3].kind, TermKind::ForwardVelocity { target } if target > 0.0));
}

#[test]
fn every_bundled_preset_binds_to_its_model() {
    for (preset, model) in [("stand", "biped"), ("walk", "biped"), ("lean-recovery", "biped"), ("reach", "arm"), ("hold", "pendulum")] {
        let spec = bundled::preset(preset).unwrap();
        let model = bundled::model(model).unwrap();
        let bound = spec.bind(&model).unwrap();
        assert!(evaluate(&bound, &model, &SimState::rest(&model), &[]).is_finite());
    }
    // Feet terms on a footless model are rejected.
    let pendulum = bundled::model("pendulum").unwrap();
    assert!(spec_of(&[TermKind::Balance]).bind(&pendulum).is_err());
}

#[test]
fn unknown_term_fields_are_rejected() {
    let ok = "[[terms]]\nkind = \"forward_velocity\"\nweight = 1.0\ntarget = 1.0\n";
    assert!(CostSpec::from_toml_str(ok).is_ok());
    let typo = "[[terms]]\nkind = \"forward_velocity\"\nweight = 1.0\ntarget = 1.0\ntargte = 2.0\n";
    assert!(CostSpec::from_toml_str(typo).is_err());
    let top = "nme = \"x\"\nterms = []\n";
    assert!(CostSpec::from_toml_str(top).is_err());
    let negative = "[[terms]]\nkind = \"upright\"\nweight = -1.0\n";
    assert!(CostSpec::from_toml_str(negative).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_weights_doubles_cost(seed in 0u64..1000) {
        let model = biped();
        let spec = bundled::preset("walk").unwrap().bind(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&model, &mut rng);
        let theta: Vec<f64> = spec.theta().iter().map(|w| 2.0 * w).collect();
        let doubled = theta_set(&spec, &theta).unwrap();
        prop_assert_eq!(evaluate(&doubled, &model, &s, &[]), 2.0 * evaluate(&spec, &model, &s, &[]));
        let zero = theta_set(&spec, &vec![0.0; theta.len()]).unwrap();
        prop_assert_eq!(evaluate(&zero, &model, &s, &[]), 0.0);
    }

    #[test]
    fn theta_get_set_round_trip(theta in proptest::collection::vec(0.0f64..1e3, 6)) {
        let spec = bundled::preset("stand").unwrap();
        prop_assert_eq!(theta_get(&theta_set(&spec, &theta).unwrap()), theta);
    }
}

use rayon::prelude::*;
use worldsim_core::render::CameraModel;
use worldsim_core::scenarios::{
    build_suite, check_label_contract, check_visual_cues, generate, ScenarioConstants, SuiteConfig,
};

#[test]
fn default_suite_has_sound_labels_and_cues() {
    let consts = ScenarioConstants::default();
    let cam = CameraModel::default();
    let suite = build_suite(&SuiteConfig::default()).unwrap();
    let problems: Vec<String> = suite
        .par_iter()
        .flat_map(|spec| {
            let (run, truth) = generate(spec, &consts).unwrap();
            let mut bad = check_label_contract(spec, &run, &truth, &consts);
            bad.extend(check_visual_cues(spec, &run, &cam, &consts));
            bad.into_iter().map(|m| format!("{}: {m}", spec.id)).collect::<Vec<_>>()
        })
        .collect();
    assert!(problems.is_empty(), "{problems:#?}");
}

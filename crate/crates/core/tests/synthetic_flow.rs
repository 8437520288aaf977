//! Selection, cropping, oracle localization, aggregation, splitting and
//! evaluation chained in memory over a generated world.

use curbscape_core::catalog::fetch_image;
use curbscape_core::eval::{evaluate, EvalPano, MatchMode, MATCH_RADIUS_PX};
use curbscape_core::localize::{aggregate, localize, CropDetections, MarkerOracleLocalizer, DEDUP_RADIUS_PX};
use curbscape_core::projection::{CropSampler, CropSpec};
use curbscape_core::selection::{run_selection, SelectionParams};
use curbscape_core::split::{assign_splits, leakage_pairs, spatial_components, SplitFractions, LINK_DIST_M};
use curbscape_core::synth::{generate, WorldSpec};

#[test]
fn oracle_labels_match_ground_truth() {
    let world = generate(&WorldSpec::new(21, 12)).unwrap();
    let sel = run_selection(&world.catalog, &world.ramps, &SelectionParams::default()).unwrap();
    assert_eq!(sel.positives.len() + sel.nulls.len(), world.catalog.len());

    let geometry = CropSpec::default();
    let sampler = CropSampler::new(&geometry, world.spec.pano_width, world.spec.pano_width / 2);
    let oracle = MarkerOracleLocalizer::default();
    let mut panos = Vec::new();
    for id in sel.positives.iter().chain(&sel.nulls) {
        let pano = world.catalog.get(id).unwrap();
        let img = fetch_image(&world, pano).unwrap().unwrap();
        let dets: Vec<CropDetections> = sel
            .candidates
            .iter()
            .filter(|c| &c.pano_id == id)
            .map(|c| {
                let crop = sampler.extract(&img, pano, c.bearing_deg).unwrap();
                CropDetections {
                    spec: crop.spec,
                    ramp_id: Some(c.ramp_id.clone()),
                    outcome: localize(&oracle, &crop).map_err(|e| e.to_string()),
                }
            })
            .collect();
        let set = aggregate(pano, &dets, DEDUP_RADIUS_PX);
        panos.push(EvalPano {
            pano_id: id.clone(),
            width: set.width,
            preds: set.labels,
            gts: world.ground_truth_for(id).unwrap().labels.clone(),
        });
    }
    let e = evaluate(&panos, MATCH_RADIUS_PX, MatchMode::Proximity, 0.5);
    assert_eq!(e.prf.precision, Some(1.0));
    assert_eq!(e.prf.recall, Some(1.0));

    let comps = spatial_components(&world.catalog, LINK_DIST_M);
    let a = assign_splits(&comps, SplitFractions::default(), 4).unwrap();
    assert!(leakage_pairs(&world.catalog, &a, LINK_DIST_M).is_empty());
    assert_eq!(a.splits.len(), world.catalog.len());
}

import numpy as np
import pytest

from cohff.metrics import (
    BEV_OTHERS, CSV_COLUMNS, ConfusionAccumulator, DetectedObject, average_precision, bev_iou, class_iou,
    connected_components, csv_row, evaluate, extract_objects, fmt, gt_instances, match_predictions,
)
from cohff.scene.types import GridSpec, SemanticClass, SemanticVoxelGrid
from oracles import VEH, ap_oracle, bev_oracle, components_oracle, iou_oracle, random_instance, random_objects

SPEC = GridSpec((0.0, 0.0, 0.0), (4, 4, 2), 1.0)


def _grid(cells, cls=VEH, inst=None):
    lab = np.zeros(SPEC.dims, dtype=np.uint8)
    ids = np.zeros(SPEC.dims, dtype=np.int64)
    for v in cells:
        lab[v] = cls
        if inst is not None:
            ids[v] = inst
    return SemanticVoxelGrid(SPEC, lab, ids)


def test_iou_hand_case():
    rep = class_iou(_grid([(0, 0, 0), (0, 1, 0)]), _grid([(0, 0, 0)]))
    assert rep.per_class[VEH] == 0.5 and rep.miou == 0.5 and rep.occupancy_iou == 0.5
    assert rep.per_class[int(SemanticClass.ROAD)] is None


def test_iou_perfect_and_disjoint():
    g = _grid([(1, 1, 1)])
    assert class_iou(g, g).miou == 1.0
    assert class_iou(_grid([(0, 0, 0)]), g).miou == 0.0


def test_miou_absent_classes_are_na():
    rep = class_iou(SemanticVoxelGrid.empty(SPEC), SemanticVoxelGrid.empty(SPEC))
    assert rep.miou is None and all(v is None for v in rep.per_class.values())
    assert fmt(rep.miou) == "NA"


def test_shape_and_spec_mismatch():
    other = SemanticVoxelGrid.empty(GridSpec((0.0, 0.0, 0.0), (4, 4, 3), 1.0))
    with pytest.raises(ValueError):
        class_iou(SemanticVoxelGrid.empty(SPEC), other)


def test_accumulator_sums_over_frames():
    a = ConfusionAccumulator().add(_grid([(0, 0, 0)]), _grid([(0, 0, 0)])).add(_grid([]), _grid([(1, 0, 0)]))
    assert a.class_iou()[VEH] == 0.5 and a.total == 2 * 32


def test_ap_hand_case_mid_iou_match():
    gt = frozenset({(0, 0, 0), (0, 1, 0), (0, 2, 0), (0, 3, 0), (1, 0, 0)})
    pred = DetectedObject(frozenset({(0, 0, 0), (0, 1, 0), (0, 2, 0)}), 0.9)  # IoU 3/5
    assert average_precision([pred], [gt], 0.5) == 1.0
    assert average_precision([pred], [gt], 0.7) == 0.0


def test_ap_ranking_and_duplicates():
    gt = [frozenset({(0, 0, 0)}), frozenset({(3, 3, 1)})]
    hit1 = DetectedObject(frozenset({(0, 0, 0)}), 0.9)
    dup = DetectedObject(frozenset({(0, 0, 0)}), 0.8)
    hit2 = DetectedObject(frozenset({(3, 3, 1)}), 0.7)
    # precision at recall 1 is 2/3; all-point integration gives 0.5 * 1 + 0.5 * 2/3
    assert abs(average_precision([hit1, dup, hit2], gt) - (0.5 + 1 / 3)) < 1e-15
    assert match_predictions([dup, hit1], gt, 0.5) == [True, False]
    assert average_precision([], gt) == 0.0 and average_precision([hit1], []) == 0.0


def test_connected_components_six_neighbors():
    m = np.zeros((3, 3, 1), bool)
    m[0, 0, 0] = m[1, 1, 0] = True  # diagonal only: not connected
    assert connected_components(m)[1] == 2
    m[0, 1, 0] = True
    assert connected_components(m)[1] == 1


def test_extract_objects_min_size_and_confidence():
    g = _grid([(0, 0, 0), (0, 1, 0), (3, 3, 1)])
    probs = np.zeros(SPEC.dims + (13,))
    probs[..., VEH] = 0.25
    probs[0, 0, 0, VEH] = 0.75
    objs = extract_objects(g, probs)
    assert len(objs) == 1 and objs[0].size == 2 and objs[0].confidence == 0.5


def test_gt_instances():
    g = _grid([(0, 0, 0), (0, 1, 0)], inst=4)
    assert gt_instances(g) == [frozenset({(0, 0, 0), (0, 1, 0)})]


def test_bev_hand_cases():
    p, g = _grid([(0, 0, 1)]), _grid([(0, 0, 0), (1, 0, 0)])
    assert bev_iou(p, g)["Vehicle"] == 0.5
    assert bev_iou(p, g)["Road"] is None
    b = _grid([(2, 2, 0)], cls=int(SemanticClass.BUILDING))
    w = _grid([(2, 2, 1)], cls=int(SemanticClass.WALL))
    assert bev_iou(b, w)["Others"] == 1.0 and len(BEV_OTHERS) == 9
    assert bev_iou(b, w, classes=[SemanticClass.BUILDING])[int(SemanticClass.BUILDING)] == 0.0


def test_brute_force_oracles_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pred, gt = random_instance(rng)
        per, miou = iou_oracle(pred.labels, gt.labels)
        rep = class_iou(pred, gt)
        assert rep.per_class == per and rep.miou == miou
        mask = gt.labels == VEH
        lab, n = connected_components(mask)
        assert sorted(map(sorted, components_oracle(mask))) == sorted(
            sorted(map(tuple, np.argwhere(lab == k).tolist())) for k in range(1, n + 1))
        gts = gt_instances(gt)
        objs = random_objects(rng, gts, gt.labels.shape)
        for t in (0.5, 0.7):
            assert average_precision(objs, gts, t) == ap_oracle(objs, gts, t)
        bev = bev_iou(pred, gt)
        assert bev["Vehicle"] == bev_oracle(pred.labels, gt.labels, {VEH})
        assert bev["Others"] == bev_oracle(pred.labels, gt.labels, {int(c) for c in BEV_OTHERS})


def test_evaluate_and_csv_row():
    g = _grid([(0, 0, 0), (0, 1, 0)], inst=1)
    m = evaluate(g, g)
    assert m["miou"] == 1.0 and m["ap50"] == 1.0 and m["bev"]["Vehicle"] == 1.0
    row = csv_row("occlusion-7", 0, 0.5, 0.0, m, 1234)
    assert len(row) == len(CSV_COLUMNS) and row[-1] == "1234" and row[CSV_COLUMNS.index("miou")] == "1.000000"
    assert row[CSV_COLUMNS.index("iou_Road")] == "NA"

"""The ten acceptance criteria at their stated tolerances; one PASS/FAIL line each.

Lines are printed as each check finishes and repeated in the pytest terminal summary.
"""

import time

import numpy as np
import pytest

import gradcases
from conftest import ACCEPTANCE_LINES, toy_world
from factories import random_message, random_planeset
from oracles import (
    BEV_OTHERS, VEH, ap_oracle, bev_oracle, components_oracle, iou_oracle, random_instance, random_objects,
    triplane_oracle,
)

from cohff.comm import (
    DecodeError, apply_mask_and_sparsify, communication_volume, decode_message, dense_voxel_bytes, encode_message,
    to_mb, two_plane_bytes,
)
from cohff.fusion import oracle_step, reconstruct_seg_volume
from cohff.harness.config import RunConfig, with_changes
from cohff.harness.pipeline import prepare_world, run_scenario
from cohff.harness.train import occupied_accuracy, train_toy
from cohff.metrics import (
    DetectedObject, average_precision, bev_iou, class_iou, connected_components, gt_instances,
)
from cohff.scene.scenario import TEMPLATES, ScenarioConfig, generate_scenario
from cohff.scene.tiers import build_gt_tiers
from cohff.scene.types import GridSpec, SemanticClass, SemanticVoxelGrid
from cohff.comm.budget import budget_sweep

CONFIGURED = GridSpec()  # (100, 100, 8) at 0.4 m
SPARSE_RATES = (0.5, 0.8, 0.95, 0.99)
TARGET_RATIOS = (0.5, 0.2, 0.05, 0.01)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


@pytest.fixture(scope="module")
def trained_seed7():
    cfg, world = toy_world()
    t = time.perf_counter()
    res = train_toy(cfg, world)
    return cfg, world, res, time.perf_counter() - t


# 1 ------------------------------------------------------------------------------

def test_communication_arithmetic():
    t = time.perf_counter()
    dense = dense_voxel_bytes(CONFIGURED.dims, 128)
    planes = two_plane_bytes(CONFIGURED.dims, 128)
    dt = time.perf_counter() - t
    ok = (dense == 40_960_000 and planes == 819_200 and to_mb(dense) == 39.0625 and to_mb(planes) == 0.78125
          and dense / planes == 50 and dt < 1.0)
    record(1, ok, f"dense {dense} B ({to_mb(dense)} MB), two-plane {planes} B ({to_mb(planes)} MB), "
                  f"ratio {dense / planes:g}x, {dt * 1e3:.2f} ms")
    assert ok


# 2 -------------------------------------------------------------------------------

def test_sparsification_scaling():
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    X, Y, Z = CONFIGURED.dims
    F = 128
    planes = {"xz": rng.normal(size=(X, Z, F)), "yz": rng.normal(size=(Y, Z, F))}
    masks = {a: rng.normal(size=p.shape[:2]) for a, p in planes.items()}

    def cv(r):
        return communication_volume([apply_mask_and_sparsify(planes[a], masks[a], r, a) for a in ("xz", "yz")])

    cv0 = cv(0.0)
    ratios = [cv(r) / cv0 for r in SPARSE_RATES]
    dt = time.perf_counter() - t
    ok = all(abs(g - w) <= 0.01 * w for g, w in zip(ratios, TARGET_RATIOS)) and dt < 1.0
    record(2, ok, "CV(r)/CV(0) " + ", ".join(f"r={r}: {g:.4f}" for r, g in zip(SPARSE_RATES, ratios))
           + f" on {CONFIGURED.dims}, {dt:.2f} s")
    assert ok


# 3 ---------------------------------------------------------------------------------

def test_triplane_oracle_equivalence():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        ps, spec = random_planeset(rng, max_dims=(12, 12, 4), max_f=8)
        delta = reconstruct_seg_volume(ps, spec).data - triplane_oracle(ps, spec)
        worst = max(worst, float(np.max(np.abs(delta))))
    dt = time.perf_counter() - t
    ok = worst < 1e-12 and dt < 10.0
    record(3, ok, f"50 configs, max |delta| {worst:.2e}, {dt:.2f} s")
    assert ok


# 4 ----------------------------------------------------------------------------------

def test_gradient_suite():
    t = time.perf_counter()
    worst = {n: max(gradcases.case_error(n, s) for s in gradcases.SEEDS) for n in gradcases.CASES}
    e2e = gradcases.e2e_errors()
    dt = time.perf_counter() - t
    bad = [n for n, v in worst.items() if not v <= gradcases.TOL] + [n for n, v in e2e.items()
                                                                   if not v <= gradcases.TOL]
    top = max(max(worst.values()), max(e2e.values()))
    ok = not bad and dt < 300
    record(4, ok, f"{len(worst)} op/module cases x {len(gradcases.SEEDS)} seeds + end-to-end over "
                  f"{len(e2e)} parameters, max rel err {top:.2e}, {dt:.0f} s" + (f", failing {bad}" if bad else ""))
    assert ok


# 5 ------------------------------------------------------------------------------------

def test_toy_overfit(trained_seed7):
    cfg, world, res, dt = trained_seed7
    n_params = res.model.num_parameters()
    ce = res.joint_ce
    out = run_scenario(res.model, world, cfg)
    acc = {i: occupied_accuracy(a.output.prediction.labels, world.labels(i, cfg.gt_tier))
           for i, a in out.agents.items()}
    steps = cfg.train.joint_steps
    ok = (cfg.grid.dims == (12, 12, 4) and len(world.inputs) == 2 and n_params <= 50_000 and steps == 500
          and ce[-1] <= 0.1 * ce[0] and min(acc.values()) >= 0.9 and dt <= 300)
    record(5, ok, f"{n_params} params, fused weighted CE {ce[0]:.4f} -> {ce[-1]:.4f} "
                  f"(ratio {ce[-1] / ce[0]:.4f}), occupied accuracy "
                  + ", ".join(f"agent {i}: {v:.3f}" for i, v in sorted(acc.items())) + f", {dt:.0f} s")
    assert ok


# 6 ------------------------------------------------------------------------------------

def _oracle_recall():
    sc = generate_scenario(ScenarioConfig(seed=0, template="occlusion"))
    tiers = build_gt_tiers(sc, CONFIGURED)
    a0, a1 = sc.agents
    hidden = tiers[0]["collaborative"].grid.instance_ids == 2
    single = oracle_step(tiers[0]["ego"].grid, a0.pose, [], CONFIGURED)
    fused = oracle_step(tiers[0]["ego"].grid, a0.pose, [(tiers[1]["ego"].grid, a1.pose)], CONFIGURED)
    return (float((fused.labels[hidden] == VEH).mean()), float((single.labels[hidden] == VEH).mean()),
            int(hidden.sum()))


@pytest.mark.slow
def test_collaboration_effect():
    t = time.perf_counter()
    fused_recall, single_recall, n_hidden = _oracle_recall()
    oracle_ok = fused_recall >= 0.9 and single_recall <= 0.1
    per_seed = []
    for seed in (1, 2, 3, 4, 5):
        cfg = with_changes(RunConfig(), seed=seed)
        world = prepare_world(cfg)
        model = train_toy(cfg, world).model
        on = run_scenario(model, world, cfg)
        off = run_scenario(model, world, with_changes(cfg, collaboration=False))
        m_on = [on.agents[i].metrics["miou"] for i in sorted(on.agents)]
        m_off = [off.agents[i].metrics["miou"] for i in sorted(off.agents)]
        per_seed.append((seed, m_on, m_off, all(a > b for a, b in zip(m_on, m_off))))
    wins = sum(w for *_, w in per_seed)
    dt = time.perf_counter() - t
    ok = oracle_ok and wins == 5
    record(6, ok, f"oracle recall of the occluded vehicle ({n_hidden} voxels) fused {fused_recall:.3f} vs "
                  f"single {single_recall:.3f}; trained mIoU collaborative > single on {wins}/5 seeds ["
                  + "; ".join(f"s{s}: " + "/".join(f"{a:.3f}>{b:.3f}" for a, b in zip(on_, off_))
                              for s, on_, off_, _ in per_seed) + f"], {dt:.0f} s")
    assert ok


# 7 ---------------------------------------------------------------------------------------

def _metric_hand_cases() -> bool:
    spec = GridSpec((0.0, 0.0, 0.0), (2, 2, 1), 1.0)
    p = np.zeros((2, 2, 1), np.uint8)
    g = np.zeros((2, 2, 1), np.uint8)
    p[0, 0, 0] = p[0, 1, 0] = VEH
    g[0, 0, 0] = VEH
    iou_ok = class_iou(SemanticVoxelGrid(spec, p), SemanticVoxelGrid(spec, g)).per_class[VEH] == 0.5
    gt = frozenset({(0, 0, 0), (0, 1, 0), (0, 2, 0), (0, 3, 0), (1, 0, 0)})
    pred = DetectedObject(frozenset({(0, 0, 0), (0, 1, 0), (0, 2, 0)}), 1.0)  # IoU 0.6
    ap50, ap70 = average_precision([pred], [gt], 0.5), average_precision([pred], [gt], 0.7)
    return iou_ok and repr(ap50) == "1.0" and repr(ap70) == "0.0"


def test_metric_oracles():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(100):
        pred, gt = random_instance(rng, (8, 8, 2))
        per, miou = iou_oracle(pred.labels, gt.labels)
        rep = class_iou(pred, gt)
        mismatches += rep.per_class != per or rep.miou != miou
        mask = gt.labels == VEH
        lab, n = connected_components(mask)
        ours = sorted(sorted(map(tuple, np.argwhere(lab == k).tolist())) for k in range(1, n + 1))
        mismatches += ours != sorted(map(sorted, components_oracle(mask)))
        gts = gt_instances(gt)
        objs = random_objects(rng, gts, gt.labels.shape)
        mismatches += any(average_precision(objs, gts, th) != ap_oracle(objs, gts, th) for th in (0.5, 0.7))
        bev = bev_iou(pred, gt)
        mismatches += bev["Vehicle"] != bev_oracle(pred.labels, gt.labels, {VEH})
        mismatches += bev["Road"] != bev_oracle(pred.labels, gt.labels, {int(SemanticClass.ROAD)})
        mismatches += bev["Others"] != bev_oracle(pred.labels, gt.labels, {int(c) for c in BEV_OTHERS})
    hand = _metric_hand_cases()
    ok = mismatches == 0 and hand
    record(7, ok, f"100 random <= 8x8x2 instances, {mismatches} mismatches (IoU, components, AP, BEV); "
                  f"hand cases {'exact' if hand else 'WRONG'}")
    assert ok


# 8 ---------------------------------------------------------------------------------------

def test_codec_robustness():
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    msgs = [random_message(rng) for _ in range(1000)]
    wire = [encode_message(m) for m in msgs]
    round_trip = sum(encode_message(decode_message(w)) == w
                     and all(a.same_content(b) for a, b in zip(m.payloads, decode_message(w).payloads))
                     for m, w in zip(msgs, wire))
    crashes, truncs = 0, 0
    for w in wire:
        for n in range(len(w)):
            truncs += 1
            try:
                decode_message(w[:n])
                crashes += 1  # a strict prefix must never decode
            except DecodeError:
                pass
            except Exception:
                crashes += 1
    mutations, accepted = 100_000, 0
    for k in range(mutations):
        data = bytearray(wire[k % len(wire)])
        for _ in range(int(rng.integers(1, 4))):
            data[int(rng.integers(0, len(data)))] = int(rng.integers(0, 256))
        try:
            decode_message(bytes(data))
            accepted += 1
        except DecodeError:
            pass
        except Exception:
            crashes += 1
    dt = time.perf_counter() - t
    ok = round_trip == 1000 and crashes == 0
    record(8, ok, f"{round_trip}/1000 bit-exact round trips, {truncs} truncations and {mutations} mutations "
                  f"with {crashes} unstructured failures ({accepted} mutants still well-formed), {dt:.0f} s")
    assert ok


# 9 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_gt_tier_monotonicity():
    t = time.perf_counter()
    rng = np.random.default_rng(9)
    spec = GridSpec((-0.5, -3.0, 0.0), (12, 12, 4), 0.5)
    violations = checked = 0
    for k in range(20):
        sc = generate_scenario(ScenarioConfig(seed=int(rng.integers(0, 10_000)), template=TEMPLATES[k % 4],
                                              n_agents=int(rng.integers(1, 4)), scale=0.3, image_size=(8, 16)))
        for tiers in build_gt_tiers(sc, spec).values():
            e, c, f = (tiers[n].grid.occupied for n in ("ego", "collaborative", "complete"))
            violations += int(np.sum(e & ~c) + np.sum(c & ~f))
            checked += 1
    dt = time.perf_counter() - t
    ok = violations == 0
    record(9, ok, f"20 scenarios ({checked} agent tier stacks), {violations} voxels violating "
                  f"ego <= collaborative <= complete, {dt:.0f} s")
    assert ok


# 10 --------------------------------------------------------------------------------------

def test_budget_constraint(trained_seed7):
    cfg, world, res, _ = trained_seed7
    cv0 = run_scenario(res.model, world, cfg).cv_bytes
    worst = -np.inf
    rows = []
    for b in budget_sweep(cv0, 20):
        out = run_scenario(res.model, world, with_changes(cfg, budget=float(b)))
        worst = max(worst, out.cv_bytes - b)
        rows.append(out.cv_bytes)
    ok = worst <= 0 and len(rows) == 20
    record(10, ok, f"20 budgets 0..{cv0} B, emitted totals {rows[0]}..{rows[-1]} B, "
                   f"max(total - B) = {worst:.0f} B")
    assert ok

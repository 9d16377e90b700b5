import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cohff.scene import (
    TIERS, GridSpec, Pose, Scene, SceneObject, ScenarioConfig, SemanticClass as C, build_gt_tiers,
    cast_semantic_rays, generate_scenario, inverse_pose, perturb_pose_gps, ray_cast, relative_pose,
    transform_points, transform_pose, voxelize_points,
)
from cohff.scene.io import (
    dumps_scenario, grid_from_dict, grid_to_dict, read_pcd_text, scenario_from_dict, scenario_to_dict,
    write_pcd_text,
)
from cohff.scene.pose import inverse_transform_points
from cohff.scene.raycast import lidar_directions
from cohff.scene.rigs import lidar_18, standard_rigs
from cohff.scene.scenario import Scenario
from cohff.scene.tiers import rig_points, to_agent_frame
from cohff.scene.types import Agent, Mount, SemanticVoxelGrid, wrap_angle

finite = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-10, 10, allow_nan=False)
poses = st.builds(Pose, finite, finite, st.floats(-3, 3), angles)


# -- types -------------------------------------------------------------------

def test_semantic_class_ids():
    assert len(C) == 13 and C.EMPTY == 0 and C.VEHICLES == 8 and C.BRIDGE == 12


@given(angles)
def test_pose_yaw_normalized(a):
    y = Pose(yaw=a).yaw
    assert -math.pi < y <= math.pi
    assert math.isclose(math.cos(y), math.cos(a), abs_tol=1e-9) and math.isclose(math.sin(y), math.sin(a), abs_tol=1e-9)


def test_wrap_angle_edges():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(0.3) == 0.3


def test_grid_defaults_and_validation():
    g = GridSpec()
    assert g.dims == (100, 100, 8) and g.voxel_size == 0.4
    assert np.allclose(g.extent, (40.0, 40.0, 3.2))
    with pytest.raises(ValueError):
        GridSpec(dims=(0, 1, 1))
    with pytest.raises(ValueError):
        GridSpec(voxel_size=0.0)


def test_instance_requires_vehicle_label():
    spec = GridSpec((0, 0, 0), (2, 2, 1), 1.0)
    inst = np.zeros((2, 2, 1), dtype=np.int64)
    inst[0, 0, 0] = 1
    with pytest.raises(ValueError):
        SemanticVoxelGrid(spec, np.zeros((2, 2, 1)), inst)


# -- voxelization --------------------------------------------------------------

def test_voxelize_cell_index():
    g = voxelize_points(np.array([[0.0, 0.0, 0.1, 5, 0]]), GridSpec())
    assert g.occupied_set() == {(50, 50, 0)} and g.labels[50, 50, 0] == 5


def test_voxelize_empty():
    g = voxelize_points(np.zeros((0, 5)), GridSpec())
    assert not g.occupied.any()


def test_voxelize_majority_and_tie():
    spec = GridSpec((0, 0, 0), (2, 2, 2), 1.0)
    pts = [[0.5, 0.5, 0.5, 5, 0], [0.5, 0.5, 0.5, 5, 0], [0.5, 0.5, 0.5, 8, 3],
           [1.5, 0.5, 0.5, 8, 1], [1.5, 0.5, 0.5, 6, 0]]
    g = voxelize_points(np.array(pts), spec)
    assert g.labels[0, 0, 0] == 5
    assert g.labels[1, 0, 0] == 6  # 1-1 tie -> lowest id
    assert g.instance_ids[1, 0, 0] == 0


def test_voxelize_instance_majority():
    spec = GridSpec((0, 0, 0), (1, 1, 1), 1.0)
    pts = [[0.5, 0.5, 0.5, 8, 4], [0.5, 0.5, 0.5, 8, 2], [0.5, 0.5, 0.5, 8, 4], [0.5, 0.5, 0.5, 5, 0]]
    g = voxelize_points(np.array(pts), spec)
    assert g.labels[0, 0, 0] == 8 and g.instance_ids[0, 0, 0] == 4


def test_voxelize_drops_out_of_range():
    spec = GridSpec((0, 0, 0), (2, 2, 2), 1.0)
    g, dropped = voxelize_points(np.array([[5.0, 0, 0, 3, 0], [0.5, 0.5, 0.5, 3, 0], [-0.1, 0, 0, 3, 0]]),
                                 spec, return_dropped=True)
    assert dropped == 2 and g.occupied_set() == {(0, 0, 0)}


def _majority_oracle(pts, spec):
    votes = {}
    for x, y, z, c, i in pts:
        idx = tuple(int(v) for v in np.floor((np.array([x, y, z]) - spec.origin) / spec.voxel_size))
        if all(0 <= idx[k] < spec.dims[k] for k in range(3)) and c > 0:
            votes.setdefault(idx, []).append(int(c))
    out = {}
    for idx, cs in votes.items():
        counts = {c: cs.count(c) for c in set(cs)}
        best = max(counts.values())
        out[idx] = min(c for c, n in counts.items() if n == best)
    return out


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.integers(0, 60))
def test_voxelize_matches_majority_oracle(seed, n):
    r = np.random.default_rng(seed)
    spec = GridSpec((0, 0, 0), (3, 3, 2), 1.0)
    pts = np.column_stack([r.uniform(-0.5, 3.5, n), r.uniform(-0.5, 3.5, n), r.uniform(-0.5, 2.5, n),
                           r.integers(1, 13, n), np.zeros(n)])
    g = voxelize_points(pts, spec)
    want = _majority_oracle(pts, spec)
    assert g.occupied_set() == set(want)
    assert all(g.labels[k] == v for k, v in want.items())


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_voxelize_idempotent_under_duplication(seed):
    r = np.random.default_rng(seed)
    spec = GridSpec((0, 0, 0), (4, 4, 2), 0.5)
    n = 40
    inst = r.integers(0, 3, n)
    cls = np.where(inst > 0, 8, r.integers(1, 13, n))
    pts = np.column_stack([r.uniform(0, 2, n), r.uniform(0, 2, n), r.uniform(0, 1, n), cls, inst])
    a, b = voxelize_points(pts, spec), voxelize_points(np.concatenate([pts, pts]), spec)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.instance_ids, b.instance_ids)


# -- ray casting -----------------------------------------------------------------

def test_single_ray_hits_near_face():
    box = SceneObject(C.BUILDING, "box", (10.0, 0.0, 1.0), (2.0, 2.0, 2.0))
    h = ray_cast(Scene((box,)), np.array([0.0, 0.0, 1.0]), np.array([[1.0, 0.0, 0.0]]))
    assert h.obj[0] == 0 and h.cls[0] == C.BUILDING
    assert np.allclose(h.points[0], [9.0, 0.0, 1.0])


def test_occluder_wins():
    a = SceneObject(C.WALL, "box", (5.0, 0.0, 1.0), (1.0, 4.0, 2.0))
    b = SceneObject(C.VEHICLES, "box", (10.0, 0.0, 1.0), (2.0, 2.0, 2.0), instance_id=1)
    h = ray_cast(Scene((b, a)), np.array([0.0, 0.0, 1.0]), np.array([[1.0, 0.0, 0.0]]))
    assert h.obj[0] == 1 and h.cls[0] == C.WALL and math.isclose(h.t[0], 4.5)


def test_lidar_lattice_respects_fov():
    m = Mount(Pose(), (-10.0, 10.0), 60.0, 100.0)
    d = lidar_directions(m, 1.0)
    az = np.degrees(np.arctan2(d[:, 1], d[:, 0]))
    el = np.degrees(np.arcsin(d[:, 2]))
    assert np.all(np.abs(az) <= 30 + 1e-9) and np.all((el >= -10 - 1e-9) & (el <= 10 + 1e-9))
    assert len(d) == 61 * 21
    with pytest.raises(ValueError):
        lidar_directions(m, 0.0)


def test_max_range_excludes_far_hits():
    box = SceneObject(C.BUILDING, "box", (10.0, 0.0, 1.0), (2.0, 2.0, 2.0))
    h = ray_cast(Scene((box,)), np.array([0.0, 0.0, 1.0]), np.array([[1.0, 0.0, 0.0]]), max_range=5.0)
    assert not h.hit[0] and h.obj[0] == -2


def _scalar_box_t(obj, o, d):
    c, s = math.cos(-obj.yaw), math.sin(-obj.yaw)
    rel = [o[0] - obj.center[0], o[1] - obj.center[1], o[2] - obj.center[2]]
    ol = [c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]]
    dl = [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]]
    lo, hi = -math.inf, math.inf
    for k in range(3):
        h = obj.extents[k] / 2
        if dl[k] == 0:
            if abs(ol[k]) > h:
                return math.inf
            continue
        t1, t2 = (-h - ol[k]) / dl[k], (h - ol[k]) / dl[k]
        lo, hi = max(lo, min(t1, t2)), min(hi, max(t1, t2))
    return lo if lo <= hi and lo > 1e-9 else math.inf


def _scalar_cyl_t(obj, o, d):
    r, h = obj.extents[0] / 2, obj.extents[2] / 2
    ox, oy = o[0] - obj.center[0], o[1] - obj.center[1]
    a = d[0] ** 2 + d[1] ** 2
    b = 2 * (d[0] * ox + d[1] * oy)
    c = ox * ox + oy * oy - r * r
    if a == 0:
        if c > 0:
            return math.inf
        lo, hi = -math.inf, math.inf
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            return math.inf
        lo, hi = (-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)
    oz = o[2] - obj.center[2]
    if d[2] == 0:
        if abs(oz) > h:
            return math.inf
    else:
        t1, t2 = (-h - oz) / d[2], (h - oz) / d[2]
        lo, hi = max(lo, min(t1, t2)), min(hi, max(t1, t2))
    return lo if lo <= hi and lo > 1e-9 else math.inf


def _random_scene(r, n):
    objs = []
    for _ in range(n):
        cls = int(r.choice([1, 2, 4, 7, 9, 10, 11, 12]))
        x, y = r.uniform(-20, 20, 2)
        if r.random() < 0.5:
            e = tuple(r.uniform(0.5, 5, 3))
            objs.append(SceneObject(cls, "box", (x, y, e[2] / 2 + r.uniform(0, 1)), e, float(r.uniform(-3, 3))))
        else:
            dia, hgt = r.uniform(0.3, 3), r.uniform(0.5, 6)
            objs.append(SceneObject(cls, "cylinder", (x, y, hgt / 2), (dia, dia, hgt)))
    return Scene(tuple(objs))


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.integers(0, 20))
def test_ray_cast_matches_brute_force(seed, n):
    r = np.random.default_rng(seed)
    scene = _random_scene(r, n)
    o = np.array([0.0, 0.0, 1.5])
    d = r.normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    h = ray_cast(scene, o, d)
    for k in range(len(d)):
        ts = [(_scalar_box_t(ob, o, d[k]) if ob.shape == "box" else _scalar_cyl_t(ob, o, d[k]), i)
              for i, ob in enumerate(scene.objects)]
        tg = -o[2] / d[k, 2] if d[k, 2] < 0 else math.inf
        ts.append((tg, -1))
        best_t, best = min(ts, key=lambda p: (p[0], p[1] if p[1] >= 0 else math.inf))
        if math.isinf(best_t):
            assert h.obj[k] == -2
        else:
            assert h.obj[k] == best and math.isclose(h.t[k], best_t, rel_tol=1e-9, abs_tol=1e-9)


def test_cast_semantic_rays_world_frame():
    box = SceneObject(C.BUILDING, "box", (10.0, 5.0, 1.0), (2.0, 2.0, 2.0))
    m = Mount(Pose(0, 0, 1.0, 0.0), (0.0, 0.0), 0.0, 100.0)
    pts = cast_semantic_rays(Scene((box,)), Pose(10.0, 0.0, 1.0, math.pi / 2), m)
    assert pts.shape == (1, 5) and np.allclose(pts[0, :3], [10.0, 4.0, 1.0]) and pts[0, 3] == C.BUILDING


# -- poses -------------------------------------------------------------------------

def test_relative_pose_identity():
    p = Pose(3.0, -2.0, 0.5, 1.0)
    r = relative_pose(p, p)
    assert np.allclose(r.as_tuple(), (0, 0, 0, 0), atol=1e-12)


def test_relative_pose_hand_case():
    r = relative_pose(Pose(0, 0, 0, 0), Pose(1, 0, 0, math.pi / 2))
    assert np.allclose(r.as_tuple(), (1, 0, 0, math.pi / 2))
    # rotated reference frame: a at yaw pi/2 sees b=(1,0) on its right (-y)
    r2 = relative_pose(Pose(0, 0, 0, math.pi / 2), Pose(1, 0, 0, 0))
    R = np.array([[0.0, 1.0], [-1.0, 0.0]])  # rotation by -pi/2
    assert np.allclose([r2.x, r2.y], R @ np.array([1.0, 0.0])) and math.isclose(r2.yaw, -math.pi / 2)


@given(poses, poses, st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=5))
def test_relative_pose_round_trip(a, b, pts):
    pts = np.array(pts)
    in_a = transform_points(pts, relative_pose(a, b))
    direct = inverse_transform_points(transform_points(pts, b), a)
    assert np.max(np.abs(in_a - direct)) < 1e-9


def test_relative_pose_round_trip_1000_pairs():
    r = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        a, b = (Pose(*r.uniform(-50, 50, 2), r.uniform(-2, 2), r.uniform(-4, 4)) for _ in range(2))
        p = r.uniform(-30, 30, (1, 3))
        worst = max(worst, float(np.abs(transform_points(p, relative_pose(a, b))
                                        - inverse_transform_points(transform_points(p, b), a)).max()))
        back = transform_pose(relative_pose(a, b), a)
        worst = max(worst, abs(back.x - b.x), abs(back.y - b.y), abs(back.z - b.z))
    assert worst < 1e-9


@given(poses)
def test_inverse_pose_composes_to_identity(p):
    q = transform_pose(inverse_pose(p), p)
    assert np.allclose([q.x, q.y, q.z], 0, atol=1e-9) and abs(math.sin(q.yaw)) < 1e-9


def test_gps_noise():
    p = Pose(1.0, 2.0, 0.3, 0.7)
    assert perturb_pose_gps(p, 0.0, 5) == p
    assert perturb_pose_gps(p, 0.6, 5) == perturb_pose_gps(p, 0.6, 5)
    q = perturb_pose_gps(p, 0.6, 5)
    assert q.z == p.z and q.yaw == p.yaw
    with pytest.raises(ValueError):
        perturb_pose_gps(p, -0.1, 0)


def test_gps_noise_statistics():
    samples = []
    for s in range(50_000):
        q = perturb_pose_gps(Pose(), 0.6, s)
        samples += [q.x, q.y]
    assert len(samples) == 100_000
    assert abs(np.std(samples) / 0.6 - 1) < 0.02


# -- scenarios and tiers -------------------------------------------------------------

def test_scenario_deterministic():
    cfg = ScenarioConfig(seed=11, template="random", scale=0.5)
    assert dumps_scenario(generate_scenario(cfg)) == dumps_scenario(generate_scenario(cfg))
    assert dumps_scenario(generate_scenario(cfg)) != dumps_scenario(generate_scenario(ScenarioConfig(seed=12, scale=0.5)))


@pytest.mark.parametrize("template", ["random", "occlusion", "junction", "highway"])
def test_single_agent_has_no_edges(template):
    sc = generate_scenario(ScenarioConfig(seed=0, template=template, n_agents=1))
    assert len(sc.agents) == 1 and sc.edges == () and sc.neighbors(0) == []


def test_invalid_config_rejected():
    for bad in (dict(n_agents=0), dict(template="nope"), dict(extent=0.0), dict(scale=-1.0)):
        with pytest.raises(ValueError):
            generate_scenario(ScenarioConfig(**bad))


def test_scenario_json_round_trip():
    sc = generate_scenario(ScenarioConfig(seed=4, template="junction", n_agents=3))
    back = scenario_from_dict(scenario_to_dict(sc))
    assert back == sc
    d = scenario_to_dict(sc)
    d["format_version"] = 99
    with pytest.raises(ValueError):
        scenario_from_dict(d)


def test_pcd_and_grid_io(tmp_path):
    pts = np.array([[0.5, 1.25, 0.1, 8, 3], [2.0, -1.0, 0.0, 5, 0]])
    write_pcd_text(pts, tmp_path / "p.txt")
    assert np.allclose(read_pcd_text(tmp_path / "p.txt"), pts)
    g = voxelize_points(pts, GridSpec((-2, -2, 0), (10, 10, 2), 0.5))
    back = grid_from_dict(grid_to_dict(g, note="x"))
    assert np.array_equal(back.labels, g.labels) and np.array_equal(back.instance_ids, g.instance_ids)


def test_lidar_18_layout():
    rig = lidar_18()
    assert len(rig.mounts) == 18
    xy = sorted({(m.offset.x, m.offset.y) for m in rig.mounts})
    assert xy == [(i * 30.0, j * 30.0) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    assert sorted({m.vfov for m in rig.mounts}) == [(-90.0, -20.0), (-20.0, 0.0)]


def _instance_hits(sc, agent_id, inst):
    pts = rig_points(sc, agent_id, "lidar_quad")
    return int(np.count_nonzero(pts[:, 4] == inst))


@pytest.mark.parametrize("scale", [1.0, 0.3])
def test_occlusion_template_hides_a_vehicle(scale):
    sc = generate_scenario(ScenarioConfig(seed=0, template="occlusion", scale=scale))
    hidden = 2  # the car parked behind the truck
    assert _instance_hits(sc, 0, hidden) == 0
    assert _instance_hits(sc, 1, hidden) >= 20


def test_occluded_vehicle_in_collaborative_tier_only():
    sc = generate_scenario(ScenarioConfig(seed=0, template="occlusion", scale=1.0))
    t = build_gt_tiers(sc, GridSpec())[0]
    assert not (t["ego"].grid.instance_ids == 2).any()
    assert (t["collaborative"].grid.instance_ids == 2).sum() > 0


def test_single_agent_collaborative_equals_ego():
    sc = generate_scenario(ScenarioConfig(seed=2, template="random", n_agents=1, scale=0.3))
    t = build_gt_tiers(sc, GridSpec((-6, -6, 0), (30, 30, 8), 0.4))[0]
    assert np.array_equal(t["ego"].grid.labels, t["collaborative"].grid.labels)


def test_empty_scene_gives_empty_tiers():
    # no objects; the grid sits above the ground plane, so nothing is hit inside it
    rigs = standard_rigs(0.3)
    sc = Scenario(ScenarioConfig(scale=0.3), Scene(), (Agent(0, Pose(), rigs), Agent(1, Pose(3.0, 0, 0, 0), rigs)),
                  ((0, 1),))
    tiers = build_gt_tiers(sc, GridSpec((-6, -6, 0.2), (30, 30, 4), 0.4), complete_resolution_deg=3.0)
    for i in (0, 1):
        for name in TIERS:
            assert not tiers[i][name].grid.occupied.any()


def test_observer_frame_transform():
    pts = np.array([[1.0, 0.0, 0.0, 5, 0]])
    out = to_agent_frame(pts, Pose(1.0, 0.0, 0.0, math.pi / 2))
    assert np.allclose(out[0, :3], [0, 0, 0]) and out[0, 3] == 5

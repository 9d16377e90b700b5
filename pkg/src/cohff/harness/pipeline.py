"""Scenario preparation and the concurrent multi-agent inference loop."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from ..comm.budget import CommBudget, enforce_budget
from ..comm.codec import DecodeError, decode_message, encode_message
from ..comm.volume import communication_volume
from ..fusion import AgentInputs, CoHFF, StepOutput, received_from_message
from ..metrics import evaluate
from ..occupancy import DepthBinning, agent_depth_embedding
from ..scene.camera import agent_cameras
from ..scene.pose import perturb_pose_gps
from ..scene.scenario import Scenario, ScenarioConfig, generate_scenario
from ..scene.tiers import build_gt_tiers
from ..segmentation import agent_observations
from ..tensor import no_grad
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class World:
    """Everything derived from the scenario that stays fixed across steps."""

    scenario: Scenario
    tiers: dict  # agent id -> {tier name: GroundTruthTier}
    inputs: dict  # agent id -> AgentInputs

    def labels(self, agent_id: int, tier: str) -> np.ndarray:
        return self.tiers[agent_id][tier].grid.labels

    def neighbors(self, agent_id: int) -> list[int]:
        return sorted(self.scenario.neighbors(agent_id))


def scenario_config(cfg: RunConfig, seed: int | None = None) -> ScenarioConfig:
    return ScenarioConfig(seed=cfg.seed if seed is None else seed, template=cfg.template,
                          n_agents=cfg.n_agents, n_objects=cfg.n_objects, scale=cfg.scale,
                          image_size=tuple(cfg.image_size))


def prepare_world(cfg: RunConfig, scenario: Scenario | None = None, seed: int | None = None) -> World:
    seed = cfg.seed if seed is None else seed
    sc = generate_scenario(scenario_config(cfg, seed)) if scenario is None else scenario
    tiers = build_gt_tiers(sc, cfg.grid, cfg.lidar_resolution)
    binning = DepthBinning(cfg.n_depth_bins, cfg.max_depth)
    inputs = {}
    for a in sc.agents:
        emb = agent_depth_embedding(sc, a.id, cfg.grid, binning, cfg.depth_noise,
                                    None if cfg.depth_noise == 0 else seed)
        reported = perturb_pose_gps(a.pose, cfg.gps_sigma, (seed, a.id, 1))
        inputs[a.id] = AgentInputs(a.id, a.pose, emb, agent_observations(sc, a.id, cfg.max_depth),
                                   agent_cameras(a), reported)
    return World(sc, tiers, inputs)


@dataclass
class AgentResult:
    agent_id: int
    output: StepOutput
    received_from: list[int]
    dropped: list[int]
    metrics: dict


@dataclass
class ScenarioResult:
    agents: dict  # agent id -> AgentResult
    cv_bytes: int  # feature bytes on the wire this step
    wire_bytes: int  # full encoded size
    rate: float
    budget: float
    errors: list = field(default_factory=list)
    kept_cells: int = 0
    total_cells: int = 0

    @property
    def kept_fraction(self) -> float:
        return self.kept_cells / self.total_cells if self.total_cells else float("nan")


def run_scenario(model: CoHFF, world: World, cfg: RunConfig, corrupt=None) -> ScenarioResult:
    """One synchronous step of every agent, each in its own thread.

    Agents meet at a single barrier: its action applies the budget to all outgoing messages
    and encodes them. Receivers then decode; a message that fails to decode is logged and
    dropped. ``corrupt`` (sender id -> bytes -> bytes) can tamper with the wire for tests.
    """
    ids = sorted(world.inputs)
    collab = cfg.collaboration and len(ids) > 1
    budget = CommBudget(cfg.budget_bytes)
    locals_, outbox, wire, results, errors = {}, {}, {}, {}, []
    failures = []

    def exchange():
        msgs = enforce_budget([outbox[i] for i in ids], budget) if collab else []
        for m in msgs:
            data = encode_message(m)
            wire[m.sender] = corrupt(m.sender, data) if corrupt else data
        exchange.cv = communication_volume(msgs)
        exchange.kept = sum(pl.kept for m in msgs for pl in m.payloads)
        exchange.cells = sum(pl.dims[0] * pl.dims[1] for m in msgs for pl in m.payloads)
        if budget.finite:
            assert exchange.cv <= budget.bytes, f"budget violated: {exchange.cv} > {budget.bytes}"

    exchange.cv = exchange.kept = exchange.cells = 0
    barrier = threading.Barrier(len(ids), action=exchange)

    def agent_task(i: int):
        try:
            with no_grad():
                st = model.local(world.inputs[i])
                locals_[i] = st
                if collab:
                    outbox[i] = model.message(st, cfg.sparsification_rate)
            barrier.wait()
            received, got, dropped = [], [], []
            for j in (world.neighbors(i) if collab else []):
                if j not in wire:
                    continue
                try:
                    received.append(received_from_message(decode_message(wire[j])))
                    got.append(j)
                except DecodeError as e:
                    log.warning("agent %d dropped message from %d: %s", i, j, e)
                    errors.append((i, j, str(e)))
                    dropped.append(j)
            with no_grad():
                out = model.fuse(st, received)
            gt = world.tiers[i][cfg.gt_tier].grid
            results[i] = AgentResult(i, out, got, dropped, evaluate(out.prediction, gt))
        except threading.BrokenBarrierError:
            pass
        except BaseException as e:  # surfaced to the caller below
            failures.append((i, e))
            barrier.abort()

    threads = [threading.Thread(target=agent_task, args=(i,), name=f"agent-{i}") for i in ids]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        i, e = failures[0]
        raise RuntimeError(f"agent {i} failed: {e}") from e
    return ScenarioResult({i: results[i] for i in ids}, exchange.cv, sum(len(w) for w in wire.values()),
                          cfg.sparsification_rate, budget.bytes, sorted(errors), exchange.kept, exchange.cells)

"""Command line entry point: ``cohff <subcommand> [--config FILE] [--set key=value ...]``.

Exit codes: 0 ok, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..comm.codec import DecodeError, decode_message, encode_message, hexdump
from ..fusion import CoHFF, export_prediction_csv
from ..metrics import CSV_COLUMNS, csv_row
from ..scene.io import grid_to_dict, save_scenario
from ..tensor.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .pipeline import prepare_world, run_scenario
from .report import ReportError, report
from .sweep import VARIABLES, SweepError, SweepResult, sweep

log = logging.getLogger("cohff")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for runtime errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from e


def _model(cfg, checkpoint, required: bool) -> CoHFF | None:
    if checkpoint is None:
        if required:
            return None
        log.warning("no checkpoint given: using freshly initialized weights")
        return CoHFF(np.random.default_rng(cfg.seed), cfg.grid, cfg.model)
    model = CoHFF(np.random.default_rng(cfg.seed), cfg.grid, cfg.model)
    try:
        model.load_state_dict(load_checkpoint(checkpoint))
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {checkpoint}: {e}") from e
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"checkpoint {checkpoint} does not fit this model config: {e}") from e
    return model


def cmd_gen_scene(cfg, args) -> int:
    world = prepare_world(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(world.scenario, out)
    print(f"scenario {cfg.template} seed {cfg.seed}: {len(world.scenario.agents)} agents, "
          f"{len(world.scenario.scene.objects)} objects -> {out}")
    if args.tiers_dir:
        d = Path(args.tiers_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i in sorted(world.tiers):
            for tier, t in world.tiers[i].items():
                p = d / f"agent{i}_{tier}.json"
                p.write_text(json.dumps(grid_to_dict(t.grid, agent=i, tier=tier), sort_keys=True))
                print(f"  agent {i} {tier}: {int((t.grid.labels > 0).sum())} occupied voxels -> {p}")
    return EXIT_OK


def cmd_train_toy(cfg, args) -> int:
    from .train import train_toy

    def progress(stage, step, value):
        if args.verbose and step % 50 == 0:
            print(f"{stage:>12s} step {step:4d} loss {value:.6f}", flush=True)

    res = train_toy(cfg, collaboration=False if args.single else None,
                    log_path=args.log, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(res.model, out)
    ce = res.joint_ce
    if ce:
        print(f"joint fused weighted CE {ce[0]:.6f} -> {ce[-1]:.6f} (ratio {ce[-1] / ce[0]:.4f})")
    print(f"{res.model.num_parameters()} parameters -> {out}")
    return EXIT_OK


def cmd_run(cfg, args) -> int:
    model = _model(cfg, args.checkpoint, required=False)
    world = prepare_world(cfg)
    res = run_scenario(model, world, cfg)
    rows = [csv_row(f"{cfg.template}-{cfg.seed}", i, cfg.sparsification_rate, cfg.gps_sigma,
                    a.metrics, res.cv_bytes) for i, a in sorted(res.agents.items())]
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(rows)
    if args.pred_dir:
        d = Path(args.pred_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, a in sorted(res.agents.items()):
            export_prediction_csv(a.output.prediction, d / f"agent{i}_prediction.csv")
    for i, a in sorted(res.agents.items()):
        m = a.metrics
        miou = "NA" if m["miou"] is None else f"{m['miou']:.4f}"
        print(f"agent {i}: mIoU {miou} AP50 {m['ap50']:.4f} from {a.received_from} dropped {a.dropped}")
    print(f"CV {res.cv_bytes} B payload, {res.wire_bytes} B on the wire")
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    model = _model(cfg, args.checkpoint, required=True)
    if model is None:
        raise SweepError("sweep needs trained weights: pass --checkpoint")
    values = _floats(args.values) if args.values else None
    seeds = _ints(args.seeds) if args.seeds else None
    res = sweep(cfg, args.variable, model, values=values, seeds=seeds)
    res.write_csv(args.out)
    print(f"{len(res.rows)} rows ({args.variable}) -> {args.out}")
    return EXIT_OK


def cmd_report(cfg, args) -> int:
    try:
        res = SweepResult.read_csv(args.input)
    except OSError as e:
        raise ReportError(f"cannot read {args.input}: {e}") from e
    for p in report(res, args.out_dir, args.stem):
        print(p)
    return EXIT_OK


def cmd_dump_msg(cfg, args) -> int:
    if args.inspect:
        try:
            data = Path(args.inspect).read_bytes()
        except OSError as e:
            raise DecodeError(f"cannot read {args.inspect}: {e}", 0) from e
        print(hexdump(data[:args.max_bytes]))
        if len(data) > args.max_bytes:
            print(f"... {len(data) - args.max_bytes} more bytes")
        msg = decode_message(data)
        print(f"sender {msg.sender} version {msg.version} pose {tuple(round(v, 6) for v in msg.pose.as_tuple())}")
        for p in msg.payloads:
            print(f"  {p.axis}: dims {p.dims} features {p.features} kept {p.kept}/{p.dims[0] * p.dims[1]}")
        return EXIT_OK
    model = _model(cfg, args.checkpoint, required=False)
    world = prepare_world(cfg)
    if args.agent not in world.inputs:
        raise ConfigError(f"no agent {args.agent}; scenario has {sorted(world.inputs)}")
    msg = model.message(model.local(world.inputs[args.agent]), cfg.sparsification_rate)
    data = encode_message(msg)
    Path(args.out).write_bytes(data)
    print(f"agent {args.agent} message: {len(data)} bytes -> {args.out}")
    if args.hex:
        print(hexdump(data[:args.max_bytes]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.lr=0.005 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="cohff", description="Collaborative semantic occupancy toy pipeline")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-scene", parents=[common], help="generate a scenario and its GT tiers")
    s.add_argument("--out", required=True)
    s.add_argument("--tiers-dir")
    s.set_defaults(fn=cmd_gen_scene)

    s = sub.add_parser("train-toy", parents=[common], help="three-stage training on the toy scene")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", help="per-step loss CSV")
    s.add_argument("--single", action="store_true", help="train without collaboration")
    s.set_defaults(fn=cmd_train_toy)

    s = sub.add_parser("run", parents=[common], help="one multi-agent step with metrics")
    s.add_argument("--checkpoint")
    s.add_argument("--out", help="metrics CSV")
    s.add_argument("--pred-dir", help="write per-agent prediction CSVs here")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="sweep one variable over values and seeds")
    s.add_argument("--checkpoint")
    s.add_argument("--variable", required=True, choices=VARIABLES)
    s.add_argument("--values", help="comma-separated values (default: standard grid)")
    s.add_argument("--seeds", help="comma-separated scenario seeds (default: config seed)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("report", parents=[common], help="CSV + plot-data TSVs from a sweep CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--stem")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("dump-msg", parents=[common], help="encode one agent's message, or inspect a file")
    s.add_argument("--checkpoint")
    s.add_argument("--agent", type=int, default=0)
    s.add_argument("--out", default="message.bin")
    s.add_argument("--hex", action="store_true", help="also print a hexdump")
    s.add_argument("--inspect", metavar="FILE", help="hexdump and decode an existing message")
    s.add_argument("--max-bytes", type=int, default=256)
    s.set_defaults(fn=cmd_dump_msg)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return args.fn(cfg, args)
    except (ConfigError, UsageError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DecodeError, CheckpointError, SweepError, ReportError, RuntimeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

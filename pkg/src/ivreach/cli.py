"""Command-line front end.

Subcommands wrap the library analyses and write machine-readable results
(CSV for box/trajectory data, JSON for stats and verdicts) plus a manifest
echoing every resolved parameter, so a run directory is self-describing
and reproducible.

Exit codes: 0 success (or verdict Safe), 1 verdict Unknown, 2 bad input,
3 analysis failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Dict, Optional

import numpy as np

from .closed_loop import (
    UnresolvedName,
    VerificationReport,
    WiringError,
    load_run_config,
    reach_nncs,
    sample_closed_loop_trajectories,
    verify,
)
from .interval import (
    Box,
    DegenerateBox,
    DimensionMismatch,
    DivisionByZeroInterval,
    EmptyList,
)
from .nn import ParseError, ValidationError, load_network
from .ode import (
    DuplicateDeclaration,
    EnclosureFailure,
    IncompleteModel,
    ModelSyntaxError,
    PlantModel,
    UnboundVariable,
    UndeclaredVariable,
)
from .reach_nn import InvalidTolerance, reach_mlp, uniform_partition_mlp
from .reach_nn import simulate as simulate_network

_INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ParseError,
    ValidationError,
    ModelSyntaxError,
    UndeclaredVariable,
    DuplicateDeclaration,
    IncompleteModel,
    WiringError,
    UnresolvedName,
    UnboundVariable,
    InvalidTolerance,
    DimensionMismatch,
    DegenerateBox,
    EmptyList,
    KeyError,
    ValueError,
)

_ANALYSIS_ERRORS = (EnclosureFailure, DivisionByZeroInterval, ArithmeticError, RuntimeError)


def _fmt(v) -> str:
    return repr(float(v))


def parse_box_flag(text: str) -> Box:
    """Semicolon-separated dimensions, each a comma-separated lo,hi pair."""
    pairs = []
    for part in text.split(";"):
        items = part.split(",")
        if len(items) != 2:
            raise ValueError(f"box dimension {part!r} is not of the form lo,hi")
        pairs.append((float(items[0]), float(items[1])))
    return Box.from_pairs(pairs)


def _write_manifest(out_dir: str, command: str, inputs: Dict[str, Optional[str]], params: Dict):
    manifest = {
        "command": command,
        "inputs": {k: (os.path.abspath(v) if v else None) for k, v in inputs.items()},
        "out_dir": os.path.abspath(out_dir),
        "params": params,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _box_row(box: Box):
    out = []
    for lo, hi in zip(box.lo, box.hi):
        out.extend((_fmt(lo), _fmt(hi)))
    return out


def _box_header(dim: int, names=None):
    header = []
    for i in range(dim):
        tag = names[i] if names else str(i + 1)
        header.extend((f"lo_{tag}", f"hi_{tag}"))
    return header


def _write_json(path: str, payload: Dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# reach-nn / compare-partition

def _dump_reach_result(out_dir: str, result, sims: np.ndarray):
    m = len(result.envelope)
    _write_csv(
        os.path.join(out_dir, "boxes.csv"),
        _box_header(m),
        (_box_row(b) for b in result.boxes),
    )
    _write_csv(os.path.join(out_dir, "hull.csv"), _box_header(m), [_box_row(result.hull())])
    _write_csv(
        os.path.join(out_dir, "sims.csv"),
        [f"u_{i + 1}" for i in range(m)],
        ([_fmt(v) for v in row] for row in sims),
    )
    _write_json(
        os.path.join(out_dir, "stats.json"),
        {
            "interval_count": result.stats.interval_count,
            "bisection_count": result.stats.bisection_count,
            "elapsed_seconds": result.stats.elapsed,
        },
    )


def cmd_reach_nn(args) -> int:
    net = load_network(args.net)
    box = parse_box_flag(args.input)
    os.makedirs(args.out, exist_ok=True)
    result = reach_mlp(net, box, args.eps, args.sims, args.seed, threads=args.threads)
    sims = simulate_network(net, box, args.sims, args.seed)
    _dump_reach_result(args.out, result, sims)
    _write_manifest(
        args.out,
        "reach-nn",
        {"net": args.net},
        {
            "input": args.input,
            "eps": args.eps,
            "sims": args.sims,
            "seed": args.seed,
            "threads": args.threads,
        },
    )
    print(
        f"reach-nn: {result.stats.interval_count} boxes, "
        f"{result.stats.bisection_count} bisections, "
        f"{result.stats.elapsed:.4f} s"
    )
    return 0


def cmd_compare_partition(args) -> int:
    net = load_network(args.net)
    box = parse_box_flag(args.input)
    os.makedirs(args.out, exist_ok=True)
    guided = reach_mlp(net, box, args.eps, args.sims, args.seed, threads=args.threads)
    uniform = uniform_partition_mlp(net, box, args.eps)
    for tag, res in (("guided", guided), ("uniform", uniform)):
        _write_json(
            os.path.join(args.out, f"stats_{tag}.json"),
            {
                "interval_count": res.stats.interval_count,
                "bisection_count": res.stats.bisection_count,
                "elapsed_seconds": res.stats.elapsed,
            },
        )
        _write_csv(
            os.path.join(args.out, f"hull_{tag}.csv"),
            _box_header(len(res.envelope)),
            [_box_row(res.hull())],
        )
    _write_json(
        os.path.join(args.out, "comparison.json"),
        {
            "ratio_intervals": guided.stats.interval_count / uniform.stats.interval_count,
            "ratio_elapsed": guided.stats.elapsed / uniform.stats.elapsed,
            "guided_intervals": guided.stats.interval_count,
            "uniform_intervals": uniform.stats.interval_count,
        },
    )
    _write_manifest(
        args.out,
        "compare-partition",
        {"net": args.net},
        {
            "input": args.input,
            "eps": args.eps,
            "sims": args.sims,
            "seed": args.seed,
            "threads": args.threads,
        },
    )
    print(
        f"compare-partition: guided {guided.stats.interval_count} vs "
        f"uniform {uniform.stats.interval_count} intervals "
        f"(ratio {guided.stats.interval_count / uniform.stats.interval_count:.4f})"
    )
    return 0


# ---------------------------------------------------------------------------
# closed-loop commands

def _load_run_config(args):
    setup = load_run_config(
        args.config,
        model_path=getattr(args, "model", None),
        net_path=getattr(args, "net", None),
        eps=getattr(args, "eps", None),
        n_sims=getattr(args, "sims", None),
        seed=getattr(args, "seed", None),
        substeps=getattr(args, "substeps", None),
        threads=getattr(args, "threads", 1),
    )
    paths = {"model": setup.model_path, "network": setup.network_path}
    return setup.plant, setup.net, setup.x0, setup.cfg, setup.spec, paths


def _dump_closed_loop(out_dir: str, plant: PlantModel, report: VerificationReport, elapsed: float):
    n = plant.n_states
    _write_csv(
        os.path.join(out_dir, "flowpipe.csv"),
        ["t_lo", "t_hi"] + _box_header(n, plant.state_vars),
        ([_fmt(s.t_lo), _fmt(s.t_hi)] + _box_row(s.states) for s in report.flowpipe),
    )
    out_names = list(plant.outputs)
    m = len(report.per_step[0].control_hull) if report.per_step else 0
    header = ["t_k"]
    for name in out_names:
        header.extend((f"lo_{name}", f"hi_{name}"))
    for i in range(m):
        header.extend((f"lo_u{i + 1}", f"hi_u{i + 1}"))
    header.append("controller_boxes")
    rows = []
    for step in report.per_step:
        row = [_fmt(step.t_k)]
        for name in out_names:
            iv = step.outputs[name]
            row.extend((_fmt(iv.lo), _fmt(iv.hi)))
        row.extend(_box_row(step.control_hull))
        row.append(str(step.controller_boxes))
        rows.append(row)
    _write_csv(os.path.join(out_dir, "outputs.csv"), header, rows)
    _write_json(
        os.path.join(out_dir, "report.json"),
        {
            "verdict": report.verdict,
            "first_violation": (
                None
                if report.first_violation is None
                else {
                    "segment": report.first_violation[0],
                    "constraint": report.first_violation[1],
                }
            ),
            "steps": len(report.per_step),
            "segments": len(report.flowpipe),
        },
    )
    _write_json(os.path.join(out_dir, "stats.json"), {"elapsed_seconds": elapsed})


def _run_nncs(args, command: str, require_spec: bool) -> int:
    plant, net, X0, cfg, spec, paths = _load_run_config(args)
    if require_spec and spec is None:
        raise ValueError("config has no safety spec; nothing to verify")
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    report = reach_nncs(plant, net, X0, cfg)
    if spec is not None:
        report = verify(report, spec, plant)
    elapsed = time.perf_counter() - t0
    _dump_closed_loop(args.out, plant, report, elapsed)
    _write_manifest(
        args.out,
        command,
        {"config": args.config, **paths},
        {
            "sampling_period": cfg.sampling_period,
            "t_f": cfg.t_f,
            "eps": cfg.eps,
            "n_sims": cfg.n_sims,
            "seed": cfg.seed,
            "substeps": cfg.substeps,
            "threads": cfg.threads,
            "input_wiring": list(cfg.input_wiring),
            "plant_input_wiring": (
                list(cfg.plant_input_wiring) if cfg.plant_input_wiring else None
            ),
            "constant_inputs": cfg.constant_inputs,
        },
    )
    print(
        f"{command}: {len(report.per_step)} steps, {len(report.flowpipe)} segments, "
        f"verdict {report.verdict}, {elapsed:.2f} s"
    )
    return 1 if report.verdict == "Unknown" else 0


def cmd_reach_nncs(args) -> int:
    return _run_nncs(args, "reach-nncs", require_spec=False)


def cmd_verify(args) -> int:
    return _run_nncs(args, "verify", require_spec=True)


def cmd_simulate(args) -> int:
    plant, net, X0, cfg, _spec, paths = _load_run_config(args)
    if args.count < 1:
        raise ValueError(f"trajectory count must be at least 1, got {args.count}")
    os.makedirs(args.out, exist_ok=True)
    runs = sample_closed_loop_trajectories(plant, net, X0, cfg, args.count, args.seed)
    rows = []
    for traj_id, (times, states) in enumerate(runs):
        for t, x in zip(times, states):
            rows.append([str(traj_id), _fmt(t)] + [_fmt(v) for v in x])
    _write_csv(
        os.path.join(args.out, "trajectories.csv"),
        ["traj", "t"] + list(plant.state_vars),
        rows,
    )
    _write_manifest(
        args.out,
        "simulate",
        {"config": args.config, **paths},
        {"count": args.count, "seed": args.seed},
    )
    print(f"simulate: {args.count} trajectories over {cfg.t_f} s")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ivreach",
        description="Interval reachability for neural networks and sampled-data control loops",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_nn_flags(sp):
        sp.add_argument("--net", required=True, help="network JSON file")
        sp.add_argument("--input", required=True, help="input box: 'lo,hi;lo,hi;...'")
        sp.add_argument("--eps", type=float, required=True, help="refinement tolerance")
        sp.add_argument("--sims", type=int, default=1000, help="number of guidance simulations")
        sp.add_argument("--seed", type=int, default=0, help="simulation seed")
        sp.add_argument("--threads", type=int, default=1, help="parallel extension workers")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("reach-nn", help="simulation-guided output range of a network")
    add_nn_flags(sp)
    sp.set_defaults(func=cmd_reach_nn)

    sp = sub.add_parser("compare-partition", help="guided refinement vs uniform partition")
    add_nn_flags(sp)
    sp.set_defaults(func=cmd_compare_partition)

    def add_loop_flags(sp, with_count=False):
        sp.add_argument("--config", required=True, help="run configuration JSON")
        sp.add_argument("--model", help="override the plant model path")
        sp.add_argument("--net", help="override the network path")
        sp.add_argument("--eps", type=float, help="override the tolerance")
        sp.add_argument("--sims", type=int, dest="sims", help="override n_sims")
        sp.add_argument("--seed", type=int, help="override the seed")
        sp.add_argument("--substeps", type=int, help="override integrator substeps")
        sp.add_argument("--threads", type=int, default=1, help="parallel extension workers")
        if with_count:
            sp.add_argument("--count", type=int, required=True, help="number of trajectories")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("reach-nncs", help="closed-loop flowpipe (verdict if spec present)")
    add_loop_flags(sp)
    sp.set_defaults(func=cmd_reach_nncs)

    sp = sub.add_parser("verify", help="closed-loop flowpipe plus safety verdict")
    add_loop_flags(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="random closed-loop trajectories")
    add_loop_flags(sp, with_count=True)
    sp.set_defaults(func=cmd_simulate)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ANALYSIS_ERRORS as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

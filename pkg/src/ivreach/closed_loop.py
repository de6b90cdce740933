"""Sampled-data closed-loop reachability and one-sided safety verification.

Per sampling interval the recursion: bound the plant outputs over the
current state box, assemble the controller input box from the wiring,
estimate the controller output range (simulation-guided, collapsed to its
hull), then flow the plant under that constant input box to the next
sampling instant.  The accumulated flowpipe contains every trajectory of
the exact loop, so an empty intersection with the unsafe set proves safety;
a nonempty one proves nothing, hence the verdict vocabulary Safe/Unknown.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .interval import Box, DimensionMismatch, Interval
from .nn import MlpNetwork, load_network, mlp_eval
from .ode import (
    FlowpipeSegment,
    PlantModel,
    expr_eval_interval,
    expr_eval_point,
    parse_model,
    reach_odex,
    reach_odey,
    simulate_ode,
)
from .reach_nn import reach_mlp


class WiringError(ValueError):
    """Controller or plant input wiring cannot be resolved."""


class UnresolvedName(KeyError):
    """Safety constraint references a name unknown to the plant."""


@dataclass(frozen=True)
class ClosedLoopConfig:
    """Run parameters for one closed-loop analysis.

    input_wiring entries feed the controller, in network input order:
      "output:<name>"  a plant output at the sampling instant
      "ref:<index>"    a component of the reference input box
      "const:<name>"   a named constant held for the whole run
    plant_input_wiring entries feed the plant, in plant input order:
      "net:<index>"    a component of the controller output hull
      "const:<name>"   a named constant (exogenous input)
    When plant_input_wiring is omitted and the controller output dimension
    equals the plant input count, the identity wiring is used.
    """

    sampling_period: float
    t_f: float
    eps: float
    n_sims: int
    seed: int
    substeps: int = 10
    reference_input: Optional[Box] = None
    constant_inputs: Dict[str, float] = field(default_factory=dict)
    input_wiring: Tuple[str, ...] = ()
    plant_input_wiring: Optional[Tuple[str, ...]] = None
    threads: int = 1

    def __post_init__(self):
        if self.sampling_period <= 0:
            raise ValueError(f"sampling period must be positive, got {self.sampling_period}")
        if self.t_f < self.sampling_period:
            raise ValueError("horizon shorter than one sampling period")
        object.__setattr__(self, "input_wiring", tuple(self.input_wiring))
        if self.plant_input_wiring is not None:
            object.__setattr__(self, "plant_input_wiring", tuple(self.plant_input_wiring))


@dataclass(frozen=True)
class LinearConstraint:
    """sum(coeff * variable) + constant  >  0   (or >= 0)."""

    terms: Dict[str, float]
    constant: float
    op: str  # ">" or ">="

    def __post_init__(self):
        if self.op not in (">", ">="):
            raise ValueError(f"constraint op must be '>' or '>=', got {self.op!r}")
        if not self.terms:
            raise ValueError("constraint needs at least one term")


@dataclass(frozen=True)
class SafetySpec:
    constraints: Tuple[LinearConstraint, ...]

    @classmethod
    def from_dicts(cls, entries: Sequence[dict]) -> "SafetySpec":
        cons = []
        for e in entries:
            cons.append(
                LinearConstraint(
                    terms={str(k): float(v) for k, v in e["terms"].items()},
                    constant=float(e.get("constant", 0.0)),
                    op=str(e.get("op", ">")),
                )
            )
        return cls(tuple(cons))


@dataclass
class StepRecord:
    t_k: float
    outputs: Dict[str, Interval]
    control_hull: Box
    controller_boxes: int


@dataclass
class VerificationReport:
    """Flowpipe plus per-step data; verdict filled in by verify()."""

    verdict: Optional[str]  # "Safe", "Unknown", or None before checking
    flowpipe: List[FlowpipeSegment]
    per_step: List[StepRecord]
    first_violation: Optional[Tuple[int, int]]
    x_final: Box


def _step_count(cfg: ClosedLoopConfig) -> int:
    return max(1, math.ceil(cfg.t_f / cfg.sampling_period - 1e-9))


def _parse_wiring_entry(entry: str) -> Tuple[str, str]:
    kind, sep, name = entry.partition(":")
    if not sep or not name:
        raise WiringError(f"malformed wiring entry {entry!r}")
    return kind, name


def _validate_wiring(plant: PlantModel, net: MlpNetwork, cfg: ClosedLoopConfig) -> None:
    if len(cfg.input_wiring) != net.input_dim:
        raise WiringError(
            f"controller wiring has {len(cfg.input_wiring)} entries, "
            f"network expects {net.input_dim} inputs"
        )
    for entry in cfg.input_wiring:
        kind, name = _parse_wiring_entry(entry)
        if kind == "output":
            if name not in plant.outputs:
                raise WiringError(f"{entry!r}: plant has no output {name!r}")
        elif kind == "ref":
            idx = int(name)
            if cfg.reference_input is None or not 0 <= idx < len(cfg.reference_input):
                raise WiringError(f"{entry!r}: no such reference input component")
        elif kind == "const":
            if name not in cfg.constant_inputs:
                raise WiringError(f"{entry!r}: constant {name!r} not defined")
        else:
            raise WiringError(f"unknown wiring kind in {entry!r}")
    wiring = _plant_wiring(plant, net, cfg)
    for entry in wiring:
        kind, name = _parse_wiring_entry(entry)
        if kind == "net":
            if not 0 <= int(name) < net.output_dim:
                raise WiringError(f"{entry!r}: network has {net.output_dim} outputs")
        elif kind == "const":
            if name not in cfg.constant_inputs:
                raise WiringError(f"{entry!r}: constant {name!r} not defined")
        else:
            raise WiringError(f"unknown plant wiring kind in {entry!r}")


def _plant_wiring(plant: PlantModel, net: MlpNetwork, cfg: ClosedLoopConfig) -> Tuple[str, ...]:
    if cfg.plant_input_wiring is not None:
        if len(cfg.plant_input_wiring) != plant.n_inputs:
            raise WiringError(
                f"plant wiring has {len(cfg.plant_input_wiring)} entries, "
                f"plant expects {plant.n_inputs} inputs"
            )
        return cfg.plant_input_wiring
    if plant.n_inputs != net.output_dim:
        raise WiringError(
            f"plant has {plant.n_inputs} inputs but network emits {net.output_dim}; "
            "specify plant_input_wiring"
        )
    return tuple(f"net:{i}" for i in range(plant.n_inputs))


def _controller_box(
    cfg: ClosedLoopConfig, outputs: Dict[str, Interval]
) -> Box:
    dims: List[Interval] = []
    for entry in cfg.input_wiring:
        kind, name = _parse_wiring_entry(entry)
        if kind == "output":
            dims.append(outputs[name])
        elif kind == "ref":
            dims.append(cfg.reference_input[int(name)])
        else:
            dims.append(Interval.point(cfg.constant_inputs[name]))
    return Box.from_intervals(dims)


def _plant_input_box(
    plant: PlantModel, net: MlpNetwork, cfg: ClosedLoopConfig, control: Box
) -> Optional[Box]:
    if plant.n_inputs == 0:
        return None
    dims = []
    for entry in _plant_wiring(plant, net, cfg):
        kind, name = _parse_wiring_entry(entry)
        if kind == "net":
            dims.append(control[int(name)])
        else:
            dims.append(Interval.point(cfg.constant_inputs[name]))
    return Box.from_intervals(dims)


def reach_nncs(
    plant: PlantModel, net: MlpNetwork, X0: Box, cfg: ClosedLoopConfig
) -> VerificationReport:
    """Flowpipe of the sampled-data loop over [0, t_f]; verdict left unset.

    Every sampling step bounds the measured outputs, pushes them through
    the controller estimate, and flows the plant for one period (the last
    step is shortened to end exactly at t_f).  The resulting segment union
    contains all closed-loop trajectories from X0.
    """
    if len(X0) != plant.n_states:
        raise DimensionMismatch(f"X0 has {len(X0)} dims, plant has {plant.n_states} states")
    _validate_wiring(plant, net, cfg)
    steps = _step_count(cfg)
    X = X0
    flowpipe: List[FlowpipeSegment] = []
    per_step: List[StepRecord] = []
    for k in range(steps):
        t_k = k * cfg.sampling_period
        h_k = min(cfg.sampling_period, cfg.t_f - t_k)
        outputs = reach_odey(plant, X)
        eta_box = _controller_box(cfg, outputs)
        result = reach_mlp(
            net, eta_box, cfg.eps, cfg.n_sims, cfg.seed, threads=cfg.threads
        )
        control = result.hull()
        U = _plant_input_box(plant, net, cfg, control)
        segments, X = reach_odex(plant, U, X, h_k, cfg.substeps)
        flowpipe.extend(seg.shifted(t_k) for seg in segments)
        per_step.append(StepRecord(t_k, outputs, control, len(result.boxes)))
    return VerificationReport(
        verdict=None, flowpipe=flowpipe, per_step=per_step, first_violation=None, x_final=X
    )


def _resolve_terms(spec: SafetySpec, plant: PlantModel):
    resolved = []
    for con in spec.constraints:
        parts = []
        for name, coeff in con.terms.items():
            if name in plant.state_vars:
                parts.append((coeff, "state", plant.state_vars.index(name)))
            elif name in plant.outputs:
                parts.append((coeff, "output", plant.outputs[name]))
            else:
                raise UnresolvedName(f"constraint references unknown name {name!r}")
        resolved.append((con, parts))
    return resolved


def verify(
    report: VerificationReport, spec: SafetySpec, plant: PlantModel
) -> VerificationReport:
    """One-sided safety check of a flowpipe against linear constraints.

    Safe means every constraint's lower bound holds on every segment box.
    Anything else is Unknown: the over-approximation intersecting the
    unsafe set says nothing about the true system, so "Unsafe" is never
    reported.
    """
    resolved = _resolve_terms(spec, plant)
    for seg_idx, seg in enumerate(report.flowpipe):
        env = {name: seg.states[i] for i, name in enumerate(plant.state_vars)}
        for con_idx, (con, parts) in enumerate(resolved):
            total = Interval.point(con.constant)
            for coeff, kind, ref in parts:
                iv = env[plant.state_vars[ref]] if kind == "state" else expr_eval_interval(ref, env)
                total = total + Interval.point(coeff) * iv
            ok = total.lo > 0 if con.op == ">" else total.lo >= 0
            if not ok:
                return replace(report, verdict="Unknown", first_violation=(seg_idx, con_idx))
    return replace(report, verdict="Safe", first_violation=None)


# ---------------------------------------------------------------------------
# run-configuration files

@dataclass
class RunSetup:
    """A fully loaded closed-loop analysis: plant, controller, X0, cfg, spec."""

    plant: PlantModel
    net: MlpNetwork
    x0: Box
    cfg: ClosedLoopConfig
    spec: Optional[SafetySpec]
    model_path: str
    network_path: str


def load_run_config(
    path,
    *,
    model_path: Optional[str] = None,
    net_path: Optional[str] = None,
    eps: Optional[float] = None,
    n_sims: Optional[int] = None,
    seed: Optional[int] = None,
    substeps: Optional[int] = None,
    threads: int = 1,
) -> RunSetup:
    """Load a JSON run configuration; relative paths resolve from its directory.

    Keyword arguments override the corresponding config fields.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    model_path = model_path or resolve(raw["model"])
    net_path = net_path or resolve(raw["network"])
    with open(model_path, "r", encoding="utf-8") as fh:
        plant = parse_model(fh.read())
    net = load_network(net_path)
    ref = raw.get("reference_input")
    cfg = ClosedLoopConfig(
        sampling_period=float(raw["sampling_period"]),
        t_f=float(raw["t_f"]),
        eps=float(raw["eps"] if eps is None else eps),
        n_sims=int(raw["n_sims"] if n_sims is None else n_sims),
        seed=int(raw["seed"] if seed is None else seed),
        substeps=int(raw.get("substeps", 10) if substeps is None else substeps),
        reference_input=Box.from_pairs(ref) if ref else None,
        constant_inputs={k: float(v) for k, v in raw.get("constant_inputs", {}).items()},
        input_wiring=tuple(raw["input_wiring"]),
        plant_input_wiring=(
            tuple(raw["plant_input_wiring"]) if raw.get("plant_input_wiring") else None
        ),
        threads=threads,
    )
    spec = SafetySpec.from_dicts(raw["spec"]["constraints"]) if raw.get("spec") else None
    return RunSetup(plant, net, Box.from_pairs(raw["x0"]), cfg, spec, model_path, net_path)


# ---------------------------------------------------------------------------
# reference simulation of the exact sampled-data loop

def simulate_closed_loop(
    plant: PlantModel,
    net: MlpNetwork,
    cfg: ClosedLoopConfig,
    x0: np.ndarray,
    ref_point: Optional[np.ndarray] = None,
    fine_factor: int = 10,
) -> Tuple[np.ndarray, np.ndarray]:
    """Numeric trajectory with exact controller sampling; (times, states).

    The plant flows with a fixed-step RK4 at fine_factor times the
    validated integrator's substep resolution, which keeps the reference
    far more accurate than the enclosure widths it is compared against.
    """
    _validate_wiring(plant, net, cfg)
    x = np.asarray(x0, dtype=float)
    if x.shape != (plant.n_states,):
        raise DimensionMismatch(f"x0 has shape {x.shape}, plant has {plant.n_states} states")
    times = [0.0]
    states = [x.copy()]
    for k in range(_step_count(cfg)):
        t_k = k * cfg.sampling_period
        h_k = min(cfg.sampling_period, cfg.t_f - t_k)
        env = {name: float(x[i]) for i, name in enumerate(plant.state_vars)}
        out_vals = {name: expr_eval_point(e, env) for name, e in plant.outputs.items()}
        eta = []
        for entry in cfg.input_wiring:
            kind, name = _parse_wiring_entry(entry)
            if kind == "output":
                eta.append(out_vals[name])
            elif kind == "ref":
                if ref_point is None:
                    raise WiringError("wiring uses ref: but no reference point was given")
                eta.append(float(ref_point[int(name)]))
            else:
                eta.append(cfg.constant_inputs[name])
        u_net = mlp_eval(net, np.asarray(eta))
        u = []
        for entry in _plant_wiring(plant, net, cfg):
            kind, name = _parse_wiring_entry(entry)
            u.append(float(u_net[int(name)]) if kind == "net" else cfg.constant_inputs[name])
        steps = max(1, cfg.substeps * fine_factor)
        traj = simulate_ode(plant, x, np.asarray(u), h_k, steps)
        local = np.linspace(0.0, h_k, steps + 1)
        times.extend((t_k + local[1:]).tolist())
        states.extend(traj[1:])
        x = traj[-1]
    return np.asarray(times), np.asarray(states)


def sample_closed_loop_trajectories(
    plant: PlantModel,
    net: MlpNetwork,
    X0: Box,
    cfg: ClosedLoopConfig,
    count: int,
    seed: int,
    fine_factor: int = 10,
):
    """count seeded random trajectories from X0 (and the reference box, if any)."""
    if count < 1:
        raise ValueError(f"need at least one trajectory, got {count}")
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(count):
        x0 = X0.lo + rng.random(len(X0)) * (X0.hi - X0.lo)
        ref = None
        if cfg.reference_input is not None:
            V = cfg.reference_input
            ref = V.lo + rng.random(len(V)) * (V.hi - V.lo)
        runs.append(simulate_closed_loop(plant, net, cfg, x0, ref, fine_factor))
    return runs

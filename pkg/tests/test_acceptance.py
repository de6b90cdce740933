"""Acceptance suite: every release criterion with its stated tolerance.

Run with `pytest -v -s tests/test_acceptance.py` to see one PASS/FAIL line
per criterion.  The ACC closed-loop criteria share one (expensive) analysis
via module-scoped fixtures.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from ivreach.cli import main as cli_main
from ivreach.closed_loop import (
    LinearConstraint,
    SafetySpec,
    load_run_config,
    reach_nncs,
    sample_closed_loop_trajectories,
    verify,
)
from ivreach.interval import Box
from ivreach.nn import (
    Layer,
    MlpNetwork,
    lipschitz_bound,
    load_network,
    mlp_eval,
    mlp_interval_ext,
)
from ivreach.ode import expr_eval_point, parse_model, reach_odex
from ivreach.reach_nn import reach_mlp, uniform_partition_mlp

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
ARM_BOX = Box.from_pairs([(math.pi / 3, 2 * math.pi / 3)] * 2)


def report(num: int, ok: bool, detail: str):
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# shared corpora

@pytest.fixture(scope="module")
def random_corpus():
    rng = np.random.default_rng(20240517)
    corpus = []
    for _ in range(50):
        depth = int(rng.integers(1, 5))
        dims = [int(rng.integers(1, 17)) for _ in range(depth + 1)]
        layers = [
            Layer(
                rng.normal(0, 1.0, (dims[i + 1], dims[i])),
                rng.normal(0, 0.5, dims[i + 1]),
                str(rng.choice(["tanh", "logistic", "relu"])),
            )
            for i in range(depth)
        ]
        net = MlpNetwork(layers)
        boxes = []
        for _ in range(10):
            lo = rng.uniform(-2, 2, net.input_dim)
            boxes.append(Box(lo, lo + rng.uniform(0.05, 1.5, net.input_dim)))
        corpus.append((net, boxes))
    return corpus


@pytest.fixture(scope="module")
def arm_runs():
    net = load_network(FIXTURES / "arm.json")
    guided = reach_mlp(net, ARM_BOX, eps=0.01, n_sims=1000, seed=1)
    uniform = uniform_partition_mlp(net, ARM_BOX, eps=0.01)
    return net, guided, uniform


@pytest.fixture(scope="module")
def acc_setup():
    return load_run_config(FIXTURES / "acc_run.json", n_sims=1000)


@pytest.fixture(scope="module")
def acc_report(acc_setup):
    t0 = time.perf_counter()
    rep = reach_nncs(acc_setup.plant, acc_setup.net, acc_setup.x0, acc_setup.cfg)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def acc_sims(acc_setup):
    return sample_closed_loop_trajectories(
        acc_setup.plant, acc_setup.net, acc_setup.x0, acc_setup.cfg, count=100, seed=2024
    )


def _in_union(points: np.ndarray, boxes) -> bool:
    lo = np.stack([b.lo for b in boxes])
    hi = np.stack([b.hi for b in boxes])
    for start in range(0, len(points), 512):
        chunk = points[start : start + 512]
        inside = np.all(
            (chunk[:, None, :] >= lo[None]) & (chunk[:, None, :] <= hi[None]), axis=2
        )
        if not np.all(np.any(inside, axis=1)):
            return False
    return True


# ---------------------------------------------------------------------------
# criteria

def test_criterion_1_extension_soundness(random_corpus):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    violations = 0
    for net, boxes in random_corpus:
        for box in boxes:
            ext = mlp_interval_ext(net, box)
            pts = box.lo + rng.random((10_000, len(box))) * (box.hi - box.lo)
            vals = mlp_eval(net, pts)
            bad = np.any(vals < ext.lo[None, :]) or np.any(vals > ext.hi[None, :])
            violations += int(bad)
    elapsed = time.perf_counter() - t0
    report(
        1,
        violations == 0 and elapsed < 60.0,
        f"50 nets x 10 boxes x 10^4 samples, {violations} violations, {elapsed:.1f} s (< 60 s)",
    )


def test_criterion_2_lipschitz_width_bound(random_corpus):
    violations = 0
    worst = 0.0
    for net, boxes in random_corpus:
        gamma = lipschitz_bound(net)
        for box in boxes:
            ext = mlp_interval_ext(net, box)
            bound = gamma * box.width()
            if bound > 0:
                ratio = ext.width() / bound
                worst = max(worst, ratio)
                violations += int(ratio > 1 + 1e-9)
            else:
                violations += int(ext.width() > 1e-12)
    report(
        2,
        violations == 0,
        f"width(ext) <= gamma*width(input) with 1e-9 slack; worst ratio {worst:.6f}",
    )


def test_criterion_3_arm_soundness_and_tightness(arm_runs):
    net, guided, uniform = arm_runs
    rng = np.random.default_rng(424242)  # fresh seed, not the guidance seed
    pts = ARM_BOX.lo + rng.random((5000, 2)) * (ARM_BOX.hi - ARM_BOX.lo)
    outs = mlp_eval(net, pts)
    contained = _in_union(outs, guided.boxes)
    coarse = mlp_interval_ext(net, ARM_BOX)
    hull_in_coarse = guided.hull().issubset(coarse)
    gh, uh = guided.hull(), uniform.hull()
    hull_gap = max(
        float(np.max(np.abs(gh.lo - uh.lo))), float(np.max(np.abs(gh.hi - uh.hi)))
    )
    hulls_agree = hull_gap <= 1e-9
    report(
        3,
        contained and hull_in_coarse and hulls_agree,
        f"(a) 5000 fresh outputs contained: {contained}; "
        f"(b) union hull within coarse extension: {hull_in_coarse}; "
        f"(c) guided vs uniform hull gap {hull_gap:.2e} (<= 1e-9)",
    )


def test_criterion_4_partition_efficiency(arm_runs):
    _net, guided, uniform = arm_runs
    ratio = guided.stats.interval_count / uniform.stats.interval_count
    time_ratio = guided.stats.elapsed / uniform.stats.elapsed
    ok = uniform.stats.interval_count == 16384 and ratio <= 0.25
    report(
        4,
        ok,
        f"uniform cells {uniform.stats.interval_count} (= 16384), guided "
        f"{guided.stats.interval_count}, ratio {ratio:.4f} (<= 0.25); "
        f"elapsed ratio {time_ratio:.3f} (reported, not asserted)",
    )


def test_criterion_5_validated_integrator():
    model = parse_model("state x\nderiv x = -x")
    t0 = time.perf_counter()
    _segs, x_next = reach_odex(model, None, Box.from_pairs([(1, 1)]), h=1.0, m=100)
    elapsed = time.perf_counter() - t0
    target = math.exp(-1)
    contains = x_next.lo[0] <= target <= x_next.hi[0]
    ok = contains and x_next.width() <= 0.1 and elapsed < 1.0
    report(
        5,
        ok,
        f"e^-1 in [{x_next.lo[0]:.6f}, {x_next.hi[0]:.6f}], width "
        f"{x_next.width():.2e} (<= 0.1), {elapsed:.3f} s (< 1 s)",
    )


def test_criterion_6_closed_loop_containment(acc_report, acc_sims):
    rep, elapsed = acc_report
    seg_lo = np.array([s.t_lo for s in rep.flowpipe])
    seg_hi = np.array([s.t_hi for s in rep.flowpipe])
    states_lo = np.stack([s.states.lo for s in rep.flowpipe])
    states_hi = np.stack([s.states.hi for s in rep.flowpipe])
    violations = 0
    checks = 0
    for times, states in acc_sims:
        for t, x in zip(times, states):
            for ci in np.nonzero((seg_lo <= t) & (t <= seg_hi))[0]:
                checks += 1
                if not (np.all(states_lo[ci] <= x) and np.all(x <= states_hi[ci])):
                    violations += 1
    ok = violations == 0 and len(rep.per_step) == 25 and elapsed < 600.0
    report(
        6,
        ok,
        f"ACC 5 s horizon: {len(rep.per_step)} sampling steps, 100 trajectories, "
        f"{checks} point-in-segment checks, {violations} violations; "
        f"analysis {elapsed:.1f} s (< 600 s)",
    )


def _margin_on_simulations(plant, sims, constraint):
    worst = math.inf
    idx = {name: i for i, name in enumerate(plant.state_vars)}
    for _times, states in sims:
        value = np.full(len(states), constraint.constant)
        for name, coeff in constraint.terms.items():
            if name in idx:
                value = value + coeff * states[:, idx[name]]
            else:
                expr = plant.outputs[name]
                value = value + coeff * np.array(
                    [
                        expr_eval_point(expr, dict(zip(plant.state_vars, row)))
                        for row in states
                    ]
                )
        worst = min(worst, float(value.min()))
    return worst


def test_criterion_7_safety_one_sidedness(acc_setup, acc_report, acc_sims):
    rep, _ = acc_report
    plant = acc_setup.plant
    rng = np.random.default_rng(99)
    names = list(plant.state_vars) + list(plant.outputs)
    safe_checked = 0
    contradictions = 0
    for _ in range(20):
        picked = rng.choice(names, size=rng.integers(1, 3), replace=False)
        terms = {str(n): float(rng.uniform(-1, 1)) for n in picked}
        constraint = LinearConstraint(terms, float(rng.uniform(-100, 100)), ">")
        verdict = verify(rep, SafetySpec((constraint,)), plant).verdict
        if verdict == "Safe":
            safe_checked += 1
            worst = _margin_on_simulations(plant, acc_sims, constraint)
            contradictions += int(worst <= 0)
    # the shipped ACC spec: margin sign on simulations must agree when Safe
    acc_constraint = acc_setup.spec.constraints[0]
    acc_verdict = verify(rep, acc_setup.spec, plant).verdict
    margin = _margin_on_simulations(plant, acc_sims, acc_constraint)
    agree = (acc_verdict != "Safe") or margin > 0
    report(
        7,
        contradictions == 0 and agree,
        f"20 random specs: {safe_checked} Safe verdicts, {contradictions} contradicted "
        f"by simulation; shipped spec verdict {acc_verdict}, simulated margin "
        f"min {margin:.2f} (sign agreement: {agree})",
    )


def test_criterion_8_determinism(tmp_path):
    runs = {}
    for tag in ("a", "b"):
        arm_out = tmp_path / f"arm_{tag}"
        code = cli_main(
            ["reach-nn", "--net", str(FIXTURES / "arm.json"),
             "--input", "1.0472,2.0944;1.0472,2.0944",
             "--eps", "0.05", "--sims", "500", "--seed", "7",
             "--threads", "1", "--out", str(arm_out)]
        )
        assert code == 0
        sim_out = tmp_path / f"sim_{tag}"
        code = cli_main(
            ["simulate", "--config", str(FIXTURES / "acc_run.json"),
             "--count", "5", "--seed", "3", "--out", str(sim_out)]
        )
        assert code == 0
        loop_out = tmp_path / f"loop_{tag}"
        code = cli_main(
            ["reach-nncs", "--config", str(FIXTURES / "acc_run.json"),
             "--eps", "0.2", "--sims", "200", "--threads", "1",
             "--out", str(loop_out)]
        )
        assert code in (0, 1)
        runs[tag] = (arm_out, sim_out, loop_out)

    identical = True
    compared = []
    for a_dir, b_dir in zip(runs["a"], runs["b"]):
        for f in sorted(a_dir.iterdir()):
            other = b_dir / f.name
            if f.suffix == ".csv":
                same = f.read_bytes() == other.read_bytes()
            else:
                pa = json.loads(f.read_text())
                pb = json.loads(other.read_text())
                for payload in (pa, pb):
                    payload.pop("elapsed_seconds", None)  # wall clock, informational
                    if isinstance(payload.get("out_dir"), str):
                        payload["out_dir"] = ""
                    if "inputs" in payload:
                        payload["inputs"] = {}
                same = pa == pb
            identical &= same
            compared.append(f.name)
    report(
        8,
        identical,
        f"reach-nn, simulate, reach-nncs rerun with identical flags: "
        f"{len(compared)} files byte-identical (timing fields excluded)",
    )

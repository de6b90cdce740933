#!/usr/bin/env python3
"""Regenerate the committed fixture networks and run configurations.

Everything here is seeded, so rerunning the script reproduces the committed
files byte for byte.  The library itself never trains networks; this script
is the offline provenance for the weights checked into the repository.

  arm.json   planar two-joint arm forward kinematics (link lengths 10 and
             10) learned on the joint box [pi/3, 2pi/3]^2: random tanh
             features, ridge-regressed linear readout.
  acc.json   adaptive-cruise controller (inputs: set speed, time gap, ego
             speed, gap distance, closing speed; output: ego acceleration
             command) trained with Adam to mimic a clipped spacing/speed
             law over the operating envelope.
  acc.model  two-car longitudinal plant with first-order acceleration lag
             and quadratic drag.
  acc_run.json  emergency-braking scenario: the lead car holds -2 m/s^2
             while the ego controller must keep gap > 10 + 1.4 * v_ego.

Run:  python3 fixtures/make_fixtures.py
"""

import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))


def save_network(name, layers):
    payload = {
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist(), "activation": act}
            for w, b, act in layers
        ]
    }
    path = os.path.join(HERE, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    print("wrote", path)


# ---------------------------------------------------------------------------
# robot arm: random tanh features + ridge readout

def make_arm():
    rng = np.random.default_rng(20240612)
    l1 = l2 = 10.0
    lo, hi = math.pi / 3, 2 * math.pi / 3
    mid, half = math.pi / 2, (hi - lo) / 2

    hidden = 20
    a = rng.normal(0, 1.2, (hidden, 2))
    b0 = rng.normal(0, 0.8, hidden)
    w1 = a / half  # fold input standardization into the first layer
    b1 = b0 - a @ np.array([mid, mid]) / half

    g = np.linspace(lo, hi, 80)
    grid = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    t1, t2 = grid[:, 0], grid[:, 1]
    targets = np.stack(
        [l1 * np.cos(t1) + l2 * np.cos(t1 + t2), l1 * np.sin(t1) + l2 * np.sin(t1 + t2)],
        axis=1,
    )
    feats = np.tanh(grid @ w1.T + b1)
    feats = np.hstack([feats, np.ones((len(feats), 1))])
    ridge = 1e-8 * len(grid)
    sol = np.linalg.solve(feats.T @ feats + ridge * np.eye(hidden + 1), feats.T @ targets)
    w2, b2 = sol[:hidden].T, sol[hidden]

    fit = np.tanh(grid @ w1.T + b1) @ w2.T + b2
    print("arm fit max error: %.4f" % np.abs(fit - targets).max())
    save_network("arm.json", [(w1, b1, "tanh"), (w2, b2, "identity")])


# ---------------------------------------------------------------------------
# adaptive cruise controller: Adam-trained two-hidden-layer tanh net

ACC_IN_LO = np.array([28.0, 1.2, 14.0, 35.0, -12.0])  # v_set t_gap v_e d_rel v_rel
ACC_IN_HI = np.array([32.0, 1.6, 33.0, 100.0, 4.0])


def acc_law(x):
    """Clipped min of a speed-tracking term and a gap-keeping term."""
    v_set, t_gap, v_e, d_rel, v_rel = x.T
    gap_error = d_rel - (10.0 + t_gap * v_e)
    spacing = 0.05 * (gap_error - 15.0) + 0.35 * v_rel
    speed = 0.5 * (v_set - v_e)
    return np.clip(np.minimum(speed, spacing), -3.0, 2.0)[:, None]


def make_acc():
    rng = np.random.default_rng(20240612)
    mid, half = (ACC_IN_LO + ACC_IN_HI) / 2, (ACC_IN_HI - ACC_IN_LO) / 2
    n_train, hidden, batch, steps = 60000, 20, 4096, 6000

    x_raw = ACC_IN_LO + rng.random((n_train, 5)) * (ACC_IN_HI - ACC_IN_LO)
    x_std = (x_raw - mid) / half
    y = acc_law(x_raw)

    p = {
        "W1": rng.normal(0, np.sqrt(2 / 5), (hidden, 5)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0, np.sqrt(2 / hidden), (hidden, hidden)),
        "b2": np.zeros(hidden),
        "W3": rng.normal(0, np.sqrt(1 / hidden), (1, hidden)),
        "b3": np.zeros(1),
    }
    mom = {k: np.zeros_like(v) for k, v in p.items()}
    var = {k: np.zeros_like(v) for k, v in p.items()}
    for step in range(1, steps + 1):
        idx = rng.choice(n_train, batch, replace=False)
        xb, yb = x_std[idx], y[idx]
        a1 = np.tanh(xb @ p["W1"].T + p["b1"])
        a2 = np.tanh(a1 @ p["W2"].T + p["b2"])
        out = a2 @ p["W3"].T + p["b3"]
        d_out = 2 * (out - yb) / batch
        grad = {"W3": d_out.T @ a2, "b3": d_out.sum(0)}
        d_z2 = (d_out @ p["W3"]) * (1 - a2**2)
        grad["W2"] = d_z2.T @ a1
        grad["b2"] = d_z2.sum(0)
        d_z1 = (d_z2 @ p["W2"]) * (1 - a1**2)
        grad["W1"] = d_z1.T @ xb
        grad["b1"] = d_z1.sum(0)
        lr = 3e-3 * (0.1 ** (step / steps))
        for k in p:
            mom[k] = 0.9 * mom[k] + 0.1 * grad[k]
            var[k] = 0.999 * var[k] + 0.001 * grad[k] ** 2
            m_hat = mom[k] / (1 - 0.9**step)
            v_hat = var[k] / (1 - 0.999**step)
            p[k] -= lr * m_hat / (np.sqrt(v_hat) + 1e-8)

    w1 = p["W1"] / half
    b1 = p["b1"] - p["W1"] @ (mid / half)
    x_test = ACC_IN_LO + rng.random((20000, 5)) * (ACC_IN_HI - ACC_IN_LO)
    a2 = np.tanh(np.tanh(x_test @ w1.T + b1) @ p["W2"].T + p["b2"])
    err = np.abs(a2 @ p["W3"].T + p["b3"] - acc_law(x_test))
    print("acc fit error: max %.4f mean %.4f" % (err.max(), err.mean()))
    save_network(
        "acc.json",
        [(w1, b1, "tanh"), (p["W2"], p["b2"], "tanh"), (p["W3"], p["b3"], "identity")],
    )


ACC_MODEL = """\
# Two-car longitudinal dynamics: lead and ego car each have position,
# velocity, and an actual acceleration that lags the commanded one with
# a quadratic friction loss.
state x_l v_l g_l x_e v_e g_e
input a_l a_e

deriv x_l = v_l
deriv v_l = g_l
deriv g_l = -2*g_l + 2*a_l - 0.001*sqr(v_l)
deriv x_e = v_e
deriv v_e = g_e
deriv g_e = -2*g_e + 2*a_e - 0.001*sqr(v_e)

output d_rel = x_l - x_e
output v_rel = v_l - v_e
output v_ego = v_e
"""

ACC_RUN = {
    "model": "acc.model",
    "network": "acc.json",
    "x0": [[94, 96], [30, 30.2], [0, 0], [10, 11], [30, 30.2], [0, 0]],
    "sampling_period": 0.2,
    "t_f": 5.0,
    "eps": 0.1,
    "n_sims": 1000,
    "seed": 1,
    "substeps": 10,
    "constant_inputs": {"v_set": 30.0, "t_gap": 1.4, "alpha_lead": -2.0},
    "input_wiring": [
        "const:v_set",
        "const:t_gap",
        "output:v_ego",
        "output:d_rel",
        "output:v_rel",
    ],
    "plant_input_wiring": ["const:alpha_lead", "net:0"],
    "spec": {
        "constraints": [
            {"terms": {"d_rel": 1.0, "v_e": -1.4}, "constant": -10.0, "op": ">"}
        ]
    },
}


def make_acc_scenario():
    with open(os.path.join(HERE, "acc.model"), "w", encoding="utf-8") as fh:
        fh.write(ACC_MODEL)
    with open(os.path.join(HERE, "acc_run.json"), "w", encoding="utf-8") as fh:
        json.dump(ACC_RUN, fh, indent=2)
        fh.write("\n")
    print("wrote acc.model and acc_run.json")


if __name__ == "__main__":
    make_arm()
    make_acc()
    make_acc_scenario()

"""Smoke test for the smdlab Python bindings.

Build and install first:  maturin develop -m crates/py/Cargo.toml --release
"""

import math
import random

import smdlab


def gaussian(n, m, seed):
    rng = random.Random(seed)
    x = [[rng.gauss(0, 1) for _ in range(m)] for _ in range(n)]
    w = [rng.gauss(0, 1) for _ in range(m)]
    y = [sum(a * b for a, b in zip(row, w)) for row in x]
    return x, y


def check_potential():
    p = smdlab.Potential("qnorm_squared", q=1.5)
    w = [0.3, -1.2, 0.7]
    back = p.inverse_grad(p.grad(w))
    assert max(abs(a - b) for a, b in zip(w, back)) < 1e-10
    assert p.bregman(w, w) == 0.0
    assert p.bregman(w, [1.0, 1.0, 1.0]) > 0.0
    e = smdlab.Potential("negative_entropy")
    assert math.isclose(e.bregman([1.0, 1.0], [math.e, math.e]), 2 * math.e - 4, rel_tol=1e-12)
    try:
        smdlab.Potential("qnorm_componentwise", q=3.0)
    except ValueError:
        pass
    else:
        raise AssertionError("q = 3 should be rejected")


def check_run_and_projection():
    x, y = gaussian(5, 12, 1)
    p = smdlab.Potential("squared_l2")
    eta = 0.5 / max(sum(v * v for v in row) for row in x)
    r = smdlab.run(p, x, y, [0.0] * 12, eta, 5000)
    assert r["identity_max_residual"] <= 1e-9, r["identity_max_residual"]
    assert r["certified"]
    assert abs(r["adversary_ratio"] - 1.0) <= 1e-8
    assert r["minimax_ratio"] <= 1.0 + 1e-10
    proj = smdlab.bregman_project(p, x, y, [0.0] * 12)
    assert proj["converged"]
    w_t = r["summary"]["final_w"]
    err = math.sqrt(sum((a - b) ** 2 for a, b in zip(w_t, proj["w_star"])))
    assert err < 1e-6, err


def check_config_and_experiments():
    cfg = """
scenario = "minimax_audit"
[potential]
kind = "qnorm_componentwise"
q = 1.6
[loss]
kind = "log_cosh"
[model]
kind = "linear"
dim = 6
[data]
kind = "gaussian_linear"
n = 3
noise_std = 0.1
[schedule]
kind = "constant"
eta = 0.01
[stop]
max_steps = 150
residual_tol = 0.0
[init]
kind = "gaussian"
scale = 0.5
seed = 3
"""
    rep = smdlab.audit_config(cfg, minimax=True)
    assert rep["failures"] == [], rep["failures"]
    assert rep["identity_max_residual"] <= 1e-9
    try:
        smdlab.audit_config(cfg.replace("q = 1.6", "q = = 1.6"))
    except ValueError as e:
        assert "line" in str(e)
    else:
        raise AssertionError("malformed config accepted")

    fz = smdlab.fuzz(trials=10, steps=50)
    assert fz["failures"] == [] and fz["max_identity_residual"] <= 1e-9

    cs = smdlab.cs_demo(n=10, m=20, k=0)
    assert cs["success"]


if __name__ == "__main__":
    check_potential()
    check_run_and_projection()
    check_config_and_experiments()
    print("smoke test passed:", ", ".join(smdlab.potential_kinds()))

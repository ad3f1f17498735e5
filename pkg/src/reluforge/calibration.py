"""One-off calibration of the frozen constants used by dimension audits.

Run ``python3 -m reluforge.calibration`` to recompute
``reluforge/data/constants.json``.  Each constant is the largest observed
ratio ``value / formula`` over a fixed grid of constructions; audits then
allow ``HEADROOM`` times that.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from reluforge import geometry as geo
from reluforge import primitives as pr
from reluforge import rates as rt
from reluforge.network import metrics

SQUARE_EPS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
RECIPROCAL_GRID = tuple((a, e) for a in (1.5, 2.0, 3.0, 4.0) for e in (1e-2, 1e-3))
MODEL1_FRACTIONS = (0.9, 0.6, 0.4, 0.25)
BALANCE_GRID = tuple((al, d, D) for al in (0.5, 1.0) for d in (1, 2) for D in (10, 100))
BALANCE_N = (1e4, 1e6)


def square_depth_ratio(eps: float) -> float:
    return metrics(pr.square_net(eps)).depth / math.log2(1 / eps)


def reciprocal_depth_ratio(a: float, eps: float) -> float:
    return metrics(pr.reciprocal_net(a, eps)).depth / (a * a * math.log(a / eps) ** 2)


def balance_ratio(alpha: float, d: float, D: int, N: float) -> float:
    """``(log covering / N) / (D log^3 D eps_N^(2 alpha))`` at resolution 1/N."""
    s = rt.schedule("model1", "regression", N, alpha, d, D)
    cover = rt.covering_bound(s.L_N, s.W_N, s.P_N, s.B_N, 1.0 / N)
    return (cover / N) / (D * math.log(D) ** 3 * s.eps_N ** (2 * alpha))


def acceptance_circle() -> geo.ManifoldSpec:
    """Radius-0.3 circle in R^3, randomly rotated and centered in the unit cube."""
    return geo.circle(0.3, ambient_dim=3, seed=1, offset=0.5)


def kink_g(M: geo.ManifoldSpec):
    """``0.5 + 0.5 |y_1| / r`` in canonical coordinates; Lipschitz 0.5/r along the circle."""
    r = M.shape.extent
    return (lambda V: 0.5 + 0.5 * np.abs(M.to_canonical(V)[:, 1]) / r), 0.5 / r


def kink_points(M: geo.ManifoldSpec, q: float, halfwidth: float, n: int = 400) -> np.ndarray:
    """Tube points around the two kinks of :func:`kink_g` (where ``y_1 = 0``).

    ``n`` angles per kink span a geodesic window of ``+-halfwidth``, each at
    three radial offsets (inner tube edge, manifold, outer tube edge).
    """
    r = M.shape.extent
    dth = np.linspace(-halfwidth / r, halfwidth / r, n)
    th = np.concatenate([dth, math.pi + dth])
    rings = [r * (1 + s) for s in (-0.9 * q, 0.0, 0.9 * q)]
    Y = np.vstack([rho * np.column_stack([np.cos(th), np.sin(th)]) for rho in rings])
    return M.embed(Y)


def model1_sweep_nets(fractions=MODEL1_FRACTIONS, q: float = 0.3, eps_per_delta: float = 20.0, seed: int = 0):
    """Yield ``(delta, eps, spec, net)`` for the Model-1 circle sweep."""
    from reluforge.pou import Model1Spec, make_pou, max_delta, model1_net

    M = acceptance_circle()
    g, L = kink_g(M)
    tau = geo.global_reach(M)
    for f in fractions:
        delta = max_delta(M, q) * f
        eps = eps_per_delta * delta / tau
        pou = make_pou(M, q, delta, seed=seed)
        spec = Model1Spec(pou, g(pou.centers), L_const=L)
        yield delta, eps, spec, model1_net(spec, eps, seed=seed)


def calibrate() -> dict:
    from reluforge.cli import DEFAULTS, build_construction
    from reluforge.pou import model1_error_bound

    out = {
        "square_depth": max(square_depth_ratio(e) for e in SQUARE_EPS),
        "reciprocal_depth": max(reciprocal_depth_ratio(a, e) for a, e in RECIPROCAL_GRID),
        "rates_balance": max(balance_ratio(al, d, D, N) for al, d, D in BALANCE_GRID for N in BALANCE_N),
    }
    depth, params, eta_depth = [], [], []
    for _, eps, spec, net in model1_sweep_nets():
        bound = model1_error_bound(spec, eps)
        m = metrics(net)
        D = spec.pou.manifold.ambient_dim
        depth.append(m.depth / (math.log(D) * math.log(1 / bound) ** 2))
        params.append(m.nonzero_params / (D * math.log(D) * math.log(1 / bound) ** 2 / bound))
    for eps in (0.1, 0.05, 0.03):
        cfg = json.loads(json.dumps(DEFAULTS))
        cfg["model1"]["eps"] = eps
        built = build_construction(cfg, "eta")
        eta_depth.append(metrics(built.net).depth / math.log(1 / eps) ** 2)
        built = build_construction(cfg, "model1")
        bound = built.bound
        m = metrics(built.net)
        depth.append(m.depth / (math.log(3) * math.log(1 / bound) ** 2))
        params.append(m.nonzero_params / (3 * math.log(3) * math.log(1 / bound) ** 2 / bound))
    out["model1_depth"] = max(depth)
    out["model1_params.circle"] = max(params)
    out["eta_depth"] = max(eta_depth)
    m2 = []
    for sets, eps in (("random", 1e-2), ("random", 1e-3), ("curve", 4e-2), ("curve", 5e-3)):
        cfg = json.loads(json.dumps(DEFAULTS))
        cfg["model2"].update({"sets": sets, "eps": eps})
        if sets == "curve":
            cfg["model2"].update({"n_points": 5000, "ambient_dim": 3})
        built = build_construction(cfg, "model2")
        m2.append(metrics(built.net).depth / math.log(built.extras["spec"].ambient_dim / eps))
    out["model2_depth"] = max(m2)
    return {k: _round_up(v) for k, v in sorted(out.items())}


def _round_up(v: float) -> float:
    """Six significant digits, never below ``v``."""
    r = float(f"{v:.6g}")
    return r if r >= v else float(f"{v * (1 + 1e-6):.6g}")


def main() -> None:
    consts = calibrate()
    path = Path(str(resources.files("reluforge").joinpath("data/constants.json")))
    path.write_text(json.dumps(consts, indent=2, sort_keys=True) + "\n")
    print(json.dumps(consts, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()

"""Closed-form statistical schedules and the covering-number bound.

All logarithms are natural and all proportionality constants are 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

MODELS = ("model1", "model2")
TASKS = ("regression", "classification")


def covering_bound(L: float, W: float, P: float, B: float, delta: float) -> float:
    """Log covering number bound ``2 P L log((B v 1)(W + 1)) + P log(L / delta)``."""
    for name, value in (("L", L), ("W", W), ("P", P), ("B", B)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return 2 * P * L * math.log(max(B, 1.0) * (W + 1)) + P * math.log(L / delta)


@dataclass(frozen=True)
class Schedule:
    model: str
    task: str
    N: float
    alpha: float
    d: float
    D: int
    beta: float | None
    eps_N: float
    L_N: float
    W_N: float
    P_N: float
    B_N: float
    predicted_risk: float
    risk_exponent: float
    eps_exponent: float
    log_power: float

    def as_dict(self) -> dict:
        return asdict(self)


def exponents(model: str, task: str, alpha: float, d: float, beta: float | None = None) -> dict:
    """Rate exponents: ``eps_N = log(N)^eps_log N^-eps_exp``, ``risk ~ log(N)^risk_log N^-risk_exp``."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if d < 0:
        raise ValueError("d must be nonnegative")
    # effective dimension of the approximation rate
    m = d if model == "model1" else max(1.0, alpha * d)
    c = 5.0 if model == "model1" else 3.0
    if task == "regression":
        denom = 2 * alpha + m
        return {"eps_exp": 1 / denom, "eps_log": c / denom, "risk_exp": 2 * alpha / denom, "risk_log": 2 * alpha * c / denom, "m": m}
    if beta is None:
        raise ValueError("classification needs the margin exponent beta")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if math.isinf(beta):
        return {"eps_exp": 0.0, "eps_log": 0.0, "risk_exp": 1.0, "risk_log": c, "m": m}
    denom = alpha * (beta + 2) + m
    return {
        "eps_exp": 1 / denom,
        "eps_log": c / denom,
        "risk_exp": alpha * (beta + 1) / denom,
        "risk_log": c * alpha * (beta + 1) / denom,
        "m": m,
    }


def schedule(model: str, task: str, N: float, alpha: float, d: float, D: int, beta: float | None = None) -> Schedule:
    """Accuracy, network dimensions and predicted risk for sample size N."""
    if not N >= 2:
        raise ValueError(f"N must be >= 2, got {N}")
    if D < 2:
        raise ValueError("D must be >= 2 so that log(D) > 0")
    ex = exponents(model, task, alpha, d, beta)
    logN = math.log(N)
    eps = logN ** ex["eps_log"] * N ** (-ex["eps_exp"])
    inv = 1.0 / eps
    logD = math.log(D)
    m = ex["m"]
    if model == "model1":
        L = logD * math.log(inv) ** 2
        P = D * logD * math.log(inv) ** 2 * inv**d
        W = D * inv**d
        B = inv**2
    else:
        L = math.log(D * inv)
        P = D * math.log(D * inv) * inv**m
        W = D * inv**m
        B = 1.0 if task == "regression" else inv
    risk = D * logD**3 * logN ** ex["risk_log"] * N ** (-ex["risk_exp"])
    return Schedule(model, task, float(N), alpha, d, D, beta, eps, L, W, P, B, risk, ex["risk_exp"], ex["eps_exp"], ex["risk_log"])


def parse_grid(text: str, points_per_decade: int = 1) -> list:
    """Parse ``"1e3:1e7"`` into a geometric grid (one point per decade by default) or ``"a,b,c"`` into a list."""
    if ":" in text:
        lo, hi = (float(t) for t in text.split(":", 1))
        if not 0 < lo <= hi:
            raise ValueError(f"bad grid {text!r}")
        count = int(round(math.log10(hi / lo) * points_per_decade)) + 1
        if count == 1:
            return [lo]
        return [float(f"{lo * (hi / lo) ** (i / (count - 1)):.12g}") for i in range(count)]
    return [float(t) for t in text.split(",") if t.strip()]

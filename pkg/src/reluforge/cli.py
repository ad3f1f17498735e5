"""Command-line front end: build, verify, sweep, rates and primitives.

Configuration is a TOML or JSON file with sections ``[manifold]``,
``[model1]``, ``[model2]``, ``[primitives]``, ``[verify]``, ``[sweep]`` and
``[rates]``; ``--set section.key=value`` overrides single fields.  Exit codes:
0 when every requested check passes, 1 when a check fails, 2 for bad input.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from reluforge import geometry as geo
from reluforge import network as nw
from reluforge import primitives as pr
from reluforge import rates as rt
from reluforge import verify as vf
from reluforge.distance import DistanceModelSpec, model2_net
from reluforge.pou import (
    Model1Spec,
    SpecViolation,
    eta_net,
    eta_reference,
    localization_radius,
    make_pou,
    model1_error_bound,
    model1_net,
    projection_net,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXACT_TOL = 1e-12
CONSTRUCTIONS = (
    "abs", "l1_norm", "min", "sign", "clamp", "square", "sq_norm", "mult",
    "reciprocal", "l1_normalize", "holder", "affine", "identity", "eta", "model1", "projection", "model2",
)
MANIFOLD_CONSTRUCTIONS = ("eta", "model1", "projection")

DEFAULTS = {
    "construction": None,
    "manifold": {"kind": "circle", "ambient_dim": 3, "radius": 0.3, "seed": 1, "offset": 0.5},
    "model1": {"q": 0.3, "delta": None, "eps": 0.05, "eps_per_delta": None, "g": "kink", "g_values": None, "probe_density": None},
    "model2": {
        "sets": "random", "n_points": 10, "ambient_dim": 20, "set_seed": 42, "g": "cosine",
        "d": None, "delta0": None, "eps": 1e-3,
    },
    "primitives": {"eps": 1e-3, "D": 3, "R": 1.0, "a": 2.0, "K": 7, "holder_eps": 1e-2},
    "verify": {"n": 10000, "seed": 0, "lipschitz_pairs": 10000, "metric_samples": 10000, "p": None, "properties": True},
    "sweep": {"param": "delta", "values": [], "fit_against": "error", "target_slope": None, "tolerance": 0.3},
    "rates": {"model": "model1", "task": "regression", "alpha": 1.0, "d": 1.0, "D": 10, "beta": None, "N": "1e3:1e7"},
}

# g catalogs: model1 functions act on canonical coordinates y of manifold points,
# model2 functions on [0, 1]; entries are (function, alpha, Hoelder constant)
MODEL1_G = {
    "kink": lambda Y, ext: (0.5 + 0.5 * np.abs(Y[:, 1]) / ext, 0.5 / ext),
    "linear": lambda Y, ext: (0.5 + 0.5 * Y[:, 0] / ext, 0.5 / ext),
}
MODEL2_G = {
    "cosine": (lambda t: 0.5 * (1 - np.cos(np.pi * t)), 1.0, math.pi / 2),
    "sqrt": (lambda t: np.sqrt(np.clip(t, 0, None)), 0.5, 1.0),
    "linear": (lambda t: np.asarray(t, dtype=np.float64), 1.0, 1.0),
}


class ConfigError(Exception):
    """Invalid configuration; ``problems`` holds ``(dotted_key, message)`` pairs."""

    def __init__(self, problems):
        super().__init__("; ".join(f"{k}: {m}" for k, m in problems))
        self.problems = list(problems)


# --- configuration ------------------------------------------------------------


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config_text(text: str, fmt: str) -> dict:
    if fmt == "json":
        return json.loads(text)
    return tomllib.loads(text)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError([(item, "override must look like section.key=value")])
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([(key, "override path crosses a non-section value")])
        node[parts[-1]] = _parse_value(raw)
    return cfg


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_config(cfg: dict) -> list:
    """List of ``(dotted_key, message)`` problems; empty when the config is usable."""
    bad = []

    def need(cond, key, msg):
        if not cond:
            bad.append((key, msg))

    known = set(DEFAULTS)
    for k in cfg:
        need(k in known, k, f"unknown section; expected one of {sorted(known)}")
    c = cfg.get("construction")
    need(c is None or c in CONSTRUCTIONS, "construction", f"unknown construction {c!r}")
    m = cfg["manifold"]
    need(m.get("kind") in geo.KINDS, "manifold.kind", f"must be one of {list(geo.KINDS)}")
    need(isinstance(m.get("ambient_dim"), int) and m["ambient_dim"] >= 2, "manifold.ambient_dim", "must be an integer >= 2")
    m1 = cfg["model1"]
    need(_is_num(m1.get("q")) and 0 <= m1["q"] < 1, "model1.q", f"must lie in [0, 1), got {m1.get('q')!r}")
    need(_is_num(m1.get("eps")) and 0 < m1["eps"] < 0.5, "model1.eps", "must lie in (0, 0.5)")
    need(m1.get("delta") is None or (_is_num(m1["delta"]) and m1["delta"] > 0), "model1.delta", "must be positive")
    need(m1.get("g") in MODEL1_G, "model1.g", f"must be one of {sorted(MODEL1_G)}")
    m2 = cfg["model2"]
    sets = m2.get("sets")
    csv_paths = [sets] if isinstance(sets, str) and sets.endswith(".csv") else sets if isinstance(sets, list) else []
    need(sets in ("random", "curve") or (csv_paths and all(isinstance(x, str) for x in csv_paths)), "model2.sets", "must be 'random', 'curve' or CSV point-cloud path(s)")
    need(isinstance(m2.get("n_points"), int) and m2["n_points"] >= 1, "model2.n_points", "must be a positive integer")
    need(isinstance(m2.get("ambient_dim"), int) and m2["ambient_dim"] >= 2, "model2.ambient_dim", "must be an integer >= 2")
    need(m2.get("g") in MODEL2_G, "model2.g", f"must be one of {sorted(MODEL2_G)}")
    need(_is_num(m2.get("eps")) and 0 < m2["eps"] < 1, "model2.eps", "must lie in (0, 1)")
    p = cfg["primitives"]
    need(_is_num(p.get("eps")) and 0 < p["eps"] < 0.5, "primitives.eps", "must lie in (0, 0.5)")
    need(isinstance(p.get("D"), int) and p["D"] >= 1, "primitives.D", "must be a positive integer")
    need(isinstance(p.get("K"), int) and p["K"] >= 2, "primitives.K", "must be an integer >= 2")
    need(_is_num(p.get("a")) and p["a"] >= 1, "primitives.a", "must be >= 1")
    need(_is_num(p.get("R")) and p["R"] > 0, "primitives.R", "must be positive")
    need(_is_num(p.get("holder_eps")) and 0 < p["holder_eps"] < 1, "primitives.holder_eps", "must lie in (0, 1)")
    v = cfg["verify"]
    need(isinstance(v.get("n"), int) and v["n"] >= 1, "verify.n", "must be a positive integer")
    need(isinstance(v.get("seed"), int) and v["seed"] >= 0, "verify.seed", "must be a nonnegative integer")
    need(v.get("p") is None or (_is_num(v["p"]) and m1.get("q", 0) <= v["p"] < 1), "verify.p", "must lie in [q, 1)")
    s = cfg["sweep"]
    need(s.get("param") in ("eps", "delta", "N"), "sweep.param", "must be eps, delta or N")
    need(isinstance(s.get("values"), (list, str)), "sweep.values", "must be a list or an N grid string")
    need(s.get("fit_against") in ("error", "bound"), "sweep.fit_against", "must be 'error' or 'bound'")
    r = cfg["rates"]
    need(r.get("model") in rt.MODELS, "rates.model", f"must be one of {list(rt.MODELS)}")
    need(r.get("task") in rt.TASKS, "rates.task", f"must be one of {list(rt.TASKS)}")
    need(_is_num(r.get("alpha")) and 0 < r["alpha"] <= 1, "rates.alpha", "must lie in (0, 1]")
    need(_is_num(r.get("d")) and r["d"] >= 0, "rates.d", "must be nonnegative")
    need(isinstance(r.get("D"), int) and r["D"] >= 2, "rates.D", "must be an integer >= 2")
    need(r.get("task") != "classification" or (r.get("beta") is not None), "rates.beta", "classification needs beta")
    return bad


def line_of(text: str, dotted: str) -> int | None:
    """Line number (1-based) where ``dotted`` is assigned in a TOML or JSON config text."""
    parts = dotted.split(".")
    section, leaf = (parts[0], parts[-1]) if len(parts) > 1 else (None, parts[0])
    current = None
    json_section_line = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]") and not s.startswith("[["):
            current = s[1:-1].strip()
            continue
        if section is not None and s.startswith(f'"{section}"'):
            json_section_line = i
        key = s.split("=", 1)[0].strip().strip('"') if "=" in s else None
        if key == leaf and current == section:
            return i
        if s.startswith(f'"{leaf}"') and (section is None or json_section_line is not None):
            return i
    return None


def load_config(path: str | None, overrides=None) -> tuple:
    """Return ``(config, text, origin)`` with defaults filled in; raises :class:`ConfigError`."""
    text, origin = "", "<defaults>"
    user = {}
    if path:
        origin = path
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([("config", f"cannot read: {exc.strerror}")]) from exc
        fmt = "json" if path.endswith(".json") else "toml"
        try:
            user = parse_config_text(text, fmt)
        except json.JSONDecodeError as exc:
            raise ConfigError([(f"line {exc.lineno}", exc.msg)]) from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([("syntax", str(exc))]) from exc
    cfg = _merge(DEFAULTS, apply_overrides(user, overrides))
    return cfg, text, origin


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def format_problems(problems, origin: str, text: str, overrides=None) -> list:
    keys = {o.split("=", 1)[0].strip() for o in overrides or [] if "=" in o}
    lines = []
    for key, msg in problems:
        if key in keys:
            lines.append(f"--set {key}: {msg}")
            continue
        if key.startswith("line "):
            lines.append(f"{origin}:{key[5:]}: {msg}")
            continue
        ln = line_of(text, key) if text else None
        lines.append(f"{origin}:{ln}: {key}: {msg}" if ln else f"{origin}: {key}: {msg}")
    return lines


# --- constructions ------------------------------------------------------------


@dataclass
class Built:
    """A network together with everything needed to verify it."""

    name: str
    net: nw.ReluNetwork
    reference: Callable
    sampler: object
    bound: float
    norm: str = "inf"
    special: np.ndarray | None = None
    audits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _box(dim, low, high):
    return vf.BoxSampler(dim, low, high)


def primitive_cases(eps: float, D: int = 3, R: float = 1.0, a: float = 2.0, K: int = 7, holder_eps: float = 1e-2) -> dict:
    """The primitive zoo: name -> zero-argument function returning :class:`Built`.

    The Hoelder row (``g = sqrt``, alpha = 1/2) has its own accuracy because its
    uniform grid has ``(2 / holder_eps)^2`` intervals.
    """
    rng = np.random.default_rng(42)
    A, b = rng.standard_normal((2, 3)), rng.standard_normal(2)
    lo_a = 1.0 / a

    def ell1_normalize():
        def to_annulus(U):
            X = 0.05 + U
            return X / X.sum(axis=1, keepdims=True) * (lo_a + (a - lo_a) * U[:, :1])

        net = pr.l1_normalize_net(5, a, eps)
        return Built("l1_normalize", net, lambda X: X / np.abs(X).sum(axis=1, keepdims=True), vf.MappedSampler(5, to_annulus), eps)

    log2K = math.ceil(math.log2(K))
    return {
        "abs": lambda: Built("abs", pr.abs_net(1.0), lambda X: np.abs(X), _box(1, -1, 1), EXACT_TOL),
        "l1_norm": lambda: Built("l1_norm", pr.l1_norm_net(D), lambda X: np.abs(X).sum(axis=1), _box(D, -1, 1), EXACT_TOL),
        "min": lambda: Built(
            "min", pr.min_net(K), lambda X: X.min(axis=1), _box(K, -1, 1), EXACT_TOL,
            audits={"P": 11 * K * log2K, "L": 2 * log2K},
        ),
        "sign": lambda: Built(
            "sign", pr.sign_net(eps), lambda X: np.clip(X / eps, -1, 1), _box(1, -1, 1), EXACT_TOL,
            special=np.array([[-eps], [0.0], [eps]]), audits={"L": 2, "W": 2, "P": 7, "B": 1 / eps},
        ),
        "clamp": lambda: Built("clamp", pr.clamp_net(), lambda X: np.minimum(X, 1.0), _box(1, -1, 2), EXACT_TOL),
        "affine": lambda: Built("affine", nw.affine_net(A, b), lambda X: X @ A.T + b, _box(3, -1, 1), EXACT_TOL),
        "identity": lambda: Built("identity", nw.identity_net(D), lambda X: X, _box(D, -1, 1), EXACT_TOL),
        "square": lambda: Built(
            "square", pr.square_net(eps), lambda X: X**2, vf.GridSampler(0, 1), eps,
            audits={"L": ("square_depth", math.log2(1 / eps)), "W": 3, "B": 1},
        ),
        "sq_norm": lambda: Built(
            "sq_norm", pr.sq_norm_net(D, R, eps), lambda X: np.sum(X * X, axis=1), _box(D, -R, R), eps,
        ),
        "mult": lambda: Built(
            "mult", pr.mult_net(D, a, eps), lambda X: X[:, :D] * X[:, D:], _box(D + 1, -a, a), eps,
        ),
        "reciprocal": lambda: Built(
            "reciprocal", pr.reciprocal_net(a, eps), lambda X: 1 / X, vf.GridSampler(lo_a, a), eps,
            audits={"L": ("reciprocal_depth", a * a * math.log(a / eps) ** 2)},
        ),
        "l1_normalize": ell1_normalize,
        "holder": lambda: Built(
            "holder", pr.holder_net(np.sqrt, 0.5, 1.0, holder_eps), lambda X: np.sqrt(X), vf.GridSampler(0, 1), holder_eps,
        ),
    }


def _manifold(cfg):
    return geo.manifold_from_config(cfg["manifold"])


def _model1_setup(cfg):
    M = _manifold(cfg)
    m1 = cfg["model1"]
    q = float(m1["q"])
    tau = geo.global_reach(M)
    delta = m1["delta"] if m1["delta"] is not None else (1 - q) ** 2 * tau / 300
    eps = float(m1["eps"]) if m1.get("eps_per_delta") is None else float(m1["eps_per_delta"]) * delta / tau
    return M, q, float(delta), eps


def _tube_special(M, q, centers, seed, n_shell=256):
    """Net centers and points on the outer shell of the tube."""
    ts = geo.tube_sample(M, q, n_shell, seed + 1)
    U = ts.x - ts.v
    norm = np.linalg.norm(U, axis=1)
    cap = q * M.shape.reach(ts.params) * (1 - 1e-9)
    scale = np.divide(cap, norm, out=np.zeros_like(norm), where=norm > 0)
    return np.vstack([centers, ts.v + U * scale[:, None]])


def _model1_g(cfg, M):
    fn = MODEL1_G[cfg["model1"]["g"]]
    ext = M.shape.extent

    def g(V):
        return np.clip(fn(M.to_canonical(V), ext)[0], 0, 1)

    return g, fn(np.zeros((1, max(2, M.shape.k))), ext)[1]


def _model2_spec(cfg):
    m2 = cfg["model2"]
    D = m2["ambient_dim"]
    rng = np.random.default_rng(m2["set_seed"])
    if m2["sets"] not in ("random", "curve"):
        paths = [m2["sets"]] if isinstance(m2["sets"], str) else list(m2["sets"])
        try:
            sets = [np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2)) for path in paths]
        except (OSError, ValueError) as exc:
            raise ConfigError([("model2.sets", f"cannot load point cloud: {exc}")]) from exc
        g, alpha, L = MODEL2_G[m2["g"]]
        d = 0 if m2["d"] is None else m2["d"]
        return DistanceModelSpec(sets, [g] * len(sets), alpha=alpha, L_const=L, d=d, delta0=m2["delta0"] or 0.1)
    if m2["sets"] == "random":
        C = rng.random((m2["n_points"], D))
        d = 0 if m2["d"] is None else m2["d"]
        if m2["delta0"] is None and C.shape[0] > 1:
            from scipy.spatial.distance import pdist

            delta0 = 0.5 * pdist(C).min() / math.sqrt(D)
        else:
            delta0 = m2["delta0"] or 0.1
    else:
        s = np.linspace(0, 1, m2["n_points"], endpoint=False)
        C = np.full((s.size, D), 0.5)
        C[:, 0] += 0.3 * np.cos(2 * np.pi * s)
        C[:, 1] += 0.3 * np.sin(2 * np.pi * s)
        d = 1 if m2["d"] is None else m2["d"]
        delta0 = m2["delta0"] or 0.1
    g, alpha, L = MODEL2_G[m2["g"]]
    return DistanceModelSpec([C], [g], alpha=alpha, L_const=L, d=d, delta0=delta0)


def build_construction(cfg: dict, name: str, seed: int = 0) -> Built:
    """Build the named construction (one builder call) with its verification data."""
    if name in ("eta", "model1", "projection"):
        M, q, delta, eps = _model1_setup(cfg)
        if name == "projection":
            net = projection_net(M, q, eps, delta=delta, probe_density=cfg["model1"]["probe_density"], seed=seed)
            Zmax = 1.0 + float(np.abs(M.offset).max()) + M.shape.extent
            bound = localization_radius(q, delta) + eps * Zmax
            special = _tube_special(M, q, np.empty((0, M.ambient_dim)), seed)
            return Built(name, net, lambda X: geo.project(M, X), vf.TubeSampler(M, q), bound, special=special, extras={"manifold": M, "q": q, "delta": delta, "eps": eps})
        pou = make_pou(M, q, delta, probe_density=cfg["model1"]["probe_density"], seed=seed)
        special = _tube_special(M, q, pou.centers, seed)
        audit_eps = max(eps, 1e-12)
        if name == "eta":
            net = eta_net(pou, eps, seed=seed)
            ref = lambda X: eta_reference(pou, X)[1].toarray()
            audits = {"L": ("eta_depth", math.log(1 / audit_eps) ** 2)}
            return Built(name, net, ref, vf.TubeSampler(M, q), eps, norm="l1", special=special, audits=audits, extras={"pou": pou})
        g, L = _model1_g(cfg, M)
        g_values = cfg["model1"].get("g_values")
        if g_values is not None and len(g_values) != len(pou):
            raise ConfigError([("model1.g_values", f"{len(g_values)} values for {len(pou)} centers")])
        spec = Model1Spec(pou, g(pou.centers) if g_values is None else g_values, L_const=L)
        net = model1_net(spec, eps, seed=seed)
        bound = model1_error_bound(spec, eps)
        D, d = M.ambient_dim, M.intrinsic_dim
        audits = {
            "L": ("model1_depth", math.log(D) * math.log(1 / bound) ** 2),
            "P": (f"model1_params.{M.kind}", D * math.log(D) * math.log(1 / bound) ** 2 * bound ** (-d)),
        }
        return Built(name, net, lambda X: g(geo.project(M, X)), vf.TubeSampler(M, q), bound, special=special, audits=audits, extras={"pou": pou})
    if name == "model2":
        spec = _model2_spec(cfg)
        eps = float(cfg["model2"]["eps"])
        net = model2_net(spec, eps)
        target = eps**spec.alpha
        D = spec.ambient_dim
        m = max(1.0, spec.alpha * spec.d)
        audits = {"B": 1.0, "L": ("model2_depth", math.log(D / eps))}
        special = np.vstack(spec.sets)
        return Built(name, net, spec, vf.BoxSampler(D), target, special=special, audits=audits, extras={"spec": spec, "m": m})
    p = cfg["primitives"]
    cases = primitive_cases(p["eps"], p["D"], p["R"], p["a"], p["K"], p["holder_eps"])
    if name not in cases:
        raise ConfigError([("construction", f"unknown construction {name!r}")])
    return cases[name]()


# --- artifacts ----------------------------------------------------------------


class ArtifactWriter:
    """Single writer for everything under the output directory, plus the manifest."""

    def __init__(self, out: str | None, cfg: dict, command: str):
        self.out = Path(out) if out else None
        self.files = {}
        self.cfg = cfg
        self.command = command
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, data):
        if isinstance(data, str):
            data = data.encode()
        self.files[name] = hashlib.sha256(data).hexdigest()
        if self.out:
            (self.out / name).write_bytes(data)

    def close(self):
        if not self.out:
            return
        manifest = {"command": self.command, "config_sha256": config_hash(self.cfg), "files": dict(sorted(self.files.items()))}
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _print_rows(rows, stream=None):
    for check, value, bound, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'} {check} value={value} bound={bound}", file=stream or sys.stdout)


# --- commands -----------------------------------------------------------------


def verify_built(built: Built, cfg: dict, seed: int, jobs: int, constants=None) -> vf.VerificationReport:
    v = cfg["verify"]
    report = vf.VerificationReport(seed=seed)
    res = vf.sup_error(built.net, built.reference, built.sampler, v["n"], seed=seed, special=built.special, norm=built.norm, jobs=jobs)
    report.add_sup(res, built.bound)
    consts = vf.load_constants() if constants is None else constants
    usable = {k: s for k, s in built.audits.items() if not isinstance(s, tuple) or s[0] in consts}
    report.dimension_audit = vf.dimension_audit(built.net, usable, consts, name=built.name)
    if built.name in MANIFOLD_CONSTRUCTIONS and v.get("properties", True):
        M, q = _manifold(cfg), float(cfg["model1"]["q"])
        p = v["p"] if v["p"] is not None else 0.5 * (1 + q)
        report.property_results.append(vf.lipschitz_check(M, q, v["lipschitz_pairs"], seed))
        report.property_results.append(vf.metric_equivalence_check(M, q, p, v["metric_samples"], seed))
        if "pou" in built.extras:
            report.property_results.append(vf.pou_check(built.extras["pou"], v["n"], seed))
    return report


def cmd_build(cfg, args, writer) -> int:
    name = cfg["construction"]
    built = build_construction(cfg, name, seed=args.seed)
    writer.write(f"{name}.json", nw.serialize(built.net))
    m = nw.metrics(built.net)
    print(f"built {name}: L={m.depth} W={m.width} P={m.nonzero_params} B={m.weight_bound:.6g}")
    return 0


def cmd_verify(cfg, args, writer) -> int:
    name = cfg["construction"]
    built = build_construction(cfg, name, seed=args.seed)
    report = verify_built(built, cfg, args.seed, args.jobs)
    writer.write("report.json", report.to_json() + "\n")
    writer.write("report.csv", report.to_csv())
    _print_rows(report.rows())
    if not report.passed:
        print("failing checks: " + ", ".join(report.failures()), file=sys.stderr)
        return 1
    return 0


def cmd_primitives(cfg, args, writer) -> int:
    p = cfg["primitives"]
    eps = args.eps if args.eps is not None else p["eps"]
    cases = primitive_cases(eps, p["D"], p["R"], p["a"], p["K"], p["holder_eps"])
    consts = vf.load_constants()
    rows, table = [], []
    for name, make in cases.items():
        built = make()
        res = vf.sup_error(built.net, built.reference, built.sampler, cfg["verify"]["n"], seed=args.seed, special=built.special, norm=built.norm, jobs=args.jobs)
        ok = res.estimate <= built.bound
        rows.append((f"{name}.sup_error", res.estimate, built.bound, ok))
        audit = vf.dimension_audit(built.net, {k: s for k, s in built.audits.items() if not isinstance(s, tuple) or s[0] in consts}, consts, name=name)
        rows.extend((r.check, r.value, r.bound, r.passed) for r in audit)
        m = nw.metrics(built.net)
        table.append((name, res.estimate, built.bound, m.depth, m.width, m.nonzero_params, m.weight_bound, ok and all(r.passed for r in audit)))
    writer.write("primitives.csv", _csv(["construction", "sup_error", "bound", "L", "W", "P", "B", "pass"], table))
    _print_rows(rows)
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        print("failing checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def _rates_rows(r: dict, grid) -> list:
    rows = []
    for N in grid:
        s = rt.schedule(r["model"], r["task"], N, r["alpha"], r["d"], r["D"], r["beta"])
        rows.append((s.N, s.eps_N, s.L_N, s.W_N, s.P_N, s.B_N, s.predicted_risk, s.risk_exponent, s.log_power, s.eps_exponent))
    return rows


RATES_HEADER = ["N", "eps_N", "L_N", "W_N", "P_N", "B_N", "predicted_risk", "exponent", "log_power", "eps_exponent"]


def cmd_rates(cfg, args, writer) -> int:
    r = dict(cfg["rates"])
    for key in ("model", "task", "alpha", "d", "D", "beta", "N"):
        val = getattr(args, f"r_{key}", None)
        if val is not None:
            r[key] = val
    grid = rt.parse_grid(str(r["N"])) if isinstance(r["N"], str) else [float(x) for x in r["N"]]
    rows = _rates_rows(r, grid)
    text = _csv(RATES_HEADER, rows)
    writer.write("rates.csv", text)
    writer.write("rates.json", json.dumps([dict(zip(RATES_HEADER, row)) for row in rows], indent=2) + "\n")
    sys.stdout.write(text)
    return 0


def cmd_sweep(cfg, args, writer) -> int:
    s = cfg["sweep"]
    name = cfg["construction"]
    if s["param"] == "N":
        r = cfg["rates"]
        grid = rt.parse_grid(s["values"]) if isinstance(s["values"], str) else [float(x) for x in s["values"]]
        rows = _rates_rows(r, grid)
        writer.write("sweep.csv", _csv(RATES_HEADER, rows))
        fit = vf.rate_fit([(row[0], row[6]) for row in rows])
        target = -rows[0][7]
        sys.stdout.write(_csv(RATES_HEADER, rows))
    else:
        section = "primitives" if name not in ("eta", "model1", "projection", "model2") else ("model2" if name == "model2" else "model1")
        rows, pairs = [], []
        for value in s["values"]:
            c = copy.deepcopy(cfg)
            c[section][s["param"]] = value
            built = build_construction(c, name, seed=args.seed)
            res = vf.sup_error(built.net, built.reference, built.sampler, c["verify"]["n"], seed=args.seed, special=built.special, norm=built.norm, jobs=args.jobs)
            m = nw.metrics(built.net)
            rows.append((value, res.estimate, built.bound, m.depth, m.width, m.nonzero_params, m.weight_bound, res.estimate <= built.bound))
            pairs.append((res.estimate if s["fit_against"] == "error" else built.bound, m.nonzero_params))
            print(f"{s['param']}={value} sup_error={res.estimate:.6g} bound={built.bound:.6g} P={m.nonzero_params}")
        writer.write("sweep.csv", _csv([s["param"], "sup_error", "bound", "L", "W", "P", "B", "pass"], rows))
        fit = vf.rate_fit(pairs)
        target = s["target_slope"]
        if any(not r[-1] for r in rows):
            print("failing checks: sup_error", file=sys.stderr)
            return 1
    writer.write("sweep.json", json.dumps({"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}, indent=2, sort_keys=True) + "\n")
    print(f"rate_fit slope={fit.slope:.6g} intercept={fit.intercept:.6g} r2={fit.r2:.6g}")
    if target is not None and s["param"] != "N" and abs(fit.slope - target) > s["tolerance"]:
        print(f"failing checks: rate_fit_slope ({fit.slope:.4g} vs {target} +- {s['tolerance']})", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "sweep": cmd_sweep, "rates": cmd_rates, "primitives": cmd_primitives}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--out", help="output directory for artifacts and the manifest")
    common.add_argument("--seed", type=int, default=None, help="seed for samplers and net certification")
    common.add_argument("--jobs", type=int, default=None, help="evaluation threads (default: RELUFORGE_JOBS or 1)")
    common.add_argument("--eps", type=float, default=None, help="accuracy of the selected construction")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config field by dotted path")
    parser = argparse.ArgumentParser(prog="reluforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("build", "verify", "sweep"):
        sp_ = sub.add_parser(name, parents=[common])
        sp_.add_argument("--construction", choices=CONSTRUCTIONS)
    sub.add_parser("primitives", parents=[common])
    rp = sub.add_parser("rates", parents=[common])
    rp.add_argument("--model", dest="r_model", choices=rt.MODELS)
    rp.add_argument("--task", dest="r_task", choices=rt.TASKS)
    rp.add_argument("--alpha", dest="r_alpha", type=float)
    rp.add_argument("--d", dest="r_d", type=float)
    rp.add_argument("--D", dest="r_D", type=int)
    rp.add_argument("--beta", dest="r_beta", type=float)
    rp.add_argument("--N", dest="r_N", help="grid 'lo:hi' (one point per decade) or 'a,b,c'")
    return parser


def _eps_section(name) -> str:
    if name in ("eta", "model1", "projection"):
        return "model1"
    if name == "model2":
        return "model2"
    return "primitives"


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    origin, text = args.config or "<defaults>", ""
    if args.config and Path(args.config).is_file():
        text = Path(args.config).read_text()
    try:
        cfg, text, origin = load_config(args.config, args.overrides)
        if getattr(args, "construction", None):
            cfg["construction"] = args.construction
        if args.command in ("build", "verify", "sweep") and cfg["construction"] is None and not (args.command == "sweep" and cfg["sweep"]["param"] == "N"):
            raise ConfigError([("construction", "no construction selected (use --construction or set it in the config)")])
        if args.eps is not None:
            cfg[_eps_section(cfg["construction"])]["eps"] = args.eps
        if args.seed is not None:
            cfg["verify"]["seed"] = args.seed
        problems = validate_config(cfg)
        if problems:
            raise ConfigError(problems)
    except ConfigError as exc:
        for line in format_problems(exc.problems, origin, text, args.overrides):
            print(f"error: {line}", file=sys.stderr)
        return 2
    args.seed = cfg["verify"]["seed"]
    if args.jobs is None:
        args.jobs = int(os.environ.get("RELUFORGE_JOBS", "1") or 1)
    writer = ArtifactWriter(args.out, cfg, args.command)
    try:
        code = COMMANDS[args.command](cfg, args, writer)
    except ConfigError as exc:
        for line in format_problems(exc.problems, origin, text, args.overrides):
            print(f"error: {line}", file=sys.stderr)
        return 2
    except (SpecViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    writer.close()
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

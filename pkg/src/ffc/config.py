"""Problem configuration files (JSON, ``"version": 1``), builtin examples and sampling."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FinslerError, ParseError
from .frame import Chart
from .geodesic import IntegrationConfig, gauge_expression, initial_state
from .metric import FinslerMetric

VERSION = 1
_MASK64 = (1 << 64) - 1

DEFAULT_TOLERANCES = {
    "rank": 1e-9,
    "residual": 1e-8,
    "frame_singularity": 1e-12,
    "homogeneity": 1e-10,
}


class SplitMix64:
    """splitmix64 generator; ``uniform()`` uses the top 53 bits."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)


def _sphere_frame():
    return [["1", "0"], ["0", "sin(x0)"]]


def _identity(n):
    return [["1" if a == mu else "0" for mu in range(n)] for a in range(n)]


BUILTINS = {
    "flat2d": {
        "vielbein": _identity(2),
        "metric": "sqrt(th0^2 + th1^2)",
        "sample": {"x_box": [[-1, 1], [-1, 1]], "theta_box": [[-1, 1], [-1, 1]]},
        "geodesic": {"x0": [0.0, 0.0], "theta0": [1.0, 2.0], "s_max": 1.0},
    },
    "sphere2d": {
        "vielbein": _sphere_frame(),
        "metric": "sqrt(th0^2 + th1^2)",
        "sample": {"x_box": [[0.3, 2.8], [0.0, 6.283185307179586]], "theta_box": [[-1, 1], [-1, 1]]},
        "geodesic": {"x0": [math.pi / 2, 0.0], "theta0": [0.0, 1.0], "s_max": math.pi / 2, "samples": 201},
    },
    "hyperbolic2d": {
        "vielbein": [["1/x1", "0"], ["0", "1/x1"]],
        "metric": "sqrt(th0^2 + th1^2)",
        "sample": {"x_box": [[-1, 1], [0.5, 2.0]], "theta_box": [[-1, 1], [-1, 1]]},
        "geodesic": {"x0": [0.0, 1.0], "theta0": [1.0, 0.0], "s_max": 1.0},
    },
    "rindler2d": {
        "vielbein": [["x1", "0"], ["0", "1"]],
        "metric": "sqrt(th0^2 - th1^2)",
        "sample": {"x_box": [[-1, 1], [0.5, 2.0]], "theta_box": [[1, 2], [-0.5, 0.5]]},
        "geodesic": {"x0": [0.0, 1.0], "theta0": [1.2, 0.3], "s_max": 0.6, "samples": 201},
    },
    "degenerate3d": {
        "vielbein": _identity(3),
        "metric": "sqrt(th0^2 - th1^2)",
        "sample": {"x_box": [[-1, 1], [-1, 1], [-1, 1]], "theta_box": [[1, 2], [-0.5, 0.5], [-1, 1]]},
        "geodesic": {"x0": [0.0, 0.0, 0.0], "theta0": [1.0, 0.5, 0.3], "s_max": 1.0},
    },
    "randers-sphere": {
        "vielbein": _sphere_frame(),
        "metric": "sqrt(th0^2 + th1^2) + 0.1*th0",
        "sample": {"x_box": [[0.3, 2.8], [0.0, 6.283185307179586]], "theta_box": [[-1, 1], [-1, 1]]},
        "geodesic": {"x0": [math.pi / 2, 0.0], "theta0": [0.6, 0.8], "s_max": 1.0},
    },
}

# Not written by ``ffc examples``: their constraints are nonzero off the constraint surface,
# so a random-sample ``check`` fails by design.
EXTRA_BUILTINS = {
    "degenerate3d-twisted": {
        "vielbein": [["1", "0", "0"], ["0", "1", "-x0"], ["0", "0", "1"]],
        "metric": "sqrt(th0^2 - th1^2)",
        "gauge": {"lambdaI": "solve"},
        "sample": {"x_box": [[-1, 1], [-1, 1], [-1, 1]], "theta_box": [[1, 2], [-0.5, 0.5], [-1, 1]]},
        "geodesic": {"x0": [0.1, 0.2, 0.3], "theta0": [1.5, 0.0, 0.4], "s_max": 1.0},
    },
    "contact3d": {
        "vielbein": [["1", "0", "0.5*x1^2"], ["0", "1", "0"], ["0", "0", "1"]],
        "metric": "th0",
        "gauge": {"lambdaI": "solve"},
        "sample": {"x_box": [[-1, 1], [0.5, 1.5], [-1, 1]], "theta_box": [[0.5, 1.5], [-0.5, 0.5], [-0.5, 0.5]]},
        "geodesic": {"x0": [0.1, 0.8, 0.3], "theta0": [1.0, 0.3, -0.2], "s_max": 1.0},
    },
}


def builtin_config(name: str) -> dict:
    table = {**BUILTINS, **EXTRA_BUILTINS}
    if name not in table:
        raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(table)}")
    body = copy.deepcopy(table[name])
    dim = len(body["vielbein"])
    out = {"version": VERSION, "name": name, "dim": dim}
    out.update(body)
    out.setdefault("tolerances", dict(DEFAULT_TOLERANCES))
    out.setdefault("gauge", {})
    out["gauge"].setdefault("lambda0", None)
    out["gauge"].setdefault("lambdaI", "zero")
    out["sample"].setdefault("seed", 20240601)
    out["sample"].setdefault("count", 100)
    return out


def _floats(value, length, what):
    try:
        arr = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers") from None
    if len(arr) != length:
        raise ConfigError(f"{what} must have {length} entries, got {len(arr)}")
    return arr


def _box(value, dim, what):
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(f"{what} must be a list of {dim} [lo, hi] pairs")
    box = [_floats(pair, 2, what) for pair in value]
    if any(lo > hi for lo, hi in box):
        raise ConfigError(f"{what} has lo > hi")
    return box


@dataclass
class ProblemConfig:
    name: str
    dim: int
    chart: Chart
    metric: FinslerMetric
    tolerances: dict
    gauge: dict
    sample: dict
    geodesic: dict
    output: dict
    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("version") != VERSION:
            raise ConfigError(f"unsupported config version {data.get('version')!r} (expected {VERSION})")
        dim = data.get("dim")
        if not isinstance(dim, int) or dim < 2:
            raise ConfigError("dim must be an integer >= 2")
        rows = data.get("vielbein")
        if not isinstance(rows, list) or len(rows) != dim or any(not isinstance(r, list) or len(r) != dim for r in rows):
            raise ConfigError(f"vielbein must be a {dim}x{dim} array of expression strings")
        try:
            chart = Chart.from_strings(rows)
            metric = FinslerMetric.from_string(str(data.get("metric", "")), dim)
        except ParseError as exc:
            raise ConfigError(f"expression error: {exc}") from exc

        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(data.get("tolerances") or {})
        gauge = {"lambda0": None, "lambdaI": "zero"}
        gauge.update(data.get("gauge") or {})
        lam0 = gauge["lambda0"]
        if lam0 not in (None, "zero", "0"):
            try:
                gauge_expression(str(lam0), dim)
            except ParseError as exc:
                raise ConfigError(f"gauge.lambda0: {exc}") from exc
        lamI = gauge["lambdaI"]
        if not (lamI in ("zero", "solve") or isinstance(lamI, list)):
            raise ConfigError("gauge.lambdaI must be 'zero', 'solve' or a list of numbers")

        sample = dict(data.get("sample") or {})
        sample.setdefault("seed", 0)
        sample.setdefault("count", 100)
        sample.setdefault("min_L_ratio", 0.1)
        if "points" in sample:
            pts = sample["points"]
            if not isinstance(pts, list):
                raise ConfigError("sample.points must be a list")
            sample["points"] = [
                (_floats(p.get("x"), dim, "sample point x"), _floats(p.get("theta"), dim, "sample point theta"))
                for p in pts
            ]
        else:
            sample["x_box"] = _box(sample.get("x_box"), dim, "sample.x_box")
            sample["theta_box"] = _box(sample.get("theta_box"), dim, "sample.theta_box")
        if not isinstance(sample["seed"], int) or not 0 <= sample["seed"] <= _MASK64:
            raise ConfigError("sample.seed must be an unsigned 64-bit integer")

        geodesic = dict(data.get("geodesic") or {})
        if geodesic:
            geodesic["x0"] = _floats(geodesic.get("x0"), dim, "geodesic.x0")
            if ("theta0" in geodesic) == ("dx0" in geodesic):
                raise ConfigError("geodesic needs exactly one of theta0 or dx0")
            key = "theta0" if "theta0" in geodesic else "dx0"
            geodesic[key] = _floats(geodesic[key], dim, f"geodesic.{key}")

        return cls(
            name=str(data.get("name", "problem")),
            dim=dim,
            chart=chart,
            metric=metric,
            tolerances=tolerances,
            gauge=gauge,
            sample=sample,
            geodesic=geodesic,
            output=dict(data.get("output") or {}),
            raw=data,
        )

    @classmethod
    def load(cls, source) -> "ProblemConfig":
        """Load from a path, or ``builtin:<name>``."""
        source = str(source)
        if source.startswith("builtin:"):
            return cls.from_dict(builtin_config(source[len("builtin:"):]))
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {source}: {exc}") from exc
        return cls.from_dict(data)

    # derived objects ------------------------------------------------------

    def lambdaI(self):
        rule = self.gauge["lambdaI"]
        return rule if isinstance(rule, str) else [float(v) for v in rule]

    def integration_config(self, **overrides) -> IntegrationConfig:
        g = self.geodesic
        lam0 = self.gauge["lambda0"]
        kwargs = dict(
            method=g.get("method", "rk45"),
            s_max=float(g.get("s_max", 1.0)),
            step=float(g.get("step", 1e-2)),
            rtol=float(g.get("rtol", 1e-10)),
            atol=float(g.get("atol", 1e-12)),
            samples=int(g.get("samples", 101)),
            lambda0=None if lam0 in (None, "zero", "0") else gauge_expression(str(lam0), self.dim),
            lambdaI=self.lambdaI(),
            drift_threshold=float(g.get("drift_threshold", 1e-6)),
            rank_tol=float(self.tolerances["rank"]),
            singular_tol=float(self.tolerances["frame_singularity"]),
        )
        kwargs.update(overrides)
        try:
            return IntegrationConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"geodesic: {exc}") from exc

    def initial_state(self):
        if not self.geodesic:
            raise ConfigError("config has no geodesic section")
        g = self.geodesic
        if "theta0" in g:
            return initial_state(self.chart, g["x0"], Theta=g["theta0"])
        return initial_state(self.chart, g["x0"], dx=g["dx0"])

    def sample_points(self, seed=None, count=None):
        """Explicit points, or reproducible draws from the boxes.

        Draws with ``|L(theta)| < min_L_ratio * |theta|`` or a non-finite metric
        are rejected and redrawn.  Frames are not screened here, so a box that
        touches a coordinate singularity shows up as failing points downstream.
        """
        if "points" in self.sample:
            return [(np.array(x), np.array(t)) for x, t in self.sample["points"]]
        rng = SplitMix64(self.sample["seed"] if seed is None else seed)
        count = int(self.sample["count"] if count is None else count)
        ratio = float(self.sample["min_L_ratio"])
        out = []
        attempts = 0
        while len(out) < count:
            attempts += 1
            if attempts > 100 * count + 100:
                raise ConfigError("could not draw enough admissible sample points; check the boxes")
            x = np.array([rng.uniform(lo, hi) for lo, hi in self.sample["x_box"]])
            th = np.array([rng.uniform(lo, hi) for lo, hi in self.sample["theta_box"]])
            try:
                L = self.metric(th)
            except (FinslerError, ValueError):
                continue
            if not np.isfinite(L) or abs(L) < ratio * np.linalg.norm(th):
                continue
            out.append((x, th))
        return out


def example_json(name: str) -> str:
    return json.dumps(builtin_config(name), indent=2) + "\n"

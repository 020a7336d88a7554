"""Confounding bridge models, instrument maps, and the stacked moment function.

A feature map is a tuple of *terms*. Each term is ``"1"`` (intercept) or a
product of factors joined by ``*``; a factor is ``x``, ``w`` (bridge only),
``z`` (instruments only), or a covariate ``v[j]``. For example the bridge
``(1, X, V, W, XV, XW)`` is ``("1", "x", "v[0]", "w", "x*v[0]", "x*w")``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import NCDataset
from .errors import SpecError

_V_FACTOR = re.compile(r"^v\[(\d+)\]$")


def _parse_term(term: str, allowed: frozenset[str]) -> tuple:
    term = term.replace(" ", "")
    if term == "1":
        return ()
    factors = []
    for f in term.split("*"):
        m = _V_FACTOR.match(f)
        if m:
            factors.append(("v", int(m.group(1))))
        elif f in allowed:
            factors.append((f, None))
        else:
            raise SpecError(f"unknown factor {f!r} in term {term!r}; allowed: 1, {sorted(allowed)}, v[j]")
    return tuple(factors)


@dataclass(frozen=True)
class FeatureMap:
    """Vectorised evaluation of a list of product terms."""

    terms: tuple[str, ...]
    variables: frozenset[str]

    def __post_init__(self):
        if not self.terms:
            raise SpecError("feature map needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "_parsed", tuple(_parse_term(t, self.variables) for t in self.terms))

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def max_v_index(self) -> int:
        idx = [j for term in self._parsed for name, j in term if name == "v"]
        return max(idx, default=-1)

    def evaluate(self, cols: dict[str, np.ndarray], v: np.ndarray | None) -> np.ndarray:
        n = max((np.size(c) for c in cols.values() if c is not None), default=1)
        if v is None:
            v = np.empty((n, 0))
        n = v.shape[0]
        if self.max_v_index >= v.shape[1]:
            raise SpecError(f"term uses v[{self.max_v_index}] but data has {v.shape[1]} covariates")
        out = np.ones((n, len(self.terms)))
        for k, term in enumerate(self._parsed):
            for name, j in term:
                out[:, k] *= v[:, j] if name == "v" else cols[name]
        return out

    def depends_on(self, name: str) -> bool:
        return any(f == name for term in self._parsed for f, _ in term)


def bridge_features(terms: Sequence[str]) -> FeatureMap:
    return FeatureMap(tuple(terms), frozenset({"x", "w"}))


def instrument_features(terms: Sequence[str]) -> FeatureMap:
    return FeatureMap(tuple(terms), frozenset({"x", "z"}))


@dataclass(frozen=True)
class BridgeModel:
    """Parametric confounding bridge ``b(W, V, X; gamma)``.

    ``kind`` is ``"linear"`` (``phi @ gamma``), ``"multiplicative"``
    (``exp(phi @ gamma)``), or ``"custom"``, in which case ``func(gamma, w, v, x)``
    supplies ``b`` directly and ``dim`` its parameter length. Custom bridges get
    finite-difference Jacobians.
    """

    kind: str
    features: FeatureMap | None = None
    func: Callable | None = None
    dim: int | None = None
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind in ("linear", "multiplicative"):
            if self.features is None:
                raise SpecError(f"{self.kind} bridge needs a feature map")
            if self.features.depends_on("z"):
                raise SpecError("bridge features may not depend on z")
        elif self.kind == "custom":
            if self.func is None or self.dim is None:
                raise SpecError("custom bridge needs func and dim")
        else:
            raise SpecError(f"unknown bridge kind {self.kind!r}")
        if self.gamma is not None:
            g = np.asarray(self.gamma, dtype=float)
            if g.shape != (self.n_params,):
                raise SpecError(f"gamma has shape {g.shape}, expected ({self.n_params},)")
            object.__setattr__(self, "gamma", g)

    @property
    def n_params(self) -> int:
        return len(self.features) if self.features is not None else int(self.dim)

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def design(self, w, v, x) -> np.ndarray:
        return self.features.evaluate({"x": np.broadcast_to(x, w.shape), "w": w}, v)

    def evaluate(self, gamma, w, v, x) -> np.ndarray:
        """Bridge values for every row; ``x`` may be a scalar exposure level."""
        gamma = np.asarray(gamma, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.func(gamma, w, v, np.broadcast_to(x, w.shape)), dtype=float)
        lin = self.design(w, v, x) @ gamma
        return lin if self.kind == "linear" else np.exp(lin)

    def gradient(self, gamma, w, v, x) -> np.ndarray | None:
        """Row-wise derivative of ``b`` with respect to ``gamma``; ``None`` for custom bridges."""
        if self.kind == "custom":
            return None
        phi = self.design(w, v, x)
        if self.kind == "linear":
            return phi
        return phi * np.exp(phi @ np.asarray(gamma, dtype=float))[:, None]


@dataclass(frozen=True)
class InstrumentMap:
    features: FeatureMap

    def __post_init__(self):
        if self.features.depends_on("w"):
            raise SpecError("instrument features may not depend on w")

    def __len__(self) -> int:
        return len(self.features)

    def evaluate(self, x, v, z) -> np.ndarray:
        return self.features.evaluate({"x": x, "z": z}, v)


@dataclass(frozen=True)
class MomentSpec:
    """Bridge plus instruments, optionally with an average-causal-effect contrast ``(x1, x0)``.

    With a contrast the parameter vector is ``(gamma, delta)``.
    """

    bridge: BridgeModel
    instruments: InstrumentMap
    contrast: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.instruments) < self.bridge.n_params:
            raise SpecError(
                f"under-identified: {len(self.instruments)} instruments for "
                f"{self.bridge.n_params} bridge parameters"
            )
        if self.contrast is not None:
            x1, x0 = self.contrast
            object.__setattr__(self, "contrast", (float(x1), float(x0)))

    @property
    def n_gamma(self) -> int:
        return self.bridge.n_params

    @property
    def n_params(self) -> int:
        return self.n_gamma + (self.contrast is not None)

    @property
    def n_moments(self) -> int:
        return len(self.instruments) + (self.contrast is not None)

    def split(self, theta) -> tuple[np.ndarray, float | None]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise SpecError(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        if self.contrast is None:
            return theta, None
        return theta[:-1], float(theta[-1])

    def to_dict(self) -> dict:
        if self.bridge.kind == "custom":
            raise SpecError("custom bridges cannot be serialised")
        return {
            "kind": self.bridge.kind,
            "bridge": list(self.bridge.features.terms),
            "instruments": list(self.instruments.features.terms),
            "contrast": list(self.contrast) if self.contrast is not None else None,
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "MomentSpec":
        try:
            kind = cfg.get("kind", "linear")
            bridge = BridgeModel(kind, bridge_features(cfg["bridge"]))
            inst = InstrumentMap(instrument_features(cfg["instruments"]))
        except KeyError as exc:
            raise SpecError(f"bridge config missing key {exc}") from None
        contrast = cfg.get("contrast")
        if contrast is not None:
            if len(contrast) != 2:
                raise SpecError("contrast must be a pair [x1, x0]")
            contrast = tuple(contrast)
        return cls(bridge, inst, contrast)


def load_spec(path) -> MomentSpec:
    """Read a JSON bridge configuration (see :meth:`MomentSpec.to_dict`)."""
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read bridge config {path}: {exc}") from exc
    return MomentSpec.from_dict(cfg)


def moment_function(spec: MomentSpec, data: NCDataset, theta) -> np.ndarray:
    """Per-observation moments ``h(D_i; theta)`` as an ``(n, m)`` matrix.

    The first block is ``{Y - b(W, V, X)} q(X, V, Z)``; with a contrast the last
    column is ``delta - {b(W, V, x1) - b(W, V, x0)}``.
    """
    gamma, delta = spec.split(theta)
    b = spec.bridge.evaluate(gamma, data.w, data.v, data.x)
    q = spec.instruments.evaluate(data.x, data.v, data.z)
    h = (data.y - b)[:, None] * q
    if delta is None:
        return h
    x1, x0 = spec.contrast
    diff = spec.bridge.evaluate(gamma, data.w, data.v, x1) - spec.bridge.evaluate(gamma, data.w, data.v, x0)
    return np.column_stack([h, delta - diff])


def mean_moments(spec: MomentSpec, data: NCDataset, theta) -> np.ndarray:
    return moment_function(spec, data, theta).mean(axis=0)


def _v_terms(p: int, prefix: str = "") -> list[str]:
    return [f"{prefix}v[{j}]" for j in range(p)]


BUILTIN_NAMES = ("binary_interaction", "linear_additive", "timeseries_lag", "structural")


def builtin_bridges(name: str, p: int = 1) -> tuple[BridgeModel, InstrumentMap]:
    """Bridge/instrument pairs used in the simulation studies.

    ``binary_interaction``: ``b = (1, X, V, W, XV, XW)``, ``q = (1, X, V, Z, XV, XZ)``.
    ``linear_additive`` and ``timeseries_lag``: ``b = (1, X, V, W)``, ``q = (1, X, V, Z)``;
    for the lagged design ``V`` already holds ``X_{i-1}``, ``V_i`` and ``V_{i-1}``.
    ``structural``: ``b = (1, X, W)``, ``q = (1, X, Z)``. ``p`` is the covariate count.
    """
    if name == "binary_interaction":
        b = ["1", "x", *_v_terms(p), "w", *_v_terms(p, "x*"), "x*w"]
        q = ["1", "x", *_v_terms(p), "z", *_v_terms(p, "x*"), "x*z"]
    elif name in ("linear_additive", "timeseries_lag"):
        b = ["1", "x", *_v_terms(p), "w"]
        q = ["1", "x", *_v_terms(p), "z"]
    elif name == "structural":
        b = ["1", "x", "w"]
        q = ["1", "x", "z"]
    else:
        raise SpecError(f"unknown builtin bridge {name!r}; choose from {BUILTIN_NAMES}")
    return BridgeModel("linear", bridge_features(b)), InstrumentMap(instrument_features(q))


def builtin_spec(name: str, p: int = 1, contrast: tuple[float, float] | None = None) -> MomentSpec:
    bridge, inst = builtin_bridges(name, p)
    return MomentSpec(bridge, inst, contrast)

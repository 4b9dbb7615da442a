"""Ambient models: semidirect products R^2 x_A R, left-invariant metrics on
the universal cover of SL(2,R), and the product S^2(kappa) x R.

Points of a semidirect model are stored as arrays ``(..., 3)`` holding
``(x, y, z)``.  Every coordinate routine broadcasts over leading axes and
accepts complex ``z`` so that callers can differentiate by complex step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import MetricSpecError

# Below this |discriminant| the closed forms lose accuracy; use the series.
_DISCRIMINANT_SERIES_BAND = 1e-8


@dataclass(frozen=True)
class Matrix2:
    """Real 2x2 matrix ``[[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "d"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise MetricSpecError(f"matrix entry {name}={value!r} is not finite")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, arr: Any) -> "Matrix2":
        m = np.asarray(arr, dtype=float)
        if m.shape != (2, 2):
            raise MetricSpecError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self) -> float:
        return self.a + self.d


@dataclass(frozen=True)
class SemidirectModel:
    """R^2 x_A R with its canonical left-invariant metric."""

    A: Matrix2

    @classmethod
    def from_entries(cls, a: float, b: float, c: float, d: float) -> "SemidirectModel":
        return cls(Matrix2(a, b, c, d))

    @classmethod
    def from_array(cls, arr: Any) -> "SemidirectModel":
        return cls(Matrix2.from_array(arr))

    @property
    def trace(self) -> float:
        return self.A.trace


@dataclass(frozen=True)
class Sl2FrameMetric:
    """Left-invariant metric on the universal cover of SL(2,R).

    The frame ``E1, E2, E3`` is orthogonal with lengths ``lambda1..3``.
    """

    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise MetricSpecError(f"{name} must be a finite positive number, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)


@dataclass(frozen=True)
class ProductS2R:
    """Riemannian product of a round sphere of curvature ``kappa`` with R."""

    kappa: float

    def __post_init__(self) -> None:
        value = float(self.kappa)
        if not math.isfinite(value) or value <= 0.0:
            raise MetricSpecError(f"kappa must be a finite positive number, got {value!r}")
        object.__setattr__(self, "kappa", value)


MetricModel = Union[SemidirectModel, Sl2FrameMetric, ProductS2R]


@dataclass(frozen=True, eq=False)
class FrameMetricData:
    """Structure constants and inner products on a left-invariant frame.

    ``C[k, i, j]`` is the ``E_k`` component of ``[E_i, E_j]`` and ``g[i, j]``
    is ``<E_i, E_j>``.
    """

    C: np.ndarray
    g: np.ndarray

    def __post_init__(self) -> None:
        C = np.array(self.C, dtype=float)
        g = np.array(self.g, dtype=float)
        if C.shape != (3, 3, 3) or g.shape != (3, 3):
            raise MetricSpecError("frame data needs C of shape (3,3,3) and g of shape (3,3)")
        if not np.allclose(C, -np.swapaxes(C, 1, 2), rtol=0.0, atol=1e-14):
            raise MetricSpecError("structure constants must be antisymmetric in the lower indices")
        if not np.allclose(g, g.T, rtol=0.0, atol=1e-14):
            raise MetricSpecError("frame inner products must be symmetric")
        C.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "g", g)


# --------------------------------------------------------------------------
# matrix exponential


def _even_odd_series(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``sum w^k/(2k)!`` and ``sum w^k/(2k+1)!``."""
    even = np.ones_like(w)
    odd = np.ones_like(w)
    term_e = np.ones_like(w)
    term_o = np.ones_like(w)
    for k in range(1, 200):
        term_e = term_e * w / ((2 * k - 1) * (2 * k))
        term_o = term_o * w / ((2 * k) * (2 * k + 1))
        even = even + term_e
        odd = odd + term_o
        if np.all(np.abs(term_e) <= 1e-18 * np.abs(even)) and np.all(
            np.abs(term_o) <= 1e-18 * np.abs(odd)
        ):
            break
    return even, odd


def mat_exp(A: Matrix2 | np.ndarray, z: Any) -> np.ndarray:
    """Return ``exp(z A)`` with shape ``z.shape + (2, 2)``.

    Uses ``exp(zA) = e^{mu z} (C I + S N)`` where ``mu = trace/2`` and
    ``N = A - mu I`` satisfies ``N^2 = delta I``.
    """
    M = A.array if isinstance(A, Matrix2) else np.asarray(A, dtype=float)
    z = np.asarray(z)
    mu = 0.5 * (M[0, 0] + M[1, 1])
    N = M - mu * np.eye(2)
    delta = N[0, 0] ** 2 + N[0, 1] * N[1, 0]

    if abs(delta) <= _DISCRIMINANT_SERIES_BAND:
        even, odd = _even_odd_series(delta * z * z)
        C, S = even, z * odd
    elif delta > 0.0:
        s = math.sqrt(delta)
        C, S = np.cosh(s * z), np.sinh(s * z) / s
    else:
        s = math.sqrt(-delta)
        C, S = np.cos(s * z), np.sin(s * z) / s

    scale = np.exp(mu * z)
    out = C[..., None, None] * np.eye(2) + S[..., None, None] * N
    return scale[..., None, None] * out


# --------------------------------------------------------------------------
# group structure


def _split(p: Any) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p)
    if p.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got {p.shape}")
    return p[..., :2], p[..., 2]


def group_mul(m: SemidirectModel, p1: Any, p2: Any) -> np.ndarray:
    """``(p1, z1) * (p2, z2) = (p1 + e^{z1 A} p2, z1 + z2)``."""
    h1, z1 = _split(p1)
    h2, z2 = _split(p2)
    E = mat_exp(m.A, z1)
    h = h1 + np.einsum("...ij,...j->...i", E, h2)
    return np.concatenate([h, (z1 + z2)[..., None]], axis=-1)


def group_inv(m: SemidirectModel, p: Any) -> np.ndarray:
    h, z = _split(p)
    E = mat_exp(m.A, -z)
    return np.concatenate([-np.einsum("...ij,...j->...i", E, h), (-z)[..., None]], axis=-1)


def left_translation_differential(m: SemidirectModel, q: Any) -> np.ndarray:
    """Jacobian of ``p -> q * p`` in coordinates (independent of ``p``)."""
    _, zq = _split(q)
    D = np.zeros(np.shape(zq) + (3, 3), dtype=np.result_type(zq, float))
    D[..., :2, :2] = mat_exp(m.A, zq)
    D[..., 2, 2] = 1.0
    return D


# --------------------------------------------------------------------------
# frame and metric in coordinates


def frame_at(m: SemidirectModel, p: Any) -> np.ndarray:
    """Orthonormal left-invariant frame at ``p``.

    Row ``i`` of the result holds the coordinate components of ``E_{i+1}``.
    ``E1, E2`` are the columns of ``e^{zA}`` and ``E3 = d/dz``.
    """
    _, z = _split(p)
    E = mat_exp(m.A, z)
    F = np.zeros(np.shape(z) + (3, 3), dtype=E.dtype)
    F[..., :2, :2] = np.swapaxes(E, -1, -2)
    F[..., 2, 2] = 1.0
    return F


def frame_to_coords(m: SemidirectModel, p: Any, v_frame: Any) -> np.ndarray:
    return np.einsum("...i,...ij->...j", np.asarray(v_frame), frame_at(m, p))


def coords_to_frame(m: SemidirectModel, p: Any, v_coords: Any) -> np.ndarray:
    _, z = _split(p)
    v = np.asarray(v_coords)
    h = np.einsum("...ij,...j->...i", mat_exp(m.A, -z), v[..., :2])
    return np.concatenate([h, v[..., 2:3]], axis=-1)


def horizontal_metric(m: SemidirectModel, z: Any) -> np.ndarray:
    """``G(z) = e^{-zA}^T e^{-zA}``, the metric on the horizontal plane at height z."""
    M = mat_exp(m.A, -np.asarray(z))
    return np.einsum("...ki,...kj->...ij", M, M)


def metric_at(m: SemidirectModel, p: Any) -> np.ndarray:
    """Coordinate components of the canonical metric at ``p``."""
    _, z = _split(p)
    G = horizontal_metric(m, z)
    g = np.zeros(np.shape(z) + (3, 3), dtype=G.dtype)
    g[..., :2, :2] = G
    g[..., 2, 2] = 1.0
    return g


def volume_density(m: SemidirectModel, p: Any) -> np.ndarray:
    """``sqrt(det g) = e^{-z trace(A)}``."""
    _, z = _split(p)
    return np.exp(-z * m.trace)


def christoffel_at(m: SemidirectModel, p: Any) -> np.ndarray:
    """Coordinate Christoffel symbols ``Gamma[k, i, j]`` at ``p``.

    Only the z-derivative of the metric is nonzero; with ``M = e^{-zA}``,
    ``G' = -M^T (A + A^T) M``.
    """
    _, z = _split(p)
    A = m.A.array
    M = mat_exp(m.A, -z)
    dG = -np.einsum("...ki,kl,...lj->...ij", M, A + A.T, M)
    G = np.einsum("...ki,...kj->...ij", M, M)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    Ginv = np.empty_like(G)
    Ginv[..., 0, 0] = G[..., 1, 1] / det
    Ginv[..., 1, 1] = G[..., 0, 0] / det
    Ginv[..., 0, 1] = -G[..., 0, 1] / det
    Ginv[..., 1, 0] = -G[..., 1, 0] / det
    mixed = 0.5 * np.einsum("...kl,...li->...ki", Ginv, dG)

    Gam = np.zeros(np.shape(z) + (3, 3, 3), dtype=mixed.dtype)
    Gam[..., 2, :2, :2] = -0.5 * dG
    Gam[..., :2, :2, 2] = mixed
    Gam[..., :2, 2, :2] = mixed
    return Gam


def right_invariant_field(m: SemidirectModel, w: Any, s: float, p: Any) -> np.ndarray:
    """Killing field generated by left multiplication by ``exp(t (w, s))``.

    Its value at ``p = (x, y, z)`` is ``(w + s A (x, y), s)``.
    """
    h, z = _split(p)
    w = np.asarray(w, dtype=float)
    hor = w + s * np.einsum("ij,...j->...i", m.A.array, h)
    vert = np.broadcast_to(np.asarray(s, dtype=float), np.shape(z))
    return np.concatenate([hor, vert[..., None]], axis=-1)


# --------------------------------------------------------------------------
# frame data


def frame_data(model: SemidirectModel | Sl2FrameMetric) -> FrameMetricData:
    C = np.zeros((3, 3, 3))

    def bracket(i: int, j: int, coeffs: tuple[float, float, float]) -> None:
        for k, value in enumerate(coeffs):
            C[k, i, j] = value
            C[k, j, i] = -value

    if isinstance(model, SemidirectModel):
        A = model.A
        bracket(2, 0, (A.a, A.c, 0.0))  # [E3, E1] = a E1 + c E2
        bracket(2, 1, (A.b, A.d, 0.0))  # [E3, E2] = b E1 + d E2
        return FrameMetricData(C, np.eye(3))
    if isinstance(model, Sl2FrameMetric):
        bracket(0, 1, (0.0, 0.0, -2.0))
        bracket(1, 2, (2.0, 0.0, 0.0))
        bracket(2, 0, (0.0, 2.0, 0.0))
        return FrameMetricData(C, np.diag(np.square(model.lambdas)))
    raise TypeError(f"no left-invariant frame data for {type(model).__name__}")


# --------------------------------------------------------------------------
# JSON metric specification


def _finite(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MetricSpecError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise MetricSpecError(f"{what} must be finite, got {value!r}")
    return value


def _check_keys(spec: dict, allowed: set[str]) -> None:
    extra = set(spec) - allowed
    if extra:
        raise MetricSpecError(f"unknown field(s) in metric spec: {sorted(extra)}")
    missing = allowed - set(spec)
    if missing:
        raise MetricSpecError(f"missing field(s) in metric spec: {sorted(missing)}")


def parse_metric_spec(spec: str | dict) -> MetricModel:
    """Build a model from its JSON description.

    Accepted forms::

        {"type": "semidirect", "A": [[a, b], [c, d]]}
        {"type": "sl2tilde", "lambda": [l1, l2, l3]}
        {"type": "s2xr", "kappa": k}
    """
    if isinstance(spec, str):
        try:
            spec = json.loads(spec, parse_constant=lambda name: float(name))
        except json.JSONDecodeError as exc:
            raise MetricSpecError(f"metric spec is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise MetricSpecError("metric spec must be a JSON object")
    kind = spec.get("type")
    if kind == "semidirect":
        _check_keys(spec, {"type", "A"})
        rows = spec["A"]
        if not (isinstance(rows, list) and len(rows) == 2 and all(isinstance(r, list) and len(r) == 2 for r in rows)):
            raise MetricSpecError("A must be a 2x2 nested list")
        vals = [_finite(v, f"A[{i}][{j}]") for i, r in enumerate(rows) for j, v in enumerate(r)]
        return SemidirectModel(Matrix2(*vals))
    if kind == "sl2tilde":
        _check_keys(spec, {"type", "lambda"})
        lam = spec["lambda"]
        if not (isinstance(lam, list) and len(lam) == 3):
            raise MetricSpecError("lambda must be a list of three positive numbers")
        vals = [_finite(v, f"lambda[{i}]") for i, v in enumerate(lam)]
        return Sl2FrameMetric(*vals)
    if kind == "s2xr":
        _check_keys(spec, {"type", "kappa"})
        return ProductS2R(_finite(spec["kappa"], "kappa"))
    raise MetricSpecError(f"unknown metric type {kind!r}; expected semidirect, sl2tilde or s2xr")


def metric_spec(model: MetricModel) -> dict:
    """Inverse of :func:`parse_metric_spec`."""
    if isinstance(model, SemidirectModel):
        return {"type": "semidirect", "A": model.A.array.tolist()}
    if isinstance(model, Sl2FrameMetric):
        return {"type": "sl2tilde", "lambda": list(model.lambdas)}
    if isinstance(model, ProductS2R):
        return {"type": "s2xr", "kappa": model.kappa}
    raise TypeError(type(model).__name__)

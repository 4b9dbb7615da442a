"""Discrete surfaces in coordinate charts and divergence-theorem checks.

A surface is a grid of points ``(nu, nv, 3)``.  Tangents and second
derivatives come from finite differences; the second fundamental form uses
the ambient Christoffel symbols, so the metric never has to be embedded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateMetricError, QuadratureError, ValidationError
from .models import SemidirectModel, christoffel_at, metric_at, right_invariant_field

MAX_FIRST_FORM_CONDITION = 1e8

Field = Callable[[np.ndarray], np.ndarray]


class Ambient:
    """Coordinate metric and its Christoffel symbols on some chart of R^3."""

    def metric(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def christoffel(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SemidirectAmbient(Ambient):
    def __init__(self, model: SemidirectModel):
        self.model = model

    def metric(self, p):
        return metric_at(self.model, p)

    def christoffel(self, p):
        return christoffel_at(self.model, p)


class FiniteDifferenceAmbient(Ambient):
    """Christoffel symbols from central differences of a metric callable."""

    def __init__(self, metric_fn: Callable[[np.ndarray], np.ndarray], step: float = 1e-5):
        self._metric = metric_fn
        self.step = step

    def metric(self, p):
        return self._metric(np.asarray(p))

    def christoffel(self, p):
        p = np.asarray(p, dtype=float)
        h = self.step
        dg = []
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            dg.append((self._metric(p + e) - self._metric(p - e)) / (2 * h))
        dg = np.stack(dg, axis=-3)  # (..., l, i, j) = d_l g_ij
        ginv = np.linalg.inv(self._metric(p))
        lowered = 0.5 * (
            np.einsum("...jil->...lij", dg) + np.einsum("...ijl->...lij", dg) - dg
        )
        return np.einsum("...kl,...lij->...kij", ginv, lowered)


def as_ambient(m) -> Ambient:
    if isinstance(m, Ambient):
        return m
    if isinstance(m, SemidirectModel):
        return SemidirectAmbient(m)
    raise TypeError(f"cannot use {type(m).__name__} as an ambient metric")


# --------------------------------------------------------------------------
# finite differences on grids


def _pad(X: np.ndarray, axis: int, offset: np.ndarray | None) -> np.ndarray:
    first = np.take(X, [0], axis=axis)
    last = np.take(X, [-1], axis=axis)
    off = 0.0 if offset is None else offset
    return np.concatenate([last - off, X, first + off], axis=axis)


def grid_d1(X: np.ndarray, h: float, axis: int, periodic: bool, offset=None) -> np.ndarray:
    """Second-order first derivative along ``axis``."""
    if periodic:
        P = _pad(X, axis, offset)
        n = X.shape[axis]
        fwd = np.take(P, range(2, n + 2), axis=axis)
        bwd = np.take(P, range(0, n), axis=axis)
        return (fwd - bwd) / (2 * h)
    D = np.gradient(X, h, axis=axis, edge_order=2)
    return D


def grid_d2(X: np.ndarray, h: float, axis: int, periodic: bool, offset=None) -> np.ndarray:
    """Second-order second derivative along ``axis``."""
    n = X.shape[axis]
    if periodic:
        P = _pad(X, axis, offset)
        fwd = np.take(P, range(2, n + 2), axis=axis)
        mid = np.take(P, range(1, n + 1), axis=axis)
        bwd = np.take(P, range(0, n), axis=axis)
        return (fwd - 2 * mid + bwd) / (h * h)
    if n < 4:
        raise ValidationError("non-periodic directions need at least 4 nodes")
    X = np.moveaxis(X, axis, 0)
    out = np.empty_like(X)
    out[1:-1] = (X[2:] - 2 * X[1:-1] + X[:-2]) / (h * h)
    out[0] = (2 * X[0] - 5 * X[1] + 4 * X[2] - X[3]) / (h * h)
    out[-1] = (2 * X[-1] - 5 * X[-2] + 4 * X[-3] - X[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


# --------------------------------------------------------------------------
# pointwise surface geometry


def shape_from_derivatives(Xu, Xv, Xuu, Xuv, Xvv, g, Gam):
    """First/second fundamental forms, unit normal and mean curvature.

    The normal is ``g^{-1}(Xu x Xv)`` normalized, ``sigma_ab = <nabla_a X_b, N>``
    and ``H = trace(I^{-1} sigma) / 2``.  Works for complex input.
    """
    n = np.cross(Xu, Xv)
    ginv = np.linalg.inv(g)
    nn = np.sqrt(np.einsum("...i,...ij,...j->...", n, ginv, n))
    N = np.einsum("...ij,...j->...i", ginv, n) / nn[..., None]

    def second(Xa, Xb, Xab):
        acc = Xab + np.einsum("...kij,...i,...j->...k", Gam, Xa, Xb)
        return np.einsum("...k,...k->...", acc, n) / nn

    def inner(a, b):
        return np.einsum("...i,...ij,...j->...", a, g, b)

    E, F, G = inner(Xu, Xu), inner(Xu, Xv), inner(Xv, Xv)
    L, M, Nn = second(Xu, Xu, Xuu), second(Xu, Xv, Xuv), second(Xv, Xv, Xvv)
    det = E * G - F * F
    # shape operator S = I^{-1} sigma
    S11 = (G * L - F * M) / det
    S12 = (G * M - F * Nn) / det
    S21 = (E * M - F * L) / det
    S22 = (E * Nn - F * M) / det
    H = 0.5 * (S11 + S22)
    norm_sq = S11 * S11 + 2 * S12 * S21 + S22 * S22
    first = np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)
    sigma = np.stack([np.stack([L, M], -1), np.stack([M, Nn], -1)], -2)
    return first, sigma, N, H, norm_sq


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    points: np.ndarray
    periodic: tuple[bool, bool]
    spacing: tuple[float, float]
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    first_form: np.ndarray
    normal: np.ndarray
    second_form: np.ndarray
    mean_curvature: np.ndarray
    shape_norm_sq: np.ndarray
    area_weights: np.ndarray

    @property
    def area(self) -> float:
        return float(np.sum(self.area_weights))


def _trapezoid_weights(n: int, h: float, periodic: bool) -> np.ndarray:
    w = np.full(n, h)
    if not periodic:
        w[0] = w[-1] = 0.5 * h
    return w


def surface_geometry(
    m,
    points,
    spacing: Sequence[float],
    periodic: Sequence[bool] = (False, False),
    period_offsets: Sequence[Sequence[float]] | None = None,
) -> SurfaceMesh:
    """Discrete differential geometry of the immersion ``points[i, j]``.

    ``period_offsets[a]`` is the coordinate jump ``X[i + n_a] - X[i]`` along a
    periodic direction (zero if omitted).
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 3 or X.shape[2] != 3:
        raise ValidationError("surface points must have shape (nu, nv, 3)")
    nu, nv, _ = X.shape
    if nu < 8 or nv < 8:
        raise ValidationError("surface grids must be at least 8x8")
    du, dv = (float(s) for s in spacing)
    pu, pv = (bool(p) for p in periodic)
    offs = [None, None] if period_offsets is None else [
        None if o is None else np.asarray(o, dtype=float) for o in period_offsets
    ]
    amb = as_ambient(m)

    Xu = grid_d1(X, du, 0, pu, offs[0])
    Xv = grid_d1(X, dv, 1, pv, offs[1])
    Xuu = grid_d2(X, du, 0, pu, offs[0])
    Xvv = grid_d2(X, dv, 1, pv, offs[1])
    # Xu is periodic without offset
    Xuv = grid_d1(Xu, dv, 1, pv, None)

    g = amb.metric(X)
    Gam = amb.christoffel(X)
    # a degenerate immersion divides by zero here; it is reported just below
    with np.errstate(divide="ignore", invalid="ignore"):
        first, sigma, N, H, norm_sq = shape_from_derivatives(Xu, Xv, Xuu, Xuv, Xvv, g, Gam)

    cond = np.linalg.cond(first)
    if not np.all(np.isfinite(cond)) or np.max(cond) > MAX_FIRST_FORM_CONDITION:
        raise DegenerateMetricError(
            f"induced metric condition number {np.max(cond):.3e} exceeds {MAX_FIRST_FORM_CONDITION:g}"
        )
    dA = np.sqrt(np.linalg.det(first))
    weights = dA * np.outer(_trapezoid_weights(nu, du, pu), _trapezoid_weights(nv, dv, pv))
    return SurfaceMesh(X, (pu, pv), (du, dv), Xu, Xv, first, N, sigma, H, norm_sq, weights)


def horizontal_leaf(z0: float, n: int, lattice=((1.0, 0.0), (0.0, 1.0))) -> dict:
    """Grid arguments for the periodic leaf ``R^2 x_A {z0}`` over one lattice cell."""
    a1, a2 = (np.asarray(a, dtype=float) for a in lattice)
    s = np.arange(n) / n
    S, T = np.meshgrid(s, s, indexing="ij")
    hor = S[..., None] * a1 + T[..., None] * a2
    pts = np.concatenate([hor, np.full(S.shape + (1,), float(z0))], axis=-1)
    return {
        "points": pts,
        "spacing": (1.0 / n, 1.0 / n),
        "periodic": (True, True),
        "period_offsets": (np.append(a1, 0.0), np.append(a2, 0.0)),
    }


# --------------------------------------------------------------------------
# divergence


def foliation_normal_divergence(m: SemidirectModel, p, step: float = 1e-3) -> np.ndarray:
    """Divergence of ``d/dz`` from the z-derivative of ``log sqrt(det g)``."""
    p = np.asarray(p, dtype=float)

    def log_density(shift: float) -> np.ndarray:
        q = p.copy()
        q[..., 2] += shift
        return 0.5 * np.linalg.slogdet(metric_at(m, q))[1]

    h = step
    return (
        -log_density(2 * h) + 8 * log_density(h) - 8 * log_density(-h) + log_density(-2 * h)
    ) / (12 * h)


def normal_field() -> Field:
    def field(p):
        p = np.asarray(p)
        out = np.zeros(p.shape)
        out[..., 2] = 1.0
        return out

    return field


def killing_field(m: SemidirectModel, w, s: float) -> Field:
    return lambda p: right_invariant_field(m, w, s, p)


def constant_field(v) -> Field:
    v = np.asarray(v, dtype=float)
    return lambda p: np.broadcast_to(v, np.shape(p)).copy()


def divergence(m: SemidirectModel, field: Field, p, step: float = 1e-3) -> np.ndarray:
    """``(1/rho) d_i(rho F^i)`` by fourth-order central differences."""
    p = np.asarray(p, dtype=float)
    rho = lambda q: np.sqrt(np.linalg.det(metric_at(m, q)))  # noqa: E731
    total = np.zeros(p.shape[:-1])
    for i in range(3):
        e = np.zeros(3)
        e[i] = step

        def flux(k: float) -> np.ndarray:
            q = p + k * e
            return rho(q) * field(q)[..., i]

        total += (-flux(2) + 8 * flux(1) - 8 * flux(-1) + flux(-2)) / (12 * step)
    return total / rho(p)


@dataclass(frozen=True)
class DivergenceBalance:
    volume_integral: float
    boundary_flux: float
    discrepancy: float
    boundary_area: float
    volume: float
    nodes: int

    def to_dict(self) -> dict:
        return {
            "volume_integral": self.volume_integral,
            "boundary_flux": self.boundary_flux,
            "discrepancy": self.discrepancy,
            "boundary_area": self.boundary_area,
            "volume": self.volume,
            "quadrature_nodes": self.nodes,
        }


def _gl(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _balance(m: SemidirectModel, box, field: Field, n: int) -> DivergenceBalance:
    lo = np.array(box[0::2], dtype=float)
    hi = np.array(box[1::2], dtype=float)
    nodes = [_gl(lo[k], hi[k], n) for k in range(3)]
    step = 1e-3 * float(np.min(hi - lo))

    P = np.stack(np.meshgrid(*(x for x, _ in nodes), indexing="ij"), axis=-1)
    W = np.einsum("i,j,k->ijk", *(w for _, w in nodes))
    rho = np.sqrt(np.linalg.det(metric_at(m, P)))
    vol_integral = float(np.sum(W * rho * divergence(m, field, P, step)))
    volume = float(np.sum(W * rho))

    flux = 0.0
    area = 0.0
    for k in range(3):
        i, j = [a for a in range(3) if a != k]
        (xi, wi), (xj, wj) = nodes[i], nodes[j]
        Ui, Uj = np.meshgrid(xi, xj, indexing="ij")
        Wf = np.outer(wi, wj)
        for side, value in ((-1.0, lo[k]), (1.0, hi[k])):
            Q = np.empty(Ui.shape + (3,))
            Q[..., i], Q[..., j], Q[..., k] = Ui, Uj, value
            g = metric_at(m, Q)
            face = g[..., [i, j], :][..., [i, j]]
            dA = np.sqrt(np.linalg.det(face))
            ginv_kk = np.linalg.inv(g)[..., k, k]
            # outward unit normal is side * g^{-1} dx^k / |dx^k|
            normal_component = side * field(Q)[..., k] / np.sqrt(ginv_kk)
            flux += float(np.sum(Wf * normal_component * dA))
            area += float(np.sum(Wf * dA))
    return DivergenceBalance(vol_integral, flux, abs(vol_integral - flux), area, volume, n)


def divergence_balance(
    m: SemidirectModel, box: Sequence[float], field: Field, n: int = 16
) -> DivergenceBalance:
    """Compare ``int div F dVol`` with the outward flux of ``F`` through a cuboid.

    ``box`` is ``(x0, x1, y0, y1, z0, z1)``.  The rule is refined once; the
    finer result is returned unless refinement made the discrepancy worse.
    """
    box = [float(b) for b in box]
    if len(box) != 6 or not all(box[2 * k] < box[2 * k + 1] for k in range(3)):
        raise ValidationError("box must be x0,x1,y0,y1,z0,z1 with each lower bound below its upper")
    coarse = _balance(m, box, field, n)
    fine = _balance(m, box, field, 2 * n)
    scale = max(abs(fine.volume_integral), abs(fine.boundary_flux), fine.boundary_area)
    if fine.discrepancy > coarse.discrepancy and fine.discrepancy > 1e-9 * scale:
        raise QuadratureError(
            f"divergence discrepancy grew under refinement ({coarse.discrepancy:.3e} -> {fine.discrepancy:.3e})"
        )
    return fine

"""Geodesics in semidirect models and geodesic-ball isoperimetric ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeshTooCoarseError, StepSizeError, ValidationError
from .models import (
    ProductS2R,
    SemidirectModel,
    christoffel_at,
    frame_to_coords,
    metric_at,
)

SPEED_DRIFT_LIMIT = 1e-6
FD_ANGLE_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    times: np.ndarray
    points: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3), coordinate basis
    step: float

    def speeds(self, m: SemidirectModel) -> np.ndarray:
        g = metric_at(m, self.points)
        return np.sqrt(np.einsum("ni,nij,nj->n", self.velocities, g, self.velocities))


@dataclass(frozen=True)
class BallReport:
    r: float
    volume: float
    area: float
    ratio: float
    mesh: tuple[int, int, int]

    def csv_row(self) -> str:
        return f"{self.r!r},{self.volume!r},{self.area!r},{self.ratio!r}"


def _rhs(m: SemidirectModel, state: np.ndarray) -> np.ndarray:
    x, v = state[..., :3], state[..., 3:]
    Gam = christoffel_at(m, x)
    acc = -np.einsum("...kij,...i,...j->...k", Gam, v, v)
    return np.concatenate([v, acc], axis=-1)


def _rk4_step(m: SemidirectModel, y: np.ndarray, h: float) -> np.ndarray:
    k1 = _rhs(m, y)
    k2 = _rhs(m, y + 0.5 * h * k1)
    k3 = _rhs(m, y + 0.5 * h * k2)
    k4 = _rhs(m, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_to(m: SemidirectModel, y0: np.ndarray, times, h: float) -> np.ndarray:
    """RK4 states at each of the increasing ``times`` (starting from t=0).

    Between consecutive output times the interval is split into equal
    substeps no longer than ``h``.
    """
    y = np.array(y0, dtype=float)
    out = []
    t_prev = 0.0
    # blow-up shows up as non-finite speeds in _check_drift
    with np.errstate(over="ignore", invalid="ignore"):
        for t in times:
            span = t - t_prev
            if span < 0:
                raise ValueError("output times must be increasing")
            n = max(1, math.ceil(span / h - 1e-12)) if span > 0 else 0
            for _ in range(n):
                y = _rk4_step(m, y, span / n)
            out.append(y.copy())
            t_prev = t
    return np.stack(out)


def _speed(m: SemidirectModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    g = metric_at(m, x)
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))


def _check_drift(m: SemidirectModel, y0: np.ndarray, ys: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        s0 = _speed(m, y0[..., :3], y0[..., 3:])
        s = _speed(m, ys[..., :3], ys[..., 3:])
    if not np.all(np.isfinite(s)):
        raise StepSizeError("geodesic integration blew up; reduce the step size")
    drift = np.abs(s - s0) / np.maximum(s0, 1.0)
    worst = float(np.max(drift)) if drift.size else 0.0
    if worst > SPEED_DRIFT_LIMIT:
        raise StepSizeError(f"geodesic speed drifted by {worst:.3e}; reduce the step size")
    return worst


def geodesic(
    m: SemidirectModel,
    p0,
    v0,
    T: float,
    h: float = 1e-3,
    basis: str = "coords",
) -> GeodesicPath:
    """Integrate the geodesic with ``x(0)=p0``, ``x'(0)=v0`` up to time ``T``.

    ``v0`` is given in the coordinate basis unless ``basis="frame"``.
    """
    if not (h > 0 and T > 0):
        raise ValidationError("geodesic needs h > 0 and T > 0")
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if basis == "frame":
        v0 = frame_to_coords(m, p0, v0)
    elif basis != "coords":
        raise ValidationError(f"unknown basis {basis!r}")
    n = max(1, math.ceil(T / h - 1e-12))
    times = np.linspace(0.0, T, n + 1)
    y0 = np.concatenate([p0, v0])
    ys = np.concatenate([y0[None], integrate_to(m, y0, times[1:], h)])
    _check_drift(m, y0, ys)
    return GeodesicPath(times, ys[:, :3], ys[:, 3:], T / n)


# --------------------------------------------------------------------------
# geodesic balls


def _unit_directions(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def _ball_integrals(m: SemidirectModel, center, r: float, n_theta: int, n_phi: int, n_r: int, h: float):
    t_nodes, t_weights = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(t_nodes)
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    TH, PH = np.meshgrid(theta, phi, indexing="ij")

    d = FD_ANGLE_STEP
    stencil = [(0.0, 0.0), (d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d)]
    dirs = np.stack([_unit_directions(TH + a, PH + b) for a, b in stencil])
    center = np.asarray(center, dtype=float)
    v0 = frame_to_coords(m, center, dirs)
    y0 = np.concatenate([np.broadcast_to(center, v0.shape), v0], axis=-1)

    r_nodes, r_weights = np.polynomial.legendre.leggauss(n_r)
    rho = 0.5 * r * (r_nodes + 1.0)
    times = np.concatenate([rho, [r]])
    ys = integrate_to(m, y0, times, h)
    _check_drift(m, y0, ys)

    X = ys[..., :3]  # (time, stencil, theta, phi, 3)
    X_theta = (X[:, 1] - X[:, 2]) / (2 * d)
    X_phi = (X[:, 3] - X[:, 4]) / (2 * d)
    X_rho = ys[:, 0, ..., 3:]
    X0 = X[:, 0]
    g = metric_at(m, X0)

    # boundary sphere (last output time)
    gs = g[-1]
    E = np.einsum("...i,...ij,...j->...", X_theta[-1], gs, X_theta[-1])
    F = np.einsum("...i,...ij,...j->...", X_theta[-1], gs, X_phi[-1])
    G = np.einsum("...i,...ij,...j->...", X_phi[-1], gs, X_phi[-1])
    dens = np.sqrt(np.maximum(E * G - F * F, 0.0))
    w2 = t_weights[:, None] * (2.0 * np.pi / n_phi) / np.sin(theta)[:, None]
    area = float(np.sum(w2 * dens))

    # ball volume: |det[X_rho, X_theta, X_phi]| sqrt(det g) over radial nodes
    J = np.abs(np.linalg.det(np.stack([X_rho[:-1], X_theta[:-1], X_phi[:-1]], axis=-1)))
    J = J * np.sqrt(np.linalg.det(g[:-1]))
    shell = np.sum(w2[None] * J, axis=(1, 2))
    volume = float(0.5 * r * np.sum(r_weights * shell))
    return volume, area


def normalized_ratio(area: float, volume: float) -> float:
    return area / (36.0 * np.pi * volume * volume) ** (1.0 / 3.0)


def geodesic_ball(
    m: SemidirectModel,
    center,
    r: float,
    mesh: tuple[int, int, int] = (16, 32, 8),
    h: float = 1e-3,
    refinement_check: bool = True,
) -> BallReport:
    """Volume, boundary area and ``area / (36 pi vol^2)^(1/3)`` of a geodesic ball.

    The sphere is the image of a Gauss-Legendre (in cos theta) by uniform
    (in phi) grid of unit directions under the exponential map at
    ``center``; tangent vectors come from central differences between
    neighbouring geodesics.
    """
    n_theta, n_phi, n_r = (int(k) for k in mesh)
    if r <= 0:
        raise ValidationError("ball radius must be positive")
    if min(n_theta, n_phi, n_r) < 8:
        raise ValidationError("ball mesh sizes must all be at least 8")
    volume, area = _ball_integrals(m, center, r, n_theta, n_phi, n_r, h)
    if refinement_check:
        _, area_fine = _ball_integrals(m, center, r, 2 * n_theta, 2 * n_phi, n_r, h)
        if abs(area_fine - area) > 0.01 * abs(area_fine):
            raise MeshTooCoarseError(
                f"sphere area changed by {abs(area_fine - area) / area_fine:.2%} under refinement"
            )
    return BallReport(float(r), volume, area, normalized_ratio(area, volume), (n_theta, n_phi, n_r))


def cylinder_ratio(m: ProductS2R, R: float) -> float:
    """Boundary area over volume of ``S^2(kappa) x [0, R]``.

    The boundary is two copies of the sphere and the volume is ``R`` times
    its area, so the sphere area (and kappa) cancels exactly.
    """
    if not R > 0 or not math.isfinite(R):
        raise ValidationError("cylinder height R must be positive and finite")
    return 2.0 / R

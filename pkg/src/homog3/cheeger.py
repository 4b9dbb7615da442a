"""Box domains B(n, t0) and quotient ends in semidirect models.

In the canonical model the foliation normal is ``d/dz`` and its flow is
vertical translation, so a box is ``F(n) x [0, t0]`` in coordinates where
``F(n)`` is an ``n x n`` block of lattice cells in the plane ``z = 0``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InfiniteVolumeError, ValidationError
from .models import Matrix2, mat_exp

UNIT_LATTICE = ((1.0, 0.0), (0.0, 1.0))
SWEEP_COLUMNS = ("n", "t0", "bottom", "top", "sides", "volume", "ratio", "trace_A")


def thread_count() -> int:
    """Worker count from ``HOMOG3_THREADS`` (0 or unset means automatic)."""
    raw = os.environ.get("HOMOG3_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"HOMOG3_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValidationError("HOMOG3_THREADS must be non-negative")
    return n if n > 0 else min(8, os.cpu_count() or 1)


def _lattice(lattice) -> tuple[np.ndarray, np.ndarray, float]:
    a1, a2 = (np.asarray(a, dtype=float) for a in lattice)
    if a1.shape != (2,) or a2.shape != (2,) or not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
        raise ValidationError("lattice vectors must be two finite 2-vectors")
    cell = abs(a1[0] * a2[1] - a1[1] * a2[0])
    if cell <= 1e-12 * max(1.0, float(np.linalg.norm(a1) * np.linalg.norm(a2))):
        raise ValidationError("lattice vectors are linearly dependent")
    return a1, a2, float(cell)


def _composite_gl(a: float, b: float, panel: float, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    k = max(1, math.ceil((b - a) / panel))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, k + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def _growth_scale(A: Matrix2) -> float:
    return max(1.0, float(np.max(np.abs(A.array))))


@dataclass(frozen=True)
class BoxDomain:
    A: Matrix2
    n: int
    t0: float
    lattice: tuple = UNIT_LATTICE
    panel: float = 0.25  # quadrature panel length in z, before scaling by |A|

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("box size n must be a positive integer")
        if not (self.t0 > 0 and math.isfinite(self.t0)):
            raise ValidationError("box height t0 must be positive")
        _lattice(self.lattice)


@dataclass(frozen=True)
class BoxReport:
    n: int
    t0: float
    bottom: float
    top: float
    sides: float
    volume: float
    ratio: float
    trace_A: float
    closed_form: dict | None = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SWEEP_COLUMNS}


def _eigen_decay(A: Matrix2, a: np.ndarray) -> float | None:
    """Real eigenvalue of ``A`` with eigenvector ``a``, if ``a`` is one."""
    Aa = A.array @ a
    lam = float(Aa @ a / (a @ a))
    if np.linalg.norm(Aa - lam * a) <= 1e-13 * max(1.0, np.linalg.norm(Aa)):
        return lam
    return None


def _int_exp(lam: float, t0: float) -> float:
    """``int_0^t0 e^{-lam z} dz``."""
    if lam == 0.0:
        return t0
    return -math.expm1(-lam * t0) / lam


def box_closed_form(b: BoxDomain) -> dict:
    """Exact face areas and volume; ``sides`` is None unless both lattice
    vectors are eigenvectors of A."""
    a1, a2, cell = _lattice(b.lattice)
    tau = b.A.trace
    n2 = b.n * b.n
    out = {
        "bottom": n2 * cell,
        "top": n2 * cell * math.exp(-tau * b.t0),
        "volume": n2 * cell * _int_exp(tau, b.t0),
        "sides": None,
    }
    lams = [_eigen_decay(b.A, a) for a in (a1, a2)]
    if all(lam is not None for lam in lams):
        out["sides"] = 2 * b.n * sum(
            float(np.linalg.norm(a)) * _int_exp(lam, b.t0) for a, lam in zip((a1, a2), lams)
        )
    return out


def _density_by_powers(A: Matrix2, z: np.ndarray) -> np.ndarray:
    """``|det e^{-zA}|`` as ``|det e^{-zA/k}|^k`` with ``|z| |A| / k <= 1``.

    Evaluating the determinant of ``e^{-zA}`` directly cancels
    catastrophically when the eigenvalues of ``A`` have large opposite signs.
    """
    scale = float(np.max(np.abs(A.array)))
    k = np.maximum(1, np.ceil(np.abs(z) * scale)).astype(int)
    small = np.abs(np.linalg.det(mat_exp(A, -z / k)))
    return small ** k


def box_report(b: BoxDomain) -> BoxReport:
    a1, a2, cell = _lattice(b.lattice)
    n2 = b.n * b.n
    z, w = _composite_gl(0.0, b.t0, b.panel / _growth_scale(b.A))

    volume = n2 * cell * float(np.sum(w * _density_by_powers(b.A, z)))
    bottom, top = n2 * cell * _density_by_powers(b.A, np.array([0.0, b.t0]))
    # each pair of opposite side faces: n copies of a lattice vector swept over z;
    # |a|_z = |e^{-zA} a| since the metric at height z is M^T M with M = e^{-zA}
    M = mat_exp(b.A, -z)
    lengths = sum(np.linalg.norm(M @ a, axis=-1) for a in (a1, a2))
    sides = 2 * b.n * float(np.sum(w * lengths))
    ratio = (bottom + top + sides) / volume
    return BoxReport(b.n, float(b.t0), float(bottom), float(top), sides, volume, ratio, b.A.trace, box_closed_form(b))


def box_ratio_sweep(
    A: Matrix2,
    lattice=UNIT_LATTICE,
    ns: Sequence[int] = (4, 8, 16, 32, 64),
    t0s: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
) -> list[BoxReport]:
    """Box reports over the grid ``ns x t0s`` in row-major order."""
    boxes = [BoxDomain(A, int(n), float(t0), tuple(map(tuple, lattice))) for n in ns for t0 in t0s]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(box_report, boxes))


@dataclass(frozen=True)
class QuotientEndReport:
    T: float
    cell_area: float
    volume: float
    area: float
    residual: float
    volume_quadrature: float
    area_quadrature: float
    residual_quadrature: float

    def to_dict(self) -> dict:
        return asdict(self)


def quotient_end_report(A: Matrix2, lattice=UNIT_LATTICE, T: float = 0.0) -> QuotientEndReport:
    """Volume of the end above height ``T`` in ``(R^2 x_A R) / lattice`` and
    the area of its boundary torus."""
    _, _, cell = _lattice(lattice)
    tau = A.trace
    if not tau > 0:
        raise InfiniteVolumeError(f"the end above T has infinite volume when trace(A)={tau:g} <= 0")
    H = 0.5 * tau
    volume = cell * math.exp(-tau * T) / tau
    area = cell * math.exp(-tau * T)

    z, w = _composite_gl(T, T + 45.0 / tau, 0.5 / tau)
    vq = cell * float(np.sum(w * _density_by_powers(A, z)))
    aq = cell * float(_density_by_powers(A, np.array([T]))[0])
    return QuotientEndReport(
        float(T), cell, volume, area, abs(2 * H * volume - area), vq, aq, abs(2 * H * vq - aq)
    )

"""Jacobi operator on leaf tori and Newton continuation of CMC tori.

The quotient is ``W = (R^2 x_A R) / Lambda`` with ``Lambda`` a lattice of
horizontal translations, and the surfaces are vertical graphs
``z = z0 + u(s, t)`` over the leaf torus, parametrized by lattice
coordinates ``(s, t) in [0, 1)^2`` so that ``(x, y) = s a1 + t a2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceError,
    KernelCollapseError,
    SingularSolveError,
    ValidationError,
)
from .invariant_geometry import curvature_report, leaf_shape
from .models import (
    Matrix2,
    SemidirectModel,
    christoffel_at,
    frame_data,
    horizontal_metric,
    metric_at,
)
from .surfaces import FiniteDifferenceAmbient, shape_from_derivatives, surface_geometry

UNIT_LATTICE = ((1.0, 0.0), (0.0, 1.0))
KERNEL_TOL = 1e-6
NEWTON_TOL = 1e-8
MAX_NEWTON_STEPS = 25
EPS_WORKING_RANGE = 0.05


class JacobiMultiplicityWarning(UserWarning):
    """More than one near-kernel eigenvalue of a Jacobi operator."""


def jacobi_potential(A: Matrix2) -> float:
    """``|sigma|^2 + Ric(E3, E3)`` for the leaves of the canonical metric."""
    ric = curvature_report(frame_data(SemidirectModel(A))).ricci
    return float(leaf_shape(A).norm_sq + ric[2, 2])


# --------------------------------------------------------------------------
# grids and the discrete operator


@dataclass(frozen=True, eq=False)
class TorusGrid:
    A: Matrix2
    n: int
    lattice: tuple = UNIT_LATTICE
    z0: float = 0.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 4:
            raise ValidationError("torus grids need at least 4 nodes per direction")
        B = self.basis
        if B.shape != (2, 2) or not np.all(np.isfinite(B)):
            raise ValidationError("lattice must be two finite 2-vectors")
        if abs(np.linalg.det(B)) <= 1e-12 * max(1.0, float(np.max(np.abs(B))) ** 2):
            raise ValidationError("lattice vectors are linearly dependent")

    @property
    def basis(self) -> np.ndarray:
        """Columns are the lattice vectors."""
        return np.asarray(self.lattice, dtype=float).T

    @property
    def orientation(self) -> float:
        return float(np.sign(np.linalg.det(self.basis)))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def params(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.n) * self.h
        return np.meshgrid(s, s, indexing="ij")

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates ``(n, n, 3)`` of the grid on the leaf at height ``z0``."""
        S, T = self.params
        xy = np.einsum("ab,...b->...a", self.basis, np.stack([S, T], axis=-1))
        return np.concatenate([xy, np.full(S.shape + (1,), float(self.z0))], axis=-1)

    @property
    def metric(self) -> np.ndarray:
        """Flat induced metric in ``(s, t)``; constant over the leaf."""
        G = horizontal_metric(SemidirectModel(self.A), self.z0)
        return self.basis.T @ G @ self.basis

    @property
    def area(self) -> float:
        return math.sqrt(np.linalg.det(self.metric))

    @property
    def weights(self) -> np.ndarray:
        """Area weight of each node (flattened, C order)."""
        return np.full(self.n * self.n, self.area * self.h * self.h)


def _periodic_shift(n: int, k: int) -> sp.csr_matrix:
    """Matrix of ``u[i] -> u[i + k mod n]`` in one direction."""
    k %= n
    if k == 0:
        return sp.identity(n, format="csr")
    return sp.diags([1.0, 1.0], [k, k - n], shape=(n, n), format="csr")


def torus_laplacian(grid: TorusGrid) -> sp.csr_matrix:
    """Second-order Laplace-Beltrami matrix of the flat leaf metric.

    Five-point stencil in each direction plus the four-corner mixed stencil
    when the lattice coordinates are not orthogonal.
    """
    n, h = grid.n, grid.h
    ginv = np.linalg.inv(grid.metric)
    I = sp.identity(n, format="csr")
    fwd, bwd = _periodic_shift(n, 1), _periodic_shift(n, -1)
    d2 = (fwd - 2 * I + bwd) / (h * h)
    d1 = (fwd - bwd) / (2 * h)
    L = ginv[0, 0] * sp.kron(d2, I) + ginv[1, 1] * sp.kron(I, d2)
    if ginv[0, 1] != 0.0:
        L = L + 2 * ginv[0, 1] * sp.kron(d1, d1)
    return sp.csr_matrix(L)


def _start_vector(N: int) -> np.ndarray:
    """Fixed Lanczos start vector so results are reproducible bit for bit."""
    return 1.0 + 0.5 * np.sin(np.arange(N) * 1.234567)


@dataclass(frozen=True, eq=False)
class JacobiOperator:
    """``L = Delta + q`` on grid functions (flattened, C order)."""

    grid: TorusGrid
    matrix: sp.csr_matrix
    q: np.ndarray
    weights: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ np.ravel(u)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.weights * np.ravel(u) * np.ravel(v)))

    def integral(self, u: np.ndarray) -> float:
        return float(np.sum(self.weights * np.ravel(u)))

    def norm(self) -> float:
        """Spectral norm (largest |eigenvalue|) of the self-adjoint operator."""
        W = sp.diags(self.weights)
        vals = spla.eigsh(
            W @ self.matrix, k=1, M=W, which="LM", return_eigenvectors=False, tol=1e-8, v0=_start_vector(W.shape[0])
        )
        return float(abs(vals[0]))


def jacobi_operator(grid: TorusGrid, q_shift: float = 0.0, q: np.ndarray | None = None) -> JacobiOperator:
    """Jacobi operator of the leaf torus; ``q`` defaults to the leaf potential."""
    N = grid.n * grid.n
    if q is None:
        q = np.full(N, jacobi_potential(grid.A))
    q = np.broadcast_to(np.asarray(q, dtype=float).ravel(), (N,)) + q_shift
    L = torus_laplacian(grid) + sp.diags(q)
    return JacobiOperator(grid, sp.csr_matrix(L), np.array(q), grid.weights)


@dataclass(frozen=True, eq=False)
class KernelReport:
    functions: list  # area-normalized, with positive mean
    eigenvalues: np.ndarray  # eigenvalues nearest zero, ascending by |value|
    threshold: float
    second_eigenvalue: float | None  # nearest-to-zero eigenvalue outside the kernel

    @property
    def dimension(self) -> int:
        return len(self.functions)


def kernel_basis(L: JacobiOperator, tol: float = KERNEL_TOL, k: int = 6) -> KernelReport:
    """Eigenfunctions with ``|eigenvalue| <= tol * ||L||``.

    Uses shift-invert Lanczos on the area-weighted pencil around a small
    negative shift (zero itself is, by hypothesis, an eigenvalue).
    """
    W = sp.diags(L.weights)
    S = sp.csc_matrix(W @ L.matrix)
    S = 0.5 * (S + S.T)
    threshold = tol * L.norm()
    N = S.shape[0]
    k = min(k, N - 2)
    shift = -0.01 * threshold if threshold > 0 else -1e-8
    vals, vecs = spla.eigsh(S, k=k, M=sp.csc_matrix(W), sigma=shift, which="LM", tol=1e-13, v0=_start_vector(N))
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    inside = np.abs(vals) <= threshold
    funcs = []
    for v in vecs[:, inside].T:
        v = v / math.sqrt(L.inner(v, v))
        mean = L.integral(v)
        funcs.append(-v if mean < 0 else v)
    if len(funcs) >= 2:
        warnings.warn(
            f"{len(funcs)} near-kernel eigenvalues found; expected a one-dimensional kernel",
            JacobiMultiplicityWarning,
            stacklevel=2,
        )
    outside = vals[~inside]
    second = float(outside[0]) if outside.size else None
    return KernelReport(funcs, vals, threshold, second)


def solve_projected(L: JacobiOperator, w: np.ndarray, phi: np.ndarray) -> tuple[float, np.ndarray]:
    """Solve ``L v = a - w`` with ``a`` chosen so the right side is
    area-orthogonal to the kernel function ``phi``; ``v`` is area-orthogonal
    to ``phi`` as well."""
    w = np.ravel(np.asarray(w, dtype=float))
    phi = np.ravel(np.asarray(phi, dtype=float))
    mass = L.integral(phi)
    if abs(mass) <= 1e-12 * math.sqrt(L.inner(phi, phi) * float(np.sum(L.weights))):
        raise SingularSolveError("kernel function has (numerically) zero mean")
    a = L.inner(w, phi) / mass
    rhs = a - w
    scale = max(math.sqrt(L.inner(w, w)), 1e-300)
    if abs(L.inner(rhs, phi)) > 1e-10 * scale * math.sqrt(L.inner(phi, phi)):
        raise SingularSolveError("right-hand side is not orthogonal to the kernel after projection")
    if not np.any(w):
        return 0.0, np.zeros_like(w)

    W = sp.diags(L.weights)
    Wphi = (L.weights * phi)[:, None]
    S = 0.5 * ((W @ L.matrix) + (W @ L.matrix).T)
    K = sp.bmat([[S, sp.csr_matrix(Wphi)], [sp.csr_matrix(Wphi.T), None]], format="csc")
    sol = spla.spsolve(K, np.append(L.weights * rhs, 0.0))
    if not np.all(np.isfinite(sol)):
        raise SingularSolveError("bordered Jacobi system is singular")
    v = sol[:-1]
    return float(a), v


# --------------------------------------------------------------------------
# periodic conformal perturbations


@dataclass(frozen=True)
class Perturbation:
    """Doubly periodic function ``phi(s, t, z)`` of lattice coordinates and
    height, with its partial derivatives."""

    name: str
    value: Callable
    grad: Callable  # returns (d/ds, d/dt, d/dz)


_TWO_PI = 2.0 * math.pi

PERTURBATIONS = {
    "cos": Perturbation(
        "cos",
        lambda s, t, z: np.cos(_TWO_PI * s) * np.cos(_TWO_PI * t),
        lambda s, t, z: (
            -_TWO_PI * np.sin(_TWO_PI * s) * np.cos(_TWO_PI * t),
            -_TWO_PI * np.cos(_TWO_PI * s) * np.sin(_TWO_PI * t),
            0.0 * z,
        ),
    ),
    # depends on height too, so the normal derivative of the factor is nonzero
    "tilt": Perturbation(
        "tilt",
        lambda s, t, z: np.sin(_TWO_PI * s) * (1.0 + z) + 0.5 * np.cos(_TWO_PI * t),
        lambda s, t, z: (
            _TWO_PI * np.cos(_TWO_PI * s) * (1.0 + z),
            -math.pi * np.sin(_TWO_PI * t),
            np.sin(_TWO_PI * s),
        ),
    ),
}


def get_perturbation(name: str | Perturbation) -> Perturbation:
    if isinstance(name, Perturbation):
        return name
    try:
        return PERTURBATIONS[name]
    except KeyError:
        raise ValidationError(f"unknown perturbation {name!r}; choose from {sorted(PERTURBATIONS)}") from None


def _lattice_coords(grid: TorusGrid, p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Binv = np.linalg.inv(grid.basis)
    st = np.einsum("ab,...b->...a", Binv, p[..., :2])
    return st[..., 0], st[..., 1], p[..., 2]


def perturbed_metric_fn(grid: TorusGrid, pert: Perturbation, eps: float) -> Callable:
    """``p -> (1 + eps phi(p))^2 g(p)`` in coordinates ``(x, y, z)``."""
    m = SemidirectModel(grid.A)

    def metric(p):
        p = np.asarray(p)
        factor = 1.0 + eps * pert.value(*_lattice_coords(grid, p))
        return factor[..., None, None] ** 2 * metric_at(m, p)

    return metric


# --------------------------------------------------------------------------
# mean curvature of vertical graphs


def _spectral_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative matrices of trigonometric interpolation
    on ``n`` equispaced nodes of the unit period."""
    k = np.fft.fftfreq(n, 1.0 / n)
    first = 2j * math.pi * k
    if n % 2 == 0:
        first[n // 2] = 0.0
    second = -(_TWO_PI * k) ** 2
    E = np.fft.fft(np.eye(n), axis=0)
    D1 = np.real(np.fft.ifft(first[:, None] * E, axis=0))
    D2 = np.real(np.fft.ifft(second[:, None] * E, axis=0))
    return D1, D2


@dataclass(frozen=True, eq=False)
class GraphOperators:
    """Spectral derivative matrices acting on flattened ``(n, n)`` grids."""

    Ds: np.ndarray
    Dt: np.ndarray
    Dss: np.ndarray
    Dst: np.ndarray
    Dtt: np.ndarray

    @classmethod
    def build(cls, n: int) -> "GraphOperators":
        D1, D2 = _spectral_matrices(n)
        I = np.eye(n)
        Ds, Dt = np.kron(D1, I), np.kron(I, D1)
        return cls(Ds, Dt, np.kron(D2, I), Ds @ Dt, np.kron(I, D2))

    def derivatives(self, u: np.ndarray) -> tuple[np.ndarray, ...]:
        u = np.ravel(u)
        return tuple(D @ u for D in (self.Ds, self.Dt, self.Dss, self.Dst, self.Dtt))


def _graph_mean_curvature(grid: TorusGrid, pert: Perturbation, eps: float, xy, u, us, ut, uss, ust, utt):
    """Pointwise mean curvature in ``g' = e^{2f} g``, ``e^f = 1 + eps phi``.

    Uses the conformal law ``H' = e^{-f} (H - df(N))`` with ``H`` and ``N``
    from the canonical metric.  Inputs may be complex.
    """
    m = SemidirectModel(grid.A)
    B = grid.basis
    z = grid.z0 + u
    X = np.concatenate([xy.astype(np.result_type(u, float)), z[..., None]], axis=-1)
    zero = np.zeros_like(u)
    Xs = np.stack([zero + B[0, 0], zero + B[1, 0], us], axis=-1)
    Xt = np.stack([zero + B[0, 1], zero + B[1, 1], ut], axis=-1)
    Xss = np.stack([zero, zero, uss], axis=-1)
    Xst = np.stack([zero, zero, ust], axis=-1)
    Xtt = np.stack([zero, zero, utt], axis=-1)
    _, _, N, H, _ = shape_from_derivatives(Xs, Xt, Xss, Xst, Xtt, metric_at(m, X), christoffel_at(m, X))
    H = grid.orientation * H
    N = grid.orientation * N

    s, t, _ = _lattice_coords(grid, X.real)
    factor = 1.0 + eps * pert.value(s, t, z)
    ds, dt, dz = pert.grad(s, t, z)
    # d(phi) in (x, y, z): chain rule through (s, t) = B^{-1} (x, y)
    Binv = np.linalg.inv(B)
    dx = Binv[0, 0] * ds + Binv[1, 0] * dt
    dy = Binv[0, 1] * ds + Binv[1, 1] * dt
    dphi_N = dx * N[..., 0] + dy * N[..., 1] + dz * N[..., 2]
    return (H - eps * dphi_N / factor) / factor, factor


@dataclass(frozen=True, eq=False)
class GraphProblem:
    grid: TorusGrid
    pert: Perturbation
    eps: float
    ops: GraphOperators
    xy: np.ndarray

    @classmethod
    def build(cls, grid: TorusGrid, pert, eps: float) -> "GraphProblem":
        return cls(grid, get_perturbation(pert), float(eps), GraphOperators.build(grid.n), grid.nodes[..., :2].reshape(-1, 2))

    def mean_curvature(self, u: np.ndarray) -> np.ndarray:
        u = np.ravel(u)
        H, _ = _graph_mean_curvature(self.grid, self.pert, self.eps, self.xy, u, *self.ops.derivatives(u))
        return H

    def factor(self, u: np.ndarray) -> np.ndarray:
        u = np.ravel(u)
        _, f = _graph_mean_curvature(self.grid, self.pert, self.eps, self.xy, u, *self.ops.derivatives(u))
        return f

    def jacobian(self, u: np.ndarray, h: float = 1e-30) -> np.ndarray:
        """``dH/du`` by complex steps in each pointwise argument
        ``(u, u_s, u_t, u_ss, u_st, u_tt)`` chained through the spectral
        derivative matrices."""
        u = np.ravel(u)
        args = [u, *self.ops.derivatives(u)]
        mats = [None, self.ops.Ds, self.ops.Dt, self.ops.Dss, self.ops.Dst, self.ops.Dtt]
        J = np.zeros((u.size, u.size))
        for i, D in enumerate(mats):
            bumped = [a.astype(complex) for a in args]
            bumped[i] = bumped[i] + 1j * h
            H, _ = _graph_mean_curvature(self.grid, self.pert, self.eps, self.xy, *bumped)
            partial = H.imag / h
            if D is None:
                J[np.diag_indices_from(J)] += partial
            else:
                J += partial[:, None] * D
        return J


def trig_interpolate(values: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Real trigonometric interpolant of a periodic ``(n, n)`` grid function
    on the unit square, evaluated at ``(s, t)``."""
    n = values.shape[0]
    c = np.fft.fft2(values) / (n * n)
    k = np.fft.fftfreq(n, 1.0 / n)
    es = np.exp(2j * math.pi * np.multiply.outer(s, k))
    et = np.exp(2j * math.pi * np.multiply.outer(t, k))
    return np.real(np.einsum("...k,kl,...l->...", es, c, et))


def fd_mean_curvature(
    grid: TorusGrid,
    pert,
    eps: float,
    u: np.ndarray,
    nodes: np.ndarray,
    h: float = 1e-3,
) -> np.ndarray:
    """Mean curvature in ``g'`` of the graph of ``u`` at grid ``nodes``
    (index pairs), by finite differences.

    Each node gets 9x9 patches of the trigonometric interpolant of ``u`` at
    spacings ``h`` and ``h/2``, combined by one Richardson step; Christoffel
    symbols come from finite differences of ``g'`` itself.
    """
    pert = get_perturbation(pert)
    u = np.asarray(u, dtype=float).reshape(grid.n, grid.n)
    amb = FiniteDifferenceAmbient(perturbed_metric_fn(grid, pert, eps))

    def at(i: int, j: int, step: float) -> float:
        offsets = (np.arange(9) - 4) * step
        S, T = np.meshgrid(i * grid.h + offsets, j * grid.h + offsets, indexing="ij")
        Z = grid.z0 + trig_interpolate(u, S, T)
        xy = np.einsum("ab,...b->...a", grid.basis, np.stack([S, T], axis=-1))
        pts = np.concatenate([xy, Z[..., None]], axis=-1)
        return grid.orientation * surface_geometry(amb, pts, (step, step)).mean_curvature[4, 4]

    out = [(4.0 * at(i, j, 0.5 * h) - at(i, j, h)) / 3.0 for i, j in np.asarray(nodes)]
    return np.array(out)


# --------------------------------------------------------------------------
# Newton continuation


@dataclass(frozen=True)
class NewtonRecord:
    step: int
    residual: float
    c: float
    constraint: float
    max_abs_u: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "residual": self.residual,
            "c": self.c,
            "constraint": self.constraint,
            "max_abs_u": self.max_abs_u,
        }


@dataclass(frozen=True, eq=False)
class ContinuationState:
    eps: float
    t: float
    phi: np.ndarray  # conformal factor 1 + eps * phi_pert on the graph, (n, n)
    u: np.ndarray  # graph function, (n, n)
    c: float
    residual: float  # sup over nodes of |H(g', u) - c|
    kernel: np.ndarray  # area-normalized kernel function of the leaf, (n, n)
    steps: int
    history: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "t": self.t,
            "c": self.c,
            "residual": self.residual,
            "steps": self.steps,
            "trace": [r.to_dict() for r in self.history],
        }


def cmc_continue(
    A: Matrix2,
    lattice=UNIT_LATTICE,
    phi_pert="cos",
    eps: float = 0.01,
    n: int = 32,
    tol: float = NEWTON_TOL,
    t: float = 0.0,
    z0: float = 0.0,
    max_steps: int = MAX_NEWTON_STEPS,
) -> ContinuationState:
    """Constant mean curvature graph over the leaf torus in ``(1 + eps phi)^2 g``.

    Newton's method on ``(u, c)`` for ``H(g', u) = c`` together with
    ``<u, phi_0>_area = t``, where ``phi_0`` spans the kernel of the leaf's
    Jacobi operator.
    """
    if not A.trace > 0:
        raise ValidationError("continuation needs trace(A) > 0")
    if not math.isfinite(eps) or abs(eps) > EPS_WORKING_RANGE:
        raise ValidationError(f"|eps| must be at most {EPS_WORKING_RANGE}")
    if not (tol > 0 and math.isfinite(t)):
        raise ValidationError("tol must be positive and t finite")
    grid = TorusGrid(A, int(n), tuple(map(tuple, lattice)), float(z0))
    L = jacobi_operator(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", JacobiMultiplicityWarning)
        kern = kernel_basis(L)
    if kern.dimension != 1:
        raise KernelCollapseError(f"leaf Jacobi operator has a {kern.dimension}-dimensional near-kernel")
    phi0 = kern.functions[0]
    wphi = L.weights * phi0

    problem = GraphProblem.build(grid, phi_pert, eps)
    N = grid.n * grid.n
    u = np.zeros(N)
    c = 0.5 * A.trace
    history = []

    def record(step, u, c):
        H = problem.mean_curvature(u)
        r = float(np.max(np.abs(H - c)))
        con = float(wphi @ u - t)
        history.append(NewtonRecord(step, r, float(c), con, float(np.max(np.abs(u)))))
        return H, r, con

    H, r, con = record(0, u, c)
    steps = 0
    con_tol = 1e-12 * max(1.0, abs(t))
    while r > tol or abs(con) > con_tol:
        if steps >= max_steps:
            raise ConvergenceError(f"Newton did not converge in {max_steps} steps (residual {r:.3e})")
        J = problem.jacobian(u)
        K = np.zeros((N + 1, N + 1))
        K[:N, :N] = J
        K[:N, N] = -1.0
        K[N, :N] = wphi
        rhs = -np.append(H - c, con)
        try:
            delta = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError as exc:
            raise KernelCollapseError("augmented Newton system is singular") from exc
        if not np.all(np.isfinite(delta)):
            raise KernelCollapseError("augmented Newton system is singular")
        u = u + delta[:N]
        c = c + delta[N]
        steps += 1
        H, r, con = record(steps, u, c)
        if not math.isfinite(r):
            raise ConvergenceError("Newton iteration diverged")

    shape = (grid.n, grid.n)
    return ContinuationState(
        float(eps),
        float(t),
        problem.factor(u).real.reshape(shape),
        u.reshape(shape),
        float(c),
        r,
        phi0.reshape(shape),
        steps,
        tuple(history),
    )

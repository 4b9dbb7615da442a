"""Levi-Civita connection and curvature of left-invariant metrics.

Everything here works on constant frame data, so tensors are plain arrays:
``Gamma[k, i, j]`` is the ``E_k`` component of ``nabla_{E_i} E_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, UnsupportedModelError
from .models import (
    FrameMetricData,
    Matrix2,
    ProductS2R,
    SemidirectModel,
    Sl2FrameMetric,
    frame_data,
)

# The metric on SL~(2,R) making the standard sl(2,R) basis orthonormal is
# isometric to the canonical metric of R^2 x_A R for this A.
SL2_ISOMETRIC_A = Matrix2(2.0, 0.0, 2.0, 0.0)


@dataclass(frozen=True, eq=False)
class ConnectionTable:
    Gamma: np.ndarray

    def covariant(self, i: int, j: int) -> np.ndarray:
        """Frame components of ``nabla_{E_i} E_j``."""
        return self.Gamma[:, i, j]


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    ricci: np.ndarray  # Ric(E_i, E_j)
    ricci_eigenvalues: np.ndarray  # ascending
    scalar: float
    sectional: np.ndarray  # K(E1,E2), K(E1,E3), K(E2,E3)

    def to_dict(self) -> dict:
        return {
            "ricci": self.ricci.tolist(),
            "ricci_eigenvalues": self.ricci_eigenvalues.tolist(),
            "scalar_curvature": float(self.scalar),
            "sectional_curvatures": {
                "E1E2": float(self.sectional[0]),
                "E1E3": float(self.sectional[1]),
                "E2E3": float(self.sectional[2]),
            },
        }


@dataclass(frozen=True, eq=False)
class LeafShape:
    sigma: np.ndarray  # second fundamental form in the {E1, E2} frame
    H: float
    norm_sq: float


def _check_positive_definite(g: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("frame inner products are not positive definite") from exc


def koszul_connection(fd: FrameMetricData) -> ConnectionTable:
    """Connection coefficients from the Koszul formula.

    For left-invariant fields
    ``2<nabla_X Y, Z> = <[X,Y],Z> - <[Y,Z],X> + <[Z,X],Y>``.
    """
    _check_positive_definite(fd.g)
    C, g = fd.C, fd.g
    # lowered[m, i, j] = <[E_i, E_j], E_m>
    lowered = np.einsum("kij,km->mij", C, g)
    # low[i, j, l] = <nabla_{E_i} E_j, E_l>
    low = 0.5 * (
        np.einsum("lij->ijl", lowered)
        - np.einsum("ijl->ijl", lowered)
        + np.einsum("jli->ijl", lowered)
    )
    Gamma = np.einsum("kl,ijl->kij", np.linalg.inv(g), low)
    return ConnectionTable(Gamma)


def semidirect_connection(A: Matrix2) -> ConnectionTable:
    """Closed-form connection of the canonical metric on R^2 x_A R."""
    a, b, c, d = A.a, A.b, A.c, A.d
    s = 0.5 * (b + c)
    r = 0.5 * (c - b)
    G = np.zeros((3, 3, 3))
    G[2, 0, 0] = a
    G[2, 0, 1] = s
    G[0, 0, 2], G[1, 0, 2] = -a, -s
    G[2, 1, 0] = s
    G[2, 1, 1] = d
    G[0, 1, 2], G[1, 1, 2] = -s, -d
    G[1, 2, 0] = r
    G[0, 2, 1] = -r
    return ConnectionTable(G)


def torsion_residual(table: ConnectionTable, fd: FrameMetricData) -> float:
    T = table.Gamma - np.swapaxes(table.Gamma, 1, 2) - fd.C
    return float(np.max(np.abs(T)))


def metric_residual(table: ConnectionTable, fd: FrameMetricData) -> float:
    """Max of ``|<nabla_i E_j, E_l> + <E_j, nabla_i E_l>|``."""
    low = np.einsum("kij,kl->ijl", table.Gamma, fd.g)
    return float(np.max(np.abs(low + np.swapaxes(low, 1, 2))))


def riemann_tensor(fd: FrameMetricData, table: ConnectionTable | None = None) -> np.ndarray:
    """``R[l, i, j, k]``: ``E_l`` component of ``R(E_i, E_j) E_k``.

    ``R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.
    """
    G = koszul_connection(fd).Gamma if table is None else table.Gamma
    first = np.einsum("mjk,lim->lijk", G, G)
    return first - np.swapaxes(first, 1, 2) - np.einsum("mij,lmk->lijk", fd.C, G)


def curvature_report(fd: FrameMetricData) -> CurvatureReport:
    L = _check_positive_definite(fd.g)
    R = riemann_tensor(fd)
    ricci = np.einsum("iijk->jk", R)
    ricci = 0.5 * (ricci + ricci.T)
    Linv = np.linalg.inv(L)
    eig = np.linalg.eigvalsh(Linv @ ricci @ Linv.T)
    scalar = float(np.einsum("jk,jk->", np.linalg.inv(fd.g), ricci))
    g = fd.g
    sectional = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        Rijji = np.einsum("l,l->", R[:, i, j, j], g[:, i])
        sectional.append(Rijji / (g[i, i] * g[j, j] - g[i, j] ** 2))
    return CurvatureReport(ricci, np.sort(eig), scalar, np.array(sectional))


def product_curvature_report(model: ProductS2R) -> CurvatureReport:
    """Curvature of S^2(kappa) x R in an orthonormal frame (E3 vertical)."""
    k = model.kappa
    ricci = np.diag([k, k, 0.0])
    return CurvatureReport(ricci, np.array([0.0, k, k]), 2.0 * k, np.array([k, 0.0, 0.0]))


def model_curvature(model) -> CurvatureReport:
    if isinstance(model, ProductS2R):
        return product_curvature_report(model)
    return curvature_report(frame_data(model))


def leaf_shape(A: Matrix2) -> LeafShape:
    """Shape of the leaves ``R^2 x_A {z}`` with respect to ``E3``."""
    s = 0.5 * (A.b + A.c)
    sigma = np.array([[A.a, s], [s, A.d]])
    return LeafShape(sigma, 0.5 * A.trace, float(np.sum(sigma * sigma)))


def is_unimodular(A: Matrix2, tol: float = 1e-12) -> bool:
    return abs(A.trace) <= tol * max(1.0, float(np.max(np.abs(A.array))))


def cheeger_report(model) -> dict:
    """Cheeger constant and critical mean curvature where closed forms exist."""
    if isinstance(model, SemidirectModel):
        tr = model.trace
        return {"Ch": tr, "Hcrit": 0.5 * tr, "unimodular": is_unimodular(model.A)}
    if isinstance(model, Sl2FrameMetric):
        if model.lambdas != (1.0, 1.0, 1.0):
            raise UnsupportedModelError(
                "Cheeger constant of SL~(2,R) is only available for lambda=(1,1,1)"
            )
        own = curvature_report(frame_data(model)).ricci_eigenvalues
        ref = curvature_report(frame_data(SemidirectModel(SL2_ISOMETRIC_A))).ricci_eigenvalues
        if not np.allclose(own, ref, rtol=0.0, atol=1e-10):
            raise UnsupportedModelError("Ricci spectra do not match the semidirect identification")
        tr = SL2_ISOMETRIC_A.trace
        # unimodular as a group, even though the isometric semidirect model is not
        return {"Ch": tr, "Hcrit": 0.5 * tr, "unimodular": True}
    if isinstance(model, ProductS2R):
        return {"Ch": 0.0, "Hcrit": 0.0, "unimodular": None}
    raise UnsupportedModelError(f"no Cheeger report for {type(model).__name__}")

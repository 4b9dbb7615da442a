import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from homog3.cheeger import (
    BoxDomain,
    box_closed_form,
    box_ratio_sweep,
    box_report,
    quotient_end_report,
    thread_count,
)
from homog3.errors import InfiniteVolumeError, ValidationError
from homog3.models import Matrix2

from conftest import matrices, random_matrix


def random_lattice(rng):
    while True:
        L = rng.uniform(-1.5, 1.5, (2, 2))
        if abs(np.linalg.det(L)) > 0.2:
            return tuple(map(tuple, L))


def quad_oracle(A, lattice, n, t0):
    """Face areas and volume from adaptive quadrature of expm."""
    a1, a2 = (np.asarray(a) for a in lattice)
    cell = abs(a1[0] * a2[1] - a1[1] * a2[0])
    M = lambda z: scipy.linalg.expm(-z * A.array)  # noqa: E731
    dens = lambda z: abs(np.linalg.det(M(z)))  # noqa: E731
    vol = scipy.integrate.quad(dens, 0, t0, epsabs=0, epsrel=1e-13)[0]
    sides = sum(
        scipy.integrate.quad(lambda z, a=a: np.linalg.norm(M(z) @ a), 0, t0, epsabs=0, epsrel=1e-13)[0]
        for a in (a1, a2)
    )
    return {
        "volume": n * n * cell * vol,
        "bottom": n * n * cell,
        "top": n * n * cell * dens(t0),
        "sides": 2 * n * sides,
    }


class TestBoxes:
    @pytest.mark.parametrize(
        "A",
        [Matrix2(1, 0, 0, 1), Matrix2(2, 0, 0, 1), Matrix2(1, 0, 0, -1), Matrix2(0.5, 0, 0, 0), Matrix2(0, 0, 0, 0)],
    )
    def test_diagonal_closed_forms(self, A):
        for n in (4, 64):
            for t0 in (1.0, 8.0):
                rep = box_report(BoxDomain(A, n, t0))
                cf = rep.closed_form
                for key in ("bottom", "top", "sides", "volume"):
                    assert getattr(rep, key) == pytest.approx(cf[key], rel=1e-10), key

    def test_general_matrix_and_lattice_against_quad(self, rng):
        for _ in range(5):
            A = random_matrix(rng, 1.5)
            lattice = random_lattice(rng)
            rep = box_report(BoxDomain(A, 8, 2.0, lattice))
            ref = quad_oracle(A, lattice, 8, 2.0)
            for key, value in ref.items():
                assert getattr(rep, key) == pytest.approx(value, rel=1e-9), key

    def test_eigenvector_lattice_has_closed_sides(self):
        A = Matrix2(2, 0, 2, 0)  # eigenvectors (1, 1) for 2 and (0, 1) for 0
        lattice = ((1.0, 1.0), (0.0, 1.0))
        rep = box_report(BoxDomain(A, 16, 3.0, lattice))
        assert rep.closed_form["sides"] is not None
        assert rep.sides == pytest.approx(rep.closed_form["sides"], rel=1e-12)
        assert box_closed_form(BoxDomain(A, 16, 3.0))["sides"] is None

    @settings(max_examples=30)
    @given(matrices(), st.integers(1, 64), st.floats(0.1, 8.0))
    def test_ratio_exceeds_trace(self, A, n, t0):
        # bottom - top = trace(A) * volume exactly, so the ratio is trace + positive terms
        rep = box_report(BoxDomain(A, n, t0))
        assert rep.bottom - rep.top == pytest.approx(A.trace * rep.volume, rel=1e-9, abs=1e-9 * rep.bottom)
        assert rep.ratio > A.trace

    def test_sweep_order_and_threads(self, monkeypatch):
        A = Matrix2(1, 0.3, -0.2, 1)
        monkeypatch.setenv("HOMOG3_THREADS", "1")
        serial = [r.row() for r in box_ratio_sweep(A, ns=(4, 8), t0s=(1.0, 2.0))]
        monkeypatch.setenv("HOMOG3_THREADS", "4")
        parallel = [r.row() for r in box_ratio_sweep(A, ns=(4, 8), t0s=(1.0, 2.0))]
        assert serial == parallel
        assert [(r["n"], r["t0"]) for r in serial] == [(4, 1.0), (4, 2.0), (8, 1.0), (8, 2.0)]

    def test_thread_count(self, monkeypatch):
        monkeypatch.setenv("HOMOG3_THREADS", "3")
        assert thread_count() == 3
        monkeypatch.setenv("HOMOG3_THREADS", "0")
        assert thread_count() >= 1
        monkeypatch.setenv("HOMOG3_THREADS", "many")
        with pytest.raises(ValidationError):
            thread_count()

    @pytest.mark.parametrize(
        "kwargs",
        [dict(n=0, t0=1.0), dict(n=2.5, t0=1.0), dict(n=4, t0=0.0), dict(n=4, t0=float("inf")),
         dict(n=4, t0=1.0, lattice=((1, 0), (2, 0)))],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            BoxDomain(Matrix2(1, 0, 0, 1), **kwargs)


class TestQuotientEnd:
    def test_identity_on_random_lattices(self, rng):
        for _ in range(10):
            A = random_matrix(rng)
            if A.trace <= 0.2:
                A = Matrix2(A.a + 0.5 - A.trace, A.b, A.c, A.d)
            lattice = random_lattice(rng)
            for T in (0.0, 1.0, 5.0):
                rep = quotient_end_report(A, lattice, T)
                assert rep.residual_quadrature <= 1e-8
                assert rep.volume_quadrature == pytest.approx(rep.volume, rel=1e-10)
                assert rep.area_quadrature == pytest.approx(rep.area, rel=1e-10)

    def test_example_values(self):
        rep = quotient_end_report(Matrix2(1, 0, 0, 1), T=0.0)
        assert rep.volume == 0.5 and rep.area == 1.0 and rep.residual == 0.0

    def test_decay(self):
        A = Matrix2(2, 0, 2, 0)
        a0 = quotient_end_report(A, T=1.0).area_quadrature
        a1 = quotient_end_report(A, T=2.0).area_quadrature
        assert a1 / a0 == pytest.approx(math.exp(-2.0), rel=1e-12)

    @pytest.mark.parametrize("A", [Matrix2(1, 0, 0, -1), Matrix2(-1, 0, 0, 0.5), Matrix2(0, 0, 0, 0)])
    def test_infinite_volume(self, A):
        with pytest.raises(InfiniteVolumeError):
            quotient_end_report(A)

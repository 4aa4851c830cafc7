import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lindblad_krylov import models, oracle
from lindblad_krylov.generator import apply_liouvillian
from lindblad_krylov.krylov import (
    KrylovBasis, NotPositiveWarning, RitzPair, SpectralResult, arnoldi_lindblad, eps_to_lambda,
    load_spectrum_json, match_eigenvalues, orthonormalize_step, residual_check, ritz_extract,
    steady_state_extract, trace_indicator,
)
from lindblad_krylov.operators import random_density_matrix
from lindblad_krylov.propagator import IntegratorConfig, propagate


def dense_spectrum(model):
    return oracle.exact_spectrum(oracle.build_liouvillian_matrix(model), vectors=True)


class TestOrthonormalize:
    def test_first_element_normalized(self):
        b = KrylovBasis.start(np.diag([3.0, 4.0]), 0.1)
        np.testing.assert_allclose(b.element(0), np.diag([0.6, 0.8]))
        assert len(b) == 1 and b.steps_taken == 0

    def test_orthogonal_snapshot(self):
        b = KrylovBasis.start(np.diag([1.0, 0.0]), 0.1)
        _, sub = orthonormalize_step(b, np.array([[0.0, 2.0], [0.0, 0.0]]))
        assert sub == pytest.approx(2.0)
        assert b.hessenberg[0, 0] == 0
        np.testing.assert_allclose(b.element(1), [[0, 1], [0, 0]])

    def test_coefficients(self):
        b = KrylovBasis.start(np.diag([1.0, 0.0]), 0.1)
        _, sub = orthonormalize_step(b, np.array([[0.5j, 0.0], [0.0, 1.0]]))
        assert b.hessenberg[0, 0] == pytest.approx(0.5j)
        assert sub == pytest.approx(1.0)

    def test_parallel_snapshot_breaks_down(self):
        b = KrylovBasis.start(np.eye(2), 0.1)
        _, sub = orthonormalize_step(b, 0.7 * np.eye(2))
        assert sub < 1e-12 and b.closed and len(b) == 1
        assert b.hessenberg[0, 0] == pytest.approx(0.7 * np.sqrt(2))
        with pytest.raises(ValueError):
            orthonormalize_step(b, np.eye(2))

    def test_shape_mismatch(self):
        b = KrylovBasis.start(np.eye(2), 0.1)
        with pytest.raises(ValueError):
            orthonormalize_step(b, np.eye(3))

    def test_reorthogonalization_keeps_basis_orthonormal(self):
        # nearly dependent snapshots trigger the second pass
        rng = np.random.default_rng(0)
        b = KrylovBasis.start(rng.standard_normal((6, 6)), 0.1, capacity=2)
        for k in range(30):
            v = b.element(-1) + 1e-9 * rng.standard_normal((6, 6))
            v = v + sum(rng.standard_normal() * b.element(j) for j in range(len(b)))
            orthonormalize_step(b, v)
            if b.closed:
                break
        assert b.orthogonality_error() < 1e-10


class TestRitz:
    def test_single_element(self):
        b = KrylovBasis.start(np.eye(2), 0.5)
        orthonormalize_step(b, 0.25 * b.element(0))
        (p,) = ritz_extract(b)
        assert p.eps == pytest.approx(0.25)
        assert p.lam == pytest.approx(math.log(0.25) / 0.5)
        np.testing.assert_allclose(p.eigenmatrix, np.eye(2) / np.sqrt(2))

    def test_diagonal_map(self):
        # E acts diagonally on matrix units; start from a mix of three
        scales = {(0, 0): 1.0, (0, 1): 0.5, (1, 1): 0.2}
        rho0 = np.zeros((2, 2))
        for ij in scales:
            rho0[ij] = 1.0
        b = KrylovBasis.start(rho0, 1.0)
        while not b.closed:
            v = b.element(-1).copy()
            for ij, s in scales.items():
                v[ij] *= s
            orthonormalize_step(b, v)
        pairs = ritz_extract(b)
        np.testing.assert_allclose([p.eps for p in pairs], [1.0, 0.5, 0.2], atol=1e-12)
        assert abs(pairs[0].eigenmatrix[0, 0]) == pytest.approx(1)

    def test_needs_snapshot(self):
        with pytest.raises(ValueError):
            ritz_extract(KrylovBasis.start(np.eye(2), 0.1))

    def test_partial_lift(self):
        rng = np.random.default_rng(2)
        b = KrylovBasis.start(rng.standard_normal((3, 3)), 0.1)
        for _ in range(4):
            orthonormalize_step(b, rng.standard_normal((3, 3)))
        pairs = ritz_extract(b, 2)
        assert all(p.eigenmatrix is not None for p in pairs[:2])
        assert all(p.eigenmatrix is None for p in pairs[2:])
        mags = np.array([abs(p.eps) for p in pairs])
        assert np.all(np.diff(mags) <= 1e-12)


class TestEpsToLambda:
    def test_examples(self):
        assert eps_to_lambda(1.0, 0.05) == 0
        assert eps_to_lambda(math.exp(-1), 1.0) == pytest.approx(-1)
        assert eps_to_lambda(-1.0, 2.0) == pytest.approx(1j * math.pi / 2)
        assert eps_to_lambda(complex(-1.0, -0.0), 1.0).imag == pytest.approx(math.pi)
        assert eps_to_lambda(1j, 1.0) == pytest.approx(1j * math.pi / 2)

    def test_errors(self):
        with pytest.raises(ValueError):
            eps_to_lambda(0.0, 1.0)
        with pytest.raises(ValueError):
            eps_to_lambda(0.5, 0.0)

    @given(st.floats(-5, 0), st.floats(-3.1, 3.1), st.floats(0.01, 2))
    def test_inverts_exponential(self, re, im, T):
        lam = complex(re, im) / T
        assert eps_to_lambda(cmath.exp(lam * T), T) == pytest.approx(lam, abs=1e-9 / T)


class TestArnoldi:
    def test_single_decay_steady_state(self):
        model = models.single_decay_model(3, 1.0)
        res = arnoldi_lindblad(model, np.eye(4) / 4, T=0.5, m=1, tol=1e-8)
        assert res.termination in ("converged", "happy_breakdown")
        ss = np.asarray(steady_state_extract(res))
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        np.testing.assert_allclose(ss, expected, atol=1e-7)

    def test_happy_breakdown(self):
        # diagonal seed in a two-level decay: the Krylov space is {populations}
        model = models.single_decay_model(1, 1.0)
        res = arnoldi_lindblad(model, np.diag([0.3, 0.7]), T=0.5, m=4, tol=1e-8)
        assert res.termination == "happy_breakdown"
        assert res.iterations == 2
        np.testing.assert_allclose(sorted(p.lam.real for p in res.pairs), [-1, 0], atol=1e-8)
        assert all(p.converged for p in res.pairs)

    def test_max_iterations(self):
        model = models.dimer_fig3(3)
        res = arnoldi_lindblad(model, np.asarray(random_density_matrix(16, 0)), m=5, tol=1e-14,
                               check_every=5, max_iter=10)
        assert res.termination == "max_iterations" and res.iterations == 10
        assert not all(p.converged for p in res.pairs)

    def test_periodic_interval(self):
        model = models.floquet_fig8(4)
        with pytest.raises(ValueError):
            arnoldi_lindblad(model, np.eye(5) / 5, T=1.0)
        assert arnoldi_lindblad(model, np.eye(5) / 5, tol=1e-6).T == pytest.approx(2 * math.pi)

    @pytest.mark.parametrize("kw", [dict(m=0), dict(tol=0), dict(check_every=0), dict(T=-1.0)])
    def test_argument_errors(self, kw):
        with pytest.raises(ValueError):
            arnoldi_lindblad(models.single_decay_model(1), np.eye(2) / 2, **kw)

    def test_wrong_seed_shape(self):
        with pytest.raises(ValueError):
            arnoldi_lindblad(models.single_decay_model(1), np.eye(3) / 3)

    def test_against_dense_spectrum(self):
        model = models.dimer_fig3(3)
        ref = dense_spectrum(model)
        res = arnoldi_lindblad(model, np.asarray(random_density_matrix(16, 3)), m=6, tol=1e-8,
                               check_every=5)
        assert res.termination == "converged"
        assert len(res.pairs) >= 6
        idx = match_eigenvalues(res.eigenvalues, ref.values)
        assert sorted(idx)[:6] == list(range(6))
        for p, j in zip(res.pairs, idx):
            assert abs(p.lam - ref.values[j]) < 1e-6

    def test_callback_and_metadata(self):
        seen = []
        res = arnoldi_lindblad(models.dimer_fig3(2), np.asarray(random_density_matrix(9, 1)), m=2,
                               check_every=3, callback=lambda k, p: seen.append(k))
        assert seen and all(k % 3 == 0 or k == res.iterations for k in seen)
        assert res.metadata["checks"] == len(seen)
        assert res.metadata["orthogonality_error"] < 1e-10
        assert res.simulated_time == pytest.approx(res.iterations * 0.05)


@pytest.fixture(scope="module")
def floquet_run():
    model = models.floquet_fig8(8)
    res = arnoldi_lindblad(model, np.asarray(random_density_matrix(model.dim, 7)), m=4,
                           tol=1e-8, check_every=4, keep_basis=True)
    return model, res


class TestStructure:
    def test_hessenberg_pattern(self, floquet_run):
        _, res = floquet_run
        h = res.basis._h
        k = h.shape[1]
        assert np.all(np.tril(h, -2)[: k + 1] == 0)
        sub = np.diag(h, -1)
        assert np.all(sub.imag == 0) and np.all(sub.real > 0)

    def test_arnoldi_relation(self, floquet_run):
        # E V_k = V_{k+1} H, with E applied by propagation
        model, res = floquet_run
        b = res.basis
        k = b.steps_taken
        ev = np.array([propagate(model, b.element(i), 0.0, res.T).ravel() for i in range(k)])
        rhs = b._h[: len(b), :k].T @ b.vectors[: len(b)]
        assert np.abs(ev - rhs).max() < 1e-10

    def test_orthonormal(self, floquet_run):
        assert floquet_run[1].basis.orthogonality_error() < 1e-10

    def test_containment(self, floquet_run):
        for p in floquet_run[1].converged_pairs:
            assert abs(p.eps) <= 1 + 1e-6

    def test_conjugate_closure(self, floquet_run):
        model, res = floquet_run
        cplx = [p for p in res.pairs if not p.is_real]
        assert cplx
        for p in cplx:
            (q,) = residual_check(model, [p.conjugate()], res.T, res.tol, prefilter=False)
            assert q.residual < res.tol

    def test_partners_listed(self, floquet_run):
        pairs = floquet_run[1].pairs
        for i, p in enumerate(pairs):
            if p.conjugate_of is not None:
                assert pairs[p.conjugate_of].eps == p.eps.conjugate()

    def test_matches_period_map(self, floquet_run):
        model, res = floquet_run
        ref = oracle.exact_spectrum(oracle.floquet_map_matrix(model), vectors=False)
        for p, j in zip(res.pairs, match_eigenvalues([p.eps for p in res.pairs], ref.values)):
            assert abs(p.eps - ref.values[j]) < 1e-8

    def test_json(self, floquet_run, tmp_path):
        _, res = floquet_run
        res.to_json(tmp_path / "s.json", {"seed": 7})
        doc = load_spectrum_json(tmp_path / "s.json")
        assert doc["source"] == "arnoldi-lindblad"
        assert doc["config"] == {"seed": 7}
        assert doc["iterations"] == res.iterations
        assert [p["eps"] for p in doc["pairs"]] == [p.eps for p in res.pairs]
        assert doc["metadata"]["period"] == pytest.approx(2 * math.pi)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31))
def test_converged_pairs_are_contractive(seed):
    model = models.dimer_fig3(2)
    res = arnoldi_lindblad(model, np.asarray(random_density_matrix(9, seed)), m=3, tol=1e-6,
                           check_every=5)
    for p in res.converged_pairs:
        assert abs(p.eps) <= 1 + 1e-6
        assert p.lam.real <= 1e-6 / res.T


class TestSteadyState:
    def _result(self, pairs, tol=1e-3):
        return SpectralResult(pairs, 1, 0.0, "converged", 0.05, 1, tol)

    def test_no_converged(self):
        with pytest.raises(ValueError):
            steady_state_extract(self._result([RitzPair(1.0, 0j, np.eye(2))]))

    def test_far_from_one(self):
        p = RitzPair(0.5, math.log(0.5) / 0.05 + 0j, np.eye(2), converged=True)
        with pytest.raises(ValueError):
            steady_state_extract(self._result([p]))

    def test_traceless(self):
        p = RitzPair(1.0, 0j, np.diag([1.0, -1.0]), converged=True)
        with pytest.raises(ValueError):
            steady_state_extract(self._result([p]))

    def test_normalization_and_phase(self):
        # eigenvectors come with an arbitrary complex scale
        p = RitzPair(1.0, 0j, -1j * np.diag([0.5, 1.5]), converged=True)
        ss = steady_state_extract(self._result([p]))
        np.testing.assert_allclose(np.asarray(ss).real, np.diag([0.25, 0.75]), atol=1e-12)

    def test_not_positive(self):
        p = RitzPair(1.0, 0j, np.diag([1.1, -0.1]), converged=True)
        with pytest.warns(NotPositiveWarning):
            steady_state_extract(self._result([p]))
        with pytest.raises(ValueError):
            steady_state_extract(self._result([p]), strict=True)

    def test_degenerate_warning(self):
        a = RitzPair(1.0, 0j, np.diag([1.0, 0.0]), converged=True)
        b = RitzPair(1.0 - 1e-5, 0j, np.diag([0.0, 1.0]), converged=True)
        with pytest.warns(UserWarning, match="degenerate"):
            steady_state_extract(self._result([a, b]))


class TestTraceIndicator:
    def test_exact_eigenmatrix(self):
        model = models.dimer_fig3(2)
        ref = dense_spectrum(model)
        for i in range(4):
            d = trace_indicator(model, ref.eigenmatrix(i))
            assert d["indicator"] < 1e-8 * max(1, d["norm_L_rho_sq"])
            assert d["rayleigh"] == pytest.approx(ref.values[i], abs=1e-8)

    def test_random_operator(self):
        model = models.dimer_fig3(2)
        d = trace_indicator(model, np.asarray(random_density_matrix(9, 0)))
        assert d["indicator"] > 1e-3
        # Cauchy-Schwarz
        assert d["norm_L_rho_sq"] >= d["abs_rayleigh_sq"]

    def test_consistent_with_dense(self):
        model = models.floquet_fig8(4)
        rho = np.asarray(random_density_matrix(5, 1))
        rho = rho / np.linalg.norm(rho)
        l1 = apply_liouvillian(model, rho, 0.3)
        d = trace_indicator(model, rho, 0.3)
        assert d["tr_rho_L2_rho"] == pytest.approx(np.vdot(rho, apply_liouvillian(model, l1, 0.3)))


def test_match_eigenvalues():
    assert match_eigenvalues([0.0, -1 + 2j], [-1 + 2.1j, 0.01, -1 - 2j]) == [1, 0]
    with pytest.raises(ValueError):
        match_eigenvalues([1, 2], [1])

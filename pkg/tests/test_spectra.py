import math

import numpy as np
import pytest

from spikedcov.distributions import SignalDistribution
from spikedcov.errors import ResolventDomainError
from spikedcov.model_gen import RotationSpec, SpikedModelSpec, generate, population_axes
from spikedcov.spectra import (
    SchurEvaluator,
    decompose,
    noise_top_eigenvalue,
    q_matrix,
    quadform_residual,
    schur_K,
    schur_pair,
)
from spikedcov.spike_theory import spike_forward


def make_spec(**overrides):
    base = dict(
        m=2,
        p=100,
        n=200,
        ells=(4.0, 2.5),
        rotation=RotationSpec("identity"),
        signal_dist=SignalDistribution("gaussian"),
        noise_dist="gaussian",
        seed=2024,
    )
    base.update(overrides)
    return SpikedModelSpec(**base)


def decompose_spec(spec, replicate=0):
    data = generate(spec, replicate)
    return data, decompose(data, population_axes(spec))


def test_noiseless_edge_case():
    spec = make_spec(p=0, n=2000)
    data, spectrum = decompose_spec(spec)
    s11 = data.x1 @ data.x1.T / spec.n
    assert np.allclose(np.sort(spectrum.ell_hats), np.sort(np.linalg.eigvalsh(s11)))
    assert np.all(spectrum.cosines2 > 0.99)
    assert spectrum.mu1 == 0.0
    assert np.allclose(schur_K(data, 10.0), s11)
    assert np.allclose(q_matrix(data, 10.0), 0.0)


def test_unit_norm_split():
    _, spectrum = decompose_spec(make_spec())
    for nu in range(2):
        total = spectrum.u_norm2(nu) + spectrum.v_norm2s[nu]
        assert total == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.norm(spectrum.a_vecs[nu]) == pytest.approx(1.0, abs=1e-12)
    assert spectrum.ell_hats[0] >= spectrum.ell_hats[1]


def test_sign_convention():
    basis, _ = population_axes(make_spec())
    for rep in range(5):
        _, spectrum = decompose_spec(make_spec(), replicate=rep)
        for nu in range(2):
            assert basis[:, nu] @ spectrum.a_vecs[nu] >= 0.0


def test_top_eigenvalue_concentrates():
    spec = make_spec(p=400, n=800)
    _, spectrum = decompose_spec(spec)
    rho = spike_forward(4.0, spec.gamma_n)
    sigma = math.sqrt(2.0 * 16.0 * (17.0 / 18.0))
    assert abs(spectrum.ell_hats[0] - rho) <= 5.0 * sigma / math.sqrt(spec.n)


def test_subcritical_top_eigenvalue_sticks_to_bulk():
    spec = make_spec(m=1, ells=(1.5,), p=800, n=800)
    _, spectrum = decompose_spec(spec)
    assert abs(spectrum.ell_hats[0] - 4.0) <= 0.35
    assert spectrum.cosines2[0] <= 0.05


def test_companion_route_used_when_n_small():
    # n < m + p forces the Gram-matrix route; eigenpairs must still satisfy
    # the eigenvalue equation of the covariance route.
    spec = make_spec(m=1, ells=(3.0,), p=120, n=60)
    data, spectrum = decompose_spec(spec)
    x = np.vstack([data.x1, data.x2])
    s = x @ x.T / spec.n
    vals = np.linalg.eigvalsh(s)
    assert spectrum.ell_hats[0] == pytest.approx(vals[-1], rel=1e-10)


def test_schur_determinant_identity():
    spec = make_spec(p=400, n=800)
    for rep in range(3):
        data, spectrum = decompose_spec(spec, replicate=rep)
        for nu in range(2):
            t = spectrum.ell_hats[nu]
            k = schur_K(data, t, mu1=spectrum.mu1)
            k_norm = np.abs(np.linalg.eigvalsh(k)).max()
            det = np.linalg.det(k - t * np.eye(2))
            assert abs(det) <= 1e-8 * k_norm**2

            q = q_matrix(data, t, mu1=spectrum.mu1)
            a = spectrum.a_vecs[nu]
            lhs = a @ (a + q @ a)
            assert lhs * spectrum.u_norm2(nu) == pytest.approx(1.0, abs=1e-8)


def test_schur_routes_agree():
    spec = make_spec(m=2, p=30, n=50)
    data, spectrum = decompose_spec(spec)
    t = spectrum.mu1 + 1.5
    k_pp = schur_K(data, t, route="pp")
    k_nn = schur_K(data, t, route="nn")
    assert np.allclose(k_pp, k_nn, rtol=1e-8, atol=1e-10)
    with pytest.raises(ValueError):
        schur_K(data, t, route="qq")


def test_schur_evaluator_matches_single_shot():
    spec = make_spec()
    data, spectrum = decompose_spec(spec)
    ev = SchurEvaluator(data, mu1=spectrum.mu1)
    for t in (spectrum.mu1 + 0.7, spectrum.mu1 + 2.0):
        k1, q1 = ev.pair(t)
        k2, q2 = schur_pair(data, t)
        assert np.allclose(k1, k2) and np.allclose(q1, q2)


def test_k_at_rho_near_limit():
    # K(rho_n) concentrates at (rho_n / ell) Sigma.
    spec = make_spec(p=400, n=800)
    rho_n = spike_forward(4.0, spec.gamma_n)
    norms = []
    for rep in range(20):
        data = generate(spec, rep)
        k = schur_K(data, rho_n)
        target = rho_n / 4.0 * np.diag([4.0, 2.5])
        norms.append(np.abs(np.linalg.eigvalsh(k - target)).max())
    assert np.median(norms) <= 20.0 / math.sqrt(spec.n)


def test_resolvent_guard():
    spec = make_spec()
    data, spectrum = decompose_spec(spec)
    with pytest.raises(ResolventDomainError):
        schur_K(data, 0.9 * spectrum.mu1)
    with pytest.raises(ResolventDomainError):
        schur_K(data, spectrum.mu1 * (1.0 + 1e-12))
    with pytest.raises(ResolventDomainError):
        quadform_residual(data, ("resolvent", 0.5 * spectrum.mu1))


def test_quadform_identity_reduction():
    spec = make_spec(p=4)
    data = generate(spec, 0)
    res = quadform_residual(data, "identity")
    s11 = data.x1 @ data.x1.T / spec.n
    assert np.allclose(res, s11 - np.diag([4.0, 2.5]))
    # An explicit identity matrix must give the same thing.
    res2 = quadform_residual(data, np.eye(spec.n))
    assert np.allclose(res, res2)
    with pytest.raises(ValueError):
        quadform_residual(data, np.eye(3))


def test_quadform_resolvent_residual_small():
    # Unspiked signal, resolvent evaluated above the bulk: the 95th
    # percentile of the residual norm sits well below the 10/sqrt(n)
    # calibration at n = 800.
    spec = make_spec(m=1, ells=(1.0,), p=400, n=800)
    t = spike_forward(4.0, spec.gamma_n)
    norms = []
    for rep in range(200):
        data = generate(spec, rep)
        res = quadform_residual(data, ("resolvent", t))
        norms.append(abs(res[0, 0]))
    assert np.quantile(norms, 0.95) <= 10.0 / math.sqrt(spec.n)


def test_quadform_residual_rate_scaling():
    # Quadrupling n should roughly halve the residual norm.
    t_pt = 14.0 / 3.0
    medians = {}
    for n in (400, 1600):
        spec = make_spec(m=1, ells=(1.0,), p=n // 2, n=n)
        norms = []
        for rep in range(60):
            data = generate(spec, rep)
            norms.append(abs(quadform_residual(data, ("resolvent", t_pt))[0, 0]))
        medians[n] = np.median(norms)
    ratio = medians[400] / medians[1600]
    assert 1.4 <= ratio <= 2.9


def test_noise_top_eigenvalue_routes():
    rng = np.random.default_rng(0)
    x2_wide = rng.standard_normal((20, 50))
    x2_tall = rng.standard_normal((50, 20))
    for x2, n in ((x2_wide, 50), (x2_tall, 20)):
        direct = np.linalg.eigvalsh(x2 @ x2.T / n)[-1]
        assert noise_top_eigenvalue(x2, n) == pytest.approx(direct, rel=1e-12)

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedcov.cumulants import (
    bilinear_jk_from_moments,
    bilinear_jk_from_samples,
    bilinear_jk_from_signal,
    contract,
    contraction_matrix,
    empirical_tensor,
    exact_tensor,
    knu_matrix,
    symmetric_pairs,
)
from spikedcov.distributions import SignalDistribution
from spikedcov.errors import ConfigError, DomainError
from spikedcov.model_gen import _haar_orthogonal

GAUSS = SignalDistribution("gaussian")
RADEMACHER = SignalDistribution("iid_factors", factor_law="rademacher")
MIXTURE = SignalDistribution("scale_mixture", w2_values=(0.5, 1.5), w2_probs=(0.5, 0.5))
ELLS = np.array([4.0, 2.5])


def test_gaussian_tensor_is_zero():
    basis = _haar_orthogonal(3, seed=5)
    kappa = exact_tensor(GAUSS, basis, [4.0, 2.0, 1.5]).kappa
    assert np.all(kappa == 0.0)


def test_rademacher_tensor_identity_basis():
    kappa = exact_tensor(RADEMACHER, np.eye(2), ELLS).kappa
    assert kappa[0, 0, 0, 0] == pytest.approx(-32.0)
    assert kappa[1, 1, 1, 1] == pytest.approx(-12.5)
    # Independent components: all off-pure entries vanish.
    for idx in itertools.product(range(2), repeat=4):
        if len(set(idx)) > 1:
            assert kappa[idx] == 0.0


def test_scale_mixture_tensor_entries():
    assert MIXTURE.ew4 == pytest.approx(1.25)
    kappa = exact_tensor(MIXTURE, np.eye(2), ELLS).kappa
    # kappa_1122 = (Ew^4 - 1) * sigma_11 sigma_22 with zero cross terms.
    assert kappa[0, 0, 1, 1] == pytest.approx(0.25 * 4.0 * 2.5)
    assert kappa[0, 0, 0, 0] == pytest.approx(0.25 * 3.0 * 16.0)


@pytest.mark.parametrize("dist", [RADEMACHER, MIXTURE])
def test_tensor_full_symmetry(dist):
    basis = _haar_orthogonal(3, seed=11)
    kappa = exact_tensor(dist, basis, [5.0, 3.0, 2.0]).kappa
    rng = np.random.default_rng(0)
    for _ in range(50):
        idx = tuple(rng.integers(0, 3, size=4))
        perm = tuple(rng.permutation(idx))
        assert kappa[idx] == pytest.approx(kappa[perm], rel=1e-12, abs=1e-12)


def test_empirical_tensor_gaussian_small():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((1_000_000, 2))
    kappa = empirical_tensor(x).kappa
    assert np.abs(kappa).max() <= 0.05


def test_empirical_tensor_degenerate_and_small_n():
    assert np.all(empirical_tensor(np.zeros((10, 2))).kappa == 0.0)
    with pytest.raises(DomainError):
        empirical_tensor(np.zeros((3, 2)))


def _draw_signal(dist, basis, ells, n, seed):
    rng = np.random.default_rng(seed)
    scale = basis * np.sqrt(ells)
    if dist.kind == "gaussian":
        return (scale @ rng.standard_normal((len(ells), n))).T
    if dist.kind == "iid_factors":
        z = rng.integers(0, 2, size=(len(ells), n)) * 2.0 - 1.0
        return (scale @ z).T
    z = rng.standard_normal((len(ells), n))
    w2 = rng.choice(np.asarray(dist.w2_values), size=n, p=dist.w2_probs)
    return ((scale @ z) * np.sqrt(w2)).T


@pytest.mark.parametrize("dist", [GAUSS, RADEMACHER, MIXTURE])
def test_empirical_matches_exact_within_se(dist):
    """Batched standard errors: the plug-in estimate must sit within 10 SE
    of the closed form, entry by entry."""
    basis = np.eye(2)
    n_batches, batch = 20, 50_000
    samples = _draw_signal(dist, basis, ELLS, n_batches * batch, seed=7)
    per_batch = np.stack(
        [empirical_tensor(samples[i * batch : (i + 1) * batch]).kappa for i in range(n_batches)]
    )
    mean = per_batch.mean(axis=0)
    se = per_batch.std(axis=0, ddof=1) / np.sqrt(n_batches)
    exact = exact_tensor(dist, basis, ELLS).kappa
    assert np.all(np.abs(mean - exact) <= 10.0 * se + 1e-12)


def test_empirical_rademacher_pure_entry():
    samples = _draw_signal(RADEMACHER, np.eye(2), ELLS, 1_000_000, seed=3)
    kappa = empirical_tensor(samples).kappa
    assert kappa[0, 0, 0, 0] == pytest.approx(-32.0, abs=0.5)


def test_contract_examples():
    basis = np.eye(2)
    zero = exact_tensor(GAUSS, basis, ELLS)
    assert contract(zero, basis, 0, 0, 0, 0) == 0.0
    rad = exact_tensor(RADEMACHER, basis, ELLS)
    assert contract(rad, basis, 0, 0, 0, 0) == pytest.approx(-32.0)
    assert contract(rad, basis, 1, 1, 0, 0) == 0.0
    mix = exact_tensor(MIXTURE, basis, ELLS)
    assert contract(mix, basis, 1, 1, 0, 0) == pytest.approx(2.5)
    with pytest.raises(DomainError):
        contract(rad, basis, 0, 0, 0, 5)


def test_contract_rotation_invariance():
    """For factor signals the quartic contraction onto the spike axis is
    kappa4 * ell^2 regardless of the rotation."""
    for seed in (1, 2):
        basis = _haar_orthogonal(2, seed=seed)
        rad = exact_tensor(RADEMACHER, basis, ELLS)
        assert contract(rad, basis, 0, 0, 0, 0) == pytest.approx(-32.0, rel=1e-12)
        assert contract(rad, basis, 1, 1, 1, 1) == pytest.approx(-12.5, rel=1e-12)
        assert contract(rad, basis, 1, 1, 0, 0) == pytest.approx(0.0, abs=1e-12)


def test_knu_matrix_independent_components():
    basis = np.eye(2)
    rad = exact_tensor(RADEMACHER, basis, ELLS)
    k0 = knu_matrix(rad, basis, 0)
    expected = np.zeros((2, 2))
    expected[0, 0] = -32.0
    assert np.allclose(k0, expected)


def test_contraction_matrix_matches_entrywise_contract():
    basis = _haar_orthogonal(3, seed=9)
    mix = exact_tensor(MIXTURE, basis, [5.0, 3.0, 2.0])
    mat = contraction_matrix(mix, basis, 1)
    for mu in range(3):
        for mu_p in range(3):
            assert mat[mu, mu_p] == pytest.approx(
                contract(mix, basis, mu, mu_p, 1, 1), rel=1e-12, abs=1e-12
            )


def test_bilinear_exact_scalar_cases():
    # Coupled standard Gaussian pair.
    mom, pairs = bilinear_jk_from_signal(GAUSS, np.eye(1), [1.0])
    assert pairs == [(0, 0)]
    assert mom.J[0, 0] == pytest.approx(2.0)
    assert mom.K[0, 0] == pytest.approx(0.0)
    assert mom.d_matrix(1.0, 1.0)[0, 0] == pytest.approx(2.0)

    # Coupled Rademacher pair: E x^4 - 3 = -2.
    rad1 = SignalDistribution("iid_factors", factor_law="rademacher")
    mom, _ = bilinear_jk_from_signal(rad1, np.eye(1), [1.0])
    assert mom.J[0, 0] == pytest.approx(2.0)
    assert mom.K[0, 0] == pytest.approx(-2.0)

    # Independent standardized pair via raw moment blocks.
    one = np.array([[1.0]])
    zero = np.array([[0.0]])
    mom = bilinear_jk_from_moments(one, zero, zero, one, cross4=one)
    assert mom.J[0, 0] == pytest.approx(1.0)
    assert mom.K[0, 0] == pytest.approx(0.0)


def test_bilinear_uniform_factor_variance():
    uni = SignalDistribution("iid_factors", factor_law="uniform_pm_sqrt3")
    mom, _ = bilinear_jk_from_signal(uni, np.eye(1), [1.0])
    assert mom.d_matrix(1.0, 1.0)[0, 0] == pytest.approx(0.8)


def test_bilinear_pair_blocks_match_covariance():
    sigma = np.diag(ELLS)
    mom, pairs = bilinear_jk_from_signal(GAUSS, np.eye(2), ELLS)
    for a, (j, k) in enumerate(pairs):
        for b, (jp, kp) in enumerate(pairs):
            assert mom.gamma_xx[a, b] == sigma[j, jp]
            assert mom.gamma_xy[a, b] == sigma[j, kp]
            assert mom.gamma_yx[a, b] == sigma[k, jp]
            assert mom.gamma_yy[a, b] == sigma[k, kp]


def test_bilinear_from_samples_matches_exact():
    n = 200_000
    rng = np.random.default_rng(12)
    x = rng.integers(0, 2, size=(n, 1)) * 2.0 - 1.0
    mom = bilinear_jk_from_samples(x, x)
    assert mom.J[0, 0] == pytest.approx(2.0, abs=0.05)
    assert mom.K[0, 0] == pytest.approx(-2.0, abs=0.05)
    with pytest.raises(DomainError):
        bilinear_jk_from_samples(x, x[:10])


def test_symmetric_pairs_order():
    assert symmetric_pairs(2) == [(0, 0), (0, 1), (1, 1)]
    assert len(symmetric_pairs(4)) == 10


def test_distribution_validation():
    with pytest.raises(ConfigError):
        SignalDistribution("scale_mixture", w2_values=(0.5, 2.0), w2_probs=(0.5, 0.5))
    with pytest.raises(ConfigError):
        SignalDistribution("iid_factors", factor_law="cauchy")
    with pytest.raises(ConfigError):
        SignalDistribution("weird")
    assert SignalDistribution.from_config("gaussian").kind == "gaussian"
    rt = SignalDistribution.from_config(MIXTURE.to_config())
    assert rt == MIXTURE


@given(seed=st.integers(min_value=0, max_value=1000))
@settings(max_examples=30, deadline=None)
def test_empirical_tensor_symmetry_by_construction(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((60, 3))
    kappa = empirical_tensor(x).kappa
    idx = tuple(rng.integers(0, 3, size=4))
    perm = tuple(rng.permutation(idx))
    assert kappa[idx] == pytest.approx(kappa[perm], rel=1e-10, abs=1e-12)

import numpy as np
import pytest

from tubalcs.algebra import (
    condition_number,
    conj_transpose,
    dft_tubes,
    identity,
    spectral_norm,
    t_product,
    t_qr,
    t_svd,
    tubal_rank,
)
from tubalcs.errors import InvalidSpec, RankExceeded
from tubalcs.synthetic import GroundTruthSpec, generate_ground_truth, incoherence


def brute_incoherence(x, r):
    # direct evaluation: smallest mu with max_i ||Z(:,i,:)||_F <= mu sqrt(r/n2) ||x||
    f = t_svd(x, rank=r, exploit_symmetry=False)
    z = t_product(f.S, conj_transpose(f.V))
    n2 = x.shape[1]
    best = max(np.linalg.norm(z[:, i, :]) for i in range(n2))
    return best / (np.sqrt(r / n2) * spectral_norm(x))


def test_rank_one_unit_spectrum():
    x = generate_ground_truth(GroundTruthSpec(5, 7, 4, 1, 1.0, 3))
    sv = np.linalg.svd(dft_tubes(x), compute_uv=False)
    np.testing.assert_allclose(sv[:, 0], 1.0, atol=1e-12)
    assert np.abs(sv[:, 1:]).max() <= 1e-12


def test_paper_sized_truth():
    x = generate_ground_truth(GroundTruthSpec(20, 400, 20, 4, 2.0, 0))
    assert abs(condition_number(x) - 2.0) <= 1e-8
    assert tubal_rank(x) == 4
    assert spectral_norm(x) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_condition_number_exact(seed):
    kappa = 1.0 + (seed % 7) * 0.75
    x = generate_ground_truth(GroundTruthSpec(6, 9, 5, 3, kappa, seed))
    assert abs(condition_number(x) - kappa) <= 1e-8


def test_deterministic_in_seed():
    spec = GroundTruthSpec(4, 6, 3, 2, 2.0, 9)
    assert np.array_equal(generate_ground_truth(spec), generate_ground_truth(spec))
    other = GroundTruthSpec(4, 6, 3, 2, 2.0, 10)
    assert not np.array_equal(generate_ground_truth(spec), generate_ground_truth(other))


@pytest.mark.parametrize("bad", [
    dict(n1=0, n2=3, n3=2, r=1),
    dict(n1=3, n2=3, n3=2, r=4),
    dict(n1=3, n2=3, n3=2, r=1, kappa=0.5),
    dict(n1=3, n2=3, n3=2, r=0),
])
def test_invalid_specs(bad):
    with pytest.raises(InvalidSpec):
        generate_ground_truth(GroundTruthSpec(**bad))


def test_incoherence_equal_energy_slices():
    # Z = I padded with copies: every lateral slice of U*Z has the same energy
    n1, n2, n3, r = 4, 8, 3, 2
    u = t_qr(np.random.default_rng(0).standard_normal((n1, r, n3))).Q
    z = np.concatenate([identity(r, n3)] * (n2 // r), axis=1) / np.sqrt(n2 / r)
    x = t_product(u, z)
    assert incoherence(x, r) == pytest.approx(1.0, abs=1e-6)


def test_incoherence_dominant_slice():
    rng = np.random.default_rng(1)
    x = np.zeros((3, 10, 2))
    x[:, 4, :] = rng.standard_normal((3, 2))
    mu = incoherence(x, 1)
    assert mu == pytest.approx(brute_incoherence(x, 1), rel=1e-9)
    assert mu == pytest.approx(np.sqrt(10) * np.linalg.norm(x) / spectral_norm(x), rel=1e-9)


def test_incoherence_bound_is_tight():
    x = generate_ground_truth(GroundTruthSpec(6, 30, 4, 2, 2.0, 5))
    mu = incoherence(x, 2)
    assert mu == pytest.approx(brute_incoherence(x, 2), rel=1e-9)


def test_incoherence_rank_check():
    x = np.random.default_rng(2).standard_normal((4, 5, 3))
    with pytest.raises(RankExceeded):
        incoherence(x, 2)

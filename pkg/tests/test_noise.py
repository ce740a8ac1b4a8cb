"""Unit tests for the noise model: covariance, weighted norms, sampling, streams."""
import math

import numpy as np
import pytest

from goylab.noise import (
    AdditiveNoise,
    CovarianceSpec,
    DiagonalMultiplicativeNoise,
    check_noise_hypotheses,
    h0_inner,
    h0_norm,
    lq_norm,
    member_stream,
    sample_wiener_increment,
    splitmix64,
)
from goylab.space import ModelParams, basis_state, norm, zero_state


def test_covariance_constructors():
    q = CovarianceSpec.geometric(3)
    assert q.eigenvalues == (0.5, 0.25, 0.125)
    assert q.kind == "geometric" and q.lam0 == 1.0 and q.gamma == 1.0
    assert q.trace() == 0.875
    q2 = CovarianceSpec.explicit([1.0, 2.0])
    assert q2.eigenvalues == (1.0, 2.0) and q2.kind == "explicit"
    with pytest.raises(ValueError):
        CovarianceSpec.explicit([1.0, 0.0])
    with pytest.raises(ValueError):
        CovarianceSpec.explicit([1.0, -1.0])
    with pytest.raises(ValueError):
        CovarianceSpec.explicit([])
    with pytest.raises(ValueError):
        CovarianceSpec.geometric(3, lam0=0.0)
    with pytest.raises(ValueError):
        CovarianceSpec.geometric(3, gamma=-1.0)


def test_h0_norm_frozen():
    q = CovarianceSpec.geometric(3)
    # 1/lambda_1 = 2
    assert h0_norm(basis_state(3, 1), q) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert h0_norm(zero_state(3), q) == 0.0
    # Applying the square root of the covariance maps the weighted norm to
    # the plain one: lambda_2 = 1/4, so the scaled state 0.5*e_2 has norm 1.
    assert h0_norm(basis_state(3, 2, 0.5), q) == 1.0
    with pytest.raises(ValueError):
        h0_norm(zero_state(4), q)


def test_h0_parseval_property():
    q = CovarianceSpec.geometric(8)
    p = ModelParams(num_shells=8)
    lam = q.as_array()
    rng = np.random.default_rng(13)
    for _ in range(50):
        w = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        assert h0_norm(np.sqrt(lam) * w, q) == pytest.approx(norm(w, "h", p), rel=1e-13)
        v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        # polarization: (u, v)_0 agrees with the weighted sum of products
        direct = float(np.sum((w.real * v.real + w.imag * v.imag) / lam))
        assert h0_inner(w, v, q) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_lq_norm_frozen():
    q = CovarianceSpec.geometric(3)
    add = AdditiveNoise.constant(3)
    # sum of lambda: 1/2 + 1/4 + 1/8 = 0.875
    assert lq_norm(add, zero_state(3), q) == pytest.approx(math.sqrt(0.875), rel=1e-15)
    mult = DiagonalMultiplicativeNoise(c=(1.0, 1.0, 1.0))
    assert lq_norm(mult, zero_state(3), q) == 0.0


def test_sigma_maps():
    add = AdditiveNoise(s=(1.0, 2.0j))
    u = np.array([3.0, 4.0], dtype=complex)
    assert np.array_equal(add.sigma(u), np.array([1.0, 2.0j]))
    assert add.sigma(np.zeros((5, 2), dtype=complex)).shape == (5, 2)
    mult = DiagonalMultiplicativeNoise(c=(2.0, 1j))
    assert np.array_equal(mult.sigma(u), np.array([6.0, 4.0j]))
    with pytest.raises(ValueError):
        add.sigma(np.zeros(3, dtype=complex))
    with pytest.raises(ValueError):
        AdditiveNoise(s=(math.inf,))
    with pytest.raises(ValueError):
        DiagonalMultiplicativeNoise(c=())


def test_wiener_increment_basics():
    q = CovarianceSpec.geometric(4)
    st = member_stream(1, "simulate", 0)
    w = sample_wiener_increment(q, 0.25, st)
    assert w.shape == (4,) and w.dtype == complex
    assert np.all(w.imag == 0.0)  # real driving noise, complex storage
    assert np.array_equal(sample_wiener_increment(q, 0.0, st), np.zeros(4, dtype=complex))
    with pytest.raises(ValueError):
        sample_wiener_increment(q, -1e-9, st)
    # determinism: identical stream state gives identical increments
    a = sample_wiener_increment(q, 0.1, member_stream(7, "simulate", 3))
    b = sample_wiener_increment(q, 0.1, member_stream(7, "simulate", 3))
    assert np.array_equal(a, b)


def test_wiener_increment_moments():
    q = CovarianceSpec.geometric(3)
    lam = q.as_array()
    dt = 0.01
    st = member_stream(42, "hypothesis-check", 0)
    draws = np.stack([sample_wiener_increment(q, dt, st) for _ in range(2000)]).real
    big = member_stream(42, "hypothesis-check", 1).standard_normal((100_000, 3)) * np.sqrt(
        lam * dt
    )
    samples = np.concatenate([draws, big])
    n = samples.shape[0]
    second = samples**2
    emp = second.mean(axis=0)
    se = second.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(emp - lam * dt) <= 5.0 * se)
    # mean and cross-covariance vanish within 5 standard errors
    mean_se = samples.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0)) <= 5.0 * mean_se)
    for i in range(3):
        for j in range(i + 1, 3):
            prod = samples[:, i] * samples[:, j]
            assert abs(prod.mean()) <= 5.0 * prod.std() / math.sqrt(n)


def test_splitmix64_reference_vector():
    # First output of the reference generator from seed 0.
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(splitmix64(0)) == 0xA706DD2F4D197E6F
    assert 0 <= splitmix64(2**64 - 1) < 2**64


def test_member_streams_are_decorrelated():
    a = member_stream(5, "ensemble", 0).standard_normal(4)
    b = member_stream(5, "ensemble", 1).standard_normal(4)
    c = member_stream(5, "weak-convergence", 0).standard_normal(4)
    d = member_stream(6, "ensemble", 0).standard_normal(4)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert np.array_equal(a, member_stream(5, "ensemble", 0).standard_normal(4))
    with pytest.raises(ValueError):
        member_stream(5, "nope", 0)
    with pytest.raises(ValueError):
        member_stream(5, "ensemble", -1)


def test_hypotheses_additive_frozen():
    q = CovarianceSpec.geometric(3)
    p = ModelParams(num_shells=3)
    rep = check_noise_hypotheses(AdditiveNoise.constant(3), q, p, samples=200, seed=9)
    assert rep.K == pytest.approx(0.875, rel=1e-15)
    assert rep.L == 0.0 and rep.K1 == 0.0 and rep.K2 == 0.0
    assert rep.a1_applicable is False
    assert rep.epsilon_guards["nu/(2K)"] == pytest.approx(4.0 / 7.0, rel=1e-14)
    assert rep.epsilon_guards["nu/(2L)"] == math.inf
    assert rep.epsilon_guards["3nu/(2K)"] == pytest.approx(12.0 / 7.0, rel=1e-14)
    assert rep.epsilon_guards["1/(2K^2)"] == pytest.approx(0.5 / 0.875**2, rel=1e-14)
    # deterministic given seed
    assert rep == check_noise_hypotheses(AdditiveNoise.constant(3), q, p, samples=200, seed=9)


def test_hypotheses_multiplicative_frozen():
    p = ModelParams(num_shells=3)
    q = CovarianceSpec.geometric(3)
    k = 2.0 ** np.arange(1, 4)
    rep = check_noise_hypotheses(
        DiagonalMultiplicativeNoise(c=tuple(k)), q, p, samples=200, seed=3
    )
    assert rep.K1 == 1.0 and rep.K2 == 1.0  # c_n = k_n
    assert rep.K == 0.5 and rep.L == 0.5  # max over n of lambda_n
    assert rep.a1_applicable is True
    assert rep.epsilon_guards["nu/(2K)"] == 1.0


def test_hypotheses_validation():
    q = CovarianceSpec.geometric(3)
    p = ModelParams(num_shells=3)
    with pytest.raises(ValueError):
        check_noise_hypotheses(AdditiveNoise.constant(3), q, p, samples=0, seed=1)
    with pytest.raises(ValueError):
        check_noise_hypotheses(AdditiveNoise.constant(4), q, p, samples=10, seed=1)
    with pytest.raises(ValueError):
        check_noise_hypotheses(
            AdditiveNoise.constant(4), CovarianceSpec.geometric(4), p, samples=10, seed=1
        )
    with pytest.raises(TypeError):
        check_noise_hypotheses(object(), q, p, samples=10, seed=1)  # type: ignore[arg-type]


def test_growth_and_lipschitz_bounds_hold_on_samples():
    p = ModelParams(num_shells=6)
    q = CovarianceSpec.geometric(6)
    mult = DiagonalMultiplicativeNoise(c=tuple(1.0 + 0.5j for _ in range(6)))
    rep = check_noise_hypotheses(mult, q, p, samples=500, seed=21)
    lam = q.as_array()
    rng = np.random.default_rng(77)
    for _ in range(100):
        u = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        assert lq_norm(mult, u, q) ** 2 <= rep.K * (1 + norm(u, "v", p) ** 2) * (1 + 1e-12)
        gap = math.sqrt(float(np.sum(lam * np.abs(mult.sigma(u) - mult.sigma(v)) ** 2)))
        assert gap <= math.sqrt(rep.L) * norm(u - v, "v", p) * (1 + 1e-12)

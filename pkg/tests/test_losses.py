import math

import numpy as np
import pytest

from xfdd.errors import ConfigurationError, DataError, ShapeError
from xfdd.losses import (
    CompositeLossConfig,
    composite_loss,
    l2_penalty,
    one_hot,
    reconstruction_loss,
    softmax_cross_entropy,
    weighted_binary_cross_entropy,
)


# --- scalar-loop oracles, written independently of the implementations ---

def recon_oracle(x, x_hat):
    total = 0.0
    for s in range(x.shape[0]):
        for j in range(x.shape[1]):
            total += (x[s, j] - x_hat[s, j]) ** 2
    return total / (2.0 * x.shape[0])


def ce_oracle(p, y, delta=1.0):
    total = 0.0
    for s in range(p.shape[0]):
        for c in range(p.shape[1]):
            w = delta if c == 0 else 1.0
            total -= w * y[s, c] * math.log(max(p[s, c], 1e-12))
    return total / p.shape[0]


def l2_oracle(mats):
    total = 0.0
    for m in mats:
        for row in m:
            for v in row:
                total += v * v
    return total


def random_probs(rng, n, m):
    p = rng.uniform(0.01, 1.0, size=(n, m))
    return p / p.sum(axis=1, keepdims=True)


def test_reconstruction_perfect_is_zero(rng):
    x = rng.normal(size=(6, 4))
    assert reconstruction_loss(x, x.copy()) == 0.0


def test_reconstruction_single_sample_analytic():
    x = np.array([[1.0, 0.0]])
    x_hat = np.array([[0.0, 0.0]])
    assert reconstruction_loss(x, x_hat) == pytest.approx(0.5, abs=1e-15)


def test_reconstruction_matches_oracle(rng):
    x = rng.normal(size=(4, 3))
    x_hat = rng.normal(size=(4, 3))
    assert reconstruction_loss(x, x_hat) == pytest.approx(recon_oracle(x, x_hat), abs=1e-12)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ShapeError):
        reconstruction_loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_cross_entropy_perfect_prediction():
    y = one_hot(np.array([0, 1, 1]), 2)
    assert softmax_cross_entropy(y.astype(float), y) == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_uniform_binary():
    p = np.full((4, 2), 0.5)
    y = one_hot(np.array([0, 1, 0, 1]), 2)
    assert softmax_cross_entropy(p, y) == pytest.approx(math.log(2), abs=1e-12)


def test_cross_entropy_matches_oracle(rng):
    p = random_probs(rng, 7, 4)
    y = one_hot(rng.integers(0, 4, size=7), 4)
    assert softmax_cross_entropy(p, y) == pytest.approx(ce_oracle(p, y), abs=1e-12)


def test_cross_entropy_rejects_bad_targets():
    p = np.full((2, 2), 0.5)
    with pytest.raises(DataError):
        softmax_cross_entropy(p, np.array([[0.5, 0.5], [1.0, 0.0]]))


def test_weighted_reduces_to_unweighted(rng):
    p = random_probs(rng, 9, 2)
    y = one_hot(rng.integers(0, 2, size=9), 2)
    assert weighted_binary_cross_entropy(p, y, 1.0) == softmax_cross_entropy(p, y)


def test_weighted_single_sample_analytic():
    p = np.array([[0.5, 0.5]])
    y = np.array([[1.0, 0.0]])
    assert weighted_binary_cross_entropy(p, y, 2.0) == pytest.approx(2 * math.log(2), abs=1e-12)


def test_weighted_matches_oracle(rng):
    p = random_probs(rng, 11, 2)
    y = one_hot(rng.integers(0, 2, size=11), 2)
    assert weighted_binary_cross_entropy(p, y, 3.0) == pytest.approx(
        ce_oracle(p, y, delta=3.0), abs=1e-12
    )


def test_weighted_requires_two_classes(rng):
    p = random_probs(rng, 3, 3)
    y = one_hot(np.array([0, 1, 2]), 3)
    with pytest.raises(ConfigurationError):
        weighted_binary_cross_entropy(p, y, 2.0)


def test_l2_zero_and_single_weight():
    assert l2_penalty([np.zeros((3, 3))]) == 0.0
    assert l2_penalty([np.array([[2.0]])]) == 4.0


def test_l2_matches_oracle(rng):
    mats = [rng.normal(size=(4, 5)), rng.normal(size=(3, 2))]
    assert l2_penalty(mats) == pytest.approx(l2_oracle(mats), abs=1e-12)


def test_composite_perfect_classification_zero():
    y = one_hot(np.array([0, 1]), 2)
    cfg = CompositeLossConfig(lambda1=0.0, lambda2=1.0, lambda3=0.0)
    x = np.zeros((2, 3))
    out = composite_loss(x, x, y.astype(float), y, [], cfg)
    assert out.total == pytest.approx(0.0, abs=1e-12)


def test_composite_reconstruction_factor_of_two(rng):
    # the composite form carries lambda1/N while the standalone loss carries
    # 1/(2N): composite == 2 * lambda1 * reconstruction_loss exactly
    x = rng.normal(size=(5, 4))
    x_hat = rng.normal(size=(5, 4))
    y = one_hot(rng.integers(0, 2, size=5), 2)
    p = random_probs(rng, 5, 2)
    cfg = CompositeLossConfig(lambda1=0.7, lambda2=0.0, lambda3=0.0)
    out = composite_loss(x, x_hat, p, y, [], cfg)
    assert out.total == pytest.approx(2 * 0.7 * reconstruction_loss(x, x_hat), rel=1e-12)


def test_composite_breakdown_sums(rng):
    x = rng.normal(size=(6, 3))
    x_hat = rng.normal(size=(6, 3))
    p = random_probs(rng, 6, 2)
    y = one_hot(rng.integers(0, 2, size=6), 2)
    mats = [rng.normal(size=(3, 2))]
    cfg = CompositeLossConfig(lambda1=0.3, lambda2=1.1, lambda3=0.05, delta=2.0)
    out = composite_loss(x, x_hat, p, y, mats, cfg)
    assert out.total == pytest.approx(out.recon + out.cls + out.l2, abs=1e-12)


def test_composite_rejects_negative_weight():
    with pytest.raises(ConfigurationError):
        CompositeLossConfig(lambda1=-0.1)
    with pytest.raises(ConfigurationError):
        CompositeLossConfig(delta=0.0)


def test_all_losses_nonnegative_random_sweep(rng):
    for _ in range(25):
        n, d, m = rng.integers(1, 12), rng.integers(1, 8), 2
        x, x_hat = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        p = random_probs(rng, n, m)
        y = one_hot(rng.integers(0, m, size=n), m)
        assert reconstruction_loss(x, x_hat) >= 0.0
        assert softmax_cross_entropy(p, y) >= 0.0
        assert weighted_binary_cross_entropy(p, y, 2.5) >= 0.0
        assert l2_penalty([x]) >= 0.0


def test_composite_permutation_invariant(rng):
    n = 10
    x = rng.normal(size=(n, 4))
    x_hat = rng.normal(size=(n, 4))
    p = random_probs(rng, n, 2)
    y = one_hot(rng.integers(0, 2, size=n), 2)
    mats = [rng.normal(size=(2, 2))]
    cfg = CompositeLossConfig(lambda1=0.4, lambda2=1.0, lambda3=0.01, delta=1.5)
    base = composite_loss(x, x_hat, p, y, mats, cfg).total
    perm = rng.permutation(n)
    shuffled = composite_loss(x[perm], x_hat[perm], p[perm], y[perm], mats, cfg).total
    assert shuffled == pytest.approx(base, rel=1e-12)


def test_delta_monotone_when_class0_imperfect(rng):
    p = random_probs(rng, 8, 2)
    y = one_hot(np.array([0, 0, 1, 1, 0, 1, 0, 1]), 2)
    values = [weighted_binary_cross_entropy(p, y, d) for d in (1.0, 1.5, 2.0, 4.0, 8.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_loss_oracle_agreement_large_instances(rng):
    # random instances up to 50 x 20 stay within 1e-12 of the scalar loops
    for _ in range(10):
        n = int(rng.integers(1, 51))
        d = int(rng.integers(1, 21))
        x, x_hat = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        p = random_probs(rng, n, 2)
        y = one_hot(rng.integers(0, 2, size=n), 2)
        assert reconstruction_loss(x, x_hat) == pytest.approx(recon_oracle(x, x_hat), abs=1e-12)
        assert softmax_cross_entropy(p, y) == pytest.approx(ce_oracle(p, y), abs=1e-12)

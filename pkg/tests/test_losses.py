import numpy as np

from vfboost.losses import (
    logloss_grad_hess,
    logloss_value,
    one_hot,
    sigmoid,
    softmax,
    softmax_grad_hess,
    softmax_xent_value,
)


def test_logloss_at_zero_margin():
    g, h = logloss_grad_hess(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    assert np.allclose(g, [-0.5, 0.5])
    assert np.allclose(h, [0.25, 0.25])


def test_logloss_saturation():
    g, h = logloss_grad_hess(np.array([1.0]), np.array([20.0]))
    assert abs(g[0]) < 1e-8 and abs(h[0]) < 1e-8


def test_logloss_matches_finite_differences():
    rng = np.random.default_rng(0)
    y = (rng.random(50) > 0.5).astype(float)
    margin = rng.normal(size=50)
    g, h = logloss_grad_hess(y, margin)
    # Central differences; the hessian needs a larger step to dodge
    # cancellation noise in (f+ - 2f + f-).
    eps_g, eps_h = 1e-5, 1e-3

    def loss_at(m):
        return logloss_value(y, m) * len(y)

    for i in range(0, 50, 7):
        up, dn = margin.copy(), margin.copy()
        up[i] += eps_g
        dn[i] -= eps_g
        g_fd = (loss_at(up) - loss_at(dn)) / (2 * eps_g)
        up[i], dn[i] = margin[i] + eps_h, margin[i] - eps_h
        h_fd = (loss_at(up) - 2 * loss_at(margin) + loss_at(dn)) / eps_h**2
        assert abs(g[i] - g_fd) <= 1e-6 * (1 + abs(g[i]))
        assert abs(h[i] - h_fd) <= 1e-6 * (1 + abs(h[i])) + 1e-7


def test_softmax_uniform_two_class():
    Y = one_hot(np.array([0]), 2)
    g, h = softmax_grad_hess(Y, np.zeros((1, 2)))
    assert np.allclose(g, [[-0.5, 0.5]])
    assert np.allclose(h, [[0.25, 0.25]])


def test_softmax_three_class_symmetry():
    Y = one_hot(np.array([1]), 3)
    g, _ = softmax_grad_hess(Y, np.zeros((1, 3)))
    assert np.allclose(g, [[1 / 3, -2 / 3, 1 / 3]])


def test_softmax_matches_finite_differences():
    rng = np.random.default_rng(1)
    n, k = 20, 4
    Y = one_hot(rng.integers(0, k, n), k)
    scores = rng.normal(size=(n, k))
    g, h = softmax_grad_hess(Y, scores)
    eps_g, eps_h = 1e-5, 1e-3

    def total(s):
        return softmax_xent_value(Y, s) * n

    for i in range(0, n, 5):
        for c in range(k):
            up, dn = scores.copy(), scores.copy()
            up[i, c] += eps_g
            dn[i, c] -= eps_g
            g_fd = (total(up) - total(dn)) / (2 * eps_g)
            up[i, c], dn[i, c] = scores[i, c] + eps_h, scores[i, c] - eps_h
            h_fd = (total(up) - 2 * total(scores) + total(dn)) / eps_h**2
            assert abs(g[i, c] - g_fd) <= 1e-6 * (1 + abs(g[i, c]))
            assert abs(h[i, c] - h_fd) <= 1e-6 * (1 + abs(h[i, c])) + 1e-7


def test_sigmoid_stability():
    out = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert out[0] == 0.0 and out[1] == 0.5 and out[2] == 1.0


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    P = softmax(rng.normal(size=(10, 5)) * 50)
    assert np.allclose(P.sum(axis=1), 1.0)

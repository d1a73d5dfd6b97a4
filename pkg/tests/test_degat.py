import numpy as np
import pytest

from degat_kit.degat import (
    DeGatParams,
    affinity_to_log_bias,
    degat_backward,
    degat_forward,
    dense_affinity,
    init_degat_params,
    pooled_prior,
)


def slow_forward(x, params, k, metric="cosine"):
    """Scalar-loop reference: explicit edges, explicit softmax."""
    n, c = x.shape
    out = np.empty_like(x)
    dense = np.zeros((n, n))
    for i in range(n):
        scored = []
        for j in range(n):
            if j == i:
                continue
            if metric == "cosine":
                ni, nj = np.linalg.norm(x[i]), np.linalg.norm(x[j])
                s = 0.0 if ni == 0 or nj == 0 else x[i] @ x[j] / (ni * nj)
                scored.append((-s, j))
            else:
                scored.append((np.linalg.norm(x[i] - x[j]), j))
        scored.sort()
        nbrs = [j for _, j in scored[:k]]
        logits = []
        for j in nbrs:
            h = np.concatenate([x[i], x[j]])
            z = params.w_proj @ h
            e = np.where(z > 0, z, params.leaky_slope * z)
            logits.append(params.a @ e)
        logits = np.asarray(logits)
        w = np.exp(logits - logits.max())
        alpha = w / w.sum()
        m = np.zeros(c)
        for a_ij, j in zip(alpha, nbrs):
            dense[i, j] = a_ij
            m += a_ij * (params.w_val @ x[j])
        out[i] = x[i] + np.where(m > 0, m, np.expm1(m))
    return out, dense


def fd_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        fp = f()
        arr[idx] = old - eps
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
        it.iternext()
    return g


class TestForward:
    def test_zero_weights_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 4))
        params = DeGatParams(w_proj=np.zeros((4, 8)), a=np.zeros(4), w_val=np.zeros((4, 4)))
        out, _ = degat_forward(x, params, 3)
        np.testing.assert_array_equal(out, x)

    def test_hand_example_uniform_attention(self):
        # a = 0 forces uniform alpha; W_val = I passes neighbors through.
        x = np.array([[1.0, 0.1], [2.0, 0.0], [0.0, 2.0]])
        params = DeGatParams(w_proj=np.zeros((2, 4)), a=np.zeros(2), w_val=np.eye(2))
        out, cache = degat_forward(x, params, 2)
        np.testing.assert_allclose(cache.alpha, 0.5, atol=1e-15)
        # node 0 message: 0.5*(2,0) + 0.5*(0,2) = (1,1); ELU(1)=1
        np.testing.assert_allclose(out[0], [2.0, 1.1], atol=1e-14)

    @pytest.mark.parametrize("metric", ["cosine", "euclidean"])
    def test_matches_scalar_reference(self, metric):
        rng = np.random.default_rng(1)
        for trial in range(10):
            n = int(rng.integers(4, 20))
            c = int(rng.integers(2, 6))
            k = int(rng.integers(1, n))
            x = rng.standard_normal((n, c))
            params = init_degat_params(c, rng=trial)
            out, cache = degat_forward(x, params, k, metric)
            ref, dense = slow_forward(x, params, k, metric)
            np.testing.assert_allclose(out, ref, atol=1e-12)
            np.testing.assert_allclose(dense_affinity(cache), dense, atol=1e-13)

    def test_row_stochastic(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((12, 5))
        _, cache = degat_forward(x, init_degat_params(5, rng=2), 6)
        np.testing.assert_allclose(cache.alpha.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(cache.alpha >= 0.0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            degat_forward(np.zeros((4, 3)), init_degat_params(5), 2)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((10, 4))
        params = init_degat_params(4, rng=3)
        out, _ = degat_forward(x, params, 4)
        perm = rng.permutation(10)
        out_p, _ = degat_forward(x[perm], params, 4)
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


class TestBackward:
    def test_gradients_match_finite_difference(self):
        rng = np.random.default_rng(4)
        n, c, k = 8, 3, 4
        x = rng.standard_normal((n, c))
        params = init_degat_params(c, rng=4)
        w = rng.standard_normal((n, c))  # fixed projection defines a scalar loss

        out, cache = degat_forward(x, params, k)
        grads = degat_backward(cache, params, w)

        def loss():
            o, _ = degat_forward(x, params, k)
            return float(np.sum(w * o))

        for analytic, arr in [
            (grads.d_w_proj, params.w_proj),
            (grads.d_a, params.a),
            (grads.d_w_val, params.w_val),
            (grads.d_x, x),
        ]:
            numeric = fd_grad(loss, arr)
            denom = max(1.0, float(np.max(np.abs(analytic))))
            assert np.max(np.abs(analytic - numeric)) / denom < 1e-7

    def test_upstream_shape_check(self):
        x = np.random.default_rng(5).standard_normal((5, 3))
        params = init_degat_params(3, rng=5)
        _, cache = degat_forward(x, params, 2)
        with pytest.raises(ValueError):
            degat_backward(cache, params, np.zeros((4, 3)))

    def test_residual_only_when_zero_upstream_elsewhere(self):
        # zero weights: out = x exactly, so d_x must equal upstream
        x = np.random.default_rng(6).standard_normal((5, 3))
        params = DeGatParams(w_proj=np.zeros((3, 6)), a=np.zeros(3), w_val=np.zeros((3, 3)))
        _, cache = degat_forward(x, params, 2)
        up = np.random.default_rng(7).standard_normal((5, 3))
        grads = degat_backward(cache, params, up)
        np.testing.assert_array_equal(grads.d_x, up)
        np.testing.assert_array_equal(grads.d_a, np.zeros(3))


class TestDerivedQuantities:
    def test_pooled_prior_is_column_mean(self):
        x = np.array([[1.0, 2.0], [3.0, 6.0]])
        np.testing.assert_array_equal(pooled_prior(x), [2.0, 4.0])

    def test_pooled_prior_empty(self):
        with pytest.raises(ValueError):
            pooled_prior(np.zeros((0, 3)))

    def test_log_bias_on_and_off_edges(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((7, 4))
        _, cache = degat_forward(x, init_degat_params(4, rng=8), 3)
        b = affinity_to_log_bias(cache)
        dense = dense_affinity(cache)
        on = dense > 0
        np.testing.assert_allclose(b[on], np.log(dense[on]), atol=1e-15)
        assert np.all(b[~on] == 0.0)

    def test_log_bias_floor(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 3))
        _, cache = degat_forward(x, init_degat_params(3, rng=9), 2)
        cache.alpha[0, 0] = 0.0
        b = affinity_to_log_bias(cache, eps=1e-12)
        j = cache.graph.neighbors[0, 0]
        assert b[0, j] == pytest.approx(np.log(1e-12))
        with pytest.raises(ValueError):
            affinity_to_log_bias(cache, eps=0.0)

    def test_norm_bound(self):
        # per-node message is a convex combination; ELU is non-expansive
        rng = np.random.default_rng(10)
        x = rng.standard_normal((20, 6))
        params = init_degat_params(6, rng=10)
        out, cache = degat_forward(x, params, 5)
        v_norm_max = np.max(np.linalg.norm(cache.values, axis=1))
        delta = np.linalg.norm(out - x, axis=1)
        assert np.all(delta <= np.sqrt(6) * v_norm_max + 1e-9)

"""Runnable property suite behind the ``check`` CLI subcommand.

Each check exercises one proved property of the attention layer or the
objective (row-stochasticity, convex-hull bounds, norm bound,
permutation equivariance, sparse/dense equivalence, gradient fidelity,
optimal confidence) and reports pass/fail with a measured worst case.
"""

from dataclasses import dataclass

import numpy as np

from . import conditioning as cond
from . import degat as dg
from .graph import edge_count
from .numerics import elu
from .objective import (
    LossWeights,
    confidence_objective,
    finite_diff_check,
    marginal_penalty,
    optimal_confidence,
)

__all__ = ["CheckResult", "run_property_suite"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_instance(rng, max_l=64, max_c=32, max_k=9):
    l = int(rng.integers(4, max_l + 1))
    c = int(rng.integers(2, max_c + 1))
    k = int(rng.integers(1, min(max_k, l - 1) + 1))
    x = rng.standard_normal((l, c))
    params = dg.init_degat_params(c, rng=rng)
    return x, params, k


def check_row_stochastic(n_instances=1000, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        x, params, k = _random_instance(rng)
        _, cache = dg.degat_forward(x, params, k)
        if np.any(cache.alpha < 0.0):
            return CheckResult("row_stochastic", False, "negative attention weight")
        worst = max(worst, float(np.max(np.abs(cache.alpha.sum(axis=1) - 1.0))))
    return CheckResult(
        "row_stochastic", worst <= tol, f"max |row sum - 1| = {worst:.3e}"
    )


def check_convex_hull(n_instances=1000, seed=1, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        x, params, k = _random_instance(rng)
        _, cache = dg.degat_forward(x, params, k)
        v_nb = cache.values[cache.graph.neighbors]  # (L, K, C)
        lo = v_nb.min(axis=1) - tol
        hi = v_nb.max(axis=1) + tol
        viol = max(
            float(np.max(lo - cache.messages, initial=0.0)),
            float(np.max(cache.messages - hi, initial=0.0)),
        )
        worst = max(worst, viol)
    return CheckResult("convex_hull", worst <= tol, f"max bound violation = {worst:.3e}")


def check_norm_bound(n_instances=1000, seed=2, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_instances):
        x, params, k = _random_instance(rng)
        x_out, cache = dg.degat_forward(x, params, k)
        out_norm = np.linalg.norm(x_out, axis=1)
        in_norm = np.linalg.norm(x, axis=1)
        v_norm = np.linalg.norm(cache.values, axis=1)
        bound = in_norm + v_norm[cache.graph.neighbors].max(axis=1)
        worst = max(worst, float(np.max(out_norm - bound)))
    return CheckResult("norm_bound", worst <= tol, f"max excess = {worst:.3e}")


def check_elu_nonexpansive(n=10000, seed=3):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-50.0, 50.0, n)
    ok = bool(np.all(np.abs(elu(z)) <= np.abs(z)))
    return CheckResult("elu_nonexpansive", ok, f"{n} samples in [-50, 50]")


def check_permutation_equivariance(n_perms=100, seed=4, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_perms):
        x, params, k = _random_instance(rng, max_l=24, max_c=12)
        out, _ = dg.degat_forward(x, params, k)
        perm = rng.permutation(x.shape[0])
        out_perm, _ = dg.degat_forward(x[perm], params, k)
        worst = max(worst, float(np.max(np.abs(out[perm] - out_perm))))
    return CheckResult(
        "permutation_equivariance", worst <= tol, f"max deviation = {worst:.3e}"
    )


def check_sparse_dense(n_instances=100, seed=5, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        x, params, k = _random_instance(rng, max_l=32, max_c=16)
        x_out, cache = dg.degat_forward(x, params, k)
        a_dense = dg.dense_affinity(cache)
        dense_out = x + elu(a_dense @ x @ params.w_val.T)
        worst = max(worst, float(np.max(np.abs(x_out - dense_out))))
        if edge_count(cache.graph) != x.shape[0] * k:
            return CheckResult("sparse_dense", False, "edge count mismatch")
    return CheckResult("sparse_dense", worst <= tol, f"max |sparse - dense| = {worst:.3e}")


def _pack(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def _unpack(theta, templates):
    out = []
    pos = 0
    for t in templates:
        out.append(theta[pos:pos + t.size].reshape(t.shape))
        pos += t.size
    return out


def degat_fd_error(l=8, c=4, k=3, seed=0, step=1e-5):
    """Max relative FD error of the hand-derived backward on one instance."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((l, c))
    params = dg.init_degat_params(c, rng=rng)
    weight = rng.standard_normal((l, c))
    templates = [params.w_proj, params.a, params.w_val, x]

    def loss(theta):
        wp, a, wv, xx = _unpack(theta, templates)
        p = dg.DeGatParams(w_proj=wp, a=a, w_val=wv, leaky_slope=params.leaky_slope)
        out, _ = dg.degat_forward(xx, p, k)
        return float(np.sum(weight * out))

    _, cache = dg.degat_forward(x, params, k)
    g = dg.degat_backward(cache, params, weight)
    analytic = _pack([g.d_w_proj, g.d_a, g.d_w_val, g.d_x])
    return finite_diff_check(loss, analytic, _pack(templates), step)


def bias_table_fd_error(l=5, c=4, heads=2, n_buckets=4, seed=0, step=1e-5):
    """FD check of the bucket-bias table gradient through biased attention."""
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((l, c))
    q = rng.standard_normal((l, c))
    k = rng.standard_normal((l, c))
    v = rng.standard_normal((l, c))
    weight = rng.standard_normal((heads, l, c))
    table0 = rng.standard_normal((n_buckets, heads))

    def loss(theta):
        table = cond.BiasTable(table=theta.reshape(n_buckets, heads))
        bias, _ = cond.bucket_bias(feats, table)
        total = 0.0
        for h in range(heads):
            out, _ = cond.biased_attention(q, k, v, bias[h])
            total += float(np.sum(weight[h] * out))
        return total

    table = cond.BiasTable(table=table0)
    bias, idx = cond.bucket_bias(feats, table)
    deltas = []
    for h in range(heads):
        _, acache = cond.biased_attention(q, k, v, bias[h])
        _, _, _, d_bias = cond.biased_attention_backward(acache, weight[h])
        deltas.append(d_bias)
    analytic = cond.bias_table_gradient(np.stack(deltas), idx, n_buckets)
    return finite_diff_check(loss, analytic.ravel(), table0.ravel(), step)


def bias_mlp_fd_error(l=5, c=4, heads=2, hidden=6, seed=0, step=1e-5):
    """FD check of the continuous-MLP bias parameter gradients."""
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((l, c))
    weight = rng.standard_normal((heads, l, l))
    mlp0 = cond.init_mlp2(1, hidden, heads, activation="relu", rng=rng)
    templates = [mlp0.w1, mlp0.b1, mlp0.w2, mlp0.b2]

    def loss(theta):
        w1, b1, w2, b2 = _unpack(theta, templates)
        mlp = cond.Mlp2(w1=w1, b1=b1, w2=w2, b2=b2, activation="relu")
        bias, _ = cond.mlp_bias(feats, mlp)
        return float(np.sum(weight * bias))

    bias, cache = cond.mlp_bias(feats, mlp0)
    g = cond.mlp_bias_backward(mlp0, cache, weight)
    analytic = _pack([g.d_w1, g.d_b1, g.d_w2, g.d_b2])
    return finite_diff_check(loss, analytic, _pack(templates), step)


def conditioning_fd_errors(c=6, l=5, heads=2, hidden=4, seed=0, step=1e-5):
    """FD errors for additive, FiLM, and cross-attention conditioning heads."""
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(c)
    g_vec = rng.standard_normal(c)
    tokens = rng.standard_normal((l, c))
    weight = rng.standard_normal(c)
    errors = {}

    add_mlp = cond.init_mlp2(c, hidden, c, rng=rng)
    templates = [add_mlp.w1, add_mlp.b1, add_mlp.w2, add_mlp.b2, base, g_vec]

    def loss_add(theta):
        w1, b1, w2, b2, b, gg = _unpack(theta, templates)
        mlp = cond.Mlp2(w1=w1, b1=b1, w2=w2, b2=b2)
        tok, _ = cond.condition_additive(b, gg, mlp)
        return float(np.dot(weight, tok.conditioned))

    tok, cache = cond.condition_additive(base, g_vec, add_mlp)
    gr, d_base, d_g = cond.condition_additive_backward(add_mlp, cache, weight)
    analytic = _pack([gr.d_w1, gr.d_b1, gr.d_w2, gr.d_b2, d_base, d_g])
    errors["additive"] = finite_diff_check(loss_add, analytic, _pack(templates), step)

    film_mlp = cond.init_mlp2(c, hidden, 2 * c, rng=rng)
    templates_f = [film_mlp.w1, film_mlp.b1, film_mlp.w2, film_mlp.b2, base, g_vec]

    def loss_film(theta):
        w1, b1, w2, b2, b, gg = _unpack(theta, templates_f)
        mlp = cond.Mlp2(w1=w1, b1=b1, w2=w2, b2=b2)
        tok, _ = cond.condition_film(b, gg, mlp)
        return float(np.dot(weight, tok.conditioned))

    tok, fcache = cond.condition_film(base, g_vec, film_mlp)
    gr, d_base, d_g = cond.condition_film_backward(film_mlp, fcache, base, weight)
    analytic = _pack([gr.d_w1, gr.d_b1, gr.d_w2, gr.d_b2, d_base, d_g])
    errors["film"] = finite_diff_check(loss_film, analytic, _pack(templates_f), step)

    attn = cond.init_cross_attn(c, heads, rng=rng, zero_output=False)
    ffn = cond.init_mlp2(c, hidden, c, rng=rng)
    templates_x = [attn.w_q, attn.w_k, attn.w_v, attn.w_o,
                   ffn.w1, ffn.b1, ffn.w2, ffn.b2, base]

    def loss_xattn(theta):
        wq, wk, wv, wo, w1, b1, w2, b2, b = _unpack(theta, templates_x)
        a = cond.CrossAttnParams(w_q=wq, w_k=wk, w_v=wv, w_o=wo, n_heads=heads)
        f = cond.Mlp2(w1=w1, b1=b1, w2=w2, b2=b2)
        tok, _ = cond.condition_cross_attention(b, tokens, a, f)
        return float(np.dot(weight, tok.conditioned))

    tok, xcache = cond.condition_cross_attention(base, tokens, attn, ffn)
    ag, fg, d_base, _ = cond.condition_cross_attention_backward(attn, ffn, xcache, weight)
    analytic = _pack([ag["w_q"], ag["w_k"], ag["w_v"], ag["w_o"],
                      fg.d_w1, fg.d_b1, fg.d_w2, fg.d_b2, d_base])
    errors["cross_attn"] = finite_diff_check(loss_xattn, analytic, _pack(templates_x), step)
    return errors


def check_gradients(tol=1e-4):
    errs = {
        "degat": max(degat_fd_error(seed=s) for s in range(3)),
        "bias_table": bias_table_fd_error(),
        "bias_mlp": bias_mlp_fd_error(),
        **conditioning_fd_errors(),
    }
    worst = max(errs.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in errs.items())
    return CheckResult("gradient_fidelity", worst <= tol, detail)


def check_optimal_confidence(n=100, seed=6, tol=1e-6, exact_tol=1e-12):
    rng = np.random.default_rng(seed)
    worst_min = 0.0
    worst_sub = 0.0
    for _ in range(n):
        w = LossWeights(alpha=float(rng.uniform(0.05, 3.0)),
                        gamma=float(rng.uniform(0.05, 3.0)))
        r_sq = float(rng.uniform(0.01, 10.0))
        c_star = optimal_confidence(r_sq, w)
        # golden-section minimization over (0, 1e3]
        lo, hi = 1e-9, 1e3
        phi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        for _ in range(200):
            m1 = b - phi * (b - a)
            m2 = a + phi * (b - a)
            if confidence_objective(m1, r_sq, w) < confidence_objective(m2, r_sq, w):
                b = m2
            else:
                a = m1
        worst_min = max(worst_min, abs(0.5 * (a + b) - c_star))
        worst_sub = max(
            worst_sub,
            abs(confidence_objective(c_star, r_sq, w) - marginal_penalty(r_sq, w)),
        )
        # strict convexity witness and unique-minimum probes
        c1, c2 = c_star * 0.3, c_star * 2.5
        mid = 0.5 * (c1 + c2)
        if not (
            confidence_objective(mid, r_sq, w)
            < 0.5 * (confidence_objective(c1, r_sq, w) + confidence_objective(c2, r_sq, w)) + 1e-12
        ):
            return CheckResult("optimal_confidence", False, "convexity violated")
        j_star = confidence_objective(c_star, r_sq, w)
        for delta in (0.1 * c_star, 0.5 * c_star):
            if not (confidence_objective(c_star + delta, r_sq, w) > j_star
                    and confidence_objective(c_star - delta, r_sq, w) > j_star):
                return CheckResult("optimal_confidence", False, "minimum not unique")
    ok = worst_min <= tol and worst_sub <= exact_tol
    return CheckResult(
        "optimal_confidence", ok,
        f"max |argmin - closed form| = {worst_min:.2e}, "
        f"max |J(C*) - penalty| = {worst_sub:.2e}",
    )


def run_property_suite(fast=False):
    n = 100 if fast else 1000
    return [
        check_row_stochastic(n_instances=n),
        check_convex_hull(n_instances=n),
        check_norm_bound(n_instances=n),
        check_elu_nonexpansive(n=1000 if fast else 10000),
        check_permutation_equivariance(n_perms=20 if fast else 100),
        check_sparse_dense(n_instances=20 if fast else 100),
        check_gradients(),
        check_optimal_confidence(n=20 if fast else 100),
    ]

"""Hot numeric kernels, each in a numba and a pure-numpy flavor.

The pairs are computationally equivalent; the numba versions remove Python
and numpy dispatch overhead from the innermost loops:

* ``pnp_step``       - reprojection residual + central-difference Jacobian
                       for one damped Gauss-Newton iteration
* ``best_split``     - exact greedy split scan over presorted gradients
* ``forest_margin``  - additive margin of a flattened tree ensemble
* ``lstm_window_logit`` - recurrent forward pass over one feature window

Dispatch is decided once at import time (see backend.py); benchmarks and
equivalence tests reach the ``*_np`` / ``*_nb`` names directly.
"""

from __future__ import annotations

import math

import numpy as np

from .backend import USE_NUMBA

_FD_STEP = 1e-6  # central-difference step for the pose Jacobian


# ---------------------------------------------------------------------------
# pure numpy implementations
# ---------------------------------------------------------------------------

def _rodrigues_np(rvec: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(rvec))
    K = np.array(
        [
            [0.0, -rvec[2], rvec[1]],
            [rvec[2], 0.0, -rvec[0]],
            [-rvec[1], rvec[0], 0.0],
        ]
    )
    if theta < 1e-12:
        return np.eye(3) + K
    k = K / theta
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def _project_params_np(params, pts3, fx, fy, cx, cy):
    R = _rodrigues_np(params[:3])
    p = pts3 @ R.T + params[3:6]
    z = p[:, 2]
    return np.column_stack((fx * p[:, 0] / z + cx, fy * p[:, 1] / z + cy))


def pnp_step_np(params, pts3, obs, fx, fy, cx, cy):
    """Residual vector (2N) and numeric Jacobian (2N x 6) at ``params``."""
    res = (_project_params_np(params, pts3, fx, fy, cx, cy) - obs).ravel()
    J = np.empty((res.size, 6))
    for k in range(6):
        dp = np.zeros(6)
        dp[k] = _FD_STEP
        hi = (_project_params_np(params + dp, pts3, fx, fy, cx, cy) - obs).ravel()
        lo = (_project_params_np(params - dp, pts3, fx, fy, cx, cy) - obs).ravel()
        J[:, k] = (hi - lo) / (2.0 * _FD_STEP)
    return res, J


def best_split_np(vals, grad, hess, lam, min_leaf):
    """Best (gain, feature, split_position) over presorted per-feature columns.

    ``vals``, ``grad``, ``hess`` are (n, F) arrays already sorted rowwise
    per column by feature value.  A split at position i sends sorted rows
    [0, i) left and [i, n) right; positions are valid only between distinct
    values and when both sides hold at least ``min_leaf`` rows.  Returns
    gain -inf when no valid split exists.
    """
    n, nf = vals.shape
    best_gain = -np.inf
    best_feat = -1
    best_pos = -1
    if n < 2 * min_leaf:
        return best_gain, best_feat, best_pos
    gl = np.cumsum(grad, axis=0)
    hl = np.cumsum(hess, axis=0)
    gt = gl[-1]
    ht = hl[-1]
    parent = gt * gt / (ht + lam)
    i = np.arange(1, n)
    valid = (vals[1:] > vals[:-1]) & (i[:, None] >= min_leaf) & ((n - i)[:, None] >= min_leaf)
    gl_i = gl[:-1]
    hl_i = hl[:-1]
    gr_i = gt - gl_i
    hr_i = ht - hl_i
    gains = 0.5 * (gl_i * gl_i / (hl_i + lam) + gr_i * gr_i / (hr_i + lam) - parent)
    gains = np.where(valid, gains, -np.inf)
    # first maximum in (feature, position) order mirrors the numba scan
    flat = gains.T.ravel()
    idx = int(np.argmax(flat))
    if flat[idx] > -np.inf:
        best_gain = float(flat[idx])
        best_feat = idx // (n - 1)
        best_pos = idx % (n - 1) + 1
    return best_gain, best_feat, best_pos


def forest_margin_np(feat, thr, left, right, value, offsets, X):
    """Sum of leaf values over all trees for every row of ``X``.

    Trees are flattened node arrays; ``feat`` < 0 marks a leaf.  Routing is
    ``x[feat] < thr`` to the left child.
    """
    n = X.shape[0]
    margin = np.zeros(n)
    rows = np.arange(n)
    for t in range(offsets.size - 1):
        node = np.full(n, offsets[t], dtype=np.int64)
        f = feat[node]
        active = f >= 0
        while active.any():
            idx = rows[active]
            nd = node[active]
            go_left = X[idx, feat[nd]] < thr[nd]
            node[idx] = np.where(go_left, left[nd], right[nd])
            f = feat[node]
            active = f >= 0
        margin += value[node]
    return margin


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_window_logit_np(Wi, Wf, Wo, Wg, bi, bf, bo, bg, W1, b1, W2, b2, seq):
    """Pre-sigmoid output for one (w, input_dim) window, zero initial state."""
    hidden = bi.shape[0]
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in range(seq.shape[0]):
        z = np.concatenate((seq[t], h))
        i = _sigmoid(Wi @ z + bi)
        f = _sigmoid(Wf @ z + bf)
        o = _sigmoid(Wo @ z + bo)
        g = np.tanh(Wg @ z + bg)
        c = f * c + i * g
        h = o * np.tanh(c)
    a1 = np.maximum(W1 @ h + b1, 0.0)
    return float(W2 @ a1 + b2[0])


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _pnp_project_res_nb(params, pts3, obs, fx, fy, cx, cy, out):
        rx, ry, rz = params[0], params[1], params[2]
        theta = math.sqrt(rx * rx + ry * ry + rz * rz)
        if theta < 1e-12:
            r00, r01, r02 = 1.0, -rz, ry
            r10, r11, r12 = rz, 1.0, -rx
            r20, r21, r22 = -ry, rx, 1.0
        else:
            kx, ky, kz = rx / theta, ry / theta, rz / theta
            s = math.sin(theta)
            c1 = 1.0 - math.cos(theta)
            r00 = 1.0 + c1 * (-kz * kz - ky * ky)
            r01 = -s * kz + c1 * kx * ky
            r02 = s * ky + c1 * kx * kz
            r10 = s * kz + c1 * kx * ky
            r11 = 1.0 + c1 * (-kz * kz - kx * kx)
            r12 = -s * kx + c1 * ky * kz
            r20 = -s * ky + c1 * kx * kz
            r21 = s * kx + c1 * ky * kz
            r22 = 1.0 + c1 * (-ky * ky - kx * kx)
        tx, ty, tz = params[3], params[4], params[5]
        for i in range(pts3.shape[0]):
            X, Y, Z = pts3[i, 0], pts3[i, 1], pts3[i, 2]
            px = r00 * X + r01 * Y + r02 * Z + tx
            py = r10 * X + r11 * Y + r12 * Z + ty
            pz = r20 * X + r21 * Y + r22 * Z + tz
            out[2 * i] = fx * px / pz + cx - obs[i, 0]
            out[2 * i + 1] = fy * py / pz + cy - obs[i, 1]

    @njit(cache=True)
    def pnp_step_nb(params, pts3, obs, fx, fy, cx, cy):
        m = 2 * pts3.shape[0]
        res = np.empty(m)
        _pnp_project_res_nb(params, pts3, obs, fx, fy, cx, cy, res)
        J = np.empty((m, 6))
        hi = np.empty(m)
        lo = np.empty(m)
        pert = params.copy()
        for k in range(6):
            pert[k] = params[k] + _FD_STEP
            _pnp_project_res_nb(pert, pts3, obs, fx, fy, cx, cy, hi)
            pert[k] = params[k] - _FD_STEP
            _pnp_project_res_nb(pert, pts3, obs, fx, fy, cx, cy, lo)
            pert[k] = params[k]
            for r in range(m):
                J[r, k] = (hi[r] - lo[r]) / (2.0 * _FD_STEP)
        return res, J

    @njit(cache=True)
    def best_split_nb(vals, grad, hess, lam, min_leaf):
        n, nf = vals.shape
        best_gain = -np.inf
        best_feat = -1
        best_pos = -1
        if n < 2 * min_leaf:
            return best_gain, best_feat, best_pos
        for j in range(nf):
            gt = 0.0
            ht = 0.0
            for i in range(n):
                gt += grad[i, j]
                ht += hess[i, j]
            parent = gt * gt / (ht + lam)
            gl = 0.0
            hl = 0.0
            for i in range(1, n):
                gl += grad[i - 1, j]
                hl += hess[i - 1, j]
                if vals[i, j] <= vals[i - 1, j]:
                    continue
                if i < min_leaf or n - i < min_leaf:
                    continue
                gr = gt - gl
                hr = ht - hl
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
                if gain > best_gain:
                    best_gain = gain
                    best_feat = j
                    best_pos = i
        return best_gain, best_feat, best_pos

    @njit(cache=True)
    def forest_margin_nb(feat, thr, left, right, value, offsets, X):
        n = X.shape[0]
        margin = np.zeros(n)
        for t in range(offsets.size - 1):
            root = offsets[t]
            for r in range(n):
                node = root
                while feat[node] >= 0:
                    if X[r, feat[node]] < thr[node]:
                        node = left[node]
                    else:
                        node = right[node]
                margin[r] += value[node]
        return margin

    @njit(cache=True)
    def lstm_window_logit_nb(Wi, Wf, Wo, Wg, bi, bf, bo, bg, W1, b1, W2, b2, seq):
        hidden = bi.shape[0]
        d_in = seq.shape[1]
        h = np.zeros(hidden)
        c = np.zeros(hidden)
        i_g = np.empty(hidden)
        f_g = np.empty(hidden)
        o_g = np.empty(hidden)
        g_g = np.empty(hidden)
        for t in range(seq.shape[0]):
            for u in range(hidden):
                ai = bi[u]
                af = bf[u]
                ao = bo[u]
                ag = bg[u]
                for k in range(d_in):
                    x = seq[t, k]
                    ai += Wi[u, k] * x
                    af += Wf[u, k] * x
                    ao += Wo[u, k] * x
                    ag += Wg[u, k] * x
                for k in range(hidden):
                    hk = h[k]
                    ai += Wi[u, d_in + k] * hk
                    af += Wf[u, d_in + k] * hk
                    ao += Wo[u, d_in + k] * hk
                    ag += Wg[u, d_in + k] * hk
                i_g[u] = 1.0 / (1.0 + math.exp(-ai))
                f_g[u] = 1.0 / (1.0 + math.exp(-af))
                o_g[u] = 1.0 / (1.0 + math.exp(-ao))
                g_g[u] = math.tanh(ag)
            for u in range(hidden):
                c[u] = f_g[u] * c[u] + i_g[u] * g_g[u]
                h[u] = o_g[u] * math.tanh(c[u])
        logit = b2[0]
        for v in range(b1.shape[0]):
            a = b1[v]
            for u in range(hidden):
                a += W1[v, u] * h[u]
            if a > 0.0:
                logit += W2[0, v] * a
        return logit

    pnp_step = pnp_step_nb
    best_split = best_split_nb
    forest_margin = forest_margin_nb
    lstm_window_logit = lstm_window_logit_nb
else:
    pnp_step_nb = None
    best_split_nb = None
    forest_margin_nb = None
    lstm_window_logit_nb = None

    pnp_step = pnp_step_np
    best_split = best_split_np
    forest_margin = forest_margin_np
    lstm_window_logit = lstm_window_logit_np

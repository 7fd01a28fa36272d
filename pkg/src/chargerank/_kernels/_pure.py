"""Pure-Python/numpy fallbacks for the compiled kernels.

Each function here mirrors its Cython twin in ``_ckernels.pyx``. The tree
split kernel is written so that the floating-point accumulation order is
identical to the compiled version (sequential prefix sums), which makes the
two backends produce bit-identical trees. The lasso path solver converges to
the same optimum but may differ in the last few ulps because numpy dot
products reduce in a different order.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "pure"

_PROB_CLIP = 1e-12


def convex_clip_area(subject: np.ndarray, clip: np.ndarray) -> float:
    """Area of ``subject`` clipped to the convex CCW ring ``clip``.

    Sutherland-Hodgman against each clip edge, then the shoelace formula.
    The subject ring may be non-convex; clip must be convex and CCW.
    """
    out_x = [float(v) for v in subject[:, 0]]
    out_y = [float(v) for v in subject[:, 1]]
    m = clip.shape[0]
    ax = float(clip[m - 1, 0])
    ay = float(clip[m - 1, 1])
    for k in range(m):
        bx = float(clip[k, 0])
        by = float(clip[k, 1])
        if not out_x:
            return 0.0
        in_x, in_y = out_x, out_y
        out_x, out_y = [], []
        ex = bx - ax
        ey = by - ay
        sx = in_x[-1]
        sy = in_y[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
        for px, py in zip(in_x, in_y):
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != s_in:
                dcx = ax - bx
                dcy = ay - by
                dpx = sx - px
                dpy = sy - py
                denom = dcx * dpy - dcy * dpx
                if denom != 0.0:
                    n1 = ax * by - ay * bx
                    n2 = sx * py - sy * px
                    out_x.append((n1 * dpx - n2 * dcx) / denom)
                    out_y.append((n1 * dpy - n2 * dcy) / denom)
                else:
                    out_x.append(px)
                    out_y.append(py)
            if p_in:
                out_x.append(px)
                out_y.append(py)
            sx, sy, s_in = px, py, p_in
        ax, ay = bx, by
    if len(out_x) < 3:
        return 0.0
    acc = 0.0
    x0 = out_x[-1]
    y0 = out_y[-1]
    for x1, y1 in zip(out_x, out_y):
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    area = 0.5 * acc
    return area if area > 0.0 else 0.0


def best_split(
    X: np.ndarray,
    sort_idx: np.ndarray,
    rows_mask: np.ndarray,
    y: np.ndarray,
    counts: np.ndarray,
    feat_idx: np.ndarray,
    total_count: float,
    total_sum: float,
    parent_score: float,
    min_leaf: float,
):
    """Exhaustive best MSE split over the given feature subset.

    Returns ``(feature, threshold, gain)`` with ``feature == -1`` when no
    admissible split improves on the parent. Gain is the reduction in total
    squared error; candidates are midpoints between consecutive distinct
    values. Ties keep the earliest feature in ``feat_idx`` order, then the
    lowest threshold.
    """
    best_f = -1
    best_thr = 0.0
    best_gain = 0.0
    for f in feat_idx:
        order = sort_idx[:, f]
        keep = (rows_mask[order] != 0) & (counts[order] > 0.0)
        rows = order[keep]
        if rows.shape[0] < 2:
            continue
        vals = X[rows, f]
        c = counts[rows]
        cum_cnt = np.cumsum(c)
        cum_sum = np.cumsum(c * y[rows])
        boundary = vals[1:] != vals[:-1]
        if not boundary.any():
            continue
        cnt_l = cum_cnt[:-1][boundary]
        sum_l = cum_sum[:-1][boundary]
        cnt_r = total_count - cnt_l
        ok = (cnt_l >= min_leaf) & (cnt_r >= min_leaf)
        if not ok.any():
            continue
        cnt_l = cnt_l[ok]
        sum_l = sum_l[ok]
        cnt_r = cnt_r[ok]
        sum_r = total_sum - sum_l
        gains = sum_l * sum_l / cnt_l + sum_r * sum_r / cnt_r - parent_score
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            best_f = int(f)
            pos = np.nonzero(boundary)[0][ok][k]
            best_thr = (vals[pos] + vals[pos + 1]) / 2.0
    return best_f, best_thr, best_gain


def logistic_lasso_path(
    X: np.ndarray,
    y: np.ndarray,
    lambdas: np.ndarray,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
    coef_cap: float = 1e4,
    kkt_tol: float = 5e-7,
    obj_tol: float = 0.0,
):
    """Fit the l1-penalized logistic model along a lambda sequence.

    X must be standardized (zero mean, unit variance per column) and y must
    be 0/1. Lambdas are fit in the order given (pass them descending for
    warm starts). Minimizes mean logistic deviance plus ``lam * ||beta||_1``
    via IRLS with cyclic coordinate descent, an active-set strategy, and
    sequential strong-rule screening (violations are caught by a full
    gradient check, so screening never changes the solution).

    Convergence: with ``obj_tol == 0`` a sweep converges when the largest
    coefficient change drops below ``tol`` and the final solution must pass
    a KKT check at ``kkt_tol``. With ``obj_tol > 0`` the curvature-scaled
    criterion ``max_j d_j * delta_j^2 < obj_tol`` is used instead (the
    cheap mode for cross-validation paths, where only the scores matter).

    Returns ``(b0s, betas, sweeps, capped)`` where ``betas[k]`` is the
    coefficient vector (standardized scale) for ``lambdas[k]``.
    """
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if obj_tol > 0.0:
        return _gram_path(Xf, y, lambdas, tol, max_sweeps, coef_cap, obj_tol)
    return _irls_path(Xf, y, lambdas, tol, max_sweeps, coef_cap, kkt_tol)


def _irls_path(Xf, y, lambdas, tol, max_sweeps, coef_cap, kkt_tol):
    """Exact solver: IRLS quadratic approximation with naive CD updates."""
    n, p = Xf.shape
    n_lam = lambdas.shape[0]
    b0s = np.zeros(n_lam)
    betas = np.zeros((n_lam, p))
    sweeps_used = np.zeros(n_lam, dtype=np.int64)
    capped = np.zeros(n_lam, dtype=np.uint8)

    ybar = float(np.mean(y))
    beta = np.zeros(p)
    b0 = math.log(ybar / (1.0 - ybar)) if 0.0 < ybar < 1.0 else 0.0
    g_abs = np.abs(Xf.T @ (y - ybar)) / n
    prev_lam = float(np.max(g_abs, initial=0.0))

    for k in range(n_lam):
        lam = float(lambdas[k])
        screen = (g_abs >= 2.0 * lam - prev_lam) | (beta != 0.0)
        cols = np.nonzero(screen)[0]
        sweeps = 0
        hit_cap = False
        done = False
        while not done:
            eta = b0 + Xf @ beta
            prob = 1.0 / (1.0 + np.exp(-eta))
            np.clip(prob, _PROB_CLIP, 1.0 - _PROB_CLIP, out=prob)
            w = prob * (1.0 - prob)
            wr = y - prob  # w * working_residual
            d = np.zeros(p)
            for j in cols:
                xj = Xf[:, j]
                d[j] = float(w @ (xj * xj)) / n
            wsum = float(np.sum(w))
            b0_start = b0
            beta_start = beta.copy()

            active_only = False
            while sweeps < max_sweeps:
                sweeps += 1
                max_delta = 0.0
                db0 = float(np.sum(wr)) / wsum
                if db0 != 0.0:
                    b0 += db0
                    wr -= db0 * w
                    max_delta = abs(db0)
                for j in cols:
                    bj = beta[j]
                    if active_only and bj == 0.0:
                        continue
                    if d[j] <= 0.0:
                        continue
                    xj = Xf[:, j]
                    rho = float(xj @ wr) / n + d[j] * bj
                    if rho > lam:
                        bj_new = (rho - lam) / d[j]
                    elif rho < -lam:
                        bj_new = (rho + lam) / d[j]
                    else:
                        bj_new = 0.0
                    if bj_new > coef_cap:
                        bj_new = coef_cap
                        hit_cap = True
                    elif bj_new < -coef_cap:
                        bj_new = -coef_cap
                        hit_cap = True
                    delta = bj_new - bj
                    if delta != 0.0:
                        beta[j] = bj_new
                        wr -= delta * (w * xj)
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                if max_delta < tol:
                    if active_only:
                        active_only = False  # confirm with one full sweep
                    else:
                        break
                else:
                    active_only = True

            outer_delta = max(
                abs(b0 - b0_start),
                float(np.max(np.abs(beta - beta_start), initial=0.0)),
            )
            if outer_delta >= tol and sweeps < max_sweeps:
                continue

            # full-gradient pass: strong-rule violations and KKT
            eta = b0 + Xf @ beta
            prob = 1.0 / (1.0 + np.exp(-eta))
            g = Xf.T @ (prob - y) / n
            g_abs = np.abs(g)
            new_violations = (~screen) & (g_abs > lam + kkt_tol)
            if new_violations.any() and sweeps < max_sweeps:
                screen |= new_violations
                cols = np.nonzero(screen)[0]
                continue
            if hit_cap or sweeps >= max_sweeps:
                done = True
            else:
                viol = np.where(
                    beta == 0.0,
                    np.maximum(g_abs - lam, 0.0),
                    np.abs(g + lam * np.sign(beta)),
                )
                done = float(np.max(viol, initial=0.0)) <= kkt_tol
        b0s[k] = b0
        betas[k] = beta
        sweeps_used[k] = sweeps
        capped[k] = 1 if hit_cap else 0
        prev_lam = lam
    return b0s, betas, sweeps_used, capped


def _gram_path(Xf, y, lambdas, tol, max_sweeps, coef_cap, obj_tol):
    """Path solver for CV: fixed-Hessian bound (curvature 1/4) with the
    Gram matrix cached, so coordinate visits cost O(1) and re-centering
    restores the exact gradient (Bohning-Lindsay bound optimization).

    Two throughput guards, both standard for CV paths: coordinate updates
    whose objective impact is below ``obj_tol / p`` are skipped, and the
    path is truncated (remaining lambdas frozen at the current solution)
    once the training deviance ratio exceeds 0.999.
    """
    n, p = Xf.shape
    n_lam = lambdas.shape[0]
    b0s = np.zeros(n_lam)
    betas = np.zeros((n_lam, p))
    sweeps_used = np.zeros(n_lam, dtype=np.int64)
    capped = np.zeros(n_lam, dtype=np.uint8)

    Q = (Xf.T @ Xf) / (4.0 * n)
    h = np.ascontiguousarray(np.diag(Q))
    h0 = 0.25
    update_floor = obj_tol / max(p, 1)

    ybar = float(np.mean(y))
    beta = np.zeros(p)
    b0 = math.log(ybar / (1.0 - ybar)) if 0.0 < ybar < 1.0 else 0.0

    def recenter():
        eta = b0 + Xf @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        np.clip(prob, _PROB_CLIP, 1.0 - _PROB_CLIP, out=prob)
        wr = y - prob
        dev = -2.0 * float(np.sum(y * np.log(prob) + (1.0 - y) * np.log1p(-prob)))
        return Xf.T @ wr / n, float(np.sum(wr)), dev

    q, swr, null_dev = recenter()
    prev_lam = float(np.max(np.abs(q), initial=0.0))

    for k in range(n_lam):
        lam = float(lambdas[k])
        screen = (np.abs(q) >= 2.0 * lam - prev_lam) | (beta != 0.0)
        cols = np.nonzero(screen)[0]
        sweeps = 0
        hit_cap = False
        done = False
        while not done:
            b0_start = b0
            beta_start = beta.copy()

            active_only = False
            while sweeps < max_sweeps:
                sweeps += 1
                max_metric = 0.0
                db0 = 4.0 * swr / n
                if db0 != 0.0:
                    b0 += db0
                    swr = 0.0
                    max_metric = h0 * db0 * db0
                for j in cols:
                    bj = beta[j]
                    if active_only and bj == 0.0:
                        continue
                    if h[j] <= 0.0:
                        continue
                    rho = q[j] + h[j] * bj
                    if rho > lam:
                        bj_new = (rho - lam) / h[j]
                    elif rho < -lam:
                        bj_new = (rho + lam) / h[j]
                    else:
                        bj_new = 0.0
                    if bj_new > coef_cap:
                        bj_new = coef_cap
                        hit_cap = True
                    elif bj_new < -coef_cap:
                        bj_new = -coef_cap
                        hit_cap = True
                    delta = bj_new - bj
                    if delta != 0.0:
                        metric = h[j] * delta * delta
                        if metric < update_floor and bj != 0.0:
                            continue  # negligible move, skip the O(p) update
                        beta[j] = bj_new
                        q -= delta * Q[:, j]
                        if metric > max_metric:
                            max_metric = metric
                if max_metric < obj_tol:
                    if active_only:
                        active_only = False  # confirm with one full sweep
                    else:
                        break
                else:
                    active_only = True

            # exact gradient at the new point: screening and outer check
            q, swr, dev = recenter()
            diffs = beta - beta_start
            outer_metric = float(np.max(h * diffs * diffs, initial=0.0))
            outer_metric = max(outer_metric, h0 * (b0 - b0_start) ** 2)
            if outer_metric >= obj_tol and sweeps < max_sweeps:
                continue

            slack = 1e-4 * max(lam, 1e-12)
            new_violations = (~screen) & (np.abs(q) > lam + slack)
            if new_violations.any() and sweeps < max_sweeps:
                screen |= new_violations
                cols = np.nonzero(screen)[0]
                continue
            done = True
        b0s[k] = b0
        betas[k] = beta
        sweeps_used[k] = sweeps
        capped[k] = 1 if hit_cap else 0
        prev_lam = lam
        if null_dev > 0.0 and 1.0 - dev / null_dev >= 0.999 and k + 1 < n_lam:
            b0s[k + 1 :] = b0
            betas[k + 1 :] = beta
            capped[k + 1 :] = capped[k]
            break
    return b0s, betas, sweeps_used, capped

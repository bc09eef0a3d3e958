"""Bounded nonlinear least squares by a trust-region dogleg iteration.

The model is ``y ~ model(x, params)``; the solver minimises
``0.5 * sum((model(x, p) - y)**2)`` subject to ``lo <= p <= hi``.

Variables sitting on a bound whose descent direction points outward are
frozen for that iteration; any remaining component that leaves the box is
reflected back inside and then clipped.  Columns are scaled by the running
maximum of the Jacobian column norms, as in MINPACK.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(float).eps


class NonFiniteResidualError(ValueError):
    pass


@dataclass
class FitResult:
    params: np.ndarray
    covariance_proxy: np.ndarray
    iterations: int
    converged: bool
    cost: float
    grad_norm: float
    cost_history: list = field(default_factory=list, repr=False)


def numeric_jacobian(model, x, p, lo=None, hi=None):
    """Finite-difference Jacobian of ``model(x, p)`` with respect to ``p``.

    Central differences, switching to a one-sided difference for any
    parameter whose central stencil would leave ``[lo, hi]``.
    """
    p = np.asarray(p, dtype=float)
    lo = np.full(p.size, -np.inf) if lo is None else lo
    hi = np.full(p.size, np.inf) if hi is None else hi
    f0 = np.asarray(model(x, p), dtype=float)
    J = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = _EPS ** (1 / 3) * max(1.0, abs(p[j]))
        dp = np.zeros_like(p)
        dp[j] = h
        if p[j] + h > hi[j]:
            J[:, j] = (f0 - np.asarray(model(x, p - dp))) / h
        elif p[j] - h < lo[j]:
            J[:, j] = (np.asarray(model(x, p + dp)) - f0) / h
        else:
            J[:, j] = (np.asarray(model(x, p + dp)) - np.asarray(model(x, p - dp))) / (2 * h)
    return J


def _dogleg(J, r, g, radius):
    """Dogleg step for the linearised problem ``min |r + J s|`` within ``|s| <= radius``."""
    s_gn = -np.linalg.lstsq(J, r, rcond=None)[0]
    n_gn = np.linalg.norm(s_gn)
    if n_gn <= radius:
        return s_gn
    Jg = J @ g
    gg = g @ g
    if gg == 0:
        return s_gn * (radius / n_gn)
    s_sd = -(gg / (Jg @ Jg)) * g
    n_sd = np.linalg.norm(s_sd)
    if n_sd >= radius:
        return s_sd * (radius / n_sd)
    # walk from the Cauchy point toward the Gauss-Newton point until |s| = radius
    d = s_gn - s_sd
    a, b, c = d @ d, 2 * s_sd @ d, s_sd @ s_sd - radius ** 2
    tau = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return s_sd + tau * d


def _grad_measure(J, r, g, free, floor):
    rn = np.linalg.norm(r)
    # a residual at rounding level is an exact fit; its direction is noise
    if rn <= floor:
        return 0.0
    cn = np.linalg.norm(J, axis=0)
    ok = free & (cn > 0)
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(g[ok]) / (cn[ok] * rn)))


def least_squares_fit(model, init, data, bounds=None, jac=None, gtol=1e-10,
                      max_iter=200):
    """Fit ``model`` to ``data = (x, y)``.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> yhat``.
    init : array_like
        Starting parameters; must lie inside ``bounds``.
    data : tuple of array_like
        ``(x, y)`` with ``len(y) >= len(init)``.
    bounds : tuple of array_like, optional
        ``(lo, hi)``; infinite entries allowed.
    jac : callable, optional
        ``jac(x, p) -> (m, n)`` derivative of the model.  Central differences
        are used otherwise.
    gtol : float
        Convergence threshold on the largest cosine between the residual and a
        free Jacobian column.  A point where the Gauss-Newton step predicts
        only a rounding-level cost reduction also counts as converged, since
        ill-conditioned fits with small residuals cannot reach ``gtol``.

    Returns
    -------
    FitResult
        ``converged`` is False when ``max_iter`` is exhausted or the trust
        region collapses before either test passes.
    """
    x, y = data
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    n = p.size
    if y.size < n:
        raise ValueError(f"need at least {n} data points, got {y.size}")
    if bounds is None:
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("initial parameters outside bounds")
    jacf = (lambda xx, pp: numeric_jacobian(model, xx, pp, lo, hi)) if jac is None else jac

    def resid(pp):
        return np.asarray(model(x, pp), dtype=float) - y

    r = resid(p)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidualError("non-finite residual at initial parameters")
    cost = 0.5 * r @ r
    floor = 64 * _EPS * (np.linalg.norm(y) + np.linalg.norm(r + y))
    history = [cost]
    D = None
    radius = None
    converged = False
    gm = np.inf
    J = None
    it = 0
    need_jac = True
    while it < max_iter:
        if need_jac:
            J = np.asarray(jacf(x, p), dtype=float).reshape(y.size, n)
            it += 1
            need_jac = False
        g = J.T @ r
        free = ~(((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0)))
        gm = _grad_measure(J, r, g, free, floor)
        if gm <= gtol:
            converged = True
            break
        cn = np.linalg.norm(J, axis=0)
        D = np.maximum(cn, 1e-12) if D is None else np.maximum(D, cn)
        if radius is None:
            radius = max(np.linalg.norm(D * p), 1.0)
        Js = (J / D) * free
        gs = Js.T @ r
        s = _dogleg(Js, r, gs, radius)
        p_new = p + s / D
        # reflect off the box, then clip whatever a reflection still leaves outside
        below, above = p_new < lo, p_new > hi
        p_new[below] = 2 * lo[below] - p_new[below]
        p_new[above] = 2 * hi[above] - p_new[above]
        p_new = np.clip(p_new, lo, hi)
        s_act = (p_new - p) * D
        step_norm = np.linalg.norm(s_act)
        lin = r + Js @ s_act
        pred = cost - 0.5 * lin @ lin
        r_new = resid(p_new)
        cost_new = 0.5 * r_new @ r_new if np.all(np.isfinite(r_new)) else np.inf
        rho = (cost - cost_new) / pred if pred > 0 else -1.0
        if pred <= 16 * _EPS * cost and step_norm > 0:
            # below rounding resolution the cost cannot confirm progress; take
            # the step only if it shrinks the gradient test (kept out of the
            # cost history, which records trust-region acceptances only)
            if np.linalg.norm(s) < radius * (1 - 1e-12) or radius == np.inf:
                pass
            else:
                # the radius, not the model, limited this step: retry it unclipped
                s = _dogleg(Js, r, gs, np.inf)
                p_new = np.clip(p + s / D, lo, hi)
                r_new = resid(p_new)
                cost_new = 0.5 * r_new @ r_new if np.all(np.isfinite(r_new)) else np.inf
            if not np.all(np.isfinite(r_new)):
                break
            J_new = np.asarray(jacf(x, p_new), dtype=float).reshape(y.size, n)
            it += 1
            g_new = J_new.T @ r_new
            free_new = ~(((p_new <= lo) & (g_new > 0)) | ((p_new >= hi) & (g_new < 0)))
            gm_new = _grad_measure(J_new, r_new, g_new, free_new, floor)
            # a rounding-level cost change is allowed, a real increase is not
            if gm_new >= gm or not cost_new <= cost * (1 + 64 * _EPS) + floor * floor:
                # stationary to working precision when even the full
                # Gauss-Newton step predicts only a rounding-level gain
                s_gn = _dogleg(Js, r, gs, np.inf)
                lin = r + Js @ s_gn
                converged = cost - 0.5 * lin @ lin <= 16 * _EPS * cost + floor * floor
                break
            p, r, cost, J = p_new, r_new, cost_new, J_new
            continue
        if rho > 1e-4 and cost_new < cost:
            p, r, cost = p_new, r_new, cost_new
            if cost < history[-1]:
                history.append(cost)
            need_jac = True
        if rho < 0.25:
            radius = 0.25 * max(step_norm, _EPS)
        elif rho > 0.75 and step_norm >= 0.99 * radius:
            radius *= 2.0
        if radius <= 1e-14 * max(np.linalg.norm(D * p), 1.0) or step_norm == 0:
            break
    if J is None or need_jac:
        J = np.asarray(jacf(x, p), dtype=float).reshape(y.size, n)
        g = J.T @ r
        free = ~(((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0)))
        gm = _grad_measure(J, r, g, free, floor)
        converged = converged or gm <= gtol
    dof = max(y.size - n, 1)
    s2 = 2 * cost / dof
    try:
        cov = np.linalg.pinv(J.T @ J)
        var = np.clip(np.diag(cov), 0, None) * s2
    except np.linalg.LinAlgError:
        var = np.full(n, np.inf)
    return FitResult(params=p, covariance_proxy=var, iterations=it,
                     converged=bool(converged), cost=float(cost),
                     grad_norm=float(gm), cost_history=history)

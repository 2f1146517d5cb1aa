"""Small deterministic optimization kernels.

* :func:`qp_project` - Euclidean projection onto ``{x : A x <= b}``
  (Goldfarb-Idnani dual active set with identity Hessian).
* :func:`max_volume_ellipsoid` - largest inscribed ellipsoid of a polytope
  (log-barrier Newton method over the symmetric shape matrix and center).
* :func:`closest_point_in_metric` - Wolfe's minimum-norm-point algorithm in the
  coordinates of an ellipsoid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import DegeneratePolytope, Infeasible


@dataclass(frozen=True)
class Ellipsoid:
    """``{C u + center : ||u|| <= 1}`` with ``C`` symmetric positive definite."""

    C: np.ndarray
    center: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.C))

    @property
    def log_det(self) -> float:
        return float(np.linalg.slogdet(self.C)[1])

    @property
    def volume(self) -> float:
        d = self.dim
        unit = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        return unit * self.det

    @property
    def semi_axes(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.C))

    def metric_distance(self, x) -> float:
        return float(np.linalg.norm(np.linalg.solve(self.C, np.asarray(x, float) - self.center)))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.metric_distance(x) <= 1.0 + tol

    def inside_halfspaces(self, A, b, tol: float = 1e-7) -> bool:
        """Support check: ``||C a|| + a . center <= b + tol`` for every row."""
        A = np.atleast_2d(A)
        support = np.linalg.norm(A @ self.C, axis=1) + A @ self.center
        return bool(np.all(support <= np.asarray(b) + tol))

    @classmethod
    def ball(cls, center, radius: float) -> "Ellipsoid":
        c = np.asarray(center, dtype=float)
        return cls(radius * np.eye(len(c)), c)


# ----------------------------------------------------------------------------
# projection QP


def _unit_rows(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n = np.linalg.norm(A, axis=1)
    return A / n[:, None], b / n


def qp_project(target, A, b, tol: float = 1e-12) -> np.ndarray:
    """Projection of ``target`` onto ``{x : A x <= b}``.

    Dual active-set method: starts from the unconstrained minimizer and adds
    the most violated constraint until primal feasibility, dropping constraints
    whose multiplier would turn negative.
    """
    t = np.asarray(target, dtype=float)
    An, bn = _unit_rows(A, b)
    m = len(bn)
    x = t.copy()
    act: list[int] = []
    u = np.zeros(0)
    for _ in range(50 * (m + 5)):
        viol = An @ x - bn
        if act:
            viol[act] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= tol:
            break
        up = 0.0
        while True:
            n = An[p]
            if act:
                N = An[act]
                r = np.linalg.lstsq(N @ N.T, N @ n, rcond=None)[0]
                z = n - N.T @ r
            else:
                r = np.zeros(0)
                z = n
            pos = r > 1e-14
            if pos.any():
                ratios = np.full(len(r), np.inf)
                ratios[pos] = u[pos] / r[pos]
                k = int(np.argmin(ratios))
                s1 = ratios[k]
            else:
                k, s1 = -1, np.inf
            nz = float(n @ z)
            s2 = (float(n @ x) - bn[p]) / nz if nz > 1e-14 else np.inf
            if not np.isfinite(s1) and not np.isfinite(s2):
                raise Infeasible("constraints are inconsistent")
            s = min(s1, s2)
            if np.isfinite(s2):
                x = x - s * z
            u = u - s * r
            up += s
            if s2 <= s1:
                act.append(p)
                u = np.append(u, up)
                break
            del act[k]
            u = np.delete(u, k)
    else:
        raise Infeasible("active-set iteration limit reached")
    return _polish(t, An, bn, act, x)


def _polish(t, An, bn, act, x):
    """Re-solve the final active set exactly; keep it if it stays feasible."""
    if not act:
        return x
    N = An[act]
    lam = np.linalg.lstsq(N @ N.T, N @ t - bn[act], rcond=None)[0]
    y = t - N.T @ lam
    if np.all(lam >= -1e-12) and np.all(An @ y - bn <= 1e-12):
        return y
    return x


def kkt_residual(target, A, b, x) -> float:
    """Max of stationarity, primal feasibility and complementarity residuals."""
    t = np.asarray(target, float)
    An, bn = _unit_rows(A, b)
    s = An @ x - bn
    act = np.flatnonzero(s >= -1e-9)
    if len(act):
        lam = nnls(An[act].T, t - x)[0]
        stat = np.linalg.norm(x - t + An[act].T @ lam)
        comp = np.max(np.abs(lam * s[act]))
    else:
        stat = np.linalg.norm(x - t)
        comp = 0.0
    return float(max(stat, max(s.max(), 0.0), comp))


# ----------------------------------------------------------------------------
# maximum-volume inscribed ellipsoid


def _sym_basis(d: int) -> np.ndarray:
    E = []
    for i in range(d):
        for j in range(i, d):
            M = np.zeros((d, d))
            M[i, j] = M[j, i] = 1.0
            E.append(M)
    return np.asarray(E)


def max_volume_ellipsoid(p, gap_tol: float = 1e-10, max_newton: int = 500) -> Ellipsoid:
    """Maximum-volume ellipsoid inside polytope ``p``."""
    if p.volume <= 1e-12:
        raise DegeneratePolytope("polytope has no volume")
    return inscribed_ellipsoid(p.A, p.b, p.vertices.mean(axis=0), gap_tol, max_newton)


def inscribed_ellipsoid(
    A, b, interior, gap_tol: float = 1e-10, max_newton: int = 500
) -> Ellipsoid:
    """Maximum-volume ellipsoid inside ``{x : A x <= b}``.

    Solves ``max log det C  s.t. ||C a_i|| + a_i . c <= b_i`` with a
    log-barrier path-following method started from the strictly interior
    point ``interior``.
    """
    An, bn = _unit_rows(A, b)
    m, d = An.shape
    c = np.asarray(interior, dtype=float).copy()
    slack0 = bn - An @ c
    if slack0.min() <= 1e-9:
        raise DegeneratePolytope("no strictly interior point; polytope has no volume")
    E = _sym_basis(d)
    K = len(E)
    # M[i] maps shape parameters to C a_i
    M = np.einsum("kab,ib->iak", E, An)
    theta = np.zeros(K)
    r0 = 0.5 * slack0.min()
    for k, Ek in enumerate(E):
        if np.count_nonzero(Ek) == 1:
            theta[k] = r0

    def unpack(th):
        return np.einsum("k,kab->ab", th, E)

    def slacks(th, cc):
        Y = M @ th
        return bn - An @ cc - np.linalg.norm(Y, axis=1), Y

    def objective(th, cc, kappa):
        s, _ = slacks(th, cc)
        if np.any(s <= 0):
            return np.inf
        sign, ld = np.linalg.slogdet(unpack(th))
        if sign <= 0:
            return np.inf
        return -ld - kappa * np.log(s).sum()

    # barrier weight kappa = 1/t; duality gap of a centered point is m * kappa
    kappa = 1.0 / m
    newton = 0
    while True:
        for _ in range(60):
            C = unpack(theta)
            Ci = np.linalg.inv(C)
            s, Y = slacks(theta, c)
            rho = np.linalg.norm(Y, axis=1)
            CE = np.einsum("ab,kbc->kac", Ci, E)
            g_ld = np.einsum("kaa->k", CE)
            H_ld = np.einsum("kab,lba->kl", CE, CE)
            Yh = Y / rho[:, None]
            gs_th = -np.einsum("iak,ia->ik", M, Yh)  # d s_i / d theta
            Gs = np.hstack([gs_th, -An]) / s[:, None]
            grad = -kappa * Gs.sum(axis=0)
            grad[:K] -= g_ld
            H = kappa * (Gs.T @ Gs)
            P = (np.eye(d)[None] - Yh[:, :, None] * Yh[:, None, :]) / (rho * s)[:, None, None]
            H[:K, :K] += H_ld + kappa * np.einsum("iak,iab,ibl->kl", M, P, M)
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            if dec <= 1e-13:
                break
            f0 = objective(theta, c, kappa)
            a = 1.0
            while a > 1e-10:
                f1 = objective(theta + a * step[:K], c + a * step[K:], kappa)
                if f1 <= f0 - 0.25 * a * dec + 1e-15 * abs(f0):
                    break
                a *= 0.5
            else:
                break
            theta = theta + a * step[:K]
            c = c + a * step[K:]
            newton += 1
            if newton >= max_newton:
                break
        if m * kappa <= gap_tol or newton >= max_newton:
            break
        kappa /= 50.0
    C = unpack(theta)
    return Ellipsoid(0.5 * (C + C.T), c)


# ----------------------------------------------------------------------------
# closest point of a hull in an ellipsoidal metric


def min_norm_point(Y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Convex weights ``w`` minimizing ``||w @ Y||`` (Wolfe's algorithm)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = len(Y)
    sq = np.einsum("ij,ij->i", Y, Y)
    scale = max(1.0, float(sq.max()))
    j0 = int(np.argmin(sq))
    S = [j0]
    w = np.array([1.0])
    x = Y[j0].copy()
    for _ in range(10 * n + 50):
        g = Y @ x
        j = int(np.argmin(g))
        if x @ x - g[j] <= tol * scale or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            YS = Y[S]
            k = len(S)
            Kmat = np.zeros((k + 1, k + 1))
            Kmat[:k, :k] = YS @ YS.T
            Kmat[:k, k] = 1.0
            Kmat[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(Kmat, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-14):
                w = alpha
                break
            neg = (alpha <= 1e-14) & (w - alpha > 0)
            theta = np.min(w[neg] / (w[neg] - alpha[neg])) if neg.any() else 0.0
            w = theta * alpha + (1 - theta) * w
            w[w < 1e-14] = 0.0
            keep = w > 0
            if not keep.any():
                # every weight underflowed; restart from the best affine coefficient
                keep[int(np.argmax(alpha))] = True
                w = keep.astype(float)
            elif keep.all():
                # numerical stall; drop the smallest weight
                keep[int(np.argmin(w))] = False
            S = [s for s, kk in zip(S, keep) if kk]
            w = w[keep]
            w = w / w.sum()
        x = w @ Y[S]
    out = np.zeros(n)
    out[S] = w
    return out / out.sum()


def closest_point_in_metric(points, metric: Ellipsoid) -> np.ndarray:
    """Point of ``conv(points)`` minimizing ``||C^-1 (x - center)||``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if len(P) == 1:
        return P[0].copy()
    Y = np.linalg.solve(metric.C, (P - metric.center).T).T
    w = min_norm_point(Y)
    return w @ P

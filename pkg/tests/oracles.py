"""Independent reference computations used by the tests.

Nothing here reuses the package's objective, surrogate or solver code; the
quantities are rebuilt from their definitions with dense linear algebra,
finite differences or brute force.
"""

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve
from scipy.spatial.transform import Rotation

from mmpgo.graph import Poses


def rho(kernel, s):
    """Kernel value from the textbook formulas."""
    name = type(kernel).__name__
    if name == "Trivial":
        return s
    a = kernel.a
    if name == "Huber":
        return s if s <= a else 2.0 * np.sqrt(a * s) - a
    return a - a * np.exp(-s / a)


def drho(kernel, s):
    name = type(kernel).__name__
    if name == "Trivial":
        return 1.0
    a = kernel.a
    if name == "Huber":
        return 1.0 if s <= a else np.sqrt(a / s)
    return np.exp(-s / a)


def vec(X):
    """Flatten a pose stack in the ``[t_1 R_1 ... t_n R_n]`` layout (row major)."""
    return X.matrix().ravel()


def unvec(v, n, d):
    return Poses.from_matrix(v.reshape(d, n * (d + 1)), d)


def loop_objective(dgraph, kernel, X):
    """Objective evaluated edge by edge in plain Python."""
    e = dgraph.edges
    total = 0.0
    for k in range(len(e)):
        i, j = e.i[k], e.j[k]
        s = e.kappa[k] * np.sum((X.R[i] @ e.R[k] - X.R[j]) ** 2) + e.tau[k] * np.sum(
            (X.R[i] @ e.t[k] + X.t[i] - X.t[j]) ** 2
        )
        total += 0.5 * (rho(kernel, s) if dgraph.inter[k] else s)
    return total


def finite_difference_gradient(f, X, h=1e-6):
    n, d = X.n, X.d
    x = vec(X)
    g = np.zeros_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(unvec(xp, n, d)) - f(unvec(xm, n, d))) / (2 * h)
    return unvec(g, n, d)


def edge_M(e, k, n):
    """Dense ``M`` of edge ``k`` over all ``n`` poses: ``||X||^2_M = s_k(X)``."""
    d = e.d
    b = d + 1
    i, j = int(e.i[k]), int(e.j[k])
    A = np.zeros((b * n, d))
    A[b * i + 1 : b * i + b] = e.R[k]
    A[b * j + 1 : b * j + b] -= np.eye(d)
    v = np.zeros(b * n)
    v[b * i] = 1.0
    v[b * i + 1 : b * i + b] = e.t[k]
    v[b * j] -= 1.0
    return e.kappa[k] * A @ A.T + e.tau[k] * np.outer(v, v)


def edge_Omega(e, k, n):
    """Dense block-diagonal ``Omega`` from its defining quadratic identity.

    ``1/2 ||X||^2_Omega = kappa ||R_i||^2 + tau ||R_i t~ + t_i||^2 + kappa ||R_j||^2 + tau ||t_j||^2``
    recovered column by column through polarization.
    """
    d = e.d
    b = d + 1
    i, j = int(e.i[k]), int(e.j[k])

    def q(Xmat):
        X = Poses.from_matrix(Xmat, d)
        return 2.0 * (
            e.kappa[k] * np.sum(X.R[i] ** 2)
            + e.tau[k] * np.sum((X.R[i] @ e.t[k] + X.t[i]) ** 2)
            + e.kappa[k] * np.sum(X.R[j] ** 2)
            + e.tau[k] * np.sum(X.t[j] ** 2)
        )

    # tr(X W X^T) with X = single row u^T gives u^T W u; only the coordinates
    # of poses i and j enter q, so W vanishes elsewhere
    size = b * n
    idx = list(range(b * i, b * i + b)) + list(range(b * j, b * j + b))
    W = np.zeros((size, size))

    def q_row(u):
        X = np.zeros((d, size))
        X[0] = u
        return q(X)

    basis = np.eye(size)
    for r in idx:
        for c in idx:
            if c < r:
                continue
            if r == c:
                W[r, r] = q_row(basis[r])
            else:
                W[r, c] = W[c, r] = 0.5 * (q_row(basis[r] + basis[c]) - q_row(basis[r]) - q_row(basis[c]))
    return W


def dense_blocks(dgraph, kernel, anchor, xi, zeta):
    """Dense ``M^(k)`` (weighted), ``Gamma`` and ``Pi`` over all poses.

    ``M`` holds intra edges with weight 1 and inter edges with ``omega``;
    ``Gamma`` keeps intra ``M`` and uses ``omega * Omega`` for inter edges, and
    ``Pi`` uses ``Omega`` everywhere (block-diagonal by pose).
    """
    e = dgraph.edges
    n, d = dgraph.n, dgraph.d
    b = d + 1
    size = b * n
    M = np.zeros((size, size))
    Gam = xi * np.eye(size)
    Pi = zeta * np.eye(size)
    for k in range(len(e)):
        i, j = e.i[k], e.j[k]
        s = e.kappa[k] * np.sum((anchor.R[i] @ e.R[k] - anchor.R[j]) ** 2) + e.tau[k] * np.sum(
            (anchor.R[i] @ e.t[k] + anchor.t[i] - anchor.t[j]) ** 2
        )
        w = drho(kernel, s) if dgraph.inter[k] else 1.0
        Mk = edge_M(e, k, n)
        Ok = edge_Omega(e, k, n)
        M += w * Mk
        Gam += w * (Ok if dgraph.inter[k] else Mk)
        Pi += w * Ok
    return M, Gam, Pi


def tangent_basis(R):
    """Orthonormal basis of the tangent space of SO(d) at ``R`` (embedded metric)."""
    d = R.shape[0]
    if d == 2:
        gens = [np.array([[0.0, -1.0], [1.0, 0.0]])]
    else:
        gens = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            G = np.zeros((3, 3))
            G[a, b], G[b, a] = -1.0, 1.0
            gens.append(G)
    return [R @ G / np.linalg.norm(G) for G in gens]


def riemannian_norm_oracle(f, X, h=1e-6):
    """Gradient norm from directional derivatives along retracted geodesics."""
    n, d = X.n, X.d
    comps = []
    for i in range(n):
        for a in range(d):
            Xp, Xm = X.copy(), X.copy()
            Xp.t[i, a] += h
            Xm.t[i, a] -= h
            comps.append((f(Xp) - f(Xm)) / (2 * h))
        for V in tangent_basis(X.R[i]):
            W = X.R[i].T @ V  # skew
            Xp, Xm = X.copy(), X.copy()
            Xp.R[i] = X.R[i] @ _expm_skew(h * W)
            Xm.R[i] = X.R[i] @ _expm_skew(-h * W)
            comps.append((f(Xp) - f(Xm)) / (2 * h))
    return float(np.linalg.norm(comps))


def _expm_skew(W):
    d = W.shape[0]
    if d == 2:
        th = W[1, 0]
        return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    w = np.array([W[2, 1], W[0, 2], W[1, 0]])
    return Rotation.from_rotvec(w).as_matrix()


def H_pose_value(Pi, C, g, t, R):
    X = np.column_stack([t, R])
    D = X - C
    return 0.5 * np.trace(D @ Pi @ D.T) + np.sum(g * D)


def best_translation(Pi, C, g, R):
    """Exact minimizing translation for fixed ``R``."""
    p, q = Pi[0, 0], Pi[1:, 0]
    B = C @ Pi - g
    return (B[:, 0] - R @ q) / p


def H_values_batch(Pi, C, g, R):
    """``H`` at the exact best translation for a stack of rotations ``R``."""
    p, q = Pi[0, 0], Pi[1:, 0]
    B = C @ Pi - g
    t = (B[:, 0][None, :] - R @ q) / p
    X = np.concatenate([t[:, :, None], R], axis=2)
    D = X - C
    return 0.5 * np.einsum("kab,bc,kac->k", D, Pi, D) + np.einsum("ab,kab->k", g, D)


def brute_force_H(Pi, C, g, rng, n_samples=10000, grid=3600):
    """Minimum of one per-pose ``H`` by sampling rotations (translation exact).

    d=2 scans ``grid`` angles and refines the best one; d=3 draws ``n_samples``
    random rotations and polishes the best few with a local optimizer over
    rotation vectors.
    """
    d = C.shape[0]

    def val(R):
        return H_values_batch(Pi, C, g, R[None])[0]

    if d == 2:
        th = np.linspace(-np.pi, np.pi, grid, endpoint=False)
        c, s = np.cos(th), np.sin(th)
        Rs = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], 1)
        vals = H_values_batch(Pi, C, g, Rs)
        k = int(np.argmin(vals))
        res = minimize(
            lambda x: val(np.array([[np.cos(x[0]), -np.sin(x[0])], [np.sin(x[0]), np.cos(x[0])]])),
            [th[k]],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-15},
        )
        return min(vals[k], res.fun)
    Rs = Rotation.random(n_samples, random_state=rng).as_matrix()
    vals = H_values_batch(Pi, C, g, Rs)
    best = np.inf
    for k in np.argsort(vals)[:5]:
        R0 = Rs[k]
        res = minimize(
            lambda w: val(R0 @ Rotation.from_rotvec(w).as_matrix()),
            np.zeros(3),
            method="BFGS",
            options={"gtol": 1e-12},
        )
        best = min(best, res.fun, vals[k])
    return best


def _generators(d):
    if d == 2:
        return [np.array([[0.0, -1.0], [1.0, 0.0]])]
    out = []
    for a, b in ((1, 2), (2, 0), (0, 1)):
        G = np.zeros((3, 3))
        G[a, b], G[b, a] = -1.0, 1.0
        out.append(G)
    return out


def reference_optimum(dgraph, X0, iters=200, tol=1e-12):
    """Centralized Levenberg-Marquardt on the trivial-kernel objective.

    Poses are updated by ``t + dt`` and ``R Exp(w)``; pose 0 is held fixed to
    remove the gauge freedom. Returns ``(X, F)``.
    """
    e = dgraph.edges
    n, d = dgraph.n, dgraph.d
    gens = _generators(d)
    p = len(gens)
    dof = d + p
    m = len(e)
    X = X0.copy()

    def resid(X):
        rR = (X.R[e.i] @ e.R - X.R[e.j]) * np.sqrt(e.kappa)[:, None, None]
        rt = (np.einsum("mab,mb->ma", X.R[e.i], e.t) + X.t[e.i] - X.t[e.j]) * np.sqrt(e.tau)[:, None]
        return np.concatenate([rR.reshape(m, -1), rt], axis=1)

    def jac(X):
        rows, cols, vals = [], [], []
        nr = d * d + d
        sk, st = np.sqrt(e.kappa), np.sqrt(e.tau)
        base = np.arange(m) * nr
        for a in range(d):
            # translation columns
            rows += [base + d * d + a, base + d * d + a]
            cols += [e.i * dof + a, e.j * dof + a]
            vals += [st, -st]
        for g_idx, G in enumerate(gens):
            dRi = X.R[e.i] @ G  # derivative of R_i Exp(w) along generator
            dR_meas = (dRi @ e.R) * sk[:, None, None]
            dt_meas = np.einsum("mab,mb->ma", dRi, e.t) * st[:, None]
            dRj = -(X.R[e.j] @ G) * sk[:, None, None]
            for r in range(d * d):
                rows += [base + r, base + r]
                cols += [e.i * dof + d + g_idx, e.j * dof + d + g_idx]
                vals += [dR_meas.reshape(m, -1)[:, r], dRj.reshape(m, -1)[:, r]]
            for a in range(d):
                rows.append(base + d * d + a)
                cols.append(e.i * dof + d + g_idx)
                vals.append(dt_meas[:, a])
        J = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * nr, n * dof))
        return J.tocsc()[:, dof:]

    def retract(X, dx):
        full = np.concatenate([np.zeros(dof), dx]).reshape(n, dof)
        Y = X.copy()
        Y.t = X.t + full[:, :d]
        W = sum(full[:, d + k][:, None, None] * gens[k] for k in range(p))
        Y.R = X.R @ np.stack([_expm_skew(Wi) for Wi in W])
        return Y

    r = resid(X).ravel()
    F = 0.5 * r @ r
    lam = 1e-6
    for _ in range(iters):
        J = jac(X)
        JtJ = (J.T @ J).tocsc()
        g = J.T @ r
        diag = JtJ.diagonal()
        while True:
            A = JtJ + lam * coo_matrix((diag + 1e-12, (np.arange(diag.size), np.arange(diag.size)))).tocsc()
            dx = -spsolve(A, g)
            Y = retract(X, dx)
            rY = resid(Y).ravel()
            FY = 0.5 * rY @ rY
            if FY <= F:
                break
            lam *= 10.0
            if lam > 1e12:
                return X, F
        done = F - FY <= tol * max(1.0, F)
        X, r, F = Y, rY, FY
        lam = max(lam / 10.0, 1e-12)
        if done:
            break
    return X, F

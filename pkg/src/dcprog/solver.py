"""Primal-dual interior-point solver for cone programs over zero, nonnegative
and second-order cones.

The method runs Mehrotra predictor-corrector steps on the homogeneous
self-dual embedding with Nesterov-Todd scaling. Linear systems are the
regularized quasi-definite KKT system, factorized by sparse LU with a fixed
COLAMD ordering and polished by iterative refinement.
"""

from __future__ import annotations

import enum
import logging
import sys
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cone import NONNEG, SOC, ZERO, ConeProgram
from .errors import ShapeError

log = logging.getLogger(__name__)


class ConeStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float

    def max(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass
class ConeSolution:
    status: ConeStatus
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    objective: float
    residuals: Residuals
    iterations: int
    certificate_residual: float = float("nan")


def kkt_residuals(cp: ConeProgram, primal, dual) -> Residuals:
    """Scaled primal, dual and gap residuals of a claimed solution.

    ``primal`` is the pair ``(x, s)``; ``dual`` is ``y``.
    """
    x, s = primal
    x, s, y = (np.asarray(v, dtype=float).ravel() for v in (x, s, dual))
    m, n = cp.A.shape
    if x.size != n or s.size != m or y.size != m:
        raise ShapeError("solution dimensions do not match the cone program")
    pres = np.linalg.norm(cp.A @ x + s - cp.b) / (1.0 + np.linalg.norm(cp.b))
    dres = np.linalg.norm(cp.A.T @ y + cp.c) / (1.0 + np.linalg.norm(cp.c))
    pobj, dobj = cp.c @ x, -cp.b @ y
    # relative to the primal objective, so gap <= tol gives weak duality to tol
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return Residuals(float(pres), float(dres), float(gap))


class _Cones:
    """Nonnegative orthant of size ``l`` followed by groups of equal-size SOCs."""

    def __init__(self, l: int, soc_dims: list[int]):
        self.l = l
        self.groups: list[tuple[int, int, int]] = []  # (start, count, dim)
        start = l
        for d in soc_dims:
            if self.groups and self.groups[-1][2] == d and self.groups[-1][0] + self.groups[-1][1] * d == start:
                g0, cnt, _ = self.groups[-1]
                self.groups[-1] = (g0, cnt + 1, d)
            else:
                self.groups.append((start, 1, d))
            start += d
        self.m = start
        self.degree = l + len(soc_dims)

    def blocks(self, u):
        for start, cnt, d in self.groups:
            yield u[start:start + cnt * d].reshape(cnt, d)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for start, cnt, d in self.groups:
            e[start:start + cnt * d:d] = 1.0
        return e

    def shift_into(self, u: np.ndarray) -> np.ndarray:
        alpha = -np.inf
        if self.l:
            alpha = max(alpha, -u[: self.l].min())
        for b in self.blocks(u):
            alpha = max(alpha, np.max(np.linalg.norm(b[:, 1:], axis=1) - b[:, 0]))
        if alpha < 0:
            return u.copy()
        return u + (1.0 + alpha) * self.identity()

    def product(self, u, v):
        out = np.empty_like(u)
        out[: self.l] = u[: self.l] * v[: self.l]
        for (start, cnt, d), bu, bv in zip(self.groups, self.blocks(u), self.blocks(v)):
            o = out[start:start + cnt * d].reshape(cnt, d)
            o[:, 0] = np.einsum("ij,ij->i", bu, bv)
            o[:, 1:] = bu[:, :1] * bv[:, 1:] + bv[:, :1] * bu[:, 1:]
        return out

    def divide(self, lam, v):
        """Solve lam o u = v for u."""
        out = np.empty_like(v)
        out[: self.l] = v[: self.l] / lam[: self.l]
        for (start, cnt, d), bl, bv in zip(self.groups, self.blocks(lam), self.blocks(v)):
            o = out[start:start + cnt * d].reshape(cnt, d)
            l0, l1 = bl[:, 0], bl[:, 1:]
            rho = l0 ** 2 - np.einsum("ij,ij->i", l1, l1)
            u0 = (l0 * bv[:, 0] - np.einsum("ij,ij->i", l1, bv[:, 1:])) / rho
            o[:, 0] = u0
            o[:, 1:] = (bv[:, 1:] - u0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, u, du) -> float:
        """Largest alpha with u + alpha*du in the cone (inf if unbounded)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if neg.any():
                alpha = min(alpha, np.min(-u[: self.l][neg] / du[: self.l][neg]))
        for bu, bd in zip(self.blocks(u), self.blocks(du)):
            u0, u1 = bu[:, 0], bu[:, 1:]
            d0, d1 = bd[:, 0], bd[:, 1:]
            a = d0 ** 2 - np.einsum("ij,ij->i", d1, d1)
            b = 2.0 * (u0 * d0 - np.einsum("ij,ij->i", u1, d1))
            c = np.maximum(u0 ** 2 - np.einsum("ij,ij->i", u1, u1), 0.0)
            disc = b ** 2 - 4 * a * c
            with np.errstate(divide="ignore", invalid="ignore"):
                sq = np.sqrt(np.maximum(disc, 0.0))
                q = -0.5 * (b + np.where(b >= 0, sq, -sq))
                r1 = np.where(a != 0, q / a, np.inf)
                r2 = np.where(q != 0, c / q, np.inf)
            roots = np.stack([r1, r2])
            roots = np.where((roots > 0) & (disc >= 0)[None, :], roots, np.inf)
            # a linear quadratic (a == 0) has the single root -c/b
            lin = (a == 0) & (b < 0)
            roots[0] = np.where(lin, -c / np.where(lin, b, 1.0), roots[0])
            step = roots.min(axis=0)
            # the head must stay nonnegative as well
            with np.errstate(divide="ignore", invalid="ignore"):
                head = np.where(d0 < 0, -u0 / d0, np.inf)
            step = np.minimum(step, head)
            if step.size:
                alpha = min(alpha, float(step.min()))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda (W symmetric)."""

    def __init__(self, cones: _Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        l = cones.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.soc = []
        for bs, bz in zip(cones.blocks(s), cones.blocks(z)):
            ns = np.linalg.norm(bs[:, 1:], axis=1)
            nz = np.linalg.norm(bz[:, 1:], axis=1)
            sres = (bs[:, 0] - ns) * (bs[:, 0] + ns)
            zres = (bz[:, 0] - nz) * (bz[:, 0] + nz)
            sres = np.maximum(sres, 1e-300)
            zres = np.maximum(zres, 1e-300)
            sb = bs / np.sqrt(sres)[:, None]
            zb = bz / np.sqrt(zres)[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", sb, zb)) / 2.0, 1e-300))
            w = np.empty_like(sb)
            w[:, 0] = (sb[:, 0] + zb[:, 0]) / (2 * gamma)
            w[:, 1:] = (sb[:, 1:] - zb[:, 1:]) / (2 * gamma)[:, None]
            eta = (sres / zres) ** 0.25
            self.soc.append((eta, w))
        self.lam = self.apply(z)

    def apply(self, v, inverse=False):
        out = np.empty_like(v)
        l = self.cones.l
        out[:l] = v[:l] / self.d if inverse else v[:l] * self.d
        for (start, cnt, dim), (eta, w), bv in zip(self.cones.groups, self.soc, self.cones.blocks(v)):
            o = out[start:start + cnt * dim].reshape(cnt, dim)
            w0, w1 = w[:, 0], w[:, 1:]
            v0, v1 = bv[:, 0], bv[:, 1:]
            wv = np.einsum("ij,ij->i", w1, v1)
            sgn = -1.0 if inverse else 1.0
            scale = 1.0 / eta if inverse else eta
            o[:, 0] = scale * (w0 * v0 + sgn * wv)
            o[:, 1:] = scale[:, None] * (
                sgn * v0[:, None] * w1 + v1 + (wv / (1.0 + w0))[:, None] * w1
            )
        return out

    def squared_coo(self):
        """COO triplets of W^2 (block diagonal) in cone-local coordinates."""
        l = self.cones.l
        rows = [np.arange(l)]
        cols = [np.arange(l)]
        vals = [self.d ** 2]
        for (start, cnt, dim), (eta, w) in zip(self.cones.groups, self.soc):
            blk = 2.0 * w[:, :, None] * w[:, None, :]
            blk[:, 0, 0] -= 1.0
            idx = np.arange(1, dim)
            blk[:, idx, idx] += 1.0
            blk *= (eta ** 2)[:, None, None]
            base = start + dim * np.arange(cnt)
            r = base[:, None, None] + np.arange(dim)[None, :, None] + np.zeros((1, 1, dim), dtype=int)
            c = base[:, None, None] + np.arange(dim)[None, None, :] + np.zeros((1, dim, 1), dtype=int)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(blk.ravel())
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _segment_max(values, indptr, count):
    out = np.zeros(count)
    nonempty = np.diff(indptr) > 0
    if values.size:
        out[nonempty] = np.maximum.reduceat(values, indptr[:-1][nonempty])
    return out


def _equilibrate(A: sp.csc_matrix, cones: list, iters: int = 15):
    """Ruiz scaling D A E; SOC rows share one factor per cone."""
    m, n = A.shape
    d = np.ones(m)
    e = np.ones(n)
    if m == 0 or n == 0 or A.nnz == 0:
        return d, e
    groups = np.arange(m)
    start = 0
    for k in cones:
        if k.kind == SOC:
            groups[start:start + k.dim] = start
        start += k.dim
    R = abs(A).tocsr()
    C = R.tocsc()
    r_cols, c_rows = R.indices, C.indices
    r_rows = np.repeat(np.arange(m), np.diff(R.indptr))
    c_cols = np.repeat(np.arange(n), np.diff(C.indptr))
    for _ in range(iters):
        rmax = _segment_max(R.data * d[r_rows] * e[r_cols], R.indptr, m)
        cmax = _segment_max(C.data * d[c_rows] * e[c_cols], C.indptr, n)
        rg = np.zeros(m)
        np.maximum.at(rg, groups, rmax)
        rmax = rg[groups]
        rmax[rmax == 0] = 1.0
        cmax[cmax == 0] = 1.0
        d = np.clip(d / np.sqrt(rmax), 1e-4, 1e4)
        e = np.clip(e / np.sqrt(cmax), 1e-4, 1e4)
    return d, e


def solve_cone(cp: ConeProgram, tol: float = 1e-8, max_iter: int = 100,
               verbose: bool = False) -> ConeSolution:
    """Solve ``minimize c'x s.t. b - A x = s in K``; see :class:`ConeSolution`."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, n = cp.A.shape

    # row partition: zero-cone rows become equalities, the rest are reordered to
    # nonnegatives first and then SOCs grouped by dimension
    eq_rows, nn_rows, soc_blocks = [], [], []
    start = 0
    for k in cp.cones:
        rows = np.arange(start, start + k.dim)
        if k.kind == ZERO:
            eq_rows.append(rows)
        elif k.kind == NONNEG:
            nn_rows.append(rows)
        elif k.kind == SOC:
            soc_blocks.append(rows)
        else:
            raise ValueError(f"unsupported cone {k.kind!r}")
        start += k.dim
    soc_blocks.sort(key=len)
    eq_idx = np.concatenate(eq_rows) if eq_rows else np.zeros(0, dtype=int)
    in_idx = np.concatenate(nn_rows + soc_blocks) if (nn_rows or soc_blocks) else np.zeros(0, dtype=int)
    cones = _Cones(sum(len(r) for r in nn_rows), [len(r) for r in soc_blocks])

    drow, ecol = _equilibrate(cp.A, cp.cones)
    As = (sp.diags(drow) @ cp.A @ sp.diags(ecol)).tocsr()
    bs = drow * cp.b
    cs = ecol * cp.c
    Aeq, beq = As[eq_idx].tocsc(), bs[eq_idx]
    G, h = As[in_idx].tocsc(), bs[in_idx]
    p, mi = len(eq_idx), len(in_idx)

    def unscale(x, s, yeq, z):
        xo = ecol * x
        so = np.zeros(m)
        yo = np.zeros(m)
        so[in_idx] = s / drow[in_idx]
        yo[eq_idx] = yeq * drow[eq_idx]
        yo[in_idx] = z * drow[in_idx]
        return xo, so, yo

    # static KKT pattern [[reg, Aeq', G'], [Aeq, -reg, 0], [G, 0, -W^2 - reg]]
    N = n + p + mi
    reg = 1e-10
    Ec = Aeq.tocoo()
    Gc = G.tocoo()
    st_r = np.concatenate([Ec.row + n, Gc.row + n + p, Ec.col, Gc.col])
    st_c = np.concatenate([Ec.col, Gc.col, Ec.row + n, Gc.row + n + p])
    st_v = np.concatenate([Ec.data, Gc.data, Ec.data, Gc.data])
    diag_sign = np.concatenate([np.ones(n), -np.ones(p + mi)])

    class KKT:
        def __init__(self, w2):
            rr, cc, vv = w2
            rows = np.concatenate([st_r, rr + n + p, np.arange(N)])
            cols = np.concatenate([st_c, cc + n + p, np.arange(N)])
            exact = sp.csc_matrix(
                (np.concatenate([st_v, -vv, np.zeros(N)]), (rows, cols)), shape=(N, N)
            )
            self.exact = exact
            delta = reg
            while True:
                mat = (exact + sp.diags(delta * diag_sign)).tocsc()
                try:
                    self.lu = spla.splu(mat, permc_spec="COLAMD")
                    break
                except RuntimeError:
                    delta *= 100.0
                    if delta > 1e-2:
                        raise

        def solve(self, rhs):
            sol = self.lu.solve(rhs)
            for _ in range(5):
                res = rhs - self.exact @ sol
                if np.linalg.norm(res, np.inf) <= 1e-14 * (1 + np.linalg.norm(rhs, np.inf)):
                    break
                sol = sol + self.lu.solve(res)
            return sol

    def split(v):
        return v[:n], v[n:n + p], v[n + p:]

    # initial point
    ident = (np.arange(mi), np.arange(mi), np.ones(mi))
    kkt0 = KKT(ident)
    x, yeq, zz = split(kkt0.solve(np.concatenate([np.zeros(n), beq, h])))
    s = cones.shift_into(-zz)
    x1, y1, z1 = split(kkt0.solve(np.concatenate([-cs, np.zeros(p), np.zeros(mi)])))
    x = x.copy()
    yeq = y1.copy()
    z = cones.shift_into(z1)
    tau, kappa = 1.0, 1.0
    e = cones.identity()
    D = cones.degree

    best = None
    status = ConeStatus.MAX_ITER
    cert_res = float("nan")
    it = 0
    for it in range(max_iter + 1):
        # residuals of the embedding
        r1 = Aeq.T @ yeq + G.T @ z + cs * tau
        r2 = -(Aeq @ x) + beq * tau
        r3 = -(G @ x) + h * tau - s
        r4 = -(cs @ x) - beq @ yeq - h @ z - kappa
        mu = (s @ z + tau * kappa) / (D + 1)

        xo, so, yo = unscale(x / tau, s / tau, yeq / tau, z / tau)
        res = kkt_residuals(cp, (xo, so), yo)
        if best is None or res.max() < best[0].max():
            best = (res, xo, so, yo)
        if verbose:
            print(f"{it:3d} pres {res.primal:.2e} dres {res.dual:.2e} gap {res.gap:.2e} "
                  f"tau {tau:.2e} kappa {kappa:.2e} mu {mu:.2e}", file=sys.stderr)
        if res.max() <= tol:
            status = ConeStatus.OPTIMAL
            break
        # infeasibility certificates (in original scaling)
        _, sr, yr = unscale(x, s, yeq, z)
        by = cp.b @ yr
        if by < 0:
            cert = yr / -by
            cres = np.linalg.norm(cp.A.T @ cert)
            if cres <= tol:
                status, cert_res = ConeStatus.INFEASIBLE, float(cres)
                best = (res, np.full(n, np.nan), np.full(m, np.nan), cert)
                break
        xr = ecol * x
        cx = cp.c @ xr
        if cx < 0:
            ray, sray = xr / -cx, sr / -cx
            cres = np.linalg.norm(cp.A @ ray + sray)
            if cres <= tol:
                status, cert_res = ConeStatus.UNBOUNDED, float(cres)
                best = (res, ray, sray, np.full(m, np.nan))
                break
        if it == max_iter:
            break

        W = _Scaling(cones, s, z)
        lam = W.lam
        try:
            kkt = KKT(W.squared_coo())
        except RuntimeError:
            break
        x1, y1, z1 = split(kkt.solve(np.concatenate([-cs, beq, h])))
        denom = kappa / tau - cs @ x1 - beq @ y1 - h @ z1

        def direction(sigma, ds_target, dtau_target):
            rhs = np.concatenate([
                -(1 - sigma) * r1,
                (1 - sigma) * r2,
                (1 - sigma) * r3 - W.apply(cones.divide(lam, ds_target)),
            ])
            x2, y2, z2 = split(kkt.solve(rhs))
            dtau = (-(1 - sigma) * r4 + cs @ x2 + beq @ y2 + h @ z2 + dtau_target / tau) / denom
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            # taken from the primal equation so feasibility does not drift when W is ill-conditioned
            ds = (1 - sigma) * r3 - G @ dx + h * dtau
            dkappa = (dtau_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def steplen(ds, dz, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lamlam = cones.product(lam, lam)
        aff = direction(0.0, -lamlam, -tau * kappa)
        a_aff = min(1.0, steplen(aff[3], aff[2], aff[4], aff[5]))
        sigma = (1.0 - a_aff) ** 3
        corr = cones.product(W.apply(aff[3], inverse=True), W.apply(aff[2]))
        ds_t = -lamlam - corr + sigma * mu * e
        dt_t = -tau * kappa - aff[4] * aff[5] + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_t, dt_t)
        alpha = min(1.0, 0.99 * steplen(ds, dz, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 1e-12:
            break
        x = x + alpha * dx
        yeq = yeq + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    res, xo, so, yo = best
    objective = float(cp.c @ xo) if status is ConeStatus.OPTIMAL or status is ConeStatus.MAX_ITER else float("nan")
    return ConeSolution(status, xo, so, yo, objective, res, it, cert_res)


__all__ = ["ConeStatus", "Residuals", "ConeSolution", "kkt_residuals", "solve_cone"]

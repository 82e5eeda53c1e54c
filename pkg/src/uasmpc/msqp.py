"""Multistage convex QPs and a structure-exploiting interior-point solver.

Problem form, for stages ``k = 0..N``::

    min  sum_k 1/2 z_k' P_k z_k + q_k' z_k + const
    s.t. A_k z_k = b_k                              (stage-local equalities)
         C_k z_k + D_{k+1} z_{k+1} + c_k = 0        (coupling to the next stage)
         G_k z_k <= w_k
         lb_k <= z_k <= ub_k

Variables with ``lb == ub`` are substituted out before the solve (this is how
branch-and-bound fixes binaries).  The Newton systems of the Mehrotra
predictor-corrector iteration are reduced to the equality-multiplier Schur
complement ``E Phi^-1 E'``; with rows ordered stage by stage that matrix is
banded with a bandwidth set by one stage, so it is factorised with a banded
Cholesky and the cost per iteration grows linearly with the horizon.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, cho_solve_banded, cholesky_banded

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

INFEAS_TOL = 1e-6


class QPError(ValueError):
    pass


@dataclass
class Stage:
    """One stage block.  ``C``/``D``/``c`` couple this stage to the next one."""

    P: np.ndarray
    q: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    w: np.ndarray | None = None
    C: np.ndarray | None = None
    D: np.ndarray | None = None
    c: np.ndarray | None = None
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.q)
        self.q = np.asarray(self.q, dtype=float)
        self.P = np.asarray(self.P, dtype=float).reshape(n, n)
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        self.A, self.b = _pair(self.A, self.b, n)
        self.G, self.w = _pair(self.G, self.w, n)
        if self.C is None:
            self.C = np.zeros((0, n))
            self.c = np.zeros(0)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, n)
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.D is not None:
            self.D = np.asarray(self.D, dtype=float).reshape(self.C.shape[0], -1)

    @property
    def n(self) -> int:
        return self.q.size


def _pair(M, v, n):
    if M is None:
        return np.zeros((0, n)), np.zeros(0)
    M = np.asarray(M, dtype=float).reshape(-1, n)
    return M, np.asarray(v, dtype=float).ravel()


@dataclass
class MultistageQP:
    stages: list
    const: float = 0.0

    def __post_init__(self):
        N = len(self.stages)
        for k, st in enumerate(self.stages):
            if st.C.shape[0]:
                if k == N - 1:
                    raise QPError("last stage cannot couple forward")
                if st.D is None or st.D.shape[1] != self.stages[k + 1].n:
                    raise QPError(f"coupling block D at stage {k} has the wrong width")
            if st.D is None:
                st.D = np.zeros((st.C.shape[0], self.stages[k + 1].n if k + 1 < N else 0))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([s.n for s in self.stages])])

    @property
    def n(self) -> int:
        return int(sum(s.n for s in self.stages))

    def flatten(self):
        """Global sparse data; equality rows ordered stage by stage (local, then coupling)."""
        base = self.__dict__.get("_base")
        if base is None:
            base = self._build_base()
            self.__dict__["_base"] = base
        lb = np.concatenate([s.lb for s in self.stages])
        ub = np.concatenate([s.ub for s in self.stages])
        return dict(base, lb=lb, ub=ub)

    def _build_base(self):
        off = self.offsets
        n = self.n
        P = sp.block_diag([sp.csr_matrix(s.P) for s in self.stages], format="csr")
        q = np.concatenate([s.q for s in self.stages])
        rows, e, row_stage = [], [], []
        for k, s in enumerate(self.stages):
            if s.A.shape[0]:
                blk = sp.lil_matrix((s.A.shape[0], n))
                blk[:, off[k] : off[k + 1]] = s.A
                rows.append(blk.tocsr())
                e.append(s.b)
                row_stage += [k] * s.A.shape[0]
            if s.C.shape[0]:
                blk = sp.lil_matrix((s.C.shape[0], n))
                blk[:, off[k] : off[k + 1]] = s.C
                blk[:, off[k + 1] : off[k + 2]] = s.D
                rows.append(blk.tocsr())
                e.append(-s.c)
                row_stage += [k] * s.C.shape[0]
        E = sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, n))
        e = np.concatenate(e) if e else np.zeros(0)
        G = sp.block_diag([sp.csr_matrix(s.G) for s in self.stages], format="csr")
        w = np.concatenate([s.w for s in self.stages])
        return dict(P=P, q=q, E=E, e=e, G=G, w=w, off=off, row_stage=np.array(row_stage, dtype=int))

    def split(self, z) -> list:
        off = self.offsets
        return [np.asarray(z[off[k] : off[k + 1]]) for k in range(len(self.stages))]

    def objective(self, z) -> float:
        zs = self.split(z) if not isinstance(z, list) else z
        return float(sum(0.5 * zk @ s.P @ zk + s.q @ zk for zk, s in zip(zs, self.stages)) + self.const)

    def with_bounds(self, lb, ub) -> MultistageQP:
        """Copy with new global bound vectors (stage data shared)."""
        off = self.offsets
        stages = []
        for k, s in enumerate(self.stages):
            t = Stage.__new__(Stage)
            t.__dict__.update(s.__dict__)
            t.lb = np.asarray(lb[off[k] : off[k + 1]], dtype=float)
            t.ub = np.asarray(ub[off[k] : off[k + 1]], dtype=float)
            stages.append(t)
        out = MultistageQP.__new__(MultistageQP)
        out.stages = stages
        out.const = self.const
        if "_base" not in self.__dict__:
            self.flatten()
        out.__dict__["_base"] = self.__dict__["_base"]
        return out


@dataclass
class QPSolution:
    z: np.ndarray  # flat primal, original indexing
    y: np.ndarray  # equality multipliers (flattened row order)
    lam_G: np.ndarray  # general inequality multipliers
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int
    phase1_iterations: int = 0
    solve_time: float = 0.0
    stages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# -- interior point core -----------------------------------------------------------


class _Core:
    """Mehrotra predictor-corrector on a flat, scaled problem."""

    def __init__(self, P, q, E, e, G, w, lb, ub, blocks, reg=1e-10):
        self.P = P.tocsr()
        self.q = q
        self.E = E.tocsr()
        self.Et = self.E.T.tocsr()
        self.e = e
        self.G = G.tocsr()
        self.Gt = self.G.T.tocsr()
        self.w = w
        self.n = q.size
        self.me = e.size
        self.iL = np.flatnonzero(np.isfinite(lb))
        self.iU = np.flatnonzero(np.isfinite(ub))
        self.lbL = lb[self.iL]
        self.ubU = ub[self.iU]
        self.mL, self.mU, self.mG = self.iL.size, self.iU.size, w.size
        self.m = self.mL + self.mU + self.mG
        self.blocks = blocks
        self.reg = reg
        self.Pdiag = self.P.diagonal()
        offdiag = self.P.nnz - np.count_nonzero(self.Pdiag)
        self.diagonal_phi = offdiag == 0 and self.mG == 0
        self.normq = 1.0 + np.max(np.abs(q), initial=0.0)
        d = np.concatenate([-self.lbL, self.ubU, w])
        self.normd = 1.0 + max(np.max(np.abs(e), initial=0.0), np.max(np.abs(d), initial=0.0))
        self._pattern = self._schur_pattern() if self.diagonal_phi and self.me else None

    def _schur_pattern(self):
        """Sparsity of E diag(.) E' in banded storage, for the diagonal-Phi path."""
        Ec = self.E.tocsc()
        Ec.sort_indices()
        ri, rj, col, prod = [], [], [], []
        counts = np.diff(Ec.indptr)
        for cnt in np.unique(counts[counts > 0]):
            ks = np.flatnonzero(counts == cnt)
            pos = Ec.indptr[ks][:, None] + np.arange(cnt)
            rows, vals = Ec.indices[pos], Ec.data[pos]
            I, J = np.triu_indices(cnt)
            ri.append(rows[:, I].ravel())
            rj.append(rows[:, J].ravel())
            col.append(np.repeat(ks, I.size))
            prod.append((vals[:, I] * vals[:, J]).ravel())
        ri, rj = np.concatenate(ri), np.concatenate(rj)
        u = int(np.max(rj - ri, initial=0))
        flat = (u + ri - rj) * self.me + rj
        keys, inv = np.unique(flat, return_inverse=True)
        return dict(u=u, keys=keys, inv=inv, col=np.concatenate(col), prod=np.concatenate(prod))

    # inequality operator C z with C = [-I_L; I_U; G]
    def Cz(self, z):
        return np.concatenate([-z[self.iL], z[self.iU], self.G @ z])

    def Ctv(self, v):
        out = np.zeros(self.n)
        np.add.at(out, self.iL, -v[: self.mL])
        np.add.at(out, self.iU, v[self.mL : self.mL + self.mU])
        if self.mG:
            out += self.Gt @ v[self.mL + self.mU :]
        return out

    @property
    def d(self):
        return np.concatenate([-self.lbL, self.ubU, self.w])

    def initial_point(self, warm=None):
        z = np.zeros(self.n)
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        lb[self.iL] = self.lbL
        ub[self.iU] = self.ubU
        both = np.isfinite(lb) & np.isfinite(ub)
        z[both] = 0.5 * (lb[both] + ub[both])
        lo = np.isfinite(lb) & ~both
        z[lo] = lb[lo] + 1.0
        hi = np.isfinite(ub) & ~both
        z[hi] = ub[hi] - 1.0
        y = np.zeros(self.me)
        if warm is not None:
            zw, yw, lw = warm
            z = zw.copy()
            pad = 1e-3 * (ub[both] - lb[both])
            z[both] = np.clip(zw[both], lb[both] + pad, ub[both] - pad)
            y = yw.copy()
            s = self.d - self.Cz(z)
            theta = 1e-2
            s = np.maximum(s, theta)
            lam = np.maximum(lw, theta)
            return z, y, s, lam
        s = np.maximum(self.d - self.Cz(z), 1.0)
        lam = np.ones(self.m)
        return z, y, s, lam

    def _factor(self, sigma_ineq):
        """Factor Phi = P + C' diag(sigma) C + reg and the banded Schur complement."""
        diag = self.Pdiag + self.reg
        extra = np.zeros(self.n)
        np.add.at(extra, self.iL, sigma_ineq[: self.mL])
        np.add.at(extra, self.iU, sigma_ineq[self.mL : self.mL + self.mU])
        if self.diagonal_phi:
            phid = diag + extra
            self._phi_inv = lambda r: r / phid
            if self._pattern is not None:
                pt = self._pattern
                vals = np.bincount(pt["inv"], weights=pt["prod"] / phid[pt["col"]], minlength=pt["keys"].size)
                ab = np.zeros((pt["u"] + 1) * self.me)
                ab[pt["keys"]] = vals
                self._band = _banded_cholesky(ab.reshape(pt["u"] + 1, self.me), pt["u"], self.reg * 10)
                self._sigma = sigma_ineq
                return
            Phinv = sp.diags(1.0 / phid)
        else:
            Phi = self.P + sp.diags(extra + self.reg)
            if self.mG:
                Phi = Phi + self.Gt @ sp.diags(sigma_ineq[self.mL + self.mU :]) @ self.G
            Phi = Phi.tocsr()
            facs, invs = [], []
            rows, cols, vals = [], [], []
            for idx in self.blocks:
                blk = Phi[idx][:, idx].toarray()
                f = cho_factor(blk, lower=True, check_finite=False)
                facs.append(f)
                inv = cho_solve(f, np.eye(idx.size), check_finite=False)
                rows.append(np.repeat(idx, idx.size))
                cols.append(np.tile(idx, idx.size))
                vals.append(inv.ravel())

            def phi_inv(r, facs=facs):
                out = np.empty_like(r)
                for idx, f in zip(self.blocks, facs):
                    out[idx] = cho_solve(f, r[idx], check_finite=False)
                return out

            self._phi_inv = phi_inv
            Phinv = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
            )
        self._Phi_apply = None
        if self.me:
            S = (self.E @ Phinv @ self.Et).tocoo()
            S.sum_duplicates()
            upper = S.col >= S.row
            r, c, v = S.row[upper], S.col[upper], S.data[upper]
            u = int(np.max(c - r, initial=0))
            ab = np.zeros((u + 1, self.me))
            ab[u + r - c, c] = v
            self._band = _banded_cholesky(ab, u, self.reg * 10)
        self._sigma = sigma_ineq

    def _solve_kkt(self, r1, r2):
        """Solve [Phi E'; E 0][dz; dy] = [r1; r2] via the banded Schur complement."""
        if self.me:
            t = self.E @ self._phi_inv(r1) - r2
            dy = cho_solve_banded((self._band, False), t, check_finite=False)
            dz = self._phi_inv(r1 - self.Et @ dy)
        else:
            dy = np.zeros(0)
            dz = self._phi_inv(r1)
        return dz, dy

    def _phi_mul(self, v):
        out = self.P @ v + self.reg * v
        sig = self._sigma
        out[self.iL] += sig[: self.mL] * v[self.iL]
        out[self.iU] += sig[self.mL : self.mL + self.mU] * v[self.iU]
        if self.mG:
            out += self.Gt @ (sig[self.mL + self.mU :] * (self.G @ v))
        return out

    def _newton(self, z, y, s, lam, rd, re, ri, rc):
        W = lam / s
        rhs1 = -rd - self.Ctv(W * ri - rc / s)
        dz, dy = self._solve_kkt(rhs1, -re)
        # one step of iterative refinement against the unregularised system
        res1 = rhs1 - (self._phi_mul(dz) - self.reg * dz) - self.Et @ dy
        res2 = -re - self.E @ dz
        cz, cy = self._solve_kkt(res1, res2)
        dz += cz
        dy += cy
        dlam = W * (self.Cz(dz) + ri) - rc / s
        ds = -(rc + s * dlam) / lam
        return dz, dy, ds, dlam

    def residuals(self, z, y, s, lam):
        rd = self.P @ z + self.q + self.Et @ y + self.Ctv(lam)
        re = self.E @ z - self.e
        ri = self.Cz(z) + s - self.d
        return rd, re, ri

    def kkt(self, z, y, s, lam):
        rd, re, ri = self.residuals(z, y, s, lam)
        rp = max(np.max(np.abs(re), initial=0.0), np.max(np.abs(ri), initial=0.0)) / self.normd
        rdn = np.max(np.abs(rd), initial=0.0) / self.normq
        mu = float(s @ lam) / max(self.m, 1)
        return rp, rdn, mu, (rd, re, ri)

    def solve(self, tol=1e-9, max_iter=80, warm=None, detect_infeasible=True):
        z, y, s, lam = self.initial_point(warm)
        hist = []
        status = MAX_ITER
        it = 0
        for it in range(1, max_iter + 1):
            rp, rdn, mu, (rd, re, ri) = self.kkt(z, y, s, lam)
            hist.append(rp)
            if rp <= tol and rdn <= tol and mu <= tol:
                status = OPTIMAL
                it -= 1
                break
            if detect_infeasible and it > 25 and rp > 1e3 * tol and hist[-12] > 0 and rp > 0.5 * hist[-12]:
                status = "suspect"
                break
            if detect_infeasible and np.max(lam, initial=0.0) > 1e12:
                status = "suspect"
                break
            self._factor(lam / s)
            # predictor
            dz, dy, ds, dl = self._newton(z, y, s, lam, rd, re, ri, s * lam)
            a_aff = min(_step(s, ds), _step(lam, dl))
            mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dl)) / max(self.m, 1)
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            rc = s * lam + ds * dl - sigma * mu
            dz, dy, ds, dl = self._newton(z, y, s, lam, rd, re, ri, rc)
            alpha = min(1.0, 0.995 * min(_step(s, ds), _step(lam, dl)))
            z = z + alpha * dz
            y = y + alpha * dy
            s = s + alpha * ds
            lam = lam + alpha * dl
        else:
            rp, rdn, mu, _ = self.kkt(z, y, s, lam)
            if rp <= tol and rdn <= tol and mu <= tol:
                status = OPTIMAL
        rp, rdn, mu, _ = self.kkt(z, y, s, lam)
        return z, y, s, lam, status, it, max(rp, rdn, mu)


def _banded_cholesky(ab, u, delta):
    """Cholesky of a banded PSD matrix, raising the diagonal shift until it succeeds.

    Redundant equality rows (common once binaries are fixed) make the Schur
    complement singular; the shift is compensated by iterative refinement.
    """
    scale = max(1.0, float(np.max(ab[u], initial=0.0)))
    for _ in range(8):
        shifted = ab.copy()
        shifted[u] += delta
        try:
            return cholesky_banded(shifted, lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            delta = max(delta * 100.0, 1e-14 * scale)
    raise np.linalg.LinAlgError("Schur complement is not positive definite")


def _step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


# -- problem preparation -------------------------------------------------------------


def _check_costs(qp: MultistageQP):
    for k, s in enumerate(qp.stages):
        if s.n == 0:
            continue
        if not np.allclose(s.P, s.P.T, atol=1e-12 * max(1.0, np.max(np.abs(s.P)))):
            raise QPError(f"invalid cost: P_{k} is not symmetric")
        ev = np.linalg.eigvalsh(s.P)
        if ev.min() < -1e-10 * max(1.0, abs(ev.max())):
            raise QPError(f"invalid cost: P_{k} is not positive semidefinite")


def _blocks_from(off, keep):
    """Index arrays of the kept variables, one per stage."""
    pos = np.cumsum(keep) - keep
    blocks = []
    for k in range(len(off) - 1):
        idx = np.flatnonzero(keep[off[k] : off[k + 1]])
        if idx.size:
            blocks.append(pos[off[k] + idx].astype(int))
    return blocks


def solve_qp(qp: MultistageQP, warm: QPSolution | None = None, tol: float = 1e-9, max_iter: int = 80) -> QPSolution:
    """Solve a multistage QP; status is ``optimal``, ``infeasible`` or ``max_iter``."""
    t0 = time.perf_counter()
    _check_costs(qp)
    data = qp.flatten()
    P, q, E, e, G, w, lb, ub = (data[k] for k in ("P", "q", "E", "e", "G", "w", "lb", "ub"))
    n = q.size
    infeasible_result = lambda: _infeasible(qp, data, t0)  # noqa: E731
    if np.any(lb > ub):
        return infeasible_result()
    fixed = lb == ub
    keep = ~fixed
    zfix = np.where(fixed, lb, 0.0)

    # substitute fixed variables
    Pc = P.tocsc()
    P_ff = Pc[keep][:, keep] if keep.any() else sp.csr_matrix((0, 0))
    P_fx = Pc[keep][:, fixed]
    xf = zfix[fixed]
    qf = q[keep] + P_fx @ xf
    const = 0.5 * xf @ (Pc[fixed][:, fixed] @ xf) + q[fixed] @ xf
    Ec = E.tocsc()
    Ef = Ec[:, keep].tocsr()
    ef = e - Ec[:, fixed] @ xf
    Gc = G.tocsc()
    Gf = Gc[:, keep].tocsr()
    wf = w - Gc[:, fixed] @ xf

    # drop rows that lost all their free variables
    e_nnz = np.diff(Ef.indptr) > 0
    scale_e = 1.0 + np.abs(e)
    if np.any(np.abs(ef[~e_nnz]) > INFEAS_TOL * scale_e[~e_nnz]):
        return infeasible_result()
    g_nnz = np.diff(Gf.indptr) > 0
    if np.any(wf[~g_nnz] < -INFEAS_TOL * (1.0 + np.abs(w[~g_nnz]))):
        return infeasible_result()
    Ef, ef = Ef[e_nnz], ef[e_nnz]
    Gf, wf = Gf[g_nnz], wf[g_nnz]
    lbf, ubf = lb[keep], ub[keep]

    # scaling: columns by box half-width, rows by inf-norm, objective by magnitude
    half = np.where(np.isfinite(lbf) & np.isfinite(ubf), 0.5 * (ubf - lbf), 1.0)
    Dc = np.clip(half, 1e-4, 1e6)
    Dm = sp.diags(Dc)
    Pt = (Dm @ P_ff @ Dm).tocsr()
    qt = Dc * qf
    Et = (Ef @ Dm).tocsr()
    Re = 1.0 / np.maximum(np.asarray(abs(Et).max(axis=1).todense()).ravel(), 1e-12) if Et.shape[0] else np.zeros(0)
    Et = (sp.diags(Re) @ Et).tocsr()
    et = Re * ef
    Gt = (Gf @ Dm).tocsr()
    Rg = 1.0 / np.maximum(np.asarray(abs(Gt).max(axis=1).todense()).ravel(), 1e-12) if Gt.shape[0] else np.zeros(0)
    Gt = (sp.diags(Rg) @ Gt).tocsr()
    wt = Rg * wf
    co = 1.0 / max(1.0, np.max(np.abs(Pt.data), initial=0.0), np.max(np.abs(qt), initial=0.0))
    Pt = Pt * co
    qt = qt * co
    lbt, ubt = lbf / Dc, ubf / Dc

    blocks = _blocks_from(data["off"], keep.astype(int))
    core = _Core(Pt, qt, Et, et, Gt, wt, lbt, ubt, blocks)

    warm_t = None
    if warm is not None and warm.status == OPTIMAL:
        zw = warm.z[keep] / Dc
        yw = (warm.y[e_nnz] / Re * co) if Et.shape[0] else np.zeros(0)
        lamL = warm.lam_lb[keep][core.iL] * Dc[core.iL] * co
        lamU = warm.lam_ub[keep][core.iU] * Dc[core.iU] * co
        lamG = warm.lam_G[g_nnz] / Rg * co if Gt.shape[0] else np.zeros(0)
        warm_t = (zw, yw, np.concatenate([lamL, lamU, lamG]))

    zt, yt, st, lt, status, iters, kkt = core.solve(tol=tol, max_iter=max_iter, warm=warm_t)
    p1_iters = 0
    if status != OPTIMAL:
        feasible, p1_iters = _phase_one(core, tol)
        if not feasible:
            sol = infeasible_result()
            sol.iterations = iters
            sol.phase1_iterations = p1_iters
            return sol
        if status == "suspect":
            zt, yt, st, lt, status, more, kkt = core.solve(tol=tol, max_iter=max_iter, warm=None, detect_infeasible=False)
            iters += more
        status = OPTIMAL if status == OPTIMAL else MAX_ITER

    # unscale
    z = zfix.copy()
    z[keep] = Dc * zt
    y = np.zeros(e.size)
    y[np.flatnonzero(e_nnz)] = Re * yt / co
    lam_G = np.zeros(w.size)
    lam_G[np.flatnonzero(g_nnz)] = Rg * lt[core.mL + core.mU :] / co
    lam_lb = np.zeros(n)
    lam_ub = np.zeros(n)
    kidx = np.flatnonzero(keep)
    lam_lb[kidx[core.iL]] = lt[: core.mL] / (Dc[core.iL] * co)
    lam_ub[kidx[core.iU]] = lt[core.mL : core.mL + core.mU] / (Dc[core.iU] * co)
    obj = 0.5 * z @ (P @ z) + q @ z + qp.const
    return QPSolution(
        z=z,
        y=y,
        lam_G=lam_G,
        lam_lb=lam_lb,
        lam_ub=lam_ub,
        objective=float(obj),
        status=status,
        kkt_residual=float(kkt),
        iterations=iters,
        phase1_iterations=p1_iters,
        solve_time=time.perf_counter() - t0,
        stages=qp.split(z),
    )


def _infeasible(qp, data, t0):
    n = data["q"].size
    z = np.clip(np.zeros(n), data["lb"], data["ub"])
    return QPSolution(
        z=z,
        y=np.zeros(data["e"].size),
        lam_G=np.zeros(data["w"].size),
        lam_lb=np.zeros(n),
        lam_ub=np.zeros(n),
        objective=np.inf,
        status=INFEASIBLE,
        kkt_residual=np.inf,
        iterations=0,
        solve_time=time.perf_counter() - t0,
        stages=qp.split(z),
    )


def _phase_one(core: _Core, tol):
    """Minimise total constraint violation (an LP with the same stage structure)."""
    n, me, mG = core.n, core.me, core.mG
    nv = n + 2 * me + mG
    P = sp.csr_matrix((nv, nv))
    q = np.concatenate([np.zeros(n), np.ones(2 * me + mG)])
    I = sp.identity(me, format="csr")
    E = sp.hstack([core.E, I, -I, sp.csr_matrix((me, mG))], format="csr")
    G = sp.hstack([core.G, sp.csr_matrix((mG, 2 * me)), -sp.identity(mG, format="csr")], format="csr")
    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    lb[core.iL] = core.lbL
    ub[core.iU] = core.ubU
    lb[n:] = 0.0
    # each violation slack joins the block of the stage it belongs to
    owner = np.full(n, -1)
    for b, idx in enumerate(core.blocks):
        owner[idx] = b
    members = [list(idx) for idx in core.blocks]
    Gc = core.G.tocsr()
    for j in range(mG):
        cols = Gc.indices[Gc.indptr[j] : Gc.indptr[j + 1]]
        members[owner[cols[0]]].append(n + 2 * me + j)
    blocks = [np.array(m) for m in members] + [np.array([i]) for i in range(n, n + 2 * me)]
    p1 = _Core(P, q, E, core.e, G, core.w, lb, ub, blocks, reg=1e-9)
    z, y, s, lam, status, iters, _ = p1.solve(tol=1e-9, max_iter=100, detect_infeasible=False)
    viol = float(np.sum(z[n:]))
    return viol <= INFEAS_TOL * core.normd, iters


def objective_bound(qp: MultistageQP, sol: QPSolution) -> float:
    """Lower bound on the QP optimum from the multipliers in ``sol``.

    Uses the Lagrangian with equality and general-inequality multipliers and
    keeps the variable box inside: by convexity the Lagrangian is bounded
    below on the box by its linearisation at the (box-projected) primal point.
    """
    if sol.status == INFEASIBLE:
        return np.inf
    data = qp.flatten()
    P, q, E, e, G, w, lb, ub = (data[k] for k in ("P", "q", "E", "e", "G", "w", "lb", "ub"))
    y = sol.y
    lamG = np.maximum(sol.lam_G, 0.0)
    z = np.clip(sol.z, lb, ub)
    L = 0.5 * z @ (P @ z) + q @ z + qp.const + y @ (E @ z - e) + lamG @ (G @ z - w)
    g = P @ z + q + E.T @ y + G.T @ lamG
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(lb), g * (lb - z), np.where(g > 0, -np.inf, 0.0))
        hi = np.where(np.isfinite(ub), g * (ub - z), np.where(g < 0, -np.inf, 0.0))
    # unbounded coordinates whose gradient is at stationarity tolerance are treated as exact
    tiny = np.abs(g) <= 1e-9 * (1.0 + np.max(np.abs(q), initial=0.0))
    lo = np.where(~np.isfinite(lb) & tiny, 0.0, lo)
    hi = np.where(~np.isfinite(ub) & tiny, 0.0, hi)
    return float(L + np.sum(np.minimum(lo, hi)))


def dense_reference(qp: MultistageQP):
    """Dense KKT solve for equality-constrained problems (test oracle)."""
    data = qp.flatten()
    P = data["P"].toarray()
    E = data["E"].toarray()
    n, me = P.shape[0], E.shape[0]
    K = np.block([[P, E.T], [E, np.zeros((me, me))]])
    rhs = np.concatenate([-data["q"], data["e"]])
    sol = np.linalg.solve(K, rhs)
    z = sol[:n]
    return z, qp.objective(z)

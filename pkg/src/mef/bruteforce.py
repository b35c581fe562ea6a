"""Brute-force verification by direct trajectory optimization.

Rebuilds the finite-horizon estimation problem the observer claims to
solve: over all disturbance sequences and initial errors consistent with
the forward-Euler error dynamics and a fixed terminal error, minimize the
initial cost plus the accumulated disturbance energy. Because the
dynamics are linear and every cost term is quadratic, the resulting value
function is exactly quadratic in the terminal error, so finite
differences of the optimum recover its gradient and Hessian to round-off.
These are then compared against the observer's propagated quantities.

Two equivalent solvers back the optimization. Small instances use dense
elimination of the trajectory plus an orthogonal factorization; large
instances assemble the sparse KKT system of the equality-constrained
quadratic program and factor it once with SuperLU, after which each
terminal point costs one solve. The two styles are pinned against each
other in the test suite at a size both can handle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .liegroup import GeneratorBasis, upsilon, wedge

__all__ = [
    "DiscretizedProblem",
    "InfeasibleTerminalError",
    "value_at",
    "gradient_hessian_at",
    "check_critical_point",
    "hjb_minimizer",
    "hjb_minimizer_check",
    "DENSE_STEP_LIMIT",
]

# Problems with at most this many steps default to the dense solver.
DENSE_STEP_LIMIT = 200

FD_STEP = 1e-4


class InfeasibleTerminalError(ValueError):
    """The terminal error is unreachable under the discrete dynamics.

    With invertible one-step maps I + dt*Delta_k the free initial error
    alone reaches every terminal point, so this only fires for degenerate
    step matrices (or a numerically broken solve).
    """


def _psd_sqrt_rows(mat: np.ndarray) -> np.ndarray:
    # Row factor L with L^T L equal to the PSD part of mat.
    w, V = np.linalg.eigh(mat)
    return np.sqrt(np.clip(w, 0.0, None))[:, None] * V.T


@dataclass
class DiscretizedProblem:
    """Forward-Euler discretization of the error-system optimal control
    problem over N uniform steps of length dt.

    Step k carries the correction matrix Delta_k, input map B_k with gain
    Q_k, raw output matrix C_k with gain R_k and target y_k, and the
    observer element X_hat_k that pulls the output back to error
    coordinates. The initial cost is 0.5 (e0 - anchor)^T H0 (e0 - anchor),
    with anchor the image of the initial state estimate under X_hat_0.
    """

    dt: float
    Delta: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    X_hat: np.ndarray
    y: np.ndarray
    R: np.ndarray
    H0: np.ndarray
    anchor: np.ndarray
    solver: str = "auto"
    _dense: Optional[dict] = field(default=None, init=False, repr=False)
    _sparse: Optional[dict] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.Delta = np.asarray(self.Delta, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.X_hat = np.asarray(self.X_hat, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.H0 = np.asarray(self.H0, dtype=float)
        self.anchor = np.asarray(self.anchor, dtype=float).reshape(-1)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        N, m, l, n = self.steps, self.m, self.l, self.n
        if self.Delta.shape != (N, m, m):
            raise ValueError("Delta must have shape (N, m, m)")
        if self.B.shape != (N, m, l):
            raise ValueError("B must have shape (N, m, l)")
        if self.Q.shape != (N, l, l):
            raise ValueError("Q must have shape (N, l, l)")
        if self.C.shape != (N, n, m):
            raise ValueError("C must have shape (N, n, m)")
        if self.X_hat.shape != (N, m, m):
            raise ValueError("X_hat must have shape (N, m, m)")
        if self.y.shape != (N, n):
            raise ValueError("y must have shape (N, n)")
        if self.R.shape != (N, n, n):
            raise ValueError("R must have shape (N, n, n)")
        if self.H0.shape != (m, m):
            raise ValueError("H0 must be m x m")
        if self.anchor.shape != (m,):
            raise ValueError("anchor must be an m-vector")
        if self.solver not in ("auto", "dense", "sparse"):
            raise ValueError("solver must be auto, dense, or sparse")

    @property
    def steps(self) -> int:
        return int(self.Delta.shape[0])

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @property
    def m(self) -> int:
        return int(self.Delta.shape[1])

    @property
    def l(self) -> int:
        return int(self.B.shape[2])

    @property
    def n(self) -> int:
        return int(self.C.shape[1])

    @classmethod
    def from_substeps(
        cls, basis: GeneratorBasis, records, H0, anchor, solver: str = "auto"
    ) -> "DiscretizedProblem":
        """Build the problem from an observer substep trace.

        Requires a uniform substep size (relative spread below 1e-9); run
        the observer with dt_max equal to the intended dt and an
        effectively unbounded delta_step_cap to get one.
        """
        if len(records) == 0:
            raise ValueError("need at least one substep record")
        dts = np.array([r.dt for r in records])
        dt = float(dts[0])
        if float(np.abs(dts - dt).max()) > 1e-9 * dt:
            raise ValueError("substep sizes are not uniform")
        Delta = np.stack([wedge(basis, r.delta) for r in records])
        B = np.stack([r.sample.B for r in records])
        Q = np.stack([r.sample.Q for r in records])
        C = np.stack([r.sample.C for r in records])
        X_hat = np.stack([r.X_hat.matrix for r in records])
        y = np.stack([r.sample.y for r in records])
        R = np.stack([r.sample.R for r in records])
        return cls(
            dt=dt, Delta=Delta, B=B, Q=Q, C=C, X_hat=X_hat, y=y, R=R,
            H0=np.asarray(H0, dtype=float), anchor=anchor, solver=solver,
        )

    # -- dense path: eliminate the trajectory, orthogonal factorization --

    def _dense_state(self) -> dict:
        if self._dense is not None:
            return self._dense
        N, m, l, n = self.steps, self.m, self.l, self.n
        cols = m + N * l
        A_step = np.eye(m)[None, :, :] + self.dt * self.Delta
        C_tilde = self.C @ np.linalg.inv(self.X_hat)

        # Coefficients of e_k as a linear map of (e0, mu_0..mu_{N-1}).
        coeff = np.zeros((N + 1, m, cols))
        coeff[0, :, :m] = np.eye(m)
        for k in range(N):
            coeff[k + 1] = A_step[k] @ coeff[k]
            coeff[k + 1][:, m + k * l : m + (k + 1) * l] += self.dt * self.B[k]

        rows = m + N * (l + n)
        A_mat = np.zeros((rows, cols))
        b = np.zeros(rows)
        L0 = _psd_sqrt_rows(self.H0)
        A_mat[:m] = L0 @ coeff[0]
        b[:m] = L0 @ self.anchor
        sqrt_dt = np.sqrt(self.dt)
        r0 = m
        for k in range(N):
            LQ = sqrt_dt * np.linalg.cholesky(self.Q[k]).T
            A_mat[r0 : r0 + l, m + k * l : m + (k + 1) * l] = LQ
            r0 += l
        for k in range(N):
            LR = sqrt_dt * _psd_sqrt_rows(self.R[k])
            A_mat[r0 : r0 + n] = (LR @ C_tilde[k]) @ coeff[k]
            b[r0 : r0 + n] = LR @ self.y[k]
            r0 += n

        G = coeff[N]
        U, s, Vt = np.linalg.svd(G, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * s[0])) if s.size else 0
        W_p = Vt[:rank].T @ ((U[:, :rank] / s[:rank]).T)
        Z = Vt[rank:].T
        Qz, _ = np.linalg.qr(A_mat @ Z)
        self._dense = {
            "M": A_mat @ W_p,
            "b": b,
            "Qz": Qz,
            "U_range": U[:, :rank],
            "full_rank": rank == m,
        }
        return self._dense

    def _value_dense(self, e_T: np.ndarray) -> float:
        st = self._dense_state()
        if not st["full_rank"]:
            proj = st["U_range"] @ (st["U_range"].T @ e_T)
            if float(np.linalg.norm(proj - e_T)) > 1e-8 * max(1.0, float(np.linalg.norm(e_T))):
                raise InfeasibleTerminalError("terminal error is unreachable")
        u = st["b"] - st["M"] @ e_T
        resid = u - st["Qz"] @ (st["Qz"].T @ u)
        return 0.5 * float(resid @ resid)

    # -- sparse path: KKT system of the constrained quadratic program --

    def _sparse_state(self) -> dict:
        if self._sparse is not None:
            return self._sparse
        N, m, l, n = self.steps, self.m, self.l, self.n
        stride = m + l
        nz = (N + 1) * m + N * l
        ncon = (N + 1) * m
        C_tilde = self.C @ np.linalg.inv(self.X_hat)
        A_step = np.eye(m)[None, :, :] + self.dt * self.Delta

        P = sp.lil_matrix((nz, nz))
        c = np.zeros(nz)
        c0 = 0.5 * float(self.anchor @ self.H0 @ self.anchor)
        P[:m, :m] = self.H0
        c[:m] = -self.H0 @ self.anchor
        for k in range(N):
            ek = k * stride
            mk = ek + m
            P[mk : mk + l, mk : mk + l] = self.dt * self.Q[k]
            CtR = C_tilde[k].T @ self.R[k]
            P[ek : ek + m, ek : ek + m] = (
                P[ek : ek + m, ek : ek + m].toarray() + self.dt * CtR @ C_tilde[k]
            )
            c[ek : ek + m] += -self.dt * CtR @ self.y[k]
            c0 += 0.5 * self.dt * float(self.y[k] @ self.R[k] @ self.y[k])

        E = sp.lil_matrix((ncon, nz))
        for k in range(N):
            row = k * m
            ek = k * stride
            E[row : row + m, ek : ek + m] = -A_step[k]
            E[row : row + m, ek + m : ek + m + l] = -self.dt * self.B[k]
            E[row : row + m, ek + stride : ek + stride + m] = np.eye(m)
        E[N * m : (N + 1) * m, N * stride : N * stride + m] = np.eye(m)

        K = sp.bmat([[P.tocsc(), E.T.tocsc()], [E.tocsc(), None]], format="csc")
        try:
            lu = splu(K)
        except RuntimeError as exc:
            raise InfeasibleTerminalError(f"singular optimality system: {exc}") from exc
        self._sparse = {
            "lu": lu,
            "K": K,
            "P": P.tocsr(),
            "c": c,
            "c0": c0,
            "nz": nz,
            "ncon": ncon,
        }
        return self._sparse

    def _value_sparse(self, e_T: np.ndarray) -> float:
        st = self._sparse_state()
        rhs = np.concatenate([-st["c"], np.zeros(st["ncon"])])
        rhs[-self.m :] = e_T
        sol = st["lu"].solve(rhs)
        residual = float(np.linalg.norm(st["K"] @ sol - rhs))
        if not np.isfinite(residual) or residual > 1e-6 * (1.0 + float(np.linalg.norm(rhs))):
            raise InfeasibleTerminalError(
                f"optimality system solve failed (residual {residual:.3e})"
            )
        z = sol[: st["nz"]]
        return 0.5 * float(z @ (st["P"] @ z)) + float(st["c"] @ z) + st["c0"]

    def _value(self, e_T: np.ndarray) -> float:
        use_dense = self.solver == "dense" or (
            self.solver == "auto" and self.steps <= DENSE_STEP_LIMIT
        )
        if use_dense:
            return self._value_dense(e_T)
        return self._value_sparse(e_T)


def value_at(prob: DiscretizedProblem, e_T) -> float:
    """Minimal cost over all trajectories ending at e_T.

    Exact (up to linear-algebra round-off) for the discretized problem;
    convex quadratic in e_T.
    """
    e_T = np.asarray(e_T, dtype=float).reshape(-1)
    if e_T.shape != (prob.m,):
        raise ValueError("terminal point dimension mismatch")
    return prob._value(e_T)


def gradient_hessian_at(
    prob: DiscretizedProblem, e, h: float = FD_STEP
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of the value function at e.

    The value is exactly quadratic, so central differences with the fixed
    step h recover both up to round-off. The Hessian is symmetrized.
    """
    e = np.asarray(e, dtype=float).reshape(-1)
    m = prob.m
    base = value_at(prob, e)
    grad = np.zeros(m)
    hess = np.zeros((m, m))
    plus = np.zeros(m)
    minus = np.zeros(m)
    eye = np.eye(m)
    for i in range(m):
        plus[i] = value_at(prob, e + h * eye[i])
        minus[i] = value_at(prob, e - h * eye[i])
        grad[i] = (plus[i] - minus[i]) / (2.0 * h)
        hess[i, i] = (plus[i] - 2.0 * base + minus[i]) / h ** 2
    for i in range(m):
        for j in range(i + 1, m):
            vpp = value_at(prob, e + h * eye[i] + h * eye[j])
            vpm = value_at(prob, e + h * eye[i] - h * eye[j])
            vmp = value_at(prob, e - h * eye[i] + h * eye[j])
            vmm = value_at(prob, e - h * eye[i] - h * eye[j])
            hess[i, j] = hess[j, i] = (vpp - vpm - vmp + vmm) / (4.0 * h ** 2)
    return grad, 0.5 * (hess + hess.T)


def check_critical_point(
    prob: DiscretizedProblem, basis: GeneratorBasis, origin_xi, h: float = FD_STEP
) -> float:
    """Largest tangential directional derivative of the value at the
    origin point; near zero when the recorded corrections are optimal."""
    origin_xi = np.asarray(origin_xi, dtype=float).reshape(-1)
    Ups = upsilon(basis, origin_xi)
    worst = 0.0
    for i in range(Ups.shape[1]):
        direction = Ups[:, i]
        deriv = (
            value_at(prob, origin_xi + h * direction)
            - value_at(prob, origin_xi - h * direction)
        ) / (2.0 * h)
        worst = max(worst, abs(float(deriv)))
    return worst


def hjb_minimizer(grad, B, Q) -> np.ndarray:
    """Minimizer Q^-1 B^T grad of the instantaneous disturbance tradeoff."""
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    grad = np.asarray(grad, dtype=float).reshape(-1)
    return np.linalg.solve(Q, B.T @ grad)


def hjb_minimizer_check(H, grad, B, Q, samples: int = 64, seed: int = 0) -> float:
    """Sampled convexity check that Q^-1 B^T grad minimizes the
    disturbance tradeoff 0.5 mu^T Q mu - grad^T B mu.

    H describes the same value function but does not enter the minimizer;
    it is validated for symmetry only. Returns the worst violation
    cost(mu*) - cost(mu* + perturbation), expected nonpositive.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if float(np.abs(H - H.T).max()) > 1e-8 * max(1.0, float(np.abs(H).max())):
        raise ValueError("H must be symmetric")
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    grad = np.asarray(grad, dtype=float).reshape(-1)
    mu_star = hjb_minimizer(grad, B, Q)

    def cost(mu: np.ndarray) -> float:
        return 0.5 * float(mu @ Q @ mu) - float(grad @ (B @ mu))

    base = cost(mu_star)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=[seed])))
    scale = 1.0 + float(np.linalg.norm(mu_star))
    worst = -np.inf
    ell = B.shape[1]
    for _ in range(samples):
        perturbation = scale * gen.standard_normal(ell)
        worst = max(worst, base - cost(mu_star + perturbation))
    return float(worst)

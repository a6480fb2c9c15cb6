"""Optimal-recovery computation: entanglement fidelity, the recovery SDP, and
channel application in the Choi representation.

Choi convention: for a channel R mapping input space A (dim d_in) to output
space B (dim d_out), the Choi matrix X lives on B (x) A with the *output
factor first and the input factor last*, is unnormalized (Tr X = d_in for a
trace-preserving map), and acts by

    R(rho)[b, b'] = sum_{a, a'} X[(b, a), (b', a')] rho[a, a'].

CPTP means X >= 0 and Tr_B X = I_A.

The recovery optimization maximizes F_e = <phi| (R (x) I)(Omega_E) |phi> over
CPTP maps. It is solved in a reduced form whose variable has the 2-dimensional
code space as output (constraints X >= 0 and Tr_B X <= I, written with a PSD
slack block), then completed to an exactly trace-preserving map on the full
space by adding a dump channel into a direction orthogonal to the code space.
Any subnormalized code-space block extends to a CPTP map this way, and the
completion leaves the objective untouched because the objective only weights
code-space output components. When the code space is the full space (the
unencoded baseline) the equality-constrained problem is solved directly.

Solver: Douglas-Rachford operator splitting with over-relaxation, alternating
the eigendecomposition projection onto the PSD cone with the closed-form
projection onto the affine trace constraint (shifted by the linear objective).
The problems are tiny (variable dimension at most 32) and many instances are
iterated in lockstep as a batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .codes import StabilizerCode, encoding_isometry, reference_entangled_state
from .tolerances import DEFAULT, Tolerances


@dataclass(eq=False)
class RecoveryChoi:
    matrix: np.ndarray        # (d_out*d_in, d_out*d_in), output factor first
    d_out: int
    d_in: int
    tp_defect: float          # ||Tr_out(matrix) - I_in||_F
    iterations: int = 0
    residual: float = 0.0     # solver fixed-point residual at acceptance

    def as4(self) -> np.ndarray:
        return self.matrix.reshape(self.d_out, self.d_in, self.d_out, self.d_in)


class RecoveryConvergenceError(RuntimeError):
    """Solver hit the iteration cap; carries the worst iterate and residuals."""

    def __init__(self, msg: str, best: "RecoveryChoi | None" = None,
                 residuals: np.ndarray | None = None):
        super().__init__(msg)
        self.best = best
        self.residuals = residuals


def identity_choi(d: int) -> RecoveryChoi:
    v = np.eye(d, dtype=complex).reshape(-1)
    return RecoveryChoi(matrix=np.outer(v, v.conj()), d_out=d, d_in=d, tp_defect=0.0)


def unitary_choi(u: np.ndarray) -> RecoveryChoi:
    u = np.asarray(u, dtype=complex)
    v = u.reshape(-1)
    return RecoveryChoi(matrix=np.outer(v, v.conj()), d_out=u.shape[0], d_in=u.shape[1],
                        tp_defect=0.0)


def kraus_choi(kraus: list[np.ndarray]) -> RecoveryChoi:
    d_out, d_in = kraus[0].shape
    x = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for k in kraus:
        v = np.asarray(k, dtype=complex).reshape(-1)
        x += np.outer(v, v.conj())
    tp = np.linalg.norm(_trace_out(x.reshape(d_out, d_in, d_out, d_in)) - np.eye(d_in))
    return RecoveryChoi(matrix=x, d_out=d_out, d_in=d_in, tp_defect=float(tp))


def depolarizing_choi(d: int) -> RecoveryChoi:
    return RecoveryChoi(matrix=np.eye(d * d, dtype=complex) / d, d_out=d, d_in=d,
                        tp_defect=0.0)


def _trace_out(x4: np.ndarray) -> np.ndarray:
    """Partial trace of a Choi 4-tensor over the output factor."""
    return np.einsum("iaib->ab", x4)


def apply_channel(r: RecoveryChoi, rho: np.ndarray) -> np.ndarray:
    """Contract the Choi matrix against an input operator."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (r.d_in, r.d_in):
        raise ValueError(f"input has shape {rho.shape}, channel expects ({r.d_in}, {r.d_in})")
    return np.einsum("bacd,ad->bc", r.as4(), rho)


def apply_channel_with_reference(r: RecoveryChoi, omega: np.ndarray) -> np.ndarray:
    """(R (x) I_ref)(omega) for omega on system (x) reference, reference last."""
    d_ref = omega.shape[0] // r.d_in
    if r.d_in * d_ref != omega.shape[0]:
        raise ValueError("omega dimension incompatible with channel input")
    w4 = omega.reshape(r.d_in, d_ref, r.d_in, d_ref)
    out = np.einsum("bacd,ards->brcs", r.as4(), w4)
    d = r.d_out * d_ref
    return out.reshape(d, d)


def entanglement_fidelity(r: RecoveryChoi, omega_e: np.ndarray,
                          code: StabilizerCode) -> float:
    """<phi| (R (x) I)(omega_e) |phi> for the code's reference-entangled phi."""
    omega_e = np.asarray(omega_e, dtype=complex)
    if omega_e.shape != (2 * code.dim, 2 * code.dim):
        raise ValueError(f"omega_e has shape {omega_e.shape}, expected "
                         f"({2 * code.dim}, {2 * code.dim})")
    if r.d_in != code.dim or r.d_out != code.dim:
        raise ValueError("recovery dimensions do not match the code")
    phi = reference_entangled_state(code)
    out = apply_channel_with_reference(r, omega_e)
    return float(np.real(phi.conj() @ out @ phi))


def average_fidelity(f_e: float, d: int = 2) -> float:
    """Average fidelity (f_e*d + 1)/(d + 1) from the entanglement fidelity."""
    return (f_e * d + 1.0) / (d + 1.0)


def _objective_matrix(omega_e: np.ndarray, code: StabilizerCode,
                      v_out: np.ndarray) -> np.ndarray:
    """Hermitian M with F_e(R) = Tr(M X) for the Choi variable X whose output
    space is spanned by the isometry `v_out` (physical dim x variable dim).

    From F_e = sum phi[b,r] omega[a2,r2,a,r] conj(phi[b2,r2]) X[(b,a),(b2,a2)]
    with phi = U/sqrt(2) reshaped (dim, 2), compressed through v_out.
    """
    d = code.dim
    w4 = np.asarray(omega_e, dtype=complex).reshape(d, 2, d, 2)
    phi_v = v_out.conj().T @ (encoding_isometry(code) / np.sqrt(2.0))
    m4 = np.einsum("cr,ysxr,ds->cxdy", phi_v, w4, phi_v.conj())
    d_o = v_out.shape[1]
    m = m4.reshape(d_o * d, d_o * d)
    return 0.5 * (m + m.conj().T)


def _kron_eye_left(d_b: int, lam: np.ndarray) -> np.ndarray:
    """Batched I_{d_b} (x) Lam for Lam of shape (K, dA, dA)."""
    k, da, _ = lam.shape
    out = np.einsum("ij,kab->kiajb", np.eye(d_b), lam)
    return out.reshape(k, d_b * da, d_b * da)


def _psd_project_batch(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    w = np.maximum(w, 0.0)
    return (v * w[:, None, :]) @ v.conj().transpose(0, 2, 1)


@dataclass
class DRState:
    """Douglas-Rachford internal state, reusable as a warm start."""
    ux: np.ndarray
    us: np.ndarray | None


class _RecoverySDP:
    """Batch of recovery SDPs sharing one code / variable layout."""

    #: converged instances are retired from the working set this often
    RETIRE_EVERY = 25

    def __init__(self, omegas: np.ndarray, code: StabilizerCode, reduced: bool = True):
        self.code = code
        self.d = code.dim
        omegas = np.asarray(omegas, dtype=complex)
        if omegas.ndim == 2:
            omegas = omegas[None]
        self.count = omegas.shape[0]
        self.v_out = encoding_isometry(code) if reduced else np.eye(self.d, dtype=complex)
        self.d_o = self.v_out.shape[1]
        self.slack = self.d_o < self.d
        self.m = np.stack([_objective_matrix(w, code, self.v_out) for w in omegas])
        scale = np.maximum(np.linalg.norm(self.m, axis=(1, 2)), 1e-300)
        self.m_hat = self.m / scale[:, None, None]
        self.dx = self.d_o * self.d
        self._omegas = omegas

    def _project_affine(self, wx: np.ndarray, ws: np.ndarray | None):
        """Project (X, S) onto {Tr_out X (+ S) = I}."""
        eye = np.eye(self.d)
        tr = np.einsum("kiaib->kab", wx.reshape(-1, self.d_o, self.d, self.d_o, self.d))
        if self.slack:
            lam = (tr + ws - eye) * (2.0 / (self.d_o + 1))
            return wx - 0.5 * _kron_eye_left(self.d_o, lam), ws - 0.5 * lam
        lam = (tr - eye) * (2.0 / self.d_o)
        return wx - 0.5 * _kron_eye_left(self.d_o, lam), None

    def _transpose_channel_start(self) -> np.ndarray:
        """Near-optimal initial iterate: the transpose-channel ("pretty good")
        recovery built from each conditional state, mapped into the reduced
        variable. Feasible by construction (Tr_out X = support projector <= I).
        """
        d = self.d
        ce = 2.0 * self._omegas  # Choi of the code-restricted channel, output first
        w, v = np.linalg.eigh(ce)
        w = np.maximum(w, 0.0)
        vk = v.reshape(-1, d, 2, 2 * d)                       # [k, x, c, i]
        n = np.einsum("ki,kxci,kyci->kxy", w, vk, vk.conj())  # sum_i K_i K_i^dag
        nw, nv = np.linalg.eigh(n)
        inv = np.where(nw > 1e-12 * np.maximum(nw[..., -1:], 1e-300),
                       1.0 / np.sqrt(np.maximum(nw, 1e-300)), 0.0)
        nis = (nv * inv[:, None, :]) @ nv.conj().transpose(0, 2, 1)
        # recovery Kraus R_i = K_i^dag N^{-1/2}, output in the logical basis
        t = np.einsum("ki,kxci,kxy->kicy", np.sqrt(w), vk.conj(), nis)
        x = np.einsum("kicy,kidz->kcydz", t, t.conj())
        return x.reshape(-1, self.dx, self.dx)

    def solve(self, tol: float, max_iter: int, warm: DRState | None = None,
              step: float = 10.0, relax: float = 1.8):
        k, dx, d = self.count, self.dx, self.d
        if warm is not None and warm.ux.shape == (k, dx, dx):
            ux = warm.ux.copy()
            us = (warm.us.copy() if warm.us is not None
                  else np.zeros((k, d, d), dtype=complex)) if self.slack else None
        elif self.slack:
            ux = self._transpose_channel_start()
            tr = np.einsum("kiaib->kab", ux.reshape(-1, self.d_o, d, self.d_o, d))
            us = np.eye(d) - tr
        else:
            ux = np.broadcast_to(np.eye(dx, dtype=complex) / self.d_o, (k, dx, dx)).copy()
            us = None
        # output buffers; instances retire as they individually converge
        yx_out = np.empty((k, dx, dx), dtype=complex)
        ux_out = np.empty_like(yx_out)
        us_out = np.empty((k, d, d), dtype=complex) if self.slack else None
        res_out = np.full(k, np.inf)
        active = np.arange(k)
        m_hat = self.m_hat
        it = 0
        while active.size and it < max_iter:
            it += 1
            yx = _psd_project_batch(ux)
            ys = _psd_project_batch(us) if self.slack else None
            wx = 2.0 * yx - ux + step * m_hat
            ws = 2.0 * ys - us if self.slack else None
            vx, vs = self._project_affine(wx, ws)
            gx = vx - yx
            ux += relax * gx
            gap = np.linalg.norm(gx, axis=(1, 2)) ** 2
            if self.slack:
                gs = vs - ys
                us += relax * gs
                gap = gap + np.linalg.norm(gs, axis=(1, 2)) ** 2
            res = np.sqrt(gap) / np.maximum(1.0, np.linalg.norm(yx, axis=(1, 2)))
            if it % self.RETIRE_EVERY == 0 or it == max_iter or res.max() <= tol:
                done = res <= tol
                if done.any() or it == max_iter:
                    if it == max_iter:
                        done = np.ones_like(done)
                    idx = active[done]
                    yx_out[idx] = yx[done]
                    ux_out[idx] = ux[done]
                    if self.slack:
                        us_out[idx] = us[done]
                    res_out[idx] = res[done]
                    keep = ~done
                    active = active[keep]
                    ux = ux[keep]
                    m_hat = m_hat[keep]
                    if self.slack:
                        us = us[keep]
        return yx_out, DRState(ux=ux_out, us=us_out), it, res_out

    def scaled_feasible(self, x: np.ndarray) -> np.ndarray:
        """Scale PSD iterates so Tr_out X <= I holds strictly (batched)."""
        d_o, d = self.d_o, self.d
        tr = np.einsum("kiaib->kab", x.reshape(-1, d_o, d, d_o, d))
        tr = 0.5 * (tr + tr.conj().transpose(0, 2, 1))
        lam_max = np.linalg.eigvalsh(tr)[:, -1]
        scale = np.maximum(lam_max, 1.0)
        return x / scale[:, None, None]

    def fidelities(self, x_scaled: np.ndarray) -> np.ndarray:
        return np.einsum("kij,kji->k", self.m, x_scaled).real

    def embed(self, x_scaled: np.ndarray, it: int, res: np.ndarray) -> list[RecoveryChoi]:
        """Complete each scaled block to an exactly trace-preserving full Choi."""
        d, d_o = self.d, self.d_o
        eye = np.eye(d)
        chois: list[RecoveryChoi] = []
        for i in range(x_scaled.shape[0]):
            xi = x_scaled[i]
            tr = _trace_out(xi.reshape(d_o, d, d_o, d))
            tr = 0.5 * (tr + tr.conj().T)
            if self.slack:
                deficit = qcore.psd_project(eye - tr)
                g = _complement_vector(self.v_out)
                viv = np.kron(self.v_out, eye)
                full = viv @ xi @ viv.conj().T + np.kron(np.outer(g, g.conj()), deficit)
            else:
                # full-rank output: restore exact trace preservation by congruence
                w, u = np.linalg.eigh(tr)
                inv_sqrt = (u * (1.0 / np.sqrt(np.maximum(w, 1e-12)))) @ u.conj().T
                fix = np.kron(np.eye(d_o), inv_sqrt)
                full = fix @ xi @ fix.conj().T
            full = 0.5 * (full + full.conj().T)
            tp = float(np.linalg.norm(_trace_out(full.reshape(d, d, d, d)) - eye))
            chois.append(RecoveryChoi(matrix=full, d_out=d, d_in=d, tp_defect=tp,
                                      iterations=it, residual=float(res[i])))
        return chois


def _complement_vector(v_out: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to the columns of an isometry."""
    d = v_out.shape[0]
    proj = v_out @ v_out.conj().T
    best, best_norm = None, -1.0
    for j in range(d):
        g = np.zeros(d, dtype=complex)
        g[j] = 1.0
        g = g - proj @ g
        nrm = float(np.linalg.norm(g))
        if nrm > best_norm:
            best, best_norm = g / max(nrm, 1e-300), nrm
    if best_norm < 1e-6:
        raise ValueError("no direction orthogonal to the code space (full-rank output)")
    return best


def solve_optimal_recovery_batch(omegas: np.ndarray, code: StabilizerCode,
                                 tol: float | None = None, max_iter: int = 100_000,
                                 warm: DRState | None = None, reduced: bool = True,
                                 want_chois: bool = False,
                                 tols: Tolerances = DEFAULT):
    """Solve a stack of recovery SDPs in lockstep.

    Returns (f_es, chois, warm_state); `chois` is None unless requested. The
    f_e values come from the strictly feasible (scaled) iterates, so they are
    attainable by the certified maps.
    """
    tol = tols.sdp_gap if tol is None else tol
    sdp = _RecoverySDP(omegas, code, reduced=reduced)
    x, state, it, res = sdp.solve(tol, max_iter, warm=warm)
    x = sdp.scaled_feasible(x)
    if res.max() > tol:
        chois = sdp.embed(x, it, res)
        worst = int(np.argmax(res))
        raise RecoveryConvergenceError(
            f"recovery SDP did not reach tol={tol} within {max_iter} iterations "
            f"(worst residual {res.max():.3g} at instance {worst})",
            best=chois[worst], residuals=res)
    f_es = sdp.fidelities(x)
    chois = sdp.embed(x, it, res) if want_chois else None
    return f_es, chois, state


def solve_optimal_recovery(omega_e: np.ndarray, code: StabilizerCode,
                           tol: float | None = None, max_iter: int = 100_000,
                           reduced: bool = True,
                           tols: Tolerances = DEFAULT) -> tuple[RecoveryChoi, float]:
    """Optimal CPTP recovery for one conditional state; returns (choi, f_e)."""
    omega_e = np.asarray(omega_e, dtype=complex)
    if omega_e.shape != (2 * code.dim, 2 * code.dim):
        raise ValueError(f"omega_e has shape {omega_e.shape}, expected "
                         f"({2 * code.dim}, {2 * code.dim})")
    _, chois, _ = solve_optimal_recovery_batch(omega_e[None], code, tol=tol,
                                               max_iter=max_iter, reduced=reduced,
                                               want_chois=True, tols=tols)
    f_direct = entanglement_fidelity(chois[0], omega_e, code)
    return chois[0], f_direct

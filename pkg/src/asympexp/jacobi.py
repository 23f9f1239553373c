"""Cyclic Jacobi eigensolver for dense symmetric matrices.

Each sweep visits every index pair once in round-robin (tournament) order;
the n/2 pairs of a round are disjoint, so their rotations commute and are
applied together.  The sweep order is fixed, so results are deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import NotConverged

OFF_TOL = 1e-13
MAX_SWEEPS = 60
# rotations with |a_pq| below this fraction of sqrt|a_pp a_qq| are skipped
SKIP_TOL = 1e-17


def _rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = n + (n % 2)
    ring = list(range(1, m))
    rounds = []
    for _ in range(m - 1):
        arr = [0] + ring
        p = np.array([arr[i] for i in range(m // 2)])
        q = np.array([arr[m - 1 - i] for i in range(m // 2)])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        ring = ring[-1:] + ring[:-1]
    return rounds


def _off_norm(a: np.ndarray) -> float:
    b = a.copy()
    np.fill_diagonal(b, 0.0)
    return float(np.sqrt(np.sum(b * b)))


def jacobi_eigh(t: np.ndarray, vectors: bool = True, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigenvalues (ascending) and, optionally, orthonormal eigenvectors.

    Stops when the off-diagonal Frobenius mass drops below ``tol * ||t||_F``.
    """
    a = np.array(t, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need a square matrix")
    n = a.shape[0]
    a = (a + a.T) / 2
    # eigenvector rows: vt = V^T, updated by row operations only
    vt = np.eye(n) if vectors else None
    scale = float(np.linalg.norm(a))
    if n > 1 and scale > 0:
        rounds = _rounds(n)
        threshold = tol * scale
        for _ in range(max_sweeps):
            if _off_norm(a) < threshold:
                break
            for p, q in rounds:
                apq = a[p, q]
                app, aqq = a[p, p], a[q, q]
                live = np.abs(apq) > SKIP_TOL * np.sqrt(np.abs(app * aqq))
                if not live.any():
                    continue
                p, q, apq, app, aqq = p[live], q[live], apq[live], app[live], aqq[live]
                tau = (aqq - app) / (2 * apq)
                sgn = np.where(tau >= 0, 1.0, -1.0)
                tt = sgn / (np.abs(tau) + np.hypot(1.0, tau))
                c = (1 / np.hypot(1.0, tt))[:, None]
                s = tt[:, None] * c
                # symmetric a: J^T a J == J^T (J^T a)^T, two row passes
                for _pass in range(2):
                    rp, rq = a[p, :], a[q, :]
                    a[p, :] = c * rp - s * rq
                    a[q, :] = s * rp + c * rq
                    a = np.ascontiguousarray(a.T)
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - tt * apq
                a[q, q] = aqq + tt * apq
                if vt is not None:
                    vp, vq = vt[p, :], vt[q, :]
                    vt[p, :] = c * vp - s * vq
                    vt[q, :] = s * vp + c * vq
        else:
            if _off_norm(a) >= threshold:
                raise NotConverged(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    if vt is None:
        return w, None
    return w, vt[order, :].T.copy()

"""Diagonal-plus-rank-one eigenproblems: deflation, secular roots, eigenvector generators.

The problem is ``M = diag(d) + rho * z z^T`` with ``||z|| = 1``. Roots are
returned together with their distances to both neighbouring poles so that
``d_i - lam_j`` never has to be formed by subtracting two close numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = np.finfo(float).eps

# Rows of the K x K working matrices processed at once.
_CHUNK = 256


@dataclass(frozen=True)
class RankOneProblem:
    """``diag(d) + rho * z z^T``; ``z`` is normalized and rho rescaled to match."""

    d: np.ndarray
    z: np.ndarray
    rho: float

    def __post_init__(self):
        d = np.array(self.d, dtype=float).reshape(-1)
        z = np.array(self.z, dtype=float).reshape(-1)
        if d.shape != z.shape:
            raise ValueError("d and z must have the same length")
        rho = float(self.rho)
        nrm = float(np.linalg.norm(z))
        if nrm > 0:
            z = z / nrm
            rho = rho * nrm * nrm
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "rho", rho)

    @property
    def n(self) -> int:
        return self.d.size

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + self.rho * np.outer(self.z, self.z)


@dataclass
class DeflationOutcome:
    """Result of deflating a :class:`RankOneProblem`.

    ``perm[p]`` is the original index placed at position ``p``: the first
    ``kept`` positions carry the non-deflated problem in ascending ``dbar``
    order, the rest carry ``deflated_values``. ``rotations`` holds
    ``(i, j, c, s)`` plane rotations on original indices, applied in order
    before ``perm``.
    """

    kept: int
    perm: np.ndarray
    rotations: list
    dbar: np.ndarray
    zbar: np.ndarray
    deflated_values: np.ndarray
    rho: float
    tol: float

    @property
    def n(self) -> int:
        return self.perm.size


def deflation_tol(d: np.ndarray, rho: float) -> float:
    dmax = float(np.abs(d).max()) if np.size(d) else 0.0
    return 8.0 * EPS * max(dmax, abs(rho))


def apply_rotations(q: np.ndarray, rotations, axis: int = 1) -> np.ndarray:
    """Apply deflation rotations in place to the columns (or rows) of ``q``."""
    for i, j, c, s in rotations:
        if axis == 1:
            qi = q[:, i].copy()
            q[:, i] = c * qi + s * q[:, j]
            q[:, j] = c * q[:, j] - s * qi
        else:
            qi = q[i].copy()
            q[i] = c * qi + s * q[j]
            q[j] = c * q[j] - s * qi
    return q


def deflate(p: RankOneProblem, tol: float | None = None) -> DeflationOutcome:
    """Remove eigenpairs that the rank-one update leaves (numerically) unchanged.

    An entry deflates when ``|rho * z_i| <= tol``. Two neighbouring poles
    deflate when the rotation that zeroes one of their ``z`` entries makes an
    off-diagonal of size ``|(d_j - d_i) c s| <= tol``.
    """
    if tol is None:
        tol = deflation_tol(p.d, p.rho)
    if not tol > 0:
        raise ValueError("deflation tolerance must be positive")
    n = p.n
    order = np.argsort(p.d, kind="stable")
    ds = p.d[order].copy()
    zs = p.z[order].copy()
    rho = p.rho
    gone = np.abs(rho * zs) <= tol
    rotations = []
    prev = -1
    for j in range(n):
        if gone[j]:
            continue
        if prev < 0:
            prev = j
            continue
        s = zs[prev]
        c = zs[j]
        tau = np.hypot(c, s)
        c /= tau
        s = -s / tau
        if abs((ds[j] - ds[prev]) * c * s) <= tol:
            zs[j] = tau
            zs[prev] = 0.0
            rotations.append((int(order[prev]), int(order[j]), float(c), float(s)))
            dp = ds[prev] * c * c + ds[j] * s * s
            ds[j] = ds[prev] * s * s + ds[j] * c * c
            ds[prev] = dp
            gone[prev] = True
        prev = j
    keep = np.flatnonzero(~gone)
    drop = np.flatnonzero(gone)
    return DeflationOutcome(
        kept=keep.size,
        perm=order[np.concatenate([keep, drop])],
        rotations=rotations,
        dbar=ds[keep],
        zbar=zs[keep],
        deflated_values=ds[drop],
        rho=rho,
        tol=float(tol),
    )


@dataclass(frozen=True)
class SecularSolution:
    """Roots of ``1 + rho * sum z_k^2 / (d_k - lam) = 0`` for rho > 0.

    ``gamma[i] = lam[i] - d[i]`` and ``mu[i] = dnext[i] - lam[i]`` where
    ``dnext`` is ``d`` shifted left by one with ``upper = d[-1] + rho*||z||^2``
    appended.
    """

    d: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    rho: float
    upper: float
    iterations: int = 0

    @property
    def k(self) -> int:
        return self.d.size

    @property
    def dnext(self) -> np.ndarray:
        return np.append(self.d[1:], self.upper)


def stable_diff_block(d, dnext, gamma, mu, rows, cols) -> np.ndarray:
    """``d[rows] - lam[cols]`` through the gap representation."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    le = rows[:, None] <= cols[None, :]
    left = (d[rows][:, None] - d[cols][None, :]) - gamma[cols][None, :]
    right = (d[rows][:, None] - dnext[cols][None, :]) + mu[cols][None, :]
    return np.where(le, left, right)


def stable_diff(sol: SecularSolution, i: int, j: int) -> float:
    """``d_i - lam_j`` (0-based indices) without cancellation."""
    k = sol.k
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"indices ({i}, {j}) out of range for K={k}")
    if i <= j:
        return (sol.d[i] - sol.d[j]) - sol.gamma[j]
    return (sol.d[i] - sol.d[j + 1]) + sol.mu[j]


def secular_function(d, z, rho, lam) -> np.ndarray:
    """Evaluate ``1 + rho * sum z_k^2/(d_k - lam)`` naively (for tests)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return 1.0 + rho * ((np.asarray(z) ** 2)[None, :] / (np.asarray(d)[None, :] - lam[:, None])).sum(1)


def solve_secular(dbar, zbar, rho: float, maxiter: int = 100) -> SecularSolution:
    """Find all roots of the secular equation for ``rho > 0``.

    Each root is bracketed in its interlacing interval and located relative to
    its nearer pole with a two-pole rational model step (safeguarded by
    bisection). Problems with ``rho < 0`` are handled by the caller through
    negation ``M -> -M``.
    """
    d = np.asarray(dbar, dtype=float).reshape(-1)
    z = np.asarray(zbar, dtype=float).reshape(-1)
    rho = float(rho)
    if d.shape != z.shape:
        raise ValueError("dbar and zbar must have the same length")
    if d.size == 0:
        raise ValueError("empty secular problem")
    if not rho > 0:
        raise ValueError("solve_secular needs rho > 0; negate the problem for rho < 0")
    if np.any(np.diff(d) <= 0):
        raise ValueError("dbar must be strictly ascending (deflate first)")
    if np.any(z == 0):
        raise ValueError("zbar has zero entries (deflate first)")

    k = d.size
    z2 = z * z
    upper = d[-1] + rho * z2.sum()
    dnext = np.append(d[1:], upper)
    lam = np.empty(k)
    gamma = np.empty(k)
    mu = np.empty(k)
    iters = 0
    for start in range(0, k, _CHUNK):
        idx = np.arange(start, min(k, start + _CHUNK))
        iters = max(iters, _solve_chunk(d, dnext, z2, rho, idx, maxiter, lam, gamma, mu))
    return SecularSolution(d.copy(), lam, gamma, mu, rho, float(upper), iters)


def _solve_chunk(d, dnext, z2, rho, idx, maxiter, lam, gamma, mu) -> int:
    k = d.size
    rhoinv = 1.0 / rho
    width = dnext[idx] - d[idx]
    last = idx == k - 1

    # Pick the nearer pole as origin from the sign of f at the midpoint.
    mid = d[idx] + 0.5 * width
    fmid = rhoinv + (z2[None, :] / (d[None, :] - mid[:, None])).sum(1)
    from_left = (fmid >= 0) | last
    origin = np.where(from_left, idx, idx + 1)
    lo = np.where(from_left, 0.0, -0.5 * width)
    hi = np.where(from_left, np.where(last, width, 0.5 * width), 0.0)
    tau = 0.5 * (lo + hi)

    delta = d[None, :] - d[origin][:, None]
    dl = np.where(from_left, 0.0, -width)  # left pole minus origin
    dr = np.where(from_left, width, 0.0)  # right pole minus origin
    left_mask = np.arange(k)[None, :] <= idx[:, None]

    active = np.ones(idx.size, dtype=bool)
    it = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        while it < maxiter and active.any():
            it += 1
            a_ = np.flatnonzero(active)
            t = tau[a_]
            diff = delta[a_] - t[:, None]
            terms = z2[None, :] / diff
            lm = left_mask[a_]
            psi = np.where(lm, terms, 0.0).sum(1)
            phi = np.where(lm, 0.0, terms).sum(1)
            dterms = terms / diff
            dpsi = np.where(lm, dterms, 0.0).sum(1)
            dphi = np.where(lm, 0.0, dterms).sum(1)
            w = rhoinv + psi + phi
            dw = dpsi + dphi
            erretm = 8.0 * (phi - psi) + 2.0 * rhoinv + np.abs(t) * dw

            lo_a, hi_a = lo[a_], hi[a_]
            lo_a = np.where(w < 0, t, lo_a)
            hi_a = np.where(w > 0, t, hi_a)
            lo[a_], hi[a_] = lo_a, hi_a

            done = (np.abs(w) <= EPS * erretm) | (hi_a - lo_a <= 2 * EPS * np.maximum(np.abs(lo_a), np.abs(hi_a)))

            del_l = dl[a_] - t
            del_r = dr[a_] - t
            c = w - del_l * dpsi - del_r * dphi
            a = (del_l + del_r) * w - del_l * del_r * dw
            b = del_l * del_r * w
            disc = np.sqrt(np.abs(a * a - 4.0 * b * c))
            eta = np.where(
                c == 0,
                b / a,
                np.where(a <= 0, (a - disc) / (2.0 * c), 2.0 * b / (a + disc)),
            )
            # Last root: no pole on the right, one-pole model.
            cl = w - del_l * dpsi
            eta_last = del_l + del_l * del_l * dpsi / cl
            eta = np.where(last[a_], np.where(cl > 0, eta_last, np.nan), eta)
            newton = -w / dw
            bad = ~np.isfinite(eta) | (w * eta >= 0)
            eta = np.where(bad, newton, eta)
            tn = t + eta
            outside = ~np.isfinite(tn) | (tn <= lo_a) | (tn > hi_a) | ((tn == hi_a) & ~last[a_])
            tn = np.where(outside, 0.5 * (lo_a + hi_a), tn)
            done |= np.abs(eta) <= EPS * np.abs(t)
            tau[a_] = np.where(done, t, tn)
            active[a_[done]] = False

    lam[idx] = d[origin] + tau
    gamma[idx] = np.where(from_left, tau, width + tau)
    mu[idx] = np.where(from_left, width - tau, -tau)
    return it


@dataclass(frozen=True)
class QhatGenerators:
    """Five-vector representation of the eigenvector matrix of ``diag(d) + rho z z^T``.

    Entry ``(i, j)`` is ``u_i v_j / (d_i - lam_j)`` with the difference taken
    from :func:`stable_diff_block`.
    """

    d: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    v: np.ndarray
    upper: float
    lam: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.lam is None:
            object.__setattr__(self, "lam", self.d + self.gamma)

    @property
    def k(self) -> int:
        return self.d.size

    @property
    def dnext(self) -> np.ndarray:
        return np.append(self.d[1:], self.upper)

    def diff(self, rows, cols) -> np.ndarray:
        return stable_diff_block(self.d, self.dnext, self.gamma, self.mu, rows, cols)

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return self.u[rows][:, None] * self.v[cols][None, :] / self.diff(rows, cols)

    def dense(self) -> np.ndarray:
        r = np.arange(self.k)
        return self.block(r, r)

    def as_cauchy(self):
        from .cauchy import CauchyLike, GapNodes

        nodes = GapNodes(self.d, self.gamma, self.mu, self.upper)
        r = np.arange(self.k)
        return CauchyLike(self.u, self.v, self.d, self.lam, row_ids=r, col_ids=r, gap=nodes)


def qhat_generators(sol: SecularSolution, zbar) -> QhatGenerators:
    """Generators of the eigenvector matrix.

    The ``u`` generator is recomputed from the computed roots (Loewner
    formula) with the signs of ``zbar``; the computed roots are then exact
    eigenvalues of ``diag(d) + rho u u^T``, which keeps the columns
    numerically orthogonal.
    """
    zbar = np.asarray(zbar, dtype=float)
    d, k, rho = sol.d, sol.k, sol.rho
    dnext = sol.dnext
    cols = np.arange(k)
    logs = np.empty(k)
    for start in range(0, k, _CHUNK):
        rows = np.arange(start, min(k, start + _CHUNK))
        lam_minus_d = -stable_diff_block(d, dnext, sol.gamma, sol.mu, rows, cols)
        # Pair root j with pole j (j < i) or pole j+1 (j >= i); the last root with rho.
        den = np.where(
            cols[None, :] < rows[:, None],
            d[cols][None, :] - d[rows][:, None],
            dnext[cols][None, :] - d[rows][:, None],
        )
        den[:, -1] = rho
        logs[rows] = np.log(lam_minus_d / den).sum(1)
    u = np.copysign(np.sqrt(np.exp(logs)), zbar)

    colsum = np.zeros(k)
    for start in range(0, k, _CHUNK):
        rows = np.arange(start, min(k, start + _CHUNK))
        dif = stable_diff_block(d, dnext, sol.gamma, sol.mu, rows, cols)
        colsum += ((u[rows][:, None] / dif) ** 2).sum(0)
    v = 1.0 / np.sqrt(colsum)
    return QhatGenerators(d.copy(), sol.gamma.copy(), sol.mu.copy(), u, v, sol.upper, sol.lam.copy())

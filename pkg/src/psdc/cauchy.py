"""Cauchy-like matrices and their structured rank-revealing Schur-complement compression.

A Cauchy-like matrix has entries ``u_i v_j / (d_i - w_j)``. Its Schur
complements stay Cauchy-like, so a pivoted partial elimination can be run on
the four generator vectors alone, in O(m + n) storage, giving

    A P ~= A[:, T] @ [I  Z]

where ``T`` are the first ``k`` pivot columns and ``Z`` is again Cauchy-like.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Shortlist size per side for pivot search.
PIVOT_SHORTLIST = 8
_ROOK_ROUNDS = 3


@dataclass(frozen=True)
class GapNodes:
    """Poles ``d`` and roots ``lam`` stored through the gaps ``gamma``, ``mu``.

    Used by eigenvector matrices of rank-one updates, where root ``j`` lies in
    ``(d_j, d_{j+1})`` and all node differences can be formed without
    cancellation.
    """

    d: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    upper: float
    dnext: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dnext", np.append(self.d[1:], self.upper))

    def rc(self, i, j):
        """``d_i - lam_j``."""
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        left = (self.d[i] - self.d[j]) - self.gamma[j]
        right = (self.d[i] - self.dnext[j]) + self.mu[j]
        return np.where(i <= j, left, right)

    def rr(self, i, j):
        return self.d[np.asarray(i)] - self.d[np.asarray(j)]

    def cc(self, i, j):
        """``lam_i - lam_j`` as a sum of same-signed terms."""
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        hi = np.maximum(i, j)
        lo = np.minimum(i, j)
        gap = (self.d[hi] - self.dnext[lo]) + self.gamma[hi] + self.mu[lo]
        return np.where(i == j, 0.0, np.where(i > j, gap, -gap))


class CauchyLike:
    """Cauchy-like matrix held as generators.

    In ``gap`` mode ``row_ids``/``col_ids`` map local rows and columns to
    positions in a shared :class:`GapNodes`; node differences then come from
    the gap formulas instead of raw subtraction.
    """

    def __init__(self, u, v, d, w, row_ids=None, col_ids=None, gap: GapNodes | None = None):
        self.u = np.asarray(u, dtype=float).reshape(-1)
        self.v = np.asarray(v, dtype=float).reshape(-1)
        self.d = np.asarray(d, dtype=float).reshape(-1)
        self.w = np.asarray(w, dtype=float).reshape(-1)
        if self.u.size != self.d.size or self.v.size != self.w.size:
            raise ValueError("generator lengths disagree")
        self.gap = gap
        if gap is not None:
            self.row_ids = np.arange(self.u.size) if row_ids is None else np.asarray(row_ids)
            self.col_ids = np.arange(self.v.size) if col_ids is None else np.asarray(col_ids)
        else:
            self.row_ids = self.col_ids = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.size, self.v.size

    @property
    def diff_mode(self) -> str:
        return "naive" if self.gap is None else "gap"

    # Node differences; i, j are local indices (scalars or arrays).
    def rc(self, i, j):
        if self.gap is None:
            return self.d[i] - self.w[j]
        return self.gap.rc(self.row_ids[i], self.col_ids[j])

    def rr(self, i, j):
        if self.gap is None:
            return self.d[i] - self.d[j]
        return self.gap.rr(self.row_ids[i], self.row_ids[j])

    def cc(self, i, j):
        if self.gap is None:
            return self.w[i] - self.w[j]
        return self.gap.cc(self.col_ids[i], self.col_ids[j])

    def entry(self, i: int, j: int) -> float:
        m, n = self.shape
        if not (0 <= i < m and 0 <= j < n):
            raise IndexError(f"entry ({i}, {j}) outside {m}x{n}")
        den = self.rc(i, j)
        if den == 0:
            raise ZeroDivisionError(f"pole at entry ({i}, {j})")
        return float(self.u[i] * self.v[j] / den)

    def block(self, rows=None, cols=None) -> np.ndarray:
        rows = np.arange(self.shape[0]) if rows is None else np.asarray(rows)
        cols = np.arange(self.shape[1]) if cols is None else np.asarray(cols)
        den = self.rc(rows[:, None], cols[None, :])
        if self.gap is None and np.any(den == 0):
            raise ZeroDivisionError("Cauchy-like block contains a pole")
        return self.u[rows][:, None] * self.v[cols][None, :] / den

    def dense(self) -> np.ndarray:
        return self.block()

    def submatrix(self, rows, cols) -> CauchyLike:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        if self.gap is None:
            return CauchyLike(self.u[rows], self.v[cols], self.d[rows], self.w[cols])
        return CauchyLike(
            self.u[rows], self.v[cols], self.d[rows], self.w[cols],
            row_ids=self.row_ids[rows], col_ids=self.col_ids[cols], gap=self.gap,
        )


def example0(n: int, seed: int | None = 0, a: float = 1.0, b: float = 9.0, rng=None) -> CauchyLike:
    """Rank-structured test matrix with interlaced nodes and random u, v.

    ``d_i = i (b - a) / n`` and ``w_j = d_j + (b - a) / (2 n)`` for i, j = 1..n;
    u and v are uniform on [0, 1).
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    i = np.arange(1, n + 1, dtype=float)
    d = i * (b - a) / n
    w = d + (b - a) / (2 * n)
    u = rng.random(n)
    v = rng.random(n)
    return CauchyLike(u, v, d, w)


@dataclass
class SchurState:
    """Generators of the k-th Schur complement, in pivoted order.

    ``rows``/``cols`` are the row/column permutations (local indices by
    position). ``u[k:]``, ``v[k:]`` generate the trailing complement and
    ``y[:k]`` generates the ``Z`` block.
    """

    rows: np.ndarray
    cols: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    k: int = 0
    pivot: float = 0.0

    @classmethod
    def start(cls, c: CauchyLike) -> SchurState:
        m, n = c.shape
        return cls(np.arange(m), np.arange(n), c.u.copy(), c.v.copy(), np.zeros(min(m, n)))

    def complement(self, c: CauchyLike) -> np.ndarray:
        """Dense trailing Schur complement evaluated from the generators (tests)."""
        k = self.k
        r, q = self.rows[k:], self.cols[k:]
        return self.u[k:, None] * self.v[None, k:] / c.rc(r[:, None], q[None, :])

    def nbytes(self) -> int:
        return self.rows.nbytes + self.cols.nbytes + self.u.nbytes + self.v.nbytes + self.y.nbytes


def _best_col(s: SchurState, c: CauchyLike, pos_rows):
    k = s.k
    den = c.rc(s.rows[pos_rows][:, None], s.cols[None, k:])
    vals = np.abs(s.u[pos_rows])[:, None] * np.abs(s.v[k:])[None, :] / np.abs(den)
    j = np.argmax(vals, axis=1)
    return j + k, vals[np.arange(len(pos_rows)), j]


def _best_row(s: SchurState, c: CauchyLike, pos_cols):
    k = s.k
    den = c.rc(s.rows[None, k:], s.cols[pos_cols][:, None])
    vals = np.abs(s.v[pos_cols])[:, None] * np.abs(s.u[k:])[None, :] / np.abs(den)
    i = np.argmax(vals, axis=1)
    return i + k, vals[np.arange(len(pos_cols)), i]


def _nearest(s: SchurState, c: CauchyLike):
    """Pair every remaining row with its nearest remaining column nodes, and vice versa.

    Catches entries that are large because the nodes nearly collide, which
    the ``|u|``/``|v|`` shortlist misses. Returns candidate (row, col) positions.
    """
    k = s.k
    rpos = np.arange(k, s.rows.size)
    cpos = np.arange(k, s.cols.size)
    dr = c.d[s.rows[k:]]
    wc = c.w[s.cols[k:]]
    cand_r, cand_c = [], []
    for a, b, src, dst in ((dr, wc, rpos, cpos), (wc, dr, cpos, rpos)):
        order = np.argsort(b, kind="stable")
        at = np.searchsorted(b[order], a)
        for off in (-1, 0):
            nb = order[np.clip(at + off, 0, b.size - 1)]
            cand_r.append(src if src is rpos else dst[nb])
            cand_c.append(dst[nb] if src is rpos else src)
    return np.concatenate(cand_r), np.concatenate(cand_c)


def _top(x: np.ndarray, count: int) -> np.ndarray:
    if x.size <= count:
        return np.arange(x.size)
    return np.argpartition(-x, count - 1)[:count]


def pivot_select(s: SchurState, c: CauchyLike) -> tuple[int, int]:
    """Choose a large entry of the current Schur complement and swap it to the front.

    Shortlists the largest ``|u|`` rows and ``|v|`` columns, pairs each with
    its exact best partner, then refines with a few rook-pivoting rounds.
    Cost is O(m + n). Returns the (local) row and column chosen.
    """
    k = s.k
    m, n = c.shape
    if k >= min(m, n):
        raise ValueError("no rows/columns left to pivot on")
    with np.errstate(divide="ignore", invalid="ignore"):
        tr = _top(np.abs(s.u[k:]), PIVOT_SHORTLIST) + k
        tc = _top(np.abs(s.v[k:]), PIVOT_SHORTLIST) + k
        bc, _ = _best_col(s, c, tr)
        br, _ = _best_row(s, c, tc)
        nr, nc = _nearest(s, c)
        cand_r = np.concatenate([np.repeat(tr, tc.size), tr, br, nr])
        cand_c = np.concatenate([np.tile(tc, tr.size), bc, tc, nc])
        den = c.rc(s.rows[cand_r], s.cols[cand_c])
        if np.any(den == 0):
            raise ZeroDivisionError("coincident row and column nodes")
        mags = np.abs(s.u[cand_r] * s.v[cand_c] / den)
        best = int(np.argmax(mags))
        pi, pj, mag = int(cand_r[best]), int(cand_c[best]), float(mags[best])
        for _ in range(_ROOK_ROUNDS):
            (j2,), (m2,) = _best_col(s, c, np.array([pi]))
            if m2 > mag:
                pj, mag = int(j2), float(m2)
            (i2,), (m3,) = _best_row(s, c, np.array([pj]))
            if m3 > mag:
                pi, mag = int(i2), float(m3)
            else:
                break
    if not np.isfinite(mag):
        raise ZeroDivisionError("coincident row and column nodes")
    for arr in (s.rows, s.u):
        arr[[k, pi]] = arr[[pi, k]]
    for arr in (s.cols, s.v):
        arr[[k, pj]] = arr[[pj, k]]
    s.pivot = mag
    return int(s.rows[k]), int(s.cols[k])


def schur_step(s: SchurState, c: CauchyLike) -> SchurState:
    """Eliminate the pivot at position ``k`` and update all generators in place."""
    k = s.k
    m, n = c.shape
    if k >= min(m, n):
        raise ValueError("Schur factorization already complete")
    r, q = s.rows[k], s.cols[k]
    tail_r, tail_c, head_c = s.rows[k + 1:], s.cols[k + 1:], s.cols[:k]
    piv_den = c.rc(r, q)
    den_u = c.rc(tail_r, q)
    den_v = c.rc(r, tail_c)
    den_y = c.cc(q, head_c)
    if piv_den == 0 or np.any(den_u == 0) or np.any(den_v == 0) or np.any(den_y == 0):
        raise ZeroDivisionError(f"coincident nodes at Schur step {k}")
    s.u[k + 1:] *= c.rr(tail_r, r) / den_u
    s.v[k + 1:] *= -c.cc(tail_c, q) / den_v
    s.y[:k] *= c.rc(r, head_c) / den_y
    s.y[k] = piv_den / s.v[k]
    s.k = k + 1
    return s


@dataclass
class LowRankFactor:
    """``A[:, col_perm] ~= A[:, cols] @ [I  Z]`` with ``Z`` held as generators."""

    rank: int
    cols: np.ndarray
    col_perm: np.ndarray
    row_perm: np.ndarray
    y: np.ndarray
    v_tail: np.ndarray
    truncated: bool
    pivots: np.ndarray
    flops: int
    source: CauchyLike = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.source.shape

    def z_block(self) -> np.ndarray:
        """``Z_ij = y_i v_{k+j} / (w_i - w_{k+j})`` in pivoted column order."""
        k = self.rank
        head = self.col_perm[:k]
        tail = self.col_perm[k:]
        return self.y[:, None] * self.v_tail[None, :] / self.source.cc(head[:, None], tail[None, :])

    def left_block(self) -> np.ndarray:
        return self.source.block(None, self.cols)

    def to_dense(self) -> np.ndarray:
        m, n = self.shape
        out = np.empty((m, n))
        left = self.left_block()
        out[:, self.cols] = left
        out[:, self.col_perm[self.rank:]] = left @ self.z_block()
        return out


def default_max_rank(m: int, n: int) -> int:
    return int(min(m, n, 0.4 * min(m, n) + 64))


def srrsc_compress(c: CauchyLike, tol: float = 1e-12, max_rank: int | None = None) -> LowRankFactor:
    """Pivoted generator-only Schur factorization of a Cauchy-like matrix.

    Stops once the pivot magnitude drops to ``tol`` times the first pivot, or
    after ``max_rank`` steps (the factor is then flagged ``truncated``).
    ``tol = 0`` runs to full rank.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    m, n = c.shape
    full = min(m, n)
    if max_rank is None:
        max_rank = default_max_rank(m, n)
    s = SchurState.start(c)
    first = None
    truncated = False
    pivots = []
    while s.k < full:
        pivot_select(s, c)
        if first is None:
            first = s.pivot
        if s.pivot == 0.0 or s.pivot <= tol * first:
            break
        if s.k >= max_rank:
            truncated = True
            break
        pivots.append(s.pivot)
        schur_step(s, c)
    k = s.k
    # Pivot search ~ 2*8 candidate lines, generator updates ~ 6 flops per entry.
    flops = sum(2 * PIVOT_SHORTLIST * 4 * ((m - j) + (n - j)) + 6 * ((m - j) + (n - j)) + 4 * j for j in range(k + 1))
    return LowRankFactor(
        rank=k,
        cols=s.cols[:k].copy(),
        col_perm=s.cols.copy(),
        row_perm=s.rows.copy(),
        y=s.y[:k].copy(),
        v_tail=s.v[k:].copy(),
        truncated=truncated,
        pivots=np.array(pivots),
        flops=int(flops),
        source=c,
    )


def factor_flops(f: LowRankFactor, m_a: int) -> int:
    """Flops of ``apply_factor`` for an ``m_a``-row panel, including generator evaluation."""
    m, n = f.shape
    k = f.rank
    return 2 * m_a * m * k + 2 * m_a * k * (n - k) + 4 * m * k + 5 * k * (n - k)


def apply_factor(a_panel: np.ndarray, f: LowRankFactor) -> np.ndarray:
    """``a_panel @ A`` through the factored form ``(a_panel @ A[:, T]) @ [I Z] P^T``."""
    a_panel = np.asarray(a_panel, dtype=float)
    m, n = f.shape
    if a_panel.ndim != 2 or a_panel.shape[1] != m:
        raise ValueError(f"panel with {a_panel.shape} columns cannot multiply a {m}x{n} matrix")
    out = np.empty((a_panel.shape[0], n))
    if f.rank == 0:
        out[:] = 0.0
        return out
    x = a_panel @ f.left_block()
    out[:, f.cols] = x
    if f.rank < n:
        out[:, f.col_perm[f.rank:]] = x @ f.z_block()
    return out

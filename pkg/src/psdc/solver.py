"""Divide-and-conquer eigensolver for symmetric tridiagonal matrices.

Each internal node tears ``T`` into two halves plus a rank-one term, solves
the halves recursively, deflates, solves the secular equation and updates the
eigenvectors. Small updates use two dense products after regrouping columns
by their nonzero pattern; updates with at least ``k_threshold`` surviving
columns go through the structured distributed multiply, where the eigenvector
matrix of the rank-one problem is never formed densely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridsim import BlockCyclicLayout, DistMatrix, Grid, GridStats
from .matrices import EigenDecomposition, TridiagonalMatrix, dense_eig_oracle
from .psmma import PsmmaVariant, psmma_multiply
from .secular import (
    DeflationOutcome,
    QhatGenerators,
    RankOneProblem,
    SecularSolution,
    apply_rotations,
    deflate,
    qhat_generators,
    solve_secular,
)

PATHS = ("gu_dense", "psmma_structured")


@dataclass(frozen=True)
class PsdcConfig:
    """Solver settings.

    ``k_threshold`` may be an int, ``math.inf`` (never use the structured
    path) or ``None`` for ``max(512, n // 4)``.
    """

    base_size: int = 64
    k_threshold: float | int | None = None
    variant: PsmmaVariant = field(default_factory=lambda: PsmmaVariant("wredist", nb=64, tol=1e-14))
    grid: tuple[int, int] = (1, 1)
    schedule: str = "sequential"

    def __post_init__(self):
        if self.base_size < 1:
            raise ValueError("base_size must be >= 1")
        if self.k_threshold is not None and not self.k_threshold >= 1:
            raise ValueError("k_threshold must be >= 1")
        p, q = self.grid
        if p < 1 or q < 1:
            raise ValueError("grid dimensions must be positive")

    def threshold(self, n: int) -> float:
        if self.k_threshold is None:
            return default_threshold(n)
        return self.k_threshold


@dataclass
class MergeRecord:
    """What happened at one internal node of the recursion."""

    split: int
    weight: float
    size: int
    depth: int
    deflation: DeflationOutcome | None
    secular: SecularSolution | None
    path: str
    rank_sum: int = 0
    flops: int = 0
    stats: GridStats | None = field(default=None, repr=False)

    @property
    def kept(self) -> int:
        return 0 if self.deflation is None else self.deflation.kept

    def summary(self) -> dict:
        return {
            "depth": self.depth,
            "size": self.size,
            "kept": self.kept,
            "path": self.path,
            "rank_sum": self.rank_sum,
            "flops": self.flops,
            "bytes": 0 if self.stats is None else self.stats.total_bytes,
        }


def default_threshold(n: int) -> int:
    return max(512, n // 4)


def split(t: TridiagonalMatrix) -> tuple[TridiagonalMatrix, TridiagonalMatrix, int, float]:
    """Tear ``t`` into ``T1 (+) T2 + b v v^T`` with ``v = e_k + e_{k+1}`` and ``k = n // 2``."""
    n = t.n
    if n < 2:
        raise ValueError("split needs n >= 2")
    k = n // 2
    b = float(t.offdiag[k - 1])
    d1 = t.diag[:k].copy()
    d2 = t.diag[k:].copy()
    d1[-1] -= b
    d2[0] -= b
    return TridiagonalMatrix(d1, t.offdiag[:k - 1]), TridiagonalMatrix(d2, t.offdiag[k:]), k, b


def form_u(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """``blockdiag(Q1, Q2)^T (e_k + e_{k+1})``: last row of Q1 then first row of Q2."""
    return np.concatenate([q1[-1], q2[0]])


def _column_types(defl: DeflationOutcome, n1: int) -> np.ndarray:
    """1 = nonzero only in the top half, 3 = bottom only, 2 = both (after rotations)."""
    kind = np.where(np.arange(defl.n) < n1, 1, 3)
    for i, j, _, _ in defl.rotations:
        if kind[i] != kind[j]:
            kind[i] = kind[j] = 2
    return kind[defl.perm]


def rotated_basis(q1: np.ndarray, q2: np.ndarray, defl: DeflationOutcome) -> np.ndarray:
    """``blockdiag(Q1, Q2) G P``: rotations, then the deflation permutation."""
    n1, n2 = q1.shape[0], q2.shape[0]
    w = np.zeros((n1 + n2, n1 + n2))
    w[:n1, :n1] = q1
    w[n1:, n1:] = q2
    apply_rotations(w, defl.rotations, axis=1)
    return w[:, defl.perm]


def update_eigvecs_gu(q1: np.ndarray, q2: np.ndarray, defl: DeflationOutcome, qhat: np.ndarray | None) -> tuple[np.ndarray, int]:
    """Eigenvectors of the merged problem through two dense products.

    Surviving columns are grouped as top-only, mixed and bottom-only; the top
    rows multiply only the first two groups and the bottom rows only the last
    two. Deflated columns are copied. Returns the matrix and its flop count.
    """
    n1 = q1.shape[0]
    k = defl.kept
    w = rotated_basis(q1, q2, defl)
    out = np.empty_like(w)
    out[:, k:] = w[:, k:]
    if k == 0:
        return out, 0
    kind = _column_types(defl, n1)[:k]
    top = np.flatnonzero(kind <= 2)
    bot = np.flatnonzero(kind >= 2)
    out[:n1, :k] = w[:n1, top] @ qhat[top]
    out[n1:, :k] = w[n1:, bot] @ qhat[bot]
    n2 = w.shape[0] - n1
    return out, 2 * k * (n1 * top.size + n2 * bot.size)


def update_eigvecs_psmma(q1: np.ndarray, q2: np.ndarray, defl: DeflationOutcome, qg: QhatGenerators, cfg: PsdcConfig, grid: Grid) -> tuple[DistMatrix, GridStats, int]:
    """Eigenvectors of the merged problem through the structured multiply.

    Surviving columns of ``blockdiag(Q1, Q2) G P`` keep their ascending-pole
    order (no regrouping), so the generator matrix keeps its off-diagonal low
    rank. Returns the full ``n x n`` result distributed like the input, the
    multiply's stats and the summed compression rank.
    """
    w = rotated_basis(q1, q2, defl)
    n, k = w.shape[0], defl.kept
    lay = cfg.variant.input_layout(n, k, grid.p, grid.q)
    a = DistMatrix.from_global(w[:, :k], lay)
    c, stats = psmma_multiply(a, qg.as_cauchy(), cfg.variant, grid)
    full = np.hstack([c.to_global(), w[:, k:]])
    out_lay = BlockCyclicLayout(n, n, c.layout.mb, c.layout.nb, grid.p, grid.q)
    return DistMatrix.from_global(full, out_lay), stats, int(stats.counters.get("rank_sum", 0))


def _merge(q1, lam1, q2, lam2, k, b, cfg, grid, depth, records):
    n = q1.shape[0] + q2.shape[0]
    d = np.concatenate([lam1, lam2])
    u = form_u(q1, q2)
    sign = -1.0 if b < 0 else 1.0
    if b == 0.0 or not np.any(u):
        w = np.zeros((n, n))
        w[:k, :k] = q1
        w[k:, k:] = q2
        records.append(MergeRecord(k, b, n, depth, None, None, "gu_dense"))
        return d, w
    prob = RankOneProblem(sign * d, u, sign * b)
    defl = deflate(prob)
    sol = None
    rec = MergeRecord(k, b, n, depth, defl, None, "gu_dense")
    if defl.kept:
        sol = solve_secular(defl.dbar, defl.zbar, defl.rho)
        rec.secular = sol
        qg = qhat_generators(sol, defl.zbar)
        if defl.kept >= cfg.threshold(n):
            rec.path = "psmma_structured"
            dm, stats, rec.rank_sum = update_eigvecs_psmma(q1, q2, defl, qg, cfg, grid)
            rec.stats = stats
            rec.flops = stats.total_flops
            vecs = dm.to_global()
        else:
            vecs, rec.flops = update_eigvecs_gu(q1, q2, defl, qg.dense())
        lam = np.concatenate([qg.lam, defl.deflated_values])
    else:
        vecs, _ = update_eigvecs_gu(q1, q2, defl, None)
        lam = defl.deflated_values.copy()
    records.append(rec)
    return sign * lam, vecs


def _solve(t: TridiagonalMatrix, cfg: PsdcConfig, grid: Grid, depth: int, records: list):
    if t.n <= cfg.base_size:
        e = dense_eig_oracle(t, max_n=max(t.n, 1))
        return e.values, e.vectors
    t1, t2, k, b = split(t)
    lam1, q1 = _sorted(*_solve(t1, cfg, grid, depth + 1, records))
    lam2, q2 = _sorted(*_solve(t2, cfg, grid, depth + 1, records))
    return _merge(q1, lam1, q2, lam2, k, b, cfg, grid, depth, records)


def _sorted(lam, q):
    order = np.argsort(lam, kind="stable")
    return lam[order], q[:, order]


def psdc_solve(t: TridiagonalMatrix, cfg: PsdcConfig | None = None) -> tuple[EigenDecomposition, list[MergeRecord]]:
    """Full eigendecomposition of ``t``; eigenvalues ascending.

    Returns the decomposition and one :class:`MergeRecord` per internal node
    in post-order.
    """
    cfg = PsdcConfig() if cfg is None else cfg
    grid = Grid(*cfg.grid, schedule=cfg.schedule)
    records: list[MergeRecord] = []
    lam, q = _sorted(*_solve(t, cfg, grid, 0, records))
    return EigenDecomposition(lam, q), records


def total_stats(records: list[MergeRecord], nranks: int) -> GridStats:
    out = GridStats(nranks)
    for r in records:
        if r.stats is not None:
            out.merge(r.stats)
    return out


def flops_by_path(records: list[MergeRecord]) -> dict:
    out = {p: 0 for p in PATHS}
    for r in records:
        out[r.path] += r.flops
    return out

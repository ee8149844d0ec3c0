"""Structured distributed multiply ``C = A @ B`` with ``B`` Cauchy-like.

Every rank holds a copy of the generators of ``B``. Local tiles of ``A``
travel left around each process row; at each step a rank builds the block of
``B`` matching the ``A`` columns it currently holds and its own ``C`` columns,
optionally compresses it, and accumulates the product. ``B`` itself is never
sent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cauchy import CauchyLike, apply_factor, factor_flops, srrsc_compress
from .gridsim import BlockCyclicLayout, DistMatrix, Grid, GridStats, redistribute

VARIANTS = ("bcdd", "bdd", "wredist", "nlowrank")

# Flops charged per entry when a block of B is evaluated from generators.
GENERATOR_FLOPS = 4


@dataclass(frozen=True)
class PsmmaVariant:
    """Which layout and compression policy a multiply uses.

    ``bcdd`` works on the block-cyclic input as is, ``bdd`` requires a plain
    block layout, ``wredist`` moves ``A`` to a block layout and moves ``C``
    back, ``nlowrank`` never compresses.
    """

    kind: str = "wredist"
    nb: int = 64
    tol: float = 1e-12
    max_rank: int | None = None
    aspect: float = 4.0

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.kind!r}")
        if self.nb < 1:
            raise ValueError("nb must be positive")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")

    @property
    def compresses(self) -> bool:
        return self.kind != "nlowrank"

    def input_layout(self, m: int, n: int, p: int, q: int) -> BlockCyclicLayout:
        """Layout the caller should hand ``A`` over in."""
        if self.kind == "bdd":
            return BlockCyclicLayout.bdd(m, n, p, q)
        return BlockCyclicLayout.bcdd(m, n, self.nb, p, q)


@dataclass(frozen=True)
class IndexWindow:
    """Row and column indices of the ``B`` block needed at one shift step."""

    rindex: np.ndarray
    cindex: np.ndarray
    step: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.rindex.size, self.cindex.size


def lowrank_decision(win: IndexWindow) -> bool:
    """Compress iff the row and column index sets are disjoint."""
    return np.intersect1d(win.rindex, win.cindex, assume_unique=True).size == 0


def should_compress(win: IndexWindow, variant: PsmmaVariant) -> bool:
    if not variant.compresses or 0 in win.shape:
        return False
    if lowrank_decision(win):
        return True
    if variant.kind == "bcdd":
        r, c = win.shape
        return max(r, c) >= variant.aspect * min(r, c)
    return False


def _output_layout(a_lay: BlockCyclicLayout, n: int) -> BlockCyclicLayout:
    nb = max(1, math.ceil(n / a_lay.q)) if a_lay.is_bdd else a_lay.nb
    return BlockCyclicLayout(a_lay.m, n, a_lay.mb, nb, a_lay.p, a_lay.q)


def _local_multiply(ctx, a_tile, b: CauchyLike, win: IndexWindow, variant: PsmmaVariant) -> np.ndarray:
    sub = b.submatrix(win.rindex, win.cindex)
    m_a = a_tile.shape[0]
    r, c = win.shape
    if should_compress(win, variant):
        f = srrsc_compress(sub, tol=variant.tol, max_rank=variant.max_rank)
        ctx.add_flops(f.flops, "compress")
        if not f.truncated:
            ctx.count("compressed_blocks")
            ctx.count("rank_sum", f.rank)
            ctx.add_flops(factor_flops(f, m_a), "multiply")
            return apply_factor(a_tile, f)
        ctx.count("truncated_blocks")
    ctx.count("dense_blocks")
    ctx.add_flops(GENERATOR_FLOPS * r * c + 2 * m_a * r * c, "multiply")
    return a_tile @ sub.dense()


def _cyclic_multiply(grid: Grid, a: DistMatrix, b: CauchyLike, variant: PsmmaVariant) -> tuple[DistMatrix, GridStats]:
    a_lay = a.layout
    c_lay = _output_layout(a_lay, b.shape[1])
    q = grid.q

    def program(ctx):
        j = ctx.col
        cindex = c_lay.col_indices(j)
        tile = a.tiles[ctx.rank]
        out = np.zeros((tile.shape[0], cindex.size))
        left = ctx.rank_at(ctx.row, j - 1)
        right = ctx.rank_at(ctx.row, j + 1)
        for step in range(q):
            win = IndexWindow(a_lay.col_indices((j + step) % q), cindex, step)
            if tile.size and cindex.size:
                out += _local_multiply(ctx, tile, b, win, variant)
            if step < q - 1:
                ctx.send(left, tile, "A")
                tile = ctx.recv(right, "A")
        return out

    tiles, stats = grid.run(program)
    return DistMatrix(c_lay, tiles), stats


def psmma_multiply(a: DistMatrix, b: CauchyLike, variant: PsmmaVariant, grid: Grid) -> tuple[DistMatrix, GridStats]:
    """Return ``A @ B`` distributed like ``A``, and the stats of this call."""
    a_lay = a.layout
    if a_lay.n != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a_lay.n} vs {b.shape[0]}")
    if (a_lay.p, a_lay.q) != (grid.p, grid.q):
        raise ValueError("layout grid differs from the executing grid")
    if variant.kind == "bdd" and not a_lay.is_bdd:
        raise ValueError("bdd variant needs A in a block (one tile per process) layout")
    if variant.kind != "wredist" or a_lay.is_bdd:
        return _cyclic_multiply(grid, a, b, variant)

    stats = GridStats(grid.nprocs)
    block = BlockCyclicLayout.bdd(a_lay.m, a_lay.n, grid.p, grid.q)
    a_bdd, s1 = redistribute(grid, a, block, tag="redist")
    c_bdd, s2 = _cyclic_multiply(grid, a_bdd, b, variant)
    c_lay = BlockCyclicLayout(a_lay.m, b.shape[1], a_lay.mb, a_lay.nb, grid.p, grid.q)
    c, s3 = redistribute(grid, c_bdd, c_lay, tag="redist")
    return c, stats.merge(s1).merge(s2).merge(s3)


def _panel_bounds(a_lay: BlockCyclicLayout, b_lay: BlockCyclicLayout) -> np.ndarray:
    k = a_lay.n
    cuts = set(range(0, k, a_lay.nb)) | set(range(0, k, b_lay.mb)) | {k}
    return np.array(sorted(cuts))


def baseline_dense_multiply(a: DistMatrix, b: DistMatrix, grid: Grid) -> tuple[DistMatrix, GridStats]:
    """Outer-product (SUMMA-style) multiply of two distributed dense matrices.

    For each panel of the inner dimension, the owning process column
    broadcasts its ``A`` panel along process rows and the owning process row
    broadcasts its ``B`` panel along process columns.
    """
    a_lay, b_lay = a.layout, b.layout
    if a_lay.n != b_lay.m:
        raise ValueError(f"inner dimensions differ: {a_lay.n} vs {b_lay.m}")
    if (a_lay.p, a_lay.q) != (grid.p, grid.q) or (b_lay.p, b_lay.q) != (grid.p, grid.q):
        raise ValueError("layouts must live on the executing grid")
    c_lay = BlockCyclicLayout(a_lay.m, b_lay.n, a_lay.mb, b_lay.nb, grid.p, grid.q)
    bounds = _panel_bounds(a_lay, b_lay)

    def program(ctx):
        i, j = ctx.row, ctx.col
        a_tile, b_tile = a.tiles[ctx.rank], b.tiles[ctx.rank]
        a_cols = a_lay.col_indices(j)
        b_rows = b_lay.row_indices(i)
        out = np.zeros(c_lay.local_shape(i, j))
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            owner_col = int(a_lay.col_owner(lo))
            owner_row = int(b_lay.row_owner(lo))
            if j == owner_col:
                start = np.searchsorted(a_cols, lo)
                a_pan = a_tile[:, start:start + hi - lo]
                for c in range(grid.q):
                    if c != j:
                        ctx.send(ctx.rank_at(i, c), a_pan, "A")
            else:
                a_pan = ctx.recv(ctx.rank_at(i, owner_col), "A")
            if i == owner_row:
                start = np.searchsorted(b_rows, lo)
                b_pan = b_tile[start:start + hi - lo]
                for r in range(grid.p):
                    if r != i:
                        ctx.send(ctx.rank_at(r, j), b_pan, "B")
            else:
                b_pan = ctx.recv(ctx.rank_at(owner_row, j), "B")
            ctx.add_flops(2 * out.shape[0] * out.shape[1] * (hi - lo), "multiply")
            out += a_pan @ b_pan
        return out

    tiles, stats = grid.run(program)
    return DistMatrix(c_lay, tiles), stats


def bdd_shift_bytes(a_lay: BlockCyclicLayout) -> int:
    """Bytes the cyclic shifts move for an ``A`` of this layout: (q - 1) copies of A."""
    return (a_lay.q - 1) * a_lay.m * a_lay.n * 8


def summa_bytes(a_lay: BlockCyclicLayout, b_lay: BlockCyclicLayout) -> int:
    """Bytes of the baseline: (q - 1) copies of A plus (p - 1) copies of B."""
    return 8 * ((a_lay.q - 1) * a_lay.m * a_lay.n + (b_lay.p - 1) * b_lay.m * b_lay.n)

"""Deterministic simulated p x q process grid.

Ranks are row-major (``rank = row * q + col``). Each rank runs a Python
procedure on its own thread and talks to the others only through
:meth:`RankContext.send` / :meth:`RankContext.recv`, which copy arrays
through per-channel FIFO mailboxes and count messages, bytes and flops.

Two schedules are available. ``"sequential"`` runs one rank at a time in a
fixed round-robin order, switching only when a rank blocks or finishes;
``"threads"`` lets all ranks run concurrently. Observable results do not
depend on the schedule.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

SCHEDULES = ("sequential", "threads")


class DeadlockError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockCyclicLayout:
    """2-D block-cyclic distribution of an ``m x n`` matrix over a ``p x q`` grid."""

    m: int
    n: int
    mb: int
    nb: int
    p: int
    q: int
    src_row: int = 0
    src_col: int = 0

    def __post_init__(self):
        if min(self.mb, self.nb, self.p, self.q) < 1 or min(self.m, self.n) < 0:
            raise ValueError(f"invalid layout {self}")

    @classmethod
    def bcdd(cls, m: int, n: int, nb: int, p: int, q: int) -> BlockCyclicLayout:
        return cls(m, n, nb, nb, p, q)

    @classmethod
    def bdd(cls, m: int, n: int, p: int, q: int) -> BlockCyclicLayout:
        """One contiguous tile per process."""
        return cls(m, n, max(1, math.ceil(m / p)), max(1, math.ceil(n / q)), p, q)

    @property
    def nprocs(self) -> int:
        return self.p * self.q

    @property
    def is_bdd(self) -> bool:
        return self.mb * self.p >= self.m and self.nb * self.q >= self.n

    def rank_of(self, pr: int, pc: int) -> int:
        return pr * self.q + pc

    def coords(self, rank: int) -> tuple[int, int]:
        return divmod(rank, self.q)

    def _owner(self, g, b, nprocs, src):
        return (np.asarray(g) // b + src) % nprocs

    def row_owner(self, gi):
        return self._owner(gi, self.mb, self.p, self.src_row)

    def col_owner(self, gj):
        return self._owner(gj, self.nb, self.q, self.src_col)

    def row_indices(self, pr: int) -> np.ndarray:
        """Global rows held by process row ``pr``, in local order."""
        g = np.arange(self.m)
        return g[self.row_owner(g) == pr]

    def col_indices(self, pc: int) -> np.ndarray:
        g = np.arange(self.n)
        return g[self.col_owner(g) == pc]

    def local_shape(self, pr: int, pc: int) -> tuple[int, int]:
        return self.row_indices(pr).size, self.col_indices(pc).size

    def global_to_local(self, g, b: int, nprocs: int):
        g = np.asarray(g)
        return (g // (b * nprocs)) * b + g % b

    def local_to_global(self, l, proc: int, b: int, nprocs: int, src: int = 0):
        l = np.asarray(l)
        blk = (l // b) * nprocs + (proc - src) % nprocs
        return blk * b + l % b

    def owner_and_local(self, gi: int, gj: int) -> tuple[int, int, int]:
        """Return ``(rank, local_row, local_col)`` of global entry ``(gi, gj)``."""
        if not (0 <= gi < self.m and 0 <= gj < self.n):
            raise IndexError(f"({gi}, {gj}) outside {self.m}x{self.n}")
        pr = int(self.row_owner(gi))
        pc = int(self.col_owner(gj))
        li = int(self.global_to_local(gi, self.mb, self.p))
        lj = int(self.global_to_local(gj, self.nb, self.q))
        return self.rank_of(pr, pc), li, lj

    def local_to_global_entry(self, rank: int, li: int, lj: int) -> tuple[int, int]:
        pr, pc = self.coords(rank)
        gi = int(self.local_to_global(li, pr, self.mb, self.p, self.src_row))
        gj = int(self.local_to_global(lj, pc, self.nb, self.q, self.src_col))
        return gi, gj


@dataclass
class DistMatrix:
    """Matrix stored as one dense local tile per rank."""

    layout: BlockCyclicLayout
    tiles: list

    @classmethod
    def from_global(cls, a: np.ndarray, layout: BlockCyclicLayout) -> DistMatrix:
        a = np.asarray(a, dtype=float)
        if a.shape != (layout.m, layout.n):
            raise ValueError(f"matrix {a.shape} does not match layout {layout.m}x{layout.n}")
        tiles = []
        for rank in range(layout.nprocs):
            pr, pc = layout.coords(rank)
            tiles.append(np.ascontiguousarray(a[np.ix_(layout.row_indices(pr), layout.col_indices(pc))]))
        return cls(layout, tiles)

    @classmethod
    def zeros(cls, layout: BlockCyclicLayout) -> DistMatrix:
        return cls(layout, [np.zeros(layout.local_shape(*layout.coords(r))) for r in range(layout.nprocs)])

    def to_global(self) -> np.ndarray:
        lay = self.layout
        out = np.empty((lay.m, lay.n))
        for rank, tile in enumerate(self.tiles):
            pr, pc = lay.coords(rank)
            out[np.ix_(lay.row_indices(pr), lay.col_indices(pc))] = tile
        return out

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tiles)


@dataclass
class GridStats:
    """Per-rank communication and flop counters."""

    nranks: int
    messages_sent: np.ndarray = None
    bytes_sent: np.ndarray = None
    bytes_received: np.ndarray = None
    flops: np.ndarray = None
    bytes_by_tag: dict = field(default_factory=dict)
    flops_by_tag: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("messages_sent", "bytes_sent", "bytes_received", "flops"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.nranks, dtype=np.int64))

    @property
    def total_messages(self) -> int:
        return int(self.messages_sent.sum())

    @property
    def total_bytes(self) -> int:
        return int(self.bytes_sent.sum())

    @property
    def total_flops(self) -> int:
        return int(self.flops.sum())

    def count(self, key: str, amount: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + int(amount)

    def merge(self, other: GridStats) -> GridStats:
        if other.nranks != self.nranks:
            raise ValueError("cannot merge stats of different grids")
        self.messages_sent += other.messages_sent
        self.bytes_sent += other.bytes_sent
        self.bytes_received += other.bytes_received
        self.flops += other.flops
        for mine, theirs in ((self.bytes_by_tag, other.bytes_by_tag),
                             (self.flops_by_tag, other.flops_by_tag),
                             (self.counters, other.counters)):
            for k, v in theirs.items():
                mine[k] = mine.get(k, 0) + v
        return self

    def to_dict(self) -> dict:
        return {
            "messages_sent": self.total_messages,
            "bytes_sent": self.total_bytes,
            "bytes_received": int(self.bytes_received.sum()),
            "flops": self.total_flops,
            "bytes_by_tag": dict(sorted(self.bytes_by_tag.items())),
            "flops_by_tag": dict(sorted(self.flops_by_tag.items())),
            "counters": dict(sorted(self.counters.items())),
            "per_rank": {
                "messages_sent": self.messages_sent.tolist(),
                "bytes_sent": self.bytes_sent.tolist(),
                "flops": self.flops.tolist(),
            },
        }


class RankContext:
    """Handle a rank procedure uses to communicate and report work."""

    def __init__(self, runtime: _Runtime, rank: int):
        self._rt = runtime
        self.rank = rank
        self.p = runtime.p
        self.q = runtime.q
        self.row, self.col = divmod(rank, runtime.q)

    def rank_at(self, row: int, col: int) -> int:
        return (row % self.p) * self.q + (col % self.q)

    def send(self, dest: int, data, tag: str = "data") -> None:
        """Buffered send of a copy of ``data`` (8 bytes per float64 entry)."""
        self._rt.send(self.rank, int(dest), np.array(data, dtype=float, copy=True), tag)

    def recv(self, src: int, tag: str = "data") -> np.ndarray:
        return self._rt.recv(int(src), self.rank, tag)

    def add_flops(self, n: int, tag: str = "compute") -> None:
        self._rt.add_flops(self.rank, int(n), tag)

    def count(self, key: str, amount: int = 1) -> None:
        self._rt.count(key, amount)


class _Runtime:
    def __init__(self, p: int, q: int, schedule: str):
        if schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        self.p, self.q = p, q
        self.n = p * q
        self.sequential = schedule == "sequential"
        self.cv = threading.Condition()
        self.mail = defaultdict(deque)
        self.stats = GridStats(self.n)
        self.state = ["ready"] * self.n
        self.waiting_on = [None] * self.n
        self.turn = 0
        self.error = None

    # --- accounting -----------------------------------------------------
    def add_flops(self, rank, n, tag):
        with self.cv:
            self.stats.flops[rank] += n
            self.stats.flops_by_tag[tag] = self.stats.flops_by_tag.get(tag, 0) + n

    def count(self, key, amount):
        with self.cv:
            self.stats.count(key, amount)

    # --- messaging ------------------------------------------------------
    def send(self, src, dest, data, tag):
        if not 0 <= dest < self.n:
            raise ValueError(f"rank {src} sent to nonexistent rank {dest}")
        with self.cv:
            self.mail[(src, dest, tag)].append(data)
            st = self.stats
            st.messages_sent[src] += 1
            st.bytes_sent[src] += data.nbytes
            st.bytes_received[dest] += data.nbytes
            st.bytes_by_tag[tag] = st.bytes_by_tag.get(tag, 0) + data.nbytes
            self.cv.notify_all()

    def recv(self, src, dest, tag):
        key = (src, dest, tag)
        with self.cv:
            while not self.mail[key]:
                self._check_error()
                self.state[dest] = "blocked"
                self.waiting_on[dest] = key
                if self.sequential:
                    self._pass_turn(dest)
                else:
                    self._detect_deadlock()
                self.cv.wait()
            self._check_error()
            if self.sequential:
                while self.turn != dest:
                    self.cv.wait()
                    self._check_error()
            self.state[dest] = "running"
            self.waiting_on[dest] = None
            return self.mail[key].popleft()

    # --- scheduling -----------------------------------------------------
    def _runnable(self, r):
        if self.state[r] == "done":
            return False
        if self.state[r] == "blocked":
            return bool(self.mail[self.waiting_on[r]])
        return True

    def _pass_turn(self, current):
        for step in range(1, self.n + 1):
            r = (current + step) % self.n
            if self._runnable(r):
                self.turn = r
                self.cv.notify_all()
                return
        self._deadlock()

    def _detect_deadlock(self):
        if all(not self._runnable(r) for r in range(self.n)) and any(s == "blocked" for s in self.state):
            self._deadlock()

    def _deadlock(self):
        blocked = [r for r in range(self.n) if self.state[r] == "blocked"]
        if blocked:
            self.error = DeadlockError(f"deadlock: ranks {blocked} blocked in recv")
            self.cv.notify_all()

    def _check_error(self):
        if self.error is not None:
            raise _Abort()

    def run_rank(self, program, rank, results):
        ctx = RankContext(self, rank)
        try:
            with self.cv:
                while self.sequential and self.turn != rank and self.error is None:
                    self.cv.wait()
                self._check_error()
                self.state[rank] = "running"
            results[rank] = program(ctx)
        except _Abort:
            return
        except BaseException as exc:  # propagate to the driver
            with self.cv:
                if self.error is None:
                    self.error = exc
                self.cv.notify_all()
            return
        finally:
            with self.cv:
                self.state[rank] = "done"
                if self.sequential and self.turn == rank and self.error is None:
                    if any(s != "done" for s in self.state):
                        self._pass_turn(rank)
                elif not self.sequential and self.error is None:
                    self._detect_deadlock()
                self.cv.notify_all()


class _Abort(Exception):
    pass


class Grid:
    """A ``p x q`` virtual process grid accumulating :class:`GridStats` over runs."""

    def __init__(self, p: int = 1, q: int = 1, schedule: str = "sequential"):
        if p < 1 or q < 1:
            raise ValueError("grid dimensions must be positive")
        if schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        self.p, self.q = p, q
        self.schedule = schedule
        self.stats = GridStats(p * q)

    @property
    def nprocs(self) -> int:
        return self.p * self.q

    def __repr__(self):
        return f"Grid({self.p}x{self.q}, {self.schedule})"

    def run(self, program) -> tuple[list, GridStats]:
        """Run ``program(ctx)`` on every rank; return per-rank results and this run's stats."""
        results, stats = run_grid(program, self.p, self.q, self.schedule)
        self.stats.merge(stats)
        return results, stats


def run_grid(program, p: int, q: int, schedule: str = "sequential") -> tuple[list, GridStats]:
    rt = _Runtime(p, q, schedule)
    results = [None] * (p * q)
    threads = [
        threading.Thread(target=rt.run_rank, args=(program, r, results), name=f"rank-{r}", daemon=True)
        for r in range(p * q)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if rt.error is not None:
        raise rt.error
    return results, rt.stats


def parse_grid(text: str) -> tuple[int, int]:
    """Parse ``"2x3"`` into ``(2, 3)``."""
    try:
        p, q = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"grid must look like PxQ, got {text!r}") from None
    if p < 1 or q < 1:
        raise ValueError(f"grid dimensions must be positive, got {text!r}")
    return p, q


def shift_left(grid: Grid, dm: DistMatrix, tag: str = "A") -> tuple[DistMatrix, GridStats]:
    """Cyclically move every local tile one process column to the left."""
    lay = dm.layout
    if (lay.p, lay.q) != (grid.p, grid.q):
        raise ValueError("layout grid differs from the executing grid")
    if grid.q == 1:
        return DistMatrix(lay, [t.copy() for t in dm.tiles]), GridStats(grid.nprocs)

    def program(ctx):
        ctx.send(ctx.rank_at(ctx.row, ctx.col - 1), dm.tiles[ctx.rank], tag)
        return ctx.recv(ctx.rank_at(ctx.row, ctx.col + 1), tag)

    tiles, stats = grid.run(program)
    return DistMatrix(lay, tiles), stats


def redistribute(grid: Grid, dm: DistMatrix, target: BlockCyclicLayout, tag: str = "redist") -> tuple[DistMatrix, GridStats]:
    """Copy ``dm`` into ``target`` layout; only entries changing owner are sent."""
    src = dm.layout
    if (src.m, src.n) != (target.m, target.n):
        raise ValueError("redistribute needs equal global dimensions")
    if (src.p, src.q) != (target.p, target.q) or (grid.p, grid.q) != (src.p, src.q):
        raise ValueError("redistribute works within one grid")
    if src == target:
        return DistMatrix(target, [t.copy() for t in dm.tiles]), GridStats(grid.nprocs)
    n = grid.nprocs

    def pieces(s_rank, t_rank):
        spr, spc = src.coords(s_rank)
        tpr, tpc = target.coords(t_rank)
        rows = np.intersect1d(src.row_indices(spr), target.row_indices(tpr), assume_unique=True)
        cols = np.intersect1d(src.col_indices(spc), target.col_indices(tpc), assume_unique=True)
        return rows, cols

    def program(ctx):
        me = ctx.rank
        spr, spc = src.coords(me)
        tpr, tpc = target.coords(me)
        mine = dm.tiles[me]
        out = np.empty(target.local_shape(tpr, tpc))
        t_rows, t_cols = target.row_indices(tpr), target.col_indices(tpc)
        s_rows, s_cols = src.row_indices(spr), src.col_indices(spc)
        for dest in range(n):
            rows, cols = pieces(me, dest)
            if rows.size == 0 or cols.size == 0:
                continue
            block = mine[np.ix_(np.searchsorted(s_rows, rows), np.searchsorted(s_cols, cols))]
            if dest == me:
                out[np.ix_(np.searchsorted(t_rows, rows), np.searchsorted(t_cols, cols))] = block
            else:
                ctx.send(dest, block, tag)
        for source in range(n):
            if source == me:
                continue
            rows, cols = pieces(source, me)
            if rows.size == 0 or cols.size == 0:
                continue
            out[np.ix_(np.searchsorted(t_rows, rows), np.searchsorted(t_cols, cols))] = ctx.recv(source, tag)
        return out

    tiles, stats = grid.run(program)
    return DistMatrix(target, tiles), stats

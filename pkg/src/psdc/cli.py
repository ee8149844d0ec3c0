"""Command-line experiment runner.

Examples::

    python3 -m psdc --matrix clement --n 1000 --solver psdc --grid 2x2 --k-threshold 500
    python3 -m psdc --solver psmma-only --n 512 --grid 2x2 --variant all
    python3 -m psdc --solver rank-table --n 768 --grid 3x3 --nb-list 128,256
    python3 -m psdc --matrix file --path t.txt --solver dense-oracle

Reports go to stdout or ``--output``, as JSON or as long-format CSV
(``section,row,field,value``). Exit codes: 0 success, 2 usage error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .cauchy import example0, srrsc_compress
from .gridsim import SCHEDULES, BlockCyclicLayout, DistMatrix, Grid, parse_grid
from .matrices import MATRIX_FAMILIES, accuracy, dense_eig_oracle, make_matrix, read_tridiagonal
from .psmma import VARIANTS, PsmmaVariant, baseline_dense_multiply, psmma_multiply
from .solver import PsdcConfig, flops_by_path, psdc_solve, total_stats

SCHEMA = "psdc-report/1"
MATRICES = tuple(MATRIX_FAMILIES) + ("file",)
SOLVERS = ("psdc", "dense-oracle", "psmma-only", "rank-table")
CSV_COLUMNS = ("section", "row", "field", "value")
RANK_TABLE_MAX_N = 16384

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    matrix: str = "clement"
    n: int = 256
    m: int | None = None
    path: str | None = None
    solver: str = "psdc"
    variant: str = "wredist"
    grid: str = "1x1"
    nb: int = 64
    tol: float | None = None
    k_threshold: str | None = None
    base_size: int = 64
    seed: int = 0
    nb_list: str = "64,128,256"
    blocks: str = "2,3,4"
    schedule: str = "sequential"
    output: str | None = None
    format: str = "json"

    def validate(self) -> None:
        def bad(name, why):
            raise UsageError(f"--{name.replace('_', '-')}: {why}")

        if self.matrix not in MATRICES:
            bad("matrix", f"must be one of {MATRICES}")
        if self.solver not in SOLVERS:
            bad("solver", f"must be one of {SOLVERS}")
        if self.variant not in VARIANTS + ("all",):
            bad("variant", f"must be one of {VARIANTS + ('all',)}")
        if self.variant == "all" and self.solver != "psmma-only":
            bad("variant", "'all' is only valid with --solver psmma-only")
        if self.schedule not in SCHEDULES:
            bad("schedule", f"must be one of {SCHEDULES}")
        if self.format not in ("json", "csv"):
            bad("format", "must be json or csv")
        if self.matrix == "file" and self.solver in ("psdc", "dense-oracle") and not self.path:
            bad("path", "required with --matrix file")
        if self.n < 1:
            bad("n", "must be positive")
        if self.nb < 1:
            bad("nb", "must be positive")
        if self.base_size < 1:
            bad("base_size", "must be positive")
        if self.tol is not None and not self.tol >= 0:
            bad("tol", "must be nonnegative")
        try:
            self.grid_dims()
        except ValueError as exc:
            bad("grid", str(exc))
        try:
            self.threshold()
        except ValueError:
            bad("k_threshold", "must be a positive integer or 'inf'")
        try:
            nbs = self.nb_values()
            blocks = self.block_values()
        except ValueError:
            bad("nb_list", "must be comma-separated positive integers")
        if any(x < 1 for x in nbs):
            bad("nb_list", "must be positive")
        if any(x < 1 for x in blocks):
            bad("blocks", "block indices are 1-based")
        if self.solver == "rank-table" and max(blocks, default=1) > self.grid_dims()[0]:
            bad("blocks", "block row exceeds the number of process rows")
        if self.solver == "rank-table" and self.n > RANK_TABLE_MAX_N:
            bad("n", f"rank table SVD oracle limited to n <= {RANK_TABLE_MAX_N}")

    def grid_dims(self) -> tuple[int, int]:
        return parse_grid(self.grid)

    def threshold(self):
        if self.k_threshold is None:
            return None
        if str(self.k_threshold).lower() in ("inf", "infinity"):
            return math.inf
        k = int(self.k_threshold)
        if k < 1:
            raise ValueError(k)
        return k

    def nb_values(self) -> list[int]:
        return [int(x) for x in str(self.nb_list).split(",") if x.strip()]

    def block_values(self) -> list[int]:
        return [int(x) for x in str(self.blocks).split(",") if x.strip()]

    def echo(self) -> dict:
        """Config fields as JSON-safe values (the output path is left out)."""
        out = asdict(self)
        out.pop("output")
        return out


@dataclass
class RunReport:
    config: dict
    metrics: dict = field(default_factory=dict)
    merges: list = field(default_factory=list)
    variants: list = field(default_factory=list)
    ranks: list = field(default_factory=list)
    eigenvalues: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    flops_by_path: dict = field(default_factory=dict)
    elapsed_s: float = 0.0
    schema: str = SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    def deterministic_dict(self) -> dict:
        """Everything except wall time and the execution schedule."""
        out = self.to_dict()
        out.pop("elapsed_s")
        out["config"] = {k: v for k, v in out["config"].items() if k != "schedule"}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(**d)


def _nonfinite(obj, path="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        return path
    if isinstance(obj, dict):
        for k, v in obj.items():
            bad = _nonfinite(v, f"{path}.{k}")
            if bad:
                return bad
    if isinstance(obj, list):
        for i, v in enumerate(obj):
            bad = _nonfinite(v, f"{path}[{i}]")
            if bad:
                return bad
    return None


# --- serialization -------------------------------------------------------

def report_to_json(r: RunReport) -> str:
    return json.dumps(r.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_from_json(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def _csv_rows(r: RunReport):
    d = r.to_dict()
    yield "schema", "", "schema", d["schema"]
    yield "elapsed_s", "", "elapsed_s", d["elapsed_s"]
    for section in ("config", "metrics", "stats", "flops_by_path"):
        for k in sorted(d[section]):
            yield section, "", k, d[section][k]
    for section in ("merges", "variants", "ranks"):
        for i, row in enumerate(d[section]):
            for k in sorted(row):
                yield section, i, k, row[k]
    for i, x in enumerate(d["eigenvalues"]):
        yield "eigenvalues", i, "value", x


def report_to_csv(r: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for section, row, key, value in _csv_rows(r):
        w.writerow([section, row, key, json.dumps(value, sort_keys=True, allow_nan=False)])
    return buf.getvalue()


def report_from_csv(text: str) -> RunReport:
    rows = csv.reader(io.StringIO(text))
    if tuple(next(rows)) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    d = {"config": {}, "metrics": {}, "stats": {}, "flops_by_path": {},
         "merges": [], "variants": [], "ranks": [], "eigenvalues": []}
    for section, row, key, raw in rows:
        value = json.loads(raw)
        if section in ("schema", "elapsed_s"):
            d[section] = value
        elif section == "eigenvalues":
            d["eigenvalues"].append(value)
        elif row == "":
            d[section][key] = value
        else:
            table = d[section]
            while len(table) <= int(row):
                table.append({})
            table[int(row)][key] = value
    return RunReport.from_dict(d)


def emit(r: RunReport, fmt: str) -> str:
    return report_to_json(r) if fmt == "json" else report_to_csv(r)


def parse(text: str, fmt: str) -> RunReport:
    return report_from_json(text) if fmt == "json" else report_from_csv(text)


def write_atomic(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- experiments ---------------------------------------------------------

def svd_rank(block: np.ndarray, tol: float) -> int:
    """Number of singular values above ``tol * sigma_1``."""
    if block.size == 0:
        return 0
    s = scipy.linalg.svdvals(block, check_finite=False)
    return int(np.count_nonzero(s > tol * s[0])) if s[0] > 0 else 0


def rank_table(n: int, grid: tuple[int, int], nb_list, tol: float = 1e-12, blocks=(2, 3, 4),
               seed: int = 0, with_svd: bool = True) -> list[dict]:
    """Ranks of the off-diagonal blocks ``B(I, 1)`` of an Example-0 style matrix.

    ``B(I, 1)`` is the part of ``B`` a process in process row ``I`` (1-based)
    and process column 1 holds under a block-cyclic layout with block size
    ``nb``. Each row reports the structured compression rank and, optionally,
    the SVD rank at the same relative tolerance.
    """
    if n > RANK_TABLE_MAX_N:
        raise ValueError(f"rank table SVD oracle limited to n <= {RANK_TABLE_MAX_N}")
    p, q = grid
    b = example0(n, seed=seed)
    rows = []
    for nb in nb_list:
        lay = BlockCyclicLayout.bcdd(n, n, nb, p, q)
        cols = lay.col_indices(0)
        for blk in blocks:
            if blk > p:
                raise ValueError(f"block row {blk} exceeds grid rows {p}")
            sub = b.submatrix(lay.row_indices(blk - 1), cols)
            f = srrsc_compress(sub, tol=tol, max_rank=min(sub.shape))
            row = {"nb": nb, "block": blk, "rows": sub.shape[0], "cols": sub.shape[1],
                   "srrsc_rank": f.rank}
            if with_svd:
                row["svd_rank"] = svd_rank(sub.dense(), tol)
            rows.append(row)
    return rows


def _load_matrix(spec: ExperimentSpec):
    try:
        if spec.matrix == "file":
            return read_tridiagonal(spec.path)
        return make_matrix(spec.matrix, spec.n, spec.m)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--matrix: {exc}") from exc


def _run_psdc(spec: ExperimentSpec, report: RunReport) -> None:
    t = _load_matrix(spec)
    variant = PsmmaVariant(spec.variant, nb=spec.nb, tol=1e-14 if spec.tol is None else spec.tol)
    cfg = PsdcConfig(base_size=spec.base_size, k_threshold=spec.threshold(), variant=variant,
                     grid=spec.grid_dims(), schedule=spec.schedule)
    e, records = psdc_solve(t, cfg)
    acc = accuracy(t, e)
    report.metrics = {"n": t.n, "orthogonality": acc.orthogonality, "residual": acc.residual,
                      "norm2": acc.norm2, "merges": len(records),
                      "psmma_merges": sum(r.path == "psmma_structured" for r in records),
                      "threshold": -1 if cfg.threshold(t.n) == math.inf else int(cfg.threshold(t.n))}
    report.merges = [r.summary() for r in records]
    report.stats = total_stats(records, cfg.grid[0] * cfg.grid[1]).to_dict()
    report.flops_by_path = flops_by_path(records)
    report.eigenvalues = e.values.tolist()


def _run_oracle(spec: ExperimentSpec, report: RunReport) -> None:
    t = _load_matrix(spec)
    e = dense_eig_oracle(t)
    acc = accuracy(t, e)
    report.metrics = {"n": t.n, "orthogonality": acc.orthogonality, "residual": acc.residual,
                      "norm2": acc.norm2}
    report.eigenvalues = e.values.tolist()


def _psmma_row(name, c, ref, stats) -> dict:
    return {
        "variant": name,
        "rel_error": float(np.linalg.norm(c - ref) / np.linalg.norm(ref)),
        "bytes": stats.total_bytes,
        "b_bytes": int(stats.bytes_by_tag.get("B", 0)),
        "messages": stats.total_messages,
        "flops": stats.total_flops,
        "rank_sum": int(stats.counters.get("rank_sum", 0)),
        "compressed_blocks": int(stats.counters.get("compressed_blocks", 0)),
        "truncated_blocks": int(stats.counters.get("truncated_blocks", 0)),
    }


def psmma_comparison(n: int, grid: tuple[int, int], variants, nb: int = 64, tol: float = 1e-12,
                     seed: int = 0, schedule: str = "sequential") -> list[dict]:
    """Random ``A`` times an Example-0 ``B`` with each variant and the dense baseline."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    b = example0(n, rng=rng)
    ref = a @ b.dense()
    p, q = grid
    g = Grid(p, q, schedule=schedule)
    rows = []
    for kind in variants:
        v = PsmmaVariant(kind, nb=nb, tol=tol)
        c, stats = psmma_multiply(DistMatrix.from_global(a, v.input_layout(n, n, p, q)), b, v, g)
        rows.append(_psmma_row(kind, c.to_global(), ref, stats))
    lay = BlockCyclicLayout.bcdd(n, n, nb, p, q)
    c, stats = baseline_dense_multiply(DistMatrix.from_global(a, lay), DistMatrix.from_global(b.dense(), lay), g)
    rows.append(_psmma_row("baseline", c.to_global(), ref, stats))
    return rows


def _run_psmma(spec: ExperimentSpec, report: RunReport) -> None:
    variants = VARIANTS if spec.variant == "all" else (spec.variant,)
    tol = 1e-12 if spec.tol is None else spec.tol
    report.variants = psmma_comparison(spec.n, spec.grid_dims(), variants, spec.nb, tol, spec.seed, spec.schedule)
    report.metrics = {"n": spec.n, "max_rel_error": max(r["rel_error"] for r in report.variants)}


def _run_ranks(spec: ExperimentSpec, report: RunReport) -> None:
    tol = 1e-12 if spec.tol is None else spec.tol
    report.ranks = rank_table(spec.n, spec.grid_dims(), spec.nb_values(), tol, spec.block_values(), spec.seed)
    report.metrics = {"n": spec.n}


RUNNERS = {"psdc": _run_psdc, "dense-oracle": _run_oracle, "psmma-only": _run_psmma, "rank-table": _run_ranks}


def run_experiment(spec: ExperimentSpec) -> RunReport:
    spec.validate()
    report = RunReport(config=spec.echo())
    start = time.perf_counter()
    try:
        RUNNERS[spec.solver](spec, report)
    except UsageError:
        raise
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        raise NumericalFailure(f"{spec.solver} failed: {exc}") from exc
    report.elapsed_s = time.perf_counter() - start
    bad = _nonfinite(report.to_dict())
    if bad:
        raise NumericalFailure(f"non-finite value in {bad}")
    return report


# --- argument handling ---------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psdc", description="Structured divide-and-conquer eigensolver experiments.")
    ap.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    ap.add_argument("--matrix", choices=MATRICES)
    ap.add_argument("--n", type=int)
    ap.add_argument("--m", type=int, help="order parameter of the sht family (default n)")
    ap.add_argument("--path", help="tridiagonal text file for --matrix file")
    ap.add_argument("--solver", choices=SOLVERS)
    ap.add_argument("--variant", choices=VARIANTS + ("all",))
    ap.add_argument("--grid", help="process grid PxQ")
    ap.add_argument("--nb", type=int, help="block size of the block-cyclic layout")
    ap.add_argument("--tol", type=float, help="compression tolerance")
    ap.add_argument("--k-threshold", help="structured path when kept >= this; 'inf' disables")
    ap.add_argument("--base-size", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--nb-list", help="comma-separated block sizes for the rank table")
    ap.add_argument("--blocks", help="comma-separated 1-based block rows for the rank table")
    ap.add_argument("--schedule", choices=SCHEDULES)
    ap.add_argument("--output", help="report path (default stdout)")
    ap.add_argument("--format", choices=("json", "csv"))
    return ap


_FIELDS = {f for f in ExperimentSpec.__dataclass_fields__}
_CASTS = {"n": int, "m": int, "nb": int, "base_size": int, "seed": int, "tol": float}


def read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _FIELDS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _CASTS.get(key, str)(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}") from None
    return out


def spec_from_args(argv=None) -> ExperimentSpec:
    args = build_parser().parse_args(argv)
    values = read_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    return ExperimentSpec(**values)


def main(argv=None) -> int:
    try:
        spec = spec_from_args(argv)
        spec.validate()
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"psdc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_experiment(spec)
    except UsageError as exc:
        print(f"psdc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"psdc: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = emit(report, spec.format)
    if spec.output:
        write_atomic(spec.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK

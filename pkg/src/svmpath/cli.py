"""Command line front end: trace exact and relaxed paths and write CSV reports."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import DEFAULT_JITTER, Dataset, KernelSpec, build_q, parse_libsvm, scale_features
from .errors import InputError, NumericalError, SvmPathError
from .metrics import PathSummary, Sampler, compare_paths, summarize, theta_grid
from .oracle import OracleSolution, initialize_path, solve_dual_reference
from .partition import Tolerances, check_relaxed
from .perturb import check_certificate, extract_certificate, gap_bound
from .state import PathState
from .tracer import BreakpointRecord, PathProblem, PathResult, Segment, trace

DEFAULT_E = (0.001, 0.01, 0.1, 0.5)
MODES = ("exact", "suboptimal", "both")

BREAKPOINT_HEADER = ["k", "theta", "C", "delta_theta", "n_O", "n_M", "n_I", "b_O", "b_I", "truncated",
                     "limiting"]
CERT_HEADER = ["kind", "k", "theta", "C", "eps1", "eps2", "p_norm", "q_norm", "output_violation",
               "multiplier_violation", "equality_residual", "certificate_ok", "gap_bound", "reverse_bound",
               "dual_difference"]


@dataclass
class RunConfig:
    out_dir: Path
    data: Path | None = None
    synthetic_n: int = 60
    synthetic_p: int = 2
    seed: int = 0
    kernel: str = "rbf"
    gamma: float | None = None
    jitter: float = DEFAULT_JITTER
    c_start: float | None = None  # default 0.1 / n
    c_end: float | None = None  # default 1e6 / n
    e_values: tuple[float, ...] = DEFAULT_E
    b_cap: int = 10
    mode: str = "both"
    samples: int = 100
    alpha_columns: int = 5
    oracle: bool = False
    oracle_samples: int = 10
    scale: bool | None = None  # default: scale file input, leave synthetic data alone

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        if any(not e >= 0 for e in self.e_values):
            raise InputError("e values must be nonnegative")
        if self.b_cap < 1:
            raise InputError("b_cap must be at least 1")
        if self.c_start is not None and self.c_end is not None and not self.c_start < self.c_end:
            raise InputError("c_start must be smaller than c_end")
        if self.samples < 2 or self.oracle_samples < 2:
            raise InputError("need at least two samples")


def generate_synthetic(n: int, p: int, seed: int) -> Dataset:
    """Two unit-covariance Gaussian clusters with means ``+-1/sqrt(p)`` in every coordinate.

    The first half of the points is labelled +1, the second half -1.
    """
    if n < 4 or n % 2:
        raise InputError("synthetic data needs an even n >= 4")
    if p < 1:
        raise InputError("p must be positive")
    rng = np.random.default_rng(seed)
    y = np.r_[np.ones(n // 2), -np.ones(n // 2)]
    x = rng.standard_normal((n, p)) + y[:, None] / np.sqrt(p)
    return Dataset(x, y)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data is None:
        ds = generate_synthetic(cfg.synthetic_n, cfg.synthetic_p, cfg.seed)
        return scale_features(ds) if cfg.scale else ds
    with open(cfg.data, "rb") as fh:
        ds = parse_libsvm(fh)
    return ds if cfg.scale is False else scale_features(ds)


@dataclass
class TraceOutput:
    name: str
    result: PathResult
    summary: PathSummary
    cert_rows: list[list] = field(default_factory=list)


class _Recorder:
    """Observer collecting grid samples and a certificate per breakpoint."""

    def __init__(self, grid: np.ndarray, problem: PathProblem) -> None:
        self.sampler = Sampler(grid, problem.q)
        self.problem = problem
        self.cert_rows: list[list] = []

    def __call__(self, segment: Segment, record: BreakpointRecord, state: PathState) -> None:
        self.sampler(segment, record, state)
        p = self.problem
        report = check_relaxed(state, segment.partition, segment.tol, p.y)
        cert = extract_certificate(state, segment.partition, segment.tol, p.y)
        ok = check_certificate(cert, state.alpha, p.q, p.y, state.c).passed
        self.cert_rows.append(["breakpoint", record.k, record.theta, record.c_max, segment.tol.eps1,
                               segment.tol.eps2, cert.p_norm, cert.q_norm, report.worst_output,
                               report.worst_multiplier, report.equality_residual, ok, "", "", ""])


def run_trace(name: str, problem: PathProblem, init: tuple[PathState, object], e: float, cfg: RunConfig,
              grid: np.ndarray, references: list[OracleSolution] | None = None) -> TraceOutput:
    rec = _Recorder(grid, problem)
    t0 = time.perf_counter()
    result = trace(problem, init[0], init[1], e, b_cap=cfg.b_cap, observer=rec)
    wall = time.perf_counter() - t0
    out = TraceOutput(name, result, summarize(result, rec.sampler, wall), rec.cert_rows)
    if references is not None:
        out.cert_rows.extend(_oracle_rows(result, problem, cfg, references))
    return out


def reference_solutions(problem: PathProblem, count: int) -> list[OracleSolution]:
    """Reference optima on the oracle grid, each warm-started from the previous one."""
    out: list[OracleSolution] = []
    for th in theta_grid(problem, count):
        out.append(solve_dual_reference(problem.q, problem.y, problem.c_at(th), out[-1].alpha if out else None))
    return out


def _oracle_rows(result: PathResult, problem: PathProblem, cfg: RunConfig,
                 references: list[OracleSolution]) -> list[list]:
    rows = []
    for th, ref in zip(theta_grid(problem, cfg.oracle_samples), references):
        seg = result.segment_at(th)
        st = seg.state_at(max(th, seg.theta_start))
        st.c = problem.c_at(th)
        cert = extract_certificate(st, seg.partition, seg.tol, problem.y)
        ok = check_certificate(cert, st.alpha, problem.q, problem.y, st.c).passed
        gb = gap_bound(cert, st.alpha, ref, problem.q, problem.y, st.c)
        report = check_relaxed(st, seg.partition, seg.tol, problem.y)
        rows.append(["sample", "", th, float(st.c.max()), seg.tol.eps1, seg.tol.eps2, cert.p_norm, cert.q_norm,
                     report.worst_output, report.worst_multiplier, report.equality_residual, ok, gb.bound,
                     gb.reverse_bound, gb.difference])
    return rows


def write_trace(out: TraceOutput, problem: PathProblem, directory: Path, alpha_columns: int) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    rows = [[r.k, r.theta, r.c_max, r.delta_theta, r.n_outside, r.n_margin, r.n_inside, r.b_outside,
             r.b_inside, r.truncated, r.limiting] for r in out.result.records]
    _write(directory / "breakpoints.csv", BREAKPOINT_HEADER, rows)

    cols = min(alpha_columns, problem.n)
    header = ["theta", "C", "alpha0"] + [f"alpha_{j}" for j in range(cols)] + ["dual_objective", "n_O", "n_M",
                                                                             "n_I"]
    s = out.summary
    rows = []
    for i, th in enumerate(s.theta):
        rows.append([th, float(problem.c_at(th).max()), s.alpha0[i], *s.alpha[i, :cols], s.objective[i],
                     *s.sizes[i]])
    _write(directory / "path.csv", header, rows)
    _write(directory / "certificates.csv", CERT_HEADER, out.cert_rows)


def write_comparison(exact: TraceOutput, other: TraceOutput, problem: PathProblem, directory: Path) -> float:
    cmp = compare_paths(exact.summary, other.summary)
    rows = [[th, float(problem.c_at(th).max()), cmp.partition_difference[i], cmp.alpha_difference[i]]
            for i, th in enumerate(cmp.theta)]
    _write(directory / "compare.csv", ["theta", "C", "partition_difference", "alpha_difference"], rows)
    return cmp.max_partition_difference


def run(cfg: RunConfig, stream=sys.stdout) -> int:
    ds = load_dataset(cfg)
    n = ds.n
    spec = KernelSpec(cfg.kernel, cfg.gamma, cfg.jitter)
    q = build_q(ds, spec).values
    c_start = cfg.c_start if cfg.c_start is not None else 0.1 / n
    c_end = cfg.c_end if cfg.c_end is not None else 1e6 / n
    if not c_start < c_end:
        raise InputError("c_start must be smaller than c_end")
    problem = PathProblem.between(q, ds.y, c_start, c_end)
    init = initialize_path(problem)
    grid = theta_grid(problem, cfg.samples)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    runs: list[tuple[str, float]] = []
    if cfg.mode in ("exact", "both"):
        runs.append(("exact", 0.0))
    if cfg.mode in ("suboptimal", "both"):
        runs.extend((f"e_{e:g}", e) for e in cfg.e_values)

    references = reference_solutions(problem, cfg.oracle_samples) if cfg.oracle else None
    outputs: dict[str, TraceOutput] = {}
    summary_rows = []
    for name, e in runs:
        out = run_trace(name, problem, init, e, cfg, grid, references)
        write_trace(out, problem, out_dir / name, cfg.alpha_columns)
        outputs[name] = out
        max_diff: float | str = ""
        if cfg.mode == "both" and name != "exact":
            max_diff = write_comparison(outputs["exact"], out, problem, out_dir / name)
        summary_rows.append([name, e, out.result.breakpoints, max_diff])
        print(f"{name}: {out.result.breakpoints} breakpoints, {out.summary.wall_time:.3f} s"
              + (f", max partition difference {max_diff:.4f}" if max_diff != "" else ""), file=stream)
    _write(out_dir / "summary.csv", ["trace", "e", "breakpoints", "max_partition_difference"], summary_rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svmpath", description=__doc__)
    ap.add_argument("--data", type=Path, help="LIBSVM-format training file (default: synthetic data)")
    ap.add_argument("--synthetic-n", type=int, default=60)
    ap.add_argument("--synthetic-p", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    ap.add_argument("--gamma", type=float, help="RBF width (default 1/p)")
    ap.add_argument("--jitter", type=float, default=DEFAULT_JITTER)
    ap.add_argument("--c-start", type=float, help="C at theta=0 (default 0.1/n)")
    ap.add_argument("--c-end", type=float, help="C at theta=1 (default 1e6/n)")
    ap.add_argument("--e", type=float, nargs="+", default=list(DEFAULT_E), dest="e_values",
                    help="relative tolerances of the suboptimal traces")
    ap.add_argument("--b-cap", type=int, default=10)
    ap.add_argument("--mode", choices=MODES, default="both")
    ap.add_argument("--samples", type=int, default=100, help="grid points in path.csv")
    ap.add_argument("--alpha-columns", type=int, default=5)
    ap.add_argument("--oracle", action="store_true", help="add gap bounds against the reference solver")
    ap.add_argument("--oracle-samples", type=int, default=10)
    scale = ap.add_mutually_exclusive_group()
    scale.add_argument("--scale", dest="scale", action="store_true", default=None)
    scale.add_argument("--no-scale", dest="scale", action="store_false")
    ap.add_argument("--out", type=Path, default=Path("svmpath-out"), dest="out_dir")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**{k: (tuple(v) if k == "e_values" else v) for k, v in vars(args).items()})
        return run(cfg)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SvmPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

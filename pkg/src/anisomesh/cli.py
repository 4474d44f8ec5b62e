"""Command-line front ends: the benchmark driver and the backend comparator.

``adapt`` runs the travelling-front benchmark (or a single adaptation of
a mesh/metric pair loaded from text files) and writes stats into an
output directory. ``adapt-bench`` re-invokes ``adapt`` in subprocesses
across backend and worker-count combinations and tabulates the timings;
subprocesses are required because the kernel backend is frozen when the
package is first imported.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from pathlib import Path


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; this tool reserves 2 for
    # consistency failures, so usage problems must map to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    from .coarsen import L_MIN_DEFAULT
    from .refine import L_MAX_DEFAULT

    p = _Parser(prog="adapt", description="Anisotropic mesh adaptation benchmark.")
    p.add_argument("--nx", type=int, default=51, help="structured grid vertices in x")
    p.add_argument("--ny", type=int, default=51, help="structured grid vertices in y")
    p.add_argument("--t-begin", type=int, default=0)
    p.add_argument("--t-end", type=int, default=51)
    p.add_argument("--period", type=float, default=50.0, help="time period of the field")
    p.add_argument("--p", type=int, default=2, help="norm exponent for metric scaling")
    p.add_argument("--eps", type=float, default=0.01, help="target interpolation error")
    p.add_argument("--workers", type=int, default=None,
                   help="worker count (default: ANISOMESH_WORKERS or 1)")
    p.add_argument("--lmin", type=float, default=L_MIN_DEFAULT,
                   help="collapse edges shorter than this metric length")
    p.add_argument("--lmax", type=float, default=L_MAX_DEFAULT,
                   help="split edges longer than this metric length")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--vtk", action="store_true", help="write a VTK snapshot per step")
    p.add_argument("--mesh-in", metavar="FILE", default=None,
                   help="adapt this mesh once instead of running the benchmark")
    p.add_argument("--metric-in", metavar="FILE", default=None,
                   help="metric for --mesh-in (required with it)")
    return p


def _adapt_single(args, config):
    """One adaptation of a stored mesh/metric pair; writes results to --out."""
    from . import _kernels
    from .driver import adapt, write_vtk
    from .mesh import read_mesh_text, write_mesh_text
    from .metric import read_metric_text, write_metric_text

    mesh = read_mesh_text(args.mesh_in)
    metric = read_metric_text(args.metric_in)
    if len(metric) != mesh.n_vertices:
        raise ValueError(
            f"metric has {len(metric)} rows for {mesh.n_vertices} vertices"
        )
    mesh, metric, stats = adapt(mesh, metric, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh_text(mesh, out / "adapted_mesh.txt")
    write_metric_text(out / "adapted_metric.txt", metric)
    if args.vtk:
        q = _kernels.element_qualities(mesh.elements, mesh.coords, metric)
        write_vtk(mesh, out / "adapted.vtk", cell_data={"quality": q})
    with open(out / "summary.json", "w") as fh:
        json.dump(
            {
                "backend": _kernels.BACKEND,
                "workers": config.n_workers,
                "outer_iterations": stats.outer_iterations,
                "converged": stats.converged,
                "splits": stats.splits,
                "collapses": stats.collapses,
                "flips": stats.flips,
                "relocations": stats.relocations,
                "q_min": stats.q_min,
                "q_mean": stats.q_mean,
                "histogram": [int(c) for c in stats.histogram],
                "total_seconds": stats.total_seconds,
                "final_vertices": mesh.n_vertices,
                "final_elements": mesh.n_live_elements,
            },
            fh,
            indent=2,
        )
    print(
        f"adapted: {mesh.n_vertices} vertices, {mesh.n_live_elements} elements, "
        f"q_min {stats.q_min:.4f}"
    )


def main(argv=None):
    args = _build_parser().parse_args(argv)
    # import after parsing so --help stays fast and usage errors exit first
    from .driver import AdaptConfig, run_benchmark
    from .errors import ConsistencyError
    from .parallel import resolve_workers

    try:
        workers = resolve_workers(args.workers)
        config = AdaptConfig(
            l_min=args.lmin, l_max=args.lmax, p=args.p, eps=args.eps,
            n_workers=workers,
        )
        if (args.mesh_in is None) != (args.metric_in is None):
            raise ValueError("--mesh-in and --metric-in must be given together")
        if args.mesh_in is not None:
            _adapt_single(args, config)
            return 0
        res = run_benchmark(
            config, args.nx, args.ny, args.t_begin, args.t_end, args.out,
            period=args.period, vtk=args.vtk,
        )
        print(
            f"{len(res.steps)} steps, q_min {res.q_min:.4f}, "
            f"{res.fraction_below_04 * 100.0:.3f}% of elements below quality 0.4"
        )
        print(f"wrote {res.csv_path} and {res.json_path}")
        return 0
    except ConsistencyError as err:
        print(f"adapt: consistency failure: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"adapt: error: {err}", file=sys.stderr)
        return 1


def _run_case(base_args, out_dir, backend, workers):
    env = dict(os.environ)
    env["ANISOMESH_BACKEND"] = backend
    env["ANISOMESH_WORKERS"] = str(workers)
    cmd = [sys.executable, "-m", "anisomesh.cli", *base_args,
           "--workers", str(workers), "--out", str(out_dir)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise RuntimeError(
            f"benchmark case backend={backend} workers={workers} "
            f"exited with {proc.returncode}"
        )
    with open(Path(out_dir) / "summary.json") as fh:
        return json.load(fh)


def bench_main(argv=None):
    p = _Parser(
        prog="adapt-bench",
        description="Compare kernel backends and worker counts on the benchmark.",
    )
    p.add_argument("--nx", type=int, default=31)
    p.add_argument("--ny", type=int, default=31)
    p.add_argument("--t-begin", type=int, default=0)
    p.add_argument("--t-end", type=int, default=3)
    p.add_argument("--period", type=float, default=50.0)
    p.add_argument("--backends", default="numba,numpy",
                   help="comma-separated backend list")
    p.add_argument("--workers", default="1",
                   help="comma-separated worker counts, e.g. 1,2,4,8")
    p.add_argument("--out", required=True, metavar="DIR")
    args = p.parse_args(argv)

    backends = [b.strip() for b in args.backends.split(",") if b.strip()]
    try:
        worker_counts = [int(w) for w in args.workers.split(",")]
    except ValueError:
        print("adapt-bench: error: --workers must be a comma-separated "
              "list of integers", file=sys.stderr)
        return 1
    if not backends or not worker_counts or min(worker_counts) < 1:
        print("adapt-bench: error: need at least one backend and positive "
              "worker counts", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_args = [
        "--nx", str(args.nx), "--ny", str(args.ny),
        "--t-begin", str(args.t_begin), "--t-end", str(args.t_end),
        "--period", str(args.period),
    ]

    cases = []
    try:
        for backend in backends:
            for workers in worker_counts:
                case_dir = out / f"{backend}_w{workers}"
                summary = _run_case(base_args, case_dir, backend, workers)
                cases.append(
                    {
                        "backend": summary["backend"],
                        "workers": workers,
                        "total_seconds": summary["total_seconds"],
                        "phase_mean_seconds": summary["phase_mean_seconds"],
                        "q_min": summary["q_min"],
                        "final_elements": summary["final_elements"],
                    }
                )
    except (RuntimeError, OSError, KeyError, json.JSONDecodeError) as err:
        print(f"adapt-bench: error: {err}", file=sys.stderr)
        return 1

    # speedup and efficiency are relative to each backend's own 1-worker run
    base_time = {
        c["backend"]: c["total_seconds"] for c in cases if c["workers"] == 1
    }
    header = f"{'backend':>8} {'workers':>7} {'seconds':>9} {'speedup':>8} {'efficiency':>10}"
    print(header)
    print("-" * len(header))
    for c in cases:
        ref = base_time.get(c["backend"])
        speedup = ref / c["total_seconds"] if ref else float("nan")
        c["speedup"] = speedup
        c["efficiency"] = speedup / c["workers"]
        print(
            f"{c['backend']:>8} {c['workers']:>7d} {c['total_seconds']:>9.3f} "
            f"{speedup:>8.2f} {c['efficiency']:>10.2f}"
        )
    if len(backends) >= 2:
        for w in worker_counts:
            t = {c["backend"]: c["total_seconds"] for c in cases if c["workers"] == w}
            if len(t) >= 2 and all(v > 0 for v in t.values()):
                pairs = ", ".join(f"{b} {s:.3f}s" for b, s in t.items())
                print(f"workers={w}: {pairs}")

    with open(out / "comparison.json", "w") as fh:
        json.dump({"cases": cases}, fh, indent=2)
    print(f"wrote {out / 'comparison.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

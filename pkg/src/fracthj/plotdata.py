"""Emit plot-ready columns from a solution CSV written by ``fracthj``.

    python -m fracthj.plotdata solution.csv --time 0.5 [--column u]

prints ``x[,y],<column>`` at the node closest to the requested time, or with
``--point X`` the time series ``t,<column>`` at the grid point closest to X
(1-D runs).  Rendering is left to the user's plotting tool.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np


def _load(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return header, data


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="fracthj-plotdata", description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--column", default=None, help="value column (default: last)")
    group = ap.add_mutually_exclusive_group(required=True)
    group.add_argument("--time", type=float)
    group.add_argument("--point", type=float)
    args = ap.parse_args(argv)
    header, data = _load(args.csv)
    col = header.index(args.column) if args.column else len(header) - 1
    t = data[:, 0]
    if args.time is not None:
        nodes = np.unique(t)
        t_sel = nodes[np.argmin(np.abs(nodes - args.time))]
        rows = data[t == t_sel]
        space = [i for i, h in enumerate(header) if h in ("x", "y")]
        print(",".join([header[i] for i in space] + [header[col]]))
        for r in rows:
            print(",".join("%.17g" % r[i] for i in space + [col]))
    else:
        xs = np.unique(data[:, 1])
        x_sel = xs[np.argmin(np.abs(xs - args.point))]
        rows = data[data[:, 1] == x_sel]
        print(f"t,{header[col]}")
        for r in rows:
            print("%.17g,%.17g" % (r[0], r[col]))
    return 0


if __name__ == "__main__":
    sys.exit(main())

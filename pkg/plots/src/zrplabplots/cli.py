"""Standalone figure renderer: `render --spec spec.json`.

The spec file names the figure kind, its input CSV/JSON files, the output
image path and optional axis labels/limits.  Exits 0 on success and nonzero
on malformed input (missing files, missing columns, empty data).
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, InputError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render a zrplab figure from CSV outputs")
    parser.add_argument("--spec", required=True, help="figure spec JSON file")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        record = render(spec)
    except (InputError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 1
    print(f"{spec.output}: {record['points_sha256']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

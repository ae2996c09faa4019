"""Command-line surface: ingest, evaluate, sweep, and significance.

Runs are described by a key=value config file plus command-line overrides,
with a mandatory seed so every output is reproducible byte for byte.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .evaluation import (
    ALGORITHM_NAMES,
    DEFAULT_PERMUTATIONS,
    DEFAULT_SAMPLES,
    EvalReport,
    format_report,
    make_algorithm,
    paired_sample_diffs,
    randomization_test,
    read_records,
    run_protocol,
    write_records,
)
from .predictor import InternalInvariantError
from .ratings import (
    RatingScale,
    RatingsFormatError,
    SplitSpec,
    load_ratings,
    partition_users,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; this surface reserves 2
    # for data errors
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_scale(text: str) -> RatingScale:
    """Parse 'lo:hi' bounds or an explicit comma list of values."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return RatingScale.from_bounds(int(lo), int(hi))
    return RatingScale(tuple(int(v) for v in text.split(",")))


def parse_grid(text: str) -> list[int]:
    """Parse 'start:stop:step' (stop inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            start, stop, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ValueError(f"bad grid {text!r}")
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        return list(range(start, stop + 1, step))
    return [int(v) for v in text.split(",")]


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a key=value run description; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


_CONVERTERS = {
    "dataset": str,
    "scale": str,
    "algorithms": lambda s: [a.strip() for a in s.split(",") if a.strip()],
    "protocols": lambda s: [p.strip() for p in s.split(",") if p.strip()],
    "algorithm": str,
    "protocol": str,
    "k": float,
    "u": int,
    "i": int,
    "u_grid": str,
    "i_grid": str,
    "min_corated": int,
    "pd_sigma": float,
    "train_fraction": float,
    "seed": int,
    "out_dir": str,
    "out": str,
    "threads": int,
    "samples": int,
    "permutations": int,
}

_DEFAULTS = {
    "scale": "0:5",
    "algorithms": ["noisy2", "correlation"],
    "protocols": ["allbut1"],
    "algorithm": "noisy1",
    "protocol": "allbut1",
    "k": 1.0,
    "u": 50,
    "i": 20,
    "min_corated": None,
    "pd_sigma": 1.0,
    "train_fraction": 0.6,
    "out_dir": "results",
    "threads": 1,
    "samples": DEFAULT_SAMPLES,
    "permutations": DEFAULT_PERMUTATIONS,
}


def resolve(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """Merge CLI values over config-file values over defaults."""
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = load_config_file(args.config)
    unknown = set(file_values) - set(_CONVERTERS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for key in keys:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_values:
            merged[key] = _CONVERTERS[key](file_values[key])
        else:
            merged[key] = _DEFAULTS.get(key)
    return merged


def _validate_run(cfg: dict, parser: _Parser, need_dataset: bool = True) -> None:
    if need_dataset and not cfg.get("dataset"):
        parser.error("a dataset is required (--dataset or config file)")
    if cfg.get("seed") is None:
        parser.error("a seed is required (--seed or config file); there is no clock default")
    checks = [
        ("k", lambda v: v >= 0, "k must be >= 0"),
        ("u", lambda v: v >= 0, "u must be >= 0"),
        ("i", lambda v: v >= 0, "i must be >= 0"),
        ("min_corated", lambda v: v is None or v >= 1, "min_corated must be >= 1"),
        ("pd_sigma", lambda v: v > 0, "pd_sigma must be > 0"),
        ("train_fraction", lambda v: v is None or 0 < v < 1, "train_fraction must be in (0, 1)"),
        ("threads", lambda v: v is None or v >= 1, "threads must be >= 1"),
        ("samples", lambda v: v is None or v >= 1, "samples must be >= 1"),
        ("permutations", lambda v: v is None or v >= 1, "permutations must be >= 1"),
    ]
    for key, ok, message in checks:
        if key in cfg and not ok(cfg[key]):
            parser.error(message)
    for name in cfg.get("algorithms", []) or []:
        if name not in ALGORITHM_NAMES:
            parser.error(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHM_NAMES)}")
    if "algorithm" in cfg and cfg["algorithm"] not in ALGORITHM_NAMES:
        parser.error(f"unknown algorithm {cfg['algorithm']!r}")


def cmd_ingest(args: argparse.Namespace, parser: _Parser) -> int:
    cfg = resolve(args, ["dataset", "scale", "out"])
    if not cfg["dataset"]:
        parser.error("--input is required")
    if not cfg["out"]:
        parser.error("--output is required")
    scale = parse_scale(cfg["scale"])
    matrix = load_ratings(cfg["dataset"], scale)

    out = Path(cfg["out"])
    triples = "".join(f"{u}\t{i}\t{r}\n" for u, i, r in matrix.iter_triples())
    users = "".join(
        f"{label}\t{idx}\n" for idx, label in enumerate(matrix.user_labels or [])
    )
    items = "".join(
        f"{label}\t{idx}\n" for idx, label in enumerate(matrix.item_labels or [])
    )
    out.write_text(triples, encoding="utf-8")
    Path(f"{out}.users.map").write_text(users, encoding="utf-8")
    Path(f"{out}.items.map").write_text(items, encoding="utf-8")
    print(
        f"ingested {matrix.n_ratings} ratings: {matrix.n_users} users, "
        f"{matrix.n_items} items, scale {scale.min}..{scale.max}"
    )
    return EXIT_OK


def _prepare_corpus(cfg: dict):
    scale = parse_scale(cfg["scale"])
    matrix = load_ratings(cfg["dataset"], scale)
    train, test_users = partition_users(matrix, cfg["train_fraction"], cfg["seed"])
    return scale, train, test_users


def cmd_evaluate(args: argparse.Namespace, parser: _Parser) -> int:
    keys = [
        "dataset", "scale", "algorithms", "protocols", "k", "u", "i",
        "min_corated", "pd_sigma", "train_fraction", "seed", "out_dir", "threads",
    ]
    cfg = resolve(args, keys)
    _validate_run(cfg, parser)
    _, train, test_users = _prepare_corpus(cfg)

    specs = [SplitSpec.parse(p) for p in cfg["protocols"]]
    report = EvalReport(train_mean=train.mean_rating())
    tagged = []
    for spec in specs:
        for name in cfg["algorithms"]:
            algorithm = make_algorithm(
                name, k=cfg["k"], u_max=cfg["u"], i_max=cfg["i"],
                min_corated=cfg["min_corated"], pd_sigma=cfg["pd_sigma"],
            )
            records, row = run_protocol(
                train, test_users, spec, algorithm, cfg["seed"], threads=cfg["threads"]
            )
            report.rows.append(row)
            tagged.extend((name, spec.label, rec) for rec in records)

    # all scoring succeeded; only now touch the filesystem
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(format_report(report), encoding="utf-8")
    payload = {"config": {k: cfg[k] for k in sorted(cfg)}, "report": report.to_dict()}
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_records(out_dir / "records.csv", tagged)
    print(format_report(report))
    print(f"wrote {out_dir}/report.txt, report.json, records.csv")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, parser: _Parser) -> int:
    keys = [
        "dataset", "scale", "algorithm", "protocol", "u_grid", "i_grid", "k",
        "min_corated", "pd_sigma", "train_fraction", "seed", "out", "threads",
    ]
    cfg = resolve(args, keys)
    _validate_run(cfg, parser)
    if not cfg["u_grid"] or not cfg["i_grid"]:
        parser.error("--u-grid and --i-grid are required")
    if cfg["algorithm"] not in ("noisy1", "noisy2"):
        parser.error("sweep applies to the sensor-count parameters of noisy1/noisy2")
    u_grid = parse_grid(cfg["u_grid"])
    i_grid = parse_grid(cfg["i_grid"])
    _, train, test_users = _prepare_corpus(cfg)
    spec = SplitSpec.parse(cfg["protocol"])

    rows = []
    for u in u_grid:
        cells = []
        for i in i_grid:
            algorithm = make_algorithm(
                cfg["algorithm"], k=cfg["k"], u_max=u, i_max=i,
                min_corated=cfg["min_corated"],
            )
            _, row = run_protocol(
                train, test_users, spec, algorithm, cfg["seed"], threads=cfg["threads"]
            )
            cells.append(row.mae)
        rows.append(cells)

    lines = ["u\\i\t" + "\t".join(str(i) for i in i_grid)]
    for u, cells in zip(u_grid, rows):
        lines.append(
            str(u) + "\t" + "\t".join("-" if c is None else f"{c:.6f}" for c in cells)
        )
    grid_text = "\n".join(lines) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(grid_text, encoding="utf-8")
    print(grid_text, end="")
    return EXIT_OK


def cmd_significance(args: argparse.Namespace, parser: _Parser) -> int:
    cfg = resolve(args, ["seed", "samples", "permutations", "out"])
    _validate_run(cfg, parser, need_dataset=False)
    groups_a = read_records(args.records_a)
    groups_b = read_records(args.records_b)
    algos_a = {a for a, _ in groups_a}
    algos_b = {a for a, _ in groups_b}
    if len(algos_a) != 1 or len(algos_b) != 1:
        raise ValueError("each records file must contain exactly one algorithm")
    name_a, name_b = algos_a.pop(), algos_b.pop()
    protocols = [p for _, p in groups_a]
    if set(protocols) != {p for _, p in groups_b}:
        raise ValueError("records files cover different protocols")

    lines = [f"protocol\t{name_a} vs. {name_b}\t{name_b} vs. {name_a}"]
    for protocol in protocols:
        diffs = paired_sample_diffs(
            groups_a[(name_a, protocol)],
            groups_b[(name_b, protocol)],
            n_samples=cfg["samples"],
            seed=cfg["seed"],
        )
        fwd = randomization_test(diffs, cfg["permutations"], cfg["seed"])
        rev = randomization_test(-diffs, cfg["permutations"], cfg["seed"])
        lines.append(f"{protocol}\t{fwd:.4f}\t{rev:.4f}")
    text = "\n".join(lines) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="sensorcf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value run description file")
        p.add_argument("--seed", type=int, help="master random seed (required)")

    p_ingest = sub.add_parser("ingest", help="validate and normalize a ratings file")
    p_ingest.add_argument("--input", dest="dataset", required=True)
    p_ingest.add_argument("--scale", help="rating scale, 'lo:hi' or comma list")
    p_ingest.add_argument("--output", dest="out", required=True,
                          help="normalized triples path; id maps go beside it")
    p_ingest.add_argument("--config", help="key=value run description file")
    p_ingest.set_defaults(func=cmd_ingest)

    p_eval = sub.add_parser("evaluate", help="score algorithms under protocols")
    add_common(p_eval)
    p_eval.add_argument("--dataset")
    p_eval.add_argument("--scale")
    p_eval.add_argument("--algorithms", type=_CONVERTERS["algorithms"],
                        help="comma list from: " + ", ".join(ALGORITHM_NAMES))
    p_eval.add_argument("--protocols", type=_CONVERTERS["protocols"],
                        help="comma list, e.g. allbut1,given2,given5,given10")
    p_eval.add_argument("--k", type=float, help="dummy observation weight")
    p_eval.add_argument("--u", type=int, help="number of user sensors kept (U)")
    p_eval.add_argument("--i", type=int, help="number of item sensors kept (I)")
    p_eval.add_argument("--min-corated", dest="min_corated", type=int)
    p_eval.add_argument("--pd-sigma", dest="pd_sigma", type=float)
    p_eval.add_argument("--train-fraction", dest="train_fraction", type=float)
    p_eval.add_argument("--out-dir", dest="out_dir")
    p_eval.add_argument("--threads", type=int)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="grid of MAE over sensor counts")
    add_common(p_sweep)
    p_sweep.add_argument("--dataset")
    p_sweep.add_argument("--scale")
    p_sweep.add_argument("--algorithm", choices=("noisy1", "noisy2"))
    p_sweep.add_argument("--protocol")
    p_sweep.add_argument("--u-grid", dest="u_grid",
                         help="user-sensor counts: 'start:stop:step' or comma list")
    p_sweep.add_argument("--i-grid", dest="i_grid")
    p_sweep.add_argument("--k", type=float)
    p_sweep.add_argument("--min-corated", dest="min_corated", type=int)
    p_sweep.add_argument("--train-fraction", dest="train_fraction", type=float)
    p_sweep.add_argument("--out", help="grid output path (tab-delimited)")
    p_sweep.add_argument("--threads", type=int)
    p_sweep.set_defaults(func=cmd_sweep)

    p_sig = sub.add_parser("significance", help="randomization test between two record dumps")
    add_common(p_sig)
    p_sig.add_argument("--records-a", required=True)
    p_sig.add_argument("--records-b", required=True)
    p_sig.add_argument("--samples", type=int)
    p_sig.add_argument("--permutations", type=int)
    p_sig.add_argument("--out")
    p_sig.set_defaults(func=cmd_significance)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except InternalInvariantError as exc:
        print(f"sensorcf: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (RatingsFormatError, OSError, ValueError) as exc:
        print(f"sensorcf: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``run``, ``sweep`` and ``inspect-bank``."""
import argparse
import csv
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import export
from .config import (
    FIELD_NAMES,
    OUTPUT_ROOT_ENV,
    ConfigError,
    RunConfig,
    _format,
    parse_config,
)
from .core import FormatError
from .harness import TrainingAborted, run_experiment, write_metrics_csv
from .memory_bank import load_bank, save_bank, top_n_order

SWEEP_KEYS = ("n0", "beta", "n_top", "transforms")
MINUS_ROW = "ECAP-minus"


def params_digest(state):
    h = hashlib.sha256()
    h.update(state.student.params.tobytes())
    h.update(state.teacher.tobytes())
    return h.hexdigest()


def cmd_run(cfg, callback=None):
    """Train once and write the artifacts under ``cfg.output_dir``.

    Returns ``(status, result)``; status is 1 and result None when training
    aborts or a file cannot be written.
    """
    out = cfg.output_dir
    try:
        export.ensure_dir(out)
        res = run_experiment(cfg, keep_samples=cfg.num_png, callback=callback)
        with open(os.path.join(out, "config.txt"), "w") as f:
            f.write(cfg.to_text())
        write_metrics_csv(res.series, os.path.join(out, "metrics.csv"))
        with open(os.path.join(out, "report.txt"), "w") as f:
            f.write(f"variant {cfg.variant}  seed {cfg.seed}  iterations {cfg.iterations}\n")
            f.write(res.metrics.report())
        save_bank(res.state.banks, os.path.join(out, "bank.bin"))
        sample_dir = export.ensure_dir(os.path.join(out, "samples"))
        for it, mixed, _ in res.samples:
            export.save_mixed_triplet(mixed, os.path.join(sample_dir, f"iter{it:05d}"))
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1, None
    except OSError as exc:
        print(f"cannot write artifacts: {exc}", file=sys.stderr)
        return 1, None
    return 0, res


@dataclass
class SweepRow:
    name: str
    cfg: RunConfig
    metrics: object
    series: np.ndarray
    digest: str
    delta_miou: float = 0.0


def _row_name(key, value):
    if key == "transforms" and not value:
        return MINUS_ROW
    return f"{key}={_format(value)}"


def sweep_rows(cfg, grid, reference=False):
    """(name, RunConfig) per grid point; the unmodified config comes first.

    Points equal to the base config fold into its row, so a one-point grid
    at the base values is a single plain run.
    """
    bad = sorted(set(grid) - set(SWEEP_KEYS))
    if bad:
        raise ConfigError(f"cannot sweep {', '.join(bad)}; allowed: {', '.join(SWEEP_KEYS)}")
    rows = [("base", cfg)]
    seen = {cfg}
    for key, values in grid.items():
        for v in values:
            point = cfg.update(**{key: v})
            if point in seen:
                continue
            seen.add(point)
            rows.append((_row_name(key, getattr(point, key)), point))
    if reference:
        rows.append(("baseline", cfg.update(variant="baseline")))
    slug = {name: name.replace("=", "_") for name, _ in rows}
    return [(name, c.update(output_dir=os.path.join(cfg.output_dir, slug[name])))
            for name, c in rows]


def _run_row(item):
    name, c = item
    status, res = cmd_run(c)
    if status:
        raise TrainingAborted(f"sweep row {name} failed")
    return res.metrics, res.series_array(), params_digest(res.state)


def cmd_sweep(cfg, grid, reference=False, jobs=1, callback=None):
    """One run per grid point, compared by mIoU against the base row.

    ``callback(name, state, record)`` sees every step of every row; it needs
    ``jobs=1``.
    """
    rows = sweep_rows(cfg, grid, reference)
    if callback is not None and jobs != 1:
        raise ValueError("a step callback requires jobs=1")
    if jobs == 1:
        outs = []
        for name, c in rows:
            cb = None if callback is None else (lambda s, r, n=name: callback(n, s, r))
            status, res = cmd_run(c, callback=cb)
            if status:
                raise TrainingAborted(f"sweep row {name} failed")
            outs.append((res.metrics, res.series_array(), params_digest(res.state)))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_run_row, rows))
    result = [SweepRow(name, c, *o) for (name, c), o in zip(rows, outs)]
    base = result[0].metrics.miou
    for r in result:
        r.delta_miou = r.metrics.miou - base
    write_sweep_report(result, cfg.output_dir)
    return result


def sweep_table(rows):
    head = f"{'row':<16}{'mIoU':>8}{'dmIoU':>8}{'tgt acc':>9}{'noise':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        m = r.metrics
        lines.append(f"{r.name:<16}{m.miou:8.2f}{r.delta_miou:+8.2f}"
                     f"{m.target_accuracy:9.2f}{m.target_loss_noise_ratio:8.2f}")
    return "\n".join(lines) + "\n"


def write_sweep_report(rows, out_dir):
    export.ensure_dir(out_dir)
    with open(os.path.join(out_dir, "sweep.txt"), "w") as f:
        f.write(sweep_table(rows))
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "miou", "delta_miou", "target_accuracy", "loss_noise_ratio"])
        for r in rows:
            m = r.metrics
            w.writerow([r.name, repr(m.miou), repr(r.delta_miou), repr(m.target_accuracy),
                        repr(m.target_loss_noise_ratio)])


def cmd_inspect_bank(snapshot, class_id, k, out_dir):
    """Export the ``k`` most confident entries of one bank as PNG pairs."""
    banks = load_bank(snapshot)
    if not 0 <= class_id < banks.num_classes:
        raise ValueError(f"unknown class {class_id}; snapshot has classes 0..{banks.num_classes - 1}")
    if k < 1:
        raise ValueError("k must be positive")
    bank = banks[class_id]
    target = export.ensure_dir(os.path.join(out_dir, f"class{class_id}"))
    exported = []
    lines = []
    for rank, idx in enumerate(top_n_order(bank, k)):
        e = bank.entries[idx]
        prefix = os.path.join(target, f"rank{rank:02d}_img{e.image_id}")
        exported.append((e, export.save_entry_pair(e, prefix)))
        lines.append(f"{rank} image {e.image_id} confidence {e.confidence!r}\n")
    with open(os.path.join(target, "entries.txt"), "w") as f:
        f.writelines(lines)
    return exported


# -- argument parsing -------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="key = value file; flags override it")
    group = p.add_argument_group("settings (override the config file)")
    defaults = RunConfig(output_dir=f"${OUTPUT_ROOT_ENV}/run")
    for f in fields(RunConfig):
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.insert(0, f"--{f.name.replace('_', '-')}")
        default = _format(getattr(defaults, f.name))
        group.add_argument(*flags, dest=f.name, default=None, metavar="V",
                           help=f"{f.metadata['help']} (default: {default})")


def _overrides(ns):
    return {k: v for k, v in vars(ns).items() if k in FIELD_NAMES and v is not None}


def _parse_grid(specs):
    grid = {}
    for spec in specs or ():
        if "=" not in spec:
            raise ConfigError(f"grid entry {spec!r}: expected key=v1,v2,...")
        key, vals = spec.split("=", 1)
        grid.setdefault(key.strip(), []).extend(v for v in vals.split(",") if v.strip())
    return grid


def build_parser():
    p = argparse.ArgumentParser(prog="ecap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train once and export artifacts")
    _add_config_flags(run)

    sw = sub.add_parser("sweep", help="one-at-a-time sensitivity sweep")
    sw.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                    help=f"values to try for one of {', '.join(SWEEP_KEYS)}; repeatable")
    sw.add_argument("--reference", action="store_true", help="add a baseline-variant row")
    sw.add_argument("--jobs", type=int, default=1, help="grid points run in parallel")
    _add_config_flags(sw)

    ins = sub.add_parser("inspect-bank", help="export the most confident entries of a bank")
    ins.add_argument("snapshot")
    ins.add_argument("--class", dest="class_id", type=int, required=True)
    ins.add_argument("-k", type=int, default=5)
    ins.add_argument("--output-dir", dest="out_dir",
                     help="default: the snapshot's directory + /inspect")
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        if ns.command == "inspect-bank":
            out = ns.out_dir or os.path.join(os.path.dirname(os.path.abspath(ns.snapshot)),
                                             "inspect")
            for e, paths in cmd_inspect_bank(ns.snapshot, ns.class_id, ns.k, out):
                print(f"image {e.image_id}  confidence {e.confidence:.4f}  {paths[0]}")
            return 0
        cfg = parse_config(ns.config, _overrides(ns))
        if ns.command == "run":
            status, res = cmd_run(cfg)
            if status == 0:
                print(res.metrics.report(), end="")
                print(f"artifacts in {cfg.output_dir}")
            return status
        rows = cmd_sweep(cfg, _parse_grid(ns.grid), reference=ns.reference, jobs=ns.jobs)
        print(sweep_table(rows), end="")
        return 0
    except (ConfigError, FormatError, ValueError, OSError, TrainingAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())

import dataclasses
import os

import numpy as np
import pytest

from ecap.cli import MINUS_ROW, cmd_inspect_bank, cmd_run, cmd_sweep, main, sweep_rows
from ecap.config import ConfigError, RunConfig
from ecap.core import FormatError, decode_one_hot
from ecap.export import LABEL_PALETTE, label_rgb, read_png
from ecap.harness import read_metrics_csv
from ecap.memory_bank import load_bank

TINY = dict(iterations=30, n_source=20, n_target=25, height=16, width=16, beta=0.1,
            split_window=30, final_k=10, num_png=2)


def tiny(tmp_path, **kw):
    return RunConfig(output_dir=str(tmp_path / "out"), **{**TINY, **kw})


def same_metrics(a, b):
    # assert_equal treats nan == nan, which classes without bank pixels produce
    np.testing.assert_equal(dataclasses.asdict(a), dataclasses.asdict(b))


def all_files(root):
    return sorted(os.path.join(d, f) for d, _, fs in os.walk(root) for f in fs)


def test_run_writes_artifacts_under_output_dir(tmp_path):
    cfg = tiny(tmp_path)
    status, res = cmd_run(cfg)
    assert status == 0
    out = cfg.output_dir
    np.testing.assert_array_equal(read_metrics_csv(os.path.join(out, "metrics.csv")),
                                  res.series_array())
    assert "mIoU" in open(os.path.join(out, "report.txt")).read()
    assert load_bank(os.path.join(out, "bank.bin")) == res.state.banks
    pngs = [f for f in all_files(out) if f.endswith(".png")]
    assert len(pngs) == 3 * cfg.num_png
    assert all(f.startswith(out + os.sep) for f in all_files(out))

    it, mixed, _ = res.samples[-1]
    label_png = read_png(os.path.join(out, "samples", f"iter{it:05d}_label.png"))
    np.testing.assert_array_equal(label_png, label_rgb(decode_one_hot(mixed.label)))


def test_rerun_overwrites_identically(tmp_path):
    cfg = tiny(tmp_path)
    cmd_run(cfg)
    first = {f: open(f, "rb").read() for f in all_files(cfg.output_dir)}
    cmd_run(cfg)
    second = {f: open(f, "rb").read() for f in all_files(cfg.output_dir)}
    assert first == second


def test_run_reports_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    status, res = cmd_run(tiny(tmp_path).update(output_dir=str(blocker / "sub")))
    assert status == 1 and res is None


def test_label_palette_is_fixed():
    assert LABEL_PALETTE.shape == (5, 3)
    rgb = label_rgb(np.array([[0, 4, -1]]))
    assert rgb[0, 0].tolist() == LABEL_PALETTE[0].tolist()
    assert rgb[0, 2].tolist() == [0, 0, 0]


def test_sweep_single_point_matches_run(tmp_path):
    cfg = tiny(tmp_path)
    rows = cmd_sweep(cfg, {"n0": ["0.5"]})
    assert [r.name for r in rows] == ["base", "n0=0.5"]
    _, alone = cmd_run(tiny(tmp_path / "alone", n0=0.5))
    same_metrics(rows[1].metrics, alone.metrics)
    assert rows[1].delta_miou == alone.metrics.miou - rows[0].metrics.miou
    assert os.path.exists(os.path.join(cfg.output_dir, "sweep.txt"))


def test_sweep_point_equal_to_base_folds_into_base(tmp_path):
    cfg = tiny(tmp_path)
    rows = cmd_sweep(cfg, {"n0": ["1.0"]})
    _, alone = cmd_run(tiny(tmp_path / "alone"))
    assert len(rows) == 1
    same_metrics(rows[0].metrics, alone.metrics)


def test_sweep_row_names_and_reference(tmp_path):
    cfg = tiny(tmp_path)
    names = [n for n, _ in sweep_rows(cfg, {"transforms": ["off"], "n_top": ["5"]}, True)]
    assert names == ["base", MINUS_ROW, "n_top=5", "baseline"]
    with pytest.raises(ConfigError, match="tau"):
        sweep_rows(cfg, {"tau": ["0.9"]})


def test_sweep_closed_gate_equals_reference(tmp_path):
    rows = cmd_sweep(tiny(tmp_path), {"n0": ["0"]}, reference=True)
    by = {r.name: r for r in rows}
    assert by["n0=0.0"].digest == by["baseline"].digest
    assert by["n0=0.0"].metrics.miou == by["baseline"].metrics.miou


def test_inspect_bank_exports_sorted_pairs(tmp_path):
    cfg = tiny(tmp_path, iterations=60)
    _, res = cmd_run(cfg)
    snap = os.path.join(cfg.output_dir, "bank.bin")
    c = max(range(5), key=lambda k: len(res.state.banks[k]))
    out = os.path.join(cfg.output_dir, "inspect")
    got = cmd_inspect_bank(snap, c, 3, out)
    confs = [e.confidence for e, _ in got]
    assert confs == sorted(confs, reverse=True)
    assert confs[0] == max(res.state.banks[c].confidences())
    for e, (_, lab) in got:
        np.testing.assert_array_equal(read_png(lab), label_rgb(decode_one_hot(e.label)))
    with pytest.raises(ValueError, match="unknown class"):
        cmd_inspect_bank(snap, 7, 3, out)


def test_inspect_bank_rejects_corrupt_snapshot(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTABANK" + bytes(20))
    with pytest.raises(FormatError):
        cmd_inspect_bank(str(p), 0, 3, str(tmp_path))
    assert main(["inspect-bank", str(p), "--class", "0"]) == 1


def test_main_flags_override_config(tmp_path, capsys):
    conf = tmp_path / "run.cfg"
    conf.write_text("".join(f"{k} = {v}\n" for k, v in TINY.items()) + "n0 = 1.0\n")
    out = tmp_path / "m"
    assert main(["run", "--config", str(conf), "--n0", "0.53", "--output-dir", str(out)]) == 0
    assert "n0 = 0.53" in (out / "config.txt").read_text()
    assert "mIoU" in capsys.readouterr().out


def test_main_rejects_bad_value(tmp_path, capsys):
    assert main(["run", "--beta", "1.5", "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "beta" in err and "(0, 1)" in err


def test_main_sweep(tmp_path, capsys):
    args = ["sweep", "--grid", "transforms=off", "--output-dir", str(tmp_path / "s")]
    args += [f"--{k}={v}" for k, v in TINY.items()]
    assert main(args) == 0
    assert MINUS_ROW in capsys.readouterr().out

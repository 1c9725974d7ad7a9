"""Acceptance criteria 1-9, each at its stated tolerance, one pass/fail line per criterion."""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from simnets import pipeline
from simnets.verify import run_suite

ROOT = Path(__file__).resolve().parents[1]
DESK_CONFIG = ROOT / "demos" / "desk_scale.json"
REALIZATION_PREFIXES = ("relu", "maxpool", "avgpool")


def report_line(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")


def _suite(capsys, number, title, name, max_seconds=None, keep=None, **kw):
    rep = run_suite(name, seed=0, **kw)
    results = [r for r in rep.results if keep is None or keep(r.name)]
    ok = all(r.passed for r in results) and bool(results)
    detail = f"{sum(r.passed for r in results)}/{len(results)} properties, {rep.seconds:.1f}s"
    if max_seconds is not None:
        ok = ok and rep.seconds < max_seconds
        detail += f" (limit {max_seconds}s)"
    failed = [r.name for r in results if not r.passed]
    if failed:
        detail += f"; failed: {', '.join(failed)}"
    report_line(capsys, number, title, ok, detail)
    assert ok, rep.format()


def test_criterion_1_mex_suite(capsys):
    _suite(capsys, 1, "MEX operator suite", "mex", max_seconds=5.0,
           keep=lambda n: not n.startswith(REALIZATION_PREFIXES))


def test_criterion_2_gradient_suite(capsys):
    _suite(capsys, 2, "gradient suite", "grad", max_seconds=60.0)


def test_criterion_3_mlp_kernel_equivalence(capsys):
    _suite(capsys, 3, "MLP <-> kernel equivalence", "kernel-mlp", count=1000)


def test_criterion_4_patch_svm_equivalence(capsys):
    _suite(capsys, 4, "patch network <-> patch SVM equivalence", "kernel-patch", nets=100, inputs=100)


def test_criterion_5_psd_suite(capsys):
    _suite(capsys, 5, "kernel PSD suite", "psd", seeds=50, p_witness=3.0)


def test_criterion_6_ggm_suite(capsys):
    _suite(capsys, 6, "GGM suite", "ggm", max_seconds=120.0, runs=20)


def test_criterion_7_convnet_realizations(capsys):
    _suite(capsys, 7, "ConvNet realization suite", "mex", keep=lambda n: n.startswith(REALIZATION_PREFIXES))


def test_criterion_9_decision_regions(capsys):
    _suite(capsys, 9, "decision-region demo", "regions")


def _cifar_dir():
    """CIFAR-10 location from SIMNETS_CIFAR10, when the binary batches are really there."""
    cand = os.environ.get("SIMNETS_CIFAR10")
    if not cand:
        return None
    root = Path(cand)
    if any((d / "data_batch_1.bin").exists() for d in (root, root / "cifar-10-batches-bin")):
        return cand
    return None


def _run(cfg, prepared, method):
    cfg = json.loads(json.dumps(cfg))
    cfg["init"]["method"] = method
    t0 = time.perf_counter()
    net = pipeline.init_model(cfg, prepared)
    hist = pipeline.train_model(net, prepared, cfg)
    acc = pipeline.evaluate_model(net, prepared.test).accuracy
    return acc, time.perf_counter() - t0, hist


@pytest.mark.slow
def test_criterion_8_desk_scale_end_to_end(capsys):
    overrides = []
    cifar = _cifar_dir()
    if cifar:
        overrides = ["data.source=\"cifar10\"", f"data.dir={json.dumps(cifar)}"]
    cfg = pipeline.load_config(DESK_CONFIG, overrides)
    t0 = time.perf_counter()
    prepared = pipeline.prepare(cfg)
    prep_seconds = time.perf_counter() - t0
    ggm_acc, ggm_seconds, ggm_hist = _run(cfg, prepared, "ggm")
    rnd_acc, rnd_seconds, rnd_hist = _run(cfg, prepared, "random")
    total_ggm = prep_seconds + ggm_seconds
    checks = {"(a) accuracy >= 0.45": ggm_acc >= 0.45,
              "(b) ggm >= random": ggm_acc >= rnd_acc,
              "(c) runtime <= 45 min": total_ggm <= 45 * 60}
    source = "cifar10" if cifar else "synthetic"
    detail = (f"{source} {len(prepared.train)}/{len(prepared.test)}, ggm acc {ggm_acc:.3f}, random acc {rnd_acc:.3f}, "
              f"ggm run {total_ggm / 60:.1f} min, random run {rnd_seconds / 60:.1f} min; "
              + ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items()))
    report_line(capsys, 8, "desk-scale end-to-end", all(checks.values()), detail)
    assert all(checks.values()), detail

"""Acceptance criteria 1-9, each run at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import time
from datetime import datetime, timezone

import numpy as np
import pytest

from actisleep.cli import main as cli_main
from actisleep.dataset import SMOTEOversampler, smote
from actisleep.evaluation import auc_score
from actisleep.ingest import EpochSeries
from actisleep.models import ModelSpec, paper_best_spec
from actisleep.nn.kernels import Conv1DLayer, conv1d_wide_forward, max_pool
from actisleep.pipeline import (cohort_records, fit_model, prepare, run_architectures,
                                score_test)
from actisleep.segmentation import compute_waso, detect_sleep_periods
from actisleep.synth import CohortSpec, generate

from gradients import LAYER_CHECKS
from oracles import (brute_force_periods, concordance_auc, find_convex_parents,
                     knn_bruteforce, random_minute_axes)

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
ARCHS = ("lr", "mlp", "cnn", "rnn", "lstm")


def test_criterion_1_gradient_suite(acceptance):
    t0 = time.perf_counter()
    worst = {}
    for k, (name, check) in enumerate(LAYER_CHECKS.items()):
        rng = np.random.default_rng(1000 + k)
        worst[name] = max(check(rng) for _ in range(100))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 30
    detail = ", ".join(f"{n} {e:.1e}" for n, e in worst.items()) + f"; 100 instances each, {elapsed:.1f}s"
    acceptance(1, "gradient suite", ok, detail)
    assert ok


def test_criterion_2_segmentation_oracle(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    mismatches = periods = 0
    for _ in range(1000):
        axes = random_minute_axes(rng, int(rng.integers(1, 5001)))
        s = EpochSeries.from_axes("s", T0, axes)
        got = detect_sleep_periods(s)
        expected = brute_force_periods(axes, s.vertical)
        periods += len(expected)
        got_rows = [(p.bedtime, p.onset, p.awakening, p.waso_min, p.latency_min) for p in got]
        same = got_rows == expected
        for p, (b, o, a, w, lat) in zip(got, expected):
            length = a - o + 1
            same &= compute_waso(s, p) == w and p.latency_min == lat
            same &= p.efficiency == (length - w) / (length + lat)
        mismatches += not same
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    acceptance(2, "segmentation oracle", ok,
               f"{mismatches} mismatching series of 1000 ({periods} periods), {elapsed:.1f}s")
    assert ok


def test_criterion_3_auc_oracle(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 2001))
        labels = rng.integers(0, 2, n)
        labels[rng.choice(n, 2, replace=False)] = (0, 1)
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))  # 1-3 decimals: many ties
        worst = max(worst, abs(auc_score(scores, labels) - concordance_auc(scores, labels)))
    ok = worst < 1e-9
    acceptance(3, "AUC oracle", ok, f"max |trapezoid - concordance| = {worst:.1e} over 500 sets")
    assert ok


def test_criterion_4_smote_geometry(acceptance):
    rng = np.random.default_rng(4)
    unexplained = total = 0
    for _ in range(20):
        X = rng.random((int(rng.integers(6, 40)), int(rng.integers(2, 6))))
        k = int(rng.integers(1, min(6, len(X))))
        syn = smote(X, k, float(rng.uniform(0.2, 3.0)), int(rng.integers(2**31)))
        neighbors = knn_bruteforce(X, k)
        total += len(syn)
        unexplained += sum(not find_convex_parents(s, X, neighbors) for s in syn)
    # the training partition of a synthetic cohort, intensity features
    records = cohort_records(generate(CohortSpec(n_subjects=30, seed=4)).series)
    data = prepare(records, seed=4, input_repr="intensity4", use_smote=False)
    X, y = data.split.X_train, data.split.y_train.astype(int)
    Xr, yr = SMOTEOversampler(5, 4).fit_resample(X, y)
    counts = np.bincount(yr, minlength=2)
    minority = int(np.argmin(np.bincount(y)))
    Xm = X[y == minority]
    neighbors = knn_bruteforce(Xm, 5)
    syn = Xr[len(X):]
    total += len(syn)
    unexplained += sum(not find_convex_parents(s, Xm, neighbors) for s in syn)
    balanced = abs(int(counts[0]) - int(counts[1])) <= 1
    ok = unexplained == 0 and balanced
    acceptance(4, "SMOTE geometry", ok,
               f"{total - unexplained}/{total} synthetic points explained; "
               f"post-SMOTE classes {counts[0]}:{counts[1]}")
    assert ok


@pytest.fixture(scope="module")
def default_cohort_records():
    return cohort_records(generate(CohortSpec()).series)


@pytest.mark.slow
def test_criterion_5_planted_signal_learnability(acceptance, default_cohort_records):
    t0 = time.perf_counter()
    out = run_architectures(default_cohort_records, seed=0)
    elapsed = time.perf_counter() - t0
    auc = {a: o.report.auc for a, o in out.items()}
    ok = (auc["cnn"] >= 0.85 and auc["mlp"] >= 0.80 and auc["cnn"] >= auc["lr"] + 0.05
          and auc["mlp"] >= auc["lr"] + 0.05 and elapsed < 600)
    detail = ", ".join(f"{a} {v:.3f}" for a, v in auc.items()) + f"; all five in {elapsed:.0f}s"
    acceptance(5, "planted-signal learnability", ok, detail)
    assert ok


@pytest.mark.slow
def test_criterion_6_null_signal(acceptance):
    per_seed = {a: [] for a in ARCHS}
    for seed in range(5):
        records = cohort_records(generate(CohortSpec(signal="none", seed=seed)).series)
        for arch, outcome in run_architectures(records, seed=seed).items():
            per_seed[arch].append(outcome.report.auc)
    means = {a: float(np.mean(v)) for a, v in per_seed.items()}
    ok = all(0.45 <= m <= 0.55 for m in means.values())
    detail = "; ".join(f"{a} mean {means[a]:.3f} (" + " ".join(f"{v:.2f}" for v in per_seed[a]) + ")"
                       for a in ARCHS)
    acceptance(6, "null-signal sanity, mean over seeds 0-4", ok, detail)
    assert ok


def _full_pipeline(root, seed):
    run = lambda *argv: cli_main([str(a) for a in argv])
    assert run("synth", "--subjects", 20, "--seed", seed, "--out-dir", root / "cohort") == 0
    cohort = root / "cohort" / "cohort.csv"
    assert run("ingest", "--in", cohort, "--out", root / "minutes.csv") == 0
    assert run("segment", "--in", root / "minutes.csv", "--out", root / "periods.csv") == 0
    assert run("dataset", "--in", root / "minutes.csv", "--periods", root / "periods.csv",
               "--seed", seed, "--out-dir", root / "data") == 0
    outputs = []
    for arch in ARCHS:
        assert run("train", "--data", root / "data", "--arch", arch, "--seed", seed,
                   "--max-epochs", 3, "--out-dir", root / arch) == 0
        assert run("eval", "--model", root / arch / "model.ckpt", "--data", root / "data",
                   "--name", arch, "--out-dir", root / arch / "eval") == 0
        outputs += [root / arch / "eval" / "metrics.csv", root / arch / "eval" / "roc.csv"]
    return outputs


def test_criterion_7_determinism(acceptance, tmp_path):
    first = _full_pipeline(tmp_path / "a", seed=7)
    second = _full_pipeline(tmp_path / "b", seed=7)
    differing = [p.relative_to(tmp_path / "a") for p, q in zip(first, second)
                 if p.read_bytes() != q.read_bytes()]
    ok = not differing
    acceptance(7, "determinism", ok,
               f"{len(first) - len(differing)}/{len(first)} metrics/ROC CSVs byte-identical across two runs")
    assert ok


def test_criterion_8_conv_pool_shape_law(acceptance):
    rng = np.random.default_rng(8)
    failures = []
    for L in (2, 3, 4, 5):
        layer = Conv1DLayer(rng.standard_normal((2, L, 1)), "relu")
        for T in range(1, 201):
            maps = conv1d_wide_forward(layer, rng.standard_normal((T, 1)))
            pooled = max_pool(maps, 2, "wide")
            if maps.shape != (T + L - 1, 2) or pooled.shape != maps.shape:
                failures.append((T, L))
    ok = not failures
    acceptance(8, "conv/pool shape law", ok,
               f"{800 - len(failures)}/800 (T, L) pairs: maps T+L-1, p=2 pooling keeps the feature count")
    assert ok


def test_criterion_9_paper_configs(acceptance):
    records = cohort_records(generate(CohortSpec(n_subjects=20, seed=9)).series)
    specs = {a: paper_best_spec(a) for a in ARCHS}
    specs["mlp_intensity"] = paper_best_spec("mlp", input_repr="intensity4", minibatch=5, dropout=0.3)
    specs["lr_intensity"] = paper_best_spec("lr", input_repr="intensity4")
    done = {}
    for name, spec in specs.items():
        data = prepare(records, seed=9, input_repr=spec.input_repr)
        report = score_test(fit_model(spec, data, seed=9), data)
        done[name] = report.auc
    ok = all(np.isfinite(v) for v in done.values()) and len(done) == len(specs)
    acceptance(9, "paper-config admissibility", ok,
               ", ".join(f"{n} AUC {v:.2f}" for n, v in done.items()))
    assert ok

"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (also repeated in the pytest
terminal summary) and then asserts the same condition. Run directly with
``python tests/test_acceptance.py`` for the lines alone.
"""

import csv
import itertools
import json
import os
import statistics
import sys
import time

import numpy as np
import torch
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_report import report  # noqa: E402
from gradcheck import check_tensor  # noqa: E402

from mimvc.cli import main as cli_main  # noqa: E402
from mimvc.dataset import (  # noqa: E402
    MaskSpec,
    MultiViewDataset,
    generate_mask,
    make_multiview_blobs,
    partition_observed,
    save_dataset,
)
from mimvc.evaluation import accuracy_hungarian, ari, kmeans, nmi, pairwise_fscore  # noqa: E402
from mimvc.graph import adaptive_knn_graph, adaptive_knn_weights, fuse_graphs, lift_graph  # noqa: E402
from mimvc.losses import decoupled_contrastive_loss, weighted_contrastive_loss  # noqa: E402
from mimvc.network import MaskedContrastiveNet, fuse_features  # noqa: E402
from mimvc.training import (  # noqa: E402
    TrainConfig,
    build_state,
    compute_losses,
    evaluate_state,
    prepare,
    refresh_common_graph,
    train,
)

T = torch.float64
SEEDS = (0, 1, 2, 3, 4)
END_TO_END_EPOCHS = 300
FD_STEP = 1e-6


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# -- 1 ----------------------------------------------------------------------------


def test_fusion_identities():
    rng = np.random.default_rng(0)
    worst_f = worst_a = 0.0
    with Timer() as t:
        for trial in range(20):
            N, V, L = int(rng.integers(5, 30)), int(rng.integers(2, 5)), 8
            mask = np.ones((N, V), dtype=int)
            part = partition_observed(mask)
            H = [torch.tensor(rng.normal(size=(N, L)), dtype=T) for _ in range(V)]
            F = fuse_features(H, part.observed, mask)
            worst_f = max(worst_f, float((F - sum(H) / V).abs().max()))

            views = [adaptive_knn_graph(rng.normal(size=(N, 3)), 3) for _ in range(V)]
            lifted = [lift_graph(A, np.arange(N), N) for A in views]
            S = adaptive_knn_graph(rng.normal(size=(N, 3)), 3)
            A_hat = fuse_graphs(lifted, mask, S)
            expected = (sum(lifted) + S) / (V + 1)
            np.fill_diagonal(expected, 0.0)
            worst_a = max(worst_a, float(np.abs(A_hat - expected).max()))
    ok = worst_f <= 1e-12 and worst_a <= 1e-12 and t.seconds < 1.0
    report(1, ok, f"fusion identities max err F={worst_f:.1e} A={worst_a:.1e} "
                  f"(<= 1e-12), {t.seconds:.2f}s (< 1s)")
    assert ok


# -- 2 ----------------------------------------------------------------------------


def test_orthogonality():
    rng = np.random.default_rng(1)
    worst = 0.0
    with Timer() as t:
        for trial in range(100):
            C = int(rng.integers(2, 7))
            dims = [int(d) for d in rng.integers(3, 20, size=2)]
            net = MaskedContrastiveNet(dims, C, seed=trial)
            mask = generate_mask(50, 2, MaskSpec(0.2, trial))
            part = partition_observed(mask)
            views = [torch.tensor(rng.random((len(idx), d)), dtype=T)
                     for idx, d in zip(part.observed, dims)]
            a_norms = [torch.eye(len(idx), dtype=T) for idx in part.observed]
            with torch.no_grad():
                Y = net(views, a_norms, part.observed, mask).Y
            worst = max(worst, float((Y.T @ Y - torch.eye(C, dtype=T)).abs().max()))
    ok = worst <= 1e-6 and t.seconds < 5.0
    report(2, ok, f"max |Y'Y - I| over 100 models = {worst:.1e} (<= 1e-6), {t.seconds:.2f}s (< 5s)")
    assert ok


# -- 3 ----------------------------------------------------------------------------


def test_gradients():
    rng = np.random.default_rng(2)
    ds = MultiViewDataset(views=[rng.random((12, 5)), rng.random((12, 7))],
                          labels=np.arange(12) % 3,
                          mask=generate_mask(12, 2, MaskSpec(0.2, 0)))
    config = TrainConfig(k=3, lam=1.0, seed=0)
    with Timer() as t:
        prep = prepare(ds, config.k)
        state = build_state(prep.dataset.dims, 3, config)
        with torch.no_grad():
            F0 = state.forward(prep).F
        A_hat = refresh_common_graph(F0, config.k, prep.lifted, ds.mask)

        def outputs():
            with torch.no_grad():
                total, rec, zeta, _ = compute_losses(state, prep, A_hat)
            return [float(rec), float(zeta), float(total)]

        params = dict(state.model.named_parameters())
        total, rec, zeta, _ = compute_losses(state, prep, A_hat)
        grads = {}
        for name, value in (("rec", rec), ("wcl", zeta), ("total", total)):
            g = torch.autograd.grad(value, list(params.values()), retain_graph=True,
                                    allow_unused=True)
            grads[name] = [torch.zeros_like(p) if gi is None else gi
                           for gi, p in zip(g, params.values())]
        worst = {"rec": 0.0, "wcl": 0.0, "total": 0.0}
        for i, (pname, p) in enumerate(params.items()):
            # h = 1e-6 keeps central differences from straddling ReLU kinks
            errs = check_tensor(outputs, p.data, [grads[n][i] for n in worst], h=FD_STEP, seed=i)
            for n, e in zip(worst, errs):
                worst[n] = max(worst[n], e)
    ok = max(worst.values()) <= 1e-4 and t.seconds < 30.0
    detail = " ".join(f"{n}={e:.1e}" for n, e in worst.items())
    report(3, ok, f"worst FD relative error over {len(params)} tensors: {detail} (<= 1e-4), "
                  f"{t.seconds:.1f}s (< 30s)")
    assert ok


# -- 4 ----------------------------------------------------------------------------


def _binary_graph(rng, N):
    while True:
        A = np.triu((rng.random((N, N)) < rng.uniform(0.2, 0.6)).astype(float), 1)
        A = A + A.T
        off = ~np.eye(N, dtype=bool)
        if ((A > 0) & off).any(axis=1).all() and ((A == 0) & off).any(axis=1).all():
            return A


def test_loss_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    with Timer() as t:
        for _ in range(50):
            N = int(rng.integers(3, 17))
            A = _binary_graph(rng, N)
            Y = torch.tensor(rng.normal(size=(N, int(rng.integers(2, 6)))), dtype=T)
            w = float(weighted_contrastive_loss(Y, A, 1.0, 1e-12))
            d = float(decoupled_contrastive_loss(Y, A, 1.0))
            worst = max(worst, abs(w - d))
    ok = worst <= 1e-9 and t.seconds < 5.0
    report(4, ok, f"max |wcl - dcl| on 50 binary graphs = {worst:.1e} (<= 1e-9), "
                  f"{t.seconds:.2f}s (< 5s)")
    assert ok


# -- 5 ----------------------------------------------------------------------------


def _brute_acc(pred, truth):
    best = 0
    for perm in itertools.permutations(range(3)):
        best = max(best, sum(perm[p] == q for p, q in zip(pred, truth)))
    return best / len(pred)


def _pair_fscore(pred, truth):
    tp = fp = fn = 0
    for i, j in itertools.combinations(range(len(pred)), 2):
        sp, st = pred[i] == pred[j], truth[i] == truth[j]
        tp += sp and st
        fp += sp and not st
        fn += st and not sp
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def test_metric_oracles():
    rng = np.random.default_rng(4)
    acc_bad = checked = 0
    worst = 0.0
    with Timer() as t:
        for N in range(1, 9):
            labelings = list(itertools.product(range(3), repeat=N))
            if N <= 4:
                truths = labelings
            else:
                picks = rng.choice(len(labelings), 3, replace=False)
                truths = [tuple(i % 3 for i in range(N))] + [labelings[i] for i in picks]
            for truth in truths:
                for pred in labelings:
                    checked += 1
                    if abs(accuracy_hungarian(pred, truth) - _brute_acc(pred, truth)) > 1e-12:
                        acc_bad += 1
        for _ in range(100):
            n = int(rng.integers(10, 80))
            p = rng.integers(0, int(rng.integers(2, 7)), n)
            q = rng.integers(0, int(rng.integers(2, 7)), n)
            worst = max(
                worst,
                abs(nmi(p, q) - normalized_mutual_info_score(q, p, average_method="geometric")),
                abs(ari(p, q) - adjusted_rand_score(q, p)),
                abs(pairwise_fscore(p, q) - _pair_fscore(p, q)),
            )
    ok = acc_bad == 0 and worst <= 1e-10 and t.seconds < 30.0
    report(5, ok, f"ACC vs brute force: {checked - acc_bad}/{checked} pairs agree; "
                  f"nmi/ari/fscore max err {worst:.1e} (<= 1e-10), {t.seconds:.1f}s (< 30s)")
    assert ok


# -- 6 ----------------------------------------------------------------------------


def test_adaptive_graph():
    rng = np.random.default_rng(5)
    row_err, bad_range, bad_support = 0.0, 0, 0
    with Timer() as t:
        for _ in range(100):
            M, k = int(rng.integers(5, 60)), 0
            k = int(rng.integers(1, min(M - 1, 20)))
            W = adaptive_knn_weights(rng.normal(size=(M, int(rng.integers(1, 10)))), k)
            row_err = max(row_err, float(np.abs(W.sum(axis=1) - 1).max()))
            bad_range += int(((W < 0) | (W > 1)).any())
            bad_support += int(((W > 0).sum(axis=1) != k).any())
    ok = row_err <= 1e-9 and bad_range == 0 and bad_support == 0 and t.seconds < 5.0
    report(6, ok, f"row-sum err {row_err:.1e} (<= 1e-9), out-of-range {bad_range}, "
                  f"wrong support {bad_support} of 100, {t.seconds:.2f}s (< 5s)")
    assert ok


# -- 7 ----------------------------------------------------------------------------


def _blobs():
    return make_multiview_blobs(n_samples=300, n_clusters=3, dims=(8, 12, 16), sigma=0.15, seed=0)


def _masked(ds, eta, seed):
    return ds.with_mask(generate_mask(ds.n_samples, ds.n_views, MaskSpec(eta, seed)))


def _end_to_end_acc(ds, eta, variant):
    accs = []
    for s in SEEDS:
        data = _masked(ds, eta, s)
        cfg = TrainConfig(epochs=END_TO_END_EPOCHS, seed=s, variant=variant)
        state, _ = train(data, cfg)
        accs.append(evaluate_state(state, data).acc)
    return accs


def test_synthetic_end_to_end():
    ds = _blobs()
    with Timer() as t:
        baseline = []
        for s in SEEDS:
            data = _masked(ds, 0.3, s)
            X = np.hstack([V * data.mask[:, [v]] for v, V in enumerate(data.views)])
            baseline.append(accuracy_hungarian(kmeans(X, 3, seed=s), data.labels))
        full = _end_to_end_acc(ds, 0.3, "full")
        ablated = _end_to_end_acc(ds, 0.3, "wo_wcl")
    med_base, med_full, med_wo = (statistics.median(a) for a in (baseline, full, ablated))
    ok = med_base >= 0.7 and med_full >= 0.85 and med_full >= med_wo and t.seconds < 300
    report(7, ok, f"median ACC full={med_full:.3f} (>= 0.85) wo_wcl={med_wo:.3f} "
                  f"baseline={med_base:.3f} (>= 0.7); full per seed "
                  f"{[round(a, 3) for a in full]}, {t.seconds:.0f}s (< 300s)")
    assert ok


# -- 8 ----------------------------------------------------------------------------


def test_missing_rate_degradation():
    ds = _blobs()
    with Timer() as t:
        low = _end_to_end_acc(ds, 0.1, "full")
        high = _end_to_end_acc(ds, 0.5, "full")
    med_low, med_high = statistics.median(low), statistics.median(high)
    ok = med_low >= med_high and t.seconds < 900
    report(8, ok, f"median ACC eta=0.1: {med_low:.3f} >= eta=0.5: {med_high:.3f}, "
                  f"{t.seconds:.0f}s (< 900s)")
    assert ok


# -- 9 ----------------------------------------------------------------------------


def test_determinism():
    data = _masked(_blobs(), 0.3, 0)
    cfg = TrainConfig(epochs=END_TO_END_EPOCHS, eval_every=50, seed=3)
    with Timer() as t:
        first = train(data, cfg)[1].to_csv()
        second = train(data, cfg)[1].to_csv()
    ok = first == second and t.seconds < 300
    report(9, ok, f"history CSVs ({len(first)} bytes) identical: {first == second}, "
                  f"{t.seconds:.0f}s (< 300s)")
    assert ok


# -- 10 ---------------------------------------------------------------------------


def test_real_data_format_smoke(tmp_path=None):
    import tempfile

    rng = np.random.default_rng(10)
    with tempfile.TemporaryDirectory() as tmp, Timer() as t:
        raw, masked, run = (os.path.join(tmp, d) for d in ("raw", "masked", "run"))
        stand_in = MultiViewDataset(
            views=[rng.random((210, d)) for d in (256, 512, 210)],
            labels=np.arange(210) % 7,
            names=["lbp", "gist", "hog"],
        )
        save_dataset(stand_in, raw)
        codes = [
            cli_main(["mask", "--data", raw, "--eta", "0.3", "--seed", "0", "--out", masked]),
            cli_main(["train", "--data", masked, "--out", run]),
            cli_main(["eval", "--run", run]),
        ]
        with open(os.path.join(run, "metrics.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        metrics_ok = bool(rows) and all(
            rows[-1][m] != "" and np.isfinite(float(rows[-1][m]))
            for m in ("acc", "nmi", "ari", "fscore")
        )
        with open(os.path.join(run, "config.json")) as fh:
            epochs = json.load(fh)["epochs"]
    ok = codes == [0, 0, 0] and metrics_ok and t.seconds < 600
    report(10, ok, f"mask/train/eval exit codes {codes}, four metrics present: {metrics_ok}, "
                   f"{epochs} epochs on 210 x (256, 512, 210), {t.seconds:.0f}s (< 600s)")
    assert ok


if __name__ == "__main__":
    failures = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)

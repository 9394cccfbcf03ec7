"""Acceptance criteria, each checked at its stated tolerance.

Every test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from boundprint.cli import main as cli_main
from boundprint.data import SyntheticSpec, generate, split
from boundprint.experiment import BUNDLED_CONFIGS, load_config, run_experiment, strip_timing, with_overrides
from boundprint.fingerprint import METHODS, CWConfig, ExtractConfig, extract, select_initial_point
from boundprint.metrics import aruc
from boundprint.nn import TrainConfig, accuracy, forward_batch, forward_logits, init_network, input_gradient, make_network, train
from boundprint.objectives import CrossEntropy, boundary_objective
from boundprint.parallel import stream
from boundprint.suspects import SuiteConfig, _floor_count, build_suspect_suite, magnitude_masks, mask_units, prune_units
from boundprint.verify import matching_rate

DESK_LR = 0.01  # shared by IPGuard and CW on the d=8 desk target


def desk_target(seed):
    """Small MLP on 4-class blobs, d=8, 400 training points."""
    full = generate(SyntheticSpec(kind="blobs", n_per_class=125, c=4, noise_sigma=0.1, d=8, seed=seed))
    train_data, test_data = split(full, 0.8, seed)
    net = train(make_network("small-mlp", 8, 4, seed), train_data, TrainConfig(seed=seed))
    return net, train_data, test_data


@pytest.fixture(scope="module")
def desk():
    return {s: desk_target(s) for s in range(3)}


def test_1_effectiveness(criterion):
    seeds = range(10)
    failures = []
    for seed in seeds:
        net, train_data, _ = desk_target(seed)
        cfg = ExtractConfig(n=100, lr=DESK_LR, seed=seed, k=0.5)
        for method in METHODS:
            rate = matching_rate(extract(method, net, train_data, cfg), net)
            if rate != 1.0:
                failures.append((seed, method, rate))
    ok = not failures
    criterion(1, "effectiveness", ok, f"{len(METHODS)} methods x {len(seeds)} seeds, n=100; "
              f"failures={failures}")
    assert ok


def test_2_gradient_correctness(criterion):
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst, cases, kinds, skipped = 0.0, 0, {"ce": 0, "boundary": 0}, 0
    shapes = [[8, 32, 32, 4], [5, 16, 3], [3, 7, 6, 5], [6, 2], [4, 12, 10]]
    while cases < 60:
        sizes = shapes[cases % len(shapes)]
        net = init_network(sizes, int(rng.integers(1 << 30)))
        # larger biases spread the logits so the hinge terms are active
        net = net.with_params(net.weights, [rng.normal(0, 0.3, b.shape) for b in net.biases])
        x = rng.uniform(0.05, 0.95, sizes[0])
        c = sizes[-1]
        if cases % 2:
            fn, kind = CrossEntropy(int(rng.integers(c))), "ce"
        else:
            i, j = rng.choice(c, 2, replace=False)
            fn, kind = boundary_objective(int(i), int(j), float(rng.uniform(0.5, 3)), c), "boundary"
        g = input_gradient(net, x, fn)
        num = np.empty_like(x)
        smooth = True
        for t in range(len(x)):
            e = np.zeros_like(x)
            e[t] = h
            zp, zm = forward_logits(net, x + e), forward_logits(net, x - e)
            # central differences are only meaningful where no ReLU or hinge switches
            switched = kind == "boundary" and fn.grad(zp).tolist() != fn.grad(zm).tolist()
            if switched or _pattern(net, x + e) != _pattern(net, x - e):
                smooth = False
                break
            num[t] = (fn(zp) - fn(zm)) / (2 * h)
        if not smooth or not np.any(g):
            skipped += 1
            continue
        rel = np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)
        worst = max(worst, rel)
        cases += 1
        kinds[kind] += 1
    ok = worst <= 1e-4
    criterion(2, "gradient vs central differences", ok,
              f"{cases} cases {kinds}, worst relative error {worst:.2e}, {skipped} kink draws redrawn")
    assert ok


def _pattern(net, x):
    a, pattern = x, []
    for W, b, act in zip(net.weights, net.biases, net.activations):
        a = a @ W + b
        if act == "relu":
            pattern.append(tuple(a > 0))
            a = np.maximum(a, 0.0)
    return pattern


def test_3_objective_certificate(criterion, desk):
    checked, violations = 0, 0
    for seed, (net, train_data, _) in desk.items():
        for k in (0.0, 0.5, 1.0, 2.0):
            for strategy in ("TL", "TR", "RL", "RR"):
                cfg = ExtractConfig(n=50, k=k, lr=DESK_LR, seed=seed, init_strategy=strategy[0],
                                    label_strategy=strategy[1])
                fp = extract("ipguard", net, train_data, cfg)
                for x, ok, (i, j) in zip(fp.points, fp.converged, fp.pairs):
                    if not ok:
                        continue
                    z = forward_logits(net, x)
                    rest = [z[t] for t in range(len(z)) if t not in (i, j)]
                    checked += 1
                    if not (z[j] - z[i] >= k and all(z[i] >= r for r in rest)):
                        violations += 1
    ok = violations == 0 and checked > 0
    criterion(3, "objective certificate", ok, f"{checked} converged points re-evaluated, {violations} violations")
    assert ok


def test_4_convergence(criterion, desk):
    rates = {}
    for seed, (net, train_data, _) in desk.items():
        assert len(train_data) == 400
        fp = extract("ipguard", net, train_data, ExtractConfig(n=100, k=0.5, lr=DESK_LR, seed=seed,
                                                               max_iters=1000))
        rates[seed] = (float(fp.converged.mean()), int(fp.iters.max()))
    ok = all(r >= 0.95 for r, _ in rates.values())
    criterion(4, "convergence within 1000 iterations", ok,
              "seed: (fraction converged, max iters) " + str(rates))
    assert ok


def brute_force_aruc(pos_counts, neg_counts, n, r):
    # integer arithmetic: rate m/n >= tau t/r  <=>  m*r >= t*n
    total = Fraction(0)
    for t in range(1, r + 1):
        R = Fraction(sum(m * r >= t * n for m in pos_counts), len(pos_counts))
        U = Fraction(sum(m * r < t * n for m in neg_counts), len(neg_counts))
        total += min(R, U)
    return total / r


def test_5_aruc_oracle(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 101))
        pos = rng.integers(0, n + 1, int(rng.integers(1, 12))).tolist()
        neg = rng.integers(0, n + 1, int(rng.integers(1, 12))).tolist()
        got = aruc([m / n for m in pos], [m / n for m in neg], 100)
        worst = max(worst, abs(got - float(brute_force_aruc(pos, neg, n, 100))))
    derived = aruc([0.6], [0.4])
    ok = worst <= 1e-12 and derived == 0.2
    criterion(5, "ARUC oracle equivalence", ok,
              f"200 populations, worst |diff| {worst:.1e}; pos=[0.6]/neg=[0.4] -> {derived!r}")
    assert ok


def test_6_desk_scale_separation(criterion):
    base = load_config(BUNDLED_CONFIGS / "blobs.json")
    margins, details = [], []
    for seed in (0, 1, 2):
        report = run_experiment(with_overrides(base, seed=seed), threads=1)
        kinds = [s["kind"] for s in report.suite]
        assert all(kinds.count(k) == 1 for k in ("FTLL", "FTAL", "RTLL", "RTAL"))
        assert kinds.count("WP") >= 1 and kinds.count("FP") >= 1
        assert kinds.count("same-arch") >= 10 and kinds.count("diff-arch") >= 5 and kinds.count("forest") >= 5
        ipg, rnd = report.best_run("ipguard"), report.best_run("random")
        margins.append(ipg.aruc - rnd.aruc)
        details.append(f"seed {seed}: IPGuard {ipg.aruc:.3f} (k={ipg.params['k']}) vs random {rnd.aruc:.3f}")
    ok = all(m >= 0.15 for m in margins)
    criterion(6, "desk-scale separation", ok, "; ".join(details))
    assert ok


def test_7_suite_contracts(criterion, desk):
    net, train_data, test_data = desk[0]
    suite = build_suspect_suite(net, train_data, test_data, SuiteConfig(seed=7), TrainConfig(seed=7))
    base = accuracy(net, test_data)
    problems = []
    for e in suite.entries:
        if e.kind in ("FTLL", "RTLL"):
            for l in range(len(net.weights) - 1):
                if (e.model.weights[l].tobytes() != net.weights[l].tobytes()
                        or e.model.biases[l].tobytes() != net.biases[l].tobytes()):
                    problems.append(f"{e.kind} layer {l} moved")
        if e.kind in ("WP", "FP"):
            acc = accuracy(e.model, test_data)
            if base - acc > 0.03 + 1e-12 or acc != e.test_accuracy:
                problems.append(f"{e.label} accuracy {acc} vs base {base}")
        if e.kind == "WP":
            masks = magnitude_masks(net, e.param)
            dropped = sum(int((~m).sum()) for m in masks)
            if dropped != _floor_count(e.param, net.n_weights):
                problems.append(f"{e.label} mask size {dropped}")
            if any(np.any(W[~m] != 0.0) for W, m in zip(e.model.weights, masks)):
                problems.append(f"{e.label} pruned weight revived")
        if e.kind == "FP":
            diff = np.max(np.abs(forward_batch(prune_units(net, e.param), test_data.points)
                                 - forward_batch(mask_units(net, e.param), test_data.points)))
            if diff > 1e-12:
                problems.append(f"{e.label} shrink/mask differ by {diff}")
            widths = [W.shape[1] for W in e.model.weights[:-1]]
            if widths != [32 - _floor_count(e.param, 32)] * 2:
                problems.append(f"{e.label} widths {widths}")
    n_wp = sum(e.kind == "WP" for e in suite.entries)
    n_fp = sum(e.kind == "FP" for e in suite.entries)
    ok = not problems and n_wp > 0 and n_fp > 0
    criterion(7, "suite contracts", ok, f"{len(suite.entries)} suspects, {n_wp} WP and {n_fp} FP rungs; "
              f"problems={problems}")
    assert ok


def test_8_efficiency_trend(criterion, desk):
    t_ipg = t_cw = 0.0
    l2_ipg, l2_cw = [], []
    for seed, (net, train_data, _) in desk.items():
        cfg = ExtractConfig(n=100, k=0.0, lr=DESK_LR, seed=seed, cw=CWConfig())
        x0 = np.array([select_initial_point(net, train_data, "T", stream(seed, p))[0] for p in range(100)])
        start = time.perf_counter()
        ipg = extract("ipguard", net, train_data, cfg, threads=1)
        t_ipg += time.perf_counter() - start
        start = time.perf_counter()
        cw = extract("cw", net, train_data, cfg, threads=1)
        t_cw += time.perf_counter() - start
        l2_ipg.extend(np.linalg.norm(ipg.points - x0, axis=1))
        l2_cw.extend(np.linalg.norm(cw.points - x0, axis=1))
    ratio = t_cw / t_ipg
    ok = ratio >= 5.0 and np.mean(l2_cw) <= np.mean(l2_ipg)
    criterion(8, "efficiency trend", ok, f"CW {t_cw:.2f}s vs IPGuard {t_ipg:.2f}s ({ratio:.1f}x); "
              f"mean L2 CW {np.mean(l2_cw):.3f} vs IPGuard {np.mean(l2_ipg):.3f}")
    assert ok


def test_9_determinism(criterion, tmp_path, monkeypatch, capsys):
    outputs = []
    for tag, threads in (("a", "1"), ("b", "4"), ("c", None)):
        argv = ["experiment", "--out", str(tmp_path / tag), "-q"]
        if threads:
            argv += ["--threads", threads]
        else:
            monkeypatch.setenv("BMK_THREADS", "3")
        assert cli_main(argv) == 0
        outputs.append(json.loads((tmp_path / tag / "report.json").read_text()))
    capsys.readouterr()
    canon = [json.dumps(strip_timing(o), sort_keys=True) for o in outputs]
    timing_present = all("timing" in o for o in outputs)
    ok = canon[0] == canon[1] == canon[2] and timing_present
    criterion(9, "determinism across --threads", ok,
              f"threads 1 / 4 / BMK_THREADS=3 identical after dropping timing: {canon[0] == canon[1] == canon[2]}")
    assert ok

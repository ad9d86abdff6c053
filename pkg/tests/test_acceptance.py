"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances and runtime limits are pinned as module constants.  Criterion 9
needs the N-MNIST distribution tree; point ``LSMSIM_NMNIST_DIR`` at the
directory holding ``Train/`` and ``Test/`` or it is skipped.
"""

import os
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_reservoir
from gradcheck import numeric_grad, rel_error
from nmnist_fixture import make_nmnist_tree
from test_cost import _random_architecture
from test_lsm import reference_lsm
from lsmsim import experiments as ex
from lsmsim.cli import COMMANDS, main
from lsmsim.config import ExperimentConfig
from lsmsim.contrastive import contrastive_loss
from lsmsim.cost import cost_ratio, count_ops, energy_efficiency, hybrid_energy, instrumented_run, OpsCount
from lsmsim.lsm import lsm_forward, read_reservoir
from lsmsim.memristor import sample_conductance
from lsmsim.randomness import extract_bits, monobit_test, passes, runs_test
from lsmsim.readout import softmax_xent

GRAD_TOL, GRAD_EPS, GRAD_INSTANCES, GRAD_SECONDS = 1e-6, 1e-5, 100, 10.0
ORACLE_INSTANCES, ORACLE_SECONDS = 50, 5.0
EFFICIENCY, EFFICIENCY_TOL = 4.808e-13, 1e-16
TABLE3_NJ, TABLE3_TOL_NJ = 6.01, 0.01
RATIOS, RATIO_TOL = {(10401792011, 532491): 19534.21, (354330, 39706): 8.92}, 0.01
OPCOUNT_ARCHS = 20
SEEDS = 10
ABLATION_MARGIN, ABLATION_SECONDS = 0.05, 120.0
INPUT_NOISE_GRID, READ_NOISE_GRID, WRITE_NOISE = (0.0, 0.1, 0.2, 0.3), (0.0, 0.5, 1.0, 2.0), 0.1
WRITE_DROP_MAX, NOISE_SECONDS = 0.02, 300.0
EXIT_THRESHOLDS, EXIT_DROP_MAX, EXIT_REDUCTION_MIN = "0.5,0.7,0.9,never", 0.02, 0.15
RNG_SIDE, RNG_ALPHA = 512, 0.01
NMNIST_MIN_ACC, NMNIST_SECONDS = 0.85, 1800.0
ZS_UNSEEN_MIN, ZS_BASELINE, ZS_BASELINE_TOL = 0.75, 0.5, 0.1


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}")
    assert ok, detail


def seeded(cfg, s):
    return cfg.replace(**{"seeds.weights": s, "seeds.data": s, "seeds.training": s})


def test_c01_gradients(capsys):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_x = worst_c = 0.0
    for _ in range(GRAD_INSTANCES):
        C, d = int(rng.integers(2, 8)), int(rng.integers(1, 8))
        W, b, x, lbl = rng.normal(size=(C, d)), rng.normal(size=C), rng.normal(size=d), int(rng.integers(C))
        gz = softmax_xent(W @ x + b, lbl)[1]
        worst_x = max(
            worst_x,
            rel_error(np.outer(gz, x), numeric_grad(lambda M: softmax_xent(M @ x + b, lbl)[0], W, GRAD_EPS)),
            rel_error(gz, numeric_grad(lambda v: softmax_xent(W @ x + v, lbl)[0], b, GRAD_EPS)),
        )
        N, D, tau = int(rng.integers(2, 7)), int(rng.integers(2, 6)), float(rng.uniform(0.1, 2.0))
        Zv, Za = rng.normal(size=(N, D)), rng.normal(size=(N, D))
        _, gv, ga = contrastive_loss(Zv, Za, tau)
        worst_c = max(
            worst_c,
            rel_error(gv, numeric_grad(lambda M: contrastive_loss(M, Za, tau)[0], Zv, GRAD_EPS)),
            rel_error(ga, numeric_grad(lambda M: contrastive_loss(Zv, M, tau)[0], Za, GRAD_EPS)),
        )
    secs = time.perf_counter() - start
    ok = worst_x <= GRAD_TOL and worst_c <= GRAD_TOL and secs < GRAD_SECONDS
    verdict(capsys, 1, "gradient suite", ok,
            f"max rel err xent={worst_x:.2e} contrastive={worst_c:.2e} over {GRAD_INSTANCES} instances each, {secs:.2f}s")


def test_c02_oracle_equivalence(capsys):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    mismatches = 0
    for k in range(ORACLE_INSTANCES):
        T, U, h = int(rng.integers(1, 17)), int(rng.integers(1, 9)), int(rng.integers(1, 9))
        cfg = make_reservoir(U, h, seed=k, scale=float(rng.uniform(0.05, 0.5)), decay=float(rng.uniform(0, 1)))
        x = (rng.random((T, U)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        w_in, w_rec = read_reservoir(cfg)
        raster, _ = lsm_forward(x, cfg)
        ref = reference_lsm(x.tolist(), w_in.tolist(), w_rec.tolist(), cfg.params.u_th, cfg.params.decay)
        mismatches += not np.array_equal(raster, ref)
    secs = time.perf_counter() - start
    verdict(capsys, 2, "lsm_forward vs straight-line oracle", mismatches == 0 and secs < ORACLE_SECONDS,
            f"{ORACLE_INSTANCES - mismatches}/{ORACLE_INSTANCES} bit-identical, {secs:.2f}s")


def test_c03_cost_constants(capsys):
    eff = energy_efficiency(300.0, 624e12)
    table3 = hybrid_energy(OpsCount(), {"array_vecs": 1, "adc_reads": 1}).energy_hybrid * 1e9
    ratios = {v: cost_ratio(a, b) for (a, b), v in RATIOS.items()}
    ok = (
        abs(eff - EFFICIENCY) <= EFFICIENCY_TOL
        and abs(table3 - TABLE3_NJ) <= TABLE3_TOL_NJ
        and all(abs(got - want) <= RATIO_TOL for want, got in ratios.items())
    )
    detail = f"efficiency={eff:.4e} J/op, table3={table3:.4f} nJ, " + ", ".join(
        f"{got:.2f}x (want {want})" for want, got in ratios.items()
    )
    verdict(capsys, 3, "cost-model constants", ok, detail)


def test_c04_opcount_oracle(capsys):
    rng = np.random.default_rng(404)
    equal = 0
    for k in range(OPCOUNT_ARCHS):
        arch = _random_architecture(rng)
        samples = int(rng.integers(1, 4))
        equal += count_ops(arch, samples).layers == instrumented_run(arch, seed=k, samples=samples).layers
    verdict(capsys, 4, "analytic vs instrumented op counts", equal == OPCOUNT_ARCHS,
            f"{equal}/{OPCOUNT_ARCHS} architectures exact")


def order_task_cfg():
    return ExperimentConfig().replace(**{
        "data.kind": "order", "data.rate_on": 0.5, "data.rate_off": 0.05, "data.samples_per_class": 30,
    })


def test_c05_order_task_beats_pooling(capsys):
    start = time.perf_counter()
    acc = {}
    for s in range(SEEDS):
        for row in ex.run_ablation(seeded(order_task_cfg(), s))["rows"]:
            acc.setdefault(row["features"], []).append(row["accuracy"])
    means = {k: float(np.mean(v)) for k, v in acc.items()}
    margin = min(means["lsm"] - v for k, v in means.items() if k != "lsm")
    secs = time.perf_counter() - start
    verdict(capsys, 5, "LSM vs temporal pooling on order task", margin >= ABLATION_MARGIN and secs < ABLATION_SECONDS,
            ", ".join(f"{k}={v:.3f}" for k, v in means.items()) + f", min margin={margin:.3f}, {secs:.1f}s")


def mean_accuracy(cfg, key, value):
    return float(np.mean([
        ex.run_supervised(seeded(cfg, s).replace(**{key: value}))["metrics"]["accuracy"] for s in range(SEEDS)
    ]))


def test_c06_noise_trends(capsys):
    start = time.perf_counter()
    cfg = ExperimentConfig()
    inp = [mean_accuracy(cfg, "noise.input_p", p) for p in INPUT_NOISE_GRID]
    read = [mean_accuracy(cfg, "noise.read", r) for r in READ_NOISE_GRID]
    write_drop = inp[0] - mean_accuracy(cfg, "noise.write", WRITE_NOISE)
    secs = time.perf_counter() - start
    mono = lambda xs: all(b <= a for a, b in zip(xs, xs[1:]))
    ok = mono(inp) and mono(read) and write_drop <= WRITE_DROP_MAX and secs < NOISE_SECONDS
    verdict(capsys, 6, "noise trends", ok,
            f"input {np.round(inp, 4).tolist()}, read {np.round(read, 4).tolist()}, "
            f"write drop {write_drop:.4f}, {secs:.1f}s")


def test_c07_early_exit(capsys):
    rows = []
    never_exact = True
    for s in range(SEEDS):
        table = ex.run_early_exit(seeded(ExperimentConfig(), s).replace(**{"early_exit.thresholds": EXIT_THRESHOLDS}))["table"]
        rows.append([(r["accuracy_drop"], r["step_reduction"], r["mean_exit_step"]) for r in table])
        never_exact &= table[-1]["agrees_with_full_window"] == 1.0
    mean = np.mean(rows, axis=0)
    steps = mean[:, 2]
    monotone = all(a <= b for a, b in zip(steps, steps[1:])) and all(
        all(a[2] <= b[2] for a, b in zip(r, r[1:])) for r in rows
    )
    good = [i for i, (drop, red, _) in enumerate(mean[:-1]) if drop <= EXIT_DROP_MAX and red >= EXIT_REDUCTION_MIN]
    names = EXIT_THRESHOLDS.split(",")
    detail = "; ".join(f"{n}: drop={d:.3f} red={r:.3f}" for n, (d, r, _) in zip(names, mean)) + (
        f"; qualifying={[names[i] for i in good]}"
    )
    verdict(capsys, 7, "early exit", monotone and never_exact and bool(good), detail)


def test_c08_randomness(capsys):
    bits = extract_bits(sample_conductance(RNG_SIDE, RNG_SIDE, seed=0))
    mono, runs = monobit_test(bits), runs_test(bits)
    const = monobit_test(extract_bits(np.full((RNG_SIDE, RNG_SIDE), 33.0)))
    ok = passes(mono, RNG_ALPHA) and passes(runs, RNG_ALPHA) and not passes(const, RNG_ALPHA)
    verdict(capsys, 8, "randomness of extracted bits", ok,
            f"monobit p={mono:.4f}, runs p={runs if runs is None else round(runs, 4)}, constant-array monobit p={const:.2e}")


def test_c09_nmnist(capsys):
    root = os.environ.get("LSMSIM_NMNIST_DIR", "")
    if not root or not (Path(root) / "Train").is_dir():
        with capsys.disabled():
            print("\n[SKIP] criterion  9: N-MNIST absent (set LSMSIM_NMNIST_DIR to the Train/Test tree)")
        pytest.skip("N-MNIST dataset absent")
    start = time.perf_counter()
    cfg = ExperimentConfig().replace(**{
        "data.source": "nmnist", "data.path": root, "data.crop": 16, "data.T": 30,
        "lsm.h": 200, "train.epochs": 10,
    })
    acc = ex.run_supervised(cfg)["metrics"]["accuracy"]
    secs = time.perf_counter() - start
    verdict(capsys, 9, "N-MNIST supervised", acc >= NMNIST_MIN_ACC and secs < NMNIST_SECONDS,
            f"accuracy={acc:.4f} (need >= {NMNIST_MIN_ACC}), {secs:.0f}s")


def test_c10_synthetic_zero_shot(capsys):
    trained, untrained = [], []
    for s in range(SEEDS):
        cfg = seeded(ExperimentConfig(), s)
        trained.append(ex.run_zero_shot(cfg)["metrics"]["unseen"]["top1"])
        untrained.append(ex.run_zero_shot(cfg.replace(**{"contrastive.epochs": 0}))["metrics"]["unseen"]["top1"])
    t, u = float(np.mean(trained)), float(np.mean(untrained))
    ok = t >= ZS_UNSEEN_MIN and abs(u - ZS_BASELINE) <= ZS_BASELINE_TOL
    verdict(capsys, 10, "synthetic zero-shot", ok,
            f"unseen top-1 trained={t:.3f} (need >= {ZS_UNSEEN_MIN}), untrained={u:.3f} (need {ZS_BASELINE}+-{ZS_BASELINE_TOL})")


def test_c11_cli_determinism(tmp_path, capsys):
    nm = make_nmnist_tree(tmp_path / "nm", per_digit=1)
    fast = ["--data.samples_per_class", "10", "--lsm.h", "20", "--train.epochs", "5",
            "--contrastive.samples_per_class", "8", "--contrastive.epochs", "5"]
    extra = {
        "sweep": ["--sweep.grid", "noise.input_p=0,0.2", "--sweep.repeats", "2"],
        "rng-test": ["--rows", "64", "--cols", "64"],
        "import-nmnist": ["--src", str(nm), "--data.T", "8"],
    }
    same = []
    for cmd in COMMANDS:
        blobs = []
        out = tmp_path / "runs" / cmd
        for _ in range(2):
            shutil.rmtree(out, ignore_errors=True)
            args = [cmd, "--output.dir", str(out), *fast, *extra.get(cmd, [])]
            if cmd == "eval":
                assert main(["train", "--output.dir", str(out), *fast], environ={}) == 0
            assert main(args, environ={}) == 0, cmd
            metrics = out / "eval" / "metrics.json" if cmd == "eval" else out / "metrics.json"
            blobs.append(metrics.read_bytes())
        same.append(blobs[0] == blobs[1])
    verdict(capsys, 11, "CLI determinism", all(same),
            f"{sum(same)}/{len(same)} commands byte-identical metrics.json")

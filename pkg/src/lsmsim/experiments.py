"""End-to-end pipelines behind the CLI: supervised, early exit, ablation, zero-shot, sweeps."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import contrastive as ct
from . import cost
from .config import ConfigError, ExperimentConfig, parse_grid
from .events import bin_events, center_crop, inject_input_noise, read_nmnist, NMNIST_SIZE
from .lsm import LifParams, LsmConfig, build_reservoir, lsm_forward_batch
from .memristor import apply_write_noise, sample_conductance
from .readout import (
    LinearLayer,
    TrainConfig,
    early_exit_from_raster,
    evaluate,
    linear_forward,
    predict,
    save_linear,
    train_supervised,
)
from .synthetic import PairedTaskSpec, SyntheticTaskSpec, gen_paired, gen_synthetic

log = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Dataset missing, malformed, or inconsistent with the experiment."""


class DatasetAbsent(DataError):
    """A dataset-gated experiment was asked for and the files are not there."""


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# -- datasets ------------------------------------------------------------------


def load_dataset(cfg: ExperimentConfig):
    """``(X_train, y_train, X_test, y_test, num_classes)`` with X as ``(n, T, U)``."""
    d = cfg.data
    if d.source == "synthetic":
        spec = SyntheticTaskSpec(
            num_classes=d.num_classes,
            channels=d.channels,
            T=d.T,
            samples_per_class=2 * d.samples_per_class,
            seed=cfg.seeds.data,
            kind=d.kind,
            rate_on=d.rate_on,
            rate_off=d.rate_off,
            groups=d.groups,
        )
        X, y = gen_synthetic(spec)
        half = d.num_classes * d.samples_per_class
        return X[:half], y[:half], X[half:], y[half:], d.num_classes
    if d.source == "native":
        return load_native(d.path)
    return load_nmnist_dir(d.path, d.T, d.crop, d.merge_polarity, d.max_per_class)


def load_native(path):
    try:
        with np.load(path) as z:
            Xtr, ytr, Xte, yte = (z[k] for k in ("X_train", "y_train", "X_test", "y_test"))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    if Xtr.ndim != 3 or Xte.shape[1:] != Xtr.shape[1:]:
        raise DataError(f"{path}: inconsistent tensor shapes {Xtr.shape} / {Xte.shape}")
    num_classes = int(max(ytr.max(), yte.max())) + 1
    return Xtr.astype(np.uint8), ytr.astype(np.int64), Xte.astype(np.uint8), yte.astype(np.int64), num_classes


def save_native(path, Xtr, ytr, Xte, yte) -> None:
    np.savez_compressed(path, X_train=Xtr, y_train=ytr, X_test=Xte, y_test=yte)


def nmnist_files(root) -> dict[str, list[tuple[Path, int]]]:
    """``{"Train": [(file, digit), ...], "Test": [...]}`` from the distribution layout."""
    root = Path(root)
    out = {}
    for split in ("Train", "Test"):
        base = root / split
        if not base.is_dir():
            raise DatasetAbsent(f"N-MNIST split directory {base} not found")
        files = []
        for digit in range(10):
            files += [(f, digit) for f in sorted((base / str(digit)).glob("*.bin"))]
        if not files:
            raise DatasetAbsent(f"no .bin files under {base}")
        out[split] = files
    return out


def encode_nmnist_file(path, T: int, crop: int, merge_polarity: bool = True) -> np.ndarray:
    """One recording as a cropped ``(T, crop*crop)`` tensor (doubled channels if polarities kept)."""
    x = bin_events(read_nmnist(path), T, merge_polarity)
    n = NMNIST_SIZE * NMNIST_SIZE
    halves = [x] if merge_polarity else [x[:, :n], x[:, n:]]
    return np.concatenate([center_crop(a, NMNIST_SIZE, NMNIST_SIZE, crop, crop) for a in halves], axis=1)


def load_nmnist_dir(root, T: int, crop: int, merge_polarity: bool = True, max_per_class: int = 0):
    files = nmnist_files(root)
    splits = []
    for name in ("Train", "Test"):
        chosen = files[name]
        if max_per_class:
            seen: dict[int, int] = {}
            keep = []
            for f, lbl in chosen:
                if seen.get(lbl, 0) < max_per_class:
                    keep.append((f, lbl))
                    seen[lbl] = seen.get(lbl, 0) + 1
            chosen = keep
        X = np.stack([encode_nmnist_file(f, T, crop, merge_polarity) for f, _ in chosen])
        splits += [X, np.array([lbl for _, lbl in chosen], dtype=np.int64)]
    return (*splits, 10)


# -- reservoir construction ---------------------------------------------------------


def noise_in_us(cfg: ExperimentConfig, level: float) -> float:
    return level * cfg.lsm.g_std if cfg.noise.mode == "fraction" else level


def build_columns(cfg: ExperimentConfig, U: int, seed_offset: int = 0) -> list[list[LsmConfig]]:
    """``width`` parallel stacks of ``depth`` reservoirs, each on its own array."""
    L = cfg.lsm
    params = LifParams(u_th=L.u_th, decay=L.decay)
    read_std = noise_in_us(cfg, cfg.noise.read)
    write_frac = noise_in_us(cfg, cfg.noise.write) / L.g_mean
    columns = []
    for w in range(L.width):
        stack = []
        for d in range(L.depth):
            u_in = U if d == 0 else L.h
            seed = derive_seed(cfg.seeds.weights + seed_offset, w, d)
            arr = sample_conductance(u_in + L.h, L.h + 1, L.g_mean, L.g_std, L.forming, L.sparsity, seed)
            arr = apply_write_noise(arr, write_frac, derive_seed(seed, 1))
            stack.append(build_reservoir(arr, u_in, L.h, params, L.scale, read_std,
                                         quant_bits=L.quant_bits or None))
        columns.append(stack)
    return columns


def reservoir_rasters(X, columns, trial_base: int) -> np.ndarray:
    """Rasters of every reservoir, concatenated on the neuron axis: ``(n, T, F)``."""
    n = X.shape[0]
    parts = []
    for w, stack in enumerate(columns):
        signal = X
        for d, res in enumerate(stack):
            seeds = [derive_seed(trial_base, w, d, i) for i in range(n)]
            signal = lsm_forward_batch(signal, res, seeds)
            parts.append(signal)
    return np.concatenate(parts, axis=2)


def _train_cfg(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(lr=t.lr, epochs=t.epochs, batch_size=t.batch_size, seed=cfg.seeds.training, momentum=t.momentum)


def _prepare(cfg: ExperimentConfig):
    Xtr, ytr, Xte, yte, C = load_dataset(cfg)
    if cfg.noise.input_p > 0:
        Xte = inject_input_noise(Xte, cfg.noise.input_p, derive_seed(cfg.seeds.data, 2))
    columns = build_columns(cfg, Xtr.shape[2])
    R_tr = reservoir_rasters(Xtr, columns, derive_seed(cfg.seeds.weights, 10))
    R_te = reservoir_rasters(Xte, columns, derive_seed(cfg.seeds.weights, 11))
    return dict(Xtr=Xtr, ytr=ytr, Xte=Xte, yte=yte, C=C, columns=columns, R_tr=R_tr, R_te=R_te)


def _features(R: np.ndarray) -> np.ndarray:
    return R.sum(axis=1, dtype=np.float64) / R.shape[1]


def system_energy_model() -> cost.EnergyModel:
    """Table-3 macro periphery plus digital LIF updates and counter increments (one op each)."""
    eff = cost.energy_efficiency(cost.A100_TDP_W, cost.A100_THROUGHPUT_OPS)
    return cost.EnergyModel(components={**cost.TABLE3_COMPONENTS, "lif": eff, "counter": eff})


def supervised_cost(cfg: ExperimentConfig, U: int, T: int, C: int, mean_spikes: float) -> cost.CostReport:
    arch = cost.lsm_ann(U, cfg.lsm.h, C, T, width=cfg.lsm.width, depth=cfg.lsm.depth)
    ops = cost.count_ops(arch)
    n_res = cfg.lsm.width * cfg.lsm.depth
    events = cost.inference_events(T, cfg.lsm.h, round(mean_spikes), cost.digital_macs(ops, arch), n_res)
    return cost.hybrid_energy(ops, events, system_energy_model())


# -- pipelines -------------------------------------------------------------------------


def run_supervised(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Encode, run the reservoir, train the readout, evaluate, cost. Writes artifacts if ``out_dir``."""
    p = _prepare(cfg)
    Ftr, Fte = _features(p["R_tr"]), _features(p["R_te"])
    layer, curve = train_supervised(Ftr, p["ytr"], _train_cfg(cfg), p["C"])
    report = evaluate(layer, Fte, p["yte"], p["C"])
    T, U = p["Xte"].shape[1], p["Xte"].shape[2]
    spikes = float(p["R_te"].sum(axis=(1, 2)).mean())
    cost_report = supervised_cost(cfg, U, T, p["C"], spikes)
    metrics = {
        "task": "supervised",
        "accuracy": report.accuracy,
        "per_class_accuracy": [float(a) for a in report.per_class_accuracy],
        "final_train_loss": curve[-1] if curve else None,
        "mean_spikes_per_sample": spikes,
        "n_train": int(len(p["ytr"])),
        "n_test": int(len(p["yte"])),
        "config": cfg.to_dict(),
    }
    result = dict(metrics=metrics, report=report, cost=cost_report, model=layer, curve=curve, prepared=p)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "metrics.json", metrics)
        write_confusion(out / "confusion.csv", report.confusion)
        write_json(out / "cost.json", cost_report.to_dict())
        save_linear(layer, out / "model.bin")
    return result


def early_exit_table(R_te: np.ndarray, yte: np.ndarray, layer: LinearLayer, thresholds) -> list[dict]:
    """Accuracy and mean exit step per confidence threshold (``inf`` = never exit early)."""
    T = R_te.shape[1]
    base_pred = predict(layer, _features(R_te))
    base_acc = float(np.mean(base_pred == yte))
    rows = []
    for th in thresholds:
        res = [early_exit_from_raster(r, layer, th) for r in R_te]
        pred = np.array([lbl for lbl, _ in res])
        steps = np.array([s for _, s in res], dtype=np.float64)
        acc = float(np.mean(pred == yte))
        rows.append({
            "threshold": "never" if th > 1 else th,
            "accuracy": acc,
            "accuracy_drop": base_acc - acc,
            "mean_exit_step": float(steps.mean()),
            "step_reduction": float(1.0 - steps.mean() / T),
            "agrees_with_full_window": float(np.mean(pred == base_pred)),
        })
    return rows


def parse_thresholds(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok:
            out.append(float("inf") if tok == "never" else float(tok))
    return out


def run_early_exit(cfg: ExperimentConfig, model: LinearLayer | None = None, out_dir=None) -> dict:
    if model is None:
        res = run_supervised(cfg)
        model, p = res["model"], res["prepared"]
    else:
        p = _prepare(cfg)
    Fte = _features(p["R_te"])
    report = evaluate(model, Fte, p["yte"], p["C"])
    table = early_exit_table(p["R_te"], p["yte"], model, parse_thresholds(cfg.early_exit.thresholds))
    metrics = {"task": "eval", "accuracy": report.accuracy, "early_exit": table, "config": cfg.to_dict()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "metrics.json", metrics)
        write_confusion(out / "confusion.csv", report.confusion)
    return dict(metrics=metrics, report=report, table=table)


POOLS = {
    "max": lambda X: X.max(axis=1).astype(np.float64),
    "avg": lambda X: X.mean(axis=1, dtype=np.float64),
    "sum": lambda X: X.sum(axis=1, dtype=np.float64),
}


def run_ablation(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Same readout on reservoir counts versus temporal pooling of the raw input."""
    p = _prepare(cfg)
    tcfg = _train_cfg(cfg)
    T, U, C = p["Xtr"].shape[1], p["Xtr"].shape[2], p["C"]
    feats = {"lsm": (_features(p["R_tr"]), _features(p["R_te"]))}
    for name, pool in POOLS.items():
        feats[f"{name}_pool"] = (pool(p["Xtr"]), pool(p["Xte"]))
    rows = []
    for name, (Ftr, Fte) in feats.items():
        layer, _ = train_supervised(Ftr, p["ytr"], tcfg, C)
        acc = evaluate(layer, Fte, p["yte"], C).accuracy
        if name == "lsm":
            arch = cost.lsm_ann(U, cfg.lsm.h, C, T, cfg.lsm.width, cfg.lsm.depth)
        else:
            arch = cost.Architecture([cost.Pool(U, name.split("_")[0]), cost.Dense(U, C, name="readout")], T)
        ops = cost.count_ops(arch)
        reservoir_macs = sum(f for k, (f, _) in ops.layers.items() if k.startswith("lsm"))
        rows.append({"features": name, "accuracy": acc, "forward_macs": ops.forward, "lsm_macs": reservoir_macs})
    lsm_acc = rows[0]["accuracy"]
    for r in rows:
        r["lsm_minus_this"] = lsm_acc - r["accuracy"]
    metrics = {"task": "ablation", "rows": rows, "config": cfg.to_dict()}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_json(Path(out_dir) / "metrics.json", metrics)
    return metrics


def _split_half(idx: np.ndarray, y: np.ndarray):
    """Split sample indices per class into two halves (first occurrences first)."""
    a, b = [], []
    for c in np.unique(y[idx]):
        members = idx[y[idx] == c]
        k = len(members) // 2
        a += list(members[:k])
        b += list(members[k:])
    return np.array(sorted(a), dtype=np.int64), np.array(sorted(b), dtype=np.int64)


def check_heldout_excluded(train_labels, heldout) -> None:
    leaked = sorted(set(np.asarray(train_labels).tolist()) & set(heldout))
    if leaked:
        raise DataError(f"held-out classes {leaked} leaked into the contrastive training pairs")


def run_zero_shot(cfg: ExperimentConfig, out_dir=None, paired=None) -> dict:
    """Contrastive training on seen classes, prototype retrieval on seen and held-out classes.

    Each held-out class is excluded from every parameter update.  The audio
    query is classified by the nearest vision prototype (classify, then
    retrieve that class's images).
    """
    cs = cfg.contrastive
    heldout = sorted({int(v) for v in cs.heldout.split(",") if v.strip()})
    if paired is None:
        spec = PairedTaskSpec(
            num_classes=cs.num_classes, channels_v=cs.channels_v, channels_a=cs.channels_a,
            T=cfg.data.T, samples_per_class=cs.samples_per_class, latent_dim=cs.latent_dim,
            seed=cfg.seeds.data,
        )
        Xv, Xa, y = gen_paired(spec)
    else:
        Xv, Xa, y = paired
    classes = np.unique(y)
    missing = [c for c in heldout if c not in classes]
    if missing:
        raise DataError(f"held-out classes {missing} are absent from the data")
    unseen_mask = np.isin(y, heldout)
    seen_idx = np.flatnonzero(~unseen_mask)
    train_idx, seen_eval = _split_half(seen_idx, y)
    check_heldout_excluded(y[train_idx], heldout)

    # one shared array: both modalities use the top input rows and the same recurrent block
    L = cfg.lsm
    Uv, Ua = Xv.shape[2], Xa.shape[2]
    rows = max(Uv, Ua)
    arr = sample_conductance(rows + L.h, L.h + 1, L.g_mean, L.g_std, L.forming, L.sparsity,
                             derive_seed(cfg.seeds.weights, 0, 0))
    arr = apply_write_noise(arr, noise_in_us(cfg, cfg.noise.write) / L.g_mean, derive_seed(cfg.seeds.weights, 1))
    params = LifParams(u_th=L.u_th, decay=L.decay)
    read_std = noise_in_us(cfg, cfg.noise.read)
    res_v = build_reservoir(arr, Uv, L.h, params, L.scale, read_std, input_rows=rows)
    res_a = build_reservoir(arr, Ua, L.h, params, L.scale, read_std, input_rows=rows)
    Fv = _features(reservoir_rasters(Xv, [[res_v]], derive_seed(cfg.seeds.weights, 20)))
    Fa = _features(reservoir_rasters(Xa, [[res_a]], derive_seed(cfg.seeds.weights, 21)))

    tcfg = TrainConfig(lr=cs.lr, epochs=cs.epochs, batch_size=cs.batch_size, seed=cfg.seeds.training)
    pv0 = LinearLayer.init(cs.dim, L.h, derive_seed(cfg.seeds.training, 1))
    pa0 = LinearLayer.init(cs.dim, L.h, derive_seed(cfg.seeds.training, 2))
    pv, pa, curve = ct.train_contrastive(Fv[train_idx], Fa[train_idx], pv0, pa0, tcfg, cs.temperature)

    Zv, Za = linear_forward(Fv, pv), linear_forward(Fa, pa)
    report = {}
    for split, idx in (("seen", seen_eval), ("unseen", np.flatnonzero(unseen_mask))):
        support, query = _split_half(idx, y)
        proto_idx = query if cs.prototypes == "query" else support
        protos = ct.build_prototypes(Zv[proto_idx], y[proto_idx])
        ranks = ct.zero_shot_classify(Za[query], protos)
        n_cls = len(protos.class_ids)
        report[split] = {
            "classes": [int(c) for c in protos.class_ids],
            "n_queries": int(len(query)),
            "top1": ct.topk_accuracy(ranks, y[query], 1),
            f"top{min(5, n_cls)}": ct.topk_accuracy(ranks, y[query], min(5, n_cls)),
            "chance": 1.0 / n_cls,
        }
    metrics = {
        "task": "zeroshot",
        "seen": report["seen"],
        "unseen": report["unseen"],
        "final_train_loss": curve[-1] if curve else None,
        "config": cfg.to_dict(),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "metrics.json", metrics)
        n = len(y)
        ids = np.concatenate([np.arange(n), np.arange(n)])
        ct.write_embeddings_csv(
            out / "embeddings.csv", ids, np.concatenate([y, y]),
            ["vision"] * n + ["audio"] * n, np.concatenate([Zv, Za]),
        )
        arch = cost.Architecture([cost.Reservoir(rows, L.h), cost.Counter(L.h), cost.Dense(L.h, cs.dim, name="projection")], cfg.data.T)
        ops = cost.count_ops(arch)
        events = cost.inference_events(cfg.data.T, L.h, 0, cost.digital_macs(ops, arch))
        write_json(out / "cost.json", cost.hybrid_energy(ops, events, system_energy_model()).to_dict())
    return dict(metrics=metrics, projections=(pv, pa), curve=curve)


# -- sweeps ---------------------------------------------------------------------------


def _sweep_task(args):
    cfg, point, repeat = args
    overrides = dict(point)
    overrides.update({
        "seeds.weights": cfg.seeds.weights + repeat,
        "seeds.data": cfg.seeds.data + repeat,
        "seeds.training": cfg.seeds.training + repeat,
    })
    row = {**{k: v for k, v in point}, "repeat": repeat}
    try:
        run_cfg = cfg.replace(**overrides).validate()
        if cfg.sweep.task == "zeroshot":
            metric = run_zero_shot(run_cfg)["metrics"]["unseen"]["top1"]
        else:
            metric = run_supervised(run_cfg)["metrics"]["accuracy"]
        row.update(metric=repr(float(metric)), status="ok", error="")
    except Exception as exc:  # one bad grid point must not sink the sweep
        log.warning("sweep point %s repeat %d failed: %s", point, repeat, exc)
        row.update(metric="", status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_points(cfg: ExperimentConfig) -> list[tuple[tuple[str, str], ...]]:
    grid = parse_grid(cfg.sweep.grid)
    if not grid:
        raise ConfigError("sweep.grid is empty")
    for key, _ in grid:
        if key not in cfg.keys():
            raise ConfigError(f"unknown sweep key {key!r}")
    keys = [k for k, _ in grid]
    return [tuple(zip(keys, combo)) for combo in itertools.product(*(v for _, v in grid))]


def run_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """Grid x repeats, one CSV row each.  Existing ``ok`` rows are kept and skipped."""
    points = sweep_points(cfg)
    keys = [k for k, _ in points[0]]
    header = keys + ["repeat", "metric", "status", "error"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"

    done = set()
    if path.exists():
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != header:
                raise ConfigError(f"{path} was written by a different grid; use a fresh output dir")
            for r in reader:
                if r["status"] == "ok":
                    done.add((tuple((k, r[k]) for k in keys), int(r["repeat"])))
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(header)

    todo = [(cfg, pt, r) for pt in points for r in range(cfg.sweep.repeats) if (pt, r) not in done]
    if cfg.sweep.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            rows = pool.map(_sweep_task, todo)
            _append_rows(path, header, rows)
    else:
        _append_rows(path, header, map(_sweep_task, todo))

    summary = summarize_sweep(path, keys)
    metrics = {"task": "sweep", "task_kind": cfg.sweep.task, "points": summary, "config": cfg.to_dict()}
    write_json(out / "metrics.json", metrics)
    return metrics


def _append_rows(path: Path, header, rows) -> None:
    for row in rows:
        with open(path, "a", newline="", encoding="utf-8") as fh:
            csv.DictWriter(fh, fieldnames=header).writerow(row)


def summarize_sweep(path: Path, keys) -> list[dict]:
    """Mean metric per grid point over its ``ok`` rows, in grid order.

    A repeat counts once: a successful row beats failed attempts of the same repeat.
    """
    latest: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            point = tuple((k, r[k]) for k in keys)
            if r["status"] == "ok":
                latest[(point, int(r["repeat"]))] = float(r["metric"])
            else:
                latest.setdefault((point, int(r["repeat"])), None)
    by_point: dict = {}
    for (point, _), v in latest.items():
        by_point.setdefault(point, []).append(v)
    out = []
    for point, vals in by_point.items():
        ok = [v for v in vals if v is not None]
        out.append({
            "point": dict(point),
            "n_ok": len(ok),
            "n_failed": len(vals) - len(ok),
            "mean_metric": float(np.mean(ok)) if ok else None,
            "std_metric": float(np.std(ok)) if ok else None,
        })
    return out


# -- cost / randomness -------------------------------------------------------------------


def run_cost(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Op counts of the configured LSM-ANN against fully trained recurrent baselines."""
    U = cfg.data.crop ** 2 if cfg.data.source == "nmnist" else cfg.data.channels
    C = 10 if cfg.data.source == "nmnist" else cfg.data.num_classes
    T, h = cfg.data.T, cfg.lsm.h
    lsm_ops = cost.count_ops(cost.lsm_ann(U, h, C, T, cfg.lsm.width, cfg.lsm.depth))
    rows = {"lsm_ann": lsm_ops.to_dict()}
    for kind in ("rnn", "gru", "lstm"):
        ops = cost.count_ops(cost.recurrent_ann(kind, U, h, C, T))
        rows[f"{kind}_ann"] = {**ops.to_dict(), "train_ratio_vs_lsm": cost.cost_ratio(ops, lsm_ops)}
    report = supervised_cost(cfg, U, T, C, mean_spikes=0)
    metrics = {
        "task": "cost",
        "energy_efficiency_J_per_op": cost.energy_efficiency(cost.A100_TDP_W, cost.A100_THROUGHPUT_OPS),
        "architectures": rows,
        "energy": report.to_dict(),
        "reference_train_costs": {
            k: {**v, "recomputed_ratio": cost.cost_ratio(v["rnn"], v["lsm"])}
            for k, v in cost.REFERENCE_TRAIN_COSTS.items()
        },
        "config": cfg.to_dict(),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "cost.json", report.to_dict())
        write_json(out / "metrics.json", metrics)
    return metrics


def run_rng_test(cfg: ExperimentConfig, rows: int = 512, cols: int = 512, out_dir=None) -> dict:
    from .randomness import extract_bits, monobit_test, passes, runs_test

    L = cfg.lsm
    arr = sample_conductance(rows, cols, L.g_mean, L.g_std, L.forming, L.sparsity, cfg.seeds.weights)
    bits = extract_bits(arr)
    mono, runs = monobit_test(bits), runs_test(bits)
    const_p = monobit_test(extract_bits(np.full((rows, cols), L.g_mean)))
    metrics = {
        "task": "rng-test",
        "n_bits": int(bits.size),
        "ones_fraction": float(bits.mean()),
        "monobit": {"p_value": mono, "pass": passes(mono)},
        "runs": {"p_value": runs, "applicable": runs is not None, "pass": passes(runs)},
        "constant_array_monobit": {"p_value": const_p, "pass": passes(const_p)},
        "config": cfg.to_dict(),
    }
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_json(Path(out_dir) / "metrics.json", metrics)
    return metrics


# -- output helpers ---------------------------------------------------------------------


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_confusion(path, confusion: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(range(confusion.shape[1])))
        for i, row in enumerate(confusion):
            w.writerow([i] + [int(v) for v in row])

"""Command-line entry point: ``lsmsim <command> [--config FILE] [--section.key VALUE ...]``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, load_config
from .readout import load_linear

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SKIPPED = 0, 2, 3, 4

COMMANDS = {
    "gen-data": "sample the synthetic task and write it as a native .npz dataset",
    "train": "encode, run the reservoir, train the readout, write metrics/confusion/cost/model",
    "eval": "evaluate a saved readout, including the early-exit threshold table",
    "zeroshot": "contrastive training on seen classes, prototype retrieval on held-out ones",
    "sweep": "grid x repeats over config keys into a resumable sweep.csv",
    "ablate": "reservoir counts versus temporal pooling of the raw input",
    "cost": "op counts and energy of the configured model versus recurrent baselines",
    "rng-test": "bit extraction from a sampled conductance array plus monobit and runs tests",
    "import-nmnist": "convert an N-MNIST directory tree into a native .npz dataset",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'section.key = value' config file")
    group = p.add_argument_group("config overrides (also settable as LSMSIM_SECTION_KEY)")
    for key in ExperimentConfig().keys():
        group.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_config_flags(p)
        if name == "gen-data":
            p.add_argument("--dest", help="output .npz (default <output.dir>/data.npz)")
        if name == "eval":
            p.add_argument("--model", help="readout file (default <output.dir>/model.bin)")
        if name == "rng-test":
            p.add_argument("--rows", type=int, default=512)
            p.add_argument("--cols", type=int, default=512)
        if name == "import-nmnist":
            p.add_argument("--src", help="N-MNIST root with Train/ and Test/ (default data.path)")
            p.add_argument("--dest", help="output .npz (default <output.dir>/nmnist.npz)")
    return parser


def _cli_overrides(ns: argparse.Namespace) -> dict:
    return {k[4:]: v for k, v in vars(ns).items() if k.startswith("cfg:") and v is not None}


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _dataset_metrics(task, cfg, dest, Xtr, ytr, Xte, yte, C) -> dict:
    return {
        "task": task,
        "path": str(dest),
        "shape_train": list(Xtr.shape),
        "shape_test": list(Xte.shape),
        "num_classes": int(C),
        "class_counts_train": np.bincount(ytr, minlength=C).tolist(),
        "class_counts_test": np.bincount(yte, minlength=C).tolist(),
        "spike_density": float(np.concatenate([Xtr.ravel(), Xte.ravel()]).mean()),
        "sha256": _digest(Xtr, ytr, Xte, yte),
        "config": cfg.to_dict(),
    }


def _write_dataset(task, cfg, dest, data, out: Path) -> None:
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    ex.save_native(dest, *data[:4])
    out.mkdir(parents=True, exist_ok=True)
    ex.write_json(out / "metrics.json", _dataset_metrics(task, cfg, dest, *data))


def run_command(ns: argparse.Namespace, cfg: ExperimentConfig) -> None:
    out = Path(cfg.output.dir)
    cmd = ns.command
    if cmd == "gen-data":
        if cfg.data.source != "synthetic":
            raise ConfigError("gen-data needs data.source = synthetic")
        _write_dataset(cmd, cfg, ns.dest or out / "data.npz", ex.load_dataset(cfg), out)
    elif cmd == "train":
        ex.run_supervised(cfg, out)
    elif cmd == "eval":
        model_path = Path(ns.model) if ns.model else out / "model.bin"
        if not model_path.exists():
            raise ex.DataError(f"no trained readout at {model_path}; run 'train' first")
        try:
            model = load_linear(model_path)
        except ValueError as exc:
            raise ex.DataError(f"{model_path}: {exc}") from None
        ex.run_early_exit(cfg, model=model, out_dir=out / "eval")
    elif cmd == "zeroshot":
        ex.run_zero_shot(cfg, out)
    elif cmd == "sweep":
        ex.run_sweep(cfg, out)
    elif cmd == "ablate":
        ex.run_ablation(cfg, out)
    elif cmd == "cost":
        ex.run_cost(cfg, out)
    elif cmd == "rng-test":
        ex.run_rng_test(cfg, ns.rows, ns.cols, out)
    elif cmd == "import-nmnist":
        src = ns.src or cfg.data.path
        if not src:
            raise ex.DatasetAbsent("no N-MNIST directory given (--src or data.path)")
        d = cfg.data
        data = ex.load_nmnist_dir(src, d.T, d.crop, d.merge_polarity, d.max_per_class)
        _write_dataset(cmd, cfg, ns.dest or out / "nmnist.npz", data, out)


def main(argv=None, environ=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(ns.config, _cli_overrides(ns), os.environ if environ is None else environ)
        run_command(ns, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ex.DatasetAbsent as exc:
        print(f"SKIPPED (dataset absent): {exc}", file=sys.stderr)
        return EXIT_SKIPPED
    except (ex.DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

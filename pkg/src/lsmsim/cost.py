"""MAC counting and energy estimation.

Counting convention (frozen; tests pin it):

* one MAC is one multiply plus one accumulate;
* a dense layer ``n_in -> n_out`` costs ``n_in * n_out`` forward MACs per
  application; bias additions carry no multiply and are not counted;
* a reservoir step costs ``h * U + h * h`` MACs (dense, spikes not exploited),
  ``T`` steps per sample;
* counters and temporal pooling cost 0 MACs;
* backward, per trainable dense layer and sample: ``n_in * n_out`` for the
  weight gradient plus ``n_in * n_out`` for the input gradient, the latter
  dropped for the first trainable layer (nothing upstream needs it);
* frozen layers cost 0 backward MACs, except a frozen dense layer sitting
  after a trainable one, which still passes ``n_in * n_out`` input-gradient
  MACs upstream;
* analytic recurrent baselines (never executed) use gate multipliers
  rnn/srnn 1, gru 3, lstm 4: forward ``T * g * (h*U + h*h)``, backward
  ``T * g * (h*U + 2*h*h)`` (weight gradients plus the hidden-state gradient
  through time) plus ``T * g * h*U`` for the input gradient unless first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GATES = {"rnn": 1, "srnn": 1, "gru": 3, "lstm": 4}

# A100, INT8 peak
A100_TDP_W = 300.0
A100_THROUGHPUT_OPS = 624e12

# per single binary input vector on the 512x512 macro, joules
TABLE3_COMPONENTS = {"array": 0.17e-9, "driver": 46.08e-12, "adc": 5.79e-9, "mux": 7.63e-12}

# reported training costs (ops): LSM-ANN vs fully trained recurrent baselines
REFERENCE_TRAIN_COSTS = {
    "dvs_gesture": {"lsm": 532491, "rnn": 10401792011, "ratio": 19534.21},
    "braille": {"lsm": 39706, "rnn": 354330, "ratio": 8.92},
    "nmnist": {"lsm": 17710, "rnn": 3013035, "ratio": 145.84},
    "ntidigits": {"lsm": 29261, "rnn": 1481955, "ratio": 50.65},
}

DEFAULT_BINDINGS = {
    "array": "array_vecs",
    "driver": "array_vecs",
    "decoder": "array_vecs",
    "mux": "array_vecs",
    "adc": "adc_reads",
    "lif": "lif_steps",
    "counter": "counter_incs",
}
EVENT_KINDS = ("array_vecs", "adc_reads", "lif_steps", "counter_incs")


# -- architecture description ------------------------------------------------


@dataclass(frozen=True)
class Dense:
    n_in: int
    n_out: int
    trainable: bool = True
    name: str = "dense"


@dataclass(frozen=True)
class Reservoir:
    U: int
    h: int
    name: str = "lsm"
    trainable = False


@dataclass(frozen=True)
class Counter:
    h: int
    name: str = "counter"
    trainable = False


@dataclass(frozen=True)
class Pool:
    U: int
    kind: str = "max"
    name: str = "pool"
    trainable = False


@dataclass(frozen=True)
class Recurrent:
    kind: str
    U: int
    h: int
    trainable: bool = True
    name: str = "rnn"

    def __post_init__(self):
        if self.kind not in GATES:
            raise ValueError(f"unknown recurrent kind {self.kind!r}")


@dataclass(frozen=True)
class Architecture:
    layers: tuple
    T: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.T < 1:
            raise ValueError("T must be >= 1")


@dataclass
class OpsCount:
    layers: dict = field(default_factory=dict)

    @property
    def forward(self) -> int:
        return sum(f for f, _ in self.layers.values())

    @property
    def backward(self) -> int:
        return sum(b for _, b in self.layers.values())

    @property
    def train(self) -> int:
        """Ops of one training step: forward plus backward."""
        return self.forward + self.backward

    def __add__(self, other: "OpsCount") -> "OpsCount":
        merged = dict(self.layers)
        for k, (f, b) in other.layers.items():
            f0, b0 = merged.get(k, (0, 0))
            merged[k] = (f0 + f, b0 + b)
        return OpsCount(merged)

    def to_dict(self) -> dict:
        return {
            "layers": {k: {"forward": f, "backward": b} for k, (f, b) in self.layers.items()},
            "forward": self.forward,
            "backward": self.backward,
        }


def _unique(name: str, seen: dict) -> str:
    seen[name] = seen.get(name, 0) + 1
    return name if seen[name] == 1 else f"{name}{seen[name] - 1}"


def count_ops(arch: Architecture, samples: int = 1) -> OpsCount:
    """Analytic forward/backward MACs for ``samples`` inputs."""
    T = arch.T
    out = {}
    seen: dict = {}
    first_trainable = True
    for layer in arch.layers:
        name = _unique(layer.name, seen)
        if isinstance(layer, Dense):
            fwd = layer.n_in * layer.n_out
            if layer.trainable:
                bwd = fwd if first_trainable else 2 * fwd
                first_trainable = False
            else:
                bwd = 0 if first_trainable else fwd
        elif isinstance(layer, Reservoir):
            if not first_trainable:
                raise ValueError("a frozen reservoir after a trainable layer is not supported")
            fwd, bwd = T * (layer.h * layer.U + layer.h * layer.h), 0
        elif isinstance(layer, Recurrent):
            g = GATES[layer.kind]
            fwd = T * g * (layer.h * layer.U + layer.h * layer.h)
            bwd = 0
            if layer.trainable:
                bwd = T * g * (layer.h * layer.U + 2 * layer.h * layer.h)
                if not first_trainable:
                    bwd += T * g * layer.h * layer.U
                first_trainable = False
        elif isinstance(layer, (Counter, Pool)):
            fwd = bwd = 0
        else:
            raise TypeError(f"unsupported layer {layer!r}")
        out[name] = (fwd * samples, bwd * samples)
    return OpsCount(out)


def lsm_ann(U: int, h: int, n_classes: int, T: int, width: int = 1, depth: int = 1, hidden=()) -> Architecture:
    """Reservoir(s) + counter + dense readout (optionally with hidden layers)."""
    layers = []
    for _ in range(width):
        dims = [U] + [h] * depth
        layers += [Reservoir(dims[k], h) for k in range(depth)]
    feat = width * depth * h
    layers.append(Counter(feat))
    dims = [feat, *hidden, n_classes]
    layers += [Dense(a, b, name="readout") for a, b in zip(dims[:-1], dims[1:])]
    return Architecture(layers, T)


def recurrent_ann(kind: str, U: int, h: int, n_classes: int, T: int) -> Architecture:
    return Architecture([Recurrent(kind, U, h, name=kind), Dense(h, n_classes, name="readout")], T)


def cost_ratio(a, b, which: str = "train") -> float:
    """Ratio of two op counts (``OpsCount`` or plain numbers)."""
    av = getattr(a, which) if isinstance(a, OpsCount) else a
    bv = getattr(b, which) if isinstance(b, OpsCount) else b
    if bv <= 0:
        raise ValueError("denominator op count must be positive")
    return av / bv


# -- instrumented execution ----------------------------------------------------


class MacCounter:
    """Matrix products that tally the multiplies they actually perform."""

    def __init__(self):
        self.count = 0

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a2 = a if a.ndim == 2 else a[None]
        self.count += a2.shape[0] * a2.shape[1] * b.shape[1]
        return a2 @ b


def instrumented_run(arch: Architecture, seed: int = 0, samples: int = 1) -> OpsCount:
    """Execute the architecture on random data and count MACs per layer.

    Reservoirs are simulated step by step; trainable dense layers get a real
    backward pass from a random upstream gradient.  Analytic-only recurrent
    baselines are rejected.
    """
    from .lsm import LifParams

    rng = np.random.default_rng(seed)
    params = LifParams(u_th=1.0, decay=0.9)
    out = {}
    seen: dict = {}
    for _ in range(samples):
        head = arch.layers[0]
        if isinstance(head, Dense):
            x = rng.random(head.n_in)
        else:
            x = (rng.random((arch.T, head.U)) < 0.3).astype(np.float64)
        tape = []
        seen.clear()
        for layer in arch.layers:
            name = _unique(layer.name, seen)
            mc = MacCounter()
            if isinstance(layer, Reservoir):
                w_in = rng.normal(0, 0.5, (layer.U, layer.h))
                w_rec = rng.normal(0, 0.5, (layer.h, layer.h))
                u = np.zeros(layer.h)
                s = np.zeros(layer.h)
                raster = np.zeros((arch.T, layer.h))
                for t in range(arch.T):
                    u = params.decay * u + mc.matmul(x[t], w_in)[0] + mc.matmul(s, w_rec)[0]
                    s = (u >= params.u_th).astype(np.float64)
                    u[s > 0] = 0.0
                    raster[t] = s
                x = raster
            elif isinstance(layer, Counter):
                x = x.sum(axis=0)
            elif isinstance(layer, Pool):
                x = {"max": x.max, "avg": x.mean, "sum": x.sum}[layer.kind](axis=0)
            elif isinstance(layer, Dense):
                W = rng.normal(0, 0.1, (layer.n_in, layer.n_out))
                tape.append((name, layer, W, x))
                x = mc.matmul(x, W)[0]
            else:
                raise TypeError(f"cannot execute {layer!r}")
            f, b = out.get(name, (0, 0))
            out[name] = (f + mc.count, b)

        trainable = [entry for entry in tape if entry[1].trainable]
        if trainable:
            first = trainable[0][0]
            g = rng.normal(size=tape[-1][1].n_out)
            for name, layer, W, inp in reversed(tape):
                mc = MacCounter()
                if layer.trainable:
                    mc.matmul(inp[:, None], g[None, :])  # dL/dW
                    if name == first:
                        f, b = out[name]
                        out[name] = (f, b + mc.count)
                        break
                g = mc.matmul(g, W.T)[0]  # dL/dx, needed upstream of a trainable layer
                f, b = out[name]
                out[name] = (f, b + mc.count)
    return OpsCount(out)


# -- energy ------------------------------------------------------------------


def energy_efficiency(tdp_w: float, throughput_ops: float) -> float:
    """Joules per op from thermal design power and peak throughput."""
    if throughput_ops <= 0 or tdp_w <= 0:
        raise ValueError("TDP and throughput must be positive")
    return tdp_w / throughput_ops


@dataclass(frozen=True)
class EnergyModel:
    tdp_w: float = A100_TDP_W
    throughput_ops: float = A100_THROUGHPUT_OPS
    components: dict = field(default_factory=lambda: dict(TABLE3_COMPONENTS))
    bindings: dict = field(default_factory=lambda: dict(DEFAULT_BINDINGS))

    def __post_init__(self):
        for name, e in self.components.items():
            if not e > 0:
                raise ValueError(f"component {name!r} energy must be positive")
            if name not in self.bindings:
                raise ValueError(f"component {name!r} has no event binding")

    @property
    def efficiency(self) -> float:
        return energy_efficiency(self.tdp_w, self.throughput_ops)


@dataclass
class CostReport:
    ops: OpsCount
    energy_digital: float
    energy_hybrid: float
    breakdown: dict

    @property
    def ratio(self) -> float:
        return self.energy_digital / self.energy_hybrid if self.energy_hybrid else float("inf")

    def to_dict(self) -> dict:
        return {
            "ops": self.ops.to_dict(),
            "energy_digital_J": self.energy_digital,
            "energy_hybrid_J": self.energy_hybrid,
            "breakdown_J": dict(self.breakdown),
            "digital_over_hybrid": self.ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def digital_macs(ops: OpsCount, arch: Architecture | None = None) -> int:
    """Forward MACs that stay digital in the hybrid system (everything but reservoirs)."""
    if arch is None:
        return ops.forward
    seen: dict = {}
    total = 0
    for layer in arch.layers:
        name = _unique(layer.name, seen)
        if not isinstance(layer, Reservoir):
            total += ops.layers[name][0]
    return total


def hybrid_energy(ops: OpsCount, events: dict, model: EnergyModel | None = None) -> CostReport:
    """Energy of the analogue-digital system versus an all-digital run.

    ``events`` holds counts for ``array_vecs``, ``adc_reads``, ``lif_steps``,
    ``counter_incs`` and ``readout_macs``.  Every analogue component bound to
    an event kind is charged once per event; readout MACs run digitally.
    """
    model = EnergyModel() if model is None else model
    unknown = set(events) - set(EVENT_KINDS) - {"readout_macs"}
    if unknown:
        raise ValueError(f"unknown event kinds {sorted(unknown)}")
    eff = model.efficiency
    breakdown = {}
    for kind in EVENT_KINDS:
        n = events.get(kind, 0)
        if n < 0:
            raise ValueError(f"negative event count for {kind!r}")
        if n == 0:
            continue
        names = [c for c in model.components if model.bindings[c] == kind]
        if not names:
            expected = [c for c, k in DEFAULT_BINDINGS.items() if k == kind]
            raise ValueError(f"missing component energy for {kind!r}: expected one of {expected}")
        for c in names:
            breakdown[c] = breakdown.get(c, 0.0) + model.components[c] * n
    readout = events.get("readout_macs", 0)
    if readout:
        breakdown["readout"] = readout * eff
    hybrid = float(sum(breakdown.values()))
    return CostReport(ops, ops.forward * eff, hybrid, breakdown)


def inference_events(T: int, h: int, spikes: int, readout_macs: int, n_reservoirs: int = 1) -> dict:
    """Event counts of one hybrid inference: one array read and ADC pass per step per reservoir."""
    return {
        "array_vecs": T * n_reservoirs,
        "adc_reads": T * n_reservoirs,
        "lif_steps": T * h * n_reservoirs,
        "counter_incs": int(spikes),
        "readout_macs": int(readout_macs),
    }

"""Discrete-time liquid state machine built from LIF neurons.

Weight layout follows the crossbar: rows are presynaptic lines (input
channels or recurrent neurons), columns are postsynaptic neurons.  The input
weights are ``(U, h)`` and the recurrent weights ``(h, h)``; the synaptic
current at step ``t`` is ``x(t) @ W_in + s(t-1) @ W_rec``.

The membrane update ``u' = u_rest + decay * (u - u_rest) + I`` is the forward
Euler form of the leaky integrator with ``decay = exp(-dt / tau_mem)`` and the
``1 / c_mem`` factor folded into the weight scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import validate_spikes
from .memristor import ConductanceArray, WeightBundle, differential_weights, read_weights


@dataclass(frozen=True)
class LifParams:
    u_th: float = 1.0
    decay: float = 0.9
    u_rest: float = 0.0

    def __post_init__(self):
        if not self.u_th > self.u_rest:
            raise ValueError("threshold must exceed the resting potential")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")


@dataclass(frozen=True)
class LsmConfig:
    input_bundle: WeightBundle
    recurrent_bundle: WeightBundle
    params: LifParams = LifParams()

    def __post_init__(self):
        U, h = self.input_bundle.shape
        if self.recurrent_bundle.shape != (h, h):
            raise ValueError(
                f"recurrent weights {self.recurrent_bundle.shape} do not match hidden size {h}"
            )

    @property
    def U(self) -> int:
        return self.input_bundle.shape[0]

    @property
    def h(self) -> int:
        return self.input_bundle.shape[1]


def build_reservoir(
    arr: ConductanceArray,
    U: int,
    h: int,
    params: LifParams = LifParams(),
    scale: float = 1.0,
    read_noise_std: float = 0.0,
    input_rows: int | None = None,
    quant_bits: int | None = None,
) -> LsmConfig:
    """Map an LSM onto one conductance array.

    Input weights use rows ``[0, U)``; recurrent weights use the ``h`` rows
    after an input block of ``input_rows`` rows (default ``U``), so smaller
    inputs can reuse the top of a larger block.  Both use columns ``[0, h+1)``.
    """
    input_rows = U if input_rows is None else input_rows
    if input_rows < U:
        raise ValueError("input block smaller than the input dimension")
    kw = dict(scale=scale, read_noise_std=read_noise_std, quant_bits=quant_bits)
    w_in = differential_weights(arr, (0, U), (0, h + 1), **kw)
    w_rec = differential_weights(arr, (input_rows, input_rows + h), (0, h + 1), **kw)
    return LsmConfig(w_in, w_rec, params)


def lif_step(u, current, params: LifParams):
    """Advance LIF membranes one step. Returns ``(spikes, new_u)``."""
    u = np.asarray(u, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if u.shape != current.shape:
        raise ValueError(f"state shape {u.shape} != current shape {current.shape}")
    if not np.all(np.isfinite(current)):
        raise ValueError("non-finite synaptic current")
    u = params.u_rest + params.decay * (u - params.u_rest) + current
    spikes = u >= params.u_th
    u = np.where(spikes, params.u_rest, u)
    return spikes.astype(np.uint8), u


def read_reservoir(cfg: LsmConfig, trial_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One (possibly noisy) read of the input and recurrent weight matrices."""
    return (
        read_weights(cfg.input_bundle, [trial_seed, 0]),
        read_weights(cfg.recurrent_bundle, [trial_seed, 1]),
    )


def run_dynamics(inputs: np.ndarray, w_in: np.ndarray, w_rec: np.ndarray, params: LifParams) -> np.ndarray:
    """Simulate a batch ``(B, T, U)`` of inputs; returns a ``(B, T, h)`` raster."""
    B, T, _ = inputs.shape
    h = w_in.shape[1]
    x = inputs.astype(np.float64)
    u = np.full((B, h), params.u_rest, dtype=np.float64)
    s = np.zeros((B, h), dtype=np.float64)
    raster = np.zeros((B, T, h), dtype=np.uint8)
    for t in range(T):
        u = params.u_rest + params.decay * (u - params.u_rest) + x[:, t] @ w_in + s @ w_rec
        fired = u >= params.u_th
        u[fired] = params.u_rest
        s = fired.astype(np.float64)
        raster[:, t] = fired
    return raster


def lsm_forward(x, cfg: LsmConfig, trial_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Run one spike tensor through the reservoir.

    Returns the ``(T, h)`` spike raster and the per-neuron spike counts.
    """
    x = validate_spikes(x)
    if x.shape[1] != cfg.U:
        raise ValueError(f"input has {x.shape[1]} channels, reservoir expects {cfg.U}")
    w_in, w_rec = read_reservoir(cfg, trial_seed)
    raster = run_dynamics(x[None], w_in, w_rec, cfg.params)[0]
    return raster, raster.sum(axis=0, dtype=np.int64)


def lsm_forward_batch(X, cfg: LsmConfig, trial_seeds=None) -> np.ndarray:
    """Forward a ``(B, T, U)`` batch; returns rasters ``(B, T, h)``.

    Without read noise every sample sees the same weights and the batch is
    simulated in one pass.  With read noise each sample gets its own read,
    seeded by ``trial_seeds[i]`` (default: the sample index).
    """
    X = np.asarray(X, dtype=np.uint8)
    if X.ndim != 3 or X.shape[2] != cfg.U:
        raise ValueError(f"expected (B, T, {cfg.U}) batch, got {X.shape}")
    if trial_seeds is None:
        trial_seeds = range(X.shape[0])
    trial_seeds = list(trial_seeds)
    noisy = cfg.input_bundle.read_noise_std > 0 or cfg.recurrent_bundle.read_noise_std > 0
    if not noisy:
        w_in, w_rec = read_reservoir(cfg, 0)
        return run_dynamics(X, w_in, w_rec, cfg.params)
    out = np.empty((X.shape[0], X.shape[1], cfg.h), dtype=np.uint8)
    for i, seed in enumerate(trial_seeds):
        w_in, w_rec = read_reservoir(cfg, seed)
        out[i] = run_dynamics(X[i:i + 1], w_in, w_rec, cfg.params)[0]
    return out


def wide_forward(x, cfgs, trial_seed: int = 0) -> np.ndarray:
    """Parallel reservoirs on the same input; counts are concatenated."""
    if not cfgs:
        raise ValueError("need at least one reservoir")
    U = cfgs[0].U
    if any(c.U != U for c in cfgs):
        raise ValueError("all reservoirs must share the input dimension")
    return np.concatenate([lsm_forward(x, c, trial_seed)[1] for c in cfgs])


def deep_forward(x, layer_cfgs, trial_seed: int = 0) -> np.ndarray:
    """Stacked reservoirs: each layer is driven by the previous layer's raster."""
    if not layer_cfgs:
        raise ValueError("need at least one layer")
    for k in range(1, len(layer_cfgs)):
        if layer_cfgs[k].U != layer_cfgs[k - 1].h:
            raise ValueError(
                f"layer {k} expects {layer_cfgs[k].U} inputs but layer {k - 1} has {layer_cfgs[k - 1].h} neurons"
            )
    counts = []
    signal = x
    for cfg in layer_cfgs:
        signal, c = lsm_forward(signal, cfg, trial_seed)
        counts.append(c)
    return np.concatenate(counts)


def normalize_counts(counts, T: int) -> np.ndarray:
    """Readout features: spike counts divided by the window length."""
    return np.asarray(counts, dtype=np.float64) / T

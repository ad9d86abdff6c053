"""Stochastic conductance arrays and the differential-pair weights read from them.

Conductances are in microsiemens.  A weight is the difference between two
adjacent columns of the same row, so ``c`` conductance columns yield ``c - 1``
signed weights (the sliding-window differential pair).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DEFAULT_MEAN_US = 33.0
DEFAULT_STD_US = 3.0

CONDUCTANCE_MAGIC = 0x434F4E44
_COND_HEADER = struct.Struct("<III")


@dataclass(frozen=True)
class ConductanceArray:
    g: np.ndarray
    forming: str = "dense"
    seed: int | None = None
    mean: float = DEFAULT_MEAN_US
    std: float = DEFAULT_STD_US
    sparsity: float = 0.0

    def __post_init__(self):
        g = np.array(self.g, dtype=np.float64)
        if g.ndim != 2:
            raise ValueError("conductance array must be 2-D")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("conductances must be finite and non-negative")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g.shape


def sample_conductance(
    rows: int,
    cols: int,
    mean: float = DEFAULT_MEAN_US,
    std: float = DEFAULT_STD_US,
    forming: str = "dense",
    sparsity: float = 0.0,
    seed: int = 0,
) -> ConductanceArray:
    """Draw a formed conductance array.

    ``dense`` forming gives every cell a Normal(mean, std) value truncated at
    zero.  ``sparse`` forming leaves exactly ``round(sparsity * rows * cols)``
    cells unformed (zero conductance) at seeded random positions.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if mean <= 0 or std < 0:
        raise ValueError("need mean > 0 and std >= 0")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity {sparsity} outside [0, 1]")
    if forming not in ("dense", "sparse"):
        raise ValueError(f"unknown forming mode {forming!r}")

    rng = np.random.default_rng(seed)
    g = rng.normal(mean, std, size=(rows, cols))
    # truncation by rejection; negligible work at realistic mean/std
    bad = g <= 0
    while bad.any():
        g[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = g <= 0

    if forming == "sparse":
        n_zero = int(round(sparsity * rows * cols))
        idx = rng.choice(rows * cols, size=n_zero, replace=False)
        g.reshape(-1)[idx] = 0.0
    else:
        sparsity = 0.0
    return ConductanceArray(g, forming, seed, mean, std, sparsity)


def apply_write_noise(arr: ConductanceArray, sigma_frac: float, seed: int) -> ConductanceArray:
    """One-time multiplicative programming error ``g * (1 + N(0, sigma_frac))``."""
    if sigma_frac < 0:
        raise ValueError("sigma_frac must be >= 0")
    if sigma_frac == 0:
        return arr
    rng = np.random.default_rng(seed)
    g = arr.g * (1.0 + rng.normal(0.0, sigma_frac, size=arr.shape))
    return replace(arr, g=np.maximum(g, 0.0))


@dataclass(frozen=True)
class WeightBundle:
    """A rectangular view of a conductance array read as differential pairs.

    ``weights[i, j] = scale * (g[i, j + 1] - g[i, j])`` over the view, so the
    weight matrix has one fewer column than the view.  Bundles built from the
    same :class:`ConductanceArray` share its cells.
    """

    source: ConductanceArray
    row_range: tuple[int, int]
    col_range: tuple[int, int]
    scale: float = 1.0
    read_noise_std: float = 0.0
    quant_bits: int | None = None
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r0, r1 = self.row_range
        c0, c1 = self.col_range
        rows, cols = self.source.shape
        if not (0 <= r0 < r1 <= rows and 0 <= c0 < c1 <= cols):
            raise ValueError(
                f"view rows {self.row_range} cols {self.col_range} outside array {self.source.shape}"
            )
        if c1 - c0 < 2:
            raise ValueError("a differential view needs at least 2 columns")
        if self.read_noise_std < 0:
            raise ValueError("read_noise_std must be >= 0")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ValueError("quant_bits must be >= 1")
        g = self.view
        w = self.scale * (g[:, 1:] - g[:, :-1])
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def view(self) -> np.ndarray:
        r0, r1 = self.row_range
        c0, c1 = self.col_range
        return self.source.g[r0:r1, c0:c1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def rebase(self, source: ConductanceArray) -> "WeightBundle":
        """Same view and read settings over a different (e.g. write-noised) array."""
        return replace(self, source=source)


def differential_weights(
    arr: ConductanceArray,
    row_range: tuple[int, int],
    col_range: tuple[int, int],
    scale: float = 1.0,
    read_noise_std: float = 0.0,
    quant_bits: int | None = None,
) -> WeightBundle:
    return WeightBundle(arr, tuple(row_range), tuple(col_range), scale, read_noise_std, quant_bits)


def quantize(w: np.ndarray, bits: int) -> np.ndarray:
    """Uniform symmetric quantization to ``bits`` over ``[-max|w|, max|w|]``."""
    top = np.max(np.abs(w))
    if top == 0:
        return w.copy()
    levels = 2 ** bits - 1
    step = 2 * top / levels
    return np.round((w + top) / step) * step - top


def read_weights(bundle: WeightBundle, trial_seed: int = 0) -> np.ndarray:
    """One read of the bundle's weights.

    Each read adds fresh Gaussian noise (std ``read_noise_std`` microsiemens)
    independently to the minuend and subtrahend column of every pair.
    """
    sigma = bundle.read_noise_std
    if sigma == 0:
        w = np.array(bundle.weights)
    else:
        g = bundle.view
        rng = np.random.default_rng(trial_seed)
        hi = g[:, 1:] + rng.normal(0.0, sigma, size=(g.shape[0], g.shape[1] - 1))
        lo = g[:, :-1] + rng.normal(0.0, sigma, size=(g.shape[0], g.shape[1] - 1))
        w = bundle.scale * (hi - lo)
    if bundle.quant_bits is not None:
        w = quantize(w, bundle.quant_bits)
    return w


def save_conductance(arr: ConductanceArray, path) -> None:
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_COND_HEADER.pack(CONDUCTANCE_MAGIC, rows, cols))
        fh.write(arr.g.astype("<f8").tobytes())


def load_conductance(path) -> ConductanceArray:
    raw = Path(path).read_bytes()
    if len(raw) < _COND_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, rows, cols = _COND_HEADER.unpack_from(raw)
    if magic != CONDUCTANCE_MAGIC:
        raise ValueError(f"{path}: bad magic 0x{magic:08X}")
    body = raw[_COND_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols} values")
    g = np.frombuffer(body, dtype="<f8").reshape(rows, cols)
    return ConductanceArray(g.astype(np.float64))

"""Event streams, spike tensors and the encoders that produce them.

A spike tensor is a plain ``numpy.uint8`` array of shape ``(T, U)`` holding
0/1 entries: ``T`` time steps by ``U`` input channels.  Everything downstream
(reservoir, readout, ablation baselines) consumes that layout.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EVENT_MAGIC = 0x4C534D45
_EVENT_HEADER = struct.Struct("<IIQQ")
_EVENT_RECORD = np.dtype(
    [("t", "<u8"), ("c", "<u4"), ("p", "i1"), ("pad", "V3")]
)

NMNIST_SIZE = 34


@dataclass(frozen=True)
class EventStream:
    """Timestamped channel events with polarity.

    Attributes
    ----------
    t : int64 array, microseconds, non-decreasing
    c : int64 array, channel index in ``[0, num_channels)``
    p : int8 array, polarity in ``{+1, -1}``
    num_channels : int
    duration : int, microseconds, ``>= t[-1]``
    """

    t: np.ndarray
    c: np.ndarray
    p: np.ndarray
    num_channels: int
    duration: int

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        c = np.asarray(self.c, dtype=np.int64).reshape(-1)
        p = np.asarray(self.p, dtype=np.int8).reshape(-1)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p", p)
        if not (len(t) == len(c) == len(p)):
            raise ValueError("t, c and p must have equal length")
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if len(t):
            if np.any(np.diff(t) < 0):
                raise ValueError("timestamps must be non-decreasing")
            if t[0] < 0:
                raise ValueError("timestamps must be non-negative")
            if c.min() < 0 or c.max() >= self.num_channels:
                raise ValueError("channel index out of range")
            if not np.all((p == 1) | (p == -1)):
                raise ValueError("polarity must be +1 or -1")
            if self.duration < t[-1]:
                raise ValueError("duration is shorter than the last timestamp")
        elif self.duration < 0:
            raise ValueError("duration must be non-negative")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_events(cls, events, num_channels: int, duration: int) -> "EventStream":
        """Build from an iterable of ``(t, channel, polarity)`` tuples."""
        events = sorted(events, key=lambda e: e[0])
        if not events:
            empty = np.zeros(0, dtype=np.int64)
            return cls(empty, empty, empty.astype(np.int8), num_channels, duration)
        t, c, p = zip(*events)
        return cls(np.array(t), np.array(c), np.array(p), num_channels, duration)


def validate_spikes(tensor) -> np.ndarray:
    """Return ``tensor`` as a (T, U) uint8 array, raising on bad shape or values."""
    arr = np.asarray(tensor)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"spike tensor must be 2-D with T, U >= 1, got {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("spike tensor entries must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def bin_events(stream: EventStream, T: int, merge_polarity: bool = True) -> np.ndarray:
    """Bin an event stream into a binary ``(T, U)`` spike tensor.

    An event at time ``t`` lands in row ``floor(t * T / duration)`` clamped to
    ``T - 1``.  Several events in one cell collapse to a single 1.  With
    ``merge_polarity=False`` the channel axis doubles and OFF events occupy
    the upper half.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if stream.duration <= 0:
        raise ValueError("zero-duration stream")
    U = stream.num_channels
    width = U if merge_polarity else 2 * U
    out = np.zeros((T, width), dtype=np.uint8)
    if len(stream) == 0:
        return out
    rows = np.minimum(stream.t * T // stream.duration, T - 1)
    cols = stream.c.copy()
    if not merge_polarity:
        cols = np.where(stream.p < 0, cols + U, cols)
    out[rows, cols] = 1
    return out


def rate_encode(image, T: int, seed: int) -> np.ndarray:
    """Bernoulli rate coding: pixel ``p`` spikes with probability ``p`` per step.

    The image is flattened row-major so ``U = H * W``.
    """
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0 or img.max(initial=0.0) > 1:
        raise ValueError("pixel values must lie in [0, 1]")
    if T < 1:
        raise ValueError("T must be >= 1")
    rates = img.reshape(-1)
    rng = np.random.default_rng(seed)
    return (rng.random((T, rates.size)) < rates).astype(np.uint8)


def threshold_encode(signal, delta: float) -> EventStream:
    """Delta-modulate a sampled signal into a single-channel event stream.

    A reference starts at ``signal[0]``; each time the signal moves ``delta``
    above (below) it, a +1 (-1) event is emitted at that sample index and the
    reference steps by ``delta``.
    """
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if x.size < 1:
        raise ValueError("signal must have at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")

    ref = x[0]
    events = []
    for k in range(1, x.size):
        while x[k] - ref >= delta:
            ref += delta
            events.append((k, 0, 1))
        while ref - x[k] >= delta:
            ref -= delta
            events.append((k, 0, -1))
    return EventStream.from_events(events, num_channels=1, duration=x.size - 1)


def center_crop(tensor, H: int, W: int, h: int, w: int) -> np.ndarray:
    """Crop a ``T x (H*W)`` tensor to its central ``h x w`` window."""
    arr = np.asarray(tensor)
    if arr.ndim != 2 or arr.shape[1] != H * W:
        raise ValueError(f"expected T x {H * W} tensor, got shape {arr.shape}")
    if not (1 <= h <= H and 1 <= w <= W):
        raise ValueError("crop size must fit inside the frame")
    top, left = (H - h) // 2, (W - w) // 2
    frames = arr.reshape(arr.shape[0], H, W)
    return frames[:, top:top + h, left:left + w].reshape(arr.shape[0], h * w).copy()


def inject_input_noise(tensor, p: float, seed: int) -> np.ndarray:
    """Flip every entry independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("flip probability must lie in [0, 1]")
    arr = np.asarray(tensor, dtype=np.uint8)
    rng = np.random.default_rng(seed)
    flips = rng.random(arr.shape) < p
    return arr ^ flips.astype(np.uint8)


def raster_to_events(raster, dt_us: int = 1) -> EventStream:
    """Turn a binary ``(T, h)`` raster into an event stream (all ON events)."""
    arr = validate_spikes(raster)
    rows, cols = np.nonzero(arr)
    return EventStream(
        rows.astype(np.int64) * dt_us,
        cols,
        np.ones(rows.size, dtype=np.int8),
        num_channels=arr.shape[1],
        duration=arr.shape[0] * dt_us,
    )


# -- native file formats -----------------------------------------------------


def write_events_jsonl(stream: EventStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"channels": stream.num_channels, "duration": stream.duration}) + "\n")
        for t, c, p in zip(stream.t.tolist(), stream.c.tolist(), stream.p.tolist()):
            fh.write(json.dumps({"t": t, "c": c, "p": p}) + "\n")


def read_events_jsonl(path) -> EventStream:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: missing header line")
    header = json.loads(lines[0])
    try:
        channels, duration = int(header["channels"]), int(header["duration"])
    except KeyError as exc:
        raise ValueError(f"{path}: header lacks {exc}") from None
    recs = [json.loads(ln) for ln in lines[1:]]
    return EventStream(
        np.array([r["t"] for r in recs], dtype=np.int64),
        np.array([r["c"] for r in recs], dtype=np.int64),
        np.array([r["p"] for r in recs], dtype=np.int8),
        channels,
        duration,
    )


def write_events_bin(stream: EventStream, path) -> None:
    recs = np.zeros(len(stream), dtype=_EVENT_RECORD)
    recs["t"] = stream.t
    recs["c"] = stream.c
    recs["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(_EVENT_HEADER.pack(EVENT_MAGIC, stream.num_channels, stream.duration, len(stream)))
        fh.write(recs.tobytes())


def read_events_bin(path) -> EventStream:
    raw = Path(path).read_bytes()
    if len(raw) < _EVENT_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, channels, duration, count = _EVENT_HEADER.unpack_from(raw)
    if magic != EVENT_MAGIC:
        raise ValueError(f"{path}: bad magic 0x{magic:08X}")
    body = raw[_EVENT_HEADER.size:]
    if len(body) != count * _EVENT_RECORD.itemsize:
        raise ValueError(f"{path}: expected {count} records")
    recs = np.frombuffer(body, dtype=_EVENT_RECORD)
    return EventStream(
        recs["t"].astype(np.int64), recs["c"].astype(np.int64), recs["p"].copy(), channels, duration
    )


def decode_nmnist(raw: bytes) -> EventStream:
    """Decode N-MNIST 40-bit AER records into a 34x34-channel stream.

    Channel index is ``y * 34 + x``.  Polarity bit 1 is ON (+1).
    """
    if len(raw) % 5:
        raise ValueError("N-MNIST payload length is not a multiple of 5")
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 5).astype(np.int64)
    x, y = buf[:, 0], buf[:, 1]
    pol = np.where(buf[:, 2] >> 7, 1, -1).astype(np.int8)
    t = ((buf[:, 2] & 0x7F) << 16) | (buf[:, 3] << 8) | buf[:, 4]
    if np.any(x >= NMNIST_SIZE) or np.any(y >= NMNIST_SIZE):
        raise ValueError("N-MNIST address outside the 34x34 sensor")
    order = np.argsort(t, kind="stable")
    t, x, y, pol = t[order], x[order], y[order], pol[order]
    duration = int(t[-1]) + 1 if t.size else 1
    return EventStream(t, y * NMNIST_SIZE + x, pol, NMNIST_SIZE * NMNIST_SIZE, duration)


def encode_nmnist(stream: EventStream) -> bytes:
    """Inverse of :func:`decode_nmnist` (used for fixtures and round trips)."""
    x = stream.c % NMNIST_SIZE
    y = stream.c // NMNIST_SIZE
    out = np.zeros((len(stream), 5), dtype=np.uint8)
    out[:, 0] = x
    out[:, 1] = y
    out[:, 2] = ((stream.p > 0).astype(np.int64) << 7) | ((stream.t >> 16) & 0x7F)
    out[:, 3] = (stream.t >> 8) & 0xFF
    out[:, 4] = stream.t & 0xFF
    return out.tobytes()


def read_nmnist(path) -> EventStream:
    return decode_nmnist(Path(path).read_bytes())

"""Desk-scale synthetic spike datasets standing in for event-camera / cochlea data.

Two task families:

``rate``
    Each class excites its own block of channels for the whole window.  Mean
    firing rates separate the classes linearly.
``order``
    Channels are split into groups and the window into as many segments.
    Every class drives every group for exactly one segment, so each channel
    has the same expected spike count in every class; only the order in which
    groups fire tells classes apart.  Temporal pooling is blind to it.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SyntheticTaskSpec:
    num_classes: int = 2
    channels: int = 32
    T: int = 24
    samples_per_class: int = 40
    seed: int = 0
    kind: str = "rate"
    rate_on: float = 0.5
    rate_off: float = 0.05
    groups: int = 4

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.kind not in ("rate", "order"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        for r in (self.rate_on, self.rate_off):
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.channels < 1 or self.T < 1 or self.samples_per_class < 1:
            raise ValueError("channels, T and samples_per_class must be >= 1")


def rate_templates(spec: SyntheticTaskSpec) -> np.ndarray:
    """Per-class ``(T, U)`` firing-probability templates."""
    C, U, T = spec.num_classes, spec.channels, spec.T
    tpl = np.full((C, T, U), spec.rate_off)
    if spec.kind == "rate":
        blocks = np.array_split(np.arange(U), C)
        for k, chans in enumerate(blocks):
            tpl[k][:, chans] = spec.rate_on
        return tpl

    G = spec.groups
    if G < 2 or G > U or G > T:
        raise ValueError("order task needs 2 <= groups <= min(channels, T)")
    perms = _class_orders(G, C, spec.seed)
    chans = np.array_split(np.arange(U), G)
    segs = np.array_split(np.arange(T), G)
    for k, perm in enumerate(perms):
        for seg, g in zip(segs, perm):
            tpl[k][np.ix_(seg, chans[g])] = spec.rate_on
    return tpl


def _class_orders(G: int, C: int, seed: int) -> list[tuple[int, ...]]:
    perms = list(itertools.permutations(range(G)))
    if C > len(perms):
        raise ValueError(f"only {len(perms)} orderings exist for {G} groups")
    rng = np.random.default_rng([seed, 7919])
    pick = rng.choice(len(perms), size=C, replace=False)
    return [perms[i] for i in sorted(pick)]


def sample_from_templates(templates: np.ndarray, labels, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli-sample one spike tensor per label from its class template."""
    probs = templates[np.asarray(labels)]
    return (rng.random(probs.shape) < probs).astype(np.uint8)


def gen_synthetic(spec: SyntheticTaskSpec, templates: np.ndarray | None = None):
    """Labeled dataset ``(X, y)`` with ``X`` of shape ``(n, T, U)``.

    Labels are interleaved (0, 1, ..., C-1, 0, 1, ...) so any prefix is
    roughly balanced.
    """
    tpl = rate_templates(spec) if templates is None else np.asarray(templates, dtype=np.float64)
    if tpl.ndim == 2:
        tpl = np.repeat(tpl[:, None, :], spec.T, axis=1)
    if tpl.shape != (spec.num_classes, spec.T, spec.channels):
        raise ValueError(f"templates must be (C, T, U), got {tpl.shape}")
    if tpl.min() < 0 or tpl.max() > 1:
        raise ValueError("template rates must lie in [0, 1]")
    flat = tpl.reshape(spec.num_classes, -1)
    if np.unique(flat, axis=0).shape[0] < spec.num_classes:
        warnings.warn("some class templates are identical", stacklevel=2)
    y = np.tile(np.arange(spec.num_classes), spec.samples_per_class)
    rng = np.random.default_rng(spec.seed)
    return sample_from_templates(tpl, y, rng), y


@dataclass(frozen=True)
class PairedTaskSpec:
    """Two modalities driven by a shared per-class latent code."""

    num_classes: int = 7
    channels_v: int = 32
    channels_a: int = 24
    T: int = 20
    samples_per_class: int = 30
    latent_dim: int = 3
    seed: int = 0
    rate_lo: float = 0.02
    rate_hi: float = 0.6
    gain: float = 2.0
    min_separation: float = 0.8


def paired_templates(spec: PairedTaskSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-class rate vectors for both modalities.

    A unit-norm latent code per class is pushed through two fixed random
    linear maps and squashed into ``[rate_lo, rate_hi]``, so the modalities
    are related by the same class geometry but share no channels.  Codes are
    redrawn until every pair is at least ``min_separation`` apart.
    """
    rng = np.random.default_rng([spec.seed, 104729])
    codes = _separated_codes(spec.num_classes, spec.latent_dim, spec.min_separation, rng)
    maps = [rng.normal(size=(spec.latent_dim, u)) for u in (spec.channels_v, spec.channels_a)]
    out = []
    for m in maps:
        z = spec.gain * (codes @ m) / np.sqrt(spec.latent_dim)
        sig = 1.0 / (1.0 + np.exp(-z))
        out.append(spec.rate_lo + (spec.rate_hi - spec.rate_lo) * sig)
    return out[0], out[1]


def _separated_codes(n: int, dim: int, min_dist: float, rng: np.random.Generator, tries: int = 10000) -> np.ndarray:
    for _ in range(tries):
        codes = rng.normal(size=(n, dim))
        codes /= np.linalg.norm(codes, axis=1, keepdims=True)
        d = np.linalg.norm(codes[:, None] - codes[None], axis=-1)
        if d[np.triu_indices(n, 1)].min() >= min_dist:
            return codes
    raise ValueError(f"could not place {n} codes in {dim}-D at separation {min_dist}")


def gen_paired(spec: PairedTaskSpec):
    """``(Xv, Xa, y)``: row ``i`` of each modality is a sample of class ``y[i]``."""
    tv, ta = paired_templates(spec)
    y = np.tile(np.arange(spec.num_classes), spec.samples_per_class)
    rng = np.random.default_rng([spec.seed, 1])
    Xv = (rng.random((y.size, spec.T, spec.channels_v)) < tv[y][:, None, :]).astype(np.uint8)
    Xa = (rng.random((y.size, spec.T, spec.channels_a)) < ta[y][:, None, :]).astype(np.uint8)
    return Xv, Xa, y

"""Crossmodal contrastive heads and prototype-based zero-shot classification."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .readout import LinearLayer, TrainConfig, _Sgd, linear_forward, minibatches


def _row_norms(A: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(A, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"{name} row {int(zero[0])} has zero norm")
    return norms


def cosine_similarity_matrix(A, B) -> np.ndarray:
    """Pairwise cosine similarities between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding dims differ: {A.shape[1]} vs {B.shape[1]}")
    a = A / _row_norms(A, "A")[:, None]
    b = B / _row_norms(B, "B")[:, None]
    return a @ b.T


def _log_softmax(z: np.ndarray, axis: int) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def contrastive_loss(Zv, Za, temperature: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetric cross-entropy over the cosine similarity matrix.

    Row ``i`` of ``Zv`` is paired with row ``i`` of ``Za``.  The loss is the
    average of the vision-to-audio (row softmax) and audio-to-vision (column
    softmax) cross-entropies, each a mean over the ``N`` pairs.

    Returns ``(loss, dL/dZv, dL/dZa)``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    Zv = np.atleast_2d(np.asarray(Zv, dtype=np.float64))
    Za = np.atleast_2d(np.asarray(Za, dtype=np.float64))
    if Zv.shape != Za.shape:
        raise ValueError(f"paired batches differ in shape: {Zv.shape} vs {Za.shape}")
    n = Zv.shape[0]
    nv = _row_norms(Zv, "vision")
    na = _row_norms(Za, "audio")
    v = Zv / nv[:, None]
    a = Za / na[:, None]
    logits = (v @ a.T) / temperature

    log_pr = _log_softmax(logits, axis=1)
    log_pc = _log_softmax(logits, axis=0)
    diag = np.arange(n)
    loss = -0.5 * (log_pr[diag, diag].mean() + log_pc[diag, diag].mean())

    eye = np.eye(n)
    d_logits = 0.5 * ((np.exp(log_pr) - eye) + (np.exp(log_pc) - eye)) / n
    d_sim = d_logits / temperature
    d_v = d_sim @ a
    d_a = d_sim.T @ v
    # back through x / |x|
    g_v = (d_v - v * np.sum(d_v * v, axis=1, keepdims=True)) / nv[:, None]
    g_a = (d_a - a * np.sum(d_a * a, axis=1, keepdims=True)) / na[:, None]
    return float(loss), g_v, g_a


def _warn_if_degenerate(xv: np.ndarray, xa: np.ndarray) -> None:
    pairs = np.concatenate([xv, xa], axis=1)
    if np.unique(pairs, axis=0).shape[0] < pairs.shape[0]:
        warnings.warn("minibatch contains duplicated pairs; contrastive targets are degenerate", stacklevel=3)


def train_contrastive(
    Xv,
    Xa,
    proj_v: LinearLayer,
    proj_a: LinearLayer,
    cfg: TrainConfig,
    temperature: float = 1.0,
) -> tuple[LinearLayer, LinearLayer, list[float]]:
    """Fit the two projection heads on paired features; the features are never changed.

    Returns new layers (inputs are not mutated) and the per-epoch mean loss.
    """
    Xv = np.asarray(Xv, dtype=np.float64)
    Xa = np.asarray(Xa, dtype=np.float64)
    if Xv.shape[0] != Xa.shape[0] or Xv.shape[0] == 0:
        raise ValueError("need the same non-zero number of vision and audio samples")
    if Xv.shape[1] != proj_v.shape[1] or Xa.shape[1] != proj_a.shape[1]:
        raise ValueError("feature dims do not match projection inputs")
    if proj_v.shape[0] != proj_a.shape[0]:
        raise ValueError("projection heads must share the embedding dim")

    pv, pa = proj_v.copy(), proj_a.copy()
    opt = _Sgd([pv.W, pv.b, pa.W, pa.b], cfg.lr, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for _ in range(cfg.epochs):
        total, count = 0.0, 0
        for idx in minibatches(Xv.shape[0], cfg.batch_size, rng):
            if idx.size < 2:
                continue
            xv, xa = Xv[idx], Xa[idx]
            _warn_if_degenerate(xv, xa)
            loss, gzv, gza = contrastive_loss(linear_forward(xv, pv), linear_forward(xa, pa), temperature)
            total += loss * idx.size
            count += idx.size
            opt.step([gzv.T @ xv, gzv.sum(axis=0), gza.T @ xa, gza.sum(axis=0)])
        curve.append(total / count if count else float("nan"))
    return pv, pa, curve


@dataclass(frozen=True)
class Prototypes:
    class_ids: np.ndarray
    vectors: np.ndarray


def build_prototypes(Z, labels) -> Prototypes:
    """Class-mean embeddings, ordered by class id."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape != (Z.shape[0],):
        raise ValueError("one label per embedding required")
    if Z.shape[0] == 0:
        raise ValueError("no embeddings given")
    ids = np.unique(labels)
    vecs = np.stack([Z[labels == c].mean(axis=0) for c in ids])
    return Prototypes(ids, vecs)


def zero_shot_classify(query, protos: Prototypes) -> np.ndarray:
    """Class ids ranked by descending cosine similarity; ties go to the smaller id.

    A single query gives a 1-D ranking, a ``(n, D)`` batch gives ``(n, C)``.
    """
    q = np.asarray(query, dtype=np.float64)
    single = q.ndim == 1
    sims = cosine_similarity_matrix(np.atleast_2d(q), protos.vectors)
    order = np.argsort(protos.class_ids, kind="stable")
    ids, sims = protos.class_ids[order], sims[:, order]
    ranks = np.argsort(-sims, axis=1, kind="stable")
    ranked = ids[ranks]
    return ranked[0] if single else ranked


def topk_accuracy(rankings, truths, k: int) -> float:
    rankings = np.atleast_2d(np.asarray(rankings))
    truths = np.asarray(truths).reshape(-1)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > rankings.shape[1]:
        raise ValueError(f"k={k} exceeds the {rankings.shape[1]} ranked classes")
    hits = (rankings[:, :k] == truths[:, None]).any(axis=1)
    return float(hits.mean())


def write_embeddings_csv(path, ids, classes, modality, Z) -> None:
    """Write one row per embedding under the header ``id,class,modality,d0..``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    modality = np.broadcast_to(np.asarray(modality, dtype=object), (Z.shape[0],))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "class", "modality"] + [f"d{j}" for j in range(Z.shape[1])])
        for i, c, m, z in zip(ids, classes, modality, Z):
            w.writerow([i, c, m] + [repr(float(v)) for v in z])

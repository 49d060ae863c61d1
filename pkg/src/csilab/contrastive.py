"""Temperature-scaled contrastive objectives over embedding batches.

The discriminator scores a pair of embeddings by exp(cosine/tau). The
directional batch loss treats row n of one view as the anchor and row n of
the other view as its positive; all other rows of the second view are the
negatives. By default the positive term is left out of the denominator, so
the loss for one anchor is

    -log( h(z1_n, z2_n) / sum_{m != n} h(z1_n, z2_m) )

averaged over the batch. Passing include_positive=True switches to the
conventional form whose denominator also counts the positive pair.

All values are built on the caller's tape, so losses are differentiable
end to end.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor
from .errors import DegenerateBatch, ShapeMismatch, ZeroNormEmbedding


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return tau


def discriminator(tape: Tape, z1: Tensor, z2: Tensor, tau: float) -> Tensor:
    """exp(cosine(z1, z2) / tau) for a single pair of embedding vectors."""
    tau = _check_tau(tau)
    if z1.values.ndim != 1 or z1.shape != z2.shape:
        raise ShapeMismatch(f"discriminator: {z1.shape} vs {z2.shape}")
    n1 = tape.l2_norm(z1)
    n2 = tape.l2_norm(z2)
    if n1.values == 0.0 or n2.values == 0.0:
        raise ZeroNormEmbedding("cosine undefined for a zero-norm embedding")
    cos = tape.divide(tape.divide(tape.dot(z1, z2), n1), n2)
    return tape.exp(tape.divide(cos, tau))


def _pairwise_logits(tape: Tape, z1: Tensor, z2: Tensor, tau: float) -> Tensor:
    """Matrix of cosine(z1_n, z2_m) / tau for every anchor/candidate pair."""
    if z1.values.ndim != 2 or z1.shape != z2.shape:
        raise ShapeMismatch(f"batch views must share shape: {z1.shape} vs {z2.shape}")
    n1 = tape.l2_norm(z1, axis=1, keepdims=True)
    n2 = tape.l2_norm(z2, axis=1, keepdims=True)
    if np.any(n1.values == 0.0) or np.any(n2.values == 0.0):
        raise ZeroNormEmbedding("batch contains a zero-norm embedding")
    sims = tape.matmul(z1, tape.transpose(z2))
    scale = tape.matmul(n1, tape.transpose(n2))
    return tape.divide(tape.divide(sims, scale), tau)


def directional_loss(tape: Tape, z1: Tensor, z2: Tensor, tau: float,
                     include_positive: bool = False) -> Tensor:
    """Anchor-on-z1 contrastive loss, averaged over the batch."""
    tau = _check_tau(tau)
    k = z1.shape[0] if z1.values.ndim == 2 else 0
    if k < 2:
        raise DegenerateBatch(f"contrastive batch needs at least 2 pairs, got {k}")
    logits = _pairwise_logits(tape, z1, z2, tau)
    h = tape.exp(logits)
    eye = np.eye(k)
    pos = tape.reduce_sum(tape.multiply(h, tape.constant(eye)),
                          axis=1, keepdims=True)
    denom_mask = np.ones((k, k)) if include_positive else 1.0 - eye
    denom = tape.reduce_sum(tape.multiply(h, tape.constant(denom_mask)),
                            axis=1, keepdims=True)
    per_anchor = tape.scalar_multiply(tape.log(tape.divide(pos, denom)), -1.0)
    return tape.scalar_multiply(tape.reduce_sum(per_anchor), 1.0 / k)


def total_loss(tape: Tape, z1: Tensor, z2: Tensor, tau: float,
               include_positive: bool = False) -> Tensor:
    """Sum of both directional losses between two views of one batch."""
    forward = directional_loss(tape, z1, z2, tau, include_positive)
    backward = directional_loss(tape, z2, z1, tau, include_positive)
    return tape.add(forward, backward)


def multiview_loss(tape: Tape, views: list[Tensor], tau: float,
                   include_positive: bool = False) -> Tensor:
    """Sum of pairwise total losses over every unordered pair of views."""
    if len(views) < 2:
        raise DegenerateBatch(f"multiview loss needs at least 2 views, got {len(views)}")
    acc = None
    for i in range(len(views)):
        for j in range(i + 1, len(views)):
            pair = total_loss(tape, views[i], views[j], tau, include_positive)
            acc = pair if acc is None else tape.add(acc, pair)
    return acc

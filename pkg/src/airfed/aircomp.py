"""Over-the-air aggregation after channel inversion.

With every transmitter pre-inverting its channel, the per-subcarrier
superposition at the server reduces to the plain sum of the uploaded
vectors plus receiver noise; the server divides that by K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AggregationResult:
    mean_model: np.ndarray
    noise_draw_norm: float


def aggregate(models, noise_std: float, rng: np.random.Generator, k: int | None = None) -> AggregationResult:
    """(sum of models + N(0, noise_std^2) per entry) / k.

    ``k`` defaults to the number of models. The noise vector is always drawn
    from ``rng`` (zeros when noise_std is 0 are skipped), so its values depend
    only on the stream, never on the model contents.
    """
    if len(models) == 0:
        raise ValueError("cannot aggregate an empty list of models")
    dim = np.shape(models[0])
    for m in models:
        if np.shape(m) != dim:
            raise ValueError(f"model shapes differ: {np.shape(m)} vs {dim}")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    k = len(models) if k is None else k
    total = np.zeros(dim)
    for m in models:
        total += m
    if noise_std > 0:
        z = rng.normal(scale=noise_std, size=dim)
        total += z
        noise_norm = float(np.linalg.norm(z))
    else:
        noise_norm = 0.0
    return AggregationResult(total / k, noise_norm)

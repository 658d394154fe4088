"""Truncated Rayleigh block fading and channel-inversion energy accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ChannelRealization:
    per_subcarrier: np.ndarray  # (N, N_sc) magnitudes |h_{i,b}|
    effective: np.ndarray  # (N,) harmonic-mean reduction per client

    @classmethod
    def from_subcarriers(cls, per_subcarrier) -> "ChannelRealization":
        per_subcarrier = np.atleast_2d(np.asarray(per_subcarrier, dtype=np.float64))
        return cls(per_subcarrier, effective_channels(per_subcarrier))

    @property
    def n_clients(self) -> int:
        return len(self.effective)


def rayleigh_magnitudes(size, floor: float, rng: np.random.Generator) -> np.ndarray:
    """|CN(0,1)| draws conditioned on being at least ``floor``.

    Rejected entries are redrawn until every entry clears the floor, so the
    result is the conditional law rather than a clamped one.
    """
    if not 0 <= floor < 1:
        raise ValueError("floor must lie in [0, 1)")
    scale = 1.0 / np.sqrt(2.0)
    out = rng.rayleigh(scale, size=size)
    bad = out < floor
    while bad.any():
        out[bad] = rng.rayleigh(scale, size=int(bad.sum()))
        bad = out < floor
    return out


def draw_channels(
    n_clients: int, n_subcarriers: int, floor: float, rng: np.random.Generator
) -> ChannelRealization:
    """One coherence block: i.i.d. per-subcarrier magnitudes for every client."""
    h = rayleigh_magnitudes((n_clients, n_subcarriers), floor, rng)
    return ChannelRealization(h, effective_channels(h))


def effective_channels(per_subcarrier: np.ndarray) -> np.ndarray:
    h = np.asarray(per_subcarrier, dtype=np.float64)
    if np.any(h <= 0):
        raise ValueError("subcarrier magnitudes must be strictly positive")
    return np.mean(h**-2.0, axis=-1) ** -0.5


def effective_channel(row) -> float:
    """(mean of 1/|h_b|^2)^(-1/2) over one client's subcarriers."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise ValueError("expected a non-empty 1-D row of subcarrier magnitudes")
    return float(effective_channels(row))


def upload_energy(
    effective_h: float, psi_w: float, model_dim: int, symbol_period_s: float
) -> float:
    """Scaling-plus-inversion energy (J) for uploading ``model_dim`` symbols."""
    if not effective_h > 0:
        raise ValueError("effective channel must be positive")
    # per-symbol energy first, then M symbols
    return (psi_w * symbol_period_s) * model_dim / effective_h**2


@dataclass
class RoundEnergy:
    round: int
    per_client: dict[int, float]
    total: float


@dataclass
class EnergyLedger:
    per_round: list[RoundEnergy] = field(default_factory=list)
    cumulative_j: float = 0.0


def record_round_energy(ledger: EnergyLedger, round: int, selected, realization: ChannelRealization, cfg) -> EnergyLedger:
    """Append the upload energy of ``selected`` clients for one round.

    Mutates and returns ``ledger``. Sums run in client-list order so the
    totals are reproducible bit for bit.
    """
    per_client: dict[int, float] = {}
    for i in selected:
        i = int(i)
        if not 0 <= i < realization.n_clients:
            raise KeyError(f"unknown client id {i}")
        per_client[i] = upload_energy(
            float(realization.effective[i]),
            cfg.scaling_factor_watts,
            cfg.model_dim,
            cfg.symbol_period_s,
        )
    total = 0.0
    for e in per_client.values():
        total += e
    ledger.per_round.append(RoundEnergy(round, per_client, total))
    ledger.cumulative_j += total
    return ledger

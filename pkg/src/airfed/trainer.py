"""Round loop for channel-aware agnostic FL and its baselines.

Each round: draw one fading block, pick the descent set, let every picked
client take one SGD step from the broadcast model, aggregate over the air,
then (for the lambda-driven policies) run the ascent step on a separate,
uniformly drawn set of clients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from airfed import model
from airfed.aircomp import aggregate
from airfed.channel import ChannelRealization, EnergyLedger, draw_channels, record_round_energy
from airfed.config import RoundRecord, RoundWriter, SimConfig, seeded_rng
from airfed.data import ClientShards, Dataset, load_idx, shard_by_label, split, synthesize
from airfed.selection import (
    SelectionDistribution,
    ascent_update,
    bias_pmf,
    poe_combine,
    sample_with_fallback,
    top_k,
    uniform,
)

log = logging.getLogger(__name__)

LAMBDA_POLICIES = ("afl", "ca_afl")


@dataclass
class TrainerState:
    global_model: np.ndarray
    lam: np.ndarray
    round: int = 0
    lr: float = 0.0
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    history: list[RoundRecord] = field(default_factory=list)
    # descent-set distribution used in the latest round (None for greedy_topk)
    last_distribution: SelectionDistribution | None = None
    last_client_accuracy: np.ndarray | None = None


class Streams:
    """The named random streams one run consumes."""

    def __init__(self, seed: int, n_clients: int):
        self.channel = seeded_rng(seed, "channel")
        self.descent = seeded_rng(seed, "descent-sampling")
        self.ascent = seeded_rng(seed, "ascent-sampling")
        self.noise = seeded_rng(seed, "noise")
        self.ascent_batch = seeded_rng(seed, "ascent-batch")
        self.batch = [seeded_rng(seed, f"batch/{i}") for i in range(n_clients)]


class EpochSampler:
    """Per-client mini-batches drawn without replacement, reshuffled on exhaustion."""

    def __init__(self, shards: ClientShards, rngs: list[np.random.Generator]):
        self.shards = shards
        self.rngs = rngs
        self._perm: list[np.ndarray | None] = [None] * shards.n_clients
        self._pos = [0] * shards.n_clients

    def next_batch(self, client: int, size: int) -> np.ndarray:
        pool = self.shards.assignments[client]
        if size >= len(pool):
            return pool
        parts = []
        need = size
        while need:
            perm = self._perm[client]
            if perm is None or self._pos[client] >= len(perm):
                perm = self._perm[client] = self.rngs[client].permutation(pool)
                self._pos[client] = 0
            take = perm[self._pos[client] : self._pos[client] + need]
            self._pos[client] += len(take)
            parts.append(take)
            need -= len(take)
        return np.concatenate(parts)


def initial_state(cfg: SimConfig, dim: int) -> TrainerState:
    return TrainerState(
        global_model=np.zeros(dim),
        lam=np.full(cfg.n_clients, 1.0 / cfg.n_clients),
        round=0,
        lr=cfg.lr_init,
    )


def selection_distribution(
    state: TrainerState, realization: ChannelRealization, cfg: SimConfig
) -> SelectionDistribution | None:
    """The descent-set distribution for the configured policy.

    afl is the product with the unbiased (uniform) expert, which is exactly
    what ca_afl computes at bias factor 0.
    """
    n = cfg.n_clients
    if cfg.policy == "fedavg":
        return uniform(n, "fedavg")
    if cfg.policy == "afl":
        return poe_combine(state.lam, uniform(n), "afl")
    if cfg.policy == "ca_afl":
        return poe_combine(state.lam, bias_pmf(realization.effective, cfg.bias_factor), "ca_afl")
    return None


def select_clients(
    state: TrainerState, realization: ChannelRealization, cfg: SimConfig, rng: np.random.Generator
) -> list[int]:
    if len(realization.effective) != cfg.n_clients:
        raise ValueError("channel realization does not cover every client")
    rho = selection_distribution(state, realization, cfg)
    state.last_distribution = rho
    if rho is None:
        return top_k(realization.effective, cfg.k_selected)
    return sample_with_fallback(rho, cfg.k_selected, rng)


def client_accuracies(w: np.ndarray, shards: ClientShards, test_ds: Dataset) -> np.ndarray:
    correct = model.predict(w, np.arange(len(test_ds)), test_ds) == test_ds.labels
    return np.array([correct[idx].mean() for idx in shards.test_assignments])


def run_round(
    state: TrainerState,
    shards: ClientShards,
    ds: Dataset,
    test_ds: Dataset,
    cfg: SimConfig,
    streams: Streams,
    sampler: EpochSampler,
) -> TrainerState:
    if state.round >= cfg.rounds:
        raise ValueError(f"round {state.round} is past the configured {cfg.rounds} rounds")
    t = state.round
    lr = cfg.lr_at(t)

    realization = draw_channels(cfg.n_clients, cfg.n_subcarriers, cfg.channel_floor, streams.channel)
    selected = sorted(select_clients(state, realization, cfg, streams.descent))

    local_models = [
        model.local_step(state.global_model, lr, sampler.next_batch(i, cfg.batch_size), ds)
        for i in selected
    ]
    agg = aggregate(local_models, cfg.aircomp_noise_std, streams.noise, k=cfg.k_selected)
    state.global_model = agg.mean_model

    ascent_set: list[int] = []
    if cfg.policy in LAMBDA_POLICIES:
        ascent_set = sorted(
            streams.ascent.choice(cfg.n_clients, size=cfg.k_selected, replace=False).tolist()
        )
        losses = {}
        for i in ascent_set:
            pool = shards.assignments[i]
            size = min(cfg.ascent_batch_size, len(pool))
            batch = streams.ascent_batch.choice(pool, size=size, replace=False)
            losses[i] = model.loss(state.global_model, batch, ds)
        state.lam = ascent_update(state.lam, losses, cfg.ascent_lr)

    record_round_energy(state.ledger, t, selected, realization, cfg)

    last = t == cfg.rounds - 1
    if state.last_client_accuracy is None or (t + 1) % cfg.eval_every == 0 or last:
        state.last_client_accuracy = client_accuracies(state.global_model, shards, test_ds)
    acc = state.last_client_accuracy
    worst = float(acc.min())
    # the mean can round one ulp below the minimum when all entries agree
    avg = max(math.fsum(acc) / len(acc), worst)
    state.history.append(
        RoundRecord(
            round=t,
            avg_accuracy=avg,
            worst_accuracy=worst,
            accuracy_std=float(acc.std()),
            round_energy_j=state.ledger.per_round[-1].total,
            cumulative_energy_j=state.ledger.cumulative_j,
            selected_clients=selected,
            ascent_clients=ascent_set,
        )
    )
    state.round = t + 1
    state.lr = cfg.lr_at(state.round)
    return state


def load_data(cfg: SimConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "idx_files":
        train = load_idx(cfg.train_images, cfg.train_labels)
        test = load_idx(cfg.test_images, cfg.test_labels)
        n_classes = max(train.n_classes, test.n_classes)
        train = Dataset(train.features, train.labels, n_classes)
        test = Dataset(test.features, test.labels, n_classes)
    else:
        full = synthesize(
            cfg.synth_train + cfg.synth_test,
            cfg.synth_features,
            cfg.synth_classes,
            seeded_rng(cfg.seed, "data"),
            separation=cfg.synth_separation,
            hard_classes=cfg.synth_hard_classes,
            hard_noise=cfg.synth_hard_noise,
        )
        train, test = split(full, cfg.synth_train)
    dim = model.model_dim(train.n_features, train.n_classes)
    if dim != cfg.model_dim:
        raise ValueError(
            f"model_dim={cfg.model_dim} but the data needs (features+1)*classes = {dim}"
        )
    return train, test


@dataclass
class Simulation:
    """Everything one run needs; ``step`` advances one round."""

    cfg: SimConfig
    train: Dataset
    test: Dataset
    shards: ClientShards
    state: TrainerState
    streams: Streams
    sampler: EpochSampler

    @classmethod
    def from_config(cls, cfg: SimConfig, data: tuple[Dataset, Dataset] | None = None) -> "Simulation":
        train, test = data if data is not None else load_data(cfg)
        shards = shard_by_label(train, test, cfg.n_clients, cfg.shards_per_client)
        if cfg.eval_mode == "global":
            everything = np.arange(len(test))
            shards = ClientShards(shards.assignments, [everything] * cfg.n_clients)
        streams = Streams(cfg.seed, cfg.n_clients)
        return cls(
            cfg,
            train,
            test,
            shards,
            initial_state(cfg, model.model_dim(train.n_features, train.n_classes)),
            streams,
            EpochSampler(shards, streams.batch),
        )

    def step(self) -> RoundRecord:
        run_round(self.state, self.shards, self.train, self.test, self.cfg, self.streams, self.sampler)
        return self.state.history[-1]


def run(cfg: SimConfig, out: str | Path | None = None, data: tuple[Dataset, Dataset] | None = None) -> list[RoundRecord]:
    """Run ``cfg.rounds`` rounds; if ``out`` is given, stream one CSV row per round to it."""
    sim = Simulation.from_config(cfg, data)
    if out is None:
        for _ in range(cfg.rounds):
            sim.step()
        return sim.state.history
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = RoundWriter(fh)
        writer.write_header()
        for _ in range(cfg.rounds):
            writer.write(sim.step())
    log.info("wrote %d rounds to %s", cfg.rounds, out)
    return sim.state.history

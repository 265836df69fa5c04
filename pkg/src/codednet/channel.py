"""Fading channel model: per-slot gain sampling, noise powers, ergodic waterfilling.

Gains are stored densely as ``h[i, j, f]`` (transmitter, receiver, tone); entries
for node pairs that are not neighbors are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

DISTRIBUTIONS = ("exponential", "rician", "nakagami", "table")


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Stationary fading model with pathloss-determined means.

    Attributes
    ----------
    kind : str
        One of ``exponential``, ``rician``, ``nakagami`` or ``table``.
    mean : ndarray, shape (n, n, F)
        Mean power gain per ordered pair and tone, zero for non-links.
    noise : ndarray, shape (n,)
        Receiver noise power ``N_j``.
    reciprocal : bool
        If true ``h[i, j] == h[j, i]`` in every sample.
    rician_k, nakagami_m : float
        Shape parameters of the corresponding distributions.
    atoms, probs : tuple of float
        Support and weights of the ``table`` distribution. Atoms multiply the
        link mean, so a single atom ``1.0`` pins every gain to its mean.
    """

    kind: str
    mean: np.ndarray
    noise: np.ndarray
    reciprocal: bool = True
    rician_k: float = 1.0
    nakagami_m: float = 1.0
    atoms: tuple = (1.0,)
    probs: tuple = (1.0,)
    pathloss: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ValueError(f"unknown fading distribution {self.kind!r}")
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 3 or mean.shape[0] != mean.shape[1]:
            raise ValueError("mean gains must have shape (n, n, F)")
        links = self.link_mask(mean)
        if np.any(mean[links] <= 0) or not np.all(np.isfinite(mean)):
            raise ValueError("channel means must be strictly positive and finite on every link")
        if np.any(np.asarray(self.noise) <= 0):
            raise ValueError("noise powers must be positive")
        if self.kind == "table":
            probs = np.asarray(self.probs, dtype=float)
            if len(self.atoms) != len(probs) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0):
                raise ValueError("table distribution needs matching atoms/probs summing to one")
            if np.any(np.asarray(self.atoms) < 0):
                raise ValueError("table atoms must be non-negative")
        if self.kind == "rician" and self.rician_k < 0:
            raise ValueError("rician K-factor must be non-negative")
        if self.kind == "nakagami" and self.nakagami_m < 0.5:
            raise ValueError("nakagami m must be >= 0.5")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "noise", np.asarray(self.noise, dtype=float))

    @staticmethod
    def link_mask(mean: np.ndarray) -> np.ndarray:
        return np.any(mean != 0, axis=2)

    @property
    def n_nodes(self) -> int:
        return self.mean.shape[0]

    @property
    def tones(self) -> int:
        return self.mean.shape[2]

    @property
    def is_continuous(self) -> bool:
        return self.kind != "table"

    def _pairs(self) -> np.ndarray:
        links = self.link_mask(self.mean)
        if self.reciprocal:
            links = np.triu(links | links.T, k=1)
        return np.argwhere(links)


@dataclass(frozen=True, eq=False)
class ChannelState:
    """One realization of all link gains, ``gains[i, j, f]``."""

    gains: np.ndarray
    slot: int | None = None


def pathloss_mean(distance, scale: float = 0.1, d0: float = 20.0, exponent: float = 2.0):
    """Mean power gain ``scale * (d / d0) ** -exponent``."""
    return scale * (np.asarray(distance, dtype=float) / d0) ** (-exponent)


def from_positions(positions, links, tones: int, kind: str = "exponential", *,
                   scale=0.1, d0=20.0, exponent=2.0, noise=None, noise_distance=100.0,
                   reciprocal=True, **params) -> ChannelModel:
    """Build a channel model whose means follow the pathloss law.

    ``links`` is a boolean (n, n) adjacency of ordered transmitter/receiver
    pairs. ``noise`` overrides the pathloss noise rule (scalar or per node).
    """
    pos = np.asarray(positions, dtype=float)
    links = np.asarray(links, dtype=bool)
    if reciprocal:
        links = links | links.T
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    n = pos.shape[0]
    mean = np.zeros((n, n, tones))
    mean[links] = pathloss_mean(dist[links], scale, d0, exponent)[:, None]
    if noise is None:
        noise_vec = np.full(n, float(pathloss_mean(noise_distance, scale, d0, exponent)))
    else:
        noise_vec = np.broadcast_to(np.asarray(noise, dtype=float), (n,)).copy()
    return ChannelModel(kind=kind, mean=mean, noise=noise_vec, reciprocal=reciprocal,
                        pathloss={"scale": scale, "d0": d0, "exponent": exponent,
                                  "noise_distance": noise_distance},
                        **params)


def noise_power(model: ChannelModel, j: int) -> float:
    return float(model.noise[j])


def _unit_draws(model: ChannelModel, rng: np.random.Generator, shape):
    if model.kind == "exponential":
        return rng.exponential(1.0, size=shape)
    if model.kind == "nakagami":
        m = model.nakagami_m
        return rng.gamma(m, 1.0 / m, size=shape)
    if model.kind == "rician":
        k = model.rician_k
        los = math.sqrt(k / (k + 1.0))
        sd = math.sqrt(0.5 / (k + 1.0))
        re = los + sd * rng.standard_normal(shape)
        im = sd * rng.standard_normal(shape)
        return re * re + im * im
    return rng.choice(np.asarray(model.atoms, dtype=float), size=shape, p=np.asarray(model.probs))


def sample_batch(model: ChannelModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. gain tensors, shape (size, n, n, F)."""
    pairs = model._pairs()
    n, F = model.n_nodes, model.tones
    out = np.zeros((size, n, n, F))
    if len(pairs) == 0:
        return out
    i, j = pairs[:, 0], pairs[:, 1]
    draws = _unit_draws(model, rng, (size, len(pairs), F))
    out[:, i, j, :] = draws * model.mean[i, j, :]
    if model.reciprocal:
        out[:, j, i, :] = out[:, i, j, :]
    return out


def sample(model: ChannelModel, rng: np.random.Generator, slot: int | None = None) -> ChannelState:
    """Draw one channel state from the stationary distribution."""
    return ChannelState(sample_batch(model, rng, 1)[0], slot)


class ChannelStream:
    """Reproducible slot-indexed channel sequence.

    Slot ``k`` of stream ``stream`` is drawn from a generator keyed by
    ``(seed, stream, k)``, so any slot can be regenerated on its own and two
    solvers given the same seed see identical channels.
    """

    def __init__(self, model: ChannelModel, seed: int, stream: int = 0):
        self.model = model
        self.seed = int(seed)
        self.stream = int(stream)

    def rng(self, slot: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream, int(slot)])

    def state(self, slot: int) -> ChannelState:
        return sample(self.model, self.rng(slot), slot)

    def batch(self, start: int, count: int) -> np.ndarray:
        return np.stack([self.state(k).gains for k in range(start, start + count)])


def save_trace(path, gains: np.ndarray, slots=None) -> None:
    """Record sampled gain tensors (shape (S, n, n, F)) for later replay."""
    gains = np.asarray(gains)
    if slots is None:
        slots = np.arange(gains.shape[0])
    np.savez_compressed(path, gains=gains, slots=np.asarray(slots))


class ReplayStream:
    """Channel stream backed by a recorded trace; slot k returns record k mod S."""

    def __init__(self, path):
        with np.load(path) as data:
            self.gains = data["gains"]

    def state(self, slot: int) -> ChannelState:
        return ChannelState(self.gains[slot % len(self.gains)], slot)

    def batch(self, start: int, count: int) -> np.ndarray:
        idx = np.arange(start, start + count) % len(self.gains)
        return self.gains[idx]


# --- ergodic waterfilling (used to derive capacity box bounds) -------------

def _unit_law(model: ChannelModel):
    """Return (pdf, support_hi) or atoms for the unit-mean gain law."""
    if model.kind == "exponential":
        return stats.expon()
    if model.kind == "nakagami":
        m = model.nakagami_m
        return stats.gamma(m, scale=1.0 / m)
    if model.kind == "rician":
        k = model.rician_k
        return stats.ncx2(df=2, nc=2 * k, scale=0.5 / (k + 1.0)) if k > 0 else stats.expon()
    return None


def _expect(model: ChannelModel, fn) -> float:
    law = _unit_law(model)
    if law is None:
        atoms = np.asarray(model.atoms, dtype=float)
        return float(np.sum(np.asarray(model.probs) * np.array([fn(u) for u in atoms])))
    val, _ = integrate.quad(lambda u: fn(u) * law.pdf(u), 0.0, np.inf, limit=200)
    return float(val)


def ergodic_waterfill(model: ChannelModel, mean_per_tone, noise: float, power: float,
                      tone_cap=None, rho: float = 1.0):
    """Interference-free ergodic capacity of one link under an average power budget.

    Maximizes ``sum_f E[log2(1 + p_f(h) h_f / (rho N))]`` subject to
    ``sum_f E[p_f(h)] <= power`` and the per-tone mask ``p_f(h) <= tone_cap[f]``.
    The optimal policy is ``p_f(h) = clip(w - rho N / h, 0, cap_f)`` with a common
    water level ``w``.

    Returns
    -------
    capacity : float
        Total ergodic capacity over tones, bits per channel use.
    level : float
        Water level ``w``.
    """
    means = np.atleast_1d(np.asarray(mean_per_tone, dtype=float))
    caps = np.full(means.shape, np.inf) if tone_cap is None else np.broadcast_to(
        np.asarray(tone_cap, dtype=float), means.shape)
    floor = rho * noise

    def tone_power(w, hbar, cap):
        return _expect(model, lambda u: min(max(w - floor / (hbar * u), 0.0), cap) if u > 0 else 0.0)

    def total_power(w):
        return sum(tone_power(w, hb, cp) for hb, cp in zip(means, caps))

    if np.all(np.isfinite(caps)) and total_power(1e12) <= power:
        level = np.inf
    else:
        hi = 1.0
        while total_power(hi) < power:
            hi *= 2.0
        level = optimize.brentq(lambda w: total_power(w) - power, 0.0, hi, xtol=1e-12)

    cap_total = 0.0
    for hbar, cp in zip(means, caps):
        def rate(u, hbar=hbar, cp=cp):
            if u <= 0:
                return 0.0
            g = hbar * u / floor
            p = min(max(level - 1.0 / g, 0.0), cp)
            return math.log2(1.0 + p * g)
        cap_total += _expect(model, rate)
    return cap_total, level

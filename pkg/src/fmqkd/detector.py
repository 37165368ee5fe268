"""Gated Geiger-mode photon counter: Poisson clicks, dark counts, error rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRateError


@dataclass(frozen=True)
class GatedDetectorConfig:
    """Single gated avalanche detector.

    ``jitter_s`` is carried as metadata only; gate and pulse are assumed to
    coincide, so no coincidence-efficiency factor is applied.
    """

    efficiency: float
    dark_prob_per_gate: float
    gate_window_s: float = 300e-12
    jitter_s: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.efficiency <= 1.0):
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not (0.0 <= self.dark_prob_per_gate <= 1.0):
            raise ValueError(
                f"dark_prob_per_gate must be in [0, 1], got {self.dark_prob_per_gate}"
            )
        if not self.gate_window_s > 0.0:
            raise ValueError(f"gate_window_s must be > 0, got {self.gate_window_s}")
        if self.jitter_s < 0.0:
            raise ValueError(f"jitter_s must be >= 0, got {self.jitter_s}")


def click_probability(mu_eff: float, cfg: GatedDetectorConfig) -> float:
    """Probability that one gate fires on a weak coherent pulse.

    Photon statistics are Poissonian and thinned by the quantum efficiency;
    a dark count fires the gate independently:
    p = 1 - (1 - p_dark) * exp(-eta * mu_eff).
    """
    if not (math.isfinite(mu_eff) and mu_eff >= 0.0):
        raise ValueError(f"mu_eff must be >= 0, got {mu_eff}")
    d = cfg.dark_prob_per_gate
    return d + (1.0 - d) * -math.expm1(-cfg.efficiency * mu_eff)


def click_probabilities(mu_effs: np.ndarray, cfg: GatedDetectorConfig) -> np.ndarray:
    """Vectorized :func:`click_probability` over an array of intensities."""
    mu_effs = np.asarray(mu_effs, dtype=float)
    if not np.all(np.isfinite(mu_effs)) or np.any(mu_effs < 0.0):
        raise ValueError("mu_effs must be finite and >= 0")
    d = cfg.dark_prob_per_gate
    return d + (1.0 - d) * -np.expm1(-cfg.efficiency * mu_effs)


def gate(mu_eff: float, cfg: GatedDetectorConfig, rng: np.random.Generator) -> bool:
    """One Bernoulli gate draw; deterministic for a seeded ``rng``."""
    return bool(rng.random() < click_probability(mu_eff, cfg))


def gate_many(
    mu_effs: np.ndarray, cfg: GatedDetectorConfig, rng: np.random.Generator
) -> np.ndarray:
    """One gate draw per intensity, consuming one uniform each, in order."""
    p = click_probabilities(mu_effs, cfg)
    return rng.random(p.shape[0]) < p


def er_det_analytic(
    mu_pair: float,
    post_alice_loss_db: float,
    cfg: GatedDetectorConfig,
    visibility: float = 1.0,
) -> float:
    """Detector-induced error rate of the sifted key, closed form.

    Alice and Bob's phase choices match half the time, so the key collects
    clicks at the constructive fringe (p_sig) and the destructive fringe
    (p_err) with equal weight; the error rate is p_err / (p_sig + p_err).
    With visibility 1 the destructive port is dark and the result isolates
    the dark-count contribution.
    """
    if not (math.isfinite(mu_pair) and mu_pair >= 0.0):
        raise ValueError(f"mu_pair must be >= 0, got {mu_pair}")
    if not (math.isfinite(post_alice_loss_db) and post_alice_loss_db >= 0.0):
        raise ValueError(f"post_alice_loss_db must be >= 0, got {post_alice_loss_db}")
    if not (0.0 <= visibility <= 1.0):
        raise ValueError(f"visibility must be in [0, 1], got {visibility}")
    transmission = 10.0 ** (-post_alice_loss_db / 10.0)
    mu_at_detector = mu_pair * transmission
    p_sig = click_probability(mu_at_detector * (1.0 + visibility) / 2.0, cfg)
    p_err = click_probability(mu_at_detector * (1.0 - visibility) / 2.0, cfg)
    total = p_sig + p_err
    if total == 0.0:
        raise UndefinedRateError("no clicks at either fringe; error rate undefined")
    return p_err / total

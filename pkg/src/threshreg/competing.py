"""Competing risks as the minimum of latent first hitting times.

Each cause ``c`` is one dimension of a correlated Wiener process with its own
zero-level boundary. The observed outcome is the smallest latent hitting
time and the index of the dimension that produced it. Causes are numbered
from 1; cause 0 marks a replicate in which no dimension crossed by the
horizon (censored at ``t_max``).

Simultaneous crossings (equal latent times, only possible through the time
grid or perfectly coupled dimensions) go to the lowest cause index.

Only simulation and counterfactual cause elimination are provided; there is
no competing-risk likelihood.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .process_kernel import correlated_wiener_fht

__all__ = [
    "CompetingOutcome",
    "simulate_competing",
    "outcome_from_latent",
    "eliminate_causes",
    "secondary_condition_distance",
    "cause_frequencies",
]


@dataclass
class CompetingOutcome:
    """Observed ``(time, cause)`` per replicate, with latent times when simulated.

    ``latent_times`` has shape ``(n, C)``; column ``c - 1`` belongs to cause ``c``.
    """

    time: np.ndarray
    cause: np.ndarray
    latent_times: Optional[np.ndarray] = None
    t_max: float = np.inf
    causes: tuple = ()

    def __len__(self):
        return self.time.size

    @property
    def censored(self):
        return self.cause == 0

    def subset(self, mask):
        return CompetingOutcome(
            self.time[mask],
            self.cause[mask],
            None if self.latent_times is None else self.latent_times[mask],
            self.t_max,
            self.causes,
        )


def outcome_from_latent(latent, t_max=np.inf, causes=None):
    latent = np.atleast_2d(np.asarray(latent, dtype=float))
    n, C = latent.shape
    causes = tuple(range(1, C + 1)) if causes is None else tuple(causes)
    # argmin returns the first minimum, i.e. the lowest cause index on ties
    k = np.argmin(latent, axis=1)
    t = latent[np.arange(n), k]
    hit = np.isfinite(t)
    cause = np.where(hit, np.asarray(causes)[k], 0)
    time = np.where(hit, t, t_max)
    return CompetingOutcome(time, cause.astype(np.int64), latent, t_max, causes)


def simulate_competing(specs, corr, dt=1e-3, t_max=50.0, seed=0, size=1):
    """Simulate ``size`` replicates of a C-cause competing-risk Wiener model."""
    latent = correlated_wiener_fht(specs, corr, dt=dt, t_max=t_max, seed=seed, size=size)
    return outcome_from_latent(latent, t_max=t_max)


def eliminate_causes(outcome, removed):
    """Recompute the outcome with the causes in ``removed`` taken out of the model."""
    if outcome.latent_times is None:
        raise ValueError("cause elimination needs the latent times")
    removed = set(int(c) for c in removed)
    unknown = removed - set(outcome.causes)
    if unknown:
        raise ValueError(f"unknown cause(s) {sorted(unknown)}")
    keep = [j for j, c in enumerate(outcome.causes) if c not in removed]
    if not keep:
        raise ValueError("cannot remove every cause")
    if not removed:
        return outcome
    return outcome_from_latent(
        outcome.latent_times[:, keep], outcome.t_max, [outcome.causes[j] for j in keep]
    )


def secondary_condition_distance(outcome, cause):
    """``S_c - S_d`` for cause ``c`` against the observed cause ``d`` of each replicate.

    Infinite where cause ``c`` never crossed. Raises if ``c`` is the observed
    cause of any replicate.
    """
    if outcome.latent_times is None:
        raise ValueError("the distance needs the latent times")
    cause = int(cause)
    if cause not in outcome.causes:
        raise ValueError(f"unknown cause {cause}")
    if np.any(outcome.cause == cause):
        raise ValueError(f"cause {cause} is the observed cause of some replicates; select others first")
    col = outcome.causes.index(cause)
    return outcome.latent_times[:, col] - outcome.time


def cause_frequencies(outcome):
    """Fractions for ``(censored, *outcome.causes)``, in that order."""
    labels = (0,) + tuple(outcome.causes)
    counts = np.array([np.count_nonzero(outcome.cause == c) for c in labels])
    return counts / max(len(outcome), 1)

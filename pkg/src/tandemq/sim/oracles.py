"""Closed-form queueing results used to validate the simulator."""

import math
from typing import Sequence


class DomainError(ValueError):
    pass


def mm1_delay_tail_oracle(lam: float, mu: float, t: float) -> float:
    """P(D > t) for the sojourn time D of a stable M/M/1 queue."""
    if not lam < mu:
        raise DomainError(f"unstable M/M/1: lambda={lam} >= mu={mu}")
    if t <= 0:
        return 1.0
    return math.exp(-(mu - lam) * t)


def tandem_mm1_mean_delay_oracle(lam: float, mus: Sequence[float]) -> float:
    """Mean end-to-end delay of a tandem of M/M/1 queues (product form)."""
    if any(not lam < mu for mu in mus):
        raise DomainError(f"unstable tandem: lambda={lam}, mus={list(mus)}")
    return sum(1.0 / (mu - lam) for mu in mus)


def relaxation_time_mm1(lam: float, mu: float) -> float:
    """Approximate relaxation time 2*lam/(mu-lam)**2 of an M/M/1 queue."""
    if not lam < mu:
        raise DomainError(f"unstable M/M/1: lambda={lam} >= mu={mu}")
    return 2.0 * lam / (mu - lam) ** 2

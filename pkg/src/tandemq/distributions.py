"""Random-variate generators parameterized by mean and squared coefficient of variation."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK = 4096


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"
    DETERMINISTIC = "deterministic"


class ParameterError(ValueError):
    pass


def gamma_params_from_mean_scv(mean: float, scv: float) -> tuple[float, float]:
    """Return ``(shape, scale)`` of the Gamma law with the given mean and SCV.

    Gamma(k, theta) has mean ``k*theta`` and SCV ``1/k``.
    """
    if not mean > 0 or not scv > 0:
        raise ParameterError(f"mean and scv must be positive, got mean={mean}, scv={scv}")
    return 1.0 / scv, mean * scv


@dataclass(frozen=True)
class DistSpec:
    family: Family
    mean: float
    scv: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.mean > 0:
            raise ParameterError(f"mean must be positive, got {self.mean}")
        if self.family is Family.EXPONENTIAL and self.scv != 1.0:
            raise ParameterError("exponential distribution requires scv = 1")
        if self.family is Family.DETERMINISTIC and self.scv != 0.0:
            raise ParameterError("deterministic distribution requires scv = 0")
        if self.family is Family.GAMMA and not self.scv > 0:
            raise ParameterError("gamma distribution requires scv > 0")

    @classmethod
    def exponential(cls, mean: float) -> "DistSpec":
        return cls(Family.EXPONENTIAL, mean, 1.0)

    @classmethod
    def gamma(cls, mean: float, scv: float) -> "DistSpec":
        return cls(Family.GAMMA, mean, scv)

    @classmethod
    def deterministic(cls, mean: float) -> "DistSpec":
        return cls(Family.DETERMINISTIC, mean, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "DistSpec":
        family = Family(d["family"])
        scv = d.get("scv")
        if scv is None:
            scv = {Family.EXPONENTIAL: 1.0, Family.DETERMINISTIC: 0.0}.get(family)
        if scv is None:
            raise ParameterError("gamma distribution needs an explicit scv")
        return cls(family, float(d["mean"]), float(scv))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "mean": self.mean, "scv": self.scv}

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family is Family.DETERMINISTIC:
            return np.full(size, self.mean)
        if self.family is Family.EXPONENTIAL:
            return rng.exponential(self.mean, size)
        shape, scale = gamma_params_from_mean_scv(self.mean, self.scv)
        return rng.gamma(shape, scale, size)


def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
    """Deterministic child seed for a (component, index, ...) path under ``master``."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


class RngStream:
    """A seeded generator (PCG64, 128-bit state).

    ``seed`` may be an integer or a :class:`numpy.random.SeedSequence`.
    """

    def __init__(self, seed):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(int(seed))
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(seed))

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream(s) for s in self.seed.spawn(n)]


class VariateStream:
    """Variates of one :class:`DistSpec` served from pre-drawn blocks.

    Both simulator backends pull whole blocks through :meth:`next_block`, so
    they consume the exact same sequence for a given seed.
    """

    def __init__(self, spec: DistSpec, rng: RngStream, block: int = DEFAULT_BLOCK):
        self.spec = spec
        self.rng = rng
        self.block = block
        self._buf = np.empty(0)
        self._pos = 0

    def next_block(self) -> np.ndarray:
        return np.ascontiguousarray(self.spec.draw(self.rng.generator, self.block), dtype=np.float64)

    def sample(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.next_block()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return float(x)


def sample(spec: DistSpec, rng: RngStream) -> float:
    """Draw a single variate from ``spec`` using ``rng``."""
    return float(spec.draw(rng.generator, 1)[0])

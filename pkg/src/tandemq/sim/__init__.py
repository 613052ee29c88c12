from ._backend import DEFAULT as DEFAULT_BACKEND, KERNELS
from .core import ConfigError, Departures, JobRecord, NetworkConfig, SlotOutcome, TandemSim
from .oracles import (
    DomainError,
    mm1_delay_tail_oracle,
    relaxation_time_mm1,
    tandem_mm1_mean_delay_oracle,
)

__all__ = [
    "DEFAULT_BACKEND",
    "KERNELS",
    "ConfigError",
    "Departures",
    "DomainError",
    "JobRecord",
    "NetworkConfig",
    "SlotOutcome",
    "TandemSim",
    "mm1_delay_tail_oracle",
    "relaxation_time_mm1",
    "tandem_mm1_mean_delay_oracle",
]

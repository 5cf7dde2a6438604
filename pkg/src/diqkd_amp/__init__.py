"""Finite-key DIQKD rates for heralded qubit-amplifier architectures."""

from .keyrate import PRESETS, ProtocolParams, SecurityTargets, asymptotic_rate, key_length
from .observables import (HeraldedObservables, SetupParams, TriggerSpec, heralded_observables,
                          make_setup)
from .sources import ideal_statistics, pdc_statistics

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "ProtocolParams", "SecurityTargets", "asymptotic_rate", "key_length",
    "HeraldedObservables", "SetupParams", "TriggerSpec", "heralded_observables", "make_setup",
    "ideal_statistics", "pdc_statistics", "__version__",
]

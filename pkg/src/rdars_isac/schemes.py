"""Evaluation schemes expressed as constrained variants of the same optimizer.

Every scheme shares channel realizations with its peers on a trial; only
the optimizer flags (and, for the passive surface, the connected-element
count) differ.  Scheme names double as stable CLI identifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .optimizer import OptimizerOptions
from .scenario import SystemConfig

__all__ = ["SchemeSpec", "SCHEMES", "scheme_names", "get_scheme", "apply_scheme"]


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    optimize_phase: bool
    optimize_selection: bool
    enforce_sinr: bool
    reflection_enabled: bool
    connected_enabled: bool

    def validate(self) -> "SchemeSpec":
        if not self.reflection_enabled and self.optimize_phase:
            raise ConfigError(f"{self.name}: cannot optimize phases without a reflection path")
        if not self.connected_enabled and self.optimize_selection:
            raise ConfigError(f"{self.name}: cannot optimize selection without connected elements")
        if not (self.reflection_enabled or self.connected_enabled):
            raise ConfigError(f"{self.name}: surface must reflect or connect")
        return self


SCHEMES = {spec.name: spec.validate() for spec in [
    SchemeSpec("rdars-isac", True, True, True, True, True),
    SchemeSpec("rdars-isac-random-phase", False, True, True, True, True),
    SchemeSpec("rdars-isac-fixed-a", True, False, True, True, True),
    SchemeSpec("rdars-sensing-opt", True, True, False, True, True),
    SchemeSpec("rdars-sensing-random", False, True, False, True, True),
    SchemeSpec("das-isac", False, False, True, False, True),
    SchemeSpec("das-sensing", False, False, False, False, True),
    SchemeSpec("passive-ris-isac", True, False, True, True, False),
]}


def scheme_names() -> list:
    return list(SCHEMES)


def get_scheme(name: str) -> SchemeSpec:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown scheme '{name}' (known: {', '.join(SCHEMES)})") from None


def apply_scheme(spec: SchemeSpec, config: SystemConfig) -> OptimizerOptions:
    """Translate a scheme into optimizer flags for the shared driver.

    The passive-surface scheme zeroes the connected-element count; the
    fixed-selection scheme keeps the first ``a`` elements connected and
    skips both selection updates; random-phase schemes freeze phases drawn
    once per trial.
    """
    spec.validate()
    del config  # the scheme itself is config-independent
    return OptimizerOptions(
        optimize_phase=spec.optimize_phase,
        optimize_selection=spec.optimize_selection,
        enforce_sinr=spec.enforce_sinr,
        reflection_enabled=spec.reflection_enabled,
        resample_phase=spec.reflection_enabled and not spec.optimize_phase,
        connected_count=None if spec.connected_enabled else 0,
    )

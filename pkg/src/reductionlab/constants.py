"""Physical constants used throughout the model, with file/env overrides."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

ENV_CONSTANTS = "REDUCTIONLAB_CONSTANTS"


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants plus the dimensionless coupling prefactor ``xi``.

    ``xi`` multiplies every coupling energy; it is kept explicit so parameter
    sweeps over the prefactor stay cheap.
    """

    G: float = 6.674e-11            # m^3 kg^-1 s^-2
    hbar: float = 1.054571817e-34   # J s
    k_boltzmann: float = 1.380649e-23  # J / K
    c_light: float = 2.99792458e8   # m / s
    xi: float = 1.0

    def __post_init__(self) -> None:
        for name in ("G", "hbar", "k_boltzmann", "c_light", "xi"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"constant {name!r} must be finite and > 0, got {value!r}")


CONSTANTS = PhysicalConstants()


def constants_from_file(path: str) -> PhysicalConstants:
    """Load constants from a JSON mapping; missing keys keep their defaults."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: constants file must hold a JSON object")
    known = {"G", "hbar", "k_boltzmann", "c_light", "xi"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown constant keys {sorted(unknown)}")
    return replace(PhysicalConstants(), **{k: float(v) for k, v in raw.items()})


def resolve_constants(path: str | None = None) -> PhysicalConstants:
    """Resolve constants from an explicit path, the environment, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONSTANTS)
    if path:
        return constants_from_file(path)
    return CONSTANTS

"""Order-of-magnitude coupling estimates for superposed solids and fluids.

A displaced solid saturates once every nucleus has separated from its own
phonon-broadened copy; the saturated coupling is the per-nucleus sphere value
times the nucleus count.  Below saturation the coupling grows quadratically in
the displacement, and for macroscopic displacements a shape-dependent
centre-of-mass term takes over.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources

from .constants import CONSTANTS, PhysicalConstants

ELECTRON_MASS = 9.1093837015e-31        # kg
ELEMENTARY_CHARGE = 1.602176634e-19     # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m


class RegimeWarning(UserWarning):
    """An estimate was evaluated outside its intended displacement regime."""


@dataclass(frozen=True)
class Material:
    nucleus_mass: float          # kg
    lattice_constant: float      # m
    phonon_velocity: float       # m/s
    bulk_density: float          # kg/m^3
    thermal_expansion: float     # 1/K
    specific_heat: float         # J/(kg K)
    compression_modulus: float   # N/m^2
    relative_permittivity: float

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"material field {name!r} must be finite and > 0")


def _load_presets() -> dict:
    raw = json.loads(resources.files("reductionlab").joinpath("data/materials.json")
                     .read_text(encoding="utf-8"))
    return {name: Material(**fields) for name, fields in raw.items()}


MATERIALS = _load_presets()


def material(name: str) -> Material:
    try:
        return MATERIALS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown material {name!r}; presets: {sorted(MATERIALS)}") from None


def nucleus_extension(mat: Material, temperature: float,
                      consts: PhysicalConstants = CONSTANTS) -> float:
    """Phonon-broadened extension of one nucleus, sqrt(2kT/m) * (lattice/v_phonon)."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    thermal_speed = math.sqrt(2.0 * consts.k_boltzmann * temperature / mat.nucleus_mass)
    return thermal_speed * mat.lattice_constant / mat.phonon_velocity


def nucleus_pair_energy(mat: Material, temperature: float,
                        consts: PhysicalConstants = CONSTANTS) -> float:
    """Coupling of one far-separated nucleus pair: (12/5) G m^2 / d_nucl."""
    d = nucleus_extension(mat, temperature, consts)
    if d == 0.0:
        return math.inf if mat.nucleus_mass > 0 else 0.0
    return consts.xi * 12.0 / 5.0 * consts.G * mat.nucleus_mass ** 2 / d


def solid_plateau_eg(mass: float, mat: Material, temperature: float,
                     consts: PhysicalConstants = CONSTANTS) -> float:
    """Saturated (microscopic) coupling of a displaced solid: N_nucl * E_nucl."""
    if mass <= 0:
        raise ValueError("mass must be > 0")
    n_nucl = mass / mat.nucleus_mass
    return n_nucl * nucleus_pair_energy(mat, temperature, consts)


def solid_small_displacement_eg(mass: float, mat: Material, temperature: float,
                                displacement: float, alpha: float = 5.0,
                                consts: PhysicalConstants = CONSTANTS) -> float:
    """Sub-saturation coupling, quadratic in the displacement."""
    if displacement < 0:
        raise ValueError("displacement must be >= 0")
    d_nucl = nucleus_extension(mat, temperature, consts)
    if displacement > d_nucl:
        warnings.warn("displacement exceeds the nucleus extension; the quadratic "
                      "estimate is outside its regime", RegimeWarning, stacklevel=2)
    if displacement == 0.0:
        return 0.0
    plateau = solid_plateau_eg(mass, mat, temperature, consts)
    return alpha * plateau * (displacement / d_nucl) ** 2


def rod_macroscopic_eg(rod_diameter: float, density: float, displacement: float,
                       beta: float = 5.0,
                       consts: PhysicalConstants = CONSTANTS) -> float:
    """Centre-of-mass coupling of a long rod displaced along its axis."""
    if rod_diameter <= 0 or density <= 0:
        raise ValueError("rod_diameter and density must be > 0")
    if displacement < 0:
        raise ValueError("displacement must be >= 0")
    return consts.xi * beta * consts.G * rod_diameter ** 3 * density ** 2 * displacement ** 2


@dataclass(frozen=True)
class RodGeometry:
    diameter: float
    beta: float = 5.0

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError("diameter must be > 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0; the disc regime needs a user-supplied value")


def solid_eg_curve(mass: float, mat: Material, temperature: float,
                   geometry: RodGeometry, displacements,
                   consts: PhysicalConstants = CONSTANTS):
    """Piecewise coupling curve: quadratic rise, plateau cap, macroscopic tail.

    The macroscopic term enters above the nucleus extension and is shifted to
    vanish at the seam, keeping the curve continuous and non-decreasing.
    """
    displacements = [float(x) for x in displacements]
    if any(b < a for a, b in zip(displacements, displacements[1:])):
        raise ValueError("displacement samples must be sorted ascending")
    d_nucl = nucleus_extension(mat, temperature, consts)
    plateau = solid_plateau_eg(mass, mat, temperature, consts)
    out = []
    for dx in displacements:
        if dx == 0.0:
            out.append((dx, 0.0))
            continue
        micro = min(5.0 * plateau * (dx / d_nucl) ** 2, plateau)
        macro = 0.0
        if dx > d_nucl:
            macro = rod_macroscopic_eg(geometry.diameter, mat.bulk_density, dx,
                                       geometry.beta, consts) - \
                rod_macroscopic_eg(geometry.diameter, mat.bulk_density, d_nucl,
                                   geometry.beta, consts)
        out.append((dx, micro + macro))
    return out


def solid_crossover_displacement(mass: float, mat: Material, temperature: float,
                                 geometry: RodGeometry,
                                 consts: PhysicalConstants = CONSTANTS) -> float:
    """Displacement at which the macroscopic term reaches the plateau."""
    plateau = solid_plateau_eg(mass, mat, temperature, consts)
    d_nucl = nucleus_extension(mat, temperature, consts)
    coeff = consts.xi * geometry.beta * consts.G * geometry.diameter ** 3 * mat.bulk_density ** 2
    return math.sqrt(plateau / coeff + d_nucl ** 2)


def fluid_sphere_lifetime(diameter: float, density: float,
                          consts: PhysicalConstants = CONSTANTS) -> float:
    """Lifetime of a far-separated superposition of a uniform fluid sphere."""
    if diameter <= 0 or density <= 0:
        raise ValueError("diameter and density must be > 0")
    mass = math.pi / 6.0 * diameter ** 3 * density
    eg = consts.xi * 12.0 / 5.0 * consts.G * mass ** 2 / diameter
    return consts.hbar / eg


# ---------------------------------------------------------------------------
# detector decay-rate budget


@dataclass(frozen=True)
class CapacitorSpec:
    radius: float = 0.05         # m
    plate_gap: float = 1.0e-4    # m
    dielectric: Material = MATERIALS["sio2"]

    def __post_init__(self):
        if self.radius <= 0 or self.plate_gap <= 0:
            raise ValueError("capacitor geometry must be positive")

    def capacitance(self) -> float:
        area = math.pi * self.radius ** 2
        return self.dielectric.relative_permittivity * VACUUM_PERMITTIVITY * area / self.plate_gap


@dataclass(frozen=True)
class ResistorSpec:
    length: float = 0.10         # m
    diameter: float = 3.0e-3     # m
    material: Material = MATERIALS["cu"]

    def __post_init__(self):
        if self.length <= 0 or self.diameter <= 0:
            raise ValueError("resistor geometry must be positive")

    def mass(self) -> float:
        return math.pi * (self.diameter / 2.0) ** 2 * self.length * self.material.bulk_density


@dataclass(frozen=True)
class DetectorParams:
    capacitor: CapacitorSpec = CapacitorSpec()
    resistor: ResistorSpec = ResistorSpec()
    voltage_from: float = 36.0
    voltage_to: float = 29.0
    piezo_displacement: float = 2.0e-9
    shifted_mass: float = 0.1
    shifted_mass_material: Material = MATERIALS["iron"]
    temperature: float = 300.0
    photon_wavelength: float = 1.3e-6
    detector_mass: float = 1.0
    detector_material: Material = MATERIALS["iron"]

    def __post_init__(self):
        if self.voltage_from < self.voltage_to:
            raise ValueError("voltage_from must be >= voltage_to")
        for name in ("piezo_displacement", "shifted_mass", "temperature",
                     "photon_wavelength", "detector_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class BudgetEntry:
    effect: str
    displacement: float   # m
    eg: float             # J
    rate: float           # 1/s


BUDGET_EFFECTS = ("dielectric_compression", "electron_transfer",
                  "resistor_heating", "photon_impetus")


def detector_budget(params: DetectorParams = DetectorParams(),
                    consts: PhysicalConstants = CONSTANTS):
    """Conserving-mode decay-rate budget of the proposed photon detector.

    Four parasitic mass displacements accompany a detection event; each is fed
    through the sub-saturation quadratic (distributed displacements enter with
    their rms, strain profiles are linear so <u^2> = peak^2 / 3).
    """
    cap = params.capacitor
    res = params.resistor
    v1, v2 = params.voltage_from, params.voltage_to
    temp = params.temperature
    entries = []

    # 1. electrostatic compression of the capacitor dielectric
    eps = cap.dielectric.relative_permittivity * VACUUM_PERMITTIVITY
    pressure_drop = eps * (v1 ** 2 - v2 ** 2) / (2.0 * cap.plate_gap ** 2)
    delta_d = pressure_drop / cap.dielectric.compression_modulus * cap.plate_gap
    slab_mass = math.pi * cap.radius ** 2 * cap.plate_gap * cap.dielectric.bulk_density
    eg = _quadratic_eg(slab_mass, cap.dielectric, temp, delta_d / math.sqrt(3.0), consts)
    entries.append(BudgetEntry("dielectric_compression", delta_d, eg, eg / consts.hbar))

    # 2. electron transfer between the capacitor plates
    charge = cap.capacitance() * (v1 - v2)
    moved_mass = charge / ELEMENTARY_CHARGE * ELECTRON_MASS
    area = math.pi * cap.radius ** 2
    sigma = moved_mass / area
    eg = consts.xi * 2.0 * math.pi * consts.G * sigma ** 2 * area * cap.plate_gap
    entries.append(BudgetEntry("electron_transfer", cap.plate_gap, eg, eg / consts.hbar))

    # 3. thermal expansion of the discharge resistor
    dissipated = cap.capacitance() * (v1 ** 2 - v2 ** 2) / 2.0
    delta_t = dissipated / (res.mass() * res.material.specific_heat)
    delta_l = res.material.thermal_expansion * delta_t * res.length
    eg = _quadratic_eg(res.mass(), res.material, temp, delta_l / math.sqrt(3.0), consts)
    entries.append(BudgetEntry("resistor_heating", delta_l, eg, eg / consts.hbar))

    # 4. photon impetus on the whole detector, evaluated after one second
    momentum = 2.0 * math.pi * consts.hbar / params.photon_wavelength
    drift = momentum / params.detector_mass * 1.0
    eg = _quadratic_eg(params.detector_mass, params.detector_material, temp, drift, consts)
    entries.append(BudgetEntry("photon_impetus", drift, eg, eg / consts.hbar))
    return entries


def _quadratic_eg(mass, mat, temperature, displacement, consts) -> float:
    if displacement == 0.0:
        return 0.0
    d_nucl = nucleus_extension(mat, temperature, consts)
    plateau = solid_plateau_eg(mass, mat, temperature, consts)
    return min(5.0 * plateau * (displacement / d_nucl) ** 2, plateau)


def changing_mode_eg(params: DetectorParams = DetectorParams(),
                     consts: PhysicalConstants = CONSTANTS) -> float:
    """Coupling of the changing-mode detector: the piezo-shifted mass, saturated."""
    return _quadratic_eg(params.shifted_mass, params.shifted_mass_material,
                         params.temperature, params.piezo_displacement, consts)

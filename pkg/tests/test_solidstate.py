import pytest

from reductionlab.constants import CONSTANTS, PhysicalConstants
from reductionlab.massdist import Displaced, NucleusLattice, QuadratureConfig, pair_eg
from reductionlab.solidstate import (
    BUDGET_EFFECTS,
    CapacitorSpec,
    DetectorParams,
    MATERIALS,
    RegimeWarning,
    ResistorSpec,
    RodGeometry,
    changing_mode_eg,
    detector_budget,
    fluid_sphere_lifetime,
    material,
    nucleus_extension,
    nucleus_pair_energy,
    rod_macroscopic_eg,
    solid_crossover_displacement,
    solid_eg_curve,
    solid_plateau_eg,
    solid_small_displacement_eg,
)

HBAR = CONSTANTS.hbar
IRON = MATERIALS["iron"]


def test_material_presets_carry_reference_values():
    assert set(MATERIALS) == {"iron", "water", "sio2", "cu"}
    assert IRON.nucleus_mass == 9.3e-26
    assert IRON.lattice_constant == 2.87e-10
    assert IRON.bulk_density == 7874.0
    assert MATERIALS["water"].bulk_density == 1000.0
    assert MATERIALS["sio2"].relative_permittivity == 3.7
    assert MATERIALS["sio2"].compression_modulus == 7.6e10
    assert MATERIALS["cu"].thermal_expansion == 1.7e-5
    assert material("IRON") is IRON
    with pytest.raises(KeyError):
        material("unobtainium")


def test_nucleus_extension_iron_room_temperature():
    d = nucleus_extension(IRON, 300.0)
    assert 0.1e-10 < d < 0.4e-10      # within a factor 2 of 0.2 Angstrom


def test_nucleus_extension_zero_temperature():
    assert nucleus_extension(IRON, 0.0) == 0.0


def test_nucleus_extension_sqrt_scaling():
    assert nucleus_extension(IRON, 1200.0) == pytest.approx(
        2.0 * nucleus_extension(IRON, 300.0), rel=1e-12)


def test_plateau_rate_for_100g_iron():
    rate = solid_plateau_eg(0.1, IRON, 300.0) / HBAR
    assert 10 ** 8.5 < rate < 10 ** 9.5


def test_plateau_is_linear_in_mass():
    assert solid_plateau_eg(0.2, IRON, 300.0) == pytest.approx(
        2.0 * solid_plateau_eg(0.1, IRON, 300.0), rel=1e-12)


def test_plateau_vanishes_with_nucleus_mass_at_fixed_total():
    # N * Enucl ~ mass * m_nucl^{3/2}: lighter constituents couple less
    import dataclasses
    light = dataclasses.replace(IRON, nucleus_mass=IRON.nucleus_mass / 100.0)
    heavy = solid_plateau_eg(0.1, IRON, 300.0)
    lighter = solid_plateau_eg(0.1, light, 300.0)
    assert lighter == pytest.approx(heavy / 1000.0, rel=1e-9)


def test_small_displacement_zero():
    assert solid_small_displacement_eg(0.1, IRON, 300.0, 0.0) == 0.0


def test_small_displacement_tenth_of_extension():
    d = nucleus_extension(IRON, 300.0)
    plateau = solid_plateau_eg(0.1, IRON, 300.0)
    value = solid_small_displacement_eg(0.1, IRON, 300.0, d / 10.0)
    assert value == pytest.approx(plateau * 5.0 / 100.0, rel=1e-12)


def test_small_displacement_warns_outside_regime():
    d = nucleus_extension(IRON, 300.0)
    with pytest.warns(RegimeWarning):
        solid_small_displacement_eg(0.1, IRON, 300.0, 3.0 * d)


def test_small_displacement_quadratic_coefficient_against_quadrature():
    # pair quadrature on a sparse lattice of uniform-sphere nuclei: the
    # uniform profile carries 1/3 of the alpha=5 heuristic coefficient
    d = nucleus_extension(IRON, 300.0)
    m = IRON.nucleus_mass
    spacing = 100.0 * d
    pts = [(i * spacing, j * spacing, k * spacing)
           for i in range(2) for j in range(2) for k in range(2)]
    lat = NucleusLattice(m, d, pts)
    dx = d / 20.0
    quad = pair_eg(lat, Displaced(lat, (dx, 0, 0)), QuadratureConfig(rel_tolerance=1e-4))
    heuristic = solid_small_displacement_eg(len(pts) * m, IRON, 300.0, dx)
    ratio = quad / heuristic
    assert 0.25 < ratio < 4.0
    assert ratio == pytest.approx(1.0 / 3.0, rel=0.15)


def test_rod_macroscopic_matches_plateau_at_twenty_angstrom():
    value = rod_macroscopic_eg(0.01, IRON.bulk_density, 20e-10)
    plateau = solid_plateau_eg(0.1, IRON, 300.0)
    assert value / HBAR == pytest.approx(1e9, rel=0.9)
    assert 1.0 / 3.0 < value / plateau < 3.0


def test_rod_macroscopic_zero_and_quadratic():
    assert rod_macroscopic_eg(0.01, 7874.0, 0.0) == 0.0
    assert rod_macroscopic_eg(0.01, 7874.0, 2e-10) == pytest.approx(
        4.0 * rod_macroscopic_eg(0.01, 7874.0, 1e-10), rel=1e-12)


def test_rod_macroscopic_shape_scalings():
    base = rod_macroscopic_eg(0.01, 7874.0, 1e-10)
    assert rod_macroscopic_eg(0.02, 7874.0, 1e-10) == pytest.approx(8 * base, rel=1e-12)
    assert rod_macroscopic_eg(0.01, 2 * 7874.0, 1e-10) == pytest.approx(4 * base, rel=1e-12)


def test_eg_curve_monotone_and_continuous():
    geo = RodGeometry(diameter=0.01)
    d = nucleus_extension(IRON, 300.0)
    xs = [0.0] + [d * f for f in (1e-3, 0.01, 0.1, 0.447, 0.999, 1.0 + 1e-12,
                                  1.5, 5.0, 50.0, 120.0, 500.0)]
    curve = solid_eg_curve(0.1, IRON, 300.0, geo, xs)
    values = [v for _, v in curve]
    for a, b in zip(values, values[1:]):
        assert b >= a * (1 - 1e-12)
    # continuity across the plateau seam and the macroscopic onset
    below = dict(curve)[d * 0.999]
    above = dict(curve)[d * (1.0 + 1e-12)]
    plateau = solid_plateau_eg(0.1, IRON, 300.0)
    assert above == pytest.approx(below, rel=1e-3)
    assert below == pytest.approx(plateau, rel=1e-9)


def test_eg_curve_zero_at_zero():
    geo = RodGeometry(diameter=0.01)
    curve = solid_eg_curve(0.1, IRON, 300.0, geo, [0.0])
    assert curve[0] == (0.0, 0.0)


def test_eg_curve_sits_at_plateau_before_crossover():
    geo = RodGeometry(diameter=0.01)
    d = nucleus_extension(IRON, 300.0)
    plateau = solid_plateau_eg(0.1, IRON, 300.0)
    (_, value), = solid_eg_curve(0.1, IRON, 300.0, geo, [5.0 * d])
    assert value == pytest.approx(plateau, rel=0.01)


def test_crossover_displacement_near_twenty_angstrom():
    geo = RodGeometry(diameter=0.01)
    crossover = solid_crossover_displacement(0.1, IRON, 300.0, geo)
    assert 10e-10 < crossover < 40e-10
    # at the crossover the curve carries roughly twice the plateau
    (_, value), = solid_eg_curve(0.1, IRON, 300.0, geo, [crossover])
    plateau = solid_plateau_eg(0.1, IRON, 300.0)
    assert value == pytest.approx(2.0 * plateau, rel=0.05)


def test_eg_curve_requires_sorted_samples():
    geo = RodGeometry(diameter=0.01)
    with pytest.raises(ValueError):
        solid_eg_curve(0.1, IRON, 300.0, geo, [1e-10, 0.5e-10])


def test_fluid_lifetime_micron_water_sphere():
    tau = fluid_sphere_lifetime(1e-6, 1000.0)
    assert 0.1 < tau < 10.0


def test_fluid_lifetime_power_laws():
    tau = fluid_sphere_lifetime(1e-6, 1000.0)
    assert fluid_sphere_lifetime(0.5e-6, 1000.0) == pytest.approx(32.0 * tau, rel=1e-12)
    assert fluid_sphere_lifetime(1e-6, 100.0) == pytest.approx(100.0 * tau, rel=1e-12)


# ---------------------------------------------------------------------------
# detector budget


def test_budget_effect_order_and_windows():
    entries = {e.effect: e for e in detector_budget()}
    assert set(entries) == set(BUDGET_EFFECTS)
    assert entries["photon_impetus"].rate < entries["electron_transfer"].rate \
        < entries["dielectric_compression"].rate < entries["resistor_heating"].rate
    assert 1e3 < entries["resistor_heating"].rate < 1e7
    assert 1e-3 < entries["dielectric_compression"].rate < 1e1


def test_budget_displacements_match_worked_example():
    entries = {e.effect: e for e in detector_budget()}
    # dielectric compression ~ 1e-15 m, resistor expansion ~ 4e-13 m
    assert entries["dielectric_compression"].displacement == pytest.approx(2e-15, rel=1.0)
    assert entries["resistor_heating"].displacement == pytest.approx(4e-13, rel=0.25)
    assert entries["photon_impetus"].rate < 1e-20


def test_budget_capacitance_matches_quoted_value():
    assert CapacitorSpec().capacitance() == pytest.approx(2.6e-9, rel=0.02)


def test_budget_zero_voltage_drop_kills_electrical_entries():
    params = DetectorParams(voltage_from=36.0, voltage_to=36.0)
    entries = {e.effect: e for e in detector_budget(params)}
    assert entries["dielectric_compression"].eg == 0.0
    assert entries["electron_transfer"].eg == 0.0
    assert entries["resistor_heating"].eg == 0.0
    assert entries["photon_impetus"].eg > 0.0


def test_budget_rates_are_eg_over_hbar():
    for entry in detector_budget():
        assert entry.rate == pytest.approx(entry.eg / HBAR, rel=1e-12)


def test_changing_mode_dominates_conserving_budget():
    rate = changing_mode_eg() / HBAR
    assert 1e8 < rate < 1e10
    worst = max(e.rate for e in detector_budget())
    assert rate / worst > 1e3


def test_detector_params_validation():
    with pytest.raises(ValueError):
        DetectorParams(voltage_from=10.0, voltage_to=20.0)
    with pytest.raises(ValueError):
        ResistorSpec(length=-0.1)
    with pytest.raises(ValueError):
        RodGeometry(diameter=0.0)


def test_estimates_scale_with_xi():
    doubled = PhysicalConstants(xi=2.0)
    assert solid_plateau_eg(0.1, IRON, 300.0, doubled) == pytest.approx(
        2.0 * solid_plateau_eg(0.1, IRON, 300.0), rel=1e-12)
    assert nucleus_pair_energy(IRON, 300.0, doubled) == pytest.approx(
        2.0 * nucleus_pair_energy(IRON, 300.0), rel=1e-12)

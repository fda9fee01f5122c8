import numpy as np
import pytest
from hypothesis import given, strategies as st

from dropevo.formulation import (
    AllZeroError,
    Formulation,
    NegativeComponentError,
    normalize,
    oil_lookup,
    oil_table,
    well_volumes,
)


def test_normalize_symmetry():
    assert normalize([1, 1, 1, 1]).proportions == (0.25, 0.25, 0.25, 0.25)


def test_normalize_single_component():
    assert normalize([0, 0, 0, 2]).proportions == (0, 0, 0, 1)


def test_normalize_already_normalized():
    assert normalize([0.3, 0.1, 0.4, 0.2]).proportions == (0.3, 0.1, 0.4, 0.2)


def test_normalize_errors():
    with pytest.raises(AllZeroError):
        normalize([0, 0, 0, 0])
    with pytest.raises(NegativeComponentError):
        normalize([1, -0.1, 0, 0])


positive_raws = st.lists(
    st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=4, max_size=4
).filter(lambda r: sum(r) > 1e-9)


@given(positive_raws)
def test_normalize_idempotent_exactly(raw):
    once = normalize(raw).proportions
    twice = normalize(once).proportions
    assert once == twice


@given(positive_raws, st.floats(min_value=1e-3, max_value=1e3))
def test_normalize_scale_invariant(raw, k):
    a = np.array(normalize(raw).proportions)
    b = np.array(normalize([k * v for v in raw]).proportions)
    assert np.allclose(a, b, atol=1e-12)


def test_well_volumes_uniform():
    assert np.allclose(well_volumes(normalize([1, 1, 1, 1])), [90, 90, 90, 90])


def test_well_volumes_single():
    assert np.allclose(well_volumes(Formulation((1, 0, 0, 0))), [360, 0, 0, 0])


def test_well_volumes_exact_multiplication():
    vols = well_volumes(Formulation((0.5, 0.25, 0.125, 0.125)))
    assert np.allclose(vols, [180, 90, 45, 45])


@given(positive_raws)
def test_well_volumes_conserve_total(raw):
    assert abs(well_volumes(normalize(raw)).sum() - 360.0) < 1e-9


def test_oil_table_rows():
    table = oil_table()
    assert len(table) == 5
    octanol = oil_lookup("1-octanol")
    assert (octanol.density, octanol.solubility, octanol.surface_tension,
            octanol.viscosity) == (0.824, 0.46, 27.1, 7.288)
    dodecane = oil_lookup("dodecane")
    assert dodecane.density == 0.78
    assert dodecane.solubility is None
    assert dodecane.effective_solubility == 0.0
    assert dodecane.viscosity == 1.383
    dep = oil_lookup("DEP")
    assert (dep.density, dep.surface_tension, dep.viscosity) == (1.12, 19.6, 10.625)


def test_formulation_invariants():
    with pytest.raises(Exception):
        Formulation((0.5, 0.5, 0.5, -0.5))
    with pytest.raises(Exception):
        Formulation((0.3, 0.3, 0.3, 0.3))

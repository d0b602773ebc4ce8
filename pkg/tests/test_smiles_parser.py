import pytest
from goldens import MALFORMED_SMILES, SMILES_COUNT_GOLDENS

from relm.molgraph import (
    Atom,
    BondOrder,
    EmptyInput,
    SmilesError,
    UnknownElement,
    parse_smiles,
)


@pytest.mark.parametrize("smiles,atoms,bonds", SMILES_COUNT_GOLDENS)
def test_golden_atom_bond_counts(smiles, atoms, bonds):
    graphs = parse_smiles(smiles)
    assert sum(g.num_atoms for g in graphs) == atoms
    assert sum(g.num_bonds for g in graphs) == bonds


@pytest.mark.parametrize("smiles,error", MALFORMED_SMILES)
def test_malformed_inputs_raise_documented_errors(smiles, error):
    with pytest.raises(error):
        parse_smiles(smiles)


@pytest.mark.parametrize("smiles,error", MALFORMED_SMILES)
def test_malformed_errors_carry_byte_offsets(smiles, error):
    with pytest.raises(SmilesError) as excinfo:
        parse_smiles(smiles)
    assert excinfo.value.offset is not None
    assert 0 <= excinfo.value.offset <= len(smiles)


def test_ethanol_structure():
    (g,) = parse_smiles("CCO")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert [(b.a, b.b) for b in g.bonds] == [(0, 1), (1, 2)]
    assert all(b.order is BondOrder.SINGLE for b in g.bonds)


def test_benzene_is_aromatic():
    (g,) = parse_smiles("c1ccccc1")
    assert g.num_atoms == 6 and g.num_bonds == 6
    assert all(a.element == "C" and a.aromatic for a in g.atoms)
    assert all(b.order is BondOrder.AROMATIC for b in g.bonds)


def test_dot_fragments_and_bracket_charge():
    acetate, sodium = parse_smiles("CC(=O)O.[Na+]")
    assert acetate.num_atoms == 4 and acetate.num_bonds == 3
    orders = sorted(b.order.value for b in acetate.bonds)
    assert orders == ["double", "single", "single"]
    assert sodium.atoms == (Atom(element="Na", formal_charge=1),)


def test_bracket_hydrogen_counts():
    (g,) = parse_smiles("[NH4+]")
    assert g.atoms[0] == Atom(element="N", formal_charge=1, explicit_h=4)
    (g,) = parse_smiles("[nH]1cccc1")
    assert g.atoms[0].explicit_h == 1 and g.atoms[0].aromatic


def test_charges_parse_in_both_notations():
    assert parse_smiles("[O-]")[0].atoms[0].formal_charge == -1
    assert parse_smiles("[Ca++]")[0].atoms[0].formal_charge == 2
    assert parse_smiles("[Ca+2]")[0].atoms[0].formal_charge == 2
    assert parse_smiles("[N-3]")[0].atoms[0].formal_charge == -3


def test_isotope_and_atom_map_are_ignored():
    (g,) = parse_smiles("[13CH4]")
    assert g.atoms[0] == Atom(element="C", explicit_h=4)
    (g,) = parse_smiles("[CH3:7]")
    assert g.atoms[0] == Atom(element="C", explicit_h=3)


def test_stereo_marks_are_discarded_with_flag():
    (g,) = parse_smiles("C/C=C/C")
    assert g.num_atoms == 4 and g.num_bonds == 3
    assert g.stereo_stripped
    orders = [b.order for b in g.bonds]
    assert orders == [BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.SINGLE]

    (g,) = parse_smiles("N[C@@H](C)C(=O)O")
    assert g.stereo_stripped
    assert g.atoms[1].explicit_h == 1

    (g,) = parse_smiles("CCO")
    assert not g.stereo_stripped


def test_ring_closure_with_explicit_bond_order():
    (g,) = parse_smiles("C=1CCCCC=1")
    ring_bond = [b for b in g.bonds if frozenset((b.a, b.b)) == frozenset((0, 5))]
    assert ring_bond[0].order is BondOrder.DOUBLE
    (g2,) = parse_smiles("C1CCCCC=1")
    assert sorted(b.order.value for b in g2.bonds).count("double") == 1


def test_two_digit_ring_closure():
    (g,) = parse_smiles("C%10CCCC%10")
    assert g.num_bonds == 5


def test_conflicting_ring_bond_orders_rejected():
    from relm.molgraph import SmilesSyntaxError

    with pytest.raises(SmilesSyntaxError):
        parse_smiles("C=1CCCCC#1")


def test_ring_digits_are_reusable_after_closing():
    (g,) = parse_smiles("C1CC1C1CC1")
    assert g.num_atoms == 6 and g.num_bonds == 7


def test_empty_input_offset_zero():
    with pytest.raises(EmptyInput) as excinfo:
        parse_smiles("")
    assert excinfo.value.offset == 0


def test_unknown_element_offset_points_at_symbol():
    with pytest.raises(UnknownElement) as excinfo:
        parse_smiles("CC[Xe]")
    assert excinfo.value.offset == 3


def test_metal_elements_in_brackets():
    for smiles, element in [
        ("[Pd]", "Pd"),
        ("[Fe+2]", "Fe"),
        ("[Li+]", "Li"),
        ("[Mg+2]", "Mg"),
    ]:
        (g,) = parse_smiles(smiles)
        assert g.atoms[0].element == element


def test_aromatic_bond_symbol_between_plain_atoms():
    (g,) = parse_smiles("C:C")
    assert g.bonds[0].order is BondOrder.AROMATIC

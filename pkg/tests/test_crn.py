from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLED, random_network
from nlpc.crn import (NetworkParseError, NotWeaklyElementedError, SccSampler, conservation_basis,
                      flux_jacobian, fluxes, load_network, make_target, parse_network,
                      sample_on_scc, species_rhs, steady_state_problem)
from nlpc.solver import SolverConfig, nlpc_solve_with_restarts

AB = "species A B\nreaction 2.0 : A -> B\nreaction 1.0 : B -> A\n"
ABC = "reaction 1 : A + B -> C\nreaction 0.5 : C -> A + B\n"
CYCLE = "reaction 1 : A -> B\nreaction 2 : B -> C\nreaction 3 : C -> A\n"


def test_parse_two_species():
    net = parse_network(AB)
    assert net.species == ("A", "B")
    assert net.S.tolist() == [[-1, 1], [1, -1]]
    assert net.rates.tolist() == [2.0, 1.0]


def test_parse_dimerisation_column():
    net = parse_network("reaction 1.0 : 2 A -> B")
    assert net.S[:, 0].tolist() == [-2, 1]
    assert net.reactions[0].order == 2


def test_species_order_by_first_appearance():
    net = parse_network("reaction 1 : C + A -> B\nreaction 1 : B -> D")
    assert net.species == ("C", "A", "B", "D")


def test_duplicate_reactions_kept_and_degradation_allowed():
    net = parse_network("reaction 1 : A -> B\nreaction 1 : A -> B\nreaction 1e-3 : B ->")
    assert net.n_reactions == 3
    assert net.S[:, 2].tolist() == [0, -1]


@pytest.mark.parametrize("text, line, fragment", [
    ("reaction 1.0 : A + B + C -> D", 1, "two reactant"),
    ("species A\nreaction 1.0 : 2 A + A -> A", 2, "two reactant"),
    ("reaction 0 : A -> B", 1, "positive"),
    ("reaction -1 : A -> B", 1, "positive"),
    ("reaction x : A -> B", 1, "rate"),
    ("reaction 1 : A => B", 1, "->"),
    ("species A B\n\nreaction 1 : A -> Z", 3, "Z"),
    ("reaction 1 : -> A", 1, "no reactants"),
    ("bogus 1 2", 1, "bogus"),
    ("reaction 1 : A -> B\nconc A -2", 2, "negative"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(NetworkParseError) as err:
        parse_network(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)
    assert fragment in str(err.value)


def test_fluxes_examples():
    net = parse_network("reaction 3 : A + B -> C")
    assert fluxes(net, [2.0, 5.0, 7.0]).tolist() == [30.0]
    assert fluxes(net, [0.0, 5.0, 7.0]).tolist() == [0.0]
    dimer = parse_network("reaction 1 : 2 A -> B")
    assert fluxes(dimer, [3.0, 0.0]).tolist() == [9.0]


def test_fluxes_reject_negative_state():
    with pytest.raises(ValueError):
        fluxes(parse_network(AB), [-1.0, 1.0])


def test_flux_jacobian_examples():
    dimer = parse_network("reaction 1 : 2 A -> B")
    assert flux_jacobian(dimer, [3.0, 0.0]).tolist() == [[6.0, 0.0]]
    net = parse_network("reaction 2 : A + B -> C")
    assert flux_jacobian(net, [2.0, 5.0, 0.0]).tolist() == [[10.0, 4.0, 0.0]]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_flux_jacobian_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_base=3, n_complexes=2)
    x = rng.uniform(0.2, 3.0, net.n_species)
    h = 1e-6
    fd = np.column_stack([(fluxes(net, x + h * e) - fluxes(net, x - h * e)) / (2 * h)
                          for e in np.eye(net.n_species)])
    jz = flux_jacobian(net, x)
    assert np.linalg.norm(jz - fd) <= 1e-5 * max(np.linalg.norm(jz), 1.0)


def sympy_left_kernel_dim(S):
    return S.shape[0] - sympy.Matrix(S.tolist()).rank()


@pytest.mark.parametrize("text, expected", [
    (AB, [[1, 1]]),
    (ABC, [[1, 0, 1], [0, 1, 1]]),
    (CYCLE, [[1, 1, 1]]),
])
def test_conservation_basis_examples(text, expected):
    net = parse_network(text)
    basis = conservation_basis(net)
    assert basis.N.tolist() == expected
    assert basis.p == sympy_left_kernel_dim(net.S)
    assert not (basis.N @ net.S).any()


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_bundled_bases_against_exact_kernel(path):
    net = load_network(path)
    basis = conservation_basis(net)
    N = sympy.Matrix(basis.N.tolist())
    St = sympy.Matrix(net.S.tolist())
    assert basis.p == sympy_left_kernel_dim(net.S)
    assert N * St == sympy.zeros(basis.p, net.n_reactions)
    assert N.rank() == basis.p
    assert (basis.N >= 0).all()
    lead = basis.N[:, basis.identity_species]
    assert lead.tolist() == np.eye(basis.p, dtype=int).tolist()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_bases_are_exact(seed):
    net = random_network(np.random.default_rng(seed))
    basis = conservation_basis(net)
    assert not (basis.N @ net.S).any()
    assert basis.p == sympy_left_kernel_dim(net.S)
    assert basis.N[:, basis.identity_species].tolist() == np.eye(basis.p, dtype=int).tolist()


def test_not_weakly_elemented():
    net = parse_network("reaction 1 : A + B -> 2 C\nreaction 1 : 2 C -> A + B")
    with pytest.raises(NotWeaklyElementedError):
        conservation_basis(net)


def test_network_without_conservation_laws():
    net = parse_network("reaction 1 : A ->\nreaction 2 : B -> A")
    basis = conservation_basis(net)
    assert basis.p == 0
    p = steady_state_problem(make_target(net, basis))
    assert p.f([0.0, 0.0]).tolist() == [0.0, 0.0]


def test_steady_state_system_two_species():
    target = make_target(parse_network(AB), moieties=[3.0])
    p = steady_state_problem(target)
    x = np.array([0.7, 1.1])
    assert p.f(x).tolist() == pytest.approx([2 * 0.7 - 1.1, 0.7 + 1.1 - 3.0])
    assert p.f([1.0, 2.0]).tolist() == [0.0, 0.0]


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_steady_state_structure(path):
    net = load_network(path)
    target = make_target(net)
    p = steady_state_problem(target)
    b = target.basis
    x = SccSampler(target, 11)()
    # conservation rows vanish on the class and the bottom Jacobian block is N
    assert np.abs(p.f(x)[net.n_species - b.p:]).max() <= 1e-9 * np.linalg.norm(target.moieties)
    rng = np.random.default_rng(0)
    for _ in range(3):
        y = rng.uniform(0, 2, net.n_species)
        assert np.array_equal(p.jac(y)[net.n_species - b.p:], b.N.astype(float))


def test_target_sources():
    net = parse_network(ABC + "conc A 2\nconc B 1\n")
    assert make_target(net).moieties.tolist() == [2.0, 1.0]
    assert make_target(net, moieties={1: 4.0, 2: 5.0}).moieties.tolist() == [4.0, 5.0]
    assert make_target(net, state=[1.0, 1.0, 1.0]).moieties.tolist() == [2.0, 2.0]
    with pytest.raises(ValueError):
        make_target(net, moieties={1: 4.0})
    with pytest.raises(ValueError):
        make_target(net, moieties=[4.0, 0.0])
    with pytest.raises(ValueError):
        make_target(parse_network(ABC))


def test_sampler_single_moiety():
    target = make_target(parse_network(AB), moieties=[3.0])
    for seed in range(1000):
        x = sample_on_scc(target, seed)
        assert 0 <= x[0] <= 3
        assert abs(x.sum() - 3.0) <= 1e-9 * 3.0


def test_sampler_two_moieties():
    target = make_target(parse_network(ABC), moieties=[2.0, 2.0])
    N = target.basis.N
    for seed in range(1000):
        x = sample_on_scc(target, seed)
        assert (x >= 0).all()
        assert np.linalg.norm(N @ x - [2.0, 2.0]) <= 1e-9 * np.linalg.norm([2.0, 2.0])


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_sampler_deterministic_and_on_class(path):
    target = make_target(load_network(path))
    a, b = SccSampler(target, 5), SccSampler(target, 5)
    c = np.linalg.norm(target.moieties)
    for _ in range(20):
        x, y = a(), b()
        assert np.array_equal(x, y)
        assert (x > 0).all()
        assert np.linalg.norm(target.basis.N @ x - target.moieties) <= 1e-9 * c
    assert not np.array_equal(sample_on_scc(target, 1), sample_on_scc(target, 2))


def test_sampler_covers_the_class():
    # uniform on the segment {a + b = 3}: mean near 1.5, both ends reached
    target = make_target(parse_network(AB), moieties=[3.0])
    s = SccSampler(target, 0)
    a = np.array([s()[0] for _ in range(4000)])
    assert abs(a.mean() - 1.5) < 0.1
    assert a.min() < 0.2 and a.max() > 2.8


def test_square_root_is_full_steady_state():
    """Roots of the reduced system annihilate the whole species right-hand side."""
    cfg = SolverConfig()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        net = random_network(rng)
        target = make_target(net, state=rng.uniform(0.5, 2.0, net.n_species))
        p = steady_state_problem(target)
        sampler = SccSampler(target, seed)
        for _ in range(5):
            out = nlpc_solve_with_restarts(p, sampler, cfg)
            assert out.converged
            v = fluxes(net, out.x)
            assert np.linalg.norm(species_rhs(net, out.x)) <= 1e-10 * max(np.linalg.norm(v), 1e-300)


def test_reaction_validation():
    from nlpc.crn import Reaction
    with pytest.raises(ValueError):
        Reaction(((0, 3),), (), 1.0)
    with pytest.raises(ValueError):
        Reaction(((0, 1),), (), float("inf"))


def test_rational_entries_stay_integral():
    # generators with a weight of two on the dimer
    basis = conservation_basis(parse_network("reaction 1 : 2 M -> D\nreaction 1 : D -> 2 M"))
    assert basis.N.tolist() == [[1, 2]]
    assert all(Fraction(int(v)) == v for v in basis.N.ravel())

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from nlpc.crn import CrnNetwork, Reaction

settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))

NETWORK_DIR = Path(__file__).resolve().parents[1] / "src" / "nlpc" / "networks"
BUNDLED = sorted(NETWORK_DIR.glob("*.crn"))


def random_network(rng: np.random.Generator, n_base: int = 3, n_complexes: int = 2) -> CrnNetwork:
    """Random weakly elemented network: base species interconvert and bind into complexes.

    Every complex is made of two base species, so the conservation laws
    are sums over base species with nonnegative integer weights.
    """
    species = [f"X{i}" for i in range(n_base)]
    reactions = []
    for i in range(n_base - 1):
        if rng.random() < 0.5:
            k1, k2 = rng.uniform(0.1, 3.0, 2)
            reactions.append(Reaction(((i, 1),), ((i + 1, 1),), k1))
            reactions.append(Reaction(((i + 1, 1),), ((i, 1),), k2))
    for c in range(n_complexes):
        a, b = rng.choice(n_base, 2)
        idx = len(species)
        species.append(f"C{c}")
        reactants = ((a, 2),) if a == b else ((a, 1), (b, 1))
        k1, k2 = rng.uniform(0.1, 3.0, 2)
        reactions.append(Reaction(reactants, ((idx, 1),), k1))
        reactions.append(Reaction(((idx, 1),), reactants, k2))
    if not reactions:
        reactions.append(Reaction(((0, 1),), ((1, 1),), 1.0))
        reactions.append(Reaction(((1, 1),), ((0, 1),), 1.0))
    return CrnNetwork(tuple(species), tuple(reactions))


@pytest.fixture
def report(request):
    """Print a single result line even when output is captured."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line: str) -> None:
        with capman.global_and_fixture_disabled():
            print(f"\n{line}")
    return emit

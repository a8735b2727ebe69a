"""Hypothesis strategies for random models."""

import math

from hypothesis import strategies as st

from pssmp import AtomMeasure, LevyTriplet, psi

locations = st.floats(-4.0, -0.02, allow_nan=False)
masses = st.floats(0.01, 3.0, allow_nan=False)


@st.composite
def atom_triplets(draw, max_atoms=3, killed=True):
    pairs = draw(st.lists(st.tuples(locations, masses), max_size=max_atoms))
    gamma = draw(st.floats(-2.0, 3.0, allow_nan=False))
    sigma2 = draw(st.floats(0.0, 3.0, allow_nan=False))
    q = draw(st.floats(0.0, 2.0, allow_nan=False)) if killed else 0.0
    return LevyTriplet(gamma, sigma2, AtomMeasure.from_pairs(pairs), q)


@st.composite
def a2_triplets(draw, max_atoms=3, killed=True):
    """Atom triplets with Psi(1) >= 0.05, shifting the drift when needed."""
    t = draw(atom_triplets(max_atoms, killed))
    p1 = psi(t, 1.0)
    if p1 < 0.05:
        t = LevyTriplet(t.gamma + 0.05 - p1 + draw(st.floats(0.0, 1.0)), t.sigma2, t.jump_measure, t.kill_rate)
    assert math.isfinite(psi(t, 1.0))
    return t

"""Random configurations shared by unit and acceptance tests."""

import math

import numpy as np

from noisemask.mask import OverlapSet
from noisemask.protocol import TransmissionCurve
from noisemask.state import ClassicalMixture, Coherent, MixtureComponent, StateSpec, TwinBeam


def random_nq_curve(rng: np.random.Generator, zero_b: bool = False) -> TransmissionCurve:
    """Short transmission curve near T = 1 with random overlaps and per-mode noise.

    Beam-a overlaps scale as sqrt(T) and beam-b overlaps stay fixed.  With
    ``zero_b`` every beam-b contribution vanishes: the beam-b LO lies fully
    in the listed modes and those modes carry no beam-b noise.
    """
    n = int(rng.integers(1, 6))
    u = rng.uniform(0, 1, n)
    u *= rng.uniform(0.2, 1.0) / max(1.0, float(np.linalg.norm(u)))
    a = rng.uniform(0.05, 1, n)
    a /= np.linalg.norm(a)
    if not zero_b:
        a *= math.sqrt(rng.uniform(0.3, 1.0))
    overrides = {}
    for k in range(1, n + 1):
        va = rng.uniform(1.0, 20.0)
        if zero_b:
            overrides[k] = ClassicalMixture((MixtureComponent(1.0, var_a=va, var_b=0.0),))
        elif rng.random() < 0.5:
            overrides[k] = TwinBeam(va, rng.uniform(0.01, 1.0))
        else:
            overrides[k] = ClassicalMixture((MixtureComponent(1.0, var_a=va, var_b=rng.uniform(0.0, 10.0)),))
    state = StateSpec(Coherent(), n, overrides)
    T = np.array([0.98, 0.99, 1.0])
    ovs = tuple(OverlapSet.from_arrays(u * math.sqrt(x), a) for x in T)
    return TransmissionCurve("transmission", T, np.array([ov.T_total for ov in ovs]), ovs, state)


def beam_b_excess(curve: TransmissionCurve) -> float:
    """Sum of alpha^2 var_b over listed modes plus the unlisted vacuum weight."""
    from noisemask.state import mode_noise

    ov = curve.overlaps[-1]
    vb = np.array([mode_noise(curve.state, k + 1).var_b for k in range(len(ov))])
    return float(np.sum(ov.alpha**2 * vb) + ov.alpha_residual)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisemask.errors import InvalidArgument
from noisemask.state import (
    VACUUM,
    ClassicalMixture,
    Coherent,
    MixtureComponent,
    ModeNoise,
    PhaseSensitive,
    StateSpec,
    Thermal,
    TwinBeam,
    mode_noise,
    quadrature_covariance,
)


def test_twin_beam_at_optimal_phases():
    nz = TwinBeam(5.0, 0.1).noise(0.0, 0.0)
    assert (nz.var_a, nz.var_b) == (5.0, 5.0)
    assert nz.cross == pytest.approx(4.9)
    assert nz.m0 == pytest.approx(0.1)


def test_twin_beam_correlation_follows_phase_sum():
    tb = TwinBeam(5.0, 0.1)
    assert tb.noise(0.4, -0.4).m0 == pytest.approx(0.1)
    assert tb.noise(math.pi / 2, 0.0).cross == pytest.approx(0.0, abs=1e-12)
    anti = tb.noise(math.pi, 0.0)
    assert anti.m0 == pytest.approx(5.0 + 4.9)


@pytest.mark.parametrize("var, m0", [(0.5, 0.1), (5.0, 0.0), (5.0, 1.5), (5.0, -0.1)])
def test_twin_beam_domain(var, m0):
    with pytest.raises(InvalidArgument):
        TwinBeam(var, m0)


def test_mode_noise_rejects_unphysical_correlation():
    with pytest.raises(InvalidArgument):
        ModeNoise(1.0, 1.0, 1.5)
    with pytest.raises(InvalidArgument):
        ModeNoise(-1.0, 1.0, 0.0)
    assert ModeNoise(2.0, 2.0, 2.0).m0 == 0.0


def test_thermal_and_coherent():
    assert Thermal(3.0).noise(0.7, 0.2) == ModeNoise(3.0, 1.0, 0.0)
    assert Coherent().noise(1.0, 2.0) == VACUUM
    with pytest.raises(InvalidArgument):
        Thermal(0.5)


def test_phase_sensitive_variance():
    ps = PhaseSensitive(0.25, 4.0, axis=0.3)
    assert ps.variance(0.3) == pytest.approx(0.25)
    assert ps.variance(0.3 + math.pi / 2) == pytest.approx(4.0)
    assert ps.variance(0.3 + math.pi / 4) == pytest.approx(2.125)
    assert mode_noise(StateSpec(ps), 1).var_a == pytest.approx(0.25)


def test_mixture_matches_law_of_total_covariance():
    comps = [MixtureComponent(0.2, 1.0, 0.5, 1.0, 2.0), MixtureComponent(0.5, -0.4, -0.2, 1.5, 1.0),
             MixtureComponent(0.3, 0.0, 1.1, 1.0, 1.0)]
    w = np.array([c.weight for c in comps])
    means = np.array([[c.mean_a, c.mean_b] for c in comps])
    within = np.sum(w * np.array([[c.var_a, c.var_b] for c in comps]).T, axis=1)
    between = np.cov(means.T, aweights=w, bias=True)
    nz = ClassicalMixture(tuple(comps)).noise(0, 0)
    assert nz.var_a == pytest.approx(within[0] + between[0, 0])
    assert nz.var_b == pytest.approx(within[1] + between[1, 1])
    assert nz.cross == pytest.approx(between[0, 1])


def test_mixture_validation():
    with pytest.raises(InvalidArgument):
        ClassicalMixture(())
    with pytest.raises(InvalidArgument):
        ClassicalMixture((MixtureComponent(0.4), MixtureComponent(0.4)))
    with pytest.raises(InvalidArgument):
        ClassicalMixture((MixtureComponent(1.0, var_a=-1.0),))


def test_state_spec_excited_modes_and_overrides():
    spec = StateSpec(TwinBeam(5.0, 0.1), 2, overrides={2: Thermal(3.0)})
    assert mode_noise(spec, 1).m0 == pytest.approx(0.1)
    assert mode_noise(spec, 2) == ModeNoise(3.0, 1.0, 0.0)
    assert mode_noise(spec, 3) == VACUUM
    assert spec.with_excited(1).n_excited == 1
    assert hash(spec) == hash(StateSpec(TwinBeam(5.0, 0.1), 2, overrides={2: Thermal(3.0)}))
    with pytest.raises(InvalidArgument):
        mode_noise(spec, 0)


def test_quadrature_covariance_layout():
    cov = quadrature_covariance(StateSpec(TwinBeam(5.0, 0.1), 2), 3)
    D = cov.dense()
    assert D.shape == (6, 6)
    assert D[0, 1] == pytest.approx(4.9)
    assert D[1, 2] == 0.0
    assert np.allclose(D[4:, 4:], np.eye(2))
    with pytest.raises(InvalidArgument):
        quadrature_covariance(StateSpec(Coherent()), 2, [(0.0, 0.0)])
    with pytest.raises(InvalidArgument):
        quadrature_covariance(StateSpec(Coherent()), 0)


@given(var=st.floats(1.0, 50.0), frac=st.floats(0.001, 1.0), pa=st.floats(-4, 4), pb=st.floats(-4, 4))
def test_twin_beam_block_is_psd_and_factorizes(var, frac, pa, pb):
    m0 = frac
    cov = quadrature_covariance(StateSpec(TwinBeam(var, m0)), 1, (pa, pb))
    block = cov.blocks[0]
    assert np.linalg.eigvalsh(block)[0] >= -1e-9 * var
    L = cov.cholesky()[0]
    assert np.allclose(L @ L.T, block, atol=1e-9 * var)


@given(mean=st.floats(-3, 3), va=st.floats(0, 3), w=st.floats(0.05, 0.95))
def test_singular_mixture_blocks_factorize(mean, va, w):
    # perfectly correlated classical displacements give a rank-one block
    mix = ClassicalMixture((MixtureComponent(w, mean, mean, va, 0.0), MixtureComponent(1 - w, -mean, -mean, va, 0.0)))
    cov = quadrature_covariance(StateSpec(mix), 1)
    L = cov.cholesky()[0]
    assert np.all(np.isfinite(L))
    assert np.allclose(L @ L.T, cov.blocks[0], atol=1e-9)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(1, 3), st.floats(1, 3)),
                min_size=1, max_size=5))
def test_mixture_covariance_is_physical(raw):
    total = sum(r[0] for r in raw)
    comps = tuple(MixtureComponent(r[0] / total, *r[1:]) for r in raw)
    nz = ClassicalMixture(comps).noise(0, 0)
    # product states with at least vacuum noise stay above the SQL in each arm
    assert nz.var_a >= 1 - 1e-9 and nz.var_b >= 1 - 1e-9
    assert nz.cross**2 <= nz.var_a * nz.var_b + 1e-9

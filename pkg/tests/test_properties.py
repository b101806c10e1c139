"""Randomised property suites.

Every test body records itself in ``CASES`` so the acceptance run can count
how many generated cases were actually exercised.
"""
import math
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from mcfqkd.config import parse_config_text, write_config
from mcfqkd.decoy import GainErrorTable, ProtocolParams, channel_gains, decoy_bounds, finite_size_factor, secure_key_rate
from mcfqkd.engine import Scenario
from mcfqkd.fiber import ChannelPlan, ClassicalChannel, FiberSpec, raman_inband_power
from mcfqkd.noise import DetectorSpec, FilterSpec, noise_count_prob_per_gate
from mcfqkd.units import binary_entropy, db_to_linear, linear_to_db
from oracles import entropy_bits, poisson_mixture, true_single_photon

CASES: Counter = Counter()
_ULP = 2.0 ** -52

def cases(n):
    return settings(max_examples=n, deadline=None, suppress_health_check=[HealthCheck.too_slow])

prob = st.floats(0.0, 1.0, allow_nan=False)
small_power = st.floats(0.0, 1e-9, allow_nan=False)


@cases(300)
@given(prob)
def test_entropy_symmetry_and_range(p):
    CASES["entropy_symmetry"] += 1
    h = binary_entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(binary_entropy(1.0 - p), abs=1e-12)
    assert h == pytest.approx(entropy_bits(p), abs=1e-12)


@cases(200)
@given(prob, prob, st.floats(0.0, 1.0))
def test_entropy_concavity(p, q, t):
    CASES["entropy_concavity"] += 1
    mixed = binary_entropy(t * p + (1 - t) * q)
    assert mixed >= t * binary_entropy(p) + (1 - t) * binary_entropy(q) - 1e-12


@cases(100)
@given(st.floats(-200.0, 200.0))
def test_db_round_trip(x):
    CASES["db_round_trip"] += 1
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


@cases(100)
@given(st.floats(0.0, 200.0), st.floats(0.0, 200.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_span_concatenation_adds_loss(len_a, len_b, excess_a, excess_b):
    CASES["concatenation"] += 1
    a = FiberSpec(length_km=len_a, excess_loss_db=(excess_a,) * 7)
    b = FiberSpec(length_km=len_b, excess_loss_db=(excess_b,) * 7)
    joined = a.concatenate(b)
    for core in range(7):
        assert joined.span_loss_db(core) == pytest.approx(a.span_loss_db(core) + b.span_loss_db(core), abs=1e-9)


@cases(100)
@given(st.floats(0.0, 1e-14), st.floats(1e-3, 100.0), st.floats(0.01, 2.0))
def test_raman_power_linear_in_launch(kappa, launch_mw, passband):
    CASES["raman_linearity"] += 1
    plan = ChannelPlan().with_combined_power(launch_mw)
    double = ChannelPlan().with_combined_power(2 * launch_mw)
    once = raman_inband_power(kappa, plan, passband)
    assert raman_inband_power(kappa, double, passband) == pytest.approx(2 * once, rel=1e-12, abs=1e-300)
    assert once == pytest.approx(kappa * passband * launch_mw, rel=1e-12, abs=1e-300)


@pytest.mark.filterwarnings("ignore::mcfqkd.noise.SaturationWarning")
@cases(150)
@given(st.lists(st.tuples(small_power, st.sampled_from([1547.72, 1552.72, 1550.0])), min_size=1, max_size=5),
       st.floats(0.05, 1.0), st.floats(1e-11, 9e-10), st.integers(0, 4), st.floats(1.0, 3.0))
def test_noise_monotone_in_inputs(sources, eff, gate, which, factor):
    CASES["noise_monotone"] += 1
    filt = FilterSpec()
    det = DetectorSpec(efficiency=eff, gate_width_s=gate)
    base = noise_count_prob_per_gate(sources, filt, det)
    bumped = list(sources)
    i = which % len(sources)
    bumped[i] = (sources[i][0] * factor, sources[i][1])
    assert noise_count_prob_per_gate(bumped, filt, det) >= base
    assert noise_count_prob_per_gate(sources, filt, replace(det, efficiency=min(1.0, eff * factor))) >= base
    assert noise_count_prob_per_gate(sources, filt, replace(det, gate_width_s=min(1e-9, gate * factor))) >= base


@cases(150)
@given(st.lists(st.tuples(st.floats(0.0, 1e-12), st.sampled_from([1547.72, 1552.72])), min_size=1, max_size=5))
def test_noise_doubles_with_power(sources):
    CASES["noise_linearity"] += 1
    filt, det = FilterSpec(), DetectorSpec()
    each = [noise_count_prob_per_gate([src], filt, det) for src in sources]
    total = noise_count_prob_per_gate(sources, filt, det)
    doubled = noise_count_prob_per_gate([(2 * p, w) for p, w in sources], filt, det)
    # First-order scaling: the relative deviation is bounded by the summed probability.
    assert abs(doubled - 2 * total) <= 2 * total * sum(each) + 4 * _ULP
    # The coincidence-safe combination approaches the plain sum; the gap is second order.
    assert abs(total - sum(each)) <= 0.5 * sum(each) ** 2 * (1 + 1e-9) + 4 * _ULP


valid_protocol = st.builds(
    lambda mu, ratio, p_mu, q_split, pz, e_opt, f_ec, block: ProtocolParams(
        mu=mu, nu=mu * ratio, p_mu=p_mu, p_nu=(1 - p_mu) * q_split, p_vac=(1 - p_mu) - (1 - p_mu) * q_split,
        basis_prob_z=pz, e_opt=e_opt, f_ec=f_ec, block_size_sifted=block),
    st.floats(0.05, 1.0), st.floats(0.0, 0.9), st.floats(0.1, 0.98), st.floats(0.0, 1.0),
    st.floats(0.5, 0.99), st.floats(0.0, 0.1), st.floats(1.0, 1.5), st.floats(1.0, 1e12),
)


@cases(1000)
@given(valid_protocol, st.floats(1e-6, 1.0), st.floats(0.0, 1e-2))
def test_rate_ordering(params, eta, y0):
    CASES["rate_ordering"] += 1
    table = channel_gains(eta, y0, params.e_opt, params.mu, params.nu)
    rate = secure_key_rate(params, table, decoy_bounds(params, table))
    assert 0.0 <= rate.secure_rate_finite_bps <= rate.secure_rate_asymptotic_bps <= rate.sifted_rate_bps
    assert 0.0 <= rate.qber <= 0.5
    assert 0.0 <= rate.secret_fraction <= 1.0


def soundness_case(mu, ratio, eta, y0, e_opt):
    """Decoy bounds against the exact Poisson mixture for one toy instance."""
    nu = mu * ratio
    q_mu, e_mu = poisson_mixture(mu, eta, y0, e_opt)
    q_nu, e_nu = poisson_mixture(nu, eta, y0, e_opt)
    table = GainErrorTable(mu, nu, q_mu, q_nu, y0, e_mu, e_nu, 0.5)
    est = decoy_bounds(ProtocolParams(mu=mu, nu=nu, e_opt=e_opt), table)
    y1, e1 = true_single_photon(eta, y0, e_opt)
    tol = 1e-12 * max(1.0, y1)
    return est.y1_lower <= y1 + tol and (est.y1_lower == 0.0 or est.e1_upper >= e1 - 1e-12)


toy_instance = (st.floats(0.1, 1.0), st.floats(0.05, 0.8), st.floats(1e-4, 1.0),
                st.floats(0.0, 1e-3), st.floats(0.0, 0.1))


@cases(200)
@given(*toy_instance)
def test_decoy_soundness(mu, ratio, eta, y0, e_opt):
    CASES["decoy_soundness"] += 1
    assert soundness_case(mu, ratio, eta, y0, e_opt)


@cases(100)
@given(st.floats(1.0, 1e12), st.floats(1.0, 1e12))
def test_finite_size_factor_monotone_bounded(a, b):
    CASES["finite_size"] += 1
    lo, hi = sorted((a, b))
    assert 0.0 <= finite_size_factor(lo) <= finite_size_factor(hi) <= 1.0


@cases(100)
@given(st.floats(0.0, 5e-4), st.floats(0.0, 5e-4))
def test_secure_rate_degrades_with_noise(n1, n2):
    CASES["noise_degradation"] += 1
    params = ProtocolParams()
    lo, hi = sorted((n1, n2))
    eta = 0.0389 * 0.2

    def point(noise):
        t = channel_gains(eta, 2e-5 + noise, params.e_opt, params.mu, params.nu)
        return secure_key_rate(params, t, decoy_bounds(params, t))

    a, b = point(lo), point(hi)
    assert b.qber >= a.qber - 1e-15
    assert b.secure_rate_finite_bps <= a.secure_rate_finite_bps * (1 + 1e-12)


channel = st.builds(
    ClassicalChannel,
    core=st.integers(1, 6),
    wavelength_nm=st.floats(1500.0, 1546.5) | st.floats(1549.0, 1600.0),
    direction=st.sampled_from(["co", "counter"]),
    launch_w=st.floats(0.0, 0.5),
)


@cases(60)
@given(st.lists(channel, max_size=4), st.lists(channel, max_size=2), st.floats(1.0, 120.0),
       st.floats(0.0, 1e-14), st.sampled_from(["mcf", "dual_ssmf_control"]),
       st.floats(0.05, 1.0), st.floats(0.0, 0.1))
def test_config_round_trip(classical, aux, length, kappa, mode, eff, e_opt):
    CASES["config_round_trip"] += 1
    s = Scenario(
        fiber=FiberSpec(length_km=length),
        plan=ChannelPlan(classical=tuple(classical), auxiliary=tuple(aux)),
        detector=DetectorSpec(efficiency=eff),
        protocol=replace(ProtocolParams(), e_opt=e_opt),
        kappa_r=kappa,
        mode=mode,
    )
    assert parse_config_text(write_config(s)) == s


PROPERTY_TESTS = [
    test_entropy_symmetry_and_range,
    test_entropy_concavity,
    test_db_round_trip,
    test_span_concatenation_adds_loss,
    test_raman_power_linear_in_launch,
    test_noise_monotone_in_inputs,
    test_noise_doubles_with_power,
    test_rate_ordering,
    test_decoy_soundness,
    test_finite_size_factor_monotone_bounded,
    test_secure_rate_degrades_with_noise,
    test_config_round_trip,
]

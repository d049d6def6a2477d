"""Rates, prices, utilities, per-SU time bounds and frame-time accounting."""

import logging
import math
from collections.abc import Sequence

import numpy as np
from numpy.polynomial.laguerre import laggauss
from scipy.integrate import quad

from src.errors import NumericError
from src.schemas import (
    AllocationResult,
    SecondaryUser,
    SensingDesign,
    SensingGeometry,
    SystemParams,
    TimeBounds,
)
from src.sensing import global_pd, global_pfa

logger = logging.getLogger(__name__)

QUADRATURE_NODES = 128
QUADRATURE_RTOL = 1e-8

_NODES, _WEIGHTS = laggauss(QUADRATURE_NODES)
_NODES_HALF, _WEIGHTS_HALF = laggauss(QUADRATURE_NODES // 2)


def _expected_log2_rate(signal: float, interference: float, noise: float) -> float:
    """
    E_x[log2(1 + signal / (x * interference + noise))] for x ~ Exp(1).

    Gauss-Laguerre first; when 64 and 128 nodes disagree the integrand has a
    sharp feature near zero and adaptive quadrature takes over.
    """

    def integrand(x: np.ndarray | float) -> np.ndarray | float:
        return np.log2(1.0 + signal / (x * interference + noise))

    fine = float(np.dot(_WEIGHTS, integrand(_NODES)))
    coarse = float(np.dot(_WEIGHTS_HALF, integrand(_NODES_HALF)))
    if abs(fine - coarse) <= QUADRATURE_RTOL * abs(fine):
        return fine

    logger.debug("Gauss-Laguerre spread %.3g, falling back to adaptive quadrature", fine - coarse)
    knee = signal / interference if interference > 0 else 1.0
    cut = 1.0 + knee
    breakpoints = [x for x in (noise / interference, knee) if 0.0 < x < cut]

    def weighted(x: float) -> float:
        return math.exp(-x) * math.log2(1.0 + signal / (x * interference + noise))

    head, head_err = quad(
        weighted, 0.0, cut, points=breakpoints or None, limit=400, epsabs=1e-16, epsrel=1e-11
    )
    tail, tail_err = quad(weighted, cut, math.inf, limit=400, epsabs=1e-16, epsrel=1e-11)
    value = head + tail
    error = head_err + tail_err
    if error > max(QUADRATURE_RTOL * abs(value), 1e-14):
        raise NumericError(
            "expected rate quadrature did not converge",
            value=value,
            error=error,
            laguerre_128=fine,
            laguerre_64=coarse,
        )
    return value


class RateCache:
    """Memoizes per-SU rates; entries are deterministic so concurrent inserts are harmless."""

    def __init__(self):
        self.link_rates: dict[tuple, tuple[float, float]] = {}
        self.effective: dict[tuple, float] = {}

    def link(self, su: SecondaryUser, params: SystemParams) -> tuple[float, float]:
        """(r0, r1) for the SU's current channel gain."""
        key = (su.gain_to_fc, params.p_st_dbm, params.p_pt_dbm, params.bandwidth, params.noise_density_dbm_hz)
        cached = self.link_rates.get(key)
        if cached is not None:
            return cached
        signal = su.gain_to_fc * params.p_st
        r0 = params.bandwidth * math.log2(1.0 + signal / params.noise_power)
        r1 = params.bandwidth * _expected_log2_rate(signal, params.p_pt, params.noise_power)
        self.link_rates[key] = (r0, r1)
        return r0, r1

    def rate(
        self,
        su: SecondaryUser,
        design: SensingDesign,
        geom: SensingGeometry,
        params: SystemParams,
        l_active: int,
    ) -> float:
        key = (su.gain_to_fc, design, geom, params, l_active)
        cached = self.effective.get(key)
        if cached is not None:
            return cached
        r0, r1 = self.link(su, params)
        value = effective_rate_from_probabilities(
            r0,
            r1,
            params.p_h0,
            global_pfa(design, l_active),
            global_pd(design, geom, l_active),
        )
        self.effective[key] = value
        return value

    def clear(self) -> None:
        self.link_rates.clear()
        self.effective.clear()


# Shared instance
rate_cache = RateCache()


def rate_idle(su: SecondaryUser, params: SystemParams) -> float:
    """SU-to-FC rate while the PU is absent (bits/s)."""
    return rate_cache.link(su, params)[0]


def rate_interfered(su: SecondaryUser, params: SystemParams) -> float:
    """SU-to-FC rate averaged over unit-mean exponential PU-to-FC fading (bits/s)."""
    return rate_cache.link(su, params)[1]


def effective_rate_from_probabilities(
    r0: float, r1: float, p_h0: float, pfa_global: float, pd_global: float
) -> float:
    """Expected rate from the idle and busy link rates and the fused detection probabilities."""
    return p_h0 * (1.0 - pfa_global) * r0 + (1.0 - p_h0) * (1.0 - pd_global) * r1


def effective_rate(
    su: SecondaryUser,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
    l_active: int,
) -> float:
    """Expected clearing rate of an active SU when L SUs cooperate (bits/s)."""
    return rate_cache.rate(su, design, geom, params, l_active)


def sensing_cost(params: SystemParams) -> float:
    """Energy price of one sensing round plus one report."""
    return params.n_samples * params.sense_cost + params.report_cost


def time_lower_bound(
    su: SecondaryUser,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
    l_active: int,
) -> float | None:
    """
    Break-even transmission time of an active SU.

    None when earn_rate <= pay_rate: such an SU never gets positive utility.
    """
    if su.never_profitable:
        return None
    rate = effective_rate(su, design, geom, params, l_active)
    if rate <= 0.0:
        raise NumericError("zero effective rate", gain=su.gain_to_fc)
    return sensing_cost(params) / (rate * (su.earn_rate - su.pay_rate))


def time_upper_bound(
    su: SecondaryUser,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
    l_active: int,
) -> float:
    """Time needed to clear the SU's whole buffer."""
    rate = effective_rate(su, design, geom, params, l_active)
    if rate <= 0.0:
        raise NumericError("zero effective rate", gain=su.gain_to_fc)
    return su.buffer_bits / rate


def time_bounds(
    su: SecondaryUser,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
    l_active: int,
) -> TimeBounds | None:
    """Break-even and buffer-clearing times together; None for a never-profitable SU."""
    lower = time_lower_bound(su, design, geom, params, l_active)
    if lower is None:
        return None
    return TimeBounds(lower=lower, upper=time_upper_bound(su, design, geom, params, l_active))


def effective_time(params: SystemParams, l_active: int) -> float:
    """Usable access time left in a frame when L SUs are active; may be negative."""
    fixed = params.tau2 + params.sensing_duration + params.tau5
    return params.frame_duration - fixed - l_active * params.tau_r_prime


def payment_total(
    times: Sequence[float], rates: Sequence[float], pay_rates: Sequence[float]
) -> float:
    """Sum of t_i * R_i * a_i."""
    return math.fsum(t * r * a for t, r, a in zip(times, rates, pay_rates))


def fc_utility(
    alloc: AllocationResult, per_su_rates: Sequence[float], pay_rates: Sequence[float]
) -> float:
    """FC revenue: sum of R_i * a_i * t_i over active SUs."""
    times = [t if on else 0.0 for t, on in zip(alloc.times, alloc.active)]
    return payment_total(times, per_su_rates, pay_rates)


def su_utility(
    su: SecondaryUser,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
    l_active: int,
    t_alloc: float,
    active: bool,
) -> float:
    """Profit of an SU: earned minus paid for its bits, minus sensing cost."""
    if not active:
        return 0.0
    rate = effective_rate(su, design, geom, params, l_active)
    return rate * t_alloc * (su.earn_rate - su.pay_rate) - sensing_cost(params)

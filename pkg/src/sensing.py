"""
Local and fused detection statistics for cooperative energy detection.

Every SU runs an energy detector over N samples and sends a one-bit verdict;
the FC declares the band busy when at least k of the L active SUs voted busy.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.special import betainc, erfc, erfcinv, gammaln

from src.errors import ConstraintViolation, DomainError
from src.schemas import SensingDesign, SensingGeometry

_SQRT2 = math.sqrt(2.0)


def q_function(x: float) -> float:
    """Gaussian upper-tail probability Q(x)."""
    return 0.5 * float(erfc(x / _SQRT2))


def q_inverse(p: float) -> float:
    """Inverse of `q_function` on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"q_inverse needs 0 < p < 1, got {p}")
    return _SQRT2 * float(erfcinv(2.0 * p))


def threshold_from_pfa(pfa: float, geom: SensingGeometry) -> float:
    """Energy threshold epsilon that yields local false-alarm probability `pfa`."""
    return geom.noise_var * (1.0 + q_inverse(pfa) / math.sqrt(geom.n_samples))


def pfa_from_threshold(threshold: float, geom: SensingGeometry) -> float:
    """Local false-alarm probability of an energy threshold; inverse of `threshold_from_pfa`."""
    return q_function((threshold / geom.noise_var - 1.0) * math.sqrt(geom.n_samples))


def local_pd(pfa: float, geom: SensingGeometry) -> float:
    """Local detection probability for a given local false-alarm probability."""
    shifted = q_inverse(pfa) - math.sqrt(geom.n_samples) * geom.gamma
    return q_function(shifted / math.sqrt(2.0 * geom.gamma + 1.0))


@lru_cache(maxsize=65536)
def binomial_tail(p: float, k: int, n: int) -> float:
    """
    P[X >= k] for X ~ Binomial(n, p).

    Terms are evaluated in log space and summed smallest first.
    """
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    ls = np.arange(k, n + 1)
    log_terms = (
        gammaln(n + 1)
        - gammaln(ls + 1)
        - gammaln(n - ls + 1)
        + ls * math.log(p)
        + (n - ls) * math.log1p(-p)
    )
    return min(1.0, math.fsum(np.sort(np.exp(log_terms))))


def continuous_binomial_tail(p: float, k: float, n: int) -> float:
    """
    Smooth extension of `binomial_tail` to real k in (0, n + 1).

    Equals k * C(n, k) * int_0^p t^(k-1) (1-t)^(n-k) dt with the log-gamma
    binomial coefficient, i.e. the regularized incomplete beta I_p(k, n-k+1).
    """
    return float(betainc(k, n - k + 1.0, p))


def _check_votes(design: SensingDesign, l_active: int) -> None:
    if design.k_threshold > l_active:
        raise ConstraintViolation(
            f"FC threshold k={design.k_threshold} exceeds active SU count L={l_active}"
        )


def global_pfa(design: SensingDesign, l_active: int) -> float:
    """Fused false-alarm probability of the k-out-of-L rule."""
    _check_votes(design, l_active)
    return binomial_tail(design.pfa_local, design.k_threshold, l_active)


def global_pd(design: SensingDesign, geom: SensingGeometry, l_active: int) -> float:
    """Fused detection probability of the k-out-of-L rule."""
    _check_votes(design, l_active)
    return binomial_tail(local_pd(design.pfa_local, geom), design.k_threshold, l_active)


def min_active_users(
    design: SensingDesign, geom: SensingGeometry, zeta: float, m_total: int
) -> int | None:
    """
    Smallest L in [k, m_total] whose fused detection probability reaches zeta.

    Returns None when the detection floor cannot be met with m_total SUs.
    """
    if not 0.0 < zeta < 1.0:
        raise DomainError(f"zeta must lie in (0, 1), got {zeta}")
    for l_active in range(design.k_threshold, m_total + 1):
        if global_pd(design, geom, l_active) >= zeta:
            return l_active
    return None

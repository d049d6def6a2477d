import math


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a linear power ratio to dB."""
    return 10.0 * math.log10(value)


def dbm_to_watts(value_dbm: float) -> float:
    """Convert absolute power in dBm to watts."""
    return db_to_linear(value_dbm - 30.0)


def noise_power_dbm(density_dbm_hz: float, bandwidth_hz: float) -> float:
    """
    Noise power over a band.

    N0 [dBm] = density [dBm/Hz] + 10 log10(B_w)
    """
    return density_dbm_hz + linear_to_db(bandwidth_hz)

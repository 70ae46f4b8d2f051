"""Link capacities and transfer delays.

Sizes are megabits, rates megabits per second, so every delay comes out
in seconds.  Bandwidth enters in Hz and is converted at this boundary.
"""

from __future__ import annotations

import math


def rsu_capacity_mbps(q: int, bandwidth_hz: float, snr_term: float) -> float:
    """Shannon rate of the car-RSU link: q * B * log2(1 + snr) in Mbps."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if snr_term < 0:
        raise ValueError("SNR term must be >= 0")
    if q not in (0, 1):
        raise ValueError(f"connectivity must be 0 or 1, got {q}")
    return q * bandwidth_hz * math.log2(1.0 + snr_term) / 1e6


def backhaul_delay_s(q: int, total_size_mb: float, backhaul_mbps: float) -> float:
    """Data-center to RSU transfer time: q * size / rate."""
    if backhaul_mbps <= 0:
        raise ValueError("backhaul rate must be positive")
    if total_size_mb < 0:
        raise ValueError("size must be >= 0")
    return q * total_size_mb / backhaul_mbps


def rsu_download_delay_s(
    q: int,
    female_set_mb: float,
    male_set_mb: float,
    rate_mbps: float,
) -> float:
    """RSU to car transfer of both recommended sets: q * (Sf + Sm) / rate."""
    if rate_mbps <= 0:
        raise ValueError("link rate must be positive")
    if female_set_mb < 0 or male_set_mb < 0:
        raise ValueError("set sizes must be >= 0")
    return q * (female_set_mb + male_set_mb) / rate_mbps


def wifi_rate_mbps(q: int, efficiency: float, max_rate_mbps: float, xi: float, n: int) -> float:
    """Per-passenger in-car Wi-Fi share: q * phi * psi_max * xi(n) / n."""
    if n < 1:
        raise ValueError("need at least one connected passenger")
    if not 0.0 < efficiency <= 1.0:
        raise ValueError("efficiency must be in (0, 1]")
    if max_rate_mbps <= 0:
        raise ValueError("max rate must be positive")
    if not 0.0 < xi <= 1.0:
        raise ValueError("contention factor must be in (0, 1]")
    if q not in (0, 1):
        raise ValueError(f"connectivity must be 0 or 1, got {q}")
    return q * efficiency * max_rate_mbps * xi / n


def passenger_delay_s(q: int, total_size_mb: float, share_mbps: float) -> float:
    """Car to passenger transfer time over the Wi-Fi share: q * size / rate."""
    if share_mbps <= 0:
        raise ValueError("Wi-Fi share must be positive")
    if total_size_mb < 0:
        raise ValueError("size must be >= 0")
    return q * total_size_mb / share_mbps

"""Closed-form LoS probability over a statistically described urban area.

The LoS probability of a link is the product, over the buildings expected
along the path, of the probability that each building stays below the
clearance limit of the link. Two variants are provided:

* :func:`p_los_baseline` ignores building width and the clearance zone
  (buildings are zero-thickness screens, blockage is purely optical);
* :func:`p_los` accounts for the mean building width and for the
  first-order (or order-n) Fresnel clearance requirement, which brings the
  carrier frequency into the model.

A clearance limit of zero or below means the building blocks the link with
certainty, so that factor is zero. The width-aware building positions can
land slightly beyond the receiver; the transverse clearance reach is
clamped at zero there so the zone radius never goes negative.
"""

from __future__ import annotations

import math

import numpy as np

from .environment import Environment, building_count, mean_width
from .geometry import FresnelSpec, LinkGeometry

#: Default search ceiling for max_comm_distance [m].
DEFAULT_MAX_SEARCH_DISTANCE = 20_000.0


def _clearance_limits(
    link: LinkGeometry, spec: FresnelSpec, n_buildings: int, width: float
) -> np.ndarray:
    """Clearance limit (allowed building height) at each building position.

    Vectorised form of the allowed-height formula evaluated at the
    width-shifted building positions; entries may be negative.
    """
    d = link.d_rx
    dh = link.delta_h
    idx = np.arange(1, n_buildings + 1, dtype=float)
    d_i = (idx - 0.5) * d / n_buildings + width / 2.0
    ray_height = link.h_tx - d_i * dh / d
    reach = np.maximum(np.minimum(d_i, d - d_i), 0.0)
    fresnel_drop = (
        math.sqrt(spec.order * spec.wavelength * d) * reach / math.hypot(d, dh)
    )
    return ray_height - fresnel_drop


def p_los_baseline(link: LinkGeometry, env: Environment) -> float:
    """Width- and frequency-blind LoS probability (optical direct path).

    Product over the expected buildings of the probability that each stays
    below the straight TX-RX line; 1.0 when no building is expected.
    """
    n = building_count(env, link.d_rx)
    if n == 0:
        return 1.0
    idx = np.arange(1, n + 1, dtype=float)
    line_height = link.h_tx - (idx - 0.5) / n * link.delta_h
    factors = 1.0 - np.exp(-(line_height**2) / (2.0 * env.gamma**2))
    return float(np.prod(factors))


def p_los(
    link: LinkGeometry,
    env: Environment,
    spec: FresnelSpec,
    width: float | None = None,
) -> float:
    """LoS probability with building width and Fresnel clearance.

    Args:
        link: link geometry.
        env: area statistics.
        spec: clearance-zone spec; order 1 is the physically standard
            choice, other orders are accepted for exploration.
        width: optional override of the mean building width [m]; the
            building count still follows from (alpha, beta).

    Returns:
        Probability in [0, 1]; exactly 1.0 when no building is expected.
    """
    n = building_count(env, link.d_rx)
    if n == 0:
        return 1.0
    w = mean_width(env) if width is None else float(width)
    if w < 0.0:
        raise ValueError(f"width must be >= 0, got {width}")
    limits = _clearance_limits(link, spec, n, w)
    limits = np.maximum(limits, 0.0)  # non-positive allowance blocks for sure
    factors = 1.0 - np.exp(-(limits**2) / (2.0 * env.gamma**2))
    return float(np.prod(factors))


def max_comm_distance(
    h_tx: float,
    h_rx: float,
    env: Environment,
    spec: FresnelSpec,
    threshold: float,
    max_distance: float = DEFAULT_MAX_SEARCH_DISTANCE,
    width: float | None = None,
) -> float | None:
    """Largest distance up to which the LoS probability stays above a threshold.

    Scans distance at 1 m pitch for the first downward crossing of the
    threshold, then bisects the bracketing metre down to 0.1 m. Returns the
    last distance known to satisfy the threshold, or None if the
    probability never drops below it within ``max_distance``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")

    def p_at(d: float) -> float:
        return p_los(LinkGeometry(h_tx, h_rx, d), env, spec, width=width)

    step = 1.0
    lo = None
    hi = None
    d = step
    while d <= max_distance:
        if p_at(d) < threshold:
            hi = d
            lo = d - step if d > step else 0.0
            break
        d += step
    if hi is None:
        return None
    # Bisect the bracketing step; lo == 0.0 only if P < threshold at 1 m,
    # which cannot happen (no building is expected at sub-metre range).
    while hi - lo > 0.1:
        mid = 0.5 * (lo + hi)
        if mid <= 0.0 or p_at(mid) >= threshold:
            lo = mid
        else:
            hi = mid
    return lo


def p_los_vs_elevation(
    env: Environment,
    spec: FresnelSpec,
    h_tx: float,
    h_rx: float,
    angles: "list[float] | np.ndarray",
    width: float | None = None,
) -> list[float]:
    """LoS probability as a function of elevation angle [rad].

    Each angle maps to the horizontal distance delta_h / tan(theta) at
    which the probability is evaluated; theta -> pi/2 collapses the
    distance to zero, where the probability is 1 by definition.
    """
    out: list[float] = []
    dh = h_tx - h_rx
    for theta in angles:
        if not 0.0 < theta <= math.pi / 2.0:
            raise ValueError(f"elevation angle must be in (0, pi/2], got {theta}")
        d = dh / math.tan(theta)
        if d <= 0.0:
            out.append(1.0)
            continue
        out.append(p_los(LinkGeometry(h_tx, h_rx, d), env, spec, width=width))
    return out

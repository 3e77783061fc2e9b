"""Glicko-2 rating updates for ranking bot generations.

Implements the standard published rating-period procedure: convert to the
internal scale, accumulate variance and improvement estimates over the
period's games, solve for the new volatility with the Illinois method, then
update deviation and rating.  System constant tau = 0.5, convergence
tolerance 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SCALE = 173.7178
TAU = 0.5
TOLERANCE = 1e-6


@dataclass(frozen=True)
class GlickoRating:
    rating: float = 1500.0
    deviation: float = 350.0
    volatility: float = 0.06

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return (self.rating - z * self.deviation, self.rating + z * self.deviation)


def _g(phi: float) -> float:
    return 1.0 / math.sqrt(1.0 + 3.0 * phi * phi / (math.pi * math.pi))


def _expect(mu: float, mu_j: float, phi_j: float) -> float:
    return 1.0 / (1.0 + math.exp(-_g(phi_j) * (mu - mu_j)))


def glicko2_update(r: GlickoRating,
                   results: list[tuple[GlickoRating, float]],
                   tau: float = TAU) -> GlickoRating:
    """One rating-period update against ``results`` (opponent, score) with
    score 1 win / 0.5 draw / 0 loss.  With no games only the deviation
    grows, per the published no-play rule."""
    mu = (r.rating - 1500.0) / SCALE
    phi = r.deviation / SCALE
    sigma = r.volatility

    if not results:
        phi_star = math.sqrt(phi * phi + sigma * sigma)
        return GlickoRating(r.rating, phi_star * SCALE, sigma)

    opp = [((o.rating - 1500.0) / SCALE, o.deviation / SCALE, s) for o, s in results]
    v_inv = 0.0
    delta_sum = 0.0
    for mu_j, phi_j, score in opp:
        g = _g(phi_j)
        e = _expect(mu, mu_j, phi_j)
        v_inv += g * g * e * (1.0 - e)
        delta_sum += g * (score - e)
    v = 1.0 / v_inv
    delta = v * delta_sum

    # volatility: solve f(x) = 0 by the Illinois variant of regula falsi
    a = math.log(sigma * sigma)
    phi2 = phi * phi

    def f(x: float) -> float:
        ex = math.exp(x)
        return (ex * (delta * delta - phi2 - v - ex) / (2.0 * (phi2 + v + ex) ** 2)
                - (x - a) / (tau * tau))

    A = a
    if delta * delta > phi2 + v:
        B = math.log(delta * delta - phi2 - v)
    else:
        k = 1
        while f(a - k * tau) < 0.0:
            k += 1
        B = a - k * tau
    fa, fb = f(A), f(B)
    while abs(B - A) > TOLERANCE:
        C = A + (A - B) * fa / (fb - fa)
        fc = f(C)
        if fc * fb <= 0.0:
            A, fa = B, fb
        else:
            fa /= 2.0
        B, fb = C, fc
    sigma_new = math.exp(A / 2.0)

    phi_star = math.sqrt(phi2 + sigma_new * sigma_new)
    phi_new = 1.0 / math.sqrt(1.0 / (phi_star * phi_star) + 1.0 / v)
    mu_new = mu + phi_new * phi_new * delta_sum
    return GlickoRating(mu_new * SCALE + 1500.0, phi_new * SCALE, sigma_new)

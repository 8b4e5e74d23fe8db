"""Discretized error tables for the two-cavity qudit layer.

A transmitted cavity state suffers photon loss and dephasing.  On the
d-dimensional angular-section qudit these act as cyclic section shifts
(dephasing, strength ``gamma_phi``) and dual-basis shifts (loss, strength
``gamma_l``).  This module computes the corresponding probability tables
and enumerates the joint two-cavity error ensemble.

Both tables are plain probability distributions:

* ``DephasingTable``: probability of a shift by ``s`` sections, with
  ``s`` ranging over ``(-d/2, d/2]``.  Gaussian-shaped, symmetric in
  ``s``, renormalized so the in-range probabilities sum to one.
* ``LossTable``: probability of losing ``l`` photons, ``l`` in
  ``[0, l_max]``, Poisson-like and sharply peaked near
  ``gamma_l * n_bar``.  The discarded tail mass is recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import erf, gammaln

# Unnormalized tail mass below this threshold is considered negligible
# when auto-selecting the loss truncation order.
TAIL_TOL = 1e-10


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class NoiseParams:
    """Channel rates: loss coefficient, dephasing variance, mean photons."""

    gamma_l: float
    gamma_phi: float
    n_bar: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma_l < 1.0:
            raise ValueError(f"gamma_l must be in [0, 1), got {self.gamma_l}")
        if self.gamma_phi < 0.0:
            raise ValueError(f"gamma_phi must be >= 0, got {self.gamma_phi}")
        if self.n_bar <= 0.0:
            raise ValueError(f"n_bar must be > 0, got {self.n_bar}")


@dataclass(frozen=True)
class DephasingTable:
    """Section-shift probabilities ``p_s`` for ``s`` in ``(-d/2, d/2]``.

    ``support`` holds the shift values in ascending order and ``probs``
    the matching probabilities.  The table is exactly symmetric,
    ``p_s == p_{-s}``, for ``|s| < d/2``.
    """

    d: int
    support: np.ndarray
    probs: np.ndarray

    def prob(self, s: int) -> float:
        """Probability of a shift congruent to ``s`` modulo ``d``."""
        return float(self.by_residue[s % self.d])

    @property
    def by_residue(self) -> np.ndarray:
        """Length-``d`` view indexed by ``s mod d``."""
        out = np.zeros(self.d)
        out[self.support % self.d] = self.probs
        return out


@dataclass(frozen=True)
class LossTable:
    """Photon-loss probabilities ``p_l`` for ``l`` in ``[0, l_max]``.

    ``tail_mass`` is the unnormalized probability discarded beyond
    ``l_max`` before renormalization.
    """

    l_max: int
    probs: np.ndarray
    tail_mass: float


@dataclass(frozen=True)
class ErrorConfig:
    """A joint two-cavity error: section shifts and photon losses."""

    s_a: int
    s_b: int
    l_a: int
    l_b: int


def dephasing_probs(gamma_phi: float, d: int) -> DephasingTable:
    """Build the section-shift table for dephasing variance ``gamma_phi``.

    The shift-by-``s`` probability is the Gaussian phase distribution of
    variance ``gamma_phi`` integrated over the ``s``-th angular section,

        p_s = (1/2) [erf((2s+1)c) - erf((2s-1)c)],  c = pi / (d sqrt(2 gamma_phi)),

    evaluated for ``s`` in ``(-d/2, d/2]`` and renormalized to unit sum.
    The in-range mass is within 1e-10 of one for ``gamma_phi <= 0.1``;
    renormalization keeps the table a valid distribution beyond that.
    ``gamma_phi = 0`` gives the point mass at ``s = 0``.

    Negative shifts are mirrored from the non-negative ones so the
    symmetry ``p_s == p_{-s}`` holds exactly, which keeps downstream
    likelihood ties exact rather than float-fuzzy.
    """
    if not _is_power_of_two(d) or d < 2:
        raise ValueError(f"d must be a power of two >= 2, got {d}")
    if gamma_phi < 0.0:
        raise ValueError(f"gamma_phi must be >= 0, got {gamma_phi}")

    support = np.arange(-d // 2 + 1, d // 2 + 1)
    probs = np.zeros(d)
    if gamma_phi == 0.0:
        probs[support == 0] = 1.0
        return DephasingTable(d=d, support=support, probs=probs)

    c = math.pi / (d * math.sqrt(2.0 * gamma_phi))
    s_half = np.arange(0, d // 2 + 1)
    p_half = 0.5 * (erf((2 * s_half + 1) * c) - erf((2 * s_half - 1) * c))
    for s, p in zip(s_half, p_half):
        probs[support == s] = p
        if 0 < s < d // 2:
            probs[support == -s] = p
    probs /= probs.sum()
    return DephasingTable(d=d, support=support, probs=probs)


def unnormalized_loss_sum(gamma_l: float, n_bar: float) -> float:
    """Closed form of the full (untruncated) loss-weight series."""
    return (1.0 - gamma_l) ** n_bar * math.exp(gamma_l * n_bar)


def _loss_weights(gamma_l: float, n_bar: float, l_max: int) -> np.ndarray:
    # log-space evaluation: weights underflow fast past the peak
    ls = np.arange(l_max + 1)
    if gamma_l == 0.0:
        w = np.zeros(l_max + 1)
        w[0] = 1.0
        return w
    logw = (
        ls * math.log(gamma_l * n_bar)
        - gammaln(ls + 1)
        + n_bar * math.log1p(-gamma_l)
    )
    return np.exp(logw)


def default_l_max(gamma_l: float, n_bar: float, tail_tol: float = TAIL_TOL) -> int:
    """Smallest truncation order whose unnormalized tail is below ``tail_tol``."""
    if gamma_l == 0.0:
        return 0
    total = unnormalized_loss_sum(gamma_l, n_bar)
    partial = 0.0
    mean = gamma_l * n_bar
    l = 0
    while True:
        partial += math.exp(
            l * math.log(mean) - gammaln(l + 1) + n_bar * math.log1p(-gamma_l)
        )
        if total - partial < tail_tol:
            return l
        l += 1
        if l > 10_000:  # tail_tol unreachable only for pathological inputs
            raise RuntimeError("loss table truncation did not converge")


def loss_probs(
    gamma_l: float,
    n_bar: float,
    l_max: int | None = None,
    *,
    tail_tol: float = TAIL_TOL,
    strict: bool = True,
) -> LossTable:
    """Build the photon-loss table, normalized over ``[0, l_max]``.

    The unnormalized weight of losing ``l`` photons is

        w_l = (gamma_l * n_bar)^l / l! * (1 - gamma_l)^n_bar,

    whose full series sums to ``(1-gamma_l)^n_bar * exp(gamma_l n_bar)``.
    With ``l_max=None`` the truncation order is the smallest ``l`` whose
    remaining tail is below ``tail_tol``.  An explicit ``l_max`` that
    leaves more tail mass than ``tail_tol`` is rejected when ``strict``;
    with ``strict=False`` the table is built anyway and the discarded
    mass is reported in ``tail_mass`` (callers that cap ``l_max`` for
    structural reasons use this and surface the diagnostic).
    """
    if not 0.0 <= gamma_l < 1.0:
        raise ValueError(f"gamma_l must be in [0, 1), got {gamma_l}")
    if n_bar <= 0.0:
        raise ValueError(f"n_bar must be > 0, got {n_bar}")
    if l_max is None:
        l_max = default_l_max(gamma_l, n_bar, tail_tol)
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")

    weights = _loss_weights(gamma_l, n_bar, l_max)
    tail = unnormalized_loss_sum(gamma_l, n_bar) - weights.sum()
    tail = max(tail, 0.0)  # guard float cancellation
    if strict and tail >= tail_tol:
        raise ValueError(
            f"l_max={l_max} leaves unnormalized tail mass {tail:.3e} "
            f">= {tail_tol:.1e}; increase l_max or pass strict=False"
        )
    return LossTable(l_max=l_max, probs=weights / weights.sum(), tail_mass=tail)


def error_ensemble(
    deph: DephasingTable, loss: LossTable
) -> Iterator[tuple[ErrorConfig, float]]:
    """Yield every joint error with its product probability.

    Both cavities draw independently from the same tables, so the
    stream has ``d**2 * (l_max+1)**2`` entries and unit total mass.
    The tables must come from the same qudit dimension.
    """
    for s_a, q_a in zip(deph.support, deph.probs):
        for s_b, q_b in zip(deph.support, deph.probs):
            for l_a, p_a in enumerate(loss.probs):
                for l_b, p_b in enumerate(loss.probs):
                    yield (
                        ErrorConfig(int(s_a), int(s_b), l_a, l_b),
                        q_a * q_b * p_a * p_b,
                    )

"""Closed-form received-power echoes and peak extraction.

Each reflector in a beam contributes one sin^2-shaped lobe of spatial
width c * tau_H starting at its range:

    P(R) = A * sin^2(pi * (R - R_start) / (c * tau_H)),  R_start <= R <= R_start + c*tau_H

which is the transmitted sin^2 pulse convolved with a Dirac impulse
response at R_start. The received power of a beam is the superposition
of its lobes; the sensor reports the highest peak, shifted back by half
a pulse length to recover the reflector range.

The peak search evaluates the superposition on a grid of step dR
covering every lobe support and refines the best grid point with a
golden-section search. Profiles whose lobes are pairwise disjoint skip
the search: the peak is exactly the largest lobe amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

GRID_STEPS_PER_LOBE = 100
REFINE_TOLERANCE = 1e-4  # meters
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def xi(r, r_near, r_far):
    """Transmitter/receiver overlap fraction of a bistatic beam pair.

    Zero up to ``r_near``, one from ``r_far`` on, linear in between.
    """
    if not 0.0 <= r_near < r_far:
        raise ValueError("need 0 <= r_near < r_far")
    r = np.asarray(r, dtype=np.float64)
    return np.clip((r - r_near) / (r_far - r_near), 0.0, 1.0)


def pulse(t, p0, tau_h):
    """Transmitted sin^2 pulse: peak ``p0`` at ``tau_h``, support [0, 2 tau_h].

    ``tau_h`` is the half-power pulse width: the pulse reaches p0 / 2 at
    t = tau_h / 2.
    """
    if p0 < 0:
        raise ValueError("pulse peak power must be >= 0")
    t = np.asarray(t, dtype=np.float64)
    inside = (t >= 0.0) & (t <= 2.0 * tau_h)
    arg = np.where(inside, t, 0.0) * (np.pi / (2.0 * tau_h))
    return np.where(inside, p0 * np.sin(arg) ** 2, 0.0)


@dataclass(frozen=True)
class EchoTerm:
    """One reflector's lobe: amplitude, start range, spatial width c*tau_H."""

    amplitude: float
    r_start: float
    width: float

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("lobe amplitude must be >= 0")
        if self.width <= 0:
            raise ValueError("lobe width must be > 0")


def echo_lobe(term: EchoTerm, r):
    """Evaluate one lobe at range(s) ``r``."""
    r = np.asarray(r, dtype=np.float64)
    u = r - term.r_start
    inside = (u >= 0.0) & (u <= term.width)
    arg = np.where(inside, u, 0.0) * (np.pi / term.width)
    return np.where(inside, term.amplitude * np.sin(arg) ** 2, 0.0)


@dataclass(frozen=True)
class EchoProfile:
    """Superposition of echo lobes for one beam."""

    terms: tuple[EchoTerm, ...]

    def __init__(self, terms: Sequence[EchoTerm]):
        object.__setattr__(self, "terms", tuple(terms))

    def evaluate(self, r):
        r = np.asarray(r, dtype=np.float64)
        total = np.zeros_like(r, dtype=np.float64)
        for term in self.terms:
            total = total + echo_lobe(term, r)
        return total


def _superposition(amps: np.ndarray, starts: np.ndarray, width: float, r: np.ndarray) -> np.ndarray:
    """Batched superposition: amps/starts (B, m), r (B, K) -> (B, K)."""
    u = r[:, :, None] - starts[:, None, :]
    inside = (u >= 0.0) & (u <= width)
    lobe = np.where(inside, np.sin(np.where(inside, u, 0.0) * (np.pi / width)) ** 2, 0.0)
    return np.einsum("bkm,bm->bk", lobe, amps)


def _refine_golden(
    amps: np.ndarray, starts: np.ndarray, width: float, center: np.ndarray, dr: float
) -> tuple[np.ndarray, np.ndarray]:
    """Golden-section maximisation on [center - dr, center + dr], batched."""
    a = center - dr
    b = center + dr
    n_iter = int(np.ceil(np.log(REFINE_TOLERANCE / (2.0 * dr)) / np.log(_INVPHI))) if 2.0 * dr > REFINE_TOLERANCE else 0
    for _ in range(max(n_iter, 0)):
        h = b - a
        c = b - _INVPHI * h
        d = a + _INVPHI * h
        values = _superposition(amps, starts, width, np.stack([c, d], axis=1))
        keep_left = values[:, 0] > values[:, 1]
        b = np.where(keep_left, d, b)
        a = np.where(keep_left, a, c)
    mid = 0.5 * (a + b)
    return mid, _superposition(amps, starts, width, mid[:, None])[:, 0]


def batched_max_peak(
    amps: np.ndarray, starts: np.ndarray, width: float, dr: float | None = None, chunk: int = 4096
) -> tuple[np.ndarray, np.ndarray]:
    """Peak power and corrected range for a batch of same-size profiles.

    ``amps`` and ``starts`` are (B, m). Returns (peak (B,), r_star (B,))
    with r_star = argmax - width / 2; for an isolated lobe that is its
    start range exactly.

    Lobes further than one width apart cannot overlap, so each profile
    splits into disjoint clusters: singletons are resolved analytically
    and only genuine overlap clusters run the grid search with
    golden-section refinement. Equal peaks resolve to the smallest range.
    """
    amps = np.asarray(amps, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.float64)
    b, m = amps.shape
    if dr is None:
        dr = width / GRID_STEPS_PER_LOBE

    order = np.argsort(starts, axis=1, kind="stable")
    st = np.take_along_axis(starts, order, axis=1).ravel()
    am = np.take_along_axis(amps, order, axis=1).ravel()
    row = np.repeat(np.arange(b), m)
    new_cluster = np.ones(b * m, dtype=bool)
    if m > 1:
        chains = (st[1:] - st[:-1] < width) & (row[1:] == row[:-1])
        new_cluster[1:] = ~chains
    cl_first = np.flatnonzero(new_cluster)
    cl_size = np.diff(np.append(cl_first, b * m))
    cl_row = row[cl_first]
    n_cl = cl_first.size

    cl_value = np.empty(n_cl, dtype=np.float64)
    cl_pos = np.empty(n_cl, dtype=np.float64)  # absolute range of the cluster maximum
    single = cl_size == 1
    cl_value[single] = am[cl_first[single]]
    cl_pos[single] = st[cl_first[single]] + 0.5 * width

    offsets = np.arange(0.0, width + 0.5 * dr, dr)
    for size in np.unique(cl_size[~single]):
        which = np.flatnonzero(cl_size == size)
        members = cl_first[which][:, None] + np.arange(size)[None, :]
        for c0 in range(0, which.size, chunk):
            rows = slice(c0, c0 + chunk)
            aa = am[members[rows]]
            ss = st[members[rows]]
            cand = (ss[:, :, None] + offsets[None, None, :]).reshape(aa.shape[0], -1)
            values = _superposition(aa, ss, width, cand)
            best = np.argmax(values, axis=1)
            pick = np.arange(aa.shape[0])
            r_best, p_best = cand[pick, best], values[pick, best]
            r_ref, p_ref = _refine_golden(aa, ss, width, r_best, dr)
            use_ref = p_ref > p_best
            cl_value[which[rows]] = np.where(use_ref, p_ref, p_best)
            cl_pos[which[rows]] = np.where(use_ref, r_ref, r_best)

    # Best cluster per profile: highest value, ties to the nearest range.
    sorter = np.lexsort((cl_pos, -cl_value, cl_row))
    best = sorter[np.searchsorted(cl_row[sorter], np.arange(b))]
    return cl_value[best], cl_pos[best] - 0.5 * width


def max_peak(profile: EchoProfile, dr: float | None = None) -> tuple[float, float]:
    """Highest peak of the superposed profile and its corrected range.

    Returns (peak power, r_star) with r_star = argmax - c*tau_H/2; for an
    isolated lobe r_star is exactly the lobe's start range.
    """
    if not profile.terms:
        raise ValueError("profile has no terms")
    widths = {t.width for t in profile.terms}
    if len(widths) != 1:
        raise ValueError("all terms of a profile must share one pulse width")
    width = next(iter(widths))
    amps = np.array([[t.amplitude for t in profile.terms]])
    starts = np.array([[t.r_start for t in profile.terms]])
    peak, r_star = batched_max_peak(amps, starts, width, dr)
    return float(peak[0]), float(r_star[0])

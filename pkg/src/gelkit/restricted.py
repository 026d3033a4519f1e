"""Truncated Flory dynamics on a finite composition space.

Types are integer composition vectors over the initial species: merging is
exact integer bookkeeping, so closure under merge is trivial to test.  A
composition is kept while its conserved-coordinate size (sum of the plus
block) stays within the truncation threshold ``xi``; a merge product beyond
the threshold leaves the resolved system and its data is banked in a gel
accumulator.  The gel also absorbs resolved particles directly, at the
bilinear rate against its own accumulated data.  Together the two loss
channels give every type the constant total loss coefficient of the Flory
equation (sol plus gel data is conserved), which the one-type reduction
shows immediately: u' = -u(u+g), u+g = 1, so the monomer density is e^-t.

As xi grows, resolved densities increase and the truncated gel decreases,
converging to the fixed-point gel of the survival module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rk
from .errors import BudgetExceeded, NegativeRate, ToleranceFailure
from .system import AtomicMeasure, BilinearSystem, GelData, first_moments

_NEG_TOL = 1e-12


def enumerate_types(
    measure: AtomicMeasure, xi: float, max_types: int = 100_000
) -> list[tuple[int, ...]]:
    """All compositions over the measure's species with plus-size <= xi.

    Sorted by (size, composition) so downstream indexing is reproducible.
    Raises BudgetExceeded when the space outgrows ``max_types``.
    """
    sizes = [sum(a.plus) for a in measure.atoms]
    if not sizes:
        return []
    if min(sizes) <= 0.0:
        raise BudgetExceeded(
            "a species with zero conserved size makes the truncated space infinite"
        )
    k = len(sizes)
    found: list[tuple[float, tuple[int, ...]]] = []
    counts = [0] * k

    def grow(species: int, used: float) -> None:
        if species == k:
            if counts != [0] * k:
                found.append((used, tuple(counts)))
                if len(found) > max_types:
                    raise BudgetExceeded(
                        f"more than {max_types} compositions below xi={xi}"
                    )
            return
        c = 0
        while used + c * sizes[species] <= xi + 1e-12:
            counts[species] = c
            grow(species + 1, used + c * sizes[species])
            c += 1
        counts[species] = 0

    grow(0, 0.0)
    found.sort()
    return [comp for _, comp in found]


@dataclass(frozen=True)
class TruncatedState:
    """Resolved densities plus the gel accumulator at one time."""

    t: float
    densities: np.ndarray
    gel: GelData
    phi_sol: float


class TruncatedFlory:
    """Precomputed generator of the truncated dynamics for one (measure, xi)."""

    def __init__(
        self,
        sys: BilinearSystem,
        measure: AtomicMeasure,
        xi: float,
        rate_scale: float = 1.0,
        max_types: int = 100_000,
        max_pairs: int = 2_000_000,
    ):
        if not all(a.pi0 == 1 for a in measure.atoms):
            raise ValueError("truncated dynamics start from an initial measure")
        self.sys = sys
        self.measure = measure
        self.xi = float(xi)
        self.rate_scale = float(rate_scale)
        self.types = enumerate_types(measure, xi, max_types)
        if not self.types or max(sum(a.plus) for a in measure.atoms) > xi + 1e-12:
            raise ValueError(
                f"xi={xi} excludes an initial species; nothing to resolve"
            )
        t_count = len(self.types)
        self.index = {comp: i for i, comp in enumerate(self.types)}
        species = measure.coords  # (k, 1+n+m)
        comp_mat = np.array(self.types, dtype=float)
        self.coords = comp_mat @ species  # type data rows, pi0 included
        self.sizes = self.coords[:, 1 : 1 + sys.n].sum(axis=1)
        self.phi_vec = self.coords[:, 0] + self.sizes
        # initial densities: each species starts as its own singleton type
        dens0 = np.zeros(t_count)
        for a_idx, (atom, w) in enumerate(zip(measure.atoms, measure.weights)):
            comp = tuple(
                1 if j == a_idx else 0 for j in range(len(measure.atoms))
            )
            dens0[self.index[comp]] += w
        self.initial_densities = dens0
        self._build_pairs(max_pairs)
        rate = self.coords[:, 1:]  # coordinates entering the kernel
        self._rate_coords = rate
        self._block = sys.block
        self.m0_rate = first_moments(measure)[1:]
        self.clamped = 0.0

    def _build_pairs(self, max_pairs: int) -> None:
        sys_block = self.sys.block
        rate = self.coords[:, 1:]
        by_comp = self.index
        ix, iy, iz, coeff = [], [], [], []
        t_count = len(self.types)
        comps = [np.array(c) for c in self.types]
        for i in range(t_count):
            for j in range(i, t_count):
                if self.sizes[i] + self.sizes[j] > self.xi + 1e-12:
                    continue
                merged = by_comp.get(tuple(int(v) for v in comps[i] + comps[j]))
                if merged is None:
                    continue  # float-edge case: product fell out of range
                ix.append(i)
                iy.append(j)
                iz.append(merged)
                coeff.append(0.5 if i == j else 1.0)
                if len(ix) > max_pairs:
                    raise BudgetExceeded(
                        f"more than {max_pairs} in-range pairs at xi={self.xi}"
                    )
        self._ix = np.array(ix, dtype=np.intp)
        self._iy = np.array(iy, dtype=np.intp)
        self._iz = np.array(iz, dtype=np.intp)
        kv = np.einsum(
            "ij,ij->i", rate[self._ix] @ sys_block, rate[self._iy]
        )
        low = float(kv.min()) if kv.size else 0.0
        if low < 0.0:
            scale = max(1.0, float(np.abs(kv).max()))
            if low < -1e-9 * scale:
                raise NegativeRate(
                    f"merge rate {low} < 0 on the composition space"
                )
            kv = np.clip(kv, 0.0, None)
        self._pair_rate = np.array(coeff) * kv

    # state vector layout: [densities (T), gel (1+n+m)]
    def _rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        t_count = len(self.types)
        n_vec = y[:t_count]
        gel = y[t_count:]
        rate_c = self._rate_coords
        a = self._block
        m_tr = n_vec @ rate_c
        s_sol = rate_c @ (a @ m_tr)
        s_gel = rate_c @ (a @ gel[1:])
        pair_flux = self._pair_rate * n_vec[self._ix] * n_vec[self._iy]
        gain = np.bincount(self._iz, weights=pair_flux, minlength=t_count)
        dn = gain - n_vec * (s_sol + s_gel)
        # gel intake: boundary crossings (total pair flux minus what stayed
        # resolved) plus direct absorption of resolved particles
        total_flux = (n_vec * s_sol) @ self.coords
        kept_flux = pair_flux @ self.coords[self._iz]
        absorb = (n_vec * s_gel) @ self.coords
        dgel = total_flux - kept_flux + absorb
        return self.rate_scale * np.concatenate((dn, dgel))

    def _accept(self, t: float, y: np.ndarray):
        t_count = len(self.types)
        n_vec = y[:t_count]
        low = float(n_vec.min()) if t_count else 0.0
        if low >= 0.0:
            return None
        scale = max(1.0, float(n_vec.max()))
        if low < -1e-6 * scale:
            raise ToleranceFailure(
                f"density {low} fell far below zero at t={t}"
            )
        self.clamped += float(-n_vec[n_vec < 0.0].sum())
        y = y.copy()
        y[:t_count] = np.clip(n_vec, 0.0, None)
        return y

    def _state(self, t: float, y: np.ndarray) -> TruncatedState:
        t_count = len(self.types)
        dens = y[:t_count].copy()
        gel = GelData(np.clip(y[t_count:], 0.0, None))
        return TruncatedState(
            t=t, densities=dens, gel=gel, phi_sol=float(dens @ self.phi_vec)
        )

    def integrate(
        self,
        t_end: float,
        outputs=None,
        rtol: float = 1e-10,
        atol: float = 1e-14,
    ) -> list[TruncatedState]:
        """Trajectory from t=0; returns states at ``outputs`` (default: only
        ``t_end``)."""
        y0 = np.concatenate(
            (self.initial_densities, np.zeros(1 + self.sys.n + self.sys.m))
        )
        out = sorted({float(v) for v in (outputs or [])} | {float(t_end)})
        traj = _rk.integrate(
            self._rhs,
            0.0,
            y0,
            t_end,
            rtol=rtol,
            atol=atol,
            outputs=out,
            accept_cb=self._accept,
            max_steps=200_000,
        )
        return [self._state(t, y) for t, y in zip(traj.ts, traj.ys)]

    def conserved_total(self, state: TruncatedState) -> float:
        """phi of everything, resolved or not; constant in time."""
        g = state.gel.g
        return state.phi_sol + float(g[0] + g[1 : 1 + self.sys.n].sum())

    def density_map(self, state: TruncatedState) -> dict[tuple[int, ...], float]:
        return {
            comp: float(state.densities[i]) for comp, i in self.index.items()
        }


def integrate_truncated(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    xi: float,
    t_end: float,
    rate_scale: float = 1.0,
    outputs=None,
) -> list[TruncatedState]:
    """One-call convenience wrapper around :class:`TruncatedFlory`."""
    return TruncatedFlory(sys, measure, xi, rate_scale).integrate(
        t_end, outputs=outputs
    )

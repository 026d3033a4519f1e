"""Finite-N pair-merge simulator, exact in law, with sub-linear event cost.

Particles are rows of a coordinate array; an unordered pair merges at rate
``rate_scale * kbar(x, y) / n_scale``.  Because the sign-odd block makes
``kbar`` non-factorizable, proposals are drawn from the entrywise-absolute
envelope ``khat(x, y) = sum |a_kl| |pi_k(x)| |pi_l(y)| >= kbar`` (which does
factorize) and thinned by the exact ratio.  Each rate coordinate keeps a
Fenwick tree over absolute values, so a proposal costs O((n+m) log P).

Rejected proposals advance time only; that, plus memoryless redraws at
checkpoints, keeps the law exact.  A per-particle jump hook (for internal
evolution that preserves the conserved block) rides on the same clock via
its own envelope channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    HookViolatesConservation,
    NegativeRate,
    RateUnderflow,
    SchemaError,
    ToleranceFailure,
)
from .fenwick import FenwickTree
from .system import AtomicMeasure, BilinearSystem, GelData, sample_atoms

_BUFFER = 8192
_RESYNC_DEFAULT = 1 << 20
_MAGIC = b"GELK1"


def child_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Derived seed for replica fan-out: (seed, index...) -> child stream.

    Distinct keys give independent streams; the derivation is stable across
    runs and platforms.
    """
    return np.random.SeedSequence((int(seed), *map(int, key)))


@dataclass(frozen=True)
class Snapshot:
    """Observables of the particle population at one time."""

    t: float
    n_particles: int
    xi: int
    first: np.ndarray  # per-capita sums of all coordinates
    q: np.ndarray  # per-capita conserved second moments, all particles
    z: np.ndarray  # per-capita <pi0 * (pi0, plus)>, all particles
    q_sol: np.ndarray  # as q, excluding the largest particle
    z_sol: np.ndarray
    gel_largest: GelData  # largest particle's data / n_scale
    gel_threshold: GelData  # summed data of particles with pi0 >= xi, / n_scale
    size_values: np.ndarray  # distinct pi0 values among particles
    size_counts: np.ndarray


@dataclass(frozen=True)
class StepRecord:
    """Outcome of one proposed event."""

    t: float
    kind: str  # "merge" or "hook"
    p: int
    q: int
    accepted: bool


class ParticleSystem:
    """Mutable simulation state; one instance per thread."""

    def __init__(
        self,
        sys: BilinearSystem,
        coords: np.ndarray,
        n_scale: float,
        rng: np.random.Generator,
        rate_scale: float = 1.0,
        t: float = 0.0,
        resync_interval: int = _RESYNC_DEFAULT,
    ):
        coords = np.array(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 1 + sys.n + sys.m:
            raise ValueError("coords must be (P, 1+n+m)")
        if n_scale <= 0:
            raise ValueError("n_scale must be positive")
        self.sys = sys
        self.coords = coords
        self.n_scale = float(n_scale)
        self.rate_scale = float(rate_scale)
        self.t = float(t)
        self.rng = rng
        self.resync_interval = int(resync_interval)
        self.capacity = coords.shape[0]
        self.alive = np.ones(self.capacity, dtype=bool)
        self.n_particles = self.capacity
        self.events = 0
        self.merges = 0
        d = sys.dim
        self._abs = np.abs(coords[:, 1:])
        self.trees = [
            FenwickTree(self._abs[:, k].tolist()) for k in range(d)
        ]
        self.s_hat = self._abs.sum(axis=0)
        self._a_abs = sys.block_abs
        # nonzero envelope entries, upper triangle doubled into full weight
        kk, ll = np.nonzero(self._a_abs)
        self._env_k = kk
        self._env_l = ll
        self._env_a = self._a_abs[kk, ll]
        self._fast_exact = sys.m == 0  # envelope equals the kernel
        self._u_buf = np.empty(0)
        self._u_pos = 0
        self._e_buf = np.empty(0)
        self._e_pos = 0
        self._hook = None
        self._hook_bound = 0.0
        self._hook_rate_fn = None
        self._phi_tree: FenwickTree | None = None

    # -- randomness ---------------------------------------------------

    def _uniform(self) -> float:
        if self._u_pos >= self._u_buf.size:
            self._u_buf = self.rng.random(_BUFFER)
            self._u_pos = 0
        u = self._u_buf[self._u_pos]
        self._u_pos += 1
        return float(u)

    def _exponential(self) -> float:
        if self._e_pos >= self._e_buf.size:
            self._e_buf = self.rng.standard_exponential(_BUFFER)
            self._e_pos = 0
        e = self._e_buf[self._e_pos]
        self._e_pos += 1
        return float(e)

    # -- rates ---------------------------------------------------------

    def merge_envelope_rate(self) -> float:
        s = self.s_hat
        return (
            0.5
            * self.rate_scale
            / self.n_scale
            * float(self._env_a @ (s[self._env_k] * s[self._env_l]))
        )

    def hook_envelope_rate(self) -> float:
        if self._hook is None:
            return 0.0
        return self._hook_bound * self._phi_tree.total

    def total_envelope_rate(self) -> float:
        return self.merge_envelope_rate() + self.hook_envelope_rate()

    # -- hook ----------------------------------------------------------

    def set_hook(self, hook, rate_bound: float, rate_fn=None) -> None:
        """Enable per-particle jumps at rate <= rate_bound * phi(x).

        ``hook(t, row)`` returns the particle's new coordinate row; it must
        leave coordinates 0..n (absorbed count and conserved block) exactly
        unchanged.  ``rate_fn(row)``, if given, is the actual jump rate and
        is thinned against the bound.
        """
        if rate_bound < 0:
            raise ValueError("rate bound must be nonnegative")
        self._hook = hook
        self._hook_bound = float(rate_bound)
        self._hook_rate_fn = rate_fn
        if hook is not None and self._phi_tree is None:
            phi = self.coords[:, 0] + self.coords[:, 1 : 1 + self.sys.n].sum(
                axis=1
            )
            phi[~self.alive] = 0.0
            self._phi_tree = FenwickTree(phi.tolist())

    # -- dynamics ------------------------------------------------------

    def _pick_coordinate_pair(self) -> tuple[int, int]:
        s = self.s_hat
        weights = self._env_a * s[self._env_k] * s[self._env_l]
        total = float(weights.sum())
        target = self._uniform() * total
        acc = 0.0
        for idx in range(weights.size):
            acc += float(weights[idx])
            if target < acc:
                return int(self._env_k[idx]), int(self._env_l[idx])
        return int(self._env_k[-1]), int(self._env_l[-1])

    def _apply_merge(self, p: int, q: int) -> None:
        coords = self.coords
        coords[p] += coords[q]
        coords[q] = 0.0
        new_abs = np.abs(coords[p, 1:])
        old_p = self._abs[p].copy()
        old_q = self._abs[q].copy()
        self._abs[p] = new_abs
        self._abs[q] = 0.0
        for k, tree in enumerate(self.trees):
            tree.set_value(p, float(new_abs[k]))
            tree.set_value(q, 0.0)
        self.s_hat += new_abs - old_p - old_q
        if self._phi_tree is not None:
            n = self.sys.n
            self._phi_tree.set_value(
                p, float(coords[p, 0] + coords[p, 1 : 1 + n].sum())
            )
            self._phi_tree.set_value(q, 0.0)
        self.alive[q] = False
        self.n_particles -= 1
        self.merges += 1

    def _apply_hook(self, p: int) -> bool:
        row = self.coords[p]
        if self._hook_rate_fn is not None:
            phi = float(row[0] + row[1 : 1 + self.sys.n].sum())
            actual = float(self._hook_rate_fn(row))
            if actual > self._hook_bound * phi * (1.0 + 1e-12):
                raise HookViolatesConservation(
                    f"hook rate {actual} exceeds bound {self._hook_bound}*phi"
                )
            if self._uniform() * self._hook_bound * phi >= actual:
                return False
        new_row = np.asarray(self._hook(self.t, row.copy()), dtype=float)
        if new_row.shape != row.shape:
            raise HookViolatesConservation("hook changed the coordinate layout")
        n = self.sys.n
        if not np.array_equal(new_row[: 1 + n], row[: 1 + n]):
            raise HookViolatesConservation(
                "hook modified the absorbed count or a conserved coordinate"
            )
        self.coords[p] = new_row
        new_abs = np.abs(new_row[1:])
        delta = new_abs - self._abs[p]
        self._abs[p] = new_abs
        for k in range(self.sys.n, self.sys.dim):
            if delta[k] != 0.0:
                self.trees[k].increment(p, float(delta[k]))
        self.s_hat += delta
        return True

    def _resync(self) -> None:
        self._abs[~self.alive] = 0.0
        fresh = self._abs.copy()
        fresh_sums = fresh.sum(axis=0)
        drift = np.abs(fresh_sums - self.s_hat)
        scale = np.maximum(1.0, fresh_sums)
        if np.any(drift > 1e-6 * scale):
            raise ToleranceFailure(
                f"coordinate-sum drift {drift.max():.3e} beyond 1e-6; "
                "float accumulation is unreliable at this scale"
            )
        self.s_hat = fresh_sums
        for k, tree in enumerate(self.trees):
            tree.rebuild(fresh[:, k].tolist())
        if self._phi_tree is not None:
            phi = self.coords[:, 0] + self.coords[:, 1 : 1 + self.sys.n].sum(
                axis=1
            )
            phi[~self.alive] = 0.0
            self._phi_tree.rebuild(phi.tolist())

    def step(self) -> StepRecord:
        """Advance by exactly one proposed event (merge or hook attempt)."""
        if self.n_particles < 2 and self._hook is None:
            raise RateUnderflow("fewer than two particles; nothing can happen")
        merge_rate = self.merge_envelope_rate()
        hook_rate = self.hook_envelope_rate()
        total = merge_rate + hook_rate
        if total <= 0.0 or not np.isfinite(total):
            raise RateUnderflow(f"envelope rate {total}; absorbing state")
        self.t += self._exponential() / total
        self.events += 1
        if self.events % self.resync_interval == 0:
            self._resync()
        if hook_rate > 0.0 and self._uniform() * total >= merge_rate:
            target = self._uniform() * self._phi_tree.total
            p = self._phi_tree.find(target)
            accepted = self._apply_hook(p)
            return StepRecord(self.t, "hook", p, p, accepted)
        k, l = (0, 0) if self._env_a.size == 1 else self._pick_coordinate_pair()
        tree_k, tree_l = self.trees[k], self.trees[l]
        p = tree_k.find(self._uniform() * tree_k.total)
        q = tree_l.find(self._uniform() * tree_l.total)
        if p == q or not (self.alive[p] and self.alive[q]):
            return StepRecord(self.t, "merge", p, q, False)
        if not self._fast_exact:
            rp = self.coords[p, 1:]
            rq = self.coords[q, 1:]
            kbar = float(rp @ self.sys.block @ rq)
            khat = float(self._abs[p] @ self._a_abs @ self._abs[q])
            if kbar <= 0.0:
                if khat > 0.0 and kbar < -1e-9 * khat:
                    raise NegativeRate(
                        f"negative merge rate {kbar} encountered in simulation"
                    )
                return StepRecord(self.t, "merge", p, q, False)
            if self._uniform() * khat >= kbar:
                return StepRecord(self.t, "merge", p, q, False)
        self._apply_merge(p, q)
        return StepRecord(self.t, "merge", p, q, True)

    # -- observables ----------------------------------------------------

    def snapshot(self, xi: int | None = None) -> Snapshot:
        if xi is None:
            xi = int(np.ceil(np.sqrt(self.n_scale)))
        sys = self.sys
        n = sys.n
        rows = self.coords[self.alive]
        inv = 1.0 / self.n_scale
        first = rows.sum(axis=0) * inv
        plus = rows[:, 1 : 1 + n]
        q_all = (plus.T @ plus) * inv
        pi0 = rows[:, 0]
        z_all = np.concatenate(
            ([float(pi0 @ pi0)], pi0 @ plus)
        ) * inv
        # largest particle: most absorbed, then largest phi, then first index
        if rows.shape[0]:
            top = np.flatnonzero(pi0 == pi0.max())
            if top.size > 1:
                phi = pi0[top] + plus[top].sum(axis=1)
                top = top[phi == phi.max()]
            big = int(top[0])
            big_row = rows[big]
            keep = np.ones(rows.shape[0], dtype=bool)
            keep[big] = False
            sol = rows[keep]
        else:
            big_row = np.zeros(1 + sys.dim)
            sol = rows
        plus_sol = sol[:, 1 : 1 + n]
        q_sol = (plus_sol.T @ plus_sol) * inv
        pi0_sol = sol[:, 0]
        z_sol = np.concatenate(
            ([float(pi0_sol @ pi0_sol)], pi0_sol @ plus_sol)
        ) * inv
        heavy = rows[pi0 >= xi]
        gel_threshold = GelData(heavy.sum(axis=0) * inv if heavy.size else
                                np.zeros(1 + sys.dim))
        values, counts = np.unique(pi0.astype(np.int64), return_counts=True)
        return Snapshot(
            t=self.t,
            n_particles=int(rows.shape[0]),
            xi=int(xi),
            first=first,
            q=q_all,
            z=z_all,
            q_sol=q_sol,
            z_sol=z_sol,
            gel_largest=GelData(big_row * inv),
            gel_threshold=gel_threshold,
            size_values=values,
            size_counts=counts,
        )

    def run(self, checkpoint_times, xi: int | None = None) -> list[Snapshot]:
        """Event loop with snapshots at the given times.

        Checkpoints are crossed by discarding the pending waiting time and
        redrawing after the snapshot; exponential memorylessness makes that
        exact.  An absorbing state (nothing left to happen) freezes the
        remaining checkpoints.
        """
        times = sorted(float(v) for v in checkpoint_times)
        if times and times[0] < self.t - 1e-12:
            raise ValueError("checkpoint before current time")
        out: list[Snapshot] = []
        for target in times:
            frozen = False
            while True:
                if frozen:
                    break
                can_merge = self.n_particles >= 2
                merge_rate = self.merge_envelope_rate() if can_merge else 0.0
                hook_rate = self.hook_envelope_rate()
                total = merge_rate + hook_rate
                if total <= 0.0:
                    frozen = True
                    break
                wait = self._exponential() / total
                if self.t + wait > target:
                    break
                self.t += wait
                self.events += 1
                if self.events % self.resync_interval == 0:
                    self._resync()
                if hook_rate > 0.0 and self._uniform() * total >= merge_rate:
                    p = self._phi_tree.find(self._uniform() * self._phi_tree.total)
                    self._apply_hook(p)
                    continue
                k, l = (
                    (0, 0)
                    if self._env_a.size == 1
                    else self._pick_coordinate_pair()
                )
                tree_k, tree_l = self.trees[k], self.trees[l]
                p = tree_k.find(self._uniform() * tree_k.total)
                q = tree_l.find(self._uniform() * tree_l.total)
                if p == q or not (self.alive[p] and self.alive[q]):
                    continue
                if not self._fast_exact:
                    rp = self.coords[p, 1:]
                    rq = self.coords[q, 1:]
                    kbar = float(rp @ self.sys.block @ rq)
                    khat = float(self._abs[p] @ self._a_abs @ self._abs[q])
                    if kbar <= 0.0:
                        if khat > 0.0 and kbar < -1e-9 * khat:
                            raise NegativeRate(
                                f"negative merge rate {kbar} in simulation"
                            )
                        continue
                    if self._uniform() * khat >= kbar:
                        continue
                self._apply_merge(p, q)
            self.t = target
            out.append(self.snapshot(xi))
        return out

    # -- persistence -----------------------------------------------------

    def dump_state(self, path) -> None:
        """Write the particle table in the documented binary layout."""
        rows = self.coords[self.alive]
        header = _MAGIC + struct.pack(
            "<BII Q d d Q",
            1,
            self.sys.n,
            self.sys.m,
            int(self.n_scale),
            self.t,
            self.rate_scale,
            rows.shape[0],
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rows.astype("<f8").tobytes())


def load_state(
    sys: BilinearSystem, path, seed: int | np.random.SeedSequence
) -> ParticleSystem:
    """Rebuild a ParticleSystem from a dump; randomness restarts from seed."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != _MAGIC:
        raise SchemaError(str(path), "not a particle dump (bad magic)")
    version, n, m, n_scale, t, rate_scale, count = struct.unpack(
        "<BII Q d d Q", blob[5 : 5 + struct.calcsize("<BII Q d d Q")]
    )
    if version != 1:
        raise SchemaError(str(path), f"unsupported dump version {version}")
    if (n, m) != (sys.n, sys.m):
        raise SchemaError(
            str(path), f"dump is for n={n}, m={m}; system has {sys.n}, {sys.m}"
        )
    off = 5 + struct.calcsize("<BII Q d d Q")
    width = 1 + n + m
    coords = np.frombuffer(
        blob, dtype="<f8", count=count * width, offset=off
    ).reshape(count, width)
    rng = np.random.default_rng(seed)
    return ParticleSystem(
        sys, coords, n_scale, rng, rate_scale=rate_scale, t=t
    )


def init_poisson(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    n_scale: float,
    seed: int | np.random.SeedSequence,
    rate_scale: float = 1.0,
) -> ParticleSystem:
    """Poissonized start: particle count ~ Poisson(n_scale * total mass),
    data i.i.d. from the normalized measure."""
    if n_scale <= 0:
        raise ValueError("n_scale must be positive")
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(n_scale * measure.total_mass))
    if count == 0:
        coords = np.zeros((0, 1 + sys.n + sys.m))
    else:
        coords = sample_atoms(measure, count, rng)
    return ParticleSystem(sys, coords, n_scale, rng, rate_scale=rate_scale)


class DirectPairSimulator:
    """Quadratic-cost reference: explicit per-pair rates, no envelope.

    Statistically identical to ParticleSystem; used to validate the
    thinning construction on small populations.
    """

    def __init__(
        self,
        sys: BilinearSystem,
        coords: np.ndarray,
        n_scale: float,
        rng: np.random.Generator,
        rate_scale: float = 1.0,
    ):
        self.sys = sys
        self.coords = np.array(coords, dtype=float)
        self.n_scale = float(n_scale)
        self.rate_scale = float(rate_scale)
        self.rng = rng
        self.t = 0.0
        self.alive = np.ones(self.coords.shape[0], dtype=bool)
        self.n_particles = self.coords.shape[0]

    def _pair_rates(self):
        rows = np.flatnonzero(self.alive)
        pts = self.coords[rows][:, 1:]
        mat = pts @ self.sys.block @ pts.T
        np.clip(mat, 0.0, None, out=mat)
        iu = np.triu_indices(rows.size, k=1)
        return rows, mat[iu] * (self.rate_scale / self.n_scale), iu

    def run(self, checkpoint_times, xi: int | None = None) -> list[Snapshot]:
        times = sorted(float(v) for v in checkpoint_times)
        out = []
        for target in times:
            while True:
                if self.n_particles < 2:
                    break
                rows, rates, iu = self._pair_rates()
                total = float(rates.sum())
                if total <= 0.0:
                    break
                wait = self.rng.standard_exponential() / total
                if self.t + wait > target:
                    break
                self.t += wait
                pick = self.rng.random() * total
                idx = int(np.searchsorted(np.cumsum(rates), pick, side="right"))
                idx = min(idx, rates.size - 1)
                p = int(rows[iu[0][idx]])
                q = int(rows[iu[1][idx]])
                self.coords[p] += self.coords[q]
                self.coords[q] = 0.0
                self.alive[q] = False
                self.n_particles -= 1
            self.t = target
            out.append(self._snapshot(xi))
        return out

    def _snapshot(self, xi: int | None) -> Snapshot:
        proxy = ParticleSystem(
            self.sys,
            self.coords[self.alive],
            self.n_scale,
            np.random.default_rng(0),
            rate_scale=self.rate_scale,
            t=self.t,
        )
        return proxy.snapshot(xi)

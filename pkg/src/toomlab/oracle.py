"""Exact finite-state computations on tiny tori.

With N = prod(dims) sites (hard cap 24), a probability distribution over all
2^N spin configurations is a dense vector indexed by the same bit encoding
the lattice engine packs states with (bit i = spin +1 at flat site i).  One
noisy synchronous update maps such a vector through the product kernel

    out(xi) = sum_omega dist(omega) * prod_x p(xi_x | omega),

which for each source state is a rank-one product over target bits.  The
apply expands those product measures chunk-wise (skipping zero-weight
sources, so point masses cost O(2^N * N)) and accumulates them with dense
matmuls; a general dense vector costs O(4^N) arithmetic, vectorized, which
keeps N <= 16 under a minute and the N <= 12 workloads used for
cross-validation essentially instant.

On top of the kernel: stationary distributions by verified power iteration
(with a Cesaro fallback for periodic edge cases), total-variation distances,
expectations and the flip seminorm of cylinder functions, the dual action on
observables, product-measure basin membership, and the light-cone check that
window marginals on two torus sizes agree exactly until influence wraps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .engine import LatticeState, NoiseModel, TorusStepper, kernel_plus, influence_radius
from .errors import NumericalError, ResourceLimitError
from .rules import RuleSpec

logger = logging.getLogger(__name__)

MAX_EXACT_SITES = 24
MAX_WINDOW = 20

Sitelike = Union[int, Sequence[int]]


def _site_tuple(site: Sitelike, dimension: int) -> tuple[int, ...]:
    if isinstance(site, int):
        site = (site,)
    site = tuple(int(c) for c in site)
    if len(site) != dimension:
        raise ValueError(f"site {site} does not match dimension {dimension}")
    return site


def _flat_index(site: tuple[int, ...], dims: tuple[int, ...]) -> int:
    return int(np.ravel_multi_index(tuple(c % L for c, L in zip(site, dims)), dims))


@dataclass(frozen=True)
class StateDistribution:
    """Probability vector over all 2^N configurations of a small torus."""

    dims: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(L) for L in self.dims)
        object.__setattr__(self, "dims", dims)
        n = int(np.prod(dims))
        if n > MAX_EXACT_SITES:
            raise ResourceLimitError(
                f"{n} sites exceeds the exact-computation cap {MAX_EXACT_SITES}"
            )
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (1 << n,):
            raise ValueError(f"need 2^{n} probabilities, got shape {probs.shape}")
        if probs.min() < -1e-12:
            raise ValueError("negative probability entry")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))


def point_mass(dims: Sequence[int], state: Union[LatticeState, int]) -> StateDistribution:
    dims = tuple(int(L) for L in dims)
    n = int(np.prod(dims))
    code = state.to_int() if isinstance(state, LatticeState) else int(state)
    probs = np.zeros(1 << n)
    probs[code] = 1.0
    return StateDistribution(dims=dims, probs=probs)


def delta_plus(dims: Sequence[int]) -> StateDistribution:
    return point_mass(dims, LatticeState.all_plus(dims))


def delta_minus(dims: Sequence[int]) -> StateDistribution:
    return point_mass(dims, 0)


def uniform_distribution(dims: Sequence[int]) -> StateDistribution:
    dims = tuple(int(L) for L in dims)
    n = int(np.prod(dims))
    return StateDistribution(dims=dims, probs=np.full(1 << n, 1.0 / (1 << n)))


class ExactKernel:
    """Dense action of one noisy synchronous update on state vectors."""

    def __init__(self, rule: RuleSpec, noise: NoiseModel, dims: Sequence[int]):
        self.stepper = TorusStepper(rule, dims)
        self.dims = self.stepper.dims
        self.n_sites = self.stepper.n_sites
        if self.n_sites > MAX_EXACT_SITES:
            raise ResourceLimitError(
                f"{self.n_sites} sites exceeds the exact-computation cap {MAX_EXACT_SITES}"
            )
        self.kern = kernel_plus(noise, rule)
        self.n_states = 1 << self.n_sites
        self._dense: Optional[np.ndarray] = None

    def plus_probs(self, states: np.ndarray) -> np.ndarray:
        """(len(states), N) matrix of per-target-site +1 probabilities."""
        shifts = np.arange(self.n_sites, dtype=np.uint64)
        bits = ((states[:, None] >> shifts) & 1).astype(np.uint8)
        return self.kern[self.stepper.local_index(bits)]

    def dense_matrix(self) -> Optional[np.ndarray]:
        """Full (source, target) transition matrix, cached for N <= 11 sites."""
        if self._dense is None and self.n_states <= 2048:
            states = np.arange(self.n_states, dtype=np.uint64)
            self._dense = _expand_products(self.plus_probs(states))
        return self._dense

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Linear kernel application to any signed vector (no normalization)."""
        vec = np.asarray(vec, dtype=np.float64)
        dense = self.dense_matrix()
        if dense is not None:
            return vec @ dense
        out = np.zeros(self.n_states)
        nz = np.flatnonzero(vec)
        if nz.size == 0:
            return out
        chunk = max(1, min(nz.size, (1 << 22) // self.n_states))
        for a in range(0, nz.size, chunk):
            idx = nz[a : a + chunk].astype(np.uint64)
            probs = self.plus_probs(idx)
            expanded = _expand_products(probs)
            out += vec[nz[a : a + chunk]] @ expanded
        return out


def _expand_products(probs: np.ndarray) -> np.ndarray:
    """Rows (p_1..p_n) of per-bit probabilities -> rows of 2^n product weights.

    Output column j holds prod_i (p_i if bit i of j else 1-p_i): the product
    measure over n bits, little-endian.
    """
    b, n = probs.shape
    out = np.empty((b, 1 << n))
    out[:, 0] = 1.0
    for x in range(n):
        w = 1 << x
        p = probs[:, x : x + 1]
        np.multiply(out[:, :w], p, out=out[:, w : 2 * w])
        out[:, :w] *= 1.0 - p
    return out


def transfer_apply(
    dist: StateDistribution, rule: RuleSpec, noise: NoiseModel,
    kernel: Optional[ExactKernel] = None,
) -> StateDistribution:
    """One exact noisy update of a distribution, renormalized (drift logged)."""
    k = kernel or ExactKernel(rule, noise, dist.dims)
    out = k.apply(dist.probs)
    total = float(out.sum())
    drift = total - 1.0
    if abs(drift) > 1e-9:
        raise NumericalError(f"transfer application lost mass: drift {drift}")
    if drift != 0.0:
        logger.debug("transfer mass drift %.3e renormalized", drift)
        out /= total
    return StateDistribution(dims=dist.dims, probs=out)


def tv_distance(d1: StateDistribution, d2: StateDistribution) -> float:
    """Total variation distance, half the L1 difference."""
    if d1.dims != d2.dims:
        raise ValueError(f"dims mismatch: {d1.dims} vs {d2.dims}")
    return 0.5 * float(np.abs(d1.probs - d2.probs).sum())


def _strictly_positive(kernel: ExactKernel) -> bool:
    return bool((kernel.kern > 0.0).all() and (kernel.kern < 1.0).all())


def _cycle_average(kernel: ExactKernel, start: np.ndarray, max_iter: int) -> np.ndarray:
    """Exact invariant vector of a deterministic kernel by cycle detection.

    Pushforwards of a deterministic map repeat exactly in float arithmetic;
    the average over one full cycle is invariant, which is what a Cesaro
    limit would converge to only at rate 1/n.
    """
    # keep the stored history within ~128 MB whatever the state-space size
    cap = min(max_iter, 10**5, max(64, (1 << 24) // max(1, len(start))))
    seen: dict[bytes, int] = {}
    trail: list[np.ndarray] = []
    cur = start
    for _ in range(cap):
        sig = cur.tobytes()
        if sig in seen:
            cycle = trail[seen[sig] :]
            avg = np.mean(cycle, axis=0)
            return avg / avg.sum()
        seen[sig] = len(trail)
        trail.append(cur)
        cur = kernel.apply(cur)
    raise NumericalError("deterministic pushforward did not cycle within the cap")


def stationary_distribution(
    rule: RuleSpec,
    noise: NoiseModel,
    dims: Sequence[int],
    tol: float = 1e-10,
    max_iter: int = 10**6,
    cesaro_after: int = 10**4,
    allow_absorbing: bool = False,
    start: Optional[StateDistribution] = None,
) -> StateDistribution:
    """Fixed point of the transfer operator by verified power iteration.

    Requires a strictly positive kernel (every transition possible) unless
    the caller opts into absorbing/deterministic chains.  When successive
    iterates stop making progress past `cesaro_after` steps, running Cesaro
    averages of the iterates are tested as candidates alongside; a fully
    deterministic kernel (the eps = 0 edge case) is handled by exact cycle
    averaging instead.  Whatever the route, the returned vector pi passed
    the verification TV(T pi, pi) < tol.
    """
    kernel = ExactKernel(rule, noise, dims)
    if not allow_absorbing and not _strictly_positive(kernel):
        raise ValueError(
            "noise kernel has zero-probability transitions; pass "
            "allow_absorbing=True to iterate anyway"
        )
    cur = (start or uniform_distribution(kernel.dims)).probs.copy()

    deterministic = bool(((kernel.kern == 0.0) | (kernel.kern == 1.0)).all())
    if deterministic:
        pi = _cycle_average(kernel, cur, max_iter)
        t_pi = kernel.apply(pi)
        resid = 0.5 * float(np.abs(t_pi / t_pi.sum() - pi).sum())
        if resid >= tol:
            raise NumericalError(f"cycle average residual {resid:.3e} above tol")
        return StateDistribution(dims=kernel.dims, probs=pi)

    check_every = 8
    window = 500
    tv_at_window = math.inf
    stalled = False
    avg = None
    avg_count = 0
    last_tv = math.inf
    for it in range(1, max_iter + 1):
        nxt = kernel.apply(cur)
        nxt /= nxt.sum()
        if it % check_every == 0 or it < 64:
            last_tv = 0.5 * float(np.abs(nxt - cur).sum())
            if last_tv < tol:
                # TV(T x, x) only shrinks under further applications of T,
                # so the freshly advanced iterate inherits the certificate.
                return StateDistribution(dims=kernel.dims, probs=nxt)
        if it % window == 0:
            stalled = stalled or last_tv > 0.999 * tv_at_window
            tv_at_window = last_tv
        if stalled and it >= cesaro_after:
            avg_count += 1
            avg = nxt.copy() if avg is None else avg + (nxt - avg) / avg_count
            if avg_count % 100 == 0:
                cand = avg / avg.sum()
                t_cand = kernel.apply(cand)
                t_cand /= t_cand.sum()
                resid = 0.5 * float(np.abs(t_cand - cand).sum())
                if resid < tol:
                    return StateDistribution(dims=kernel.dims, probs=cand)
        cur = nxt
    raise NumericalError(
        f"power iteration did not reach tol {tol} in {max_iter} steps "
        f"(last successive TV {last_tv:.3e})"
    )


def tv_curve(
    rule: RuleSpec,
    noise: NoiseModel,
    dims: Sequence[int],
    reference: StateDistribution,
    start: Optional[StateDistribution] = None,
    n_max: int = 200,
    floor: float = 1e-13,
) -> list[float]:
    """TV(T^n start, reference) for n = 0..n_max, stopping once below floor."""
    kernel = ExactKernel(rule, noise, dims)
    cur = (start or delta_plus(kernel.dims)).probs.copy()
    ref = reference.probs
    curve = [0.5 * float(np.abs(cur - ref).sum())]
    for _ in range(n_max):
        cur = kernel.apply(cur)
        cur /= cur.sum()
        curve.append(0.5 * float(np.abs(cur - ref).sum()))
        if curve[-1] < floor:
            break
    return curve


# --------------------------------------------------------------------------
# cylinder functions


@dataclass(frozen=True)
class CylinderFunction:
    """Observable depending on finitely many sites, as an explicit table."""

    window: tuple[tuple[int, ...], ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        if not self.window:
            raise ValueError("window must contain at least one site")
        dim = len(self.window[0]) if not isinstance(self.window[0], int) else 1
        window = tuple(_site_tuple(s, dim) for s in self.window)
        if len(set(window)) != len(window):
            raise ValueError("window sites must be distinct")
        if len(window) > MAX_WINDOW:
            raise ValueError(f"window size {len(window)} exceeds cap {MAX_WINDOW}")
        object.__setattr__(self, "window", window)
        table = np.asarray(self.table, dtype=np.float64)
        if table.shape != (1 << len(window),):
            raise ValueError(
                f"table must have length 2^{len(window)}, got {table.shape}"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


def spin_observable(site: Sitelike, dimension: int = 1) -> CylinderFunction:
    """The single-site observable omega_x with values -1/+1."""
    s = _site_tuple(site, dimension)
    return CylinderFunction(window=(s,), table=np.array([-1.0, 1.0]))


def _window_codes(window: Iterable[tuple[int, ...]], dims: tuple[int, ...]) -> np.ndarray:
    """Window configuration code of every torus state, vectorized."""
    n = int(np.prod(dims))
    states = np.arange(1 << n, dtype=np.uint64)
    code = np.zeros(1 << n, dtype=np.uint32)
    for j, site in enumerate(window):
        flat = _flat_index(site, dims)
        code |= (((states >> np.uint64(flat)) & 1) << j).astype(np.uint32)
    return code


def cylinder_expectation(dist: StateDistribution, f: CylinderFunction) -> float:
    """Expectation of a cylinder observable under an exact distribution."""
    for site in f.window:
        if len(site) != len(dist.dims):
            raise ValueError(f"window site {site} does not match torus {dist.dims}")
        if any(not 0 <= c < L for c, L in zip(site, dist.dims)):
            raise ValueError(f"window site {site} lies outside torus {dist.dims}")
    codes = _window_codes(f.window, dist.dims)
    return float(np.dot(dist.probs, f.table[codes]))


def seminorm(f: CylinderFunction) -> float:
    """Sum over window sites of the sup flip-difference |f(w) - f(w^x)|."""
    total = 0.0
    codes = np.arange(f.table.shape[0], dtype=np.uint32)
    for j in range(len(f.window)):
        flipped = f.table[codes ^ np.uint32(1 << j)]
        total += float(np.abs(f.table - flipped).max())
    return total


def dual_apply(
    f: CylinderFunction, rule: RuleSpec, noise: NoiseModel, dims: Sequence[int]
) -> CylinderFunction:
    """The dual (observable-side) action: (T f)(omega) = E[f(next) | omega].

    The result is a cylinder function on the union of the window sites'
    neighborhoods (wrapped on the torus).
    """
    dims = tuple(int(L) for L in dims)
    kern = kernel_plus(noise, rule)
    src_sites: list[tuple[int, ...]] = []
    seen = {}
    for w in f.window:
        for u in rule.neighborhood:
            s = tuple((c + uc) % L for c, uc, L in zip(w, u, dims))
            if s not in seen:
                seen[s] = len(src_sites)
                src_sites.append(s)
    if len(src_sites) > MAX_WINDOW:
        raise ValueError(
            f"dual window needs {len(src_sites)} sites, exceeding cap {MAX_WINDOW}"
        )
    if len(src_sites) + len(f.window) > MAX_EXACT_SITES:
        raise ResourceLimitError("dual table would exceed the exact-computation cap")
    n_src = len(src_sites)
    src_cfgs = np.arange(1 << n_src, dtype=np.uint32)
    # per original-window site: its local rule-configuration under each source cfg
    probs = np.empty((1 << n_src, len(f.window)))
    for j, w in enumerate(f.window):
        local = np.zeros(1 << n_src, dtype=np.uint32)
        for i, u in enumerate(rule.neighborhood):
            s = tuple((c + uc) % L for c, uc, L in zip(w, u, dims))
            local |= ((src_cfgs >> np.uint32(seen[s])) & 1) << np.uint32(i)
        probs[:, j] = kern[local]
    table = _expand_products(probs) @ f.table
    return CylinderFunction(window=tuple(src_sites), table=table)


def window_marginal(dist: StateDistribution, window: Sequence[Sitelike]) -> np.ndarray:
    """Exact marginal law of the window bits, indexed little-endian."""
    sites = tuple(_site_tuple(s, len(dist.dims)) for s in window)
    codes = _window_codes(sites, dist.dims)
    out = np.zeros(1 << len(sites))
    np.add.at(out, codes, dist.probs)
    return out


def window_marginal_consistency(
    rule: RuleSpec,
    noise: NoiseModel,
    window: Sequence[Sitelike],
    n: int,
    dims_small: Sequence[int],
    dims_large: Sequence[int],
) -> float:
    """Max abs difference of the window marginal of T^n delta_plus on two tori.

    Valid (and then exact up to roundoff) only while the window's n-step
    influence cone fits in the smaller torus: window radius + n*v must stay
    below min(dims_small)/2.
    """
    sites = tuple(_site_tuple(s, rule.dimension) for s in window)
    radius = max(sum(abs(c) for c in s) for s in sites)
    v = influence_radius(rule)
    if not radius + n * v < min(int(L) for L in dims_small) / 2:
        raise ValueError(
            f"window radius {radius} + {n}*{v} influence steps does not fit "
            f"inside half of min(dims_small); the agreement guarantee does not apply"
        )
    marginals = []
    for dims in (dims_small, dims_large):
        kernel = ExactKernel(rule, noise, dims)
        cur = delta_plus(kernel.dims)
        for _ in range(n):
            cur = transfer_apply(cur, rule, noise, kernel=kernel)
        marginals.append(window_marginal(cur, sites))
    return float(np.abs(marginals[0] - marginals[1]).max())


# --------------------------------------------------------------------------
# basins of product measures


@dataclass(frozen=True)
class ProductMeasureSpec:
    """Product measure given by per-site minus probabilities.

    Either an explicit finite list (torus sites) or one uniform value
    interpreted over an unbounded site set.
    """

    minus_probs: Optional[tuple[float, ...]] = None
    uniform: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.minus_probs is None) == (self.uniform is None):
            raise ValueError("give exactly one of minus_probs or uniform")
        values = self.minus_probs if self.uniform is None else (self.uniform,)
        if any(not 0.0 <= m <= 1.0 for m in values):
            raise ValueError("minus probabilities must lie in [0, 1]")
        if self.minus_probs is not None:
            object.__setattr__(
                self, "minus_probs", tuple(float(m) for m in self.minus_probs)
            )


def basin_membership(spec: ProductMeasureSpec, K: float, eps_prime: float) -> bool:
    """Whether every all-minus pattern probability is within K * eps_prime^|set|.

    For a product measure that is  sup over finite site sets of
    prod (m_x / eps_prime) <= K;  the empty set forces K >= 1.  A positive
    uniform rate above eps_prime fails over large sets; eps_prime = 0 admits
    only measures with no minus mass at all.
    """
    if K < 0 or not 0.0 <= eps_prime <= 1.0:
        raise ValueError("need K >= 0 and eps_prime in [0, 1]")
    if K < 1.0:
        return False
    if spec.uniform is not None:
        m = spec.uniform
        return m == 0.0 or (eps_prime > 0.0 and m <= eps_prime)
    worst = 1.0
    for m in spec.minus_probs:
        if m == 0.0:
            continue
        if eps_prime == 0.0:
            return False
        factor = m / eps_prime
        if factor > 1.0:
            worst *= factor
    return worst <= K

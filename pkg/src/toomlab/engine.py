"""Synchronous spin dynamics on finite periodic lattices.

States are bit-packed (bit 1 = spin +1, 64 sites per word, little-endian bit
order, row-major site indexing).  One update step gathers each site's
neighborhood bits through precomputed periodic index tables, looks the local
configuration up in the rule's truth table, and, in the noisy case, draws the
new spin from the local error kernel.

Randomness is counter-based: the draw consumed by site x at step t is output
number x of a Philox stream keyed by (seed) with counter (0, 0, t, 0), so a
trajectory is a pure function of (seed, initial state, rule, noise, steps).
Batches of replicas share the per-step stream, replica r owning outputs
[r*N, (r+1)*N).  Philox skips ahead in blocks of 4 outputs, so parallel
workers take chunks whose start positions are multiples of 4; the result is
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox

from .errors import ConfigError
from .rules import RuleSpec

Site = tuple[int, ...]


def _as_sites(island: Iterable, dimension: int) -> list[Site]:
    sites = []
    for s in island:
        if isinstance(s, int):
            s = (s,)
        s = tuple(int(c) for c in s)
        if len(s) != dimension:
            raise ConfigError(f"site {s} does not match dimension {dimension}")
        sites.append(s)
    return sites


@dataclass(frozen=True)
class LatticeState:
    """Immutable bit-packed spin configuration on a torus."""

    dims: tuple[int, ...]
    words: np.ndarray  # dtype '<u8', packed little-endian, padded with zeros

    def __post_init__(self) -> None:
        dims = tuple(int(L) for L in self.dims)
        if any(L < 1 for L in dims):
            raise ConfigError(f"side lengths must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        words = np.ascontiguousarray(self.words, dtype="<u8")
        words.setflags(write=False)
        if words.shape != (-(-self.n_sites // 64),):
            raise ConfigError("packed word count does not match dims")
        object.__setattr__(self, "words", words)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def bits(self) -> np.ndarray:
        """Unpacked spins as a flat uint8 0/1 array (1 = spin +1)."""
        raw = self.words.view(np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.n_sites)

    @classmethod
    def from_bits(cls, dims: Sequence[int], bits: np.ndarray) -> "LatticeState":
        dims = tuple(int(L) for L in dims)
        n = int(np.prod(dims))
        bits = np.asarray(bits, dtype=np.uint8).reshape(n)
        packed = np.packbits(bits, bitorder="little")
        words = np.zeros(-(-n // 64), dtype="<u8")
        words.view(np.uint8)[: packed.shape[0]] = packed
        return cls(dims=dims, words=words)

    @classmethod
    def all_plus(cls, dims: Sequence[int]) -> "LatticeState":
        n = int(np.prod([int(L) for L in dims]))
        return cls.from_bits(dims, np.ones(n, dtype=np.uint8))

    @classmethod
    def all_minus(cls, dims: Sequence[int]) -> "LatticeState":
        n = int(np.prod([int(L) for L in dims]))
        return cls.from_bits(dims, np.zeros(n, dtype=np.uint8))

    @classmethod
    def plus_with_island(cls, dims: Sequence[int], island: Iterable) -> "LatticeState":
        """All-plus configuration with the given sites set to -1."""
        dims = tuple(int(L) for L in dims)
        bits = np.ones(int(np.prod(dims)), dtype=np.uint8)
        for s in _as_sites(island, len(dims)):
            idx = np.ravel_multi_index(tuple(c % L for c, L in zip(s, dims)), dims)
            bits[idx] = 0
        return cls.from_bits(dims, bits)

    def minus_fraction(self) -> float:
        return 1.0 - float(self.bits().mean())

    def to_int(self) -> int:
        """State as an integer, bit i = spin at flat site i (for exact kernels)."""
        nbytes = -(-self.n_sites // 8)
        return int.from_bytes(self.words.view(np.uint8)[:nbytes].tobytes(), "little")

    @classmethod
    def from_int(cls, dims: Sequence[int], value: int) -> "LatticeState":
        n = int(np.prod([int(L) for L in dims]))
        bits = np.array([(value >> i) & 1 for i in range(n)], dtype=np.uint8)
        return cls.from_bits(dims, bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LatticeState):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.dims, self.words.tobytes()))


# --------------------------------------------------------------------------
# noise kernels


@dataclass(frozen=True)
class NoiseModel:
    """Local error kernel around the deterministic prescription.

    kinds:
      symmetric — the prescribed spin flips with probability eps;
      biased    — a prescribed +1 flips with probability eps_plus, a
                  prescribed -1 with eps_minus;
      table     — explicit probability of outputting +1 per local
                  configuration (length 2^R, same encoding as rule tables).

    verified_eps / verified_alpha are filled by :func:`check_assumptions`.
    """

    kind: str
    eps: float = 0.0
    eps_plus: float = 0.0
    eps_minus: float = 0.0
    p_plus: Optional[np.ndarray] = None
    verified_eps: Optional[float] = None
    verified_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("symmetric", "biased", "table"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        for name in ("eps", "eps_plus", "eps_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.kind == "table":
            if self.p_plus is None:
                raise ConfigError("table noise requires p_plus")
            arr = np.asarray(self.p_plus, dtype=np.float64)
            if arr.ndim != 1 or not np.all((arr >= 0.0) & (arr <= 1.0)):
                raise ConfigError("p_plus must be a 1-d array of probabilities")
            arr.setflags(write=False)
            object.__setattr__(self, "p_plus", arr)

    def with_verification(self, rule: RuleSpec) -> "NoiseModel":
        eps, alpha = check_assumptions(self, rule)
        return replace(self, verified_eps=eps, verified_alpha=alpha)


def symmetric_noise(eps: float) -> NoiseModel:
    return NoiseModel(kind="symmetric", eps=eps)


def biased_noise(eps_plus: float, eps_minus: float) -> NoiseModel:
    return NoiseModel(kind="biased", eps_plus=eps_plus, eps_minus=eps_minus)


def table_noise(p_plus: Sequence[float]) -> NoiseModel:
    return NoiseModel(kind="table", p_plus=np.asarray(p_plus, dtype=np.float64))


def noise_to_json(noise: NoiseModel) -> dict:
    if noise.kind == "symmetric":
        return {"kind": "symmetric", "eps": noise.eps}
    if noise.kind == "biased":
        return {"kind": "biased", "eps_plus": noise.eps_plus, "eps_minus": noise.eps_minus}
    return {"kind": "table", "p_plus": [float(p) for p in noise.p_plus]}


def noise_from_json(data: dict) -> NoiseModel:
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("noise spec must be an object with a 'kind'")
    kind = data["kind"]
    allowed = {
        "symmetric": {"kind", "eps"},
        "biased": {"kind", "eps_plus", "eps_minus"},
        "table": {"kind", "p_plus"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown noise kind {kind!r}")
    extra = set(data) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown noise fields for kind {kind!r}: {sorted(extra)}")
    if kind == "symmetric":
        return symmetric_noise(float(data.get("eps", 0.0)))
    if kind == "biased":
        return biased_noise(
            float(data.get("eps_plus", 0.0)), float(data.get("eps_minus", 0.0))
        )
    return table_noise(data["p_plus"])


def kernel_plus(noise: NoiseModel, rule: RuleSpec) -> np.ndarray:
    """Probability of outputting spin +1, per local configuration."""
    phi = rule.table.astype(np.float64)
    if noise.kind == "symmetric":
        return phi * (1.0 - noise.eps) + (1.0 - phi) * noise.eps
    if noise.kind == "biased":
        return phi * (1.0 - noise.eps_plus) + (1.0 - phi) * noise.eps_minus
    if noise.p_plus.shape[0] != rule.table.shape[0]:
        raise ConfigError(
            f"table noise covers {noise.p_plus.shape[0]} configurations, "
            f"rule has {rule.table.shape[0]}"
        )
    return np.asarray(noise.p_plus, dtype=np.float64)


def kernel_error(noise: NoiseModel, rule: RuleSpec) -> np.ndarray:
    """Probability of deviating from the rule's prescription, per configuration."""
    phi = rule.table.astype(bool)
    if noise.kind == "symmetric":
        return np.full(phi.shape, float(noise.eps))
    if noise.kind == "biased":
        return np.where(phi, float(noise.eps_plus), float(noise.eps_minus))
    kplus = kernel_plus(noise, rule)
    return np.where(phi, 1.0 - kplus, kplus)


def check_assumptions(noise: NoiseModel, rule: RuleSpec) -> tuple[float, float]:
    """Least (eps, alpha) satisfied by the kernel, by exhaustive enumeration.

    eps: largest probability of deviating from the rule's prescription over
    all local configurations.  alpha: smallest constant such that rewriting
    any one neighborhood spin to the prescribed value a = phi(config) changes
    each transition probability by at most a relative factor alpha.  Sites
    outside the neighborhood never enter the kernel, so checking the R
    in-neighborhood substitutions is complete.  A zero probability that moves
    under substitution makes the bound unsatisfiable (alpha = inf).
    """
    kplus = kernel_plus(noise, rule)
    verified_eps = float(kernel_error(noise, rule).max())

    cfgs = np.arange(rule.table.shape[0], dtype=np.uint32)
    a_bits = rule.table.astype(np.uint32)
    verified_alpha = 0.0
    for i in range(rule.size):
        bit = np.uint32(1 << i)
        subst = np.where(a_bits == 1, cfgs | bit, cfgs & ~bit)
        for p, p2 in ((kplus, kplus[subst]), (1.0 - kplus, 1.0 - kplus[subst])):
            diff = np.abs(p - p2)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(diff == 0.0, 0.0, diff / p)
            verified_alpha = max(verified_alpha, float(ratio.max()))
    return verified_eps, verified_alpha


# --------------------------------------------------------------------------
# counter-based randomness


@dataclass(frozen=True)
class RngKey:
    """Root of the per-(step, position) random streams."""

    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))


def step_uniforms(key: RngKey, t: int, start: int, count: int) -> np.ndarray:
    """Outputs [start, start+count) of the step-t uniform stream.

    start must be a multiple of 4 (the Philox block size) so that chunked
    generation reproduces single-pass generation exactly.
    """
    if start % 4:
        raise ValueError("stream start must be 4-aligned")
    bg = Philox(key=key.seed, counter=[0, 0, int(t), 0])
    if start:
        bg.advance(start // 4)
    return Generator(bg).random(count)


def _chunks(total: int, parts: int, align: int) -> list[tuple[int, int]]:
    if parts <= 1 or total <= align:
        return [(0, total)]
    size = -(-total // parts)
    size = -(-size // align) * align
    return [(a, min(a + size, total)) for a in range(0, total, size)]


# --------------------------------------------------------------------------
# stepping


class TorusStepper:
    """Precomputed gather tables for one (rule, dims) pair."""

    def __init__(self, rule: RuleSpec, dims: Sequence[int]):
        dims = tuple(int(L) for L in dims)
        if len(dims) != rule.dimension:
            raise ConfigError(
                f"dims {dims} do not match rule dimension {rule.dimension}"
            )
        reach = max(max(abs(c) for c in u) for u in rule.neighborhood)
        for L in dims:
            if L < 2 * reach + 1:
                raise ConfigError(
                    f"side length {L} aliases the neighborhood (need >= {2 * reach + 1})"
                )
        self.rule = rule
        self.dims = dims
        self.n_sites = int(np.prod(dims))
        coords = np.indices(dims).reshape(rule.dimension, self.n_sites)
        nbr = np.empty((rule.size, self.n_sites), dtype=np.intp)
        for i, u in enumerate(rule.neighborhood):
            shifted = tuple(
                (coords[k] + u[k]) % dims[k] for k in range(rule.dimension)
            )
            nbr[i] = np.ravel_multi_index(shifted, dims)
        self.nbr = nbr
        self.table = rule.table

    def local_index(self, bits: np.ndarray, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        """Local configuration index per site (for sites [lo, hi) if given).

        bits may be (N,) or a replica batch (M, N); slicing applies to the
        site axis in the first case and the replica axis in the second.
        """
        nbr = self.nbr
        if bits.ndim == 1:
            nbr = nbr[:, lo:hi]
            idx = bits[nbr[0]].astype(np.uint32)
            for i in range(1, self.rule.size):
                idx |= bits[nbr[i]].astype(np.uint32) << np.uint32(i)
            return idx
        sub = bits[lo:hi]
        idx = sub[:, nbr[0]].astype(np.uint32)
        for i in range(1, self.rule.size):
            idx |= sub[:, nbr[i]].astype(np.uint32) << np.uint32(i)
        return idx


def _run_chunked(work: Callable[[int, int], None], spans: list[tuple[int, int]], threads: int) -> None:
    if threads <= 1 or len(spans) <= 1:
        for a, b in spans:
            work(a, b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda s: work(*s), spans))


def step_deterministic(
    state: LatticeState, rule: RuleSpec, stepper: Optional[TorusStepper] = None
) -> LatticeState:
    """Simultaneous rule application at every site; the input is unmodified."""
    st = stepper or TorusStepper(rule, state.dims)
    bits = state.bits()
    return LatticeState.from_bits(state.dims, st.table[st.local_index(bits)])


def step_noisy(
    state: LatticeState,
    rule: RuleSpec,
    noise: NoiseModel,
    key: RngKey,
    t: int,
    threads: int = 1,
    stepper: Optional[TorusStepper] = None,
) -> LatticeState:
    """One synchronous noisy update; site x consumes draw x of stream (seed, t)."""
    st = stepper or TorusStepper(rule, state.dims)
    kern = kernel_plus(noise, rule)
    bits = state.bits()
    out = np.empty(st.n_sites, dtype=np.uint8)

    def work(a: int, b: int) -> None:
        u = step_uniforms(key, t, a, b - a)
        out[a:b] = u < kern[st.local_index(bits, a, b)]

    _run_chunked(work, _chunks(st.n_sites, threads, 4), threads)
    return LatticeState.from_bits(state.dims, out)


def evolve(
    state: LatticeState,
    rule: RuleSpec,
    noise: Optional[NoiseModel],
    key: RngKey,
    t0: int,
    steps: int,
    threads: int = 1,
    on_step: Optional[Callable[[int, np.ndarray], None]] = None,
) -> LatticeState:
    """Run steps t0 .. t0+steps-1; on_step sees (t+1, new bits) after each."""
    st = TorusStepper(rule, state.dims)
    kern = None if noise is None else kernel_plus(noise, rule)
    bits = state.bits()
    for t in range(t0, t0 + steps):
        if kern is None:
            bits = st.table[st.local_index(bits)]
        else:
            out = np.empty(st.n_sites, dtype=np.uint8)

            def work(a: int, b: int) -> None:
                u = step_uniforms(key, t, a, b - a)
                out[a:b] = u < kern[st.local_index(bits, a, b)]

            _run_chunked(work, _chunks(st.n_sites, threads, 4), threads)
            bits = out
        if on_step is not None:
            on_step(t + 1, bits)
    return LatticeState.from_bits(state.dims, bits)


def batch_all_plus(replicas: int, dims: Sequence[int]) -> np.ndarray:
    return np.ones((replicas, int(np.prod(dims))), dtype=np.uint8)


def evolve_batch(
    bits: np.ndarray,
    rule: RuleSpec,
    noise: NoiseModel,
    dims: Sequence[int],
    key: RngKey,
    t0: int,
    steps: int,
    threads: int = 1,
) -> np.ndarray:
    """Advance a replica batch (shape (M, N)); replica r owns stream slots
    [r*N, (r+1)*N) of each step, so results do not depend on batch splitting."""
    st = TorusStepper(rule, dims)
    kern = kernel_plus(noise, rule)
    bits = np.asarray(bits, dtype=np.uint8)
    m, n = bits.shape
    if n != st.n_sites:
        raise ConfigError("batch width does not match dims")
    align = 4 // math.gcd(n, 4)
    for t in range(t0, t0 + steps):
        out = np.empty_like(bits)

        def work(a: int, b: int) -> None:
            u = step_uniforms(key, t, a * n, (b - a) * n).reshape(b - a, n)
            out[a:b] = u < kern[st.local_index(bits, a, b)]

        _run_chunked(work, _chunks(m, threads, align), threads)
        bits = out
    return bits


# --------------------------------------------------------------------------
# erosion


@dataclass(frozen=True)
class ErosionResult:
    """Outcome of iterating the deterministic rule on a finite island of -1."""

    erased: bool
    steps: int
    sizes: tuple[int, ...]  # minus-site count after each step

    def __repr__(self) -> str:
        tag = "ERASED" if self.erased else "PERSISTS"
        return f"{tag}({self.steps})"


def influence_radius(rule: RuleSpec) -> int:
    """One-step influence radius in the Manhattan norm."""
    return max(sum(abs(c) for c in u) for u in rule.neighborhood)


def erosion_time(
    rule: RuleSpec,
    island: Iterable,
    dims: Optional[Sequence[int]] = None,
    cutoff: Optional[int] = None,
) -> ErosionResult:
    """Steps until an all-plus-except-island state returns to all-plus.

    The torus must be large enough that the island's light cone under the
    cutoff cannot wrap around and feed back on itself; otherwise the finite
    run would not witness the infinite-lattice behavior.  With dims omitted,
    a torus of exactly that size is built.
    """
    sites = _as_sites(island, rule.dimension)
    if not sites:
        return ErosionResult(erased=True, steps=0, sizes=())
    diam = max(
        (sum(abs(a - b) for a, b in zip(s1, s2)) for s1 in sites for s2 in sites),
        default=0,
    )
    if cutoff is None:
        cutoff = 64 * (diam + 1)
    if cutoff < 1:
        raise ConfigError("cutoff must be at least 1")
    v = influence_radius(rule)
    need = 2 * cutoff * v + diam
    if dims is None:
        dims = tuple(max(need + 1, 3) for _ in range(rule.dimension))
    dims = tuple(int(L) for L in dims)
    if min(dims) < need:
        raise ConfigError(
            f"dims {dims} too small: the {cutoff}-step light cone needs >= {need}"
        )
    st = TorusStepper(rule, dims)
    bits = LatticeState.plus_with_island(dims, sites).bits()
    sizes = []
    for n in range(1, cutoff + 1):
        bits = st.table[st.local_index(bits)]
        remaining = st.n_sites - int(bits.sum())
        sizes.append(remaining)
        if remaining == 0:
            return ErosionResult(erased=True, steps=n, sizes=tuple(sizes))
    return ErosionResult(erased=False, steps=cutoff, sizes=tuple(sizes))

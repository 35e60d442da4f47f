"""Truncated multimode Fock-space engine for linear optics.

States are dense complex tensors with one axis per optical mode; axis index
is the photon number of that mode, up to an inclusive per-mode cutoff.

Conventions fixed module-wide:

* Beam splitter of angle t mixes annihilation operators by the real rotation

      out_a = cos(t) in_a + sin(t) in_b
      out_b = -sin(t) in_a + cos(t) in_b

  so transmission amplitudes are real-positive (cos t on both diagonals) and
  the a->b reflection carries the minus sign.  Coherent amplitudes transform
  by the same matrix, e.g. a 50:50 splitter sends |a>|a> to |sqrt(2)a>|0>.
* `FockVector.amplitudes` is kept unit-norm; probability weight accumulated
  through projections lives in `norm_weight`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

DEFAULT_TAIL_TOL = 1e-12

# Dense-state element budget (complex128); 6 live modes at high cutoff blow
# past any sane memory, so circuits must stage their projections.
_max_elements = 25_000_000


class FockError(Exception):
    """Base class for engine errors."""


class CutoffError(FockError):
    """Cutoff too small to hold the requested state within the tail bound."""


class DegenerateStateError(FockError):
    """Construction produced a (numerically) zero vector."""


class ResourceLimitError(FockError):
    """A state would exceed the configured memory budget."""


class ZeroProbabilityError(FockError):
    """Projection onto an outcome of zero probability."""


def set_max_elements(n: int) -> None:
    """Adjust the dense-state element budget (returns nothing; global)."""
    global _max_elements
    if n < 1:
        raise ValueError("element budget must be positive")
    _max_elements = int(n)


def max_elements() -> int:
    return _max_elements


def default_cutoff(a_max: float) -> int:
    """Adaptive cutoff policy: ceil(a^2 + 8a + 10) for the largest amplitude.

    Leaves a truncated coherent tail far below 1e-12 for amplitudes up to ~3.
    """
    a = abs(a_max)
    return int(math.ceil(a * a + 8.0 * a + 10.0))


@dataclass
class FockVector:
    """Pure state over `mode_count` modes, amplitudes indexed by occupation.

    amplitudes: complex ndarray of shape (cutoff+1,) * mode_count, unit norm.
    norm_weight: probability weight accumulated through projections.
    """

    amplitudes: np.ndarray
    norm_weight: float = 1.0

    @property
    def mode_count(self) -> int:
        return self.amplitudes.ndim

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[0] - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "FockVector":
        n = self.norm()
        if n < 1e-300:
            raise DegenerateStateError("cannot normalize a zero vector")
        self.amplitudes = self.amplitudes / n
        return self

    def copy(self) -> "FockVector":
        return FockVector(self.amplitudes.copy(), self.norm_weight)


def _check_budget(shape) -> None:
    n = 1
    for s in shape:
        n *= s
    if n > _max_elements:
        raise ResourceLimitError(
            f"state of shape {tuple(shape)} ({n} elements) exceeds the "
            f"budget of {_max_elements} elements"
        )


def vacuum(mode_count: int, cutoff: int) -> FockVector:
    _check_budget((cutoff + 1,) * mode_count)
    amps = np.zeros((cutoff + 1,) * mode_count, dtype=complex)
    amps[(0,) * mode_count] = 1.0
    return FockVector(amps)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Truncated coherent-state amplitudes e^{-|a|^2/2} a^n / sqrt(n!).

    Not renormalized; the missing tail mass is 1 - sum |c_n|^2.
    """
    n = np.arange(cutoff + 1)
    # log-domain magnitudes to avoid overflow in a^n / sqrt(n!)
    mag = np.abs(alpha)
    if mag == 0.0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1.0
        return amps
    log_mag = -0.5 * mag * mag + n * math.log(mag) - 0.5 * np.cumsum(
        np.concatenate(([0.0], np.log(np.arange(1, cutoff + 1))))
    )
    phase = np.exp(1j * n * np.angle(alpha))
    return np.exp(log_mag) * phase


def coherent(alpha: complex, cutoff: int, tail_tol: float = DEFAULT_TAIL_TOL) -> FockVector:
    """Single-mode coherent state |alpha>, renormalized after truncation."""
    amps = coherent_amplitudes(alpha, cutoff)
    retained = float(np.vdot(amps, amps).real)
    if 1.0 - retained > tail_tol:
        raise CutoffError(
            f"cutoff {cutoff} leaves tail mass {1.0 - retained:.3e} > {tail_tol:.1e} "
            f"for |alpha| = {abs(alpha):.4g}"
        )
    return FockVector(amps / math.sqrt(retained))


def cat_state(alpha: float, sign: int, cutoff: int,
              tail_tol: float = DEFAULT_TAIL_TOL) -> FockVector:
    """Diagonal state N(|alpha> + sign |-alpha>); even/odd Fock support."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if alpha < 0:
        raise ValueError("cat amplitude must be nonnegative")
    plus = coherent_amplitudes(alpha, cutoff)
    minus = coherent_amplitudes(-alpha, cutoff)
    tail = 1.0 - float(np.vdot(plus, plus).real)
    if tail > tail_tol:
        raise CutoffError(
            f"cutoff {cutoff} leaves tail mass {tail:.3e} > {tail_tol:.1e} "
            f"for cat amplitude {alpha:.4g}"
        )
    amps = plus + sign * minus
    nrm = np.linalg.norm(amps)
    if nrm < 1e-12:
        raise DegenerateStateError(
            f"(|{alpha}> {'+' if sign > 0 else '-'} |-{alpha}>) is numerically zero"
        )
    return FockVector(amps / nrm)


def tensor(a: FockVector, b: FockVector) -> FockVector:
    """Tensor product; cutoffs must agree so later two-mode ops are exact."""
    if a.cutoff != b.cutoff:
        raise ValueError(f"cutoff mismatch: {a.cutoff} vs {b.cutoff}")
    _check_budget(a.amplitudes.shape + b.amplitudes.shape)
    amps = np.multiply.outer(a.amplitudes, b.amplitudes)
    return FockVector(amps, a.norm_weight * b.norm_weight)


@dataclass(frozen=True)
class BeamSplitterSpec:
    """Two-mode beam splitter; `angle` in radians, transmission cos(angle)."""

    mode_a: int
    mode_b: int
    angle: float

    @property
    def matrix(self) -> np.ndarray:
        return bs_matrix(self.angle)


def bs_matrix(angle: float) -> np.ndarray:
    """2x2 coherent-amplitude mixing matrix of the module convention."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]])


_bs_cache: dict = {}


def _bs_unitary(dim: int, angle: float) -> np.ndarray:
    """Two-mode Fock-basis unitary exp(t (a'b - ab')), built per total-photon
    block (the generator conserves photon number, so blocks are exact)."""
    key = (dim, angle)
    u = _bs_cache.get(key)
    if u is not None:
        return u
    full = np.zeros((dim * dim, dim * dim))
    for total in range(2 * dim - 1):
        lo = max(0, total - (dim - 1))
        hi = min(total, dim - 1)
        na = np.arange(lo, hi + 1)
        k = len(na)
        gen = np.zeros((k, k))
        for i in range(k - 1):
            # a'b : (na, nb) -> (na+1, nb-1), amplitude sqrt((na+1) nb)
            amp = math.sqrt((na[i] + 1) * (total - na[i]))
            gen[i + 1, i] = amp
            gen[i, i + 1] = -amp
        block = expm(angle * gen)
        idx = na * dim + (total - na)
        full[np.ix_(idx, idx)] = block
    if len(_bs_cache) > 32:
        _bs_cache.clear()
    _bs_cache[key] = full
    return full


def _apply_two_mode(amps: np.ndarray, u: np.ndarray, i: int, j: int) -> np.ndarray:
    d = amps.shape[0]
    moved = np.moveaxis(amps, (i, j), (0, 1))
    tail_shape = moved.shape[2:]
    flat = moved.reshape(d * d, -1)
    out = u @ flat
    out = out.reshape((d, d) + tail_shape)
    return np.moveaxis(out, (0, 1), (i, j))


def apply_beam_splitter(state: FockVector, spec: BeamSplitterSpec) -> FockVector:
    i, j = spec.mode_a, spec.mode_b
    m = state.mode_count
    if i == j or not (0 <= i < m and 0 <= j < m):
        raise ValueError(f"invalid beam-splitter modes ({i}, {j}) for {m}-mode state")
    u = _bs_unitary(state.cutoff + 1, spec.angle)
    if np.iscomplexobj(state.amplitudes):
        amps = _apply_two_mode(state.amplitudes, u, i, j)
    else:  # pragma: no cover - amplitudes are always complex
        amps = _apply_two_mode(state.amplitudes.astype(complex), u, i, j)
    return FockVector(amps, state.norm_weight)


def phase_shift(state: FockVector, mode: int, phi: float) -> FockVector:
    """Occupation n on `mode` picks up e^{i n phi}."""
    if not 0 <= mode < state.mode_count:
        raise ValueError(f"mode {mode} out of range")
    phases = np.exp(1j * phi * np.arange(state.cutoff + 1))
    shape = [1] * state.mode_count
    shape[mode] = state.cutoff + 1
    return FockVector(state.amplitudes * phases.reshape(shape), state.norm_weight)


def outcome_probabilities(state: FockVector, modes) -> np.ndarray:
    """Marginal photon-count distribution over `modes` (array indexed by
    the occupations of those modes, in the order given)."""
    modes = list(modes)
    if not modes:
        raise ValueError("modes must be nonempty")
    other = [ax for ax in range(state.mode_count) if ax not in modes]
    probs = np.abs(np.moveaxis(state.amplitudes, modes, range(len(modes)))) ** 2
    if other:
        probs = probs.reshape(probs.shape[:len(modes)] + (-1,)).sum(axis=-1)
    return probs


def count_photons(state: FockVector, modes, rng: np.random.Generator):
    """Sample a photon-count outcome on `modes` with Born probabilities.

    Returns (outcome tuple, collapsed FockVector with the measured modes
    removed and norm_weight multiplied by the outcome probability).
    """
    modes = list(modes)
    probs = outcome_probabilities(state, modes)
    flat = probs.ravel()
    total = flat.sum()
    # guard against drift from repeated unitaries
    idx = rng.choice(flat.size, p=flat / total)
    outcome = tuple(int(v) for v in np.unravel_index(idx, probs.shape))
    prob, collapsed = project_outcome(state, modes, outcome)
    return outcome, collapsed


def project_outcome(state: FockVector, modes, outcome):
    """Project `modes` onto the photon-count `outcome`.

    Returns (probability, collapsed FockVector) with measured modes removed;
    probability is relative to the input state.  A zero-probability outcome
    returns (0.0, None).
    """
    modes = list(modes)
    outcome = tuple(outcome)
    if len(modes) != len(outcome):
        raise ValueError("modes and outcome lengths differ")
    indexer: list = [slice(None)] * state.mode_count
    for m, n in zip(modes, outcome):
        if not 0 <= n <= state.cutoff:
            raise ValueError(f"outcome {n} outside cutoff {state.cutoff}")
        indexer[m] = n
    sliced = state.amplitudes[tuple(indexer)]
    prob = float(np.vdot(sliced, sliced).real)
    if prob <= 0.0:
        return 0.0, None
    if len(modes) == state.mode_count:
        collapsed = FockVector(np.ones((), dtype=complex), state.norm_weight * prob)
        return prob, collapsed
    collapsed = FockVector(sliced / math.sqrt(prob), state.norm_weight * prob)
    return prob, collapsed


def overlap(a: FockVector, b: FockVector) -> complex:
    """Inner product <a|b> of the (unit-norm) amplitude tensors."""
    if a.amplitudes.shape != b.amplitudes.shape:
        raise ValueError("overlap requires states of identical shape")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def retruncate(state: FockVector, cutoff: int,
               tail_tol: float = DEFAULT_TAIL_TOL) -> FockVector:
    """Shrink the per-mode cutoff, verifying the discarded mass is tiny."""
    if cutoff >= state.cutoff:
        return state.copy()
    sl = tuple(slice(0, cutoff + 1) for _ in range(state.mode_count))
    kept = state.amplitudes[sl]
    mass = float(np.vdot(kept, kept).real)
    if 1.0 - mass > tail_tol:
        raise CutoffError(
            f"retruncation to {cutoff} discards mass {1.0 - mass:.3e} > {tail_tol:.1e}"
        )
    return FockVector(kept / math.sqrt(mass), state.norm_weight)


# ---------------------------------------------------------------------------
# Density operators (needed only to house loss-channel mixtures)
# ---------------------------------------------------------------------------

@dataclass
class DensityOperator:
    """Mixed state over occupation tuples; matrix shape (D, D) with
    D = (cutoff+1)^mode_count, row/column index in C-order over modes."""

    matrix: np.ndarray
    mode_count: int
    cutoff: int

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, herm_tol: float = 1e-10, eig_tol: float = -1e-10) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=herm_tol):
            raise FockError("density matrix is not Hermitian")
        eigs = np.linalg.eigvalsh(m)
        if eigs.min() < eig_tol:
            raise FockError(f"negative eigenvalue {eigs.min():.3e}")
        tr = self.trace()
        if not (0.0 < tr <= 1.0 + 1e-10):
            raise FockError(f"trace {tr} outside (0, 1]")


def density_from_pure(state: FockVector) -> DensityOperator:
    v = state.amplitudes.ravel()
    return DensityOperator(np.outer(v, v.conj()) * state.norm_weight,
                           state.mode_count, state.cutoff)


def expectation(rho: DensityOperator, state: FockVector) -> float:
    """<psi| rho |psi> for a unit-norm pure state of the same shape."""
    v = state.amplitudes.ravel()
    return float(np.vdot(v, rho.matrix @ v).real)


def loss_channel(rho: DensityOperator, mode: int, eta: float) -> DensityOperator:
    """Photon loss of intensity fraction `eta` on one mode.

    Implemented literally: couple the mode to a vacuum ancilla on a beam
    splitter with transmission sqrt(1 - eta), then trace the ancilla out.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if not 0 <= mode < rho.mode_count:
        raise ValueError("mode out of range")
    d = rho.cutoff + 1
    m = rho.mode_count
    # transmission cos(angle) = sqrt(1-eta)
    angle = math.acos(min(1.0, math.sqrt(1.0 - eta)))
    u = _bs_unitary(d, angle)

    # append vacuum ancilla as the last mode
    vac = np.zeros((d, d))
    vac[0, 0] = 1.0
    big = np.kron(rho.matrix, vac)

    # reshape to one axis per (ket modes..., bra modes...) and rotate
    tens = big.reshape((d,) * (2 * (m + 1)))
    tens = tens.astype(complex)
    tens = _apply_two_mode_tensor(tens, u, mode, m, ket=True, nmodes=m + 1)
    tens = _apply_two_mode_tensor(tens, u.conj(), mode, m, ket=False, nmodes=m + 1)

    # partial trace over the ancilla (last ket axis with last bra axis)
    traced = np.trace(tens, axis1=m, axis2=2 * m + 1)
    out = traced.reshape(d ** m, d ** m)
    return DensityOperator(out, m, rho.cutoff)


def _apply_two_mode_tensor(tens: np.ndarray, u: np.ndarray, i: int, j: int,
                           ket: bool, nmodes: int) -> np.ndarray:
    off = 0 if ket else nmodes
    d = tens.shape[0]
    moved = np.moveaxis(tens, (off + i, off + j), (0, 1))
    tail = moved.shape[2:]
    out = (u @ moved.reshape(d * d, -1)).reshape((d, d) + tail)
    return np.moveaxis(out, (0, 1), (off + i, off + j))

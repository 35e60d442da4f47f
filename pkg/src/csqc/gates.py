"""CSQC circuits on the Fock engine: measurements, teleportation, gates.

A qubit is mu|alpha> + nu|-alpha> on one mode.  The Z-basis and Bell
measurements discriminate the non-orthogonal basis states unambiguously:
photons confined to one beam-splitter output identify the state, zero
photons is the explicit failure outcome, and clicks in both outputs are
impossible on ideal inputs.

Gate teleportation uses entangled two- or four-mode resources; the
repeat-until-success factories of those resources accept on "exactly one
photon total" and record a known per-pattern Pauli fix (the two accepted
detector patterns produce states differing by a branch sign, which is a
Z on the output absorbed into the Pauli frame).

Conventions pinned here (calibrated by enumeration, frozen, and asserted
by the test suite):

* zrot(theta) acts on coefficients as diag(e^{i theta}, e^{-i theta}).
* Bell outcome -> frame: B1 -> I, B2 -> Z, B3 -> X, B4 -> XZ, where the
  frame (x, z) means the output carries X^x Z^z relative to the ideal.
* Factory mixers need the symmetric (i-reflection) beam-splitter
  convention; it is realized as the module's real beam splitter wrapped
  in +-pi/4 phase plates.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import fock
from .fock import BeamSplitterSpec, FockVector


class LeakageWarning(UserWarning):
    """Decoded state has weight outside span{|alpha>, |-alpha>}."""


class ConsistencyError(fock.FockError):
    """An outcome that ideal circuits cannot produce was observed."""


class ResourceMismatchError(ValueError):
    """Resource kind or amplitude does not match the requested gate."""


# ---------------------------------------------------------------------------
# Qubits and coefficient algebra
# ---------------------------------------------------------------------------

@dataclass
class CsqcQubit:
    """Logical coefficients (mu, nu) at encoding amplitude alpha."""

    mu: complex
    nu: complex
    alpha: float

    def normalization(self) -> float:
        """N such that N(mu|a> + nu|-a>) has unit norm."""
        ov = math.exp(-2.0 * self.alpha * self.alpha)
        g = (abs(self.mu) ** 2 + abs(self.nu) ** 2
             + 2.0 * (self.mu * self.nu.conjugate()).real * ov)
        if g <= 0.0:
            raise fock.DegenerateStateError("qubit coefficients give a zero vector")
        return 1.0 / math.sqrt(g)

    def coeffs(self) -> np.ndarray:
        return np.array([self.mu, self.nu], dtype=complex)

    def apply_pauli(self, x: int, z: int) -> "CsqcQubit":
        """Return X^x Z^z applied to the coefficients (Z first, then X)."""
        mu, nu = self.mu, self.nu
        if z:
            nu = -nu
        if x:
            mu, nu = nu, mu
        return CsqcQubit(mu, nu, self.alpha)


def coeff_fidelity(a, b) -> float:
    """Projective fidelity of two coefficient vectors (any length)."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(abs(np.vdot(a, b)) ** 2 / (na * nb))


def pauli_x(state: FockVector, mode: int = 0) -> FockVector:
    """Deterministic X: a pi phase shift maps |alpha> <-> |-alpha>."""
    return fock.phase_shift(state, mode, math.pi)


def encode(q: CsqcQubit, cutoff: int) -> FockVector:
    """N(mu|alpha> + nu|-alpha>) as a single-mode Fock vector."""
    plus = fock.coherent_amplitudes(q.alpha, cutoff)
    minus = fock.coherent_amplitudes(-q.alpha, cutoff)
    amps = q.mu * plus + q.nu * minus
    nrm = np.linalg.norm(amps)
    if nrm < 1e-12:
        raise fock.DegenerateStateError("encoded qubit is numerically zero")
    return FockVector(amps / nrm)


def decode(state: FockVector, alpha: float, warn_tol: float = 1e-6):
    """Least-squares fit of a single-mode state onto span{|a>, |-a>}.

    Returns (CsqcQubit, residual).  The residual is the norm of the
    component outside the span; above `warn_tol` a LeakageWarning fires.
    """
    if state.mode_count != 1:
        raise ValueError("decode expects a single-mode state")
    cutoff = state.cutoff
    basis = np.stack([fock.coherent_amplitudes(alpha, cutoff),
                      fock.coherent_amplitudes(-alpha, cutoff)])
    gram = basis.conj() @ basis.T
    b = basis.conj() @ state.amplitudes
    coeffs = np.linalg.solve(gram, b)
    fit = coeffs @ basis
    residual = float(np.linalg.norm(state.amplitudes - fit))
    if residual > warn_tol:
        warnings.warn(
            f"decode residual {residual:.3e} exceeds {warn_tol:.1e} (leakage)",
            LeakageWarning,
        )
    return CsqcQubit(complex(coeffs[0]), complex(coeffs[1]), alpha), residual


def product_basis_decode(state: FockVector, amplitudes):
    """Fit a k-mode state onto the 2^k coherent products |s_1 a_1,...>.

    `amplitudes` lists the per-mode encoding amplitude.  Returns
    (coefficient array indexed by sign tuples with + first, residual).
    """
    k = state.mode_count
    if len(amplitudes) != k:
        raise ValueError("need one amplitude per mode")
    cutoff = state.cutoff
    per_mode = [np.stack([fock.coherent_amplitudes(+a, cutoff),
                          fock.coherent_amplitudes(-a, cutoff)]) for a in amplitudes]
    basis = []
    for signs in np.ndindex(*(2,) * k):
        vec = per_mode[0][signs[0]]
        for m in range(1, k):
            vec = np.multiply.outer(vec, per_mode[m][signs[m]])
        basis.append(vec.ravel())
    basis = np.stack(basis)
    gram = basis.conj() @ basis.T
    b = basis.conj() @ state.amplitudes.ravel()
    coeffs = np.linalg.solve(gram, b)
    fit = coeffs @ basis
    residual = float(np.linalg.norm(state.amplitudes.ravel() - fit))
    return coeffs.reshape((2,) * k), residual


def pair_basis_decode(state: FockVector, alpha: float):
    """Fit a 4-mode state onto the 4 pairwise-correlated coherent products
    |s a, s a, t a, t a| used by the controlled-Z entanglement."""
    if state.mode_count != 4:
        raise ValueError("expects a 4-mode state")
    cutoff = state.cutoff
    per = np.stack([fock.coherent_amplitudes(+alpha, cutoff),
                    fock.coherent_amplitudes(-alpha, cutoff)])
    basis = []
    for s in (0, 1):
        for t in (0, 1):
            vec = np.multiply.outer(np.multiply.outer(per[s], per[s]),
                                    np.multiply.outer(per[t], per[t]))
            basis.append(vec.ravel())
    basis = np.stack(basis)
    gram = basis.conj() @ basis.T
    b = basis.conj() @ state.amplitudes.ravel()
    coeffs = np.linalg.solve(gram, b)
    fit = coeffs @ basis
    residual = float(np.linalg.norm(state.amplitudes.ravel() - fit))
    return coeffs.reshape(2, 2), residual


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

class Outcome(Enum):
    BELL_1 = "bell_1"
    BELL_2 = "bell_2"
    BELL_3 = "bell_3"
    BELL_4 = "bell_4"
    Z_ZERO = "z_zero"
    Z_ONE = "z_one"
    FAILURE = "failure"


# Bell outcome -> (x, z) Pauli-frame update, calibrated by enumeration
# against ideal teleportation and frozen.
BELL_FRAME = {
    Outcome.BELL_1: (0, 0),
    Outcome.BELL_2: (0, 1),
    Outcome.BELL_3: (1, 0),
    Outcome.BELL_4: (1, 1),
}


@dataclass
class MeasurementRecord:
    outcome: Outcome
    photon_counts: tuple
    pauli_frame_update: tuple = (0, 0)


def classify_bell_counts(n_a: int, n_b: int) -> Outcome:
    """Which-mode times parity classification of a Bell measurement."""
    if n_a == 0 and n_b == 0:
        return Outcome.FAILURE
    if n_a > 0 and n_b > 0:
        raise ConsistencyError(
            f"photons in both Bell outputs ({n_a}, {n_b}); ideal circuits "
            "cannot produce this"
        )
    if n_b == 0:
        return Outcome.BELL_1 if n_a % 2 == 0 else Outcome.BELL_2
    return Outcome.BELL_3 if n_b % 2 == 0 else Outcome.BELL_4


def classify_z_counts(n_a: int, n_b: int) -> Outcome:
    if n_a == 0 and n_b == 0:
        return Outcome.FAILURE
    if n_a > 0 and n_b > 0:
        raise ConsistencyError(
            f"photons in both Z-measurement outputs ({n_a}, {n_b})"
        )
    return Outcome.Z_ZERO if n_a > 0 else Outcome.Z_ONE


def z_measure(q_mode: FockVector, alpha: float, rng: np.random.Generator) -> MeasurementRecord:
    """Z-basis measurement: mix with |alpha> on a 50:50 splitter and see
    which output clicks.  |alpha> sends all photons to output 0."""
    if q_mode.mode_count != 1:
        raise ValueError("z_measure expects a single qubit mode")
    anc = fock.coherent(alpha, q_mode.cutoff)
    joint = fock.tensor(q_mode, anc)
    joint = fock.apply_beam_splitter(joint, BeamSplitterSpec(0, 1, math.pi / 4))
    counts, _ = fock.count_photons(joint, (0, 1), rng)
    return MeasurementRecord(classify_z_counts(*counts), counts)


def z_measure_distribution(q_mode: FockVector, alpha: float):
    """Exact outcome distribution of z_measure: {Outcome: probability}."""
    anc = fock.coherent(alpha, q_mode.cutoff)
    joint = fock.tensor(q_mode, anc)
    joint = fock.apply_beam_splitter(joint, BeamSplitterSpec(0, 1, math.pi / 4))
    probs = fock.outcome_probabilities(joint, (0, 1))
    dist = {Outcome.Z_ZERO: 0.0, Outcome.Z_ONE: 0.0, Outcome.FAILURE: 0.0}
    d = probs.shape[0]
    dist[Outcome.FAILURE] = float(probs[0, 0])
    dist[Outcome.Z_ZERO] = float(probs[1:, 0].sum())
    dist[Outcome.Z_ONE] = float(probs[0, 1:].sum())
    cross = float(probs[1:, 1:].sum())
    if cross > 1e-9:
        raise ConsistencyError(f"both-output probability {cross:.3e}")
    return dist


def bell_measure(state: FockVector, mode_a: int, mode_b: int,
                 rng: np.random.Generator):
    """Bell measurement on two modes of `state`: 50:50 splitter, count both.

    Returns (MeasurementRecord, collapsed FockVector minus the two modes,
    or None when the state is fully consumed).
    """
    mixed = fock.apply_beam_splitter(state, BeamSplitterSpec(mode_a, mode_b, math.pi / 4))
    counts, collapsed = fock.count_photons(mixed, (mode_a, mode_b), rng)
    outcome = classify_bell_counts(*counts)
    frame = BELL_FRAME.get(outcome, (0, 0))
    rec = MeasurementRecord(outcome, counts, frame)
    if collapsed is not None and collapsed.mode_count == 0:
        collapsed = None
    return rec, collapsed


def enumerate_bell_branches(state: FockVector, mode_a: int, mode_b: int,
                            prob_floor: float = 1e-14):
    """Deterministic branch list [(counts, probability, collapsed)] of a
    Bell measurement, covering every outcome above `prob_floor`."""
    mixed = fock.apply_beam_splitter(state, BeamSplitterSpec(mode_a, mode_b, math.pi / 4))
    probs = fock.outcome_probabilities(mixed, (mode_a, mode_b))
    branches = []
    d = probs.shape[0]
    for na in range(d):
        for nb in range(d):
            p = float(probs[na, nb])
            if p <= prob_floor:
                continue
            _, collapsed = fock.project_outcome(mixed, (mode_a, mode_b), (na, nb))
            branches.append(((na, nb), p, collapsed))
    return branches


# ---------------------------------------------------------------------------
# Entanglement resources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateKind:
    name: str  # bell | zrot | hadamard | cz
    theta: float = 0.0


@dataclass
class EntanglementResource:
    """Verified resource state for (gate) teleportation.

    `frame_fix` lists one (x, z) known-Pauli per output leg, produced by
    the factory's accepted detector pattern; teleporters fold it into the
    output Pauli frame.  `leg_amplitudes` records each leg's encoding
    amplitude (the rotation factory's second leg may differ from alpha).
    """

    kind: GateKind
    modes: FockVector
    alpha: float
    attempts_used: int = 1
    frame_fix: tuple = ((0, 0), (0, 0))
    leg_amplitudes: tuple = ()

    def __post_init__(self):
        if not self.leg_amplitudes:
            self.leg_amplitudes = (self.alpha,) * self.modes.mode_count

    def leg_count(self) -> int:
        return self.modes.mode_count


class FactoryError(fock.FockError):
    """Repeat-until-success factory exhausted its attempt budget."""


def make_bell_pair(alpha: float, cutoff: int | None = None) -> EntanglementResource:
    """|alpha,alpha> + |-alpha,-alpha| by splitting a sqrt(2)a diagonal state.

    The diagonal state enters the second splitter port so both outputs keep
    positive amplitude under the module sign convention.
    """
    beta = math.sqrt(2.0) * alpha
    if cutoff is None:
        cutoff = fock.default_cutoff(beta)
    if alpha == 0.0:
        raise fock.DegenerateStateError("alpha = 0 gives a vacuum pair")
    cat = fock.cat_state(beta, +1, cutoff)
    pair = fock.tensor(fock.vacuum(1, cutoff), cat)
    pair = fock.apply_beam_splitter(pair, BeamSplitterSpec(0, 1, math.pi / 4))
    return EntanglementResource(GateKind("bell"), pair, alpha)


def _symmetric_bs(state: FockVector, i: int, j: int, reflectivity_angle: float) -> FockVector:
    """Beam splitter in the symmetric convention
    [[sin t, i cos t], [i cos t, sin t]] (reflectivity cos t), realized as
    the real splitter wrapped in +-pi/4 phase plates."""
    t = reflectivity_angle
    state = fock.phase_shift(state, i, -math.pi / 4)
    state = fock.phase_shift(state, j, +math.pi / 4)
    state = fock.apply_beam_splitter(state, BeamSplitterSpec(i, j, math.pi / 2 - t))
    state = fock.phase_shift(state, i, +math.pi / 4)
    state = fock.phase_shift(state, j, -math.pi / 4)
    return state


_ALPHA_PRIME = 1.0 / math.sqrt(2.0)


def _zrot_premeasure(theta: float, alpha: float, beta: float, cutoff: int) -> FockVector:
    """Pre-detection state of the rotation-entanglement factory.

    Modes: 0 = consumed 1/sqrt(2) leg, 1 = alpha leg, 2 = beta leg,
    3 = coherent ancilla.  Detection happens on (0, 3).
    """
    ap = _ALPHA_PRIME
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    mid = math.sqrt(alpha * alpha + 0.5)

    state = fock.tensor(fock.tensor(fock.vacuum(1, cutoff), fock.vacuum(1, cutoff)),
                        fock.cat_state(gamma, +1, cutoff))
    # three-way split as a two-splitter cascade: gamma -> (a', alpha, beta)
    theta_a = math.acos(min(1.0, beta / gamma))
    state = fock.apply_beam_splitter(state, BeamSplitterSpec(1, 2, theta_a))
    theta_b = math.asin(min(1.0, ap / mid))
    state = fock.apply_beam_splitter(state, BeamSplitterSpec(0, 1, theta_b))

    state = fock.tensor(state, fock.coherent(ap, cutoff))
    # mixer with reflectivity cos(theta_mix); theta_mix = -theta makes the
    # (1, 0) detector pattern deliver the canonical e^{+-i theta} phases
    return _symmetric_bs(state, 0, 3, -theta)


_ZROT_PATTERNS = ((1, 0), (0, 1))


def _finish_zrot(state: FockVector, pattern, theta: float, alpha: float, beta: float,
                 attempts: int) -> EntanglementResource:
    """Collapse the factory state on an accepted pattern and package it.

    Pattern (0, 1) yields the canonical state with an extra branch sign,
    recorded as a Z fix on the output leg.
    """
    _, collapsed = fock.project_outcome(state, (0, 3), pattern)
    z_fix = 1 if pattern == (0, 1) else 0
    return EntanglementResource(
        GateKind("zrot", theta), collapsed, alpha, attempts,
        frame_fix=((0, 0), (0, z_fix)), leg_amplitudes=(alpha, beta),
    )


def zrot_entanglement(theta: float, alpha: float, beta: float,
                      rng: np.random.Generator, cutoff: int | None = None,
                      max_attempts: int = 10_000) -> EntanglementResource:
    """Repeat-until-success factory for e^{i t}|a,b> + e^{-i t}|-a,-b>.

    Accepts when the two detectors see exactly one photon in total.
    """
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    state = _zrot_premeasure(theta, alpha, beta, cutoff)
    probs = fock.outcome_probabilities(state, (0, 3))
    flat = probs.ravel() / probs.sum()
    d = probs.shape[0]
    for attempt in range(1, max_attempts + 1):
        idx = rng.choice(flat.size, p=flat)
        pattern = tuple(int(v) for v in np.unravel_index(idx, probs.shape))
        if sum(pattern) == 1:
            return _finish_zrot(state, pattern, theta, alpha, beta, attempt)
    raise FactoryError(f"no acceptance in {max_attempts} attempts")


def zrot_entanglement_projected(theta: float, alpha: float, beta: float,
                                pattern=(1, 0), cutoff: int | None = None):
    """Deterministic factory branch: project onto one accepted pattern.

    Returns (pattern probability, EntanglementResource).
    """
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    state = _zrot_premeasure(theta, alpha, beta, cutoff)
    p, _ = fock.project_outcome(state, (0, 3), pattern)
    return p, _finish_zrot(state, pattern, theta, alpha, beta, 1)


def zrot_acceptance_probability(theta: float, alpha: float, beta: float,
                                cutoff: int | None = None) -> float:
    """Exact probability that one factory attempt is accepted."""
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    state = _zrot_premeasure(theta, alpha, beta, cutoff)
    probs = fock.outcome_probabilities(state, (0, 3))
    return float(probs[1, 0] + probs[0, 1])


_HADAMARD_THETA = 3.0 * math.pi / 4.0
_HADAMARD_THETA_PRIME = math.pi / 4.0
_HADAMARD_DELTA = math.pi / 4.0


def _hadamard_combine(c1: EntanglementResource, c2: EntanglementResource,
                      alpha: float) -> FockVector:
    """Tensor two rotation resources and mix their 1/sqrt(2) legs."""
    joint = fock.tensor(c1.modes, c2.modes)  # (a1, b1, a2, b2)
    return _symmetric_bs(joint, 1, 3, _HADAMARD_DELTA)


def _finish_hadamard(state: FockVector, pattern, alpha: float, attempts: int,
                     z1: int, z2: int) -> EntanglementResource:
    """Project the combiner state on an accepted pattern, apply the known
    per-pattern X correction (pi phase plates), and carry the copies'
    Z fixes onto the respective legs."""
    _, collapsed = fock.project_outcome(state, (1, 3), pattern)
    if pattern == (1, 0):
        collapsed = pauli_x(collapsed, 0)
        collapsed = pauli_x(collapsed, 1)
    return EntanglementResource(
        GateKind("hadamard"), collapsed, alpha, attempts,
        frame_fix=((0, z1), (0, z2)),
    )


def hadamard_entanglement(alpha: float, rng: np.random.Generator,
                          cutoff: int | None = None,
                          max_attempts: int = 10_000) -> EntanglementResource:
    """|a,a> + |a,-a> + |-a,a> - |-a,-a> via two rotation factories.

    Overall acceptance is the product of three roughly 1:3 stages.
    """
    beta = _ALPHA_PRIME
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    attempts = 0
    budget = max_attempts
    while budget > 0:
        c1 = zrot_entanglement(_HADAMARD_THETA, alpha, beta, rng, cutoff, budget)
        attempts += c1.attempts_used
        budget -= c1.attempts_used
        c2 = zrot_entanglement(_HADAMARD_THETA_PRIME, alpha, beta, rng, cutoff, max(budget, 1))
        attempts += c2.attempts_used
        budget -= c2.attempts_used
        combined = _hadamard_combine(c1, c2, alpha)
        probs = fock.outcome_probabilities(combined, (1, 3))
        counts = _sample_counts(probs, rng)
        attempts += 1
        budget -= 1
        if sum(counts) == 1:
            z1 = c1.frame_fix[1][1]
            z2 = c2.frame_fix[1][1]
            return _finish_hadamard(combined, counts, alpha, attempts, z1, z2)
    raise FactoryError(f"no acceptance in {max_attempts} attempts")


def _sample_counts(probs: np.ndarray, rng: np.random.Generator):
    flat = probs.ravel() / probs.sum()
    idx = rng.choice(flat.size, p=flat)
    return tuple(int(v) for v in np.unravel_index(idx, probs.shape))


def hadamard_entanglement_projected(alpha: float, pattern=(0, 1),
                                    cutoff: int | None = None,
                                    copy_patterns=((1, 0), (1, 0))):
    """Deterministic Hadamard resource via chosen detector patterns."""
    beta = _ALPHA_PRIME
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    p1, c1 = zrot_entanglement_projected(_HADAMARD_THETA, alpha, beta,
                                         copy_patterns[0], cutoff)
    p2, c2 = zrot_entanglement_projected(_HADAMARD_THETA_PRIME, alpha, beta,
                                         copy_patterns[1], cutoff)
    combined = _hadamard_combine(c1, c2, alpha)
    p3, _ = fock.project_outcome(combined, (1, 3), pattern)
    res = _finish_hadamard(combined, pattern, alpha, 1,
                           c1.frame_fix[1][1], c2.frame_fix[1][1])
    return p1 * p2 * p3, res


def hadamard_acceptance_probability(alpha: float, cutoff: int | None = None) -> float:
    """Expected overall factory acceptance: product of the three stages."""
    beta = _ALPHA_PRIME
    gamma = math.sqrt(alpha * alpha + beta * beta + 0.5)
    if cutoff is None:
        cutoff = fock.default_cutoff(gamma)
    pz1 = zrot_acceptance_probability(_HADAMARD_THETA, alpha, beta, cutoff)
    pz2 = zrot_acceptance_probability(_HADAMARD_THETA_PRIME, alpha, beta, cutoff)
    _, c1 = zrot_entanglement_projected(_HADAMARD_THETA, alpha, beta, (1, 0), cutoff)
    _, c2 = zrot_entanglement_projected(_HADAMARD_THETA_PRIME, alpha, beta, (1, 0), cutoff)
    combined = _hadamard_combine(c1, c2, alpha)
    probs = fock.outcome_probabilities(combined, (1, 3))
    return pz1 * pz2 * float(probs[1, 0] + probs[0, 1])


def cz_entanglement(alpha: float, rng: np.random.Generator | None = None,
                    cutoff: int | None = None, work_cutoff: int | None = None,
                    max_attempts: int = 10_000) -> EntanglementResource:
    """Four-mode controlled-Z entanglement from a sqrt(2)a Hadamard resource.

    Each Hadamard output is split 50:50 against vacuum (vacuum enters the
    first port so both halves keep amplitude +-alpha), yielding the
    pairwise-correlated pattern with coefficients (1, 1, 1, -1).

    When `rng` is None the factory runs deterministically on the most
    likely accepted pattern.  `cutoff` is the cutoff of the delivered
    4-mode state (the generation runs at the larger `work_cutoff`).
    """
    big = math.sqrt(2.0) * alpha
    beta = _ALPHA_PRIME
    gamma = math.sqrt(big * big + beta * beta + 0.5)
    if work_cutoff is None:
        work_cutoff = fock.default_cutoff(gamma)
    if cutoff is None:
        cutoff = fock.default_cutoff(alpha)
    if rng is None:
        _, hres = hadamard_entanglement_projected(big, cutoff=work_cutoff)
    else:
        hres = hadamard_entanglement(big, rng, work_cutoff, max_attempts)
    legs = hres.modes  # (a1, a2) at amplitude sqrt(2) alpha
    # split each leg: modes (v1, a1, v2, a2) -> pairs ((v1, a1), (v2, a2))
    state = fock.tensor(fock.vacuum(1, work_cutoff), legs)           # (v1, a1, a2)
    state = FockVector(np.moveaxis(
        fock.tensor(state, fock.vacuum(1, work_cutoff)).amplitudes, 3, 2),
        state.norm_weight)                                            # (v1, a1, v2, a2)
    state = fock.apply_beam_splitter(state, BeamSplitterSpec(0, 1, math.pi / 4))
    state = fock.apply_beam_splitter(state, BeamSplitterSpec(2, 3, math.pi / 4))
    state = fock.retruncate(state, cutoff, tail_tol=1e-9)
    z1 = hres.frame_fix[0][1]
    z2 = hres.frame_fix[1][1]
    return EntanglementResource(
        GateKind("cz"), state, alpha, hres.attempts_used,
        frame_fix=((0, 0), (0, z1), (0, 0), (0, z2)),
    )


# ---------------------------------------------------------------------------
# Teleportation and teleported gates
# ---------------------------------------------------------------------------

def _ideal_unitary(kind: GateKind) -> np.ndarray:
    if kind.name == "bell":
        return np.eye(2, dtype=complex)
    if kind.name == "zrot":
        return np.diag([cmath.exp(1j * kind.theta), cmath.exp(-1j * kind.theta)])
    if kind.name == "hadamard":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
    if kind.name == "cz":
        return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    raise ValueError(f"unknown gate kind {kind.name!r}")


_PAULI = {
    (0, 0): np.eye(2, dtype=complex),
    (0, 1): np.diag([1.0, -1.0]).astype(complex),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (1, 1): np.array([[0, 1], [1, 0]], dtype=complex) @ np.diag([1.0, -1.0]),
}


def _proportional(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return False
    return abs(abs(np.vdot(a, b)) / (na * nb) - 1.0) < tol


def correction_frame(kind: GateKind, outcome: Outcome):
    """Pauli (x, z) undoing a Bell outcome through gate kind U.

    The outcome leaves U P on the coefficients; the correction is U P U^+
    whenever that conjugation is (projectively) a Pauli.  For zrot this
    holds exactly when theta is a multiple of pi/4; other angles herald a
    conjugated rotation on the X-type outcomes and None is returned.
    """
    base = BELL_FRAME[outcome]
    u = _ideal_unitary(kind)
    m = u @ _PAULI[base] @ u.conj().T
    for bits, p in _PAULI.items():
        if _proportional(m.ravel(), p.ravel()):
            return bits
    return None


def teleport(q: CsqcQubit, resource: EntanglementResource,
             rng: np.random.Generator):
    """Teleport a qubit through a Bell resource.

    Returns (MeasurementRecord, output CsqcQubit or None on failure).
    The output is not corrected; the record carries the frame update.
    """
    if resource.kind.name != "bell":
        raise ResourceMismatchError("teleport requires a bell resource")
    if abs(resource.alpha - q.alpha) > 1e-12:
        raise ResourceMismatchError(
            f"qubit alpha {q.alpha} does not match resource alpha {resource.alpha}"
        )
    joint = fock.tensor(encode(q, resource.modes.cutoff), resource.modes)
    rec, collapsed = bell_measure(joint, 0, 1, rng)
    if rec.outcome is Outcome.FAILURE:
        return rec, None
    out, _ = decode(collapsed, q.alpha)
    return rec, out


def teleported_gate(kind_name: str, inputs, resource: EntanglementResource,
                    rng: np.random.Generator, theta: float = 0.0):
    """Apply a teleported gate; `inputs` is one qubit (zrot/hadamard) or a
    pair (cz).  Per-qubit failure erases that qubit (None in the outputs).

    Returns (records, outputs) with one record and one output per qubit.
    """
    if resource.kind.name != kind_name:
        raise ResourceMismatchError(
            f"resource kind {resource.kind.name!r} does not match {kind_name!r}"
        )
    if kind_name in ("zrot", "hadamard"):
        q = inputs if isinstance(inputs, CsqcQubit) else inputs[0]
        if abs(resource.alpha - q.alpha) > 1e-12:
            raise ResourceMismatchError("input/resource amplitude mismatch")
        joint = fock.tensor(encode(q, resource.modes.cutoff), resource.modes)
        rec, collapsed = bell_measure(joint, 0, 1, rng)
        if rec.outcome is Outcome.FAILURE:
            return (rec,), (None,)
        frame = correction_frame(resource.kind, rec.outcome)
        fx, fz = resource.frame_fix[1]
        rec.pauli_frame_update = (frame[0] ^ fx, frame[1] ^ fz) if frame else None
        out, _ = decode(collapsed, q.alpha)
        return (rec,), (out,)
    if kind_name == "cz":
        return _teleported_cz(inputs, resource, rng)
    raise ValueError(f"unknown teleported gate {kind_name!r}")


def _cz_pair_frames(o_a, o_b, resource: EntanglementResource):
    """CZ conjugation mixes the two teleporters' frames: X_a grows Z_b."""
    xa, za = BELL_FRAME[o_a]
    xb, zb = BELL_FRAME[o_b]
    fa = (xa, za ^ xb)
    fb = (xb, zb ^ xa)
    fa = (fa[0] ^ resource.frame_fix[1][0], fa[1] ^ resource.frame_fix[1][1])
    fb = (fb[0] ^ resource.frame_fix[3][0], fb[1] ^ resource.frame_fix[3][1])
    return fa, fb


def _teleported_cz(inputs, resource, rng):
    q_a, q_b = inputs
    cutoff = resource.modes.cutoff
    stage = fock.tensor(encode(q_a, cutoff), resource.modes)  # (in_a, m1..m4)
    rec_a, collapsed = bell_measure(stage, 0, 1, rng)
    if rec_a.outcome is Outcome.FAILURE:
        # qubit a erased; teleport b through its (now unverified) half
        if collapsed is None:
            return (rec_a, MeasurementRecord(Outcome.FAILURE, ())), (None, None)
        stage_b = fock.tensor(encode(q_b, cutoff), collapsed)  # (in_b, out_a, m3, m4)
        rec_b, coll_b = bell_measure(stage_b, 0, 2, rng)
        return (rec_a, rec_b), (None, None if rec_b.outcome is Outcome.FAILURE else "entangled")
    # collapsed modes: (out_a, m3, m4)
    stage_b = fock.tensor(encode(q_b, cutoff), collapsed)  # (in_b, out_a, m3, m4)
    rec_b, coll_b = bell_measure(stage_b, 0, 2, rng)
    if rec_b.outcome is Outcome.FAILURE:
        return (rec_a, rec_b), (None, None)
    fa, fb = _cz_pair_frames(rec_a.outcome, rec_b.outcome, resource)
    rec_a.pauli_frame_update = fa
    rec_b.pauli_frame_update = fb
    # coll_b modes: (out_a, out_b); entangled pair, return as a joint state
    return (rec_a, rec_b), coll_b


# ---------------------------------------------------------------------------
# Deterministic verification (branch enumeration)
# ---------------------------------------------------------------------------

def verify_resource(resource: EntanglementResource, tol: float = 1e-8) -> dict:
    """Check a resource state against its kind's ideal coefficient pattern.

    Returns a report dict with projective fidelity and residual; raises
    nothing (callers decide).  The recorded frame fixes are unapplied
    before comparison.
    """
    kind = resource.kind
    a = resource.alpha
    if kind.name in ("bell", "zrot", "hadamard"):
        coeffs, residual = product_basis_decode(resource.modes, resource.leg_amplitudes)
        coeffs = _unfix_coeffs_2mode(coeffs, resource.frame_fix)
        ideal = _ideal_pattern_2mode(kind)
        fid = coeff_fidelity(coeffs.ravel(), ideal.ravel())
    elif kind.name == "cz":
        coeffs, residual = pair_basis_decode(resource.modes, a)
        coeffs = _unfix_coeffs_pair(coeffs, resource.frame_fix)
        ideal = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)
        fid = coeff_fidelity(coeffs.ravel(), ideal.ravel())
    else:
        raise ValueError(kind.name)
    return {
        "kind": kind.name,
        "theta": kind.theta,
        "alpha": a,
        "fidelity": fid,
        "residual": residual,
        "pass": bool(1.0 - fid < tol and residual < math.sqrt(tol)),
    }


def _ideal_pattern_2mode(kind: GateKind) -> np.ndarray:
    if kind.name == "bell":
        return np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
    if kind.name == "zrot":
        return np.array([[cmath.exp(1j * kind.theta), 0.0],
                         [0.0, cmath.exp(-1j * kind.theta)]])
    if kind.name == "hadamard":
        return np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)
    raise ValueError(kind.name)


def _unfix_coeffs_2mode(coeffs: np.ndarray, frame_fix) -> np.ndarray:
    out = coeffs.copy()
    for leg, (x, z) in enumerate(frame_fix):
        if z:
            sl = [slice(None), slice(None)]
            sl[leg] = 1
            out[tuple(sl)] = -out[tuple(sl)]
        if x:
            out = np.flip(out, axis=leg)
    return out


def _unfix_coeffs_pair(coeffs: np.ndarray, frame_fix) -> np.ndarray:
    # pair coefficients indexed (s, t); fixes on legs 1 and 3 act on s and t
    out = coeffs.copy()
    for axis, leg in ((0, 1), (1, 3)):
        x, z = frame_fix[leg]
        if z:
            sl = [slice(None), slice(None)]
            sl[axis] = 1
            out[tuple(sl)] = -out[tuple(sl)]
        if x:
            out = np.flip(out, axis=axis)
    return out


def enumerate_teleport_branches(q: CsqcQubit, resource: EntanglementResource,
                                prob_floor: float = 1e-12):
    """All Bell branches of a (gate) teleportation of a single qubit.

    Yields dicts with counts, outcome, probability, decoded output, and
    the post-frame projective fidelity against the ideal gate action.
    """
    kind = resource.kind
    ideal = _ideal_unitary(kind) @ q.coeffs()
    joint = fock.tensor(encode(q, resource.modes.cutoff), resource.modes)
    results = []
    for counts, p, collapsed in enumerate_bell_branches(joint, 0, 1, prob_floor):
        outcome = classify_bell_counts(*counts)
        entry = {"counts": counts, "outcome": outcome, "probability": p}
        if outcome is Outcome.FAILURE:
            entry["fidelity"] = None
        else:
            frame = correction_frame(kind, outcome)
            fx, fz = resource.frame_fix[1]
            out, residual = decode(collapsed, q.alpha, warn_tol=1e-4)
            entry["residual"] = residual
            if frame is None:
                entry["fidelity"] = None
                entry["conjugated"] = True
            else:
                corrected = out.apply_pauli(frame[0] ^ fx, frame[1] ^ fz)
                entry["fidelity"] = coeff_fidelity(corrected.coeffs(), ideal)
        results.append(entry)
    return results


def gate_failure_probability(q: CsqcQubit, resource: EntanglementResource) -> float:
    """Exact per-qubit failure probability: zero photons in the Bell
    measurement of this qubit's teleporter.

    Computed by contracting the input and the resource with the vacuum
    row of the splitter unitary, so no large joint state is built.
    """
    cutoff = resource.modes.cutoff
    d = cutoff + 1
    u2 = fock._bs_unitary(d, math.pi / 4)
    row = u2[0].reshape(d, d)  # <0,0| U
    inp = encode(q, cutoff).amplitudes
    contracted = np.tensordot(inp @ row, resource.modes.amplitudes, axes=(0, 0))
    return float(np.vdot(contracted, contracted).real)


def enumerate_cz_branches(q_a: CsqcQubit, q_b: CsqcQubit,
                          resource: EntanglementResource,
                          prob_floor: float = 1e-10):
    """Both-teleporter branch enumeration of the controlled-Z gate.

    Returns (branches, failure_prob_a).  Branch entries carry the joint
    probability and the post-frame fidelity of the decoded two-qubit
    output against CZ acting on the input coefficients.
    """
    cutoff = resource.modes.cutoff
    ideal = _ideal_unitary(GateKind("cz")) @ np.kron(q_a.coeffs(), q_b.coeffs())
    stage = fock.tensor(encode(q_a, cutoff), resource.modes)
    branches = []
    fail_a = 0.0
    for counts_a, p_a, coll in enumerate_bell_branches(stage, 0, 1, prob_floor):
        outcome_a = classify_bell_counts(*counts_a)
        if outcome_a is Outcome.FAILURE:
            fail_a += p_a
            continue
        stage_b = fock.tensor(encode(q_b, cutoff), coll)  # (in_b, out_a, m3, m4)
        for counts_b, p_b, coll_b in enumerate_bell_branches(stage_b, 0, 2, prob_floor):
            outcome_b = classify_bell_counts(*counts_b)
            if outcome_b is Outcome.FAILURE:
                continue
            fa, fb = _cz_pair_frames(outcome_a, outcome_b, resource)
            coeffs, residual = product_basis_decode(
                coll_b, (resource.alpha, resource.alpha))
            coeffs = _apply_pair_pauli(coeffs, fa, fb)
            fid = coeff_fidelity(coeffs.ravel(), ideal)
            branches.append({
                "outcomes": (outcome_a, outcome_b),
                "probability": p_a * p_b,
                "fidelity": fid,
                "residual": residual,
            })
    return branches, fail_a


def _apply_pair_pauli(coeffs: np.ndarray, fa, fb) -> np.ndarray:
    out = coeffs.copy()
    for axis, (x, z) in ((0, fa), (1, fb)):
        if z:
            sl = [slice(None), slice(None)]
            sl[axis] = 1
            out[tuple(sl)] = -out[tuple(sl)]
        if x:
            out = np.flip(out, axis=axis)
    return out

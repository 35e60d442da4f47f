"""Closed-form noise parameters and the per-operation error-rate table.

Two loss conventions coexist and are always named explicitly:

* paper_literal: the heralded-failure rate q uses the effective amplitude
  a' = (1 - eta) a.
* intensity_loss: eta is an intensity fraction, so amplitudes scale by
  sqrt(1 - eta); this is the convention under which the density-operator
  loss channel reproduces the dephasing probability p exactly.

The per-operation table prices memory, Hadamard, controlled-Z, |+>
preparation and X-measurement; the 1.6 and 2.5 factors on the gate rows
are fixed worst-case constants, not recomputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PAPER_LITERAL = "paper_literal"
INTENSITY_LOSS = "intensity_loss"

H_X_FACTOR = 1.6
H_Z_FACTOR = 1.6
CZ_Z_FACTOR = 2.5


class NoiseDomainError(ValueError):
    """Parameters outside the formulas' domain."""


class RateRangeError(ValueError):
    """A derived rate fell outside [0, 1]."""


def q_of(alpha_eff: float) -> float:
    """Heralded (located) failure probability 2 / (1 + e^{2 a'^2})."""
    if alpha_eff < 0:
        raise NoiseDomainError("alpha_eff must be nonnegative")
    return 2.0 / (1.0 + math.exp(2.0 * alpha_eff * alpha_eff))


def p_of(alpha: float, eta: float) -> float:
    """Dephasing probability (1 + sinh((2 eta - 1) a^2) / sinh(a^2)) / 2."""
    if alpha <= 0:
        raise NoiseDomainError("p_of is singular at alpha = 0")
    if not 0.0 <= eta <= 1.0:
        raise NoiseDomainError("eta must lie in [0, 1]")
    a2 = alpha * alpha
    return 0.5 * (1.0 + math.sinh((2.0 * eta - 1.0) * a2) / math.sinh(a2))


def effective_alpha(alpha: float, eta: float, convention: str) -> float:
    if convention == PAPER_LITERAL:
        return (1.0 - eta) * alpha
    if convention == INTENSITY_LOSS:
        return math.sqrt(max(0.0, 1.0 - eta)) * alpha
    raise NoiseDomainError(f"unknown loss convention {convention!r}")


@dataclass
class NoiseParams:
    """(alpha, eta) and the derived rates under a named loss convention."""

    alpha: float
    eta: float
    convention: str = PAPER_LITERAL
    alpha_eff: float = field(init=False)
    p: float = field(init=False)
    q: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise NoiseDomainError("eta must lie in [0, 1]")
        self.alpha_eff = effective_alpha(self.alpha, self.eta, self.convention)
        self.p = p_of(self.alpha, self.eta) if self.alpha > 0 else 0.0
        self.q = q_of(self.alpha_eff)


@dataclass(frozen=True)
class OpNoise:
    """Located rate plus unlocated X / Z rates for one operation."""

    located: float
    unloc_x: float
    unloc_z: float

    def validate(self, name: str) -> None:
        for label, r in (("located", self.located), ("unlocated X", self.unloc_x),
                         ("unlocated Z", self.unloc_z)):
            if not 0.0 <= r <= 1.0:
                raise RateRangeError(f"{name} {label} rate {r} outside [0, 1]")


@dataclass(frozen=True)
class OpNoiseTable:
    """Error rates per operation; CZ rates apply independently per qubit,
    and the Hadamard's X and Z errors are drawn independently."""

    memory: OpNoise
    hadamard: OpNoise
    cz: OpNoise
    plus_prep: OpNoise
    x_meas: OpNoise
    memory_noise_enabled: bool = True

    def rows(self):
        return {
            "memory": self.memory,
            "hadamard": self.hadamard,
            "cz": self.cz,
            "plus_prep": self.plus_prep,
            "x_meas": self.x_meas,
        }

    def as_dict(self) -> dict:
        out = {name: {"located": r.located, "unloc_x": r.unloc_x, "unloc_z": r.unloc_z}
               for name, r in self.rows().items()}
        out["memory_noise_enabled"] = self.memory_noise_enabled
        return out


def table_from_rates(p: float, q: float, memory_noise: bool = True) -> OpNoiseTable:
    """Instantiate the operation table directly from (p, q)."""
    table = OpNoiseTable(
        memory=OpNoise(0.0, 0.0, p if memory_noise else 0.0),
        hadamard=OpNoise(q, H_X_FACTOR * p, H_Z_FACTOR * p),
        cz=OpNoise(q, 0.0, CZ_Z_FACTOR * p),
        plus_prep=OpNoise(0.0, 0.0, p),
        x_meas=OpNoise(0.0, 0.0, 0.0),
        memory_noise_enabled=memory_noise,
    )
    for name, row in table.rows().items():
        row.validate(name)
    return table


def build_table(params: NoiseParams, memory_noise: bool = True) -> OpNoiseTable:
    """Operation table from physical (alpha, eta) via the closed forms."""
    return table_from_rates(params.p, params.q, memory_noise)


def format_table(table: OpNoiseTable) -> str:
    """Aligned text rendering of the table."""
    lines = [f"{'operation':<10} {'located':>12} {'unloc X':>12} {'unloc Z':>12}"]
    for name, row in table.rows().items():
        lines.append(f"{name:<10} {row.located:>12.6g} {row.unloc_x:>12.6g} "
                     f"{row.unloc_z:>12.6g}")
    lines.append(f"memory noise enabled: {table.memory_noise_enabled}")
    return "\n".join(lines)

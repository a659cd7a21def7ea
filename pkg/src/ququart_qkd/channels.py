"""Entangled channel states, their verification checks, and the
stabilized-subspace uniqueness certificate.

A "channel" here is the shared entangled resource state itself.  Each
channel carries a fixed list of joint check measurements (one observable
per party, one expected product value); a clean channel satisfies every
check as an exact eigen-equation.  The uniqueness certificate shows the
check list pins the state completely: the joint eigenspace intersection
is one-dimensional, so any global state passing every check factorizes
as channel x environment and carries no eavesdropper correlations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import DIM, StateVector, state_from_amplitudes
from .observables import check_observable

CHECK_TOL = 1e-12
RANK_TOL = 1e-8
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class ChannelCheck:
    """One joint check: a named observable per party and the expected
    outcome product (+1 or -1)."""

    operators: tuple
    expected: int

    def __post_init__(self):
        assert self.expected in (+1, -1)
        assert all(isinstance(n, str) for n in self.operators)

    @property
    def name(self) -> str:
        return "_".join(self.operators)

    def joint_matrix(self) -> np.ndarray:
        out = np.eye(1, dtype=complex)
        for op_name in self.operators:
            out = np.kron(out, check_observable(op_name).matrix)
        return out


@dataclass(frozen=True)
class ChannelSpec:
    """A channel state together with its verification check list."""

    party_count: int
    state: StateVector
    checks: tuple

    def __post_init__(self):
        assert self.party_count in (2, 3)
        assert self.state.num_ququarts == self.party_count
        assert all(len(c.operators) == self.party_count for c in self.checks)


def two_party_channel() -> ChannelSpec:
    """The two-party channel state (|01> + |10> - |23> - |32>)/2 with its
    four checks."""
    amps = np.zeros(DIM**2, dtype=complex)
    amps[1] = 0.5    # |01>
    amps[4] = 0.5    # |10>
    amps[11] = -0.5  # |23>
    amps[14] = -0.5  # |32>
    checks = (
        ChannelCheck(("sx", "sx"), -1),
        ChannelCheck(("ux", "ux"), -1),
        ChannelCheck(("sz", "sz"), -1),
        ChannelCheck(("uz", "uz"), +1),
    )
    return ChannelSpec(2, StateVector(2, amps), checks)


THREE_PARTY_KETS = (0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (2, 2, 3), (2, 3, 2), (3, 2, 2), (3, 3, 3)


def three_party_channel() -> ChannelSpec:
    """The three-party channel state: equal weight 1/(2 sqrt 2) on the
    eight kets of THREE_PARTY_KETS, with its four checks."""
    amps = np.zeros(DIM**3, dtype=complex)
    for k, l, m in THREE_PARTY_KETS:
        amps[16 * k + 4 * l + m] = 1.0 / (2.0 * np.sqrt(2.0))
    checks = (
        ChannelCheck(("sx", "sx", "sx"), +1),
        ChannelCheck(("oz", "oz", "oz"), +1),
        ChannelCheck(("ex", "ex", "id"), +1),
        ChannelCheck(("id", "ex", "ex"), +1),
    )
    return ChannelSpec(3, StateVector(3, amps), checks)


def make_channel(party_count: int) -> ChannelSpec:
    assert party_count in (2, 3)
    return two_party_channel() if party_count == 2 else three_party_channel()


def corrupt_channel(spec: ChannelSpec, basis_index: int | None = None) -> ChannelSpec:
    """Negative control: flip the sign of one nonzero amplitude.

    The result keeps the original check list but is no longer an
    eigenstate of every check, so verification must flag it.  Default
    flips the last nonzero amplitude (|32> for two parties, |333> for
    three).
    """
    amps = np.array(spec.state.amplitudes, dtype=complex)
    nonzero = np.flatnonzero(np.abs(amps) > 0)
    if basis_index is None:
        basis_index = int(nonzero[-1])
    assert abs(amps[basis_index]) > 0, "chosen amplitude is zero"
    amps[basis_index] = -amps[basis_index]
    return ChannelSpec(spec.party_count, state_from_amplitudes(amps, spec.party_count), spec.checks)


def check_residuals(spec: ChannelSpec) -> dict[str, float]:
    """Per-check eigen-equation residuals ||O psi - expected psi||."""
    psi = spec.state.amplitudes
    out = {}
    for check in spec.checks:
        op = check.joint_matrix()
        out[check.name] = float(np.linalg.norm(op @ psi - check.expected * psi))
    return out


def verify_checks(spec: ChannelSpec) -> float:
    """Maximum residual over the channel's check list.

    A clean channel returns < 1e-12; a corrupted one returns order 1.
    """
    return max(check_residuals(spec).values())


@dataclass(frozen=True)
class SubspaceCertificate:
    """Orthonormal basis of the joint eigenspace intersection.

    dimension == 1 is the uniqueness statement: the constraint list
    admits a single state ray, so any global eigenstate of all checks is
    that ray tensored with an arbitrary environment state.
    """

    dimension: int
    basis: tuple
    residual: float

    def __post_init__(self):
        assert self.dimension == len(self.basis)
        assert self.residual < RESIDUAL_TOL, f"certificate residual too large: {self.residual}"
        for i, u in enumerate(self.basis):
            for j, v in enumerate(self.basis):
                want = 1.0 if i == j else 0.0
                assert abs(np.vdot(u.amplitudes, v.amplitudes) - want) < RESIDUAL_TOL


def constraint_matrices(spec: ChannelSpec) -> list[tuple[np.ndarray, int]]:
    return [(c.joint_matrix(), c.expected) for c in spec.checks]


def stabilized_subspace(
    constraints: Sequence[tuple[np.ndarray, int]],
    dim: int,
) -> SubspaceCertificate:
    """Intersection of the expected eigenspaces of involution constraints.

    Each constraint is (operator, expected eigenvalue) with the operator a
    Hermitian involution on the dim-dimensional space.  The subspace is
    computed from the product of the eigenprojectors (I + expected*O)/2.
    For a commuting constraint set one pass of the product is already the
    orthogonal projector onto the intersection.  The three-party check
    set does not commute pairwise, so the product is squared repeatedly
    until its singular spectrum splits cleanly at {1} versus {0}; the
    limit of that iteration is the intersection projector for any
    constraint set.  Vectors inside the intersection are fixed exactly at
    every step, so the split is unambiguous at the 1e-8 rank threshold.

    Returns a certificate whose basis residual is re-verified against the
    raw constraints, independent of the algebra above.
    """
    for op, expected in constraints:
        assert op.shape == (dim, dim), "constraint dimension mismatch"
        assert expected in (+1, -1)
        assert np.max(np.abs(op - op.conj().T)) < CHECK_TOL, "constraint not Hermitian"
        assert np.max(np.abs(op @ op - np.eye(dim))) < CHECK_TOL, "constraint not an involution"

    product = np.eye(dim, dtype=complex)
    for op, expected in constraints:
        product = product @ (np.eye(dim) + expected * op) / 2

    # Repeated squaring: contraction on everything outside the
    # intersection, identity on the intersection itself.
    for _ in range(80):
        singulars = np.linalg.svd(product, compute_uv=False)
        leaking = singulars[singulars < 1.0 - 1e-6]
        if leaking.size == 0 or float(leaking.max()) < 1e-10:
            break
        product = product @ product

    u, s, _ = np.linalg.svd(product)
    dimension = int(np.sum(s > RANK_TOL))

    basis = []
    residual = 0.0
    for k in range(dimension):
        vec = u[:, k]
        for op, expected in constraints:
            residual = max(residual, float(np.linalg.norm(op @ vec - expected * vec)))
        n = int(round(np.log(dim) / np.log(DIM)))
        basis.append(StateVector(n, vec))
    return SubspaceCertificate(dimension, tuple(basis), residual)

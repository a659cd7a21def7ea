"""Eavesdropping models and the exact prediction oracle.

Two semantics live side by side, on purpose:

* ``apply_attack`` / ``make_attack_hook`` act on pure-state trajectories
  inside a simulated session; randomness comes from the session's seeded
  generator, so sessions stay cheap and replayable.
* ``predict`` evolves the channel's density matrix through the exact
  attack channel and integrates the outcome statistics in closed form.
  It is the ground truth the Monte-Carlo sessions are validated against.

Targets are in-transit ququart positions: in a round, position 1 travels
to Bob and position 2 to Charlie.  Position 0 stays with the source
party (Alice) and is never attackable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import DIM, StateVector, embed, measure_projective
from .channels import ChannelSpec
from .observables import key_basis

ATTACK_KINDS = (
    "none",
    "intercept-computational",
    "intercept-key",
    "entangle-probe",
    "depolarize",
)

PROBABILITY_TOL = 1e-12


@dataclass(frozen=True)
class AttackModel:
    """An eavesdropping strategy applied to in-transit ququarts.

    kind "none" carries no targets; every other kind needs at least one
    target position.  strength is only meaningful for "depolarize".
    """

    kind: str = "none"
    targets: tuple = ()
    strength: float = 0.0

    def __post_init__(self):
        assert self.kind in ATTACK_KINDS, f"unknown attack kind: {self.kind!r}"
        assert 0.0 <= self.strength <= 1.0, "strength must lie in [0, 1]"
        if self.kind == "none":
            assert not self.targets, "kind none takes no targets"
        else:
            assert self.targets, "attack needs at least one target"
            assert all(t >= 1 for t in self.targets), "position 0 never transits"
            assert tuple(sorted(set(self.targets))) == self.targets, (
                "targets must be sorted and unique"
            )


@dataclass(frozen=True)
class AttackPrediction:
    """Exact per-check violation probabilities and key-phase qber."""

    violation: dict
    qber: float

    def __post_init__(self):
        for name, p in self.violation.items():
            assert -PROBABILITY_TOL <= p <= 1.0 + PROBABILITY_TOL, (name, p)
        assert -PROBABILITY_TOL <= self.qber <= 1.0 + PROBABILITY_TOL


def _validate_targets(model: AttackModel, num_parties: int):
    if model.kind == "none":
        return
    for t in model.targets:
        if not 1 <= t < num_parties:
            raise ValueError(f"invalid attack target {t} for {num_parties} parties")


def _shift_matrix(amount: int) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    for j in range(DIM):
        m[(j + amount) % DIM, j] = 1.0
    return m


def _controlled_shift() -> np.ndarray:
    """|j>|k> -> |j>|k + j mod 4> on a (target, probe) ququart pair."""
    m = np.zeros((DIM * DIM, DIM * DIM), dtype=complex)
    for j in range(DIM):
        for k in range(DIM):
            m[DIM * j + (k + j) % DIM, DIM * j + k] = 1.0
    return m


def make_attack_hook(
    model: AttackModel, num_parties: int
) -> Callable[[StateVector, np.random.Generator], StateVector]:
    """Compile an attack into a fast per-round trajectory map.

    Projectors and unitaries are embedded once up front; the returned
    hook only does matrix-vector work per round.
    """
    _validate_targets(model, num_parties)

    if model.kind == "none":
        return lambda state, rng: state

    comp_projs = {}
    key_projs = {}
    shifts = {}
    kb = key_basis()
    for t in model.targets:
        comp_projs[t] = [
            embed(np.outer(e, e.conj()), t, num_parties)
            for e in np.eye(DIM, dtype=complex)
        ]
        key_projs[t] = [embed(p, t, num_parties) for p in kb.projectors]
        shifts[t] = [embed(_shift_matrix(a), t, num_parties) for a in range(DIM)]

    if model.kind == "intercept-computational":

        def hook(state, rng):
            for t in model.targets:
                state = measure_projective(state, comp_projs[t], rng).post_state
            return state

        return hook

    if model.kind == "intercept-key":

        def hook(state, rng):
            for t in model.targets:
                state = measure_projective(state, key_projs[t], rng).post_state
            return state

        return hook

    if model.kind == "entangle-probe":
        # The probe (appended as the least significant ququart, coupled by
        # the controlled shift) ends up carrying an exact copy of the
        # target's computational digit, so its readout distribution is the
        # digit-slice weight of the state and its collapse keeps exactly
        # the matching slice.  Working on slices avoids ever materializing
        # the (num_parties + 1)-ququart register.
        dim = DIM**num_parties
        digit_at = {
            t: (np.arange(dim) // DIM ** (num_parties - 1 - t)) % DIM
            for t in model.targets
        }

        def hook(state, rng):
            for t in model.targets:
                amps = state.amplitudes
                weights = np.abs(amps) ** 2
                probs = [float(weights[digit_at[t] == k].sum()) for k in range(DIM)]
                # same single-uniform inverse-CDF walk as measure_projective
                u = rng.random()
                acc = 0.0
                outcome = DIM - 1
                for k, pk in enumerate(probs):
                    acc += pk
                    if u < acc:
                        outcome = k
                        break
                branch = np.where(digit_at[t] == outcome, amps, 0.0)
                nrm = np.linalg.norm(branch)
                if nrm < 1e-9:
                    raise RuntimeError("sampled a zero-probability measurement branch")
                state = StateVector(state.num_ququarts, branch / nrm)
            return state

        return hook

    assert model.kind == "depolarize"

    def hook(state, rng):
        for t in model.targets:
            if rng.random() >= model.strength:
                continue
            # decouple the target by a computational readout, then
            # re-prepare a uniformly random basis state in its place;
            # averaged over trajectories this replaces the target's
            # marginal with the maximally mixed state
            measured = measure_projective(state, comp_projs[t], rng)
            fresh = int(rng.integers(DIM))
            amount = (fresh - measured.outcome_index) % DIM
            state = StateVector(
                state.num_ququarts, shifts[t][amount] @ measured.post_state.amplitudes
            )
        return state

    return hook


def _pair_coupling(pair_unitary: np.ndarray, first: int, num_ququarts: int) -> np.ndarray:
    """Embed a two-ququart unitary acting on positions (first, last)."""
    dim = DIM**num_ququarts
    out = np.zeros((dim, dim), dtype=complex)
    last = num_ququarts - 1
    assert first < last
    for col in range(dim):
        digits = _digits(col, num_ququarts)
        pair_in = DIM * digits[first] + digits[last]
        for pair_out in range(DIM * DIM):
            amp = pair_unitary[pair_out, pair_in]
            if amp == 0:
                continue
            digits_out = list(digits)
            digits_out[first], digits_out[last] = divmod(pair_out, DIM)
            out[_index(digits_out), col] += amp
    return out


def _digits(index: int, n: int) -> list:
    digits = []
    for _ in range(n):
        digits.append(index % DIM)
        index //= DIM
    return digits[::-1]


def _index(digits) -> int:
    out = 0
    for d in digits:
        out = DIM * out + d
    return out


def apply_attack(
    state: StateVector, model: AttackModel, rng: np.random.Generator
) -> StateVector:
    """One-shot trajectory application; sessions use make_attack_hook."""
    return make_attack_hook(model, state.num_ququarts)(state, rng)


# ---------------------------------------------------------------------------
# density-matrix oracle


def _dephase(rho: np.ndarray, projs) -> np.ndarray:
    out = np.zeros_like(rho)
    for p in projs:
        out += p @ rho @ p
    return out


def _replace_with_mixed(rho: np.ndarray, target: int, num_parties: int) -> np.ndarray:
    """Exact channel that swaps the target's marginal for I/4."""
    out = np.zeros_like(rho)
    for j in range(DIM):
        for k in range(DIM):
            kraus = embed(_single_ketbra(j, k), target, num_parties) / 2.0
            out += kraus @ rho @ kraus.conj().T
    return out


def _single_ketbra(i: int, j: int) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    m[i, j] = 1.0
    return m


def _probe_channel(rho: np.ndarray, target: int, num_parties: int) -> np.ndarray:
    """Couple a fresh probe to the target, then trace the probe out."""
    probe0 = np.zeros((DIM, DIM), dtype=complex)
    probe0[0, 0] = 1.0
    big = np.kron(rho, probe0)
    u = _pair_coupling(_controlled_shift(), target, num_parties + 1)
    big = u @ big @ u.conj().T
    # partial trace over the last ququart
    d = DIM**num_parties
    big = big.reshape(d, DIM, d, DIM)
    return np.einsum("ikjk->ij", big)


def attack_channel(model: AttackModel, rho: np.ndarray, num_parties: int) -> np.ndarray:
    """Apply the exact (generally mixing) channel of an attack model."""
    _validate_targets(model, num_parties)
    if model.kind == "none":
        return rho
    kb = key_basis()
    for t in model.targets:
        if model.kind == "intercept-computational":
            projs = [
                embed(np.outer(e, e.conj()), t, num_parties)
                for e in np.eye(DIM, dtype=complex)
            ]
            rho = _dephase(rho, projs)
        elif model.kind == "intercept-key":
            rho = _dephase(rho, [embed(p, t, num_parties) for p in kb.projectors])
        elif model.kind == "entangle-probe":
            rho = _probe_channel(rho, t, num_parties)
        else:
            rho = (1.0 - model.strength) * rho + model.strength * _replace_with_mixed(
                rho, t, num_parties
            )
    return rho


def _key_joint_distribution(rho: np.ndarray, num_parties: int) -> np.ndarray:
    """Joint probabilities over all parties' key-basis outcomes."""
    kb = key_basis()
    shape = (4,) * num_parties
    joint = np.zeros(shape)
    for idx in np.ndindex(*shape):
        proj = np.eye(1, dtype=complex)
        for outcome in idx:
            proj = np.kron(proj, kb.projectors[outcome])
        joint[idx] = float(np.real(np.trace(rho @ proj)))
    return joint


def _bits(index: int) -> tuple[int, int]:
    return index // 2, index % 2


def _two_party_qber(joint: np.ndarray) -> float:
    """Per-bit error rate after the receiver's double bit flip."""
    err = 0.0
    for a in range(4):
        for b in range(4):
            pa, ha = _bits(a)
            pb, hb = _bits(b)
            err += joint[a, b] * ((pa != pb ^ 1) + (ha != hb ^ 1)) / 2.0
    return err


def _three_party_qber(joint: np.ndarray) -> float:
    """Per-bit error of the XOR-deduced third outcome versus the actual."""
    err = 0.0
    for a in range(4):
        for b in range(4):
            for c in range(4):
                pa, ha = _bits(a)
                pb, hb = _bits(b)
                pc, hc = _bits(c)
                err += joint[a, b, c] * ((pa ^ pb != pc) + (ha ^ hb != hc)) / 2.0
    return err


def predict(model: AttackModel, spec: ChannelSpec) -> AttackPrediction:
    """Exact detection and error statistics for an attacked channel.

    Per check (O, expected), the violation probability is
    tr(rho' (I - expected*O)/2): the joint product-measurement outcome
    disagrees with the expected eigenvalue exactly on that projector's
    support.  The qber comes from the key-basis joint distribution.
    """
    _validate_targets(model, spec.party_count)
    psi = spec.state.amplitudes
    rho = attack_channel(model, np.outer(psi, psi.conj()), spec.party_count)

    violation = {}
    eye = np.eye(rho.shape[0])
    for check in spec.checks:
        op = check.joint_matrix()
        p = float(np.real(np.trace(rho @ (eye - check.expected * op) / 2.0)))
        violation[check.name] = min(max(p, 0.0), 1.0)

    joint = _key_joint_distribution(rho, spec.party_count)
    if spec.party_count == 2:
        qber = _two_party_qber(joint)
    else:
        qber = _three_party_qber(joint)
    return AttackPrediction(violation, float(min(max(qber, 0.0), 1.0)))

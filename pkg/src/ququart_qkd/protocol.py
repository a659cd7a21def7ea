"""Message-driven protocol engine: verification and key phases.

A session is a single logical thread.  Parties never share state; all
classical coupling goes through a FIFO message bus whose transcript makes
runs auditable.  Each round consumes one fresh copy of the channel state,
optionally filtered through an attack hook on the in-transit ququarts.

Verification phase: every party picks a check observable at random from
its menu and measures it; announcements are compared against the channel's
expected outcome products, and rounds whose operator choices match no
listed check are discarded.  Key phase: every party measures in the key
basis; a random sample of rounds is revealed and consumed to estimate the
error rate, and the rest become key bits.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .linalg import embed, measure_projective
from .observables import KeyOutcome, check_observable, key_basis, outcome_from_bits, outcome_from_index
from .channels import ChannelSpec
from .attacks import AttackModel, make_attack_hook

ALICE = "alice"
BOB = "bob"
CHARLIE = "charlie"
PARTY_ORDER = (ALICE, BOB, CHARLIE)

TWO_PARTY_MENU = ("sx", "ux", "sz", "uz")
THREE_PARTY_MENU = ("sx", "ex", "oz", "id")

DISCARD_MISMATCH = "operator-mismatch"
DISCARD_SAMPLE = "sample-consumed"


@dataclass(frozen=True)
class ClassicalMessage:
    """One classical announcement with a canonical serialized form."""

    sender: str
    kind: str
    payload: dict

    def serialize(self) -> str:
        parts = [f"sender={self.sender}", f"kind={self.kind}"]
        for k in sorted(self.payload):
            parts.append(f"{k}={_fmt_payload(self.payload[k])}")
        return " ".join(parts)


def _fmt_payload(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, dict):
        return ";".join(f"{k}:{value[k]}" for k in sorted(value))
    return str(value)


@dataclass
class MessageBus:
    """FIFO delivery with a full transcript of everything posted."""

    transcript: list = field(default_factory=list)
    _queue: deque = field(default_factory=deque)

    def post(self, message: ClassicalMessage):
        self._queue.append(message)
        self.transcript.append(message)

    def drain(self) -> list:
        out = list(self._queue)
        self._queue.clear()
        return out


@dataclass(frozen=True)
class RoundRecord:
    """Per-round log entry; kept=False always carries a discard reason."""

    index: int
    phase: str
    choices: tuple
    outcomes: tuple
    kept: bool
    discard_reason: str | None = None

    def __post_init__(self):
        assert self.phase in ("verify", "key")
        if not self.kept:
            assert self.discard_reason in (DISCARD_MISMATCH, DISCARD_SAMPLE)


@dataclass(frozen=True)
class SiftedKey:
    """Key material: two bits per kept key round, parity bit first."""

    bits: tuple

    def __post_init__(self):
        assert len(self.bits) % 2 == 0
        assert all(b in (0, 1) for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)


def sift_key(outcomes) -> SiftedKey:
    """Serialize key outcomes to bits in round order, parity then phase."""
    bits = []
    for o in outcomes:
        assert o is not None, "missing outcome in a kept round"
        bits.extend((o.parity_bit, o.phase_bit))
    return SiftedKey(tuple(bits))


def compare_keys(a: SiftedKey, b: SiftedKey) -> list:
    """Positions where the two keys disagree (diagnostic)."""
    assert len(a) == len(b)
    return [i for i, (x, y) in enumerate(zip(a.bits, b.bits)) if x != y]


@dataclass(frozen=True)
class CheckTally:
    rounds: int
    violations: int

    @property
    def frequency(self) -> float:
        return self.violations / self.rounds if self.rounds else 0.0


@dataclass(frozen=True)
class VerificationSummary:
    records: tuple
    passed: bool
    tallies: dict  # check name -> CheckTally, in channel check order
    matched: int
    discarded: int
    vacuous: bool

    @property
    def total_violations(self) -> int:
        return sum(t.violations for t in self.tallies.values())


def _party_positions(spec: ChannelSpec):
    return PARTY_ORDER[: spec.party_count]


def _menu(spec: ChannelSpec):
    return TWO_PARTY_MENU if spec.party_count == 2 else THREE_PARTY_MENU


def _sign_projector_cache(spec: ChannelSpec):
    """Embedded (+1, -1) eigenprojector pairs per (position, observable)."""
    cache = {}
    for pos in range(spec.party_count):
        for name in _menu(spec):
            if name == "id":
                continue
            obs = check_observable(name)
            cache[pos, name] = (
                embed(obs.plus_projector, pos, spec.party_count),
                embed(obs.minus_projector, pos, spec.party_count),
            )
    return cache


def run_verification_phase(
    spec: ChannelSpec,
    num_rounds: int,
    attack: AttackModel,
    rngs: dict,
    bus: MessageBus,
) -> VerificationSummary:
    """Random-check phase over ``num_rounds`` fresh channel copies.

    Each party draws uniformly from its menu.  A round counts toward a
    check only when the joint choice equals that check's operator tuple;
    the identity contributes a fixed +1 announcement without touching the
    state.  pass means zero violations among matched rounds; zero matched
    rounds passes vacuously and is flagged.
    """
    assert num_rounds >= 0
    parties = _party_positions(spec)
    menu = _menu(spec)
    cache = _sign_projector_cache(spec)
    hook = make_attack_hook(attack, spec.party_count)
    expected = {c.operators: c.expected for c in spec.checks}

    tallies = {c.name: [0, 0] for c in spec.checks}
    records = []
    matched = 0
    announcements = {p: [] for p in parties}

    for index in range(num_rounds):
        state = hook(spec.state, rngs["attack"])
        choices = tuple(menu[int(rngs[p].integers(len(menu)))] for p in parties)
        outcomes = []
        for pos, name in enumerate(choices):
            if name == "id":
                outcomes.append(+1)
                continue
            result = measure_projective(state, cache[pos, name], rngs[parties[pos]])
            outcomes.append(+1 if result.outcome_index == 0 else -1)
            state = result.post_state
        outcomes = tuple(outcomes)
        for p, name, value in zip(parties, choices, outcomes):
            announcements[p].append((index, name, value))

        if choices in expected:
            matched += 1
            check_name = "_".join(choices)
            product = int(np.prod(outcomes))
            tallies[check_name][0] += 1
            if product != expected[choices]:
                tallies[check_name][1] += 1
            records.append(RoundRecord(index, "verify", choices, outcomes, True))
        else:
            records.append(
                RoundRecord(index, "verify", choices, outcomes, False, DISCARD_MISMATCH)
            )

    # batch announcement at end of phase; per-round would be equivalent
    for p in parties:
        bus.post(ClassicalMessage(p, "operator-announcement", {"rounds": announcements[p]}))
    bus.drain()

    final = {name: CheckTally(r, v) for name, (r, v) in tallies.items()}
    violations = sum(t.violations for t in final.values())
    return VerificationSummary(
        records=tuple(records),
        passed=violations == 0,
        tallies=final,
        matched=matched,
        discarded=num_rounds - matched,
        vacuous=matched == 0,
    )


def _key_projector_cache(spec: ChannelSpec):
    kb = key_basis()
    return {
        pos: [embed(p, pos, spec.party_count) for p in kb.projectors]
        for pos in range(spec.party_count)
    }


def _select_sample(num_rounds: int, sample_fraction: float, rng) -> list:
    count = int(round(sample_fraction * num_rounds))
    count = min(count, num_rounds)
    if count == 0:
        return []
    return sorted(int(i) for i in rng.choice(num_rounds, size=count, replace=False))


def _measure_key_round(state, projs_by_pos, parties, rngs):
    outcomes = []
    for pos, party in enumerate(parties):
        result = measure_projective(state, projs_by_pos[pos], rngs[party])
        outcomes.append(outcome_from_index(result.outcome_index))
        state = result.post_state
    return outcomes


@dataclass(frozen=True)
class KeyPhaseTwoParty:
    records: tuple
    alice_key: SiftedKey
    bob_key: SiftedKey
    qber: float
    passed: bool
    sampled: int
    kept: int


def run_key_phase_two_party(
    spec: ChannelSpec,
    num_rounds: int,
    sample_fraction: float,
    qber_threshold: float,
    attack: AttackModel,
    rngs: dict,
    bus: MessageBus,
) -> KeyPhaseTwoParty:
    """Key-basis rounds, public sample re-examination, and sifting.

    The channel pairs every outcome with the opposite parity and opposite
    phase on the other side, so the receiver flips both bits; attack-free
    the two sifted keys are identical.  The publicly revealed sample is
    consumed and its per-bit mismatch fraction is the qber.
    """
    assert spec.party_count == 2
    assert 0.0 <= sample_fraction < 1.0, "sample_fraction out of range"
    assert num_rounds >= 0
    parties = _party_positions(spec)
    projs = _key_projector_cache(spec)
    hook = make_attack_hook(attack, spec.party_count)

    alice_raw, bob_raw = [], []
    for index in range(num_rounds):
        state = hook(spec.state, rngs["attack"])
        a, b = _measure_key_round(state, projs, parties, rngs)
        alice_raw.append(a)
        bob_raw.append(b)

    sample = _select_sample(num_rounds, sample_fraction, rngs["public"])
    sample_set = set(sample)
    bus.post(ClassicalMessage(ALICE, "sample-check-request", {"rounds": sample}))
    bus.post(
        ClassicalMessage(
            ALICE, "sample-check-reveal", {"outcomes": {i: alice_raw[i].label for i in sample}}
        )
    )
    bus.post(
        ClassicalMessage(
            BOB, "sample-check-reveal", {"outcomes": {i: bob_raw[i].label for i in sample}}
        )
    )
    bus.drain()

    bit_errors = 0
    for i in sample:
        a, b = alice_raw[i], bob_raw[i]
        bit_errors += (a.parity_bit != b.parity_bit ^ 1) + (a.phase_bit != b.phase_bit ^ 1)
    qber = bit_errors / (2 * len(sample)) if sample else 0.0

    records = []
    alice_kept, bob_kept = [], []
    for index in range(num_rounds):
        pair = (alice_raw[index], bob_raw[index])
        if index in sample_set:
            records.append(
                RoundRecord(index, "key", ("key", "key"), pair, False, DISCARD_SAMPLE)
            )
        else:
            records.append(RoundRecord(index, "key", ("key", "key"), pair, True))
            alice_kept.append(alice_raw[index])
            # receiver-side double flip realigns the anti-correlated pair
            b = bob_raw[index]
            bob_kept.append(outcome_from_bits(b.parity_bit ^ 1, b.phase_bit ^ 1))

    return KeyPhaseTwoParty(
        records=tuple(records),
        alice_key=sift_key(alice_kept),
        bob_key=sift_key(bob_kept),
        qber=qber,
        passed=qber <= qber_threshold,
        sampled=len(sample),
        kept=num_rounds - len(sample),
    )


def deduce_third_outcome(a: KeyOutcome, b: KeyOutcome) -> KeyOutcome:
    """XOR law of the three-party channel: the third party's bits are the
    XOR of the other two parties' bits, bitwise."""
    return outcome_from_bits(a.parity_bit ^ b.parity_bit, a.phase_bit ^ b.phase_bit)


@dataclass(frozen=True)
class KeyPhaseControlled:
    records: tuple
    bob_key: SiftedKey
    charlie_key: SiftedKey
    qber: float
    passed: bool
    sampled: int
    kept: int
    deduction_accuracy: float
    alice_permitted: bool


def run_key_phase_controlled(
    spec: ChannelSpec,
    num_rounds: int,
    sample_fraction: float,
    qber_threshold: float,
    alice_permits: bool,
    attack: AttackModel,
    rngs: dict,
    bus: MessageBus,
) -> KeyPhaseControlled:
    """Controlled key phase: the shared secret is the third party's bits.

    With the controller's reveal, Bob reconstructs Charlie's outcome by
    the XOR law round for round; a public sample of reconstructed-versus-
    actual bits estimates the qber and is consumed.  Without permission
    nothing is revealed: Bob's best guess is uniform (his marginal is
    independent of Charlie's outcome), the accuracy of that guess is
    reported, and no key material is produced.
    """
    assert spec.party_count == 3
    assert 0.0 <= sample_fraction < 1.0, "sample_fraction out of range"
    assert num_rounds >= 0
    parties = _party_positions(spec)
    projs = _key_projector_cache(spec)
    hook = make_attack_hook(attack, spec.party_count)

    alice_raw, bob_raw, charlie_raw = [], [], []
    for index in range(num_rounds):
        state = hook(spec.state, rngs["attack"])
        a, b, c = _measure_key_round(state, projs, parties, rngs)
        alice_raw.append(a)
        bob_raw.append(b)
        charlie_raw.append(c)

    if not alice_permits:
        # the controller stays silent: no reveal message ever enters the bus
        guesses = [outcome_from_index(int(rngs[BOB].integers(4))) for _ in range(num_rounds)]
        hits = sum(g.index == c.index for g, c in zip(guesses, charlie_raw))
        accuracy = hits / num_rounds if num_rounds else 0.0
        records = tuple(
            RoundRecord(i, "key", ("key",) * 3, (alice_raw[i], bob_raw[i], charlie_raw[i]), True)
            for i in range(num_rounds)
        )
        return KeyPhaseControlled(
            records=records,
            bob_key=SiftedKey(()),
            charlie_key=SiftedKey(()),
            qber=0.0,
            passed=True,
            sampled=0,
            kept=num_rounds,
            deduction_accuracy=accuracy,
            alice_permitted=False,
        )

    bus.post(
        ClassicalMessage(
            ALICE, "control-reveal", {"outcomes": {i: alice_raw[i].label for i in range(num_rounds)}}
        )
    )
    deduced = [deduce_third_outcome(a, b) for a, b in zip(alice_raw, bob_raw)]
    exact = sum(d.index == c.index for d, c in zip(deduced, charlie_raw))
    accuracy = exact / num_rounds if num_rounds else 1.0

    sample = _select_sample(num_rounds, sample_fraction, rngs["public"])
    sample_set = set(sample)
    bus.post(ClassicalMessage(BOB, "sample-check-request", {"rounds": sample}))
    bus.post(
        ClassicalMessage(
            CHARLIE, "sample-check-reveal", {"outcomes": {i: charlie_raw[i].label for i in sample}}
        )
    )
    bus.drain()

    bit_errors = 0
    for i in sample:
        d, c = deduced[i], charlie_raw[i]
        bit_errors += (d.parity_bit != c.parity_bit) + (d.phase_bit != c.phase_bit)
    qber = bit_errors / (2 * len(sample)) if sample else 0.0

    records = []
    bob_kept, charlie_kept = [], []
    for index in range(num_rounds):
        triple = (alice_raw[index], bob_raw[index], charlie_raw[index])
        if index in sample_set:
            records.append(
                RoundRecord(index, "key", ("key",) * 3, triple, False, DISCARD_SAMPLE)
            )
        else:
            records.append(RoundRecord(index, "key", ("key",) * 3, triple, True))
            bob_kept.append(deduced[index])
            charlie_kept.append(charlie_raw[index])

    return KeyPhaseControlled(
        records=tuple(records),
        bob_key=sift_key(bob_kept),
        charlie_key=sift_key(charlie_kept),
        qber=qber,
        passed=qber <= qber_threshold,
        sampled=len(sample),
        kept=num_rounds - len(sample),
        deduction_accuracy=accuracy,
        alice_permitted=True,
    )

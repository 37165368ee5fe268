"""Two-party key exchange over the pulse channel.

The receiver (Bob) drives: he announces the session, sends one outgoing
quantum frame per pulse, feeds each returned frame to his physics layer, and
acknowledges windows of pulses with DETECTIONS messages. The sender (Alice)
is purely reactive. Only the physics layer ever reads the returned frame's
phase; the sifting layer sees pulse indices and click flags, nothing else.

Sifting keeps clicked pulses (two-state variant) or clicked pulses whose
bases matched (four-state variant, after the BASES exchange). Error
estimation runs over the bits Alice discloses: everything in oracle mode
(disclosure_fraction 0, exact error rate, keys kept), or a random subset
that is then removed from both final keys.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .channel import open_in_process
from .detector import GatedDetectorConfig
from .errors import (
    ChannelError,
    ConfigError,
    ProtocolViolationError,
    SessionAborted,
    UndefinedRateError,
)
from .framing import (
    TERMINATE_CONFIG_MISMATCH,
    TERMINATE_NORMAL,
    Bases,
    Detections,
    Disclose,
    ErReport,
    Message,
    QFrameBack,
    QFrameOut,
    SessionStart,
    Terminate,
)
from .interferometer import SetupConfig, attenuator_setting, effective_visibility
from .randomness import BitSource, UniformSampler, derive_rng

# Bright reference level of the outgoing pulses; the sender's attenuator
# brings the trailing pulse down to mu_pair / 2 from here.
OUTGOING_REFERENCE_PHOTONS = 1e6
POL_HORIZONTAL = (1.0, 0.0, 0.0, 0.0)

STREAM_BITS = 0
STREAM_BASES = 1
STREAM_DISCLOSURE = 2
STREAM_GATES = 0
STREAM_ESTIMATION = 3


class ProtocolVariant(enum.Enum):
    """Two-state exchange, or the four-state variant with bases."""

    BB92 = "BB92"
    BB84 = "BB84"

    @property
    def code(self) -> int:
        return 0 if self is ProtocolVariant.BB92 else 1

    @property
    def uses_bases(self) -> bool:
        return self is ProtocolVariant.BB84

    @property
    def phase_alphabet(self) -> Tuple[float, ...]:
        if self is ProtocolVariant.BB92:
            return (0.0, math.pi)
        return (0.0, math.pi / 2.0, math.pi, 1.5 * math.pi)

    @classmethod
    def from_code(cls, code: int) -> "ProtocolVariant":
        if code == 0:
            return cls.BB92
        if code == 1:
            return cls.BB84
        raise ProtocolViolationError(f"unknown variant code {code}")


_BB92_PHASE = (0.0, math.pi)
# (basis, bit) -> phase; basis 0 keeps the two-state mapping, basis 1 uses
# the quarter-turn pair.
_BB84_PHASE = {
    (0, 0): 0.0,
    (0, 1): math.pi,
    (1, 0): math.pi / 2.0,
    (1, 1): 1.5 * math.pi,
}


def encode_phase(bit: int, basis: Optional[int] = None,
                 variant: ProtocolVariant = ProtocolVariant.BB92) -> float:
    """Phase shift encoding ``bit`` (and ``basis`` in the four-state variant)."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if variant is ProtocolVariant.BB92:
        if basis is not None:
            raise ValueError("BB92 takes no basis")
        return _BB92_PHASE[bit]
    if basis not in (0, 1):
        raise ValueError(f"BB84 requires basis 0 or 1, got {basis!r}")
    return _BB84_PHASE[(basis, bit)]


@dataclass(frozen=True)
class Seeds:
    """Independent seeds for the three random streams of a session."""

    alice: int
    bob: int
    physics: int

    def __post_init__(self):
        for name in ("alice", "bob", "physics"):
            v = getattr(self, name)
            if not (isinstance(v, int) and 0 <= v < 2 ** 64):
                raise ConfigError(f"seed {name} must be a u64, got {v!r}")

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.alice, self.bob, self.physics)


@dataclass(frozen=True)
class SessionConfig:
    """Full parameterization of one key-exchange session."""

    n_pulses: int
    variant: ProtocolVariant
    setup: SetupConfig
    detector: GatedDetectorConfig
    seeds: Seeds
    disclosure_fraction: float = 0.0
    ack_window: int = 1024
    alice_key_files: Tuple[str, ...] = ()
    bob_key_files: Tuple[str, ...] = ()

    def __post_init__(self):
        if not (isinstance(self.n_pulses, int) and self.n_pulses > 0):
            raise ConfigError(f"n_pulses must be > 0, got {self.n_pulses!r}")
        if not (0.0 <= self.disclosure_fraction <= 1.0):
            raise ConfigError(
                f"disclosure_fraction must be in [0, 1], got {self.disclosure_fraction}"
            )
        if not (isinstance(self.ack_window, int) and self.ack_window >= 1):
            raise ConfigError(f"ack_window must be >= 1, got {self.ack_window!r}")


def seeds_commitment(cfg: SessionConfig) -> bytes:
    """32-byte digest binding the session parameters and seeds."""
    blob = struct.pack(
        "<QBdQQQ",
        cfg.n_pulses,
        cfg.variant.code,
        cfg.setup.mu_pair,
        cfg.seeds.alice,
        cfg.seeds.bob,
        cfg.seeds.physics,
    )
    return hashlib.sha256(blob).digest()


def _bit_source(key_files: Tuple[str, ...], seed: int) -> BitSource:
    if key_files:
        return BitSource.from_key_files(key_files)
    return BitSource.from_rng(derive_rng(seed, STREAM_BITS))


def _check_supply(source: BitSource, needed: int, who: str) -> None:
    left = source.remaining()
    if left is not None and left < needed:
        raise ConfigError(f"{who} bit source holds {left} bits, session needs {needed}")


@dataclass(frozen=True)
class SessionResult:
    """Outcome of one session, assembled from the driver's wire view.

    ``sifted_key_alice`` is the full peer key in oracle mode and None in
    disclosure mode, where only the sacrificed subset crossed the channel.
    Keys are one byte per bit, values 0 and 1.
    """

    variant: str
    n_pulses: int
    mu_pair: float
    disclosure_fraction: float
    seeds: Tuple[int, int, int]
    pulses_processed: int
    clicks: int
    detected_indices: Tuple[int, ...]
    basis_matched: int
    sifted_key_bob: bytes
    sifted_key_alice: Optional[bytes]
    disclosed_indices: Tuple[int, ...]
    compared_bits: int
    mismatches: int
    measured_er: Optional[float]
    final_key_bob: bytes
    aborted: bool = False

    @property
    def sift_rate_per_1000(self) -> float:
        if self.pulses_processed == 0:
            return 0.0
        return 1000.0 * len(self.sifted_key_bob) / self.pulses_processed


class QuantumPhysics:
    """The receiver's measurement boundary; sole reader of returned phases.

    Consumes returned frames in strict index order and reduces each to one
    click decision. The fringe and gate arithmetic matches
    ``interferometer.detection_mean`` and ``detector.click_probability``.
    """

    def __init__(self, setup: SetupConfig, detector: GatedDetectorConfig,
                 rng: np.random.Generator):
        self._expected_index = 0
        self._half_mu = setup.mu_pair / 2.0
        self._scale = setup.mu_pair * setup.transmission / 2.0
        self._vis = effective_visibility(setup)
        self._eta = detector.efficiency
        self._dark = detector.dark_prob_per_gate
        self._gates = UniformSampler(rng)

    def observe(self, frame: QFrameBack, phase_b: float) -> bool:
        if frame.index != self._expected_index:
            raise ProtocolViolationError(
                f"returned frame index {frame.index}, expected {self._expected_index}"
            )
        if frame.mean_photons != self._half_mu:
            raise ProtocolViolationError(
                f"returned pulse carries {frame.mean_photons} photons, "
                f"expected {self._half_mu}"
            )
        p0, p1, p2, p3 = frame.pol
        norm_sq = p0 * p0 + p1 * p1 + p2 * p2 + p3 * p3
        if abs(norm_sq - 1.0) > 1e-6:
            raise ProtocolViolationError("returned polarization is not normalized")
        self._expected_index += 1
        delta = frame.phase_a - phase_b
        mu_eff = self._scale * (1.0 + self._vis * math.cos(delta))
        p = self._dark + (1.0 - self._dark) * -math.expm1(-self._eta * mu_eff)
        return self._gates.next() < p


class AliceSession:
    """Reactive sender state machine: one reply list per incoming message."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self._bits_src = _bit_source(cfg.alice_key_files, cfg.seeds.alice)
        _check_supply(self._bits_src, cfg.n_pulses, "alice")
        self._bases_src = (
            BitSource.from_rng(derive_rng(cfg.seeds.alice, STREAM_BASES))
            if cfg.variant.uses_bases
            else None
        )
        self._disclose_rng = derive_rng(cfg.seeds.alice, STREAM_DISCLOSURE)
        self._commitment = seeds_commitment(cfg)
        # Validates that the reference level can reach mu_pair / 2 at all.
        self.attenuation_db = attenuator_setting(cfg.setup, OUTGOING_REFERENCE_PHOTONS)
        self._half_mu = cfg.setup.mu_pair / 2.0
        self._uses_bases = cfg.variant.uses_bases
        self._bits: List[int] = []
        self._bases: List[int] = []
        self._started = False
        self._qframes = 0
        self._detected: List[int] = []
        self._last_detection = -1
        self._finalized = False
        self._sifted: List[int] = []
        self._removed: Tuple[int, ...] = ()
        self.measured_er: Optional[float] = None
        self.done = False
        self.abort_reason: Optional[int] = None

    def handle(self, msg: Message) -> List[Message]:
        if self.done:
            if self.abort_reason is not None:
                # Aborted sessions drop stragglers, like a closed socket would.
                return []
            raise ProtocolViolationError("message received after session end")
        if isinstance(msg, QFrameOut):
            if not self._started:
                raise ProtocolViolationError("first message must be SESSION_START")
            return self._on_qframe(msg)
        if isinstance(msg, SessionStart):
            return self._on_start(msg)
        if not self._started:
            raise ProtocolViolationError("first message must be SESSION_START")
        if isinstance(msg, Detections):
            return self._on_detections(msg)
        if isinstance(msg, Bases):
            return self._on_bases(msg)
        if isinstance(msg, ErReport):
            self.measured_er = msg.error_rate
            return []
        if isinstance(msg, Terminate):
            self.done = True
            if msg.reason != TERMINATE_NORMAL:
                self.abort_reason = msg.reason
            return []
        raise ProtocolViolationError(f"unexpected message {type(msg).__name__}")

    def _on_start(self, msg: SessionStart) -> List[Message]:
        if self._started:
            raise ProtocolViolationError("duplicate SESSION_START")
        cfg = self.cfg
        ok = (
            msg.n_pulses == cfg.n_pulses
            and msg.variant_code == cfg.variant.code
            and msg.mu_pair == cfg.setup.mu_pair
            and msg.seeds_commitment == self._commitment
        )
        if not ok:
            self.done = True
            self.abort_reason = TERMINATE_CONFIG_MISMATCH
            return [Terminate(TERMINATE_CONFIG_MISMATCH)]
        self._started = True
        return []

    def _on_qframe(self, msg: QFrameOut) -> List[Message]:
        if msg.index != self._qframes:
            raise ProtocolViolationError(
                f"outgoing frame index {msg.index}, expected {self._qframes}"
            )
        if msg.mean_photons != OUTGOING_REFERENCE_PHOTONS:
            raise ProtocolViolationError(
                f"outgoing pulse level {msg.mean_photons}, "
                f"expected {OUTGOING_REFERENCE_PHOTONS}"
            )
        i = self._qframes
        bit = self._bits_src.take_bit()
        self._bits.append(bit)
        if self._uses_bases:
            basis = self._bases_src.take_bit()
            self._bases.append(basis)
            phase = _BB84_PHASE[(basis, bit)]
        else:
            phase = _BB92_PHASE[bit]
        # Retro-reflection flips the polarization to the orthogonal state:
        # (c0, c1) -> (-c1, c0). Adding 0.0 normalizes -0.0 for the wire.
        p = msg.pol
        pol = (-p[2] + 0.0, -p[3] + 0.0, p[0] + 0.0, p[1] + 0.0)
        self._qframes += 1
        return [QFrameBack(i, self._half_mu, phase, pol)]

    def _on_detections(self, msg: Detections) -> List[Message]:
        if self._finalized:
            raise ProtocolViolationError("DETECTIONS after sifting finished")
        for idx in msg.indices:
            if idx <= self._last_detection or idx >= self._qframes:
                raise ProtocolViolationError(f"detection index {idx} out of order")
            self._last_detection = idx
        self._detected.extend(msg.indices)
        if self._qframes == self.cfg.n_pulses and not self.cfg.variant.uses_bases:
            self._sifted = list(self._detected)
            self._finalized = True
            return [self._make_disclose()]
        return []

    def _on_bases(self, msg: Bases) -> List[Message]:
        if not self.cfg.variant.uses_bases:
            raise ProtocolViolationError("BASES message in a two-state session")
        if self._finalized or self._qframes != self.cfg.n_pulses:
            raise ProtocolViolationError("BASES must follow the final DETECTIONS")
        if len(msg.bits) != len(self._detected):
            raise ProtocolViolationError(
                f"BASES carries {len(msg.bits)} bits for {len(self._detected)} detections"
            )
        mine = Bases(tuple(self._bases[idx] for idx in self._detected))
        self._sifted = [
            idx for k, idx in enumerate(self._detected) if msg.bits[k] == mine.bits[k]
        ]
        self._finalized = True
        return [mine, self._make_disclose()]

    def _make_disclose(self) -> Disclose:
        f = self.cfg.disclosure_fraction
        if f == 0.0:
            chosen = self._sifted
            self._removed = ()
        else:
            k = int(f * len(self._sifted))
            picks = sorted(
                self._disclose_rng.choice(len(self._sifted), size=k, replace=False)
            )
            chosen = [self._sifted[p] for p in picks]
            self._removed = tuple(chosen)
        return Disclose(tuple((idx, self._bits[idx]) for idx in chosen))

    @property
    def sifted_key(self) -> bytes:
        return bytes(self._bits[i] for i in self._sifted)

    @property
    def final_key(self) -> bytes:
        removed = set(self._removed)
        return bytes(self._bits[i] for i in self._sifted if i not in removed)

    @property
    def detected_indices(self) -> Tuple[int, ...]:
        return tuple(self._detected)


class BobSession:
    """Driving receiver state machine; produces the SessionResult."""

    def __init__(self, cfg: SessionConfig, physics: Optional[QuantumPhysics] = None):
        self.cfg = cfg
        self._bits_src = _bit_source(cfg.bob_key_files, cfg.seeds.bob)
        _check_supply(self._bits_src, cfg.n_pulses, "bob")
        self._bases_src = (
            BitSource.from_rng(derive_rng(cfg.seeds.bob, STREAM_BASES))
            if cfg.variant.uses_bases
            else None
        )
        self._physics = physics or QuantumPhysics(
            cfg.setup, cfg.detector, derive_rng(cfg.seeds.physics, STREAM_GATES)
        )
        self._progress_pulses = 0
        self._progress_detected: List[int] = []

    def run(self, endpoint) -> SessionResult:
        try:
            return self._run(endpoint)
        except ChannelError as exc:
            raise SessionAborted(str(exc), partial=self._partial()) from exc

    def _partial(self) -> SessionResult:
        cfg = self.cfg
        return SessionResult(
            variant=cfg.variant.value,
            n_pulses=cfg.n_pulses,
            mu_pair=cfg.setup.mu_pair,
            disclosure_fraction=cfg.disclosure_fraction,
            seeds=cfg.seeds.as_tuple(),
            pulses_processed=self._progress_pulses,
            clicks=len(self._progress_detected),
            detected_indices=tuple(self._progress_detected),
            basis_matched=0,
            sifted_key_bob=b"",
            sifted_key_alice=None,
            disclosed_indices=(),
            compared_bits=0,
            mismatches=0,
            measured_er=None,
            final_key_bob=b"",
            aborted=True,
        )

    def _expect(self, endpoint, kind):
        msg = endpoint.recv()
        if isinstance(msg, Terminate):
            if msg.reason == TERMINATE_CONFIG_MISMATCH:
                raise ConfigError("peer rejected the session parameters")
            raise ProtocolViolationError(f"peer terminated with reason {msg.reason}")
        if not isinstance(msg, kind):
            raise ProtocolViolationError(
                f"expected {kind.__name__}, got {type(msg).__name__}"
            )
        return msg

    def _run(self, endpoint) -> SessionResult:
        cfg = self.cfg
        n, window = cfg.n_pulses, cfg.ack_window
        uses_bases = cfg.variant.uses_bases
        endpoint.send(
            SessionStart(n, cfg.variant.code, cfg.setup.mu_pair, seeds_commitment(cfg))
        )
        bob_bits: List[int] = []
        bob_bases: List[int] = []
        detected: List[int] = []
        window_clicks: List[int] = []
        observe = self._physics.observe
        take_bit = self._bits_src.take_bit
        take_basis = self._bases_src.take_bit if uses_bases else None
        send = endpoint.send
        expect = self._expect
        for i in range(n):
            bit = take_bit()
            bob_bits.append(bit)
            if uses_bases:
                basis = take_basis()
                bob_bases.append(basis)
                phase_b = _BB84_PHASE[(basis, bit)]
            else:
                phase_b = _BB92_PHASE[bit]
            send(QFrameOut(i, OUTGOING_REFERENCE_PHOTONS, POL_HORIZONTAL))
            back = expect(endpoint, QFrameBack)
            if observe(back, phase_b):
                window_clicks.append(i)
            if (i + 1) % window == 0 or i + 1 == n:
                send(Detections(tuple(window_clicks)))
                detected.extend(window_clicks)
                window_clicks.clear()
                self._progress_pulses = i + 1
                self._progress_detected = list(detected)
        if uses_bases:
            bob_bases_at = tuple(bob_bases[i] for i in detected)
            endpoint.send(Bases(bob_bases_at))
            alice_bases = self._expect(endpoint, Bases)
            if len(alice_bases.bits) != len(detected):
                raise ProtocolViolationError("peer BASES length mismatch")
            matched = [
                idx
                for k, idx in enumerate(detected)
                if bob_bases_at[k] == alice_bases.bits[k]
            ]
        else:
            matched = detected
        disclose = self._expect(endpoint, Disclose)
        matched_set = set(matched)
        for idx, _ in disclose.items:
            if idx not in matched_set:
                raise ProtocolViolationError(f"disclosed index {idx} was not sifted")
        sifted_bob = bytes(bob_bits[i] for i in matched)
        compared = len(disclose.items)
        mismatches = sum(
            1 for idx, alice_bit in disclose.items if alice_bit != bob_bits[idx]
        )
        measured: Optional[float] = (
            mismatches / compared if compared else None
        )
        if cfg.disclosure_fraction == 0.0:
            if compared != len(matched):
                raise ProtocolViolationError(
                    "oracle mode requires the peer to disclose every sifted bit"
                )
            sifted_alice: Optional[bytes] = bytes(b for _, b in disclose.items)
            removed: Tuple[int, ...] = ()
            final_bob = sifted_bob
        else:
            sifted_alice = None
            removed = tuple(idx for idx, _ in disclose.items)
            removed_set = set(removed)
            final_bob = bytes(bob_bits[i] for i in matched if i not in removed_set)
        if measured is not None:
            endpoint.send(ErReport(measured))
        endpoint.send(Terminate(TERMINATE_NORMAL))
        return SessionResult(
            variant=cfg.variant.value,
            n_pulses=n,
            mu_pair=cfg.setup.mu_pair,
            disclosure_fraction=cfg.disclosure_fraction,
            seeds=cfg.seeds.as_tuple(),
            pulses_processed=n,
            clicks=len(detected),
            detected_indices=tuple(detected),
            basis_matched=len(matched),
            sifted_key_bob=sifted_bob,
            sifted_key_alice=sifted_alice,
            disclosed_indices=removed,
            compared_bits=compared,
            mismatches=mismatches,
            measured_er=measured,
            final_key_bob=final_bob,
        )


def run_session(cfg: SessionConfig, endpoint=None) -> SessionResult:
    """Run one session; without an endpoint, Alice runs in-process."""
    if endpoint is None:
        alice = AliceSession(cfg)
        endpoint = open_in_process(alice.handle)
    return BobSession(cfg).run(endpoint)


@dataclass(frozen=True)
class ErrorReport:
    """Error estimate over an oracle-mode session result."""

    mode: str
    error_rate: float
    bits_compared: int
    mismatches: int
    disclosed_positions: Tuple[int, ...]
    final_key_alice: bytes
    final_key_bob: bytes


def sift_and_estimate(result: SessionResult, disclosure_fraction: float = 0.0,
                      rng: Optional[np.random.Generator] = None) -> ErrorReport:
    """Exact error rate (full comparison) or a disclosed-subset estimate.

    Full mode compares the entire keys and keeps them; disclosure mode
    samples ``disclosure_fraction`` of the positions, estimates the error
    rate there, and strips those positions from both final keys.
    """
    if result.sifted_key_alice is None:
        raise ConfigError("estimation needs an oracle-mode result with both keys")
    if not (0.0 <= disclosure_fraction <= 1.0):
        raise ConfigError(
            f"disclosure_fraction must be in [0, 1], got {disclosure_fraction}"
        )
    a, b = result.sifted_key_alice, result.sifted_key_bob
    n = len(b)
    if len(a) != n:
        raise ConfigError("sifted keys differ in length")
    if n == 0:
        raise UndefinedRateError("empty sifted key; error rate undefined")
    if disclosure_fraction == 0.0:
        mismatches = sum(1 for x, y in zip(a, b) if x != y)
        return ErrorReport(
            mode="full",
            error_rate=mismatches / n,
            bits_compared=n,
            mismatches=mismatches,
            disclosed_positions=(),
            final_key_alice=a,
            final_key_bob=b,
        )
    k = int(disclosure_fraction * n)
    if k == 0:
        raise UndefinedRateError(
            f"disclosure_fraction {disclosure_fraction} selects zero of {n} bits"
        )
    if rng is None:
        rng = derive_rng(result.seeds[2], STREAM_ESTIMATION)
    positions = sorted(int(p) for p in rng.choice(n, size=k, replace=False))
    mismatches = sum(1 for p in positions if a[p] != b[p])
    keep = [p for p in range(n) if p not in set(positions)]
    return ErrorReport(
        mode="disclosure",
        error_rate=mismatches / k,
        bits_compared=k,
        mismatches=mismatches,
        disclosed_positions=tuple(positions),
        final_key_alice=bytes(a[p] for p in keep),
        final_key_bob=bytes(b[p] for p in keep),
    )

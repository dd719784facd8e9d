"""Statevector simulator with stochastic device-noise emulation.

Conventions, used consistently by every consumer:

* Little-endian basis indexing: qubit q is bit q of the basis index, so
  bitstrings print with qubit 0 rightmost.
* Pauli labels read left to right as qubit 0, 1, 2, ...: ``"XY"`` means
  X on qubit 0 and Y on qubit 1.
* ``rz(t) = exp(-i t Z / 2)`` and likewise for rx/ry.

Noise follows a trajectory (quantum-jump) picture: each shot is its own
statevector, gate errors insert uniformly random non-identity Paulis on
the gate's qubits (3 choices after a one-qubit gate, 15 after a CNOT),
readout flips each measured bit independently, and optional T1/T2
damping applies amplitude/phase relaxation for fixed gate durations.
All randomness is drawn from a single numpy Generator in a fixed order,
so results are reproducible bit-for-bit for a given (seed, stream).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from geminal import _kernels

ONE_QUBIT_GATE_NS = 100.0
CNOT_GATE_NS = 300.0


class CalibrationError(ValueError):
    """Raised when a calibration file is malformed or lacks needed entries."""


# ---------------------------------------------------------------------------
# Pauli algebra (symplectic masks)
# ---------------------------------------------------------------------------

_LETTER_TO_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_TO_LETTER = {v: k for k, v in _LETTER_TO_BITS.items()}


@dataclass(frozen=True)
class PauliString:
    """coeff * P where P = i**ny * X^xmask Z^zmask and ny = |Y positions|.

    With this normalisation the mask pair (x, z) per qubit encodes
    I/X/Y/Z as (0,0)/(1,0)/(1,1)/(0,1) and P is Hermitian, so a real
    coeff means a Hermitian term.
    """

    n_qubits: int
    xmask: int
    zmask: int
    coeff: complex = 1.0 + 0.0j

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliString":
        x = z = 0
        for q, ch in enumerate(label.upper()):
            try:
                xb, zb = _LETTER_TO_BITS[ch]
            except KeyError:
                raise ValueError(f"bad Pauli letter {ch!r}") from None
            x |= xb << q
            z |= zb << q
        return cls(len(label), x, z, complex(coeff))

    @property
    def label(self) -> str:
        return "".join(
            _BITS_TO_LETTER[((self.xmask >> q) & 1, (self.zmask >> q) & 1)]
            for q in range(self.n_qubits)
        )

    @property
    def weight(self) -> int:
        return _kernels.popcount(self.xmask | self.zmask)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.xmask | self.zmask
        return tuple(q for q in range(self.n_qubits) if (m >> q) & 1)

    @property
    def n_y(self) -> int:
        return _kernels.popcount(self.xmask & self.zmask)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        x = self.xmask ^ other.xmask
        z = self.zmask ^ other.zmask
        # i^(ny1+ny2-ny12) from re-canonicalising, (-1)^|z1&x2| from
        # commuting Z^z1 past X^x2
        k = (self.n_y + other.n_y - _kernels.popcount(x & z)) % 4
        phase = (1j) ** k * (-1.0) ** _kernels.popcount(self.zmask & other.xmask)
        return PauliString(self.n_qubits, x, z, self.coeff * other.coeff * phase)

    def commutes(self, other: "PauliString") -> bool:
        a = _kernels.popcount(self.xmask & other.zmask)
        b = _kernels.popcount(self.zmask & other.xmask)
        return (a + b) % 2 == 0

    def scaled(self, factor: complex) -> "PauliString":
        return PauliString(self.n_qubits, self.xmask, self.zmask, self.coeff * factor)

    def dense(self) -> np.ndarray:
        """Dense matrix, for small-system oracles only."""
        dim = 1 << self.n_qubits
        k = np.arange(dim)
        cols = k ^ self.xmask
        signs = _kernels.parity_signs(dim, self.zmask)
        mat = np.zeros((dim, dim), dtype=complex)
        mat[cols, k] = self.coeff * (1j**self.n_y) * signs
        return mat


class PauliSum:
    """A real-or-complex linear combination of PauliStrings."""

    def __init__(self, terms=()):
        self.terms: list[PauliString] = list(terms)
        if self.terms:
            n = self.terms[0].n_qubits
            if any(t.n_qubits != n for t in self.terms):
                raise ValueError("mixed qubit counts in PauliSum")

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        return PauliSum(self.terms + list(other))

    def scaled(self, factor: complex) -> "PauliSum":
        return PauliSum([t.scaled(factor) for t in self.terms])

    def simplify(self, tol: float = 1e-12) -> "PauliSum":
        acc: dict[tuple[int, int], complex] = {}
        n = self.terms[0].n_qubits if self.terms else 0
        for t in self.terms:
            key = (t.xmask, t.zmask)
            acc[key] = acc.get(key, 0.0) + t.coeff
        out = [
            PauliString(n, x, z, c)
            for (x, z), c in acc.items()
            if abs(c) > tol
        ]
        return PauliSum(out)

    def dense(self) -> np.ndarray:
        if not self.terms:
            raise ValueError("empty PauliSum")
        return sum(t.dense() for t in self.terms)


# ---------------------------------------------------------------------------
# gates and circuits
# ---------------------------------------------------------------------------

_SQ2 = 1.0 / math.sqrt(2.0)
_FIXED_1Q = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
}
_PARAMETRIC_1Q = {"rx", "ry", "rz"}
GATE_NAMES = set(_FIXED_1Q) | _PARAMETRIC_1Q | {"cx"}

_PAULI_1Q = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    param: float | None = None

    def matrix(self) -> np.ndarray:
        """Local unitary; for cx the local index is bit(control) + 2 bit(target)."""
        if self.name in _FIXED_1Q:
            return _FIXED_1Q[self.name].copy()
        t = self.param
        half = 0.5 * t
        c, s = math.cos(half), math.sin(half)
        if self.name == "rx":
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        if self.name == "ry":
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.name == "rz":
            return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
        if self.name == "cx":
            m = np.eye(4, dtype=complex)
            m[[1, 3]] = m[[3, 1]]  # |c=1,t=0> <-> |c=1,t=1>
            return m
        raise ValueError(f"unknown gate {self.name!r}")


class Circuit:
    """Ordered gate list over a fixed qubit register."""

    def __init__(self, n_qubits: int, gates=()):
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        self.n_qubits = n_qubits
        self.gates: list[Gate] = list(gates)

    def add(self, name: str, *qubits: int, param: float | None = None) -> "Circuit":
        name = name.lower()
        if name not in GATE_NAMES:
            raise ValueError(f"unknown gate {name!r}")
        want = 2 if name == "cx" else 1
        if len(qubits) != want:
            raise ValueError(f"{name} takes {want} qubit(s)")
        if any(q < 0 or q >= self.n_qubits for q in qubits):
            raise ValueError(f"qubit index out of range for {name} {qubits}")
        if name == "cx" and qubits[0] == qubits[1]:
            raise ValueError("cx control and target must differ")
        if name in _PARAMETRIC_1Q:
            if param is None:
                raise ValueError(f"{name} requires a parameter")
            param = float(param)
        elif param is not None:
            raise ValueError(f"{name} takes no parameter")
        self.gates.append(Gate(name, tuple(int(q) for q in qubits), param))
        return self

    # terse builders; each returns self for chaining
    def x(self, q):
        return self.add("x", q)

    def y(self, q):
        return self.add("y", q)

    def z(self, q):
        return self.add("z", q)

    def h(self, q):
        return self.add("h", q)

    def s(self, q):
        return self.add("s", q)

    def sdg(self, q):
        return self.add("sdg", q)

    def rx(self, q, theta):
        return self.add("rx", q, param=theta)

    def ry(self, q, theta):
        return self.add("ry", q, param=theta)

    def rz(self, q, theta):
        return self.add("rz", q, param=theta)

    def cx(self, control, target):
        return self.add("cx", control, target)

    def extend(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit counts differ")
        self.gates.extend(other.gates)
        return self

    def copy(self) -> "Circuit":
        return Circuit(self.n_qubits, self.gates)

    @property
    def cx_count(self) -> int:
        return sum(1 for g in self.gates if g.name == "cx")

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def to_text(self) -> str:
        lines = [f"# circuit n_qubits={self.n_qubits}"]
        for g in self.gates:
            parts = [g.name, *map(str, g.qubits)]
            if g.param is not None:
                parts.append(repr(g.param))
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        n_qubits = None
        gates = []
        for raw in text.splitlines():
            line = raw.strip()
            if line.startswith("#"):
                if "n_qubits=" in line:
                    n_qubits = int(line.split("n_qubits=", 1)[1].split()[0])
                continue
            if not line:
                continue
            parts = line.split()
            name = parts[0].lower()
            if name in _PARAMETRIC_1Q:
                qubits, param = parts[1:-1], float(parts[-1])
            else:
                qubits, param = parts[1:], None
            gates.append((name, tuple(int(q) for q in qubits), param))
        if n_qubits is None:
            raise ValueError("circuit text is missing the n_qubits header")
        circ = cls(n_qubits)
        for name, qubits, param in gates:
            circ.add(name, *qubits, param=param)
        return circ


# ---------------------------------------------------------------------------
# statevector
# ---------------------------------------------------------------------------

class Statevector:
    def __init__(self, amps: np.ndarray):
        amps = np.asarray(amps, dtype=complex)
        if amps.ndim != 1 or amps.size < 2 or amps.size & (amps.size - 1):
            raise ValueError("amplitude array length must be a power of two >= 2")
        self.amps = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @property
    def n_qubits(self) -> int:
        return self.amps.size.bit_length() - 1

    def copy(self) -> "Statevector":
        return Statevector(self.amps.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def expectation(self, op) -> complex:
        if isinstance(op, PauliString):
            return _expect_one(self.amps[None, :], op)[0]
        return sum(_expect_one(self.amps[None, :], t)[0] for t in op)


def _expect_one(amps2: np.ndarray, ps: PauliString) -> np.ndarray:
    """Per-row <P> for a batch of statevectors."""
    dim = amps2.shape[1]
    idx = np.arange(dim) ^ ps.xmask
    signs = _kernels.parity_signs(dim, ps.zmask)
    vals = np.sum(np.conj(amps2) * signs[idx][None, :] * amps2[:, idx], axis=1)
    return ps.coeff * (1j**ps.n_y) * vals


def _apply_gate_raw(amps, gate: Gate, batched: bool) -> None:
    if gate.name == "cx":
        if batched:
            _kernels.apply_cnot_batch(amps, gate.qubits[0], gate.qubits[1])
        else:
            _kernels.apply_cnot(amps, gate.qubits[0], gate.qubits[1])
    else:
        m = gate.matrix()
        if batched:
            _kernels.apply_1q_batch(amps, m, gate.qubits[0])
        else:
            _kernels.apply_1q(amps, m, gate.qubits[0])


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply one gate, returning a new statevector."""
    if any(q >= state.n_qubits for q in gate.qubits):
        raise ValueError("gate qubit index exceeds register size")
    out = state.copy()
    _apply_gate_raw(out.amps, gate, batched=False)
    return out


def run_circuit(circuit: Circuit, state: Statevector | None = None) -> Statevector:
    """Run the circuit from |0...0> (or the given state) without noise."""
    if state is None:
        state = Statevector.zero(circuit.n_qubits)
    elif state.n_qubits != circuit.n_qubits:
        raise ValueError("state and circuit qubit counts differ")
    out = state.copy()
    for gate in circuit.gates:
        _apply_gate_raw(out.amps, gate, batched=False)
    return out


def expectation_pauli(state: Statevector, op) -> float:
    """Real part of <state|op|state>; op is a PauliString or PauliSum.

    The imaginary part is discarded, which is exact for Hermitian input
    (real coefficients in the canonical Pauli normalisation).
    """
    return complex(state.expectation(op)).real


# ---------------------------------------------------------------------------
# histograms and sampling
# ---------------------------------------------------------------------------

@dataclass
class ShotHistogram:
    n_qubits: int
    shots: int
    counts: dict[int, int] = field(default_factory=dict)

    def bitstring(self, index: int) -> str:
        return format(index, f"0{self.n_qubits}b")  # qubit 0 rightmost

    def occupation(self, qubit: int) -> float:
        """Mean of bit `qubit` over shots."""
        hit = sum(c for k, c in self.counts.items() if (k >> qubit) & 1)
        return hit / self.shots

    def parity(self, mask: int) -> float:
        """Mean of (-1)**popcount(outcome & mask)."""
        acc = sum(
            c * (1.0 - 2.0 * (_kernels.popcount(k & mask) & 1))
            for k, c in self.counts.items()
        )
        return acc / self.shots

    def parity_stderr(self, mask: int) -> float:
        p = self.parity(mask)
        var = max(0.0, 1.0 - p * p)
        return math.sqrt(var / self.shots)

    def to_text(self) -> str:
        lines = [f"# histogram n_qubits={self.n_qubits} shots={self.shots}"]
        for k in sorted(self.counts):
            lines.append(f"{self.bitstring(k)} {self.counts[k]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ShotHistogram":
        n_qubits = shots = None
        counts: dict[int, int] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if line.startswith("#"):
                for tok in line.split():
                    if tok.startswith("n_qubits="):
                        n_qubits = int(tok.split("=", 1)[1])
                    elif tok.startswith("shots="):
                        shots = int(tok.split("=", 1)[1])
                continue
            if not line:
                continue
            bits, cnt = line.split()
            counts[int(bits, 2)] = int(cnt)
        if n_qubits is None or shots is None:
            raise ValueError("histogram text is missing its header")
        return cls(n_qubits, shots, counts)


def make_rng(*keys: int) -> np.random.Generator:
    """Deterministic generator keyed by a tuple of nonnegative integers."""
    if any(int(k) < 0 for k in keys):
        raise ValueError("rng keys must be nonnegative")
    return np.random.default_rng([int(k) for k in keys])


def _apply_readout_flips(
    outcomes: np.ndarray, ro: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    n_qubits = ro.size
    flips = rng.random((outcomes.size, n_qubits)) < ro[None, :]
    mask = (flips.astype(np.int64) << np.arange(n_qubits, dtype=np.int64)[None, :]).sum(
        axis=1
    )
    return outcomes ^ mask


def sample(
    state: Statevector,
    shots: int,
    seed: int = 0,
    stream: int = 0,
    readout: np.ndarray | None = None,
) -> ShotHistogram:
    """Draw measurement outcomes from an ideal statevector.

    Optional per-qubit symmetric readout flip probabilities may be
    given; the flip draws share the same deterministic stream.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    rng = make_rng(seed, 101, stream)
    probs = state.probabilities()
    cum = np.cumsum(probs / probs.sum())
    outcomes = np.searchsorted(cum, rng.random(shots), side="right")
    outcomes = np.minimum(outcomes, probs.size - 1).astype(np.int64)
    if readout is not None:
        outcomes = _apply_readout_flips(outcomes, np.asarray(readout, float), rng)
    return ShotHistogram(state.n_qubits, shots, dict(Counter(outcomes.tolist())))


# ---------------------------------------------------------------------------
# device calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QubitCalibration:
    u2_error: float
    u3_error: float
    readout_error: float
    t1_us: float
    t2_us: float


@dataclass(frozen=True)
class DeviceCalibration:
    name: str
    qubits: dict[int, QubitCalibration]
    cx_errors: dict[tuple[int, int], float]

    def qubit(self, q: int) -> QubitCalibration:
        try:
            return self.qubits[q]
        except KeyError:
            raise CalibrationError(f"device {self.name!r} has no qubit {q}") from None

    def cx_error(self, a: int, b: int) -> float:
        """Direction-agnostic CNOT error for the coupling {a, b}."""
        for key in ((a, b), (b, a)):
            if key in self.cx_errors:
                return self.cx_errors[key]
        raise CalibrationError(f"device {self.name!r} has no coupling ({a}, {b})")


def parse_calibration(text: str) -> DeviceCalibration:
    """Parse calibration text.

    Lines: ``device <name>``, ``qubit <i> <u2> <u3> <ro> <t1_us> <t2_us>``,
    ``cx <control> <target> <error>``; ``#`` comments allowed.
    """
    name = "unnamed"
    qubits: dict[int, QubitCalibration] = {}
    cx: dict[tuple[int, int], float] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        try:
            if kind == "device":
                name = parts[1]
            elif kind == "qubit":
                q = int(parts[1])
                vals = [float(v) for v in parts[2:]]
                if len(vals) != 5:
                    raise ValueError
                qubits[q] = QubitCalibration(*vals)
            elif kind == "cx":
                cx[(int(parts[1]), int(parts[2]))] = float(parts[3])
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise CalibrationError(f"calibration line {ln} is malformed: {raw!r}") from None
    if not qubits:
        raise CalibrationError("calibration defines no qubits")
    return DeviceCalibration(name, qubits, cx)


def load_calibration(source: str) -> DeviceCalibration:
    """Load calibration by built-in name ('ibm-5', 'ibm-14') or file path."""
    builtin = {"ibm-5": "ibm5.txt", "ibm-14": "ibm14.txt"}
    if source in builtin:
        text = (resources.files("geminal") / "data" / builtin[source]).read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise CalibrationError(f"no built-in or file calibration {source!r}")
        text = path.read_text()
    return parse_calibration(text)


# ---------------------------------------------------------------------------
# noise model
# ---------------------------------------------------------------------------

@dataclass
class NoiseModel:
    """Per-qubit error rates feeding the trajectory sampler.

    ``one_qubit``/``readout`` map qubit index to probability;
    ``two_qubit`` maps ordered coupling pairs (looked up direction-
    agnostically).  ``t1_ns``/``t2_ns`` enable relaxation only when
    ``damping`` is set; the defaults emulate gate errors and readout
    only, which is the regime the error-rate tables describe.
    """

    one_qubit: dict[int, float]
    two_qubit: dict[tuple[int, int], float]
    readout: dict[int, float]
    t1_ns: dict[int, float] | None = None
    t2_ns: dict[int, float] | None = None
    damping: bool = False
    label: str = "custom"

    @classmethod
    def from_calibration(cls, cal: DeviceCalibration, n_qubits: int, damping: bool = False):
        """Restrict a device table to qubits 0..n_qubits-1 (identity layout).

        The linear chain (0,1), (1,2), ... must exist on the device; a
        missing qubit or coupling raises CalibrationError.
        """
        one = {q: cal.qubit(q).u2_error for q in range(n_qubits)}
        ro = {q: cal.qubit(q).readout_error for q in range(n_qubits)}
        two = {}
        for q in range(n_qubits - 1):
            two[(q, q + 1)] = cal.cx_error(q, q + 1)
        t1 = {q: cal.qubit(q).t1_us * 1000.0 for q in range(n_qubits)}
        t2 = {q: cal.qubit(q).t2_us * 1000.0 for q in range(n_qubits)}
        return cls(one, two, ro, t1, t2, damping, cal.name)

    @classmethod
    def uniform(
        cls,
        n_qubits: int,
        p1: float = 0.0,
        p2: float = 0.0,
        readout: float = 0.0,
        label: str = "uniform",
    ):
        one = {q: p1 for q in range(n_qubits)}
        ro = {q: readout for q in range(n_qubits)}
        two = {
            (a, b): p2 for a in range(n_qubits) for b in range(n_qubits) if a != b
        }
        return cls(one, two, ro, None, None, False, label)

    def p_gate(self, gate: Gate) -> float:
        if gate.name == "cx":
            a, b = gate.qubits
            for key in ((a, b), (b, a)):
                if key in self.two_qubit:
                    return self.two_qubit[key]
            raise CalibrationError(f"noise model has no coupling {gate.qubits}")
        return self.one_qubit.get(gate.qubits[0], 0.0)

    def readout_vector(self, n_qubits: int) -> np.ndarray:
        return np.array([self.readout.get(q, 0.0) for q in range(n_qubits)])


def _apply_damping(
    amps2: np.ndarray,
    qubit: int,
    duration_ns: float,
    t1_ns: float,
    t2_ns: float,
    rng: np.random.Generator,
) -> None:
    """Trajectory amplitude damping plus pure dephasing on one qubit."""
    nt, dim = amps2.shape
    gamma = 1.0 - math.exp(-duration_ns / t1_ns)
    k = np.arange(dim)
    hi = k[(k >> qubit) & 1 == 1]
    lo = hi ^ (1 << qubit)
    p1 = np.sum(np.abs(amps2[:, hi]) ** 2, axis=1)
    jump = rng.random(nt) < gamma * p1
    if np.any(jump):
        rows = np.nonzero(jump)[0]
        sub = np.zeros_like(amps2[rows])
        sub[:, lo] = amps2[rows][:, hi]
        norm = np.linalg.norm(sub, axis=1, keepdims=True)
        amps2[rows] = sub / norm
    stay = np.nonzero(~jump)[0]
    if stay.size:
        amps2[np.ix_(stay, hi)] *= math.sqrt(1.0 - gamma)
        norm = np.linalg.norm(amps2[stay], axis=1, keepdims=True)
        amps2[stay] /= norm
    # pure dephasing beyond the T1 contribution: 1/T2 = 1/(2 T1) + 1/Tphi
    inv_tphi = 1.0 / t2_ns - 0.5 / t1_ns
    pz = 0.5 * (1.0 - math.exp(-duration_ns * inv_tphi)) if inv_tphi > 0 else 0.0
    flips = np.nonzero(rng.random(nt) < pz)[0]
    if flips.size:
        _kernels.apply_1q_rows(amps2, flips, _PAULI_1Q[2], qubit)


class TrajectoryEnsemble:
    """Batch of per-shot statevectors after a noisy circuit run."""

    def __init__(self, amps2: np.ndarray, n_qubits: int, rng, noise: NoiseModel):
        self.amps2 = amps2
        self.n_qubits = n_qubits
        self._rng = rng
        self.noise = noise

    @property
    def n_trajectories(self) -> int:
        return self.amps2.shape[0]

    def expectation(self, op) -> float:
        """Trajectory-averaged <op>, exact per trajectory (no shot noise)."""
        if isinstance(op, PauliString):
            vals = _expect_one(self.amps2, op)
        else:
            vals = sum(_expect_one(self.amps2, t) for t in op)
        return float(np.mean(vals.real))

    def sample(self, readout: bool = True) -> ShotHistogram:
        """One measurement per trajectory, consuming the ensemble's stream."""
        probs = np.abs(self.amps2) ** 2
        probs /= probs.sum(axis=1, keepdims=True)
        u = self._rng.random(self.n_trajectories)
        outcomes = _kernels.sample_rows(probs, u)
        if readout:
            ro = self.noise.readout_vector(self.n_qubits)
            if np.any(ro > 0):
                outcomes = _apply_readout_flips(outcomes, ro, self._rng)
        return ShotHistogram(
            self.n_qubits, self.n_trajectories, dict(Counter(outcomes.tolist()))
        )


def run_trajectories(
    circuit: Circuit,
    noise: NoiseModel,
    n_traj: int,
    seed: int = 0,
    stream: int = 0,
) -> TrajectoryEnsemble:
    """Simulate n_traj noisy shots of the circuit as individual trajectories.

    Gate errors insert a uniformly random non-identity Pauli on the
    gate's qubits with the modelled probability; optional damping then
    acts for the gate duration.  The random stream advances in a fixed
    order regardless of which errors fire, so a given (seed, stream)
    reproduces exactly.
    """
    nt = int(n_traj)
    if nt < 1:
        raise ValueError("need at least one trajectory")
    rng = make_rng(seed, 202, stream)
    dim = 1 << circuit.n_qubits
    amps2 = np.zeros((nt, dim), dtype=complex)
    amps2[:, 0] = 1.0
    for gate in circuit.gates:
        _apply_gate_raw(amps2, gate, batched=True)
        p = noise.p_gate(gate)
        if p > 0.0:
            hit = np.nonzero(rng.random(nt) < p)[0]
            if gate.name == "cx":
                errs = rng.integers(1, 16, size=hit.size)
                for e in range(1, 16):
                    rows = hit[errs == e]
                    if rows.size == 0:
                        continue
                    ec, et = e // 4, e % 4
                    if ec:
                        _kernels.apply_1q_rows(amps2, rows, _PAULI_1Q[ec - 1], gate.qubits[0])
                    if et:
                        _kernels.apply_1q_rows(amps2, rows, _PAULI_1Q[et - 1], gate.qubits[1])
            else:
                errs = rng.integers(0, 3, size=hit.size)
                for e in range(3):
                    rows = hit[errs == e]
                    if rows.size:
                        _kernels.apply_1q_rows(amps2, rows, _PAULI_1Q[e], gate.qubits[0])
        if noise.damping and noise.t1_ns is not None:
            dur = CNOT_GATE_NS if gate.name == "cx" else ONE_QUBIT_GATE_NS
            for q in gate.qubits:
                _apply_damping(
                    amps2, q, dur, noise.t1_ns[q], noise.t2_ns[q], rng
                )
    return TrajectoryEnsemble(amps2, circuit.n_qubits, rng, noise)


def run_noisy(
    circuit: Circuit,
    noise: NoiseModel,
    shots: int,
    seed: int = 0,
    stream: int = 0,
    readout: bool = True,
) -> ShotHistogram:
    """Noisy circuit execution: one sampled outcome per trajectory."""
    ens = run_trajectories(circuit, noise, shots, seed, stream)
    return ens.sample(readout=readout)

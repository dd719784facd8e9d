"""Reduced tomography for paired states.

Everything the hybrid loop needs from the device is a Z-basis histogram
(occupations) plus two rotated-basis histograms (pair-coherence signs),
so one objective evaluation costs three circuit preparations regardless
of r.  Samplers count their preparations so that budget is testable.

Phase estimator for window k (qubits 2k..2k+3): with circuit A rotating
every qubit to the X basis and circuit B rotating alpha qubits to X and
beta qubits to Y (pattern C2; C3 swaps the roles),

    est_k = (parity_A(window) + parity_B(window)) / 4

equals g_k g_{k+1} exactly on ideal paired states, where g_p are the
signed pair amplitudes.  Only the sign enters the energy; an estimate
within ``ambiguity_z`` standard errors of zero is flagged so callers can
fall back to the classically propagated sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from geminal import mitigation, qsim
from geminal.qsim import Circuit, NoiseModel, ShotHistogram, Statevector


class ExactDistribution:
    """Duck-typed stand-in for ShotHistogram with zero shot noise."""

    def __init__(self, probs: np.ndarray, n_qubits: int):
        self.probs = probs
        self.n_qubits = n_qubits

    def occupation(self, qubit: int) -> float:
        k = np.arange(self.probs.size)
        return float(np.sum(self.probs[(k >> qubit) & 1 == 1]))

    def parity(self, mask: int) -> float:
        from geminal._kernels import parity_signs

        return float(np.sum(self.probs * parity_signs(self.probs.size, mask)))

    def parity_stderr(self, mask: int) -> float:
        return 0.0


@dataclass
class PreparationCounter:
    count: int = 0

    def bump(self) -> None:
        self.count += 1

    def reset(self) -> None:
        self.count = 0


class ShotSampler:
    """Samples a fixed preparation circuit in caller-chosen bases.

    Each ``run`` is one circuit preparation: the preparation circuit plus
    an optional basis-rotation circuit, executed for ``shots`` shots.
    Streams advance per run so repeated calls draw fresh randomness
    while the whole object stays deterministic in (seed, base_stream).
    """

    def __init__(
        self,
        circuit: Circuit,
        shots: int,
        seed: int = 0,
        noise: NoiseModel | None = None,
        base_stream: int = 0,
        counter: PreparationCounter | None = None,
    ):
        self.circuit = circuit
        self.shots = int(shots)
        self.seed = int(seed)
        self.noise = noise
        self.counter = counter if counter is not None else PreparationCounter()
        self._stream = int(base_stream)

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits

    def run(self, basis: Circuit | None = None) -> ShotHistogram:
        total = self.circuit.copy()
        if basis is not None:
            total.extend(basis)
        self.counter.bump()
        stream = self._stream
        self._stream += 1
        if self.noise is not None:
            return qsim.run_noisy(total, self.noise, self.shots, self.seed, stream)
        state = qsim.run_circuit(total)
        return qsim.sample(state, self.shots, self.seed, stream)


class ExactSampler:
    """Noiseless, shot-free sampler; used when shots is configured None."""

    def __init__(self, circuit: Circuit, counter: PreparationCounter | None = None):
        self.circuit = circuit
        self.counter = counter if counter is not None else PreparationCounter()

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits

    def run(self, basis: Circuit | None = None) -> ExactDistribution:
        total = self.circuit.copy()
        if basis is not None:
            total.extend(basis)
        self.counter.bump()
        state = qsim.run_circuit(total)
        return ExactDistribution(state.probabilities(), total.n_qubits)


# ---------------------------------------------------------------------------
# occupations
# ---------------------------------------------------------------------------

@dataclass
class OccupationEstimate:
    n_alpha: np.ndarray
    n_beta: np.ndarray
    stderr_alpha: np.ndarray
    stderr_beta: np.ndarray
    retained_fraction: float = 1.0
    histogram: object = field(default=None, repr=False)


def occupations_from_counts(counts, r: int, shots_like: float) -> OccupationEstimate:
    """Per-orbital alpha/beta occupations from a Z-basis record."""
    na = np.array([counts.occupation(2 * p) for p in range(r)])
    nb = np.array([counts.occupation(2 * p + 1) for p in range(r)])
    if isinstance(counts, ExactDistribution) or shots_like <= 0:
        sa = np.zeros(r)
        sb = np.zeros(r)
    else:
        sa = np.sqrt(np.clip(na * (1 - na), 0, None) / shots_like)
        sb = np.sqrt(np.clip(nb * (1 - nb), 0, None) / shots_like)
    return OccupationEstimate(na, nb, sa, sb, 1.0, counts)


def measure_occupations(
    sampler, r: int, symmetries: tuple[str, ...] = ()
) -> OccupationEstimate:
    """One Z-basis preparation, optionally symmetry-filtered.

    ``symmetries`` may contain 'N' (two-electron count) and 'Sz' (equal
    alpha and beta counts); filtering applies to raw histograms before
    any occupation is formed and is skipped in exact mode, where it
    would be a no-op.
    """
    record = sampler.run(None)
    retained = 1.0
    if symmetries and isinstance(record, ShotHistogram):
        record, retained = mitigation.symmetry_verify(
            record,
            check_n="N" in symmetries,
            check_sz="Sz" in symmetries,
        )
    shots_like = record.shots if isinstance(record, ShotHistogram) else 0
    est = occupations_from_counts(record, r, shots_like)
    est.retained_fraction = retained
    return est


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------

def phase_measurement_circuits(r: int, pattern: str = "C2") -> tuple[Circuit, Circuit]:
    """Basis rotations for the two coherence circuits on all 2r qubits.

    Circuit A rotates every qubit to the X basis.  Circuit B uses the
    qubit-wise consistent mixed pattern: C2 puts alpha (even) qubits in
    X and beta (odd) qubits in Y, C3 the complement.  One (A, B) pair
    serves every window simultaneously.
    """
    if pattern not in ("C2", "C3"):
        raise ValueError(f"unknown phase pattern {pattern!r}")
    n = 2 * r
    circ_a = Circuit(n)
    for q in range(n):
        circ_a.h(q)
    circ_b = Circuit(n)
    for q in range(n):
        y_basis = (q % 2 == 1) if pattern == "C2" else (q % 2 == 0)
        if y_basis:
            circ_b.sdg(q).h(q)
        else:
            circ_b.h(q)
    return circ_a, circ_b


@dataclass
class PhaseEstimate:
    values: np.ndarray  # raw estimates of g_k g_{k+1}
    stderr: np.ndarray
    xi: np.ndarray  # +-1 signs
    ambiguous: np.ndarray  # True where |value| < ambiguity_z * stderr


def window_mask(k: int) -> int:
    return 0b1111 << (2 * k)


def estimate_phases(
    sampler, r: int, pattern: str = "C2", ambiguity_z: float = 2.0
) -> PhaseEstimate:
    """Two rotated-basis preparations giving all r-1 window signs."""
    circ_a, circ_b = phase_measurement_circuits(r, pattern)
    rec_a = sampler.run(circ_a)
    rec_b = sampler.run(circ_b)
    vals = np.empty(r - 1)
    errs = np.empty(r - 1)
    for k in range(r - 1):
        mask = window_mask(k)
        vals[k] = 0.25 * (rec_a.parity(mask) + rec_b.parity(mask))
        errs[k] = 0.25 * np.hypot(rec_a.parity_stderr(mask), rec_b.parity_stderr(mask))
    xi = np.where(vals >= 0, 1, -1).astype(int)
    ambiguous = np.abs(vals) < ambiguity_z * errs
    return PhaseEstimate(vals, errs, xi, ambiguous)


def classical_phase_assignment(t: np.ndarray) -> PhaseEstimate:
    """Signs propagated from the known rotation angles (no circuits).

    xi_k = sign(amp_k amp_{k+1}) for the ideal chain amplitudes; an
    exactly vanishing product keeps sign +1 but is flagged ambiguous.
    """
    from geminal.ansatz import givens_chain_amplitudes

    amps = givens_chain_amplitudes(np.asarray(t, dtype=float))
    prods = amps[:-1] * amps[1:]
    xi = np.where(prods >= 0, 1, -1).astype(int)
    ambiguous = np.abs(prods) < 1e-12
    return PhaseEstimate(prods, np.zeros_like(prods), xi, ambiguous)

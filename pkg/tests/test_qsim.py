"""Simulator checks against dense-matrix oracles built independently here.

The oracle embeds local unitaries by explicit Kronecker products over the
little-endian layout and uses scipy's expm for rotation gates, so none of
the simulator's own kernels or Pauli machinery appear on the oracle side.
"""

import math

import numpy as np
import pytest
import scipy.linalg

from geminal import qsim
from geminal.qsim import (
    CalibrationError,
    Circuit,
    Gate,
    NoiseModel,
    PauliString,
    PauliSum,
    ShotHistogram,
    Statevector,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def embed(u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Local 2x2 unitary on qubit q in the little-endian dense layout."""
    return np.kron(np.eye(1 << (n - 1 - q)), np.kron(u, np.eye(1 << q)))


def dense_cnot(control: int, target: int, n: int) -> np.ndarray:
    p0 = embed(np.diag([1.0, 0.0]).astype(complex), control, n)
    p1 = embed(np.diag([0.0, 1.0]).astype(complex), control, n)
    return p0 + p1 @ embed(X, target, n)


def dense_pauli(label: str) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for ch in reversed(label):  # leftmost letter is qubit 0
        out = np.kron(out, PAULI[ch])
    return out


def random_state(n: int, rng) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Pauli algebra
# ---------------------------------------------------------------------------

def test_pauli_label_roundtrip():
    for label in ["X", "IZ", "XYZI", "YYXZ"]:
        ps = PauliString.from_label(label)
        assert ps.label == label
        assert ps.weight == sum(c != "I" for c in label)


def test_pauli_dense_matches_kron_oracle():
    rng = np.random.default_rng(11)
    letters = "IXYZ"
    for _ in range(30):
        n = int(rng.integers(1, 5))
        label = "".join(rng.choice(list(letters)) for _ in range(n))
        ps = PauliString.from_label(label, coeff=1.0)
        assert np.allclose(ps.dense(), dense_pauli(label), atol=1e-14), label


def test_pauli_products():
    x = PauliString.from_label("X")
    y = PauliString.from_label("Y")
    z = PauliString.from_label("Z")
    assert (x * y).label == "Z" and (x * y).coeff == pytest.approx(1j)
    assert (y * x).coeff == pytest.approx(-1j)
    assert (z * x).coeff == pytest.approx(1j) and (z * x).label == "Y"
    assert (x * x).label == "I" and (x * x).coeff == pytest.approx(1.0)


def test_pauli_product_matches_dense():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(1, 4))
        a = "".join(rng.choice(list("IXYZ")) for _ in range(n))
        b = "".join(rng.choice(list("IXYZ")) for _ in range(n))
        pa, pb = PauliString.from_label(a), PauliString.from_label(b)
        assert np.allclose((pa * pb).dense(), pa.dense() @ pb.dense(), atol=1e-14)


def test_pauli_commutes():
    assert PauliString.from_label("XX").commutes(PauliString.from_label("YY"))
    assert not PauliString.from_label("XI").commutes(PauliString.from_label("ZI"))


def test_pauli_sum_simplify():
    a = PauliString.from_label("XZ", 0.5)
    b = PauliString.from_label("XZ", 0.5)
    c = PauliString.from_label("YY", -0.25)
    d = PauliString.from_label("YY", 0.25)
    s = PauliSum([a, b, c, d]).simplify()
    assert len(s) == 1
    assert s.terms[0].label == "XZ"
    assert s.terms[0].coeff == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# gates, circuits, statevectors
# ---------------------------------------------------------------------------

def test_rotation_gates_match_expm():
    theta = 0.7342
    for name, gen in [("rx", X), ("ry", Y), ("rz", Z)]:
        got = Gate(name, (0,), theta).matrix()
        want = scipy.linalg.expm(-0.5j * theta * gen)
        assert np.allclose(got, want, atol=1e-14), name


def test_apply_gate_matches_dense_oracle():
    rng = np.random.default_rng(23)
    n = 4
    for name in ["x", "y", "z", "h", "s", "sdg"]:
        for q in range(n):
            psi = random_state(n, rng)
            got = qsim.apply_gate(Statevector(psi), Gate(name, (q,))).amps
            want = embed(PAULI.get(name.upper(), Gate(name, (0,)).matrix()), q, n) @ psi
            assert np.allclose(got, want, atol=1e-13), (name, q)
    for name in ["rx", "ry", "rz"]:
        for q in range(n):
            theta = rng.uniform(-3, 3)
            psi = random_state(n, rng)
            got = qsim.apply_gate(Statevector(psi), Gate(name, (q,), theta)).amps
            want = embed(Gate(name, (0,), theta).matrix(), q, n) @ psi
            assert np.allclose(got, want, atol=1e-13), (name, q)


def test_cnot_matches_dense_oracle():
    rng = np.random.default_rng(29)
    n = 4
    for c in range(n):
        for t in range(n):
            if c == t:
                continue
            psi = random_state(n, rng)
            got = qsim.apply_gate(Statevector(psi), Gate("cx", (c, t))).amps
            assert np.allclose(got, dense_cnot(c, t, n) @ psi, atol=1e-13), (c, t)


def test_run_circuit_composition():
    rng = np.random.default_rng(31)
    n = 3
    circ = Circuit(n)
    circ.h(0).cx(0, 1).rx(2, 0.3).cx(2, 0).sdg(1).rz(0, -1.1).cx(1, 2)
    mat = np.eye(1 << n, dtype=complex)
    for g in circ.gates:
        if g.name == "cx":
            mat = dense_cnot(*g.qubits, n) @ mat
        else:
            mat = embed(g.matrix(), g.qubits[0], n) @ mat
    psi = random_state(n, rng)
    got = qsim.run_circuit(circ, Statevector(psi)).amps
    assert np.allclose(got, mat @ psi, atol=1e-12)


def test_bell_state_and_expectations():
    circ = Circuit(2).h(0).cx(0, 1)
    state = qsim.run_circuit(circ)
    assert np.allclose(state.probabilities(), [0.5, 0, 0, 0.5], atol=1e-14)
    assert qsim.expectation_pauli(state, PauliString.from_label("XX")) == pytest.approx(1.0)
    assert qsim.expectation_pauli(state, PauliString.from_label("ZZ")) == pytest.approx(1.0)
    assert qsim.expectation_pauli(state, PauliString.from_label("YY")) == pytest.approx(-1.0)
    assert qsim.expectation_pauli(state, PauliString.from_label("ZI")) == pytest.approx(0.0)


def test_expectation_matches_dense_oracle():
    rng = np.random.default_rng(37)
    for _ in range(25):
        n = int(rng.integers(1, 5))
        label = "".join(rng.choice(list("IXYZ")) for _ in range(n))
        psi = random_state(n, rng)
        got = qsim.expectation_pauli(Statevector(psi), PauliString.from_label(label))
        want = (psi.conj() @ dense_pauli(label) @ psi).real
        assert got == pytest.approx(want, abs=1e-12), label


def test_statevector_and_gate_validation():
    with pytest.raises(ValueError):
        Statevector(np.ones(3, dtype=complex))
    state = Statevector.zero(2)
    with pytest.raises(ValueError):
        qsim.apply_gate(state, Gate("x", (5,)))
    circ = Circuit(2)
    with pytest.raises(ValueError):
        circ.add("bogus", 0)
    with pytest.raises(ValueError):
        circ.add("cx", 0, 0)
    with pytest.raises(ValueError):
        circ.add("rx", 0)  # missing parameter
    with pytest.raises(ValueError):
        circ.add("h", 0, param=1.0)
    with pytest.raises(ValueError):
        circ.add("x", 2)


def test_circuit_text_roundtrip():
    circ = Circuit(3).h(0).rx(1, 0.123456789012345).cx(1, 2).sdg(2)
    text = circ.to_text()
    back = Circuit.from_text(text)
    assert back.n_qubits == 3
    assert [g.name for g in back] == [g.name for g in circ]
    assert back.gates[1].param == circ.gates[1].param  # repr keeps full precision
    assert circ.cx_count == 1


# ---------------------------------------------------------------------------
# histograms and sampling
# ---------------------------------------------------------------------------

def test_histogram_statistics_and_text():
    hist = ShotHistogram(4, 1024, {0b0101: 700, 0b0100: 200, 0b0110: 124})
    assert hist.bitstring(0b0101) == "0101"
    assert hist.occupation(0) == pytest.approx(700 / 1024)
    assert hist.occupation(2) == pytest.approx(1.0)
    assert hist.parity(0b0101) == pytest.approx((700 - 200 + 124 * -1) / 1024)
    text = hist.to_text()
    back = ShotHistogram.from_text(text)
    assert back == hist


def test_sampling_is_deterministic_and_unbiased():
    state = qsim.run_circuit(Circuit(2).h(0).cx(0, 1))
    h1 = qsim.sample(state, 4096, seed=9, stream=0)
    h2 = qsim.sample(state, 4096, seed=9, stream=0)
    assert h1.counts == h2.counts
    h3 = qsim.sample(state, 4096, seed=9, stream=1)
    assert h3.counts != h1.counts
    assert set(h1.counts) <= {0b00, 0b11}
    # 5 sigma band around p = 0.5
    p = h1.counts[0b00] / 4096
    assert abs(p - 0.5) < 5 * math.sqrt(0.25 / 4096)


def test_sampling_readout_flips():
    state = Statevector.zero(3)
    ro = np.array([0.25, 0.0, 0.5])
    hist = qsim.sample(state, 20000, seed=3, readout=ro)
    assert hist.occupation(0) == pytest.approx(0.25, abs=0.02)
    assert hist.occupation(1) == 0.0
    assert hist.occupation(2) == pytest.approx(0.5, abs=0.02)


def test_make_rng_rejects_negative():
    with pytest.raises(ValueError):
        qsim.make_rng(1, -2)


# ---------------------------------------------------------------------------
# calibration and noise model
# ---------------------------------------------------------------------------

def test_builtin_calibrations_pins():
    cal5 = qsim.load_calibration("ibm-5")
    assert cal5.name == "ibm-5"
    assert cal5.qubit(0).u2_error == pytest.approx(2.7e-3)
    assert cal5.qubit(4).readout_error == pytest.approx(0.36)
    assert cal5.qubit(3).t2_us == pytest.approx(28.0)
    assert cal5.cx_error(0, 1) == pytest.approx(5.1e-2)
    assert cal5.cx_error(1, 0) == pytest.approx(5.1e-2)  # direction-agnostic
    with pytest.raises(CalibrationError):
        cal5.cx_error(0, 4)
    with pytest.raises(CalibrationError):
        cal5.qubit(7)

    cal14 = qsim.load_calibration("ibm-14")
    assert len(cal14.qubits) == 14
    assert cal14.qubit(11).u2_error == pytest.approx(0.181)
    assert cal14.qubit(8).t1_us == pytest.approx(125.0)
    assert cal14.cx_error(4, 10) == pytest.approx(5.4e-2)


def test_parse_calibration_errors():
    with pytest.raises(CalibrationError):
        qsim.parse_calibration("qubit 0 1 2 3\n")  # wrong field count
    with pytest.raises(CalibrationError):
        qsim.parse_calibration("widget 1 2\n")
    with pytest.raises(CalibrationError):
        qsim.parse_calibration("device empty\n")
    with pytest.raises(CalibrationError):
        qsim.load_calibration("no-such-device")


def test_load_calibration_from_path(tmp_path):
    p = tmp_path / "cal.txt"
    p.write_text("device toy\nqubit 0 1e-3 2e-3 0.1 50 60\nqubit 1 1e-3 2e-3 0.1 50 60\ncx 0 1 0.02\n")
    cal = qsim.load_calibration(str(p))
    assert cal.name == "toy"
    assert cal.cx_error(1, 0) == pytest.approx(0.02)


def test_noise_model_from_calibration():
    cal = qsim.load_calibration("ibm-5")
    nm = NoiseModel.from_calibration(cal, n_qubits=4)
    assert nm.p_gate(Gate("h", (2,))) == pytest.approx(6.4e-3)
    assert nm.p_gate(Gate("cx", (1, 2))) == pytest.approx(6.8e-2)
    assert nm.p_gate(Gate("cx", (2, 1))) == pytest.approx(6.8e-2)
    assert nm.readout_vector(4)[1] == pytest.approx(0.25)
    with pytest.raises(CalibrationError):
        NoiseModel.from_calibration(cal, n_qubits=6)  # no qubit 5 on this device
    nm14 = NoiseModel.from_calibration(qsim.load_calibration("ibm-14"), n_qubits=6)
    assert nm14.p_gate(Gate("cx", (3, 4))) == pytest.approx(5.6e-2)


# ---------------------------------------------------------------------------
# trajectory noise
# ---------------------------------------------------------------------------

def test_trajectories_zero_noise_equal_ideal():
    circ = Circuit(3).h(0).cx(0, 1).rx(2, 0.4).cx(1, 2)
    ideal = qsim.run_circuit(circ).amps
    ens = qsim.run_trajectories(circ, NoiseModel.uniform(3), n_traj=7, seed=1)
    assert np.allclose(ens.amps2, ideal[None, :], atol=1e-12)


def test_one_qubit_depolarising_decay_law():
    # N noisy identity rotations: <Z> = (1 - 4p/3)^N
    p, n_gates, nt = 0.01, 100, 20000
    circ = Circuit(1)
    for _ in range(n_gates):
        circ.rz(0, 0.0)
    ens = qsim.run_trajectories(circ, NoiseModel.uniform(1, p1=p), nt, seed=12)
    want = (1.0 - 4.0 * p / 3.0) ** n_gates
    got = ens.expectation(PauliString.from_label("Z"))
    sem = math.sqrt((1.0 - want**2) / nt)
    assert abs(got - want) < 5 * sem


def test_cnot_error_one_fully_depolarises():
    # with error probability 1 each CNOT scrambles to <Z> = -1/15; a few
    # in sequence drive both qubits' <Z> to zero
    nt = 30000
    circ = Circuit(2).cx(0, 1).cx(0, 1).cx(0, 1)
    ens = qsim.run_trajectories(circ, NoiseModel.uniform(2, p2=1.0), nt, seed=4)
    assert abs(ens.expectation(PauliString.from_label("ZI"))) < 0.03
    assert abs(ens.expectation(PauliString.from_label("IZ"))) < 0.03


def test_single_cnot_error_one_mean():
    nt = 60000
    circ = Circuit(2).cx(0, 1)
    ens = qsim.run_trajectories(circ, NoiseModel.uniform(2, p2=1.0), nt, seed=8)
    assert ens.expectation(PauliString.from_label("IZ")) == pytest.approx(-1.0 / 15.0, abs=0.02)


def test_noisy_sampling_reproducible():
    circ = Circuit(2).h(0).cx(0, 1)
    nm = NoiseModel.uniform(2, p1=0.01, p2=0.05, readout=0.03)
    h1 = qsim.run_noisy(circ, nm, shots=512, seed=21, stream=3)
    h2 = qsim.run_noisy(circ, nm, shots=512, seed=21, stream=3)
    assert h1.counts == h2.counts
    assert sum(h1.counts.values()) == 512
    h3 = qsim.run_noisy(circ, nm, shots=512, seed=22, stream=3)
    assert h3.counts != h1.counts


def test_readout_noise_on_prepared_state():
    circ = Circuit(2).x(0)
    nm = NoiseModel.uniform(2, readout=0.2)
    hist = qsim.run_noisy(circ, nm, shots=20000, seed=5)
    assert hist.occupation(0) == pytest.approx(0.8, abs=0.02)
    assert hist.occupation(1) == pytest.approx(0.2, abs=0.02)


def test_amplitude_damping_relaxes_excited_state():
    cal_text = "device d\nqubit 0 0 0 0 0.0001 0.0002\n"
    cal = qsim.parse_calibration(cal_text)
    # t1 = 0.1 ns << 100 ns gate time: |1> relaxes essentially instantly
    nm = NoiseModel.from_calibration(cal, 1, damping=True)
    circ = Circuit(1).x(0)
    ens = qsim.run_trajectories(circ, nm, 2000, seed=2)
    assert ens.expectation(PauliString.from_label("Z")) > 0.99
    norms = np.linalg.norm(ens.amps2, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-10)


def test_damping_decay_fraction_matches_t1():
    cal_text = "device d\nqubit 0 0 0 0 0.1 0.2\n"  # t1 = 100 ns = one gate
    cal = qsim.parse_calibration(cal_text)
    nm = NoiseModel.from_calibration(cal, 1, damping=True)
    circ = Circuit(1).x(0)
    nt = 40000
    ens = qsim.run_trajectories(circ, nm, nt, seed=6)
    p1 = 0.5 * (1.0 - ens.expectation(PauliString.from_label("Z")))
    want = math.exp(-1.0)
    assert p1 == pytest.approx(want, abs=5 * math.sqrt(want * (1 - want) / nt))


def test_dephasing_shrinks_coherence():
    cal_text = "device d\nqubit 0 0 0 0 1e6 0.05\n"  # pure dephasing only
    cal = qsim.parse_calibration(cal_text)
    nm = NoiseModel.from_calibration(cal, 1, damping=True)
    circ = Circuit(1).h(0)
    ens = qsim.run_trajectories(circ, nm, 20000, seed=7)
    x = ens.expectation(PauliString.from_label("X"))
    # p_z = (1 - exp(-100/Tphi))/2 with 1/Tphi ~ 1/t2: coherence = 1 - 2 p_z
    want = math.exp(-100.0 / 50.0 + 100.0 * 0.5 / 1e9)
    assert x == pytest.approx(want, abs=0.05)


def test_noise_model_missing_coupling_raises():
    nm = NoiseModel({0: 0.0, 1: 0.0}, {(0, 1): 0.1}, {0: 0.0, 1: 0.0})
    with pytest.raises(CalibrationError):
        nm.p_gate(Gate("cx", (1, 2)))

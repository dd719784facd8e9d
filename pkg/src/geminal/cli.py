"""Command-line drivers for curves, occupation scans, and self-checks.

Every command writes plain delimited tables (gnuplot-friendly) plus, for
curves, a JSON sidecar with the full per-point record.  Output is fully
determined by (command line, seed): headers echo both, and floats are
printed with fixed formats so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

import geminal
from geminal import ansatz, chem, hybrid, mitigation, qsim, tomography

SYSTEM_BUILDERS = {
    "h2": chem.h2_molecule,
    "h3plus": chem.h3plus_molecule,
}
DEFAULT_SCANS = {"h2": "0.5:5.0:12", "h3plus": "1.0:3.0:8"}


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def parse_scan_range(text: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        values = np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise SystemExit(f"bad scan range {text!r}; expected start:stop:npoints") from exc
    if values.size < 1:
        raise SystemExit("scan range needs at least one point")
    return values


def parse_mitigate(text: str) -> tuple[tuple[str, ...], bool]:
    tokens = [tok.strip().lower() for tok in text.split(",") if tok.strip()]
    if tokens == ["none"]:
        return (), False
    symmetries = []
    project = False
    for tok in tokens:
        if tok == "n":
            symmetries.append("N")
        elif tok == "sz":
            symmetries.append("Sz")
        elif tok == "polytope":
            project = True
        else:
            raise SystemExit(f"unknown mitigation flag {tok!r}")
    return tuple(symmetries), project


def load_noise(name: str, n_qubits: int, damping: bool) -> qsim.NoiseModel | None:
    if name == "off":
        return None
    try:
        calibration = qsim.load_calibration(name)
        return qsim.NoiseModel.from_calibration(calibration, n_qubits, damping=damping)
    except qsim.CalibrationError as exc:
        raise SystemExit(f"cannot use calibration {name!r}: {exc}") from exc


def resolve_molecule_builder(args):
    """Returns (builder(value) -> Molecule, system label)."""
    if args.geometry is not None:
        path = Path(args.geometry)
        if not path.exists():
            raise SystemExit(f"geometry file not found: {path}")
        try:
            molecule = chem.parse_geometry(path.read_text())
        except chem.GeometryError as exc:
            raise SystemExit(f"bad geometry file {path}: {exc}") from exc
        return (lambda _=0.0: molecule), molecule.label or path.stem
    return SYSTEM_BUILDERS[args.system], args.system


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get("GEMINAL_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def header_lines(args, extra: dict | None = None) -> list[str]:
    settings = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func",) and value is not None
    }
    if extra:
        settings.update(extra)
    echo = " ".join(f"{key}={value}" for key, value in settings.items())
    return [f"# geminal {geminal.__version__}", f"# config: {echo}"]


def write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def hybrid_config(args, shots_default: int = 2048) -> hybrid.HybridConfig:
    symmetries, project = parse_mitigate(args.mitigate)
    return hybrid.HybridConfig(
        shots=None if args.exact else args.shots,
        noise=None,  # attached per run once the qubit count is known
        seed=args.seed,
        symmetries=symmetries,
        project=project,
        phase_mode=args.phase,
    )


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------

def _curve_worker(payload):
    molecule, config, value = payload
    return hybrid.run_hybrid(molecule, config, parameter=value)


def cmd_curve(args) -> int:
    builder, label = resolve_molecule_builder(args)
    values = parse_scan_range(args.scan or DEFAULT_SCANS.get(args.system, "1.0:3.0:8"))
    base = hybrid_config(args)

    probe = chem.compute_integrals(builder(values[0]))
    noise = load_noise(args.noise, 2 * probe.n_basis, args.damping)
    base = replace(base, noise=noise)

    jobs = []
    for i, value in enumerate(values):
        config = replace(base, seed=base.seed + 104729 * i)
        jobs.append((builder(value), config, float(value)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            points = list(pool.map(_curve_worker, jobs))
    else:
        points = [_curve_worker(job) for job in jobs]

    lines = header_lines(args, {"system": label})
    lines.append("# R_bohr  E_hybrid  E_FCI  E_RHF  abs_error_mhartree  iterations  flags")
    for p in points:
        err_mha = abs(p.energy - p.energy_fci) * 1e3
        flags = ",".join(p.flags) if p.flags else "-"
        lines.append(
            f"{p.parameter:10.5f}  {p.energy:16.10f}  {p.energy_fci:16.10f}  "
            f"{p.energy_rhf:16.10f}  {err_mha:12.6f}  {p.outer_iterations:4d}  {flags}"
        )
    out = output_dir(args)
    write_lines(out / "curve.txt", lines)
    print("\n".join(lines))

    sidecar = [
        {
            "parameter": p.parameter,
            "energy": p.energy,
            "energy_fci": p.energy_fci,
            "energy_rhf": p.energy_rhf,
            "error_mhartree": abs(p.energy - p.energy_fci) * 1e3,
            "outer_iterations": p.outer_iterations,
            "objective_evaluations": p.n_evals,
            "converged": p.converged,
            "occupations": p.state.n.tolist(),
            "phases": p.state.xi.tolist(),
            "retained_fraction": p.retained_fraction,
            "energy_trace": p.energy_trace,
            "flags": p.flags,
        }
        for p in points
    ]
    (out / "curve_points.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    if args.strict and any(p.flags for p in points):
        flagged = [f"{p.parameter:.5f}: {','.join(p.flags)}" for p in points if p.flags]
        print("flagged points: " + "; ".join(flagged), file=sys.stderr)
        return 1
    return 0 if all(p.converged for p in points) else 1


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

def measure_scan_point(circuit, shots, seed, stream, noise):
    if shots is None:
        return tomography.ExactDistribution(
            qsim.run_circuit(circuit).probabilities(), circuit.n_qubits
        )
    if noise is not None:
        return qsim.run_noisy(circuit, noise, shots, seed, stream)
    return qsim.sample(qsim.run_circuit(circuit), shots, seed, stream)


def half_set_occupations(record, r: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.array([record.occupation(2 * p) for p in range(r)])
    beta = np.array([record.occupation(2 * p + 1) for p in range(r)])
    return alpha, beta


def cmd_scan(args) -> int:
    builder, label = resolve_molecule_builder(args)
    molecule = builder(args.at)
    ints = chem.compute_integrals(molecule)
    r = ints.n_basis
    if r < 2 or r > 3:
        raise SystemExit("occupation scans support systems with 2 or 3 orbitals")
    shots = None if args.exact else args.shots
    noise = load_noise(args.noise, 2 * r, args.damping)
    symmetries, project = parse_mitigate(args.mitigate)

    grid = mitigation.scan_angles()
    points = list(itertools.product(grid, repeat=r - 1))

    stages = {"raw": [], "verified": [], "projected": []}
    retained = []
    for i, t in enumerate(points):
        circuit = ansatz.build_ansatz_circuit(r, np.array(t))
        record = measure_scan_point(circuit, shots, args.seed, i, noise)
        frac = 1.0
        filtered = record
        if symmetries and isinstance(record, qsim.ShotHistogram):
            filtered, frac = mitigation.symmetry_verify(
                record, check_n="N" in symmetries, check_sz="Sz" in symmetries
            )
        retained.append(frac)

        raw = half_set_occupations(record, r)
        verified = half_set_occupations(filtered, r)
        if args.contract is not None:
            raw = tuple(0.5 + args.contract * (h - 0.5) for h in raw)
            verified = tuple(0.5 + args.contract * (h - 0.5) for h in verified)
        projected = tuple(
            mitigation.project_polytope(h).occupations if project else h
            for h in verified
        )
        stages["raw"].append(raw)
        stages["verified"].append(verified)
        stages["projected"].append(projected)

    out = output_dir(args)
    angle_names = "  ".join(f"t{k:<10}" for k in range(r - 1))
    occ_names = "  ".join(
        f"{half}_n{p}" for half in ("alpha", "beta") for p in range(r)
    )
    for stage, rows in stages.items():
        lines = header_lines(args, {"system": label, "stage": stage})
        lines.append(f"# {angle_names}  {occ_names}")
        for t, (alpha, beta) in zip(points, rows):
            tcols = "  ".join(f"{v:11.8f}" for v in t)
            ocols = "  ".join(f"{v:10.6f}" for v in np.concatenate([alpha, beta]))
            lines.append(f"{tcols}  {ocols}")
        write_lines(out / f"scan_{stage}.txt", lines)

    summary = header_lines(args, {"system": label})
    summary.append(f"# mean retained fraction: {np.mean(retained):.6f}")
    effective_shots = max(int((shots or 4096) * np.mean(retained)), 1)

    if r == 2:
        for half, idx in (("half_set_1", 0), ("half_set_2", 1)):
            for stage in ("raw", "projected" if project else "verified"):
                curve1 = np.array([rows[idx][0] for rows in stages[stage]])
                curve2 = np.array([rows[idx][1] for rows in stages[stage]])
                v, lo, hi = mitigation.bootstrap_v_interval(
                    grid, curve1, curve2, effective_shots, seed=args.seed
                )
                summary.append(
                    f"{half} {stage}: V = {v:.4f}  ci95 = [{lo:.4f}, {hi:.4f}]"
                )
    else:
        ideal_pts = np.array(
            [
                np.sort(ansatz.givens_chain_amplitudes(np.array(t), r) ** 2)[::-1][:2]
                for t in points
            ]
        )
        final_stage = "projected" if project else "verified"
        for half, idx in (("half_set_1", 0), ("half_set_2", 1)):
            measured = np.array(
                [np.sort(rows[idx])[::-1][:2] for rows in stages[final_stage]]
            )
            ratio = mitigation.hull_area_ratio(measured, ideal_pts)
            summary.append(f"{half} hull_area_ratio = {ratio:.4f}")
    write_lines(out / "scan_summary.txt", summary)
    print("\n".join(summary))
    return 0


# ---------------------------------------------------------------------------
# vtable
# ---------------------------------------------------------------------------

VTABLE_SETTINGS = [
    ("none", ()),
    ("N", ("N",)),
    ("Sz", ("Sz",)),
    ("N+Sz", ("N", "Sz")),
]


def vtable_rows(r, shots, seed, noise):
    """V per symmetry setting and half-set on the standard r=2 scan."""
    grid = mitigation.scan_angles()
    records = []
    for i, t in enumerate(grid):
        circuit = ansatz.build_ansatz_circuit(r, np.array([t]))
        records.append(measure_scan_point(circuit, shots, seed, i, noise))

    rows = []
    for name, symmetries in VTABLE_SETTINGS:
        halves = {0: ([], []), 1: ([], [])}
        fracs = []
        for record in records:
            filtered, frac = record, 1.0
            if symmetries and isinstance(record, qsim.ShotHistogram):
                filtered, frac = mitigation.symmetry_verify(
                    record, check_n="N" in symmetries, check_sz="Sz" in symmetries
                )
            fracs.append(frac)
            alpha, beta = half_set_occupations(filtered, r)
            for idx, occ in ((0, alpha), (1, beta)):
                halves[idx][0].append(occ[0])
                halves[idx][1].append(occ[1])
        mean_frac = float(np.mean(fracs))
        effective = max(int((shots or 4096) * mean_frac), 1)
        row = {"setting": name, "retained": mean_frac}
        for idx in (0, 1):
            v, lo, hi = mitigation.bootstrap_v_interval(
                grid,
                np.array(halves[idx][0]),
                np.array(halves[idx][1]),
                effective,
                seed=seed,
            )
            row[f"v{idx + 1}"] = (v, lo, hi)
        rows.append(row)
    return rows


def cmd_vtable(args) -> int:
    builder, label = resolve_molecule_builder(args)
    molecule = builder(args.at)
    ints = chem.compute_integrals(molecule)
    if ints.n_basis != 2:
        raise SystemExit("the V table is defined for two-orbital systems")
    shots = None if args.exact else args.shots
    noise = load_noise(args.noise, 4, args.damping)

    rows = vtable_rows(2, shots, args.seed, noise)
    lines = header_lines(args, {"system": label})
    lines.append("# symmetries  V_half1  ci95_lo  ci95_hi  V_half2  ci95_lo  ci95_hi  retained")
    for row in rows:
        v1, v2 = row["v1"], row["v2"]
        lines.append(
            f"{row['setting']:<10}  {v1[0]:8.4f}  {v1[1]:8.4f}  {v1[2]:8.4f}  "
            f"{v2[0]:8.4f}  {v2[1]:8.4f}  {v2[2]:8.4f}  {row['retained']:8.4f}"
        )
    out = output_dir(args)
    write_lines(out / "vtable.txt", lines)
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _check_calibrations(noise_arg):
    for name in ("ibm-5", "ibm-14"):
        qsim.load_calibration(name)
    if noise_arg not in (None, "off", "ibm-5", "ibm-14"):
        qsim.load_calibration(noise_arg)


def _check_circuit_equivalence(quick):
    thetas = np.linspace(-np.pi, np.pi, 4 if quick else 16)
    for theta in thetas:
        gen = ansatz.generic_pair_gate(0, theta, 2)
        opt = ansatz.optimized_pair_gate(0, theta, 2)
        assert gen.cx_count == 12 and opt.cx_count == 8
        dim = 2**gen.n_qubits
        cols_g = np.empty((dim, dim), dtype=complex)
        cols_o = np.empty((dim, dim), dtype=complex)
        for k in range(dim):
            basis = qsim.Statevector.basis_state(4, k)
            cols_g[:, k] = qsim.run_circuit(gen, basis).amps
            cols_o[:, k] = qsim.run_circuit(opt, basis).amps
        overlap = np.trace(cols_g.conj().T @ cols_o) / dim
        distance = np.linalg.norm(cols_g * overlap / abs(overlap) - cols_o)
        assert distance < 1e-10, f"theta={theta}: distance {distance}"


def _check_pauli_reduction(quick):
    from scipy.linalg import expm

    for r in (2,) if quick else (2, 3):
        for k in range(r - 1):
            theta = -0.813
            gen = ansatz.pair_excitation_generator_full(k, r).dense()
            target = expm(theta * gen)
            circuit = ansatz.optimized_pair_gate(k, theta, r)
            for idx in ansatz.paired_subspace_indices(r):
                basis = qsim.Statevector.basis_state(2 * r, idx)
                ours = qsim.run_circuit(circuit, basis).amps
                assert np.linalg.norm(ours - target[:, idx]) < 1e-10


def _check_polytope(quick):
    rng = np.random.default_rng(0)
    for _ in range(200 if quick else 1000):
        p = rng.normal(0.3, 0.6, size=3)
        first = mitigation.project_polytope(p)
        second = mitigation.project_polytope(first.occupations)
        assert np.max(np.abs(second.occupations - first.occupations)) < 1e-12
        s = np.sort(first.occupations)[::-1]
        assert s[-1] >= -1e-10 and abs(s.sum() - 1) < 1e-10


def _check_energy_assembly(quick):
    rng = np.random.default_rng(1)
    systems = [(chem.h2_molecule(1.4), 2)]
    if not quick:
        systems.append((chem.h3plus_molecule(1.65), 3))
    for molecule, r in systems:
        ints, rhf, _ = chem.scf_reference(molecule)
        h, eri = chem.transform_integrals(ints, rhf.mo_coeff)
        ham = ansatz.jordan_wigner_hamiltonian(h, eri, ints.enuc)
        for _ in range(20 if quick else 100):
            t = rng.uniform(-np.pi, np.pi, size=r - 1)
            amps = ansatz.givens_chain_amplitudes(t)
            prods = amps[:-1] * amps[1:]
            state = hybrid.GeminalState(amps**2, np.where(prods >= 0, 1, -1))
            e = hybrid.assemble_2dm_energy(state, h, eri, ints.enuc)
            ref = qsim.run_circuit(ansatz.build_ansatz_circuit(r, t)).expectation(ham)
            assert abs(e - ref) < 1e-10


def _check_fci_consistency(quick):
    ints, rhf, fci = chem.scf_reference(chem.h2_molecule(1.4))
    g, basis = chem.pair_spectrum(fci.coeff)
    h, eri = chem.transform_integrals(ints, rhf.mo_coeff @ basis)
    state = hybrid.GeminalState(g**2, np.sign(g[:-1] * g[1:]).astype(int))
    assert abs(hybrid.assemble_2dm_energy(state, h, eri, ints.enuc) - fci.energy) < 1e-10
    if not quick:
        point = hybrid.run_hybrid(chem.h2_molecule(1.4), hybrid.HybridConfig(shots=None))
        assert abs(point.energy - point.energy_fci) < 1e-6


def cmd_selftest(args) -> int:
    checks = [
        ("calibration-files", lambda: _check_calibrations(args.noise)),
        ("circuit-equivalence", lambda: _check_circuit_equivalence(args.quick)),
        ("pauli-reduction", lambda: _check_pauli_reduction(args.quick)),
        ("polytope-projection", lambda: _check_polytope(args.quick)),
        ("energy-assembly", lambda: _check_energy_assembly(args.quick)),
        ("fci-consistency", lambda: _check_fci_consistency(args.quick)),
    ]
    failures = 0
    for name, check in checks:
        try:
            check()
        except Exception as exc:  # report every failing check, keep going
            failures += 1
            print(f"FAIL  {name}: {exc}", file=sys.stderr)
        else:
            print(f"ok    {name}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# integrals
# ---------------------------------------------------------------------------

def cmd_integrals(args) -> int:
    builder, label = resolve_molecule_builder(args)
    molecule = builder(args.at)
    ints, rhf, fci = chem.scf_reference(molecule)
    n = ints.n_basis

    lines = header_lines(args, {"system": label})
    lines.append(f"# n_basis={n} n_electrons={ints.n_electrons}")
    lines.append(f"enuc = {ints.enuc:.12f}")
    for name, matrix in (("overlap", ints.overlap), ("hcore", ints.hcore)):
        lines.append(f"# {name}")
        for row in matrix:
            lines.append("  ".join(f"{v:16.12f}" for v in row))
    lines.append("# eri (pq|rs), unique elements with |value| > 1e-12")
    seen = set()
    for p in range(n):
        for q in range(n):
            for u in range(n):
                for v in range(n):
                    key = min(
                        (p, q, u, v), (q, p, u, v), (p, q, v, u), (q, p, v, u),
                        (u, v, p, q), (v, u, p, q), (u, v, q, p), (v, u, q, p),
                    )
                    if key in seen or abs(ints.eri[p, q, u, v]) <= 1e-12:
                        continue
                    seen.add(key)
                    a, b, c, d = key
                    lines.append(f"{a} {b} {c} {d}  {ints.eri[a, b, c, d]:16.12f}")
    lines.append(f"E_RHF = {rhf.energy:.12f}")
    lines.append(f"E_FCI = {fci.energy:.12f}")
    out = output_dir(args)
    write_lines(out / "integrals.txt", lines)
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def add_common_arguments(sub, with_scan_point=False):
    sub.add_argument("--system", choices=sorted(SYSTEM_BUILDERS), default="h2")
    sub.add_argument("--geometry", help="geometry file (overrides --system)")
    sub.add_argument("--shots", type=int, default=2048)
    sub.add_argument("--exact", action="store_true", help="exact expectations, no sampling")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--noise", default="off", help="off, ibm-5, ibm-14, or a calibration file")
    sub.add_argument("--damping", action="store_true", help="include T1/T2 damping channels")
    sub.add_argument(
        "--mitigate", default="n,sz,polytope", help="comma list of n, sz, polytope; or none"
    )
    sub.add_argument("--phase", choices=["auto", "measured", "classical"], default="auto")
    sub.add_argument("--out", help="output directory (default $GEMINAL_OUT or .)")
    sub.add_argument("--strict", action="store_true")
    if with_scan_point:
        sub.add_argument(
            "--at", type=float, default=1.4, help="geometry parameter in bohr"
        )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geminal",
        description="Paired-ansatz quantum-classical benchmark workbench",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    curve = subs.add_parser("curve", help="dissociation curve against FCI")
    add_common_arguments(curve)
    curve.add_argument("--scan", help="geometry range start:stop:npoints")
    curve.add_argument("--jobs", type=int, default=1)
    curve.set_defaults(func=cmd_curve)

    scan = subs.add_parser("scan", help="occupation scan over entangler angles")
    add_common_arguments(scan, with_scan_point=True)
    scan.add_argument(
        "--contract",
        type=float,
        help="synthetic contraction factor applied to measured occupations",
    )
    scan.set_defaults(func=cmd_scan)

    vtable = subs.add_parser("vtable", help="V metric by symmetry setting")
    add_common_arguments(vtable, with_scan_point=True)
    vtable.set_defaults(func=cmd_vtable)

    selftest = subs.add_parser("selftest", help="oracle and invariant checks")
    selftest.add_argument("--quick", action="store_true")
    selftest.add_argument("--noise", help="also validate this calibration file")
    selftest.set_defaults(func=cmd_selftest)

    integrals = subs.add_parser("integrals", help="dump integral tables")
    add_common_arguments(integrals, with_scan_point=True)
    integrals.set_defaults(func=cmd_integrals)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

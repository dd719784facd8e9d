"""Hybrid optimization loop: quantum pair occupations, classical orbitals.

The two-electron energy in an orthonormal orbital basis, under the
paired (seniority-zero) structure of the wavefunction, reduces to

    E = sum_p n_p (2 h_pp + (pp|pp)) + sum_{p != q} g_p g_q (pq|pq) + E_nuc

with g_p = s_p sqrt(n_p) and cumulative signs s_0 = 1, s_{p+1} = s_p xi_p.
Occupations n and relative phases xi come from tomography of the paired
ansatz; orbital rotations stay classical.  The outer loop alternates a
gradient-free Nelder-Mead search over rotation angles t with a BFGS
orbital relaxation at fixed (n, xi) until successive outer energies
agree within a threshold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from geminal import ansatz, chem, mitigation, tomography
from geminal.chem import IntegralSet, Molecule
from geminal.qsim import NoiseModel, make_rng


@dataclass
class GeminalState:
    """Measured pair occupations and relative signs of one half-set."""

    n: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=float)
        self.xi = np.asarray(self.xi, dtype=int)
        if self.xi.shape != (self.n.size - 1,):
            raise ValueError("need one sign per adjacent orbital pair")
        if not np.all(np.abs(self.xi) == 1):
            raise ValueError("phases must be +-1")

    @property
    def g(self) -> np.ndarray:
        signs = np.concatenate([[1], np.cumprod(self.xi)])
        return signs * np.sqrt(np.clip(self.n, 0.0, None))


def assemble_2dm_energy(
    state: GeminalState, h: np.ndarray, eri: np.ndarray, enuc: float
) -> float:
    """Energy of the paired 2-DM against integrals in the same basis."""
    r = state.n.size
    if h.shape != (r, r) or eri.shape != (r, r, r, r):
        raise ValueError("integral rank does not match the state")
    g = state.g
    diag = np.array([2 * h[p, p] + eri[p, p, p, p] for p in range(r)])
    exch = np.array([[eri[p, q, p, q] for q in range(r)] for p in range(r)])
    cross = g @ exch @ g - g @ np.diag(np.diag(exch)) @ g
    return float(state.n @ diag + cross + enuc)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HybridConfig:
    """Knobs for one hybrid optimization.

    shots=None runs exact (infinite-shot) tomography.  phase_mode
    'auto' measures the signs for r=2 and propagates them classically
    for larger r; 'measured' and 'classical' force either route.
    """

    shots: int | None = 2048
    noise: NoiseModel | None = None
    seed: int = 0
    symmetries: tuple[str, ...] = ("N", "Sz")
    project: bool = True
    phase_mode: str = "auto"
    phase_pattern: str = "C2"
    nm_scale: float = 0.35
    nm_max_iter: int = 200
    nm_ftol: float | None = None  # default picked by shots: 1e-8 exact, 1e-4 sampled
    bfgs_step: float = 1e-5
    bfgs_gtol: float = 1e-7
    bfgs_max_iter: int = 100
    outer_threshold: float = 1e-3
    outer_max_iter: int = 10
    restarts: int = 2

    def __post_init__(self):
        if self.phase_mode not in ("auto", "measured", "classical"):
            raise ValueError(f"unknown phase mode {self.phase_mode!r}")
        for name in ("nm_scale", "bfgs_step", "bfgs_gtol", "outer_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nm_ftol is not None and self.nm_ftol <= 0:
            raise ValueError("nm_ftol must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one optimization run")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive or None for exact mode")

    @property
    def effective_nm_ftol(self) -> float:
        if self.nm_ftol is not None:
            return self.nm_ftol
        return 1e-8 if self.shots is None else 1e-4

    def resolve_phase_mode(self, r: int) -> str:
        if self.phase_mode == "auto":
            return "measured" if r == 2 else "classical"
        return self.phase_mode


# ---------------------------------------------------------------------------
# tomographic objective
# ---------------------------------------------------------------------------

class QuantumObjective:
    """Energy estimate of the ansatz at angles t, measured not computed.

    Each call prepares the circuit for t, estimates occupations (one
    Z-basis preparation) and, in measured phase mode, window signs (two
    rotated-basis preparations), mitigates, and assembles the energy.
    Preparation counts are tracked per call so the constant-cost
    tomography contract stays testable.
    """

    def __init__(self, h: np.ndarray, eri: np.ndarray, enuc: float, config: HybridConfig):
        self.h = h
        self.eri = eri
        self.enuc = enuc
        self.config = config
        self.r = h.shape[0]
        self.phase_mode = config.resolve_phase_mode(self.r)
        self.counter = tomography.PreparationCounter()
        self.n_evals = 0
        self.last_eval_preparations = 0
        self.last_state: GeminalState | None = None
        self.last_retained = 1.0
        self._next_stream = 0

    def _sampler(self, circuit):
        if self.config.shots is None:
            return tomography.ExactSampler(circuit, counter=self.counter)
        return tomography.ShotSampler(
            circuit,
            self.config.shots,
            seed=self.config.seed,
            noise=self.config.noise,
            base_stream=self._next_stream,
            counter=self.counter,
        )

    def _measure_raw(self, t: np.ndarray):
        """One tomography batch: raw occupations plus phase estimates."""
        circuit = ansatz.build_ansatz_circuit(self.r, t)
        sampler = self._sampler(circuit)
        symmetries = self.config.symmetries if self.config.shots is not None else ()
        occ = tomography.measure_occupations(sampler, self.r, symmetries)
        n = 0.5 * (occ.n_alpha + occ.n_beta)
        if self.phase_mode == "measured":
            est = tomography.estimate_phases(sampler, self.r, self.config.phase_pattern)
            phases, phase_errs = est.values, est.stderr
        else:
            phases = phase_errs = None
        if self.config.shots is not None:
            self._next_stream = sampler._stream
        return n, phases, phase_errs, occ.retained_fraction

    def measure_state(self, t: np.ndarray, repeats: int = 1) -> GeminalState:
        """Tomographic state estimate, optionally averaged over repeats.

        Raw occupations (and raw phase estimates) from ``repeats``
        independent batches are averaged before mitigation, shrinking
        shot noise where it matters without changing the per-batch
        preparation count.  Exact mode ignores ``repeats``.
        """
        t = np.asarray(t, dtype=float)
        if self.config.shots is None:
            repeats = 1
        before = self.counter.count
        n_acc = np.zeros(self.r)
        ph_acc = np.zeros(max(self.r - 1, 0))
        ph_var = np.zeros(max(self.r - 1, 0))
        retained = 0.0
        for _ in range(repeats):
            n, phases, phase_errs, frac = self._measure_raw(t)
            n_acc += n
            retained += frac
            if phases is not None:
                ph_acc += phases
                ph_var += phase_errs**2
        n = n_acc / repeats
        self.last_retained = retained / repeats

        if self.phase_mode == "measured":
            vals = ph_acc / repeats
            errs = np.sqrt(ph_var) / repeats
            xi = np.where(vals >= 0, 1, -1).astype(int)
            ambiguous = np.abs(vals) < 2.0 * errs
            if np.any(ambiguous):
                fallback = tomography.classical_phase_assignment(t)
                xi[ambiguous] = fallback.xi[ambiguous]
        else:
            xi = tomography.classical_phase_assignment(t).xi

        if self.config.project:
            n = mitigation.project_polytope(n).occupations
        self.last_eval_preparations = (self.counter.count - before) // repeats
        return GeminalState(n, xi)

    def __call__(self, t: np.ndarray) -> float:
        state = self.measure_state(t)
        self.n_evals += 1
        self.last_state = state
        return assemble_2dm_energy(state, self.h, self.eri, self.enuc)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizeOutcome:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool


def nelder_mead(
    f,
    x0: np.ndarray,
    scale: float = 0.35,
    max_iter: int = 200,
    ftol: float = 1e-8,
    reevaluate_best: bool = True,
) -> OptimizeOutcome:
    """Simplex search tuned for noisy objectives.

    Initial simplex: x0 plus one vertex per coordinate displaced by
    ``scale``.  Standard reflection/expansion/contraction/shrink
    coefficients (1, 2, 0.5, 0.5).  With ``reevaluate_best`` the
    current best vertex is re-measured every iteration so a lucky
    downward noise fluctuation cannot pin the simplex to a false
    minimum.  Stops when the simplex function spread drops below
    ``ftol`` or after ``max_iter`` iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    if dim == 0:
        raise ValueError("objective needs at least one parameter")
    verts = np.vstack([x0] + [x0 + scale * np.eye(dim)[i] for i in range(dim)])
    fvals = np.array([f(v) for v in verts])
    nfev = dim + 1
    nit = 0
    converged = False
    while nit < max_iter:
        order = np.argsort(fvals)
        verts, fvals = verts[order], fvals[order]
        if reevaluate_best:
            fvals[0] = f(verts[0])
            nfev += 1
            order = np.argsort(fvals)
            verts, fvals = verts[order], fvals[order]
        if fvals[-1] - fvals[0] < ftol:
            if reevaluate_best:
                # a noisy spread can dip under ftol by luck; only stop if
                # the collapse survives re-measuring the whole simplex
                fvals = np.array([f(v) for v in verts])
                nfev += dim + 1
                order = np.argsort(fvals)
                verts, fvals = verts[order], fvals[order]
                if fvals[-1] - fvals[0] >= ftol:
                    nit += 1
                    continue
            converged = True
            break
        nit += 1
        centroid = verts[:-1].mean(axis=0)
        xr = centroid + (centroid - verts[-1])
        fr = f(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - verts[-1])
            fe = f(xe)
            nfev += 1
            verts[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            inside = fr >= fvals[-1]
            xc = centroid + 0.5 * ((verts[-1] if inside else xr) - centroid)
            fc = f(xc)
            nfev += 1
            if fc < min(fr, fvals[-1]):
                verts[-1], fvals[-1] = xc, fc
            else:
                verts[1:] = verts[0] + 0.5 * (verts[1:] - verts[0])
                fvals[1:] = [f(v) for v in verts[1:]]
                nfev += dim
    order = np.argsort(fvals)
    return OptimizeOutcome(verts[order][0], float(fvals[order][0]), nfev, nit, converged)


# ---------------------------------------------------------------------------
# hybrid steps
# ---------------------------------------------------------------------------

@dataclass
class QuantumStepResult:
    t: np.ndarray
    state: GeminalState
    energy: float
    n_evals: int
    converged: bool
    retained_fraction: float = 1.0


def quantum_step(
    h: np.ndarray,
    eri: np.ndarray,
    enuc: float,
    config: HybridConfig,
    t0: np.ndarray | None = None,
) -> QuantumStepResult:
    """Minimize the measured energy over rotation angles at fixed orbitals.

    Runs ``config.restarts`` independent Nelder-Mead searches (the first
    from t0, later ones from jittered copies) and keeps the best.
    """
    r = h.shape[0]
    if t0 is None:
        t0 = np.zeros(r - 1)
    objective = QuantumObjective(h, eri, enuc, config)
    jitter = make_rng(config.seed, 404)
    best = None
    converged = False
    for run in range(config.restarts):
        start = t0 if run == 0 else t0 + jitter.uniform(-0.5, 0.5, size=r - 1)
        out = nelder_mead(
            objective,
            start,
            scale=config.nm_scale,
            max_iter=config.nm_max_iter,
            ftol=config.effective_nm_ftol,
            reevaluate_best=config.shots is not None,
        )
        if best is None or out.fun < best.fun:
            best = out
            converged = out.converged
    # refresh the state at the winning angles with extra averaging so the
    # returned (n, xi) is less noisy than a single optimizer evaluation
    state = objective.measure_state(best.x, repeats=1 if config.shots is None else 4)
    energy = assemble_2dm_energy(state, h, eri, enuc)
    return QuantumStepResult(
        best.x,
        state,
        float(energy),
        objective.n_evals,
        converged,
        objective.last_retained,
    )


@dataclass
class OrbitalStepResult:
    mo_coeff: np.ndarray
    energy: float
    converged: bool


def orbital_step(
    integrals: IntegralSet,
    C: np.ndarray,
    state: GeminalState,
    config: HybridConfig,
) -> OrbitalStepResult:
    """Relax orbitals under the fixed measured 2-DM.

    BFGS over the r(r-1)/2 Givens angles with central finite-difference
    gradients.  The returned energy never exceeds the starting energy:
    on any optimizer misstep the input orbitals are kept.
    """
    r = state.n.size
    pairs = list(itertools.combinations(range(r), 2))

    def rotated(angles: np.ndarray) -> np.ndarray:
        rots = [(p, q, a) for (p, q), a in zip(pairs, angles)]
        return chem.apply_givens_rotations(C, rots)

    def energy_at(angles: np.ndarray) -> float:
        h, eri = chem.transform_integrals(integrals, rotated(angles))
        return assemble_2dm_energy(state, h, eri, integrals.enuc)

    def gradient(angles: np.ndarray) -> np.ndarray:
        step = config.bfgs_step
        grad = np.empty(angles.size)
        for i in range(angles.size):
            up, down = angles.copy(), angles.copy()
            up[i] += step
            down[i] -= step
            grad[i] = (energy_at(up) - energy_at(down)) / (2 * step)
        return grad

    x0 = np.zeros(len(pairs))
    e0 = energy_at(x0)
    res = optimize.minimize(
        energy_at,
        x0,
        jac=gradient,
        method="BFGS",
        options={"gtol": config.bfgs_gtol, "maxiter": config.bfgs_max_iter},
    )
    if res.fun <= e0:
        return OrbitalStepResult(rotated(res.x), float(res.fun), bool(res.success))
    return OrbitalStepResult(C.copy(), float(e0), False)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

@dataclass
class CurvePoint:
    parameter: float
    energy: float
    energy_fci: float
    energy_rhf: float
    outer_iterations: int
    n_evals: int
    converged: bool
    state: GeminalState = field(repr=False)
    retained_fraction: float = 1.0
    energy_trace: list[float] = field(default_factory=list, repr=False)
    flags: list[str] = field(default_factory=list)


def run_hybrid(
    molecule: Molecule, config: HybridConfig, parameter: float = 0.0
) -> CurvePoint:
    """Optimize one geometry, alternating quantum and orbital steps.

    Starts from the RHF orbitals.  Converged when two successive outer
    energies agree within ``config.outer_threshold``.  A zero outer-
    iteration cap short-circuits to the single-pair energy in the RHF
    basis (the RHF determinant itself).
    """
    ints, rhf, fci = chem.scf_reference(molecule)
    r = ints.n_basis
    flags: list[str] = []
    if not rhf.converged:
        flags.append("scf-not-converged")

    C = rhf.mo_coeff.copy()
    n0 = np.zeros(r)
    n0[0] = 1.0
    state = GeminalState(n0, np.ones(r - 1, dtype=int))
    h, eri = chem.transform_integrals(ints, C)
    energy = assemble_2dm_energy(state, h, eri, ints.enuc)
    trace = [energy]
    t = np.zeros(r - 1)
    total_evals = 0
    converged = False
    outer = 0
    best_energy = energy
    best_state, best_retained = state, 1.0

    for outer in range(1, config.outer_max_iter + 1):
        h, eri = chem.transform_integrals(ints, C)
        qres = quantum_step(h, eri, ints.enuc, config, t0=t)
        t, state = qres.t, qres.state
        total_evals += qres.n_evals
        if not qres.converged:
            flags.append(f"nm-iteration-cap-outer-{outer}")
        ores = orbital_step(ints, C, state, config)
        C = ores.mo_coeff
        energy = min(qres.energy, ores.energy)
        trace.append(energy)
        if energy <= best_energy:
            best_energy = energy
            best_state, best_retained = state, qres.retained_fraction
        if abs(trace[-1] - trace[-2]) < config.outer_threshold:
            converged = True
            break
    if not converged and config.outer_max_iter > 0:
        flags.append("outer-iteration-cap")

    return CurvePoint(
        parameter=parameter,
        energy=float(best_energy),
        energy_fci=float(fci.energy),
        energy_rhf=float(rhf.energy),
        outer_iterations=outer if config.outer_max_iter > 0 else 0,
        n_evals=total_evals,
        converged=converged or config.outer_max_iter == 0,
        state=best_state,
        retained_fraction=best_retained,
        energy_trace=trace,
        flags=flags,
    )


def dissociation_curve(builder, values, config: HybridConfig) -> list[CurvePoint]:
    """Independent hybrid runs over a geometry scan.

    ``builder`` maps a scan value to a Molecule.  Each point gets a
    decorrelated child seed derived from the configured base seed, so
    the whole curve is reproducible yet points stay independent.
    """
    values = list(values)
    if not values:
        raise ValueError("scan needs at least one value")
    points = []
    for i, value in enumerate(values):
        child = replace(config, seed=config.seed + 104729 * i)
        points.append(run_hybrid(builder(value), child, parameter=float(value)))
    return points

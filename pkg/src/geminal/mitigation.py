"""Error mitigation: symmetry filtering and occupation-polytope projection.

Mitigation works on measurement records only, never on amplitudes.
Symmetry verification discards Z-basis shots that violate conserved
quantities (electron count, spin projection).  Polytope projection maps
measured pair occupations to the nearest point of the convex hull of
the ideal occupation vertices

    v_j = (1/j, ..., 1/j, 0, ..., 0),   j = 1..r,

which is exactly the set of occupation vectors reachable by the paired
ansatz after sorting in descending order.  An optional affine map,
fitted against ideal scan curves, absorbs systematic shot-independent
distortion before projecting.

The dissociation-style figure of merit for mitigation quality is the
integrated occupation splitting V = trapezoid of |n_2 - n_1| over a
rotation-angle grid; its ideal value on the standard grid is 2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from geminal._kernels import popcount
from geminal.qsim import ShotHistogram

EVEN_BITS_64 = 0x5555555555555555


def _alpha_beta_counts(key: int) -> tuple[int, int]:
    return popcount(key & EVEN_BITS_64), popcount(key & (EVEN_BITS_64 << 1))


def symmetry_verify(
    hist: ShotHistogram,
    check_n: bool = True,
    check_sz: bool = True,
    n_electrons: int = 2,
) -> tuple[ShotHistogram, float]:
    """Drop shots violating particle-number or spin symmetry.

    N keeps outcomes with exactly ``n_electrons`` set bits; Sz keeps
    outcomes with equal alpha (even qubit) and beta (odd qubit) counts.
    Returns the filtered histogram and the retained shot fraction.
    """
    if hist.n_qubits > 64:
        raise ValueError("symmetry masks support at most 64 qubits")
    kept: dict[int, int] = {}
    for key, cnt in hist.counts.items():
        na, nb = _alpha_beta_counts(key)
        if check_n and na + nb != n_electrons:
            continue
        if check_sz and na != nb:
            continue
        kept[key] = cnt
    retained = sum(kept.values())
    if retained == 0:
        raise ValueError("symmetry filters rejected every shot")
    return ShotHistogram(hist.n_qubits, retained, kept), retained / hist.shots


# ---------------------------------------------------------------------------
# occupation polytope
# ---------------------------------------------------------------------------

def polytope_vertices(r: int) -> np.ndarray:
    """Vertices of the sorted-occupation polytope, one per row."""
    if r < 1:
        raise ValueError("need at least one orbital")
    v = np.zeros((r, r))
    for j in range(1, r + 1):
        v[j - 1, :j] = 1.0 / j
    return v


@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray
    offset: np.ndarray
    rms_residual: float = 0.0
    max_residual: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.offset


def vertex_scan_angles(r: int) -> np.ndarray:
    """Rotation-angle vectors whose ideal occupations hit each vertex.

    Row j-1 targets v_j: the first j occupations equal 1/j, which the
    amplitude chain reaches with cos^2 t_i = 1/(j-i) for i < j-1 and
    zero afterwards.  Angles are placed in [-pi/2, 0] so a calibration
    scan can splice them into the standard grid.
    """
    if r == 1:
        return np.zeros((1, 0))
    angles = np.zeros((r, r - 1))
    for j in range(1, r + 1):
        for i in range(j - 1):
            angles[j - 1, i] = -np.arccos(1.0 / np.sqrt(j - i))
    return angles


def estimate_affine_map(scan_angles, measured: np.ndarray, r: int) -> AffineMap:
    """Least-squares affine correction fitted against ideal scan curves.

    ``scan_angles`` holds one rotation-angle vector per scan point and
    ``measured`` the matching sorted occupation half-sets, shape (m, r).
    The scan should include the vertex-hitting angle vectors from
    ``vertex_scan_angles`` so every polytope vertex anchors the fit.
    Noiseless scans are rank deficient by one (occupations sum to 1),
    so the minimum-norm solution is taken; a scan whose points are
    affinely dependent does not determine the map at all and raises.
    """
    from geminal.ansatz import givens_chain_amplitudes

    measured = np.asarray(measured, dtype=float)
    if measured.ndim != 2 or measured.shape[1] != r:
        raise ValueError("measured scan must have shape (m, r)")
    m = measured.shape[0]
    if len(scan_angles) != m:
        raise ValueError("one angle vector is needed per scan point")
    ideal = np.empty((m, r))
    for i, t in enumerate(scan_angles):
        amps = givens_chain_amplitudes(np.asarray(t, dtype=float), r)
        ideal[i] = np.sort(amps**2)[::-1]
    design = np.hstack([measured, np.ones((m, 1))])
    sol, _, rank, _ = np.linalg.lstsq(design, ideal, rcond=None)
    if rank < r:
        raise ValueError("scan is degenerate; affine map is not identifiable")
    resid = design @ sol - ideal
    rms = float(np.sqrt(np.mean(resid**2)))
    return AffineMap(
        sol[:r].T.copy(), sol[r].copy(), rms, float(np.max(np.abs(resid)))
    )


@dataclass
class ProjectionResult:
    occupations: np.ndarray
    changed: bool
    distance: float


def _project_onto_hull(point: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Euclidean projection onto conv(vertices) by face enumeration.

    Every active set of the optimum appears among vertex subsets, and r
    stays small here, so checking all 2^r - 1 subsets is exact and
    cheap.  Each subset gives an equality-constrained least-squares
    candidate, kept only if its barycentric weights are nonnegative.
    """
    r = vertices.shape[0]
    best = None
    best_dist = np.inf
    for size in range(1, r + 1):
        for subset in itertools.combinations(range(r), size):
            v = vertices[list(subset)]
            gram = v @ v.T
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = gram
            kkt[:size, size] = 1.0
            kkt[size, :size] = 1.0
            rhs = np.append(v @ point, 1.0)
            try:
                lam = np.linalg.solve(kkt, rhs)[:size]
            except np.linalg.LinAlgError:
                continue
            if np.any(lam < -1e-10):
                continue
            cand = lam @ v
            dist = np.linalg.norm(cand - point)
            if dist < best_dist - 1e-15:
                best_dist = dist
                best = cand
    assert best is not None  # singletons always qualify
    return best


def project_polytope(
    n_raw: np.ndarray, affine: AffineMap | None = None
) -> ProjectionResult:
    """Map raw pair occupations to the nearest physical occupation vector.

    The input is sorted descending, optionally affine-corrected, then
    projected onto the sorted-occupation hull; the result is returned in
    the original orbital order.  Feasible inputs pass through unchanged,
    so the map is idempotent.
    """
    n_raw = np.asarray(n_raw, dtype=float)
    r = n_raw.size
    order = np.argsort(-n_raw, kind="stable")
    sorted_n = n_raw[order]
    if affine is not None:
        sorted_n = affine(sorted_n)
    projected = _project_onto_hull(sorted_n, polytope_vertices(r))
    out = np.empty(r)
    out[order] = projected
    distance = float(np.linalg.norm(out - n_raw))
    return ProjectionResult(out, distance > 1e-12, distance)


# ---------------------------------------------------------------------------
# scan metrics
# ---------------------------------------------------------------------------

def scan_angles(n_points: int = 11) -> np.ndarray:
    """Standard rotation-angle grid from -pi to 0."""
    return np.linspace(-np.pi, 0.0, n_points)


def v_metric(angles: np.ndarray, n1: np.ndarray, n2: np.ndarray) -> float:
    """Integrated occupation splitting over a scan; 2.0 when ideal."""
    angles = np.asarray(angles, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    if not (angles.shape == n1.shape == n2.shape):
        raise ValueError("angle grid and occupation curves disagree in length")
    if angles.size < 3:
        raise ValueError("scan needs at least 3 points")
    return float(np.trapezoid(np.abs(n2 - n1), angles))


def bootstrap_v_interval(
    angles: np.ndarray,
    n1: np.ndarray,
    n2: np.ndarray,
    shots: int,
    n_resamples: int = 1000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """V with a binomial-resampling 95 percent confidence interval.

    Each occupation estimate is treated as a proportion over ``shots``
    effective shots; resampled curves feed the same V integral.
    """
    rng = np.random.default_rng([int(seed), 303])
    n1 = np.clip(np.asarray(n1, dtype=float), 0.0, 1.0)
    n2 = np.clip(np.asarray(n2, dtype=float), 0.0, 1.0)
    draws1 = rng.binomial(shots, n1, size=(n_resamples, n1.size)) / shots
    draws2 = rng.binomial(shots, n2, size=(n_resamples, n2.size)) / shots
    vals = np.trapezoid(np.abs(draws2 - draws1), np.asarray(angles), axis=1)
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return v_metric(angles, n1, n2), float(lo), float(hi)


def hull_area_ratio(points: np.ndarray, ideal_points: np.ndarray) -> float:
    """Area of the measured 2D scan hull relative to the ideal hull."""
    from scipy.spatial import ConvexHull

    measured = ConvexHull(np.asarray(points, dtype=float))
    ideal = ConvexHull(np.asarray(ideal_points, dtype=float))
    # scipy's 2D convention: .volume is the area, .area the perimeter
    return float(measured.volume / ideal.volume)

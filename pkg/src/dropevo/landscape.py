"""Gaussian-RBF kernel ridge regression over formulation space, simplex-face
grids, local maxima and fitness-island catchment maps.

The model is the dual form only: dual weights solve (K + lambda*I) theta = y
with K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)); a prediction is the kernel-
weighted sum over training points. Each of the four faces of the composition
simplex (one component held at zero) is rasterized to a resolution x
resolution triangular lattice, and each valid cell is assigned to the fitness
island reached by steepest ascent over its 8-neighbourhood, with the ascent
allowed to cross the shared edges where two faces describe the same
composition.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

DEFAULT_SIGMA = 0.15
DEFAULT_LAMBDA = 1e-3
DEFAULT_RESOLUTION = 301


class LandscapeError(ValueError):
    pass


class NonpositiveBandwidth(LandscapeError):
    pass


class DimensionMismatch(LandscapeError):
    pass


class SolveFailure(LandscapeError):
    pass


def rbf_kernel(a, b, sigma: float) -> float:
    """exp(-||a-b||^2 / (2 sigma^2)), in (0, 1]."""
    if sigma <= 0:
        raise NonpositiveBandwidth(f"sigma must be > 0, got {sigma}")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.exp(-np.dot(d, d) / (2.0 * sigma * sigma)))


def _kernel_matrix(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * sigma * sigma))


@dataclass
class KernelModel:
    X: np.ndarray        # (n, 4) training inputs
    y: np.ndarray        # (n,) targets
    theta: np.ndarray    # (n,) dual weights
    lam: float
    sigma: float
    K: np.ndarray        # (n, n) training kernel matrix


def fit(X, y, lam: float = DEFAULT_LAMBDA, sigma: float = DEFAULT_SIGMA) -> KernelModel:
    """Solve (K + lam*I) theta = y by Cholesky factorization."""
    if sigma <= 0:
        raise NonpositiveBandwidth(f"sigma must be > 0, got {sigma}")
    if lam <= 0:
        raise LandscapeError(f"lambda must be > 0, got {lam}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise DimensionMismatch(f"{X.shape[0]} inputs vs {y.shape[0]} targets")
    K = _kernel_matrix(X, X, sigma)
    # Symmetrize and pin the diagonal so K is exactly what the kernel defines.
    K = (K + K.T) / 2.0
    np.fill_diagonal(K, 1.0)
    A = K + lam * np.eye(len(y))
    try:
        factor = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(
            f"(K + lambda*I) not positive definite; cond ~ {np.linalg.cond(A):.3e}") from exc
    theta = cho_solve(factor, y)
    return KernelModel(X=X, y=y, theta=theta, lam=lam, sigma=sigma, K=K)


def predict(model: KernelModel, x) -> float:
    """Kernel-weighted sum over training points at a single query."""
    k = _kernel_matrix(np.atleast_2d(np.asarray(x, dtype=float)), model.X, model.sigma)
    return float((k @ model.theta)[0])


def predict_many(model: KernelModel, Xq: np.ndarray) -> np.ndarray:
    return _kernel_matrix(np.asarray(Xq, dtype=float), model.X, model.sigma) @ model.theta


# ---------------------------------------------------------------------------
# Face lattices

@dataclass
class FaceLattice:
    """Triangular raster of one simplex face.

    ``face`` is the component held at zero. Cell (i, j) has X = i/(res-1),
    Y = j/(res-1), Z = 1 - X - Y; the remaining three components, in
    ascending index order, take (X, Y, Z). Cells with i + j > res-1 are
    invalid (Z < 0).
    """

    face: int
    resolution: int
    values: np.ndarray  # (res, res); NaN on invalid cells

    @property
    def valid(self) -> np.ndarray:
        i, j = np.indices(self.values.shape)
        return i + j <= self.resolution - 1


def face_axes(face: int) -> tuple[int, int, int]:
    """Component indices mapped to (X, Y, Z) for a face."""
    rest = [k for k in range(4) if k != face]
    return rest[0], rest[1], rest[2]


def cell_composition(face: int, i: int, j: int, resolution: int) -> tuple:
    ax, ay, az = face_axes(face)
    step = 1.0 / (resolution - 1)
    comp = [0.0] * 4
    comp[ax] = i * step
    comp[ay] = j * step
    comp[az] = 1.0 - comp[ax] - comp[ay]
    return tuple(comp)


def face_grid(model: KernelModel, face: int,
              resolution: int = DEFAULT_RESOLUTION) -> FaceLattice:
    """Predict the model over one face of the simplex."""
    if face not in (0, 1, 2, 3):
        raise LandscapeError("face must be 0..3")
    ax, ay, az = face_axes(face)
    coords = np.linspace(0.0, 1.0, resolution)
    ii, jj = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    valid = ii + jj <= resolution - 1
    Xv = coords[ii[valid]]
    Yv = coords[jj[valid]]
    Q = np.zeros((len(Xv), 4))
    Q[:, ax] = Xv
    Q[:, ay] = Yv
    Q[:, az] = 1.0 - Xv - Yv
    values = np.full((resolution, resolution), np.nan)
    # Chunked so the (cells x n_train) distance matrix stays small in memory.
    preds = np.empty(len(Xv))
    for s in range(0, len(Xv), 8192):
        preds[s:s + 8192] = predict_many(model, Q[s:s + 8192])
    values[valid] = preds
    return FaceLattice(face=face, resolution=resolution, values=values)


# ---------------------------------------------------------------------------
# Catchment / fitness islands

_NEIGHBOR_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
                     (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class Island:
    rank: int
    max_cell: tuple   # canonical (face, i, j)
    max_value: float
    cell_count: int


@dataclass
class IslandMap:
    labels: dict      # face -> (res, res) int array, -1 on invalid cells
    islands: list[Island]
    resolution: int


class _LatticeGraph:
    """Cells of 1-4 face lattices, with shared-edge cells identified.

    A cell is keyed by its integer composition (counts out of res-1); cells
    whose composition has two or more zero components appear on several faces
    and collapse to one node. The canonical representative of a node is its
    lexicographically smallest (face, i, j).
    """

    def __init__(self, lattices: list[FaceLattice]):
        res = lattices[0].resolution
        if any(l.resolution != res for l in lattices):
            raise LandscapeError("all lattices must share one resolution")
        self.resolution = res
        self.lattices = {l.face: l for l in lattices}
        self.key_of = {}      # (face, i, j) -> node key
        self.reps = {}        # node key -> sorted list of (face, i, j)
        self.value = {}
        for lat in lattices:
            valid = lat.valid
            for i, j in zip(*np.nonzero(valid)):
                i, j = int(i), int(j)
                key = self._comp_key(lat.face, i, j)
                self.key_of[(lat.face, i, j)] = key
                self.reps.setdefault(key, []).append((lat.face, i, j))
                self.value[key] = float(lat.values[i, j])
        for reps in self.reps.values():
            reps.sort()

    def _comp_key(self, face, i, j):
        ax, ay, az = face_axes(face)
        counts = [0] * 4
        counts[ax] = i
        counts[ay] = j
        counts[az] = (self.resolution - 1) - i - j
        return tuple(counts)

    def canonical(self, key):
        return self.reps[key][0]

    def neighbors(self, key):
        """Union of in-face 8-neighbourhoods over every face hosting the cell."""
        seen = set()
        res = self.resolution
        for face, i, j in self.reps[key]:
            for di, dj in _NEIGHBOR_OFFSETS:
                ni, nj = i + di, j + dj
                if 0 <= ni < res and 0 <= nj < res and ni + nj <= res - 1:
                    nk = self.key_of.get((face, ni, nj))
                    if nk is not None and nk != key and nk not in seen:
                        seen.add(nk)
                        yield nk

    def steepest_step(self, key):
        """Best cell among self and neighbours: highest value, ties toward
        the lexicographically smallest canonical (face, i, j)."""
        best_key = key
        best = (self.value[key], self.canonical(key))
        for nk in self.neighbors(key):
            cand = (self.value[nk], self.canonical(nk))
            if cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                best, best_key = cand, nk
        return best_key


def local_maxima(lat: FaceLattice) -> list[tuple[int, int]]:
    """Cells that are fixed points of the steepest-ascent step (one
    representative per connected plateau)."""
    graph = _LatticeGraph([lat])
    out = []
    for key, reps in graph.reps.items():
        if graph.steepest_step(key) == key:
            out.append(reps[0][1:])
    return sorted(out)


def catchment_map(lattices: list[FaceLattice]) -> IslandMap:
    """Label every valid cell with the island whose maximum its steepest
    ascent converges to, growing regions outward from each maximum."""
    graph = _LatticeGraph(lattices)
    parent = {key: graph.steepest_step(key) for key in graph.reps}
    children: dict = {}
    roots = []
    for key, par in parent.items():
        if par == key:
            roots.append(key)
        else:
            children.setdefault(par, []).append(key)

    # Region-grow each island from its maximum through the children lists.
    label_of = {}
    islands = []
    roots.sort(key=lambda k: (-graph.value[k], graph.canonical(k)))
    for rank, root in enumerate(roots):
        active = [root]
        count = 0
        while active:
            cell = active.pop()
            label_of[cell] = rank
            count += 1
            active.extend(children.get(cell, ()))
        islands.append(Island(rank=rank, max_cell=graph.canonical(root),
                              max_value=graph.value[root], cell_count=count))

    res = graph.resolution
    labels = {}
    for lat in lattices:
        grid = np.full((res, res), -1, dtype=int)
        for (face, i, j), key in graph.key_of.items():
            if face == lat.face:
                grid[i, j] = label_of[key]
        labels[lat.face] = grid
    return IslandMap(labels=labels, islands=islands, resolution=res)


# ---------------------------------------------------------------------------
# Export

def landscape_csv(lattices: list[FaceLattice], island_map: IslandMap | None = None) -> str:
    buf = io.StringIO()
    buf.write("face,i,j,X,Y,Z,fitness,island_label\n")
    for lat in lattices:
        res = lat.resolution
        step = 1.0 / (res - 1)
        valid = lat.valid
        lab = island_map.labels[lat.face] if island_map is not None else None
        for i, j in zip(*np.nonzero(valid)):
            i, j = int(i), int(j)
            x, y = i * step, j * step
            label = lab[i, j] if lab is not None else ""
            buf.write(f"{lat.face},{i},{j},{x:.10g},{y:.10g},{1.0 - x - y:.10g},"
                      f"{float(lat.values[i, j])!r},{label}\n")
    return buf.getvalue()


def island_summary_json(island_map: IslandMap) -> str:
    payload = [
        {"rank": isl.rank, "max_value": isl.max_value,
         "max_cell": {"face": isl.max_cell[0], "i": isl.max_cell[1], "j": isl.max_cell[2]},
         "cell_count": isl.cell_count}
        for isl in island_map.islands
    ]
    return json.dumps(payload, indent=2) + "\n"


def lattice_to_pgm(lat: FaceLattice) -> bytes:
    """Portable graymap of a face grid (invalid cells black)."""
    vals = np.where(lat.valid, lat.values, np.nan)
    finite = vals[np.isfinite(vals)]
    lo = finite.min() if finite.size else 0.0
    hi = finite.max() if finite.size else 1.0
    span = (hi - lo) or 1.0
    img = np.zeros_like(vals, dtype=np.uint8)
    mask = np.isfinite(vals)
    img[mask] = np.round(1 + 254 * (vals[mask] - lo) / span).astype(np.uint8)
    header = f"P5\n{lat.resolution} {lat.resolution}\n255\n".encode()
    return header + img.tobytes()

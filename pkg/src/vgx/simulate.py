"""Seeded Gaussian path sampling on finite grids.

Grid covariances are built from any matrix covariance evaluator, factored
by jittered Cholesky, and sampled with counter-based (Philox) streams.
Replicates are generated in fixed-size blocks whose keys depend only on
(seed, stream, block index), so output is bit-identical regardless of how
blocks are scheduled across workers.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "PathBatch",
    "build_grid_cov",
    "factor_psd",
    "sample_paths",
    "empirical_cmf_residual",
    "block_normals",
    "map_blocks",
    "save_path_batch",
    "load_path_batch",
    "BLOCK_SIZE",
    "MAX_GRID_DOF",
]

BLOCK_SIZE = 4096
MAX_GRID_DOF = 8192
_MAGIC = b"VGXB1"


@dataclass(frozen=True)
class GridSpec:
    times: np.ndarray
    dim: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("times must be a nonempty vector")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def dof(self) -> int:
        return self.n * self.dim


@dataclass(frozen=True)
class PathBatch:
    grid: GridSpec
    values: np.ndarray  # (N, n, d)
    seed: int
    stream: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] < 1:
            raise ValueError("values must be an (N, n, d) array with N >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("paths contain non-finite entries")
        object.__setattr__(self, "values", v)


def build_grid_cov(cmf, grid: GridSpec) -> np.ndarray:
    """Dense (n*d) x (n*d) covariance with block (i,j) = R(t_i, t_j)."""
    n, d = grid.n, grid.dim
    if grid.dof > MAX_GRID_DOF:
        raise ValueError(
            f"grid has {grid.dof} degrees of freedom, cap is {MAX_GRID_DOF}; "
            "use a coarser grid"
        )
    M = np.empty((n * d, n * d))
    for i, ti in enumerate(grid.times):
        for j, tj in enumerate(grid.times):
            blk = np.asarray(cmf(ti, tj), dtype=float).reshape(d, d)
            M[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
    asym = np.abs(M - M.T).max()
    if asym > 1e-8 * max(np.abs(M).max(), 1.0):
        raise ValueError(f"cmf violates R(t,s)=R(s,t)' (asymmetry {asym:.3e})")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class PSDFactor:
    lower: np.ndarray
    jitter: float


def factor_psd(M: np.ndarray, base_jitter: float = 1e-12,
               max_escalations: int = 6) -> PSDFactor:
    """Cholesky of M + jitter*I with an escalating jitter ladder.

    jitter starts at base_jitter * tr(M)/n and multiplies by 10 until the
    factorization succeeds; indefinite matrices exhaust the ladder.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    unit = max(np.trace(M) / n, np.abs(M).max() * 1e-8, np.finfo(float).tiny)
    try:
        return PSDFactor(np.linalg.cholesky(M), 0.0)
    except np.linalg.LinAlgError:
        pass
    for k in range(max_escalations + 1):
        jitter = base_jitter * unit * 10.0 ** k
        try:
            return PSDFactor(np.linalg.cholesky(M + jitter * np.eye(n)), jitter)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "matrix is not positive semidefinite within the jitter ladder"
    )


def _philox(seed: int, stream: int, block: int) -> np.random.Generator:
    key = (int(seed) & (2**64 - 1)) + ((int(stream) & (2**64 - 1)) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(block) << 128))


def block_normals(seed: int, stream: int, block: int, shape) -> np.ndarray:
    """Standard normals for one replicate block; a pure function of its key."""
    return _philox(seed, stream, block).standard_normal(shape)


def block_slices(N: int, block_size: int = BLOCK_SIZE):
    """Fixed partition of replicate indices into blocks, worker-independent."""
    out = []
    for b, start in enumerate(range(0, N, block_size)):
        out.append((b, start, min(start + block_size, N)))
    return out


def map_blocks(fn, N: int, workers: int = 1, block_size: int = BLOCK_SIZE):
    """Apply fn(block_index, count) to each block; results in block order.

    The schedule never influences the result: block keys are positional and
    the returned list is ordered by block index, so any worker count gives
    identical output.
    """
    slices = block_slices(N, block_size)
    if workers <= 1 or len(slices) <= 1:
        return [fn(b, stop - start) for b, start, stop in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, b, stop - start) for b, start, stop in slices]
        return [f.result() for f in futs]


def sample_paths(factor: PSDFactor, grid: GridSpec, N: int, seed: int,
                 stream: int = 0, workers: int = 1) -> PathBatch:
    """Draw N paths, path = factor @ normals, blockwise Philox streams."""
    if N < 1:
        raise ValueError("N must be >= 1")
    L = factor.lower

    def one(block, count):
        z = block_normals(seed, stream, block, (count, L.shape[0]))
        return z @ L.T

    flat = np.concatenate(map_blocks(one, N, workers=workers), axis=0)
    return PathBatch(grid=grid, values=flat.reshape(N, grid.n, grid.dim),
                     seed=seed, stream=stream)


def empirical_cmf_residual(batch: PathBatch, cmf) -> float:
    """Max block deviation of the sample covariance from the model cmf."""
    N, n, d = batch.values.shape
    flat = batch.values.reshape(N, n * d)
    emp = flat.T @ flat / N
    target = build_grid_cov(cmf, batch.grid)
    return float(np.abs(emp - target).max())


def fsum_merge(parts) -> float:
    """Order-insensitive exact sum of per-block partial results."""
    return math.fsum(parts)


def save_path_batch(batch: PathBatch, path) -> None:
    """Little-endian dump: magic 'VGXB1', N, n, d, seed, stream, times, values."""
    N, n, d = batch.values.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqqqq", N, n, d, batch.seed, batch.stream))
        fh.write(batch.grid.times.astype("<f8").tobytes())
        fh.write(batch.values.astype("<f8").tobytes())


def load_path_batch(path) -> PathBatch:
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise ValueError("not a VGXB1 path batch file")
        N, n, d, seed, stream = struct.unpack("<qqqqq", fh.read(40))
        times = np.frombuffer(fh.read(8 * n), dtype="<f8")
        values = np.frombuffer(fh.read(8 * N * n * d), dtype="<f8").reshape(N, n, d)
    return PathBatch(grid=GridSpec(times=times.copy(), dim=d),
                     values=values.copy(), seed=seed, stream=stream)

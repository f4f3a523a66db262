"""Lower-edge eigenpairs of symmetric sparse operators.

Thick-restart Lanczos with full reorthogonalization: the Krylov basis is rebuilt around
the wanted Ritz vectors whenever it fills up, and every new vector is orthogonalized
twice against the whole basis. A single Krylov sequence sees one vector per eigenspace,
so after convergence a second run on the orthogonal complement of the locked vectors
looks for missed copies of degenerate eigenvalues.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sparse

from squeezeqm.discretize import SparseOperator, symmetrize

_logger = logging.getLogger(__name__)


class SolverError(ValueError):
    """The eigenproblem is ill-posed"""


class ConvergenceError(RuntimeError):
    def __init__(self, spectrum: 'Spectrum', *args):
        super().__init__(*args or (f'{int(np.sum(spectrum.residuals > spectrum.tol))} eigenpair(s) '
                                   f'not converged after {spectrum.iterations} iterations', ))
        self.spectrum = spectrum


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    seed: int
    tol: float
    norm_estimate: float
    converged: bool = True

    def require_converged(self) -> 'Spectrum':
        if not self.converged:
            raise ConvergenceError(self)
        return self


@dataclass(frozen=True)
class ResidualRow:
    index: int
    eigenvalue: float
    residual: float
    stored_residual: float


@dataclass
class _Run:
    values: np.ndarray
    vectors: np.ndarray  # one Ritz vector per row
    residuals: np.ndarray
    matvecs: int
    norm_estimate: float
    converged: bool


def _orthogonalize(vector: np.ndarray, *bases: np.ndarray) -> np.ndarray:
    for _ in range(2):
        for basis in bases:
            if basis.shape[0]:
                vector = vector - basis.T @ (basis @ vector)
    return vector


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _thick_restart_lanczos(
    matrix: sparse.spmatrix,
    want: int,
    locked: np.ndarray,
    rng: np.random.Generator,
    tol: float,
    max_matvecs: int,
    basis_size: int,
) -> _Run:
    n = matrix.shape[0]
    free = n - locked.shape[0]
    m = max(min(basis_size, free), min(want + 1, free))
    basis = np.zeros((m, n))
    projected = np.zeros((m, m))

    def fresh(existing: np.ndarray) -> np.ndarray:
        vector = _orthogonalize(rng.uniform(-1.0, 1.0, n), locked, existing)
        return vector / np.linalg.norm(vector)

    basis[0] = fresh(basis[:0])
    start, matvecs, norm_estimate = 0, 0, 0.0
    while True:
        residual_vector, last_beta = np.zeros(n), 0.0
        for j in range(start, m):
            w = matrix @ basis[j]
            matvecs += 1
            active = basis[:j + 1]
            h = active @ w
            w = w - active.T @ h
            w = _orthogonalize(w, locked)
            correction = active @ w
            w = w - active.T @ correction
            h = h + correction
            projected[:j + 1, j] = h
            projected[j, :j + 1] = h
            beta = float(np.linalg.norm(w))
            if j + 1 < m:
                scale = max(1.0, float(np.max(np.abs(projected[:j + 1, :j + 1]))))
                if beta <= 1e-12 * scale:
                    # invariant subspace reached: continue with an uncoupled fresh direction
                    basis[j + 1] = fresh(basis[:j + 1])
                    projected[j + 1, j] = projected[j, j + 1] = 0.0
                else:
                    basis[j + 1] = w / beta
                    projected[j + 1, j] = projected[j, j + 1] = beta
            else:
                residual_vector, last_beta = w, beta

        theta, Y = np.linalg.eigh(projected)
        norm_estimate = max(norm_estimate, float(np.max(np.abs(theta))))
        estimates = np.abs(last_beta * Y[m - 1, :])
        threshold = tol * max(norm_estimate, np.finfo(float).tiny)
        done = bool(np.all(estimates[:want] <= threshold)) or m == free
        if done or matvecs >= max_matvecs:
            vectors = _fix_signs((basis.T @ Y[:, :want]).T)
            values = theta[:want]
            residuals = np.array([
                np.linalg.norm(matrix @ vector - value * vector) for value, vector in zip(values, vectors)
            ]) / max(norm_estimate, np.finfo(float).tiny)
            matvecs += want
            converged = bool(np.all(residuals <= tol))
            if converged or matvecs >= max_matvecs:
                return _Run(values, vectors, residuals, matvecs, norm_estimate, converged)

        keep = min(m - 1, want + max((m - want) // 2, 1))
        basis[:keep] = (basis.T @ Y[:, :keep]).T
        projected[:] = 0.0
        projected[np.arange(keep), np.arange(keep)] = theta[:keep]
        if last_beta > 0:
            coupling = last_beta * Y[m - 1, :keep]
            projected[keep, :keep] = coupling
            projected[:keep, keep] = coupling
            basis[keep] = residual_vector / last_beta
        else:
            basis[keep] = fresh(basis[:keep])
        start = keep
        _logger.debug('Lanczos restart after %d matvecs: Ritz values %s, estimates %s', matvecs,
                      theta[:want], estimates[:want])


def _symmetric_form(op: SparseOperator) -> Tuple[sparse.csr_matrix, Optional[np.ndarray]]:
    if np.all(op.weight == 1.0):
        return op.matrix, None
    symmetric = symmetrize(op)
    return symmetric.matrix, symmetric.similarity


def smallest_eigenpairs(
    op: SparseOperator,
    k: int,
    tol: float = 1e-10,
    seed: int = 42,
    max_iter: int = 20000,
    basis_size: int = 120,
    exclude_constant: bool = False,
    check_degeneracy: bool = True,
) -> Spectrum:
    """The ``k`` smallest eigenpairs of ``op``, which must be self-adjoint in its weight.

    Eigenvectors are normalized in ``<,>_w``; residuals are ``|A v - l v|_w / |A|_est`` with
    ``|A|_est`` the largest Ritz value magnitude seen. ``max_iter`` bounds the number of
    matrix-vector products of each Lanczos run."""
    if k < 1 or tol <= 0:
        raise SolverError(f'need k >= 1 and tol > 0, got k={k}, tol={tol}')
    matrix, root = _symmetric_form(op)
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)

    fixed = np.zeros((0, n))
    if exclude_constant:
        constant = np.ones(n) if root is None else root.copy()
        constant /= np.linalg.norm(constant)
        bound = float(abs(matrix).sum(axis=1).max())
        if np.linalg.norm(matrix @ constant) <= 1e-10 * max(bound, 1.0):
            fixed = constant[None, :]
        else:
            _logger.warning('The operator does not annihilate constants; the constant mode is kept.')
    if k > n - fixed.shape[0]:
        raise SolverError(f'k = {k} exceeds the available dimension {n - fixed.shape[0]}')

    run = _thick_restart_lanczos(matrix, k, fixed, rng, tol, max_iter, basis_size)
    values, vectors, residuals = run.values, run.vectors, run.residuals
    matvecs, norm_estimate, converged = run.matvecs, run.norm_estimate, run.converged
    _logger.info('Lanczos: %d eigenpair(s) after %d matvecs (converged: %s)', k, matvecs, converged)

    for _ in range(k if check_degeneracy and converged else 0):
        locked = np.vstack((fixed, vectors))
        if locked.shape[0] >= n:
            break
        missed = _thick_restart_lanczos(matrix, 1, locked, rng, tol, max_iter, basis_size)
        matvecs += missed.matvecs
        norm_estimate = max(norm_estimate, missed.norm_estimate)
        margin = 10.0 * tol * norm_estimate
        if not missed.converged or missed.values[0] >= values[-1] - margin:
            break
        _logger.info('Deflation found a missed eigenvalue %.12g below %.12g', missed.values[0],
                     values[-1])
        order = np.argsort(np.concatenate((values, missed.values)), kind='stable')[:k]
        values = np.concatenate((values, missed.values))[order]
        vectors = np.vstack((vectors, missed.vectors))[order]
        residuals = np.concatenate((residuals, missed.residuals))[order]

    if root is not None:
        vectors = vectors / root[None, :]
    return Spectrum(
        eigenvalues=np.asarray(values, dtype=float),
        eigenvectors=vectors.T,
        residuals=np.asarray(residuals, dtype=float),
        iterations=matvecs,
        seed=seed,
        tol=tol,
        norm_estimate=norm_estimate,
        converged=converged,
    )


def residual_report(op: SparseOperator, spectrum: Spectrum) -> List[ResidualRow]:
    """Recompute every residual from ``op`` directly, measured in ``<,>_w``."""
    root = np.sqrt(op.weight)
    rows = []
    for index, value in enumerate(spectrum.eigenvalues):
        vector = spectrum.eigenvectors[:, index]
        residual = np.linalg.norm(root * (op.matrix @ vector - value * vector))
        rows.append(
            ResidualRow(index, float(value), float(residual / spectrum.norm_estimate),
                        float(spectrum.residuals[index]))
        )
    return rows

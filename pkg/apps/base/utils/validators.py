import numpy as np

from apps.base.exceptions import ContractViolation


def validate_probability(value, name='delta'):
    if not 0.0 < value < 1.0:
        raise ContractViolation(f'{name} must lie in (0, 1), got {value}.')
    return value


def validate_positive(value, name):
    if not value > 0:
        raise ContractViolation(f'{name} must be positive, got {value}.')
    return value


def validate_count(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise ContractViolation(f'{name} must be an integer >= {minimum}, got {value}.')
    return int(value)


def validate_last_dim(array, size, name):
    """Check that the trailing axis of ``array`` has ``size`` entries."""
    array = np.asarray(array, dtype=float)
    if array.ndim == 0 or array.shape[-1] != size:
        raise ContractViolation(
            f'{name} must have trailing dimension {size}, got shape {array.shape}.'
        )
    return array


def validate_spd(matrix, name, symmetry_tol=1e-12):
    """Return ``matrix`` as a float array if it is symmetric positive definite."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1]:
        raise ContractViolation(f'{name} must be square, got shape {matrix.shape}.')
    if not np.all(np.isfinite(matrix)):
        raise ContractViolation(f'{name} must be finite.')
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > symmetry_tol * scale:
        raise ContractViolation(f'{name} must be symmetric.')
    if np.min(np.linalg.eigvalsh(matrix)) <= 0.0:
        raise ContractViolation(f'{name} must be positive definite.')
    return matrix

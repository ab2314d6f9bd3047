"""Input checks shared by the estimator and the CLI."""
import numpy as np
from sklearn.utils.validation import check_array


def check_loads(X, name="X", ensure_2d=True):
    """Finite, non-negative float array of energies (kWh)."""
    X = check_array(X, dtype=np.float64, ensure_2d=ensure_2d, input_name=name)
    if np.any(X < 0):
        raise ValueError(f"{name} must be non-negative")
    return X


def check_vector(v, length, name, default=0.0, allow_negative=False):
    """Broadcast ``v`` (scalar, None or array) to a float vector of ``length``."""
    if v is None:
        return np.full(length, float(default))
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(length, float(arr))
    arr = arr.reshape(-1)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if not allow_negative and np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value

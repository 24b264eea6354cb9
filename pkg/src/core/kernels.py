from typing import Optional

import numpy as np
from sklearn.metrics.pairwise import (
    linear_kernel,
    polynomial_kernel,
    rbf_kernel,
    sigmoid_kernel,
)

from ..models.schemas import KernelSpec
from .errors import InputValidationError

LINEAR = KernelSpec(family="linear")
RBF = KernelSpec(family="rbf")

_FAMILY_ALIASES = {"poly": "polynomial", "gaussian": "rbf"}


def parse_kernel_spec(text: str) -> KernelSpec:
    """Parse ``family[:gamma=..][:degree=..][:coef=..]``, e.g. ``rbf:gamma=0.5``"""
    family, *options = [part.strip() for part in text.strip().split(":")]
    family = _FAMILY_ALIASES.get(family.lower(), family.lower())
    params = {"family": family}
    for option in options:
        key, sep, value = option.partition("=")
        key = key.strip().lower()
        if not sep or key not in ("gamma", "degree", "coef"):
            raise InputValidationError(f"Invalid kernel option '{option}' in '{text}'")
        try:
            params[key] = int(value) if key == "degree" else float(value)
        except ValueError:
            raise InputValidationError(f"Invalid value for {key} in '{text}'") from None
    try:
        return KernelSpec(**params)
    except ValueError as e:
        raise InputValidationError(f"Invalid kernel spec '{text}': {e}") from e


def format_kernel_spec(spec: KernelSpec) -> str:
    parts = [spec.family]
    if spec.family != "linear" and spec.gamma is not None:
        parts.append(f"gamma={spec.gamma!r}")
    if spec.family == "polynomial":
        parts.append(f"degree={spec.degree}")
    if spec.family in ("polynomial", "sigmoid"):
        parts.append(f"coef={spec.coef!r}")
    return ":".join(parts)


def default_gamma(X: np.ndarray) -> float:
    """1 / (q * pooled variance); 1.0 for constant data"""
    X = np.asarray(X, dtype=float)
    variance = X.var()
    if not variance > 0:
        return 1.0
    return 1.0 / (X.shape[1] * variance)


def resolve_gamma(spec: KernelSpec, X: np.ndarray) -> KernelSpec:
    if spec.family == "linear" or spec.gamma is not None:
        return spec
    return spec.model_copy(update={"gamma": default_gamma(X)})


def kernel_eval(spec: KernelSpec, x: np.ndarray, z: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape or x.size < 1:
        raise InputValidationError(f"Kernel arguments must have equal nonzero length, got {x.size} and {z.size}")
    if spec.family == "linear":
        return float(np.dot(x, z))
    gamma = _require_gamma(spec)
    if spec.family == "rbf":
        diff = x - z
        return float(np.exp(-gamma * np.dot(diff, diff)))
    if spec.family == "polynomial":
        return float((gamma * np.dot(x, z) + spec.coef) ** spec.degree)
    return float(np.tanh(gamma * np.dot(x, z) + spec.coef))


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Entry (i, j) = K(A_i, B_j). B defaults to A, in which case the result is
    exactly symmetric. An unset gamma is derived from A.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    same = B is None or B is A
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise InputValidationError(f"Column mismatch: {A.shape[1]} vs {B.shape[1]}")

    spec = resolve_gamma(spec, A)
    Y = None if same else B
    if spec.family == "linear":
        K = linear_kernel(A, Y)
    elif spec.family == "rbf":
        K = rbf_kernel(A, Y, gamma=spec.gamma)
    elif spec.family == "polynomial":
        K = polynomial_kernel(A, Y, degree=spec.degree, gamma=spec.gamma, coef0=spec.coef)
    else:
        K = sigmoid_kernel(A, Y, gamma=spec.gamma, coef0=spec.coef)

    if same:
        K = (K + K.T) / 2.0
        if spec.family == "rbf":
            np.fill_diagonal(K, 1.0)
    return K


def _require_gamma(spec: KernelSpec) -> float:
    if spec.gamma is None:
        raise InputValidationError(f"{spec.family} kernel needs a resolved gamma")
    return spec.gamma

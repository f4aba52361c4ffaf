"""Values that depend affinely on the unknown corner probabilities.

Arrays carry the dependence in their last axis: entry 0 is the constant part,
entry 1 + k the coefficient of unknown k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AffineFunctional:
    base: complex
    coefficients: np.ndarray

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        return cls(complex(arr[0]), np.array(arr[1:]))

    def to_array(self):
        return np.concatenate([[self.base], self.coefficients])

    def __call__(self, u):
        return self.base + self.coefficients @ np.asarray(u)

    def __add__(self, other):
        return AffineFunctional(self.base + other.base, self.coefficients + other.coefficients)

    def scale(self, c):
        return AffineFunctional(self.base * c, self.coefficients * c)


def evaluate(arr, u):
    """Substitute unknowns ``u`` into an affine array."""
    arr = np.asarray(arr)
    return arr[..., 0] + arr[..., 1:] @ np.asarray(u)


def zeros(shape, nu, dtype=complex):
    return np.zeros(tuple(np.atleast_1d(shape)) + (1 + nu,), dtype=dtype) if shape != () else \
        np.zeros(1 + nu, dtype=dtype)


def unit(nu, k, dtype=float):
    out = np.zeros(1 + nu, dtype=dtype)
    out[1 + k] = 1.0
    return out

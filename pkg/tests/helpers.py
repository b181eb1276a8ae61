"""Shared generators for randomized observability checks."""

import numpy as np

from taskreg.internal_model import matrix_rank, pbh_observable


def random_pair(rng):
    """Random (A, C) pair; roughly a third are unobservable by construction.

    Unobservable pairs are built from a block-lower-triangular A whose
    trailing block never reaches the output, then hidden by a random
    similarity transform.
    """
    ell = int(rng.integers(2, 9))
    r = int(rng.integers(1, 4))
    if rng.random() < 1 / 3:
        k = int(rng.integers(1, ell))
        A = np.zeros((ell, ell))
        A[:k, :k] = rng.normal(size=(k, k))
        A[k:, :k] = rng.normal(size=(ell - k, k))
        A[k:, k:] = rng.normal(size=(ell - k, ell - k))
        C = np.hstack([rng.normal(size=(r, k)), np.zeros((r, ell - k))])
        T = rng.normal(size=(ell, ell)) + 0.5 * np.eye(ell)
        return np.linalg.inv(T) @ A @ T, C @ T
    return rng.normal(size=(ell, ell)), rng.normal(size=(r, ell))


def lemma_instance(rng):
    """Observable pairs with disjoint spectra plus an injective mixing map."""
    while True:
        n1 = int(rng.integers(2, 6))
        n2 = int(rng.integers(2, 6))
        q1 = int(rng.integers(1, 4))
        q2 = int(rng.integers(1, q1 + 1))
        A1 = rng.normal(size=(n1, n1))
        A2 = rng.normal(size=(n2, n2))
        e1 = np.linalg.eigvals(A1)
        e2 = np.linalg.eigvals(A2)
        if min(abs(a - b) for a in e1 for b in e2) < 1e-2:
            continue
        C1 = rng.normal(size=(q1, n1))
        C2 = rng.normal(size=(q2, n2))
        T = rng.normal(size=(q1, q2))
        if matrix_rank(T) < q2:
            continue
        if pbh_observable(A1, C1) and pbh_observable(A2, C2):
            return A1, C1, A2, C2, T

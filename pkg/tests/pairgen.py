"""Random Feshbach pairs with H_f-diagonal T."""

import numpy as np

from specrg.feshbach import make_cutoffs


def random_pair(rng, dim, rho=None, strength=0.3, hermitian=True, shift=None):
    """(H, T, cut) with ||T^-1 W|| <= strength on Ran chibar, so the pair passes."""
    hf = np.sort(np.concatenate([[0.0], rng.uniform(0, 1.2, dim - 1)]))
    rho = rng.uniform(0.25, 1.0) if rho is None else rho
    cut = make_cutoffs(hf, rho)
    c = rng.uniform(0.05, 0.5) if shift is None else shift
    if not hermitian:
        c = c + 1j * rng.uniform(-0.2, 0.2)
    T = np.diag(hf + c).astype(complex)
    W = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    if hermitian:
        W = W + W.conj().T
    tmin = np.min(np.abs(np.diag(T)))
    W *= strength * tmin / np.linalg.norm(W, 2)
    return T + W, T, cut

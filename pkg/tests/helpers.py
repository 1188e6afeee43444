"""Small synthetic inputs for property tests of the tensor algebra."""

from types import SimpleNamespace

import numpy as np


class DenseKernel:
    """Stand-in for the resolvent: a dense positive symmetric G on a handful of nodes."""

    def __init__(self, G, weights):
        self._full = G
        self.weights = weights

    def apply(self, f):
        f = np.asarray(f)
        return self._full @ (f.T * self.weights).T

    def matrix(self):
        return self._full


def synthetic(seed, n_nodes=40, dim=3):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(n_nodes, 2))
    G = np.exp(-np.sum((pts[:, None] - pts[None]) ** 2, axis=-1)) + 0.05
    w = r.uniform(0.5, 1.5, size=n_nodes)
    grid = SimpleNamespace(weights=w, nodes=pts[:, 0] + 1j * pts[:, 1])
    mus = r.normal(size=(dim, n_nodes)) + 1j * r.normal(size=(dim, n_nodes))
    basis = SimpleNamespace(mus=mus, grid=grid, dim=dim)
    return basis, DenseKernel(G, w)

import numpy as np

from hjbpar.model import CondValueParams


def random_cond_element(rng, n=3, s=0.0, tau=1.0, scale=1.0):
    """Random well-posed conditional value element over [s, tau]."""
    A = np.eye(n) + 0.3 * scale * rng.normal(size=(n, n))
    b = scale * rng.normal(size=n)
    G = rng.normal(size=(n, n))
    C = 0.5 * scale * (G @ G.T) + 1e-3 * np.eye(n)
    eta = scale * rng.normal(size=n)
    K = rng.normal(size=(n, n))
    J = 0.5 * scale * (K @ K.T)
    return CondValueParams(A=A, b=b, C=C, eta=eta, J=J, s=s, tau=tau)

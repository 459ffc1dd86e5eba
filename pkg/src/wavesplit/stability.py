"""Sharp stability constants and step-size certification.

alpha is the best constant in ||v||_a <= alpha ||v|| on a given space
(largest eigenvalue of stiffness against mass); gamma measures the L2
non-orthogonality between the two components of a pair, gamma_a the same
in energy.  Certification modes:

  "explicit_full"        leapfrog on one space, tau <= 2/alpha
  "split_orthogonal"     split pair with L2-orthogonal components,
                         tau <= sqrt(2)/alpha_2
  "split_nonorthogonal"  general pair, tau <= sqrt(2(1-gamma^2))/alpha_2;
                         the looser sqrt(2(1-gamma)) variant is reported
                         alongside for reference.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as dla

from .errors import ConfigurationError
from .linsolve import largest_eigenvalue

CERTIFY_MODES = ("explicit_full", "split_orthogonal", "split_nonorthogonal")


def compute_alpha(A, M, seed=0):
    """sup ||v||_a / ||v|| over the space carrying (A, M)."""
    if A.shape[0] == 0:
        return 0.0
    return math.sqrt(max(largest_eigenvalue(A, M, seed=seed), 0.0))


def _coupling_constant(X11, X12, X22):
    if X12.size == 0:
        return 0.0
    L1 = np.linalg.cholesky(X11)
    L2 = np.linalg.cholesky(X22)
    G = dla.solve_triangular(L1, np.asarray(X12), lower=True)
    G = dla.solve_triangular(L2, G.T, lower=True).T
    s = np.linalg.svd(G, compute_uv=False)
    return float(s[0]) if s.size else 0.0


def compute_gammas(blocks):
    """(gamma, gamma_a): largest principal-angle cosines between the two
    components in the L2 and energy products."""
    gamma = _coupling_constant(blocks.M11, blocks.M12, blocks.M22)
    gamma_a = _coupling_constant(blocks.A11, blocks.A12, blocks.A22)
    return gamma, gamma_a


@dataclass
class StabilityReport:
    mode: str
    tau: float
    alpha: float
    gamma: float = None
    gamma_a: float = None
    tau_max: float = None
    tau_max_loose: float = None   # sqrt(2(1-gamma)) variant, informational
    passed: bool = None

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def certify(tau, mode, alpha, gamma=None, gamma_a=None):
    """Check tau against the sharp bound of the requested mode."""
    if mode not in CERTIFY_MODES:
        raise ConfigurationError(f"unknown certify mode {mode!r}; "
                                 f"pick one of {CERTIFY_MODES}")
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    report = StabilityReport(mode=mode, tau=tau, alpha=alpha,
                             gamma=gamma, gamma_a=gamma_a)
    if mode == "explicit_full":
        report.tau_max = math.inf if alpha == 0 else 2.0 / alpha
    elif mode == "split_orthogonal":
        report.tau_max = math.inf if alpha == 0 else math.sqrt(2.0) / alpha
    else:
        if gamma is None:
            raise ConfigurationError("split_nonorthogonal mode needs gamma")
        g = min(max(gamma, 0.0), 1.0)
        if alpha == 0:
            report.tau_max = math.inf
            report.tau_max_loose = math.inf
        else:
            report.tau_max = math.sqrt(2.0 * (1.0 - g ** 2)) / alpha
            report.tau_max_loose = math.sqrt(2.0 * (1.0 - g)) / alpha
    report.passed = bool(tau <= report.tau_max)
    return report


def certify_pair(blocks, tau, mode="split_nonorthogonal", seed=0):
    """Certification from projected blocks; alpha lives on component two."""
    alpha = compute_alpha(blocks.A22, blocks.M22, seed=seed)
    gamma, gamma_a = compute_gammas(blocks)
    report = certify(tau, mode, alpha, gamma=gamma, gamma_a=gamma_a)
    return report

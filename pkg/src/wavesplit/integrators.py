"""Second-order time stepping for the semidiscrete wave equation.

Single-space schemes (implicit / leapfrog / sigma-weighted averages) run
on any mass/stiffness pair.  The split schemes advance the two-component
coarse decomposition with the stiff second component always explicit:
only its mass couples into the solve, so the contrast never enters a
factorized matrix.  Each stepper factors its system once per time step
size and reuses the factorization.

Energy functionals are the discrete invariants of the matching schemes;
with zero forcing they are conserved to roundoff, which the tests lean on
heavily.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

from .errors import ConfigurationError, InstabilityError

SCHEME_NAMES = ("implicit", "explicit", "weighted",
                "split_omega1", "split_omega0", "split_lumped")


def _factor(mat):
    # check_finite off: overflowing rhs must come back as inf/nan states so
    # the march can convert them into InstabilityError
    if sparse.issparse(mat):
        return sla.splu(mat.tocsc()).solve
    lu = dla.lu_factor(np.asarray(mat))
    return lambda b: dla.lu_solve(lu, b, check_finite=False)


@dataclass
class SplitBlocks:
    """Projected operators of a two-component pair, dense."""
    M11: np.ndarray
    M12: np.ndarray
    M22: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A22: np.ndarray

    @classmethod
    def from_pair(cls, pair, M, A, surrogate=False):
        def proj(op, Bl, Br):
            return np.asarray((Bl.T @ (op @ Br)).todense())
        B1, B2 = pair.basis1, pair.basis2
        A11, A12, A22 = proj(A, B1, B1), proj(A, B1, B2), proj(A, B2, B2)
        if surrogate:
            if pair.surrogate_mass is None:
                raise ConfigurationError("pair carries no surrogate mass")
            n1 = pair.n1
            S = pair.surrogate_mass
            M11, M12, M22 = S[:n1, :n1], S[:n1, n1:], S[n1:, n1:]
        else:
            M11, M12, M22 = proj(M, B1, B1), proj(M, B1, B2), proj(M, B2, B2)
        return cls(M11, M12, M22, A11, A12, A22)

    @property
    def n1(self):
        return self.M11.shape[0]

    @property
    def n2(self):
        return self.M22.shape[0]

    def split(self, u):
        return u[:self.n1], u[self.n1:]

    def full_mass(self):
        return np.block([[self.M11, self.M12], [self.M12.T, self.M22]])

    def full_stiffness(self):
        return np.block([[self.A11, self.A12], [self.A12.T, self.A22]])


class WeightedStepper:
    """u'' + A u = f with the sigma-weighted average of three time levels
    on the stiffness; sigma=1/4 is the unconditional implicit scheme,
    sigma=0 the leapfrog."""

    def __init__(self, M, A, tau, sigma):
        self.M, self.A, self.tau, self.sigma = M, A, tau, sigma
        self.solve = _factor(M + tau ** 2 * sigma * A if sigma else M)

    def step(self, u_prev, u_curr, f=None):
        tau, sig = self.tau, self.sigma
        rhs = self.M @ (2.0 * u_curr - u_prev) \
            - tau ** 2 * (self.A @ ((1.0 - 2.0 * sig) * u_curr + sig * u_prev))
        if f is not None:
            rhs = rhs + tau ** 2 * f
        return self.solve(rhs)

    def energy(self, u_prev, u_curr):
        return weighted_energy(self.M, self.A, u_prev, u_curr, self.tau, self.sigma)


class SplitStepper:
    """Two-component step: slow component implicit in its own stiffness,
    fast component explicit; omega shifts the coupling row between the
    fully explicit (1) and time-averaged (0) treatments of the slow part.
    """

    def __init__(self, blocks, tau, omega=1.0):
        if not 0.0 <= omega <= 1.0:
            raise ConfigurationError(f"omega must lie in [0, 1], got {omega}")
        self.b, self.tau, self.omega = blocks, tau, omega
        b = blocks
        self.decoupled = (omega == 1.0 and not np.any(b.M12)
                          and not np.any(b.M22 - np.diag(np.diag(b.M22))))
        if self.decoupled:
            # diagonal fast-mass: no coupled solve, row two is a division
            self.solve1 = _factor(b.M11 + tau ** 2 / 2.0 * b.A11)
            self.diag2 = np.diag(b.M22).copy()
        else:
            lhs = np.block([
                [b.M11 + tau ** 2 / 2.0 * b.A11, b.M12],
                [b.M12.T + tau ** 2 * (1.0 - omega) / 2.0 * b.A12.T, b.M22]])
            self.solve = _factor(lhs)

    def step(self, u_prev, u_curr, f=None):
        b, tau, omega = self.b, self.tau, self.omega
        u1p, u2p = b.split(u_prev)
        u1c, u2c = b.split(u_curr)
        r1 = b.M11 @ (2.0 * u1c - u1p) + b.M12 @ (2.0 * u2c - u2p) \
            - tau ** 2 / 2.0 * (b.A11 @ u1p) - tau ** 2 * (b.A12 @ u2c)
        r2 = b.M12.T @ (2.0 * u1c - u1p) + b.M22 @ (2.0 * u2c - u2p) \
            - tau ** 2 * (omega * (b.A12.T @ u1c) + b.A22 @ u2c) \
            - tau ** 2 * (1.0 - omega) / 2.0 * (b.A12.T @ u1p)
        if f is not None:
            f1, f2 = b.split(f)
            r1 = r1 + tau ** 2 * f1
            r2 = r2 + tau ** 2 * f2
        if self.decoupled:
            return np.concatenate([self.solve1(r1), r2 / self.diag2])
        return self.solve(np.concatenate([r1, r2]))

    def energy(self, u_prev, u_curr):
        return splitting_energy(self.b, u_prev, u_curr, self.tau)


def step_implicit(M, A, u_prev, u_curr, tau, f=None):
    return WeightedStepper(M, A, tau, 0.25).step(u_prev, u_curr, f)


def step_explicit(M, A, u_prev, u_curr, tau, f=None):
    return WeightedStepper(M, A, tau, 0.0).step(u_prev, u_curr, f)


def step_weighted(M, A, u_prev, u_curr, tau, sigma, f=None):
    return WeightedStepper(M, A, tau, sigma).step(u_prev, u_curr, f)


def step_split(blocks, u_prev, u_curr, tau, omega=1.0, f=None):
    return SplitStepper(blocks, tau, omega).step(u_prev, u_curr, f)


def weighted_energy(M, A, u_prev, u_curr, tau, sigma=0.25):
    """Discrete invariant of the sigma-weighted scheme: velocity term in
    the (M + (sigma-1/4) tau^2 A) product plus midpoint energy."""
    r = (u_curr - u_prev) / tau
    s = (u_curr + u_prev) / 2.0
    return float(r @ (M @ r) + (sigma - 0.25) * tau ** 2 * (r @ (A @ r))
                 + s @ (A @ s))


def implicit_energy(M, A, u_prev, u_curr, tau):
    return weighted_energy(M, A, u_prev, u_curr, tau, 0.25)


def explicit_energy(M, A, u_prev, u_curr, tau):
    return weighted_energy(M, A, u_prev, u_curr, tau, 0.0)


def splitting_energy(blocks, u_prev, u_curr, tau):
    """Invariant of the split scheme with the explicit coupling row.

    Difference term in the full mass, per-component midlevel energies,
    the cross stiffness terms at mixed time levels, minus the explicit
    correction on the fast component.  Conserved without any orthogonality
    between the components.
    """
    b = blocks
    u1p, u2p = b.split(u_prev)
    u1c, u2c = b.split(u_curr)
    d1, d2 = u1c - u1p, u2c - u2p
    l2 = d1 @ (b.M11 @ d1) + 2.0 * d1 @ (b.M12 @ d2) + d2 @ (b.M22 @ d2)
    stiff = 0.5 * (u1c @ (b.A11 @ u1c) + u1p @ (b.A11 @ u1p)
                   + u2c @ (b.A22 @ u2c) + u2p @ (b.A22 @ u2p))
    cross = u1p @ (b.A12 @ u2c) + u1c @ (b.A12 @ u2p)
    corr = 0.5 * d2 @ (b.A22 @ d2)
    return float(l2 + tau ** 2 * (stiff + cross - corr))


class AppendixEnergy:
    """Invariant of the omega=0 split scheme, valid for L2-orthogonal
    components.  Built from the auxiliary operators b (mass projection in
    the tau-augmented product), c (stiffness lift), d (energy projection),
    and the derived seminorms."""

    def __init__(self, blocks, tau):
        b = blocks
        off = np.linalg.norm(b.M12)
        scale = np.sqrt(np.linalg.norm(b.M11) * np.linalg.norm(b.M22))
        if off > 1e-10 * max(scale, 1e-300):
            raise ConfigurationError(
                "appendix energy needs L2-orthogonal components "
                f"(offdiagonal mass norm {off:.3e})")
        self.b, self.tau = b, tau
        self.P = b.M11 + tau ** 2 / 2.0 * b.A11
        self.solveP = _factor(self.P)
        self.solveA11 = _factor(b.A11)

    def op_b(self, v1):
        return self.solveP(self.b.M11 @ v1)

    def op_c(self, v2):
        return self.solveP(self.tau ** 2 / 2.0 * (self.b.A12 @ v2))

    def op_d(self, v2):
        return self.solveA11(self.b.A12 @ v2)

    def m_norm_sq(self, x):
        return float(x @ (self.P @ x))

    def s_norm_sq(self, v1):
        bv = self.op_b(v1)
        return float(v1 @ (self.b.M11 @ v1) - bv @ (self.P @ bv))

    def n_norm_sq(self, v2):
        return float(self.tau ** 2 / 2.0 * v2 @ (self.b.A22 @ v2)
                     - self.m_norm_sq(self.op_c(v2)) - self.s_norm_sq(self.op_d(v2)))

    def __call__(self, u_prev, u_curr):
        b, tau = self.b, self.tau
        u1p, u2p = b.split(u_prev)
        u1c, u2c = b.split(u_curr)
        d2 = u2c - u2p
        x = self.op_b(u1c) - self.op_c(u2c) - self.op_b(u1p) + self.op_c(u2p)
        total = self.m_norm_sq(x)
        total += d2 @ (b.M22 @ d2) - tau ** 2 / 2.0 * d2 @ (b.A22 @ d2)
        total += self.s_norm_sq(u1c + self.op_d(u2c)) + self.n_norm_sq(u2c)
        total += self.s_norm_sq(u1p + self.op_d(u2p)) + self.n_norm_sq(u2p)
        return float(total)


@dataclass
class SchemeConfig:
    name: str
    tau: float
    T: float
    sigma: float = 0.25
    omega: float = None

    def __post_init__(self):
        if self.name not in SCHEME_NAMES:
            raise ConfigurationError(
                f"unknown scheme {self.name!r}; pick one of {SCHEME_NAMES}")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.T < self.tau:
            raise ConfigurationError(f"final time {self.T} shorter than one step")

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))

    @property
    def is_split(self):
        return self.name.startswith("split")


@dataclass
class EnergyTrace:
    scheme: str
    steps: np.ndarray       # step index n of each value E^{n+1/2}
    values: np.ndarray
    initial: float          # E^{1/2}

    @property
    def drift(self):
        ref = abs(self.initial)
        if ref == 0.0:
            return float(np.max(np.abs(self.values), initial=0.0))
        return float(np.max(np.abs(self.values - self.initial), initial=0.0) / ref)


@dataclass
class SimResult:
    config: SchemeConfig
    states: dict            # step index -> coefficient vector
    energy: EnergyTrace
    final_pair: tuple       # (u^{N-1}, u^N)

    def times(self):
        return np.array(sorted(self.states)) * self.config.tau

    def state_at(self, step):
        return self.states[step]


def _make_stepper(config, operators):
    if config.is_split:
        if not isinstance(operators, SplitBlocks):
            raise ConfigurationError(f"{config.name} needs projected split blocks")
        omega = {"split_omega1": 1.0, "split_omega0": 0.0,
                 "split_lumped": 1.0}[config.name] \
            if config.omega is None else config.omega
        return SplitStepper(operators, config.tau, omega)
    M, A = operators
    sigma = {"implicit": 0.25, "explicit": 0.0,
             "weighted": config.sigma}[config.name]
    return WeightedStepper(M, A, config.tau, sigma)


def _energy_fn(config, stepper, operators):
    if config.name == "split_omega0":
        try:
            app = AppendixEnergy(operators, config.tau)
            return lambda up, uc: app(up, uc)
        except ConfigurationError:
            pass  # non-orthogonal pair: fall back to the splitting form
    return stepper.energy


def run(config, operators, source=None, initial=None, record_steps=None,
        collect_energy=True):
    """March a scheme to its final time.

    `operators` is (M, A) for single-space schemes or SplitBlocks for the
    split family.  `source` maps time to a load vector in the same
    coordinates.  `initial` is (u0, du0/dt); the second level comes from a
    Taylor step through the mass inverse.  Records the states whose step
    indices appear in `record_steps` (None: all), energies at every step.
    Raises InstabilityError (with the partial result attached) as soon as
    a state stops being finite.
    """
    if config.is_split:
        if not isinstance(operators, SplitBlocks):
            raise ConfigurationError(f"{config.name} needs projected split blocks")
        M_full, A_full = operators.full_mass(), operators.full_stiffness()
    else:
        M_full, A_full = operators
    n = M_full.shape[0]
    tau = config.tau
    u0, v0 = initial if initial is not None else (np.zeros(n), np.zeros(n))
    f0 = source(0.0) if source is not None else np.zeros(n)
    acc = _factor(M_full)(f0 - A_full @ u0)
    u1 = u0 + tau * v0 + tau ** 2 / 2.0 * acc

    stepper = _make_stepper(config, operators)
    energy = _energy_fn(config, stepper, operators) if collect_energy else None
    e_init = energy(u0, u1) if energy else None

    states = {}

    def record(step, u):
        if record_steps is None or step in record_steps:
            states[step] = u.copy()

    record(0, u0)
    record(1, u1)
    steps, values = [], []
    u_prev, u_curr = u0, u1
    # overflow on a diverging orbit is expected and reported via the
    # isfinite check, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for nstep in range(1, config.n_steps):
            f = source(nstep * tau) if source is not None else None
            u_next = stepper.step(u_prev, u_curr, f)
            if not np.all(np.isfinite(u_next)):
                trace = EnergyTrace(config.name, np.array(steps),
                                    np.array(values), e_init) if energy else None
                exc = InstabilityError(
                    f"non-finite state in scheme {config.name} at step {nstep + 1}",
                    step=nstep + 1)
                exc.result = SimResult(config, states, trace, (u_prev, u_curr))
                raise exc
            u_prev, u_curr = u_curr, u_next
            record(nstep + 1, u_curr)
            if energy:
                steps.append(nstep)
                values.append(energy(u_prev, u_curr))
    trace = EnergyTrace(config.name, np.array(steps), np.array(values),
                        e_init) if energy else None
    return SimResult(config, states, trace, (u_prev, u_curr))

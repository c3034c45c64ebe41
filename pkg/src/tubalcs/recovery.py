"""Alternating recovery of a low-tubal-rank tensor from local measurements.

The unknown is factored as ``X = U * V`` with ``U`` (``n1 x r x n3``)
orthogonal.  After a truncated spectral initialization of ``U`` the solver
alternates an exact least-squares solve for every lateral slice of ``V`` with
a projected gradient step on ``U`` (``variant="pgd"``), optionally
preconditioned by ``(V * V^c)^{-1}`` (``variant="scaled_pgd"``).

Probe batches use the layout of :mod:`tubalcs.sensing`: ``probes`` has shape
``(n2, m, n1, n3)`` and measurements ``y`` have shape ``(m, n2)``.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    as_tensor3,
    bcirc_oracle,
    conj_transpose,
    dft_tubes,
    idft_tubes,
    spectral_norm,
    subspace_distance,
    t_product,
    t_qr,
    t_svd,
    unfold,
)
from .errors import (
    DegenerateInit,
    DimensionMismatch,
    NonFinite,
    SingularPreconditioner,
    SingularSystem,
    UnderdeterminedSystem,
)
from .sensing import build_schedule, probes_for

__all__ = [
    "SolverConfig",
    "FactorState",
    "RecoveryTrace",
    "truncation_threshold",
    "init_estimate",
    "spectral_init",
    "random_init",
    "spectral_probes",
    "design_rows",
    "dense_design",
    "update_v",
    "solve_v",
    "gradient_u",
    "loss",
    "preconditioner_inverse",
    "step_u",
    "run",
]

VARIANTS = ("pgd", "scaled_pgd")
INITS = ("spectral", "random", "provided")


@dataclass
class SolverConfig:
    """Settings for :func:`run`.

    ``T`` counts gradient iterations after initialization, so a run records
    at most ``T + 1`` iterates.  In split mode the probes are cut into the
    ``2(T+1) + 1`` groups that the alternating scheme consumes.  Otherwise
    every stage shares the first ``max(m0, mc)`` probes, or with ``nested``
    initialization uses the first ``m0`` and the iterations the first ``mc``.
    The step sizes use ``mc`` in all three modes.

    ``kappa`` and ``mu`` only enter the truncation threshold.  ``mu=None``
    falls back to 1.  ``x_norm`` is the spectral norm of the truth used by
    the ``pgd`` step size; when absent it is estimated by the spectral norm of
    the initialization estimate.
    """

    r: int
    m0: int
    mc: int
    variant: str = "scaled_pgd"
    T: int = 100
    eta_coeff: float = 0.8
    kappa: float = 1.0
    mu: float = None
    trunc_const: float = 9.0
    init: str = "spectral"
    U0: np.ndarray = field(default=None, repr=False)
    init_basis: str = "svd"
    split: bool = False
    nested: bool = False
    stop_tol: float = None
    x_norm: float = None
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.variant not in VARIANTS:
            errors.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.init not in INITS:
            errors.append(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "provided" and self.U0 is None:
            errors.append("init='provided' requires U0")
        if self.init_basis not in ("svd", "qr"):
            errors.append(f"init_basis must be 'svd' or 'qr', got {self.init_basis!r}")
        if not 0 < self.eta_coeff <= 0.9:
            errors.append(f"eta_coeff must lie in (0, 0.9], got {self.eta_coeff}")
        if self.r < 1:
            errors.append("r must be >= 1")
        if self.T < 0:
            errors.append("T must be >= 0")
        if self.m0 < 1 or self.mc < 1:
            errors.append("m0 and mc must be >= 1")
        if self.split and self.nested:
            errors.append("split and nested sampling are exclusive")
        if self.trunc_const <= 0:
            errors.append("trunc_const must be positive")
        if errors:
            raise ValueError("; ".join(errors))

    def schedule(self):
        mode = "split" if self.split else "nested" if self.nested else "pooled"
        return build_schedule(self.T + 1, self.m0, self.mc, mode)


@dataclass
class FactorState:
    U: np.ndarray
    V: np.ndarray
    _X: np.ndarray = field(default=None, repr=False)

    @property
    def X(self):
        if self._X is None:
            self._X = t_product(self.U, self.V)
        return self._X


@dataclass
class RecoveryTrace:
    """Per-iteration record; ``rel_err`` and ``dis`` are None without a truth."""

    iters: list = field(default_factory=list)
    rel_err: list = field(default_factory=list)
    dis: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)

    COLUMNS = ("iter", "rel_err", "dis", "residual", "elapsed_ms")

    def __len__(self):
        return len(self.iters)

    def append(self, t, rel_err, dis, residual, elapsed_ms):
        self.iters.append(t)
        self.rel_err.append(rel_err)
        self.dis.append(dis)
        self.residual.append(residual)
        self.elapsed_ms.append(elapsed_ms)

    def rows(self):
        return list(zip(self.iters, self.rel_err, self.dis, self.residual, self.elapsed_ms))

    def to_csv(self, path, timing=True):
        def fmt(v):
            return "" if v is None else repr(float(v))

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for t, e, d, res, ms in self.rows():
                writer.writerow([t, fmt(e), fmt(d), fmt(res), fmt(ms) if timing else ""])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                vals = [float(row[c]) if row[c] != "" else None for c in cls.COLUMNS[1:]]
                trace.append(int(row["iter"]), *vals)
        return trace


def _check_batch(probes, y):
    probes = np.asarray(probes, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if probes.ndim != 4:
        raise DimensionMismatch("probes must have shape (n2, m, n1, n3)")
    n2, m = probes.shape[:2]
    if y.shape != (m, n2):
        raise DimensionMismatch(f"measurements {y.shape} do not match probes {(m, n2)}")
    return probes, y


def truncation_threshold(y, C=9.0, kappa=1.0, mu=1.0):
    """``C kappa^2 mu^2`` times the mean squared measurement."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("threshold stage has no measurements")
    return float(C * kappa**2 * mu**2 * np.sum(y**2) / y.size)


def init_estimate(probes, y, alpha):
    """Truncated back-projection: slice ``i`` is ``mean_j y_ji A_i(j) 1{|y_ji| <= sqrt(alpha)}``."""
    probes, y = _check_batch(probes, y)
    keep = np.abs(y) <= np.sqrt(alpha)
    weights = np.where(keep, y, 0.0)
    return _back_project(probes, weights) / y.shape[0]


def spectral_init(probes, y, alpha, r, basis="svd"):
    """Orthogonal ``n1 x r x n3`` starting basis from the truncated estimate.

    ``basis="svd"`` keeps the leading ``r`` left singular tubes of the
    estimate; ``basis="qr"`` keeps the first ``r`` lateral slices of the
    t-QR factor of its first ``r`` lateral slices.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    x0 = init_estimate(probes, y, alpha)
    if not np.any(x0):
        raise DegenerateInit("every initialization measurement was truncated")
    return _basis_from_estimate(x0, r, basis)


def _basis_from_estimate(x0, r, basis):
    n1, n2, _ = x0.shape
    if r > min(n1, n2):
        raise ValueError(f"r={r} exceeds min(n1, n2)={min(n1, n2)}")
    if basis == "svd":
        return t_svd(x0, rank=r).U
    return t_qr(x0[:, :r, :]).Q


def random_init(n1, r, n3, seed):
    rng = np.random.default_rng(seed)
    return t_qr(rng.standard_normal((n1, r, n3))).Q


def spectral_probes(probes):
    """Tube-wise real FFT of a probe batch, laid out as ``(n3//2 + 1, n2*m, n1)``.

    Passing this to :func:`design_rows` avoids recomputing it when the same
    probes are reused across iterations.
    """
    n2, m, n1, _ = probes.shape
    a_hat = np.fft.rfft(probes, axis=-1).reshape(n2 * m, n1, -1)
    return np.ascontiguousarray(a_hat.transpose(2, 0, 1))


def design_rows(U, probes, probes_hat=None):
    """Rows of ``H^c`` for every slice: shape ``(n2, m, r*n3)``.

    Row ``j`` of slice ``i`` is ``Unfold(U^c * A_i(j))``, computed with one
    small matrix product per frequency instead of a block-circulant matrix.
    """
    n2, m, _, n3 = probes.shape
    r = U.shape[1]
    if probes_hat is None:
        probes_hat = spectral_probes(probes)
    u_hat = np.conj(np.fft.rfft(U, axis=-1)).transpose(2, 0, 1)
    w = np.fft.irfft((probes_hat @ u_hat).transpose(1, 2, 0), n=n3, axis=-1)
    return w.transpose(0, 2, 1).reshape(n2, m, n3 * r)


def dense_design(U, slice_probes):
    """Explicit ``H = bcirc(U^c) Unfold(A_i)`` for one slice (oracle use)."""
    a_i = np.transpose(np.asarray(slice_probes), (1, 0, 2))
    return bcirc_oracle(conj_transpose(U)) @ unfold(a_i)


def _lstsq_rows(hc, y, tol=1e-10):
    n2, m, p = hc.shape
    if m < p:
        raise UnderdeterminedSystem(f"{m} probes per slice cannot determine {p} unknowns")
    # R of the augmented system [H^c | y] carries Q^T y in its last column
    aug = np.concatenate([hc, y.T[..., None]], axis=2)
    rfac = np.linalg.qr(aug, mode="r")
    diag = np.abs(np.diagonal(rfac[:, :p, :p], axis1=1, axis2=2))
    if np.any(diag.min(axis=1) <= tol * diag.max(axis=1)):
        raise SingularSystem("least-squares system is rank deficient")
    return np.linalg.solve(rfac[:, :p, :p], rfac[:, :p, p:])[..., 0]


def solve_v(U, probes, y, probes_hat=None):
    """Exact minimization over every lateral slice of ``V``.

    Returns ``(V, residual)`` with ``V`` of shape ``(r, n2, n3)`` and the
    per-slice residual vectors ``H^c v - y`` of shape ``(m, n2)``.
    """
    probes, y = _check_batch(probes, y)
    r, n3 = U.shape[1], U.shape[2]
    if probes.shape[2] != U.shape[0] or probes.shape[3] != n3:
        raise DimensionMismatch("probe slices do not match U")
    hc = design_rows(U, probes, probes_hat)
    v = _lstsq_rows(hc, y)
    resid = (hc @ v[..., None])[..., 0].T - y
    V = v.reshape(-1, n3, r).transpose(2, 0, 1)
    return np.ascontiguousarray(V), resid


def update_v(U, slice_probes, y_i):
    """Least-squares lateral slice ``V(i)`` (shape ``r x 1 x n3``) for one slice."""
    V, _ = solve_v(U, np.asarray(slice_probes)[None], np.asarray(y_i)[:, None])
    return V


def _batch_measure(probes, x):
    n2, m, n1, n3 = probes.shape
    flat = probes.reshape(n2, m, n1 * n3)
    slices = np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(n2, n1 * n3, 1)
    return (flat @ slices)[..., 0].T


def _back_project(probes, weights):
    """``out(:,i,:) = sum_j weights[j, i] A_i(j)``."""
    n2, m, n1, n3 = probes.shape
    flat = probes.reshape(n2, m, n1 * n3)
    out = (weights.T[:, None, :] @ flat)[:, 0, :].reshape(n2, n1, n3)
    return np.ascontiguousarray(out.transpose(1, 0, 2))


def loss(U, V, probes, y):
    """Sum of squared measurement residuals of ``U * V``."""
    return float(np.sum((_batch_measure(probes, t_product(U, V)) - y) ** 2))


def gradient_u(U, V, probes, y, residual=None):
    """``T * V^c`` where ``T(:,i,:) = sum_j b_ji A_i(j)`` and ``b = H^c v - y``.

    This is half the gradient of :func:`loss` in ``U``; the factor 2 is left
    to the step size.  ``residual`` may pass in ``b`` when it is already known
    for these probes, e.g. from :func:`solve_v`.
    """
    probes, y = _check_batch(probes, y)
    if U.shape[1] != V.shape[0] or V.shape[1] != probes.shape[0]:
        raise DimensionMismatch(f"incompatible factors {U.shape}, {V.shape}")
    b = _batch_measure(probes, t_product(U, V)) - y if residual is None else residual
    return t_product(_back_project(probes, b), conj_transpose(V))


def _precondition_spectral(V, tol=1e-10):
    v_hat = dft_tubes(V)
    gram = v_hat @ np.conj(np.swapaxes(v_hat, 1, 2))
    sv = np.linalg.svd(gram, compute_uv=False)
    if np.any(sv[:, -1] <= tol * sv[:, 0]) or not np.all(sv[:, 0] > 0):
        raise SingularPreconditioner("V * V^c is singular in some spectral slice")
    return gram


def preconditioner_inverse(V):
    """``(V * V^c)^{-1}`` computed slice by slice in the spectral domain."""
    gram = _precondition_spectral(V)
    return idft_tubes(np.linalg.inv(gram))


def step_u(U, grad, V, eta, variant="pgd"):
    """Gradient step on ``U`` followed by the t-QR retraction."""
    if eta <= 0:
        raise ValueError("step size must be positive")
    if variant == "scaled_pgd":
        gram = _precondition_spectral(V)
        g_hat = dft_tubes(grad)
        # G P^{-1} = (P^{-1} G^H)^H since P is Hermitian
        scaled = np.linalg.solve(gram, np.conj(np.swapaxes(g_hat, 1, 2)))
        grad = idft_tubes(np.conj(np.swapaxes(scaled, 1, 2)))
    elif variant != "pgd":
        raise ValueError(f"unknown variant {variant!r}")
    return t_qr(U - eta * grad).Q




def run(ensemble, measurements, cfg, x_star=None):
    """Full recovery loop; returns ``(FactorState, RecoveryTrace)``.

    With ``x_star`` the trace records relative error and subspace distance,
    and ``cfg.stop_tol`` applies to the relative error.  Without it the
    stopping rule is the relative change of the iterate.
    """
    n1, n2, n3 = ensemble.n1, ensemble.n2, ensemble.n3
    r = cfg.r
    schedule = cfg.schedule()
    if schedule.m_total > ensemble.m_total or measurements.m_total < schedule.m_total:
        raise DimensionMismatch(
            f"schedule needs {schedule.m_total} probes per slice, "
            f"ensemble has {ensemble.m_total}, measurements {measurements.m_total}"
        )
    u_star = None
    if x_star is not None:
        x_star = as_tensor3(x_star, "x_star")
        if x_star.shape != (n1, n2, n3):
            raise DimensionMismatch("x_star does not match the ensemble")
        x_star_norm = np.linalg.norm(x_star)
        u_star = t_svd(x_star, rank=r).U

    trace = RecoveryTrace()
    start = time.perf_counter()
    cache = {}

    def stage(name, t=None, spectral=False):
        rng_ = probes_for(schedule, name, t)
        key = (rng_.start, rng_.stop)
        if key not in cache:
            if schedule.mode == "split":
                cache.clear()
            cache[key] = [ensemble.probes(rng_.start, rng_.stop), measurements.select(rng_), None]
        entry = cache[key]
        if spectral and entry[2] is None:
            entry[2] = spectral_probes(entry[0])
        return entry

    x0 = None
    need_estimate = cfg.init == "spectral" or (cfg.variant == "pgd" and cfg.x_norm is None)
    if need_estimate:
        _, y_thr, _ = stage("threshold")
        alpha = truncation_threshold(y_thr, cfg.trunc_const, cfg.kappa,
                                     1.0 if cfg.mu is None else cfg.mu)
        a_init, y_init, _ = stage("init")
        x0 = init_estimate(a_init, y_init, alpha)
        if not np.any(x0):
            raise DegenerateInit("every initialization measurement was truncated")

    if cfg.init == "spectral":
        U = _basis_from_estimate(x0, r, cfg.init_basis)
    elif cfg.init == "random":
        U = random_init(n1, r, n3, cfg.seed)
    else:
        U0 = as_tensor3(cfg.U0, "U0")
        if U0.shape != (n1, r, n3):
            raise DimensionMismatch(f"U0 must have shape {(n1, r, n3)}")
        U = t_qr(U0).Q

    if cfg.variant == "pgd":
        x_norm = cfg.x_norm if cfg.x_norm is not None else spectral_norm(x0)
        eta = cfg.eta_coeff / (cfg.mc * x_norm**2)
    else:
        eta = cfg.eta_coeff / cfg.mc

    def record(t, U, V, resid, y):
        X = t_product(U, V)
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise NonFinite(f"iterate {t} is not finite", trace)
        rel = dis = None
        if x_star is not None:
            rel = float(np.linalg.norm(X - x_star) / x_star_norm)
            dis = subspace_distance(U, u_star, check_tol=1e-6)
        res = float(np.linalg.norm(resid) / max(np.linalg.norm(y), 1e-300))
        trace.append(t, rel, dis, res, 1e3 * (time.perf_counter() - start))
        return X

    a_v, y_v, a_v_hat = stage("v_update", 0, spectral=True)
    V, resid = solve_v(U, a_v, y_v, a_v_hat)
    X = record(0, U, V, resid, y_v)

    for t in range(1, cfg.T + 1):
        if cfg.stop_tol is not None and x_star is not None and trace.rel_err[-1] <= cfg.stop_tol:
            break
        a_u, y_u, _ = stage("u_update", t)
        # pooled probes: the last V solve already produced b on these probes
        same = a_u is a_v
        grad = gradient_u(U, V, a_u, y_u, resid if same else None)
        if not np.all(np.isfinite(grad)):
            raise NonFinite(f"gradient at iteration {t} is not finite", trace)
        U = step_u(U, grad, V, eta, cfg.variant)
        a_v, y_v, a_v_hat = stage("v_update", t, spectral=True)
        V, resid = solve_v(U, a_v, y_v, a_v_hat)
        X_prev, X = X, record(t, U, V, resid, y_v)
        if cfg.stop_tol is not None and x_star is None:
            change = np.linalg.norm(X - X_prev) / max(np.linalg.norm(X_prev), 1e-300)
            if change < cfg.stop_tol:
                break

    return FactorState(U, V, X), trace

"""Fast oracle and invariant checks, runnable without pytest."""

import numpy as np

from ..algebra import (
    bcirc_oracle,
    condition_number,
    conj_transpose,
    fold,
    identity,
    orthogonality_error,
    spectral_norm,
    t_product,
    t_qr,
    t_svd,
    unfold,
)
from ..recovery import dense_design, gradient_u, loss, random_init, update_v
from ..sensing import generate_ensemble


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def check_product(rng, trials=50):
    worst = 0.0
    for _ in range(trials):
        n1, n2, n4, n3 = rng.integers(1, 6, size=4)
        a = rng.standard_normal((n1, n2, n3))
        b = rng.standard_normal((n2, n4, n3))
        worst = max(worst, _rel(t_product(a, b), fold(bcirc_oracle(a) @ unfold(b), n1, n3)))
    return worst <= 1e-10, f"max relative error {worst:.2e}"


def check_norms(rng, trials=30):
    worst = 0.0
    for _ in range(trials):
        n1, n2, n3 = rng.integers(1, 6, size=3)
        a = rng.standard_normal((n1, n2, n3))
        s = np.linalg.svd(bcirc_oracle(a), compute_uv=False)
        kappa = s[0] / s[-1]
        worst = max(worst, abs(spectral_norm(a) - s[0]) / s[0], abs(condition_number(a) - kappa) / kappa)
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def check_factorizations(rng, trials=50):
    worst = 0.0
    for _ in range(trials):
        n2, n3 = rng.integers(1, 5, size=2)
        n1 = n2 + rng.integers(0, 3)
        a = rng.standard_normal((n1, n2, n3))
        f = t_svd(a)
        q, r = t_qr(a)
        worst = max(
            worst,
            _rel(t_product(t_product(f.U, f.S), conj_transpose(f.V)), a),
            orthogonality_error(f.U), orthogonality_error(f.V),
            _rel(t_product(q, r), a), orthogonality_error(q),
        )
    return worst <= 1e-9, f"max error {worst:.2e}"


def check_v_step(rng, trials=10):
    worst = 0.0
    for _ in range(trials):
        n1, r, n3 = 4, 2, 3
        U = random_init(n1, r, n3, int(rng.integers(2**31)))
        ens = generate_ensemble(n1, 1, n3, 3 * r * n3, int(rng.integers(2**31)))
        a = ens.slice_probes(0)
        y = rng.standard_normal(a.shape[0])
        H = dense_design(U, a)
        want = np.linalg.pinv(H.T) @ y
        got = unfold(update_v(U, a, y)).ravel()
        worst = max(worst, np.max(np.abs(got - want)))
    return worst <= 1e-9, f"max abs error {worst:.2e}"


def check_gradient(rng, trials=5, h=1e-6):
    worst = 0.0
    for _ in range(trials):
        n1, n2, n3, r, m = 4, 3, 3, 2, 12
        U = rng.standard_normal((n1, r, n3))
        V = rng.standard_normal((r, n2, n3))
        probes = rng.standard_normal((n2, m, n1, n3))
        y = rng.standard_normal((m, n2))
        g = 2 * gradient_u(U, V, probes, y)
        fd = np.zeros_like(U)
        for idx in np.ndindex(U.shape):
            e = np.zeros_like(U)
            e[idx] = h
            fd[idx] = (loss(U + e, V, probes, y) - loss(U - e, V, probes, y)) / (2 * h)
        worst = max(worst, _rel(g, fd))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def check_identity(rng, trials=10):
    worst = 0.0
    for _ in range(trials):
        n1, n2, n3 = rng.integers(1, 6, size=3)
        a = rng.standard_normal((n1, n2, n3))
        worst = max(worst, _rel(t_product(identity(n1, n3), a), a), _rel(t_product(a, identity(n2, n3)), a))
    return worst <= 1e-12, f"max relative error {worst:.2e}"


CHECKS = {
    "t-product vs bcirc": check_product,
    "identity tensor": check_identity,
    "spectral norm and condition number": check_norms,
    "t-SVD / t-QR invariants": check_factorizations,
    "V-step vs dense pseudo-inverse": check_v_step,
    "gradient vs finite differences": check_gradient,
}


def run_selftest(seed=0, out=print):
    """Run every check; returns True when all pass."""
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS.items():
        passed, detail = check(rng)
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok

"""Independent reference values for the C++ test suite.

Computed with numpy/scipy from first principles (complex-domain formulas and
numerical quadrature), without reusing any of the library's code paths.
Run:  python3 tests/oracles/oracles.py
"""
import numpy as np
from scipy import integrate


def box1(n, s2, eps):
    one = np.ones(n)
    cp = np.diag([eps] + [s2] * (n - 1))
    a = n / s2
    b = one @ cp @ one / s2**2
    bpf = n / s2
    jp = one @ np.linalg.solve(cp, one)
    mcrb = b / a**2
    nmcrb = bpf**2 / (a**2 * jp)
    return dict(A=a, B=b, B_pf=bpf, J_p=jp, mcrb=mcrb, nmcrb=nmcrb, crb=1 / jp)


def box3(n, s1, s2):
    a = n / s2
    b = n * s1 / s2**2
    bpf = n / s2
    jp = n / s1
    return dict(A=a, B=b, B_pf=bpf, J_p=jp, mcrb=b / a**2, nmcrb=bpf**2 / (a**2 * jp))


def doa(m, s2, rho, phi, s):
    d = np.arange(1, m + 1) - (m + 1) / 2
    a = np.exp(1j * np.pi * d * np.sin(phi))
    da = 1j * np.pi * d * np.cos(phi) * a
    sigma = s2 * rho ** np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    # Complex Jacobian of mu = a s w.r.t. [phi, s_r, s_i].
    jac = np.stack([da * s, a, 1j * a], axis=1)
    pf = np.eye(m) / s2
    pp = np.linalg.inv(sigma)
    # For circular noise, E[Re(u^H e) Re(v^H e)] = Re(u^H Sigma v) / 2 and the
    # real score is 2 Re(J^H P e).
    A = 2 * np.real(jac.conj().T @ pf @ jac)
    B = 2 * np.real(jac.conj().T @ pf @ sigma @ pf @ jac)
    Bpf = 2 * np.real(jac.conj().T @ pf @ sigma @ pp @ jac)
    Jp = 2 * np.real(jac.conj().T @ pp @ jac)
    Ai = np.linalg.inv(A)
    return dict(A=A, B=B, B_pf=Bpf, J_p=Jp, mcrb=Ai @ B @ Ai,
                nmcrb=Ai @ Bpf @ np.linalg.inv(Jp) @ Bpf.T @ Ai, crb=np.linalg.inv(Jp))


def identity_normalizer_n1(s2, eps, theta0, gamma0, gamma):
    """c(gamma) = E_p[f(x;gamma)/f(x;gamma0)], x ~ N(theta0, eps), f = N(., s2)."""
    pdf = lambda x: np.exp(-(x - theta0) ** 2 / (2 * eps)) / np.sqrt(2 * np.pi * eps)
    r = lambda x: np.exp(((x - gamma0) ** 2 - (x - gamma) ** 2) / (2 * s2))
    val, _ = integrate.quad(lambda x: pdf(x) * r(x), -50, 50, epsabs=1e-14, epsrel=1e-13)
    return val


def tilted_log_density_n1(s2, eps, theta0, gamma0, gamma, x):
    c = identity_normalizer_n1(s2, eps, theta0, gamma0, gamma)
    logp = -0.5 * np.log(2 * np.pi * eps) - (x - theta0) ** 2 / (2 * eps)
    logr = ((x - gamma0) ** 2 - (x - gamma) ** 2) / (2 * s2)
    return logr + logp - np.log(c)


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    print("box1 N=4 s2=1 eps=0.1", box1(4, 1.0, 0.1))
    print("box1 N=10 s2=1 eps=0.05", box1(10, 1.0, 0.05))
    print("box3 N=5 s1=2 s2=1", box3(5, 2.0, 1.0))
    s = np.exp(1j * np.pi / 4)
    for rho in (0.0, 0.5):
        res = doa(8, 0.1, rho, np.pi / 8, s)
        print(f"doa rho={rho}")
        for k, v in res.items():
            print(k, repr(v))
    for g in (0.0, 0.5, 1.0):
        print("identity c(gamma)", g, repr(identity_normalizer_n1(1.0, 0.1, 0.0, 0.0, g)))
    for x in (-2.0, -0.5, 0.0, 0.7, 3.0):
        print("tilted", x, repr(tilted_log_density_n1(1.0, 0.1, 0.0, 0.0, 0.5, x)))

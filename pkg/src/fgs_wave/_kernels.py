"""Generated straight-line RK4 kernels for the built-in velocity fields.

The compiled integrator is specialized per dimension: every component of
``(Q, P, a, J)`` becomes a scalar local, which lets LLVM keep the whole state
in registers. The source is produced by :func:`kernel_source`, written to a
cache directory and imported from there so numba's on-disk cache applies.

The kernels cover ``c(x) = base + amp * sin(x_1 + ... + x_d)``; a constant
field is the case ``amp = 0``.

State layout per row: ``Q (d), P (d), Re a, Im a, J (2d x 2d, row-major)``.
"""
from __future__ import annotations

import hashlib
import importlib.util
import math
import os
import sys
import tempfile

import numba

_CACHE = {}


def state_length(d):
    return 2 * d + 2 + 4 * d * d


def _rhs_source(d):
    n2 = 2 * d
    L = state_length(d)
    Qn = [f"Q{i}" for i in range(d)]
    Pn = [f"P{i}" for i in range(d)]
    Jn = [f"J{i}_{j}" for i in range(n2) for j in range(n2)]
    args = Qn + Pn + ["ar", "ai"] + Jn
    zeros = ", ".join(["0.0"] * L)
    out = []
    w = out.append
    w("@numba.njit(cache=True)")
    w(f"def _rhs(base, amp, s, pf, {', '.join(args)}):")
    w(f"    tot = {' + '.join(Qn)}")
    w("    sn = math.sin(tot)")
    w("    c = base + amp * sn")
    w("    gs = amp * math.cos(tot)")
    w("    hs = -amp * sn")
    w(f"    nrm = math.sqrt({' + '.join(f'{p} * {p}' for p in Pn)})")
    w("    if nrm <= 1e-8:")
    w(f"        return 1, ({zeros})")
    w("    inv = 1.0 / nrm")
    for i in range(d):
        w(f"    n{i} = P{i} * inv")
    w(f"    ng = gs * ({' + '.join(f'n{i}' for i in range(d))})")
    for i in range(d):
        for j in range(d):
            delta = "1.0" if i == j else "0.0"
            w(f"    S{i}_{j} = s * n{i} * gs")
            w(f"    S{i}_{d + j} = s * c * inv * ({delta} - n{i} * n{j})")
            w(f"    S{d + i}_{j} = pf * nrm * hs")
            w(f"    S{d + i}_{d + j} = pf * gs * n{j}")
    for i in range(n2):
        for j in range(n2):
            w(f"    dJ{i}_{j} = {' + '.join(f'S{i}_{m} * J{m}_{j}' for m in range(n2))}")
    for i in range(d):
        for j in range(d):
            w(f"    Z{i}{j} = complex(J{i}_{j} + J{d + i}_{d + j}, J{d + i}_{j} - J{i}_{d + j})")
            w(f"    W{i}{j} = complex(dJ{i}_{j} + dJ{d + i}_{d + j}, dJ{d + i}_{j} - dJ{i}_{d + j})")
    # det Z and tr(adj(Z) dZ/dt) by cofactors
    if d == 1:
        w("    det = Z00")
        w("    num = W00")
    elif d == 2:
        w("    det = Z00 * Z11 - Z01 * Z10")
        w("    num = Z11 * W00 - Z01 * W10 - Z10 * W01 + Z00 * W11")
    else:
        det_terms, num_terms = [], []
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                w(f"    C{i}{j} = Z{i1}{j1} * Z{i2}{j2} - Z{i1}{j2} * Z{i2}{j1}")
                num_terms.append(f"C{i}{j} * W{i}{j}")
                if i == 0:
                    det_terms.append(f"Z0{j} * C0{j}")
        w(f"    det = {' + '.join(det_terms)}")
        w(f"    num = {' + '.join(num_terms)}")
    w("    if abs(det) < 1e-12:")
    w(f"        return 2, ({zeros})")
    w("    ad = complex(ar, ai) * (s * ng + 0.5 * num / det)")
    res = [f"s * c * n{i}" for i in range(d)] + ["pf * nrm * gs"] * d + ["ad.real", "ad.imag"]
    res += [f"dJ{i}_{j}" for i in range(n2) for j in range(n2)]
    w(f"    return 0, ({', '.join(res)})")
    return out


def _driver_source(d):
    L = state_length(d)
    ys = ", ".join(f"y{i}" for i in range(L))
    out = []
    w = out.append
    w("@numba.njit(cache=True)")
    w("def kernel(base, amp, s, pf, Y, dt, n_full, last, D, status, fail_t):")
    w("    for m in range(Y.shape[0]):")
    for i in range(L):
        w(f"        y{i} = Y[m, {i}]")
    w("        t = 0.0")
    w("        nsteps = n_full + (1 if last > 0.0 else 0)")
    w("        bad = 0")
    w("        for step in range(nsteps):")
    w("            h = dt if step < n_full else last")
    w(f"            bad, k1 = _rhs(base, amp, s, pf, {ys})")
    w("            if bad != 0:")
    w("                break")
    for kn, prev, fac in (("k2", "k1", "0.5 * h"), ("k3", "k2", "0.5 * h"), ("k4", "k3", "h")):
        args = ", ".join(f"y{i} + {fac} * {prev}[{i}]" for i in range(L))
        w(f"            bad, {kn} = _rhs(base, amp, s, pf, {args})")
        w("            if bad != 0:")
        w("                break")
    w("            if bad != 0:")
    w("                break")
    w("            h6 = h / 6.0")
    for i in range(L):
        w(f"            y{i} += h6 * (k1[{i}] + 2.0 * k2[{i}] + 2.0 * k3[{i}] + k4[{i}])")
    w("            t += h")
    w("        if bad == 0:")
    w(f"            bad, k1 = _rhs(base, amp, s, pf, {ys})")
    w(f"            for i in range({L}):")
    w("                D[m, i] = k1[i]")
    w("        if bad != 0:")
    w("            status[m] = bad")
    w("            fail_t[m] = t")
    for i in range(L):
        w(f"        Y[m, {i}] = y{i}")
    return out


def kernel_source(d) -> str:
    if d not in (1, 2, 3):
        raise ValueError("kernels exist for d = 1, 2, 3")
    lines = ["# generated by fgs_wave._kernels; do not edit", "import math", "import numba", ""]
    lines += _rhs_source(d) + [""] + _driver_source(d) + [""]
    return "\n".join(lines)


def _cache_dir():
    base = os.environ.get("FGS_WAVE_CACHE") or os.path.join(
        os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache"), "fgs_wave")
    try:
        os.makedirs(base, exist_ok=True)
        return base
    except OSError:
        return tempfile.mkdtemp(prefix="fgs_wave_")


def get_kernel(d):
    """Return the compiled kernel for dimension ``d``, generating it on first use."""
    if d in _CACHE:
        return _CACHE[d]
    src = kernel_source(d)
    tag = hashlib.sha1((src + numba.__version__).encode()).hexdigest()[:12]
    name = f"fgs_wave_raykernel_d{d}_{tag}"
    path = os.path.join(_cache_dir(), name + ".py")
    try:
        if not os.path.exists(path):
            tmp = path + f".{os.getpid()}.tmp"
            with open(tmp, "w") as fh:
                fh.write(src)
            os.replace(tmp, path)
        spec = importlib.util.spec_from_file_location(name, path)
        mod = importlib.util.module_from_spec(spec)
        sys.modules[name] = mod
        spec.loader.exec_module(mod)
        fn = mod.kernel
    except OSError:
        ns = {"math": math, "numba": numba}
        exec(compile(src.replace("cache=True", "cache=False"), name, "exec"), ns)
        fn = ns["kernel"]
    _CACHE[d] = fn
    return fn

"""Symmetric tensor fields, the ray transform over closed geodesics,
potential tensors, solenoidal checks, and s-injectivity experiments.

A symmetric m-tensor restricted to the unit sphere bundle is a function
with vertical Fourier modes supported on {-m, -m+2, ..., m}.  Tensor modes
here are *analytic* callables in surface coordinates (disk coordinates for
the octagon, periodic coordinates for tori), so evaluation along geodesics
is free of grid interpolation error and the periodic-trapezoid ray
transform converges spectrally.
"""

import numpy as np

from .geometry import (FuchsianOctagon, ConformalTorus, ConstantCurvature,
                       ClosedGeodesic)

TWO_PI = 2.0 * np.pi


# ----------------------------------------------------------------------------
# analytic mode functions


class Mode:
    """A scalar coefficient field with optional Wirtinger derivatives."""

    def __init__(self, val, dz=None, dbar=None):
        self.val = val
        self.dz = dz
        self.dbar = dbar


def _bump(t):
    """C-infinity bump of the scaled radius-squared t; 1 at t=0, 0 for t>=1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
    return out


def _bump_prime(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    ti = t[inside]
    out[inside] = -np.exp(1.0 - 1.0 / (1.0 - ti)) / (1.0 - ti) ** 2
    return out


def windowed_trig_mode(mn, r0=0.57, omega0=None):
    """w(x,y) e^{i omega0 (m x + n y)} with w a radial bump supported in
    the euclidean disk of radius r0 (inside the octagon when r0 < 0.64)."""
    m, n = mn
    om = omega0 if omega0 is not None else np.pi / r0

    def val(x, y):
        t = (x ** 2 + y ** 2) / r0 ** 2
        return _bump(t) * np.exp(1j * om * (m * x + n * y))

    def dz(x, y):
        z = x + 1j * y
        t = (z * np.conj(z)).real / r0 ** 2
        E = np.exp(1j * om * (m * x + n * y))
        # d/dz of t is conj(z)/r0^2; d/dz of the phase is i om (m - i n)/2
        return (_bump_prime(t) * np.conj(z) / r0 ** 2
                + _bump(t) * 0.5j * om * (m - 1j * n)) * E

    def dbar(x, y):
        z = x + 1j * y
        t = (z * np.conj(z)).real / r0 ** 2
        E = np.exp(1j * om * (m * x + n * y))
        return (_bump_prime(t) * z / r0 ** 2
                + _bump(t) * 0.5j * om * (m + 1j * n)) * E

    return Mode(val, dz, dbar)


def _conj_mode(mode):
    return Mode(lambda x, y: np.conj(mode.val(x, y)),
                (lambda x, y: np.conj(mode.dbar(x, y))) if mode.dbar else None,
                (lambda x, y: np.conj(mode.dz(x, y))) if mode.dz else None)


def trig_mode(grid, Lx, Ly, origin=(0.0, 0.0)):
    """Mode backed by a periodic grid: trigonometric-interpolant evaluation
    (exact for band-limited data on its chart)."""
    grid = np.asarray(grid, dtype=complex)
    nx, ny = grid.shape
    C = np.fft.fft2(grid) / (nx * ny)
    kx = TWO_PI * np.fft.fftfreq(nx, d=Lx / nx)
    ky = TWO_PI * np.fft.fftfreq(ny, d=Ly / ny)
    x0, y0 = origin

    def _eval(coef, x, y):
        x = np.asarray(x, dtype=float) - x0
        y = np.asarray(y, dtype=float) - y0
        Ex = np.exp(1j * np.multiply.outer(x, kx))       # (..., nx)
        Ey = np.exp(1j * np.multiply.outer(y, ky))       # (..., ny)
        return np.einsum("...m,mn,...n->...", Ex, coef, Ey)

    ikx = 1j * kx[:, None]
    iky = 1j * ky[None, :]
    return Mode(lambda x, y: _eval(C, x, y),
                lambda x, y: _eval(0.5 * (ikx - 1j * iky) * C, x, y),
                lambda x, y: _eval(0.5 * (ikx + 1j * iky) * C, x, y))


# ----------------------------------------------------------------------------
# tensor fields


class SymTensorField:
    """Degree-m symmetric tensor as its function on SM: vertical modes
    supported on {-m, -m+2, ..., m}, each an analytic Mode."""

    def __init__(self, model, m, modes, label=""):
        self.model = model
        self.m = int(m)
        allowed = set(range(-self.m, self.m + 1, 2))
        bad = [k for k in modes if k not in allowed]
        if bad:
            raise ValueError(f"modes {bad} outside the degree-{m} band")
        self.modes = dict(modes)
        self.label = label

    @classmethod
    def from_smfield(cls, model, m, field, origin=(0.0, 0.0), label=""):
        ch = field.chart
        modes = {}
        for k in range(-m, m + 1, 2):
            g = field.get(k)
            if np.any(g):
                modes[k] = trig_mode(g, ch.Lx, ch.Ly, origin=origin)
        return cls(model, m, modes, label=label)

    def eval(self, x, y, theta):
        """The function f(x, v) at SM points."""
        acc = np.zeros(np.broadcast(x, y, theta).shape, dtype=complex)
        for k, mode in self.modes.items():
            acc = acc + mode.val(x, y) * np.exp(1j * k * np.asarray(theta))
        return acc

    def mode_values(self, k, X, Y):
        if k in self.modes:
            return self.modes[k].val(X, Y)
        return np.zeros(np.broadcast(X, Y).shape, dtype=complex)


def lam_wirtinger(model, x, y):
    """(e^{-lam}, d_z lam, d_zbar lam) at surface points."""
    lam, lam_x, lam_y = model.lam_and_grad(np.asarray(x), np.asarray(y))
    return (np.exp(-lam), 0.5 * (lam_x - 1j * lam_y),
            0.5 * (lam_x + 1j * lam_y))


def potential_tensor(h, model=None):
    """dh = Xh: the degree-m potential tensor of a degree-(m-1) tensor h.

    h's modes must carry Wirtinger derivatives (windowed_trig_mode or
    trig_mode); the eta-ladder coefficients use the model's analytic
    conformal factor, so dh is the exact inner derivative of h's
    interpolant and I_m(dh) vanishes on closed geodesics up to quadrature."""
    model = model if model is not None else h.model
    m = h.m + 1

    def eta_plus(mode, j):
        def val(x, y):
            emlam, dzl, _ = lam_wirtinger(model, x, y)
            return emlam * (mode.dz(x, y) - j * dzl * mode.val(x, y))
        return val

    def eta_minus(mode, j):
        def val(x, y):
            emlam, _, dbl = lam_wirtinger(model, x, y)
            return emlam * (mode.dbar(x, y) + j * dbl * mode.val(x, y))
        return val

    modes = {}
    for k in range(-m, m + 1, 2):
        terms = []
        if (k - 1) in h.modes:
            terms.append(eta_plus(h.modes[k - 1], k - 1))
        if (k + 1) in h.modes:
            terms.append(eta_minus(h.modes[k + 1], k + 1))
        if terms:
            modes[k] = Mode(lambda x, y, fs=tuple(terms):
                            sum(f(x, y) for f in fs))
    return SymTensorField(model, m, modes, label=f"d({h.label})")


def solenoidal_check(A, chart):
    """||eta_+ a_{-1} + eta_- a_1|| on a quadrature chart; zero iff the
    1-tensor is solenoidal (divergence-free) on the truncation."""
    from .smfourier import eta as eta_grid

    if A.m != 1:
        raise ValueError("solenoidal_check takes a degree-1 tensor")
    xs = _chart_nodes(chart)
    X, Y = np.meshgrid(xs[0], xs[1], indexing="ij")
    am1 = A.mode_values(-1, X, Y)
    a1 = A.mode_values(1, X, Y)
    r = eta_grid("+", -1, am1, chart) + eta_grid("-", 1, a1, chart)
    return float(np.sqrt(chart.norm2(r)))


def _chart_nodes(chart, origin=None):
    """Grid node coordinates of a chart; box charts are centered."""
    if origin is None:
        # disk-patch charts are centered on the origin by construction
        x0 = -0.5 * chart.Lx
        y0 = -0.5 * chart.Ly
    else:
        x0, y0 = origin
    xs = x0 + np.arange(chart.nx) * (chart.Lx / chart.nx)
    ys = y0 + np.arange(chart.ny) * (chart.Ly / chart.ny)
    return xs, ys


# ----------------------------------------------------------------------------
# ray transform


def _orbit_samples(geo, n_samples=None):
    if n_samples is None or len(geo.samples) >= n_samples:
        return geo.samples, geo.dt
    if geo.source == "octagon-word" and geo.axis is not None:
        cache = getattr(geo, "_fine_samples", None)
        if cache is None:
            cache = {}
            geo._fine_samples = cache
        if n_samples not in cache:
            fine = geo.model.closed_geodesic_from_word(geo.word,
                                                       n_samples=n_samples)
            cache[n_samples] = (fine.samples, fine.dt)
        return cache[n_samples]
    return geo.samples, geo.dt


def ray_transform(f, geo, n_samples=None):
    """I_m f(gamma) = integral of f(gamma(t), gamma'(t)) over one period.

    Periodic-trapezoid quadrature at the orbit samples; for octagon word
    geodesics the orbit can be resampled exactly from its axis."""
    if f.model is not geo.model and type(f.model) is not type(geo.model):
        raise ValueError("tensor and geodesic live on different models")
    samples, dt = _orbit_samples(geo, n_samples)
    x, y, th = samples[:, 0], samples[:, 1], samples[:, 2]
    vals = f.eval(x, y, th)
    return float(np.real(np.sum(vals) * dt))


def abs_ray_mass(f, geo, n_samples=None):
    """integral of |f| along the geodesic — the natural scale for relative
    ray-transform residuals."""
    samples, dt = _orbit_samples(geo, n_samples)
    x, y, th = samples[:, 0], samples[:, 1], samples[:, 2]
    return float(np.sum(np.abs(f.eval(x, y, th))) * dt)


# ----------------------------------------------------------------------------
# octagon geodesic pool


def octagon_geodesic_pool(model, max_len=6, max_count=256, n_samples=512):
    """Closed geodesics of all reduced words up to max_len, deduplicated by
    trace conjugacy, shortest first."""
    gens = model.disk_generators
    classes = {}            # rounded |trace| -> word

    def dfs(word, M):
        if word:
            tr = abs(float(np.real(np.trace(M))))
            if tr > 2.0 + 1e-10:
                key = round(tr, 9)
                if key not in classes or len(word) < len(classes[key]):
                    classes[key] = tuple(word)
        if len(word) == max_len:
            return
        for g in range(8):
            if word and (word[-1] - g) % 8 == 4:   # immediate cancellation
                continue
            dfs(word + [g], M @ gens[g])

    dfs([], np.eye(2, dtype=complex))
    keys = sorted(classes)[:max_count]
    pool = []
    for key in keys:
        geo = model.closed_geodesic_from_word(classes[key],
                                              n_samples=n_samples)
        if geo is not None:
            pool.append(geo)
    return pool


# ----------------------------------------------------------------------------
# s-injectivity experiment


def _freq_list(count):
    """Low integer frequency pairs ordered by |.|^2, excluding (0,0) last."""
    pairs = sorted(((m, n) for m in range(-3, 4) for n in range(-3, 4)),
                   key=lambda p: (p[0] ** 2 + p[1] ** 2, p))
    return pairs[:count]


def _real_scalar_modes(count, r0):
    """Real windowed trig scalars: cos/sin pairs over half-plane
    frequencies (both parities, no duplicated columns)."""
    reps = [p for p in _freq_list(49) if p >= (0, 0)]
    out = []
    for m, n in reps:
        base = windowed_trig_mode((m, n), r0=r0)
        out.append(Mode(lambda x, y, b=base: np.real(b.val(x, y)),
                        lambda x, y, b=base: 0.5 * (b.dz(x, y) +
                                                    np.conj(b.dbar(x, y))),
                        lambda x, y, b=base: 0.5 * (b.dbar(x, y) +
                                                    np.conj(b.dz(x, y)))))
        if (m, n) == (0, 0):
            continue
        out.append(Mode(lambda x, y, b=base: np.imag(b.val(x, y)),
                        lambda x, y, b=base: -0.5j * (b.dz(x, y) -
                                                      np.conj(b.dbar(x, y))),
                        lambda x, y, b=base: -0.5j * (b.dbar(x, y) -
                                                      np.conj(b.dz(x, y)))))
        if len(out) >= count:
            break
    return out[:count]


def _potential_basis(model, m, count, r0):
    """Real potential tensors dh for degree-(m-1) tensors h with a single
    conjugate mode pair (or mode 0 for m=1)."""
    out = []
    freqs = _freq_list(count)
    for i in range(count):
        if m == 1:
            h = SymTensorField(model, 0, {0: _real_scalar_modes(i + 1, r0)[i]},
                               label=f"h0[{i}]")
        else:
            top = windowed_trig_mode(freqs[i], r0=r0)
            modes = {m - 1: top, -(m - 1): _conj_mode(top)}
            h = SymTensorField(model, m - 1, modes, label=f"h{m-1}[{i}]")
        out.append(potential_tensor(h, model))
    return out


def _nonpotential_basis(model, m, count, r0):
    out = []
    freqs = _freq_list(count)
    for i in range(count):
        if m == 0:
            modes = {0: _real_scalar_modes(i + 1, r0)[i]}
        else:
            top = windowed_trig_mode(freqs[i], r0=r0)
            modes = {m: top, -m: _conj_mode(top)}
        out.append(SymTensorField(model, m, modes, label=f"free[{i}]"))
    return out


def tensor_inner(f, g, chart):
    """L^2(SM) inner product of two tensors via chart quadrature."""
    xs, ys = _chart_nodes(chart)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    acc = 0.0 + 0.0j
    for k in set(f.modes) | set(g.modes):
        acc += chart.inner(f.mode_values(k, X, Y), g.mode_values(k, X, Y))
    return complex(acc)


def sinjectivity_experiment(model, m, pool, n_basis=20, threshold=1e-6,
                            n_samples=1024, chart=None):
    """Numerical kernel of the ray transform on a mixed tensor basis.

    Builds G[gamma, j] = I_m(f_j)(gamma), takes its SVD, and reports how much
    of the numerical kernel (singular values below threshold * sigma_max)
    lies outside the span of potential tensors."""
    if len(pool) < n_basis:
        return {"flag": "pool too small for the basis (underdetermined)",
                "pool_size": len(pool), "n_basis": n_basis}
    from .smfourier import Chart

    r0 = 0.57
    if chart is None:
        chart = Chart.disk_patch(model, half_width=0.6, n=64)
    if m == 0:
        basis = _nonpotential_basis(model, 0, n_basis, r0)
        kinds = ["free"] * n_basis
    else:
        n_pot = n_basis // 2
        basis = (_potential_basis(model, m, n_pot, r0)
                 + _nonpotential_basis(model, m, n_basis - n_pot, r0))
        kinds = ["potential"] * n_pot + ["free"] * (n_basis - n_pot)

    G = np.empty((len(pool), n_basis))
    for j, f in enumerate(basis):
        for i, geo in enumerate(pool):
            G[i, j] = ray_transform(f, geo, n_samples=n_samples)
    # column scales so the SVD compares tensors of comparable size
    scales = np.array([np.sqrt(abs(tensor_inner(f, f, chart)))
                       for f in basis])
    Gs = G / scales
    U, S, Vt = np.linalg.svd(Gs, full_matrices=False)
    sig_max = S[0] if len(S) else 0.0
    kernel = [Vt[i] / scales for i in range(len(S))
              if S[i] <= threshold * sig_max]

    # potential dictionary for the projection test (wider than the basis)
    if m >= 1:
        dictionary = _potential_basis(model, m, min(12, 2 * (n_basis // 2)),
                                      r0)
    else:
        dictionary = []
    resid = 0.0
    for v in kernel:
        xs, ys = _chart_nodes(chart)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        fk = {k: sum(v[j] * basis[j].mode_values(k, X, Y)
                     for j in range(n_basis))
              for k in range(-m, m + 1, 2)}
        nrm2 = sum(chart.norm2(g) for g in fk.values())
        if nrm2 <= 0 or not dictionary:
            continue
        # least-squares projection onto span{dh}
        A = np.array([[tensor_inner(di, dj, chart) for dj in dictionary]
                      for di in dictionary])
        b = np.array([sum(chart.inner(fk[k], di.mode_values(k, X, Y))
                          for k in fk) for di in dictionary])
        coef = np.linalg.lstsq(A, b, rcond=1e-12)[0]
        proj2 = float(np.real(np.vdot(coef, b)))
        resid = max(resid, np.sqrt(max(nrm2 - proj2, 0.0) / nrm2))
    return {"sigma_min": float(S[-1]) if len(S) else 0.0,
            "sigma_max": float(sig_max),
            "kernel_dim": len(kernel),
            "non_potential_residual": float(resid),
            "pool_size": len(pool), "n_basis": n_basis,
            "kinds": kinds}
